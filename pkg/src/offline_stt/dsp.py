"""Frame-based spectral analysis: STFT, mel filterbank, MFCC and PGM rendering."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct

from .errors import InsufficientAudio, InvalidParameter

DB_FLOOR = -80.0


class Window(str, enum.Enum):
    HANN = "HANN"
    RECT = "RECT"


@dataclass(frozen=True)
class FrameSpec:
    window_len: int = 400
    hop: int = 160
    window: Window = Window.HANN
    fft_size: int = 512

    def __post_init__(self):
        if not 0 < self.hop <= self.window_len <= self.fft_size:
            raise InvalidParameter(
                f"need 0 < hop <= window_len <= fft_size, got {self.hop}, {self.window_len}, {self.fft_size}"
            )
        if self.fft_size & (self.fft_size - 1):
            raise InvalidParameter(f"fft_size must be a power of two, got {self.fft_size}")

    def n_frames(self, n_samples: int) -> int:
        if n_samples < self.window_len:
            return 0
        return (n_samples - self.window_len) // self.hop + 1


@dataclass
class FeatureMatrix:
    """A frames x coefficients grid; ``frame_duration`` is seconds per hop."""

    values: np.ndarray
    frame_duration: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise InvalidParameter("feature values must be two-dimensional")
        if not np.all(np.isfinite(self.values)):
            raise InvalidParameter("feature values must be finite")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


def window_fn(kind: Window, n: int) -> np.ndarray:
    if kind is Window.RECT:
        return np.ones(n)
    # periodic Hann
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_signal(samples: np.ndarray, spec: FrameSpec) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    n = spec.n_frames(len(x))
    if n == 0:
        raise InsufficientAudio(
            f"{len(x)} samples is shorter than one {spec.window_len}-sample window"
        )
    idx = np.arange(spec.window_len)[None, :] + spec.hop * np.arange(n)[:, None]
    return x[idx]


def stft_magnitude(samples, spec: FrameSpec, sample_rate: int = 16000) -> FeatureMatrix:
    frames = frame_signal(samples, spec) * window_fn(spec.window, spec.window_len)
    mag = np.abs(np.fft.rfft(frames, n=spec.fft_size, axis=1))
    return FeatureMatrix(mag, spec.hop / sample_rate)


def power_to_db(m: FeatureMatrix, floor_db: float = DB_FLOOR) -> FeatureMatrix:
    """Amplitude to decibels relative to the matrix maximum, clamped to [floor_db, 0]."""
    v = m.values
    if np.any(v < 0):
        raise InvalidParameter("power_to_db needs non-negative values")
    peak = v.max() if v.size else 0.0
    if peak <= 0:
        return FeatureMatrix(np.full(v.shape, float(floor_db)), m.frame_duration)
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(v / peak)
    return FeatureMatrix(np.clip(db, floor_db, 0.0), m.frame_duration)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, fft_size: int, sample_rate: int,
                   f_min: float = 0.0, f_max: float | None = None) -> np.ndarray:
    """Triangular filters, shape (n_filters, fft_size // 2 + 1), peak weight 1."""
    nyquist = sample_rate / 2.0
    if f_max is None:
        f_max = nyquist
    if n_filters < 2:
        raise InvalidParameter("need at least two mel filters")
    if f_max > nyquist:
        raise InvalidParameter(f"f_max {f_max} exceeds Nyquist {nyquist}")
    if not 0 <= f_min < f_max:
        raise InvalidParameter(f"need 0 <= f_min < f_max, got {f_min}, {f_max}")
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_filters + 2))
    bins = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    lo, center, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins[None, :] - lo) / (center - lo)
    falling = (hi - bins[None, :]) / (hi - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def filter_centers(n_filters: int, f_min: float, f_max: float) -> np.ndarray:
    return mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_filters + 2))[1:-1]


@dataclass(frozen=True)
class MfccConfig:
    sample_rate: int = 16000
    preemphasis: float = 0.97
    frame: FrameSpec = FrameSpec(400, 160, Window.HANN, 512)
    n_mels: int = 26
    n_ceps: int = 13
    log_floor: float = 1e-10


_FB_CACHE: dict = {}


def _cached_filterbank(cfg: MfccConfig) -> np.ndarray:
    key = (cfg.n_mels, cfg.frame.fft_size, cfg.sample_rate)
    fb = _FB_CACHE.get(key)
    if fb is None:
        fb = _FB_CACHE[key] = mel_filterbank(cfg.n_mels, cfg.frame.fft_size, cfg.sample_rate)
    return fb


def mfcc(samples, config: MfccConfig = MfccConfig()) -> FeatureMatrix:
    x = np.asarray(samples, dtype=np.float64)
    if len(x) < config.frame.window_len:
        raise InsufficientAudio(f"MFCC needs at least {config.frame.window_len} samples, got {len(x)}")
    emph = np.empty_like(x)
    emph[0] = x[0]
    emph[1:] = x[1:] - config.preemphasis * x[:-1]
    frames = frame_signal(emph, config.frame) * window_fn(config.frame.window, config.frame.window_len)
    power = np.abs(np.fft.rfft(frames, n=config.frame.fft_size, axis=1)) ** 2
    energies = power @ _cached_filterbank(config).T
    logmel = np.log(np.maximum(energies, config.log_floor))
    ceps = dct(logmel, type=2, norm="ortho", axis=1)[:, : config.n_ceps]
    return FeatureMatrix(ceps, config.frame.hop / config.sample_rate)


def round_half_up(x) -> np.ndarray:
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


def spectrogram_pgm(m: FeatureMatrix, floor_db: float = DB_FLOOR) -> bytes:
    """Binary PGM with time on the x axis and low frequencies at the bottom."""
    v = np.clip(m.values, floor_db, 0.0)
    gray = round_half_up(255.0 * (v - floor_db) / (0.0 - floor_db)).astype(np.uint8)
    image = gray.T[::-1, :]
    height, width = image.shape
    return f"P5\n{width} {height}\n255\n".encode("ascii") + np.ascontiguousarray(image).tobytes()


def read_pgm(data: bytes) -> np.ndarray:
    """Parse a binary P5 image written by this module into a (height, width) array."""
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise InvalidParameter("not a binary PGM")
    width, height = (int(t) for t in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(height, width)
