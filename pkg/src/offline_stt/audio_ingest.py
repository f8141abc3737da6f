"""Container detection, PCM decoding and normalization to 16 kHz mono."""
from __future__ import annotations

import enum
import logging
import os
import shlex
import struct
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    EmptyAudio,
    ExternalDecoderFailure,
    InvalidParameter,
    MalformedContainer,
    TruncatedInput,
    UnsupportedEncoding,
)

log = logging.getLogger(__name__)

PIPELINE_RATE = 16000

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE
_GUID_TAIL = b"\x00\x00\x10\x00\x80\x00\x00\xaa\x00\x38\x9b\x71"

RESAMPLE_ZERO_CROSSINGS = 32


class Container(str, enum.Enum):
    WAV = "WAV"
    MP3 = "MP3"
    FLAC = "FLAC"
    OGG = "OGG"
    UNKNOWN = "UNKNOWN"


@dataclass(frozen=True)
class FormatInfo:
    container: Container
    declared_sample_rate: Optional[int] = None
    declared_channels: Optional[int] = None
    bits_per_sample: Optional[int] = None


class AudioClip:
    """Decoded audio: ``channels`` is a (n_channels, n_samples) float64 array."""

    def __init__(self, channels, sample_rate: int):
        arr = np.asarray(channels, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[np.newaxis, :]
        if arr.ndim != 2:
            raise InvalidParameter("channels must be a sequence of equal-length sample sequences")
        if int(sample_rate) <= 0:
            raise InvalidParameter(f"sample_rate must be positive, got {sample_rate}")
        self.channels = arr
        self.sample_rate = int(sample_rate)

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    @property
    def mono(self) -> np.ndarray:
        if self.n_channels != 1:
            raise InvalidParameter("clip is not mono")
        return self.channels[0]

    def __eq__(self, other):
        if not isinstance(other, AudioClip):
            return NotImplemented
        return self.sample_rate == other.sample_rate and np.array_equal(self.channels, other.channels)

    def __repr__(self):
        return f"AudioClip(channels={self.n_channels}, samples={self.n_samples}, rate={self.sample_rate})"


def detect_format(prefix: bytes) -> FormatInfo:
    """Classify a file by its first 12 bytes."""
    if len(prefix) < 12:
        raise TruncatedInput(f"need at least 12 bytes to detect format, got {len(prefix)}")
    head = bytes(prefix[:12])
    if head[:4] == b"RIFF" and head[8:12] == b"WAVE":
        return FormatInfo(Container.WAV)
    if head[:4] == b"fLaC":
        return FormatInfo(Container.FLAC)
    if head[:4] == b"OggS":
        return FormatInfo(Container.OGG)
    if head[:3] == b"ID3" or (head[0] == 0xFF and (head[1] & 0xE0) == 0xE0):
        return FormatInfo(Container.MP3)
    return FormatInfo(Container.UNKNOWN)


def read_format_info(data: bytes) -> FormatInfo:
    """detect_format plus, for WAV, the fields declared in the fmt chunk."""
    info = detect_format(data)
    if info.container is not Container.WAV:
        return info
    try:
        fmt = _parse_riff(data, need_data=False)[0]
    except Exception:
        return info
    if fmt is None:
        return info
    return FormatInfo(Container.WAV, fmt.sample_rate, fmt.channels, fmt.bits)


@dataclass
class _Fmt:
    tag: int
    channels: int
    sample_rate: int
    block_align: int
    bits: int


def _parse_fmt(body: bytes) -> _Fmt:
    if len(body) < 16:
        raise MalformedContainer(f"fmt chunk too short ({len(body)} bytes)")
    tag, channels, rate, _byte_rate, block_align, bits = struct.unpack("<HHIIHH", body[:16])
    if tag == WAVE_FORMAT_EXTENSIBLE:
        if len(body) < 40:
            raise MalformedContainer("WAVE_FORMAT_EXTENSIBLE fmt chunk truncated")
        guid = body[24:40]
        if guid[4:] != _GUID_TAIL:
            raise UnsupportedEncoding("unrecognized extensible sub-format GUID")
        tag = struct.unpack("<I", guid[:4])[0]
    return _Fmt(tag, channels, rate, block_align, bits)


def _parse_riff(data: bytes, need_data: bool = True):
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedContainer("not a RIFF/WAVE stream")
    fmt = None
    payload = None
    pos = 12
    end = len(data)
    while pos + 8 <= end:
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4:pos + 8])
        body_start = pos + 8
        if chunk_id == b"data":
            if body_start + size > end:
                raise TruncatedInput(
                    f"data chunk declares {size} bytes but only {end - body_start} remain"
                )
            payload = data[body_start:body_start + size]
        elif chunk_id == b"fmt ":
            if body_start + size > end:
                raise TruncatedInput("fmt chunk runs past end of file")
            fmt = _parse_fmt(data[body_start:body_start + size])
        # chunks are word-aligned
        pos = body_start + size + (size & 1)
    if fmt is None and need_data:
        raise MalformedContainer("missing fmt chunk")
    if payload is None and need_data:
        raise MalformedContainer("missing data chunk")
    return fmt, payload


def decode_wav(data: bytes) -> AudioClip:
    fmt, payload = _parse_riff(bytes(data))
    if fmt.channels < 1:
        raise MalformedContainer("fmt chunk declares zero channels")
    if fmt.sample_rate <= 0:
        raise MalformedContainer("fmt chunk declares zero sample rate")

    if fmt.tag == WAVE_FORMAT_PCM and fmt.bits == 16:
        width = 2
        raw = np.frombuffer(payload[: len(payload) // 2 * 2], dtype="<i2").astype(np.float64)
        samples = raw / 32768.0
    elif fmt.tag == WAVE_FORMAT_PCM and fmt.bits == 24:
        width = 3
        n = len(payload) // 3
        b = np.frombuffer(payload[: n * 3], dtype=np.uint8).reshape(n, 3).astype(np.int32)
        ints = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        ints = np.where(ints & 0x800000, ints - (1 << 24), ints)
        samples = ints.astype(np.float64) / float(1 << 23)
    elif fmt.tag == WAVE_FORMAT_IEEE_FLOAT and fmt.bits == 32:
        width = 4
        samples = np.frombuffer(payload[: len(payload) // 4 * 4], dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedEncoding(f"format tag {fmt.tag:#06x} with {fmt.bits} bits is not supported")

    frame_bytes = width * fmt.channels
    if fmt.block_align and fmt.block_align != frame_bytes:
        raise MalformedContainer(
            f"block_align {fmt.block_align} does not match {fmt.channels} x {width}-byte samples"
        )
    n_frames = len(samples) // fmt.channels
    samples = samples[: n_frames * fmt.channels]
    channels = samples.reshape(n_frames, fmt.channels).T.copy()
    channels = np.nan_to_num(channels, nan=0.0, posinf=1.0, neginf=-1.0)
    np.clip(channels, -1.0, 1.0, out=channels)
    return AudioClip(channels, fmt.sample_rate)


def encode_wav(clip: AudioClip, bits: int = 16, float_format: bool = False) -> bytes:
    """Write ``clip`` as a canonical 44-byte-header WAV (16/24-bit PCM or 32-bit float)."""
    x = np.clip(clip.channels, -1.0, 1.0).T.reshape(-1)
    if float_format:
        tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
        payload = x.astype("<f4").tobytes()
    elif bits == 16:
        tag = WAVE_FORMAT_PCM
        payload = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2").tobytes()
    elif bits == 24:
        tag = WAVE_FORMAT_PCM
        ints = np.clip(np.round(x * 8388608.0), -8388608, 8388607).astype(np.int64) & 0xFFFFFF
        b = np.stack([ints & 0xFF, (ints >> 8) & 0xFF, (ints >> 16) & 0xFF], axis=1)
        payload = b.astype(np.uint8).tobytes()
    else:
        raise InvalidParameter(f"cannot encode {bits}-bit PCM")
    block = clip.n_channels * bits // 8
    fmt = struct.pack(
        "<HHIIHH", tag, clip.n_channels, clip.sample_rate, clip.sample_rate * block, block, bits
    )
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    return b"RIFF" + struct.pack("<I", len(body)) + body


def decode_via_external(path, info: FormatInfo, cfg: Optional[str]) -> AudioClip:
    """Convert a compressed file to WAV with a user-supplied command template.

    ``cfg`` is a command line containing ``{in}`` and ``{out}`` placeholders,
    e.g. ``"mytool -i {in} -ar 16000 {out}"``.
    """
    if info.container not in (Container.MP3, Container.FLAC, Container.OGG):
        raise InvalidParameter(f"external decoding is only used for compressed containers, got {info.container.value}")
    if not cfg:
        raise ExternalDecoderFailure(
            f"no decoder command configured for {info.container.value} input"
        )
    fd, out_path = tempfile.mkstemp(prefix="offline_stt_", suffix=".wav")
    os.close(fd)
    try:
        argv = [tok.replace("{in}", str(path)).replace("{out}", out_path) for tok in shlex.split(cfg)]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True)
        except OSError as exc:
            raise ExternalDecoderFailure(f"could not run decoder {argv[0]!r}: {exc}") from exc
        if proc.returncode != 0:
            diag = (proc.stderr or proc.stdout or "").strip()
            raise ExternalDecoderFailure(
                f"decoder exited with status {proc.returncode}", diagnostics=diag
            )
        data = Path(out_path).read_bytes()
        if detect_format(data.ljust(12, b"\0")).container is not Container.WAV:
            raise MalformedContainer("decoder output is not a WAV file")
        return decode_wav(data)
    finally:
        try:
            os.unlink(out_path)
        except FileNotFoundError:
            pass


def downmix_mono(clip: AudioClip) -> AudioClip:
    if clip.n_channels == 0:
        raise EmptyAudio("clip has no channels")
    if clip.n_channels == 1:
        return clip
    return AudioClip(clip.channels.mean(axis=0), clip.sample_rate)


def _hann_sinc_kernel(offsets: np.ndarray, scale: float, half_width: float) -> np.ndarray:
    w = np.where(np.abs(offsets) < half_width, 0.5 + 0.5 * np.cos(np.pi * offsets / half_width), 0.0)
    return scale * np.sinc(scale * offsets) * w


def resample(clip: AudioClip, target_rate: int, block: int = 4096) -> AudioClip:
    """Band-limited resampling with a Hann-windowed sinc kernel.

    The kernel spans 32 zero crossings per side at the lower of the two
    Nyquist frequencies. Weights are renormalized per output sample over the
    taps that fall inside the signal, so a constant input stays constant all
    the way to the edges.
    """
    if target_rate <= 0:
        raise InvalidParameter(f"target_rate must be positive, got {target_rate}")
    x = clip.mono
    src = clip.sample_rate
    if src == target_rate:
        return clip
    n_out = len(x) * target_rate // src
    scale = min(1.0, target_rate / src)
    half_width = RESAMPLE_ZERO_CROSSINGS / scale
    reach = int(np.ceil(half_width))
    taps = np.arange(-reach, reach + 2)

    out = np.empty(n_out)
    n_in = len(x)
    padded = np.concatenate([np.zeros(reach + 1), x, np.zeros(reach + 2)])
    for lo in range(0, n_out, block):
        n = np.arange(lo, min(lo + block, n_out), dtype=np.int64)
        num = n * src
        base = num // target_rate
        frac = (num % target_rate) / target_rate
        idx = base[:, None] + taps[None, :]
        offsets = frac[:, None] - taps[None, :]
        k = _hann_sinc_kernel(offsets, scale, half_width) * ((idx >= 0) & (idx < n_in))
        k /= k.sum(axis=1, keepdims=True)
        out[lo:lo + len(n)] = np.sum(k * padded[idx + reach + 1], axis=1)
    return AudioClip(out, target_rate)


def normalize_to_pipeline(clip: AudioClip) -> AudioClip:
    if clip.n_samples == 0 and clip.n_channels == 0:
        raise EmptyAudio("clip is empty")
    return resample(downmix_mono(clip), PIPELINE_RATE)
