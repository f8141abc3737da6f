"""Deterministic pseudo-speech for fixtures and demo models.

Each letter of a pronunciation string is a "phone" with its own formant
pair; a word is a harmonic source whose spectral envelope glides between
the phones' formants. Different spellings give clearly different MFCC
trajectories, identical spellings give identical audio.
"""
from __future__ import annotations

import zlib

import numpy as np

from .recognizer import SAMPLE_RATE

PHONE_MS = 90.0
EDGE_MS = 15.0
MARGIN_MS = 60.0
WORD_RMS = 0.1
HOP = 160

_F1 = np.linspace(250.0, 900.0, 7)
_F2 = np.linspace(800.0, 2600.0, 9)


def _formants(ch: str):
    h = zlib.crc32(ch.encode("utf-8"))
    return _F1[h % 7], _F2[(h // 7) % 9], 2400.0 + 150.0 * ((h // 63) % 5)


def _envelope(freq: np.ndarray, formants) -> np.ndarray:
    amp = np.zeros_like(freq)
    for k, fc in enumerate(formants):
        bw = 80.0 + 40.0 * k
        amp += (0.7 ** k) / (1.0 + ((freq - fc) / bw) ** 2)
    return amp


def voiced(pronunciation: str, f0: float = 120.0, rate: float = 1.0) -> np.ndarray:
    """Voiced part of a word: no leading or trailing silence."""
    phones = [c for c in pronunciation.lower() if not c.isspace()]
    if not phones:
        raise ValueError("empty pronunciation")
    phone_len = int(round(PHONE_MS / rate * SAMPLE_RATE / 1000.0))
    n = phone_len * len(phones)
    t = np.arange(n) / SAMPLE_RATE
    table = np.array([_formants(c) for c in phones])
    centers = (np.arange(len(phones)) + 0.5) * phone_len
    pos = np.arange(n)
    track = np.stack([np.interp(pos, centers, table[:, k]) for k in range(3)], axis=1)
    pitch = f0 * (1.0 + 0.08 * np.sin(2 * np.pi * t / max(t[-1], 1e-3) * 0.5))
    phase = 2 * np.pi * np.cumsum(pitch) / SAMPLE_RATE
    sig = np.zeros(n)
    for h in range(1, int(7000 // f0) + 1):
        freq = h * pitch
        amp = _envelope(freq, track.T) * (freq < 7600)
        sig += amp * np.sin(h * phase)
    edge = int(EDGE_MS * SAMPLE_RATE / 1000.0)
    ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(edge) / edge)
    sig[:edge] *= ramp
    sig[-edge:] *= ramp[::-1]
    return sig * (WORD_RMS / np.sqrt(np.mean(sig ** 2)))


def _pad_to_hop(x: np.ndarray) -> np.ndarray:
    extra = (-len(x)) % HOP
    return np.concatenate([x, np.zeros(extra)])


def recording(pronunciation: str, **kw) -> np.ndarray:
    """A word with silence margins, length a multiple of the 10 ms hop."""
    margin = np.zeros(int(MARGIN_MS * SAMPLE_RATE / 1000.0))
    return _pad_to_hop(np.concatenate([margin, voiced(pronunciation, **kw), margin]))


def utterance(pronunciations, gap_ms: float = 200.0, lead_ms: float = 300.0,
              tail_ms: float = 300.0, **kw) -> np.ndarray:
    """Concatenate word recordings with silence gaps; all offsets stay hop-aligned."""
    def silence(ms):
        return np.zeros(int(round(ms * SAMPLE_RATE / 1000.0 / HOP)) * HOP)

    parts = [silence(lead_ms)]
    for k, p in enumerate(pronunciations):
        if k:
            parts.append(silence(gap_ms))
        parts.append(recording(p, **kw))
    parts.append(silence(tail_ms))
    return np.concatenate(parts)


def add_noise(x: np.ndarray, snr_db: float, seed: int = 0) -> np.ndarray:
    """White noise at ``snr_db`` relative to the power of the non-silent samples."""
    active = x[np.abs(x) > 0]
    p_sig = float(np.mean(active ** 2)) if active.size else 0.0
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(len(x)) * np.sqrt(p_sig / 10 ** (snr_db / 10.0))
    return x + noise


def tone(freq: float, seconds: float, amplitude: float = 0.5, rate: int = SAMPLE_RATE) -> np.ndarray:
    t = np.arange(int(round(seconds * rate))) / rate
    return amplitude * np.sin(2 * np.pi * freq * t)


def demo_model(words, pronunciations=None, model_id: str = "demo"):
    """Enroll a template model from synthesized recordings of ``words``."""
    from .recognizer import enroll

    pronunciations = pronunciations or {}
    recs = {w: recording(pronunciations.get(w, w)) for w in words}
    return enroll(recs, model_id)
