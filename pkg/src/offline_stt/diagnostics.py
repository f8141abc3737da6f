"""Diagnostic outputs: spectrogram, unit-posterior heatmap and word confidence candles.

Everything is written as plain data (CSV) next to a grayscale PGM, so any
plotting tool can redraw the figures.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_ingest import AudioClip
from .dsp import DB_FLOOR, FrameSpec, Window, power_to_db, round_half_up, spectrogram_pgm, stft_magnitude
from .errors import InvalidParameter, OutputError
from .recognizer import PosteriorGram, Transcript

SPECTROGRAM_SPEC = FrameSpec(400, 160, Window.HANN, 512)
CANDLE_HEADER = ["word", "t_start", "low", "mean", "close", "high"]


@dataclass(frozen=True)
class ConfidenceCandle:
    word: str
    t_start: float
    low: float
    high: float
    mean: float
    close: float

    def __post_init__(self):
        eps = 1e-12
        if not (self.low - eps <= self.mean <= self.high + eps and self.low - eps <= self.close <= self.high + eps):
            raise InvalidParameter(f"inconsistent candle for {self.word!r}")


def _write(path: Path, data: bytes) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def _csv_bytes(rows, header=None) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header is not None:
        w.writerow(header)
    w.writerows(rows)
    return buf.getvalue().encode("utf-8")


def emit_spectrogram(clip: AudioClip, out_dir) -> list:
    out = Path(out_dir)
    db = power_to_db(stft_magnitude(clip.mono, SPECTROGRAM_SPEC, clip.sample_rate), DB_FLOOR)
    pgm, csv_path = out / "spectrogram.pgm", out / "spectrogram.csv"
    _write(pgm, spectrogram_pgm(db, DB_FLOOR))
    _write(csv_path, _csv_bytes([f"{v:.6f}" for v in row] for row in db.values))
    return [pgm, csv_path]


def emit_posterior_heatmap(pg: PosteriorGram, out_dir) -> list:
    out = Path(out_dir)
    csv_path, pgm = out / "posteriors.csv", out / "posteriors.pgm"
    _write(csv_path, _csv_bytes(([repr(float(v)) for v in row] for row in pg.frames), list(pg.units)))
    gray = round_half_up(255.0 * np.clip(pg.frames, 0.0, 1.0)).astype(np.uint8).T
    height, width = len(pg.units), pg.frames.shape[0]
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    _write(pgm, header + np.ascontiguousarray(gray).tobytes())
    return [csv_path, pgm]


def build_candles(transcript: Transcript) -> list:
    """One candle per chosen word.

    ``close`` is the chosen word's confidence; ``low``/``high``/``mean``
    summarize the confidences that every n-best hypothesis long enough to
    reach that word position assigns to its own word there.
    """
    candles = []
    for seg in transcript.segments:
        for pos, word in enumerate(seg.words):
            confs = []
            for hyp in seg.nbest:
                if hyp.confidences is not None and pos < len(hyp.confidences):
                    confs.append(float(hyp.confidences[pos]))
            if not confs:
                confs = [word.confidence]
            close = word.confidence
            lo, hi = min(confs + [close]), max(confs + [close])
            candles.append(ConfidenceCandle(word.text, word.t_start, lo, hi,
                                            float(np.mean(confs)), close))
    return candles


def emit_candles_csv(candles, out_dir) -> Path:
    path = Path(out_dir) / "confidence_candles.csv"
    rows = [[c.word, f"{c.t_start:.6f}", f"{c.low:.6f}", f"{c.mean:.6f}", f"{c.close:.6f}",
             f"{c.high:.6f}"] for c in candles]
    _write(path, _csv_bytes(rows, CANDLE_HEADER))
    return path
