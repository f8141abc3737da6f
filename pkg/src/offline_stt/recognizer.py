"""Streaming recognition: sessions, endpointing, DTW template matching, engine replay.

A session accepts 16 kHz mono audio in chunks of any size. Endpointing runs
frame by frame on a fixed grid (25 ms windows, 10 ms hop measured from the
start of the stream), so segment boundaries and therefore the finished
transcript do not depend on how the audio was chunked.
"""
from __future__ import annotations

import array
import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .dsp import FeatureMatrix, MfccConfig, mfcc
from .errors import (
    InvalidModel,
    InvalidParameter,
    MalformedEngineOutput,
    SessionClosed,
)

log = logging.getLogger(__name__)

SAMPLE_RATE = 16000
SILENCE_UNIT = "<sil>"
MODEL_MANIFEST = "model.txt"


@dataclass(frozen=True)
class WordResult:
    text: str
    t_start: float
    t_end: float
    confidence: float

    def __post_init__(self):
        if self.t_start > self.t_end:
            raise InvalidParameter(f"word {self.text!r} ends before it starts")
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidParameter(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class PartialResult:
    text: str
    stable: bool


@dataclass(frozen=True)
class Hypothesis:
    """One n-best entry. ``confidences`` holds one value per token when known."""

    tokens: tuple
    logscore: float
    confidences: Optional[tuple] = None


@dataclass
class FinalSegment:
    words: list
    nbest: list
    t_start: float
    t_end: float

    def __post_init__(self):
        if not self.nbest:
            raise InvalidParameter("a final segment needs a non-empty n-best list")
        if tuple(self.nbest[0].tokens) != tuple(w.text for w in self.words):
            raise InvalidParameter("n-best top hypothesis does not match segment words")
        scores = [h.logscore for h in self.nbest]
        if any(b > a for a, b in zip(scores, scores[1:])):
            raise InvalidParameter("n-best scores must be non-increasing")

    @property
    def text(self) -> str:
        return " ".join(w.text for w in self.words)


@dataclass
class Transcript:
    segments: list = field(default_factory=list)
    source: str = ""
    model_id: str = ""

    def __post_init__(self):
        for a, b in zip(self.segments, self.segments[1:]):
            if b.t_start < a.t_end:
                raise InvalidParameter(
                    f"segments overlap or are out of order at t={b.t_start:.3f}s"
                )

    @property
    def text(self) -> str:
        return " ".join(s.text for s in self.segments if s.words)

    @property
    def words(self) -> list:
        return [w for s in self.segments for w in s.words]


@dataclass
class PosteriorGram:
    units: list
    frames: np.ndarray
    frame_duration: float

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64).reshape(-1, len(self.units))
        if np.any(self.frames < 0):
            raise InvalidParameter("posteriors must be non-negative")
        if self.frames.size and np.max(np.abs(self.frames.sum(axis=1) - 1.0)) > 1e-9:
            raise InvalidParameter("posterior rows must sum to 1")


@dataclass
class VocabularyModel:
    entries: dict
    model_id: str = "model"
    units: list = None

    def __post_init__(self):
        if self.units is None:
            self.units = [SILENCE_UNIT, *self.entries]

    @property
    def words(self) -> list:
        return list(self.entries)

    def validate(self) -> None:
        if len(self.entries) < 2:
            raise InvalidModel(f"vocabulary model needs at least 2 entries, has {len(self.entries)}")
        cols = set()
        for word, tmpl in self.entries.items():
            if tmpl.rows == 0:
                raise InvalidModel(f"template for {word!r} is empty")
            cols.add(tmpl.cols)
        if len(cols) != 1:
            raise InvalidModel("templates disagree on coefficient count")
        missing = [w for w in self.entries if w not in self.units]
        if missing:
            raise InvalidModel(f"unit inventory lacks {missing}")


@dataclass(frozen=True)
class SessionConfig:
    rms_threshold: float = 0.02
    hangover_ms: float = 200.0
    min_segment_ms: float = 100.0
    window_len: int = 400
    hop: int = 160
    temperature: float = 1.0

    @property
    def hangover_frames(self) -> int:
        return max(1, math.ceil(self.hangover_ms * SAMPLE_RATE / 1000.0 / self.hop))

    @property
    def min_segment_samples(self) -> int:
        return int(round(self.min_segment_ms * SAMPLE_RATE / 1000.0))


# -- endpointing ------------------------------------------------------------

class Endpointer:
    """Incremental energy endpointer over a fixed frame grid.

    ``push(buffer)`` consumes every complete frame available in ``buffer``
    (the full stream so far) and returns the (start, end) sample spans of
    segments that can no longer grow.
    """

    def __init__(self, cfg: SessionConfig):
        self.cfg = cfg
        self.next_frame = 0
        self.active = False
        self.seg_first = 0
        self.last_speech = 0

    def _close(self):
        self.active = False
        start = self.seg_first * self.cfg.hop
        end = self.last_speech * self.cfg.hop + self.cfg.window_len
        if end - start < self.cfg.min_segment_samples:
            return None
        return start, end

    def push(self, buffer) -> list:
        cfg = self.cfg
        closed = []
        n = len(buffer)
        while self.next_frame * cfg.hop + cfg.window_len <= n:
            t = self.next_frame
            s = t * cfg.hop
            frame = np.asarray(buffer[s:s + cfg.window_len], dtype=np.float64)
            rms = math.sqrt(float(np.dot(frame, frame)) / cfg.window_len)
            if rms > cfg.rms_threshold:
                if not self.active:
                    self.active = True
                    self.seg_first = t
                self.last_speech = t
            elif self.active and t - self.last_speech >= cfg.hangover_frames:
                span = self._close()
                if span:
                    closed.append(span)
            self.next_frame += 1
        return closed

    def flush(self) -> list:
        if self.active:
            span = self._close()
            if span:
                return [span]
        return []


def endpoint_segments(samples, cfg: SessionConfig = SessionConfig()) -> list:
    """Speech spans of a whole signal as (start_sample, end_sample) pairs."""
    ep = Endpointer(cfg)
    x = np.asarray(samples, dtype=np.float64)
    return ep.push(x) + ep.flush()


# -- acoustic matching ---------------------------------------------------------

def dtw_distance(a: FeatureMatrix, b: FeatureMatrix) -> float:
    """Length-normalized DTW cost with steps (1,1), (1,0), (0,1).

    Among equal-cost paths the shorter one wins, which keeps the result
    symmetric in its arguments.
    """
    if a.rows == 0 or b.rows == 0:
        raise InvalidParameter("DTW needs non-empty sequences")
    if a.cols != b.cols:
        raise InvalidParameter(f"column mismatch: {a.cols} vs {b.cols}")
    cost = cdist(a.values, b.values).tolist()
    n, m = a.rows, b.rows
    inf = math.inf
    prev_c = [inf] * m
    prev_l = [0] * m
    for i in range(n):
        row = cost[i]
        cur_c = [0.0] * m
        cur_l = [0] * m
        for j in range(m):
            if i == 0 and j == 0:
                bc, bl = 0.0, 0
            else:
                bc, bl = inf, 0
                if i > 0 and j > 0:
                    bc, bl = prev_c[j - 1], prev_l[j - 1]
                if i > 0:
                    c, l_ = prev_c[j], prev_l[j]
                    if c < bc or (c == bc and l_ < bl):
                        bc, bl = c, l_
                if j > 0:
                    c, l_ = cur_c[j - 1], cur_l[j - 1]
                    if c < bc or (c == bc and l_ < bl):
                        bc, bl = c, l_
            cur_c[j] = bc + row[j]
            cur_l[j] = bl + 1
        prev_c, prev_l = cur_c, cur_l
    return prev_c[m - 1] / prev_l[m - 1]


def softmax_neg(distances, temperature: float) -> np.ndarray:
    d = np.asarray(distances, dtype=np.float64)
    z = -(d - d.min(axis=-1, keepdims=True)) / temperature
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def classify_segment(features: FeatureMatrix, model: VocabularyModel, temperature: float = 1.0):
    """Rank every vocabulary word against ``features``.

    Returns ``(nbest, posterior_rows)``; rows are over ``model.units`` with
    zero mass on units that are not vocabulary words.
    """
    if features.rows == 0:
        raise InvalidParameter("cannot classify an empty segment")
    if temperature <= 0:
        raise InvalidParameter("temperature must be positive")
    words = model.words
    dists = np.array([dtw_distance(features, model.entries[w]) for w in words])
    conf = softmax_neg(dists, temperature)
    order = sorted(range(len(words)), key=lambda k: dists[k])
    nbest = [
        Hypothesis((words[k],), -float(dists[k]), (float(conf[k]),)) for k in order
    ]

    frame_d = np.stack(
        [cdist(features.values, model.entries[w].values).min(axis=1) for w in words], axis=1
    )
    word_post = softmax_neg(frame_d, temperature)
    rows = np.zeros((features.rows, len(model.units)))
    for k, w in enumerate(words):
        rows[:, model.units.index(w)] = word_post[:, k]
    return nbest, rows


# -- sessions ----------------------------------------------------------------

class RecognizerSession:
    """Single-owner streaming session over a template vocabulary."""

    def __init__(self, model: VocabularyModel, cfg: SessionConfig = SessionConfig(),
                 source: str = "", mfcc_config: MfccConfig = MfccConfig()):
        model.validate()
        self.model = model
        self.cfg = cfg
        self.source = source
        self.mfcc_config = mfcc_config
        self._buf = array.array("d")
        self._ep = Endpointer(cfg)
        self._segments = []
        self._seg_posteriors = []
        self._closed = False
        self._transcript = None
        self._posteriorgram = None

    def _recognize(self, start: int, end: int) -> None:
        samples = np.asarray(self._buf[start:end], dtype=np.float64)
        feats = mfcc(samples, self.mfcc_config)
        nbest, rows = classify_segment(feats, self.model, self.cfg.temperature)
        best = nbest[0]
        t0, t1 = start / SAMPLE_RATE, end / SAMPLE_RATE
        word = WordResult(best.tokens[0], t0, t1, best.confidences[0])
        self._segments.append(FinalSegment([word], nbest, t0, t1))
        self._seg_posteriors.append((start // self.cfg.hop, rows))

    def _text(self) -> str:
        return " ".join(s.text for s in self._segments)

    def accept_frames(self, chunk) -> Optional[PartialResult]:
        if self._closed:
            raise SessionClosed("session already finalized")
        chunk = np.asarray(chunk, dtype=np.float64).reshape(-1)
        if chunk.size == 0:
            raise InvalidParameter("chunk must contain at least one sample")
        self._buf.extend(chunk.tolist())
        spans = self._ep.push(self._buf)
        for start, end in spans:
            self._recognize(start, end)
        if spans:
            return PartialResult(self._text(), stable=not self._ep.active)
        return None

    def finalize(self) -> Transcript:
        if self._closed:
            raise SessionClosed("session already finalized")
        for start, end in self._ep.flush():
            self._recognize(start, end)
        self._closed = True
        self._transcript = Transcript(list(self._segments), self.source, self.model.model_id)
        return self._transcript

    @property
    def posteriorgram(self) -> PosteriorGram:
        """Frame posteriors over the whole stream; silence frames are one-hot on <sil>."""
        if not self._closed:
            raise InvalidParameter("posteriorgram is available after finalize")
        if self._posteriorgram is None:
            units = list(self.model.units)
            n = self._ep.next_frame
            frames = np.zeros((n, len(units)))
            if SILENCE_UNIT in units:
                frames[:, units.index(SILENCE_UNIT)] = 1.0
            else:
                frames[:] = 1.0 / len(units)
            for first, rows in self._seg_posteriors:
                frames[first:first + len(rows)] = rows[: max(0, n - first)]
            self._posteriorgram = PosteriorGram(units, frames, self.cfg.hop / SAMPLE_RATE)
        return self._posteriorgram


class ReplaySession:
    """Adapter session: replays a transcript produced by an external engine.

    Audio passed to ``accept_frames`` only advances the clock; a partial
    result is emitted whenever the clock passes the end of another segment.
    """

    def __init__(self, transcript: Transcript):
        self.transcript = transcript
        self._elapsed = 0
        self._emitted = 0
        self._closed = False

    def accept_frames(self, chunk) -> Optional[PartialResult]:
        if self._closed:
            raise SessionClosed("session already finalized")
        n = np.asarray(chunk).reshape(-1).size
        if n == 0:
            raise InvalidParameter("chunk must contain at least one sample")
        self._elapsed += n
        now = self._elapsed / SAMPLE_RATE
        segs = self.transcript.segments
        k = self._emitted
        while k < len(segs) and segs[k].t_end <= now:
            k += 1
        if k == self._emitted:
            return None
        self._emitted = k
        return PartialResult(" ".join(s.text for s in segs[:k] if s.words), stable=True)

    def finalize(self) -> Transcript:
        if self._closed:
            raise SessionClosed("session already finalized")
        self._closed = True
        return self.transcript

    posteriorgram = None


def open_session(model: Optional[VocabularyModel] = None, cfg: SessionConfig = SessionConfig(),
                 source: str = "", replay: Optional[Transcript] = None):
    if replay is not None:
        return ReplaySession(replay)
    if model is None:
        raise InvalidModel("no vocabulary model and no replay source given")
    return RecognizerSession(model, cfg, source)


def recognize(samples, model: VocabularyModel, cfg: SessionConfig = SessionConfig(),
              chunk_samples: Optional[int] = None, source: str = ""):
    """Stream ``samples`` through a fresh session; returns (transcript, posteriorgram)."""
    session = RecognizerSession(model, cfg, source)
    x = np.asarray(samples, dtype=np.float64)
    step = len(x) if not chunk_samples else chunk_samples
    for lo in range(0, len(x), max(1, step)):
        session.accept_frames(x[lo:lo + step])
    transcript = session.finalize()
    return transcript, session.posteriorgram


# -- engine JSON lines -----------------------------------------------------------

def parse_engine_jsonl(stream, source: str = "", model_id: str = "external") -> Transcript:
    """Build a transcript from Kaldi-style recognizer output, one JSON object per line.

    Lines carrying only ``partial`` are skipped; each line with a non-empty
    ``result`` array becomes one segment.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    segments = []
    for line_no, line in enumerate(stream, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedEngineOutput(line_no, f"invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise MalformedEngineOutput(line_no, "expected a JSON object")
        if "result" not in obj:
            if "partial" in obj or "text" in obj:
                continue
            raise MalformedEngineOutput(line_no, "object has neither 'result' nor 'partial'")
        records = obj["result"]
        if not isinstance(records, list):
            raise MalformedEngineOutput(line_no, "'result' must be an array")
        words = []
        for rec in records:
            try:
                token = str(rec["word"])
                start, end = float(rec["start"]), float(rec["end"])
                conf = float(rec.get("conf", 1.0))
            except (KeyError, TypeError, ValueError) as exc:
                raise MalformedEngineOutput(line_no, f"bad word record {rec!r}") from exc
            if not 0.0 <= conf <= 1.0:
                log.warning("line %d: confidence %r for %r clamped to [0, 1]", line_no, conf, token)
                conf = min(1.0, max(0.0, conf))
            if end < start:
                raise MalformedEngineOutput(line_no, f"word {token!r} ends before it starts")
            words.append(WordResult(token, start, end, conf))
        if not words:
            continue
        hyp = Hypothesis(tuple(w.text for w in words), 0.0, tuple(w.confidence for w in words))
        segments.append(FinalSegment(words, [hyp], words[0].t_start, words[-1].t_end))
    try:
        return Transcript(segments, source, model_id)
    except InvalidParameter as exc:
        raise MalformedEngineOutput(0, str(exc)) from None


# -- model directories ---------------------------------------------------------------

def write_matrix_csv(path, values: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in np.asarray(values):
            writer.writerow([repr(float(v)) for v in row])


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    return np.array(rows, dtype=np.float64)


def enroll(recordings: dict, model_id: str = "model", cfg: SessionConfig = SessionConfig(),
           mfcc_config: MfccConfig = MfccConfig()) -> VocabularyModel:
    """Build templates from one 16 kHz recording per word.

    Each recording is endpointed with the session settings and the detected
    speech span becomes the template, so templates match what a session
    extracts from running audio.
    """
    entries = {}
    for word, samples in recordings.items():
        x = np.asarray(samples, dtype=np.float64)
        spans = endpoint_segments(x, cfg)
        if not spans:
            raise InvalidModel(f"no speech found in the recording for {word!r}")
        entries[word] = mfcc(x[spans[0][0]:spans[-1][1]], mfcc_config)
    model = VocabularyModel(entries, model_id)
    model.validate()
    return model


def save_model_dir(model: VocabularyModel, directory) -> Path:
    directory = Path(directory)
    (directory / "templates").mkdir(parents=True, exist_ok=True)
    lines = ["# offline-stt vocabulary model", f"model_id {model.model_id}",
             "units " + " ".join(model.units)]
    for k, (word, tmpl) in enumerate(model.entries.items()):
        rel = f"templates/{k:03d}.csv"
        write_matrix_csv(directory / rel, tmpl.values)
        lines.append(f"word {word} {rel}")
    (directory / MODEL_MANIFEST).write_text("\n".join(lines) + "\n")
    return directory


def load_model_dir(directory, frame_duration: float = 0.01) -> VocabularyModel:
    directory = Path(directory)
    manifest = directory / MODEL_MANIFEST
    if not manifest.is_file():
        raise InvalidModel(f"{manifest} not found")
    model_id, units, entries = directory.name, None, {}
    try:
        for raw in manifest.read_text().splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, rest = line.partition(" ")
            if key == "model_id":
                model_id = rest.strip()
            elif key == "units":
                units = rest.split()
            elif key == "word":
                word, rel = rest.split()
                entries[word] = FeatureMatrix(read_matrix_csv(directory / rel), frame_duration)
            else:
                raise InvalidModel(f"unknown manifest key {key!r}")
    except (OSError, ValueError) as exc:
        raise InvalidModel(f"cannot load model from {directory}: {exc}") from exc
    model = VocabularyModel(entries, model_id, units)
    model.validate()
    return model
