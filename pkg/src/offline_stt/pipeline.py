"""End-to-end transcription: validate, normalize, recognize, rescore."""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import lang_model
from .audio_ingest import AudioClip, Container, decode_via_external, decode_wav, detect_format, normalize_to_pipeline
from .errors import InvalidModel, InvalidParameter, UnsupportedFormat
from .lang_model import NGramModel, RescoreConfig
from .recognizer import (
    FinalSegment,
    Hypothesis,
    SessionConfig,
    Transcript,
    VocabularyModel,
    WordResult,
    load_model_dir,
    open_session,
    parse_engine_jsonl,
)

DECODER_ENV = "TRANSCRIBE_DECODER"


@dataclass
class PipelineConfig:
    model_dir: Optional[Path] = None
    lm_path: Optional[Path] = None
    lm_weight: float = 1.0
    decoder_cmd: Optional[str] = None
    chunk_samples: int = 4000
    session: SessionConfig = field(default_factory=SessionConfig)
    output_format: str = "docx"

    def __post_init__(self):
        if self.chunk_samples < 1:
            raise InvalidParameter("chunk_samples must be at least 1")
        if self.lm_weight < 0:
            raise InvalidParameter("lm_weight must be non-negative")

    @property
    def decoder(self) -> Optional[str]:
        return self.decoder_cmd or os.environ.get(DECODER_ENV) or None


def load_audio(path, decoder_cmd: Optional[str] = None) -> AudioClip:
    """Read, decode and normalize one input file to 16 kHz mono.

    Raises FileNotFoundError for a missing file, UnsupportedFormat when no
    container signature matches.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"input audio file not found: {path}")
    data = path.read_bytes()
    info = detect_format(data.ljust(12, b"\0"))
    if info.container is Container.UNKNOWN:
        raise UnsupportedFormat(f"{path}: unrecognized audio container")
    if info.container is Container.WAV:
        clip = decode_wav(data)
    else:
        clip = decode_via_external(path, info, decoder_cmd)
    return normalize_to_pipeline(clip)


def load_lm(path) -> NGramModel:
    try:
        return lang_model.load(path)
    except (OSError, ValueError) as exc:
        raise InvalidModel(f"cannot load language model {path}: {exc}") from exc


def load_vocabulary(model_dir) -> VocabularyModel:
    if model_dir is None:
        raise InvalidModel("no model directory given")
    if not Path(model_dir).is_dir():
        raise InvalidModel(f"model directory not found: {model_dir}")
    return load_model_dir(model_dir)


def _retime(seg: FinalSegment, hyp: Hypothesis) -> list:
    tokens = list(hyp.tokens)
    old = seg.words
    confs = list(hyp.confidences) if hyp.confidences and len(hyp.confidences) == len(tokens) else None
    if len(tokens) == len(old):
        return [WordResult(tok, w.t_start, w.t_end, confs[k] if confs else w.confidence)
                for k, (tok, w) in enumerate(zip(tokens, old))]
    step = (seg.t_end - seg.t_start) / max(1, len(tokens))
    return [WordResult(tok, seg.t_start + k * step, seg.t_start + (k + 1) * step,
                       confs[k] if confs else 0.0)
            for k, tok in enumerate(tokens)]


def apply_lm(transcript: Transcript, lm: NGramModel, cfg: RescoreConfig = RescoreConfig()) -> Transcript:
    """Rescore each segment's n-best list and adopt the new top hypothesis.

    The rescored n-best carries the combined score as its ``logscore``.
    """
    segments = []
    for seg in transcript.segments:
        ranked = lang_model.rescore([(h.tokens, h.logscore) for h in seg.nbest], lm, cfg)
        # map back to hypotheses (first unused match) to keep per-word confidences
        pool = list(seg.nbest)
        nbest = []
        for r in ranked:
            k = next(i for i, h in enumerate(pool) if h.tokens == r.tokens and h.logscore == r.acoustic_logscore)
            h = pool.pop(k)
            nbest.append(Hypothesis(h.tokens, r.combined, h.confidences))
        top = nbest[0]
        words = seg.words if tuple(top.tokens) == tuple(w.text for w in seg.words) else _retime(seg, top)
        segments.append(FinalSegment(words, nbest, seg.t_start, seg.t_end))
    return Transcript(segments, transcript.source, transcript.model_id)


@dataclass
class PipelineResult:
    transcript: Transcript
    clip: AudioClip
    posteriorgram: object = None


def run_session(clip: AudioClip, model: Optional[VocabularyModel], cfg: PipelineConfig,
                source: str = "", replay: Optional[Transcript] = None):
    session = open_session(model, cfg.session, source, replay=replay)
    x = clip.mono
    step = cfg.chunk_samples
    for lo in range(0, len(x), step):
        session.accept_frames(x[lo:lo + step])
    transcript = session.finalize()
    return transcript, session.posteriorgram


def transcribe_file(path, cfg: PipelineConfig, model: Optional[VocabularyModel] = None,
                    lm: Optional[NGramModel] = None, engine_jsonl=None) -> PipelineResult:
    clip = load_audio(path, cfg.decoder)
    replay = None
    if engine_jsonl is not None:
        with open(engine_jsonl, encoding="utf-8") as fh:
            replay = parse_engine_jsonl(fh, source=str(path),
                                        model_id=model.model_id if model else "external")
    elif model is None:
        model = load_vocabulary(cfg.model_dir)
    transcript, pg = run_session(clip, model, cfg, str(path), replay)
    if lm is not None:
        transcript = apply_lm(transcript, lm, RescoreConfig(cfg.lm_weight))
    return PipelineResult(transcript, clip, pg)


def make_transcriber(cfg: PipelineConfig, model: VocabularyModel, lm: Optional[NGramModel] = None):
    """A ``path -> text`` callable for the benchmark harness."""
    def transcribe(path) -> str:
        return transcribe_file(path, cfg, model, lm).transcript.text
    return transcribe
