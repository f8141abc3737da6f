"""Command-line entry point.

Exit codes::

    0  success
    1  unexpected pipeline failure
    2  missing input file / unreadable manifest (argparse usage errors also use 2)
    3  unsupported or undecodable audio format
    4  model or language model failed to load
    5  external decoder or engine output failure
    6  output could not be written
    7  WER undefined (empty reference)
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__, lang_model
from .diagnostics import build_candles, emit_candles_csv, emit_posterior_heatmap, emit_spectrogram
from .errors import (
    ExternalDecoderFailure,
    InvalidModel,
    MalformedContainer,
    MalformedEngineOutput,
    ManifestError,
    OutputError,
    PipelineError,
    TruncatedInput,
    UndefinedWer,
    UnsupportedEncoding,
    UnsupportedFormat,
)
from .evaluation import bench_run, normalize_tokens, read_manifest, wer, write_report
from .export import ExportFormat, ExportOptions, render
from .pipeline import PipelineConfig, load_lm, load_vocabulary, make_transcriber, transcribe_file
from .recognizer import SessionConfig, enroll, save_model_dir

log = logging.getLogger("offline_stt")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_MISSING_INPUT = 2
EXIT_UNSUPPORTED_FORMAT = 3
EXIT_MODEL_LOAD = 4
EXIT_DECODER = 5
EXIT_OUTPUT = 6
EXIT_UNDEFINED_WER = 7

_EXIT_FOR = [
    (FileNotFoundError, EXIT_MISSING_INPUT),
    (ManifestError, EXIT_MISSING_INPUT),
    (UnsupportedFormat, EXIT_UNSUPPORTED_FORMAT),
    (MalformedContainer, EXIT_UNSUPPORTED_FORMAT),
    (UnsupportedEncoding, EXIT_UNSUPPORTED_FORMAT),
    (TruncatedInput, EXIT_UNSUPPORTED_FORMAT),
    (InvalidModel, EXIT_MODEL_LOAD),
    (ExternalDecoderFailure, EXIT_DECODER),
    (MalformedEngineOutput, EXIT_DECODER),
    (OutputError, EXIT_OUTPUT),
    (UndefinedWer, EXIT_UNDEFINED_WER),
]

# keys accepted in a --config file, mapped to argparse destinations
CONFIG_KEYS = {
    "model": "model", "lm": "lm", "lm_weight": "lm_weight", "decoder": "decoder",
    "chunk_samples": "chunk_samples", "format": "format", "rms_threshold": "rms_threshold",
    "hangover_ms": "hangover_ms", "min_segment_ms": "min_segment_ms", "temperature": "temperature",
}
DEFAULTS = {
    "lm_weight": 1.0, "chunk_samples": 4000, "format": None, "rms_threshold": 0.02,
    "hangover_ms": 200.0, "min_segment_ms": 100.0, "temperature": 1.0,
}


def exit_code_for(exc: BaseException) -> int:
    for cls, code in _EXIT_FOR:
        if isinstance(exc, cls):
            return code
    return EXIT_FAILURE


def fail(exc: BaseException) -> int:
    msg = str(exc).replace("\n", " ").strip() or type(exc).__name__
    diag = getattr(exc, "diagnostics", "")
    if diag:
        msg += " (" + diag.replace("\n", " ")[:300] + ")"
    print(f"error: {msg}", file=sys.stderr)
    return exit_code_for(exc)


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in CONFIG_KEYS:
            raise ValueError(f"{path}:{n}: unrecognized config line {raw!r}")
        out[CONFIG_KEYS[key]] = value.strip()
    return out


def _apply_config(args) -> None:
    """Fill options the user did not pass from --config, then from built-in defaults."""
    conf = read_config(args.config) if getattr(args, "config", None) else {}
    for dest, value in conf.items():
        if hasattr(args, dest) and getattr(args, dest) is None:
            current = DEFAULTS.get(dest)
            if dest in ("chunk_samples",):
                value = int(value)
            elif isinstance(current, float):
                value = float(value)
            setattr(args, dest, value)
    for dest, value in DEFAULTS.items():
        if hasattr(args, dest) and getattr(args, dest) is None:
            setattr(args, dest, value)


def _pipeline_config(args) -> PipelineConfig:
    session = SessionConfig(
        rms_threshold=float(args.rms_threshold),
        hangover_ms=float(args.hangover_ms),
        min_segment_ms=float(args.min_segment_ms),
        temperature=float(args.temperature),
    )
    return PipelineConfig(
        model_dir=Path(args.model) if getattr(args, "model", None) else None,
        lm_path=Path(args.lm) if getattr(args, "lm", None) else None,
        lm_weight=float(args.lm_weight),
        decoder_cmd=getattr(args, "decoder", None),
        chunk_samples=int(args.chunk_samples),
        session=session,
    )


def _output_format(args) -> ExportFormat:
    if args.format:
        return ExportFormat(args.format.lower())
    suffix = Path(args.output).suffix.lower().lstrip(".")
    return ExportFormat(suffix) if suffix in {f.value for f in ExportFormat} else ExportFormat.DOCX


def _check_input(path) -> None:
    if not Path(path).is_file():
        raise FileNotFoundError(f"input audio file not found: {path}")


def _emit_diagnostics(result, out_dir) -> None:
    emit_spectrogram(result.clip, out_dir)
    if result.posteriorgram is not None:
        emit_posterior_heatmap(result.posteriorgram, out_dir)
    emit_candles_csv(build_candles(result.transcript), out_dir)


def _run_pipeline(args):
    _check_input(args.input)
    if args.engine_jsonl and not Path(args.engine_jsonl).is_file():
        raise FileNotFoundError(f"engine output not found: {args.engine_jsonl}")
    cfg = _pipeline_config(args)
    model = None
    if args.model:
        model = load_vocabulary(args.model)
    elif not getattr(args, "engine_jsonl", None):
        raise InvalidModel("--model is required unless --engine-jsonl is given")
    lm = load_lm(args.lm) if args.lm else None
    return transcribe_file(args.input, cfg, model, lm, engine_jsonl=args.engine_jsonl)


def cmd_transcribe(args) -> int:
    fmt = _output_format(args)
    result = _run_pipeline(args)
    data = render(result.transcript, ExportOptions(fmt, args.timestamps, args.title))
    try:
        Path(args.output).write_bytes(data)
    except OSError as exc:
        raise OutputError(f"cannot write {args.output}: {exc}") from exc
    if args.diagnostics:
        _emit_diagnostics(result, args.diagnostics)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    args.engine_jsonl = getattr(args, "engine_jsonl", None)
    result = _run_pipeline(args)
    _emit_diagnostics(result, args.out)
    return EXIT_OK


def _read_text(path) -> str:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"file not found: {p}")
    return p.read_text(encoding="utf-8")


def cmd_evaluate(args) -> int:
    ref = normalize_tokens(_read_text(args.ref))
    hyp = normalize_tokens(_read_text(args.hyp))
    print(wer(ref, hyp))
    return EXIT_OK


def cmd_bench(args) -> int:
    manifest = read_manifest(args.manifest)
    cfg = _pipeline_config(args)
    specs = args.pipelines or []
    if not specs:
        raise InvalidModel("bench needs at least one --model")
    pipelines = {}
    models = {}
    for spec in specs:
        if spec["model"] not in models:
            models[spec["model"]] = load_vocabulary(spec["model"])
        lm = load_lm(spec["lm"]) if spec.get("lm") else None
        pid = spec.get("id") or _pipeline_id(spec, pipelines)
        pipelines[pid] = make_transcriber(cfg, models[spec["model"]], lm)
    report = bench_run(manifest, pipelines, workers=args.workers)
    write_report(report, args.out)
    for pid in report.models:
        vals = [r.wer for r in report.wer_by_entry[pid] if r is not None]
        mean = sum(vals) / len(vals) if vals else float("nan")
        print(f"{pid}\tmean_wer {mean:.6f}\tfailed {sum(r is None for r in report.wer_by_entry[pid])}")
    return EXIT_OK


def _pipeline_id(spec, existing) -> str:
    base = Path(spec["model"]).name
    if spec.get("lm"):
        base += "+" + Path(spec["lm"]).stem
    pid, k = base, 2
    while pid in existing:
        pid, k = f"{base}#{k}", k + 1
    return pid


def _split_id(value: str):
    head, sep, tail = value.partition("=")
    if sep and head and "/" not in head:
        return head, tail
    return None, value


class _ModelAction(argparse.Action):
    def __call__(self, parser, ns, value, option_string=None):
        pid, path = _split_id(value)
        specs = getattr(ns, "pipelines", None) or []
        specs.append({"id": pid, "model": path, "lm": None})
        ns.pipelines = specs


class _LmAction(argparse.Action):
    def __call__(self, parser, ns, value, option_string=None):
        specs = getattr(ns, "pipelines", None)
        if not specs:
            parser.error("--lm must follow the --model it applies to")
        if specs[-1]["lm"]:
            parser.error("each --model takes at most one --lm")
        pid, path = _split_id(value)
        specs[-1]["lm"] = path
        if pid:
            specs[-1]["id"] = pid


def cmd_train_lm(args) -> int:
    corpus = lang_model.read_corpus(_read_text_path(args.corpus))
    model = lang_model.train(corpus, args.order, args.min_count, model_id=args.id or Path(args.corpus).stem)
    try:
        lang_model.save(model, args.out)
    except OSError as exc:
        raise OutputError(f"cannot write {args.out}: {exc}") from exc
    return EXIT_OK


def _read_text_path(path) -> Path:
    if not Path(path).is_file():
        raise FileNotFoundError(f"file not found: {path}")
    return Path(path)


def cmd_enroll(args) -> int:
    from .pipeline import load_audio

    recordings = {}
    for item in args.recordings:
        word, sep, path = item.partition("=")
        if not sep:
            raise ValueError(f"expected WORD=FILE, got {item!r}")
        recordings[word] = load_audio(path, _pipeline_config(args).decoder).mono
    cfg = _pipeline_config(args).session
    model = enroll(recordings, args.id or Path(args.out).name, cfg)
    try:
        save_model_dir(model, args.out)
    except OSError as exc:
        raise OutputError(f"cannot write model to {args.out}: {exc}") from exc
    return EXIT_OK


def _add_session_opts(p) -> None:
    p.add_argument("--config", help="key = value file; command-line flags take precedence")
    p.add_argument("--decoder", help="external decoder command template with {in} and {out} "
                                     "(default: $TRANSCRIBE_DECODER)")
    p.add_argument("--chunk-samples", dest="chunk_samples", type=int, default=None)
    p.add_argument("--rms-threshold", dest="rms_threshold", type=float, default=None)
    p.add_argument("--hangover-ms", dest="hangover_ms", type=float, default=None)
    p.add_argument("--min-segment-ms", dest="min_segment_ms", type=float, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--lm-weight", dest="lm_weight", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="offline-stt", description="Offline speech-to-text toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transcribe", help="transcribe one audio file")
    p.add_argument("--model")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--lm")
    p.add_argument("--format", choices=[f.value for f in ExportFormat], default=None)
    p.add_argument("--diagnostics", metavar="DIR")
    p.add_argument("--engine-jsonl", dest="engine_jsonl", metavar="FILE")
    p.add_argument("--timestamps", action="store_true")
    p.add_argument("--title")
    _add_session_opts(p)
    p.set_defaults(func=cmd_transcribe)

    p = sub.add_parser("evaluate", help="word error rate of a hypothesis text file")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="run a domain-tagged benchmark manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", action=_ModelAction, metavar="[ID=]DIR",
                   help="add a pipeline (repeatable)")
    p.add_argument("--lm", action=_LmAction, metavar="[ID=]PATH",
                   help="language model for the preceding --model")
    p.add_argument("--workers", type=int, default=1)
    _add_session_opts(p)
    p.set_defaults(func=cmd_bench, pipelines=None)

    p = sub.add_parser("diagnose", help="emit spectrogram, posterior heatmap and confidence candles")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lm")
    _add_session_opts(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("train-lm", help="train an n-gram model from a text corpus")
    p.add_argument("--corpus", required=True, help="one sentence per line")
    p.add_argument("--out", required=True)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--min-count", dest="min_count", type=int, default=1)
    p.add_argument("--id")
    p.set_defaults(func=cmd_train_lm)

    p = sub.add_parser("enroll", help="build a template model from WORD=FILE recordings")
    p.add_argument("--out", required=True)
    p.add_argument("--id")
    p.add_argument("recordings", nargs="+", metavar="WORD=FILE")
    _add_session_opts(p)
    p.set_defaults(func=cmd_enroll)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        _apply_config(args)
        return args.func(args)
    except (PipelineError, OSError, ValueError) as exc:
        return fail(exc)


if __name__ == "__main__":
    sys.exit(main())
