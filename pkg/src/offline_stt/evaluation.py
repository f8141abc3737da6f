"""Word error rate and the domain benchmark harness."""
from __future__ import annotations

import csv
import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

from .audio_ingest import Container, detect_format
from .errors import ManifestError, OutputError, UndefinedWer

PUNCT = ".,!?;:\"'()"
DOMAINS = ("Technical", "Educational", "Business", "Media")
FORMATS = ("WAV", "MP3", "FLAC", "OGG")


class Op(str, enum.Enum):
    MATCH = "MATCH"
    SUB = "SUB"
    DEL = "DEL"
    INS = "INS"


def normalize_tokens(text: str) -> list:
    out = []
    for raw in text.lower().split():
        tok = raw.strip(PUNCT)
        if tok:
            out.append(tok)
    return out


def align(ref: Sequence[str], hyp: Sequence[str]) -> list:
    """Minimum edit distance alignment with unit costs.

    Backtrace prefers MATCH/SUB, then DEL, then INS, so the op sequence is
    deterministic.
    """
    n, m = len(ref), len(hyp)
    prev = list(range(m + 1))
    table = [prev]
    for i in range(1, n + 1):
        cur = [i]
        r = ref[i - 1]
        left = i
        for j in range(1, m + 1):
            best = prev[j - 1] if r == hyp[j - 1] else prev[j - 1] + 1
            up = prev[j] + 1
            if up < best:
                best = up
            if left + 1 < best:
                best = left + 1
            cur.append(best)
            left = best
        table.append(cur)
        prev = cur

    ops = []
    i, j = n, m
    while i and j:
        d = table[i][j]
        same = ref[i - 1] == hyp[j - 1]
        if d == table[i - 1][j - 1] + (not same):
            ops.append(Op.MATCH if same else Op.SUB)
            i -= 1
            j -= 1
        elif d == table[i - 1][j] + 1:
            ops.append(Op.DEL)
            i -= 1
        else:
            ops.append(Op.INS)
            j -= 1
    ops.extend([Op.DEL] * i)
    ops.extend([Op.INS] * j)
    ops.reverse()
    return ops


@dataclass(frozen=True)
class WerReport:
    substitutions: int
    deletions: int
    insertions: int
    ref_len: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def wer(self) -> float:
        return self.errors / self.ref_len if self.ref_len else 0.0

    def __str__(self):
        return (f"WER {self.wer:.6f} S {self.substitutions} D {self.deletions} "
                f"I {self.insertions} N {self.ref_len}")


def wer(ref: Sequence[str], hyp: Sequence[str]) -> WerReport:
    if not ref:
        if hyp:
            raise UndefinedWer("reference is empty, WER is undefined")
        return WerReport(0, 0, 0, 0)
    ops = align(ref, hyp)
    return WerReport(ops.count(Op.SUB), ops.count(Op.DEL), ops.count(Op.INS), len(ref))


# -- benchmark ------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    audio: Path
    reference: str
    domain: str
    format: str


@dataclass
class BenchManifest:
    entries: list

    def __len__(self):
        return len(self.entries)


def read_manifest(path) -> BenchManifest:
    """CSV with header ``audio,reference,domain,format``; audio paths resolve against the manifest."""
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = {"audio", "reference", "domain", "format"} - set(header)
            if missing:
                raise ManifestError(f"{path}: missing columns {sorted(missing)}")
            entries = []
            for n, row in enumerate(reader, 2):
                audio = (row["audio"] or "").strip()
                if not audio:
                    raise ManifestError(f"{path}:{n}: empty audio path")
                domain = (row["domain"] or "").strip()
                if domain not in DOMAINS:
                    raise ManifestError(f"{path}:{n}: domain {domain!r} not in {DOMAINS}")
                fmt = (row["format"] or "").strip().upper()
                p = Path(audio)
                entries.append(ManifestEntry(p if p.is_absolute() else path.parent / p,
                                             row["reference"] or "", domain, fmt))
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    except (csv.Error, UnicodeDecodeError) as exc:
        raise ManifestError(f"{path}: {exc}") from exc
    return BenchManifest(entries)


@dataclass
class DomainReport:
    models: list
    domain_wer: dict                       # (domain, model_id) -> mean WER
    accuracy: dict                          # model_id -> per-entry accuracy (nan on failure)
    wer_by_entry: dict                      # model_id -> per-entry WerReport or None
    format_histogram: dict
    errors: list = field(default_factory=list)  # (index, model_id, audio, message)


def _detect_file(path: Path) -> str:
    try:
        with open(path, "rb") as fh:
            head = fh.read(12)
        return detect_format(head).container.value
    except Exception:
        return Container.UNKNOWN.value


def _score(entry: ManifestEntry, fn: Callable) -> WerReport:
    hyp = fn(entry.audio)
    return wer(normalize_tokens(entry.reference), normalize_tokens(hyp))


def bench_run(manifest: BenchManifest, pipelines: Mapping[str, Callable],
              workers: int = 1) -> DomainReport:
    """Transcribe every entry with every pipeline and aggregate WER.

    A failing (entry, pipeline) pair is recorded in ``errors`` and leaves a
    NaN in the accuracy series; other pairs are unaffected. Results are
    gathered by manifest index before any reduction, so the report does not
    depend on evaluation order or ``workers``.
    """
    if not pipelines:
        raise ValueError("bench_run needs at least one pipeline")
    models = list(pipelines)
    jobs = [(i, mid) for mid in models for i in range(len(manifest.entries))]

    def run(job):
        i, mid = job
        try:
            return job, _score(manifest.entries[i], pipelines[mid]), None
        except Exception as exc:  # isolate per-entry failures
            return job, None, f"{type(exc).__name__}: {exc}".replace("\n", " ")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    by_job = {job: (rep, err) for job, rep, err in results}

    n = len(manifest.entries)
    wer_by_entry = {mid: [by_job[(i, mid)][0] for i in range(n)] for mid in models}
    accuracy = {
        mid: [1.0 - r.wer if r is not None else math.nan for r in wer_by_entry[mid]]
        for mid in models
    }
    errors = [
        (i, mid, str(manifest.entries[i].audio), by_job[(i, mid)][1])
        for i in range(n) for mid in models if by_job[(i, mid)][1] is not None
    ]
    domain_wer = {}
    for dom in DOMAINS:
        for mid in models:
            vals = [wer_by_entry[mid][i].wer for i in range(n)
                    if manifest.entries[i].domain == dom and wer_by_entry[mid][i] is not None]
            domain_wer[(dom, mid)] = sum(vals) / len(vals) if vals else math.nan

    hist = {f: 0 for f in FORMATS}
    for e in manifest.entries:
        c = _detect_file(e.audio)
        hist[c] = hist.get(c, 0) + 1
    return DomainReport(models, domain_wer, accuracy, wer_by_entry, hist, errors)


def mean_wer(report: DomainReport, model_id: str) -> float:
    vals = [r.wer for r in report.wer_by_entry[model_id] if r is not None]
    return sum(vals) / len(vals) if vals else math.nan


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else f"{v:.6f}"


def write_report(report: DomainReport, out_dir) -> dict:
    """Write domain_wer.csv, accuracy_trend.csv, format_histogram.csv and errors.csv."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = {name: out / f"{name}.csv" for name in
                 ("domain_wer", "accuracy_trend", "format_histogram", "errors")}
        with open(paths["domain_wer"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["domain", *report.models])
            for dom in DOMAINS:
                w.writerow([dom, *(_fmt(report.domain_wer[(dom, m)]) for m in report.models)])
        with open(paths["accuracy_trend"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample_index", "model_id", "accuracy"])
            for mid in report.models:
                for i, acc in enumerate(report.accuracy[mid]):
                    w.writerow([i, mid, _fmt(acc)])
        with open(paths["format_histogram"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["format", "count"])
            for fmt, count in report.format_histogram.items():
                if fmt in FORMATS or count:
                    w.writerow([fmt, count])
        with open(paths["errors"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample_index", "model_id", "audio", "error"])
            w.writerows(report.errors)
    except OSError as exc:
        raise OutputError(f"cannot write report to {out}: {exc}") from exc
    return paths
