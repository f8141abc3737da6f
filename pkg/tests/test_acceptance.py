"""End-to-end acceptance criteria, one test per criterion.

Each test records a ``PASS``/``FAIL`` line; the lines are printed as they
happen and repeated in the pytest terminal summary.
"""
import csv
import functools
import io
import random
import time
import xml.etree.ElementTree as ET
import zipfile
from collections import Counter

import numpy as np
import pytest

from helpers import (
    AMBIGUOUS_UTTERANCES,
    OFFICE_CORPUS,
    SELF_VOCAB,
    ambiguity_audio,
    edit_distance_graph_oracle,
    fake_compressed,
    wav_bytes,
)
from offline_stt import synth
from offline_stt.audio_ingest import AudioClip, Container, detect_format, encode_wav
from offline_stt.cli import main
from offline_stt.evaluation import DOMAINS, BenchManifest, ManifestEntry, Op, align, bench_run, wer
from offline_stt.export import W_NS, ExportOptions, to_docx, to_txt
from offline_stt.lang_model import RescoreConfig
from offline_stt.pipeline import PipelineConfig, apply_lm, load_audio, make_transcriber, transcribe_file
from offline_stt.recognizer import SessionConfig, recognize

RESULTS = []


def criterion(number, title):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            try:
                detail = fn(*args, **kwargs) or ""
            except BaseException as exc:
                line = f"ACCEPTANCE {number:>2} FAIL  {title}: {type(exc).__name__}: {exc}".splitlines()[0]
                RESULTS.append(line)
                print(line)
                raise
            line = f"ACCEPTANCE {number:>2} PASS  {title} ({time.perf_counter() - t0:.2f}s) {detail}".rstrip()
            RESULTS.append(line)
            print(line)
        return run
    return wrap


def _words(text):
    return text.split()


@criterion(1, "custom LM lowers WER on ambiguous fixtures")
def test_01_custom_lm_improves_wer(ambiguity_model, office_lm):
    t0 = time.perf_counter()
    without, with_lm = [], []
    for words in AMBIGUOUS_UTTERANCES:
        transcript, _ = recognize(ambiguity_audio(words), ambiguity_model)
        rescored = apply_lm(transcript, office_lm, RescoreConfig(lm_weight=1.0))
        without.append(wer(words, _words(transcript.text)).wer)
        with_lm.append(wer(words, _words(rescored.text)).wer)
    elapsed = time.perf_counter() - t0
    assert len(AMBIGUOUS_UTTERANCES) == 12
    assert np.mean(with_lm) < np.mean(without)
    assert all(b <= a for a, b in zip(without, with_lm))
    assert elapsed < 10
    return f"mean WER {np.mean(without):.3f} -> {np.mean(with_lm):.3f}"


@criterion(2, "DP alignment equals exhaustive edit distance")
def test_02_wer_oracle_equivalence():
    t0 = time.perf_counter()
    seqs, index, dist = edit_distance_graph_oracle("abc", 6)
    mismatches = 0
    for r in seqs:
        row = dist[index[r]]
        for h in seqs:
            edits = sum(op is not Op.MATCH for op in align(r, h))
            if edits != row[index[h]]:
                mismatches += 1
    elapsed = time.perf_counter() - t0
    assert mismatches == 0
    assert elapsed < 60
    return f"{len(seqs) ** 2} pairs, 0 mismatches"


def _streaming_fixtures(tmp_path):
    """Five WAV files at assorted rates and channel counts."""
    specs = [
        (["alpha", "bravo"], 16000, 1, None),
        (["charlie", "delta", "echo"], 44100, 2, None),
        (["echo", "alpha"], 22050, 1, 25),
        (["bravo", "bravo", "delta"], 48000, 2, 30),
        (["delta"], 8000, 1, None),
    ]
    paths = []
    for k, (words, rate, channels, snr) in enumerate(specs):
        x = synth.utterance(words, tail_ms=150)
        if snr is not None:
            x = synth.add_noise(x, snr, seed=k)
        if rate != 16000:
            t_new = np.arange(int(len(x) * rate / 16000)) / rate
            x = np.interp(t_new, np.arange(len(x)) / 16000, x)
        data = np.vstack([x] * channels)
        path = tmp_path / f"stream{k}.wav"
        path.write_bytes(encode_wav(AudioClip(data, rate)))
        paths.append((path, words))
    return paths


@criterion(3, "streaming and batch transcripts identical")
def test_03_streaming_equals_batch(tmp_path, self_model):
    t0 = time.perf_counter()
    for path, words in _streaming_fixtures(tmp_path):
        x = load_audio(path).mono
        results = {}
        for chunk in (1, 160, 4000, None):
            results[chunk], _ = recognize(x, self_model, chunk_samples=chunk)
        batch = results[None]
        assert all(t == batch for t in results.values()), path.name
        assert batch.segments, path.name
    elapsed = time.perf_counter() - t0
    assert elapsed < 30
    return "5 files x chunks {1, 160, 4000, whole}"


def _direct_dft_peak(x):
    n = np.arange(len(x))
    k = np.arange(len(x) // 2 + 1)
    mag = np.abs(np.exp(-2j * np.pi * np.outer(k, n) / len(x)) @ x)
    return int(np.argmax(mag))


@criterion(4, "44.1 kHz stereo normalizes to 16 kHz mono")
def test_04_normalization(tmp_path):
    t0 = time.perf_counter()
    n = 44100
    dc = tmp_path / "dc.wav"
    dc.write_bytes(encode_wav(AudioClip(np.vstack([np.full(n, 0.25), np.full(n, 0.75)]), 44100)))
    clip = load_audio(dc)
    assert (clip.n_channels, clip.sample_rate, clip.n_samples) == (1, 16000, 16000)
    interior = clip.mono[200:-200]
    dc_err = float(np.max(np.abs(interior - 0.5)))
    assert dc_err <= 1e-6

    t = np.arange(n) / 44100
    sine = tmp_path / "sine.wav"
    left = 0.5 * np.sin(2 * np.pi * 1000 * t)
    sine.write_bytes(encode_wav(AudioClip(np.vstack([left, left]), 44100), bits=24))
    y = load_audio(sine).mono
    window = y[4000:4000 + 1600]                       # 10 Hz bins, 1 kHz is bin 100
    peak = _direct_dft_peak(window)
    assert abs(peak - 100) <= 1
    assert time.perf_counter() - t0 < 5
    return f"DC error {dc_err:.1e}, peak bin {peak}"


@criterion(5, "format detection, decoder path and histogram")
def test_05_format_coverage(tmp_path, self_model, stub_decoder):
    words = ["charlie", "alpha"]
    wav = wav_bytes(synth.utterance(words))
    blobs = {"WAV": wav, **{f: fake_compressed(f, wav) for f in ("MP3", "FLAC", "OGG")}}
    for fmt, blob in blobs.items():
        assert detect_format(blob[:64]).container is Container(fmt)

    cfg = PipelineConfig(decoder_cmd=stub_decoder)
    declared = ["WAV", "MP3", "FLAC", "OGG", "MP3", "FLAC", "FLAC", "WAV", "OGG", "MP3"]
    entries = []
    for k, fmt in enumerate(declared):
        path = tmp_path / f"clip{k}.{fmt.lower()}"
        path.write_bytes(blobs[fmt])
        entries.append(ManifestEntry(path, " ".join(words), DOMAINS[k % 4], fmt))
        if k < 4:
            assert transcribe_file(path, cfg, self_model).transcript.text == "charlie alpha"
    report = bench_run(BenchManifest(entries), {"self": make_transcriber(cfg, self_model)})
    assert report.errors == []
    assert report.format_histogram == dict(Counter(declared))
    return str(report.format_histogram)


@criterion(6, "self-recognition clean and at 20 dB SNR")
def test_06_self_recognition(self_model):
    rng = random.Random(6)
    clean, noisy = [], []
    for u in range(3):
        words = [rng.choice(SELF_VOCAB) for _ in range(10)]
        x = synth.utterance(words, gap_ms=200)
        clean.append(wer(words, _words(recognize(x, self_model)[0].text)).wer)
        for seed in range(5):
            y = synth.add_noise(x, 20.0, seed=100 * u + seed)
            noisy.append(wer(words, _words(recognize(y, self_model)[0].text)).wer)
    assert len(self_model.words) == 5
    assert max(clean) == 0.0
    assert max(noisy) <= 0.1
    return f"clean max {max(clean):.2f}, noisy max {max(noisy):.2f} over {len(noisy)} runs"


@criterion(7, "posterior rows sum to one")
def test_07_posterior_rows(self_model, ambiguity_model):
    fixtures = [
        (synth.utterance(SELF_VOCAB), self_model),
        (synth.add_noise(synth.utterance(["echo", "delta"]), 10, seed=3), self_model),
        (np.zeros(8000), self_model),
        (synth.tone(700, 1.0), self_model),
        (ambiguity_audio(AMBIGUOUS_UTTERANCES[0]), ambiguity_model),
    ]
    worst, rows = 0.0, 0
    for x, model in fixtures:
        for temp in (0.1, 1.0, 50.0):
            _, pg = recognize(x, model, SessionConfig(temperature=temp), chunk_samples=4000)
            worst = max(worst, float(np.max(np.abs(pg.frames.sum(axis=1) - 1.0))))
            rows += pg.frames.shape[0]
    assert worst <= 1e-9
    return f"{rows} rows, max deviation {worst:.1e}"


@criterion(8, "DOCX unzips, parses and matches TXT")
def test_08_docx_validity(tmp_path, model_dir, self_model):
    audio = tmp_path / "memo.wav"
    audio.write_bytes(wav_bytes(synth.utterance(["bravo", "echo", "alpha"])))
    outputs = []
    for k in range(2):
        out = tmp_path / f"memo{k}.docx"
        assert main(["transcribe", "--model", str(model_dir), "--input", str(audio), "--output", str(out),
                     "--timestamps", "--title", "Memo"]) == 0
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]
    with zipfile.ZipFile(io.BytesIO(outputs[0])) as zf:
        assert zf.testzip() is None
        parts = {name: ET.fromstring(zf.read(name)) for name in
                 ("[Content_Types].xml", "_rels/.rels", "word/document.xml")}
    w = f"{{{W_NS}}}"
    paras = ["".join(t.text or "" for t in p.iter(w + "t")) for p in parts["word/document.xml"].iter(w + "p")]
    transcript = transcribe_file(audio, PipelineConfig(), self_model).transcript
    assert paras[1:] == to_txt(transcript, ExportOptions(include_timestamps=True)).splitlines()
    assert paras[0] == "Memo"
    assert to_docx(transcript) == to_docx(transcript)
    return f"{len(paras)} paragraphs"


@criterion(9, "ten-sample benchmark with two models")
def test_09_benchmark_shape(tmp_path, model_dir):
    lm_corpus = tmp_path / "corpus.txt"
    lm_corpus.write_text("\n".join(OFFICE_CORPUS + ["alpha bravo charlie", "delta echo"]) + "\n")
    lm = tmp_path / "office.lm"
    assert main(["train-lm", "--corpus", str(lm_corpus), "--out", str(lm)]) == 0
    rng = random.Random(9)
    rows = ["audio,reference,domain,format"]
    for k in range(10):
        words = [rng.choice(SELF_VOCAB) for _ in range(3)]
        (tmp_path / f"s{k}.wav").write_bytes(wav_bytes(synth.utterance(words)))
        rows.append(f"s{k}.wav,{' '.join(words)},{DOMAINS[k % 4]},WAV")
    manifest = tmp_path / "bench.csv"
    manifest.write_text("\n".join(rows) + "\n")
    out = tmp_path / "report"
    assert main(["bench", "--manifest", str(manifest), "--out", str(out), "--model", f"plain={model_dir}",
                 "--model", f"lm={model_dir}", "--lm", str(lm)]) == 0
    trend = list(csv.reader(open(out / "accuracy_trend.csv")))
    assert trend[0] == ["sample_index", "model_id", "accuracy"]
    assert len(trend) - 1 == 20
    table = list(csv.reader(open(out / "domain_wer.csv")))
    assert table[0] == ["domain", "plain", "lm"]
    assert [r[0] for r in table[1:]] == list(DOMAINS)
    return "20 trend rows, 4 domains"


@criterion(10, "edit-op bookkeeping on 1000 random pairs")
def test_10_edit_op_bookkeeping():
    rng = random.Random(10)
    violations = 0
    for _ in range(1000):
        ref = [rng.choice("abcde") for _ in range(rng.randint(0, 12))]
        hyp = [rng.choice("abcde") for _ in range(rng.randint(0, 12))]
        c = Counter(align(ref, hyp))
        if c[Op.MATCH] + c[Op.SUB] + c[Op.DEL] != len(ref) or c[Op.MATCH] + c[Op.SUB] + c[Op.INS] != len(hyp):
            violations += 1
    assert violations == 0
    return "0 violations"


@pytest.fixture(autouse=True, scope="module")
def _clear_results():
    RESULTS.clear()
    yield
