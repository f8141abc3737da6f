"""Fixture builders and independent oracles shared by the test modules."""
from __future__ import annotations

import itertools
import sys
import textwrap
from pathlib import Path

import numpy as np

from offline_stt import synth
from offline_stt.audio_ingest import AudioClip, encode_wav
from offline_stt.recognizer import enroll

SELF_VOCAB = ["alpha", "bravo", "charlie", "delta", "echo"]

# Homophone pairs share one pronunciation, so their templates are identical.
# The off-domain spelling is listed first: with equal acoustic scores the
# recognizer keeps vocabulary order and picks it.
AMBIGUOUS_PRON = {
    "right": "rait", "write": "rait",
    "male": "meil", "mail": "meil",
    "sand": "sand", "send": "sand",
    "the": "tha", "report": "ripourt", "today": "toodei", "please": "pliiz", "file": "faail",
}
AMBIGUOUS_VOCAB = list(AMBIGUOUS_PRON)
OFFICE_CORPUS = [
    "please write the report today",
    "send the mail today",
    "please send the file",
    "write the mail",
    "send the report",
    "please write the file today",
    "send the mail",
    "write the report",
    "the mail today",
    "please send the report today",
]
AMBIGUOUS_UTTERANCES = [
    ["send", "the", "mail"],
    ["write", "the", "report"],
    ["please", "send", "the", "file"],
    ["write", "the", "mail", "today"],
    ["send", "the", "report", "today"],
    ["please", "write", "the", "file"],
    ["the", "mail", "today"],
    ["send", "the", "file"],
    ["please", "write", "the", "report"],
    ["send", "mail", "today"],
    ["write", "the", "file", "today"],
    ["please", "send", "the", "mail"],
]


def self_model():
    return synth.demo_model(SELF_VOCAB, model_id="selftest")


def ambiguity_model():
    recs = {w: synth.recording(AMBIGUOUS_PRON[w]) for w in AMBIGUOUS_VOCAB}
    return enroll(recs, "office-acoustic")


def ambiguity_audio(words) -> np.ndarray:
    return synth.utterance([AMBIGUOUS_PRON[w] for w in words])


def wav_bytes(samples, rate=16000, **kw) -> bytes:
    return encode_wav(AudioClip(samples, rate), **kw)


def write_stub_decoder(directory: Path) -> str:
    """A decoder that copies the WAV embedded after a fake container header.

    Fixture "compressed" files are a real magic-byte prefix followed by a
    complete WAV; the stub finds the RIFF header and writes it out. A file
    containing ``FAIL`` makes it exit 1 with a message on stderr.
    """
    script = directory / "stub_decoder.py"
    script.write_text(textwrap.dedent("""\
        import sys
        src, dst = sys.argv[1], sys.argv[2]
        data = open(src, "rb").read()
        if b"FAIL" in data[:64]:
            sys.stderr.write("stub decoder: corrupt stream\\n")
            sys.exit(1)
        k = data.find(b"RIFF")
        if k < 0:
            sys.stderr.write("stub decoder: no payload\\n")
            sys.exit(2)
        open(dst, "wb").write(data[k:])
    """))
    return f"{sys.executable} {script} {{in}} {{out}}"


CONTAINER_PREFIX = {
    "MP3": b"ID3\x04\x00\x00\x00\x00\x00\x00\x00\x00",
    "FLAC": b"fLaC\x00\x00\x00\x22" + b"\x00" * 4,
    "OGG": b"OggS\x00\x02" + b"\x00" * 6,
}


def fake_compressed(fmt: str, wav: bytes) -> bytes:
    return CONTAINER_PREFIX[fmt] + wav


# -- oracles ---------------------------------------------------------------

def direct_dft_magnitude(x: np.ndarray, k: int) -> float:
    """|X[k]| by the defining sum, independent of any FFT routine."""
    n = np.arange(len(x))
    return float(abs(np.sum(x * np.exp(-2j * np.pi * k * n / len(x)))))


def all_sequences(alphabet, max_len):
    for n in range(max_len + 1):
        yield from itertools.product(alphabet, repeat=n)


def edit_distance_graph_oracle(alphabet="abc", max_len=6):
    """All-pairs edit distance by breadth-first search over single-edit moves.

    Nodes are every string of length <= max_len; edges are one substitution,
    deletion or insertion. Some optimal edit script never passes through a
    string longer than both endpoints, so the truncated graph is exact.
    Distances are computed by repeated boolean matrix products (BFS layers).
    Returns (sequences, index, distance_matrix).
    """
    seqs = list(all_sequences(alphabet, max_len))
    index = {s: i for i, s in enumerate(seqs)}
    n = len(seqs)
    adj = np.zeros((n, n), dtype=np.float32)
    for s, i in index.items():
        for p in range(len(s)):
            adj[i, index[s[:p] + s[p + 1:]]] = 1                      # deletion
            for c in alphabet:
                if c != s[p]:
                    adj[i, index[s[:p] + (c,) + s[p + 1:]]] = 1       # substitution
        if len(s) < max_len:
            for p in range(len(s) + 1):
                for c in alphabet:
                    adj[i, index[s[:p] + (c,) + s[p:]]] = 1           # insertion
    dist = np.full((n, n), -1, dtype=np.int16)
    reached = np.eye(n, dtype=np.float32)
    np.fill_diagonal(dist, 0)
    for step in range(1, 2 * max_len + 1):
        reached = ((reached @ adj) > 0).astype(np.float32) + reached
        reached = (reached > 0).astype(np.float32)
        new = (reached > 0) & (dist < 0)
        dist[new] = step
        if not (dist < 0).any():
            break
    return seqs, index, dist


def brute_force_alignments(ref, hyp):
    """Minimum edits over every alignment, by exhaustive recursion without memoization."""
    if not ref:
        return len(hyp)
    if not hyp:
        return len(ref)
    return min(
        brute_force_alignments(ref[1:], hyp[1:]) + (ref[0] != hyp[0]),
        brute_force_alignments(ref[1:], hyp) + 1,
        brute_force_alignments(ref, hyp[1:]) + 1,
    )
