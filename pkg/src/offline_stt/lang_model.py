"""Interpolated n-gram language model and n-best rescoring."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InvalidCorpus, InvalidParameter

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
SPECIALS = (UNK, BOS, EOS)


@dataclass
class NGramModel:
    order: int
    counts: dict
    vocabulary: frozenset
    interpolation_weights: tuple = None
    model_id: str = "lm"
    # history k-gram -> total count of its continuations, per order
    _context_totals: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.order < 1:
            raise InvalidParameter("n-gram order must be at least 1")
        if self.interpolation_weights is None:
            self.interpolation_weights = tuple([1.0 / self.order] * self.order)
        w = tuple(float(x) for x in self.interpolation_weights)
        if len(w) != self.order or any(x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-12:
            raise InvalidParameter(f"need {self.order} non-negative weights summing to 1, got {w}")
        self.interpolation_weights = w
        totals = Counter()
        for gram, c in self.counts.items():
            totals[gram[:-1]] += c
        self._context_totals = dict(totals)

    def with_weights(self, weights) -> "NGramModel":
        return NGramModel(self.order, self.counts, self.vocabulary, tuple(weights), self.model_id)

    def map_token(self, tok: str) -> str:
        return tok if tok in self.vocabulary else UNK

    def prob(self, token: str, history: Sequence[str]) -> float:
        """Interpolated probability of ``token`` after ``history`` (oldest first)."""
        token = self.map_token(token)
        history = tuple(self.map_token(t) for t in history)
        p = 0.0
        for k in range(1, self.order + 1):
            lam = self.interpolation_weights[k - 1]
            if lam == 0.0:
                continue
            ctx = history[len(history) - (k - 1):] if k > 1 else ()
            if len(ctx) != k - 1:
                continue
            total = self._context_totals.get(ctx, 0)
            if total:
                p += lam * self.counts.get(ctx + (token,), 0) / total
        return p


def _pad(sentence: Sequence[str], order: int) -> list:
    return [BOS] * (order - 1) + list(sentence) + [EOS]


def train(corpus: Iterable[Sequence[str]], order: int, min_count: int = 1,
          model_id: str = "lm") -> NGramModel:
    """Count every k-gram (k <= order) ending at a predicted position.

    Predicted positions are the sentence tokens and the closing ``</s>``;
    the ``<s>`` padding only ever appears as history.
    """
    sentences = [list(s) for s in corpus]
    if not sentences or not any(sentences):
        raise InvalidCorpus("corpus is empty")
    if order < 1:
        raise InvalidParameter("n-gram order must be at least 1")
    freq = Counter(t for s in sentences for t in s)
    keep = {t for t, c in freq.items() if c >= min_count and t not in SPECIALS}
    counts = Counter()
    for s in sentences:
        padded = _pad([t if t in keep else UNK for t in s], order)
        for i in range(order - 1, len(padded)):
            for k in range(1, order + 1):
                counts[tuple(padded[i - k + 1:i + 1])] += 1
    # <unk> always keeps some unigram mass so unseen words score finitely
    if counts[(UNK,)] < 1:
        counts[(UNK,)] = 1
    return NGramModel(order, dict(counts), frozenset(keep | set(SPECIALS)), None, model_id)


def logprob(model: NGramModel, tokens: Sequence[str], bos: bool = True, eos: bool = True) -> float:
    """log10 probability of a sentence, scoring the closing ``</s>`` by default."""
    if not tokens:
        raise InvalidParameter("cannot score an empty token sequence")
    history = [BOS] * (model.order - 1) if bos else []
    targets = list(tokens) + ([EOS] if eos else [])
    total = 0.0
    for tok in targets:
        p = model.prob(tok, history[-(model.order - 1):] if model.order > 1 else ())
        if p <= 0.0:
            return -math.inf
        total += math.log10(p)
        history.append(model.map_token(tok))
    return total


def perplexity(model: NGramModel, corpus: Iterable[Sequence[str]]) -> float:
    sentences = [list(s) for s in corpus if s]
    if not sentences:
        raise InvalidCorpus("corpus is empty")
    total = sum(logprob(model, s) for s in sentences)
    n_tokens = sum(len(s) + 1 for s in sentences)
    return 10.0 ** (-total / n_tokens)


@dataclass(frozen=True)
class RescoreConfig:
    lm_weight: float = 1.0
    acoustic_weight: float = 1.0

    def __post_init__(self):
        if self.lm_weight < 0:
            raise InvalidParameter("lm_weight must be non-negative")


@dataclass(frozen=True)
class Rescored:
    tokens: tuple
    acoustic_logscore: float
    lm_logprob: float
    combined: float


def rescore(nbest, model: NGramModel, cfg: RescoreConfig = RescoreConfig()) -> list:
    """Reorder ``(tokens, acoustic_logscore)`` pairs by acoustic + weight * log10 P_lm.

    The sort is stable, so equal combined scores keep their acoustic order.
    """
    out = []
    for tokens, acoustic in nbest:
        tokens = tuple(tokens)
        lm = logprob(model, tokens) if tokens else 0.0
        combined = cfg.acoustic_weight * acoustic + (cfg.lm_weight * lm if cfg.lm_weight else 0.0)
        out.append(Rescored(tokens, float(acoustic), lm, combined))
    return sorted(out, key=lambda r: -r.combined)


# -- serialization ---------------------------------------------------------------

def save(model: NGramModel, path) -> None:
    lines = [f"ngram {model.order} {model.model_id}"]
    for gram, c in sorted(model.counts.items(), key=lambda kv: (len(kv[0]), kv[0])):
        lines.append(f"{c} {' '.join(gram)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load(path) -> NGramModel:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise InvalidParameter(f"{path}: empty language model file")
    head = lines[0].split()
    if len(head) < 2 or head[0] != "ngram":
        raise InvalidParameter(f"{path}: missing 'ngram <order> <model_id>' header")
    order = int(head[1])
    model_id = head[2] if len(head) > 2 else Path(path).stem
    counts, vocab = {}, set(SPECIALS)
    for n, line in enumerate(lines[1:], 2):
        parts = line.split()
        if len(parts) < 2 or len(parts) - 1 > order:
            raise InvalidParameter(f"{path}:{n}: malformed count line")
        gram = tuple(parts[1:])
        counts[gram] = int(parts[0])
        vocab.update(gram)
    return NGramModel(order, counts, frozenset(vocab), None, model_id)


def read_corpus(path) -> list:
    from .evaluation import normalize_tokens

    with open(path, encoding="utf-8") as fh:
        return [toks for toks in (normalize_tokens(line) for line in fh) if toks]
