"""Corpus BLEU, self-BLEU and iBLEU over pre-tokenized sequences.

BLEU here is the corpus-level geometric mean of modified n-gram precisions
times a brevity penalty, on a 0-100 scale. Orders n >= 2 whose matched count
is zero get add-one smoothing on numerator and denominator. Unigram precision
is never smoothed, so a corpus with no shared token scores 0.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

from .errors import ValidationError

DEFAULT_ALPHA = 0.7
IDENTITY_TOL = 1e-9

Sentence = Union[str, Sequence[str]]


def tokenize(sentence: Sentence) -> tuple:
    """Whitespace split for strings; token sequences pass through."""
    if isinstance(sentence, str):
        return tuple(sentence.split())
    return tuple(str(t) for t in sentence)


def label_tokens(label: str) -> tuple:
    """Render a world label as a sentence: ``he_school`` -> ``("he", "school")``."""
    return tuple(t for t in str(label).split("_") if t)


def _corpus(seqs, what):
    out = [tokenize(s) for s in seqs]
    if not out:
        raise ValidationError(f"{what}: empty corpus")
    for i, s in enumerate(out):
        if not s:
            raise ValidationError(f"{what}: sequence {i} is empty")
    return out


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def ngram_stats(candidates, references, max_n: int = 4):
    """Clipped match and total counts per order, plus candidate and reference lengths."""
    matched = [0] * max_n
    total = [0] * max_n
    cand_len = ref_len = 0
    for c, r in zip(candidates, references):
        cand_len += len(c)
        ref_len += len(r)
        for n in range(1, max_n + 1):
            cn, rn = _ngrams(c, n), _ngrams(r, n)
            matched[n - 1] += sum(min(k, rn[g]) for g, k in cn.items())
            total[n - 1] += max(len(c) - n + 1, 0)
    return matched, total, cand_len, ref_len


def bleu(candidates, references, max_n: int = 4) -> float:
    """Corpus BLEU in [0, 100]."""
    cands = _corpus(candidates, "candidates")
    refs = _corpus(references, "references")
    if len(cands) != len(refs):
        raise ValidationError(f"{len(cands)} candidates but {len(refs)} references")
    if max_n < 1:
        raise ValidationError("max_n must be >= 1")
    matched, total, cand_len, ref_len = ngram_stats(cands, refs, max_n)
    log_p = 0.0
    for n in range(max_n):
        m, t = matched[n], total[n]
        if n >= 1 and m == 0:
            m, t = m + 1, t + 1
        if m == 0:
            return 0.0
        log_p += math.log(m / t)
    bp = math.exp(min(0.0, 1.0 - ref_len / cand_len))
    return min(100.0, 100.0 * bp * math.exp(log_p / max_n))


def self_bleu(candidates, sources, max_n: int = 4) -> float:
    """BLEU of the candidates against their own sources."""
    return bleu(candidates, sources, max_n)


def ibleu_score(bleu_value: float, self_bleu_value: float, alpha: float = DEFAULT_ALPHA) -> float:
    _check_alpha(alpha)
    return alpha * bleu_value - (1.0 - alpha) * self_bleu_value


def _check_alpha(alpha):
    if not (isinstance(alpha, (int, float)) and 0.0 <= alpha <= 1.0):
        raise ValidationError(f"alpha must be in [0, 1], got {alpha!r}")


@dataclass(frozen=True)
class ScoredCorpus:
    """Aligned sources, candidate paraphrases and reference paraphrases."""

    sources: tuple
    candidates: tuple
    references: tuple

    def __post_init__(self):
        src = _corpus(self.sources, "sources")
        cand = _corpus(self.candidates, "candidates")
        ref = _corpus(self.references, "references")
        if not len(src) == len(cand) == len(ref):
            raise ValidationError(
                f"corpus lengths differ: {len(src)} sources, {len(cand)} candidates, "
                f"{len(ref)} references"
            )
        object.__setattr__(self, "sources", tuple(src))
        object.__setattr__(self, "candidates", tuple(cand))
        object.__setattr__(self, "references", tuple(ref))

    def __len__(self):
        return len(self.sources)


@dataclass(frozen=True)
class MetricReport:
    bleu: float
    self_bleu: float
    ibleu: float
    alpha: float

    def __post_init__(self):
        expected = self.alpha * self.bleu - (1.0 - self.alpha) * self.self_bleu
        if abs(self.ibleu - expected) > IDENTITY_TOL:
            raise ValidationError("ibleu does not match alpha*bleu - (1-alpha)*self_bleu")

    def to_dict(self):
        return {"bleu": self.bleu, "self_bleu": self.self_bleu, "ibleu": self.ibleu,
                "alpha": self.alpha}


def ibleu(corpus: ScoredCorpus, alpha: float = DEFAULT_ALPHA, max_n: int = 4) -> MetricReport:
    """BLEU against references, self-BLEU against sources, and their mix."""
    _check_alpha(alpha)
    b = bleu(corpus.candidates, corpus.references, max_n)
    s = self_bleu(corpus.candidates, corpus.sources, max_n)
    return MetricReport(b, s, ibleu_score(b, s, alpha), alpha)


def read_corpus(path) -> list:
    """One whitespace-tokenized sequence per line of a UTF-8 file.

    A single trailing newline is allowed; blank lines anywhere else are errors.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    out = []
    for i, line in enumerate(lines, 1):
        toks = tuple(line.split())
        if not toks:
            raise ValidationError(f"{path}:{i}: empty line")
        out.append(toks)
    if not out:
        raise ValidationError(f"{path}: empty corpus")
    return out


def write_corpus(path, seqs) -> None:
    Path(path).write_text("".join(" ".join(tokenize(s)) + "\n" for s in seqs), encoding="utf-8")
