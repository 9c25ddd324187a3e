"""Word attributes (FREQ, WIE, NRE) and their relation to try distributions."""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .ingest import TRY_FIELDS, TryDistribution

SERIES_NAMES = ("FREQ", "WIE", "NRE", *TRY_FIELDS)

_FIVE = re.compile(r"^[a-z]{5}$")


@dataclass(frozen=True)
class LetterProbabilityTable:
    prob: Mapping[str, float]

    def __post_init__(self):
        if not self.prob:
            raise ValueError("empty letter table")
        if any(p <= 0 for p in self.prob.values()):
            raise ValueError("letter probabilities must be positive")
        total = math.fsum(self.prob.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"letter probabilities sum to {total}, not 1")

    @classmethod
    def uniform(cls, letters: str = "abcdefghijklmnopqrstuvwxyz") -> "LetterProbabilityTable":
        return cls({c: 1.0 / len(letters) for c in letters})


@dataclass(frozen=True)
class WordFrequencyTable:
    freq: Mapping[str, float]

    def __post_init__(self):
        if any(f < 0 for f in self.freq.values()):
            raise ValueError("word frequencies must be non-negative")


@dataclass(frozen=True)
class WordAttributes:
    freq: float
    wie: float
    nre: int
    freq_found: bool = True

    def as_vector(self) -> tuple[float, float, float]:
        return (self.freq, self.wie, float(self.nre))


class FreqLookup(NamedTuple):
    value: float
    found: bool


def _read_pairs(path: str | Path) -> list[tuple[str, float]]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"table file not found: {path}")
    pairs = []
    first = True
    for lineno, line in enumerate(path.read_text(encoding="utf-8-sig").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        header, first = first, False
        parts = re.split(r"[,\t;\s]+", line)
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected two columns")
        try:
            pairs.append((parts[0].lower(), float(parts[1])))
        except ValueError:
            if header:
                continue
            raise ValueError(f"{path}:{lineno}: bad number {parts[1]!r}") from None
    return pairs


def load_letter_table(path: str | Path, normalize: bool = False) -> LetterProbabilityTable:
    """Read a (letter, probability) file. With `normalize`, raw counts are accepted."""
    pairs = dict(_read_pairs(path))
    if normalize:
        total = math.fsum(pairs.values())
        pairs = {k: v / total for k, v in pairs.items()}
    return LetterProbabilityTable(pairs)


def load_word_table(path: str | Path) -> WordFrequencyTable:
    return WordFrequencyTable(dict(_read_pairs(path)))


def _check_word(word: str) -> None:
    if not _FIVE.match(word):
        raise ValueError(f"malformed word {word!r}: need 5 lowercase letters")


def compute_freq(word: str, table: WordFrequencyTable) -> FreqLookup:
    _check_word(word)
    if word in table.freq:
        return FreqLookup(float(table.freq[word]), True)
    return FreqLookup(0.0, False)


def compute_wie(word: str, table: LetterProbabilityTable) -> float:
    """Sum of -p*log2(p) over the word's letter positions, in bits."""
    total = 0.0
    for ch in word:
        if ch not in table.prob:
            raise KeyError(f"letter {ch!r} missing from letter table")
        p = table.prob[ch]
        total -= p * math.log2(p)
    return total


def compute_nre(word: str) -> int:
    """Number of letter tokens belonging to letters that occur at least twice."""
    return sum(m for m in Counter(word).values() if m >= 2)


def word_attributes(word: str, letters: LetterProbabilityTable,
                    words: WordFrequencyTable) -> WordAttributes:
    freq, found = compute_freq(word, words)
    return WordAttributes(freq=freq, wie=compute_wie(word, letters), nre=compute_nre(word),
                          freq_found=found)


def _series_matrix(attributes: Sequence[WordAttributes],
                   tries: Sequence[TryDistribution]) -> np.ndarray:
    if len(attributes) != len(tries) or not attributes:
        raise ValueError("attributes and tries must be aligned and non-empty")
    return np.array([[*a.as_vector(), *t.as_tuple()] for a, t in zip(attributes, tries)],
                    dtype=float)


def minmax(x: np.ndarray) -> np.ndarray:
    lo, hi = x.min(axis=0), x.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return (x - lo) / span


def correlation_matrix(attributes: Sequence[WordAttributes],
                       tries: Sequence[TryDistribution]) -> np.ndarray:
    """10x10 Pearson matrix over FREQ, WIE, NRE, p1..p6, px.

    Series are min-max scaled first. Entries involving a constant series
    are NaN (undefined), never 0.
    """
    x = minmax(_series_matrix(attributes, tries))
    dev = x - x.mean(axis=0)
    ss = np.sqrt((dev ** 2).sum(axis=0))
    k = x.shape[1]
    out = np.full((k, k), np.nan)
    for i in range(k):
        for j in range(i, k):
            if ss[i] == 0 or ss[j] == 0:
                continue
            r = 1.0 if i == j else float(np.clip(dev[:, i] @ dev[:, j] / (ss[i] * ss[j]), -1, 1))
            out[i, j] = out[j, i] = r
    return out


def _mean_distribution(group: list[TryDistribution]) -> TryDistribution:
    m = np.mean([t.as_tuple() for t in group], axis=0)
    return TryDistribution(*m).normalized()


def high_low_split(values: Sequence[float],
                   tries: Sequence[TryDistribution]) -> tuple[TryDistribution, TryDistribution]:
    """Mean try distribution above vs at-or-below the attribute median."""
    if len(values) != len(tries) or len(values) < 2:
        raise ValueError("need at least 2 aligned rows")
    cut = float(np.median(values))
    high = [t for v, t in zip(values, tries) if v > cut]
    low = [t for v, t in zip(values, tries) if v <= cut]
    if not high or not low:
        raise ValueError("split undefined: attribute values do not straddle the median")
    return _mean_distribution(high), _mean_distribution(low)
