from __future__ import annotations

import math
from datetime import date, timedelta
from pathlib import Path

import numpy as np
import pytest

DATA = Path(__file__).parent / "data"

# rough English letter frequencies (percent)
ENGLISH = dict(zip(
    "etaoinshrdlcumwfgypbvkjxqz",
    (12.7, 9.1, 8.2, 7.5, 7.0, 6.7, 6.3, 6.1, 6.0, 4.3, 4.0, 2.8, 2.8, 2.4, 2.4, 2.2,
     2.0, 2.0, 1.9, 1.5, 1.0, 0.8, 0.15, 0.15, 0.1, 0.07)))
HEADER = ("Date,Contest number,Word,Number of reported results,Number in hard mode,"
          "1 try,2 tries,3 tries,4 tries,5 tries,6 tries,7 or more tries (X)")


@pytest.fixture
def anomaly_file() -> Path:
    return DATA / "anomalies.csv"


def simulate_arma(n, ar=(), ma=(), seed=0, burn=200, const=0.0):
    """Plain-loop ARMA simulator used as an independent data source."""
    rng = np.random.default_rng(seed)
    e = rng.normal(size=n + burn)
    x = np.zeros(n + burn)
    for t in range(n + burn):
        v = const + e[t]
        for j, a in enumerate(ar, start=1):
            if t - j >= 0:
                v += a * x[t - j]
        for j, b in enumerate(ma, start=1):
            if t - j >= 0:
                v += b * e[t - j]
        x[t] = v
    return x[burn:]


def _distribution(mean_tries, rng):
    edges = np.arange(1, 8)
    w = np.exp(-0.5 * ((edges - mean_tries) / 1.1) ** 2)
    w = w / w.sum() * 100
    w = np.round(w + rng.normal(0, 0.4, 7)).clip(0)
    return [int(v) for v in w]


def write_synthetic_dataset(folder: Path, n: int = 120, seed: int = 0) -> dict:
    """Results file, letter table and word table with attribute-driven difficulty."""
    rng = np.random.default_rng(seed)
    folder.mkdir(parents=True, exist_ok=True)
    letters = "".join(ENGLISH)
    probs = np.array(list(ENGLISH.values()))
    probs = probs / probs.sum()
    words = set()
    while len(words) < n:
        words.add("".join(rng.choice(list(letters), size=5, p=probs)))
    words = sorted(words)
    rng.shuffle(words)
    freq = {w: float(math.exp(rng.normal(-12, 1.5))) for w in words}

    start = date(2022, 12, 31) - timedelta(days=n - 1)
    noise = np.zeros(n)
    eps = rng.normal(0, 400, n)
    for t in range(1, n):
        noise[t] = noise[t - 1] + eps[t] + 0.4 * eps[t - 1]
    lines = [HEADER]
    for i, w in enumerate(words):
        wie = sum(-ENGLISH[c] / 100 * math.log2(ENGLISH[c] / 100) for c in w)
        nre = sum(m for m in (w.count(c) for c in set(w)) if m >= 2)
        mean = 4.0 + 0.9 * (wie - 1.3) + 0.25 * nre - 0.15 * (math.log(freq[w]) + 12)
        dist = _distribution(mean, rng)
        reported = int(25000 + 8000 * math.exp(-i / 25) + noise[i])
        hard = int(reported * 0.08)
        d = start + timedelta(days=i)
        lines.append(f"{d.isoformat()},{300 + i},{w},{reported},{hard},"
                     + ",".join(str(v) for v in dist))
    (folder / "results.csv").write_text("\n".join(lines) + "\n")
    (folder / "letters.txt").write_text(
        "letter,probability\n" + "".join(f"{c},{float(p)!r}\n" for c, p in zip(letters, probs)))
    (folder / "words.txt").write_text(
        "word\tfrequency\n" + "".join(f"{w}\t{freq[w]!r}\n" for w in sorted(words)))
    return {"results": folder / "results.csv", "letters": folder / "letters.txt",
            "words": folder / "words.txt", "words_list": words}


@pytest.fixture(scope="session")
def synthetic(tmp_path_factory):
    return write_synthetic_dataset(tmp_path_factory.mktemp("synthetic"))
