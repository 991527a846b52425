"""Synthetic sentiment corpora for tests, demos and desk-scale experiments."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .corpus import Corpus, LabelSpace, TokenizedExample

POSITIVE = ("good", "great", "excellent", "superb", "fun", "lovely", "brilliant", "charming", "solid", "moving")
NEGATIVE = ("bad", "awful", "boring", "dull", "weak", "messy", "tedious", "bland", "clumsy", "poor")
NEUTRAL = (
    "the", "a", "movie", "film", "plot", "actor", "scene", "story", "it", "was",
    "and", "but", "with", "director", "ending", "cast", "of", "this", "music", "script",
)


def mixed_polarity_corpus(
    n: int = 2000,
    seed: int = 0,
    length: tuple[int, int] = (8, 16),
    label_noise: float = 0.1,
    markers: bool = False,
) -> Corpus:
    """Two-class corpus where every document mixes words of both polarities.

    The label follows the majority polarity, flipped with probability
    ``label_noise``. With ``markers`` each document also carries a
    label-exclusive token (``zzpos`` or ``zzneg``) and no label noise.
    """
    rng = np.random.default_rng(seed)
    names = ("pos", "neg")
    examples = []
    for k in range(n):
        y = int(rng.integers(2))
        L = int(rng.integers(length[0], length[1] + 1))
        n_major = int(rng.integers(2, 5))
        n_minor = int(rng.integers(1, n_major))
        major, minor = (POSITIVE, NEGATIVE) if y == 0 else (NEGATIVE, POSITIVE)
        words = list(rng.choice(major, n_major)) + list(rng.choice(minor, n_minor))
        words += list(rng.choice(NEUTRAL, max(0, L - len(words))))
        if markers:
            words.append("zzpos" if y == 0 else "zzneg")
        elif rng.random() < label_noise:
            y = 1 - y
        words = [str(w) for w in rng.permutation(words)]
        examples.append(TokenizedExample(f"s{k:05d}", words, y))
    return Corpus(LabelSpace(names), examples)


def write_jsonl(corpus: Corpus, path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for ex in corpus:
            rec = {"id": ex.id, "text": " ".join(ex.tokens), "label": corpus.label_space.names[ex.gold_label]}
            fh.write(json.dumps(rec) + "\n")
    return path
