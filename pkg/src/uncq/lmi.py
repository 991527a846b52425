"""Local mutual information between extracted words and prediction labels."""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

import numpy as np

from .attribution import ExplanationDigest
from .classifier import Prediction
from .corpus import Vocabulary

GROUPS = ("important", "uncertain")


@dataclass
class FeatureTally:
    group: str
    basis: str = "predicted"
    counts: Counter = field(default_factory=Counter)  # (token, label) -> occurrences

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def token_count(self, token: str) -> int:
        return sum(c for (t, _), c in self.counts.items() if t == token)

    def label_count(self, label: int) -> int:
        return sum(c for (_, y), c in self.counts.items() if y == label)

    def merge(self, other: "FeatureTally") -> "FeatureTally":
        if (self.group, self.basis) != (other.group, other.basis):
            raise ValueError("cannot merge tallies of different groups or label bases")
        return FeatureTally(self.group, self.basis, self.counts + other.counts)


def tally_features(
    digests: Iterable[tuple[ExplanationDigest, Union[Prediction, int]]],
    group: str = "important",
    top_n: int = 5,
    basis: str = "predicted",
) -> FeatureTally:
    """Count the first ``top_n`` words of ``group`` in each digest against its label.

    Each pair carries a :class:`Prediction` or a plain class index; pass gold
    labels as integers for ``basis="gold"``.
    """
    if group not in GROUPS:
        raise ValueError(f"group must be one of {GROUPS}")
    tally = FeatureTally(group, basis)
    for digest, label in digests:
        y = label.predicted_class if isinstance(label, Prediction) else int(label)
        for entry in getattr(digest, group)[:top_n]:
            tally.counts[(entry.token, y)] += 1
    return tally


def raw_lmi(tally: FeatureTally) -> dict[tuple[str, int], float]:
    """``p(e, y) * ln(p(y|e) / p(y))`` for every observed (feature, label) pair."""
    total = tally.total
    if total == 0:
        raise ValueError("LMI is undefined for an empty tally")
    per_token: Counter = Counter()
    per_label: Counter = Counter()
    for (t, y), c in tally.counts.items():
        per_token[t] += c
        per_label[y] += c
    out = {}
    for (t, y), c in tally.counts.items():
        if c == 0:
            continue
        p_ey = c / total
        p_y_given_e = c / per_token[t]
        p_y = per_label[y] / total
        out[(t, y)] = p_ey * math.log(p_y_given_e / p_y)
    return out


@dataclass
class LmiDistribution:
    """Normalized LMI over a (vocabulary token, class) grid."""

    vocabulary: Vocabulary
    n_classes: int
    values: np.ndarray  # (V, C)
    group: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return not np.any(self.values > 0)

    def value(self, token: str, label: int) -> float:
        i = self.vocabulary.get(token)
        return 0.0 if i is None else float(self.values[i, label])

    def to_csv(self, label_names: Optional[list[str]] = None, include_zero: bool = False) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["group", "token", "label", "p_lmi", "frequency_rank"])
        write_rows(writer, self, label_names, include_zero)
        return buf.getvalue()


def write_rows(writer, dist: LmiDistribution, label_names=None, include_zero=False) -> None:
    for i, token in enumerate(dist.vocabulary.tokens):
        for y in range(dist.n_classes):
            v = float(dist.values[i, y])
            if v > 0 or include_zero:
                label = label_names[y] if label_names else y
                # ids are assigned by descending frequency, so rank = id + 1
                writer.writerow([dist.group, token, label, repr(v), i + 1])


def compute_lmi(tally: FeatureTally, vocabulary: Vocabulary, n_classes: Optional[int] = None) -> LmiDistribution:
    """Clamp negative raw LMI to zero and normalize over the vocabulary grid.

    Features outside ``vocabulary`` are dropped and counted in ``meta``.
    """
    raw = raw_lmi(tally)
    C = n_classes if n_classes is not None else max(y for _, y in raw) + 1
    values = np.zeros((len(vocabulary), C))
    dropped = 0
    for (t, y), v in raw.items():
        i = vocabulary.get(t)
        if i is None:
            dropped += 1
            continue
        values[i, y] = max(v, 0.0)
    s = values.sum()
    if s > 0:
        values /= s
    meta = {"negative_lmi": "clamped to 0", "log": "natural", "basis": tally.basis, "dropped_oov_pairs": dropped}
    return LmiDistribution(vocabulary, C, values, tally.group, meta)


def top_tokens(dist: LmiDistribution, label: int, n: int = 10) -> list[str]:
    """The ``n`` tokens with the largest positive value for ``label``; ties by vocabulary id."""
    col = dist.values[:, label]
    order = sorted(np.flatnonzero(col > 0), key=lambda i: (-col[i], i))
    return [dist.vocabulary.tokens[i] for i in order[:n]]
