"""Remove-and-remeasure experiments over extracted word groups.

Deleting a digest's uncertain words should raise confidence in the predicted
class; deleting its important words should lower it. Changes are reported
per bin of original confidence.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .attribution import attribute, canonical_method, make_digest, remove_positions
from .classifier import Classifier
from .corpus import Corpus, TokenizedExample


@dataclass(frozen=True)
class ExampleChange:
    example_id: str
    predicted_class: int
    original: float
    post: float
    removed: tuple[int, ...]
    flipped: bool

    @property
    def delta(self) -> float:
        return self.post - self.original


@dataclass
class BinSummary:
    lower: float
    upper: float
    count: int
    mean_orig: Optional[float]
    mean_post: Optional[float]
    mean_delta: Optional[float]


@dataclass
class ConfidenceChangeReport:
    method: str
    group: str
    k: int
    edges: list[float]
    bins: list[BinSummary]
    overall_mean_delta: float
    sample_size: int
    n_without_words: int
    flip_rate: float
    seed: int
    meta: dict = field(default_factory=dict)
    changes: list[ExampleChange] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "group": self.group,
            "k": self.k,
            "edges": list(self.edges),
            "bins": [vars(b) for b in self.bins],
            "overall_mean_delta": self.overall_mean_delta,
            "sample_size": self.sample_size,
            "n_without_words": self.n_without_words,
            "flip_rate": self.flip_rate,
            "seed": self.seed,
            "meta": dict(self.meta),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["lower", "upper", "count", "mean_orig", "mean_post", "mean_delta"])
        for b in self.bins:
            writer.writerow([b.lower, b.upper, b.count, _blank(b.mean_orig), _blank(b.mean_post), _blank(b.mean_delta)])
        return buf.getvalue()


def _blank(value):
    return "" if value is None else repr(value)


def default_edges(n_classes: int, n_bins: int = 5) -> list[float]:
    """``n_bins`` equal-width bins over ``(1/C, 1]``."""
    lo = 1.0 / n_classes
    return [lo + (1.0 - lo) * k / n_bins for k in range(n_bins)] + [1.0]


def assign_bin(confidence: float, edges: Sequence[float]) -> int:
    """Index of the ``(lo, hi]`` bin holding ``confidence``; the first bin is closed below."""
    k = int(np.searchsorted(edges, confidence, side="left")) - 1
    return min(max(k, 0), len(edges) - 2)


def select_examples(corpus: Corpus, sample_size: Optional[int], seed: int) -> list[TokenizedExample]:
    if len(corpus) == 0:
        raise ValueError("evaluation sample is empty")
    n = len(corpus) if sample_size is None else sample_size
    if not 0 < n <= len(corpus):
        raise ValueError(f"sample_size {n} must be in [1, {len(corpus)}]")
    idx = np.sort(np.random.default_rng(seed).choice(len(corpus), size=n, replace=False))
    return [corpus.examples[i] for i in idx if len(corpus.examples[i]) > 0]


def _measure(model, example, method, group, k, M, seed) -> ExampleChange:
    attr = attribute(model, example, method, M=M, seed=seed)
    if group == "uncertain":
        digest = make_digest(attr, example.tokens, k_imp=0, k_unc=k)
        chosen = digest.uncertain
    else:
        digest = make_digest(attr, example.tokens, k_imp=k, k_unc=0)
        chosen = digest.important
    removed = tuple(sorted(e.position for e in chosen))
    # re-predict both inputs here instead of trusting attribution internals
    before, after = model.predict_batch([list(example.tokens), remove_positions(example.tokens, removed)])
    y = before.predicted_class
    return ExampleChange(example.id, y, before.confidence, after.probs[y], removed, after.predicted_class != y)


def _run(model, sample, explainer, group, k, bins, seed, sample_size, M, workers, include_empty) -> ConfidenceChangeReport:
    method = canonical_method(explainer)
    if k < 0:
        raise ValueError("k must be >= 0")
    edges = list(bins) if bins is not None else default_edges(model.n_classes)
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError(f"bin edges must be strictly increasing, got {edges}")
    examples = select_examples(sample, sample_size, seed)

    def work(ex):
        return _measure(model, ex, method, group, k, M, seed)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            changes = list(pool.map(work, examples))
    else:
        changes = [work(ex) for ex in examples]
    n_without = sum(1 for c in changes if not c.removed)
    if not include_empty:
        changes = [c for c in changes if c.removed]

    members: list[list[ExampleChange]] = [[] for _ in range(len(edges) - 1)]
    for ch in changes:
        members[assign_bin(ch.original, edges)].append(ch)
    summaries = []
    for b, group_changes in enumerate(members):
        if group_changes:
            orig = float(np.mean([c.original for c in group_changes]))
            post = float(np.mean([c.post for c in group_changes]))
            delta = float(np.mean([c.delta for c in group_changes]))
        else:
            orig = post = delta = None
        summaries.append(BinSummary(edges[b], edges[b + 1], len(group_changes), orig, post, delta))

    n = len(changes)
    return ConfidenceChangeReport(
        method=method,
        group=group,
        k=k,
        edges=edges,
        bins=summaries,
        overall_mean_delta=float(np.mean([c.delta for c in changes])) if n else 0.0,
        sample_size=n,
        n_without_words=n_without,
        flip_rate=sum(c.flipped for c in changes) / n if n else 0.0,
        seed=seed,
        meta={
            "M": M if method == "sampling-shapley" else None,
            "removal": "simultaneous",
            "post": "original-class probability",
            "empty_examples": "kept with delta 0" if include_empty else "excluded",
        },
        changes=changes,
    )


def confidence_change_experiment(
    model: Classifier,
    sample: Corpus,
    explainer: str = "loo",
    k_unc: int = 5,
    bins: Optional[Sequence[float]] = None,
    seed: int = 0,
    sample_size: Optional[int] = None,
    M: int = 200,
    workers: int = 1,
    include_empty: bool = True,
) -> ConfidenceChangeReport:
    """Delete each example's top ``k_unc`` uncertain words and record the confidence change."""
    return _run(model, sample, explainer, "uncertain", k_unc, bins, seed, sample_size, M, workers, include_empty)


def important_removal_check(
    model: Classifier,
    sample: Corpus,
    explainer: str = "loo",
    k_imp: int = 5,
    bins: Optional[Sequence[float]] = None,
    seed: int = 0,
    sample_size: Optional[int] = None,
    M: int = 200,
    workers: int = 1,
    include_empty: bool = True,
) -> ConfidenceChangeReport:
    return _run(model, sample, explainer, "important", k_imp, bins, seed, sample_size, M, workers, include_empty)


def reports_to_json(reports: Sequence[ConfidenceChangeReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n"


def reports_to_csv(reports: Sequence[ConfidenceChangeReport]) -> str:
    """One row per (report, bin), with columns identifying the method and word group."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", "group", "k", "lower", "upper", "count", "mean_orig", "mean_post", "mean_delta"])
    for r in reports:
        for b in r.bins:
            writer.writerow(
                [r.method, r.group, r.k, b.lower, b.upper, b.count, _blank(b.mean_orig), _blank(b.mean_post), _blank(b.mean_delta)]
            )
    return buf.getvalue()
