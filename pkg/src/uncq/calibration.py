"""Temperature scaling and expected calibration error."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .classifier import Classifier, Prediction, apply_temperature, softmax  # noqa: F401
from .corpus import Corpus

OBJECTIVES = ("dev-nll", "dev-ece")


@dataclass(frozen=True)
class ReliabilityBin:
    lower: float
    upper: float
    count: int
    avg_confidence: Optional[float]  # None when the bin is empty
    accuracy: Optional[float]

    @property
    def empty(self) -> bool:
        return self.count == 0


def _bin_edges(n_bins: int) -> np.ndarray:
    # k / K is exact for the edges that matter (0.3 stays 0.3, unlike linspace)
    return np.arange(n_bins + 1) / n_bins


def ece_from_arrays(confidences, correct, n_bins: int = 10) -> tuple[float, list[ReliabilityBin]]:
    """ECE over ``n_bins`` equal-width bins ``(k/K, (k+1)/K]``; the first bin also takes 0."""
    conf = np.asarray(confidences, dtype=np.float64)
    hit = np.asarray(correct, dtype=np.float64)
    if conf.size == 0:
        raise ValueError("ECE needs at least one prediction")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    edges = _bin_edges(n_bins)
    idx = np.clip(np.searchsorted(edges, conf, side="left") - 1, 0, n_bins - 1)
    n = conf.size
    ece = 0.0
    bins = []
    for k in range(n_bins):
        sel = idx == k
        count = int(sel.sum())
        if count == 0:
            bins.append(ReliabilityBin(float(edges[k]), float(edges[k + 1]), 0, None, None))
            continue
        avg_conf = float(conf[sel].mean())
        acc = float(hit[sel].mean())
        ece += count / n * abs(acc - avg_conf)
        bins.append(ReliabilityBin(float(edges[k]), float(edges[k + 1]), count, avg_conf, acc))
    return ece, bins


def compute_ece(predictions: Sequence[tuple[Prediction, int]], n_bins: int = 10):
    """ECE for ``(prediction, gold)`` pairs. Returns ``(ece, bins)``."""
    if not predictions:
        raise ValueError("ECE needs at least one prediction")
    conf = [p.confidence for p, _ in predictions]
    correct = [p.predicted_class == y for p, y in predictions]
    return ece_from_arrays(conf, correct, n_bins)


def _nll(logits: np.ndarray, labels: np.ndarray, T: float) -> float:
    z = logits / T
    z = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(log_norm - z[np.arange(len(labels)), labels]))


def _ece_at(logits: np.ndarray, labels: np.ndarray, T: float, n_bins: int) -> float:
    probs = softmax(logits, T)
    pred = probs.argmax(axis=1)
    return ece_from_arrays(probs.max(axis=1), pred == labels, n_bins)[0]


def temperature_grid(lo: float = 0.01, hi: float = 10.0, step: float = 0.01) -> np.ndarray:
    if not 0 < lo <= hi or not step > 0:
        raise ValueError(f"invalid temperature grid ({lo}, {hi}, {step})")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(n), 10)


@dataclass
class CalibrationResult:
    temperature: float
    objective: str
    pre_ece: float
    post_ece: float
    grid: tuple[float, float, float]
    n_bins: int = 10
    pre_bins: list[ReliabilityBin] = field(default_factory=list)
    bins: list[ReliabilityBin] = field(default_factory=list)
    objective_at_1: Optional[float] = None
    objective_at_T: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "temperature": self.temperature,
            "objective": self.objective,
            "pre_ece": self.pre_ece,
            "post_ece": self.post_ece,
            "grid": list(self.grid),
            "K": self.n_bins,
            "objective_at_1": self.objective_at_1,
            "objective_at_T": self.objective_at_T,
            "pre_bins": [asdict(b) for b in self.pre_bins],
            "bins": [asdict(b) for b in self.bins],
        }


def fit_temperature_from_logits(
    logits,
    labels,
    grid: tuple[float, float, float] = (0.01, 10.0, 0.01),
    objective: str = "dev-nll",
    n_bins: int = 10,
) -> CalibrationResult:
    """Linear scan over the temperature grid.

    Ties on the objective go to the temperature nearest 1.0, then the smaller one.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}, got {objective!r}")
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.intp)
    if logits.ndim != 2 or len(logits) == 0 or len(labels) != len(logits):
        raise ValueError("need a non-empty (n, C) logit matrix with n labels")
    temps = temperature_grid(*grid)

    if objective == "dev-nll":
        score = lambda T: _nll(logits, labels, T)  # noqa: E731
    else:
        score = lambda T: _ece_at(logits, labels, T, n_bins)  # noqa: E731
    values = np.array([score(T) for T in temps])
    best = values.min()
    tied = temps[values <= best + 1e-12 * max(1.0, abs(best))]
    T = float(min(tied, key=lambda t: (abs(t - 1.0), t)))

    pre_ece, pre_bins = _ece_and_bins(logits, labels, 1.0, n_bins)
    post_ece, post_bins = _ece_and_bins(logits, labels, T, n_bins)
    return CalibrationResult(
        temperature=T,
        objective=objective,
        pre_ece=pre_ece,
        post_ece=post_ece,
        grid=tuple(grid),
        n_bins=n_bins,
        pre_bins=pre_bins,
        bins=post_bins,
        objective_at_1=score(1.0),
        objective_at_T=score(T),
    )


def _ece_and_bins(logits, labels, T, n_bins):
    probs = softmax(logits, T)
    return ece_from_arrays(probs.max(axis=1), probs.argmax(axis=1) == labels, n_bins)


def corpus_logits(model: Classifier, corpus: Corpus) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate ``model`` once on every example; returns (logits, gold labels)."""
    if len(corpus) == 0:
        raise ValueError("corpus is empty")
    if any(ex.gold_label is None for ex in corpus):
        raise ValueError("every example needs a gold label")
    logits = np.asarray(model.logits_batch([ex.tokens for ex in corpus]), dtype=np.float64)
    return logits, np.array([ex.gold_label for ex in corpus], dtype=np.intp)


def fit_temperature(
    model: Classifier,
    dev: Corpus,
    grid: tuple[float, float, float] = (0.01, 10.0, 0.01),
    objective: str = "dev-nll",
    n_bins: int = 10,
) -> CalibrationResult:
    logits, labels = corpus_logits(model, dev)
    return fit_temperature_from_logits(logits, labels, grid, objective, n_bins)


def evaluate_ece(model: Classifier, corpus: Corpus, temperature: float, n_bins: int = 10):
    """ECE and accuracy of ``model`` on ``corpus`` at ``temperature``."""
    logits, labels = corpus_logits(model, corpus)
    probs = softmax(logits, temperature)
    pred = probs.argmax(axis=1)
    ece, bins = ece_from_arrays(probs.max(axis=1), pred == labels, n_bins)
    return {"ece": ece, "accuracy": float(np.mean(pred == labels)), "bins": bins}
