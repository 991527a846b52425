"""Word attributions and important/uncertain word digests.

Scores follow one convention throughout: ``S_i > 0`` means word ``i`` props up
the confidence of the predicted class, ``S_i < 0`` means it drags it down.
The predicted class is frozen from the full input for every perturbation.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .classifier import Classifier
from .corpus import TokenizedExample

METHODS = ("loo", "sampling-shapley", "exact-shapley")
METHOD_ALIASES = {"ss": "sampling-shapley", "shapley": "sampling-shapley", "exact": "exact-shapley"}

# max coalition-mask cells materialized at once by the Shapley sampler
_MASK_BUDGET = 2_000_000


class AttributionError(ValueError):
    pass


def canonical_method(name: str) -> str:
    name = METHOD_ALIASES.get(name, name)
    if name not in METHODS:
        raise AttributionError(f"unknown attribution method {name!r}")
    return name


@dataclass(frozen=True)
class Attribution:
    example_id: str
    method: str
    predicted_class: int
    base_confidence: float
    scores: tuple[float, ...]
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "example_id": self.example_id,
            "method": self.method,
            "predicted_class": self.predicted_class,
            "base_confidence": self.base_confidence,
            "scores": list(self.scores),
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Attribution":
        return cls(
            doc["example_id"],
            doc["method"],
            int(doc["predicted_class"]),
            float(doc["base_confidence"]),
            tuple(float(s) for s in doc["scores"]),
            dict(doc.get("meta", {})),
        )


def remove_positions(tokens: Sequence[str], positions: Iterable[int]) -> list[str]:
    """Order-preserving subsequence of ``tokens`` without ``positions``."""
    drop = set(positions)
    bad = [p for p in drop if not 0 <= p < len(tokens)]
    if bad:
        raise AttributionError(f"positions {sorted(bad)} out of range for {len(tokens)} tokens")
    return [t for i, t in enumerate(tokens) if i not in drop]


def _require_tokens(example: TokenizedExample) -> tuple[str, ...]:
    if len(example.tokens) == 0:
        raise AttributionError(f"example {example.id!r} has no tokens to attribute")
    return example.tokens


def _base(model: Classifier, tokens):
    pred = model.predict(tokens)
    return pred.predicted_class, pred.confidence


def loo_attribution(model: Classifier, example: TokenizedExample) -> Attribution:
    """``S_i = f_y(x) - f_y(x without word i)`` with ``y`` predicted on the full input."""
    tokens = _require_tokens(example)
    inputs = [list(tokens)] + [remove_positions(tokens, {i}) for i in range(len(tokens))]
    preds = model.predict_batch(inputs)
    y, base = preds[0].predicted_class, preds[0].confidence
    scores = tuple(base - p.probs[y] for p in preds[1:])
    return Attribution(example.id, "loo", y, base, scores, {"queries": len(inputs)})


def example_rng(seed: int, example_id: str) -> np.random.Generator:
    """Counter-based stream keyed by ``(seed, example_id)``, independent of scheduling."""
    digest = hashlib.sha256(f"{int(seed)}\x00{example_id}".encode("utf-8")).digest()
    key = int.from_bytes(digest[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))


def _unique_rows(masks: np.ndarray):
    packed = np.packbits(masks, axis=1)
    _, first, inverse = np.unique(packed, axis=0, return_index=True, return_inverse=True)
    return masks[first], inverse.reshape(-1)


def _class_probs(model: Classifier, tokens, masks: np.ndarray, y: int) -> np.ndarray:
    """``f_y`` on every masked coalition, each distinct coalition queried once."""
    uniq, inverse = _unique_rows(masks)
    probs = model.probs_masked(tokens, uniq)[:, y]
    return probs[inverse]


def sampling_shapley_attribution(
    model: Classifier, example: TokenizedExample, M: int = 200, seed: int = 0
) -> Attribution:
    """Permutation-sampling Shapley estimate.

    Each of the ``M`` samples is one uniform permutation; a word's coalition
    is the set of words preceding it, and all ``N + 1`` prefixes of the
    permutation are evaluated together.
    """
    tokens = _require_tokens(example)
    if M < 1:
        raise AttributionError("M must be >= 1")
    N = len(tokens)
    y, base = _base(model, tokens)
    rng = example_rng(seed, example.id)
    perms = np.argsort(rng.random((M, N)), axis=1, kind="stable")
    ranks = np.argsort(perms, axis=1, kind="stable")
    thresholds = np.arange(1, N + 1)[None, :, None]

    # sum per sample first, then across samples, so chunking never changes the result
    per_sample = np.zeros((M, N))
    chunk = max(1, _MASK_BUDGET // ((N + 1) * N))
    for start in range(0, M, chunk):
        stop = min(M, start + chunk)
        # masks[m, j] keeps the first j words of permutation m
        masks = np.zeros((stop - start, N + 1, N), dtype=bool)
        masks[:, 1:, :] = ranks[start:stop, None, :] < thresholds
        values = _class_probs(model, tokens, masks.reshape(-1, N), y).reshape(-1, N + 1)
        marginal = np.diff(values, axis=1)  # marginal[m, j]: gain from adding perms[m, j]
        np.put_along_axis(per_sample[start:stop], perms[start:stop], marginal, axis=1)
    scores = tuple((per_sample.sum(axis=0) / M).tolist())
    meta = {"M": int(M), "seed": int(seed), "sampler": "permutation"}
    return Attribution(example.id, "sampling-shapley", y, base, scores, meta)


def exact_shapley_attribution(model: Classifier, example: TokenizedExample, max_n: int = 12) -> Attribution:
    """Shapley values by enumerating all ``2^N`` coalitions."""
    tokens = _require_tokens(example)
    N = len(tokens)
    if N > max_n:
        raise AttributionError(f"exact Shapley over {N} words exceeds max_n={max_n}")
    y, base = _base(model, tokens)
    subsets = np.arange(2**N)
    masks = ((subsets[:, None] >> np.arange(N)[None, :]) & 1).astype(bool)
    values = model.probs_masked(tokens, masks)[:, y]
    sizes = masks.sum(axis=1)
    weight = np.array([math.factorial(s) * math.factorial(N - s - 1) / math.factorial(N) for s in range(N)])

    phi = np.zeros(N)
    for i in range(N):
        without = subsets[(subsets >> i) & 1 == 0]
        gain = values[without | (1 << i)] - values[without]
        phi[i] = np.sum(weight[sizes[without]] * gain)
    return Attribution(example.id, "exact-shapley", y, base, tuple(phi.tolist()), {"max_n": max_n})


def attribute(model: Classifier, example: TokenizedExample, method: str = "loo", M: int = 200, seed: int = 0):
    method = canonical_method(method)
    if method == "loo":
        return loo_attribution(model, example)
    if method == "sampling-shapley":
        return sampling_shapley_attribution(model, example, M, seed)
    return exact_shapley_attribution(model, example)


@dataclass(frozen=True)
class DigestEntry:
    position: int
    token: str
    score: float


@dataclass(frozen=True)
class ExplanationDigest:
    """Important words (positive scores) and uncertain words (negative scores)."""

    important: tuple[DigestEntry, ...] = ()
    uncertain: tuple[DigestEntry, ...] = ()
    example_id: Optional[str] = None
    predicted_class: Optional[int] = None

    def to_dict(self) -> dict:
        doc = {}
        if self.example_id is not None:
            doc["example_id"] = self.example_id
        if self.predicted_class is not None:
            doc["predicted_class"] = self.predicted_class
        doc["important"] = [vars(e) for e in self.important]
        doc["uncertain"] = [vars(e) for e in self.uncertain]
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExplanationDigest":
        def entries(key):
            return tuple(DigestEntry(int(e["position"]), e["token"], float(e["score"])) for e in doc.get(key, []))

        return cls(entries("important"), entries("uncertain"), doc.get("example_id"), doc.get("predicted_class"))


def make_digest(attr: Attribution, tokens: Sequence[str], k_imp: int = 5, k_unc: int = 5) -> ExplanationDigest:
    if k_imp < 0 or k_unc < 0:
        raise AttributionError("k_imp and k_unc must be >= 0")
    if len(tokens) != len(attr.scores):
        raise AttributionError(f"{len(attr.scores)} scores for {len(tokens)} tokens")
    scored = list(enumerate(attr.scores))
    pos = sorted((p for p in scored if p[1] > 0), key=lambda p: (-p[1], p[0]))[:k_imp]
    neg = sorted((p for p in scored if p[1] < 0), key=lambda p: (p[1], p[0]))[:k_unc]
    return ExplanationDigest(
        tuple(DigestEntry(i, tokens[i], s) for i, s in pos),
        tuple(DigestEntry(i, tokens[i], s) for i, s in neg),
        attr.example_id,
        attr.predicted_class,
    )


def default_k_unc(mean_length: float) -> int:
    """10 uncertain words for long documents (> 100 tokens on average), else 5."""
    return 10 if mean_length > 100 else 5
