"""Black-box probabilistic classifiers queried by the explainers.

Every classifier maps a token subsequence (possibly empty) to ``C`` logits.
Probabilities come from a temperature-scaled softmax over those logits.
"""

from __future__ import annotations

import json
import logging
import math
import threading
import urllib.error
import urllib.request
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .corpus import Corpus, LabelSpace

logger = logging.getLogger(__name__)


class ModelError(RuntimeError):
    """Raised when a classifier cannot produce predictions."""


class TransportError(ModelError):
    """A remote wire call failed."""

    def __init__(self, message: str, endpoint: str, batch_index: int):
        super().__init__(f"{endpoint} (batch {batch_index}): {message}")
        self.endpoint = endpoint
        self.batch_index = batch_index


def _check_temperature(temperature: float) -> float:
    if not temperature > 0 or not math.isfinite(temperature):
        raise ValueError(f"temperature must be a positive finite number, got {temperature!r}")
    return float(temperature)


def softmax(logits, temperature: float = 1.0) -> np.ndarray:
    """Temperature-scaled softmax along the last axis, max-shifted for stability."""
    temperature = _check_temperature(temperature)
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class Prediction:
    logits: tuple[float, ...]
    probs: tuple[float, ...]
    predicted_class: int
    confidence: float

    @classmethod
    def from_logits(cls, logits, temperature: float = 1.0) -> "Prediction":
        logits = np.asarray(logits, dtype=np.float64)
        if not np.all(np.isfinite(logits)):
            raise ModelError(f"non-finite logits {logits.tolist()}")
        probs = softmax(logits, temperature)
        # argmax of the logits: same class as argmax of probs, but immune to rounding at extreme T
        k = int(np.argmax(logits))  # first maximum wins ties
        return cls(tuple(logits.tolist()), tuple(probs.tolist()), k, float(probs[k]))

    def to_dict(self) -> dict:
        return {
            "logits": list(self.logits),
            "probs": list(self.probs),
            "predicted_class": self.predicted_class,
            "confidence": self.confidence,
        }


class Classifier:
    """Base class for the classifier contract.

    Subclasses implement :meth:`logits_batch`. :meth:`logits_masked` may be
    overridden with a vectorized path; the default materializes each masked
    subsequence.
    """

    label_space: LabelSpace
    temperature: float = 1.0

    @property
    def n_classes(self) -> int:
        return len(self.label_space)

    def logits_batch(self, inputs: Sequence[Sequence[str]]) -> np.ndarray:
        raise NotImplementedError

    def logits_masked(self, tokens: Sequence[str], masks: np.ndarray) -> np.ndarray:
        """Logits for each row of boolean ``masks`` (shape ``(B, N)``) applied to ``tokens``."""
        masks = np.asarray(masks, dtype=bool)
        subsequences = [[t for t, keep in zip(tokens, row) if keep] for row in masks]
        return self.logits_batch(subsequences)

    def probs_masked(self, tokens: Sequence[str], masks: np.ndarray) -> np.ndarray:
        return softmax(self.logits_masked(tokens, masks), self.temperature)

    def predict_batch(self, inputs: Sequence[Sequence[str]], temperature: Optional[float] = None) -> list[Prediction]:
        if len(inputs) == 0:
            return []
        T = self.temperature if temperature is None else temperature
        logits = np.asarray(self.logits_batch(inputs), dtype=np.float64)
        if logits.shape != (len(inputs), self.n_classes):
            raise ModelError(f"expected logits of shape {(len(inputs), self.n_classes)}, got {logits.shape}")
        return [Prediction.from_logits(row, T) for row in logits]

    def predict(self, tokens: Sequence[str], temperature: Optional[float] = None) -> Prediction:
        return self.predict_batch([tokens], temperature)[0]


def predict(model: Classifier, tokens: Sequence[str], temperature: Optional[float] = None) -> Prediction:
    return model.predict(tokens, temperature)


def predict_batch(model: Classifier, inputs, temperature: Optional[float] = None) -> list[Prediction]:
    return model.predict_batch(inputs, temperature)


class TemperatureScaled(Classifier):
    """A view of ``base`` whose probabilities use a fixed softmax temperature."""

    def __init__(self, base: Classifier, temperature: float):
        self.base = base
        self.temperature = _check_temperature(temperature)
        self.label_space = base.label_space

    def logits_batch(self, inputs):
        return self.base.logits_batch(inputs)

    def logits_masked(self, tokens, masks):
        return self.base.logits_masked(tokens, masks)


def apply_temperature(model: Classifier, temperature: float) -> TemperatureScaled:
    base = model.base if isinstance(model, TemperatureScaled) else model
    return TemperatureScaled(base, temperature)


class BagOfWordsModel(Classifier):
    """Multinomial Naive Bayes over word counts.

    ``logit_c = log_prior_c + sum(weight_c(t) for t in tokens)``; tokens
    outside the vocabulary contribute nothing.
    """

    def __init__(self, label_space: LabelSpace, vocab: Sequence[str], log_priors, weights, alpha: float):
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        self.label_space = label_space
        self.vocab = tuple(vocab)
        self.log_priors = np.asarray(log_priors, dtype=np.float64)
        self.weights = np.asarray(weights, dtype=np.float64)  # (C, V)
        self.alpha = float(alpha)
        C = len(label_space)
        if self.log_priors.shape != (C,) or self.weights.shape != (C, len(self.vocab)):
            raise ValueError(f"weight table must be {C} x {len(self.vocab)}, got {self.weights.shape}")
        self._index = {t: i for i, t in enumerate(self.vocab)}
        # token rows plus a trailing zero row for out-of-vocabulary tokens
        self._table = np.vstack([self.weights.T, np.zeros((1, C))])

    def _ids(self, tokens) -> np.ndarray:
        oov = len(self.vocab)
        return np.fromiter((self._index.get(t, oov) for t in tokens), dtype=np.intp, count=len(tokens))

    def logits_batch(self, inputs):
        out = np.empty((len(inputs), self.n_classes))
        for row, tokens in enumerate(inputs):
            out[row] = self.log_priors + self._table[self._ids(tokens)].sum(axis=0)
        return out

    def logits_masked(self, tokens, masks):
        masks = np.asarray(masks, dtype=np.float64)
        return self.log_priors + masks @ self._table[self._ids(tokens)]

    def to_dict(self) -> dict:
        return {
            "label_space": list(self.label_space.names),
            "log_priors": self.log_priors.tolist(),
            "weights": {t: self.weights[:, i].tolist() for i, t in enumerate(self.vocab)},
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "BagOfWordsModel":
        try:
            vocab = list(doc["weights"])
            C = len(doc["label_space"])
            weights = np.array([doc["weights"][t] for t in vocab], dtype=np.float64).reshape(len(vocab), C).T
            return cls(LabelSpace(doc["label_space"]), vocab, doc["log_priors"], weights, doc["alpha"])
        except (KeyError, TypeError, ValueError) as err:
            raise ModelError(f"malformed model document: {err}") from err

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "BagOfWordsModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def train_bow(train: Corpus, alpha: float = 1.0) -> BagOfWordsModel:
    """Fit multinomial Naive Bayes with additive smoothing ``alpha``."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if len(train) == 0:
        raise ValueError("training corpus is empty")
    C = len(train.label_space)
    if C < 2:
        raise ValueError(f"need at least 2 classes, got {C}")
    class_counts = np.zeros(C)
    token_counts = [Counter() for _ in range(C)]
    for ex in train:
        if ex.gold_label is None:
            raise ValueError(f"example {ex.id!r} has no gold label")
        class_counts[ex.gold_label] += 1
        token_counts[ex.gold_label].update(ex.tokens)
    empty = [train.label_space.names[c] for c in range(C) if class_counts[c] == 0]
    if empty:
        raise ValueError(f"classes with no training examples: {empty}")

    vocab = sorted(set().union(*token_counts))
    counts = np.array([[tc[t] for t in vocab] for tc in token_counts], dtype=np.float64).reshape(C, len(vocab))
    smoothed = counts + alpha
    weights = np.log(smoothed) - np.log(smoothed.sum(axis=1, keepdims=True))
    log_priors = np.log(class_counts / class_counts.sum())
    return BagOfWordsModel(train.label_space, vocab, log_priors, weights, alpha)


class RemoteClassifier(Classifier):
    """Client for ``POST {base_url}/v1/predict``.

    Responses are memoized by token tuple for the lifetime of the instance,
    so repeated coalitions cost one wire call and a drifting upstream cannot
    change answers mid-run.
    """

    def __init__(self, base_url: str, label_space: LabelSpace, timeout: float = 30.0, max_batch: int = 64):
        if max_batch < 1:
            raise ValueError("max_batch must be >= 1")
        self.base_url = base_url.rstrip("/")
        self.label_space = label_space
        self.timeout = timeout
        self.max_batch = int(max_batch)
        self.wire_calls = 0
        self._cache: dict[tuple[str, ...], np.ndarray] = {}
        self._lock = threading.Lock()

    @property
    def endpoint(self) -> str:
        return f"{self.base_url}/v1/predict"

    def _post(self, instances: list[list[str]], batch_index: int) -> np.ndarray:
        body = json.dumps({"instances": instances}).encode("utf-8")
        req = urllib.request.Request(
            self.endpoint, data=body, headers={"Content-Type": "application/json"}, method="POST"
        )
        self.wire_calls += 1
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as err:
            raise TransportError(f"HTTP {err.code}", self.endpoint, batch_index) from err
        except (urllib.error.URLError, OSError, ValueError) as err:
            raise TransportError(str(err), self.endpoint, batch_index) from err
        try:
            logits = np.asarray(payload["logits"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as err:
            raise TransportError(f"bad response body: {err}", self.endpoint, batch_index) from err
        if logits.shape != (len(instances), self.n_classes):
            raise TransportError(
                f"expected logits of shape {(len(instances), self.n_classes)}, got {logits.shape}",
                self.endpoint,
                batch_index,
            )
        return logits

    def logits_batch(self, inputs):
        keys = [tuple(tokens) for tokens in inputs]
        with self._lock:
            missing = list(dict.fromkeys(k for k in keys if k not in self._cache))
        for b, start in enumerate(range(0, len(missing), self.max_batch)):
            chunk = missing[start:start + self.max_batch]
            logits = self._post([list(k) for k in chunk], b)
            with self._lock:
                self._cache.update(zip(chunk, logits))
        with self._lock:
            return np.array([self._cache[k] for k in keys]).reshape(len(keys), self.n_classes)


def load_model(path) -> BagOfWordsModel:
    return BagOfWordsModel.load(path)
