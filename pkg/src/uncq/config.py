"""Run configuration: JSON file, strict validation, defaults from the method's setup."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional


class ConfigError(ValueError):
    pass


@dataclass
class CorpusConfig:
    path: Optional[str] = None
    format: Optional[str] = None
    lowercase: bool = True


@dataclass
class SplitConfig:
    ratios: list = field(default_factory=lambda: [0.8, 0.1, 0.1])
    seed: int = 0


@dataclass
class ClassifierConfig:
    kind: str = "builtin"
    url: Optional[str] = None
    labels: Optional[list] = None
    alpha: float = 1.0
    timeout: float = 30.0
    max_batch: int = 64


@dataclass
class CalibrationConfig:
    lo: float = 0.01
    hi: float = 10.0
    step: float = 0.01
    objective: str = "dev-nll"
    K: int = 10


@dataclass
class ExplainerConfig:
    method: str = "sampling-shapley"
    M: int = 200
    seed: int = 0


@dataclass
class DigestConfig:
    k_imp: int = 5
    k_unc: Optional[int] = None  # None: 10 for long documents, else 5


@dataclass
class EvaluationConfig:
    sample_size: Optional[int] = 1000
    bins: Optional[list] = None
    include_empty: bool = True  # keep examples with no words to remove, at delta 0


@dataclass
class LmiConfig:
    top_n: int = 5
    basis: str = "predicted"
    min_count: int = 1
    top_k: int = 10


@dataclass
class RunConfig:
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    explainer: ExplainerConfig = field(default_factory=ExplainerConfig)
    digest: DigestConfig = field(default_factory=DigestConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    lmi: LmiConfig = field(default_factory=LmiConfig)
    out: str = "uncq-out"
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        cfg = _build(cls, doc, "")
        cfg.validate()
        return cfg

    def validate(self) -> None:
        errors = []

        def check(ok, msg):
            if not ok:
                errors.append(msg)

        c = self.corpus
        check(c.format in (None, "jsonl", "csv"), f"corpus.format must be jsonl or csv, got {c.format!r}")
        r = self.split.ratios
        check(
            isinstance(r, list) and len(r) == 3 and all(_num(x) and x >= 0 for x in r) and abs(sum(r) - 1) <= 1e-9,
            f"split.ratios must be three non-negative numbers summing to 1, got {r!r}",
        )
        check(_int(self.split.seed), "split.seed must be an integer")
        k = self.classifier
        check(k.kind in ("builtin", "remote"), f"classifier.kind must be builtin or remote, got {k.kind!r}")
        if k.kind == "remote":
            check(isinstance(k.url, str) and k.url.startswith(("http://", "https://")), "classifier.url must be an http(s) URL")
            check(isinstance(k.labels, list) and len(k.labels) >= 2, "classifier.labels must list at least 2 class names")
        check(_num(k.alpha) and k.alpha > 0, "classifier.alpha must be > 0")
        check(_num(k.timeout) and k.timeout > 0, "classifier.timeout must be > 0")
        check(_int(k.max_batch) and k.max_batch >= 1, "classifier.max_batch must be >= 1")
        cal = self.calibration
        check(_num(cal.lo) and cal.lo > 0, "calibration.lo must be > 0")
        check(_num(cal.hi) and _num(cal.lo) and cal.hi >= cal.lo, "calibration.hi must be >= calibration.lo")
        check(_num(cal.step) and cal.step > 0, "calibration.step must be > 0")
        check(cal.objective in ("dev-nll", "dev-ece"), f"calibration.objective must be dev-nll or dev-ece, got {cal.objective!r}")
        check(_int(cal.K) and cal.K >= 1, "calibration.K must be >= 1")
        e = self.explainer
        check(e.method in ("loo", "sampling-shapley", "ss"), f"explainer.method must be loo or sampling-shapley, got {e.method!r}")
        check(_int(e.M) and e.M >= 1, "explainer.M must be >= 1")
        check(_int(e.seed), "explainer.seed must be an integer")
        d = self.digest
        check(_int(d.k_imp) and d.k_imp >= 0, "digest.k_imp must be >= 0")
        check(d.k_unc is None or (_int(d.k_unc) and d.k_unc >= 0), "digest.k_unc must be >= 0")
        ev = self.evaluation
        check(ev.sample_size is None or (_int(ev.sample_size) and ev.sample_size >= 1), "evaluation.sample_size must be >= 1")
        check(isinstance(ev.include_empty, bool), "evaluation.include_empty must be true or false")
        if ev.bins is not None:
            b = ev.bins
            check(
                isinstance(b, list) and len(b) >= 2 and all(_num(x) for x in b)
                and all(hi > lo for lo, hi in zip(b, b[1:])) and b[0] >= 0 and b[-1] <= 1,
                f"evaluation.bins must be increasing edges within [0, 1], got {b!r}",
            )
        m = self.lmi
        check(_int(m.top_n) and m.top_n >= 1, "lmi.top_n must be >= 1")
        check(m.basis in ("predicted", "gold"), f"lmi.basis must be predicted or gold, got {m.basis!r}")
        check(_int(m.min_count) and m.min_count >= 1, "lmi.min_count must be >= 1")
        check(_int(m.top_k) and m.top_k >= 1, "lmi.top_k must be >= 1")
        check(isinstance(self.out, str) and self.out, "out must be a non-empty path")
        check(_int(self.workers) and self.workers >= 1, "workers must be >= 1")
        if errors:
            raise ConfigError("; ".join(errors))


def _num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _build(cls, doc, prefix):
    if not isinstance(doc, dict):
        raise ConfigError(f"{prefix or 'config'} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - set(fields))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(prefix + k for k in unknown)}")
    kwargs = {}
    for name, value in doc.items():
        f = fields[name]
        sub = f.default_factory if f.default_factory is not dataclasses.MISSING else None
        if dataclasses.is_dataclass(sub):
            kwargs[name] = _build(sub, value, f"{prefix}{name}.")
        else:
            kwargs[name] = value
    return cls(**kwargs)


def load_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    return RunConfig.from_dict(doc)
