"""Command-line pipeline: train, calibrate, explain, evaluate, lmi, report.

Every subcommand reads one JSON config (``--config``), lets flags override
it, and writes its artifacts into the output directory. Exit codes: 0 on
success, 1 for invalid configuration or input, 2 for runtime/model failures.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import plots
from .attribution import ExplanationDigest, attribute, canonical_method, default_k_unc, make_digest, remove_positions
from .calibration import evaluate_ece, fit_temperature
from .classifier import BagOfWordsModel, ModelError, RemoteClassifier, TemperatureScaled, train_bow
from .config import ConfigError, RunConfig, load_config
from .corpus import CorpusError, LabelSpace, build_vocab, load_corpus, relabel, split_corpus
from .evaluation import (
    confidence_change_experiment,
    important_removal_check,
    reports_to_csv,
    reports_to_json,
    select_examples,
)
from .lmi import LmiDistribution, compute_lmi, tally_features, top_tokens
from .reporting import (
    RenderedExample,
    ReportError,
    lmi_csv,
    read_jsonl,
    render_example_block,
    render_report,
    write_manifest,
)

logger = logging.getLogger("uncq")

ARTIFACTS = (
    "model.json",
    "calibration.json",
    "reliability.png",
    "attributions.jsonl",
    "digests.jsonl",
    "report.html",
    "confidence_change.json",
    "confidence_change.csv",
    "confidence_change.png",
    "lmi.csv",
    "lmi.png",
)


class UsageError(Exception):
    """A request the pipeline refuses before doing any work."""


def _setup_logging() -> None:
    level = os.environ.get("UNCQ_LOG", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as err:
        raise ReportError(f"cannot write {path.name}: {err}") from err


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _model_path(cfg: RunConfig, args) -> Path:
    return Path(args.model) if getattr(args, "model", None) else Path(cfg.out) / "model.json"


def _splits(cfg: RunConfig, label_space: LabelSpace | None = None):
    if not cfg.corpus.path:
        raise UsageError("no corpus configured (set corpus.path or pass --corpus)")
    corpus = load_corpus(cfg.corpus.path, cfg.corpus.format, cfg.corpus.lowercase)
    if label_space is not None:
        corpus = relabel(corpus, label_space)
    return corpus, split_corpus(corpus, cfg.split.ratios, cfg.split.seed)


def _base_model(cfg: RunConfig, args):
    k = cfg.classifier
    if k.kind == "remote":
        return RemoteClassifier(k.url, LabelSpace(k.labels), timeout=k.timeout, max_batch=k.max_batch), None
    path = _model_path(cfg, args)
    if not path.exists():
        raise UsageError(f"model file {path} not found; run `uncq train` first")
    return BagOfWordsModel.load(path), _sha256(path)


def _calibrated(cfg: RunConfig, args):
    """The configured classifier at the temperature stored by `uncq calibrate`."""
    model, model_hash = _base_model(cfg, args)
    cal_path = Path(cfg.out) / "calibration.json"
    if not cal_path.exists():
        logger.warning("no calibration.json in %s; using T = 1", cfg.out)
        return TemperatureScaled(model, 1.0)
    doc = json.loads(cal_path.read_text(encoding="utf-8"))
    if doc.get("model_sha256") != model_hash:
        raise UsageError(f"{cal_path} was fitted for a different model; rerun `uncq calibrate`")
    return TemperatureScaled(model, float(doc["temperature"]))


def _k_unc(cfg: RunConfig, corpus) -> int:
    if cfg.digest.k_unc is not None:
        return cfg.digest.k_unc
    return default_k_unc(corpus.mean_length())


def _map(cfg: RunConfig, fn, items):
    if cfg.workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def cmd_train(cfg: RunConfig, args) -> int:
    if cfg.classifier.kind == "remote":
        raise UsageError("train unsupported for remote classifiers")
    _, (train, dev, _) = _splits(cfg)
    model = train_bow(train, cfg.classifier.alpha)
    path = _model_path(cfg, args)
    path.parent.mkdir(parents=True, exist_ok=True)
    model.save(path)
    if len(dev):
        acc = evaluate_ece(model, dev, 1.0)["accuracy"]
        print(f"dev accuracy {acc:.4f} ({len(dev)} examples); model written to {path}")
    else:
        print(f"model written to {path} (empty dev split)")
    return 0


def cmd_calibrate(cfg: RunConfig, args) -> int:
    model, model_hash = _base_model(cfg, args)
    _, (_, dev, test) = _splits(cfg, model.label_space)
    if len(dev) == 0:
        raise UsageError("dev split is empty; adjust split.ratios")
    c = cfg.calibration
    result = fit_temperature(model, dev, (c.lo, c.hi, c.step), c.objective, c.K)
    doc = result.to_dict()
    doc["model_sha256"] = model_hash
    doc["dev"] = {"pre_ece": result.pre_ece, "post_ece": result.post_ece, "n": len(dev)}
    if len(test):
        pre, post = evaluate_ece(model, test, 1.0, c.K), evaluate_ece(model, test, result.temperature, c.K)
        doc["test"] = {"pre_ece": pre["ece"], "post_ece": post["ece"], "accuracy": post["accuracy"], "n": len(test)}
    out = _out(cfg)
    _write_text(out / "calibration.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    plots.save(plots.reliability_diagram(result.pre_bins, result.bins, result.temperature), out / "reliability.png")
    line = f"T = {result.temperature:g} ({c.objective}); dev ECE {result.pre_ece:.4f} -> {result.post_ece:.4f}"
    if "test" in doc:
        line += f"; test ECE {doc['test']['pre_ece']:.4f} -> {doc['test']['post_ece']:.4f}"
    print(line)
    return 0


def _explain_targets(cfg: RunConfig, args, label_space):
    if getattr(args, "input", None):
        corpus = relabel(load_corpus(args.input, None, cfg.corpus.lowercase), label_space)
        return list(corpus), corpus
    corpus, (_, _, test) = _splits(cfg, label_space)
    if getattr(args, "ids", None):
        wanted = [s for s in args.ids.split(",") if s]
        try:
            return [corpus.by_id(i) for i in wanted], corpus
        except KeyError as err:
            raise UsageError(f"unknown example id {err}") from None
    n = cfg.evaluation.sample_size
    n = min(n, len(test)) if n is not None else None
    return select_examples(test, n, cfg.explainer.seed), corpus


def cmd_explain(cfg: RunConfig, args) -> int:
    model = _calibrated(cfg, args)
    examples, corpus = _explain_targets(cfg, args, model.label_space)
    examples = [ex for ex in examples if len(ex)]
    method = canonical_method(cfg.explainer.method)
    k_unc = _k_unc(cfg, corpus)
    e = cfg.explainer

    def work(ex):
        attr = attribute(model, ex, method, M=e.M, seed=e.seed)
        attr.meta["temperature"] = model.temperature
        digest = make_digest(attr, ex.tokens, cfg.digest.k_imp, k_unc)
        before, after = model.predict_batch([list(ex.tokens), remove_positions(ex.tokens, [u.position for u in digest.uncertain])])
        post = after.probs[before.predicted_class] if digest.uncertain else None
        return attr, digest, RenderedExample(ex, before, digest, post)

    results = _map(cfg, work, examples)
    out = _out(cfg)
    _write_text(out / "attributions.jsonl", "".join(json.dumps(a.to_dict(), sort_keys=True) + "\n" for a, _, _ in results))
    _write_text(out / "digests.jsonl", "".join(json.dumps(d.to_dict(), sort_keys=True, ensure_ascii=False) + "\n" for _, d, _ in results))
    blocks = [render_example_block(r.example, r.prediction, r.digest, r.post_removal_confidence, label_space=model.label_space) for _, _, r in results]
    _write_text(out / "report.html", render_report(blocks))
    print(f"explained {len(results)} examples with {method} (T = {model.temperature:g}, k_unc = {k_unc}) into {out}")
    return 0


def cmd_evaluate(cfg: RunConfig, args) -> int:
    model = _calibrated(cfg, args)
    corpus, (_, _, test) = _splits(cfg, model.label_space)
    if len(test) == 0:
        raise UsageError("test split is empty; adjust split.ratios")
    methods = ["loo", "sampling-shapley"] if getattr(args, "method", None) == "both" else [canonical_method(cfg.explainer.method)]
    n = cfg.evaluation.sample_size
    n = min(n, len(test)) if n is not None else None
    k_unc = _k_unc(cfg, corpus)
    e = cfg.explainer
    reports = []
    for method in methods:
        common = dict(
            bins=cfg.evaluation.bins, seed=e.seed, sample_size=n, M=e.M,
            workers=cfg.workers, include_empty=cfg.evaluation.include_empty,
        )
        reports.append(confidence_change_experiment(model, test, method, k_unc, **common))
        reports.append(important_removal_check(model, test, method, cfg.digest.k_imp, **common))
    out = _out(cfg)
    _write_text(out / "confidence_change.json", reports_to_json(reports))
    _write_text(out / "confidence_change.csv", reports_to_csv(reports))
    plots.save(plots.confidence_change_chart(reports), out / "confidence_change.png")
    for r in reports:
        print(f"{r.method:>16} remove {r.group:<9} k={r.k}: mean delta {r.overall_mean_delta:+.4f} over {r.sample_size} (flip rate {r.flip_rate:.3f})")
    return 0


def cmd_lmi(cfg: RunConfig, args) -> int:
    digests_path = Path(args.digests) if getattr(args, "digests", None) else Path(cfg.out) / "digests.jsonl"
    if not digests_path.exists():
        raise UsageError(f"{digests_path} not found; run `uncq explain` first")
    if cfg.classifier.kind == "remote":
        label_space = LabelSpace(cfg.classifier.labels)
    else:
        label_space = _base_model(cfg, args)[0].label_space
    corpus, _ = _splits(cfg, label_space)
    vocab = build_vocab(corpus, cfg.lmi.min_count)
    digests = [ExplanationDigest.from_dict(d) for d in read_jsonl(digests_path)]
    if cfg.lmi.basis == "gold":
        labels = [corpus.by_id(d.example_id).gold_label for d in digests]
    else:
        labels = [d.predicted_class for d in digests]

    dists = []
    for group in ("important", "uncertain"):
        tally = tally_features(zip(digests, labels), group, cfg.lmi.top_n, cfg.lmi.basis)
        if tally.total == 0:
            logger.warning("no %s words in %s; that distribution is empty", group, digests_path.name)
            dists.append(LmiDistribution(vocab, len(label_space), np.zeros((len(vocab), len(label_space))), group))
            continue
        dist = compute_lmi(tally, vocab, len(label_space))
        dists.append(dist)
        for y, name in enumerate(label_space.names):
            print(f"{group:>9} {name}: {' '.join(top_tokens(dist, y, cfg.lmi.top_k))}")
    out = _out(cfg)
    _write_text(out / "lmi.csv", lmi_csv(dists, list(label_space.names)))
    plots.save(plots.lmi_scatter(dists, list(label_space.names)), out / "lmi.png")
    return 0


def cmd_report(cfg: RunConfig, args) -> int:
    out = _out(cfg)
    present = [name for name in ARTIFACTS if (out / name).exists()]
    manifest = write_manifest(out, present, cfg.to_dict())
    print(f"manifest lists {len(manifest['files'])} files in {out}")
    return 0


def cmd_run(cfg: RunConfig, args) -> int:
    steps = [cmd_calibrate, cmd_explain, cmd_evaluate, cmd_lmi, cmd_report]
    if cfg.classifier.kind == "builtin":
        steps.insert(0, cmd_train)
    for step in steps:
        step(cfg, args)
    return 0


def cmd_synth(cfg: RunConfig, args) -> int:
    from .synthetic import mixed_polarity_corpus, write_jsonl

    corpus = mixed_polarity_corpus(args.n, seed=args.seed if args.seed is not None else 0, markers=args.markers)
    path = write_jsonl(corpus, args.path)
    print(f"wrote {len(corpus)} examples to {path}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "calibrate": cmd_calibrate,
    "explain": cmd_explain,
    "evaluate": cmd_evaluate,
    "lmi": cmd_lmi,
    "report": cmd_report,
    "run": cmd_run,
    "synth": cmd_synth,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--corpus", help="corpus file (overrides corpus.path)")
    common.add_argument("--model", help="model file (default OUT/model.json)")
    common.add_argument("--method", choices=["loo", "ss", "sampling-shapley", "both"], help="explainer")
    common.add_argument("--samples", type=int, help="Shapley permutations M")
    common.add_argument("--seed", type=int, help="explainer seed")
    common.add_argument("--k-imp", type=int, dest="k_imp")
    common.add_argument("--k-unc", type=int, dest="k_unc")
    common.add_argument("--out", help="output directory")
    common.add_argument("--workers", type=int)

    parser = argparse.ArgumentParser(prog="uncq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "train": "fit the built-in bag-of-words classifier",
        "calibrate": "fit a softmax temperature on the dev split",
        "evaluate": "remove uncertain and important words and measure confidence change",
        "report": "write manifest.json over the artifacts in the output directory",
        "run": "train (builtin only), calibrate, explain, evaluate, lmi, report",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    explain = sub.add_parser("explain", parents=[common], help="attribute, digest and render examples")
    explain.add_argument("--ids", help="comma-separated example ids from the corpus")
    explain.add_argument("--input", help="corpus file of examples to explain")
    lmi = sub.add_parser("lmi", parents=[common], help="LMI statistics of digest words per label")
    lmi.add_argument("--digests", help="digests.jsonl (default OUT/digests.jsonl)")
    synth = sub.add_parser("synth", parents=[common], help="write a synthetic mixed-polarity corpus")
    synth.add_argument("path")
    synth.add_argument("-n", type=int, default=2000)
    synth.add_argument("--markers", action="store_true", help="add label-exclusive marker tokens")
    return parser


def resolve_config(args) -> RunConfig:
    doc = {}
    if args.config:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8")) if Path(args.config).exists() else None
        if doc is None:
            raise ConfigError(f"config file {args.config} not found")
        load_config(args.config)  # validates the file on its own
    doc = json.loads(json.dumps(doc))
    overrides = {
        ("corpus", "path"): args.corpus,
        ("explainer", "M"): args.samples,
        ("explainer", "seed"): args.seed,
        ("digest", "k_imp"): args.k_imp,
        ("digest", "k_unc"): args.k_unc,
        ("out",): args.out,
        ("workers",): args.workers,
    }
    if args.method and args.method != "both":
        overrides[("explainer", "method")] = canonical_method(args.method)
    for keys, value in overrides.items():
        if value is None:
            continue
        node = doc
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        node[keys[-1]] = value
    return RunConfig.from_dict(doc)


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (ConfigError, ValueError) as err:
        print(f"uncq: invalid configuration: {err}", file=sys.stderr)
        return 1
    try:
        return COMMANDS[args.command](cfg, args)
    except (UsageError, CorpusError, ConfigError) as err:
        print(f"uncq {args.command}: {err}", file=sys.stderr)
        return 1
    except (ModelError, ReportError, OSError, ValueError, KeyError) as err:
        print(f"uncq {args.command}: {type(err).__name__}: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
