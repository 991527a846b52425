"""Static HTML explanations and on-disk run artifacts."""

from __future__ import annotations

import csv
import hashlib
import html
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .attribution import Attribution, ExplanationDigest
from .classifier import Prediction
from .corpus import LabelSpace, TokenizedExample
from .lmi import write_rows


class ReportError(RuntimeError):
    pass


@dataclass(frozen=True)
class RenderSpec:
    max_highlight: int = 2
    important_rgb: tuple[int, int, int] = (31, 95, 191)
    uncertain_rgb: tuple[int, int, int] = (200, 40, 45)


def highlight_intensities(digest: ExplanationDigest, spec: RenderSpec = RenderSpec()) -> dict[int, tuple[str, float]]:
    """Map position -> (group, opacity) for the highlighted words.

    Opacity is ``|score|`` over the largest ``|score|`` among highlighted words.
    """
    chosen = [("important", e) for e in digest.important[: spec.max_highlight]]
    chosen += [("uncertain", e) for e in digest.uncertain[: spec.max_highlight]]
    if not chosen:
        return {}
    top = max(abs(e.score) for _, e in chosen)
    return {e.position: (group, abs(e.score) / top) for group, e in chosen}


def _css_rgba(rgb, alpha: float) -> str:
    return f"rgba({rgb[0]}, {rgb[1]}, {rgb[2]}, {alpha:.3f})"


def render_example_block(
    example: TokenizedExample,
    prediction: Prediction,
    digest: ExplanationDigest,
    post_removal_confidence: Optional[float] = None,
    spec: RenderSpec = RenderSpec(),
    label_space: Optional[LabelSpace] = None,
) -> str:
    n = len(example.tokens)
    bad = [e.position for e in (*digest.important, *digest.uncertain) if not 0 <= e.position < n]
    if bad:
        raise ReportError(f"digest positions {bad} out of range for example {example.id!r} ({n} tokens)")

    y = prediction.predicted_class
    label = label_space.names[y] if label_space is not None else str(y)
    conf = f"{prediction.confidence:.2f}"
    if post_removal_confidence is not None:
        conf += f" → {post_removal_confidence:.2f}"
    marks = highlight_intensities(digest, spec)

    words = []
    for i, tok in enumerate(example.tokens):
        text = html.escape(tok, quote=True)
        if i in marks:
            group, alpha = marks[i]
            rgb = spec.important_rgb if group == "important" else spec.uncertain_rgb
            words.append(
                f'<span class="{group}" data-intensity="{alpha:.6f}" '
                f'style="background-color: {_css_rgba(rgb, alpha)}; padding: 0 2px; border-radius: 2px;">{text}</span>'
            )
        else:
            words.append(text)
    ex_id = html.escape(example.id, quote=True)
    return (
        f'<div class="example" id="ex-{ex_id}" style="margin: 0 0 1.2em 0;">\n'
        f'<p class="header" style="font-weight: bold; margin: 0 0 0.3em 0;">{html.escape(label)} ({conf})'
        f' <span style="font-weight: normal; color: #777;">[{ex_id}]</span></p>\n'
        f'<p class="tokens" style="line-height: 1.7; margin: 0;">{" ".join(words)}</p>\n'
        "</div>"
    )


def _document(title: str, body: str) -> str:
    return (
        "<!DOCTYPE html>\n"
        '<html lang="en">\n<head>\n<meta charset="utf-8" />\n'
        f"<title>{html.escape(title)}</title>\n</head>\n"
        '<body style="font-family: sans-serif; max-width: 52em; margin: 2em auto;">\n'
        f"{body}\n</body>\n</html>\n"
    )


def _legend(spec: RenderSpec) -> str:
    return (
        '<p class="legend" style="color: #555;">'
        f'<span style="background-color: {_css_rgba(spec.important_rgb, 0.8)}; padding: 0 3px;">important</span> '
        f'<span style="background-color: {_css_rgba(spec.uncertain_rgb, 0.8)}; padding: 0 3px;">uncertain</span> '
        "darker means a larger contribution; brackets show confidence before and after removing uncertain words</p>"
    )


def render_example_html(
    example: TokenizedExample,
    prediction: Prediction,
    digest: ExplanationDigest,
    post_removal_confidence: Optional[float] = None,
    spec: RenderSpec = RenderSpec(),
    label_space: Optional[LabelSpace] = None,
) -> str:
    """A self-contained HTML page highlighting important (blue) and uncertain (red) words."""
    block = render_example_block(example, prediction, digest, post_removal_confidence, spec, label_space)
    return _document(f"Explanation {example.id}", block)


def render_report(blocks: Sequence[str], spec: RenderSpec = RenderSpec(), title: str = "Explanations") -> str:
    body = f"<h1>{html.escape(title)}</h1>\n{_legend(spec)}\n" + "\n".join(blocks)
    return _document(title, body)


@dataclass(frozen=True)
class RenderedExample:
    example: TokenizedExample
    prediction: Prediction
    digest: ExplanationDigest
    post_removal_confidence: Optional[float] = None


def _jsonl(docs) -> str:
    return "".join(json.dumps(d, sort_keys=True, ensure_ascii=False) + "\n" for d in docs)


def _write(out_dir: Path, name: str, data) -> Path:
    path = out_dir / name
    try:
        if isinstance(data, str):
            path.write_text(data, encoding="utf-8")
        else:
            path.write_bytes(data)
    except OSError as err:
        raise ReportError(f"cannot write {name}: {err}") from err
    return path


def file_entry(path: Path) -> dict:
    blob = path.read_bytes()
    return {"name": path.name, "sha256": hashlib.sha256(blob).hexdigest(), "bytes": len(blob)}


def write_manifest(out_dir, names: Sequence[str], config: Optional[dict] = None) -> dict:
    out_dir = Path(out_dir)
    manifest = {"files": [file_entry(out_dir / n) for n in sorted(set(names))]}
    if config is not None:
        manifest["config"] = config
    _write(out_dir, "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def export_run(
    out_dir,
    attributions: Sequence[Attribution] = (),
    digests: Sequence[ExplanationDigest] = (),
    reports: Sequence = (),
    lmi: Sequence = (),
    calibration=None,
    rendered: Sequence[RenderedExample] = (),
    label_space: Optional[LabelSpace] = None,
    config: Optional[dict] = None,
    figures: bool = True,
    spec: RenderSpec = RenderSpec(),
) -> dict:
    """Write every provided artifact into ``out_dir`` and return the manifest.

    ``calibration`` is a :class:`CalibrationResult` or a dict already in its
    JSON shape. Figures are rendered next to the data they plot.
    """
    from . import evaluation, plots

    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise ReportError(f"cannot create {out_dir}: {err}") from err
    names: list[str] = []
    label_names = list(label_space.names) if label_space is not None else None

    if attributions:
        names.append(_write(out_dir, "attributions.jsonl", _jsonl(a.to_dict() for a in attributions)).name)
    if digests:
        names.append(_write(out_dir, "digests.jsonl", _jsonl(d.to_dict() for d in digests)).name)
    if reports:
        names.append(_write(out_dir, "confidence_change.json", evaluation.reports_to_json(reports)).name)
        names.append(_write(out_dir, "confidence_change.csv", evaluation.reports_to_csv(reports)).name)
        if figures:
            names.append(plots.save(plots.confidence_change_chart(reports), out_dir / "confidence_change.png").name)
    if lmi:
        names.append(_write(out_dir, "lmi.csv", lmi_csv(lmi, label_names)).name)
        if figures:
            names.append(plots.save(plots.lmi_scatter(lmi, label_names), out_dir / "lmi.png").name)
    if calibration is not None:
        doc = calibration if isinstance(calibration, dict) else calibration.to_dict()
        names.append(_write(out_dir, "calibration.json", json.dumps(doc, indent=2, sort_keys=True) + "\n").name)
        if figures and not isinstance(calibration, dict):
            fig = plots.reliability_diagram(calibration.pre_bins, calibration.bins, calibration.temperature)
            names.append(plots.save(fig, out_dir / "reliability.png").name)
    if rendered:
        blocks = [
            render_example_block(r.example, r.prediction, r.digest, r.post_removal_confidence, spec, label_space)
            for r in rendered
        ]
        names.append(_write(out_dir, "report.html", render_report(blocks, spec)).name)
    return write_manifest(out_dir, names, config)


def lmi_csv(dists, label_names=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["group", "token", "label", "p_lmi", "frequency_rank"])
    for dist in dists:
        write_rows(writer, dist, label_names)
    return buf.getvalue()


def read_jsonl(path) -> list[dict]:
    with Path(path).open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
