"""Corpus ingestion: tokenization, labeled corpora, splits and vocabularies."""

from __future__ import annotations

import csv
import json
import math
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np


class CorpusError(ValueError):
    """Raised for malformed corpus files or invalid corpus operations."""


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str, lowercase: bool = True) -> list[str]:
    """Split ``text`` into words.

    Chunks are separated by Unicode whitespace. Punctuation at either edge of
    a chunk is emitted as single-character tokens; interior punctuation
    (apostrophes, hyphens) stays attached.

    >>> tokenize("Not bad, really.")
    ['not', 'bad', ',', 'really', '.']
    """
    tokens: list[str] = []
    for chunk in text.split():
        start, end = 0, len(chunk)
        while start < end and _is_punct(chunk[start]):
            start += 1
        while end > start and _is_punct(chunk[end - 1]):
            end -= 1
        tokens.extend(chunk[:start])
        if start < end:
            tokens.append(chunk[start:end])
        tokens.extend(chunk[end:])
    if lowercase:
        tokens = [t.lower() for t in tokens]
    return tokens


@dataclass(frozen=True)
class TokenizedExample:
    id: str
    tokens: tuple[str, ...]
    gold_label: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        for t in self.tokens:
            if not t or any(ch.isspace() for ch in t):
                raise CorpusError(f"invalid token {t!r} in example {self.id!r}")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class LabelSpace:
    names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if len(set(self.names)) != len(self.names):
            raise CorpusError(f"duplicate label names: {self.names}")

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


@dataclass(frozen=True)
class Corpus:
    label_space: LabelSpace
    examples: tuple[TokenizedExample, ...]

    def __post_init__(self):
        object.__setattr__(self, "examples", tuple(self.examples))
        C = len(self.label_space)
        seen = set()
        for ex in self.examples:
            if ex.id in seen:
                raise CorpusError(f"duplicate example id {ex.id!r}")
            seen.add(ex.id)
            if ex.gold_label is not None and not 0 <= ex.gold_label < C:
                raise CorpusError(f"example {ex.id!r}: gold label {ex.gold_label} outside [0, {C})")

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def by_id(self, example_id: str) -> TokenizedExample:
        for ex in self.examples:
            if ex.id == example_id:
                return ex
        raise KeyError(example_id)

    def mean_length(self) -> float:
        if not self.examples:
            return 0.0
        return sum(len(ex) for ex in self.examples) / len(self.examples)


def corpus_from_records(records: Iterable[tuple[str, str, str]], lowercase: bool = True) -> Corpus:
    """Build a corpus from ``(id, text, label_name)`` triples.

    Labels are indexed in order of first appearance.
    """
    names: list[str] = []
    index: dict[str, int] = {}
    examples = []
    for ex_id, text, label in records:
        if label not in index:
            index[label] = len(names)
            names.append(label)
        examples.append(TokenizedExample(ex_id, tokenize(text, lowercase), index[label]))
    return Corpus(LabelSpace(names), examples)


def _read_jsonl(path: Path):
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as err:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({err.msg})") from None
            if not isinstance(rec, dict):
                raise CorpusError(f"{path}:{lineno}: expected a JSON object")
            for key in ("text", "label"):
                if not isinstance(rec.get(key), str):
                    raise CorpusError(f"{path}:{lineno}: missing or non-string field {key!r}")
            ex_id = rec.get("id", str(lineno))
            if not isinstance(ex_id, str):
                raise CorpusError(f"{path}:{lineno}: field 'id' must be a string")
            yield ex_id, rec["text"], rec["label"]


def _read_csv(path: Path):
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = {"text", "label"} - set(header)
        if missing:
            raise CorpusError(f"{path}:1: header lacks column(s) {sorted(missing)}")
        for row in reader:
            lineno = reader.line_num
            if None in row or any(row.get(k) is None for k in ("text", "label")):
                raise CorpusError(f"{path}:{lineno}: wrong number of fields")
            ex_id = row.get("id") or str(reader.line_num - 1)
            yield ex_id, row["text"], row["label"]


def load_corpus(path, format: Optional[str] = None, lowercase: bool = True) -> Corpus:
    """Load a ``jsonl`` or ``csv`` corpus; ``format`` defaults to the file suffix."""
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt == "jsonl":
        records = _read_jsonl(path)
    elif fmt == "csv":
        records = _read_csv(path)
    else:
        raise CorpusError(f"unknown corpus format {fmt!r} (expected jsonl or csv)")
    try:
        return corpus_from_records(records, lowercase=lowercase)
    except OSError as err:
        raise CorpusError(f"cannot read {path}: {err}") from err


def split_corpus(corpus: Corpus, ratios: Sequence[float] = (0.8, 0.1, 0.1), seed: int = 0):
    """Shuffle with ``seed`` and cut into (train, dev, test).

    Dev and test sizes are floored; the remainder goes to train.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise CorpusError(f"split ratios must be three non-negative numbers summing to 1, got {tuple(ratios)}")
    n = len(corpus)
    if n == 0:
        raise CorpusError("cannot split an empty corpus")
    order = np.random.default_rng(seed).permutation(n)
    # guard against 0.7 * 10 = 6.999...
    n_dev = math.floor(n * ratios[1] + 1e-9)
    n_test = math.floor(n * ratios[2] + 1e-9)
    n_train = n - n_dev - n_test
    parts = np.split(order, [n_train, n_train + n_dev])
    return tuple(Corpus(corpus.label_space, [corpus.examples[i] for i in part]) for part in parts)


@dataclass(frozen=True)
class Vocabulary:
    """Token ids ordered by descending corpus frequency (ties lexicographic)."""

    tokens: tuple[str, ...]
    counts: tuple[int, ...]
    min_count: int = 1
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def id(self, token: str) -> int:
        return self._index[token]

    def get(self, token: str, default=None):
        return self._index.get(token, default)

    def frequency(self, token: str) -> int:
        return self.counts[self._index[token]]


def build_vocab(corpus: Corpus, min_count: int = 1) -> Vocabulary:
    if min_count < 1:
        raise CorpusError("min_count must be >= 1")
    freq = Counter(t for ex in corpus for t in ex.tokens)
    kept = sorted((t for t, c in freq.items() if c >= min_count), key=lambda t: (-freq[t], t))
    return Vocabulary(tuple(kept), tuple(freq[t] for t in kept), min_count)


def relabel(corpus: Corpus, label_space: LabelSpace) -> Corpus:
    """Re-index gold labels into ``label_space`` (matched by class name)."""
    if corpus.label_space == label_space:
        return corpus
    unknown = [n for n in corpus.label_space.names if n not in label_space.names]
    if unknown:
        raise CorpusError(f"labels {unknown} are not in {list(label_space.names)}")
    remap = [label_space.index(n) for n in corpus.label_space.names]
    examples = [
        TokenizedExample(ex.id, ex.tokens, None if ex.gold_label is None else remap[ex.gold_label]) for ex in corpus
    ]
    return Corpus(label_space, examples)
