"""Observation/dataset containers and the embeddings CSV format.

The CSV header is ``id,domain,class,f0,...,f{d-1}``.  An empty ``class``
field marks an unlabeled observation, which only test-set loaders accept.
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError, ValidationError
from .labels import LabelSet, SuperLabel, validate_label_set

FIXED_COLUMNS = ("id", "domain", "class")


@dataclass(frozen=True, eq=False)
class Observation:
    id: str
    domain_id: str
    label: str | None
    features: np.ndarray


class Dataset:
    """Immutable table of observations sharing one feature dimension.

    Features live in a single read-only ``(n, d)`` float array ``X``; per-row
    :class:`Observation` views are built on demand.
    """

    __slots__ = ("ids", "domains", "labels", "X", "classes")

    def __init__(self, ids: Sequence[str], domains: Sequence[str],
                 labels: Sequence[str | None], X, classes: Sequence[str] | None = None):
        X = np.array(X, dtype=float, copy=True)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        n = len(ids)
        if n == 0:
            raise ValidationError("dataset must contain at least one observation")
        if X.shape[0] != n or len(domains) != n or len(labels) != n:
            raise ValidationError("ids, domains, labels and features disagree in length")
        if X.shape[1] < 1:
            raise ValidationError("feature dimension must be positive")
        if not np.all(np.isfinite(X)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(X), axis=1))[0])
            raise ValidationError(f"observation {ids[bad]!r} has non-finite features")
        if classes is None:
            classes = list(dict.fromkeys(lb for lb in labels if lb is not None))
        classes = tuple(classes)
        if len(set(classes)) != len(classes):
            raise ValidationError("class names must be unique")
        known = set(classes)
        for i, lb in enumerate(labels):
            if lb is not None and lb not in known:
                raise ValidationError(f"observation {ids[i]!r} has unknown class {lb!r}")
        seen: set[str] = set()
        for i in ids:
            if i in seen:
                raise ValidationError(f"duplicate observation id {i!r}")
            seen.add(i)
        X.setflags(write=False)
        object.__setattr__(self, "ids", tuple(ids))
        object.__setattr__(self, "domains", tuple(domains))
        object.__setattr__(self, "labels", tuple(labels))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "classes", classes)

    def __setattr__(self, name, value):
        raise AttributeError("Dataset is immutable")

    def __len__(self) -> int:
        return len(self.ids)

    def __getitem__(self, i: int) -> Observation:
        return Observation(self.ids[i], self.domains[i], self.labels[i], self.X[i])

    def __repr__(self) -> str:
        return f"Dataset(n={len(self)}, dim={self.dim}, classes={list(self.classes)})"

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def observations(self) -> list[Observation]:
        return [self[i] for i in range(len(self))]

    @property
    def is_labeled(self) -> bool:
        return all(lb is not None for lb in self.labels)

    def label_array(self) -> np.ndarray:
        return np.array(["" if lb is None else lb for lb in self.labels], dtype=object)

    def indices_of(self, cls: str) -> np.ndarray:
        return np.array([i for i, lb in enumerate(self.labels) if lb == cls], dtype=int)

    def features_of(self, cls: str) -> np.ndarray:
        return self.X[self.indices_of(cls)]

    def counts(self) -> dict[str, int]:
        return {c: sum(1 for lb in self.labels if lb == c) for c in self.classes}

    def subset(self, index: Iterable[int], classes: Sequence[str] | None = None) -> "Dataset":
        idx = list(index)
        return Dataset([self.ids[i] for i in idx], [self.domains[i] for i in idx],
                       [self.labels[i] for i in idx], self.X[idx],
                       self.classes if classes is None else classes)

    def without_classes(self, drop: Iterable[str]) -> "Dataset":
        drop = set(drop)
        keep = [i for i, lb in enumerate(self.labels) if lb not in drop]
        return self.subset(keep, [c for c in self.classes if c not in drop])

    def with_features(self, X) -> "Dataset":
        return Dataset(self.ids, self.domains, self.labels, X, self.classes)

    def with_labels(self, labels: Sequence[str | None], classes: Sequence[str]) -> "Dataset":
        return Dataset(self.ids, self.domains, labels, self.X, classes)

    def require_labeled(self) -> None:
        for i, lb in enumerate(self.labels):
            if lb is None:
                raise ValidationError(f"observation {self.ids[i]!r} is unlabeled")


def load_embeddings(path, *, allow_unlabeled: bool = False,
                    normalize: bool = False) -> Dataset:
    """Read an embeddings CSV.

    Rows are reported by 1-based file line (the header is line 1).  With
    ``normalize`` every feature vector is scaled to unit L2 norm.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"embeddings file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if tuple(header[:3]) != FIXED_COLUMNS or len(header) < 4:
            raise FormatError(f"{path}: header must start with id,domain,class and "
                              f"have at least one feature column")
        for j, name in enumerate(header[3:]):
            if name != f"f{j}":
                raise FormatError(f"{path}: feature column {j} is named {name!r}, "
                                  f"expected 'f{j}'")
        width = len(header)
        ids, domains, labels, rows = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != width:
                raise FormatError(f"{path}: row {lineno} has {len(row)} columns, "
                                  f"header has {width}")
            try:
                vals = [float(v) for v in row[3:]]
            except ValueError:
                raise FormatError(f"{path}: row {lineno} has a non-numeric feature") from None
            if not all(math.isfinite(v) for v in vals):
                raise FormatError(f"{path}: row {lineno} has a non-finite feature")
            label = row[2].strip() or None
            if label is None and not allow_unlabeled:
                raise ValidationError(f"{path}: row {lineno} is unlabeled; unlabeled rows "
                                      f"are only allowed in test sets")
            ids.append(row[0])
            domains.append(row[1])
            labels.append(label)
            rows.append(vals)
    if not rows:
        raise FormatError(f"{path}: no observations")
    X = np.array(rows, dtype=float)
    if normalize:
        norms = np.linalg.norm(X, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise ValidationError(f"{path}: cannot normalize a zero feature vector")
        X = X / norms
    return Dataset(ids, domains, labels, X)


def format_float(v: float) -> str:
    # repr round-trips exactly; keeps output byte-stable
    return repr(float(v))


def write_text_atomic(path, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def embeddings_csv(ds: Dataset) -> str:
    lines = [",".join(FIXED_COLUMNS + tuple(f"f{j}" for j in range(ds.dim)))]
    for i in range(len(ds)):
        lb = ds.labels[i] or ""
        feats = ",".join(format_float(v) for v in ds.X[i])
        lines.append(f"{ds.ids[i]},{ds.domains[i]},{lb},{feats}")
    return "\n".join(lines) + "\n"


def save_embeddings(ds: Dataset, path) -> None:
    write_text_atomic(path, embeddings_csv(ds))


def split_by_domain(ds: Dataset) -> dict[str, Dataset]:
    groups: dict[str, list[int]] = {}
    for i, dom in enumerate(ds.domains):
        groups.setdefault(dom, []).append(i)
    return {dom: ds.subset(idx) for dom, idx in groups.items()}


def relabel(ds: Dataset, supers: LabelSet | Sequence[SuperLabel]) -> Dataset:
    """Replace every label by the name of the super-label containing it."""
    label_set = supers if isinstance(supers, LabelSet) else LabelSet(supers)
    report = validate_label_set(label_set, ds.classes)
    if not report.ok:
        raise ValidationError(f"invalid label set: {report.describe()}")
    mapping = {c: label_set.super_of(c) for c in ds.classes}
    new_labels = [None if lb is None else mapping[lb] for lb in ds.labels]
    return ds.with_labels(new_labels, label_set.names)
