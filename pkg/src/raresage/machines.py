"""Shallow classifiers with super-label outputs and entropy-driven selection.

Every machine standardizes its (optionally column-restricted) input, then
scores each super-label with a linear or nearest-mean rule.  Confidence is
``sigmoid(top score - runner-up score)``, so it is 0.5 at a tie and grows
monotonically with the decision margin.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Dataset, Observation, write_text_atomic
from .errors import ConfigError, NotTrainedError, TrainingError, ValidationError
from .labels import LabelSet, LabelSetReport, SuperLabel, validate_label_set
from .rarity import entropy_of_points

__all__ = [
    "KINDS", "FEATURE_MAPS", "LabelSet", "LabelSetReport", "SuperLabel",
    "validate_label_set", "MachineSpec", "TrainConfig", "Machine", "Prediction",
    "train", "predict", "machine_entropy", "orchestrate", "save_machine",
    "load_machine",
]

KINDS = ("centroid", "logistic", "svm_linear")
FEATURE_MAPS = ("identity", "standardize", "projection")
FORMAT_VERSION = 1
TEMPERATURE = 1.0
# entropy feature map used when a spec does not name one
DEFAULT_FEATURE_MAP = {"centroid": "standardize", "logistic": "projection",
                       "svm_linear": "projection"}


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


def _parse_columns(text: str) -> tuple[int, ...]:
    cols: list[int] = []
    for part in text.split("+"):
        if "-" in part:
            lo, hi = part.split("-", 1)
            cols.extend(range(int(lo), int(hi) + 1))
        else:
            cols.append(int(part))
    return tuple(cols)


def _format_columns(cols: tuple[int, ...]) -> str:
    parts, i = [], 0
    while i < len(cols):
        j = i
        while j + 1 < len(cols) and cols[j + 1] == cols[j] + 1:
            j += 1
        parts.append(str(cols[i]) if i == j else f"{cols[i]}-{cols[j]}")
        i = j + 1
    return "+".join(parts)


@dataclass(frozen=True)
class MachineSpec:
    """What to train: family, entropy feature map and the input columns it sees.

    Text form is ``kind[:feature_map][@columns]`` with columns written as
    ranges joined by ``+``, e.g. ``svm_linear:projection@4-7`` or ``centroid@0-3+8``.
    """

    kind: str
    feature_map: str | None = None
    columns: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown machine kind {self.kind!r}; choose from {KINDS}")
        if self.feature_map is None:
            object.__setattr__(self, "feature_map", DEFAULT_FEATURE_MAP[self.kind])
        if self.columns is not None:
            object.__setattr__(self, "columns", tuple(int(c) for c in self.columns))
        if self.feature_map not in FEATURE_MAPS:
            raise ConfigError(f"unknown feature map {self.feature_map!r}")

    @property
    def name(self) -> str:
        text = self.kind
        if self.feature_map != DEFAULT_FEATURE_MAP[self.kind]:
            text += f":{self.feature_map}"
        if self.columns is not None:
            text += "@" + _format_columns(self.columns)
        return text

    @classmethod
    def parse(cls, text: str) -> "MachineSpec":
        text = text.strip()
        cols = None
        if "@" in text:
            text, col_text = text.split("@", 1)
            try:
                cols = _parse_columns(col_text)
            except ValueError:
                raise ConfigError(f"bad column list {col_text!r}") from None
        kind, _, fmap = text.partition(":")
        return cls(kind, fmap or None, cols)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    learning_rate: float = 0.1
    l2: float = 1e-3
    batch_size: int = 32
    logistic_steps: int = 300
    logistic_lr: float = 0.5
    balanced: bool = True
    seed: int = 0


@dataclass(frozen=True)
class Prediction:
    super_label: str
    confidence: float


@dataclass(frozen=True, eq=False)
class Machine:
    kind: str
    label_set: LabelSet
    feature_map: str = "standardize"
    columns: tuple[int, ...] | None = None
    params: dict[str, np.ndarray] = field(default_factory=dict)
    seed: int = 0
    trained: bool = False

    @property
    def name(self) -> str:
        if self.kind == "constant":
            return "constant"
        return MachineSpec(self.kind, self.feature_map, self.columns).name

    @property
    def dim(self) -> int | None:
        mean = self.params.get("mean")
        return None if mean is None else len(mean)

    @classmethod
    def constant(cls, label_set: LabelSet) -> "Machine":
        """Trivial machine for a single-super label set."""
        return cls("constant", label_set, "identity", None, {}, 0, True)

    def _select(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if self.columns is not None:
            if max(self.columns) >= X.shape[1]:
                raise ValidationError(
                    f"dimension mismatch: machine {self.name} reads column "
                    f"{max(self.columns)} but input has {X.shape[1]} features")
            X = X[:, list(self.columns)]
        expected = self.dim
        if expected is not None and X.shape[1] != expected:
            raise ValidationError(f"dimension mismatch: machine expects {expected} "
                                  f"features, got {X.shape[1]}")
        return X

    def _standardize(self, X) -> np.ndarray:
        return (self._select(X) - self.params["mean"]) / self.params["scale"]

    def scores(self, X) -> np.ndarray:
        """Decision score per super-label, shape ``(n, n_supers)``."""
        if not self.trained:
            raise NotTrainedError(f"machine {self.name} is not trained")
        if self.kind == "constant":
            return np.zeros((np.atleast_2d(np.asarray(X)).shape[0], 1))
        Z = self._standardize(X)
        if self.kind == "centroid":
            C = self.params["centroids"]
            diff = Z[:, None, :] - C[None, :, :]
            return -np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        f = Z @ self.params["W"] + self.params["b"]
        if self.kind == "svm_linear" and f.shape[1] == 1:
            return np.hstack([0.5 * f, -0.5 * f])
        return f

    def decide(self, X) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (super index, margin score, confidence) for every row."""
        S = self.scores(X)
        top = np.argmax(S, axis=1)
        if S.shape[1] == 1:
            margin = np.full(S.shape[0], np.inf)
        else:
            part = np.sort(S, axis=1)
            margin = part[:, -1] - part[:, -2]
        return top, margin, sigmoid(margin / TEMPERATURE)

    def predict_many(self, X) -> list[Prediction]:
        top, _, conf = self.decide(X)
        names = self.label_set.names
        return [Prediction(names[t], float(c)) for t, c in zip(top, conf)]

    def transform(self, X) -> np.ndarray:
        """The machine's feature function, used to measure rare-class entropy."""
        if self.feature_map == "identity":
            return self._select(X)
        if self.feature_map == "standardize":
            return self._standardize(X)
        return self.scores(X)

    def accuracy(self, ds: Dataset) -> float:
        ds.require_labeled()
        top, _, _ = self.decide(ds.X)
        names = self.label_set.names
        return float(np.mean([names[t] == lb for t, lb in zip(top, ds.labels)]))

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "label_set": self.label_set.to_dict(),
            "feature_map": self.feature_map,
            "columns": None if self.columns is None else list(self.columns),
            "seed": self.seed,
            "trained": self.trained,
            "params": {k: {"shape": list(v.shape), "values": [float(x) for x in v.ravel()]}
                       for k, v in sorted(self.params.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Machine":
        if d.get("format_version") != FORMAT_VERSION:
            raise ValidationError(f"unsupported machine format version {d.get('format_version')!r}")
        params = {k: np.array(v["values"], dtype=float).reshape(v["shape"])
                  for k, v in d["params"].items()}
        cols = d.get("columns")
        return cls(d["kind"], LabelSet.from_dict(d["label_set"]), d["feature_map"],
                   None if cols is None else tuple(cols), params, d["seed"], d["trained"])


def _class_weights(y: np.ndarray, k: int, balanced: bool) -> np.ndarray:
    if not balanced:
        return np.ones(len(y))
    counts = np.bincount(y, minlength=k).astype(float)
    return (len(y) / (k * counts))[y]


def _fit_svm(Z, y, k, cfg: TrainConfig, rng) -> tuple[np.ndarray, np.ndarray]:
    # one-vs-rest hinge loss + L2; a single separator when there are two supers
    n, d = Z.shape
    cols = 1 if k == 2 else k
    if k == 2:
        Y = np.where(y == 0, 1.0, -1.0)[:, None]
    else:
        Y = np.where(y[:, None] == np.arange(k)[None, :], 1.0, -1.0)
    if cfg.balanced:
        pos = (Y > 0).sum(axis=0)
        neg = n - pos
        Wt = np.where(Y > 0, n / (2.0 * pos), n / (2.0 * neg))
    else:
        Wt = np.ones_like(Y)
    W = np.zeros((d, cols))
    b = np.zeros(cols)
    t = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            t += 1
            eta = cfg.learning_rate / (1.0 + cfg.learning_rate * cfg.l2 * t)
            Zb, Yb, Wb = Z[idx], Y[idx], Wt[idx]
            active = (Yb * (Zb @ W + b)) < 1.0
            G = Yb * Wb * active
            W -= eta * (cfg.l2 * W - Zb.T @ G / len(idx))
            b -= eta * (-G.sum(axis=0) / len(idx))
    return W, b


def _fit_logistic(Z, y, k, cfg: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    n, d = Z.shape
    onehot = np.zeros((n, k))
    onehot[np.arange(n), y] = 1.0
    sw = _class_weights(y, k, cfg.balanced)[:, None]
    W = np.zeros((d, k))
    b = np.zeros(k)
    for _ in range(cfg.logistic_steps):
        logits = Z @ W + b
        logits -= logits.max(axis=1, keepdims=True)
        P = np.exp(logits)
        P /= P.sum(axis=1, keepdims=True)
        G = sw * (P - onehot) / n
        W -= cfg.logistic_lr * (Z.T @ G + cfg.l2 * W)
        b -= cfg.logistic_lr * G.sum(axis=0)
    return W, b


def train(spec: MachineSpec | str, ds: Dataset, config: TrainConfig | None = None,
          label_set: LabelSet | None = None) -> Machine:
    """Fit a machine on a dataset whose labels are already super-label names.

    ``label_set`` records which original classes each super covers; when it is
    omitted every class of ``ds`` becomes its own super.
    """
    if isinstance(spec, str):
        spec = MachineSpec.parse(spec)
    cfg = config or TrainConfig()
    if label_set is None:
        label_set = LabelSet(SuperLabel(c, [c]) for c in ds.classes)
    elif tuple(label_set.names) != tuple(ds.classes):
        raise ValidationError(f"dataset classes {list(ds.classes)} do not match "
                              f"label set {list(label_set.names)}")
    ds.require_labeled()
    k = len(label_set.names)
    if k < 2:
        raise TrainingError("training needs at least two super-labels")
    index = {name: i for i, name in enumerate(label_set.names)}
    y = np.array([index[lb] for lb in ds.labels], dtype=int)
    counts = np.bincount(y, minlength=k)
    if np.any(counts == 0):
        empty = [label_set.names[i] for i in np.flatnonzero(counts == 0)]
        raise TrainingError(f"no training examples for {empty}")

    probe = Machine(spec.kind, label_set, spec.feature_map, spec.columns)
    X = probe._select(ds.X)
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - mean) / scale
    params = {"mean": mean, "scale": scale}
    if spec.kind == "centroid":
        params["centroids"] = np.stack([Z[y == i].mean(axis=0) for i in range(k)])
    elif spec.kind == "logistic":
        params["W"], params["b"] = _fit_logistic(Z, y, k, cfg)
    else:
        rng = np.random.default_rng(cfg.seed)
        params["W"], params["b"] = _fit_svm(Z, y, k, cfg, rng)
    for v in params.values():
        v.setflags(write=False)
    return Machine(spec.kind, label_set, spec.feature_map, spec.columns, params,
                   cfg.seed, True)


def predict(machine: Machine, obs: Observation | np.ndarray | Sequence[float]) -> Prediction:
    x = obs.features if isinstance(obs, Observation) else obs
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValidationError("predict expects a single feature vector")
    return machine.predict_many(x[None, :])[0]


def machine_entropy(machine: Machine, ds: Dataset, rare: str, K: int | None = None,
                    metric: str = "euclidean") -> float:
    """Entropy of the rare class after mapping it through the machine's feature function."""
    if rare not in ds.classes:
        raise ValidationError(f"unknown class {rare!r}")
    return entropy_of_points(machine.transform(ds.features_of(rare)), K, metric)


def orchestrate(roster: Sequence[Machine], ds: Dataset, rare: str, K: int | None = None,
                metric: str = "euclidean") -> tuple[Machine, list[tuple[str, float]]]:
    """Pick the roster member giving the rare class the lowest entropy.

    Returns the winner and the ``(machine name, entropy)`` table in roster order;
    the earliest member wins a tie.
    """
    if not roster:
        raise ValidationError("empty roster")
    ref = roster[0].label_set.to_dict()
    for m in roster[1:]:
        if m.label_set.to_dict() != ref:
            raise ValidationError("roster machines must share one label set")
    table = [(m.name, machine_entropy(m, ds, rare, K, metric)) for m in roster]
    best = 0
    for i, (_, theta) in enumerate(table):
        if theta < table[best][1]:
            best = i
    return roster[best], table


def save_machine(machine: Machine, path) -> None:
    write_text_atomic(path, json.dumps(machine.to_dict(), indent=1, sort_keys=True) + "\n")


def load_machine(path) -> Machine:
    with open(path, encoding="utf-8") as fh:
        return Machine.from_dict(json.load(fh))
