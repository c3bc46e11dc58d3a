"""Rare-class staging, machine selection and the knowledge-override fusion rule.

Each stage peels one rare class off the working set: a data-driven machine
separates the overlap class from everything else, a knowledge machine
separates the rare class from the remaining normal classes, and the fusion
rule lets a confident knowledge verdict overturn an "overlap" call.
"""

from __future__ import annotations

import configparser
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .data import Dataset, Observation, relabel, write_text_atomic
from .errors import ConfigError, NoRareClassError, ValidationError
from .labels import LabelSet, SuperLabel
from .machines import Machine, MachineSpec, Prediction, TrainConfig, orchestrate, train
from .rarity import (METRICS, cosine_similarity, class_centroid, entropy_profile,
                     find_overlap_class, identify_rare)

log = logging.getLogger(__name__)

OVERLAP, NOT_OVERLAP = "OVERLAP", "NOT_OVERLAP"
RARE, NONRARE = "RARE", "NONRARE"
MODEL_FORMAT_VERSION = 1

# branch codes reported by RareSaGeModel.trace
BRANCH_OVERRIDE = "override"      # overlap call overturned by confident knowledge
BRANCH_OVERLAP = "overlap"
BRANCH_RARE = "rare"              # non-overlap, knowledge says rare
BRANCH_RESIDUAL = "residual"

DEFAULT_DL_ROSTER = (MachineSpec("centroid"), MachineSpec("logistic"),
                     MachineSpec("svm_linear"))


def _specs(items) -> tuple[MachineSpec, ...]:
    out = []
    for it in items:
        out.append(it if isinstance(it, MachineSpec) else MachineSpec.parse(it))
    return tuple(out)


@dataclass(frozen=True)
class PipelineConfig:
    K: int | None = None
    multiplier: float = 1.0
    t_c: float = 0.9
    dl_roster: tuple[MachineSpec, ...] = DEFAULT_DL_ROSTER
    k_roster: tuple[MachineSpec, ...] = ()
    max_stages: int = 5
    seed: int = 0
    metric: str = "euclidean"
    rarity_columns: tuple[int, ...] | None = None
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        object.__setattr__(self, "dl_roster", _specs(self.dl_roster))
        object.__setattr__(self, "k_roster", _specs(self.k_roster))
        if self.rarity_columns is not None:
            object.__setattr__(self, "rarity_columns", tuple(self.rarity_columns))
        if self.train.seed != self.seed:
            object.__setattr__(self, "train", replace(self.train, seed=self.seed))
        self.validate()

    def validate(self) -> None:
        if not 0 < self.t_c <= 1:
            raise ConfigError(f"t_c must lie in (0, 1], got {self.t_c}")
        if self.max_stages < 1:
            raise ConfigError("max_stages must be >= 1")
        if self.multiplier <= 0:
            raise ConfigError("multiplier must be positive")
        if self.K is not None and self.K < 1:
            raise ConfigError("K must be >= 1")
        if not self.dl_roster:
            raise ConfigError("dl_roster must name at least one machine")
        if self.metric not in METRICS:
            raise ConfigError(f"unknown metric {self.metric!r}")

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "multiplier": self.multiplier,
            "t_c": self.t_c,
            "dl_roster": [s.name for s in self.dl_roster],
            "k_roster": [s.name for s in self.k_roster],
            "max_stages": self.max_stages,
            "seed": self.seed,
            "metric": self.metric,
            "rarity_columns": None if self.rarity_columns is None else list(self.rarity_columns),
            "train": asdict(self.train),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        train_cfg = TrainConfig(**d.pop("train", {}))
        return cls(train=train_cfg, **d)


def _column_list(text: str) -> tuple[int, ...]:
    return MachineSpec.parse("centroid@" + text).columns


def read_pipeline_config(path, **overrides) -> PipelineConfig:
    """Load a ``[pipeline]`` (and optional ``[train]``) INI file; keyword overrides win."""
    cp = configparser.ConfigParser()
    try:
        if not cp.read(path, encoding="utf-8"):
            raise FileNotFoundError(f"config file not found: {path}")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    values: dict = {}
    try:
        if "pipeline" in cp:
            s = cp["pipeline"]
            if "k" in s:
                values["K"] = None if s["k"].strip().lower() in ("", "auto") else s.getint("k")
            for key, conv in (("multiplier", s.getfloat), ("t_c", s.getfloat),
                              ("max_stages", s.getint), ("seed", s.getint)):
                if key in s:
                    values[key] = conv(key)
            if "metric" in s:
                values["metric"] = s["metric"].strip()
            for key in ("dl_roster", "k_roster"):
                if key in s:
                    values[key] = tuple(p for p in s[key].split(",") if p.strip())
            if "rarity_columns" in s and s["rarity_columns"].strip():
                values["rarity_columns"] = _column_list(s["rarity_columns"].strip())
        if "train" in cp:
            t = cp["train"]
            tkw = {}
            for f in TrainConfig.__dataclass_fields__.values():
                if f.name in t and f.name != "seed":
                    raw = t[f.name]
                    tkw[f.name] = (t.getboolean(f.name) if f.type in (bool, "bool")
                                   else type(getattr(TrainConfig(), f.name))(raw))
            values["train"] = TrainConfig(**tkw)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    values.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig(**values)


def fuse(dl_label: str, eke: Prediction, t_c: float, rare: str = RARE,
         overlap: str = OVERLAP, nonrare: str = NONRARE) -> str:
    """Final label from the overlap machine's call and the knowledge prediction.

    Returns ``rare``, ``overlap`` or ``nonrare``.  The override needs a
    confidence strictly above ``t_c``.
    """
    if dl_label == OVERLAP:
        if eke.super_label == RARE and eke.confidence > t_c:
            return rare
        return overlap
    if dl_label != NOT_OVERLAP:
        raise ValidationError(f"unknown overlap-machine label {dl_label!r}")
    return rare if eke.super_label == RARE else nonrare


@dataclass(frozen=True, eq=False)
class StagePlan:
    rare: str
    overlap: str
    dl_machine: Machine
    k_machine: Machine
    dl_table: tuple[tuple[str, float], ...]
    k_table: tuple[tuple[str, float], ...]
    thetas: dict[str, float] = field(default_factory=dict)
    similarities: dict[str, float] = field(default_factory=dict)
    dl_accuracy: float = float("nan")
    k_accuracy: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "rare": self.rare,
            "overlap": self.overlap,
            "thetas": self.thetas,
            "similarities": self.similarities,
            "dl_table": [list(r) for r in self.dl_table],
            "k_table": [list(r) for r in self.k_table],
            "dl_accuracy": self.dl_accuracy,
            "k_accuracy": self.k_accuracy,
            "dl_machine": self.dl_machine.to_dict(),
            "k_machine": self.k_machine.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StagePlan":
        return cls(d["rare"], d["overlap"], Machine.from_dict(d["dl_machine"]),
                   Machine.from_dict(d["k_machine"]),
                   tuple(tuple(r) for r in d["dl_table"]),
                   tuple(tuple(r) for r in d["k_table"]),
                   dict(d["thetas"]), dict(d["similarities"]),
                   d["dl_accuracy"], d["k_accuracy"])


def _rarity_view(ds: Dataset, cfg: PipelineConfig) -> Dataset:
    if cfg.rarity_columns is None:
        return ds
    return ds.with_features(ds.X[:, list(cfg.rarity_columns)])


def plan_stage(ds: Dataset, cfg: PipelineConfig) -> StagePlan:
    """Find the rarest class and its overlap class, then pick both machines.

    Raises :class:`NoRareClassError` when the entropy test flags nothing.
    """
    ds.require_labeled()
    if len(ds.classes) < 2:
        raise ValidationError("a stage needs at least two classes")
    view = _rarity_view(ds, cfg)
    profile = entropy_profile(view, cfg.K, cfg.metric)
    verdict = identify_rare(profile, cfg.multiplier)
    if verdict.rarest is None:
        raise NoRareClassError(f"no rare class among {list(ds.classes)}")
    rare = verdict.rarest
    others = [c for c in ds.classes if c != rare]
    if len(others) == 1:
        overlap = others[0]
        try:
            sims = {overlap: cosine_similarity(class_centroid(view, rare),
                                               class_centroid(view, overlap))}
        except ValidationError:
            sims = {}
    else:
        overlap, sims = find_overlap_class(view, rare)

    not_overlap = [c for c in ds.classes if c != overlap]
    dl_set = LabelSet.binary(OVERLAP, [overlap], NOT_OVERLAP, not_overlap)
    dl_ds = relabel(ds, dl_set)
    dl_roster = [train(s, dl_ds, cfg.train, dl_set) for s in cfg.dl_roster]
    dl_machine, dl_table = orchestrate(dl_roster, ds, rare, cfg.K, cfg.metric)

    pool = ds.without_classes([overlap])
    normal = [c for c in pool.classes if c != rare]
    if not normal:
        # only the rare and overlap classes are left: knowledge machine sees both
        pool, normal = ds, [overlap]
    k_set = LabelSet.binary(RARE, [rare], NONRARE, normal)
    k_ds = relabel(pool, k_set)
    k_specs = cfg.k_roster or cfg.dl_roster
    k_roster = [train(s, k_ds, cfg.train, k_set) for s in k_specs]
    k_machine, k_table = orchestrate(k_roster, ds, rare, cfg.K, cfg.metric)

    plan = StagePlan(rare, overlap, dl_machine, k_machine, tuple(dl_table), tuple(k_table),
                     dict(profile.thetas), sims, dl_machine.accuracy(dl_ds),
                     k_machine.accuracy(k_ds))
    log.info("stage: rare=%s overlap=%s dl=%s (acc %.3f) k=%s (acc %.3f)", rare, overlap,
             dl_machine.name, plan.dl_accuracy, k_machine.name, plan.k_accuracy)
    return plan


def _stratified_holdout(ds: Dataset, frac: float, seed: int) -> tuple[list[int], list[int]] | None:
    rng = np.random.default_rng(seed)
    train_idx, val_idx = [], []
    for c in ds.classes:
        idx = ds.indices_of(c)
        if len(idx) < 2:
            return None
        idx = idx[rng.permutation(len(idx))]
        n_val = max(1, int(round(frac * len(idx))))
        val_idx.extend(idx[:n_val].tolist())
        train_idx.extend(idx[n_val:].tolist())
    return sorted(train_idx), sorted(val_idx)


def fit_residual(ds: Dataset, cfg: PipelineConfig) -> Machine:
    """Best data-driven machine over the classes no stage consumed.

    Roster members are compared on a seeded, stratified 20% hold-out and the
    winner is refitted on everything.
    """
    identity = LabelSet(SuperLabel(c, [c]) for c in ds.classes)
    if len(ds.classes) == 1:
        return Machine.constant(identity)
    best = cfg.dl_roster[0]
    split = _stratified_holdout(ds, 0.2, cfg.seed)
    if split is not None and len(cfg.dl_roster) > 1:
        tr, va = split
        train_part = ds.subset(tr)
        val_part = ds.subset(va)
        best_acc = -1.0
        for spec in cfg.dl_roster:
            acc = train(spec, train_part, cfg.train, identity).accuracy(val_part)
            if acc > best_acc:
                best, best_acc = spec, acc
    return train(best, ds, cfg.train, identity)


@dataclass(frozen=True, eq=False)
class RareSaGeModel:
    stages: tuple[StagePlan, ...]
    residual: Machine
    config: PipelineConfig
    classes: tuple[str, ...]
    dim: int

    @property
    def rare_class(self) -> str | None:
        return self.stages[0].rare if self.stages else None

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.dim:
            raise ValidationError(f"dimension mismatch: model expects {self.dim} "
                                  f"features, got {X.shape[1]}")
        return X

    def trace(self, X, t_c: float | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Final labels plus the branch that produced each one."""
        X = self._check(X)
        t_c = self.config.t_c if t_c is None else t_c
        n = X.shape[0]
        labels = np.empty(n, dtype=object)
        branch = np.empty(n, dtype=object)
        open_ = np.ones(n, dtype=bool)
        for st in self.stages:
            if not open_.any():
                break
            dl_top, _, _ = st.dl_machine.decide(X)
            k_top, _, k_conf = st.k_machine.decide(X)
            is_overlap = np.array([st.dl_machine.label_set.names[i] == OVERLAP for i in dl_top])
            is_rare = np.array([st.k_machine.label_set.names[i] == RARE for i in k_top])
            override = open_ & is_overlap & is_rare & (k_conf > t_c)
            keep_overlap = open_ & is_overlap & ~override
            rare_direct = open_ & ~is_overlap & is_rare
            labels[override] = st.rare
            branch[override] = BRANCH_OVERRIDE
            labels[keep_overlap] = st.overlap
            branch[keep_overlap] = BRANCH_OVERLAP
            labels[rare_direct] = st.rare
            branch[rare_direct] = BRANCH_RARE
            open_ &= ~(override | keep_overlap | rare_direct)
        if open_.any():
            top, _, _ = self.residual.decide(X[open_])
            names = self.residual.label_set.names
            labels[open_] = [names[i] for i in top]
            branch[open_] = BRANCH_RESIDUAL
        return labels, branch

    def predict(self, X, t_c: float | None = None) -> np.ndarray:
        return self.trace(X, t_c)[0]

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "config": self.config.to_dict(),
            "classes": list(self.classes),
            "dim": self.dim,
            "stages": [s.to_dict() for s in self.stages],
            "residual": self.residual.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RareSaGeModel":
        if d.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValidationError(f"unsupported model format version {d.get('format_version')!r}")
        return cls(tuple(StagePlan.from_dict(s) for s in d["stages"]),
                   Machine.from_dict(d["residual"]), PipelineConfig.from_dict(d["config"]),
                   tuple(d["classes"]), int(d["dim"]))


def fit(ds: Dataset, cfg: PipelineConfig | None = None) -> RareSaGeModel:
    """Peel rare classes one by one, then fit the residual machine.

    Stops when no class is flagged rare, ``max_stages`` is reached or fewer
    than two classes remain.
    """
    cfg = cfg or PipelineConfig()
    ds.require_labeled()
    empty = [c for c, n in ds.counts().items() if n == 0]
    work = ds.without_classes(empty) if empty else ds
    stages: list[StagePlan] = []
    while len(stages) < cfg.max_stages and len(work.classes) >= 2:
        try:
            plan = plan_stage(work, cfg)
        except NoRareClassError:
            log.info("no rare class among %s; stopping", list(work.classes))
            break
        stages.append(plan)
        work = work.without_classes([plan.rare])
    residual = fit_residual(work, cfg)
    return RareSaGeModel(tuple(stages), residual, cfg, tuple(ds.classes), ds.dim)


def predict_label(model: RareSaGeModel, obs: Observation | Sequence[float],
                  t_c: float | None = None) -> str:
    x = obs.features if isinstance(obs, Observation) else obs
    return str(model.predict(np.asarray(x, dtype=float)[None, :], t_c)[0])


def model_to_json(model: RareSaGeModel) -> str:
    return json.dumps(model.to_dict(), indent=1, sort_keys=True) + "\n"


def save_model(model: RareSaGeModel, path) -> None:
    write_text_atomic(path, model_to_json(model))


def load_model(path) -> RareSaGeModel:
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: not a model file ({exc})") from None
    return RareSaGeModel.from_dict(d)
