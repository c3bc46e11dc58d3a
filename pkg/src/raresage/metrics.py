"""Confusion matrices, per-class reports and the evaluation harnesses.

Rates whose denominator is zero are reported as 0 and flagged, so every CSV
stays numeric.  Wall-clock runtime is carried on the report object but kept
out of the CSV and JSON text, which must be reproducible byte for byte.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import Dataset, format_float, split_by_domain
from .errors import ConfigError, StratificationError, ValidationError
from .labels import LabelSet, SuperLabel
from .machines import MachineSpec, TrainConfig, train
from .pipeline import BRANCH_OVERRIDE, PipelineConfig, RareSaGeModel, fit

log = logging.getLogger(__name__)

ZERO_DENOMINATOR = "zero_denominator"
NO_RARE = "no_rare_class"
DEFAULT_GRID = tuple(round(0.1 + 0.05 * i, 2) for i in range(18))


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """``counts[i, j]`` = observations of true class i predicted as class j."""

    classes: tuple[str, ...]
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total

    def index(self, cls: str) -> int:
        try:
            return self.classes.index(cls)
        except ValueError:
            raise ValidationError(f"class {cls!r} not in confusion matrix") from None

    def binary(self, positive: str) -> tuple[int, int, int, int]:
        """(TP, FP, FN, TN) for ``positive`` against everything else."""
        i = self.index(positive)
        tp = int(self.counts[i, i])
        fp = int(self.counts[:, i].sum()) - tp
        fn = int(self.counts[i, :].sum()) - tp
        return tp, fp, fn, self.total - tp - fp - fn


def score(preds: Sequence[str], truths: Sequence[str], classes: Sequence[str]) -> ConfusionMatrix:
    preds, truths, classes = list(preds), list(truths), tuple(classes)
    if len(preds) != len(truths):
        raise ValidationError(f"{len(preds)} predictions for {len(truths)} truths")
    if not preds:
        raise ValidationError("nothing to score")
    pos = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for p, t in zip(preds, truths):
        if p not in pos or t not in pos:
            bad = p if p not in pos else t
            raise ValidationError(f"unknown label {bad!r}")
        counts[pos[t], pos[p]] += 1
    return ConfusionMatrix(classes, counts)


def ratio(num: float, den: float) -> tuple[float, bool]:
    """``num / den`` with the zero-denominator convention: (0.0, True)."""
    if den == 0:
        return 0.0, True
    return num / den, False


def f1_score(precision: float, sensitivity: float) -> float:
    if precision + sensitivity == 0:
        return 0.0
    return 2.0 * precision * sensitivity / (precision + sensitivity)


def average_f1(values: Sequence[float]) -> float:
    """Mean of the rare-class F1 values of the two directions."""
    if len(values) == 0:
        raise ValidationError("no F1 values to average")
    return float(np.mean(values))


@dataclass
class EvalReport:
    accuracy: float
    precision: dict[str, float]
    sensitivity: dict[str, float]
    f1: dict[str, float]
    rare_class: str | None = None
    rare_f1: float = 0.0
    ppv: float = 0.0
    npv: float = 0.0
    flags: set[tuple[str, str]] = field(default_factory=set)
    runtime: float = 0.0
    n: int = 0
    average_f1: float | None = None

    def rows(self) -> list[tuple[str, str, float, str]]:
        def flag(metric, cls):
            return ZERO_DENOMINATOR if (metric, cls) in self.flags else ""

        out = [("accuracy", "", self.accuracy, "")]
        for metric, table in (("precision", self.precision),
                              ("sensitivity", self.sensitivity), ("f1", self.f1)):
            out += [(metric, c, v, flag(metric, c)) for c, v in table.items()]
        rare = self.rare_class or ""
        out.append(("rare_f1", rare, self.rare_f1, NO_RARE if not self.rare_class else ""))
        out.append(("ppv", rare, self.ppv, flag("ppv", rare)))
        out.append(("npv", rare, self.npv, flag("npv", rare)))
        if self.average_f1 is not None:
            out.append(("average_f1", rare, self.average_f1, ""))
        return out

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "sensitivity": self.sensitivity,
            "f1": self.f1,
            "rare_class": self.rare_class,
            "rare_f1": self.rare_f1,
            "ppv": self.ppv,
            "npv": self.npv,
            "average_f1": self.average_f1,
            "n": self.n,
            "flags": sorted(f"{m}:{c}" for m, c in self.flags),
        }


def report(cm: ConfusionMatrix, rare: str | None = None, runtime: float = 0.0) -> EvalReport:
    """Accuracy, per-class precision / sensitivity / F1 and rare-vs-rest PPV / NPV."""
    if cm.total == 0:
        raise ValidationError("empty confusion matrix")
    flags: set[tuple[str, str]] = set()
    prec, sens, f1 = {}, {}, {}
    for c in cm.classes:
        tp, fp, fn, _ = cm.binary(c)
        prec[c], bad_p = ratio(tp, tp + fp)
        sens[c], bad_s = ratio(tp, tp + fn)
        f1[c] = f1_score(prec[c], sens[c])
        if bad_p:
            flags.add(("precision", c))
        if bad_s:
            flags.add(("sensitivity", c))
    rep = EvalReport(cm.accuracy, prec, sens, f1, rare, runtime=runtime, n=cm.total)
    if rare is not None:
        tp, fp, fn, tn = cm.binary(rare)
        rep.rare_f1 = f1[rare]
        rep.ppv, bad = ratio(tp, tp + fp)
        if bad:
            flags.add(("ppv", rare))
        rep.npv, bad = ratio(tn, tn + fn)
        if bad:
            flags.add(("npv", rare))
    rep.flags = flags
    return rep


def evaluate(model: RareSaGeModel, test: Dataset, rare: str | None = None,
             t_c: float | None = None) -> EvalReport:
    """Score a fitted model on a labelled set; ``rare`` defaults to the model's first stage."""
    test.require_labeled()
    start = time.perf_counter()
    preds = model.predict(test.X, t_c)
    classes = list(model.classes) + [c for c in test.classes if c not in model.classes]
    cm = score([str(p) for p in preds], test.labels, classes)
    rare = rare or model.rare_class
    return report(cm, rare, time.perf_counter() - start)


# ---------------------------------------------------------------- harnesses


@dataclass
class TrialResult:
    """Reports keyed by ``"TRAIN->TEST"`` plus the cross-direction average F1."""

    reports: dict[str, EvalReport]
    average_f1: float | None
    notes: list[str] = field(default_factory=list)


def _domain_of(ds: Dataset) -> set[str]:
    return set(ds.domains)


def across_trial(train_ds: Dataset, test_ds: Dataset, cfg: PipelineConfig | None = None,
                 rare: str | None = None) -> TrialResult:
    """Train on one domain, test on the other; both directions when both are labelled."""
    cfg = cfg or PipelineConfig()
    shared = _domain_of(train_ds) & _domain_of(test_ds)
    if shared:
        raise ValidationError(f"train and test share domain ids {sorted(shared)}")
    if not test_ds.is_labeled:
        raise ValidationError("across-trial evaluation needs a labelled test set")
    pairs = [(train_ds, test_ds)]
    if train_ds.is_labeled:
        pairs.append((test_ds, train_ds))
    reports, notes = {}, []
    for tr, te in pairs:
        name = f"{'+'.join(sorted(_domain_of(tr)))}->{'+'.join(sorted(_domain_of(te)))}"
        start = time.perf_counter()
        model = fit(tr, cfg)
        if model.rare_class is None and rare is None:
            notes.append(f"{name}: no rare class in the training domain")
        rep = evaluate(model, te, rare)
        rep.runtime = time.perf_counter() - start
        reports[name] = rep
    avg = average_f1([r.rare_f1 for r in reports.values()]) if len(reports) == 2 else None
    for r in reports.values():
        r.average_f1 = avg
    return TrialResult(reports, avg, notes)


def baseline_report(spec: MachineSpec | str, train_ds: Dataset, test_ds: Dataset,
                    rare: str, config: TrainConfig | None = None) -> EvalReport:
    """A single roster machine trained on the raw classes, with no rarity handling."""
    spec = spec if isinstance(spec, MachineSpec) else MachineSpec.parse(spec)
    identity = LabelSet(SuperLabel(c, [c]) for c in train_ds.classes)
    m = train(spec, train_ds, config, identity)
    preds = [p.super_label for p in m.predict_many(test_ds.X)]
    classes = list(train_ds.classes) + [c for c in test_ds.classes if c not in train_ds.classes]
    return report(score(preds, test_ds.labels, classes), rare)


def stratified_folds(labels: Sequence[str], folds: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Per-class shuffled round-robin assignment to ``folds`` test folds."""
    if folds < 2:
        raise ConfigError(f"folds must be >= 2, got {folds}")
    labels = np.asarray(labels, dtype=object)
    buckets: list[list[int]] = [[] for _ in range(folds)]
    for c in dict.fromkeys(labels.tolist()):
        idx = np.flatnonzero(labels == c)
        if len(idx) < folds:
            raise StratificationError(
                f"class {c!r} has {len(idx)} examples, fewer than {folds} folds")
        idx = idx[rng.permutation(len(idx))]
        for k, i in enumerate(idx):
            buckets[k % folds].append(int(i))
    return [np.array(sorted(b)) for b in buckets]


SUMMARY_METRICS = ("accuracy", "rare_f1", "ppv", "npv")


@dataclass
class AggregatedResult:
    """Per held-out domain: reports keyed by (repeat, fold) and mean / std per metric."""

    reports: dict[str, dict[tuple[int, int], EvalReport]]
    summary: dict[str, dict[str, tuple[float, float]]]

    def rows(self) -> list[tuple[str, str, float, str]]:
        out = []
        for dom, stats in self.summary.items():
            for metric, (mean, std) in stats.items():
                out.append((f"{metric}_mean", dom, mean, ""))
                out.append((f"{metric}_std", dom, std, ""))
        return out


def aggregated_trial(datasets: Mapping[str, Dataset] | Dataset, folds: int = 5, repeats: int = 3,
                     cfg: PipelineConfig | None = None, seed: int = 0,
                     rare: str | None = None) -> AggregatedResult:
    """Leave-one-domain-out with stratified k-fold x repeats on the pooled rest.

    Each fold's training part fits a model that is scored on the held-out
    domain.  Standard deviations are population (ddof=0) values.
    """
    cfg = cfg or PipelineConfig()
    if isinstance(datasets, Dataset):
        datasets = split_by_domain(datasets)
    if len(datasets) < 2:
        raise ValidationError("aggregated trial needs at least two domains")
    if folds < 2:
        raise ConfigError(f"folds must be >= 2, got {folds}")
    if repeats < 1:
        raise ConfigError(f"repeats must be >= 1, got {repeats}")
    all_reports, summary = {}, {}
    for held in sorted(datasets):
        test = datasets[held]
        test.require_labeled()
        rest = [datasets[d] for d in sorted(datasets) if d != held]
        pool = _concat(rest)
        pool.require_labeled()
        reps: dict[tuple[int, int], EvalReport] = {}
        for r in range(repeats):
            rng = np.random.default_rng([seed, r])
            parts = stratified_folds(pool.labels, folds, rng)
            for k, test_idx in enumerate(parts):
                train_idx = np.setdiff1d(np.arange(len(pool)), test_idx)
                model = fit(pool.subset(train_idx), cfg)
                reps[(r, k)] = evaluate(model, test, rare)
        all_reports[held] = reps
        ordered = [reps[key] for key in sorted(reps)]
        summary[held] = {}
        for metric in SUMMARY_METRICS:
            vals = np.array([getattr(rep, metric) for rep in ordered])
            summary[held][metric] = (float(vals.mean()), float(vals.std()))
    return AggregatedResult(all_reports, summary)


def _concat(parts: Sequence[Dataset]) -> Dataset:
    classes = list(dict.fromkeys(c for p in parts for c in p.classes))
    return Dataset([i for p in parts for i in p.ids], [d for p in parts for d in p.domains],
                   [lb for p in parts for lb in p.labels],
                   np.vstack([p.X for p in parts]), classes)


@dataclass(frozen=True)
class RocPoint:
    t_c: float
    sensitivity: float
    specificity: float
    override_count: int


def roc_sweep(model: RareSaGeModel, test_ds: Dataset, grid: Sequence[float] = DEFAULT_GRID,
              rare: str | None = None) -> list[RocPoint]:
    """Re-run the fusion at each threshold; positive = the rare class."""
    grid = [float(t) for t in grid]
    if not grid:
        raise ConfigError("empty threshold grid")
    if any(not 0 < t <= 1 for t in grid):
        raise ConfigError("thresholds must lie in (0, 1]")
    test_ds.require_labeled()
    rare = rare or model.rare_class
    if rare is None:
        raise ValidationError("model has no rare class to sweep")
    truth = np.asarray(test_ds.labels, dtype=object) == rare
    out = []
    for t in grid:
        labels, branch = model.trace(test_ds.X, t)
        pred = labels == rare
        tp = int(np.sum(pred & truth))
        tn = int(np.sum(~pred & ~truth))
        sens, _ = ratio(tp, int(truth.sum()))
        spec, _ = ratio(tn, int((~truth).sum()))
        out.append(RocPoint(t, sens, spec, int(np.sum(branch == BRANCH_OVERRIDE))))
    return out


# ---------------------------------------------------------------- text output


def rows_csv(rows: Sequence[tuple[str, str, float, str]]) -> str:
    lines = ["metric,class,value,flag"]
    lines += [f"{m},{c},{format_float(v)},{f}" for m, c, v, f in rows]
    return "\n".join(lines) + "\n"


def report_csv(rep: EvalReport) -> str:
    return rows_csv(rep.rows())


def trial_csv(result: TrialResult) -> str:
    rows = []
    for name, rep in result.reports.items():
        rows += [(m, f"{name}:{c}" if c else name, v, f) for m, c, v, f in rep.rows()]
    return rows_csv(rows)


def roc_csv(points: Sequence[RocPoint]) -> str:
    lines = ["t_c,sensitivity,specificity,override_count"]
    lines += [f"{format_float(p.t_c)},{format_float(p.sensitivity)},"
              f"{format_float(p.specificity)},{p.override_count}" for p in points]
    return "\n".join(lines) + "\n"


def to_json(obj) -> str:
    if isinstance(obj, EvalReport):
        data = obj.to_dict()
    elif isinstance(obj, TrialResult):
        data = {"reports": {k: r.to_dict() for k, r in obj.reports.items()},
                "average_f1": obj.average_f1, "notes": obj.notes}
    elif isinstance(obj, AggregatedResult):
        data = {dom: {m: {"mean": mu, "std": sd} for m, (mu, sd) in stats.items()}
                for dom, stats in obj.summary.items()}
    else:
        data = [{"t_c": p.t_c, "sensitivity": p.sensitivity, "specificity": p.specificity,
                 "override_count": p.override_count} for p in obj]
    return json.dumps(data, indent=1, sort_keys=True) + "\n"
