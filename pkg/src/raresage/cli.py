"""Command-line entry point.

Exit codes: 0 success, 1 usage, 2 data or format problem, 3 bad
configuration, 4 runtime failure.  Every failure prints exactly one line to
stderr.  Every written artifact gets a ``.manifest.json`` sibling holding the
arguments, resolved configuration, input digests and library versions, so a
run can be repeated from the manifest alone.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import __version__
from .data import (Dataset, format_float, load_embeddings, save_embeddings, split_by_domain,
                   write_text_atomic)
from .errors import ConfigError, FormatError, RareSaGeError, ValidationError
from .knowledge.soz import (PROPOSITIONS, RAW_FEATURES, Thresholds, evaluate_propositions,
                            kappa_soz, load_scene, save_scene)
from .metrics import (DEFAULT_GRID, across_trial, aggregated_trial, evaluate, report_csv,
                      roc_csv, roc_sweep, rows_csv, to_json, trial_csv)
from .pipeline import PipelineConfig, fit, load_model, read_pipeline_config, save_model
from .rarity import METRICS, entropy_profile, find_overlap_class, identify_rare
from .synthgen import (PRESETS, SCENE_KINDS, DomainSpec, domain_spec_to_ini, gen_domains,
                       gen_scenes, read_domain_spec)

log = logging.getLogger("raresage")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3, 4
SEED_ENV = "EKESDG_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    """Everything a run depends on; serialized into the manifest."""

    subcommand: str
    argv: list[str]
    seed: int
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    pipeline: dict | None = None
    extra: dict = field(default_factory=dict)


def _digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _versions() -> dict[str, str]:
    import scipy
    return {"raresage": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _write_manifest(run: RunConfig, path: str) -> None:
    data = asdict(run)
    data["versions"] = _versions()
    write_text_atomic(path, json.dumps(data, indent=1, sort_keys=True) + "\n")


def _emit(text: str, out: str | None, run: RunConfig) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    write_text_atomic(out, text)
    run.outputs.append(out)
    _write_manifest(run, out + ".manifest.json")


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _load(path: str, run: RunConfig, role: str, args, allow_unlabeled: bool = False) -> Dataset:
    if not os.path.exists(path):
        raise FileNotFoundError(f"input file not found: {path}")
    run.inputs[role] = f"{path} sha256:{_digest(path)}"
    return load_embeddings(path, allow_unlabeled=allow_unlabeled, normalize=args.normalize)


def _pipeline_config(args, seed: int) -> PipelineConfig:
    overrides = {
        "K": args.k, "multiplier": args.multiplier, "t_c": args.t_c,
        "max_stages": args.max_stages, "metric": args.metric,
        "dl_roster": _split(args.dl_roster), "k_roster": _split(args.k_roster),
        "rarity_columns": _columns(args.rarity_columns), "seed": seed,
    }
    if args.config:
        return read_pipeline_config(args.config, **overrides)
    return PipelineConfig(**{k: v for k, v in overrides.items() if v is not None})


def _split(text: str | None) -> tuple[str, ...] | None:
    if text is None:
        return None
    return tuple(p.strip() for p in text.split(",") if p.strip())


def _columns(text: str | None) -> tuple[int, ...] | None:
    if text is None:
        return None
    from .machines import MachineSpec
    try:
        return MachineSpec.parse("centroid@" + text).columns
    except (ValueError, ConfigError):
        raise ConfigError(f"bad column list {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad number list {text!r}") from None


# ---------------------------------------------------------------- subcommands


def cmd_gen(args, run: RunConfig) -> int:
    if args.what == "domains":
        if args.spec:
            run.inputs["spec"] = f"{args.spec} sha256:{_digest(args.spec)}"
            spec = read_domain_spec(args.spec)
            if args.seed_given:
                spec = DomainSpec(spec.classes, spec.dim, run.seed, spec.domains)
        else:
            spec = PRESETS[args.preset](run.seed)
        run.extra["domain_spec"] = domain_spec_to_ini(spec)
        for ds in gen_domains(spec):
            path = os.path.join(args.out_dir, f"domain_{ds.domains[0]}.csv")
            save_embeddings(ds, path)
            run.outputs.append(path)
    else:
        if args.count < 1:
            raise ConfigError("--count must be >= 1")
        kinds = SCENE_KINDS if args.kind == "all" else (args.kind,)
        index = ["file,kind"]
        for kind in kinds:
            for i, scene in enumerate(gen_scenes(kind, args.count, run.seed)):
                name = f"scene_{kind}_{i:03d}.json"
                save_scene(scene, os.path.join(args.out_dir, name))
                run.outputs.append(os.path.join(args.out_dir, name))
                index.append(f"{name},{kind}")
        write_text_atomic(os.path.join(args.out_dir, "scenes.csv"), "\n".join(index) + "\n")
        run.outputs.append(os.path.join(args.out_dir, "scenes.csv"))
    _write_manifest(run, os.path.join(args.out_dir, "manifest.json"))
    return EXIT_OK


def cmd_rarity(args, run: RunConfig) -> int:
    ds = _load(args.data, run, "data", args)
    ds.require_labeled()
    if args.k is not None and args.k < 1:
        raise ConfigError("--k must be >= 1")
    if args.multiplier <= 0:
        raise ConfigError("--multiplier must be positive")
    cols = _columns(args.columns)
    if cols is not None:
        if max(cols) >= ds.dim:
            raise ValidationError(f"dimension mismatch: column {max(cols)} but data has {ds.dim}")
        ds = ds.with_features(ds.X[:, list(cols)])
    profile = entropy_profile(ds, args.k, args.metric)
    verdict = identify_rare(profile, args.multiplier)
    overlap = None
    if verdict.rarest is not None and len(ds.classes) > 1:
        overlap, _ = find_overlap_class(ds, verdict.rarest)
    if args.json:
        text = json.dumps({
            "K": args.k, "metric": args.metric, "multiplier": args.multiplier,
            "mean": profile.mean, "std": profile.std, "rare": list(verdict.rare_classes),
            "rarest": verdict.rarest, "overlap": overlap,
            "classes": {c: {"theta": profile.thetas[c], "deviation": verdict.deviations[c]}
                        for c in ds.classes},
        }, indent=1, sort_keys=True) + "\n"
    else:
        lines = [f"# K={args.k if args.k is not None else 'auto'} metric={args.metric} "
                 f"multiplier={format_float(args.multiplier)} mean={format_float(profile.mean)} "
                 f"std={format_float(profile.std)} rarest={verdict.rarest or ''} "
                 f"overlap={overlap or ''}",
                 "class,theta,deviation,is_rare"]
        for c in ds.classes:
            lines.append(f"{c},{format_float(profile.thetas[c])},"
                         f"{format_float(verdict.deviations[c])},"
                         f"{int(c in verdict.rare_classes)}")
        text = "\n".join(lines) + "\n"
    _emit(text, args.out, run)
    return EXIT_OK


def cmd_fit(args, run: RunConfig) -> int:
    cfg = _pipeline_config(args, run.seed)
    run.pipeline = cfg.to_dict()
    if args.config:
        run.inputs["config"] = f"{args.config} sha256:{_digest(args.config)}"
    ds = _load(args.train, run, "train", args)
    model = fit(ds, cfg)
    if not model.stages:
        print("raresage: warning: no rare class found; model is the residual machine only",
              file=sys.stderr)
    for st in model.stages:
        log.info("stage rare=%s overlap=%s dl=%s k=%s", st.rare, st.overlap,
                 st.dl_machine.name, st.k_machine.name)
    save_model(model, args.out)
    run.outputs.append(args.out)
    _write_manifest(run, args.out + ".manifest.json")
    return EXIT_OK


def _predictions_csv(ds: Dataset, labels, branch) -> str:
    lines = ["id,prediction,branch"]
    lines += [f"{i},{lb},{br}" for i, lb, br in zip(ds.ids, labels, branch)]
    return "\n".join(lines) + "\n"


def cmd_eval(args, run: RunConfig) -> int:
    if (args.model is None) == (args.train is None):
        raise UsageError("eval needs exactly one of --model or --train")
    test = _load(args.test, run, "test", args, allow_unlabeled=args.allow_unlabeled)
    if args.model is not None:
        run.inputs["model"] = f"{args.model} sha256:{_digest(args.model)}"
        model = load_model(args.model)
        run.pipeline = model.config.to_dict()
        t_c = args.t_c if args.t_c is not None else model.config.t_c
        if args.predictions:
            labels, branch = model.trace(test.X, t_c)
            write_text_atomic(args.predictions, _predictions_csv(test, labels, branch))
            run.outputs.append(args.predictions)
        if not test.is_labeled:
            # nothing to score: the predictions are the report
            if args.out is not None or not args.predictions:
                _emit(_predictions_csv(test, *model.trace(test.X, t_c)), args.out, run)
            return EXIT_OK
        rep = evaluate(model, test, args.rare, t_c)
        log.info("evaluated %d observations in %.3fs", rep.n, rep.runtime)
        _emit(to_json(rep) if args.json else report_csv(rep), args.out, run)
        return EXIT_OK
    cfg = _pipeline_config(args, run.seed)
    run.pipeline = cfg.to_dict()
    train_ds = _load(args.train, run, "train", args)
    result = across_trial(train_ds, test, cfg, args.rare)
    for note in result.notes:
        print(f"raresage: warning: {note}", file=sys.stderr)
    for name, rep in result.reports.items():
        log.info("%s: rare F1 %.4f (%.3fs)", name, rep.rare_f1, rep.runtime)
    _emit(to_json(result) if args.json else trial_csv(result), args.out, run)
    return EXIT_OK


def cmd_agg_eval(args, run: RunConfig) -> int:
    cfg = _pipeline_config(args, run.seed)
    run.pipeline = cfg.to_dict()
    run.extra.update(folds=args.folds, repeats=args.repeats)
    parts = [_load(p, run, f"data{i}", args) for i, p in enumerate(args.data)]
    by_domain: dict[str, Dataset] = {}
    for ds in parts:
        for dom, sub in split_by_domain(ds).items():
            if dom in by_domain:
                raise ValidationError(f"domain {dom!r} appears in more than one input")
            by_domain[dom] = sub
    result = aggregated_trial(by_domain, args.folds, args.repeats, cfg, run.seed, args.rare)
    _emit(to_json(result) if args.json else rows_csv(result.rows()), args.out, run)
    return EXIT_OK


def cmd_roc(args, run: RunConfig) -> int:
    grid = DEFAULT_GRID if args.grid is None else _float_list(args.grid)
    run.extra["grid"] = list(grid)
    run.inputs["model"] = f"{args.model} sha256:{_digest(args.model)}"
    model = load_model(args.model)
    run.pipeline = model.config.to_dict()
    test = _load(args.test, run, "test", args)
    points = roc_sweep(model, test, grid, args.rare)
    _emit(to_json(points) if args.json else roc_csv(points), args.out, run)
    return EXIT_OK


def _thresholds(items: Sequence[str]) -> Thresholds:
    values = {}
    for item in items:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"threshold must look like NAME=VALUE, got {item!r}")
        values[key.strip()] = val.strip()
    try:
        return Thresholds.from_mapping(values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_props(args, run: RunConfig) -> int:
    th = _thresholds(args.threshold or [])
    run.extra["thresholds"] = asdict(th)
    rows = []
    for path in args.scenes:
        if not os.path.exists(path):
            raise FileNotFoundError(f"scene file not found: {path}")
        run.inputs[path] = f"sha256:{_digest(path)}"
        pv = evaluate_propositions(load_scene(path), th)
        rows.append((os.path.basename(path), pv, kappa_soz(pv)))
    if args.json:
        text = json.dumps([{"scene": name, "kappa_soz": k,
                            **{p: b for p, b in zip(PROPOSITIONS, pv.booleans())},
                            **{r: v for r, v in zip(RAW_FEATURES, pv.raw())}}
                           for name, pv, k in rows], indent=1, sort_keys=True) + "\n"
    else:
        lines = [",".join(("scene",) + PROPOSITIONS + ("kappa_soz",) + RAW_FEATURES)]
        for name, pv, k in rows:
            bits = [str(int(b)) for b in pv.booleans()] + [str(int(k))]
            raw = [str(pv.cluster_count)] + [format_float(v) for v in pv.raw()[1:]]
            lines.append(",".join([name] + bits + raw))
        text = "\n".join(lines) + "\n"
    _emit(text, args.out, run)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with [pipeline] and [train] sections")
    p.add_argument("--k", type=int, help="neighbours for the density estimate")
    p.add_argument("--multiplier", type=float, help="rarity deviation multiplier")
    p.add_argument("--t-c", dest="t_c", type=float, help="knowledge override threshold")
    p.add_argument("--max-stages", type=int)
    p.add_argument("--metric", choices=METRICS)
    p.add_argument("--dl-roster", help="comma-separated machine specs, e.g. centroid,logistic@0-3")
    p.add_argument("--k-roster", help="comma-separated machine specs for the knowledge side")
    p.add_argument("--rarity-columns", help="columns used for the entropy test, e.g. 0-3")


def _global_flags(p: argparse.ArgumentParser, default) -> None:
    # accepted before or after the subcommand; the subparser copy never
    # overwrites a value given earlier
    def d(v):
        return v if default is None else argparse.SUPPRESS

    p.add_argument("--json", action="store_true", default=d(False),
                   help="structured output instead of CSV")
    p.add_argument("--seed", type=int, default=d(None),
                   help=f"random seed (default: ${SEED_ENV} or 0)")
    p.add_argument("--normalize", action="store_true", default=d(False),
                   help="L2-normalize embeddings on load")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="raresage", description="Rare-class detection with knowledge override.")
    _global_flags(parser, None)
    parser.add_argument("--version", action="version", version=f"raresage {__version__}")
    common = _Parser(add_help=False)
    _global_flags(common, argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="generate synthetic domains or scenes")
    gsub = g.add_subparsers(dest="what", required=True, parser_class=_Parser)
    gd = gsub.add_parser("domains", parents=[common])
    src = gd.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=sorted(PRESETS), default="sdg")
    src.add_argument("--spec", help="INI domain spec")
    gd.add_argument("--out-dir", required=True)
    gs = gsub.add_parser("scenes", parents=[common])
    gs.add_argument("--kind", choices=SCENE_KINDS + ("all",), default="all")
    gs.add_argument("--count", type=int, default=10)
    gs.add_argument("--out-dir", required=True)

    r = sub.add_parser("rarity", parents=[common], help="class entropies and the rarity verdict")
    r.add_argument("--data", required=True)
    r.add_argument("--k", type=int)
    r.add_argument("--multiplier", type=float, default=1.0)
    r.add_argument("--metric", choices=METRICS, default="euclidean")
    r.add_argument("--columns")
    r.add_argument("--out")

    f = sub.add_parser("fit", parents=[common], help="fit the staged model on one domain")
    f.add_argument("--train", required=True)
    f.add_argument("--out", required=True)
    _add_pipeline_flags(f)

    e = sub.add_parser("eval", parents=[common], help="score a model, or run the two-direction trial")
    e.add_argument("--model")
    e.add_argument("--train")
    e.add_argument("--test", required=True)
    e.add_argument("--rare", help="class scored as rare (default: the model's first stage)")
    e.add_argument("--allow-unlabeled", action="store_true")
    e.add_argument("--predictions", help="also write per-observation predictions here")
    e.add_argument("--out")
    _add_pipeline_flags(e)

    a = sub.add_parser("agg-eval", parents=[common], help="leave-one-domain-out with repeated stratified folds")
    a.add_argument("--data", required=True, nargs="+")
    a.add_argument("--folds", type=int, default=5)
    a.add_argument("--repeats", type=int, default=3)
    a.add_argument("--rare")
    a.add_argument("--out")
    _add_pipeline_flags(a)

    o = sub.add_parser("roc", parents=[common], help="sweep the override threshold")
    o.add_argument("--model", required=True)
    o.add_argument("--test", required=True)
    o.add_argument("--grid", help="comma-separated thresholds (default 0.1..0.95 step 0.05)")
    o.add_argument("--rare")
    o.add_argument("--out")

    p = sub.add_parser("props", parents=[common], help="proposition valuations per scene")
    p.add_argument("scenes", nargs="+")
    p.add_argument("--threshold", action="append", metavar="NAME=VALUE")
    p.add_argument("--out")
    return parser


COMMANDS = {"gen": cmd_gen, "rarity": cmd_rarity, "fit": cmd_fit, "eval": cmd_eval,
            "agg-eval": cmd_agg_eval, "roc": cmd_roc, "props": cmd_props}


def _fail(code: int, message: str) -> int:
    print(f"raresage: error: {' '.join(str(message).split())}", file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="raresage: %(message)s", stream=sys.stderr)
    try:
        args.seed_given = args.seed is not None
        seed = args.seed if args.seed is not None else _default_seed()
        run = RunConfig(args.command if args.command != "gen" else f"gen {args.what}",
                        argv, seed)
        return COMMANDS[args.command](args, run)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except (FormatError, ValidationError, FileNotFoundError, IsADirectoryError,
            UnicodeDecodeError) as exc:
        return _fail(EXIT_DATA, exc)
    except RareSaGeError as exc:
        return _fail(EXIT_RUNTIME, exc)
    except Exception as exc:  # anything unexpected is a runtime failure
        return _fail(EXIT_RUNTIME, f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
