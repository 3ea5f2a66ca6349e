"""Command-line interface: ``drauc {train,eval,worst-case,benchmark,cv}``.

Every option can also come from a JSON file given with ``--config``; keys are
the option names with dashes replaced by underscores. Flags given on the
command line override the file. Exit codes: 0 success, 1 runtime or solver
failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .data import DataError, LabeledDataset, apply_standardizer, fit_standardizer, load_csv, stratified_sample
from .experiments import (
    BenchmarkConfig,
    GridSpec,
    grid_scores,
    reports_to_csv,
    reports_to_json,
    reports_to_markdown,
    select_best,
)
from .metrics import TiePolicy, auc_from_labels, empirical_pair_risk, roc_curve
from .models import HyperParams, LinearModel, ModelKind, WORST_CASE_ATOM_CAP, train, worst_case_distribution
from .pairing import build_atoms, distance_matrix
from .solvers import SubgradientConfig

log = logging.getLogger("drauc")

WORST_CASE_SCHEMA = "drauc.worst_case/1"
CV_SCHEMA = "drauc.cv/1"


class ConfigError(Exception):
    pass


def _floats(s):
    if isinstance(s, (list, tuple)):
        return [float(v) for v in s]
    return [float(v) for v in str(s).split(",") if v.strip()]


def _names(s):
    if isinstance(s, (list, tuple)):
        return [str(v) for v in s]
    return [v.strip() for v in str(s).split(",") if v.strip()]


def _bool(v):
    if isinstance(v, bool):
        return v
    raise ValueError(f"expected true/false, got {v!r}")


# option name -> (type, default, help); None default means "required"
_DATA = {
    "data": (str, None, "CSV file with a header row"),
    "label": (str, None, "name of the label column"),
    "positive": (str, None, "label value treated as the positive class"),
}
_SOLVER = {
    "max_iter": (int, 20_000, "subgradient iteration limit"),
    "initial_step": (float, 0.1, "step size at iteration 1 (decays as 1/sqrt(k))"),
    "tol": (float, 1e-6, "relative improvement threshold for stopping"),
    "patience": (int, 200, "iterations over which the improvement is measured"),
}
_COMMON = {"config": (str, "", "JSON file with option values")}

OPTIONS = {
    "train": {
        **_DATA,
        "model": (str, None, "svm, d-auc, dr-auc-f or dr-auc-v"),
        "c": (float, 1.0, "loss weight C"),
        "epsilon": (float, 0.0, "ambiguity radius (robust models only)"),
        "seed": (int, 0, "recorded in the model metadata; training itself is deterministic"),
        "standardize": (_bool, True, "z-score features with training statistics"),
        **_SOLVER,
        "out": (str, None, "output model JSON"),
    },
    "eval": {
        "model_file": (str, None, "trained model JSON"),
        **_DATA,
        "roc": (str, "", "write ROC points (fpr,tpr) to this CSV"),
    },
    "worst-case": {
        "model_file": (str, None, "trained model JSON"),
        **_DATA,
        "epsilon": (float, None, "ambiguity radius"),
        "cap": (int, WORST_CASE_ATOM_CAP, "largest number of pair atoms accepted"),
        "out": (str, None, "output JSON"),
    },
    "benchmark": {
        **_DATA,
        "name": (str, "", "dataset name used in reports (default: file stem)"),
        "models": (_names, ["svm", "d-auc", "dr-auc-f", "dr-auc-v"], "comma-separated model kinds"),
        "runs": (int, 100, "number of random splits"),
        "train_size": (int, 60, "training points per split"),
        "seed": (int, 0, "base seed; run r uses seed + r"),
        "k_folds": (int, 5, "CV folds"),
        "worst_k": (int, 10, "size of the worst-run average"),
        "tuning": (str, "full", "CV data: full (dr-auc-f samples when folds exceed the atom cap), sample, or per_run"),
        "tuning_size": (int, 0, "size of the tuning sample (default: train size)"),
        "tie_policy": (str, "half_credit", "half_credit or count_as_success (scoring used for CV and reports)"),
        "standardize": (_bool, True, "z-score features with training statistics"),
        "grids": (dict, {}, "per-model grids {kind: {c_values, epsilon_values}} (config file only)"),
        **_SOLVER,
        "jobs": (int, 1, "worker processes"),
        "out": (str, None, "output prefix; writes PREFIX.json, PREFIX.csv, PREFIX.md"),
    },
    "cv": {
        **_DATA,
        "model": (str, None, "svm, d-auc, dr-auc-f or dr-auc-v"),
        "c_grid": (_floats, [], "comma-separated C values (default: built-in grid)"),
        "epsilon_grid": (_floats, [], "comma-separated epsilon values (default: built-in grid)"),
        "k_folds": (int, 5, "CV folds"),
        "seed": (int, 0, "fold seed"),
        "sample_size": (int, 0, "tune on a stratified sample of this size (0: whole file)"),
        "tie_policy": (str, "half_credit", "half_credit or count_as_success (scoring used for CV and reports)"),
        "standardize": (_bool, True, "z-score features with training statistics"),
        **_SOLVER,
        "jobs": (int, 1, "worker processes"),
        "out": (str, "", "optional JSON with every grid point's score"),
    },
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drauc", description="Linear AUC classifiers with Wasserstein-robust variants.")
    sub = p.add_subparsers(dest="command", required=True)
    for cmd, opts in OPTIONS.items():
        sp = sub.add_parser(cmd)
        for name, (typ, default, text) in {**_COMMON, **opts}.items():
            flag = "--" + name.replace("_", "-")
            if name == "model_file":
                sp.add_argument("model_file", nargs="?", default=argparse.SUPPRESS, help=text)
            elif typ is _bool:
                sp.add_argument(flag, dest=name, action=argparse.BooleanOptionalAction, default=argparse.SUPPRESS, help=text)
            elif typ is dict:
                continue
            else:
                sp.add_argument(flag, dest=name, type=str, default=argparse.SUPPRESS, help=text)
    return p


def resolve(command: str, ns: argparse.Namespace) -> dict:
    """Merge defaults, the config file and explicit flags; validate types and required keys."""
    opts = OPTIONS[command]
    given = {k: v for k, v in vars(ns).items() if k not in ("command",)}
    merged = {}
    cfg_path = given.pop("config", "")
    if cfg_path:
        try:
            with open(cfg_path, encoding="utf-8") as f:
                file_cfg = json.load(f)
        except OSError as exc:
            raise ConfigError(f"cannot read config {cfg_path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {cfg_path} is not valid JSON: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(file_cfg) - set(opts))
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {', '.join(unknown)}")
        merged.update(file_cfg)
    merged.update(given)
    out = {}
    for name, (typ, default, _) in opts.items():
        if name not in merged:
            if default is None:
                raise ConfigError(f"missing required option --{name.replace('_', '-')}")
            out[name] = default
            continue
        v = merged[name]
        try:
            if typ is dict:
                if not isinstance(v, dict):
                    raise ValueError("expected an object")
                out[name] = v
            elif typ is str:
                out[name] = str(v)
            elif typ is _bool:
                out[name] = _bool(v)
            elif typ is int:
                if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
                    raise ValueError(f"expected an integer, got {v!r}")
                out[name] = int(v)
            else:
                out[name] = typ(v)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {name}: {exc}") from None
    return out


# helpers -------------------------------------------------------------------


def write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _solver(o) -> SubgradientConfig:
    try:
        return SubgradientConfig(o["max_iter"], o["initial_step"], "inverse_sqrt", o["tol"], o["patience"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _kind(s) -> ModelKind:
    try:
        return ModelKind.parse(s)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _policy(s) -> TiePolicy:
    try:
        return TiePolicy(s)
    except ValueError:
        raise ConfigError(f"tie policy must be count_as_success or half_credit, got {s!r}") from None


def _hyper(kind: ModelKind, c, eps) -> HyperParams:
    try:
        h = HyperParams(c, eps)
        h.check(kind)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return h


def _require_file(path, what) -> None:
    if not Path(path).is_file():
        raise ConfigError(f"{what} not found: {path}")


def _load_model(path) -> LinearModel:
    _require_file(path, "model file")
    try:
        return LinearModel.from_json(Path(path).read_text(encoding="utf-8"))
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read model {path}: {exc}") from None


def _load_data(o) -> LabeledDataset:
    return load_csv(o["data"], o["label"], o["positive"])


# commands --------------------------------------------------------------------


def cmd_train(o) -> int:
    kind = _kind(o["model"])
    hyper = _hyper(kind, o["c"], o["epsilon"])
    cfg = _solver(o)
    _require_file(o["data"], "data file")
    ds = _load_data(o)
    scaler = fit_standardizer(ds) if o["standardize"] else None
    fit_ds = apply_standardizer(scaler, ds) if scaler else ds
    model = train(kind, fit_ds, hyper, cfg)
    meta = dict(model.training_meta, seed=o["seed"], standardize=o["standardize"])
    model = LinearModel(model.kind, model.weights, model.intercept, hyper, meta, scaler)
    write_atomic(o["out"], model.to_json() + "\n")
    auc = auc_from_labels(model.decision_function(ds.features), ds.labels)
    print(f"objective {meta['objective']:.10g}")
    print(f"training_auc {auc:.6f}")
    return 0


def cmd_eval(o) -> int:
    model = _load_model(o["model_file"])
    _require_file(o["data"], "data file")
    ds = _load_data(o)
    scores = model.decision_function(ds.features)
    for pol in TiePolicy:
        print(f"auc_{pol.value} {auc_from_labels(scores, ds.labels, pol):.6f}")
    if o["roc"]:
        write_atomic(o["roc"], roc_curve(scores, ds.labels).to_csv())
    return 0


def cmd_worst_case(o) -> int:
    if o["epsilon"] < 0:
        raise ConfigError("epsilon must be non-negative")
    model = _load_model(o["model_file"])
    _require_file(o["data"], "data file")
    ds = _load_data(o)
    if model.scaler is not None:
        ds = apply_standardizer(model.scaler, ds)
    n_pos, n_neg = ds.class_counts()
    if n_pos * n_neg > o["cap"]:
        raise DataError(f"{n_pos * n_neg} pair atoms exceeds the worst-case cap of {o['cap']}")
    atoms = build_atoms(ds, cap=o["cap"])
    dist = distance_matrix(atoms)
    plan, value = worst_case_distribution(model.weights, atoms, dist, o["epsilon"], cap=o["cap"])
    moves = [
        {"from": int(i), "to": int(j), "mass": float(plan.k[i, j])}
        for i, j in zip(*np.nonzero(plan.k > 1e-12))
        if i != j
    ]
    doc = {
        "schema": WORST_CASE_SCHEMA,
        "epsilon": o["epsilon"],
        "n_atoms": atoms.m,
        "atom_order": "row-major over (positive index, negative index)",
        "p": plan.p.tolist(),
        "worst_case_loss": value,
        "empirical_loss": empirical_pair_risk(model.weights, atoms),
        "transport_cost": plan.cost(dist),
        "moved_mass": float(sum(m["mass"] for m in moves)),
        "moves": moves,
    }
    write_atomic(o["out"], json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"worst_case_loss {value:.10g}")
    return 0


def _grids_from(o, kinds) -> dict:
    grids = {}
    for key, g in o["grids"].items():
        k = _kind(key)
        try:
            grids[k] = GridSpec.from_dict(g)
            grids[k].check(k)
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"bad grid for {key}: {exc}") from None
    extra = set(grids) - set(kinds)
    if extra:
        raise ConfigError(f"grids given for models not run: {', '.join(k.cli_name for k in sorted(extra))}")
    return grids


def cmd_benchmark(o) -> int:
    from .experiments import run_benchmark

    kinds = [_kind(k) for k in o["models"]]
    if len(set(kinds)) != len(kinds) or not kinds:
        raise ConfigError("models must be a non-empty list without repeats")
    grids = _grids_from(o, kinds)
    if o["jobs"] < 1:
        raise ConfigError("jobs must be at least 1")
    try:
        cfg = BenchmarkConfig(
            runs=o["runs"], train_size=o["train_size"], base_seed=o["seed"], k_folds=o["k_folds"],
            worst_k=o["worst_k"], standardize=o["standardize"], tie_policy=_policy(o["tie_policy"]),
            tuning=o["tuning"], tuning_size=o["tuning_size"] or None, solver=_solver(o),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _require_file(o["data"], "data file")
    ds = _load_data(o)
    if cfg.train_size >= ds.n_samples:
        raise ConfigError(f"train size {cfg.train_size} must be below the dataset size {ds.n_samples}")
    name = o["name"] or Path(o["data"]).stem
    reports = run_benchmark(ds, kinds, cfg, grids, dataset_name=name, jobs=o["jobs"])
    effective = {k: v for k, v in o.items() if k not in ("jobs", "out")}
    effective["data"] = Path(o["data"]).name
    for r in reports.values():
        r.config_echo = dict(r.config_echo, cli=effective)
    prefix = o["out"]
    write_atomic(prefix + ".json", reports_to_json(reports))
    write_atomic(prefix + ".csv", reports_to_csv(reports))
    md = reports_to_markdown(reports)
    write_atomic(prefix + ".md", md)
    print(md, end="")
    return 0


def cmd_cv(o) -> int:
    kind = _kind(o["model"])
    default = GridSpec.default(kind)
    try:
        grid = GridSpec(
            o["c_grid"] or default.c_values,
            o["epsilon_grid"] or default.epsilon_values,
        )
        grid.check(kind)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cfg = _solver(o)
    policy = _policy(o["tie_policy"])
    _require_file(o["data"], "data file")
    ds = _load_data(o)
    if o["sample_size"]:
        ds, _ = stratified_sample(ds, o["sample_size"], o["seed"])
    scores = grid_scores(ds, kind, grid, o["k_folds"], o["seed"], cfg, o["standardize"], policy, o["jobs"])
    best = select_best([p for p, _ in scores], [s for _, s in scores])
    for h, s in scores:
        print(f"C={h.c:g} epsilon={h.epsilon:g} mean_auc={s:.6f}")
    print(f"selected C={best.c:g} epsilon={best.epsilon:g}")
    if o["out"]:
        doc = {
            "schema": CV_SCHEMA,
            "model": kind.value,
            "scores": [{"hyper": h.to_dict(), "mean_auc": s} for h, s in scores],
            "selected": best.to_dict(),
            "config": {k: v for k, v in o.items() if k not in ("jobs", "out")},
        }
        write_atomic(o["out"], json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "worst-case": cmd_worst_case,
    "benchmark": cmd_benchmark,
    "cv": cmd_cv,
}


def _setup_logging() -> None:
    level = os.environ.get("DR_AUC_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        raise ConfigError(f"DR_AUC_LOG must be error, info or debug, got {level!r}")
    logging.basicConfig(level=levels[level], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _setup_logging()
        opts = resolve(ns.command, ns)
        return COMMANDS[ns.command](opts)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
