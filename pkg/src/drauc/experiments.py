"""Grid-search cross-validation and the repeated small-training-set benchmark.

A benchmark draws ``runs`` stratified training sets (seed ``base_seed + r``
for run r = 1..runs), trains every requested model on the same split and
scores AUC on the points left out. Hyperparameters are chosen once per model
by k-fold CV on a tuning set before the runs start.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import (
    LabeledDataset,
    apply_standardizer,
    fit_standardizer,
    k_fold_indices,
    stratified_indices,
)
from .metrics import TiePolicy, auc_from_labels
from .models import HyperParams, ModelKind, train
from .solvers import SubgradientConfig
from .pairing import DEFAULT_ATOM_CAP

log = logging.getLogger(__name__)

REPORT_SCHEMA = "drauc.benchmark/1"

DEFAULT_C_PLAIN = (0.0001, 0.001, 0.01, 0.1, 1.0, 5.0, 10.0, 50.0)
DEFAULT_C_ROBUST = (0.1, 1.0, 2.5, 5.0, 10.0)
DEFAULT_EPSILON = (0.01, 0.1, 0.5, 1.0, 5.0, 10.0)


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridSpec:
    c_values: tuple
    epsilon_values: tuple = (0.0,)

    def __post_init__(self):
        cs = tuple(float(c) for c in self.c_values)
        es = tuple(float(e) for e in self.epsilon_values)
        if not cs or not es:
            raise ValueError("grid must have at least one C and one epsilon value")
        if any(c <= 0 for c in cs) or any(e < 0 for e in es):
            raise ValueError("grid needs C > 0 and epsilon >= 0")
        if list(cs) != sorted(set(cs)) or list(es) != sorted(set(es)):
            raise ValueError("grid values must be strictly ascending")
        object.__setattr__(self, "c_values", cs)
        object.__setattr__(self, "epsilon_values", es)

    @classmethod
    def default(cls, kind) -> "GridSpec":
        kind = ModelKind.parse(kind)
        if kind.robust:
            return cls(DEFAULT_C_ROBUST, DEFAULT_EPSILON)
        return cls(DEFAULT_C_PLAIN)

    def check(self, kind: ModelKind) -> None:
        if not kind.robust and self.epsilon_values != (0.0,):
            raise ValueError(f"grid for {kind.cli_name} must have epsilon values [0]")

    def points(self) -> list[HyperParams]:
        """Grid points ordered by C, then epsilon (the tie-break order)."""
        return [HyperParams(c, e) for c in self.c_values for e in self.epsilon_values]

    def to_dict(self) -> dict:
        return {"c_values": list(self.c_values), "epsilon_values": list(self.epsilon_values)}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        unknown = set(d) - {"c_values", "epsilon_values"}
        if unknown:
            raise ValueError(f"unknown grid keys: {sorted(unknown)}")
        return cls(tuple(d["c_values"]), tuple(d.get("epsilon_values", (0.0,))))


# statistics ----------------------------------------------------------------


def worst_k_indices(aucs, k: int) -> np.ndarray:
    """Run indices of the k smallest AUCs; equal values keep run order."""
    a = np.asarray(aucs, dtype=float)
    if not 1 <= k <= a.size:
        raise ValueError(f"k must be in [1, {a.size}], got {k}")
    return np.argsort(a, kind="stable")[:k]


def worst_k_mean(aucs, k: int) -> float:
    a = np.asarray(aucs, dtype=float)
    return float(a[worst_k_indices(a, k)].mean())


def worst_k_std(aucs, k: int) -> float:
    """Sample std of the k smallest AUCs (0 when k = 1)."""
    a = np.asarray(aucs, dtype=float)
    return _sample_std(a[worst_k_indices(a, k)])


def _sample_std(a: np.ndarray) -> float:
    return float(a.std(ddof=1)) if a.size > 1 else 0.0


def relative_difference(auc_dr: float, auc_bench: float) -> float:
    """Improvement over the benchmark normalized by its remaining headroom."""
    if not auc_bench < 1:
        raise ValueError("relative difference is undefined when the benchmark AUC is 1")
    return (auc_dr - auc_bench) / (1.0 - auc_bench)


@dataclass
class ExperimentReport:
    dataset_name: str
    model_kind: ModelKind
    chosen_hyper: HyperParams
    run_aucs: np.ndarray
    worst_k: int
    seeds: dict
    config_echo: dict = field(default_factory=dict)
    run_hypers: Optional[list] = None
    tuned_on: str = ""

    def __post_init__(self):
        self.run_aucs = np.asarray(self.run_aucs, dtype=float)
        if np.any((self.run_aucs < 0) | (self.run_aucs > 1)):
            raise ValueError("AUC values must lie in [0, 1]")

    @property
    def mean(self) -> float:
        return float(self.run_aucs.mean())

    @property
    def std(self) -> float:
        return _sample_std(self.run_aucs)

    @property
    def worst_k_mean(self) -> float:
        return worst_k_mean(self.run_aucs, min(self.worst_k, self.run_aucs.size))

    @property
    def worst_k_std(self) -> float:
        return worst_k_std(self.run_aucs, min(self.worst_k, self.run_aucs.size))

    def to_dict(self) -> dict:
        d = {
            "dataset": self.dataset_name,
            "model": self.model_kind.value,
            "chosen_hyper": self.chosen_hyper.to_dict(),
            "run_aucs": self.run_aucs.tolist(),
            "mean": self.mean,
            "std": self.std,
            "worst_k": self.worst_k,
            "worst_k_mean": self.worst_k_mean,
            "worst_k_std": self.worst_k_std,
            "seeds": self.seeds,
            "config": self.config_echo,
            "tuned_on": self.tuned_on,
        }
        if self.run_hypers is not None:
            d["run_hypers"] = [h.to_dict() for h in self.run_hypers]
        return d


# cross-validation ----------------------------------------------------------


@dataclass(frozen=True)
class _Job:
    kind: ModelKind
    hyper: HyperParams
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    cfg: SubgradientConfig
    standardize: bool
    policy: TiePolicy


def _fit_and_score(job: _Job) -> float:
    tr = LabeledDataset(job.train_x, job.train_y)
    te = LabeledDataset(job.test_x, job.test_y)
    if job.standardize:
        sc = fit_standardizer(tr)
        tr, te = apply_standardizer(sc, tr), apply_standardizer(sc, te)
    model = train(job.kind, tr, job.hyper, job.cfg)
    return auc_from_labels(model.decision_function(te.features), te.labels, job.policy)


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items, chunksize=1))


def _cv_jobs(ds, kind, grid, k, seed, cfg, standardize, policy):
    folds = k_fold_indices(ds.labels, k, seed)
    X, y = ds.features, ds.labels
    return [
        _Job(kind, h, X[tr], y[tr], X[va], y[va], cfg, standardize, policy)
        for h in grid.points()
        for tr, va in folds
    ]


def select_best(points: Sequence[HyperParams], means: Sequence[float]) -> HyperParams:
    # points are ordered by (C, eps); only a strictly better mean displaces
    best = 0
    for i, m in enumerate(means):
        if m > means[best]:
            best = i
    return points[best]


def grid_scores(
    ds: LabeledDataset,
    kind,
    grid: GridSpec,
    k: int = 5,
    seed: int = 0,
    cfg: SubgradientConfig = SubgradientConfig(),
    standardize: bool = True,
    policy: TiePolicy = TiePolicy.HALF_CREDIT,
    jobs: int = 1,
) -> list[tuple[HyperParams, float]]:
    """Mean validation AUC for every grid point, in grid order."""
    kind = ModelKind.parse(kind)
    grid.check(kind)
    work = _cv_jobs(ds, kind, grid, k, seed, cfg, standardize, TiePolicy(policy))
    try:
        aucs = _map(_fit_and_score, work, jobs)
    except Exception as exc:  # name the failing grid point when run serially
        raise ExperimentError(f"cross-validation of {kind.cli_name} failed: {exc}") from exc
    aucs = np.asarray(aucs).reshape(len(grid.points()), k)
    return list(zip(grid.points(), aucs.mean(axis=1).tolist()))


def cross_validate(
    ds: LabeledDataset,
    kind,
    grid: GridSpec,
    k: int = 5,
    seed: int = 0,
    cfg: SubgradientConfig = SubgradientConfig(),
    standardize: bool = True,
    policy: TiePolicy = TiePolicy.HALF_CREDIT,
    jobs: int = 1,
) -> HyperParams:
    """Grid point with the highest mean k-fold validation AUC.

    Ties go to the smaller C, then the smaller epsilon.
    """
    points = grid.points()
    if len(points) == 1:
        ModelKind.parse(kind)
        grid.check(ModelKind.parse(kind))
        return points[0]
    scores = grid_scores(ds, kind, grid, k, seed, cfg, standardize, policy, jobs)
    return select_best([p for p, _ in scores], [s for _, s in scores])


# benchmark -----------------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkConfig:
    runs: int = 100
    train_size: int = 60
    base_seed: int = 0
    k_folds: int = 5
    worst_k: int = 10
    standardize: bool = True
    tie_policy: TiePolicy = TiePolicy.HALF_CREDIT
    tuning: str = "full"  # full | sample | per_run
    tuning_size: Optional[int] = None  # sample size; defaults to train_size
    solver: SubgradientConfig = SubgradientConfig()

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.train_size < 2:
            raise ValueError("train_size must be at least 2")
        if self.k_folds < 2:
            raise ValueError("k_folds must be at least 2")
        if self.worst_k < 1:
            raise ValueError("worst_k must be at least 1")
        if self.tuning not in ("sample", "full", "per_run"):
            raise ValueError(f"tuning must be sample, full or per_run, got {self.tuning!r}")
        if self.base_seed < 0:
            raise ValueError("base_seed must be non-negative")
        object.__setattr__(self, "tie_policy", TiePolicy(self.tie_policy))

    def to_dict(self) -> dict:
        return {
            "runs": self.runs,
            "train_size": self.train_size,
            "base_seed": self.base_seed,
            "k_folds": self.k_folds,
            "worst_k": self.worst_k,
            "standardize": self.standardize,
            "tie_policy": self.tie_policy.value,
            "tuning": self.tuning,
            "tuning_size": self.tuning_size if self.tuning_size is not None else self.train_size,
            "solver": self.solver.to_dict(),
            "std": "sample (ddof=1)",
        }


def tuning_set(ds: LabeledDataset, cfg: BenchmarkConfig, kind=None) -> tuple[LabeledDataset, str]:
    """Data the one-off CV runs on, with a description for the report.

    ``full`` uses all of ``ds`` unless ``kind`` is the fixed-support model and
    its CV training folds would exceed the pair-atom cap; that case, and
    ``sample``, use a stratified sample of ``tuning_size`` points drawn with
    ``base_seed``.
    """
    if cfg.tuning == "full" and not _over_cap(ds, cfg, kind):
        return ds, f"full ({ds.n_samples} points)"
    size = min(cfg.tuning_size if cfg.tuning_size is not None else cfg.train_size, ds.n_samples)
    idx, _ = stratified_indices(ds.labels, size, cfg.base_seed)
    return ds.subset(idx), f"stratified sample of {size} (seed {cfg.base_seed})"


def _over_cap(ds: LabeledDataset, cfg: BenchmarkConfig, kind) -> bool:
    if kind is None or ModelKind.parse(kind) is not ModelKind.DR_AUC_F:
        return False
    y = ds.labels
    return max(
        int((y[tr] == 1).sum()) * int((y[tr] == -1).sum()) for tr, _ in k_fold_indices(y, cfg.k_folds, cfg.base_seed)
    ) > DEFAULT_ATOM_CAP


def _run_one(args) -> tuple[list, list]:
    ds, r, kinds, hypers, grids, cfg = args
    seed = cfg.base_seed + r
    tr_idx, te_idx = stratified_indices(ds.labels, cfg.train_size, seed)
    tr, te = ds.subset(tr_idx), ds.subset(te_idx)
    aucs, chosen = [], []
    for kind in kinds:
        hyper = hypers.get(kind)
        if hyper is None:
            hyper = cross_validate(
                tr, kind, grids[kind], cfg.k_folds, seed, cfg.solver, cfg.standardize, cfg.tie_policy
            )
        try:
            aucs.append(_fit_and_score(_Job(
                kind, hyper, tr.features, tr.labels, te.features, te.labels,
                cfg.solver, cfg.standardize, cfg.tie_policy,
            )))
        except Exception as exc:
            raise ExperimentError(f"run {r} (seed {seed}) failed for {kind.cli_name}: {exc}") from exc
        chosen.append(hyper)
    return aucs, chosen


def run_benchmark(
    ds: LabeledDataset,
    kinds: Sequence,
    cfg: BenchmarkConfig = BenchmarkConfig(),
    grids: Optional[dict] = None,
    dataset_name: str = "dataset",
    jobs: int = 1,
    fixed_hypers: Optional[dict] = None,
) -> dict[ModelKind, ExperimentReport]:
    """Repeated stratified-split benchmark with shared splits across models.

    ``fixed_hypers`` skips CV for the kinds it names. The result does not
    depend on ``jobs``.
    """
    kinds = [ModelKind.parse(k) for k in kinds]
    if not kinds:
        raise ValueError("no model kinds requested")
    if cfg.train_size >= ds.n_samples:
        raise ValueError(f"train_size {cfg.train_size} must be below the dataset size {ds.n_samples}")
    grids = {ModelKind.parse(k): g for k, g in (grids or {}).items()}
    for k in kinds:
        grids.setdefault(k, GridSpec.default(k))
        grids[k].check(k)
    hypers = {ModelKind.parse(k): h for k, h in (fixed_hypers or {}).items()}
    for k, h in hypers.items():
        h.check(k)

    tuned_on = {k: "fixed" for k in hypers}
    if cfg.tuning != "per_run":
        for k in kinds:
            if k not in hypers:
                tune, tuned_on[k] = tuning_set(ds, cfg, k)
                log.info("tuning %s on %s", k.cli_name, tuned_on[k])
                hypers[k] = cross_validate(
                    tune, k, grids[k], cfg.k_folds, cfg.base_seed, cfg.solver,
                    cfg.standardize, cfg.tie_policy, jobs,
                )

    fixed = {k: hypers[k] for k in kinds if k in hypers}
    work = [(ds, r, kinds, fixed, grids, cfg) for r in range(1, cfg.runs + 1)]
    log.info("running %d splits for %s", cfg.runs, ", ".join(k.cli_name for k in kinds))
    results = _map(_run_one, work, jobs)

    run_seeds = [cfg.base_seed + r for r in range(1, cfg.runs + 1)]
    echo = cfg.to_dict()
    echo["models"] = [k.value for k in kinds]
    echo["grids"] = {k.value: grids[k].to_dict() for k in kinds}
    reports = {}
    for i, k in enumerate(kinds):
        aucs = [res[0][i] for res in results]
        chosen = [res[1][i] for res in results]
        reports[k] = ExperimentReport(
            dataset_name,
            k,
            chosen[0],
            np.array(aucs),
            cfg.worst_k,
            {"base_seed": cfg.base_seed, "cv_seed": cfg.base_seed, "run_seeds": run_seeds},
            echo,
            chosen if cfg.tuning == "per_run" else None,
            tuned_on.get(k, "each run's training split"),
        )
    return reports


# report writers -------------------------------------------------------------


def reports_to_json(reports: dict) -> str:
    kinds = list(reports)
    doc = {
        "schema": REPORT_SCHEMA,
        "reports": [reports[k].to_dict() for k in kinds],
        "relative_differences": _rdiffs(reports),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _rdiffs(reports: dict) -> dict:
    """R. Diff. of each robust model's mean and worst-k mean against each benchmark model."""
    out = {}
    for rk, rr in reports.items():
        if not rk.robust:
            continue
        for bk, br in reports.items():
            if bk.robust:
                continue
            key = f"{rk.value}_vs_{bk.value}"
            out[key] = {
                "mean": _safe_rdiff(rr.mean, br.mean),
                "worst_k_mean": _safe_rdiff(rr.worst_k_mean, br.worst_k_mean),
            }
    return out


def _safe_rdiff(a, b):
    return None if b >= 1 else relative_difference(a, b)


def reports_to_csv(reports: dict) -> str:
    buf = io.StringIO()
    kinds = list(reports)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run", "seed"] + [k.value for k in kinds])
    first = reports[kinds[0]]
    for i, seed in enumerate(first.seeds["run_seeds"]):
        w.writerow([i + 1, seed] + [repr(float(reports[k].run_aucs[i])) for k in kinds])
    return buf.getvalue()


def reports_to_markdown(reports: dict) -> str:
    kinds = list(reports)
    first = reports[kinds[0]]
    k = min(first.worst_k, first.run_aucs.size)
    rd = _rdiffs(reports)
    head = ["Dataset", "Statistic"] + [kd.cli_name.upper() for kd in kinds] + [f"R. Diff. {key}" for key in rd]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for label, mean_attr, std_attr, rd_key in (
        ("Overall", "mean", "std", "mean"),
        (f"Worst {k}", "worst_k_mean", "worst_k_std", "worst_k_mean"),
    ):
        row = [first.dataset_name, label]
        row += [f"{getattr(reports[kd], mean_attr):.4f} ± {getattr(reports[kd], std_attr):.4f}" for kd in kinds]
        row += ["n/a" if v[rd_key] is None else f"{100 * v[rd_key]:.2f}%" for v in rd.values()]
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"
