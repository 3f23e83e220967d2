"""Simulation study: scenarios x analysis models x replicates.

For each replicate a dataset is generated, the g-formula is applied with the
requested analysis model, and bootstrap CIs are computed for the two
counterfactual means and their difference. :func:`summarize` turns the
per-replicate results into bias / SE / coverage rows.

Random streams are derived from ``(master_seed, scenario, analysis model,
replicate, purpose)``. The data stream ignores the analysis model, so every
model in a scenario analyzes the same datasets.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .bootstrap import CiResult, bootstrap_gformula
from .datagen import DgpConfig, TreatmentKind, generate_dataset
from .errors import CellFailureError, ConfigError, GNullError
from .features import Level, ModelSpec, builtin_spec
from .gformula import Intervention

log = logging.getLogger(__name__)

TARGETS = ("mean_low", "mean_high", "difference")
TRUTHS = {"mean_low": 500.0, "mean_high": 500.0, "difference": 0.0}
SCALES = {
    "desk": {"n": 2000, "n_replicates": 50, "bootstrap_B": 100},
    "paper": {"n": 10_000, "n_replicates": 250, "bootstrap_B": 250},
}
STANDARD_K = (1, 5, 10)
MAX_FAILED_FRACTION = 0.05

_KIND_CODE = {TreatmentKind.BINARY: 0, TreatmentKind.CONTINUOUS: 1}
_LEVEL_CODE = {Level.LEAST: 0, Level.MODERATE: 1, Level.MOST: 2, Level.BENCHMARK: 3, Level.CUSTOM: 4}
_PURPOSE_CODE = {"data": 0, "mc": 1, "bootstrap": 2}
_DOSES = {TreatmentKind.CONTINUOUS: (50.0, 150.0), TreatmentKind.BINARY: (0.0, 1.0)}


def derive_seed(master_seed: int, *key: int) -> int:
    """64-bit seed for the stream addressed by ``key`` (order-free derivation)."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ScenarioConfig:
    treatment_kind: TreatmentKind
    K: int
    n: int = SCALES["desk"]["n"]
    n_replicates: int = SCALES["desk"]["n_replicates"]
    bootstrap_B: int = SCALES["desk"]["bootstrap_B"]
    ci_level: float = 0.95
    flexibilities: tuple[Level, ...] = (Level.LEAST, Level.MODERATE, Level.MOST, Level.BENCHMARK)
    master_seed: int = 0
    scale: str = "desk"
    n_simul: int | None = None
    ci_method: str = "percentile"
    custom_spec: ModelSpec | None = None
    allow_custom_K: bool = False

    def __post_init__(self):
        object.__setattr__(self, "treatment_kind", TreatmentKind(self.treatment_kind))
        object.__setattr__(self, "flexibilities", tuple(Level(f) for f in self.flexibilities))
        if self.K not in STANDARD_K and not self.allow_custom_K:
            raise ConfigError("K must be one of 1,5,10 unless allow_custom_K=true")
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        for name in ("n", "n_replicates", "bootstrap_B"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not 0.0 < self.ci_level < 1.0:
            raise ConfigError("ci_level must lie in (0, 1)")
        if self.scale not in SCALES:
            raise ConfigError(f"scale must be one of {sorted(SCALES)}")
        if self.ci_method not in ("percentile", "normal"):
            raise ConfigError("ci_method must be 'percentile' or 'normal'")
        if Level.CUSTOM in self.flexibilities and self.custom_spec is None:
            raise ConfigError("flexibility 'custom' needs a custom_spec")

    @classmethod
    def at_scale(cls, treatment_kind, K: int, scale: str = "desk", **overrides) -> "ScenarioConfig":
        if scale not in SCALES:
            raise ConfigError(f"scale must be one of {sorted(SCALES)}")
        return cls(treatment_kind=treatment_kind, K=K, scale=scale, **{**SCALES[scale], **overrides})

    @property
    def scenario_id(self) -> str:
        return f"{self.treatment_kind.value}_K{self.K}"

    @property
    def interventions(self) -> tuple[Intervention, Intervention]:
        lo, hi = _DOSES[self.treatment_kind]
        return Intervention.static(lo, self.K), Intervention.static(hi, self.K)

    def spec_for(self, flexibility) -> ModelSpec:
        flexibility = Level(flexibility)
        if flexibility is Level.CUSTOM:
            return self.custom_spec
        return builtin_spec(flexibility, self.K)

    def seed(self, flexibility, replicate: int, purpose: str) -> int:
        kind = _KIND_CODE[self.treatment_kind]
        if purpose == "data":
            return derive_seed(self.master_seed, kind, self.K, _PURPOSE_CODE["data"])
        return derive_seed(self.master_seed, kind, self.K, _LEVEL_CODE[Level(flexibility)],
                           replicate, _PURPOSE_CODE[purpose])

    def dgp(self) -> DgpConfig:
        return DgpConfig.for_kind(self.treatment_kind, K=self.K, n=self.n,
                                  master_seed=self.seed(None, 0, "data"))


@dataclass
class ReplicateResult:
    replicate: int
    estimates: dict[str, float] = field(default_factory=dict)
    cis: dict[str, CiResult] = field(default_factory=dict)
    error: str | None = None
    n_boot_failed: int = 0

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class CellResult:
    scenario: ScenarioConfig
    flexibility: Level
    replicates: list[ReplicateResult]

    @property
    def n_failed(self) -> int:
        return sum(not r.ok for r in self.replicates)


@dataclass(frozen=True)
class MetricsRow:
    scenario: str
    treatment_kind: str
    K: int
    flexibility: str
    target: str
    truth: float
    bias: float
    se: float
    coverage: float
    n_replicates_used: int


def run_replicate(scenario: ScenarioConfig, flexibility, replicate: int) -> ReplicateResult:
    """Generate one dataset and estimate every target with bootstrap CIs."""
    flexibility = Level(flexibility)
    spec = scenario.spec_for(flexibility)
    data = generate_dataset(scenario.dgp(), replicate)
    try:
        boot = bootstrap_gformula(
            data, spec, scenario.interventions,
            B=scenario.bootstrap_B, level=scenario.ci_level,
            seed=scenario.seed(flexibility, replicate, "bootstrap"),
            mc_seed=scenario.seed(flexibility, replicate, "mc"),
            n_simul=scenario.n_simul, ci_method=scenario.ci_method,
        )
    except GNullError as exc:
        return ReplicateResult(replicate, error=f"{exc.code}: {exc}")
    names = dict(zip(boot.targets, TARGETS))
    return ReplicateResult(
        replicate,
        estimates={names[t]: ci.point for t, ci in boot.cis.items()},
        cis={names[t]: ci for t, ci in boot.cis.items()},
        n_boot_failed=boot.n_failed,
    )


def _run_job(job) -> ReplicateResult:
    return run_replicate(*job)


def run_cell(scenario: ScenarioConfig, flexibility, workers: int = 1,
             executor: ProcessPoolExecutor | None = None) -> CellResult:
    """All replicates of one (scenario, analysis model) cell.

    Output does not depend on ``workers``: replicates are seeded individually
    and collected in replicate order.
    """
    flexibility = Level(flexibility)
    jobs = [(scenario, flexibility, r) for r in range(scenario.n_replicates)]
    if executor is not None:
        results = list(executor.map(_run_job, jobs))
    elif workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    cell = CellResult(scenario, flexibility, sorted(results, key=lambda r: r.replicate))
    if cell.n_failed > MAX_FAILED_FRACTION * scenario.n_replicates:
        first = next(r.error for r in cell.replicates if not r.ok)
        raise CellFailureError(
            f"cell {scenario.scenario_id}/{flexibility.value}: {cell.n_failed}/"
            f"{scenario.n_replicates} replicates failed (first: {first})")
    if cell.n_failed:
        log.warning("cell %s/%s: %d failed replicates", scenario.scenario_id,
                    flexibility.value, cell.n_failed)
    return cell


def summarize_target(estimates: Sequence[float], intervals: Sequence[tuple[float, float] | None],
                     truth: float) -> tuple[float, float, float, int]:
    """``(bias, se, coverage, n)``; SE is the across-replicate SD (ddof=1)."""
    est = np.asarray(estimates, dtype=float)
    if est.size == 0:
        raise ValueError("no successful replicates to summarize")
    bias = float(np.mean(est)) - truth
    se = float(np.std(est, ddof=1)) if est.size > 1 else math.nan
    hits = [lo <= truth <= hi for lo, hi in (iv for iv in intervals if iv is not None)]
    coverage = float(np.mean(hits)) if hits else math.nan
    return bias, se, coverage, int(est.size)


def summarize(cell: CellResult, truths: dict[str, float] = TRUTHS) -> list[MetricsRow]:
    ok = [r for r in cell.replicates if r.ok]
    if not ok:
        raise CellFailureError(f"cell {cell.scenario.scenario_id}/{cell.flexibility.value}: "
                               "no successful replicates")
    rows = []
    for target in TARGETS:
        bias, se, cov, n = summarize_target(
            [r.estimates[target] for r in ok],
            [(r.cis[target].lower, r.cis[target].upper) for r in ok],
            truths[target])
        rows.append(MetricsRow(cell.scenario.scenario_id, cell.scenario.treatment_kind.value,
                               cell.scenario.K, cell.flexibility.value, target, truths[target],
                               bias, se, cov, n))
    return rows


# --- reports ---------------------------------------------------------------

REPLICATE_COLUMNS = ["scenario", "flexibility", "replicate", "target", "estimate",
                     "ci_lower", "ci_upper"]
SUMMARY_COLUMNS = ["scenario", "treatment_kind", "K", "flexibility", "target", "truth",
                   "bias", "se", "coverage", "n_replicates_used"]
_KIND_ORDER = {"continuous": 0, "binary": 1}
_LEVEL_ORDER = {lv.value: i for i, lv in enumerate(Level)}
_LEVEL_TITLE = {"least": "Least flexible", "moderate": "Moderately flexible",
                "most": "Most flexible", "benchmark": "Benchmark", "custom": "Custom"}


def _row_key(row: MetricsRow):
    return (TARGETS.index(row.target), _KIND_ORDER[row.treatment_kind],
            _LEVEL_ORDER[row.flexibility], row.K)


def write_replicates_csv(cell: CellResult, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPLICATE_COLUMNS)
        for r in cell.replicates:
            if not r.ok:
                continue
            for t in TARGETS:
                ci = r.cis[t]
                w.writerow([cell.scenario.scenario_id, cell.flexibility.value, r.replicate, t,
                            repr(r.estimates[t]), repr(ci.lower), repr(ci.upper)])


def read_replicates_csv(path) -> dict[str, tuple[list[float], list[tuple[float, float]]]]:
    """Per-target estimates and intervals from a ``replicates.csv``."""
    out: dict[str, tuple[list, list]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            est, ivs = out.setdefault(rec["target"], ([], []))
            est.append(float(rec["estimate"]))
            ivs.append((float(rec["ci_lower"]), float(rec["ci_upper"])))
    return out


def _fmt(x: float, digits: int = 2) -> str:
    return "NA" if math.isnan(x) else f"{x:.{digits}f}"


def markdown_table(rows: Iterable[MetricsRow], title: str) -> str:
    lines = [f"## {title}", "",
             "| Treatment | G-formula application | K | Target | Bias | SE | Coverage | Replicates |",
             "|---|---|---|---|---|---|---|---|"]
    for r in sorted(rows, key=_row_key):
        lines.append(f"| {r.treatment_kind} | {_LEVEL_TITLE[r.flexibility]} | {r.K} | {r.target} "
                     f"| {_fmt(r.bias)} | {_fmt(r.se)} | {_fmt(r.coverage)} | {r.n_replicates_used} |")
    return "\n".join(lines) + "\n"


def emit_report(cells: Sequence[CellResult], out_dir, rows: Sequence[MetricsRow] | None = None,
                targets: Sequence[str] = TARGETS) -> list[Path]:
    """Write per-cell replicate CSVs, ``summary.csv`` and markdown tables.

    ``summary.md`` mirrors the difference-of-means table (one row per
    treatment kind, analysis model and K); ``summary_means.md`` holds the
    counterfactual-mean rows. ``targets`` filters which targets are reported.
    """
    targets = tuple(targets)
    if not targets:
        raise ConfigError("target filter is empty")
    unknown = set(targets) - set(TARGETS)
    if unknown:
        raise ConfigError(f"unknown targets {sorted(unknown)}")
    if rows is None:
        rows = [row for cell in cells for row in summarize(cell)]
    rows = sorted((r for r in rows if r.target in targets), key=_row_key)
    if not rows:
        raise ConfigError("nothing to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for cell in cells:
        path = out / cell.scenario.scenario_id / cell.flexibility.value / "replicates.csv"
        write_replicates_csv(cell, path)
        written.append(path)

    summary = out / "summary.csv"
    with open(summary, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow([r.scenario, r.treatment_kind, r.K, r.flexibility, r.target, repr(r.truth),
                        repr(r.bias), repr(r.se), repr(r.coverage), r.n_replicates_used])
    written.append(summary)

    diff = [r for r in rows if r.target == "difference"]
    if diff:
        path = out / "summary.md"
        path.write_text(markdown_table(diff, "Difference of counterfactual means (truth 0)"),
                        encoding="utf-8")
        written.append(path)
    means = [r for r in rows if r.target != "difference"]
    if means:
        path = out / "summary_means.md"
        path.write_text(markdown_table(means, "Counterfactual means (truth 500)"), encoding="utf-8")
        written.append(path)
    return written


def read_summary_csv(path) -> list[MetricsRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [MetricsRow(r["scenario"], r["treatment_kind"], int(r["K"]), r["flexibility"],
                           r["target"], float(r["truth"]), float(r["bias"]), float(r["se"]),
                           float(r["coverage"]), int(r["n_replicates_used"]))
                for r in csv.DictReader(fh)]


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


