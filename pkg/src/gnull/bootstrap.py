"""Nonparametric bootstrap over individuals for g-formula targets."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import BootstrapUnstableError, GNullError
from .features import ModelSpec
from .gformula import GFormulaResult, Intervention, estimate_effect

MAX_FAILED_FRACTION = 0.10


@dataclass(frozen=True)
class CiResult:
    point: float
    lower: float
    upper: float
    level: float
    n_replicates: int

    def covers(self, value: float) -> bool:
        return self.lower <= value <= self.upper


@dataclass
class BootstrapResult:
    """Point estimates and CIs per target, plus the raw replicate draws."""

    point: GFormulaResult
    cis: dict[str, CiResult]
    replicates: np.ndarray
    targets: tuple[str, ...]
    failures: list[tuple[int, str]] = field(default_factory=list)

    @property
    def n_failed(self) -> int:
        return len(self.failures)


def percentile_interval(estimates, level: float) -> tuple[float, float]:
    """Percentile interval with linearly interpolated order statistics."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(np.asarray(estimates, dtype=float), [tail, 1.0 - tail], method="linear")
    return float(lo), float(hi)


def normal_interval(point: float, estimates, level: float) -> tuple[float, float]:
    """``point +/- z * SD(bootstrap estimates)``."""
    z = stats.norm.ppf(0.5 + level / 2.0)
    sd = float(np.std(np.asarray(estimates, dtype=float), ddof=1)) if len(estimates) > 1 else 0.0
    return point - z * sd, point + z * sd


def _replicate(args) -> tuple[int, np.ndarray | None, str | None]:
    b, data, spec, interventions, K, n_simul, mode, seed, start = args
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(1, b))
    resample_ss, mc_ss = ss.spawn(2)
    idx = np.random.default_rng(resample_ss).integers(0, data.n, size=data.n)
    try:
        res = estimate_effect(data.take(idx), spec, interventions, K=K, n_simul=n_simul,
                              mode=mode, seed=mc_ss, start=start)
    except GNullError as exc:
        return b, None, f"{exc.code}: {exc}"
    return b, np.array(list(res.targets().values())), None


def bootstrap_gformula(data, spec: ModelSpec, interventions: Sequence[Intervention], *,
                       B: int = 250, level: float = 0.95, seed: int = 0,
                       K: int | None = None, n_simul: int | None = None, mode: str = "mc",
                       ci_method: str = "percentile", workers: int = 1,
                       mc_seed=None) -> BootstrapResult:
    """Bootstrap CIs for each intervention mean and their difference.

    The point estimate comes from the original data. Each of the ``B``
    replicates resamples individuals with replacement, refits both models and
    re-evaluates the g-formula with its own Monte Carlo stream. Replicates
    whose refit fails are skipped and reported in ``failures``; more than 10%
    failures raises :class:`BootstrapUnstableError`. ``mc_seed`` seeds the
    point estimate's Monte Carlo draws (derived from ``seed`` when omitted).
    """
    if B < 1:
        raise ValueError("B must be >= 1")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    if ci_method not in ("percentile", "normal"):
        raise ValueError(f"unknown ci_method {ci_method!r}")

    point_seed = np.random.SeedSequence(entropy=seed, spawn_key=(0,)) if mc_seed is None else mc_seed
    point = estimate_effect(data, spec, interventions, K=K, n_simul=n_simul, mode=mode,
                            seed=point_seed)
    targets = tuple(point.targets())
    jobs = [(b, data, spec, tuple(interventions), K, n_simul, mode, seed, point.nuisance)
            for b in range(B)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_replicate, jobs, chunksize=max(1, B // (4 * workers))))
    else:
        results = [_replicate(j) for j in jobs]

    failures = [(b, msg) for b, est, msg in results if est is None]
    if len(failures) > MAX_FAILED_FRACTION * B:
        raise BootstrapUnstableError(
            f"bootstrap unstable: {len(failures)}/{B} replicates failed (first: {failures[0][1]})")
    reps = np.array([est for _, est, _ in results if est is not None]).reshape(-1, len(targets))

    cis = {}
    for j, (name, value) in enumerate(point.targets().items()):
        if ci_method == "percentile":
            lo, hi = percentile_interval(reps[:, j], level)
        else:
            lo, hi = normal_interval(value, reps[:, j], level)
        cis[name] = CiResult(point=value, lower=lo, upper=hi, level=level,
                             n_replicates=reps.shape[0])
    return BootstrapResult(point=point, cis=cis, replicates=reps, targets=targets,
                           failures=failures)
