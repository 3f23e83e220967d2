"""Plug-in noniterative conditional expectation (NICE) parametric g-formula.

Two models are fit: a pooled logistic model for ``L_k`` (``k = 1..K``) and a
linear model for ``Y``. The counterfactual mean under a static intervention
is then evaluated either by Monte Carlo (forward simulation of ``L_1..L_K``
from each observed baseline history with treatment held at the assigned
dose) or by exact enumeration of all ``2^K`` covariate paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (ConvergenceError, DataSchemaError, DesignError, EnumerationInfeasibleError,
                     GNullError)
from .features import History, ModelSpec, covariate_design, outcome_design
from .glm import FitResult, expit, fit_linear, fit_logistic

MAX_ENUMERATION_K = 20
_ENUM_ROW_BUDGET = 1 << 18


@dataclass(frozen=True)
class Intervention:
    """Static strategy: ``dose[k]`` is the treatment assigned at time ``k``."""

    label: str
    dose: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "dose", tuple(float(d) for d in self.dose))
        if not self.dose:
            raise ValueError("intervention needs at least one dose")

    @classmethod
    def static(cls, value: float, K: int, label: str | None = None) -> "Intervention":
        if label is None:
            label = f"a={value:g}"
        return cls(label, (float(value),) * (K + 1))


@dataclass
class FittedNuisance:
    """Fitted covariate/outcome models plus the observed baseline histories.

    ``baseline_l`` holds times ``-n_prebaseline..0`` for each individual;
    those values are always taken from data, never simulated.
    """

    covariate_fit: FitResult
    outcome_fit: FitResult
    spec: ModelSpec
    K: int
    baseline_l: np.ndarray
    baseline_u: np.ndarray | None
    n_prebaseline: int

    @property
    def n_baselines(self) -> int:
        return self.baseline_l.shape[0]

    def _history(self, index: np.ndarray, intervention: Intervention) -> History:
        if len(intervention.dose) != self.K + 1:
            raise DesignError(
                f"intervention {intervention.label!r} has {len(intervention.dose)} doses, need {self.K + 1}")
        m = index.shape[0]
        l = np.zeros((m, self.n_prebaseline + self.K + 1))
        l[:, : self.n_prebaseline + 1] = self.baseline_l[index]
        a = np.broadcast_to(np.asarray(intervention.dose), (m, self.K + 1))
        u = None if self.baseline_u is None else self.baseline_u[index]
        return History(l=l, a=a, u=u, n_prebaseline=self.n_prebaseline)


@dataclass
class GFormulaResult:
    means: dict[str, float]
    difference: float
    labels: tuple[str, str]
    nuisance: FittedNuisance | None = field(default=None, repr=False, compare=False)

    def targets(self) -> dict[str, float]:
        """Means keyed by intervention label, plus ``difference``."""
        return {**self.means, "difference": self.difference}


def fit_nuisance(data, spec: ModelSpec, K: int | None = None,
                 start: FittedNuisance | None = None) -> FittedNuisance:
    """Fit the pooled covariate model and the outcome model on ``data``.

    ``start`` warm-starts the logistic fit from a previous fit of the same
    spec; the maximum likelihood solution is unchanged.
    """
    K = data.K if K is None else K
    if K < 1 or K > data.K:
        raise DesignError(f"K={K} outside the data's follow-up 1..{data.K}")
    if data.a.shape[0] == 0:
        raise DesignError("empty dataset")
    if spec.uses_u and getattr(data, "u", None) is None:
        raise DesignError(f"{spec.label.value} spec references u but the data have no u")
    npre = data.n_prebaseline
    l_follow = data.l[:, npre + 1: npre + K + 1]
    if not np.all((l_follow == 0) | (l_follow == 1)):
        raise DataSchemaError("the covariate model requires binary L")

    Xc = np.vstack([covariate_design(data, k, spec) for k in range(1, K + 1)])
    yc = np.concatenate([data.l[:, npre + k] for k in range(1, K + 1)])
    try:
        cov_fit = fit_logistic(Xc, yc, start=None if start is None else start.covariate_fit.coefficients)
    except GNullError as exc:
        raise type(exc)(f"covariate model ({spec.label.value}): {exc}") from exc
    if not cov_fit.converged:
        raise ConvergenceError(
            f"covariate model ({spec.label.value}): IRLS did not converge in {cov_fit.iterations} iterations")
    try:
        out_fit = fit_linear(outcome_design(data, K, spec), data.y)
    except GNullError as exc:
        raise type(exc)(f"outcome model ({spec.label.value}): {exc}") from exc

    return FittedNuisance(
        covariate_fit=cov_fit,
        outcome_fit=out_fit,
        spec=spec,
        K=K,
        baseline_l=data.l[:, : npre + 1].copy(),
        baseline_u=None if getattr(data, "u", None) is None else np.asarray(data.u, float).copy(),
        n_prebaseline=npre,
    )


def simulate_outcomes(fit: FittedNuisance, intervention: Intervention,
                      uniforms: np.ndarray) -> np.ndarray:
    """Predicted outcome for each simulation unit.

    Unit ``j`` starts from baseline ``j mod n``; ``uniforms[j, k-1]`` decides
    ``L_k`` (``L_k = 1`` iff the uniform falls below the predicted
    probability), which is what makes random numbers common across
    interventions.
    """
    m = uniforms.shape[0]
    hist = fit._history(np.arange(m) % fit.n_baselines, intervention)
    gamma = fit.covariate_fit.coefficients
    npre = fit.n_prebaseline
    for k in range(1, fit.K + 1):
        p = expit(covariate_design(hist, k, fit.spec) @ gamma)
        hist.l[:, npre + k] = uniforms[:, k - 1] < p
    return outcome_design(hist, fit.K, fit.spec) @ fit.outcome_fit.coefficients


def mc_counterfactual_mean(fit: FittedNuisance, intervention: Intervention,
                           n_simul: int | None = None, rng=None,
                           uniforms: np.ndarray | None = None) -> float:
    """Monte Carlo g-formula mean under ``intervention``.

    Pass ``uniforms`` (shape ``(n_simul, K)``) to share random numbers across
    calls; otherwise they are drawn from ``rng`` (a Generator or seed).
    """
    if uniforms is None:
        n_simul = fit.n_baselines if n_simul is None else n_simul
        if n_simul < 1:
            raise ValueError("n_simul must be >= 1")
        uniforms = np.random.default_rng(rng).random((n_simul, fit.K))
    return float(np.mean(simulate_outcomes(fit, intervention, uniforms)))


def enumerate_counterfactual_mean(fit: FittedNuisance, intervention: Intervention) -> float:
    """Exact g-formula mean: sum over all ``2^K`` covariate paths per baseline."""
    K = fit.K
    if K > MAX_ENUMERATION_K:
        raise EnumerationInfeasibleError(f"enumeration infeasible: 2^{K} paths per baseline")
    n_paths = 1 << K
    paths = ((np.arange(n_paths)[:, None] >> np.arange(K)) & 1).astype(float)
    gamma = fit.covariate_fit.coefficients
    omega = fit.outcome_fit.coefficients
    npre = fit.n_prebaseline
    chunk = max(1, _ENUM_ROW_BUDGET // n_paths)
    total = 0.0
    for lo in range(0, fit.n_baselines, chunk):
        base = np.arange(lo, min(fit.n_baselines, lo + chunk))
        m = base.shape[0]
        hist = fit._history(np.repeat(base, n_paths), intervention)
        tiled = np.tile(paths, (m, 1))
        hist.l[:, npre + 1:] = tiled
        weight = np.ones(m * n_paths)
        for k in range(1, K + 1):
            p = expit(covariate_design(hist, k, fit.spec) @ gamma)
            weight *= np.where(tiled[:, k - 1] == 1.0, p, 1.0 - p)
        pred = outcome_design(hist, K, fit.spec) @ omega
        w = weight.reshape(m, n_paths)
        if not np.allclose(w.sum(axis=1), 1.0, rtol=0.0, atol=1e-9):
            raise AssertionError("path probabilities do not sum to one")
        total += float(np.sum((w * pred.reshape(m, n_paths)).sum(axis=1)))
    return total / fit.n_baselines


def _check_enumerable(data) -> None:
    if not np.all((data.l == 0) | (data.l == 1)):
        raise EnumerationInfeasibleError("enumeration requires binary covariates")


def estimate_effect(data, spec: ModelSpec, interventions: Sequence[Intervention], *,
                    K: int | None = None, n_simul: int | None = None, mode: str = "mc",
                    seed=0, start: FittedNuisance | None = None) -> GFormulaResult:
    """Fit the nuisance models and evaluate both interventions.

    ``difference`` is the second intervention's mean minus the first's. In
    ``mc`` mode both interventions reuse the same uniforms.
    """
    first, second = interventions
    if first.label == second.label:
        raise ValueError("interventions must have distinct labels")
    if mode not in ("mc", "enumerate"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "enumerate":
        _check_enumerable(data)
    fit = fit_nuisance(data, spec, K=K, start=start)
    if mode == "mc":
        n_simul = fit.n_baselines if n_simul is None else n_simul
        if n_simul < 1:
            raise ValueError("n_simul must be >= 1")
        uniforms = np.random.default_rng(seed).random((n_simul, fit.K))
        means = {iv.label: mc_counterfactual_mean(fit, iv, uniforms=uniforms)
                 for iv in interventions}
    else:
        means = {iv.label: enumerate_counterfactual_mean(fit, iv) for iv in interventions}
    return GFormulaResult(means=means, difference=means[second.label] - means[first.label],
                          labels=(first.label, second.label), nuisance=fit)
