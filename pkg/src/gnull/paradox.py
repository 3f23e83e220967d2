"""Closed-form analytics for the two-period g-null example.

With outcome model ``g = t0 + t1*l1 + t2*a1 + t3*a0`` and covariate model
``P(L1 = 1 | a0) = expit(b0 + b1*a0)``, the parametric g-formula is

    h(a0, a1) = t0 + t2*a1 + t3*a0 + t1*expit(b0 + b1*a0).

Writing ``h`` as the saturated marginal structural model
``psi0 + psi1*a1 + psi2*a0 + psi3*a0*a1`` over binary treatment gives
``psi1 = t2``, ``psi2 = t3 + t1*(expit(b0 + b1) - expit(b0))`` and
``psi3 = 0``. The functions here evaluate those quantities and classify when
the parametric models are compatible with the sharp null (all treatment
coefficients of the MSM zero) or with an MSM depending on ``a1`` only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import ConfigError
from .glm import expit

DEFAULT_TOL = 1e-9
CORNERS = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass(frozen=True)
class PgfParams:
    theta: tuple[float, float, float, float]
    beta: tuple[float, float]

    def __post_init__(self):
        theta = tuple(float(x) for x in self.theta)
        beta = tuple(float(x) for x in self.beta)
        if len(theta) != 4 or len(beta) != 2:
            raise ConfigError("need 4 theta and 2 beta values")
        if not np.all(np.isfinite(theta + beta)):
            raise ConfigError("parameters must be finite")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "beta", beta)


@dataclass(frozen=True)
class MsmCoefficients:
    psi: tuple[float, float, float, float]


class Condition(str, enum.Enum):
    THETA_ALL_ZERO = "theta_all_zero"
    BETA1_ZERO = "beta1_zero"
    PERFECT_CANCELLATION = "perfect_cancellation"
    NONE = "none"


@dataclass(frozen=True)
class NullCompatibility:
    compatible: bool
    condition: Condition
    residual: float


def evaluate_h(p: PgfParams, a0: float, a1: float) -> float:
    t0, t1, t2, t3 = p.theta
    b0, b1 = p.beta
    return t0 + t2 * a1 + t3 * a0 + t1 * expit(b0 + b1 * a0)


def pgf_sum(p: PgfParams, a0: float, a1: float) -> float:
    """Literal sum over ``l1 in {0, 1}`` of outcome mean times covariate probability."""
    t0, t1, t2, t3 = p.theta
    b0, b1 = p.beta
    total = 0.0
    for l1 in (0, 1):
        g = t0 + t1 * l1 + t2 * a1 + t3 * a0
        p1 = np.exp(b0 + b1 * a0) / (1.0 + np.exp(b0 + b1 * a0))
        total += g * (p1 if l1 == 1 else 1.0 - p1)
    return float(total)


def msm_from_h(h_values: Mapping[tuple[int, int], float]) -> MsmCoefficients:
    """Saturated MSM coefficients from ``h`` at the four binary corners."""
    missing = [c for c in CORNERS if c not in h_values]
    if missing:
        raise ConfigError(f"h is missing corners {missing}")
    h00, h01, h10, h11 = (float(h_values[c]) for c in CORNERS)
    return MsmCoefficients((h00, h01 - h00, h10 - h00, h11 - h01 - h10 + h00))


def _expit_gap(b0: float, b1: float) -> float:
    return expit(b0 + b1) - expit(b0)


def msm_closed_form(p: PgfParams) -> MsmCoefficients:
    t0, t1, t2, t3 = p.theta
    b0, b1 = p.beta
    return MsmCoefficients((t0 + t1 * expit(b0), t2, t3 + t1 * _expit_gap(b0, b1), 0.0))


def cancellation_theta3(theta1: float, beta0: float, beta1: float) -> float:
    """The ``theta3`` that makes ``psi2`` vanish for the given ``theta1, beta``."""
    return -theta1 * _expit_gap(beta0, beta1)


def _classify(p: PgfParams, tol: float, constrain_theta2: bool) -> NullCompatibility:
    if not tol > 0:
        raise ValueError("tol must be positive")
    _, psi1, psi2, psi3 = msm_closed_form(p).psi
    violated = [psi2, psi3] + ([psi1] if constrain_theta2 else [])
    residual = max(abs(v) for v in violated)
    if residual > tol:
        return NullCompatibility(False, Condition.NONE, residual)
    _, t1, t2, t3 = p.theta
    b1 = p.beta[1]
    t2_ok = abs(t2) <= tol or not constrain_theta2
    if t2_ok and abs(t3) <= tol and abs(t1) <= tol:
        cond = Condition.THETA_ALL_ZERO
    elif t2_ok and abs(t3) <= tol and abs(b1) <= tol:
        cond = Condition.BETA1_ZERO
    else:
        cond = Condition.PERFECT_CANCELLATION
    return NullCompatibility(True, cond, residual)


def check_sharp_null(p: PgfParams, tol: float = DEFAULT_TOL) -> NullCompatibility:
    """Can the fitted models reproduce ``psi1 = psi2 = psi3 = 0``?

    Compatible iff the largest of ``|psi1|, |psi2|, |psi3|`` is within
    ``tol``; the reported condition is the first that holds of
    ``theta1 = theta2 = theta3 = 0``, ``theta2 = theta3 = beta1 = 0`` and
    perfect cancellation.
    """
    return _classify(p, tol, constrain_theta2=True)


def check_a1_only_msm(p: PgfParams, tol: float = DEFAULT_TOL) -> NullCompatibility:
    """Like :func:`check_sharp_null` but ``psi1`` (the ``a1`` effect) is free."""
    return _classify(p, tol, constrain_theta2=False)


def corner_values(p: PgfParams) -> dict[tuple[int, int], float]:
    return {c: evaluate_h(p, *c) for c in CORNERS}
