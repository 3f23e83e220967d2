"""Logistic and linear regression fitted from scratch.

Logistic models are fit by iteratively reweighted least squares (Newton's
method on the Bernoulli log-likelihood); linear models by an SVD-based least
squares solve. No regularization, weights or offsets.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import DesignError, SeparationError, SingularDesignError

IRLS_TOL = 1e-8
IRLS_MAX_ITER = 25
_EXTREME_PROB = 1e-10
# Relative floor on eigenvalues of the column-scaled Gram matrix, i.e. a
# condition number of about 1e6 on the scaled design itself.
_RANK_RTOL = 1e-12


class Family(enum.Enum):
    LOGISTIC = "logistic"
    LINEAR = "linear"


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FitResult:
    """Fitted coefficients in design-column order.

    ``log_likelihood_or_rss`` holds the Bernoulli log-likelihood for logistic
    fits and the residual sum of squares for linear fits. ``covariance`` is the
    model-based covariance of the coefficients (inverse observed information for
    logistic fits, ``sigma^2 (X'X)^-1`` for linear fits).
    """

    coefficients: np.ndarray
    converged: bool
    iterations: int
    log_likelihood_or_rss: float
    covariance: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        coef = np.array(self.coefficients, dtype=float)
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)

    @property
    def standard_errors(self) -> np.ndarray:
        if self.covariance is None:
            raise ValueError("fit carries no covariance")
        return np.sqrt(np.diag(self.covariance))


def expit(x):
    """Inverse logit, ``1 / (1 + exp(-x))``, elementwise; NaN propagates.

    scipy's ufunc saturates cleanly to 0/1 in both tails without overflow
    warnings.
    """
    out = special.expit(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def _as_design(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DesignError(f"design {X.shape} does not match response {y.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DesignError("design or response contains non-finite values")
    return X, y


def _check_rank(X: np.ndarray) -> None:
    n, p = X.shape
    if n < p:
        raise SingularDesignError(f"singular design: {n} rows for {p} columns")
    # Column-scale first so that wildly different units (a dose in the
    # hundreds next to a 0/1 indicator) do not masquerade as rank loss.
    scale = np.sqrt(np.sum(X * X, axis=0))
    if np.any(scale == 0.0):
        raise SingularDesignError("singular design: all-zero column")
    Xs = X / scale
    ev = np.linalg.eigvalsh(Xs.T @ Xs)
    if ev[0] <= ev[-1] * _RANK_RTOL:
        raise SingularDesignError(f"singular design: rank < {p}")


def fit_logistic(X, y, tol: float = IRLS_TOL, max_iter: int = IRLS_MAX_ITER,
                 start=None) -> FitResult:
    """Maximum-likelihood logistic regression by IRLS.

    Iterates Newton steps until the largest absolute coefficient change falls
    below ``tol`` or ``max_iter`` steps have been taken. ``start`` optionally
    warm-starts the coefficients (used by the bootstrap).

    Raises
    ------
    SingularDesignError
        Design is not of full column rank.
    SeparationError
        Responses are (quasi-)completely separated, so the MLE does not exist.
    """
    X, y = _as_design(X, y)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise DesignError("logistic responses must be 0/1")
    _check_rank(X)
    if y.min() == y.max():
        raise SeparationError("separation: all responses equal")

    if start is None:
        # Same starting point as the classic GLM recipe: one weighted
        # least-squares step from mu = (y + 1/2) / 2.
        mu = (y + 0.5) / 2.0
        eta = np.log(mu / (1.0 - mu))
        w = mu * (1.0 - mu)
        beta = _solve_weighted(X, w, w * eta)
    else:
        beta = np.array(start, dtype=float)

    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = X @ beta
        p = expit(eta)
        w = p * (1.0 - p)
        step = _solve_weighted(X, w, y - p)
        beta = beta + step
        if not np.all(np.isfinite(beta)):
            raise SeparationError("separation: coefficients diverged")
        if np.max(np.abs(step)) < tol:
            converged = True
            break

    eta = X @ beta
    p = expit(eta)
    if np.all((p < _EXTREME_PROB) | (p > 1.0 - _EXTREME_PROB)):
        raise SeparationError("separation: fitted probabilities are all 0 or 1")
    if not converged and np.max(np.abs(eta)) > 30.0:
        raise SeparationError("separation: linear predictor growing without bound")
    if not converged:
        warnings.warn(f"IRLS did not converge in {max_iter} iterations",
                      ConvergenceWarning, stacklevel=2)

    loglik = float(np.sum(y * eta - np.logaddexp(0.0, eta)))
    w = p * (1.0 - p)
    info = X.T @ (w[:, None] * X)
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        cov = None
    return FitResult(beta, converged, it, loglik, cov)


def _solve_weighted(X: np.ndarray, w: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``(X' W X) b = X' rhs``; the Newton step of IRLS."""
    info = X.T @ (w[:, None] * X)
    grad = X.T @ rhs
    try:
        return np.linalg.solve(info, grad)
    except np.linalg.LinAlgError as exc:
        raise SeparationError("separation: information matrix is singular") from exc


def fit_linear(X, y) -> FitResult:
    """Ordinary least squares via SVD (``numpy.linalg.lstsq``)."""
    X, y = _as_design(X, y)
    _check_rank(X)
    n, p = X.shape
    beta, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    rss = float(resid @ resid)
    cov = None
    if n > p:
        cov = rss / (n - p) * np.linalg.pinv(X.T @ X)
    return FitResult(beta, True, 1, rss, cov)


def predict_mean(fit: FitResult, family: Family, row):
    """Predicted mean for one design row or a stacked design matrix."""
    row = np.asarray(row, dtype=float)
    if row.shape[-1] != fit.coefficients.shape[0]:
        raise DesignError(
            f"row has {row.shape[-1]} entries, fit has {fit.coefficients.shape[0]} coefficients")
    eta = row @ fit.coefficients
    if family is Family.LOGISTIC:
        return expit(eta)
    return float(eta) if np.ndim(eta) == 0 else eta
