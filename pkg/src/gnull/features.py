"""Design rows for the covariate (``L_k``) and outcome (``Y``) models.

A model is a list of :class:`Term` objects, each evaluated against an
individual's treatment/covariate history at a reference time ``t`` (``t = k``
for the covariate model of ``L_k``, ``t = K`` for the outcome model). Lags and
summation ends are relative to ``t``; summation starts are absolute times, so
``Term.l_sum(-9, 0)`` at ``t = K`` is ``sum_{i=-9}^{K} l_i``.

Histories are anything with ``l`` (``(m, n_prebaseline + T + 1)``), ``a``
(``(m, T + 1)``), ``u`` (``(m,)`` or ``None``) and ``n_prebaseline`` attributes,
e.g. :class:`gnull.datagen.Dataset` or :class:`History`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DesignError


class TermKind(str, enum.Enum):
    INTERCEPT = "intercept"
    TREATMENT_LAG = "treatment_lag"
    TREATMENT_CUMSUM = "treatment_cumsum"
    COVARIATE_LAG = "covariate_lag"
    COVARIATE_CUMSUM = "covariate_cumsum"
    COVARIATE_CUMAVG = "covariate_cumavg"
    UNMEASURED_U = "unmeasured_u"
    TREATMENT_LAG_TIMES_U = "treatment_lag_times_u"
    PRODUCT = "product"


_RANGE_KINDS = {TermKind.TREATMENT_CUMSUM, TermKind.COVARIATE_CUMSUM, TermKind.COVARIATE_CUMAVG}
_LAG_KINDS = {TermKind.TREATMENT_LAG, TermKind.COVARIATE_LAG, TermKind.TREATMENT_LAG_TIMES_U}


@dataclass(frozen=True)
class Term:
    kind: TermKind
    lag: int = 0
    start: int = 0
    end_offset: int = 0
    factors: tuple["Term", ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", TermKind(self.kind))
        object.__setattr__(self, "factors", tuple(self.factors))
        if self.kind in _LAG_KINDS and self.lag < 0:
            raise ConfigError(f"{self.kind.value}: lag must be >= 0")
        if self.kind is TermKind.PRODUCT and len(self.factors) < 2:
            raise ConfigError("product needs at least two factors")

    # constructors -----------------------------------------------------------
    @classmethod
    def intercept(cls):
        return cls(TermKind.INTERCEPT)

    @classmethod
    def a_lag(cls, j: int):
        return cls(TermKind.TREATMENT_LAG, lag=j)

    @classmethod
    def a_sum(cls, start: int, end_offset: int):
        return cls(TermKind.TREATMENT_CUMSUM, start=start, end_offset=end_offset)

    @classmethod
    def l_lag(cls, j: int):
        return cls(TermKind.COVARIATE_LAG, lag=j)

    @classmethod
    def l_sum(cls, start: int, end_offset: int):
        return cls(TermKind.COVARIATE_CUMSUM, start=start, end_offset=end_offset)

    @classmethod
    def l_avg(cls, start: int, end_offset: int):
        return cls(TermKind.COVARIATE_CUMAVG, start=start, end_offset=end_offset)

    @classmethod
    def u(cls):
        return cls(TermKind.UNMEASURED_U)

    @classmethod
    def a_lag_u(cls, j: int):
        return cls(TermKind.TREATMENT_LAG_TIMES_U, lag=j)

    @classmethod
    def product(cls, *factors: "Term"):
        return cls(TermKind.PRODUCT, factors=factors)

    # introspection ----------------------------------------------------------
    @property
    def uses_u(self) -> bool:
        if self.kind is TermKind.PRODUCT:
            return any(f.uses_u for f in self.factors)
        return self.kind in (TermKind.UNMEASURED_U, TermKind.TREATMENT_LAG_TIMES_U)

    @property
    def uses_l(self) -> bool:
        if self.kind is TermKind.PRODUCT:
            return any(f.uses_l for f in self.factors)
        return self.kind in (TermKind.COVARIATE_LAG, TermKind.COVARIATE_CUMSUM,
                             TermKind.COVARIATE_CUMAVG)

    def latest_offset(self) -> int | None:
        """Latest referenced time relative to ``t`` (None: no time reference)."""
        if self.kind in _LAG_KINDS:
            return -self.lag
        if self.kind in _RANGE_KINDS:
            return self.end_offset
        if self.kind is TermKind.PRODUCT:
            offs = [o for o in (f.latest_offset() for f in self.factors) if o is not None]
            return max(offs) if offs else None
        return None

    def is_empty_at(self, t: int) -> bool:
        """True when a summation range is empty at reference time ``t``."""
        if self.kind in _RANGE_KINDS:
            return self.start > t + self.end_offset
        if self.kind is TermKind.PRODUCT:
            return any(f.is_empty_at(t) for f in self.factors)
        return False

    def range_count(self, t: int) -> int:
        """Number of summed indices at ``t``; the divisor of a cumulative average."""
        return max(0, t + self.end_offset - self.start + 1)

    @property
    def name(self) -> str:
        k = self.kind
        if k is TermKind.INTERCEPT:
            return "1"
        if k is TermKind.UNMEASURED_U:
            return "u"
        if k is TermKind.PRODUCT:
            return "*".join(f.name for f in self.factors)
        if k in _LAG_KINDS:
            base = {TermKind.TREATMENT_LAG: "a", TermKind.COVARIATE_LAG: "l",
                    TermKind.TREATMENT_LAG_TIMES_U: "a"}[k]
            s = f"{base}[t-{self.lag}]" if self.lag else f"{base}[t]"
            return s + "*u" if k is TermKind.TREATMENT_LAG_TIMES_U else s
        end = f"t{self.end_offset:+d}" if self.end_offset else "t"
        op = {TermKind.TREATMENT_CUMSUM: "sum_a", TermKind.COVARIATE_CUMSUM: "sum_l",
              TermKind.COVARIATE_CUMAVG: "avg_l"}[k]
        return f"{op}[{self.start}..{end}]"

    # JSON -------------------------------------------------------------------
    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind.value}
        if self.kind in _LAG_KINDS:
            d["lag"] = self.lag
        elif self.kind in _RANGE_KINDS:
            d["start"] = self.start
            d["end_offset"] = self.end_offset
        elif self.kind is TermKind.PRODUCT:
            d["factors"] = [f.to_dict() for f in self.factors]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Term":
        if not isinstance(d, dict) or "kind" not in d:
            raise ConfigError(f"term descriptor needs a 'kind': {d!r}")
        try:
            kind = TermKind(d["kind"])
        except ValueError:
            raise ConfigError(f"unknown term kind {d['kind']!r}") from None
        allowed = {"kind"}
        if kind in _LAG_KINDS:
            allowed |= {"lag"}
        elif kind in _RANGE_KINDS:
            allowed |= {"start", "end_offset"}
        elif kind is TermKind.PRODUCT:
            allowed |= {"factors"}
        extra = set(d) - allowed
        if extra:
            raise ConfigError(f"term {kind.value}: unknown keys {sorted(extra)}")
        factors = tuple(cls.from_dict(f) for f in d.get("factors", ()))
        return cls(kind, lag=int(d.get("lag", 0)), start=int(d.get("start", 0)),
                   end_offset=int(d.get("end_offset", 0)), factors=factors)


class Level(str, enum.Enum):
    LEAST = "least"
    MODERATE = "moderate"
    MOST = "most"
    BENCHMARK = "benchmark"
    CUSTOM = "custom"


@dataclass(frozen=True)
class ModelSpec:
    """Regressors of the pooled covariate model and the outcome model.

    Covariate terms may only look at times strictly before ``k``; outcome terms
    may look at any time up to ``K``. Only the benchmark may reference ``u``.
    """

    covariate_terms: tuple[Term, ...]
    outcome_terms: tuple[Term, ...]
    label: Level = Level.CUSTOM

    def __post_init__(self):
        object.__setattr__(self, "covariate_terms", tuple(self.covariate_terms))
        object.__setattr__(self, "outcome_terms", tuple(self.outcome_terms))
        object.__setattr__(self, "label", Level(self.label))
        if not self.covariate_terms or not self.outcome_terms:
            raise ConfigError("both models need at least one term")
        for term in self.covariate_terms:
            off = term.latest_offset()
            if off is not None and off > -1:
                raise ConfigError(f"covariate term {term.name} looks at time >= k")
        for term in self.outcome_terms:
            off = term.latest_offset()
            if off is not None and off > 0:
                raise ConfigError(f"outcome term {term.name} looks past K")
        if self.uses_u and self.label is not Level.BENCHMARK:
            raise ConfigError("only the benchmark spec may reference u")

    @property
    def uses_u(self) -> bool:
        return any(t.uses_u for t in self.covariate_terms + self.outcome_terms)

    def to_dict(self) -> dict:
        return {
            "label": self.label.value,
            "covariate_terms": [t.to_dict() for t in self.covariate_terms],
            "outcome_terms": [t.to_dict() for t in self.outcome_terms],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        extra = set(d) - {"label", "covariate_terms", "outcome_terms"}
        if extra:
            raise ConfigError(f"model spec: unknown keys {sorted(extra)}")
        for key in ("covariate_terms", "outcome_terms"):
            if not isinstance(d.get(key), list):
                raise ConfigError(f"model spec: '{key}' must be a list of term descriptors")
        return cls(
            covariate_terms=tuple(Term.from_dict(t) for t in d["covariate_terms"]),
            outcome_terms=tuple(Term.from_dict(t) for t in d["outcome_terms"]),
            label=d.get("label", "custom"),
        )


def builtin_spec(level, K: int, n_prebaseline: int = 9) -> ModelSpec:
    """One of the four analysis models, with empty summations dropped."""
    level = Level(level)
    if K < 1:
        raise ConfigError("K must be >= 1")
    first = -n_prebaseline
    T = Term
    treat_out = [T.a_lag(0), T.a_lag(1), T.a_sum(0, -2)]
    if level is Level.LEAST:
        cov = [T.intercept(), T.a_lag(1), T.l_avg(first, -1)]
        out = [T.intercept(), *treat_out, T.l_sum(first, 0)]
    elif level is Level.MODERATE:
        cov = [T.intercept(), T.a_lag(1), T.l_lag(1), T.l_lag(2), T.l_avg(first, -3)]
        out = [T.intercept(), *treat_out, T.l_lag(0), T.l_lag(1), T.l_lag(2), T.l_sum(first, -3)]
    elif level is Level.MOST:
        cov = [T.intercept(), T.a_lag(1), *(T.l_lag(i) for i in range(1, 11))]
        out = [T.intercept(), *treat_out, *(T.l_lag(i) for i in range(0, 11))]
    elif level is Level.BENCHMARK:
        cov = [T.intercept(), T.a_lag(1), T.u(), T.a_lag_u(1)]
        out = [T.intercept(), T.u(), *treat_out]
    else:
        raise ConfigError("custom specs are built with ModelSpec directly")
    cov = [t for t in cov if not all(t.is_empty_at(k) for k in range(1, K + 1))]
    out = [t for t in out if not t.is_empty_at(K)]
    return ModelSpec(tuple(cov), tuple(out), level)


@dataclass
class History:
    """Arrays of treatment/covariate histories (see module docstring)."""

    l: np.ndarray
    a: np.ndarray
    u: np.ndarray | None = None
    n_prebaseline: int = 9
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_trajectory(cls, traj) -> "History":
        lt = sorted(traj.l)
        at = sorted(traj.a)
        return cls(
            l=np.array([[traj.l[k] for k in lt]], dtype=float),
            a=np.array([[traj.a[k] for k in at]], dtype=float),
            u=None if traj.u is None else np.array([traj.u], dtype=float),
            n_prebaseline=-lt[0],
        )


def _l_cols(hist, lo: int, hi: int) -> np.ndarray:
    i, j = lo + hist.n_prebaseline, hi + hist.n_prebaseline
    if i < 0 or j >= hist.l.shape[1]:
        raise DesignError(f"covariate history has no time {lo if i < 0 else hi}")
    return hist.l[:, i:j + 1]


def _a_cols(hist, lo: int, hi: int) -> np.ndarray:
    if lo < 0 or hi >= hist.a.shape[1]:
        raise DesignError(f"treatment history has no time {lo if lo < 0 else hi}")
    return hist.a[:, lo:hi + 1]


def _u(hist) -> np.ndarray:
    if getattr(hist, "u", None) is None:
        raise DesignError("model references u but the data have no u")
    return hist.u


def evaluate_term(term: Term, hist, t: int) -> np.ndarray:
    """Column of ``term`` at reference time ``t`` for every row of ``hist``."""
    m = hist.a.shape[0]
    k = term.kind
    if k is TermKind.INTERCEPT:
        return np.ones(m)
    if k is TermKind.UNMEASURED_U:
        return _u(hist).astype(float)
    if k is TermKind.TREATMENT_LAG:
        return _a_cols(hist, t - term.lag, t - term.lag)[:, 0]
    if k is TermKind.TREATMENT_LAG_TIMES_U:
        return _a_cols(hist, t - term.lag, t - term.lag)[:, 0] * _u(hist)
    if k is TermKind.COVARIATE_LAG:
        return _l_cols(hist, t - term.lag, t - term.lag)[:, 0]
    if k is TermKind.PRODUCT:
        col = evaluate_term(term.factors[0], hist, t)
        for f in term.factors[1:]:
            col = col * evaluate_term(f, hist, t)
        return col
    # summation ranges
    end = t + term.end_offset
    if term.start > end:
        return np.zeros(m)
    if k is TermKind.TREATMENT_CUMSUM:
        return _a_cols(hist, term.start, end).sum(axis=1)
    total = _l_cols(hist, term.start, end).sum(axis=1)
    if k is TermKind.COVARIATE_CUMAVG:
        return total / term.range_count(t)
    return total


def design(terms: Sequence[Term], hist, t: int) -> np.ndarray:
    return np.column_stack([evaluate_term(term, hist, t) for term in terms])


def covariate_design(hist, k: int, spec: ModelSpec) -> np.ndarray:
    """Covariate-model design for ``L_k``, one row per individual in ``hist``."""
    if k < 1:
        raise DesignError(f"covariate model is defined for k >= 1, got {k}")
    return design(spec.covariate_terms, hist, k)


def outcome_design(hist, K: int, spec: ModelSpec) -> np.ndarray:
    return design(spec.outcome_terms, hist, K)


def covariate_row(traj, k: int, spec: ModelSpec) -> np.ndarray:
    return covariate_design(History.from_trajectory(traj), k, spec)[0]


def outcome_row(traj, K: int, spec: ModelSpec) -> np.ndarray:
    return outcome_design(History.from_trajectory(traj), K, spec)[0]
