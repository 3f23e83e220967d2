"""Longitudinal data-generating processes for the g-null simulation study.

An unmeasured ``U ~ Uniform(0, 1)`` drives both a binary time-varying covariate
``L_k`` and the end-of-study outcome ``Y``; treatment ``A_k`` depends on
``L_k`` and ``A_{k-1}`` only, and ``L_k`` depends on ``A_{k-1}``. The outcome
never depends on treatment, so the sharp causal null holds by construction.

Time runs over ``k = -n_prebaseline .. K``. Pre-baseline covariates and
``L_0`` are generated with the prior treatment set to zero; treatment starts at
``k = 0`` with ``A_{-1} = 0``.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np
from scipy import special, stats

from .errors import ConfigError, DataSchemaError
from .glm import expit

MIN_ACCEPT = 0.01


class TreatmentKind(str, enum.Enum):
    BINARY = "binary"
    CONTINUOUS = "continuous"


_ALPHA = {
    TreatmentKind.CONTINUOUS: (1.0, -0.015, 1.0, 0.015),
    TreatmentKind.BINARY: (0.0, -2.5, 1.0, 2.5),
}


@dataclass(frozen=True)
class DgpConfig:
    """Parameters of one data-generating process.

    Build with :meth:`for_kind`, which fills in the ``alpha`` matching the
    treatment type. Continuous treatment is
    ``N_[0,200](80 + 0.1 a_{k-1} + 30 l_k - 0.05 a_{k-1} l_k, 25^2)``;
    binary treatment is ``Ber(expit(-1.25 + a_{k-1} + l_k + a_{k-1} l_k))``.
    """

    treatment_kind: TreatmentKind = TreatmentKind.CONTINUOUS
    K: int = 1
    n: int = 10_000
    alpha: tuple[float, float, float, float] = _ALPHA[TreatmentKind.CONTINUOUS]
    outcome_mean_base: float = 350.0
    outcome_u_slope: float = 300.0
    outcome_sd: float = 50.0
    outcome_bounds: tuple[float, float] = (0.0, 1000.0)
    cont_intercept: float = 80.0
    cont_lag_slope: float = 0.1
    cont_l_slope: float = 30.0
    cont_interaction: float = -0.05
    cont_sd: float = 25.0
    cont_bounds: tuple[float, float] = (0.0, 200.0)
    binary_logit: tuple[float, float, float, float] = (-1.25, 1.0, 1.0, 1.0)
    n_prebaseline: int = 9
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "treatment_kind", TreatmentKind(self.treatment_kind))
        object.__setattr__(self, "alpha", tuple(float(x) for x in self.alpha))
        object.__setattr__(self, "binary_logit", tuple(float(x) for x in self.binary_logit))
        object.__setattr__(self, "outcome_bounds", tuple(float(x) for x in self.outcome_bounds))
        object.__setattr__(self, "cont_bounds", tuple(float(x) for x in self.cont_bounds))
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}")
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if len(self.alpha) != 4 or len(self.binary_logit) != 4:
            raise ConfigError("alpha and binary_logit need 4 coefficients")
        if self.outcome_sd <= 0 or self.cont_sd <= 0:
            raise ConfigError("standard deviations must be positive")
        for name in ("outcome_bounds", "cont_bounds"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ConfigError(f"{name} must satisfy lo < hi")
        if self.n_prebaseline < 0:
            raise ConfigError("n_prebaseline must be >= 0")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")

    @classmethod
    def for_kind(cls, treatment_kind, **overrides) -> "DgpConfig":
        kind = TreatmentKind(treatment_kind)
        overrides.setdefault("alpha", _ALPHA[kind])
        return cls(treatment_kind=kind, **overrides)

    @property
    def treatment_bounds(self) -> tuple[float, float]:
        if self.treatment_kind is TreatmentKind.BINARY:
            return (0.0, 1.0)
        return self.cont_bounds


@dataclass(frozen=True)
class Trajectory:
    """One individual's record. ``l`` maps time to 0/1, ``a`` time to dose."""

    id: int
    u: float | None
    l: dict[int, float]
    a: dict[int, float]
    y: float


@dataclass(eq=False)
class Dataset(Sequence[Trajectory]):
    """Column-oriented store of ``n`` trajectories.

    ``l`` has shape ``(n, n_prebaseline + K + 1)`` with column ``k +
    n_prebaseline`` holding time ``k``; ``a`` has shape ``(n, K + 1)``. ``u``
    is ``None`` when the unmeasured confounder is not available (for example
    after a CSV round trip without a ``U`` column). Indexing yields
    :class:`Trajectory` views.
    """

    ids: np.ndarray
    u: np.ndarray | None
    l: np.ndarray
    a: np.ndarray
    y: np.ndarray
    n_prebaseline: int = 9
    treatment_kind: TreatmentKind | None = None
    meta: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.a.shape[1] - 1

    @property
    def n(self) -> int:
        return self.a.shape[0]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i):
        if isinstance(i, slice):
            return self.take(np.arange(self.n)[i])
        i = int(i)
        if i < 0:
            i += self.n
        times_l = range(-self.n_prebaseline, self.K + 1)
        return Trajectory(
            id=int(self.ids[i]),
            u=None if self.u is None else float(self.u[i]),
            l={k: float(self.l[i, k + self.n_prebaseline]) for k in times_l},
            a={k: float(self.a[i, k]) for k in range(self.K + 1)},
            y=float(self.y[i]),
        )

    def __iter__(self) -> Iterator[Trajectory]:
        for i in range(self.n):
            yield self[i]

    def take(self, index) -> "Dataset":
        """Rows ``index`` (with repeats allowed) as a new dataset."""
        index = np.asarray(index)
        return replace(
            self,
            ids=self.ids[index],
            u=None if self.u is None else self.u[index],
            l=self.l[index],
            a=self.a[index],
            y=self.y[index],
        )

    def l_at(self, k: int) -> np.ndarray:
        return self.l[:, k + self.n_prebaseline]

    @classmethod
    def from_trajectories(cls, trajs: Sequence[Trajectory], n_prebaseline: int = 9,
                          treatment_kind=None) -> "Dataset":
        trajs = list(trajs)
        if not trajs:
            raise DataSchemaError("no trajectories")
        K = max(trajs[0].a)
        times_l = list(range(-n_prebaseline, K + 1))
        has_u = all(t.u is not None for t in trajs)
        return cls(
            ids=np.array([t.id for t in trajs], dtype=np.int64),
            u=np.array([t.u for t in trajs], dtype=float) if has_u else None,
            l=np.array([[t.l[k] for k in times_l] for t in trajs], dtype=float),
            a=np.array([[t.a[k] for k in range(K + 1)] for t in trajs], dtype=float),
            y=np.array([t.y for t in trajs], dtype=float),
            n_prebaseline=n_prebaseline,
            treatment_kind=treatment_kind,
        )


def truncated_normal(mu, sigma, lo: float, hi: float, rng: np.random.Generator) -> np.ndarray:
    """Vectorized draws from ``N(mu, sigma^2)`` restricted to ``[lo, hi]``.

    Rejection sampling for every element whose acceptance probability is at
    least 1%; inverse-CDF sampling (via scipy's ``truncnorm``) for the rest.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = float(sigma)
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if not lo < hi:
        raise ValueError("need lo < hi")
    za = (lo - mu) / sigma
    zb = (hi - mu) / sigma
    accept = special.ndtr(zb) - special.ndtr(za)
    out = np.empty_like(mu)

    easy = np.flatnonzero(accept >= MIN_ACCEPT)
    pending = easy
    while pending.size:
        draw = mu[pending] + sigma * rng.standard_normal(pending.size)
        ok = (draw >= lo) & (draw <= hi)
        out[pending[ok]] = draw[ok]
        pending = pending[~ok]

    hard = np.flatnonzero(accept < MIN_ACCEPT)
    if hard.size:
        out[hard] = stats.truncnorm.ppf(rng.random(hard.size), za[hard], zb[hard],
                                        loc=mu[hard], scale=sigma)
    return out


def sample_truncated_normal(mu: float, sigma: float, lo: float, hi: float,
                            rng: np.random.Generator) -> float:
    return float(truncated_normal(mu, sigma, lo, hi, rng)[0])


def _bernoulli(p: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return (rng.random(p.shape[0]) < p).astype(float)


def simulate(cfg: DgpConfig, n: int, rng: np.random.Generator, first_id: int = 0) -> Dataset:
    """Draw ``n`` independent trajectories (vectorized over individuals)."""
    a0, a1, a2, a3 = cfg.alpha
    npre, K = cfg.n_prebaseline, cfg.K
    u = rng.random(n)
    l = np.empty((n, npre + K + 1))
    a = np.empty((n, K + 1))

    p_base = expit(a0 + a2 * u)
    for col in range(npre + 1):
        l[:, col] = _bernoulli(p_base, rng)

    a_prev = np.zeros(n)
    for k in range(K + 1):
        if k >= 1:
            p = expit(a0 + a1 * a_prev + a2 * u + a3 * a_prev * u)
            l[:, k + npre] = _bernoulli(p, rng)
        lk = l[:, k + npre]
        if cfg.treatment_kind is TreatmentKind.CONTINUOUS:
            mean = (cfg.cont_intercept + cfg.cont_lag_slope * a_prev + cfg.cont_l_slope * lk
                    + cfg.cont_interaction * a_prev * lk)
            a[:, k] = truncated_normal(mean, cfg.cont_sd, *cfg.cont_bounds, rng)
        else:
            b0, b1, b2, b3 = cfg.binary_logit
            a[:, k] = _bernoulli(expit(b0 + b1 * a_prev + b2 * lk + b3 * a_prev * lk), rng)
        a_prev = a[:, k]

    y = truncated_normal(cfg.outcome_mean_base + cfg.outcome_u_slope * u, cfg.outcome_sd,
                         *cfg.outcome_bounds, rng)
    return Dataset(ids=np.arange(first_id, first_id + n, dtype=np.int64), u=u, l=l, a=a, y=y,
                   n_prebaseline=npre, treatment_kind=cfg.treatment_kind)


def generate_individual(cfg: DgpConfig, id: int, rng: np.random.Generator) -> Trajectory:
    return simulate(cfg, 1, rng, first_id=id)[0]


def replicate_seed(master_seed: int, replicate_index: int) -> np.random.SeedSequence:
    """Counter-based stream for one replicate: independent of run order."""
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(replicate_index,))


def generate_dataset(cfg: DgpConfig, replicate_index: int = 0) -> Dataset:
    rng = np.random.default_rng(replicate_seed(cfg.master_seed, replicate_index))
    ds = simulate(cfg, cfg.n, rng)
    ds.meta["replicate"] = replicate_index
    return ds


# --- long-format CSV -------------------------------------------------------

CSV_HEADER = ["id", "time", "L", "A", "Y"]


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() and abs(x) < 2**53 else repr(float(x))


def write_csv(ds: Dataset, path, include_u: bool = False) -> None:
    """Write one row per (id, time); ``A`` blank before time 0, ``Y`` only at K.

    With ``include_u`` an extra ``U`` column repeats the unmeasured confounder
    on every row (needed to run the benchmark analysis from a file).
    """
    header = CSV_HEADER + (["U"] if include_u else [])
    if include_u and ds.u is None:
        raise DataSchemaError("dataset has no u to export")
    npre, K = ds.n_prebaseline, ds.K
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(ds.n):
            for k in range(-npre, K + 1):
                row = [str(int(ds.ids[i])), str(k), _fmt(ds.l[i, k + npre]),
                       _fmt(ds.a[i, k]) if k >= 0 else "",
                       repr(float(ds.y[i])) if k == K else ""]
                if include_u:
                    row.append(repr(float(ds.u[i])))
                w.writerow(row)


def read_csv(path) -> Dataset:
    """Parse the long CSV format; every schema violation names its line."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataSchemaError(f"{path}: empty file") from None
        if header[:5] != CSV_HEADER or header[5:] not in ([], ["U"]):
            raise DataSchemaError(f"{path}: header must be {','.join(CSV_HEADER)}[,U], got {header}")
        has_u = len(header) == 6
        rows: dict[int, dict[int, tuple]] = {}
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise DataSchemaError(f"line {lineno}: expected {len(header)} columns, got {len(rec)}")
            try:
                pid, t = int(rec[0]), int(rec[1])
            except ValueError:
                raise DataSchemaError(f"line {lineno}: id/time must be integers") from None
            vals = []
            for col, text in zip(header[2:], rec[2:]):
                if text == "":
                    vals.append(None)
                    continue
                try:
                    v = float(text)
                except ValueError:
                    raise DataSchemaError(f"line {lineno}, column {col}: not a number: {text!r}") from None
                if not math.isfinite(v):
                    raise DataSchemaError(f"line {lineno}, column {col}: non-finite value")
                vals.append(v)
            if vals[0] is None:
                raise DataSchemaError(f"line {lineno}, column L: missing")
            if pid in rows and t in rows[pid]:
                raise DataSchemaError(f"line {lineno}: duplicate (id, time) = ({pid}, {t})")
            rows.setdefault(pid, {})[t] = (lineno, *vals)

    if not rows:
        raise DataSchemaError(f"{path}: no data rows")
    first = next(iter(rows.values()))
    tmin, tmax = min(first), max(first)
    if tmax < 1 or tmin > 0:
        raise DataSchemaError(f"{path}: times must span <=0 .. K>=1")
    npre, K = -tmin, tmax
    times = list(range(tmin, tmax + 1))
    ids = sorted(rows)
    n = len(ids)
    l = np.empty((n, npre + K + 1))
    a = np.empty((n, K + 1))
    y = np.empty(n)
    u = np.empty(n) if has_u else None
    for i, pid in enumerate(ids):
        recs = rows[pid]
        if sorted(recs) != times:
            raise DataSchemaError(f"id {pid}: times must be exactly {tmin}..{tmax}")
        for t in times:
            lineno, lv, av, yv, *uv = recs[t]
            l[i, t + npre] = lv
            if t >= 0:
                if av is None:
                    raise DataSchemaError(f"line {lineno}, column A: missing at time {t}")
                a[i, t] = av
            if t == K:
                if yv is None:
                    raise DataSchemaError(f"line {lineno}, column Y: missing on time-K row")
                y[i] = yv
            elif yv is not None:
                raise DataSchemaError(f"line {lineno}, column Y: only allowed on time {K}")
            if has_u:
                if uv[0] is None:
                    raise DataSchemaError(f"line {lineno}, column U: missing")
                u[i] = uv[0]
    kind = TreatmentKind.BINARY if np.all((a == 0) | (a == 1)) else TreatmentKind.CONTINUOUS
    return Dataset(ids=np.array(ids, dtype=np.int64), u=u, l=l, a=a, y=y,
                   n_prebaseline=npre, treatment_kind=kind)
