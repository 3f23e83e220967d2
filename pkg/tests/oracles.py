"""Independent oracles shared by unit and acceptance tests."""

import itertools

import numpy as np

from gnull.features import ModelSpec, Term


def saturated_k1_spec() -> ModelSpec:
    """Saturated models for K=1: L_1 on (a_0, l_0); Y on every product of (l_0, l_1, a_0, a_1)."""
    cov = (Term.intercept(), Term.a_lag(1), Term.l_lag(1), Term.product(Term.a_lag(1), Term.l_lag(1)))
    base = [Term.l_lag(1), Term.l_lag(0), Term.a_lag(1), Term.a_lag(0)]
    out = []
    for r in range(len(base) + 1):
        for combo in itertools.combinations(base, r):
            if r == 0:
                out.append(Term.intercept())
            elif r == 1:
                out.append(combo[0])
            else:
                out.append(Term.product(*combo))
    return ModelSpec(cov, tuple(out))


def empirical_plugin(ds, a: float) -> float:
    """Nonparametric g-formula from cell frequencies, written as a literal double sum."""
    l0, a0, l1, a1, y = ds.l_at(0), ds.a[:, 0], ds.l_at(1), ds.a[:, 1], ds.y
    total = 0.0
    for v0 in (0, 1):
        p_l0 = np.mean(l0 == v0)
        at_l0 = (l0 == v0) & (a0 == a)
        p_l1 = np.mean(l1[at_l0] == 1)
        for v1 in (0, 1):
            cell = at_l0 & (l1 == v1) & (a1 == a)
            ey = y[cell].mean()
            total += ey * (p_l1 if v1 else 1 - p_l1) * p_l0
    return total
