import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gnull.datagen import DgpConfig, Trajectory, generate_dataset
from gnull.errors import ConfigError, DesignError
from gnull.features import (History, Level, ModelSpec, Term, TermKind, builtin_spec,
                            covariate_design, covariate_row, evaluate_term, outcome_design,
                            outcome_row)


def make_traj(K, l=None, a=None, u=0.5, y=500.0):
    l = l if l is not None else {t: 1.0 for t in range(-9, K + 1)}
    a = a if a is not None else {t: 0.0 for t in range(K + 1)}
    return Trajectory(0, u, l, a, y)


def names(terms):
    return [t.name for t in terms]


def test_least_k1_outcome_drops_empty_treatment_sum():
    spec = builtin_spec("least", 1)
    assert spec.outcome_terms == (Term.intercept(), Term.a_lag(0), Term.a_lag(1), Term.l_sum(-9, 0))


def test_most_k5_has_ten_covariate_lags():
    spec = builtin_spec("most", 5)
    lags = [t for t in spec.covariate_terms if t.kind is TermKind.COVARIATE_LAG]
    assert [t.lag for t in lags] == list(range(1, 11))
    assert spec.covariate_terms[:2] == (Term.intercept(), Term.a_lag(1))


def test_benchmark_k5_outcome_terms():
    spec = builtin_spec("benchmark", 5)
    assert spec.outcome_terms == (Term.intercept(), Term.u(), Term.a_lag(0), Term.a_lag(1),
                                  Term.a_sum(0, -2))
    assert not any(t.uses_l for t in spec.outcome_terms)
    assert spec.covariate_terms == (Term.intercept(), Term.a_lag(1), Term.u(), Term.a_lag_u(1))


def test_least_cumavg_all_ones():
    row = covariate_row(make_traj(1), 1, builtin_spec("least", 1))
    assert row[-1] == 1.0


def test_moderate_k1_terms():
    l = {t: 0.0 for t in range(-9, 2)}
    l[0] = 1.0
    for t in (-9, -7, -5, -3):
        l[t] = 1.0
    row = covariate_row(make_traj(1, l=l), 1, builtin_spec("moderate", 1))
    assert list(row[2:]) == [1.0, 0.0, 4 / 8]


def test_least_k3_cumavg_divisor():
    l = {t: 0.0 for t in range(-9, 4)}
    for t in (-9, -6, -2, 0, 1, 2):
        l[t] = 1.0
    l[3] = 1.0  # L_3 is not part of the k=3 history
    row = covariate_row(make_traj(3, l=l), 3, builtin_spec("least", 3))
    assert row[-1] == 6 / 12


def test_least_k1_outcome_row():
    row = outcome_row(make_traj(1, a={0: 50.0, 1: 150.0}), 1, builtin_spec("least", 1))
    assert list(row) == [1, 150, 50, 11]


def test_most_k10_outcome_has_eleven_lags():
    spec = builtin_spec("most", 10)
    lags = [t.lag for t in spec.outcome_terms if t.kind is TermKind.COVARIATE_LAG]
    assert lags == list(range(0, 11))
    ds = generate_dataset(DgpConfig.for_kind("binary", K=10, n=3, master_seed=1))
    row = outcome_row(ds[1], 10, spec)
    assert list(row[4:]) == [ds.l[1, 9 + 10 - i] for i in range(11)]


def test_benchmark_k1_outcome_row():
    row = outcome_row(make_traj(1, a={0: 1.0, 1: 1.0}, u=0.4), 1, builtin_spec("benchmark", 1))
    assert list(row) == [1, 0.4, 1, 1]


def test_moderate_outcome_tail_is_a_sum():
    spec = builtin_spec("moderate", 5)
    assert spec.outcome_terms[-1] == Term.l_sum(-9, -3)
    assert spec.covariate_terms[-1] == Term.l_avg(-9, -3)
    row = outcome_row(make_traj(5), 5, spec)
    assert row[-1] == 12  # l_{-9..2}, all ones


def test_missing_history_is_an_error():
    short = History(l=np.ones((1, 5)), a=np.zeros((1, 2)), n_prebaseline=3)
    with pytest.raises(DesignError):
        covariate_design(short, 1, builtin_spec("most", 1))
    with pytest.raises(DesignError):
        outcome_design(History(l=np.ones((1, 11)), a=np.zeros((1, 2))), 1, builtin_spec("benchmark", 1))
    with pytest.raises(DesignError):
        covariate_design(History(l=np.ones((1, 11)), a=np.zeros((1, 2))), 0, builtin_spec("least", 1))


def test_spec_validation():
    with pytest.raises(ConfigError):
        ModelSpec((Term.intercept(), Term.l_lag(0)), (Term.intercept(),))
    with pytest.raises(ConfigError):
        ModelSpec((Term.intercept(),), (Term.intercept(), Term.u()))
    with pytest.raises(ConfigError):
        Term.a_lag(-1)
    with pytest.raises(ConfigError):
        builtin_spec("least", 0)
    with pytest.raises(ConfigError):
        Term.from_dict({"kind": "covariate_lag", "lag": 1, "bogus": 2})


@pytest.mark.parametrize("level", ["least", "moderate", "most", "benchmark"])
@pytest.mark.parametrize("K", [1, 5, 10])
def test_spec_json_round_trip(level, K):
    spec = builtin_spec(level, K)
    assert ModelSpec.from_dict(spec.to_dict()) == spec


@pytest.mark.parametrize("level", ["least", "moderate", "most", "benchmark"])
@pytest.mark.parametrize("K", [1, 5, 10])
def test_rows_are_finite_with_term_count(level, K):
    ds = generate_dataset(DgpConfig.for_kind("continuous", K=K, n=20, master_seed=K))
    spec = builtin_spec(level, K)
    for k in range(1, K + 1):
        X = covariate_design(ds, k, spec)
        assert X.shape == (20, len(spec.covariate_terms)) and np.all(np.isfinite(X))
    Y = outcome_design(ds, K, spec)
    assert Y.shape == (20, len(spec.outcome_terms)) and np.all(np.isfinite(Y))
    assert spec.uses_u == (level == "benchmark")
    if level == "benchmark":
        assert not any(t.uses_l for t in spec.outcome_terms)


@settings(max_examples=50, deadline=None)
@given(K=st.integers(1, 10), data=st.data())
def test_cumavg_divisor_matches_range(K, data):
    k = data.draw(st.integers(1, K))
    start = data.draw(st.integers(-9, 0))
    off = data.draw(st.integers(-4, -1))
    term = Term.l_avg(start, off)
    bits = data.draw(st.lists(st.sampled_from([0.0, 1.0]), min_size=K + 10, max_size=K + 10))
    hist = History(l=np.array([bits]), a=np.zeros((1, K + 1)))
    got = evaluate_term(term, hist, k)[0]
    idx = [t + 9 for t in range(start, k + off + 1)]
    expected = np.mean([bits[i] for i in idx]) if idx else 0.0
    assert got == pytest.approx(expected, abs=1e-15)
    assert term.range_count(k) == len(idx)


def test_levels_enum():
    assert [lv.value for lv in Level] == ["least", "moderate", "most", "benchmark", "custom"]
    assert names(builtin_spec("least", 5).covariate_terms) == ["1", "a[t-1]", "avg_l[-9..t-1]"]
