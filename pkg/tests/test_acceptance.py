"""Exit criteria, each at its stated tolerance.

Every test records one ``PASS``/``FAIL`` line, printed in the terminal summary.
The desk-scale simulation cells (criteria 5-7) take roughly 10-15 minutes on
one core; criterion 8 needs ``--scale paper`` (many hours) or
``--reference-summary PATH`` pointing at the summary.csv of such a run.
"""

import functools
import itertools
import json
import math
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from gnull.cli import main as cli_main
from gnull.datagen import DgpConfig, generate_dataset
from gnull.features import builtin_spec
from gnull.gformula import (Intervention, enumerate_counterfactual_mean, estimate_effect,
                            fit_nuisance, simulate_outcomes)
from gnull.glm import expit, fit_linear, fit_logistic
from gnull.paradox import (PgfParams, cancellation_theta3, corner_values, evaluate_h,
                           msm_closed_form, msm_from_h, pgf_sum)
from gnull.study import (STANDARD_K, TARGETS, ScenarioConfig, default_workers, emit_report,
                         read_summary_csv, run_cell, summarize)
from oracles import empirical_plugin, saturated_k1_spec
from reference_values import REFERENCE

pytestmark = pytest.mark.acceptance

MASTER_SEED = 20261017
P_L0 = math.log((1 + math.e) / 2)


def record(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
    assert ok, detail


# --- 1. paradox analytics ---------------------------------------------------

def test_criterion_1_paradox_analytics():
    rng = np.random.default_rng(1)
    worst_h = worst_msm = worst_psi3 = worst_cancel = 0.0
    for _ in range(10_000):
        theta = tuple(rng.uniform(-10, 10, 4))
        beta = tuple(rng.uniform(-5, 5, 2))
        p = PgfParams(theta, beta)
        for a0, a1 in itertools.product((0, 1), repeat=2):
            worst_h = max(worst_h, abs(evaluate_h(p, a0, a1) - pgf_sum(p, a0, a1)))
        closed = msm_closed_form(p).psi
        oracle = msm_from_h(corner_values(p)).psi
        worst_msm = max(worst_msm, max(abs(x - y) for x, y in zip(closed, oracle)))
        worst_psi3 = max(worst_psi3, abs(closed[3]))
        t3 = cancellation_theta3(theta[1], *beta)
        psi2 = msm_closed_form(PgfParams((theta[0], theta[1], theta[2], t3), beta)).psi[2]
        worst_cancel = max(worst_cancel, abs(psi2))
    ok = worst_h < 1e-12 and worst_msm < 1e-12 and worst_psi3 == 0.0 and worst_cancel <= 1e-14
    record(1, ok, f"max|h-sum|={worst_h:.2e}, max|closed-oracle|={worst_msm:.2e}, "
                  f"max|psi3|={worst_psi3:.1e}, max|psi2 after cancellation|={worst_cancel:.1e}")


# --- 2. GLM correctness -----------------------------------------------------

def test_criterion_2_glm():
    x = np.r_[np.zeros(100), np.ones(100)]
    y = np.r_[np.ones(30), np.zeros(70), np.ones(60), np.zeros(40)]
    fit = fit_logistic(np.column_stack([np.ones(200), x]), y)
    closed = np.array([math.log(30 / 70), math.log((60 / 40) / (30 / 70))])
    err_2x2 = float(np.max(np.abs(fit.coefficients - closed)))

    X3 = np.column_stack([np.ones(3), [0, 1, 2]])
    lin = fit_linear(X3, [0, 1, 1]).coefficients
    err_lin = float(np.max(np.abs(lin - [1 / 6, 1 / 2])))

    rng = np.random.default_rng(2)
    n = 100_000
    X = np.column_stack([np.ones(n), rng.normal(size=n), rng.uniform(size=n)])
    truth = np.array([-0.5, 0.8, 1.5])
    yy = (rng.random(n) < expit(X @ truth)).astype(float)
    big = fit_logistic(X, yy)
    z = float(np.max(np.abs(big.coefficients - truth) / big.standard_errors))
    ok = err_2x2 < 1e-8 and err_lin < 1e-10 and z < 4
    record(2, ok, f"2x2 err={err_2x2:.1e}, 3-point OLS err={err_lin:.1e}, "
                  f"IRLS max|z| at n=1e5={z:.2f}")


# --- 3. estimator oracle equivalence ----------------------------------------

def test_criterion_3_oracle_equivalence():
    ds = generate_dataset(DgpConfig.for_kind("binary", K=1, n=20_000, master_seed=MASTER_SEED))
    a0, a1 = Intervention.static(0, 1), Intervention.static(1, 1)
    spec = saturated_k1_spec()
    res = estimate_effect(ds, spec, [a0, a1], mode="enumerate")
    err = max(abs(res.means[iv.label] - empirical_plugin(ds, iv.dose[0])) for iv in (a0, a1))
    fit = fit_nuisance(ds, spec)
    zs = []
    for i, iv in enumerate((a0, a1)):
        exact = enumerate_counterfactual_mean(fit, iv)
        sims = simulate_outcomes(fit, iv, np.random.default_rng(MASTER_SEED + i).random((1_000_000, 1)))
        zs.append(abs(sims.mean() - exact) / (sims.std() / math.sqrt(sims.size)))
    ok = err < 1e-10 and max(zs) < 3
    record(3, ok, f"enumerate vs empirical plug-in max err={err:.1e}; "
                  f"MC(1e6) vs enumerate |z|={max(zs):.2f}")


# --- 4. DGP fidelity --------------------------------------------------------

def test_criterion_4_dgp_fidelity():
    ds = generate_dataset(DgpConfig.for_kind("binary", K=1, n=1_000_000, master_seed=MASTER_SEED))
    l0 = ds.l_at(0)
    z_l0 = abs(l0.mean() - P_L0) / math.sqrt(P_L0 * (1 - P_L0) / ds.n)
    z_y = abs(ds.y.mean() - 500.0) / (ds.y.std() / math.sqrt(ds.n))
    record(4, z_l0 < 4 and z_y < 4,
           f"P(L0=1)={l0.mean():.5f} vs {P_L0:.5f} (|z|={z_l0:.2f}); "
           f"E[Y]={ds.y.mean():.3f} vs 500 (|z|={z_y:.2f})")


# --- desk-scale simulation cells (criteria 5-7) -----------------------------

@functools.lru_cache(maxsize=None)
def desk_rows(kind: str, K: int, level: str):
    sc = ScenarioConfig.at_scale(kind, K, "desk", master_seed=MASTER_SEED, flexibilities=(level,))
    cell = run_cell(sc, level, workers=default_workers())
    return {r.target: r for r in summarize(cell)}


def test_criterion_5_benchmark_unbiased():
    parts, ok = [], True
    for kind in ("binary", "continuous"):
        for K in (1, 5):
            r = desk_rows(kind, K, "benchmark")["difference"]
            bound = 3 * r.se / math.sqrt(r.n_replicates_used)
            good = abs(r.bias) < bound and 0.85 <= r.coverage <= 1.0
            ok &= good
            parts.append(f"{kind} K={K} bias={r.bias:.2f} (<{bound:.2f}) cov={r.coverage:.2f}")
    record(5, ok, "; ".join(parts))


def test_criterion_6_misspecification_bias():
    b = desk_rows("binary", 5, "least")["difference"]
    c = desk_rows("continuous", 10, "least")["difference"]
    checks = {
        "binary K=5 bias in [10,26]": 10 <= b.bias <= 26,
        "binary K=5 coverage < 0.2": b.coverage < 0.2,
        "continuous K=10 bias in [35,65]": 35 <= c.bias <= 65,
        "continuous K=10 coverage < 0.1": c.coverage < 0.1,
    }
    failed = [k for k, v in checks.items() if not v]
    record(6, not failed,
           f"binary K=5 least bias={b.bias:.2f} se={b.se:.2f} cov={b.coverage:.2f}; "
           f"continuous K=10 least bias={c.bias:.2f} se={c.se:.2f} cov={c.coverage:.2f}"
           + (f"; failed: {', '.join(failed)}" if failed else ""))


def test_criterion_7_flexibility_ordering():
    parts, ok = [], True
    for kind in ("continuous", "binary"):
        for K in (5, 10):
            least = desk_rows(kind, K, "least")["difference"].bias
            most = desk_rows(kind, K, "most")["difference"].bias
            ok &= abs(least) > abs(most)
            parts.append(f"{kind} K={K} |{least:.2f}| > |{most:.2f}|")
    record(7, ok, "; ".join(parts))


# --- 8. full-scale reproduction ---------------------------------------------

def _within(row, ref) -> list[str]:
    bias, se, cov = ref
    problems = []
    bias_tol = 2.0 if abs(bias) < 5 else 0.3 * abs(bias)
    if abs(row.bias - bias) > bias_tol:
        problems.append(f"bias {row.bias:.2f} vs {bias}")
    if abs(row.se - se) > 0.3 * se:
        problems.append(f"se {row.se:.2f} vs {se}")
    if abs(row.coverage - cov) > 0.10:
        problems.append(f"coverage {row.coverage:.2f} vs {cov}")
    return problems


def test_criterion_8_full_scale_reproduction(request, tmp_path):
    summary = request.config.getoption("--reference-summary")
    if summary is None and request.config.getoption("--scale") != "paper":
        ACCEPTANCE_LINES.append("[SKIP] criterion 8: needs --scale paper or --reference-summary")
        pytest.skip("full-scale reproduction runs only with --scale paper")
    if summary is None:
        cells = []
        for kind in ("continuous", "binary"):
            for K in STANDARD_K:
                sc = ScenarioConfig.at_scale(kind, K, "paper", master_seed=MASTER_SEED)
                cells += [run_cell(sc, lv, workers=default_workers()) for lv in sc.flexibilities]
        emit_report(cells, tmp_path)
        summary = tmp_path / "summary.csv"
    rows = {(r.treatment_kind, r.flexibility, r.K, r.target): r for r in read_summary_csv(summary)}
    misses = []
    for key, ref in REFERENCE.items():
        if key not in rows:
            misses.append(f"{key}: missing")
            continue
        problems = _within(rows[key], ref)
        if problems:
            misses.append(f"{'/'.join(map(str, key))}: {', '.join(problems)}")
    n_diff = sum(k[3] == "difference" for k in REFERENCE)
    record(8, not misses, f"{len(REFERENCE) - len(misses)}/{len(REFERENCE)} rows "
                          f"({n_diff} difference, {len(REFERENCE) - n_diff} mean) within tolerance"
                          + (f"; first misses: {misses[:3]}" if misses else ""))


# --- 9. determinism across worker counts ------------------------------------

def test_criterion_9_thread_determinism(tmp_path, capsys):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"n": 300, "n_replicates": 3, "bootstrap_B": 5,
                               "master_seed": MASTER_SEED}))
    outs = []
    for threads in (1, 2, 3):
        out = tmp_path / f"out{threads}"
        code = cli_main(["simulate", "--config", str(cfg), "--out", str(out), "--threads", str(threads)])
        capsys.readouterr()
        assert code == 0
        outs.append((out / "summary.csv").read_bytes())
    n_rows = len(outs[0].splitlines()) - 1
    record(9, outs[0] == outs[1] == outs[2],
           f"summary.csv ({n_rows} rows) byte-identical for --threads 1, 2, 3")


