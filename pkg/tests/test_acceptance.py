"""Acceptance criteria 1-12; each test prints one PASS/FAIL line per criterion."""
import io
import json
import time

import numpy as np
import pytest
from scipy import stats

from mvldp.cli import run
from mvldp.events import parse_event
from mvldp.ldp_harness import (LdpExperiment, check_holder_event_grid, check_sup_grid, estimate_event_probability,
                               exponential_equivalence_gap, holder_tube_check, sandwich_checks)
from mvldp.measure_ops import EmpiricalMeasure, wasserstein2, wasserstein2_assignment, wasserstein2_to_dirac
from mvldp.model import brownian, get_model
from mvldp.mvsde_solver import simulate_particles, solve_picard
from mvldp.path_space import Path, TimeGrid, holder_norm, restricted_norms, sup_norm
from mvldp.skeleton_rate import RateObjective, rate_of_event, rate_of_path, rate_quadratic_form, solve_skeleton
from mvldp.strassen_lil import strassen_experiment

SEED = 20240611
MFOU = get_model("mfou").coefficients


def test_criterion_01_norm_chain(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    ok = True
    for i in range(1000):
        n = int(rng.integers(2, 200))
        d = int(rng.integers(1, 4))
        v = np.cumsum(rng.normal(size=(n + 1, d)) * rng.exponential(), axis=0)
        v -= v[0]
        f = Path(1.0, v)
        alpha = float(rng.uniform(0.01, 0.99))
        tk = float(rng.integers(0, n + 1)) / n
        s_t, h_t = restricted_norms(f, tk, alpha)
        full = holder_norm(f, alpha)
        ok &= s_t <= h_t <= full and sup_norm(f) <= full
    dt = time.perf_counter() - t0
    assert verdict(1, ok and dt < 10, f"1000 paths, chain holds={ok}, runtime {dt:.2f}s < 10s")


def test_criterion_02_wasserstein_oracle(verdict):
    rng = np.random.default_rng(SEED)
    worst_dirac = 0.0
    for _ in range(1000):
        n, d = int(rng.integers(1, 65)), int(rng.integers(1, 4))
        mu = EmpiricalMeasure.uniform(rng.normal(size=(n, d)))
        p = rng.normal(size=d)
        closed = np.sqrt(np.mean(np.sum(mu.atoms ** 2, axis=1)) - 2 * mu.mean() @ p + p @ p)
        worst_dirac = max(worst_dirac, abs(wasserstein2_to_dirac(mu, p) - closed),
                          abs(wasserstein2(mu, EmpiricalMeasure.dirac(p)) - closed))
    worst_pair = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 65))
        a = EmpiricalMeasure.uniform(rng.normal(size=(n, 1)))
        b = EmpiricalMeasure.uniform(rng.normal(size=(n, 1)) * 2 + 1)
        worst_pair = max(worst_pair, abs(wasserstein2(a, b) - wasserstein2_assignment(a, b)))
    ok = worst_dirac <= 1e-12 and worst_pair <= 1e-10
    assert verdict(2, ok, f"dirac closed form err {worst_dirac:.2e} <= 1e-12; sorted vs assignment "
                          f"err {worst_pair:.2e} <= 1e-10")


def test_criterion_03_mean_field_ou_closed_form(verdict):
    t0 = time.perf_counter()
    N, n = 8192, 512
    parts = []
    ok = True
    for eps in (1.0, 0.25):
        ps = simulate_particles(MFOU, 0.0, N, TimeGrid(1.0, n), eps, seed=SEED)
        x = ps.terminal()[:, 0]
        var_ref = eps / 2 * (1 - np.exp(-2))
        se_mean = np.sqrt(var_ref / N)
        se_var = var_ref * np.sqrt(2 / (N - 1))
        sol = solve_picard(MFOU, 0.0, 4096, TimeGrid(1.0, n), eps, tol=1e-3, seed=SEED + 1, keep_history=False)
        w2 = wasserstein2(EmpiricalMeasure.uniform(sol.final_paths[:, -1]), EmpiricalMeasure.uniform(x[:, None]))
        m_ok = abs(x.mean()) <= 3 * se_mean
        v_ok = abs(x.var(ddof=1) - var_ref) <= 3 * se_var
        ok &= m_ok and v_ok and sol.converged and w2 <= 0.05
        parts.append(f"eps={eps}: mean {x.mean():+.4f} (3SE {3 * se_mean:.4f}), var {x.var(ddof=1):.4f} vs "
                     f"{var_ref:.4f} (3SE {3 * se_var:.4f}), picard W2 {w2:.4f} <= 0.05")
    dt = time.perf_counter() - t0
    ok &= dt < 120
    assert verdict(3, ok, "; ".join(parts) + f"; runtime {dt:.1f}s < 120s")


def test_criterion_04_picard_contraction(verdict):
    sol = solve_picard(MFOU, 0.0, 4096, TimeGrid(1.0, 256), 1.0, tol=1e-3, max_iter=20, seed=SEED)
    tr = np.array(sol.convergence_trace)
    dec = bool(np.all(np.diff(tr[1:]) < 0))
    ok = dec and sol.converged and sol.iterations <= 8
    assert verdict(4, ok, f"trace {np.array2string(tr, precision=2)}; strictly decreasing from 2: {dec}; "
                          f"tol reached at iteration {sol.iterations} <= 8")


def test_criterion_05_rate_function_oracle(verdict):
    t = np.linspace(0, 1, 65)[:, None]
    bm = brownian(1)
    path_err = max(abs(rate_of_path(bm, [0.0], Path(1.0, c * t)).value - c * c / 2) for c in (0.5, 1.0, 2.0))
    ev_err = max(abs(rate_of_event(bm, 0.0, f"terminal:v=1,c={d}", n_steps=64, seed=SEED).value / (d * d / 2) - 1)
                 for d in (0.5, 1.0))
    rng = np.random.default_rng(SEED)
    qf_err = 0.0
    from mvldp.path_space import CameronMartinPath
    for _ in range(20):
        h = CameronMartinPath(1.0, rng.normal(size=32))
        x = float(rng.normal())
        f = solve_skeleton(MFOU, [x], h, check=False).path
        qf_err = max(qf_err, abs(rate_of_path(MFOU, [x], f).value - rate_quadratic_form(MFOU, [x], f)))
    ok = path_err <= 1e-9 and ev_err <= 0.01 and qf_err <= 1e-9
    assert verdict(5, ok, f"path err {path_err:.1e} <= 1e-9; event rel err {ev_err:.2e} <= 1%; "
                          f"quadratic form err {qf_err:.1e} <= 1e-9")


@pytest.mark.slow
def test_criterion_06_uniform_ldp_sandwich(verdict):
    t0 = time.perf_counter()
    exact = LdpExperiment("brownian", "terminal:v=1,c=1", (0.02, 0.015, 0.01), 0, exact_tail=True)
    ge = estimate_event_probability(exact, reference=0.5)
    g_last = abs(ge.rate_hat[-1] / 0.5 - 1)
    g_ext = abs(ge.extrapolated / 0.5 - 1)
    entry = get_model("mfou")
    ref = rate_of_event(MFOU, 0.0, "exit:R=0.7,center=zero", seed=SEED).value
    exp = LdpExperiment("mfou", "exit:R=0.7,center=zero", (0.4, 0.2, 0.1), 100000, seed=SEED, n_steps=256)
    est = estimate_event_probability(exp, reference=ref)
    mono, final = sandwich_checks(est, entry.card.get("ldp_band", 0.2))
    dt = time.perf_counter() - t0
    ok = g_last <= 0.08 and g_ext <= 0.02 and mono and final and dt < 600
    assert verdict(6, ok, f"gaussian -eps log p at 1e-2 off by {g_last:.2%} <= 8%, extrapolation {g_ext:.2%} "
                          f"<= 2%; OU exit rates {np.round(est.rate_hat, 4).tolist()} toward {ref:.4f}: "
                          f"monotone={mono}, final within 20%={final}; runtime {dt:.0f}s < 600s")


@pytest.mark.slow
def test_criterion_07_holder_and_sup_bounds(verdict):
    t0 = time.perf_counter()
    hc = check_holder_event_grid([2.0, 3.0, 4.0], [0.5, 1.0], [0.2, 0.3, 0.4], 100000, 1024, SEED)
    sc = check_sup_grid([0.5, 1.0], [0.1, 0.05], 100000, SEED, n=1024)
    dt = time.perf_counter() - t0
    bad = [c.params for c in hc + sc if not c.passed]
    ok = not bad and dt < 300
    assert verdict(7, ok, f"{len(hc)} Hölder cells and {len(sc)} sup cells at 1e5 replicas, violations {bad}; "
                          f"runtime {dt:.0f}s < 300s")


@pytest.mark.slow
def test_criterion_08_exponential_equivalence_trend(verdict):
    gr = exponential_equivalence_gap("mfou", [0.4, 0.2, 0.1], [4, 16, 64], 100000, SEED, delta=0.25)
    ok = gr.trend_in_m and gr.trend_in_eps and gr.informative >= 6
    assert verdict(8, ok, f"hits {gr.hits.tolist()}; decreasing in m={gr.trend_in_m}, in eps at m=64="
                          f"{gr.trend_in_eps}; informative cells {gr.informative} >= 6")


@pytest.mark.slow
def test_criterion_09_holder_topology_spot_check(verdict):
    out = holder_tube_check([0.2, 0.1], 100000, SEED, alpha=0.3, rho=1.0, R=1.0)
    ok = all(r["p_hat"] <= r["bound"] for r in out["rows"])
    rows = ", ".join(f"eps={r['eps']}: p={r['p_hat']:.2e} <= {r['bound']:.2e}" for r in out["rows"])
    assert verdict(9, ok, f"delta={out['delta']:.4f}; {rows}")


@pytest.mark.slow
def test_criterion_10_strassen_benchmark(verdict):
    t0 = time.perf_counter()
    rep = strassen_experiment("brownian", U=1_000_000, c=2.0, alpha=0.25, seed=SEED, n_traj=64, n_per_unit=64)
    fine = strassen_experiment("brownian", U=1_000_000, c=2.0, alpha=0.25, seed=SEED, n_traj=64, n_per_unit=128,
                               distances=False)
    dt = time.perf_counter() - t0
    lo, hi = np.sqrt(2) - 0.25, np.sqrt(2) + 0.25
    band = lo <= rep.sample_max <= hi
    md = np.median(rep.d_alpha, axis=0)[-5:]
    mono = bool(np.all(np.diff(md) <= 0))
    halving = abs(fine.sample_max - rep.sample_max)
    ok = band and mono and halving < 0.05 and dt < 900
    assert verdict(10, ok, f"sample max {rep.sample_max:.4f} in [{lo:.2f}, {hi:.2f}]: {band}; median d last 5 "
                           f"{np.round(md, 4).tolist()} non-increasing: {mono}; halving change {halving:.4f} < 0.05; "
                           f"runtime {dt:.0f}s < 900s")


CLI_RUNS = [
    ["simulate", "--model", "mfou", "--particles", "500", "--n-steps", "64"],
    ["picard", "--particles", "300", "--n-steps", "32"],
    ["ldp-verify", "--mode", "sandwich", "--event", "exit:R=0.7,center=zero", "--eps", "0.4,0.2",
     "--replicas", "3000", "--n-steps", "32"],
    ["ldp-verify", "--mode", "holder-bound", "--replicas", "3000", "--n", "128"],
    ["ldp-verify", "--mode", "sup-bound", "--replicas", "3000", "--n", "128"],
    ["ldp-verify", "--mode", "gap", "--replicas", "600", "--n-steps", "64"],
    ["ldp-verify", "--mode", "holder-prop", "--eps", "0.2,0.1", "--replicas", "3000", "--n", "128"],
    ["strassen", "--U", "16384", "--seeds", "6", "--n-per-unit", "8", "--n-z", "8", "--dist-budget", "20"],
    ["rate", "--model", "mfou", "--event", "terminal:v=1,c=1", "--starts", "3"],
]


def _json_without_clock(argv):
    buf = io.StringIO()
    run(argv, stdout=buf)
    text = buf.getvalue()
    json.loads(text)
    return "\n".join(line for line in text.splitlines() if "wall_clock" not in line)


@pytest.mark.slow
def test_criterion_11_determinism(verdict):
    bad = []
    for argv in CLI_RUNS:
        outs = {th: _json_without_clock(argv + ["--seed", "7", "--threads", str(th)]) for th in (1, 2, 8)}
        if not outs[1] == outs[2] == outs[8]:
            bad.append(" ".join(argv[:3]))
    assert verdict(11, not bad, f"{len(CLI_RUNS)} commands at 1/2/8 threads, mismatches: {bad or 'none'}")


def test_criterion_12_gradient_check(verdict):
    rng = np.random.default_rng(SEED)
    grid = TimeGrid(1.0, 32)
    worst = 0.0
    specs = ("terminal:v=1,c=1", "exit:R=1,center=zero", "holder-out:alpha=0.3,r=1.5,center=psi")
    for spec in specs:
        obj = RateObjective(MFOU, [0.2], parse_event(spec), grid, 16, weight=3.0, tau=1e-2, hinge=1e-1)
        for _ in range(100):
            z = rng.normal(size=16)
            _, g = obj.value_and_grad(z)
            step = 1e-6
            fd = np.array([(obj.value_and_grad(z + step * e)[0] - obj.value_and_grad(z - step * e)[0]) / (2 * step)
                           for e in np.eye(16)])
            worst = max(worst, float(np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-12)))
    assert verdict(12, worst <= 1e-5, f"3 specs x 100 points, worst relative gradient error {worst:.2e} <= 1e-5")
