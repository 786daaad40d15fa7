"""End-to-end acceptance checks; each test records one PASS/FAIL line."""

from __future__ import annotations

import time

import numpy as np
import pytest
from scipy import stats

from wexclusion.config import PRESETS
from wexclusion.harness import (ExperimentPlan, _csv_text, gap_monotonicity_violations,
                                membrane_diagnostics, run_convergence, simulate_replicas,
                                write_outputs)
from wexclusion.lattice import (apply_generator, build_operator, dirichlet_form, green_error,
                                poincare_check, solve_resolvent, spectrum)
from wexclusion.particle import ProcessParams, bernoulli_measure, brute_force_generator
from wexclusion.pde import (PhiSpec, SolverConfig, contraction_check, evolve, lyapunov, mass,
                            weak_residual)
from wexclusion.wfun import WSpec, sample_jump_spec

IDENTITY = WSpec.identity()
ONE_ATOM = WSpec(1.0, ((0.5, 1.0),))


def test_exact_stationarity(acceptance_log):
    start = time.perf_counter()
    worst = 0.0
    for w in (IDENTITY, ONE_ATOM):
        for a in (0.0, 0.3, -0.4):
            for n in range(2, 7):
                q = brute_force_generator(ProcessParams(a, w, n)).toarray()
                for alpha in (0.2, 0.5, 0.9):
                    nu = bernoulli_measure(n, alpha)
                    worst = max(worst, np.abs(nu @ q).max())
                    flux = nu[:, None] * q
                    np.fill_diagonal(flux, 0.0)
                    worst = max(worst, np.abs(flux - flux.T).max())
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 1.0
    acceptance_log("exact stationarity and reversibility (N=2..6)",
                   ok, f"max defect {worst:.2e}, {elapsed:.2f} s")
    assert ok


def _single_particle_counts(w: WSpec, n: int, t: float, replicas: int, workers: int) -> np.ndarray:
    params = ProcessParams(0.0, w, n, seed=20240601)
    start_site = {"profile": "step", "low": 0.0, "high": 1.0, "start": 0.0, "stop": 1.0 / n}
    snaps = simulate_replicas(params, start_site, [t], replicas, workers)[:, 0, :]
    assert np.all(snaps.sum(axis=1) == 1)
    return np.bincount(snaps.argmax(axis=1), minlength=n)


def test_single_particle_law(acceptance_log):
    start = time.perf_counter()
    n, t, reps = 32, 0.05, 10_000
    pvals = []
    for w in (IDENTITY, ONE_ATOM):
        counts = _single_particle_counts(w, n, t, reps, workers=1)
        law = build_operator(w, n).semigroup(t)[0]
        expected = reps * law
        # pool sparse cells so every expected count is at least 5
        order = np.argsort(expected)
        obs_b, exp_b, acc_o, acc_e = [], [], 0.0, 0.0
        for i in order:
            acc_o += counts[i]
            acc_e += expected[i]
            if acc_e >= 5:
                obs_b.append(acc_o)
                exp_b.append(acc_e)
                acc_o = acc_e = 0.0
        obs_b[-1] += acc_o
        exp_b[-1] += acc_e
        pvals.append(stats.chisquare(obs_b, exp_b).pvalue)
    elapsed = time.perf_counter() - start
    ok = min(pvals) > 1e-3 and elapsed < 30
    acceptance_log("single-particle law vs exp(tL)", ok,
                   f"chi-square p = {pvals[0]:.3g} (identity), {pvals[1]:.3g} (atom), {elapsed:.1f} s")
    assert ok


def test_spectral_closed_form(acceptance_log):
    start = time.perf_counter()
    n = 512
    ev = spectrum(build_operator(IDENTITY, n)).eigenvalues
    exact = np.sort(4 * n * n * np.sin(np.pi * np.arange(n) / n) ** 2)
    rel = np.max(np.abs(ev[1:] - exact[1:]) / exact[1:])
    # nonzero values pair up; k = n/2 is the single exception for even n
    pairs = ev[1:-1].reshape(-1, 2)
    degenerate = np.max(np.abs(pairs[:, 0] - pairs[:, 1]) / pairs[:, 1])
    gap_err = abs(ev[1] - 4 * np.pi ** 2) / (4 * np.pi ** 2)
    elapsed = time.perf_counter() - start
    ok = rel <= 1e-6 and abs(ev[0]) <= 1e-8 * ev[-1] and degenerate <= 1e-6 and gap_err < 0.01 \
        and elapsed < 10
    acceptance_log("spectrum of the cyclic Laplacian", ok,
                   f"max rel err {rel:.2e}, lambda_0 {ev[0]:.1e}, pair split {degenerate:.1e}, "
                   f"lambda_1/4pi^2 - 1 = {gap_err:.2e}, {elapsed:.1f} s")
    assert ok


def test_green_function(acceptance_log):
    start = time.perf_counter()
    specs = [IDENTITY, ONE_ATOM, WSpec(0.5, ((0.25, 0.3), (0.625, 1.2)))]
    details, ok = [], True
    for w in specs:
        errs = []
        for n in (128, 512):
            e, _ = green_error(build_operator(w, n), n // 4)
            errs.append(e)
            ok &= e <= 10.0 / n
        ratio = errs[0] / errs[1]
        ok &= 3.2 <= ratio <= 4.8
        details.append(f"{errs[0]:.2e}/{errs[1]:.2e} ratio {ratio:.2f}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 5
    acceptance_log("Green's function vs closed form", ok, "; ".join(details) + f", {elapsed:.2f} s")
    assert ok


def test_poincare_sweep(acceptance_log):
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    worst, count = 0.0, 0
    for k in range(5):
        w = sample_jump_spec(0.5, int(rng.integers(1, 6)), 1e-3, seed=k, drift=float(rng.uniform(0.1, 2)))
        op = build_operator(w, 64)
        for h in rng.standard_normal((1000, 64)) + rng.normal(0, 2, (1000, 1)):
            lhs, rhs = poincare_check(op, h)
            worst = max(worst, lhs / rhs)
            count += lhs <= rhs
    elapsed = time.perf_counter() - start
    ok = count == 5000 and elapsed < 5
    acceptance_log("Poincare inequality with C0 = W(1) - W(0)", ok,
                   f"{count}/5000 hold, max lhs/rhs {worst:.3f}, {elapsed:.2f} s")
    assert ok


def test_resolvent_bounds(acceptance_log):
    start = time.perf_counter()
    rng = np.random.default_rng(6)
    op = build_operator(WSpec(0.7, ((0.3, 0.5), (0.8, 2.0))), 128)
    worst_res, holds = 0.0, 0
    # below lambda ~ 0.05 the double-precision floor eps * |L| * |G h| passes 1e-10 |h| at N=128
    for _ in range(100):
        lam = float(np.exp(rng.uniform(np.log(0.1), np.log(100.0))))
        h = rng.standard_normal(128) + rng.normal()
        g = solve_resolvent(op, lam, h)
        worst_res = max(worst_res, np.abs(lam * g - apply_generator(op, g) - h).max() / np.abs(h).max())
        l2 = np.mean(h * h)
        holds += (np.mean(g * g) <= l2 / lam ** 2) and (dirichlet_form(op, g) <= l2 / lam)
    elapsed = time.perf_counter() - start
    ok = holds == 100 and worst_res <= 1e-10 and elapsed < 5
    acceptance_log("resolvent bounds and residual", ok,
                   f"{holds}/100 pairs (lambda in [0.1, 100]) satisfy both bounds, max residual {worst_res:.2e}, {elapsed:.2f} s")
    assert ok


def test_heat_equation_oracle(acceptance_log):
    start = time.perf_counter()
    n = 256
    op = build_operator(IDENTITY, n)
    phi = PhiSpec.quadratic(0.0)
    u = np.arange(n) / n
    gamma = 0.5 + 0.25 * np.cos(2 * np.pi * u)
    times = np.linspace(0.0, 0.01, 101)
    traj = evolve(op, phi, gamma, times, SolverConfig(scheme="implicit", dt=1e-5))
    exact = 0.5 + 0.25 * np.exp(-4 * np.pi ** 2 * 0.01) * np.cos(2 * np.pi * u)
    err = np.abs(traj.values[-1] - exact).max()
    drift = max(abs(mass(v) - mass(gamma)) for v in traj.values)
    lyap = np.array([lyapunov(phi, v) for v in traj.values])
    mono = bool(np.all(np.diff(lyap) <= 1e-10))
    elapsed = time.perf_counter() - start
    ok = err < 1e-3 and drift < 1e-8 and mono and elapsed < 60
    acceptance_log("heat equation vs Fourier solution", ok,
                   f"max error {err:.2e}, mass drift {drift:.1e}, Lyapunov nonincreasing={mono}, "
                   f"{elapsed:.1f} s")
    assert ok


def test_contraction(acceptance_log):
    start = time.perf_counter()
    rng = np.random.default_rng(8)
    n, worst, holds = 64, 0.0, 0
    for i in range(50):
        k = 1 if i % 2 == 0 else 3
        w = sample_jump_spec(0.5, k, 1e-3, seed=100 + i, drift=float(rng.uniform(0.2, 2.0)))
        a = (-0.4, 0.0, 0.8)[i % 3]
        lam = (0.5, 1.0, 2.0)[(i // 3) % 3]
        g1, g2 = rng.uniform(0.0, 1.0, (2, n))
        lhs, bound = contraction_check(build_operator(w, n), PhiSpec.quadratic(a), g1, g2, lam, 0.1,
                                       SolverConfig(dt=1e-4))
        holds += lhs <= bound * (1 + 1e-6)
        worst = max(worst, lhs / bound)
    elapsed = time.perf_counter() - start
    ok = holds == 50 and elapsed < 300
    acceptance_log("resolvent-norm contraction", ok,
                   f"{holds}/50 instances, max lhs/bound {worst:.4f}, {elapsed:.1f} s")
    assert ok


def test_weak_formulation_residual(acceptance_log):
    start = time.perf_counter()
    n, t_end = 128, 0.05
    op = build_operator(WSpec(1.0, ((0.5 + 1e-9, 1.0),)), n)
    phi = PhiSpec.quadratic(0.3)
    u = np.arange(n) / n
    gamma = 0.5 + 0.3 * np.cos(2 * np.pi * u)
    tests = [np.cos(2 * np.pi * k * u) for k in range(9)] + [np.sin(2 * np.pi * k * u) for k in range(1, 9)]
    lams = (0.5, 1.0, 2.0, 8.0)
    res = {}
    for dt in (1e-4, 5e-5):
        times = np.linspace(0.0, t_end, int(round(t_end / dt)) + 1)
        traj = evolve(op, phi, gamma, times, SolverConfig(scheme="trbdf2", dt=dt))
        res[dt] = np.array([[weak_residual(op, phi, times, traj.values, h, lam) for lam in lams]
                            for h in tests])
    coarse, fine = res[1e-4], res[5e-5]
    resolved = coarse > 1e-12  # below this the residual is roundoff
    ratios = coarse[resolved] / fine[resolved]
    be_times = np.linspace(0.0, t_end, 501)
    be = evolve(op, phi, gamma, be_times, SolverConfig(scheme="implicit", dt=1e-4))
    be_res = max(weak_residual(op, phi, be_times, be.values, h, 1.0) for h in tests)
    elapsed = time.perf_counter() - start
    ok = coarse.max() < 1e-6 and ratios.size > 0 and np.all((ratios > 3.0) & (ratios < 5.0)) \
        and elapsed < 120
    acceptance_log("weak formulation residual (TR-BDF2)", ok,
                   f"max residual {coarse.max():.2e} at dt=1e-4, halving ratios "
                   f"{ratios.min():.2f}..{ratios.max():.2f} over {ratios.size} cells; "
                   f"backward Euler gives {be_res:.2e}; {elapsed:.1f} s")
    assert ok


@pytest.fixture(scope="module")
def headline():
    plan = ExperimentPlan.from_config(PRESETS["headline"])
    start = time.perf_counter()
    result = run_convergence(plan, workers=1)
    return result, time.perf_counter() - start


def test_headline_convergence(headline, acceptance_log):
    result, elapsed = headline
    bad = gap_monotonicity_violations(result.rows, slack=2.0)
    nmax = max(result.plan.grid_sizes)
    top = [r for r in result.rows if r.N == nmax]
    worst = max(r.abs_gap for r in top)
    mode0 = [r for r in result.rows if r.observable == "cos0"]
    mode0_z = max(r.abs_gap / r.mc_stderr for r in mode0)
    ok = not bad and worst < 0.01 and mode0_z <= 4.0 and elapsed < 1800
    acceptance_log("hydrodynamic limit: gap nonincreasing in N", ok,
                   f"{len(bad)} monotonicity violations, largest N={nmax} gap {worst:.2e}, "
                   f"mode-0 max |z| {mode0_z:.2f}, {elapsed:.0f} s")
    for line in bad:
        print("   ", line)
    assert ok


def test_membrane_jump(headline, acceptance_log):
    result, _ = headline
    (d,) = membrane_diagnostics(result, 512, 0.02, box_fraction=16 / 512)
    sharp = abs(d["pde_jump"]) > 5 * d["pde_max_other"]
    same_sign = np.sign(d["mc_jump"]) == np.sign(d["pde_box_jump"])
    close = abs(d["mc_jump"] - d["pde_box_jump"]) <= 4 * d["mc_jump_stderr"]
    ok = bool(sharp and same_sign and close)
    acceptance_log("membrane jump across the atom", ok,
                   f"PDE jump {d['pde_jump']:.3e} = {abs(d['pde_jump']) / d['pde_max_other']:.2f} x "
                   f"largest atom-free jump {d['pde_max_other']:.3e} (need > 5); "
                   f"MC box jump {d['mc_jump']:.3e} +- {d['mc_jump_stderr']:.2e} vs PDE box jump "
                   f"{d['pde_box_jump']:.3e}")
    assert ok


def test_determinism_across_workers(headline, acceptance_log, tmp_path):
    result, _ = headline
    plan = result.plan
    first = {p.name: p.read_bytes() for p in write_outputs(result, tmp_path / "w1")}
    again = run_convergence(plan, workers=2)
    second = {p.name: p.read_bytes() for p in write_outputs(again, tmp_path / "w2")}
    tables = []
    for workers in (1, 2):
        counts = _single_particle_counts(ONE_ATOM, 32, 0.05, 10_000, workers)
        tables.append(_csv_text(["x", "count"], enumerate(counts.tolist())).encode())
    ok = first == second and tables[0] == tables[1]
    acceptance_log("byte-identical tables for 1 and 2 workers", ok,
                   f"{len(first)} convergence files identical={first == second}, "
                   f"single-particle histogram identical={tables[0] == tables[1]}")
    assert ok
