"""Invariant sweeps behind ``run_property_suites`` and ``wexclusion validate``.

Each suite takes ``(plan, rng)`` and returns ``(passed, detail, tolerance)``.
Sizes are kept small so the whole set runs in well under a minute.
"""

from __future__ import annotations

import numpy as np

from . import _backend
from .lattice import (apply_generator, build_operator, dirichlet_form, poincare_check,
                      solve_resolvent, spectrum)
from .particle import (Configuration, ProcessParams, RateIndex, advance, bernoulli_measure,
                       brute_force_generator, dirichlet_form_particles, sample_initial)
from .pde import PhiSpec, SolverConfig, contraction_check, evolve, lyapunov, mass
from .wfun import eval_w, increment


def wfun_invariants(plan, rng):
    w = plan.wspec
    u = rng.uniform(-3.0, 3.0, 1000)
    v = u + rng.uniform(1e-6, 1.0, 1000)
    mono = np.all(eval_w(w, v) - eval_w(w, u) >= w.drift * (v - u) * (1 - 1e-12))
    per = np.max(np.abs(eval_w(w, u + 1.0) - eval_w(w, u) - w.total))
    a, b, c = np.sort(rng.uniform(-1, 2, (3, 200)), axis=0)
    keep = (a < b) & (b < c)
    add = max(abs(increment(w, x, y) + increment(w, y, z) - increment(w, x, z))
              for x, y, z in zip(a[keep], b[keep], c[keep]))
    ok = mono and per <= 1e-12 * max(1.0, w.total) and add <= 1e-12 * max(1.0, w.total)
    return ok, f"monotone={mono} periodicity_err={per:.2e} additivity_err={add:.2e}", "1e-12"


def lattice_symmetry(plan, rng):
    worst = 0.0
    for n in (4, 16, 64):
        op = build_operator(plan.grid_wspec(), n)
        for _ in range(100):
            h, g = rng.standard_normal((2, n))
            lh, lg = apply_generator(op, h), apply_generator(op, g)
            scale = np.linalg.norm(lh) * np.linalg.norm(g) + np.linalg.norm(h) * np.linalg.norm(lg)
            worst = max(worst, abs(lh @ g - h @ lg) / scale)
    return worst <= 1e-12, f"max relative asymmetry {worst:.2e}", "1e-12 relative"


def lattice_nonpositive(plan, rng):
    op = build_operator(plan.grid_wspec(), 64)
    worst = max(float(apply_generator(op, h) @ h - 1e-10 * (h @ h))
                for h in rng.standard_normal((100, 64)))
    return worst <= 0.0, f"max <Lh,h> - 1e-10|h|^2 = {worst:.3e}", "1e-10 |h|^2"


def resolvent_identity(plan, rng):
    op = build_operator(plan.grid_wspec(), 64)
    worst = 0.0
    for _ in range(20):
        lam, mu = rng.uniform(0.1, 10.0, 2)
        h = rng.standard_normal(64)
        gl, gm = solve_resolvent(op, lam, h), solve_resolvent(op, mu, h)
        lhs = gl - gm
        rhs = (mu - lam) * solve_resolvent(op, lam, gm)
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    return worst <= 1e-8, f"max error {worst:.2e}", "1e-8"


def resolvent_bounds(plan, rng):
    op = build_operator(plan.grid_wspec(), 128)
    worst_res = 0.0
    ok = True
    for _ in range(100):
        lam = float(np.exp(rng.uniform(np.log(0.05), np.log(50.0))))
        h = rng.standard_normal(128)
        g = solve_resolvent(op, lam, h)
        res = float(np.abs(lam * g - apply_generator(op, g) - h).max()) / float(np.abs(h).max())
        worst_res = max(worst_res, res)
        l2 = float(np.mean(h * h))
        ok &= float(np.mean(g * g)) <= l2 / lam ** 2 * (1 + 1e-10)
        ok &= dirichlet_form(op, g) <= l2 / lam * (1 + 1e-10)
    ok &= worst_res <= 1e-10
    return ok, f"bounds hold={ok}, max relative residual {worst_res:.2e}", "residual 1e-10"


def spectral_gap(plan, rng):
    op = build_operator(plan.grid_wspec(), 64)
    s = spectrum(op)
    norm = op.norm()
    ok = abs(s.eigenvalues[0]) <= 1e-8 * norm and s.eigenvalues[1] > 1e-8 * norm
    return ok, f"lambda_0={s.eigenvalues[0]:.2e} lambda_1={s.eigenvalues[1]:.4g}", "1e-8 ||L||"


def poincare(plan, rng):
    op = build_operator(plan.grid_wspec(), 64)
    worst = max(lhs / rhs for lhs, rhs in (poincare_check(op, h) for h in rng.standard_normal((200, 64))))
    return worst <= 1 + 1e-8, f"max lhs/rhs {worst:.4f}", "1e-8"


def brute_force_reversibility(plan, rng):
    params = ProcessParams(plan.a, plan.grid_wspec(), 4, plan.seed)
    q = brute_force_generator(params).toarray()
    worst = 0.0
    for alpha in (0.2, 0.5, 0.9):
        nu = bernoulli_measure(4, alpha)
        worst = max(worst, float(np.abs(nu @ q).max()))
        flux = nu[:, None] * q
        off = flux - np.diag(np.diag(flux))
        worst = max(worst, float(np.abs(off - off.T).max()))
    f = rng.uniform(0.1, 2.0, 16)
    nu = bernoulli_measure(4, 0.5)
    f /= f @ nu
    root = np.sqrt(f)
    direct = dirichlet_form_particles(params, f, 0.5)
    via_q = float(-(nu * root) @ (q @ root))
    gap = abs(direct - via_q)
    return max(worst, gap) <= 1e-12 * max(1.0, params.xi.max()), \
        f"stationarity/detailed balance {worst:.2e}, Dirichlet routes {gap:.2e}", "1e-12"


def rate_cache(plan, rng):
    n = 64
    params = ProcessParams(plan.a, plan.grid_wspec(), n, plan.seed)
    eta = sample_initial(0.5, n, plan.seed)
    count = eta.particle_count
    clock = RateIndex(params, eta)
    advance(params, eta, clock, np.inf, max_events=100_000)
    err = clock.coherence_error(eta)
    conserved = int(eta.occupancy.sum()) == count
    return err <= 1e-9 and conserved, f"root coherence {err:.2e}, particles conserved={conserved}", "1e-9"


def backend_parity(plan, rng):
    if _backend.BACKEND != "cython":
        return True, "compiled kernel not built; only the Python kernel is in use", ""
    params = ProcessParams(plan.a, plan.grid_wspec(), 32, plan.seed)
    finals = []
    for name in ("cython", "python"):
        eta = sample_initial(0.5, 32, plan.seed)
        clock = RateIndex(params, eta, backend=name)
        advance(params, eta, clock, 0.01)
        finals.append((eta.occupancy.tobytes(), clock.state, clock.events, clock.time))
    same = finals[0] == finals[1]
    return same, f"events={finals[0][2]} identical={same}", "bitwise"


def pde_conservation_and_range(plan, rng):
    n = 64
    op = build_operator(plan.grid_wspec(), n)
    phi = PhiSpec.quadratic(plan.a)
    gamma = rng.uniform(0.1, 0.9, n)
    times = np.linspace(0.0, 0.02, 201)
    traj = evolve(op, phi, gamma, times, SolverConfig(dt=1e-4))
    drift = float(np.max(np.abs(traj.values.mean(axis=1) - gamma.mean())))
    lo, hi = traj.values.min(), traj.values.max()
    in_range = lo >= gamma.min() - 1e-9 and hi <= gamma.max() + 1e-9
    lyap = np.array([lyapunov(phi, v) for v in traj.values])
    mono = bool(np.all(np.diff(lyap) <= 1e-10))
    ok = drift <= 1e-8 and in_range and mono
    return ok, f"mass drift {drift:.2e}, range ok={in_range}, Lyapunov nonincreasing={mono}", "1e-8 / 1e-9 / 1e-10"


def comparison_principle(plan, rng):
    n = 64
    op = build_operator(plan.grid_wspec(), n)
    phi = PhiSpec.quadratic(plan.a)
    g1 = rng.uniform(0.05, 0.6, n)
    g2 = np.minimum(g1 + rng.uniform(0.0, 0.35, n), 1.0)
    cfg = SolverConfig(dt=1e-4)
    r1 = evolve(op, phi, g1, [0.01], cfg).values[-1]
    r2 = evolve(op, phi, g2, [0.01], cfg).values[-1]
    worst = float(np.max(r1 - r2))
    return worst <= 1e-9, f"max(rho1 - rho2) = {worst:.2e}", "1e-9"


def contraction(plan, rng):
    n = 64
    op = build_operator(plan.grid_wspec(), n)
    phi = PhiSpec.quadratic(plan.a)
    ok = True
    worst = 0.0
    for lam in (0.5, 1.0, 2.0):
        g1, g2 = rng.uniform(0.2, 0.8, (2, n))
        lhs, bound = contraction_check(op, phi, g1, g2, lam, 0.05, SolverConfig(dt=1e-4))
        ok &= lhs <= bound * (1 + 1e-6)
        worst = max(worst, lhs / bound)
    return ok, f"max lhs/bound {worst:.4f}", "1e-6"


SUITES = [
    ("wfun.invariants", wfun_invariants),
    ("lattice.symmetry", lattice_symmetry),
    ("lattice.nonpositive", lattice_nonpositive),
    ("lattice.resolvent_identity", resolvent_identity),
    ("lattice.resolvent_bounds", resolvent_bounds),
    ("lattice.spectral_gap", spectral_gap),
    ("lattice.poincare", poincare),
    ("particle.reversibility", brute_force_reversibility),
    ("particle.rate_cache", rate_cache),
    ("particle.backend_parity", backend_parity),
    ("pde.conservation_range_lyapunov", pde_conservation_and_range),
    ("pde.comparison", comparison_principle),
    ("pde.contraction", contraction),
]
