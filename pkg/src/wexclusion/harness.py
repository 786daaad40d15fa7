"""Particle-system vs. PDE convergence experiments and property suites.

Replicas are independent tasks keyed by ``(master seed, replica index)``;
results are always reduced in replica order, so tables do not depend on the
number of workers.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__, _backend
from .config import dumps, sha256_bytes
from .lattice import build_operator
from .particle import ProcessParams, coarse_profile, run_replica
from .pde import PhiSpec, SolverConfig, evolve
from .profiles import make_profile
from .wfun import WSpec, separate_atoms_from_grid, wspec_from_dict, wspec_to_dict

logger = logging.getLogger(__name__)

__all__ = [
    "PlanError",
    "ExperimentPlan",
    "ConvergenceRow",
    "ConvergenceResult",
    "run_convergence",
    "simulate_replicas",
    "profile_snapshot",
    "membrane_diagnostics",
    "gap_monotonicity_violations",
    "standardized_gaps",
    "write_outputs",
    "write_manifest",
    "run_property_suites",
    "SuiteResult",
]


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentPlan:
    wspec: WSpec
    a: float
    gamma: dict[str, Any]
    grid_sizes: tuple[int, ...]
    replicas: int
    times: tuple[float, ...]
    modes: tuple[int, ...] = (0, 1, 2, 4)
    box_fractions: tuple[float, ...] = (1.0 / 32.0,)
    seed: int = 0
    workers: int = 1
    pde_scheme: str = "implicit"
    pde_dt: float = 1e-5
    ref_factor: int = 4
    out_dir: str | None = None

    def __post_init__(self):
        if not self.a > -0.5:
            raise PlanError(f"a must be > -1/2 (exchange rates must stay positive), got a={self.a}")
        sizes = tuple(int(n) for n in self.grid_sizes)
        if not sizes or any(n < 2 for n in sizes) or any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise PlanError(f"grid sizes must be >= 2 and strictly increasing, got {sizes}")
        if int(self.replicas) < 1:
            raise PlanError(f"replica count must be >= 1, got {self.replicas}")
        times = tuple(float(t) for t in self.times)
        if not times or times[0] < 0 or any(b <= a for a, b in zip(times, times[1:])):
            raise PlanError(f"snapshot times must be >= 0 and strictly increasing, got {times}")
        if any(int(k) < 0 for k in self.modes):
            raise PlanError("Fourier modes must be non-negative")
        if self.ref_factor < 1:
            raise PlanError("ref_factor must be >= 1")
        object.__setattr__(self, "grid_sizes", sizes)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "modes", tuple(int(k) for k in self.modes))
        object.__setattr__(self, "box_fractions", tuple(float(e) for e in self.box_fractions))
        gamma_vals = make_profile(self.gamma)(np.linspace(0.0, 1.0, 1001, endpoint=False))
        if np.any(gamma_vals < 0.0) or np.any(gamma_vals > 1.0):
            raise PlanError("initial profile must take values in [0, 1]")

    @classmethod
    def from_config(cls, cfg: dict[str, Any]) -> "ExperimentPlan":
        exp = cfg.get("experiment", {})
        pde = cfg.get("pde", {})
        try:
            return cls(
                wspec=wspec_from_dict(cfg.get("w", {"drift": 1.0})),
                a=float(cfg.get("process", {}).get("a", 0.0)),
                gamma=dict(cfg.get("initial", {"profile": "constant", "value": 0.5})),
                grid_sizes=tuple(exp.get("grid_sizes", (64, 128))),
                replicas=int(exp.get("replicas", 10)),
                times=tuple(exp.get("times", (0.02,))),
                modes=tuple(exp.get("modes", (0, 1, 2, 4))),
                box_fractions=tuple(exp.get("box_fractions", (1.0 / 32.0,))),
                seed=int(cfg.get("seed", 0)),
                workers=int(cfg.get("workers", 1)),
                pde_scheme=str(pde.get("scheme", "implicit")),
                pde_dt=float(pde.get("dt", 1e-5)),
                ref_factor=int(pde.get("ref_factor", 4)),
                out_dir=cfg.get("out"),
            )
        except PlanError:
            raise
        except ValueError as exc:
            raise PlanError(str(exc)) from exc

    def to_config(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "seed": self.seed,
            "workers": self.workers,
            "w": wspec_to_dict(self.wspec),
            "process": {"a": self.a},
            "initial": dict(self.gamma),
            "experiment": {
                "grid_sizes": list(self.grid_sizes),
                "replicas": self.replicas,
                "modes": list(self.modes),
                "times": list(self.times),
                "box_fractions": list(self.box_fractions),
            },
            "pde": {"scheme": self.pde_scheme, "dt": self.pde_dt, "ref_factor": self.ref_factor},
        }
        if self.out_dir is not None:
            out["out"] = str(self.out_dir)
        return out

    @property
    def n_ref(self) -> int:
        return self.ref_factor * max(self.grid_sizes)

    def grid_wspec(self) -> WSpec:
        """W with atoms moved off every grid point used by the plan."""
        w = self.wspec
        for n in (*self.grid_sizes, self.n_ref):
            w = separate_atoms_from_grid(w, n)
        return w

    def fingerprint(self) -> str:
        cfg = self.to_config()
        cfg.pop("workers", None)
        cfg.pop("out", None)
        return sha256_bytes(dumps(cfg).encode())[:16]


@dataclass(frozen=True)
class ConvergenceRow:
    N: int
    t: float
    observable: str
    mc_mean: float
    mc_stderr: float
    pde_value: float
    abs_gap: float


@dataclass
class ConvergenceResult:
    plan: ExperimentPlan
    rows: list[ConvergenceRow]
    pairs: dict[int, np.ndarray]      # N -> (R, T, M)
    snapshots: dict[int, np.ndarray]  # N -> (R, T, N) uint8
    ref_values: np.ndarray            # (T, n_ref)
    ref_wspec: WSpec
    pde_values: np.ndarray            # (T, M)
    extra: dict[str, Any] = field(default_factory=dict)


def observable_ids(modes: Sequence[int]) -> list[str]:
    return [f"cos{k}" for k in modes]


def fourier_table(modes: Sequence[int], n: int) -> np.ndarray:
    """Rows ``cos(2 pi k x / n)`` for each mode ``k``; shape ``(M, n)``."""
    u = np.arange(n) / n
    return np.array([np.cos(2.0 * np.pi * k * u) for k in modes])


def _snapshot_task(args):
    a, wspec, n, seed, gamma, times, replica, backend = args
    return run_replica(ProcessParams(a, wspec, n, seed), make_profile(gamma), times, replica,
                       backend=backend)


def simulate_replicas(params: ProcessParams, gamma: dict[str, Any], times: Sequence[float],
                      replicas: int, workers: int = 1, backend: str | None = None) -> np.ndarray:
    """Occupancy snapshots of ``replicas`` independent runs, shape ``(R, T, N)``."""
    tasks = [(params.a, params.wspec, params.n, params.seed, gamma, tuple(times), r, backend)
             for r in range(replicas)]
    return np.stack(_map(_snapshot_task, tasks, workers))


def _replica_task(args):
    a, wspec, n, seed, gamma, times, replica, modes, backend = args
    params = ProcessParams(a, wspec, n, seed)
    snaps = run_replica(params, make_profile(gamma), times, replica, backend=backend)
    pairs = snaps.astype(float) @ fourier_table(modes, n).T / n
    return pairs, snaps


def _map(fn: Callable, tasks: list, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def pde_reference(plan: ExperimentPlan) -> tuple[np.ndarray, np.ndarray]:
    """PDE profile on the fine grid at each snapshot time and its pairings."""
    n_ref = plan.n_ref
    op = build_operator(plan.grid_wspec(), n_ref)
    phi = PhiSpec.quadratic(plan.a)
    gamma = make_profile(plan.gamma)(np.arange(n_ref) / n_ref)
    traj = evolve(op, phi, gamma, plan.times, SolverConfig(scheme=plan.pde_scheme, dt=plan.pde_dt))
    values = traj.values
    pde_pairs = values @ fourier_table(plan.modes, n_ref).T / n_ref
    return values, pde_pairs


def run_convergence(plan: ExperimentPlan, workers: int | None = None,
                    partial_dir: str | Path | None = None,
                    backend: str | None = None) -> ConvergenceResult:
    """Replicated particle runs at every grid size against one fine PDE reference.

    With ``partial_dir`` each finished grid size is saved there and reused
    on a rerun of the same plan.
    """
    workers = plan.workers if workers is None else workers
    wgrid = plan.grid_wspec()
    ref_values, pde_pairs = pde_reference(plan)
    ids = observable_ids(plan.modes)
    pairs: dict[int, np.ndarray] = {}
    snaps: dict[int, np.ndarray] = {}
    tag = plan.fingerprint()
    for n in plan.grid_sizes:
        cache = Path(partial_dir) / f"N{n}_{tag}.npz" if partial_dir is not None else None
        if cache is not None and cache.exists():
            with np.load(cache) as data:
                pairs[n], snaps[n] = data["pairs"], data["snaps"]
            logger.info("N=%d: reused %s", n, cache)
            continue
        tasks = [(plan.a, wgrid, n, plan.seed, plan.gamma, plan.times, r, plan.modes, backend)
                 for r in range(plan.replicas)]
        out = _map(_replica_task, tasks, workers)
        pairs[n] = np.stack([p for p, _ in out])
        snaps[n] = np.stack([s for _, s in out])
        if cache is not None:
            cache.parent.mkdir(parents=True, exist_ok=True)
            np.savez(cache, pairs=pairs[n], snaps=snaps[n])
        logger.info("N=%d: %d replicas done", n, plan.replicas)

    rows = []
    r = plan.replicas
    for n in plan.grid_sizes:
        mean = pairs[n].mean(axis=0)
        se = pairs[n].std(axis=0, ddof=1) / math.sqrt(r) if r > 1 else np.zeros_like(mean)
        for j, t in enumerate(plan.times):
            for m, oid in enumerate(ids):
                mc, pv = float(mean[j, m]), float(pde_pairs[j, m])
                rows.append(ConvergenceRow(n, t, oid, mc, float(se[j, m]), pv, abs(mc - pv)))
    return ConvergenceResult(plan, rows, pairs, snaps, ref_values, wgrid, pde_pairs)


def _atom_bonds(w: WSpec, n: int) -> list[int]:
    """Bond index ``x`` whose interval ``(x/n, (x+1)/n]`` holds each atom."""
    return sorted({(math.ceil(loc * n) - 1) % n for loc, _ in w.atoms})


def profile_snapshot(result: ConvergenceResult, n: int, t: float,
                     box_fraction: float | None = None) -> dict[str, np.ndarray]:
    """Coarse-grained particle density next to the PDE profile at one ``(N, t)``.

    Box ``x`` covers sites ``x .. x + box - 1`` with ``box = round(eps N)``.
    """
    plan = result.plan
    eps = plan.box_fractions[0] if box_fraction is None else box_fraction
    box = int(round(eps * n))
    if box < 4:
        raise PlanError(f"coarse box eps*N={eps * n:g} is below 4 sites")
    j = _time_index(plan, t)
    occ = result.snapshots[n][:, j, :]
    cp = coarse_profile(occ, box)
    r = occ.shape[0]
    mc = cp.mean(axis=0)
    se = cp.std(axis=0, ddof=1) / math.sqrt(r) if r > 1 else np.zeros(n)
    stride = plan.n_ref // n if plan.n_ref % n == 0 else None
    ref = result.ref_values[j]
    if stride is not None:
        pde_point = ref[::stride][:n]
    else:
        u_ref = np.arange(plan.n_ref) / plan.n_ref
        pde_point = np.interp(np.arange(n) / n, u_ref, ref, period=1.0)
    pde_box = coarse_profile(pde_point, box)
    return {
        "x": np.arange(n),
        "u": np.arange(n) / n,
        "mc_mean_occupancy": mc,
        "mc_stderr": se,
        "pde_rho": pde_point,
        "pde_box": pde_box,
    }


def _time_index(plan: ExperimentPlan, t: float) -> int:
    for j, tt in enumerate(plan.times):
        if math.isclose(tt, t, rel_tol=1e-12, abs_tol=1e-15):
            return j
    raise PlanError(f"t={t} is not a snapshot time of the plan {plan.times}")


def membrane_diagnostics(result: ConvergenceResult, n: int, t: float,
                         box_fraction: float | None = None) -> list[dict[str, float]]:
    """Jump of the density across each atom, for the PDE and the particles.

    ``pde_jump`` is ``rho[x+1] - rho[x]`` across the atom bond on the fine
    grid, ``pde_max_other`` the largest such jump across an atom-free bond.
    ``mc_jump`` is the difference of the two coarse boxes adjacent to the
    atom bond at grid ``n``; ``pde_box_jump`` the same difference for the
    PDE sampled on that grid.
    """
    plan = result.plan
    j = _time_index(plan, t)
    ref = result.ref_values[j]
    n_ref = plan.n_ref
    ref_jumps = np.roll(ref, -1) - ref
    ref_bonds = _atom_bonds(result.ref_wspec, n_ref)
    other = np.delete(np.abs(ref_jumps), ref_bonds)
    eps = plan.box_fractions[0] if box_fraction is None else box_fraction
    box = int(round(eps * n))
    snap = profile_snapshot(result, n, t, eps)
    occ = result.snapshots[n][:, j, :].astype(float)
    cp = coarse_profile(occ, box)
    out = []
    for (loc, _), b_ref, b in zip(result.ref_wspec.atoms, ref_bonds, _atom_bonds(result.ref_wspec, n)):
        right, left = (b + 1) % n, (b - box + 1) % n
        per_rep = cp[:, right] - cp[:, left]
        r = per_rep.size
        out.append({
            "location": loc,
            "pde_jump": float(ref_jumps[b_ref]),
            "pde_max_other": float(other.max()) if other.size else 0.0,
            "mc_jump": float(per_rep.mean()),
            "mc_jump_stderr": float(per_rep.std(ddof=1) / math.sqrt(r)) if r > 1 else 0.0,
            "pde_box_jump": float(snap["pde_box"][right] - snap["pde_box"][left]),
            "box": box,
        })
    return out


def gap_monotonicity_violations(rows: Sequence[ConvergenceRow], slack: float = 2.0) -> list[str]:
    """Cells where ``abs_gap`` grows from one N to the next beyond the MC noise.

    A step ``N_k -> N_{k+1}`` passes if ``gap_{k+1} <= gap_k + slack * (se_k + se_{k+1})``.
    """
    cells: dict[tuple[float, str], list[ConvergenceRow]] = {}
    for row in rows:
        cells.setdefault((row.t, row.observable), []).append(row)
    bad = []
    for (t, oid), seq in sorted(cells.items()):
        seq = sorted(seq, key=lambda r: r.N)
        for lo, hi in zip(seq, seq[1:]):
            allowed = lo.abs_gap + slack * (lo.mc_stderr + hi.mc_stderr)
            if hi.abs_gap > allowed:
                bad.append(f"t={t:g} {oid}: N={lo.N} gap {lo.abs_gap:.3e} -> N={hi.N} "
                           f"gap {hi.abs_gap:.3e} > {allowed:.3e}")
    return bad


def standardized_gaps(rows: Sequence[ConvergenceRow]) -> np.ndarray:
    """``(mc_mean - pde_value) / mc_stderr`` over cells with positive stderr."""
    return np.array([(r.mc_mean - r.pde_value) / r.mc_stderr for r in rows if r.mc_stderr > 0])


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for row in rows:
        wr.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_outputs(result: ConvergenceResult, out_dir: str | Path) -> list[Path]:
    """Write ``convergence.csv``, ``profiles_N<k>_t<j>.csv`` and ``report.txt``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plan = result.plan
    written = []
    header = ["N", "t", "observable", "mc_mean", "mc_stderr", "pde_value", "abs_gap"]
    text = _csv_text(header, [(r.N, r.t, r.observable, r.mc_mean, r.mc_stderr, r.pde_value,
                               r.abs_gap) for r in result.rows])
    p = out / "convergence.csv"
    p.write_text(text)
    written.append(p)
    for n in plan.grid_sizes:
        if plan.box_fractions[0] * n < 4:
            continue
        for j, t in enumerate(plan.times):
            snap = profile_snapshot(result, n, t)
            cols = ["x", "u", "mc_mean_occupancy", "mc_stderr", "pde_rho", "pde_box"]
            text = _csv_text(cols, list(zip(*(snap[c].tolist() for c in cols))))
            p = out / f"profiles_N{n}_t{j}.csv"
            p.write_text(text)
            written.append(p)
    p = out / "report.txt"
    p.write_text(convergence_report(result))
    written.append(p)
    return written


def convergence_report(result: ConvergenceResult) -> str:
    plan = result.plan
    lines = [f"plan {plan.fingerprint()}  seed={plan.seed}  replicas={plan.replicas}",
             f"grid sizes {list(plan.grid_sizes)}  reference n={plan.n_ref}  times {list(plan.times)}"]
    bad = gap_monotonicity_violations(result.rows)
    lines.append(f"gap monotone in N (slack 2 x MC stderr): {'PASS' if not bad else 'FAIL'}")
    lines.extend("  " + b for b in bad)
    nmax = max(plan.grid_sizes)
    worst = max(r.abs_gap for r in result.rows if r.N == nmax)
    lines.append(f"largest gap at N={nmax}: {worst:.6e}")
    z = standardized_gaps(result.rows)
    if z.size:
        lines.append(f"standardized gaps: max |z| = {np.abs(z).max():.3f}, "
                     f"share |z| <= 4: {np.mean(np.abs(z) <= 4):.4f}")
    if plan.wspec.atoms and plan.box_fractions[0] * nmax >= 4:
        for t in plan.times:
            for d in membrane_diagnostics(result, nmax, t):
                lines.append(
                    f"membrane u={d['location']:.6g} t={t:g}: pde jump {d['pde_jump']:.4e} "
                    f"(max atom-free {d['pde_max_other']:.4e}); mc box jump {d['mc_jump']:.4e} "
                    f"+- {d['mc_jump_stderr']:.2e} vs pde box jump {d['pde_box_jump']:.4e}")
    return "\n".join(lines) + "\n"


def write_manifest(out_dir: str | Path, config: dict[str, Any], input_bytes: bytes,
                   outputs: Sequence[Path], command: str, force: bool = False) -> Path:
    """Record the resolved config, versions, seed and hashes next to the outputs."""
    out = Path(out_dir)
    path = out / "manifest.toml"
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists; pass --force to overwrite")
    import scipy

    manifest = {
        "manifest_version": 1,
        "command": command,
        "seed": int(config.get("seed", 0)),
        "versions": {
            "wexclusion": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
            "kmc_backend": _backend.BACKEND,
        },
        "inputs": {"config_sha256": sha256_bytes(input_bytes)},
        "outputs": {p.name: sha256_bytes(p.read_bytes()) for p in outputs},
        "config": config,
    }
    path.write_text(dumps(manifest))
    return path


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str
    tolerance: str = ""


def run_property_suites(plan: ExperimentPlan, seed: int | None = None) -> list[SuiteResult]:
    """Run every invariant suite on the plan's W and ``a``; never raises on failure."""
    from . import suites

    rng = np.random.default_rng(plan.seed if seed is None else seed)
    results = []
    for name, fn in suites.SUITES:
        try:
            ok, detail, tol = fn(plan, rng)
        except Exception as exc:  # a crashing suite is a failing suite
            ok, detail, tol = False, f"{type(exc).__name__}: {exc}", ""
        results.append(SuiteResult(name, bool(ok), detail, tol))
    return results
