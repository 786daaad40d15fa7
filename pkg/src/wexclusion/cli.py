"""Command-line entry point: ``wexclusion <subcommand> [flags]``.

Every subcommand reads one TOML config (a preset name, a file, or a
previous run's ``manifest.toml``), applies flag overrides, writes its CSV
tables into ``--out`` and records a manifest there.

Exit codes: 0 success, 1 invalid input, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .config import load_config, merge
from .harness import (ExperimentPlan, PlanError, _csv_text, run_convergence, run_property_suites,
                      simulate_replicas, write_manifest, write_outputs)
from .lattice import SpectrumCapError, build_operator, green_dirichlet, green_formula, spectrum
from .particle import ProcessParams
from .pde import NewtonError, PhiSpec, RangeError, SolverConfig, evolve
from .profiles import make_profile
from .wfun import WSpecError, loads_wspec, wspec_from_dict, wspec_to_dict

logger = logging.getLogger("wexclusion")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default,
                        help="preset name (default, headline, equilibrium, smoke), TOML file or manifest")
    parser.add_argument("--seed", type=int, default=default, help="master seed")
    parser.add_argument("--out", default=default, help="output directory (created if absent)")
    parser.add_argument("--workers", type=int, default=default, help="worker processes for replicas")
    parser.add_argument("--force", action="store_true", default=default,
                        help="overwrite an existing manifest")
    parser.add_argument("--log-level", default=default, help="DEBUG, INFO, WARNING, ...")


def _model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--w-spec", help="TOML file holding the W spec (drift, atoms)")
    p.add_argument("--a", type=float, help="rate asymmetry, must exceed -1/2")
    p.add_argument("--n", type=int, help="number of sites")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wexclusion", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="eigenvalues of -L_N")
    _model_flags(p)
    p.add_argument("--eigenvectors", action="store_true", help="also write eigenvectors.csv")

    p = sub.add_parser("green", help="Dirichlet Green's function vs. closed form")
    _model_flags(p)
    p.add_argument("--y", type=float, help="source point in (0, 1), rounded to the grid")

    p = sub.add_parser("pde", help="solve the hydrodynamic equation")
    _model_flags(p)
    p.add_argument("--phi-table", help="CSV with columns alpha,phi replacing the quadratic Phi")
    p.add_argument("--profile", help="initial profile: constant, cosine, step or file")
    p.add_argument("--profile-file", help="CSV u,rho for the 'file' profile")
    p.add_argument("--alpha", type=float, help="value of the constant profile")
    p.add_argument("--scheme", choices=("implicit", "explicit", "trbdf2"))
    p.add_argument("--dt", type=float)
    p.add_argument("--times", type=_floats, help="comma-separated snapshot times")

    p = sub.add_parser("simulate", help="run the exclusion process")
    _model_flags(p)
    p.add_argument("--profile", help="initial profile: constant, cosine, step or file")
    p.add_argument("--profile-file", help="CSV u,rho for the 'file' profile")
    p.add_argument("--alpha", type=float, help="value of the constant profile")
    p.add_argument("--t", type=float, dest="t_final", help="final time (single snapshot)")
    p.add_argument("--times", type=_floats, help="comma-separated snapshot times")
    p.add_argument("--replicas", type=int)
    p.add_argument("--aggregate", action="store_true", default=None,
                   help="write t,x,mean_occupancy instead of every replica")

    p = sub.add_parser("converge", help="particle system vs. PDE over a grid of N")
    p.add_argument("--grid-sizes", type=_ints)
    p.add_argument("--replicas", type=int)
    p.add_argument("--times", type=_floats)
    p.add_argument("--modes", type=_ints)

    p = sub.add_parser("validate", help="run the invariant suites")
    p.add_argument("--a", type=float)

    for p in sub.choices.values():
        _global_flags(p, suppress=True)
    return parser


def _resolve(args: argparse.Namespace) -> tuple[dict[str, Any], bytes]:
    cfg, raw = load_config(args.config)
    top = {"seed": args.seed, "workers": args.workers}
    cmd = args.command
    local: dict[str, Any] = {}
    if getattr(args, "w_spec", None):
        cfg["w"] = wspec_to_dict(loads_wspec(Path(args.w_spec).read_text()))
    if getattr(args, "a", None) is not None:
        top["process"] = {"a": args.a}
    for key in ("n", "eigenvectors", "y", "phi_table", "scheme", "dt", "times", "replicas",
                "aggregate", "grid_sizes", "modes"):
        val = getattr(args, key, None)
        if val not in (None, False):
            local[key] = val
    if getattr(args, "t_final", None) is not None:
        local["times"] = [args.t_final]
    if getattr(args, "profile", None):
        init = {"profile": args.profile}
        if args.profile_file:
            init["path"] = args.profile_file
        if args.alpha is not None:
            init["value"] = args.alpha
        cfg["initial"] = init
    elif getattr(args, "alpha", None) is not None:
        cfg["initial"] = {"profile": "constant", "value": args.alpha}
    if cmd == "converge":
        exp = {k: local.pop(k) for k in ("grid_sizes", "replicas", "times", "modes") if k in local}
        top["experiment"] = exp
    cfg = merge(cfg, top)
    if local:
        cfg = merge(cfg, {cmd: local})
    return cfg, raw


def _model(cfg: dict[str, Any], section: dict[str, Any], default_n: int):
    w = wspec_from_dict(cfg.get("w", {"drift": 1.0}))
    a = float(cfg.get("process", {}).get("a", 0.0))
    if not a > -0.5:
        raise ValueError(f"a must be > -1/2 so every exchange rate is positive, got a={a}")
    n = int(section.get("n", default_n))
    if n < 2:
        raise ValueError(f"need at least 2 sites, got n={n}")
    return w, a, n


def _write(out: Path, name: str, header: Sequence[str], rows) -> Path:
    p = out / name
    p.write_text(_csv_text(header, rows))
    return p


def _cmd_spectrum(cfg, out: Path) -> list[Path]:
    sec = cfg.setdefault("spectrum", {})
    w, _, n = _model(cfg, sec, 64)
    s = spectrum(build_operator(w, n))
    paths = [_write(out, "spectrum.csv", ["k", "lambda_k"], enumerate(s.eigenvalues.tolist()))]
    if sec.get("eigenvectors"):
        v = s.eigenvectors
        rows = [[x, *v[x].tolist()] for x in range(n)]
        paths.append(_write(out, "eigenvectors.csv", ["x", *(f"v{k}" for k in range(n))], rows))
    return paths


def _cmd_green(cfg, out: Path) -> list[Path]:
    sec = cfg.setdefault("green", {})
    w, _, n = _model(cfg, sec, 128)
    y = float(sec.get("y", 0.5))
    j = int(round(y * n))
    if not 0 < j < n:
        raise ValueError(f"source y={y} must lie strictly inside (0, 1) on the grid of n={n}")
    u = green_dirichlet(build_operator(w, n), j)
    g = green_formula(w, np.arange(n + 1) / n, j / n) + 0.0
    rows = zip(range(n + 1), g.tolist(), u.tolist(), np.abs(g - u).tolist())
    return [_write(out, "green.csv", ["x", "G_formula", "G_discrete", "abs_err"], rows)]


def _cmd_pde(cfg, out: Path) -> list[Path]:
    sec = cfg.setdefault("pde", {})
    w, a, n = _model(cfg, sec, 256)
    if "phi_table" in sec:
        tab = np.loadtxt(sec["phi_table"], delimiter=",", ndmin=2, skiprows=1)
        phi = PhiSpec.table(tab[:, 0], tab[:, 1])
    else:
        phi = PhiSpec.quadratic(a)
    scheme = sec.get("scheme", "implicit")
    dt = sec.get("dt", None if scheme == "explicit" else 1e-5)
    solver = SolverConfig(scheme=scheme, dt=dt,
                          newton_tol=float(sec.get("newton_tol", 1e-12)),
                          max_newton=int(sec.get("max_newton", 50)))
    times = [float(t) for t in sec.get("times", cfg.get("experiment", {}).get("times", [0.02]))]
    gamma = make_profile(cfg.get("initial", {}))(np.arange(n) / n)
    traj = evolve(build_operator(w, n), phi, gamma, times, solver)
    rows = ((t, x, float(r)) for t, prof in zip(times, traj.values) for x, r in enumerate(prof))
    return [_write(out, "pde.csv", ["t", "x", "rho"], rows)]


def _cmd_simulate(cfg, out: Path) -> list[Path]:
    sec = cfg.setdefault("simulate", {})
    w, a, n = _model(cfg, sec, 64)
    times = [float(t) for t in sec.get("times", cfg.get("experiment", {}).get("times", [0.02]))]
    if any(t < 0 for t in times) or any(b <= a_ for a_, b in zip(times, times[1:])):
        raise ValueError(f"snapshot times must be >= 0 and strictly increasing, got {times}")
    replicas = int(sec.get("replicas", 1))
    if replicas < 1:
        raise ValueError(f"replica count must be >= 1, got {replicas}")
    params = ProcessParams(a, w, n, int(cfg.get("seed", 0)))
    gamma = cfg.get("initial", {"profile": "constant", "value": 0.5})
    snaps = simulate_replicas(params, gamma, times, replicas, int(cfg.get("workers", 1)))
    if sec.get("aggregate"):
        mean = snaps.mean(axis=0)
        rows = ((t, x, float(m)) for t, prof in zip(times, mean) for x, m in enumerate(prof))
        return [_write(out, "simulate.csv", ["t", "x", "mean_occupancy"], rows)]
    rows = ((r, t, x, int(e)) for r in range(replicas) for t, prof in zip(times, snaps[r])
            for x, e in enumerate(prof))
    return [_write(out, "simulate.csv", ["replica", "t", "x", "eta"], rows)]


def _cmd_converge(cfg, out: Path) -> list[Path]:
    plan = ExperimentPlan.from_config(cfg)
    result = run_convergence(plan, workers=plan.workers, partial_dir=out / "partial")
    return write_outputs(result, out)


def _cmd_validate(cfg, out: Path) -> list[Path]:
    plan = ExperimentPlan.from_config(cfg)
    results = run_property_suites(plan)
    lines = [f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail} (tol {r.tolerance})"
             for r in results]
    p = out / "validate.txt"
    p.write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise SuiteFailure(f"{len(failed)} suite(s) failed: {', '.join(failed)}", [p])
    return [p]


class SuiteFailure(Exception):
    def __init__(self, message: str, outputs: list[Path]):
        super().__init__(message)
        self.outputs = outputs


_COMMANDS = {
    "spectrum": _cmd_spectrum,
    "green": _cmd_green,
    "pde": _cmd_pde,
    "simulate": _cmd_simulate,
    "converge": _cmd_converge,
    "validate": _cmd_validate,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=(args.log_level or "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out or "out")
    command = " ".join(["wexclusion", *(sys.argv[1:] if argv is None else argv)])
    code = EXIT_OK
    try:
        cfg, raw = _resolve(args)
        if (out / "manifest.toml").exists() and not args.force:
            raise FileExistsError(f"{out / 'manifest.toml'} exists; pass --force to overwrite")
        out.mkdir(parents=True, exist_ok=True)
        try:
            outputs = _COMMANDS[args.command](cfg, out)
        except SuiteFailure as exc:
            print(f"error: {exc}", file=sys.stderr)
            outputs, code = exc.outputs, EXIT_INVALID
        write_manifest(out, cfg, raw, outputs, command, force=bool(args.force))
        return code
    except (NewtonError, SpectrumCapError, RangeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (WSpecError, PlanError, ValueError, KeyError, FileExistsError, FileNotFoundError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
