from __future__ import annotations

import numpy as np
import pytest

from wexclusion import harness
from wexclusion.config import PRESETS, load_config, merge
from wexclusion.harness import (ConvergenceRow, ExperimentPlan, PlanError, gap_monotonicity_violations,
                                run_convergence, run_property_suites, write_manifest, write_outputs)
from wexclusion.wfun import WSpec


def smoke_plan(**over) -> ExperimentPlan:
    cfg = merge(PRESETS["smoke"], over)
    return ExperimentPlan.from_config(cfg)


@pytest.mark.parametrize("bad", [
    {"process": {"a": -0.5}},
    {"experiment": {"grid_sizes": [32, 16]}},
    {"experiment": {"replicas": 0}},
    {"experiment": {"times": [0.02, 0.01]}},
    {"w": {"drift": 0.0}},
    {"initial": {"profile": "constant", "value": 1.5}},
])
def test_plan_validation(bad):
    with pytest.raises(PlanError):
        smoke_plan(**bad)


def test_plan_round_trip_and_fingerprint():
    plan = smoke_plan()
    again = ExperimentPlan.from_config(plan.to_config())
    assert again == plan
    assert again.fingerprint() == plan.fingerprint()
    assert smoke_plan(workers=3).fingerprint() == plan.fingerprint()
    assert smoke_plan(seed=1).fingerprint() != plan.fingerprint()


def test_grid_wspec_moves_atoms_off_every_grid():
    plan = smoke_plan()
    loc = plan.grid_wspec().atoms[0][0]
    for n in (*plan.grid_sizes, plan.n_ref):
        assert loc * n != round(loc * n)


def test_equilibrium_start_matches_constant():
    plan = smoke_plan(initial={"profile": "constant", "value": 0.4},
                      experiment={"replicas": 20, "times": [0.005, 0.01]})
    res = run_convergence(plan)
    for row in res.rows:
        expected = 0.4 if row.observable == "cos0" else 0.0
        assert row.pde_value == pytest.approx(expected, abs=1e-12)
        assert row.abs_gap <= 4 * row.mc_stderr + 1e-12
        assert row.abs_gap == pytest.approx(abs(row.mc_mean - row.pde_value))


def test_mass_exact_in_mode_zero():
    plan = smoke_plan(initial={"profile": "cosine", "mean": 0.5, "amplitude": 0.3, "k": 1})
    res = run_convergence(plan)
    for n in plan.grid_sizes:
        # cos0 pairing at t is the particle count / N, fixed along each trajectory
        counts = res.snapshots[n].sum(axis=2)
        assert np.all(counts == counts[:, :1])


def test_deterministic_across_workers(tmp_path):
    plan = smoke_plan()
    outs = []
    for workers in (1, 2):
        res = run_convergence(plan, workers=workers)
        d = tmp_path / f"w{workers}"
        files = write_outputs(res, d)
        outs.append({p.name: p.read_bytes() for p in files})
    assert outs[0] == outs[1]


def test_partial_results_reused(tmp_path):
    plan = smoke_plan()
    first = run_convergence(plan, partial_dir=tmp_path)
    assert len(list(tmp_path.glob("N*_*.npz"))) == len(plan.grid_sizes)
    second = run_convergence(plan, partial_dir=tmp_path)
    assert first.rows == second.rows


def test_outputs_and_report(tmp_path):
    res = run_convergence(smoke_plan())
    files = write_outputs(res, tmp_path)
    names = {p.name for p in files}
    assert {"convergence.csv", "report.txt", "profiles_N16_t0.csv", "profiles_N32_t0.csv"} <= names
    text = (tmp_path / "convergence.csv").read_text()
    assert text.splitlines()[0] == "N,t,observable,mc_mean,mc_stderr,pde_value,abs_gap"
    assert "\r" not in text
    report = (tmp_path / "report.txt").read_text()
    assert "membrane" in report and "gap monotone" in report


def test_manifest_refuses_overwrite(tmp_path):
    cfg, raw = load_config("smoke")
    p = tmp_path / "x.csv"
    p.write_text("a\n1\n")
    write_manifest(tmp_path, cfg, raw, [p], "test")
    with pytest.raises(FileExistsError):
        write_manifest(tmp_path, cfg, raw, [p], "test")
    write_manifest(tmp_path, cfg, raw, [p], "test", force=True)
    again, _ = load_config(tmp_path / "manifest.toml")
    assert again == cfg


def test_gap_monotonicity_rule():
    rows = [ConvergenceRow(16, 0.1, "cos1", 0, 0.01, 0, 0.05),
            ConvergenceRow(32, 0.1, "cos1", 0, 0.01, 0, 0.08)]
    assert gap_monotonicity_violations(rows) == []
    rows[1] = ConvergenceRow(32, 0.1, "cos1", 0, 0.01, 0, 0.1)
    assert len(gap_monotonicity_violations(rows)) == 1


def test_profile_snapshot_box_guard():
    res = run_convergence(smoke_plan())
    with pytest.raises(PlanError):
        harness.profile_snapshot(res, 16, 0.01, box_fraction=1 / 16)
    snap = harness.profile_snapshot(res, 32, 0.01)
    assert snap["mc_mean_occupancy"].shape == (32,)


@pytest.mark.parametrize("a", [0.3, -0.49])
def test_property_suites_pass(a):
    results = run_property_suites(smoke_plan(process={"a": a}))
    failed = [(r.name, r.detail) for r in results if not r.passed]
    assert failed == []


def test_suite_crash_counts_as_failure(monkeypatch):
    from wexclusion import suites

    def boom(plan, rng):
        raise RuntimeError("broken")

    monkeypatch.setattr(suites, "SUITES", [("boom", boom)])
    (res,) = run_property_suites(smoke_plan())
    assert not res.passed and "broken" in res.detail
