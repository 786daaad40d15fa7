from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from wexclusion.wfun import (WSpec, WSpecError, dumps_wspec, eval_w, eval_w_left, increment,
                             loads_wspec, sample_jump_spec, separate_atoms_from_grid,
                             wspec_from_dict, wspec_to_dict)


def test_eval_identity(identity_w):
    assert eval_w(identity_w, 0.75) == 0.75


def test_eval_right_continuous_at_atom(atom_w):
    assert eval_w(atom_w, 0.5) == 1.5
    assert eval_w(atom_w, 0.49) == pytest.approx(0.49, abs=1e-15)
    assert eval_w_left(atom_w, 0.5) == 0.5


def test_eval_periodic_extension(atom_w):
    assert eval_w(atom_w, 1.25) == pytest.approx(2.25, abs=1e-15)
    assert eval_w(atom_w, -0.75) == pytest.approx(0.25 - 2.0, abs=1e-15)


def test_eval_vectorized(atom_w):
    out = eval_w(atom_w, np.array([0.0, 0.5, 1.0]))
    np.testing.assert_allclose(out, [0.0, 1.5, 2.0])


def test_atom_at_origin_keeps_w0_zero():
    w = WSpec(1.0, ((0.0, 2.0),))
    assert eval_w(w, 0.0) == 0.0
    assert eval_w(w, 1.0) == pytest.approx(3.0)
    assert eval_w_left(w, 1.0) == pytest.approx(1.0)


def test_increments():
    assert increment(WSpec.identity(), 0.0, 0.25) == 0.25
    w = WSpec(1.0, ((0.5, 1.0),))
    assert increment(w, 0.0, 0.5) == 1.5
    assert increment(w, 0.5, 1.0) == 0.5
    w2 = WSpec(0.2, ((0.3, 0.5), (0.6, 0.5)))
    assert increment(w2, 0.0, 1.0) == pytest.approx(1.2, abs=1e-15)
    with pytest.raises(ValueError):
        increment(w, 0.5, 0.5)


@pytest.mark.parametrize("drift", [0.0, -1.0, math.nan])
def test_rejects_non_increasing(drift):
    with pytest.raises(WSpecError, match="strictly increasing"):
        WSpec(drift)


@pytest.mark.parametrize("atoms", [((1.0, 0.1),), ((0.2, 0.0),), ((0.5, 0.1), (0.4, 0.1))])
def test_rejects_bad_atoms(atoms):
    with pytest.raises(WSpecError):
        WSpec(1.0, atoms)


def test_sampler_deterministic_and_normalized():
    a = sample_jump_spec(0.5, 100, 1e-3, seed=7)
    b = sample_jump_spec(0.5, 100, 1e-3, seed=7)
    assert a == b
    assert math.isclose(sum(a.weights), 1.0, rel_tol=1e-12)
    c = sample_jump_spec(0.5, 100, 1e-3, seed=8)
    assert not np.array_equal(a.locations, c.locations)
    one = sample_jump_spec(0.5, 1, 1e-3, seed=3)
    assert len(one.atoms) == 1 and one.atoms[0][1] == pytest.approx(1.0)


def test_sampler_rejects_bad_alpha():
    with pytest.raises(ValueError):
        sample_jump_spec(1.5, 3, 1e-3, 0)


def test_round_trip_exact():
    w = sample_jump_spec(0.4, 12, 1e-3, seed=11)
    back = loads_wspec(dumps_wspec(w))
    assert back == w
    assert back.meta == w.meta
    assert wspec_from_dict(wspec_to_dict(w)) == w


def test_sampled_spec_rebuilt_from_parameters():
    w = sample_jump_spec(0.4, 5, 1e-3, seed=2)
    d = {"alpha": 0.4, "n_atoms": 5, "seed": 2}
    assert wspec_from_dict(d) == w


def test_grid_jitter_moves_only_grid_atoms():
    w = WSpec(1.0, ((0.25, 1.0), (0.3, 1.0)))
    moved = separate_atoms_from_grid(w, 8)
    assert moved.atoms[0][0] == 0.25 + 1e-12 / 8
    assert moved.atoms[1][0] == 0.3
    assert separate_atoms_from_grid(WSpec(1.0, ((0.3, 1.0),)), 8) == WSpec(1.0, ((0.3, 1.0),))


specs = st.builds(
    lambda drift, locs, wts: WSpec(drift, tuple(zip(sorted(set(locs)), wts))),
    st.floats(0.01, 5.0),
    st.lists(st.floats(0.0, 0.999), max_size=5),
    st.lists(st.floats(0.01, 3.0), min_size=5, max_size=5),
)


@settings(max_examples=60, deadline=None)
@given(specs, st.floats(-3, 3), st.floats(1e-6, 2.0))
def test_quantitative_monotonicity(w, u, dv):
    v = u + dv
    # evaluation rounds at the scale of |W(u)|, not of the increment
    slack = 8 * np.finfo(float).eps * (abs(u) + 2.0) * w.total
    assert eval_w(w, v) - eval_w(w, u) >= w.drift * (v - u) - slack


@settings(max_examples=60, deadline=None)
@given(specs, st.floats(-3, 3))
def test_periodicity(w, u):
    assume((u + 1.0) - 1.0 == u)  # the shift itself must not round onto an atom
    assert eval_w(w, u + 1.0) - eval_w(w, u) == pytest.approx(w.total, rel=1e-12, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(specs, st.lists(st.floats(-2, 2), min_size=3, max_size=3, unique=True))
def test_additivity(w, pts):
    a, b, c = sorted(pts)
    total = increment(w, a, b) + increment(w, b, c)
    assert total == pytest.approx(increment(w, a, c), rel=1e-12, abs=1e-12)
