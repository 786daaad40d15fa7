from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

from wexclusion import _backend, _kmc_py
from wexclusion.particle import ProcessParams, RateIndex, advance, sample_initial
from wexclusion.rng import splitmix64, stream_key, uniform53
from wexclusion.wfun import WSpec

compiled = pytest.mark.skipif(_backend.BACKEND != "cython", reason="compiled kernel not built")


def test_splitmix64_reference_vector():
    # first outputs for seed 1234567 from the published reference implementation
    state = 1234567
    outs = []
    for _ in range(3):
        state, z = splitmix64(state)
        outs.append(z)
    assert outs == [6457827717110365317, 3203168211198807973, 9817491932198370423]


def test_uniform53_range():
    assert uniform53(0) == 0.0
    assert uniform53(2**64 - 1) < 1.0


def test_stream_keys_distinct():
    keys = {stream_key(1, r, p) for r in range(20) for p in (1, 2, 3)}
    assert len(keys) == 60
    assert stream_key(2**70 + 5, 0, 1) != stream_key(5, 0, 1)


@compiled
@pytest.mark.parametrize("a", [0.0, 0.3, -0.49])
def test_kernels_bit_identical(a):
    w = WSpec(0.7, ((0.25, 0.4), (0.6, 1.3)))
    params = ProcessParams(a, w, 48, seed=17)
    res = []
    for name in ("cython", "python"):
        eta = sample_initial(0.4, 48, 17, replica=1)
        clock = RateIndex(params, eta, replica=1, backend=name)
        for t in (0.005, 0.01, 0.02):
            advance(params, eta, clock, t)
        res.append((eta.occupancy.tobytes(), clock.state, clock.events, clock.time,
                    clock.pending, clock.tree.tobytes()))
    assert res[0] == res[1]


@compiled
def test_kernels_agree_across_rebuild(monkeypatch):
    # a small rebuild period exercises the periodic full rebuild in both kernels
    w = WSpec(1.0, ((0.5, 1.0),))
    params = ProcessParams(0.3, w, 32, seed=1)
    states = []
    for name in ("cython", "python"):
        eta = sample_initial(0.5, 32, 1)
        clock = RateIndex(params, eta, backend=name)
        clock.since_rebuild = _kmc_py.REBUILD_EVERY - 50
        advance(params, eta, clock, np.inf, max_events=200)
        states.append((eta.occupancy.tobytes(), clock.state, clock.since_rebuild))
    assert states[0] == states[1]
    assert states[0][2] == 150


def test_env_var_forces_python():
    env = dict(os.environ, WEXCLUSION_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "from wexclusion import _backend; print(_backend.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_unknown_backend():
    with pytest.raises(ValueError):
        _backend.get_kernel("fortran")
