"""Pure-Python KMC kernel. Must stay bit-compatible with ``_kmc_cy.pyx``."""

from __future__ import annotations

import math

import numpy as np

REBUILD_EVERY = 1 << 20

_MASK = 0xFFFF_FFFF_FFFF_FFFF
_GAMMA = 0x9E37_79B9_7F4A_7C15
_M1 = 0xBF58_476D_1CE4_E5B9
_M2 = 0x94D0_49BB_1331_11EB
_INV53 = 1.0 / 9007199254740992.0


def bond_rate(eta, xi, a, n2, n, y):
    yp1 = y + 1 if y + 1 < n else 0
    if eta[y] == eta[yp1]:
        return 0.0
    ym1 = y - 1 if y > 0 else n - 1
    yp2 = yp1 + 1 if yp1 + 1 < n else 0
    return n2 * xi[y] * (1.0 + a * float(eta[ym1] + eta[yp2]))


def rebuild(eta, xi, a, n2, tree, size):
    """Recompute every leaf and internal node of the sum tree in place."""
    n = len(eta)
    e = [int(v) for v in eta]
    x = [float(v) for v in xi]
    t = [0.0] * (2 * size)
    for y in range(n):
        t[size + y] = bond_rate(e, x, a, n2, n, y)
    for i in range(size - 1, 0, -1):
        t[i] = t[2 * i] + t[2 * i + 1]
    tree[:] = t


def run_events(eta, xi, a, n2, tree, size, state, t, pending, t_target,
               events, since_rebuild, max_events=-1):
    """Advance the chain to ``t_target``.

    ``pending < 0`` means no waiting time has been drawn yet. Returns
    ``(t, pending, state, events, since_rebuild)``; ``eta`` and ``tree`` are
    updated in place.
    """
    n = len(eta)
    e = [int(v) for v in eta]
    x = [float(v) for v in xi]
    tr = tree.tolist()
    mask, gamma, m1, m2, inv53 = _MASK, _GAMMA, _M1, _M2, _INV53
    log = math.log
    done = 0
    while True:
        if pending < 0.0:
            total = tr[1]
            if total <= 0.0:
                pending = math.inf
            else:
                state = (state + gamma) & mask
                z = state
                z = ((z ^ (z >> 30)) * m1) & mask
                z = ((z ^ (z >> 27)) * m2) & mask
                z ^= z >> 31
                u = 1.0 - (z >> 11) * inv53
                pending = t - log(u) / total
        if pending > t_target or done == max_events:
            t = t_target if pending > t_target else t
            break
        t = pending
        pending = -1.0
        state = (state + gamma) & mask
        z = state
        z = ((z ^ (z >> 30)) * m1) & mask
        z = ((z ^ (z >> 27)) * m2) & mask
        z ^= z >> 31
        v = (z >> 11) * inv53 * tr[1]
        i = 1
        while i < size:
            left = tr[2 * i]
            if v >= left and tr[2 * i + 1] > 0.0:
                v -= left
                i = 2 * i + 1
            else:
                i = 2 * i
        b = i - size
        bp1 = b + 1 if b + 1 < n else 0
        e[b], e[bp1] = e[bp1], e[b]
        for k in range(-2, 3):
            y = (b + k) % n
            j = size + y
            tr[j] = bond_rate(e, x, a, n2, n, y)
            j >>= 1
            while j >= 1:
                tr[j] = tr[2 * j] + tr[2 * j + 1]
                j >>= 1
        events += 1
        done += 1
        since_rebuild += 1
        if since_rebuild >= REBUILD_EVERY:
            eta[:] = e
            rebuild(eta, xi, a, n2, tree, size)
            tr = tree.tolist()
            since_rebuild = 0
    eta[:] = e
    tree[:] = np.asarray(tr)
    return t, pending, state, events, since_rebuild
