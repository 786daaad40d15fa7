"""Events per second of the compiled and pure-Python KMC kernels.

Both kernels run the same trajectory (same seed, same event stream), so the
comparison is per event. Usage: ``python benchmarks/bench_kmc.py [--n 256]``.
"""

from __future__ import annotations

import argparse
import time

from wexclusion import _backend
from wexclusion.particle import ProcessParams, RateIndex, advance, sample_initial
from wexclusion.wfun import WSpec


def time_kernel(name: str, n: int, events: int, seed: int) -> tuple[float, bytes]:
    params = ProcessParams(0.3, WSpec(1.0, ((0.5, 1.0),)), n, seed)
    eta = sample_initial(0.5, n, seed)
    clock = RateIndex(params, eta, backend=name)
    start = time.perf_counter()
    advance(params, eta, clock, float("inf"), max_events=events)
    elapsed = time.perf_counter() - start
    return elapsed / clock.events, eta.occupancy.tobytes()


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=256)
    ap.add_argument("--events", type=int, default=200_000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    py, py_state = time_kernel("python", args.n, args.events, args.seed)
    print(f"python  {py * 1e9:10.1f} ns/event")
    if _backend.BACKEND != "cython":
        print("cython  not built")
        return
    cy, cy_state = time_kernel("cython", args.n, args.events, args.seed)
    print(f"cython  {cy * 1e9:10.1f} ns/event")
    print(f"speedup {py / cy:10.1f}x   same final state: {py_state == cy_state}")


if __name__ == "__main__":
    main()
