"""Compiled event loop versus the pure-Python fallback.

Both backends consume the same per-replicate streams, so besides timing the
script checks that they produce identical trajectories.

    python benchmarks/bench_core.py --side 15 --horizon 2 --replicates 3
"""

import argparse
import time

import numpy as np

from brwclt import simulate as sim
from brwclt.rates import BranchingRate
from brwclt.simulate import SimParams, simulate_replicate
from brwclt.walk import simple_random_walk


def time_backend(params, replicates):
    trajs, elapsed = [], 0.0
    for r in range(replicates):
        t0 = time.perf_counter()
        trajs.append(simulate_replicate(params, r))
        elapsed += time.perf_counter() - t0
    events = sum(t.events for t in trajs)
    return trajs, elapsed, events


def same(a, b):
    return (a.events == b.events and np.array_equal(a.times, b.times) and np.array_equal(a.kinds, b.kinds)
            and np.array_equal(a.final.occupancy, b.final.occupancy))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--side", type=int, default=15, help="odd torus side")
    ap.add_argument("--horizon", type=float, default=2.0)
    ap.add_argument("--replicates", type=int, default=3)
    ap.add_argument("--rate", choices=("independent", "capped"), default="independent")
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args(argv)
    if not sim.HAVE_COMPILED:
        raise SystemExit("compiled core not built; run `pip install -e . --no-build-isolation` first")
    rate = BranchingRate.independent(1.0) if args.rate == "independent" else \
        BranchingRate.tabulated([0, 1, 2, 3, 4, 5], slope=0.0)
    results = {}
    for backend in ("compiled", "python"):
        p = SimParams(simple_random_walk(3), rate, 1.0, args.side, args.horizon, args.seed, backend=backend)
        results[backend] = time_backend(p, args.replicates)
    print(f"d=3 SRW, {args.rate} branching, side {args.side}, horizon {args.horizon:g}, "
          f"{args.replicates} replicates")
    print(f"{'backend':>10} {'events':>12} {'seconds':>10} {'ns/event':>10}")
    for name, (_, secs, ev) in results.items():
        print(f"{name:>10} {ev:12d} {secs:10.3f} {1e9 * secs / ev:10.1f}")
    c, p = results["compiled"], results["python"]
    print(f"speedup {p[1] / c[1]:.1f}x")
    identical = all(same(a, b) for a, b in zip(c[0], p[0]))
    print("trajectories identical:", identical)
    return 0 if identical else 1


if __name__ == "__main__":
    raise SystemExit(main())
