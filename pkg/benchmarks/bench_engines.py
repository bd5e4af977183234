#!/usr/bin/env python3
"""Compare the compiled and pure-Python event engines.

Runs the two-atom benchmark model on both backends across system sizes and
reports per-event cost (minimum over repeats, which suppresses scheduler
noise). The pure-Python engine is typically two orders of magnitude slower
per event; its sizes are scaled down so the suite stays quick.
"""

import argparse
import time

from rankflow import InitialProfile, JumpRateLaw, init
from rankflow.simulator import HAVE_COMPILED


def per_event_ns(profile, backend, n, events, seed, repeats):
    horizon = events / (n * 1.5)
    best = None
    for rep in range(repeats):
        state = init(profile, n, seed + rep, backend=backend)
        t0 = time.perf_counter()
        state.advance_to(horizon)
        cost = (time.perf_counter() - t0) / state.total_events * 1e9
        best = cost if best is None else min(best, cost)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--events", type=int, default=2_000_000,
                        help="events per compiled-engine run")
    parser.add_argument("--py-events", type=int, default=200_000,
                        help="events per pure-Python run")
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    profile = InitialProfile.factorized(
        JumpRateLaw.from_atoms([(1.0, 0.5), (2.0, 0.5)])
    )

    print(f"{'backend':<10} {'N':>9} {'events':>9} {'ns/event':>9}")
    results = {}
    if HAVE_COMPILED:
        for n in (10**4, 10**5, 10**6):
            cost = per_event_ns(profile, "compiled", n, args.events, args.seed,
                                args.repeats)
            results[("compiled", n)] = cost
            print(f"{'compiled':<10} {n:>9} {args.events:>9} {cost:>9.0f}")
    else:
        print("compiled engine not available (build the extension)")
    for n in (10**4, 10**5):
        cost = per_event_ns(profile, "python", n, args.py_events, args.seed,
                            args.repeats)
        results[("python", n)] = cost
        print(f"{'python':<10} {n:>9} {args.py_events:>9} {cost:>9.0f}")

    if ("compiled", 10**5) in results:
        speedup = results[("python", 10**5)] / results[("compiled", 10**5)]
        print(f"\ncompiled speedup at N=1e5: {speedup:.0f}x")
        big = results[("compiled", 10**6)] / results[("compiled", 10**5)]
        print(f"compiled per-event growth 1e5 -> 1e6: {big:.2f}x")


if __name__ == "__main__":
    main()
