"""Feasibility regions of the three-subsystem example on a state grid.

Counts grid states feasible (strongly, or with an error margin) for each
partition, and lists states feasible for one partition but neither
extreme, which shows the regions are not nested.
"""
import argparse
import itertools

import numpy as np

from coalmpc.closed_loop import DesignCache
from coalmpc.mpc import is_feasible_with_margin, is_strongly_feasible
from coalmpc.partitions import enumerate_partitions
from coalmpc.scenario import load


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default="three_scalar")
    ap.add_argument("--grid-resolution", type=int, default=11)
    ap.add_argument("--center", type=float, nargs="+", help="grid centre (default: origin)")
    ap.add_argument("--radius", type=float, help="half side of the grid cube (default: the state box)")
    args = ap.parse_args(argv)
    sc = load(args.scenario)
    S, N, H = sc.system, sc.mpc.N, sc.mpc.H
    cache = DesignCache(S, sc.design)
    parts = enumerate_partitions(S.M)
    designs = {C: cache.get(C) for C in parts}
    hw = S.X.halfwidths
    c = np.zeros(S.n) if args.center is None else np.asarray(args.center, dtype=float)
    r = hw if args.radius is None else np.full(S.n, args.radius)
    g = [np.linspace(max(-h, ci - ri), min(h, ci + ri), args.grid_resolution) for h, ci, ri in zip(hw, c, r)]
    counts = {C: 0 for C in parts}
    exclusive = []
    cen, dec = parts[0], parts[-1]
    for x in itertools.product(*g):
        x = np.array(x)
        ok = {C: is_strongly_feasible(S, C, designs[C], x, N) or is_feasible_with_margin(S, C, designs[C], x, N, H)
              for C in parts}
        for C, v in ok.items():
            counts[C] += v
        if not ok[cen] and not ok[dec]:
            exclusive += [(x, C) for C in parts if ok[C]]
    for C in parts:
        print(f"{sc.label_of(C):4s} {str(C):14s} feasible at {counts[C]} grid states")
    print(f"{len(exclusive)} (state, partition) pairs feasible for a partition but neither extreme")
    for x, C in exclusive[:10]:
        print(f"  {np.round(x, 4).tolist()}  {sc.label_of(C)}")


if __name__ == "__main__":
    main()
