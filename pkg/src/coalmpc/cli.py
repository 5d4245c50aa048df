"""Command-line driver: design, simulate, partitions, consensus, regions."""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .closed_loop import DesignCache, InitialInfeasible, SimulationError, SwitchConfig, run
from .game import ConsensusGame, Profile
from .mpc import is_feasible_with_margin, is_strongly_feasible
from .partitions import bell, covers, enumerate_partitions
from .rci import PartitionDesignInfeasible
from .scenario import ScenarioError, load

EXIT_SCHEMA = 2
EXIT_INFEASIBLE = 3


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return str(v)


def _round(obj):
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(f"{float(obj):.9g}")
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


class _Out:
    """CSV/text sink on stdout or a file inside ``--out-dir``."""

    def __init__(self, out_dir, name):
        self.path = None if out_dir is None else Path(out_dir) / name
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.fh = open(self.path, "w", newline="")
        else:
            self.fh = sys.stdout

    def csv(self):
        return csv.writer(self.fh, lineterminator="\n")

    def close(self):
        if self.path:
            self.fh.close()


def _partitions_arg(sc, names):
    if names is None:
        return enumerate_partitions(sc.system.M)
    return [sc.partition(n) for n in names]


def cmd_design(args):
    sc = load(args.scenario)
    parts = _partitions_arg(sc, args.partition)
    out = _Out(args.out_dir, "design.csv")
    w = out.csv()
    w.writerow(["key", "label", "partition", "status", "coalitions"])
    cache = DesignCache(sc.system, sc.design)
    for C in parts:
        try:
            d = cache.get(C)
            cells = []
            for c in C.blocks:
                f = d[c]
                vals = "/".join(fmt(getattr(f, k)) for k in
                                ("alpha_x", "alpha_u", "beta_x", "beta_u", "xi_x", "xi_u"))
                cells.append("{" + ",".join(str(i + 1) for i in c) + "}:" + vals)
            w.writerow([C.key, sc.label_of(C), str(C), "ok", ";".join(cells)])
        except PartitionDesignInfeasible as exc:
            blk = "{" + ",".join(str(i + 1) for i in exc.block) + "}"
            w.writerow([C.key, sc.label_of(C), str(C), f"infeasible@{exc.stage}", blk])
    out.close()
    return 0


def cmd_simulate(args):
    sc = load(args.scenario)
    cache = DesignCache(sc.system, sc.design)
    try:
        if args.mode == "fixed":
            C = sc.partition(args.partition or "dec")
            x0 = sc.fixed_x0
            T = args.steps or sc.fixed_T
            res = run(sc.system, x0, T, C, sc.game, SwitchConfig(enabled=False), sc.mpc, sc.design,
                      designs=cache)
        else:
            T = args.steps or sc.T
            res = run(sc.system, sc.x0, T, sc.initial_partition, sc.game, sc.switch, sc.mpc, sc.design,
                      opinions=sc.opinions, designs=cache)
    except InitialInfeasible as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    n, m = sc.system.n, sc.system.m
    out = _Out(args.out_dir, "trajectory.csv")
    w = out.csv()
    w.writerow(["time"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)]
               + ["partition_key", "V_bar_total", "V_hat_total", "switch_flag"])
    for k in range(len(res.inputs)):
        w.writerow([k] + [fmt(v) for v in res.states[k]] + [fmt(v) for v in res.inputs[k]]
                   + [res.partitions[k], fmt(res.v_bar[k]), fmt(res.v_hat[k]), fmt(res.switch_flags[k])])
    out.close()
    summary = _round(res.summary())
    summary["rejected"] = [list(r) for r in res.rejected]
    text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    if args.out_dir:
        (Path(args.out_dir) / "summary.json").write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_partitions(args):
    if not 1 <= args.M <= 8:
        print("error: M must be in [1, 8]", file=sys.stderr)
        return EXIT_SCHEMA
    out = _Out(args.out_dir, "partitions.jsonl")
    for C in enumerate_partitions(args.M):
        out.fh.write(json.dumps({"node": C.key, "partition": str(C), "blocks": len(C)}) + "\n")
    for fine, coarse in covers(args.M):
        out.fh.write(json.dumps({"edge": [fine.key, coarse.key]}) + "\n")
    out.close()
    assert len(enumerate_partitions(args.M)) == bell(args.M)
    return 0


def cmd_consensus(args):
    sc = load(args.scenario)
    x = sc.x0 if args.state is None else np.asarray(args.state, dtype=float)
    if x.size != sc.system.n:
        print(f"error: state needs {sc.system.n} entries", file=sys.stderr)
        return EXIT_SCHEMA
    init = sc.opinions or Profile.consensus(sc.initial_partition)
    game = ConsensusGame(sc.system, sc.game)
    res = game.run_consensus(init, x)
    out = _Out(args.out_dir, "consensus.csv")
    w = out.csv()
    w.writerow(["update", "player", "partition_key", "partition", "local_cost", "potential"])
    w.writerow([0, "", "", str(init), "", fmt(game.potential(init, x))])
    for mv in res.trace:
        w.writerow([mv.update, mv.player + 1, mv.after.key, str(mv.after), fmt(mv.cost_after), fmt(mv.potential)])
    agreed = game.agreed_partition(res.final)
    print(f"# converged={int(res.converged)} agreed={'' if agreed is None else agreed.key}", file=sys.stderr)
    out.close()
    return 0


def cmd_regions(args):
    sc = load(args.scenario)
    sysm = sc.system
    parts = _partitions_arg(sc, args.partition or ["cen", "dec"] + [k for k in ("C2",) if k in sc.labels])
    axes = args.axes if args.axes else list(range(min(sysm.n, 3)))
    if any(not 0 <= a < sysm.n for a in axes):
        print("error: axis out of range", file=sys.stderr)
        return EXIT_SCHEMA
    base = np.zeros(sysm.n) if args.base is None else np.asarray(args.base, dtype=float)
    if base.size != sysm.n:
        print(f"error: --base needs {sysm.n} entries", file=sys.stderr)
        return EXIT_SCHEMA
    cache = DesignCache(sysm, sc.design)
    designs = {}
    for C in parts:
        try:
            designs[C.key] = cache.get(C)
        except PartitionDesignInfeasible:
            designs[C.key] = None
    hw = sysm.X.halfwidths
    if args.radius is None:
        grids = [np.linspace(-hw[a], hw[a], args.grid_resolution) for a in axes]
    else:
        grids = [np.linspace(max(-hw[a], base[a] - args.radius), min(hw[a], base[a] + args.radius),
                             args.grid_resolution) for a in axes]
    out = _Out(args.out_dir, "regions.csv")
    w = out.csv()
    header = [f"x{a + 1}" for a in axes]
    for C in parts:
        header += [f"{sc.label_of(C)}_strong", f"{sc.label_of(C)}_margin"]
    w.writerow(header)
    N, H = sc.mpc.N, sc.mpc.H
    for point in itertools.product(*grids):
        x = base.copy()
        x[axes] = point
        row = [fmt(v) for v in point]
        for C in parts:
            d = designs[C.key]
            if d is None:
                row += ["0", "0"]
                continue
            strong = is_strongly_feasible(sysm, C, d, x, N)
            margin = strong or is_feasible_with_margin(sysm, C, d, x, N, H)
            row += [fmt(strong), fmt(margin)]
        w.writerow(row)
    out.close()
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="coalmpc", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design", help="scaling factors for each partition (CSV)")
    d.add_argument("--scenario", required=True)
    d.add_argument("--partition", nargs="*", default=None, help="labels or {1,2},{3} forms; default all")
    d.add_argument("--out-dir")
    d.set_defaults(fn=cmd_design)

    s = sub.add_parser("simulate", help="closed-loop run (CSV trajectory + JSON summary)")
    s.add_argument("--scenario", required=True)
    s.add_argument("--mode", choices=["fixed", "switching"], default="switching")
    s.add_argument("--partition", help="partition for --mode fixed (default decentralized)")
    s.add_argument("--steps", type=int, help="override the scenario horizon")
    s.add_argument("--out-dir")
    s.set_defaults(fn=cmd_simulate)

    q = sub.add_parser("partitions", help="partition lattice as JSON lines")
    q.add_argument("--M", type=int, required=True)
    q.add_argument("--out-dir")
    q.set_defaults(fn=cmd_partitions)

    c = sub.add_parser("consensus", help="best-response trace (CSV)")
    c.add_argument("--scenario", required=True)
    c.add_argument("--state", type=float, nargs="+")
    c.add_argument("--out-dir")
    c.set_defaults(fn=cmd_consensus)

    r = sub.add_parser("regions", help="feasibility flags on a state grid (CSV)")
    r.add_argument("--scenario", required=True)
    r.add_argument("--partition", nargs="*", default=None)
    r.add_argument("--axes", type=int, nargs="+", help="0-based state coordinates to grid")
    r.add_argument("--base", type=float, nargs="+", help="full state: fixed values off the grid, grid centre with --radius")
    r.add_argument("--radius", type=float, help="grid the cube base +- radius instead of the whole box")
    r.add_argument("--grid-resolution", type=int, default=11)
    r.add_argument("--out-dir")
    r.set_defaults(fn=cmd_regions)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.fn(args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
