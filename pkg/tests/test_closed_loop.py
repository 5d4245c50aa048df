import numpy as np
import pytest

from coalmpc.closed_loop import (InitialInfeasible, SwitchConfig, fixed_partition_run, run,
                                 stability_monitor)
from coalmpc.game import Profile
from coalmpc.mpc import is_strongly_feasible
from coalmpc.partitions import Partition


def test_switch_config_validation():
    with pytest.raises(ValueError):
        SwitchConfig(min_dwell=0)


def test_zero_state_stays_zero(three, three_designs):
    res = fixed_partition_run(three.system, np.zeros(3), 10, Partition.decentralized(3), three.mpc,
                              three.design, designs=three_designs)
    assert res.V_T == 0.0
    assert all(np.all(x == 0) for x in res.states)
    mon = stability_monitor(res)
    assert mon["degenerate"] and mon["mu_hat"] is None


def test_infeasible_start_raises(three, three_designs):
    with pytest.raises(InitialInfeasible):
        fixed_partition_run(three.system, np.array([1.99, 1.99, 1.99]), 5, Partition.decentralized(3),
                            three.mpc, three.design, designs=three_designs)
    with pytest.raises(ValueError):
        fixed_partition_run(three.system, np.zeros(2), 5, Partition.decentralized(3), three.mpc)


def test_margin_start_becomes_strongly_feasible_and_stays(three, three_designs):
    C = three.partition("C2")
    res = fixed_partition_run(three.system, three.x0, 30, C, three.mpc, three.design, designs=three_designs)
    assert res.start_mode == "margin" and res.violations == 0
    d = three_designs.get(C)
    flags = [is_strongly_feasible(three.system, C, d, x, three.mpc.N) for x in res.states]
    first = flags.index(True)
    assert all(flags[first:])


def test_switching_run_on_three_scalar(three, three_designs):
    res = run(three.system, three.x0, three.T, three.initial_partition, three.game, three.switch, three.mpc,
              three.design, opinions=three.opinions, designs=three_designs)
    assert res.violations == 0
    assert np.linalg.norm(res.states[-1]) < 1e-6
    for ev in res.switches:
        assert ev.strongly_feasible and ev.dwell >= three.switch.min_dwell
        x = res.states[ev.k]
        after = Partition.from_rgs([int(ch, 36) for ch in ev.after])
        assert is_strongly_feasible(three.system, after, three_designs.get(after), x, three.mpc.N)


def test_dwell_time_blocks_early_switches(three, three_designs):
    cfg = SwitchConfig(min_dwell=5)
    res = run(three.system, three.x0, 12, three.initial_partition, three.game, cfg, three.mpc, three.design,
              opinions=three.opinions, designs=three_designs)
    assert all(ev.dwell >= 5 for ev in res.switches)
    assert any(r[2] == "dwell" for r in res.rejected) or not res.switches


def test_selection_period_limits_switch_instants(three, three_designs):
    cfg = SwitchConfig(selection_period=4)
    res = run(three.system, three.x0, 12, three.initial_partition, three.game, cfg, three.mpc, three.design,
              opinions=three.opinions, designs=three_designs)
    assert all(ev.k % 4 == 0 for ev in res.switches)


def test_runs_are_deterministic(three, three_designs):
    args = (three.system, three.x0, 10, three.initial_partition, three.game, three.switch, three.mpc, three.design)
    a = run(*args, opinions=three.opinions, designs=three_designs)
    b = run(*args, opinions=three.opinions)
    assert np.array_equal(np.array(a.states), np.array(b.states))
    assert a.partitions == b.partitions


def test_nominal_value_decreases_on_fixed_run(three, three_designs):
    res = fixed_partition_run(three.system, np.array([0.5, -0.5, 0.5]), 15, Partition.decentralized(3),
                              three.mpc, three.design, designs=three_designs)
    v, s = res.v_bar, res.nominal_stage
    for k in range(len(v) - 1):
        assert v[k + 1] <= v[k] - s[k] + 1e-9


def test_cost_aggregates_for_fixed_partition(four, four_designs):
    res = fixed_partition_run(four.system, four.fixed_x0, 5, Partition.centralized(4), four.mpc, four.design,
                              four.game, designs=four_designs)
    assert res.link_cost == pytest.approx(1.2)
    summary = res.summary()
    assert set(summary) >= {"V_T", "J_inf", "power_cost", "link_cost", "switches", "stability"}


def test_no_agreement_falls_back_to_initial_partition(three, three_designs):
    ops = Profile((Partition.parse("{1,2,3}"), Partition.parse("{1},{2},{3}"), Partition.parse("{1,2,3}")))
    res = run(three.system, np.zeros(3), 2, Partition.decentralized(3), three.game, three.switch, three.mpc,
              three.design, opinions=ops, designs=three_designs)
    assert len(res.partitions) == 2
