import numpy as np
import pytest

from coalmpc.controller import (ADOPT_TOL, CoalitionController, PrimaryInfeasible, margin_initialize,
                                reinitialize, step)
from coalmpc.partitions import Partition
from coalmpc.system import build_coalition


def controllers(sc, cache, C, x, margin=False):
    d = cache.get(C)
    out = {}
    for c in C.blocks:
        coal = build_coalition(sc.system, C, c)
        xc = x[coal.x_index]
        st = margin_initialize(coal, d[c], xc, sc.mpc.N, sc.mpc.H) if margin else reinitialize(xc, sc.mpc.N)
        out[c] = CoalitionController(coal, d[c], sc.mpc.N, sc.mpc.H, st)
    return out


def advance(sc, ctrls, x):
    prims = {c: k.solve_primary() for c, k in ctrls.items()}
    plans = {c: p.x_seq for c, p in prims.items()}
    secs = {c: k.solve_secondary(plans) for c, k in ctrls.items()}
    u = np.zeros(sc.system.m)
    tele = {}
    for c, k in ctrls.items():
        uc, tele[c] = k.control(x[k.coal.x_index])
        u[k.coal.u_index] = uc
    return sc.system.A @ x + sc.system.B @ u, u, prims, secs, tele


def test_reinitialize_state():
    st = reinitialize([1.0, 2.0], 3)
    assert st.e_bar.tolist() == [0, 0] and st.w_seq.shape == (4, 2) and st.v_hat == np.inf


def test_state_split_tracks_true_state(three, three_designs):
    """x = x_bar + e_bar + e_hat holds by construction after every step."""
    C = three.partition("C2")
    x = three.x0.copy()
    ctrls = controllers(three, three_designs, C, x, margin=True)
    for _ in range(10):
        x, *_ = advance(three, ctrls, x)
        for c, k in ctrls.items():
            e_hat = x[k.coal.x_index] - k.state.x_bar - k.state.e_bar
            _, lam = k.selector(e_hat)
            assert lam <= 1 + 1e-9


def test_v_hat_bound_decreases_by_stage_cost(three, three_designs):
    C = Partition.decentralized(3)
    x = np.array([0.5, -0.5, 0.5])
    ctrls = controllers(three, three_designs, C, x)
    for _ in range(8):
        before = {c: k for c, k in ctrls.items()}
        x, u, prims, secs, tele = advance(three, ctrls, x)
        for c, k in before.items():
            s = secs[c]
            stage = float(s.e_seq[0] @ k.coal.Q @ s.e_seq[0] + s.f_seq[0] @ k.coal.R @ s.f_seq[0])
            assert k.state.v_hat == pytest.approx(tele[c].v_hat_bound - stage, abs=1e-12)
            assert s.value <= tele[c].v_hat_bound + ADOPT_TOL * max(1.0, s.value) or tele[c].branch == "stored"


def test_candidate_rejected_when_value_exceeds_bound(three, three_designs):
    C = Partition.decentralized(3)
    x = np.array([0.5, -0.5, 0.5])
    ctrls = controllers(three, three_designs, C, x)
    advance(three, ctrls, x)
    k = ctrls[(2,)]
    k.state = type(k.state)(k.state.x_bar, k.state.e_bar + 0.01, k.state.w_seq, -1.0)
    k.solve_primary()
    plans = {c: kk.solve_primary().x_seq for c, kk in ctrls.items()}
    k.solve_secondary(plans)
    assert k._branch == "stored"


def test_primary_infeasible_is_reported(three, three_designs):
    C = Partition.decentralized(3)
    ctrls = controllers(three, three_designs, C, np.array([1.9, 0.0, 0.0]))
    with pytest.raises(PrimaryInfeasible):
        ctrls[(0,)].solve_primary()


def test_functional_step_matches_object(three, three_designs):
    C = three.partition("C2")
    d = three_designs.get(C)
    coal = build_coalition(three.system, C, (0, 1))
    st = reinitialize(np.array([0.3, -0.2]), 1)
    u, st2, tele = step(st, coal, d[(0, 1)], {}, np.array([0.3, -0.2]), 1, 2)
    k = CoalitionController(coal, d[(0, 1)], 1, 2, st)
    k.solve_primary(); k.solve_secondary({})
    u2, _ = k.control(np.array([0.3, -0.2]))
    assert np.allclose(u, u2) and np.allclose(st2.x_bar, k.state.x_bar)
    assert tele.branch == "candidate"
