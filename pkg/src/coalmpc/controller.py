"""Online three-term controller of a single coalition.

Per step: solve the nominal problem, exchange nominal plans, solve the
planned-error problem (candidate plan first, stored plan as fallback), then
add the tube correction for the unplanned error.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mpc import Infeasible, margin_split, solve_primary, solve_secondary
from .rci import TubeSelector

# ties in the value comparison are resolved in favour of the candidate
ADOPT_TOL = 1e-9


class ControllerError(RuntimeError):
    pass


class PrimaryInfeasible(ControllerError):
    pass


class SecondaryInfeasible(ControllerError):
    pass


@dataclass(frozen=True, eq=False)
class ControllerState:
    x_bar: np.ndarray
    e_bar: np.ndarray
    w_seq: np.ndarray  # (N+1) x n, last row zero
    v_hat: float


def reinitialize(x_c, N: int) -> ControllerState:
    x_c = np.asarray(x_c, dtype=float).ravel().copy()
    return ControllerState(x_c, np.zeros_like(x_c), np.zeros((N + 1, x_c.size)), np.inf)


def margin_initialize(coal, design, x_c, N: int, H: int) -> ControllerState:
    """Start from a split ``x = x_bar + e_bar`` when ``x`` is not strongly feasible."""
    split = margin_split(coal, design, x_c, N, H)
    return ControllerState(split.x_bar.copy(), split.e_bar.copy(), np.zeros((N + 1, coal.n)), np.inf)


@dataclass(frozen=True)
class Telemetry:
    branch: str  # "candidate" or "stored"
    v_bar: float
    v_hat_value: float
    v_hat_bound: float
    nominal_stage: float
    lam: float
    out_of_tube: bool
    x_bar: tuple
    e_bar: tuple
    e_hat: tuple


class CoalitionController:
    """Algorithm state for one coalition, split into the three barrier phases."""

    def __init__(self, coal, design, N: int, H: int, state: ControllerState):
        self.coal, self.design, self.N, self.H = coal, design, N, H
        self.state = state
        self.selector = TubeSelector(design.unplanned)
        self._primary = None
        self._secondary = None
        self._branch = None
        self._v_hat = None

    def solve_primary(self):
        try:
            self._primary = solve_primary(self.coal, self.design, self.state.x_bar, self.N)
        except Infeasible as exc:
            raise PrimaryInfeasible(f"coalition {self.coal.members}: nominal problem infeasible") from exc
        return self._primary

    @property
    def plan(self) -> np.ndarray:
        return self._primary.x_seq

    def candidate_disturbance(self, plans: dict) -> np.ndarray:
        w = np.zeros((self.N + 1, self.coal.n))
        for d, Acd in self.coal.couplings.items():
            w += plans[d] @ Acd.T
        w[-1] = 0.0  # neighbours' plans end at the origin
        return w

    def solve_secondary(self, plans: dict):
        st = self.state
        w0 = self.candidate_disturbance(plans)
        self._v_hat = st.v_hat
        try:
            sol = solve_secondary(self.coal, self.design, st.e_bar, w0, self.H)
            if sol.value <= st.v_hat + ADOPT_TOL * max(1.0, sol.value):
                self.state = ControllerState(st.x_bar, st.e_bar, w0, sol.value)
                self._secondary, self._branch, self._v_hat = sol, "candidate", sol.value
                return sol
        except Infeasible:
            pass
        try:
            sol = solve_secondary(self.coal, self.design, st.e_bar, st.w_seq, self.H)
        except Infeasible as exc:
            raise SecondaryInfeasible(
                f"coalition {self.coal.members}: both planned-error problems infeasible") from exc
        self._secondary, self._branch = sol, "stored"
        return sol

    def control(self, x_c) -> tuple:
        """Apply the three-term law at measured ``x_c`` and advance the internal state."""
        st = self.state
        p, s = self._primary, self._secondary
        e_hat = np.asarray(x_c, dtype=float) - st.x_bar - st.e_bar
        f_hat, lam = self.selector(e_hat)
        u = p.u_seq[0] + s.f_seq[0] + f_hat
        A, B, Q, R = self.coal.A, self.coal.B, self.coal.Q, self.coal.R
        nominal_stage = float(st.x_bar @ Q @ st.x_bar + p.u_seq[0] @ R @ p.u_seq[0])
        error_stage = float(st.e_bar @ Q @ st.e_bar + s.f_seq[0] @ R @ s.f_seq[0])
        tele = Telemetry(self._branch, p.value, s.value, self._v_hat, nominal_stage, lam, lam > 1.0 + 1e-9,
                         tuple(st.x_bar), tuple(st.e_bar), tuple(e_hat))
        w_next = np.vstack([st.w_seq[1:], np.zeros((1, self.coal.n))])
        self.state = ControllerState(
            A @ st.x_bar + B @ p.u_seq[0],
            A @ st.e_bar + B @ s.f_seq[0] + st.w_seq[0],
            w_next,
            st.v_hat - error_stage,
        )
        self._primary = self._secondary = None
        return u, tele


def step(ctrl: ControllerState, coal, design, neighbor_plans: dict, x_c, N: int, H: int):
    """One full step for a coalition whose neighbours' plans are already known."""
    c = CoalitionController(coal, design, N, H, ctrl)
    c.solve_primary()
    c.solve_secondary(neighbor_plans)
    u, tele = c.control(x_c)
    return u, c.state, tele
