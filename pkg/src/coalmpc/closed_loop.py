"""Closed-loop simulation with time-varying coalitions."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._parallel import pmap
from .controller import CoalitionController, ControllerError, margin_initialize, reinitialize
from .game import ConsensusGame, GameConfig, Profile
from .mpc import MpcConfig, is_feasible_with_margin, is_strongly_feasible
from .partitions import Partition
from .rci import PartitionDesignInfeasible, design_partition
from .system import SystemModel, build_coalition

log = logging.getLogger(__name__)

CONSTRAINT_TOL = 1e-7


@dataclass(frozen=True)
class SwitchConfig:
    selection_period: int = 1
    min_dwell: int = 1
    enabled: bool = True

    def __post_init__(self):
        if self.selection_period < 1 or self.min_dwell < 1:
            raise ValueError("selection_period and min_dwell must be >= 1")


@dataclass(frozen=True)
class DesignConfig:
    h_margin: int = 0
    q_eta: float = 1.0
    q_theta: float = 1.0
    w_hat: str = "exact"


class InitialInfeasible(Exception):
    pass


class SimulationError(RuntimeError):
    def __init__(self, k, cause, partial):
        self.k, self.partial = k, partial
        super().__init__(f"step {k}: {cause}")


@dataclass
class SwitchEvent:
    k: int
    before: str
    after: str
    dwell: int
    strongly_feasible: bool


@dataclass
class SimulationResult:
    states: list = field(default_factory=list)  # x(0..T)
    inputs: list = field(default_factory=list)  # u(0..T-1)
    partitions: list = field(default_factory=list)  # key per step
    v_bar: list = field(default_factory=list)  # summed nominal values per step
    v_hat: list = field(default_factory=list)  # summed planned-error values per step
    nominal_stage: list = field(default_factory=list)
    switch_flags: list = field(default_factory=list)
    telemetry: list = field(default_factory=list)  # per step: {block: Telemetry}
    switches: list = field(default_factory=list)
    rejected: list = field(default_factory=list)  # (k, key, reason)
    start_mode: str = "strong"
    V_T: float = 0.0
    link_cost: float = 0.0
    power_cost: float = 0.0
    J_inf: float = 0.0
    violations: int = 0

    def summary(self) -> dict:
        mon = stability_monitor(self)
        return {
            "V_T": self.V_T,
            "J_inf": self.J_inf,
            "power_cost": self.power_cost,
            "link_cost": self.link_cost,
            "violations": self.violations,
            "start_mode": self.start_mode,
            "final_partition": self.partitions[-1] if self.partitions else None,
            "switches": [vars(s) for s in self.switches],
            "stability": mon,
        }


class DesignCache:
    def __init__(self, sys: SystemModel, cfg: DesignConfig):
        self.sys, self.cfg, self._store = sys, cfg, {}

    def get(self, C: Partition):
        """Designs for ``C``; re-raises the cached failure for undesignable partitions."""
        if C.key not in self._store:
            try:
                self._store[C.key] = design_partition(self.sys, C, self.cfg.h_margin, self.cfg.q_eta,
                                                      self.cfg.q_theta, self.cfg.w_hat)
            except PartitionDesignInfeasible as exc:
                self._store[C.key] = exc
        val = self._store[C.key]
        if isinstance(val, Exception):
            raise val
        return val


def _make_controllers(sys, C, designs, x, mpc: MpcConfig, margin=False):
    ctrls = {}
    for c in C.blocks:
        coal = build_coalition(sys, C, c)
        xc = x[coal.x_index]
        st = margin_initialize(coal, designs[c], xc, mpc.N, mpc.H) if margin else reinitialize(xc, mpc.N)
        ctrls[c] = CoalitionController(coal, designs[c], mpc.N, mpc.H, st)
    return ctrls


def run(sys: SystemModel, x0, T: int, initial_partition: Partition | None, game_cfg: GameConfig,
        switch_cfg: SwitchConfig, mpc_cfg: MpcConfig, design_cfg: DesignConfig = DesignConfig(),
        opinions: Profile | None = None, designs: DesignCache | None = None) -> SimulationResult:
    x = np.asarray(x0, dtype=float).copy()
    if x.size != sys.n:
        raise ValueError(f"initial state has size {x.size}, system has {sys.n}")
    cache = designs or DesignCache(sys, design_cfg)
    game = ConsensusGame(sys, game_cfg)
    A, B, Q, R = sys.A, sys.B, sys.Q, sys.R
    Xh, Uh = sys.X.halfwidths, sys.U.halfwidths
    res = SimulationResult()

    profile = opinions
    if profile is None:
        if initial_partition is None:
            raise ValueError("need an initial partition or initial opinions")
        profile = Profile.consensus(initial_partition)

    def gate(C):
        try:
            d = cache.get(C)
        except PartitionDesignInfeasible as exc:
            return None, f"design failed at {exc.stage}"
        if not is_strongly_feasible(sys, C, d, x, mpc_cfg.N):
            return None, "not strongly feasible"
        return d, ""

    active = None
    if switch_cfg.enabled:
        out = game.run_consensus(profile, x)
        profile = out.final
        agreed = game.agreed_partition(profile)
        if agreed is not None:
            d, why = gate(agreed)
            if d is not None:
                active = agreed
            else:
                res.rejected.append((0, agreed.key, why))
    if active is None:
        if initial_partition is None:
            raise InitialInfeasible("initial opinions give no admissible consensus and no fallback partition")
        active = initial_partition
    try:
        designs_now = cache.get(active)
    except PartitionDesignInfeasible as exc:
        raise InitialInfeasible(str(exc)) from exc
    if is_strongly_feasible(sys, active, designs_now, x, mpc_cfg.N):
        ctrls = _make_controllers(sys, active, designs_now, x, mpc_cfg)
    elif is_feasible_with_margin(sys, active, designs_now, x, mpc_cfg.N, mpc_cfg.H):
        ctrls = _make_controllers(sys, active, designs_now, x, mpc_cfg, margin=True)
        res.start_mode = "margin"
    else:
        raise InitialInfeasible(f"x0 is infeasible for partition {active}")
    last_switch = 0

    for k in range(T):
        switched = False
        if switch_cfg.enabled and k > 0 and k % switch_cfg.selection_period == 0:
            out = game.run_consensus(profile, x)
            profile = out.final
            cand = game.agreed_partition(profile)
            if cand is not None and cand != active:
                dwell = k - last_switch
                if dwell < switch_cfg.min_dwell:
                    res.rejected.append((k, cand.key, "dwell"))
                else:
                    d, why = gate(cand)
                    if d is None:
                        res.rejected.append((k, cand.key, why))
                    else:
                        res.switches.append(SwitchEvent(k, active.key, cand.key, dwell, True))
                        active, designs_now, last_switch, switched = cand, d, k, True
                        ctrls = _make_controllers(sys, active, designs_now, x, mpc_cfg)
        try:
            prims = dict(zip(ctrls, pmap(lambda c: ctrls[c].solve_primary(), ctrls)))
            plans = {c: p.x_seq for c, p in prims.items()}
            secs = dict(zip(ctrls, pmap(lambda c: ctrls[c].solve_secondary(plans), ctrls)))
            u = np.zeros(sys.m)
            tele = {}
            for c, ctrl in ctrls.items():
                uc, tele[c] = ctrl.control(x[ctrl.coal.x_index])
                u[ctrl.coal.u_index] = uc
        except ControllerError as exc:
            _finish(res, game, T=k)
            raise SimulationError(k, exc, res) from exc

        if np.any(np.abs(x) > Xh + CONSTRAINT_TOL) or np.any(np.abs(u) > Uh + CONSTRAINT_TOL):
            res.violations += 1
        res.states.append(x.copy())
        res.inputs.append(u)
        res.partitions.append(active.key)
        res.v_bar.append(sum(p.value for p in prims.values()))
        res.v_hat.append(sum(s.value for s in secs.values()))
        res.nominal_stage.append(sum(t.nominal_stage for t in tele.values()))
        res.switch_flags.append(switched)
        res.telemetry.append(tele)
        res.V_T += float(x @ Q @ x + u @ R @ u)
        cons = Profile.consensus(active)
        Wx = game.weights(x)
        res.J_inf += 0.5 * sum(game.local_cost(i, cons, W=Wx) for i in range(sys.M))
        res.power_cost += game.power_cost(cons, x)
        res.link_cost += game.link_cost(active)
        x = A @ x + B @ u
    res.states.append(x.copy())
    _finish(res, game, T)
    return res


def _finish(res, game, T):
    steps = max(len(res.inputs), 1)
    res.power_cost /= steps
    res.link_cost /= steps


def fixed_partition_run(sys, x0, T, partition: Partition, mpc_cfg: MpcConfig,
                        design_cfg: DesignConfig = DesignConfig(), game_cfg: GameConfig = GameConfig(),
                        designs: DesignCache | None = None) -> SimulationResult:
    return run(sys, x0, T, partition, game_cfg, SwitchConfig(enabled=False), mpc_cfg, design_cfg,
               designs=designs)


def stability_monitor(res: SimulationResult) -> dict:
    """Empirical stability figures: value ratio bound and terminal state norm."""
    v = np.asarray(res.v_bar, dtype=float)
    terminal = float(np.linalg.norm(res.states[-1])) if res.states else math.nan
    if v.size == 0 or v[0] == 0.0:
        return {"mu_hat": None, "degenerate": True, "terminal_norm": terminal,
                "settled": _settled(res)}
    return {"mu_hat": float(v.max() / v[0]), "degenerate": False, "terminal_norm": terminal,
            "settled": _settled(res)}


def _settled(res) -> bool:
    # the switching signal is considered settled if the last quarter has no switch
    n = len(res.switch_flags)
    return n > 0 and not any(res.switch_flags[n - max(1, n // 4):])
