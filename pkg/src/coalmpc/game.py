"""Partition-selection game among subsystems.

Each subsystem ``i`` holds an opinion ``C_i`` (a partition). Its cost
trades disagreement with neighbours, weighted by the current interaction
strength, against the power needed to keep links inside its own block.
The game has an exact potential, so serial best responses terminate.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .partitions import Partition, delta_neighborhood, enumerate_partitions

COST_TOL = 1e-12
MAX_NASH_M = 6


@dataclass(frozen=True)
class GameConfig:
    rho: float = 0.5
    epsilon: float = 0.05
    sigma: object = 1.0  # scalar, or {(i, j): value} with 0-based pairs
    delta_moves: int = 1

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.delta_moves < 1:
            raise ValueError("delta_moves must be >= 1")
        if isinstance(self.sigma, dict):
            sig = {}
            for (i, j), v in self.sigma.items():
                if v <= 0:
                    raise ValueError("link power weights must be positive")
                for key in ((i, j), (j, i)):
                    if key in sig and sig[key] != v:
                        raise ValueError(f"sigma is not symmetric on pair {(i, j)}")
                    sig[key] = float(v)
            object.__setattr__(self, "sigma", sig)
        elif float(self.sigma) <= 0:
            raise ValueError("link power weights must be positive")

    def sigma_ij(self, i: int, j: int) -> float:
        if isinstance(self.sigma, dict):
            return self.sigma.get((i, j), 1.0)
        return float(self.sigma)


@dataclass(frozen=True)
class Profile:
    opinions: tuple

    def __post_init__(self):
        ops = tuple(self.opinions)
        M = len(ops)
        if any(C.M != M for C in ops):
            raise ValueError("every opinion must partition the full subsystem set")
        object.__setattr__(self, "opinions", ops)

    def __getitem__(self, i):
        return self.opinions[i]

    def __len__(self):
        return len(self.opinions)

    def replace(self, i: int, C: Partition) -> "Profile":
        ops = list(self.opinions)
        ops[i] = C
        return Profile(tuple(ops))

    @property
    def is_consensus(self) -> bool:
        return all(C == self.opinions[0] for C in self.opinions)

    @classmethod
    def consensus(cls, C: Partition) -> "Profile":
        return cls((C,) * C.M)

    def __str__(self):
        return "(" + "; ".join(str(C) for C in self.opinions) + ")"


@dataclass(frozen=True)
class Move:
    update: int  # 1-based count of individual updates
    player: int
    before: Partition
    after: Partition
    cost_before: float
    cost_after: float
    potential: float


@dataclass
class ConsensusResult:
    final: Profile
    trace: list = field(default_factory=list)
    converged: bool = False
    sweeps: int = 0


class ConsensusGame:
    """Costs, potential and best-response dynamics for one system."""

    def __init__(self, sys, cfg: GameConfig):
        self.sys = sys
        self.cfg = cfg
        M = sys.M
        self.M = M
        self.norms = np.zeros((M, M))
        for (i, j), Aij in sys.couplings.items():
            self.norms[i, j] = np.linalg.norm(Aij, 2)
        # neighbours in the game are symmetric: coupled in either direction
        self.neighbors = [sorted(j for j in range(M) if j != i and (self.norms[i, j] > 0 or self.norms[j, i] > 0))
                          for i in range(M)]
        self.sigma = np.array([[cfg.sigma_ij(i, j) if i != j else 0.0 for j in range(M)] for i in range(M)])

    def state_norms(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.array([np.linalg.norm(x[self.sys.x_slice(i)]) for i in range(self.M)])

    def coupling_weight(self, i: int, j: int, x) -> float:
        nx = self.state_norms(x)
        return 0.5 * (self.norms[i, j] * nx[j] + self.norms[j, i] * nx[i])

    def weights(self, x) -> np.ndarray:
        nx = self.state_norms(x)
        W = 0.5 * (self.norms * nx[None, :] + self.norms.T * nx[:, None])
        np.fill_diagonal(W, 0.0)
        return W

    def cost_terms(self, i: int, profile: Profile, x=None, W=None) -> tuple:
        """``(J_consensus, J_power)`` for player ``i``."""
        W = self.weights(x) if W is None else W
        own = profile[i].rgs()
        cons = power = 0.0
        for j in self.neighbors[i]:
            d_i = 0 if own[i] == own[j] else 1
            other = profile[j].rgs()
            d_j = 0 if other[i] == other[j] else 1
            cons += W[i, j] * abs(d_i - d_j)
            power += (W[i, j] + self.cfg.epsilon) * self.sigma[i, j] * (1 - d_i)
        return cons, power

    def local_cost(self, i: int, profile: Profile, x=None, W=None) -> float:
        cons, power = self.cost_terms(i, profile, x, W)
        return cons + self.cfg.rho * power

    def potential(self, profile: Profile, x=None, W=None) -> float:
        W = self.weights(x) if W is None else W
        cons = power = 0.0
        for i in range(self.M):
            c, p = self.cost_terms(i, profile, W=W)
            cons += c
            power += p
        return 0.5 * cons + self.cfg.rho * power

    def agreed_partition(self, profile: Profile):
        """Partition all players agree on, or ``None``.

        Identical opinions agree trivially. Otherwise the players agree when
        every coupled pair gives the same together/apart verdict (so no
        disagreement cost is paid), and grouping the pairs declared
        together reproduces every verdict.
        """
        if profile.is_consensus:
            return profile[0]
        together = []
        for i in range(self.M):
            ri = profile[i].rgs()
            for j in self.neighbors[i]:
                if j < i:
                    continue
                rj = profile[j].rgs()
                if (ri[i] == ri[j]) != (rj[i] == rj[j]):
                    return None
                if ri[i] == ri[j]:
                    together.append((i, j))
        parent = list(range(self.M))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for i, j in together:
            parent[find(i)] = find(j)
        groups = {}
        for i in range(self.M):
            groups.setdefault(find(i), []).append(i)
        C = Partition(tuple(tuple(g) for g in groups.values()))
        r = C.rgs()
        for i in range(self.M):
            for j in self.neighbors[i]:
                if (r[i] == r[j]) != ((i, j) in together or (j, i) in together):
                    return None
        return C

    def link_cost(self, C: Partition) -> float:
        """State-independent part of half the summed power costs at a consensus on ``C``."""
        r = C.rgs()
        total = 0.0
        for i in range(self.M):
            for j in self.neighbors[i]:
                if r[i] == r[j]:
                    total += self.cfg.epsilon * self.sigma[i, j]
        return 0.5 * total

    def power_cost(self, profile: Profile, x) -> float:
        W = self.weights(x)
        return 0.5 * sum(self.cost_terms(i, profile, W=W)[1] for i in range(self.M))

    def _argmin(self, i, profile, candidates, W):
        best, best_cost = None, np.inf
        for C in candidates:  # candidates arrive sorted by key
            cost = self.local_cost(i, profile.replace(i, C), W=W)
            if cost < best_cost - COST_TOL * max(1.0, abs(best_cost) if np.isfinite(best_cost) else 1.0):
                best, best_cost = C, cost
        return best, best_cost

    def best_response(self, i: int, profile: Profile, x=None, W=None) -> Partition:
        W = self.weights(x) if W is None else W
        cand = delta_neighborhood(profile[i], self.cfg.delta_moves)
        return self._argmin(i, profile, cand, W)[0]

    def run_consensus(self, initial: Profile, x, max_sweeps: int = 100) -> ConsensusResult:
        W = self.weights(x)
        profile = initial
        result = ConsensusResult(initial)
        updates = 0
        for sweep in range(1, max_sweeps + 1):
            changed = False
            for i in range(self.M):
                current = self.local_cost(i, profile, W=W)
                cand = self.best_response(i, profile, W=W)
                cost = self.local_cost(i, profile.replace(i, cand), W=W)
                updates += 1
                if cost < current - COST_TOL * max(1.0, abs(current)):
                    before = profile[i]
                    profile = profile.replace(i, cand)
                    changed = True
                    result.trace.append(Move(updates, i, before, cand, current, cost, self.potential(profile, W=W)))
            result.sweeps = sweep
            if not changed:
                result.converged = True
                break
        result.final = profile
        return result

    def is_nash(self, profile: Profile, x, W=None) -> bool:
        """Exhaustive check: no player gains by any unilateral deviation."""
        if self.M > MAX_NASH_M:
            raise ValueError(f"exhaustive Nash check limited to M <= {MAX_NASH_M}")
        return self.improving_deviation(profile, x, W) is None

    def improving_deviation(self, profile: Profile, x, W=None):
        W = self.weights(x) if W is None else W
        everything = enumerate_partitions(self.M)
        for i in range(self.M):
            current = self.local_cost(i, profile, W=W)
            for C in everything:
                if self.local_cost(i, profile.replace(i, C), W=W) < current - COST_TOL * max(1.0, abs(current)):
                    return i, C
        return None
