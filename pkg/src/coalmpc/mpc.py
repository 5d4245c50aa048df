"""Primary (nominal) and secondary (planned-error) finite-horizon problems.

Both are condensed QPs over the input sequence: the trajectory is an affine
function of the inputs, constraints are scaled boxes and the terminal state
is pinned to the origin.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .partitions import Partition
from .qp import QPInfeasible, solve_qp
from .sets import SymBox
from .system import CoalitionModel, SystemModel, build_coalition

INITIAL_TOL = 1e-9


class Infeasible(Exception):
    pass


@dataclass(frozen=True)
class MpcConfig:
    N: int
    H: int | None = None

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.H is None:
            object.__setattr__(self, "H", self.N + 1)
        if self.H < self.N + 1:
            raise ValueError(f"H={self.H} must be >= N+1={self.N + 1}")


@dataclass(frozen=True, eq=False)
class PrimarySolution:
    u_seq: np.ndarray  # N x m
    x_seq: np.ndarray  # (N+1) x n
    value: float


@dataclass(frozen=True, eq=False)
class SecondarySolution:
    f_seq: np.ndarray  # H x m
    e_seq: np.ndarray  # (H+1) x n
    value: float


def zero_disturbance(n: int, N: int) -> np.ndarray:
    return np.zeros((N + 1, n))


def check_disturbance(w_seq, n: int, N: int) -> np.ndarray:
    w = np.asarray(w_seq, dtype=float).reshape(-1, n) if np.size(w_seq) else np.zeros((0, n))
    if w.shape[0] != N + 1:
        raise ValueError(f"disturbance sequence needs N+1={N + 1} entries, got {w.shape[0]}")
    if np.any(w[-1] != 0):
        raise ValueError("the last planned disturbance must be zero")
    return w


@lru_cache(maxsize=512)
def _gamma(A_bytes, B_bytes, n, m, L):
    A = np.frombuffer(A_bytes).reshape(n, n)
    B = np.frombuffer(B_bytes).reshape(n, m)
    Gam = np.zeros(((L + 1) * n, L * m))
    Phi = np.zeros(((L + 1) * n, n))
    powers = [np.eye(n)]
    for _ in range(L):
        powers.append(A @ powers[-1])
    for k in range(L + 1):
        Phi[k * n:(k + 1) * n] = powers[k]
        for j in range(k):
            Gam[k * n:(k + 1) * n, j * m:(j + 1) * m] = powers[k - 1 - j] @ B
    Phi.setflags(write=False)
    Gam.setflags(write=False)
    return Phi, Gam


def prediction_matrices(A, B, L: int):
    """``(Phi, Gamma)`` with stacked states ``z = Phi z0 + Gamma v`` for k = 0..L."""
    A = np.ascontiguousarray(A, dtype=float)
    B = np.ascontiguousarray(B, dtype=float)
    return _gamma(A.tobytes(), B.tobytes(), A.shape[0], B.shape[1], L)


def _free_response(A, z0, d, L):
    n = A.shape[0]
    out = np.zeros((L + 1) * n)
    z = np.asarray(z0, dtype=float).copy()
    out[:n] = z
    for k in range(L):
        z = A @ z + (d[k] if k < len(d) else 0.0)
        out[(k + 1) * n:(k + 2) * n] = z
    return out


class _Builder:
    """Accumulates a QP in a shared decision vector of length ``nv``."""

    def __init__(self, nv):
        self.nv = nv
        self.P = np.zeros((nv, nv))
        self.q = np.zeros(nv)
        self.const = 0.0
        self.eq, self.beq, self.ineq, self.bin = [], [], [], []

    def add_quadratic(self, S, off, W):
        # (S y + off)' W (S y + off)
        WS = W @ S
        self.P += 2.0 * S.T @ WS
        self.q += 2.0 * WS.T @ off
        self.const += float(off @ W @ off)

    def add_abs_bound(self, S, off, bound):
        # |S y + off| <= bound, elementwise; zero bounds become equalities
        zero = bound == 0
        if np.any(zero):
            self.eq.append(S[zero]); self.beq.append(-off[zero])
        nz = ~zero
        self.ineq += [S[nz], -S[nz]]
        self.bin += [bound[nz] - off[nz], bound[nz] + off[nz]]

    def add_equal(self, S, rhs):
        self.eq.append(S); self.beq.append(rhs)

    def solve(self):
        A_eq = np.vstack(self.eq) if self.eq else None
        b_eq = np.concatenate(self.beq) if self.eq else None
        A_in = np.vstack(self.ineq) if self.ineq else None
        b_in = np.concatenate(self.bin) if self.ineq else None
        y, val = solve_qp(self.P, self.q, A_eq, b_eq, A_in, b_in)
        return y, val + self.const


def _add_trajectory(bld, Sz, off, A, B, Q, R, Sv, L, sx, su, X: SymBox, U: SymBox):
    """Stage costs for k < L, state boxes for k < L, terminal z_L = 0, input boxes."""
    n, m = A.shape[0], B.shape[1]
    body = slice(0, L * n)
    bld.add_quadratic(Sz[body], off[body], np.kron(np.eye(L), Q))
    bld.add_quadratic(Sv, np.zeros(L * m), np.kron(np.eye(L), R))
    bld.add_abs_bound(Sz[body], off[body], np.tile(sx * X.halfwidths, L))
    bld.add_abs_bound(Sv, np.zeros(L * m), np.tile(su * U.halfwidths, L))
    bld.add_equal(Sz[L * n:], -off[L * n:])


def _check_initial(z0, s, X: SymBox, what):
    lim = s * X.halfwidths
    if np.any(np.abs(z0) > lim + INITIAL_TOL * np.maximum(1.0, lim)):
        raise Infeasible(f"{what} outside its scaled constraint box")


def _solve_horizon(coal: CoalitionModel, z0, d, L, sx, su):
    n, m = coal.n, coal.m
    z0 = np.asarray(z0, dtype=float).ravel()
    if z0.size != n:
        raise ValueError(f"state has size {z0.size}, coalition has {n}")
    Phi, Gam = prediction_matrices(coal.A, coal.B, L)
    off = _free_response(coal.A, z0, d, L)
    bld = _Builder(L * m)
    _add_trajectory(bld, Gam, off, coal.A, coal.B, coal.Q, coal.R, np.eye(L * m), L, sx, su, coal.X, coal.U)
    try:
        v, val = bld.solve()
    except QPInfeasible as exc:
        raise Infeasible(str(exc)) from exc
    z = (Gam @ v + off).reshape(L + 1, n)
    z[-1] = 0.0 if np.abs(z[-1]).max() < 1e-9 else z[-1]
    return v.reshape(L, m), z, max(val, 0.0)


def solve_primary(coal: CoalitionModel, design, x_bar, N: int) -> PrimarySolution:
    _check_initial(np.asarray(x_bar, dtype=float), design.alpha_x, coal.X, "nominal state")
    u, x, val = _solve_horizon(coal, x_bar, [], N, design.alpha_x, design.alpha_u)
    return PrimarySolution(u, x, val)


def solve_secondary(coal: CoalitionModel, design, e_bar, w_seq, H: int) -> SecondarySolution:
    w = np.asarray(w_seq, dtype=float).reshape(-1, coal.n)
    if H < w.shape[0]:
        raise ValueError("secondary horizon shorter than the planned disturbance sequence")
    _check_initial(np.asarray(e_bar, dtype=float), design.beta_x, coal.X, "planned error")
    f, e, val = _solve_horizon(coal, e_bar, list(w), H, design.beta_x, design.beta_u)
    return SecondarySolution(f, e, val)


def is_strongly_feasible(sys: SystemModel, C: Partition, designs: dict, x, N: int) -> bool:
    """True iff the primary problem of every coalition is feasible at ``x_c``."""
    x = np.asarray(x, dtype=float)
    for c in C.blocks:
        if c not in designs:
            raise KeyError(f"no design for coalition {c}")
        coal = build_coalition(sys, C, c)
        try:
            solve_primary(coal, designs[c], x[coal.x_index], N)
        except Infeasible:
            return False
    return True


@dataclass(frozen=True, eq=False)
class MarginSplit:
    x_bar: np.ndarray
    e_bar: np.ndarray


def margin_split(coal: CoalitionModel, design, x_c, N: int, H: int) -> MarginSplit:
    """Split ``x_c = x_bar + e_bar`` with both problems feasible (zero plan).

    Jointly chooses the nominal initial state and an error inside the
    secondary domain, minimising the sum of both costs. Raises
    ``Infeasible`` when no split exists.
    """
    n, m = coal.n, coal.m
    x_c = np.asarray(x_c, dtype=float).ravel()
    PhiN, GamN = prediction_matrices(coal.A, coal.B, N)
    PhiH, GamH = prediction_matrices(coal.A, coal.B, H)
    nv = n + N * m + H * m
    sx0, sv, sf = slice(0, n), slice(n, n + N * m), slice(n + N * m, nv)
    bld = _Builder(nv)

    Sz = np.zeros(((N + 1) * n, nv)); Sz[:, sx0] = PhiN; Sz[:, sv] = GamN
    Sv = np.zeros((N * m, nv)); Sv[:, sv] = np.eye(N * m)
    _add_trajectory(bld, Sz, np.zeros((N + 1) * n), coal.A, coal.B, coal.Q, coal.R, Sv, N,
                    design.alpha_x, design.alpha_u, coal.X, coal.U)
    # initial nominal state inside alpha X (k = 0 row of the state box handles it)
    Se = np.zeros(((H + 1) * n, nv)); Se[:, sx0] = -PhiH; Se[:, sf] = GamH
    Sf = np.zeros((H * m, nv)); Sf[:, sf] = np.eye(H * m)
    _add_trajectory(bld, Se, PhiH @ x_c, coal.A, coal.B, coal.Q, coal.R, Sf, H,
                    design.beta_x, design.beta_u, coal.X, coal.U)
    try:
        y, _ = bld.solve()
    except QPInfeasible as exc:
        raise Infeasible(str(exc)) from exc
    x_bar = y[sx0]
    return MarginSplit(x_bar, x_c - x_bar)


def is_feasible_with_margin(sys: SystemModel, C: Partition, designs: dict, x, N: int, H: int) -> bool:
    """True iff every coalition admits a nominal/planned-error split of ``x_c``.

    This inner-approximates the feasible set of the three-term controller:
    the unplanned error starts at zero and the stored plan is zero.
    """
    x = np.asarray(x, dtype=float)
    for c in C.blocks:
        coal = build_coalition(sys, C, c)
        try:
            margin_split(coal, designs[c], x[coal.x_index], N, H)
        except Infeasible:
            return False
    return True


def one_step_feasible_box(coal: CoalitionModel, design, with_margin: bool = False) -> SymBox:
    """Closed form of the one-step region for diagonal square coalitions.

    With terminal set ``{0}`` and ``N = 1`` the nominal input is forced to
    ``-a x / b`` per coordinate. ``with_margin`` adds the error bound
    ``(beta_x + xi_x) X_c``.
    """
    A, B = coal.A, coal.B
    if A.shape != B.shape or np.any(A != np.diag(np.diag(A))) or np.any(B != np.diag(np.diag(B))):
        raise ValueError("closed form needs diagonal A_cc and square diagonal B_c")
    a, b = np.abs(np.diag(A)), np.abs(np.diag(B))
    hx, hu = coal.X.halfwidths, coal.U.halfwidths
    with np.errstate(divide="ignore"):
        by_input = np.where(a > 0, design.alpha_u * hu * b / np.where(a > 0, a, 1.0), np.inf)
    half = np.minimum(design.alpha_x * hx, by_input)
    if with_margin:
        half = half + (design.beta_x + design.xi_x) * hx
    return SymBox(half)
