"""Block-structured LTI system, coalition aggregation and disturbance sets."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .partitions import Partition
from .sets import SymBox, Zonotope, box_product, linear_image, minkowski_sum

COUPLING_TOL = 1e-12
INPUT_COUPLING_TOL = 1e-9


class NotControllableError(ValueError):
    pass


def _is_nonzero(M) -> bool:
    return M is not None and np.linalg.norm(M) > COUPLING_TOL


def controllability_index(A, B) -> int:
    """Smallest ``h`` with ``rank [B, AB, ..., A^{h-1} B] = n``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    n = A.shape[0]
    blocks = []
    AkB = B
    for h in range(1, n + 1):
        blocks.append(AkB)
        if np.linalg.matrix_rank(np.hstack(blocks)) == n:
            return h
        AkB = A @ AkB
    raise NotControllableError("pair (A, B) is not controllable")


def _check_pd(M, name):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.allclose(M, M.T) or np.linalg.eigvalsh(M).min() <= 0:
        raise ValueError(f"{name} must be symmetric positive definite")
    return M


@dataclass(frozen=True, eq=False)
class SubsystemModel:
    A: np.ndarray
    B: np.ndarray
    X: SymBox
    U: SymBox
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        B = np.asarray(self.B, dtype=float).reshape(n, -1)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Q", _check_pd(self.Q, "Q"))
        object.__setattr__(self, "R", _check_pd(self.R, "R"))
        if self.X.dim != n or self.U.dim != B.shape[1]:
            raise ValueError("constraint box dimensions do not match (A, B)")
        if not (self.X.is_pc_set and self.U.is_pc_set):
            raise ValueError("constraint boxes need strictly positive halfwidths")
        controllability_index(A, B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Subsystems plus off-diagonal coupling blocks ``A_ij`` (i != j)."""

    subsystems: tuple
    couplings: dict = field(default_factory=dict)

    def __post_init__(self):
        subs = tuple(self.subsystems)
        object.__setattr__(self, "subsystems", subs)
        clean = {}
        for (i, j), Aij in self.couplings.items():
            if i == j:
                raise ValueError("diagonal blocks belong to the subsystems")
            Aij = np.asarray(Aij, dtype=float).reshape(subs[i].n, subs[j].n)
            if _is_nonzero(Aij):
                clean[(i, j)] = Aij
        object.__setattr__(self, "couplings", clean)
        xo = np.cumsum([0] + [s.n for s in subs])
        uo = np.cumsum([0] + [s.m for s in subs])
        object.__setattr__(self, "_x_off", xo)
        object.__setattr__(self, "_u_off", uo)

    @property
    def M(self) -> int:
        return len(self.subsystems)

    @property
    def n(self) -> int:
        return int(self._x_off[-1])

    @property
    def m(self) -> int:
        return int(self._u_off[-1])

    def x_slice(self, i) -> slice:
        return slice(self._x_off[i], self._x_off[i + 1])

    def u_slice(self, i) -> slice:
        return slice(self._u_off[i], self._u_off[i + 1])

    def x_index(self, members) -> np.ndarray:
        return np.concatenate([np.arange(self._x_off[i], self._x_off[i + 1]) for i in members])

    def u_index(self, members) -> np.ndarray:
        return np.concatenate([np.arange(self._u_off[i], self._u_off[i + 1]) for i in members])

    def block(self, i, j) -> np.ndarray:
        if i == j:
            return self.subsystems[i].A
        return self.couplings.get((i, j), np.zeros((self.subsystems[i].n, self.subsystems[j].n)))

    def neighbors(self, i) -> list:
        """``M_i = {j != i : A_ij != 0}``."""
        return sorted(j for (a, j) in self.couplings if a == i)

    @property
    def A(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        for i in range(self.M):
            for j in range(self.M):
                A[self.x_slice(i), self.x_slice(j)] = self.block(i, j)
        return A

    @property
    def B(self) -> np.ndarray:
        B = np.zeros((self.n, self.m))
        for i, s in enumerate(self.subsystems):
            B[self.x_slice(i), self.u_slice(i)] = s.B
        return B

    @property
    def Q(self) -> np.ndarray:
        return _blkdiag([s.Q for s in self.subsystems])

    @property
    def R(self) -> np.ndarray:
        return _blkdiag([s.R for s in self.subsystems])

    @property
    def X(self) -> SymBox:
        return box_product([s.X for s in self.subsystems])

    @property
    def U(self) -> SymBox:
        return box_product([s.U for s in self.subsystems])


def _blkdiag(mats) -> np.ndarray:
    rows = sum(m.shape[0] for m in mats)
    cols = sum(m.shape[1] for m in mats)
    out = np.zeros((rows, cols))
    r = c = 0
    for m in mats:
        out[r:r + m.shape[0], c:c + m.shape[1]] = m
        r += m.shape[0]
        c += m.shape[1]
    return out


@dataclass(frozen=True, eq=False)
class CoalitionModel:
    members: tuple
    A: np.ndarray
    B: np.ndarray
    X: SymBox
    U: SymBox
    Q: np.ndarray
    R: np.ndarray
    couplings: dict  # neighbouring block -> A_cd
    x_index: np.ndarray
    u_index: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def neighbors(self) -> list:
        return list(self.couplings)


def build_coalition(sys: SystemModel, C: Partition, c) -> CoalitionModel:
    c = tuple(c)
    if c not in C.blocks:
        raise ValueError(f"{c} is not a block of {C}")
    subs = [sys.subsystems[i] for i in c]
    A = np.block([[sys.block(i, j) for j in c] for i in c])
    couplings = {}
    for d in C.blocks:
        if d == c:
            continue
        Acd = np.block([[sys.block(i, j) for j in d] for i in c])
        if _is_nonzero(Acd):
            couplings[d] = Acd
    return CoalitionModel(
        members=c,
        A=A,
        B=_blkdiag([s.B for s in subs]),
        X=box_product([s.X for s in subs]),
        U=box_product([s.U for s in subs]),
        Q=_blkdiag([s.Q for s in subs]),
        R=_blkdiag([s.R for s in subs]),
        couplings=couplings,
        x_index=sys.x_index(c),
        u_index=sys.u_index(c),
    )


def coalitions(sys: SystemModel, C: Partition) -> dict:
    return {c: build_coalition(sys, C, c) for c in C.blocks}


def disturbance_set(sys: SystemModel, C: Partition, c, weights=None) -> Zonotope:
    """``W_c`` as the Minkowski sum of ``A_cd X_d`` over neighbouring blocks.

    ``weights`` optionally maps a neighbouring block ``d`` to a scalar factor
    on ``X_d`` (used for the unplanned-disturbance set).
    """
    coal = build_coalition(sys, C, c)
    W = Zonotope.zero(coal.n)
    for d, Acd in coal.couplings.items():
        Xd = box_product([sys.subsystems[j].X for j in d])
        s = 1.0 if weights is None else weights[d]
        W = minkowski_sum(W, linear_image(s * Acd, Xd.as_zonotope()))
    return W


def discretize_zoh(A_blocks, B_blocks, Ts: float, *, X, U, Q, R, input_coupling: str = "reject"):
    """Exact zero-order-hold discretization of a continuous block system.

    ``A_blocks[i][j]`` are the continuous blocks (``None`` for zero) and
    ``B_blocks[i]`` the local input matrices. The full pair is discretized
    at once; the discrete input matrix is generally not block diagonal.
    With ``input_coupling="reject"`` any off-diagonal input block above
    ``INPUT_COUPLING_TOL`` raises; ``"drop"`` discards those blocks.
    """
    if Ts <= 0:
        raise ValueError("sampling time must be positive")
    if input_coupling not in ("reject", "drop"):
        raise ValueError(f"unknown input_coupling policy {input_coupling!r}")
    M = len(B_blocks)
    ns = [np.atleast_2d(A_blocks[i][i]).shape[0] for i in range(M)]
    Bs = [np.asarray(B_blocks[i], dtype=float).reshape(ns[i], -1) for i in range(M)]
    ms = [b.shape[1] for b in Bs]
    xo, uo = np.cumsum([0] + ns), np.cumsum([0] + ms)
    n, m = xo[-1], uo[-1]
    Ac = np.zeros((n, n))
    Bc = np.zeros((n, m))
    for i in range(M):
        for j in range(M):
            if A_blocks[i][j] is not None:
                Ac[xo[i]:xo[i + 1], xo[j]:xo[j + 1]] = A_blocks[i][j]
        Bc[xo[i]:xo[i + 1], uo[i]:uo[i + 1]] = Bs[i]
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = Ac
    aug[:n, n:] = Bc
    E = expm(aug * Ts)
    Ad, Bd = E[:n, :n], E[:n, n:]
    for i in range(M):
        for j in range(M):
            if i != j:
                blk = Bd[xo[i]:xo[i + 1], uo[j]:uo[j + 1]]
                if np.abs(blk).max(initial=0.0) > INPUT_COUPLING_TOL and input_coupling == "reject":
                    raise ValueError(
                        f"discretization couples input {j} into subsystem {i} "
                        f"(max {np.abs(blk).max():.3g}); use input_coupling='drop' to discard")
    subs = [
        SubsystemModel(Ad[xo[i]:xo[i + 1], xo[i]:xo[i + 1]], Bd[xo[i]:xo[i + 1], uo[i]:uo[i + 1]],
                       X[i], U[i], Q[i], R[i])
        for i in range(M)
    ]
    couplings = {(i, j): Ad[xo[i]:xo[i + 1], xo[j]:xo[j + 1]]
                 for i in range(M) for j in range(M) if i != j}
    return SystemModel(tuple(subs), couplings)


def mass_spring_chain(masses, springs, dampers, input_gain=100.0):
    """Continuous blocks of a chain of masses linked by springs and dampers.

    ``springs``/``dampers`` map an index pair ``(i, j)`` to the stiffness /
    damping of the single element linking masses ``i`` and ``j``. Each
    subsystem state is ``(position, velocity)``.
    """
    M = len(masses)
    A = [[None] * M for _ in range(M)]
    for i in range(M):
        A[i][i] = np.array([[0.0, 1.0], [0.0, 0.0]])
    for (i, j), k in springs.items():
        c = dampers.get((i, j), 0.0)
        for a, b in ((i, j), (j, i)):
            A[a][a] = A[a][a] + np.array([[0.0, 0.0], [-k / masses[a], -c / masses[a]]])
            cpl = np.array([[0.0, 0.0], [k / masses[a], c / masses[a]]])
            A[a][b] = cpl if A[a][b] is None else A[a][b] + cpl
    B = [np.array([[0.0], [input_gain]]) for _ in range(M)]
    return A, B
