"""Optimized robust control invariance LP and per-coalition scaling design.

For ``x+ = A x + B u + w`` with ``w in W`` and gains ``M_0..M_{h-1}`` such
that ``D_h = 0``, the set ``R_h = sum_l D_l W`` is RCI and the feedback
``mu`` maps it onto ``sum_l M_l W``. The LP picks the gains that minimise
``q_eta * eta + q_theta * theta`` subject to ``R_h in eta X`` and
``mu(R_h) in theta U``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from ._parallel import pmap
from .errors import SolverToleranceError
from .partitions import Partition
from .sets import SymBox, Zonotope, axis_supports, linear_image, minkowski_sum, scale, support
from .system import SystemModel, build_coalition, controllability_index, disturbance_set

log = logging.getLogger(__name__)

LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}
VERIFY_TOL = 1e-8
NULL_TOL = 1e-9
ZERO_ERROR = 1e-11
# absolute slack on the decomposition equality, in state units
ABS_ERROR = 1e-12
# relative size of the out-of-span part of an error that is put down to round-off
SPAN_TOL = 1e-6
SPAN_FLOOR = 1e-10


class DesignInfeasible(Exception):
    """The RCI LP has no solution with ``(eta, theta) in [0, 1]^2``."""


class PartitionDesignInfeasible(Exception):
    def __init__(self, block, stage, reason=""):
        self.block = tuple(block)
        self.stage = stage
        super().__init__(f"design failed for coalition {self.block} at stage '{stage}': {reason}")


class OutOfTube(Exception):
    pass


@dataclass(frozen=True, eq=False)
class RciParameterization:
    h: int
    M: tuple  # M_0 .. M_{h-1}, each m x n


@dataclass(frozen=True, eq=False)
class DesignResult:
    params: RciParameterization
    eta: float
    theta: float
    delta: float
    W: Zonotope
    D: tuple  # D_0 .. D_h


@dataclass(frozen=True, eq=False)
class CoalitionDesign:
    alpha_x: float
    alpha_u: float
    beta_x: float
    beta_u: float
    xi_x: float
    xi_u: float
    full: DesignResult  # RCI design for the total error against W_c
    unplanned: DesignResult  # RCI design for the unplanned error against W_hat_c

    @property
    def third_term(self) -> RciParameterization:
        return self.unplanned.params

    @property
    def W(self) -> Zonotope:
        return self.full.W

    @property
    def W_hat(self) -> Zonotope:
        return self.unplanned.W

    def factors(self) -> dict:
        return {k: getattr(self, k) for k in ("alpha_x", "alpha_u", "beta_x", "beta_u", "xi_x", "xi_u")}


def d_matrices(params: RciParameterization, A, B) -> list:
    """``D_0 = I`` and ``D_l = A^l + sum_{j<l} A^{l-1-j} B M_j``; returns D_0..D_h."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    for Mj in params.M:
        if np.shape(Mj) != (B.shape[1], n):
            raise ValueError(f"gain shape {np.shape(Mj)} != {(B.shape[1], n)}")
    D = [np.eye(n)]
    # D_{l+1} = A D_l + B M_l
    for l in range(params.h):
        D.append(A @ D[-1] + B @ np.asarray(params.M[l], dtype=float))
    return D


def rci_zonotope(result: DesignResult) -> Zonotope:
    Z = Zonotope.zero(result.W.dim)
    for Dl in result.D[:-1]:
        Z = minkowski_sum(Z, linear_image(Dl, result.W))
    return Z


def control_zonotope(result: DesignResult) -> Zonotope:
    m = result.params.M[0].shape[0]
    Z = Zonotope.zero(m)
    for Ml in result.params.M:
        Z = minkowski_sum(Z, linear_image(Ml, result.W))
    return Z


def solve_rci_lp(A, B, X: SymBox, U: SymBox, W: Zonotope, h: int,
                 q_eta: float = 1.0, q_theta: float = 1.0) -> DesignResult:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    m = B.shape[1]
    if W.dim != n or X.dim != n or U.dim != m:
        raise ValueError("dimension mismatch between (A, B) and the sets")
    if h < controllability_index(A, B):
        raise ValueError(f"h={h} is below the controllability index")

    G = W.generators[:, np.any(W.generators != 0, axis=0)]
    p = G.shape[1]
    nM = h * m * n
    powers = [np.linalg.matrix_power(A, k) for k in range(h + 1)]
    ApB = [P @ B for P in powers]

    def m_index(l, t, s):
        return l * m * n + t * n + s

    # state terms e_i' D_l g_j for l >= 1 need an auxiliary; l = 0 is constant
    n_state_aux = n * (h - 1) * p
    n_input_aux = m * h * p
    i_eta, i_theta = nM, nM + 1
    nv = nM + 2 + n_state_aux + n_input_aux
    rows, rhs = [], []
    state_aux_sum = np.zeros((n, nv))
    input_aux_sum = np.zeros((m, nv))

    aux = nM + 2
    for i in range(n):
        for l in range(1, h):
            for j in range(p):
                lin = np.zeros(nv)
                for k in range(l):
                    coef = np.outer(ApB[l - 1 - k][i], G[:, j])
                    lin[k * m * n:(k + 1) * m * n] += coef.ravel()
                const = powers[l][i] @ G[:, j]
                r1 = lin.copy(); r1[aux] = -1.0
                r2 = -lin; r2[aux] = -1.0
                rows += [r1, r2]; rhs += [-const, const]
                state_aux_sum[i, aux] = 1.0
                aux += 1
    for t in range(m):
        for l in range(h):
            for j in range(p):
                lin = np.zeros(nv)
                for s in range(n):
                    lin[m_index(l, t, s)] = G[s, j]
                r1 = lin.copy(); r1[aux] = -1.0
                r2 = -lin; r2[aux] = -1.0
                rows += [r1, r2]; rhs += [0.0, 0.0]
                input_aux_sum[t, aux] = 1.0
                aux += 1
    for i in range(n):
        r = state_aux_sum[i].copy(); r[i_eta] = -X.halfwidths[i]
        rows.append(r); rhs.append(-np.sum(np.abs(G[i])))
    for t in range(m):
        r = input_aux_sum[t].copy(); r[i_theta] = -U.halfwidths[t]
        rows.append(r); rhs.append(0.0)

    # D_h(M) = 0
    eq_rows, eq_rhs = [], []
    for r in range(n):
        for s in range(n):
            lin = np.zeros(nv)
            for k in range(h):
                for t in range(m):
                    lin[m_index(k, t, s)] += ApB[h - 1 - k][r, t]
            eq_rows.append(lin)
            eq_rhs.append(-powers[h][r, s])

    c = np.zeros(nv)
    c[i_eta], c[i_theta] = q_eta, q_theta
    bounds = [(None, None)] * nM + [(0.0, 1.0), (0.0, 1.0)] + [(0.0, None)] * (n_state_aux + n_input_aux)
    res = linprog(c, A_ub=np.array(rows) if rows else None, b_ub=np.array(rhs) if rows else None,
                  A_eq=np.array(eq_rows), b_eq=np.array(eq_rhs), bounds=bounds,
                  method="highs", options=LP_OPTIONS)
    if res.status == 2:
        raise DesignInfeasible("no RCI parameterization with eta, theta <= 1")
    if res.status != 0:
        raise SolverToleranceError(f"RCI LP failed: {res.message}")

    z = res.x
    Ms = tuple(z[l * m * n:(l + 1) * m * n].reshape(m, n) for l in range(h))
    params = RciParameterization(h, Ms)
    D = tuple(d_matrices(params, A, B))
    if np.abs(D[-1]).max() > NULL_TOL * max(1.0, np.abs(powers[h]).max()):
        raise SolverToleranceError(f"D_h residual {np.abs(D[-1]).max():.3g} above tolerance")
    eta, theta = float(z[i_eta]), float(z[i_theta])
    result = DesignResult(params, eta, theta, q_eta * eta + q_theta * theta, W, D)
    _verify(result, X, U)
    return result


def _verify(result: DesignResult, X: SymBox, U: SymBox):
    sx = axis_supports(rci_zonotope(result))
    su = axis_supports(control_zonotope(result))
    # tolerance is relative to the face bound, absolute below unit halfwidth
    ex = np.max((sx - result.eta * X.halfwidths) / np.maximum(1.0, X.halfwidths), initial=-np.inf)
    eu = np.max((su - result.theta * U.halfwidths) / np.maximum(1.0, U.halfwidths), initial=-np.inf)
    if ex > VERIFY_TOL or eu > VERIFY_TOL:
        raise SolverToleranceError(f"post-solve inclusion check failed (state {ex:.3g}, input {eu:.3g})")


def _hat_weights(coal, alpha_x: dict, mode: str) -> dict:
    if mode == "exact":
        return {d: 1.0 - alpha_x[d] for d in coal.couplings}
    if mode == "outer":
        t = max((1.0 - alpha_x[d] for d in coal.couplings), default=0.0)
        return {d: t for d in coal.couplings}
    raise ValueError(f"unknown W_hat mode {mode!r}")


def design_partition(sys: SystemModel, C: Partition, h_margin: int = 0, q_eta: float = 1.0,
                     q_theta: float = 1.0, w_hat: str = "exact") -> dict:
    """Scaling factors and third-term gains for every coalition of ``C``.

    Two parallel rounds of LPs separated by the exchange of ``alpha_x``:
    the first against the full interaction set ``W_c`` fixes ``alpha``, the
    second against the unplanned set ``W_hat_c`` fixes ``xi``; ``beta``
    takes up the remainder.
    """
    coals = {c: build_coalition(sys, C, c) for c in C.blocks}
    hs = {c: controllability_index(k.A, k.B) + h_margin for c, k in coals.items()}

    def first(c):
        k = coals[c]
        try:
            return solve_rci_lp(k.A, k.B, k.X, k.U, disturbance_set(sys, C, c), hs[c], q_eta, q_theta)
        except DesignInfeasible as exc:
            raise PartitionDesignInfeasible(c, "full", str(exc)) from exc

    full = dict(zip(C.blocks, pmap(first, C.blocks)))
    alpha_x = {c: 1.0 - r.eta for c, r in full.items()}
    alpha_u = {c: 1.0 - r.theta for c, r in full.items()}

    def second(c):
        k = coals[c]
        W_hat = disturbance_set(sys, C, c, weights=_hat_weights(k, alpha_x, w_hat))
        try:
            return solve_rci_lp(k.A, k.B, k.X, k.U, W_hat, hs[c], q_eta, q_theta)
        except DesignInfeasible as exc:
            raise PartitionDesignInfeasible(c, "unplanned", str(exc)) from exc

    unplanned = dict(zip(C.blocks, pmap(second, C.blocks)))
    designs = {}
    for c in C.blocks:
        xi_x, xi_u = unplanned[c].eta, unplanned[c].theta
        beta_x = 1.0 - alpha_x[c] - xi_x
        beta_u = 1.0 - alpha_u[c] - xi_u
        if beta_x < -NULL_TOL or beta_u < -NULL_TOL:
            raise PartitionDesignInfeasible(c, "beta", f"beta_x={beta_x:.4g}, beta_u={beta_u:.4g}")
        designs[c] = CoalitionDesign(alpha_x[c], alpha_u[c], max(beta_x, 0.0), max(beta_u, 0.0),
                                     xi_x, xi_u, full[c], unplanned[c])
    log.debug("designed %s", C)
    return designs


class TubeSelector:
    """Minimal-selection invariance-inducing law for one design.

    ``e`` is decomposed as ``sum_l D_l G c_l`` with ``|c_l|_inf <= lam``
    and ``lam`` minimal; the returned input is ``sum_l M_l G c_l``.
    """

    def __init__(self, result: DesignResult):
        self.result = result
        G = result.W.generators[:, np.any(result.W.generators != 0, axis=0)]
        self.p = G.shape[1]
        h = result.params.h
        self.E = np.hstack([result.D[l] @ G for l in range(h)]) if self.p else np.zeros((G.shape[0], 0))
        self.F = np.hstack([result.params.M[l] @ G for l in range(h)]) if self.p else None
        self.m = result.params.M[0].shape[0]
        self.last_span_residual = 0.0
        if self.p:
            U, sv, Vt = np.linalg.svd(self.E, full_matrices=False)
            r = int(np.sum(sv > 1e-12 * sv[0])) if sv.size and sv[0] > 0 else 0
            self._Ur, self._s, self._Vr = U[:, :r], sv[:r], Vt[:r]

    def __call__(self, e) -> tuple:
        e = np.asarray(e, dtype=float).ravel()
        if np.abs(e).max(initial=0.0) <= ZERO_ERROR:
            return np.zeros(self.m), 0.0
        if self.p == 0:
            raise OutOfTube("unplanned error is nonzero but the unplanned disturbance set is {0}")
        nc = self.E.shape[1]
        # work in an orthonormal basis of span(E): the generator images can
        # sit many orders of magnitude below unit size
        t = self._Ur.T @ e / self._s
        resid = float(np.linalg.norm(e - self._Ur @ (self._Ur.T @ e)))
        if resid > max(SPAN_TOL * np.linalg.norm(e), SPAN_FLOOR):
            raise OutOfTube(f"unplanned error leaves the span of the invariant set (residual {resid:.3g})")
        self.last_span_residual = resid
        tol = 1e-9 * max(1.0, np.abs(t).max())
        cost = np.zeros(nc + 1); cost[-1] = 1.0
        I = np.eye(nc)
        ones = np.ones((nc, 1))
        z = np.zeros((self._Vr.shape[0], 1))
        A_ub = np.vstack([
            np.hstack([I, -ones]),
            np.hstack([-I, -ones]),
            np.hstack([self._Vr, z]),
            np.hstack([-self._Vr, z]),
        ])
        b_ub = np.concatenate([np.zeros(2 * nc), t + tol, -t + tol])
        bounds = [(None, None)] * nc + [(0.0, None)]
        res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs", options=LP_OPTIONS)
        if res.status == 2:
            raise OutOfTube("unplanned error is outside the span of the invariant set")
        if res.status != 0:
            raise SolverToleranceError(f"selection LP failed: {res.message}")
        coords = res.x[:nc]
        return self.F @ coords, float(res.x[-1])


def minimal_selection_control(e_hat, design: CoalitionDesign) -> tuple:
    """Returns ``(f_hat, lam, out_of_tube)``; ``lam <= 1`` means ``e_hat`` is in the RCI set."""
    f, lam = TubeSelector(design.unplanned)(e_hat)
    return f, lam, lam > 1.0 + 1e-9


def rci_support(design: CoalitionDesign, direction, stage: str = "full") -> float:
    """Support of ``R_h`` for the full-interaction (``"full"``) or unplanned (``"unplanned"``) design."""
    result = design.full if stage == "full" else design.unplanned
    return support(rci_zonotope(result), direction)


def scale_disturbance(W: Zonotope, s: float) -> Zonotope:
    return scale(s, W)
