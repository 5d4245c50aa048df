"""Dense convex QP wrapper around quadprog with certified infeasibility.

Problems are posed as ``min 1/2 y'Py + q'y`` s.t. ``A_eq y = b_eq`` and
``A_in y <= b_in``. quadprog's dual active-set method either returns the
optimum or proves the constraints inconsistent, so infeasibility never
comes from a timeout.
"""
from __future__ import annotations

import numpy as np
import quadprog

from .errors import SolverToleranceError

RANK_TOL = 1e-10
KKT_TOL = 1e-8
# inequality bounds are widened by this relative amount so that sets with a
# single feasible point on the boundary are not rejected by round-off
BOUND_SLACK = 1e-10
# constant rows (fixed initial states) get a looser check so that a point
# produced by one relaxed solve is accepted by the next
CONST_TOL = 1e-9


class QPInfeasible(Exception):
    pass


def _reduce_equalities(A, b):
    if A.shape[0] == 0:
        return A, b
    U, s, Vt = np.linalg.svd(A, full_matrices=True)
    scale = max(1.0, s[0] if s.size else 0.0)
    r = int(np.sum(s > RANK_TOL * scale))
    proj = U.T @ b
    if r < A.shape[0]:
        resid = np.abs(proj[r:]).max()
        if resid > 1e-9 * max(1.0, np.abs(b).max()):
            raise QPInfeasible(f"inconsistent equality constraints (residual {resid:.3g})")
    return np.diag(s[:r]) @ Vt[:r], proj[:r]


def solve_qp(P, q, A_eq=None, b_eq=None, A_in=None, b_in=None):
    """Returns ``(y, value)`` with ``value = 1/2 y'Py + q'y``.

    Inequality rows with a zero-width bound pair are fine: they are handled
    by the caller converting them to equalities, or by ``BOUND_SLACK``.
    """
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float).ravel()
    nv = q.size
    A_eq = np.zeros((0, nv)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, nv)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    A_in = np.zeros((0, nv)) if A_in is None else np.asarray(A_in, dtype=float).reshape(-1, nv)
    b_in = np.zeros(0) if b_in is None else np.asarray(b_in, dtype=float).ravel()
    # drop all-zero inequality rows after checking them
    zero_rows = ~np.any(A_in != 0, axis=1)
    if np.any(b_in[zero_rows] < -CONST_TOL * np.maximum(1.0, np.abs(b_in[zero_rows]))):
        raise QPInfeasible("constant inequality violated")
    A_in, b_in = A_in[~zero_rows], b_in[~zero_rows]
    Ae, be = _reduce_equalities(A_eq, b_eq)
    b_relaxed = b_in + BOUND_SLACK * np.maximum(1.0, np.abs(b_in))

    P_sym = 0.5 * (P + P.T)
    C = np.vstack([Ae, -A_in]).T
    b = np.concatenate([be, -b_relaxed])
    if C.shape[1] == 0:
        C = np.zeros((nv, 1))
        b = np.array([-1.0])
    try:
        y, _, _, _, lagr, _ = quadprog.solve_qp(P_sym, -q, C, b, Ae.shape[0])
    except ValueError as exc:
        if "inconsistent" in str(exc):
            raise QPInfeasible(str(exc)) from exc
        raise SolverToleranceError(f"quadprog failed: {exc}") from exc

    viol_eq = np.abs(A_eq @ y - b_eq).max(initial=0.0) if A_eq.shape[0] else 0.0
    viol_in = np.max((A_in @ y - b_in) / np.maximum(1.0, np.abs(b_in)), initial=0.0)
    stat = P_sym @ y + q - C @ lagr
    stat_scale = max(1.0, np.abs(q).max(initial=0.0), np.abs(P_sym @ y).max(initial=0.0))
    if viol_eq > KKT_TOL * max(1.0, np.abs(b_eq).max(initial=0.0)) or viol_in > KKT_TOL:
        raise SolverToleranceError(f"constraint violation {max(viol_eq, viol_in):.3g}")
    if np.abs(stat).max(initial=0.0) > KKT_TOL * stat_scale:
        raise SolverToleranceError(f"KKT stationarity residual {np.abs(stat).max():.3g}")
    return y, float(0.5 * y @ P_sym @ y + q @ y)
