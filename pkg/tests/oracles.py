"""Independent reference computations used by the tests.

Nothing here calls into the package except for plain data types; every
oracle is a brute-force or closed-form restatement of the quantity tested.
"""
import itertools

import numpy as np


def rgs_partitions(M):
    """All set partitions of range(M) by recursive insertion (not RGS order)."""
    if M == 0:
        return [[]]
    out = []
    for p in rgs_partitions(M - 1):
        for k in range(len(p)):
            out.append([b + [M - 1] if i == k else list(b) for i, b in enumerate(p)])
        out.append([list(b) for b in p] + [[M - 1]])
    return out


def stirling_bell(M):
    S = [[0] * (M + 1) for _ in range(M + 1)]
    S[0][0] = 1
    for n in range(1, M + 1):
        for k in range(1, n + 1):
            S[n][k] = k * S[n - 1][k] + S[n - 1][k - 1]
    return sum(S[M])


def cover_edges(M):
    """Hasse edges by brute force: D < C with no partition strictly between."""
    parts = [frozenset(frozenset(b) for b in p) for p in rgs_partitions(M)]

    def leq(D, C):
        return all(any(b <= c for c in C) for b in D)

    edges = set()
    for D in parts:
        for C in parts:
            if D != C and leq(D, C):
                if not any(E not in (C, D) and leq(D, E) and leq(E, C) for E in parts):
                    edges.add((D, C))
    return edges


def horizon_qp_oracle(a, b, q, r, z0, L, xmax, umax, d=None):
    """Scalar finite-horizon QP solved by enumerating active sets of the KKT system.

    Minimises sum_{k<L} q z_k^2 + r v_k^2 subject to z_{k+1} = a z_k + b v_k + d_k,
    |z_k| <= xmax for 0 < k < L, |v_k| <= umax and z_L = 0. Returns (v, value)
    or None when infeasible.
    """
    d = np.zeros(L) if d is None else np.asarray(d, dtype=float)
    # z = F v + g, built by explicit recursion
    F = np.zeros((L + 1, L))
    g = np.zeros(L + 1)
    g[0] = z0
    for k in range(L):
        F[k + 1] = a * F[k]
        F[k + 1, k] += b
        g[k + 1] = a * g[k] + d[k]
    if abs(z0) > xmax + 1e-12:
        return None
    P = 2 * (q * F[:L].T @ F[:L] + r * np.eye(L))
    c = 2 * q * F[:L].T @ g[:L]
    const = q * g[:L] @ g[:L]
    Aeq, beq = F[L:L + 1], -g[L:L + 1]
    rows = []  # (row, rhs) for row @ v <= rhs
    for k in range(1, L):
        rows.append((F[k], xmax - g[k]))
        rows.append((-F[k], xmax + g[k]))
    for k in range(L):
        e = np.zeros(L); e[k] = 1.0
        rows.append((e, umax))
        rows.append((-e, umax))
    best = None
    pairs = len(rows) // 2
    for choice in itertools.product((None, 0, 1), repeat=pairs):
        act = [2 * i + s for i, s in enumerate(choice) if s is not None]
        A = np.vstack([Aeq] + [rows[i][0][None] for i in act])
        bb = np.concatenate([beq, [rows[i][1] for i in act]])
        K = np.block([[P, A.T], [A, np.zeros((A.shape[0], A.shape[0]))]])
        rhs = np.concatenate([-c, bb])
        sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
        if np.abs(K @ sol - rhs).max() > 1e-9:
            continue
        v, mu = sol[:L], sol[L + 1:]
        if any(rows[i][0] @ v > rows[i][1] + 1e-9 for i in range(len(rows))):
            continue
        if np.any(mu < -1e-9):
            continue
        val = 0.5 * v @ P @ v + c @ v + const
        if best is None or val < best[1] - 1e-12:
            best = (v, val)
    return best


def scalar_rci_grid(a, b, w, xmax, umax, h, q_eta=1.0, q_theta=1.0, steps=6001, span=3.0):
    """Optimal (eta, theta) of the scalar RCI LP by scanning the free gain.

    With D_h = 0 forced, the last gain is determined by the others, so for
    h <= 2 a one-dimensional scan over M_0 covers the whole feasible set.
    The scan is repeated on a finer grid around the coarse optimum.
    """
    def evaluate(gains):
        D = [1.0]
        for m in gains:
            D.append(a * D[-1] + b * m)
        eta = w * sum(abs(x) for x in D[:-1]) / xmax
        theta = w * sum(abs(m) for m in gains) / umax
        if eta > 1 or theta > 1:
            return None
        return (q_eta * eta + q_theta * theta, eta, theta, gains)

    def scan(ms):
        best = None
        for m0 in ms:
            out = evaluate((m0, -a * (a + b * m0) / b))
            if out is not None and (best is None or out[0] < best[0]):
                best = out
        return best

    if h == 1:
        return evaluate((-a / b,))
    if h != 2:
        raise ValueError("oracle covers h <= 2")
    coarse = np.linspace(-span, span, steps)
    best = scan(coarse)
    if best is None:
        return None
    step = coarse[1] - coarse[0]
    m0 = best[3][0]
    return scan(np.linspace(m0 - 2 * step, m0 + 2 * step, steps))
