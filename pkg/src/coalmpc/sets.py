"""Origin-symmetric convex sets: axis-aligned boxes and zonotopes.

Every set here is symmetric about the origin, so an inclusion into a box
only needs the support function along the coordinate axes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _frozen(a, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=float, ndmin=ndim)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SymBox:
    """The box ``{x : |x_i| <= h_i}``."""

    halfwidths: np.ndarray

    def __post_init__(self):
        h = _frozen(self.halfwidths, 1)
        if h.ndim != 1:
            raise ValueError("halfwidths must be a vector")
        if np.any(h < 0) or not np.all(np.isfinite(h)):
            raise ValueError(f"halfwidths must be finite and >= 0, got {h}")
        object.__setattr__(self, "halfwidths", h)

    @property
    def dim(self) -> int:
        return self.halfwidths.size

    @property
    def is_pc_set(self) -> bool:
        return bool(np.all(self.halfwidths > 0))

    def scaled(self, s: float) -> "SymBox":
        return SymBox(s * self.halfwidths)

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(np.abs(x) <= self.halfwidths + tol))

    def as_zonotope(self) -> "Zonotope":
        return Zonotope(np.diag(self.halfwidths))

    def __repr__(self):
        return f"SymBox({self.halfwidths.tolist()})"


def box_product(boxes) -> SymBox:
    return SymBox(np.concatenate([b.halfwidths for b in boxes]))


@dataclass(frozen=True, eq=False)
class Zonotope:
    """Origin-centred zonotope ``{G @ lam : |lam|_inf <= 1}``.

    ``generators`` is stored as a ``dim x p`` matrix, one generator per
    column. ``p`` may be zero (the set ``{0}``).
    """

    generators: np.ndarray

    def __post_init__(self):
        G = np.array(self.generators, dtype=float)
        if G.ndim == 1:
            G = G.reshape(-1, 1)
        if G.ndim != 2:
            raise ValueError("generators must be a dim x p matrix")
        G.setflags(write=False)
        object.__setattr__(self, "generators", G)

    @classmethod
    def zero(cls, dim: int) -> "Zonotope":
        return cls(np.zeros((dim, 0)))

    @property
    def dim(self) -> int:
        return self.generators.shape[0]

    @property
    def order(self) -> int:
        return self.generators.shape[1]

    def is_zero(self, tol: float = 0.0) -> bool:
        return self.order == 0 or bool(np.all(np.abs(self.generators) <= tol))

    def __repr__(self):
        return f"Zonotope(dim={self.dim}, order={self.order})"


def support(Z: Zonotope, d) -> float:
    """Support function ``max_{z in Z} d.z = sum_j |d.g_j|``."""
    d = np.asarray(d, dtype=float).ravel()
    if d.size != Z.dim:
        raise ValueError(f"direction has dim {d.size}, zonotope has dim {Z.dim}")
    return float(np.sum(np.abs(d @ Z.generators)))


def axis_supports(Z: Zonotope) -> np.ndarray:
    """Support along every coordinate axis, i.e. the tightest bounding box."""
    return np.sum(np.abs(Z.generators), axis=1)


def linear_image(A, Z: Zonotope) -> Zonotope:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[1] != Z.dim:
        raise ValueError(f"map has {A.shape[1]} columns, zonotope has dim {Z.dim}")
    return Zonotope(A @ Z.generators)


def minkowski_sum(Z1: Zonotope, Z2: Zonotope) -> Zonotope:
    if Z1.dim != Z2.dim:
        raise ValueError(f"dimension mismatch: {Z1.dim} vs {Z2.dim}")
    return Zonotope(np.hstack([Z1.generators, Z2.generators]))


def scale(s: float, Z: Zonotope) -> Zonotope:
    return Zonotope(s * Z.generators)


def contained_in_scaled_box(Z: Zonotope, B: SymBox, s: float, tol: float = 0.0) -> bool:
    """True iff ``Z`` lies inside ``s * B``; boundary contact counts as inside."""
    if Z.dim != B.dim:
        raise ValueError(f"dimension mismatch: {Z.dim} vs {B.dim}")
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"scale must be in [0, 1], got {s}")
    return bool(np.all(axis_supports(Z) <= s * B.halfwidths + tol))
