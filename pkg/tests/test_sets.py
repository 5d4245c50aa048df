import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from coalmpc.sets import (SymBox, Zonotope, axis_supports, box_product, contained_in_scaled_box,
                          linear_image, minkowski_sum, scale, support)

finite = st.floats(-10, 10, allow_nan=False)


def gens(dim, p):
    return arrays(float, (dim, p), elements=finite)


def test_box_rejects_negative_halfwidth():
    with pytest.raises(ValueError):
        SymBox([1.0, -0.1])


def test_box_pc_and_contains():
    B = SymBox([2.0, 0.0])
    assert not B.is_pc_set
    assert B.contains([2.0, 0.0])
    assert not B.contains([2.0, 1e-9])
    assert B.contains([2.0, 1e-9], tol=1e-8)


def test_box_product_concatenates():
    assert box_product([SymBox([1.0]), SymBox([2.0, 3.0])]).halfwidths.tolist() == [1, 2, 3]


def test_zero_zonotope_support_is_zero():
    Z = Zonotope.zero(3)
    assert Z.is_zero() and support(Z, [1, -2, 3]) == 0.0


def test_support_of_box_is_l1_weighted():
    Z = SymBox([1.0, 2.0]).as_zonotope()
    assert support(Z, [3.0, -1.0]) == pytest.approx(5.0)


def test_support_direction_dim_checked():
    with pytest.raises(ValueError):
        support(Zonotope(np.eye(2)), [1.0])


@settings(max_examples=60, deadline=None)
@given(G=gens(3, 4), d=arrays(float, 3, elements=finite))
def test_support_matches_vertex_enumeration(G, d):
    # brute-force over the 2^p sign vectors
    signs = np.array(np.meshgrid(*[[-1, 1]] * G.shape[1])).reshape(G.shape[1], -1)
    brute = np.max(d @ G @ signs)
    assert support(Zonotope(G), d) == pytest.approx(brute, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(G1=gens(2, 3), G2=gens(2, 2), d=arrays(float, 2, elements=finite))
def test_support_additive_under_minkowski_sum(G1, G2, d):
    Z1, Z2 = Zonotope(G1), Zonotope(G2)
    assert support(minkowski_sum(Z1, Z2), d) == pytest.approx(support(Z1, d) + support(Z2, d), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(G=gens(2, 3), A=arrays(float, (3, 2), elements=finite), d=arrays(float, 3, elements=finite))
def test_linear_image_support_identity(G, A, d):
    assert support(linear_image(A, Zonotope(G)), d) == pytest.approx(support(Zonotope(G), A.T @ d), abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(G=gens(2, 3), s=st.floats(0, 5))
def test_scale_is_homogeneous(G, s):
    Z = Zonotope(G)
    assert np.allclose(axis_supports(scale(s, Z)), s * axis_supports(Z))


def test_containment_boundary_counts_inside():
    Z = Zonotope([[1.0, 0.5], [0.0, 0.5]])
    B = SymBox([3.0, 1.0])
    assert contained_in_scaled_box(Z, B, 0.5)
    assert not contained_in_scaled_box(Z, B, 0.49)


def test_containment_scale_range_checked():
    with pytest.raises(ValueError):
        contained_in_scaled_box(Zonotope.zero(1), SymBox([1.0]), 1.5)


def test_dimension_mismatch_raises():
    with pytest.raises(ValueError):
        minkowski_sum(Zonotope.zero(2), Zonotope.zero(3))
    with pytest.raises(ValueError):
        linear_image(np.eye(2), Zonotope.zero(3))
