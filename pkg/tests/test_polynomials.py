import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convexcert.polynomials import (
    Polynomial,
    VariableSpace,
    coeff_linf_distance,
    evaluate_on_grid,
    lift,
    midpoint_substitute,
)

X1 = VariableSpace(1)
X2 = VariableSpace(2)


def poly(space, terms):
    return Polynomial(space, terms)


# -- hypothesis strategies -----------------------------------------------------

# keep magnitudes well above the dedup threshold so products of two
# coefficients can never straddle it and silently drop a leading term
coeffs = st.floats(min_value=-10, max_value=10, allow_nan=False, allow_infinity=False).filter(
    lambda v: v == 0.0 or abs(v) >= 1e-3
)


def polynomials(space, max_degree=3, max_terms=5):
    exps = st.tuples(*[st.integers(min_value=0, max_value=max_degree) for _ in range(space.arity)])
    return st.dictionaries(exps, coeffs, min_size=0, max_size=max_terms).map(
        lambda d: Polynomial(space, d)
    )


points = st.lists(st.floats(min_value=-2, max_value=2, allow_nan=False), min_size=2, max_size=2)


# -- arithmetic ------------------------------------------------------------------


def test_add_doubles():
    x = Polynomial.variable(X1, 0)
    assert (x + x).terms == {(1,): 2.0}


def test_mul_difference_of_squares():
    x = Polynomial.variable(X1, 0)
    product = (1 - x) * (1 + x)
    assert product == poly(X1, {(0,): 1.0, (2,): -1.0})


def test_scale_by_zero_annihilates():
    x = Polynomial.variable(X1, 0)
    result = (x * x) * 0.0
    assert result.terms == {}
    assert result.degree == 0
    assert result.is_zero()


def test_space_mismatch_rejected():
    with pytest.raises(ValueError):
        Polynomial.variable(X1, 0) + Polynomial.variable(X2, 0)


def test_dedup_threshold_drops_tiny_terms():
    p = poly(X1, {(1,): 1e-13})
    assert p.is_zero()


@settings(max_examples=60)
@given(polynomials(X2), polynomials(X2))
def test_mul_commutes(a, b):
    assert coeff_linf_distance(a * b, b * a) <= 1e-12


@settings(max_examples=60)
@given(polynomials(X2), polynomials(X2), polynomials(X2))
def test_mul_distributes_over_add(a, b, c):
    left = a * (b + c)
    right = a * b + a * c
    scale = 1.0 + max((abs(v) for p in (left, right) for v in p.terms.values()), default=0.0)
    assert coeff_linf_distance(left, right) <= 1e-12 * scale


@settings(max_examples=60)
@given(polynomials(X2, max_degree=2), polynomials(X2, max_degree=2))
def test_degree_additive_for_nonzero_products(a, b):
    product = a * b
    if a.is_zero() or b.is_zero() or product.is_zero():
        return
    assert product.degree == a.degree + b.degree


# -- evaluation -------------------------------------------------------------------


def test_evaluate_examples():
    g = poly(X1, {(0,): 1.0, (2,): -1.0})
    assert g.evaluate([2.0]) == -3.0
    xy = poly(X2, {(1, 1): 1.0})
    assert xy.evaluate([3.0, 4.0]) == 12.0
    assert Polynomial.zero(X2).evaluate([5.0, 6.0]) == 0.0


def test_evaluate_arity_mismatch():
    with pytest.raises(ValueError):
        poly(X1, {(1,): 1.0}).evaluate([1.0, 2.0])


def test_evaluate_on_grid_matches_pointwise():
    g = poly(X2, {(2, 0): 1.0, (1, 1): -0.5, (0, 0): 3.0})
    pts = np.array([[0.5, 1.5], [-1.0, 2.0], [0.0, 0.0]])
    vals = evaluate_on_grid(g, pts)
    for row, val in zip(pts, vals):
        assert val == pytest.approx(g.evaluate(row), abs=1e-14)


# -- midpoint substitution -----------------------------------------------------------


def test_midpoint_linear():
    x = Polynomial.variable(X1, 0)
    mid = midpoint_substitute(x)
    assert mid == poly(X1.lift(), {(1, 0): 0.5, (0, 1): 0.5})


def test_midpoint_square():
    x = Polynomial.variable(X1, 0)
    mid = midpoint_substitute(x * x)
    assert mid == poly(X1.lift(), {(2, 0): 0.25, (1, 1): 0.5, (0, 2): 0.25})


def test_midpoint_interval_constraint():
    g = poly(X1, {(0,): 1.0, (2,): -1.0})
    mid = midpoint_substitute(g)
    expected = poly(X1.lift(), {(0, 0): 1.0, (2, 0): -0.25, (1, 1): -0.5, (0, 2): -0.25})
    assert coeff_linf_distance(mid, expected) == 0.0
    rng = np.random.default_rng(7)
    for _ in range(20):
        a, b = rng.uniform(-3, 3, size=2)
        assert mid.evaluate([a, b]) == pytest.approx(g.evaluate([(a + b) / 2]), rel=1e-12, abs=1e-12)


def test_midpoint_rejects_lifted_input():
    with pytest.raises(ValueError):
        midpoint_substitute(Polynomial.variable(X1.lift(), 0))


@settings(max_examples=60)
@given(polynomials(X2, max_degree=3), points, points)
def test_midpoint_evaluation_identity(g, a, b):
    mid = midpoint_substitute(g)
    lhs = mid.evaluate(list(a) + list(b))
    rhs = g.evaluate([(u + v) / 2 for u, v in zip(a, b)])
    scale = 1.0 + abs(lhs) + abs(rhs)
    assert abs(lhs - rhs) <= 1e-10 * scale


def test_midpoint_preserves_degree():
    g = poly(X2, {(3, 1): 2.0, (0, 2): -1.0})
    assert midpoint_substitute(g).degree == g.degree


# -- lifting ------------------------------------------------------------------------


def test_lift_examples():
    g = poly(X1, {(0,): 1.0, (2,): -1.0})
    assert lift(g, "x") == poly(X1.lift(), {(0, 0): 1.0, (2, 0): -1.0})
    assert lift(g, "y") == poly(X1.lift(), {(0, 0): 1.0, (0, 2): -1.0})


@settings(max_examples=60)
@given(polynomials(X2, max_degree=3), points, points)
def test_lift_evaluation_identity(g, a, b):
    gx = lift(g, "x")
    gy = lift(g, "y")
    joint = list(a) + list(b)
    assert gx.evaluate(joint) == pytest.approx(g.evaluate(a), rel=1e-12, abs=1e-12)
    assert gy.evaluate(joint) == pytest.approx(g.evaluate(b), rel=1e-12, abs=1e-12)


@settings(max_examples=60)
@given(polynomials(X2, max_degree=3))
def test_lift_preserves_degree_and_coefficients(g):
    for side in ("x", "y"):
        lifted = lift(g, side)
        assert lifted.degree == g.degree
        assert sorted(lifted.terms.values()) == sorted(g.terms.values())


def test_lift_bad_side():
    with pytest.raises(ValueError):
        lift(Polynomial.variable(X1, 0), "z")


# -- coefficient distance ---------------------------------------------------------------


def test_distance_examples():
    g = poly(X1, {(0,): 1.0, (2,): -1.0})
    assert coeff_linf_distance(g, g) == 0.0
    h = g + poly(X1, {(1,): 1e-8})
    assert coeff_linf_distance(g, h) == pytest.approx(1e-8)


@settings(max_examples=60)
@given(polynomials(X2), polynomials(X2))
def test_distance_symmetric(a, b):
    assert coeff_linf_distance(a, b) == coeff_linf_distance(b, a)


# -- spaces -----------------------------------------------------------------------------


def test_variable_space_invariants():
    with pytest.raises(ValueError):
        VariableSpace(0)
    lifted = VariableSpace(3).lift()
    assert lifted.arity == 6
    assert lifted.variable_names() == ["x1", "x2", "x3", "y1", "y2", "y3"]
    with pytest.raises(ValueError):
        lifted.lift()


def test_power_matches_repeated_multiplication():
    g = poly(X1, {(0,): 1.0, (1,): 2.0})
    assert coeff_linf_distance(g**3, g * g * g) <= 1e-12
    assert (g**0) == Polynomial.constant(X1, 1.0)
