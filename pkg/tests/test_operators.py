import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dominative.model import make_params
from dominative.operators import (FiniteDifferenceField, ball_rule, direction_set, dominative,
                                  jacobi_eigenvalues, lambda_max, mean_value_lhs,
                                  mean_value_residual, sup_midpoint, unique_directions)
from dominative.reference import make_reference

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def sym(n):
    return arrays(float, (n, n), elements=finite).map(lambda A: 0.5 * (A + A.T))


def test_lambda_max_examples():
    assert lambda_max(np.diag([1.0, 3.0])) == pytest.approx(3.0)
    assert lambda_max(np.array([[0.0, 1.0], [1.0, 0.0]])) == pytest.approx(1.0)
    assert lambda_max(np.diag([-1.0, -2.0, -5.0])) == pytest.approx(-1.0)
    assert lambda_max(np.array([[7.0]])) == 7.0
    with pytest.raises(ValueError):
        lambda_max(np.ones((2, 3)))
    with pytest.raises(ValueError):
        lambda_max(np.array([[np.nan, 0], [0, 1.0]]))


@pytest.mark.parametrize("n", [2, 3, 4, 5])
@settings(max_examples=30, deadline=None)
@given(data=st.data())
def test_lambda_max_matches_eigh(n, data):
    H = data.draw(sym(n))
    ref = np.linalg.eigvalsh(H)
    assert lambda_max(H) == pytest.approx(ref[-1], abs=1e-9 * max(1, np.abs(ref).max()))
    assert np.allclose(jacobi_eigenvalues(H), ref, atol=1e-9 * max(1, np.abs(ref).max()))


@settings(max_examples=50, deadline=None)
@given(sym(3), st.floats(0.0, 5.0), st.floats(-5, 5))
def test_lambda_max_homogeneous_and_shift(H, c, s):
    assert lambda_max(c * H) == pytest.approx(c * lambda_max(H), abs=1e-8)
    assert lambda_max(H + s * np.eye(3)) == pytest.approx(lambda_max(H) + s, abs=1e-8)


def test_dominative_examples():
    par = make_params(2, 4, 0.1)
    assert dominative(np.eye(2), par) == pytest.approx(4.0)
    assert dominative(np.diag([1.0, -1.0]), par) == pytest.approx(2.0)
    assert dominative(np.zeros((2, 2)), par) == 0.0
    assert dominative(2 * np.eye(2), par) == pytest.approx(8.0)
    assert dominative(np.diag([1.0, 3.0]), par) == pytest.approx(10.0)
    assert lambda_max(2 * np.eye(2)) == pytest.approx(2.0)


@settings(max_examples=50, deadline=None)
@given(sym(4))
def test_lambda_max_at_least_mean_eigenvalue(H):
    assert lambda_max(H) >= np.trace(H) / 4 - 1e-9


@settings(max_examples=20, deadline=None)
@given(st.floats(-100, 100))
def test_mean_value_lhs_shift_equivariant(c):
    par = make_params(2, 4, 0.1)
    v = lambda X, t: np.sin(np.asarray(X)[..., 0]) * np.exp(t) + np.asarray(X)[..., 1] ** 2
    a = mean_value_lhs(v, np.array([0.2, 0.1]), 0.3, par)
    b = mean_value_lhs(lambda X, t: v(X, t) + c, np.array([0.2, 0.1]), 0.3, par)
    assert b - a == pytest.approx(c, abs=1e-12 * max(1.0, abs(c)))


def test_mean_value_fixed_points():
    par = make_params(3, 5, 0.1)
    x = np.array([0.1, -0.2, 0.3])
    assert mean_value_lhs(lambda X, t: np.full(np.shape(X)[:-1], 7.0), x, 0.2, par) == pytest.approx(7.0)
    a = np.array([1.0, -2.0, 0.5])
    assert mean_value_lhs(lambda X, t: np.asarray(X) @ a, x, 0.2, par) == pytest.approx(x @ a, abs=1e-14)


@settings(max_examples=50, deadline=None)
@given(sym(3), arrays(float, (3,), elements=st.floats(0, 5)), st.floats(2.01, 10))
def test_dominative_monotone_and_sublinear(H, d, p):
    par = make_params(3, p, 0.1)
    tol = 1e-8 * (1 + np.abs(H).max() + d.max())
    # adding a nonnegative matrix cannot decrease the operator
    assert dominative(H + np.diag(d), par) >= dominative(H, par) - tol
    G = np.diag(d) - np.diag(d[::-1])
    assert dominative(H + G, par) <= dominative(H, par) + dominative(G, par) + tol
    assert dominative(2.5 * H, par) == pytest.approx(2.5 * dominative(H, par), abs=tol * 3)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_ball_rule_moments(n):
    eps = 0.1
    rule = ball_rule(n, eps)
    assert rule.weights.sum() == pytest.approx(1.0)
    assert np.all(rule.weights > 0)
    assert np.all(np.linalg.norm(rule.offsets, axis=1) <= eps * (1 + 1e-12))
    assert np.allclose(rule.weights @ rule.offsets, 0.0, atol=1e-15)
    second = rule.weights @ np.sum(rule.offsets**2, axis=1)
    assert second == pytest.approx(eps**2 * n / (n + 2), rel=1e-12)
    if n > 1:
        cov = (rule.offsets * rule.weights[:, None]).T @ rule.offsets
        assert np.allclose(cov, np.eye(n) * eps**2 / (n + 2), atol=1e-15)


def test_node_aligned_ball_rule():
    rule = ball_rule(2, 0.1, spacing=0.0125)
    ratio = rule.offsets / 0.0125
    assert np.allclose(ratio, np.round(ratio))
    assert rule.weights @ np.sum(rule.offsets**2, axis=1) == pytest.approx(0.01 / 2)


def test_direction_sets():
    assert direction_set(1).shape == (1, 1)
    d2 = direction_set(2)
    assert d2.shape == (64, 2)
    assert np.allclose(np.linalg.norm(d2, axis=1), 1)
    assert unique_directions(d2).shape == (32, 2)
    d3 = direction_set(3)
    assert d3.shape == (256, 3)
    assert np.allclose(np.linalg.norm(d3, axis=1), 1)


def test_sup_midpoint_quadratic_form():
    # for v = x^T A x the sup of the midpoint is v(0) + eps^2 * lambda_max(A)
    A = np.array([[2.0, 0.7], [0.7, -1.0]])
    v = lambda X, t: np.einsum("...i,ij,...j->...", X, A, X)
    eps = 0.1
    got = sup_midpoint(v, np.zeros(2), 0.0, eps, 2)
    assert got == pytest.approx(eps**2 * lambda_max(A), rel=1e-10)


def test_mean_value_exact_for_squared_norm():
    par = make_params(2, 4, 0.1)
    v = lambda X, t: np.sum(np.asarray(X) ** 2, axis=-1)
    lhs = mean_value_lhs(v, np.zeros(2), 0.3, par)
    expected = par.epsilon**2 * (par.n + par.p - 2) / (par.n + par.p)
    assert lhs == pytest.approx(expected, abs=1e-10)


def test_mean_value_exact_for_quadratic_time_solution():
    par = make_params(2, 4, 0.1)
    sol = make_reference("quadratic_time", par)
    for x in ([0.0, 0.0], [0.3, -0.4]):
        rep = mean_value_residual(sol, np.array(x), 0.4, par)
        assert abs(rep.residual) < 1e-12
        assert rep.lhs == pytest.approx(float(sol(np.array(x), 0.4)), abs=1e-12)


@pytest.mark.parametrize("scaling", ["standard", "remark24"])
def test_mean_value_residual_is_higher_order(scaling):
    par = make_params(2, 4, 0.2, scaling)
    sol = make_reference("cosh_exp", par)
    x = np.array([0.3, -0.2])
    scaled = []
    for eps in (0.2, 0.1, 0.05):
        rep = mean_value_residual(sol, x, 0.25, par.with_epsilon(eps))
        scaled.append(abs(rep.residual) / eps**2)
    assert scaled[1] < scaled[0] and scaled[2] < scaled[1]


def test_finite_difference_field_matches_analytic():
    par = make_params(2, 4, 0.1)
    sol = make_reference("cosh_exp", par)
    fd = FiniteDifferenceField(sol.value, 1e-4)
    x = np.array([0.4, 0.1])
    assert np.allclose(fd.hessian(x, 0.2), sol.hessian(x, 0.2), atol=1e-6)
    assert fd.time_derivative(x, 0.2) == pytest.approx(sol.time_derivative(x, 0.2), rel=1e-6)
    assert np.allclose(fd.gradient(x, 0.2), sol.gradient(x, 0.2), atol=1e-7)


def test_mean_value_lhs_rejects_nonfinite():
    par = make_params(2, 4, 0.1)
    with pytest.raises(ValueError):
        mean_value_lhs(lambda X, t: np.full(np.shape(X)[:-1], math.nan), np.zeros(2), 0.1, par)
