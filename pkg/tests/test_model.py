import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dominative.model import (Ball, BoundaryStrip, Box, ConstantPayoff, LinearPayoff,
                              ParameterDomainError, ShiftedPayoff, SpaceTimeDomain,
                              TabulatedPayoff, dist_to_lateral_boundary, game_strip, make_params)


@given(st.integers(1, 5), st.floats(2.001, 50), st.floats(0.001, 0.999))
def test_probabilities_sum_to_one(n, p, eps):
    par = make_params(n, p, eps)
    assert 0 < par.alpha < 1 and 0 < par.beta < 1
    assert par.alpha + par.beta == pytest.approx(1.0, abs=1e-15)


def test_known_probabilities():
    par = make_params(2, 4, 0.1)
    assert par.alpha == pytest.approx(1 / 3)
    assert par.beta == pytest.approx(2 / 3)
    assert par.time_step == pytest.approx(0.01)


def test_remark24_time_step():
    par = make_params(2, 4, 0.1, "remark24")
    assert par.time_step == pytest.approx(0.01 / 12)
    assert par.time_coefficient == 1.0
    assert make_params(2, 4, 0.1).time_coefficient == 12.0


@pytest.mark.parametrize("n,p,eps,scaling", [
    (2, 2.0, 0.1, "standard"),
    (2, 1.5, 0.1, "standard"),
    (0, 4.0, 0.1, "standard"),
    (2, 4.0, 0.0, "standard"),
    (2, 4.0, 1.0, "standard"),
    (2, float("inf"), 0.1, "standard"),
    (2, 4.0, 0.1, "weird"),
])
def test_parameter_domain(n, p, eps, scaling):
    with pytest.raises(ParameterDomainError):
        make_params(n, p, eps, scaling)


def test_with_epsilon_keeps_scaling():
    par = make_params(3, 5, 0.2, "remark24").with_epsilon(0.05)
    assert par.epsilon == 0.05 and par.scaling == "remark24" and par.n == 3


def test_shapes():
    box = Box((-1, -1), (1, 1))
    assert box.contains(np.array([0.0, 0.0]))
    assert not box.contains(np.array([1.0, 0.0]))  # open set
    assert box.signed_distance(np.array([0.5, 0.0])) == pytest.approx(-0.5)
    assert box.signed_distance(np.array([2.0, 2.0])) == pytest.approx(np.sqrt(2))
    ball = Ball((0, 0), 1.0)
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.5]])
    assert ball.contains(pts).tolist() == [True, False, False]
    d, inside = dist_to_lateral_boundary(ball, pts)
    assert np.allclose(d, [1.0, 0.0, 0.5])
    assert inside.tolist() == [True, False, False]
    with pytest.raises(ParameterDomainError):
        Box((0, 0), (0, 1))
    with pytest.raises(ParameterDomainError):
        Ball((0, 0), 0.0)


def test_domain_checks():
    dom = SpaceTimeDomain(Ball((0, 0), 1.0), 0.5)
    dom.check_params(make_params(2, 4, 0.1))
    with pytest.raises(ParameterDomainError):
        dom.check_params(make_params(3, 4, 0.1))
    with pytest.raises(ParameterDomainError):
        SpaceTimeDomain(Ball((0, 0), 1.0), 0.005).check_params(make_params(2, 4, 0.1))
    with pytest.raises(ParameterDomainError):
        SpaceTimeDomain(Ball((0, 0), 1.0), 0.0)


def test_game_strip_membership():
    dom = SpaceTimeDomain(Ball((0, 0), 1.0), 0.5)
    par = make_params(2, 4, 0.1)
    strip = game_strip(dom, par)
    # lateral part at positive times
    assert strip.contains(np.array([1.05, 0.0]), 0.3)
    assert not strip.contains(np.array([1.2, 0.0]), 0.3)
    # bottom layer inside the domain
    assert strip.contains(np.array([0.0, 0.0]), 0.0)
    assert strip.contains(np.array([0.0, 0.0]), -0.01)
    assert not strip.contains(np.array([0.0, 0.0]), -0.02)
    # open cylinder is disjoint from the strip
    assert not strip.contains(np.array([0.0, 0.0]), 0.3)


@settings(max_examples=50)
@given(st.floats(0.01, 0.4), st.floats(0.0, 0.4),
       st.floats(-1.6, 1.6), st.floats(-1.6, 1.6), st.floats(-0.2, 0.6))
def test_strip_monotone_in_width(w1, dw, x, y, t):
    dom = SpaceTimeDomain(Ball((0, 0), 1.0), 0.5)
    small = BoundaryStrip(dom, w1, 0.1)
    big = BoundaryStrip(dom, w1 + dw, 0.1)
    pt = np.array([x, y])
    if small.contains(pt, t):
        assert big.contains(pt, t)


def test_payoffs():
    x = np.array([[1.0, 2.0], [3.0, -1.0]])
    assert np.allclose(ConstantPayoff(2.5)(x, 0.1), 2.5)
    assert np.allclose(LinearPayoff((1.0, 2.0), 0.5)(x, 0.1), [5.5, 1.5])
    assert np.allclose(ShiftedPayoff(ConstantPayoff(1.0), 0.25)(x, 0.0), 1.25)


def test_tabulated_payoff_reproduces_bilinear_data():
    axes = (np.linspace(-1, 1, 5), np.linspace(-1, 1, 7))
    times = np.array([-0.1, 0.0, 0.5])
    T, X, Y = np.meshgrid(times, *axes, indexing="ij")
    vals = 1 + 2 * X - Y + 3 * T
    F = TabulatedPayoff(axes, times, vals)
    pts = np.array([[0.3, -0.2], [-0.7, 0.9]])
    assert np.allclose(F(pts, 0.2), 1 + 2 * pts[:, 0] - pts[:, 1] + 0.6)
    assert F(np.array([0.3, -0.2]), 0.2) == pytest.approx(1 + 0.6 + 0.2 + 0.6)
    with pytest.raises(ParameterDomainError):
        TabulatedPayoff(axes, times, vals[:, :3])
