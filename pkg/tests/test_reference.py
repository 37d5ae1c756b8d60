import numpy as np
import pytest

from dominative.model import ParameterDomainError, make_params
from dominative.operators import dominative
from dominative.reference import (BarrierFunction, barrier_dominative, barrier_drift_check,
                                  make_reference, pde_residual, validate_reference)

RNG = np.random.default_rng(3)
POINTS = RNG.uniform(-0.9, 0.9, size=(20, 2))
TIMES = RNG.uniform(0.0, 0.5, size=20)


@pytest.mark.parametrize("kind", ["constant", "linear", "quadratic_time", "cosh_exp"])
@pytest.mark.parametrize("scaling", ["standard", "remark24"])
def test_references_solve_the_pde(kind, scaling):
    par = make_params(2, 4, 0.1, scaling)
    sol = make_reference(kind, par)
    for x, t in zip(POINTS, TIMES):
        assert abs(pde_residual(sol, x, t, par)) < 1e-10
    validate_reference(sol, par, POINTS, TIMES)


@pytest.mark.parametrize("n,p", [(1, 3.0), (3, 5.5), (4, 2.5)])
def test_references_other_dimensions(n, p):
    par = make_params(n, p, 0.1)
    pts = np.random.default_rng(n).uniform(-0.5, 0.5, size=(5, n))
    for kind in ("quadratic_time", "cosh_exp"):
        sol = make_reference(kind, par)
        for x in pts:
            assert abs(pde_residual(sol, x, 0.3, par)) < 1e-10


def test_quadratic_time_values():
    par = make_params(2, 4, 0.1)
    sol = make_reference("quadratic_time", par)
    assert sol.speed == pytest.approx(2 * 4 / 12)
    assert float(sol(np.array([0.5, 0.0]), 0.3)) == pytest.approx(0.25 + 0.2)
    shifted = make_reference("quadratic_time", par, center=(0.1, 0.2))
    assert float(shifted(np.array([0.1, 0.2]), 0.0)) == pytest.approx(0.0)


def test_cosh_exp_rate():
    assert make_reference("cosh_exp", make_params(2, 4, 0.1)).kappa == pytest.approx(3 / 12)
    assert make_reference("cosh_exp", make_params(2, 4, 0.1, "remark24")).kappa == pytest.approx(3.0)


def test_validate_rejects_wrong_solution():
    par = make_params(2, 4, 0.1)

    class Wrong:
        kind = "wrong"

        def hessian(self, x, t):
            return np.eye(2)

        def time_derivative(self, x, t):
            return 0.0

    with pytest.raises(ValueError):
        validate_reference(Wrong(), par, POINTS[:2], TIMES[:2])
    with pytest.raises(ParameterDomainError):
        make_reference("nope", par)


def make_barrier(**kw):
    return BarrierFunction((1.25, 0.0), 0.25, 2.25, 2, 4.0, **kw)


def test_barrier_constants_and_boundary_values():
    w = make_barrier()
    assert w.xi == 2.0 and w.a == pytest.approx(3.0)
    assert float(w.radial(w.delta)) == pytest.approx(0.0, abs=1e-10)
    assert float(w.radial_derivative(w.R)) == pytest.approx(0.0, abs=1e-10)
    # w increases with distance from z inside the annulus
    r = np.linspace(w.delta, w.R, 50)
    assert np.all(np.diff(w.radial(r)) > 0)


def test_barrier_dominative_is_constant():
    w = make_barrier()
    par = make_params(2, 4, 0.01)
    z = np.array(w.z)
    th = np.linspace(0, 2 * np.pi, 17)
    target = -2 * w.a * (2 + 4 - 2)
    for r in np.linspace(w.delta, w.R, 9):
        for a in th:
            x = z + r * np.array([np.cos(a), np.sin(a)])
            assert barrier_dominative(w, x, par) == pytest.approx(target, rel=1e-9)
    with pytest.raises(ValueError):
        barrier_dominative(w, z + 0.1 * np.array([1.0, 0.0]), par)


def test_barrier_hessian_matches_finite_differences():
    w = make_barrier()
    x = np.array([1.25 - 0.8, 0.3])
    h = 1e-4
    H = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            ei, ej = np.eye(2)[i] * h, np.eye(2)[j] * h
            H[i, j] = (w.value(x + ei + ej) - w.value(x + ei - ej)
                       - w.value(x - ei + ej) + w.value(x - ei - ej)) / (4 * h * h)
    assert np.allclose(H, w.hessian(x), atol=1e-5)


def test_barrier_rejects_bad_geometry():
    with pytest.raises(ParameterDomainError):
        BarrierFunction((0.0, 0.0), 1.0, 0.5, 2, 4.0)
    with pytest.raises(ParameterDomainError):
        BarrierFunction((0.0,), 0.25, 1.0, 1, 4.0)


def test_barrier_drift_is_negative():
    w = make_barrier()
    par = make_params(2, 4, 0.01)
    z = np.array(w.z)
    probes = [z - 1.5 * w.delta * np.array([1.0, 0.0]), z - 1.25 * np.array([1.0, 0.0])]
    rep = barrier_drift_check(w, par, probes, m=20_000, seed=1)
    assert rep.passed
    assert np.all(rep.quadrature_increments <= rep.threshold)
    # lattice rule and Monte Carlo agree up to the lattice error near the singularity
    assert np.allclose(rep.increments, rep.quadrature_increments, rtol=0.03)


def test_quadratic_only_drift_is_exact():
    # with b = 0 the increment equals eps^2 * D_p w / (2(n+p)) exactly
    w = make_barrier(quadratic_only=True)
    par = make_params(2, 4, 0.01)
    x = np.array([0.5, 0.2])
    rep = barrier_drift_check(w, par, [x], m=2_000, seed=0)
    expected = par.epsilon**2 * dominative(w.hessian(x), par) / (2 * 6)
    assert rep.increments[0] == pytest.approx(expected, rel=1e-9)
    assert rep.quadrature_increments[0] == pytest.approx(expected, rel=1e-9)


def test_barrier_drift_probe_checks():
    w = make_barrier()
    z = np.array(w.z)
    with pytest.raises(ValueError):
        barrier_drift_check(w, make_params(2, 4, 0.2), [z - 0.5 * np.array([1.0, 0.0])])
    with pytest.raises(ValueError):
        barrier_drift_check(w, make_params(2, 4, 0.01), [z - 0.255 * np.array([1.0, 0.0])])
