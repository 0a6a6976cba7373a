"""Reference interpolants and the one-point protocol family."""

import numpy as np
import pytest
from numpy.polynomial import polynomial as npoly
from scipy.integrate import quad

from trapshuttle.trajectory import (
    DELTA,
    OnePointProtocol,
    eval_derivatives,
    make_reference,
    one_point_trajectories,
    solve_boundary_coefficients,
)

ORDERS = (5, 7, 9)


def test_order5_coefficients_match_printed_form():
    ref = make_reference(1.0, 1.0, 5)
    assert np.allclose(ref.coeffs, [0, 0, 0, 10, -15, 6], rtol=0, atol=0)


@pytest.mark.parametrize("order", ORDERS)
def test_frozen_coefficients_solve_boundary_system(order):
    # dual route: frozen tables vs the linear-system solver kept as oracle
    ref = make_reference(1.0, 1.0, order)
    solved = solve_boundary_coefficients(order)
    assert np.allclose(ref.coeffs, solved, rtol=0, atol=1e-9)


@pytest.mark.parametrize("order", ORDERS)
def test_boundary_conditions(order):
    d, t_f = 2.3, 1.7
    ref = make_reference(d, t_f, order)
    m = (order - 1) // 2
    assert ref(0.0) == 0.0
    assert abs(ref(t_f) - d) < 1e-14 * d
    for k in range(1, m + 1):
        assert abs(ref(0.0, k)) < 1e-12
        assert abs(ref(t_f, k)) < 1e-10 * d / t_f**k


@pytest.mark.parametrize("order", ORDERS)
def test_midpoint_symmetry(order):
    d, t_f = 1.0, 2.0
    ref = make_reference(d, t_f, order)
    assert abs(ref(t_f / 2) - d / 2) < 1e-14
    assert abs(ref(t_f / 2, 2)) < 1e-13


@pytest.mark.parametrize("order", ORDERS)
def test_monotone_increasing(order):
    ref = make_reference(1.0, 1.0, order)
    xs = ref(np.linspace(0, 1, 2001))
    assert np.all(np.diff(xs) > 0)


def test_order5_peak_acceleration():
    # oracle: maximize the acceleration polynomial by its critical points
    d, t_f = 3.0, 0.5
    ref = make_reference(d, t_f, 5)
    acc_coeffs = npoly.polyder([0, 0, 0, 10, -15, 6], 2)
    crit = np.roots(np.polyder(np.array(acc_coeffs[::-1], dtype=float)))
    crit = crit[(crit > 0) & (crit < 1)].real
    s_star = crit[np.argmax(npoly.polyval(crit, acc_coeffs))]
    assert abs(s_star - (3 - np.sqrt(3)) / 6) < 1e-12
    peak = ref(s_star * t_f, 2)
    assert abs(peak - 10 * d / (np.sqrt(3) * t_f**2)) < 1e-10
    assert abs(peak * t_f**2 / d - 5.7735026918962573) < 1e-12


def test_eval_derivatives_values_and_errors():
    ref = make_reference(1.0, 1.0, 5)
    assert eval_derivatives(ref, 0.0, 2) == pytest.approx([0, 0, 0], abs=0)
    assert abs(eval_derivatives(ref, 0.5, 2)[2]) < 1e-13
    with pytest.raises(ValueError):
        eval_derivatives(ref, -1e-9, 2)
    with pytest.raises(ValueError):
        eval_derivatives(ref, 1.0 + 1e-9, 2)
    with pytest.raises(ValueError):
        eval_derivatives(ref, 0.5, 6)


def test_dimensionless_rescaling():
    # one coefficient set serves every (d, t_f)
    a = make_reference(1.0, 1.0, 7)
    b = make_reference(4.2, 0.31, 7)
    s = np.linspace(0, 1, 17)
    assert np.allclose(b(s * 0.31) / 4.2, a(s), rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("order,expected", [(5, 3.0), (7, 4.0), (9, 5.0)])
def test_edge_scaling_matches_boundary_multiplicity(order, expected):
    # |x/d - 1| ~ |t/t_f - 1|^((p+1)/2): the zero at t_f has multiplicity
    # one plus the number of vanishing derivatives there.  Evaluated via
    # the shifted polynomial to dodge cancellation at small distances.
    ref = make_reference(1.0, 1.0, order)
    shifted = npoly.Polynomial(ref.coeffs)(npoly.Polynomial([1.0, -1.0]))
    qc = shifted.coef.copy()
    qc[0] -= 1.0  # exact: the boundary values are small integers
    es = np.logspace(-6, -3, 40)
    vals = np.abs(npoly.polyval(es, qc))
    slope = np.polyfit(np.log(es), np.log(vals), 1)[0]
    assert slope == pytest.approx(expected, abs=0.02)


def test_invalid_construction():
    for bad in (4, 6, 11, 0):
        with pytest.raises(ValueError):
            make_reference(1.0, 1.0, bad)
    with pytest.raises(ValueError):
        make_reference(-1.0, 1.0, 5)
    with pytest.raises(ValueError):
        make_reference(1.0, 0.0, 5)


# one-point protocol


def test_g_boundary_and_integral_relations():
    d, omega0, t_f = 2.0, 3.0, 1.3
    p = OnePointProtocol(d=d, omega0=omega0, t_f=t_f)
    assert p.g(0.0) == 0.0 and p.g(t_f) == 0.0
    h = 1e-7
    assert abs(p.g(h) - p.g(0.0)) / h < 1e-4      # gdot(0) = 0
    assert abs(p.g(t_f) - p.g(t_f - h)) / h < 1e-4
    total, _ = quad(p.g, 0.0, t_f, epsabs=1e-14, limit=200)
    assert abs(total) < 1e-10 * d / (omega0**2 * t_f)

    def inner(tp):
        val, _ = quad(p.g, 0.0, tp, epsabs=1e-14, limit=200)
        return val

    double, _ = quad(inner, 0.0, t_f, epsabs=1e-14, limit=200)
    assert double == pytest.approx(d / omega0**2, rel=1e-10)


def test_one_point_trajectory_coefficients():
    p = OnePointProtocol(d=1.0, omega0=10.0, t_f=1.0)
    u2 = p.u**2
    x0c, x1c = one_point_trajectories(p)
    expected0 = (420.0 / u2) * np.array(
        [0, 0, 1, -4, 5 + u2 / 12, -(2 + u2 / 5), u2 / 6, -u2 / 21])
    assert np.allclose(x0c, expected0, rtol=1e-14)
    assert np.allclose(x1c, [0, 0, 0, 0, 35, -84, 70, -20], rtol=0)


@pytest.mark.parametrize("u", [0.3, 10.0, 25.0])
def test_one_point_pair_solves_driven_oscillator(u):
    p = OnePointProtocol(d=1.0, omega0=u, t_f=1.0)
    x0c, x1c = one_point_trajectories(p)
    s = np.linspace(0, 1, 1000)
    acc1 = npoly.polyval(s, npoly.polyder(x1c, 2))
    resid = acc1 + u**2 * (npoly.polyval(s, x1c) - npoly.polyval(s, x0c))
    assert np.abs(resid).max() < 1e-10 * max(1.0, u**2)


def test_one_point_endpoints():
    p = OnePointProtocol(d=1.0, omega0=7.0, t_f=2.0)
    x0c, x1c = one_point_trajectories(p)
    assert npoly.polyval(1.0, x0c) == pytest.approx(1.0, rel=1e-13)
    assert npoly.polyval(1.0, x1c) == pytest.approx(1.0, rel=1e-14)
    assert npoly.polyval(0.0, x0c) == 0.0
    for k in (1, 2):
        dc = npoly.polyder(x1c, k)
        assert abs(npoly.polyval(0.0, dc)) == 0.0
        assert abs(npoly.polyval(1.0, dc)) < 1e-11


def test_one_point_invalid():
    with pytest.raises(ValueError):
        OnePointProtocol(d=1.0, omega0=-1.0, t_f=1.0)
    with pytest.raises(ValueError):
        OnePointProtocol(d=1.0, omega0=1.0, t_f=0.0)
    assert DELTA == pytest.approx(1.0 / 420.0, rel=0)
