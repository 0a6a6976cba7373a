"""Trap families, feasibility bounds, and the closed-form inversions."""

import csv

import numpy as np
import pytest
from scipy.optimize import brentq, minimize_scalar

from trapshuttle.traps import (
    Harmonic,
    HarmonicCubic,
    HarmonicQuartic,
    InfeasiblePlanError,
    PowerLaw,
    TWEEZERS_RESTORING_CONSERVATIVE,
    TWEEZERS_RESTORING_MAX,
    TransportPlan,
    Tweezers,
    design_plan,
    force,
    invert_cubic,
    invert_quartic,
    invert_tweezers,
    potential,
)
from trapshuttle.trajectory import make_reference

REF = make_reference(1.0, 1.0, 5)

ALL_TRAPS = [
    PowerLaw(n=1, eta=64.0),
    PowerLaw(n=2, eta=300.0),
    PowerLaw(n=3, eta=900.0),
    Harmonic(omega0=8.0),
    HarmonicCubic(omega0=8.0, xi=0.5),
    HarmonicQuartic(omega0=8.0, xi=0.3),
    Tweezers(eta=120.0, x_r=0.4),
]


@pytest.mark.parametrize("trap", ALL_TRAPS, ids=lambda t: type(t).__name__)
def test_force_is_minus_potential_gradient(trap):
    rng = np.random.default_rng(11)
    dx = rng.uniform(-0.2, 0.2, 50)
    h = 1e-6
    fd = -(potential(trap, dx + h) - potential(trap, dx - h)) / (2 * h)
    scale = np.abs(force(trap, dx)).max() + 1.0
    assert np.allclose(force(trap, dx), fd, atol=2e-4 * scale)


def test_powerlaw_n1_equals_harmonic():
    pl = PowerLaw(n=1, eta=64.0)
    h = Harmonic(omega0=8.0)
    dx = np.linspace(-0.5, 0.5, 101)
    assert np.allclose(potential(pl, dx), potential(h, dx), rtol=1e-14)
    assert np.allclose(force(pl, dx), force(h, dx), rtol=1e-14)
    t = np.linspace(0, 1, 101)
    assert np.allclose(design_plan(pl, REF).x0(t), design_plan(h, REF).x0(t),
                       rtol=1e-13, atol=1e-15)


def test_tweezers_peak_restoring_force():
    # oracle: numerically maximize the restoring acceleration
    trap = Tweezers(eta=120.0, x_r=0.4)
    res = minimize_scalar(lambda dx: force(trap, dx),
                          bounds=(0.0, trap.x_r), method="bounded",
                          options={"xatol": 1e-12})
    peak = -res.fun
    assert peak == pytest.approx(TWEEZERS_RESTORING_MAX * trap.eta, rel=1e-9)
    assert res.x == pytest.approx(trap.x_r / np.sqrt(3.0), rel=1e-5)
    assert TWEEZERS_RESTORING_MAX == pytest.approx(3 * np.sqrt(3) / 16, rel=0)


@pytest.mark.parametrize("trap", ALL_TRAPS, ids=lambda t: type(t).__name__)
def test_plan_endpoints_exact(trap):
    plan = design_plan(trap, REF)
    assert plan.x0(0.0) == pytest.approx(0.0, abs=1e-13)
    assert plan.x0(1.0) == pytest.approx(1.0, rel=1e-13)
    assert plan.existence_ok


def test_powerlaw_inversion_matches_odd_root_formula():
    trap = PowerLaw(n=2, eta=300.0)
    plan = design_plan(trap, REF)
    t = np.linspace(0, 1, 301)
    acc = REF(t, 2)
    expected = REF(t) + np.sign(acc) * np.abs(acc / trap.eta) ** (1.0 / 3.0)
    assert np.allclose(plan.x0(t), expected, rtol=1e-12, atol=1e-14)
    # x0 is continuous through the midpoint sign change of acc, but only
    # with cube-root modulus (vertical tangent), so probe symmetrically
    eps = 1e-9
    gap = abs(plan.x0(0.5 + eps) - plan.x0(0.5 - eps))
    assert gap < 2.2 * (0.1 * eps) ** (1.0 / 3.0) + 1e-9


def test_cubic_inversion_matches_quadratic_formula():
    trap = HarmonicCubic(omega0=8.0, xi=0.5)
    plan = invert_cubic(trap, REF)
    t = np.linspace(0, 1, 301)
    disc = 1.0 - 4.0 * REF(t, 2) / (trap.xi * trap.omega0**2)
    expected = REF(t) + (trap.xi / 2.0) * (1.0 - np.sqrt(disc))
    assert np.allclose(plan.x0(t), expected, rtol=1e-12)


def test_cubic_existence_flips_at_threshold():
    # feasibility boundary: xi omega0^2 t_f^2 / d = 40/sqrt(3)
    omega0, d, t_f = 8.0, 1.0, 1.0
    xi_star = 40.0 / np.sqrt(3.0) * d / (omega0**2 * t_f**2)
    ok = invert_cubic(HarmonicCubic(omega0, xi_star * (1 + 1e-6)), REF)
    bad = invert_cubic(HarmonicCubic(omega0, xi_star * (1 - 1e-6)), REF)
    assert ok.existence_ok and not bad.existence_ok
    assert ok.bound_report["stiffness_threshold"] == pytest.approx(
        40.0 / np.sqrt(3.0), rel=1e-9)
    assert bad.samples is None
    with pytest.raises(InfeasiblePlanError):
        bad.x0(0.5)


def test_quartic_inversion_against_bracketing_oracle():
    rng = np.random.default_rng(5)
    for _ in range(300):
        w0 = rng.uniform(2.0, 20.0)
        xi = rng.uniform(0.05, 5.0)
        t = rng.uniform(0.0, 1.0)
        trap = HarmonicQuartic(omega0=w0, xi=xi)
        plan = invert_quartic(trap, REF)
        acc = float(REF(t, 2))

        def f(X):
            return X**3 + xi**2 * X + xi**2 * acc / w0**2

        lim = 1.0 + xi + abs(acc) * max(1.0, xi**2) / w0**2
        oracle = brentq(f, -lim, lim, xtol=1e-15, rtol=8.9e-16)
        got = float(REF(t)) - float(plan.x0(t))
        assert got == pytest.approx(oracle, rel=1e-10, abs=1e-13)


def test_tweezers_inner_branch_and_marginal_case():
    trap = Tweezers(eta=120.0, x_r=0.4)
    plan = invert_tweezers(trap, REF)
    t = np.linspace(0, 1, 2001)
    X = (REF(t) - plan.x0(t)) / trap.x_r
    assert np.abs(X).max() <= 1.0 / np.sqrt(3.0) + 1e-12
    # marginal trap: peak reference acceleration equals the restoring max
    acc_max = 10.0 / np.sqrt(3.0)
    eta_marginal = acc_max / TWEEZERS_RESTORING_MAX
    mplan = invert_tweezers(Tweezers(eta=eta_marginal * (1 + 1e-9), x_r=0.4),
                            REF)
    assert mplan.existence_ok
    tm = np.linspace(0, 1, 40001)
    Xm = (REF(tm) - mplan.x0(tm)) / 0.4
    assert np.abs(Xm).max() == pytest.approx(1.0 / np.sqrt(3.0), rel=1e-4)


def test_tweezers_existence_flip_and_bound_report():
    acc_max = 10.0 / np.sqrt(3.0)
    eta_star = acc_max / TWEEZERS_RESTORING_MAX
    ok = invert_tweezers(Tweezers(eta=eta_star * (1 + 1e-6), x_r=0.4), REF)
    bad = invert_tweezers(Tweezers(eta=eta_star * (1 - 1e-6), x_r=0.4), REF)
    assert ok.existence_ok and not bad.existence_ok
    rep = ok.bound_report
    # both feasibility constants are reported; they disagree by design
    assert rep["restoring_max"] == pytest.approx(
        3 * np.sqrt(3) / 16 * ok.trap.eta, rel=1e-12)
    assert rep["restoring_max_conservative"] == pytest.approx(
        27.0 / 104.0 * ok.trap.eta, rel=1e-12)
    assert rep["d_over_tf2_limit_conservative"] == pytest.approx(
        27.0 * np.sqrt(3.0) / 1040.0 * ok.trap.eta, rel=1e-9)
    assert 27.0 * np.sqrt(3.0) / 1040.0 == pytest.approx(0.044966, abs=1e-6)
    assert not ok.bound_report["feasible_conservative"]


def test_bound_constants_disagree():
    assert TWEEZERS_RESTORING_CONSERVATIVE < TWEEZERS_RESTORING_MAX


def test_csv_round_trip(tmp_path):
    trap = HarmonicQuartic(omega0=8.0, xi=0.3)
    plan = design_plan(trap, REF, n_samples=257)
    path = tmp_path / "plan.csv"
    plan.to_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "x0", "exists"]
    body = np.array([[float(r[0]), float(r[1])] for r in rows[1:]])
    assert body.shape == (257, 2)
    # 17 significant digits reproduce the doubles exactly
    assert np.array_equal(body, plan.samples)
    assert all(r[2] == "1" for r in rows[1:])

    # rebuild accuracy is checked at the default sample density
    dense = design_plan(trap, REF)
    rebuilt = TransportPlan.from_samples(trap, REF, dense.samples)
    t = np.linspace(0, 1, 1001)
    assert np.allclose(rebuilt.x0(t), dense.x0(t), atol=1e-12)
    assert np.allclose(rebuilt.x0dot(t), dense.x0dot(t), atol=1e-6)


@pytest.mark.parametrize("trap", [
    Harmonic(omega0=8.0),
    HarmonicCubic(omega0=8.0, xi=0.5),
    HarmonicQuartic(omega0=8.0, xi=0.3),
    Tweezers(eta=120.0, x_r=0.4),
], ids=lambda t: type(t).__name__)
def test_x0dot_matches_finite_difference(trap):
    plan = design_plan(trap, REF)
    t = np.linspace(0.05, 0.95, 19)
    h = 1e-6
    fd = (plan.x0(t + h) - plan.x0(t - h)) / (2 * h)
    assert np.allclose(plan.x0dot(t), fd, rtol=1e-6, atol=1e-6)


def test_invalid_parameters():
    with pytest.raises(ValueError):
        PowerLaw(n=0, eta=1.0)
    with pytest.raises(ValueError):
        PowerLaw(n=2, eta=-1.0)
    with pytest.raises(ValueError):
        Harmonic(omega0=0.0)
    with pytest.raises(ValueError):
        HarmonicCubic(omega0=1.0, xi=-2.0)
    with pytest.raises(ValueError):
        Tweezers(eta=1.0, x_r=0.0)
    with pytest.raises(TypeError):
        design_plan(object(), REF)
