"""Closed-form root helpers against numpy.roots and residual oracles."""

import numpy as np
import pytest

from trapshuttle.roots import depressed_cubic_real_root, quartic_real_roots


def test_cubic_known_root():
    # real root of X^3 + X + 1 = 0
    x = depressed_cubic_real_root(1.0, 1.0)
    assert x == pytest.approx(-0.6823278038280193, abs=1e-14)
    assert abs(x**3 + x + 1.0) < 1e-14


def test_cubic_rejects_negative_p():
    with pytest.raises(ValueError):
        depressed_cubic_real_root(-1.0, 0.5)


def test_cubic_against_numpy_roots():
    rng = np.random.default_rng(42)
    for _ in range(2000):
        p = rng.uniform(0.0, 10.0) * 10.0 ** rng.integers(-6, 6)
        q = rng.uniform(-10.0, 10.0) * 10.0 ** rng.integers(-6, 6)
        x = depressed_cubic_real_root(p, q)
        cand = np.roots([1.0, 0.0, p, q])
        real = cand[np.abs(cand.imag) < 1e-8 * np.abs(cand).max()].real
        ref = real[np.argmin(np.abs(real - x))]
        assert x == pytest.approx(ref, rel=1e-9, abs=1e-12)


def test_quartic_recovers_constructed_roots():
    rng = np.random.default_rng(7)
    for _ in range(500):
        roots = np.sort(rng.uniform(-3.0, 3.0, 4))
        if np.min(np.diff(roots)) < 1e-2:
            continue  # well-separated roots only; clusters tested below
        c = np.poly(roots)
        got = quartic_real_roots(*c)
        assert got.size == 4
        assert np.allclose(got, roots, rtol=1e-7, atol=1e-9)


def test_quartic_complex_pairs():
    # (X^2 + 1)(X - 1)(X - 2): two real roots only
    c = np.poly([1j, -1j, 1.0, 2.0]).real
    got = quartic_real_roots(*c)
    assert got.size == 2
    assert np.allclose(got, [1.0, 2.0], atol=1e-10)
    # (X^2+1)(X^2+4): none
    c = np.poly([1j, -1j, 2j, -2j]).real
    assert quartic_real_roots(*c).size == 0


def test_quartic_biquadratic_branch():
    # X^4 - 5 X^2 + 4 = (X^2-1)(X^2-4)
    got = quartic_real_roots(1.0, 0.0, -5.0, 0.0, 4.0)
    assert np.allclose(got, [-2.0, -1.0, 1.0, 2.0], atol=1e-12)


def test_quartic_residuals_random_coefficients():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        c = rng.uniform(-2.0, 2.0, 5)
        if abs(c[0]) < 1e-3:
            continue
        got = quartic_real_roots(*c)
        for x in got:
            res = np.polyval(c, x)
            scale = np.polyval(np.abs(c), abs(x)) + 1e-30
            assert abs(res) / scale < 1e-8


def test_quartic_rejects_degenerate_leading():
    with pytest.raises(ValueError):
        quartic_real_roots(0.0, 1.0, 1.0, 1.0, 1.0)
