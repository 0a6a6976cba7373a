"""Closed-form polynomial root helpers for the trap inversions."""

import numpy as np


def depressed_cubic_real_root(p: float, q: float) -> float:
    """The real root of X^3 + p X + q = 0 for p >= 0.

    With a non-negative linear coefficient the cubic is monotone, so
    exactly one real root exists and the Cardano form is stable:
        X = cbrt(-q/2 + sqrt((q/2)^2 + (p/3)^3)) + cbrt(-q/2 - sqrt(...))
    """
    if p < 0:
        raise ValueError("depressed cubic helper requires p >= 0")
    w = -0.5 * q
    p3 = (p / 3.0) ** 3
    s = np.sqrt(w * w + p3)
    # Avoid cancellation: compute the large-magnitude term directly and
    # the small one from the product identity (w+s)(w-s) = -p3.
    if w >= 0.0:
        big = w + s
        small = -p3 / big if big != 0.0 else 0.0
    else:
        small = w - s
        big = -p3 / small
    return float(np.cbrt(big) + np.cbrt(small))


def quartic_real_roots(c4: float, c3: float, c2: float, c1: float, c0: float):
    """All real roots of c4 X^4 + c3 X^3 + c2 X^2 + c1 X + c0 = 0.

    Ferrari resolvent construction; returns a sorted float array (empty
    when no real root exists).  |c4| must be bounded away from zero.
    """
    if c4 == 0.0:
        raise ValueError("not a quartic: leading coefficient is zero")
    b, c, d, e = c3 / c4, c2 / c4, c1 / c4, c0 / c4
    # Depressed form y^4 + p y^2 + q y + r via X = y - b/4.
    p = c - 3.0 * b * b / 8.0
    q = d - 0.5 * b * c + b**3 / 8.0
    r = e - 0.25 * b * d + b * b * c / 16.0 - 3.0 * b**4 / 256.0

    if abs(q) < 1e-14 * max(1.0, abs(p), abs(r)):
        # Biquadratic: y^2 solves a quadratic.
        roots = []
        disc = p * p - 4.0 * r
        if disc >= 0.0:
            sq = np.sqrt(disc)
            for y2 in ((-p + sq) / 2.0, (-p - sq) / 2.0):
                if y2 >= 0.0:
                    roots.extend([np.sqrt(y2), -np.sqrt(y2)])
        ys = np.array(roots, dtype=float)
    else:
        # Resolvent cubic m^3 + 2 p m^2 + (p^2 - 4 r) m - q^2 = 0 needs a
        # positive root m; one always exists when the quartic has real roots.
        a2, a1, a0 = 2.0 * p, p * p - 4.0 * r, -q * q
        # Shift to depressed cubic t^3 + P t + Q with m = t - a2/3.
        pp = a1 - a2 * a2 / 3.0
        qq = a0 - a2 * a1 / 3.0 + 2.0 * a2**3 / 27.0
        m = _cubic_largest_real(pp, qq) - a2 / 3.0
        if m <= 0.0:
            return np.array([], dtype=float)
        sm = np.sqrt(m)
        ys = []
        for sign in (1.0, -1.0):
            # factor pair: (y^2 + sm y + beta)(y^2 - sm y + gamma) with
            # beta = (p+m)/2 - q/(2 sm), gamma = (p+m)/2 + q/(2 sm)
            bq = sign * sm
            cq = 0.5 * (p + m) - sign * q / (2.0 * sm)
            disc = bq * bq - 4.0 * cq
            if disc >= 0.0:
                sq = np.sqrt(disc)
                ys.extend([(-bq + sq) / 2.0, (-bq - sq) / 2.0])
        ys = np.array(ys, dtype=float)

    if ys.size == 0:
        return ys
    roots = np.sort(ys - b / 4.0)
    # One Newton polish pass keeps closed-form results at oracle accuracy.
    for _ in range(2):
        f = (((c4 * roots + c3) * roots + c2) * roots + c1) * roots + c0
        fp = ((4 * c4 * roots + 3 * c3) * roots + 2 * c2) * roots + c1
        step = np.where(np.abs(fp) > 0, f / np.where(fp == 0, 1.0, fp), 0.0)
        roots = roots - step
    return np.sort(roots)


def _cubic_largest_real(p: float, q: float) -> float:
    """Largest real root of t^3 + p t + q = 0 (trigonometric/Cardano)."""
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if disc >= 0.0:
        sq = np.sqrt(disc)
        return float(np.cbrt(-q / 2.0 + sq) + np.cbrt(-q / 2.0 - sq))
    # Three real roots; pick the largest branch.
    rho = np.sqrt(-(p / 3.0) ** 3)
    theta = np.arccos(np.clip(-q / (2.0 * rho), -1.0, 1.0))
    return float(2.0 * np.sqrt(-p / 3.0) * np.cos(theta / 3.0))
