"""Reference particle trajectories and the one-point protocol family.

A reference trajectory is the polynomial interpolant in reduced time
s = t/t_f that carries the particle from x(0) = 0 to x(t_f) = d with
enough vanishing derivatives at both ends to make the trap inversion
well behaved.  Orders 5, 7 and 9 are supported; the number of vanishing
end derivatives is (order - 1)/2.

The one-point protocol is an alternative harmonic design built from an
auxiliary acceleration g(t) that satisfies two integral constraints; it
trades exact endpoint stillness for analytic tractability of the
anharmonic corrections.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

# Fraction of the double integral of s^2 (1-s)^2 (1-2s) carried to s = 1.
DELTA = 1.0 / 420.0

# Boundary-condition interpolants, frozen from the solver below.
# Keys are polynomial order; values are full ascending coefficient arrays
# in s (index = power).
_FROZEN_COEFFS = {
    5: np.array([0.0, 0.0, 0.0, 10.0, -15.0, 6.0]),
    7: np.array([0.0, 0.0, 0.0, 0.0, 35.0, -84.0, 70.0, -20.0]),
    9: np.array([0.0, 0.0, 0.0, 0.0, 0.0, 126.0, -420.0, 540.0, -315.0, 70.0]),
}


def solve_boundary_coefficients(order: int) -> np.ndarray:
    """Solve the boundary-condition linear system for one interpolant.

    Conditions: x(0) = 0 and x(1) = 1, with derivatives 1..(order-1)/2
    vanishing at both ends.  The leading (order+1)/2 coefficients are zero
    by the s = 0 conditions, so only the s = 1 conditions need solving.

    Kept as the authoritative generator for the frozen tables; tests call
    it to re-derive every constant.
    """
    if order % 2 != 1:
        raise ValueError(f"order must be odd, got {order}")
    m = (order - 1) // 2
    powers = np.arange(m + 1, order + 1)
    n_unknown = len(powers)
    a = np.zeros((n_unknown, n_unknown))
    b = np.zeros(n_unknown)
    # Row 0: value at s=1.  Rows k>=1: k-th derivative at s=1.
    a[0] = 1.0
    b[0] = 1.0
    for k in range(1, m + 1):
        fall = np.ones(n_unknown)
        for j in range(k):
            fall *= powers - j
        a[k] = fall
    coeffs = np.zeros(order + 1)
    coeffs[powers] = np.linalg.solve(a, b)
    return coeffs


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Polynomial particle path x(t) = d * p(t / t_f).

    coeffs holds the dimensionless ascending coefficients of p(s).
    """

    d: float
    t_f: float
    order: int
    coeffs: np.ndarray

    def derivative_coeffs(self, k: int) -> np.ndarray:
        return npoly.polyder(self.coeffs, k) if k else self.coeffs

    def __call__(self, t, k: int = 0):
        """k-th time derivative of x at time t (scalar or array)."""
        s = np.asarray(t, dtype=float) / self.t_f
        val = npoly.polyval(s, self.derivative_coeffs(k))
        return val * self.d / self.t_f**k


def make_reference(d: float, t_f: float, order: int) -> ReferenceTrajectory:
    """Build the boundary-condition interpolant of the given order."""
    if order not in _FROZEN_COEFFS:
        raise ValueError(f"unsupported order {order}; expected one of 5, 7, 9")
    if d <= 0 or t_f <= 0:
        raise ValueError("d and t_f must be positive")
    return ReferenceTrajectory(d=float(d), t_f=float(t_f), order=order,
                               coeffs=_FROZEN_COEFFS[order].copy())


def eval_derivatives(traj: ReferenceTrajectory, t: float, max_order: int):
    """Analytic derivatives (x, dx/dt, ..., up to max_order) at time t.

    Hard domain error outside [0, t_f]: clamping would mask sweep bugs.
    """
    if np.any(np.asarray(t) < 0) or np.any(np.asarray(t) > traj.t_f):
        raise ValueError(f"t={t} outside [0, {traj.t_f}]")
    if max_order > traj.order:
        raise ValueError("max_order exceeds polynomial degree")
    return [traj(t, k) for k in range(max_order + 1)]


@dataclass(frozen=True)
class OnePointProtocol:
    """Harmonic transport design from the auxiliary acceleration g(t).

    g(t) = N s^2 (1-s)^2 (1-2s) with s = t/t_f.  The normalization
    N = d / (omega0^2 t_f^2 DELTA) makes the double time integral of g
    equal d / omega0^2 while the single integral vanishes.
    """

    d: float
    omega0: float
    t_f: float

    def __post_init__(self):
        if self.d <= 0 or self.omega0 <= 0 or self.t_f <= 0:
            raise ValueError("d, omega0 and t_f must be positive")

    @property
    def u(self) -> float:
        return self.omega0 * self.t_f

    @property
    def normalization(self) -> float:
        return self.d / (self.omega0**2 * self.t_f**2 * DELTA)

    def g(self, t):
        s = np.asarray(t, dtype=float) / self.t_f
        return self.normalization * s**2 * (1 - s) ** 2 * (1 - 2 * s)


def one_point_trajectories(p: OnePointProtocol):
    """Trap and particle paths of the protocol, in units of d.

    Returns ascending coefficient arrays (x0_tilde, x1_tilde) in s.  The
    pair satisfies x1'' + u^2 (x1 - x0) = 0 identically, with
    x1(s) = 35 s^4 - 84 s^5 + 70 s^6 - 20 s^7.
    """
    u = p.u
    if u <= 0:
        raise ValueError("u must be positive")
    u2 = u * u
    x0 = (420.0 / u2) * np.array([
        0.0,
        0.0,
        1.0,
        -4.0,
        5.0 + u2 / 12.0,
        -(2.0 + u2 / 5.0),
        u2 / 6.0,
        -u2 / 21.0,
    ])
    x1 = np.array([0.0, 0.0, 0.0, 0.0, 35.0, -84.0, 70.0, -20.0])
    return x0, x1
