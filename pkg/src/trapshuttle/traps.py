"""Trap potential families and the reverse-engineering inversions.

Every confining family supported here admits a pointwise algebraic
solution of the equation of motion for the trap-bottom position:
given the reference path x(t), the instantaneous displacement
X = x - x0 solves  x''(t) = force_per_mass(X),  and the trap bottom is
x0(t) = x(t) - X(t).  Since the reference acceleration vanishes at both
ends, every plan starts at 0 and ends at d exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from trapshuttle.roots import depressed_cubic_real_root, quartic_real_roots
from trapshuttle.trajectory import (
    OnePointProtocol,
    ReferenceTrajectory,
    one_point_trajectories,
)

# Largest restoring acceleration of the tweezers family, in units of eta:
# max over X of X/(1+X^2)^2, attained at X = 1/sqrt(3).
TWEEZERS_RESTORING_MAX = 3.0 * np.sqrt(3.0) / 16.0
# Stricter conventional constant sometimes quoted for the same family;
# reported alongside the exact maximum, see invert_tweezers.
TWEEZERS_RESTORING_CONSERVATIVE = 27.0 / 104.0

_INNER_BRANCH_LIMIT = 1.0 / np.sqrt(3.0)


@dataclass(frozen=True)
class PowerLaw:
    """U(X)/m = eta * X^(2n) / (2n), n >= 1 integer."""
    n: int
    eta: float

    def __post_init__(self):
        if self.n < 1 or int(self.n) != self.n:
            raise ValueError("n must be an integer >= 1")
        if self.eta <= 0:
            raise ValueError("eta must be positive")


@dataclass(frozen=True)
class Harmonic:
    """U(X)/m = omega0^2 X^2 / 2."""
    omega0: float

    def __post_init__(self):
        if self.omega0 <= 0:
            raise ValueError("omega0 must be positive")


@dataclass(frozen=True)
class HarmonicCubic:
    """U(X)/m = omega0^2 (X^2/2 + X^3/(3 xi))."""
    omega0: float
    xi: float

    def __post_init__(self):
        if self.omega0 <= 0 or self.xi <= 0:
            raise ValueError("omega0 and xi must be positive")


@dataclass(frozen=True)
class HarmonicQuartic:
    """U(X)/m = omega0^2 (X^2/2 + X^4/(4 xi^2))."""
    omega0: float
    xi: float

    def __post_init__(self):
        if self.omega0 <= 0 or self.xi <= 0:
            raise ValueError("omega0 and xi must be positive")


@dataclass(frozen=True)
class Tweezers:
    """Optical tweezers: U(X)/m = -(eta x_r / 2) / (1 + (X/x_r)^2).

    eta = 2 U0 / (m x_r) is the acceleration scale; x_r the Rayleigh
    length setting the anharmonic scale.
    """
    eta: float
    x_r: float

    def __post_init__(self):
        if self.eta <= 0 or self.x_r <= 0:
            raise ValueError("eta and x_r must be positive")


TrapSpec = PowerLaw | Harmonic | HarmonicCubic | HarmonicQuartic | Tweezers


class UnsupportedFamilyError(ValueError):
    """Operation restricted to a trap family that was not supplied."""


def harmonic_frequency(trap: TrapSpec) -> float:
    """Small-oscillation angular frequency at the trap bottom."""
    if isinstance(trap, (Harmonic, HarmonicCubic, HarmonicQuartic)):
        return trap.omega0
    if isinstance(trap, Tweezers):
        return float(np.sqrt(trap.eta / trap.x_r))
    if isinstance(trap, PowerLaw) and trap.n == 1:
        return float(np.sqrt(trap.eta))
    raise UnsupportedFamilyError(
        f"{type(trap).__name__} has no harmonic reference frequency")


def potential(trap: TrapSpec, dx):
    """Potential energy per unit mass at displacement dx from the bottom."""
    dx = np.asarray(dx, dtype=float)
    if isinstance(trap, PowerLaw):
        return trap.eta * dx ** (2 * trap.n) / (2 * trap.n)
    if isinstance(trap, Harmonic):
        return 0.5 * trap.omega0**2 * dx**2
    if isinstance(trap, HarmonicCubic):
        w2 = trap.omega0**2
        return w2 * (0.5 * dx**2 + dx**3 / (3.0 * trap.xi))
    if isinstance(trap, HarmonicQuartic):
        w2 = trap.omega0**2
        return w2 * (0.5 * dx**2 + dx**4 / (4.0 * trap.xi**2))
    if isinstance(trap, Tweezers):
        X = dx / trap.x_r
        return -(trap.eta * trap.x_r / 2.0) / (1.0 + X * X)
    raise TypeError(f"unknown trap family: {trap!r}")


def force(trap: TrapSpec, dx):
    """Restoring force per unit mass, -d(U/m)/d(dx), analytic."""
    dx = np.asarray(dx, dtype=float)
    if isinstance(trap, PowerLaw):
        return -trap.eta * dx ** (2 * trap.n - 1)
    if isinstance(trap, Harmonic):
        return -trap.omega0**2 * dx
    if isinstance(trap, HarmonicCubic):
        return -trap.omega0**2 * (dx + dx**2 / trap.xi)
    if isinstance(trap, HarmonicQuartic):
        return -trap.omega0**2 * (dx + dx**3 / trap.xi**2)
    if isinstance(trap, Tweezers):
        X = dx / trap.x_r
        return -trap.eta * X / (1.0 + X * X) ** 2
    raise TypeError(f"unknown trap family: {trap!r}")


class InfeasiblePlanError(RuntimeError):
    """Raised when evaluating a plan whose existence bound failed."""


@dataclass
class TransportPlan:
    """Designed trap-bottom path x0(t) plus existence metadata.

    For the families here the inversion is closed form, so x0 and (where
    smooth) its time derivative are exact callables; `samples` is a dense
    dump used for CSV export and inspection.  Infeasible plans carry the
    bound report but no samples, and evaluating them raises.
    """

    trap: TrapSpec
    reference: ReferenceTrajectory
    closed_form: bool
    existence_ok: bool
    bound_report: dict
    samples: np.ndarray = field(default=None, repr=False)
    _x0_fn: Optional[Callable] = field(default=None, repr=False)
    _x0dot_fn: Optional[Callable] = field(default=None, repr=False)

    @property
    def d(self) -> float:
        return self.reference.d

    @property
    def t_f(self) -> float:
        return self.reference.t_f

    def x0(self, t):
        if not self.existence_ok:
            raise InfeasiblePlanError(
                f"plan infeasible, bound report: {self.bound_report}")
        return self._x0_fn(t)

    def x0dot(self, t):
        if not self.existence_ok:
            raise InfeasiblePlanError(
                f"plan infeasible, bound report: {self.bound_report}")
        if self._x0dot_fn is None:
            raise ValueError("plan has no smooth x0 derivative")
        return self._x0dot_fn(t)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("t,x0,exists\n")
            flag = int(self.existence_ok)
            rows = self.samples if self.samples is not None else \
                np.empty((0, 2))
            for t, x0 in rows:
                fh.write(f"{t:.17g},{x0:.17g},{flag}\n")

    @classmethod
    def from_samples(cls, trap, reference, samples):
        """Rebuild a plan from dense (t, x0) samples.

        Cubic Hermite interpolation with finite-difference slopes; used
        for plans loaded from CSV rather than designed in-process.
        """
        samples = np.asarray(samples, dtype=float)
        t, x0 = samples[:, 0], samples[:, 1]
        slopes = np.gradient(x0, t, edge_order=2)
        spline = CubicHermiteSpline(t, x0, slopes)
        return cls(trap=trap, reference=reference, closed_form=False,
                   existence_ok=True, bound_report={}, samples=samples,
                   _x0_fn=spline, _x0dot_fn=spline.derivative())


def _finalize(trap, ref, x_minus_x0, x0dot_fn, existence_ok, report,
              n_samples):
    """Assemble a TransportPlan from the displacement solution X(t)."""
    def x0_fn(t):
        return ref(t) - x_minus_x0(t)

    samples = None
    if existence_ok:
        ts = np.linspace(0.0, ref.t_f, n_samples)
        samples = np.column_stack([ts, x0_fn(ts)])
    return TransportPlan(trap=trap, reference=ref, closed_form=True,
                         existence_ok=existence_ok, bound_report=report,
                         samples=samples, _x0_fn=x0_fn, _x0dot_fn=x0dot_fn)


def _max_acc(ref: ReferenceTrajectory, signed: bool = False):
    """Extreme reference acceleration over [0, t_f], exact to rounding.

    The acceleration is polynomial in s, so its extrema sit at the real
    roots of the jerk polynomial (plus the interval endpoints).
    """
    from numpy.polynomial import polynomial as npoly

    jerk_coeffs = ref.derivative_coeffs(3)
    crit = npoly.polyroots(jerk_coeffs)
    crit = crit[np.abs(crit.imag) < 1e-12].real
    s = np.concatenate([[0.0, 1.0], crit[(crit >= 0.0) & (crit <= 1.0)]])
    acc = ref(s * ref.t_f, 2)
    if signed:
        return float(acc.max()), float(-acc.min())
    return float(np.abs(acc).max())


def invert_power_law(trap: PowerLaw, ref: ReferenceTrajectory,
                     n_samples: int = 10001) -> TransportPlan:
    """x0 = x + sign(acc) |acc/eta|^(1/(2n-1)), the signed odd root.

    Always exists; the odd root form also covers references whose
    acceleration changes sign more than once.
    """
    inv_pow = 1.0 / (2 * trap.n - 1)

    def X(t):
        acc = ref(t, 2)
        return -np.sign(acc) * np.abs(acc / trap.eta) ** inv_pow

    x0dot = None
    if trap.n == 1:
        def x0dot(t):
            return ref(t, 1) + ref(t, 3) / trap.eta
    report = {"family": "power_law", "n": trap.n, "always_feasible": True}
    return _finalize(trap, ref, X, x0dot, True, report, n_samples)


def invert_harmonic(trap: Harmonic, ref: ReferenceTrajectory,
                    n_samples: int = 10001) -> TransportPlan:
    """Harmonic compensation x0 = x + acc/omega0^2 (exact)."""
    w2 = trap.omega0**2

    def X(t):
        return -ref(t, 2) / w2

    def x0dot(t):
        return ref(t, 1) + ref(t, 3) / w2

    report = {"family": "harmonic", "always_feasible": True}
    return _finalize(trap, ref, X, x0dot, True, report, n_samples)


def invert_cubic(trap: HarmonicCubic, ref: ReferenceTrajectory,
                 n_samples: int = 10001) -> TransportPlan:
    """Quadratic-root inversion for the cubic anharmonicity.

    x0 = x + (xi/2)(1 - sqrt(1 - 4 acc/(xi omega0^2))).  The root with
    "-sqrt" is the physical one (it vanishes with the acceleration).
    Exists only while the discriminant stays non-negative, i.e.
    xi omega0^2 >= 4 max(acc); for the order-5 reference that reads
    xi omega0^2 t_f^2 / d >= 40/sqrt(3).
    """
    w2 = trap.omega0**2
    acc_pos_max, _ = _max_acc(ref, signed=True)
    ratio = trap.xi * w2 * ref.t_f**2 / ref.d
    threshold = 4.0 * acc_pos_max * ref.t_f**2 / ref.d
    disc_min = 1.0 - 4.0 * acc_pos_max / (trap.xi * w2)
    existence_ok = disc_min >= 0.0
    report = {
        "family": "harmonic_cubic",
        "discriminant_min": disc_min,
        "stiffness_ratio": ratio,
        "stiffness_threshold": threshold,
        "feasible": existence_ok,
    }

    def X(t):
        disc = 1.0 - 4.0 * ref(t, 2) / (trap.xi * w2)
        return -(trap.xi / 2.0) * (1.0 - np.sqrt(np.maximum(disc, 0.0)))

    def x0dot(t):
        Xv = X(t)
        return ref(t, 1) + trap.xi * ref(t, 3) / (w2 * (2.0 * Xv + trap.xi))

    return _finalize(trap, ref, X, x0dot, existence_ok, report, n_samples)


def invert_quartic(trap: HarmonicQuartic, ref: ReferenceTrajectory,
                   n_samples: int = 10001) -> TransportPlan:
    """Cardano inversion for the quartic anharmonicity.

    X solves X^3 + xi^2 X + xi^2 acc/omega0^2 = 0; the positive linear
    coefficient guarantees exactly one real root, so the design always
    exists.
    """
    w2 = trap.omega0**2
    xi2 = trap.xi**2

    def X(t):
        acc = np.asarray(ref(t, 2), dtype=float)
        if acc.ndim == 0:
            return depressed_cubic_real_root(xi2, float(acc) * xi2 / w2)
        return np.array([depressed_cubic_real_root(xi2, a * xi2 / w2)
                         for a in acc])

    def x0dot(t):
        Xv = np.asarray(X(t))
        return ref(t, 1) + xi2 * ref(t, 3) / (w2 * (3.0 * Xv**2 + xi2))

    report = {"family": "harmonic_quartic", "always_feasible": True}
    return _finalize(trap, ref, X, x0dot, True, report, n_samples)


def _tweezers_inner_root(acc_scaled: float) -> float:
    """Inner-branch root X of  a (1 + X^2)^2 + X = 0,  a = acc/eta.

    Inner branch means |X| <= 1/sqrt(3), the stable stretch of the
    restoring-force curve, and is the only branch continuous with X = 0.
    Ferrari supplies the start; Newton on the well-scaled residual
    h(X) = a(1+X^2)^2 + X finishes it, clamped to the inner interval
    where h is monotone (h' = 1 + 4aX(1+X^2) >= 1 - |a|/a_max there).
    """
    a = acc_scaled
    if a == 0.0:
        return 0.0
    roots = quartic_real_roots(a, 0.0, 2.0 * a, 1.0, a)
    inner = roots[np.abs(roots) <= _INNER_BRANCH_LIMIT]
    if inner.size > 0:
        x = float(inner[np.argmin(np.abs(inner))])
    else:
        # Ferrari degraded near the double root at the margin; restart
        # from the margin point on the correct side.
        x = -np.sign(a) * _INNER_BRANCH_LIMIT
    for _ in range(100):
        h = a * (1.0 + x * x) ** 2 + x
        hp = 1.0 + 4.0 * a * x * (1.0 + x * x)
        if hp <= 0.0:
            break
        step = h / hp
        x_new = min(max(x - step, -_INNER_BRANCH_LIMIT),
                    _INNER_BRANCH_LIMIT)
        if abs(x_new - x) <= 2e-16 * (1.0 + abs(x_new)):
            x = x_new
            break
        x = x_new
    return x


def invert_tweezers(trap: Tweezers, ref: ReferenceTrajectory,
                    n_samples: int = 10001) -> TransportPlan:
    """Quartic-root inversion for the tweezers family.

    Feasibility uses the exact restoring-force maximum 3 sqrt(3)/16 eta;
    the stricter conventional constant 27/104 eta is reported alongside
    for comparison (the two disagree, and only the former is the true
    limit of the potential).
    """
    acc_abs_max = _max_acc(ref)
    restoring_max = TWEEZERS_RESTORING_MAX * trap.eta
    conservative_max = TWEEZERS_RESTORING_CONSERVATIVE * trap.eta
    existence_ok = acc_abs_max <= restoring_max
    # d/t_f^2 forms of both bounds, scaled off the actual reference peak.
    d_over_tf2 = ref.d / ref.t_f**2
    peak_factor = acc_abs_max / d_over_tf2  # 10/sqrt(3) for order 5
    report = {
        "family": "tweezers",
        "max_abs_acceleration": acc_abs_max,
        "restoring_max": restoring_max,
        "restoring_max_conservative": conservative_max,
        "d_over_tf2": d_over_tf2,
        "d_over_tf2_limit": restoring_max / peak_factor,
        "d_over_tf2_limit_conservative": conservative_max / peak_factor,
        "feasible": existence_ok,
        "feasible_conservative": acc_abs_max <= conservative_max,
    }

    def X(t):
        acc = np.asarray(ref(t, 2), dtype=float) / trap.eta
        if acc.ndim == 0:
            return _tweezers_inner_root(float(acc)) * trap.x_r
        return np.array([_tweezers_inner_root(a) for a in acc]) * trap.x_r

    def x0dot(t):
        # Implicit differentiation of acc = -eta g(X), g = X/(1+X^2)^2:
        # Xdot = -jerk / (eta g'(X)), then x0dot = xdot - x_r Xdot.
        Xs = np.asarray(X(t)) / trap.x_r
        gprime = (1.0 - 3.0 * Xs**2) / (1.0 + Xs**2) ** 3
        denom = trap.eta * np.where(gprime == 0, np.inf, gprime)
        return ref(t, 1) + trap.x_r * ref(t, 3) / denom

    return _finalize(trap, ref, X, x0dot, existence_ok, report, n_samples)


def design_plan(trap: TrapSpec, ref: ReferenceTrajectory,
                n_samples: int = 10001) -> TransportPlan:
    """Dispatch the inversion for any supported trap family."""
    if isinstance(trap, PowerLaw):
        return invert_power_law(trap, ref, n_samples)
    if isinstance(trap, Harmonic):
        return invert_harmonic(trap, ref, n_samples)
    if isinstance(trap, HarmonicCubic):
        return invert_cubic(trap, ref, n_samples)
    if isinstance(trap, HarmonicQuartic):
        return invert_quartic(trap, ref, n_samples)
    if isinstance(trap, Tweezers):
        return invert_tweezers(trap, ref, n_samples)
    raise TypeError(f"unknown trap family: {trap!r}")


def one_point_plan(trap: TrapSpec, d: float, t_f: float,
                   n_samples: int = 10001) -> TransportPlan:
    """Harmonic-design trap path executed in an arbitrary trap.

    x0 = x1 + x1''/omega0^2 with x1 the order-7 interpolant and omega0
    the small-oscillation frequency of `trap`.  Exact for the harmonic
    family; in anharmonic traps the mismatch is the point (it isolates
    the effect of designing against the wrong potential).  Always
    feasible: the bottom path is an explicit polynomial.
    """
    w0 = harmonic_frequency(trap)
    proto = OnePointProtocol(d=float(d), omega0=w0, t_f=float(t_f))
    c0, c1 = one_point_trajectories(proto)
    ref = ReferenceTrajectory(d=float(d), t_f=float(t_f), order=7,
                              coeffs=c1)
    c0d = np.polynomial.polynomial.polyder(c0)

    def x0_fn(t):
        s = np.asarray(t, dtype=float) / t_f
        return np.polynomial.polynomial.polyval(s, c0) * d

    def x0dot_fn(t):
        s = np.asarray(t, dtype=float) / t_f
        return np.polynomial.polynomial.polyval(s, c0d) * d / t_f

    ts = np.linspace(0.0, t_f, n_samples)
    samples = np.column_stack([ts, x0_fn(ts)])
    report = {"family": type(trap).__name__, "protocol": "one_point",
              "feasible": True}
    return TransportPlan(trap=trap, reference=ref, closed_form=True,
                         existence_ok=True, bound_report=report,
                         samples=samples, _x0_fn=x0_fn,
                         _x0dot_fn=x0dot_fn)
