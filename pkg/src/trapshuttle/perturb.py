"""Perturbative anharmonicity-robust transport design.

For a harmonic trap driven by the one-point protocol, the anharmonic
terms are treated as a perturbation around the exactly solvable particle
path x1(s).  The first-order corrections are oscillatory convolutions

    f1(s) = -(1/u^3) int_0^s x1''(s')^2 sin[u(s-s')] ds'      (cubic)
    f2(s) = +(1/u^5) int_0^s x1''(s')^3 sin[u(s-s')] ds'      (quartic)

and the corrected trajectory is x2 = x1 + (d/xi) f1 resp. x2 = x1 +
(d/xi)^2 f2.  The residual energy after transport then follows from the
end-point values f(1), f'(1), which vanish simultaneously at discrete
magic values of u = omega0 t_f; those are the robust transport times.

All trajectories here are dimensionless: lengths in units of d, time in
s = t/t_f, and derivatives with respect to s.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial import polynomial as npoly

from trapshuttle import __version__ as _pkg_version
from trapshuttle.dynamics import ParticleState, PhysicalConstants, integrate
from trapshuttle.trajectory import OnePointProtocol, one_point_trajectories
from trapshuttle.traps import HarmonicCubic, HarmonicQuartic

U_MAX = 8.0 * np.pi

# 7-point Gauss-Legendre nodes/weights on [-1, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(7)


def _x1_acc_coeffs() -> np.ndarray:
    proto = OnePointProtocol(d=1.0, omega0=1.0, t_f=1.0)
    _, x1 = one_point_trajectories(proto)
    return npoly.polyder(x1, 2)


_X1_ACC = _x1_acc_coeffs()


@dataclass
class PerturbativeSolution:
    """Sampled first-order correction for one (kind, u)."""

    kind: str                 # "cubic" or "quartic"
    u: float
    s: np.ndarray
    f: np.ndarray             # correction samples on s
    fdot: np.ndarray          # s-derivative of the correction
    x1: np.ndarray = field(repr=False, default=None)   # base path on s
    x0: np.ndarray = field(repr=False, default=None)   # trap path on s

    @property
    def power(self) -> int:
        return 1 if self.kind == "cubic" else 2

    def x2(self, d_over_xi: float) -> np.ndarray:
        """Corrected particle path on the s grid."""
        return self.x1 + d_over_xi**self.power * self.f

    @property
    def f_final(self) -> float:
        return float(self.f[-1])

    @property
    def fdot_final(self) -> float:
        return float(self.fdot[-1])


def correction(kind: str, u: float, grid_n: int = 1024) -> PerturbativeSolution:
    """Evaluate the correction integral on a uniform s grid.

    Writes sin[u(s-s')] = sin(us)cos(us') - cos(us)sin(us') and keeps
    cumulative cos/sin moments of the source, each accumulated with
    7-point Gauss-Legendre panels, so one pass yields f on the whole
    grid.  The s-derivative falls out of the same moments.
    """
    if kind not in ("cubic", "quartic"):
        raise ValueError(f"unknown kind {kind!r}")
    if u <= 0:
        raise ValueError("u must be positive")
    if grid_n < 512:
        raise ValueError("grid_n must be >= 512")

    s = np.linspace(0.0, 1.0, grid_n + 1)
    h = 1.0 / grid_n
    # panel quadrature nodes, shape (grid_n, 7)
    mid = (s[:-1] + s[1:]) / 2.0
    nodes = mid[:, None] + (h / 2.0) * _GL_X[None, :]
    w = (h / 2.0) * _GL_W

    acc = npoly.polyval(nodes, _X1_ACC)
    if kind == "cubic":
        src = acc**2
        pref = -1.0 / u**3
    else:
        src = acc**3
        pref = 1.0 / u**5

    cos_m = np.concatenate(
        [[0.0], np.cumsum((src * np.cos(u * nodes)) @ w)])
    sin_m = np.concatenate(
        [[0.0], np.cumsum((src * np.sin(u * nodes)) @ w)])

    f = pref * (np.sin(u * s) * cos_m - np.cos(u * s) * sin_m)
    fdot = pref * u * (np.cos(u * s) * cos_m + np.sin(u * s) * sin_m)

    proto = OnePointProtocol(d=1.0, omega0=u, t_f=1.0)
    x0c, x1c = one_point_trajectories(proto)
    return PerturbativeSolution(kind=kind, u=float(u), s=s, f=f, fdot=fdot,
                                x1=npoly.polyval(s, x1c),
                                x0=npoly.polyval(s, x0c))


def residual_bracket(sol: PerturbativeSolution, d_over_xi: float) -> float:
    """Dimensionless end-point energy bracket for the corrected path.

    Returns dE/(hbar omega0) divided by the (d/a0)^2 prefactor:
    [x2'(1)^2/(2u^2) + X^2/2 + cubic-or-quartic term], X = x2(1) - 1.
    """
    eps = d_over_xi**sol.power
    X = eps * sol.f_final
    v = eps * sol.fdot_final
    out = v**2 / (2.0 * sol.u**2) + X**2 / 2.0
    if sol.kind == "cubic":
        out += d_over_xi * X**3 / 3.0
    else:
        out += d_over_xi**2 * X**4 / 4.0
    return float(out)


def _trapping_ok(sol: PerturbativeSolution, d_over_xi: float) -> bool:
    """Cubic potential is only trapping within |X| < xi of the bottom."""
    if sol.kind != "cubic":
        return True
    disp = np.abs(sol.x2(d_over_xi) - sol.x0).max()
    return disp < 1.0 / d_over_xi


def exact_residual(kind: str, u: float, xi_over_d: float,
                   tol: float = 1e-13) -> float:
    """Bracket value from full nonlinear integration, same units."""
    proto = OnePointProtocol(d=1.0, omega0=u, t_f=1.0)
    x0c, _ = one_point_trajectories(proto)
    if kind == "cubic":
        trap = HarmonicCubic(omega0=u, xi=xi_over_d)
    else:
        trap = HarmonicQuartic(omega0=u, xi=xi_over_d)

    def x0(t):
        return npoly.polyval(t, x0c)

    traj = integrate(trap, x0, ParticleState(0.0, 0.0, 0.0), 1.0,
                     tol=tol, n_samples=2)
    fin = traj.final
    X = fin.x - 1.0
    out = fin.v**2 / (2.0 * u**2) + X**2 / 2.0
    if kind == "cubic":
        out += X**3 / (3.0 * xi_over_d)
    else:
        out += X**4 / (4.0 * xi_over_d**2)
    return float(out)


@dataclass
class EnergyMap:
    """Residual energy over the (xi/d, u) plane, in units of hbar omega0."""

    kind: str
    mode: str
    xi_over_d: np.ndarray      # log-spaced axis
    u: np.ndarray              # linear axis
    values: np.ndarray         # shape (len(xi), len(u)); NaN = infeasible
    prefactor: float           # (d/a0)^2 converting bracket to dE/hw
    constants: PhysicalConstants

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("log10_xi_over_d,u,log10_dE_over_hw\n")
            with np.errstate(divide="ignore", invalid="ignore"):
                logv = np.log10(self.values)
            for i, xi in enumerate(self.xi_over_d):
                lxi = np.log10(xi)
                for j, uu in enumerate(self.u):
                    fh.write(f"{lxi:.17g},{uu:.17g},{logv[i, j]:.17g}\n")

    def sidecar(self, path):
        meta = {
            "provenance": f"trapshuttle {_pkg_version} energy_map",
            "kind": self.kind,
            "mode": self.mode,
            "prefactor_d_over_a0_sq": self.prefactor,
            "constants": {
                "m": self.constants.m,
                "hbar": self.constants.hbar,
                "k_B": self.constants.k_B,
            },
            "xi_over_d_axis": self.xi_over_d.tolist(),
            "u_axis": self.u.tolist(),
        }
        with open(path, "w") as fh:
            json.dump(meta, fh, indent=1)


def _check_u_range(u_range) -> tuple:
    lo, hi = float(u_range[0]), float(u_range[1])
    if not (0.0 < lo < hi <= U_MAX + 1e-12):
        raise ValueError(f"u range must lie inside (0, {U_MAX:.6f}]")
    return lo, hi


def energy_map(kind: str, xi_range=(0.1, 1000.0), u_range=(0.2, U_MAX),
               n_xi: int = 81, n_u: int = 121,
               constants: Optional[PhysicalConstants] = None,
               d_over_a0: float = 20.2, mode: str = "perturbative",
               grid_n: int = 1024, exact_tol: float = 1e-13) -> EnergyMap:
    """Residual-energy map over log-spaced xi/d and linear u."""
    if mode not in ("perturbative", "exact"):
        raise ValueError(f"unknown mode {mode!r}")
    lo, hi = _check_u_range(u_range)
    if xi_range[0] <= 0 or xi_range[1] <= xi_range[0]:
        raise ValueError("xi range must be positive and increasing")
    constants = constants or PhysicalConstants()
    xi_axis = np.logspace(np.log10(xi_range[0]), np.log10(xi_range[1]), n_xi)
    u_axis = np.linspace(lo, hi, n_u)
    prefactor = d_over_a0**2
    values = np.empty((n_xi, n_u))

    for j, u in enumerate(u_axis):
        if mode == "perturbative":
            sol = correction(kind, u, grid_n)
            for i, xi in enumerate(xi_axis):
                if not _trapping_ok(sol, 1.0 / xi):
                    values[i, j] = np.nan
                    continue
                values[i, j] = prefactor * residual_bracket(sol, 1.0 / xi)
        else:
            for i, xi in enumerate(xi_axis):
                values[i, j] = prefactor * exact_residual(
                    kind, u, xi, tol=exact_tol)
    return EnergyMap(kind=kind, mode=mode, xi_over_d=xi_axis, u=u_axis,
                     values=values, prefactor=prefactor, constants=constants)


def _golden_refine(fun, a, b, tol=1e-5):
    """Golden-section minimum of fun on [a, b] to width < tol."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return (a + b) / 2.0


def optimal_u(kind: str, xi_over_d: float, u_range=(0.5, U_MAX),
              constants: Optional[PhysicalConstants] = None,
              d_over_a0: float = 20.2, mode: str = "perturbative",
              coarse_du: float = 0.02, grid_n: int = 1024,
              min_decades: float = 2.0):
    """Locate robust transport times: local minima of dE(u) at fixed xi/d.

    Coarse scan at spacing coarse_du, golden-section refinement to
    Delta u < 1e-4, and a prominence filter: a minimum must sit at least
    min_decades below the lower of the neighboring maxima.  Returns a
    list of (u0, dE(u0)) sorted by u0; empty when nothing qualifies.
    """
    lo, hi = _check_u_range(u_range)
    constants = constants or PhysicalConstants()
    prefactor = d_over_a0**2

    if mode == "perturbative":
        def dE(u):
            sol = correction(kind, float(u), grid_n)
            return prefactor * residual_bracket(sol, 1.0 / xi_over_d)
    elif mode == "exact":
        def dE(u):
            return prefactor * exact_residual(kind, float(u), xi_over_d)
    else:
        raise ValueError(f"unknown mode {mode!r}")

    us = np.arange(lo, hi + coarse_du / 2, coarse_du)
    vals = np.array([dE(u) for u in us])
    out = []
    for i in range(1, len(us) - 1):
        if not (vals[i] < vals[i - 1] and vals[i] <= vals[i + 1]):
            continue
        u0 = _golden_refine(dE, us[i - 1], us[i + 1], tol=1e-5)
        e0 = dE(u0)
        # prominence: decades below the smaller of the flanking maxima
        left = vals[:i].max()
        right = vals[i + 1:].max()
        plateau = min(left, right)
        if e0 <= 0 or plateau <= 0:
            floor_ok = e0 < plateau  # exactly zero minima always qualify
        else:
            floor_ok = np.log10(plateau) - np.log10(e0) >= min_decades
        if floor_ok:
            out.append((float(u0), float(e0)))
    return out
