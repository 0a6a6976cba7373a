"""Thermal-packet transport: Monte Carlo ensembles, moment dynamics,
and the magic-time structure of the packet energy error.

A packet is a cloud of non-interacting classical atoms sampled from the
trap's thermal equilibrium.  For a harmonic trap the five moments
(xbar, vbar, x2, v2, xv) obey a closed ODE system

    d(x2)/dt = 2 xv
    d(xv)/dt = v2 - w0^2 x2 + w0^2 x0 xbar
    d(v2)/dt = -2 w0^2 xv + 2 w0^2 x0 vbar
    d(xbar)/dt = vbar
    d(vbar)/dt = -w0^2 (xbar - x0)

with the raw (non-centered) second moments, and the position-velocity
correlation has the exact convolution form

    xv(t) = (w0/2) int_0^t (x0dot xbar + 3 x0 vbar) sin[2 w0 (t-t')] dt'.

For anharmonic traps the system does not close; those packets are
propagated particle-by-particle and scored by the relative energy
error |1 - E_f/E_i|, whose minima over the transport time are the
magic times.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from trapshuttle.dynamics import (
    IntegrationError,
    ParticleState,
    PhysicalConstants,
    integrate_many,
)
from trapshuttle.sweep import cell_seed as _mix_seed
from trapshuttle.trajectory import make_reference
from trapshuttle.traps import (
    Harmonic,
    HarmonicCubic,
    HarmonicQuartic,
    PowerLaw,
    TransportPlan,
    TrapSpec,
    Tweezers,
    UnsupportedFamilyError,
    design_plan,
    harmonic_frequency,
    potential,
)

# default thermal width relative to the transport distance
DEFAULT_WIDTH_OVER_D = 0.02

_GL_X, _GL_W = np.polynomial.legendre.leggauss(7)


class SamplingError(RuntimeError):
    """Equilibrium sampling failed (untrapped or overflowing potential)."""


@dataclass
class EnsembleConfig:
    """Thermal packet description.

    Exactly one of temperature (kelvin) or delta_x (meters, the
    equilibrium position std) fixes the width; with neither given the
    width defaults to 0.02 d from the plan.  Moment estimates need
    n_particles >= 1e3 for the documented 5-sigma statistical budget;
    smaller ensembles are allowed but carry proportionally larger
    standard errors (se ~ 1/sqrt(N)).
    """

    n_particles: int
    trap: TrapSpec
    plan: Union[TransportPlan, Callable]
    seed: int = 0
    temperature: Optional[float] = None
    delta_x: Optional[float] = None
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be positive")
        if self.temperature is not None and self.delta_x is not None:
            raise ValueError("give temperature or delta_x, not both")
        if self.temperature is not None and self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.delta_x is not None and self.delta_x <= 0:
            raise ValueError("delta_x must be positive")

    def width(self) -> float:
        """Position std Delta x_i implied by the config."""
        if self.delta_x is not None:
            return self.delta_x
        w0 = harmonic_frequency(self.trap)
        if self.temperature is not None:
            kT_over_m = self.constants.k_B * self.temperature / self.constants.m
            return float(np.sqrt(kT_over_m)) / w0
        if isinstance(self.plan, TransportPlan):
            return DEFAULT_WIDTH_OVER_D * self.plan.d
        raise ValueError("width underdetermined: give temperature or delta_x")


def _thermal_bracket(trap: TrapSpec, s2: float, dx_i: float):
    """Expand from the bottom until exp(-U/s2) is negligible or the
    potential stops rising (a barrier bounds the trapped region)."""
    h = 0.25 * dx_i
    cut = 36.0 * s2
    out = []
    for sign in (-1.0, 1.0):
        x = 0.0
        u_prev = 0.0
        for k in range(1, 20001):
            xn = sign * k * h
            u = float(potential(trap, xn)) - float(potential(trap, 0.0))
            if u < u_prev:
                break  # over the barrier; trapped region ends at x
            x = xn
            u_prev = u
            if u >= cut:
                break
        else:
            raise SamplingError("potential too flat for thermal sampling")
        out.append(x)
    return out[0], out[1]


def sample_equilibrium(cfg: EnsembleConfig):
    """Thermal equilibrium sample: Gaussian velocities, Boltzmann
    positions (rejection-sampled for anharmonic families).

    Returns a list of ParticleState at t=0.  Deterministic per seed.
    """
    rng = np.random.default_rng(cfg.seed)
    w0 = harmonic_frequency(cfg.trap)
    dx_i = cfg.width()
    dv_i = w0 * dx_i
    s2 = dv_i**2  # k_B T / m

    vs = rng.normal(0.0, dv_i, cfg.n_particles)
    if isinstance(cfg.trap, Harmonic) or (
            isinstance(cfg.trap, PowerLaw) and cfg.trap.n == 1):
        xs = rng.normal(0.0, dx_i, cfg.n_particles)
    else:
        lo, hi = _thermal_bracket(cfg.trap, s2, dx_i)
        u_bottom = float(potential(cfg.trap, 0.0))
        xs = np.empty(cfg.n_particles)
        have = 0
        drawn = 0
        while have < cfg.n_particles:
            m = max(4 * (cfg.n_particles - have), 256)
            cand = rng.uniform(lo, hi, m)
            w = np.exp(-(np.asarray(potential(cfg.trap, cand), dtype=float)
                         - u_bottom) / s2)
            keep = cand[rng.uniform(0.0, 1.0, m) < w]
            take = min(keep.size, cfg.n_particles - have)
            xs[have:have + take] = keep[:take]
            have += take
            drawn += m
            if drawn >= 4096 and have < 1e-3 * drawn:
                raise SamplingError(
                    f"rejection acceptance {have/drawn:.2e} < 1e-3")
    return [ParticleState(x=float(x), v=float(v), t=0.0)
            for x, v in zip(xs, vs)]


@dataclass(frozen=True)
class MomentState:
    """Raw packet moments: means and non-centered second moments."""

    xbar: float
    vbar: float
    x2: float
    v2: float
    xv: float

    @property
    def var_x(self) -> float:
        return self.x2 - self.xbar**2

    @property
    def var_v(self) -> float:
        return self.v2 - self.vbar**2

    @property
    def cov_xv(self) -> float:
        return self.xv - self.xbar * self.vbar

    def cauchy_schwarz_ok(self, rtol: float = 1e-9) -> bool:
        bound = self.var_x * self.var_v
        return self.cov_xv**2 <= bound * (1.0 + rtol) + rtol

    @staticmethod
    def from_states(states) -> "MomentState":
        xs = np.array([s.x for s in states])
        vs = np.array([s.v for s in states])
        return MomentState(xbar=float(xs.mean()), vbar=float(vs.mean()),
                           x2=float((xs**2).mean()),
                           v2=float((vs**2).mean()),
                           xv=float((xs * vs).mean()))

    @staticmethod
    def equilibrium(delta_x: float, omega0: float) -> "MomentState":
        return MomentState(xbar=0.0, vbar=0.0, x2=delta_x**2,
                           v2=(omega0 * delta_x)**2, xv=0.0)


@dataclass
class MomentHistory:
    """Dense moment trajectories on a uniform time grid."""

    t: np.ndarray
    xbar: np.ndarray
    vbar: np.ndarray
    x2: np.ndarray
    v2: np.ndarray
    xv: np.ndarray

    def state(self, i: int) -> MomentState:
        return MomentState(xbar=float(self.xbar[i]), vbar=float(self.vbar[i]),
                           x2=float(self.x2[i]), v2=float(self.v2[i]),
                           xv=float(self.xv[i]))

    @property
    def final(self) -> MomentState:
        return self.state(-1)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("t,xbar,vbar,x2,v2,xv\n")
            for i in range(self.t.size):
                fh.write(f"{self.t[i]:.17g},{self.xbar[i]:.17g},"
                         f"{self.vbar[i]:.17g},{self.x2[i]:.17g},"
                         f"{self.v2[i]:.17g},{self.xv[i]:.17g}\n")


def _plan_x0(plan: Union[TransportPlan, Callable]) -> Callable:
    return plan.x0 if isinstance(plan, TransportPlan) else plan


def evolve_moments(omega0: float, plan: Union[TransportPlan, Callable],
                   init: MomentState, t_f: Optional[float] = None,
                   n_samples: int = 2001, tol: float = 1e-12
                   ) -> MomentHistory:
    """Integrate the closed five-moment system of a harmonic trap.

    The system closes only for harmonic trapping, so a TransportPlan
    for any other family is rejected.  Internally the equations are
    integrated in units of (d, 1/omega0) to keep the mixed-dimension
    state vector well scaled regardless of the lab units.
    """
    if isinstance(plan, TransportPlan) and not isinstance(
            plan.trap, Harmonic):
        if not (isinstance(plan.trap, PowerLaw) and plan.trap.n == 1):
            raise UnsupportedFamilyError(
                "moment system closes only for harmonic trapping, got "
                f"{type(plan.trap).__name__}")
    if t_f is None:
        if not isinstance(plan, TransportPlan):
            raise ValueError("t_f required when plan is a bare callable")
        t_f = plan.t_f
    x0 = _plan_x0(plan)

    # length scale: transport distance when known, thermal width else
    if isinstance(plan, TransportPlan):
        L = plan.d
    else:
        L = max(abs(x0(t_f)), np.sqrt(abs(init.x2)), abs(init.xbar))
        if L == 0.0:
            L = 1.0
    u = omega0 * t_f

    def rhs(s, y):
        x2, xv, v2, xb, vb = y
        z0 = x0(s * t_f) / L
        return [2.0 * xv,
                v2 - u**2 * x2 + u**2 * z0 * xb,
                -2.0 * u**2 * xv + 2.0 * u**2 * z0 * vb,
                vb,
                -u**2 * (xb - z0)]

    y0 = [init.x2 / L**2, init.xv * t_f / L**2, init.v2 * (t_f / L)**2,
          init.xbar / L, init.vbar * t_f / L]
    s_eval = np.linspace(0.0, 1.0, n_samples)
    sol = solve_ivp(rhs, (0.0, 1.0), y0, method="DOP853",
                    rtol=tol, atol=tol, t_eval=s_eval)
    if not sol.success:
        raise RuntimeError(f"moment integration failed: {sol.message}")
    x2, xv, v2, xb, vb = sol.y
    return MomentHistory(t=s_eval * t_f,
                         xbar=xb * L, vbar=vb * L / t_f,
                         x2=x2 * L**2, v2=v2 * (L / t_f)**2,
                         xv=xv * L**2 / t_f)


def xv_exact(omega0: float, plan: Union[TransportPlan, Callable],
             history: MomentHistory, t: float,
             panels_per_period: int = 12) -> float:
    """Position-velocity correlation by direct quadrature.

    Evaluates (w0/2) int_0^t (x0dot xbar + 3 x0 vbar) sin[2w0(t-t')]dt'
    with Gauss-Legendre panels resolving the 2 w0 oscillation; xbar and
    vbar are cubic-spline interpolants of the supplied history.
    """
    if t == 0.0:
        return 0.0
    if t < 0.0 or t > history.t[-1] + 1e-12 * history.t[-1]:
        raise ValueError("t outside the supplied history")
    xb = CubicSpline(history.t, history.xbar)
    vb = CubicSpline(history.t, history.vbar)
    if isinstance(plan, TransportPlan):
        x0, x0dot = plan.x0, plan.x0dot
    else:
        x0 = plan
        x0dot = CubicSpline(history.t, x0(history.t)).derivative()

    periods = omega0 * t / np.pi  # period of sin(2 w0 tau) is pi/w0
    n_panels = int(max(64, np.ceil(panels_per_period * periods)))
    edges = np.linspace(0.0, t, n_panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1] - edges[0])
    nodes = mid[:, None] + half * _GL_X[None, :]
    src = (np.asarray(x0dot(nodes)) * xb(nodes)
           + 3.0 * np.asarray(x0(nodes)) * vb(nodes))
    kern = np.sin(2.0 * omega0 * (t - nodes))
    val = (src * kern) @ (_GL_W * half)
    return float(0.5 * omega0 * val.sum())


def packet_cell(kind: str, xi_over_d: float, u: float,
                n_particles: int = 2000,
                width_over_d: float = DEFAULT_WIDTH_OVER_D,
                seed: int = 0, order: int = 5, tol: float = 1e-10):
    """One (xi, u) cell of the packet sweep, in transport units d=1,
    t_f=1, omega0=u.  Returns (rel_energy_err, feasible)."""
    if kind == "cubic":
        trap = HarmonicCubic(omega0=u, xi=xi_over_d)
    elif kind == "quartic":
        trap = HarmonicQuartic(omega0=u, xi=xi_over_d)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    plan = design_plan(trap, make_reference(1.0, 1.0, order))
    if not plan.existence_ok:
        return np.nan, False

    cfg = EnsembleConfig(n_particles=n_particles, trap=trap, plan=plan,
                         seed=seed, delta_x=width_over_d)
    states = sample_equilibrium(cfg)
    xs = np.array([s.x for s in states])
    vs = np.array([s.v for s in states])

    u_bottom = float(potential(trap, 0.0))
    e_i = np.mean(0.5 * vs**2
                  + np.asarray(potential(trap, xs)) - u_bottom)
    xf, vf = integrate_many(trap, plan, xs, vs, 0.0, 1.0, tol=tol)
    e_f = np.mean(0.5 * vf**2
                  + np.asarray(potential(trap, xf - 1.0)) - u_bottom)
    return float(abs(1.0 - e_f / e_i)), True


@dataclass
class PacketSweep:
    """Relative packet energy error over the (xi/d, u) plane."""

    kind: str
    xi_over_d: np.ndarray
    u: np.ndarray
    values: np.ndarray        # |1 - E_f/E_i|, NaN where infeasible
    feasible: np.ndarray      # bool mask
    n_particles: int
    seed: int
    diagnostics: dict = field(default_factory=dict)

    def row(self, i: int):
        return self.u, self.values[i]

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("log10_xi_over_d,u,log10_rel_energy_err,feasible\n")
            with np.errstate(divide="ignore", invalid="ignore"):
                logv = np.log10(self.values)
            for i, xi in enumerate(self.xi_over_d):
                lxi = np.log10(xi)
                for j, uu in enumerate(self.u):
                    fh.write(f"{lxi:.17g},{uu:.17g},{logv[i, j]:.17g},"
                             f"{int(self.feasible[i, j])}\n")


def packet_energy_sweep(kind: str, xi_over_d, u,
                        n_particles: int = 2000,
                        width_over_d: float = DEFAULT_WIDTH_OVER_D,
                        seed: int = 0, order: int = 5,
                        tol: float = 1e-10) -> PacketSweep:
    """Scan |1 - E_f/E_i| over a grid of anharmonicities and times.

    All cells of one xi row share the same substream seed (common
    random numbers along u), so the row is a smooth function of the
    transport time and its minima resolve far below the single-cell
    statistical floor; rows draw independent substreams.  Cells remain
    independently computable and the result is bit-identical for a
    given (seed, grid) regardless of evaluation order.  A cell whose
    particle integration fails is flagged infeasible and its diagnostic
    recorded.
    """
    xi_over_d = np.atleast_1d(np.asarray(xi_over_d, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    values = np.empty((xi_over_d.size, u.size))
    feasible = np.zeros(values.shape, dtype=bool)
    diags = {}
    for i, xi in enumerate(xi_over_d):
        for j, uu in enumerate(u):
            cell_seed = _mix_seed(seed, i)
            try:
                values[i, j], feasible[i, j] = packet_cell(
                    kind, float(xi), float(uu), n_particles=n_particles,
                    width_over_d=width_over_d, seed=cell_seed,
                    order=order, tol=tol)
            except IntegrationError as err:
                values[i, j] = np.nan
                feasible[i, j] = False
                diags[(i, j)] = f"xi/d={xi:g} u={uu:g}: {err}"
    return PacketSweep(kind=kind, xi_over_d=xi_over_d, u=u, values=values,
                       feasible=feasible, n_particles=n_particles,
                       seed=seed, diagnostics=diags)


def find_magic_times(u, values, min_decades: float = 2.0):
    """Extract magic transport times from one sweep row.

    A magic time is a local minimum of |1 - E_f/E_i|(u) at least
    min_decades below the lower of the two flanking maxima.  The
    minimum is refined by the vertex of a parabola through the squared
    values (exact for the generic linear zero crossing), which resolves
    u0 well below the grid step.  Returns (u0, log10 depth) pairs.
    """
    u = np.asarray(u, dtype=float)
    values = np.asarray(values, dtype=float)
    if u.size != values.size:
        raise ValueError("u and values must have equal length")
    ok = np.isfinite(values)
    out = []
    y = values**2
    for i in range(1, u.size - 1):
        if not (ok[i - 1] and ok[i] and ok[i + 1]):
            continue
        if not (values[i] < values[i - 1] and values[i] <= values[i + 1]):
            continue
        left = values[:i][ok[:i]]
        right = values[i + 1:][ok[i + 1:]]
        if left.size == 0 or right.size == 0:
            continue
        prominence = min(left.max(), right.max())
        if not (values[i] > 0 and
                np.log10(prominence / values[i]) >= min_decades):
            continue
        # parabola vertex through (u, y) neighbors
        h1, h2 = u[i] - u[i - 1], u[i + 1] - u[i]
        d1 = (y[i] - y[i - 1]) / h1
        d2 = (y[i + 1] - y[i]) / h2
        curv = 2.0 * (d2 - d1) / (h1 + h2)
        if curv <= 0:
            u0 = u[i]
        else:
            u0 = u[i] - (h1 * d2 + h2 * d1) / (h1 + h2) / curv
            u0 = min(max(u0, u[i - 1]), u[i + 1])
        out.append((float(u0), float(np.log10(values[i]))))
    return out


def magic_times_csv(path, xi_over_d: float, pairs):
    with open(path, "w") as fh:
        fh.write("log10_xi_over_d,u0,log10_rel_energy_err\n")
        lxi = np.log10(xi_over_d)
        for u0, depth in pairs:
            fh.write(f"{lxi:.17g},{u0:.17g},{depth:.17g}\n")
