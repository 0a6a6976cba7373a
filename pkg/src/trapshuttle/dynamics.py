"""Classical one-body dynamics under a moving trap.

Integrates xdd = force(trap, x - x0(t)) with an adaptive high-order
Runge-Kutta scheme (DOP853) and dense output, plus the residual-energy
diagnostic used by every downstream sweep.  Energies are per unit mass
unless a mass is passed explicitly; the potential is always referenced
to its value at the trap bottom so that rest-at-minimum reads zero for
every family (the tweezers potential has a negative floor).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.integrate import solve_ivp

from trapshuttle.traps import TransportPlan, TrapSpec, force, potential


@dataclass(frozen=True)
class PhysicalConstants:
    """SI constants for converting per-mass results to lab units."""
    m: float = 40.0 * 1.667e-27
    hbar: float = 1.054571817e-34
    k_B: float = 1.380649e-23

    def __post_init__(self):
        if self.m <= 0 or self.hbar <= 0 or self.k_B <= 0:
            raise ValueError("constants must be positive")

    def a0(self, omega0: float) -> float:
        """Ground-state oscillator length sqrt(hbar/(m omega0))."""
        return float(np.sqrt(self.hbar / (self.m * omega0)))


@dataclass(frozen=True)
class ParticleState:
    x: float
    v: float
    t: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.v)
                and np.isfinite(self.t)):
            raise ValueError("state must be finite")


class IntegrationError(RuntimeError):
    """Integration failure; carries the last accepted state."""

    def __init__(self, message: str, last_state: ParticleState):
        super().__init__(message)
        self.last_state = last_state


@dataclass
class Trajectory:
    """Sampled solution of one transport integration."""
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    E: np.ndarray  # per-mass mechanical energy in the instantaneous trap

    @property
    def final(self) -> ParticleState:
        return ParticleState(x=float(self.x[-1]), v=float(self.v[-1]),
                             t=float(self.t[-1]))

    def states(self):
        return [ParticleState(x=float(x), v=float(v), t=float(t))
                for t, x, v in zip(self.t, self.x, self.v)]

    def to_csv(self, path, m: float = 1.0):
        with open(path, "w") as fh:
            fh.write("t,x,v,E\n")
            for t, x, v, e in zip(self.t, self.x, self.v, self.E):
                fh.write(f"{t:.17g},{x:.17g},{v:.17g},{m * e:.17g}\n")


def _x0_callable(plan: Union[TransportPlan, Callable]) -> Callable:
    return plan.x0 if isinstance(plan, TransportPlan) else plan


def _solver_tol(tol: float) -> float:
    # tol is a target on delivered accuracy; the step controller runs a
    # decade tighter so accumulated error over long spans stays within
    # the documented budgets (drift < tol*100 over 100 periods).
    return max(tol / 10.0, 2.3e-14)


def integrate(trap: TrapSpec, plan: Union[TransportPlan, Callable],
              init: ParticleState, t_end: float, tol: float = 1e-10,
              n_samples: int = 1001) -> Trajectory:
    """Integrate one particle from init.t to t_end.

    `plan` is a TransportPlan or any callable t -> x0.  Backward spans
    (t_end < init.t) are allowed, which gives the time-reversal check.
    tol is applied as both relative and absolute (on the scale of the
    state variables); must lie in [1e-13, 1e-6].
    """
    if not 1e-13 <= tol <= 1e-6:
        raise ValueError("tol must lie in [1e-13, 1e-6]")
    x0 = _x0_callable(plan)

    def rhs(t, y):
        return [y[1], force(trap, y[0] - x0(t))]

    stol = _solver_tol(tol)
    sol = solve_ivp(rhs, (init.t, t_end), [init.x, init.v],
                    method="DOP853", rtol=stol, atol=stol,
                    dense_output=True)
    if not sol.success:
        last = ParticleState(x=float(sol.y[0, -1]), v=float(sol.y[1, -1]),
                             t=float(sol.t[-1]))
        raise IntegrationError(sol.message, last)

    ts = np.linspace(init.t, t_end, n_samples)
    ys = sol.sol(ts)
    u0 = float(potential(trap, 0.0))
    es = 0.5 * ys[1] ** 2 + potential(trap, ys[0] - x0(ts)) - u0
    return Trajectory(t=ts, x=ys[0], v=ys[1], E=es)


def integrate_many(trap: TrapSpec, plan: Union[TransportPlan, Callable],
                   xs0: np.ndarray, vs0: np.ndarray, t0: float,
                   t_end: float, tol: float = 1e-10, t_eval=None):
    """Vectorized states for a batch of independent particles.

    One stacked 2N-dimensional solve; the particles do not interact, so
    this is exactly N separate integrations sharing step-size control.
    Returns (xs, vs) at t_end, or arrays of shape (len(t_eval), N) when
    a checkpoint grid t_eval is supplied.
    """
    x0 = _x0_callable(plan)
    xs0 = np.asarray(xs0, dtype=float)
    vs0 = np.asarray(vs0, dtype=float)
    n = xs0.size

    def rhs(t, y):
        return np.concatenate([y[n:], force(trap, y[:n] - x0(t))])

    stol = _solver_tol(tol)
    sol = solve_ivp(rhs, (t0, t_end), np.concatenate([xs0, vs0]),
                    method="DOP853", rtol=stol, atol=stol, t_eval=t_eval)
    if not sol.success:
        raise IntegrationError(sol.message, ParticleState(
            x=float(sol.y[0, -1]), v=float(sol.y[n, -1]),
            t=float(sol.t[-1])))
    if t_eval is None:
        return sol.y[:n, -1], sol.y[n:, -1]
    return sol.y[:n, :].T, sol.y[n:, :].T


def residual_energy(trap: TrapSpec, plan: Union[TransportPlan, Callable],
                    final: ParticleState, m: float = 1.0) -> float:
    """Excess energy left after transport, m [v^2/2 + U(x - x0(t_f))].

    The potential is referenced to the trap bottom, so a particle at
    rest at the final minimum has exactly zero residual energy.  With
    the default m = 1 the result is per unit mass.
    """
    if isinstance(plan, TransportPlan):
        if not np.isclose(final.t, plan.t_f, rtol=1e-12, atol=1e-12):
            raise ValueError("final state must be at t = t_f")
        x0f = plan.x0(plan.t_f)
    else:
        x0f = plan(final.t)
    dx = final.x - x0f
    u0 = float(potential(trap, 0.0))
    return m * (0.5 * final.v**2 + float(potential(trap, dx)) - u0)
