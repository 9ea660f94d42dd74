"""Adaptive Runge-Kutta integration with steady-state detection.

Thin layer over scipy's embedded RK pairs (RK45 by default) that adds
complex-state convenience, NaN guarding, and a chunked steady-state driver
that distinguishes convergence, divergence, and bounded oscillation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp


class IntegrationError(RuntimeError):
    """Integration failed; last_valid_t holds the last trusted time."""

    def __init__(self, msg, last_valid_t=None):
        super().__init__(msg)
        self.last_valid_t = last_valid_t


class StiffnessError(IntegrationError):
    """Step size underflow (required step below floating-point resolution)."""


@dataclass
class IntegratorOptions:
    rtol: float = 1e-9
    atol: float = 1e-12
    max_step: float = math.inf
    t_max: float = 1e4
    ss_tol: float = 1e-10
    method: str = "RK45"
    n_checks: int = 200         # steady-state checkpoints across [0, t_max]
    divergence_norm: float = 1e12

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be > 0")
        if self.ss_tol <= 0:
            raise ValueError("ss_tol must be > 0")


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray   # shape (dim, len(t)), complex

    @property
    def final(self) -> np.ndarray:
        return self.y[:, -1]


@dataclass
class SteadyStateResult:
    y: np.ndarray
    t: float
    status: str           # converged | oscillatory | divergent | not_converged
    criterion: float      # last value of ||rhs||_inf / max(1, ||y||_inf)
    history: list = field(default_factory=list)   # (t, criterion) checkpoints

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def _guarded(rhs):
    def wrapped(t, y):
        dy = np.asarray(rhs(t, y))
        if not np.all(np.isfinite(dy.view(float))):
            raise _NonFinite(t)
        return dy
    return wrapped


class _NonFinite(Exception):
    def __init__(self, t):
        self.t = t


def integrate(rhs, y0, t_span, opts: IntegratorOptions | None = None,
              t_eval=None) -> Trajectory:
    """Integrate dy/dt = rhs(t, y) over t_span; y may be real or complex."""
    opts = opts or IntegratorOptions()
    y0 = np.atleast_1d(np.asarray(y0, dtype=complex))
    if not np.all(np.isfinite(np.asarray(rhs(t_span[0], y0)).view(float))):
        raise IntegrationError("rhs is not finite at the initial state",
                               last_valid_t=t_span[0])
    try:
        sol = solve_ivp(_guarded(rhs), t_span, y0, method=opts.method,
                        rtol=opts.rtol, atol=opts.atol, max_step=opts.max_step,
                        t_eval=t_eval, dense_output=False)
    except _NonFinite as exc:
        raise IntegrationError(
            f"non-finite derivative encountered near t = {exc.t}",
            last_valid_t=exc.t) from None
    if not sol.success:
        if "step size" in (sol.message or "").lower():
            raise StiffnessError(sol.message, last_valid_t=sol.t[-1] if len(sol.t) else None)
        raise IntegrationError(sol.message, last_valid_t=sol.t[-1] if len(sol.t) else None)
    return Trajectory(t=sol.t, y=sol.y)


def _criterion(rhs, t, y):
    dy = np.asarray(rhs(t, y))
    return float(np.max(np.abs(dy)) / max(1.0, np.max(np.abs(y))))


def integrate_to_steady(rhs, y0, opts: IntegratorOptions | None = None) -> SteadyStateResult:
    """Integrate until ||rhs(y)||_inf < ss_tol * max(1, ||y||_inf).

    If t_max is reached first, the run is classified as 'oscillatory' when the
    residual criterion stayed bounded without decaying over the second half of
    the run, 'divergent' when the state norm blew up, and 'not_converged'
    otherwise.
    """
    opts = opts or IntegratorOptions()
    y = np.atleast_1d(np.asarray(y0, dtype=complex))
    t = 0.0
    dt = opts.t_max / opts.n_checks
    history = [(t, _criterion(rhs, t, y))]
    if history[0][1] < opts.ss_tol:
        return SteadyStateResult(y=y, t=t, status="converged",
                                 criterion=history[0][1], history=history)

    for _ in range(opts.n_checks):
        traj = integrate(rhs, y, (t, t + dt), opts)
        t = float(traj.t[-1])
        y = traj.final
        if np.max(np.abs(y)) > opts.divergence_norm:
            return SteadyStateResult(y=y, t=t, status="divergent",
                                     criterion=math.inf, history=history)
        crit = _criterion(rhs, t, y)
        history.append((t, crit))
        if crit < opts.ss_tol:
            return SteadyStateResult(y=y, t=t, status="converged",
                                     criterion=crit, history=history)

    # bounded residual that did not decay over the second half => oscillatory
    crits = np.array([c for _, c in history])
    half = len(crits) // 2
    recent = float(np.median(crits[-max(1, len(crits) // 4):]))
    earlier = float(np.median(crits[half:half + max(1, len(crits) // 4)]))
    status = "oscillatory" if (np.isfinite(recent) and earlier > 0
                               and recent > 0.5 * earlier) else "not_converged"
    return SteadyStateResult(y=y, t=t, status=status,
                             criterion=float(crits[-1]), history=history)
