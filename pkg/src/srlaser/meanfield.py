"""Mean-field dynamics of the two-class (driven/undriven) laser.

Contains the reduced (cavity-eliminated) and with-cavity equations of motion,
the phase dynamics, the closed-form traveling-wave frequency, the lasing
thresholds, and the good-cavity (standard laser) limit.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .integrate import IntegratorOptions, Trajectory, integrate
from .model import MeanFieldState, SystemParams, TravelingWaveSolution


class ThresholdError(ValueError):
    """Raised when a threshold formula is evaluated outside its domain."""


BAD_CAVITY_WARN = 10.0


def _warn_if_good_cavity(params: SystemParams):
    if params.bad_cavity_ratio < BAD_CAVITY_WARN:
        warnings.warn(
            f"kappa/(sqrt(N)*Omega) = {params.bad_cavity_ratio:.3g} < "
            f"{BAD_CAVITY_WARN}; the reduced equations assume a bad cavity",
            stacklevel=3,
        )


# ---------------------------------------------------------------------------
# Equations of motion
# ---------------------------------------------------------------------------

def reduced_rhs_vec(y: np.ndarray, params: SystemParams) -> np.ndarray:
    """Reduced mean-field derivative on the packed vector
    [s+_d, s+_ud, s_z_d, s_z_ud] (complex dtype; s_z entries real).

    A class with zero population fraction has no atoms; its components are
    frozen (zero derivative) instead of evolving as a fictitious spectator,
    so that e.g. p_d = 1 runs reach a true steady state.
    """
    V, gp, gm = params.V, params.gamma_plus, params.gamma_minus
    G = params.Gamma
    sp_d, sp_ud = y[0], y[1]
    sz_d, sz_ud = y[2].real, y[3].real
    sp = params.p_d * sp_d + params.p_ud * sp_ud
    d_sp_d = V * sp * sz_d - 0.5 * (G + gp) * sp_d
    d_sp_ud = V * sp * sz_ud - 0.5 * G * sp_ud
    d_sz_d = -4.0 * V * (np.conj(sp_d) * sp).real - gm * (1.0 + sz_d) + gp * (1.0 - sz_d)
    d_sz_ud = -4.0 * V * (np.conj(sp_ud) * sp).real - gm * (1.0 + sz_ud)
    if params.p_d == 0.0:
        d_sp_d = 0j
        d_sz_d = 0.0
    if params.p_ud == 0.0:
        d_sp_ud = 0j
        d_sz_ud = 0.0
    return np.array([d_sp_d, d_sp_ud, d_sz_d, d_sz_ud], dtype=complex)


def mf_rhs_reduced(state: MeanFieldState, params: SystemParams) -> MeanFieldState:
    """Time derivative of the reduced (cavity-eliminated) mean-field state."""
    _warn_if_good_cavity(params)
    dy = reduced_rhs_vec(state.to_vector()[:4], params)
    return MeanFieldState.from_vector(dy)


def with_cavity_rhs_vec(y: np.ndarray, params: SystemParams) -> np.ndarray:
    """With-cavity derivative on [s+_d, s+_ud, s_z_d, s_z_ud, alpha]."""
    O, k = params.omega, params.kappa
    gp, gm, gz = params.gamma_plus, params.gamma_minus, params.gamma_z
    sp_d, sp_ud = y[0], y[1]
    sz_d, sz_ud = y[2].real, y[3].real
    alpha = y[4]
    sm = params.p_d * np.conj(sp_d) + params.p_ud * np.conj(sp_ud)
    d_sp_d = -0.5 * (gp + gm + 2.0 * gz) * sp_d - 1j * O * np.conj(alpha) * sz_d
    d_sp_ud = -0.5 * (gm + 2.0 * gz) * sp_ud - 1j * O * np.conj(alpha) * sz_ud
    d_sz_d = (-gm * (sz_d + 1.0) - gp * (sz_d - 1.0)
              + 4.0 * O * (alpha * sp_d).imag)
    d_sz_ud = -gm * (sz_ud + 1.0) + 4.0 * O * (alpha * sp_ud).imag
    d_alpha = -0.5 * k * alpha - 1j * params.N * O * sm
    # same empty-class convention as reduced_rhs_vec
    if params.p_d == 0.0:
        d_sp_d = 0j
        d_sz_d = 0.0
    if params.p_ud == 0.0:
        d_sp_ud = 0j
        d_sz_ud = 0.0
    return np.array([d_sp_d, d_sp_ud, d_sz_d, d_sz_ud, d_alpha], dtype=complex)


def mf_rhs_with_cavity(state: MeanFieldState, params: SystemParams) -> MeanFieldState:
    """Time derivative of the mean-field state including the cavity amplitude."""
    if state.alpha is None:
        raise ValueError("state.alpha is required for the with-cavity equations")
    dy = with_cavity_rhs_vec(state.to_vector(), params)
    return MeanFieldState.from_vector(dy)


def adiabatic_alpha(state: MeanFieldState, params: SystemParams) -> complex:
    """Cavity amplitude slaved to the spins: alpha = -2i*N*Omega*s^-/kappa."""
    sm = params.p_d * np.conj(state.s_plus_d) + params.p_ud * np.conj(state.s_plus_ud)
    return complex(-2j * params.N * params.omega * sm / params.kappa)


# ---------------------------------------------------------------------------
# Phase dynamics
# ---------------------------------------------------------------------------

@dataclass
class PhaseView:
    phi_d: float | None
    phi_ud: float | None
    phi_bar: float | None
    mag_d: float
    mag_ud: float
    mag_bar: float


def phase_view(state: MeanFieldState, params: SystemParams) -> PhaseView:
    sp = state.s_plus(params)
    def ang(z):
        return cmath.phase(z) if abs(z) > 0 else None
    return PhaseView(
        phi_d=ang(state.s_plus_d), phi_ud=ang(state.s_plus_ud), phi_bar=ang(sp),
        mag_d=abs(state.s_plus_d), mag_ud=abs(state.s_plus_ud), mag_bar=abs(sp),
    )


def phase_rhs(state: MeanFieldState, params: SystemParams) -> tuple[float | None, float | None]:
    """d(phi_d)/dt, d(phi_ud)/dt of the conformist-contrarian phase equations.

    A class with zero coherence has an undefined phase; None is returned for
    that component.
    """
    view = phase_view(state, params)
    out = []
    for phi, mag, sz in ((view.phi_d, view.mag_d, state.s_z_d),
                         (view.phi_ud, view.mag_ud, state.s_z_ud)):
        if phi is None or view.phi_bar is None:
            out.append(None)
        else:
            out.append(sz * params.V * view.mag_bar / mag
                       * math.sin(view.phi_bar - phi))
    return tuple(out)


# ---------------------------------------------------------------------------
# Closed-form results
# ---------------------------------------------------------------------------

TW_IMAG_TOL = 1e-12     # |Im omega| above this (in units of V) => no solution


def traveling_wave_frequency(params: SystemParams) -> TravelingWaveSolution:
    """Traveling-wave oscillation frequency (valid for gamma_minus=gamma_z=0).

    Evaluated with complex intermediates; the solution exists only when the
    resulting frequency is real.
    """
    V, gp = params.V, params.gamma_plus
    v = 2.0 * V - gp
    inner = v - 2.0 * V * params.p_ud - cmath.sqrt(complex(v * (v - 4.0 * V * params.p_ud)))
    w = cmath.sqrt(0.25 * gp * inner)
    if abs(w.imag) > TW_IMAG_TOL * max(V, 1e-300):
        return TravelingWaveSolution(omega=None, exists=False)
    return TravelingWaveSolution(omega=abs(w.real), exists=True)


def lasing_threshold(params: SystemParams) -> float:
    """Critical driven fraction of the cavity-coupled ensemble.

    Values > 1 mean no lasing at any p_d.
    """
    gp, gm, G, V = params.gamma_plus, params.gamma_minus, params.Gamma, params.V
    if gp <= 0:
        raise ThresholdError("gamma_plus must be > 0 (no gain otherwise)")
    return 0.5 * (1.0 + gm / gp) * (1.0 + G / V + gp / (2.0 * V))


def lasing_threshold_decoupled(params: SystemParams) -> float:
    """Critical driven fraction when the undriven spins see no cavity."""
    gp, gm, G, V = params.gamma_plus, params.gamma_minus, params.Gamma, params.V
    if gp <= gm:
        raise ThresholdError("gamma_plus must exceed gamma_minus (no inversion)")
    return (gm + gp) * (G + gp) / (2.0 * (gp - gm) * V)


def incoherent_fixed_point(params: SystemParams) -> MeanFieldState:
    """Nonlasing fixed point of the reduced equations."""
    gp, gm = params.gamma_plus, params.gamma_minus
    if gp + gm == 0:
        raise ThresholdError("s_z_d undefined for gamma_plus = gamma_minus = 0")
    return MeanFieldState(s_plus_d=0j, s_plus_ud=0j,
                          s_z_d=(gp - gm) / (gp + gm), s_z_ud=-1.0)


def coherence_growth_rate(params: SystemParams, fd_step: float = 1e-7) -> float:
    """Largest real part of the linearization of the reduced equations at the
    incoherent fixed point, restricted to the coherence sector.

    The Jacobian block is obtained by finite differences. Populations
    decouple from coherences at linear order around the fixed point (their
    coupling is quadratic in s+), so the lasing instability lives entirely in
    the 4 real coherence coordinates; with gamma_minus = 0 the population
    sector additionally carries a neutral direction that must not be mistaken
    for the instability.
    """
    fp = incoherent_fixed_point(params).to_vector()[:4]

    def coh_rhs(x):
        y = fp.copy()
        y[0] += x[0] + 1j * x[1]
        y[1] += x[2] + 1j * x[3]
        dy = reduced_rhs_vec(y, params)
        return np.array([dy[0].real, dy[0].imag, dy[1].real, dy[1].imag])

    J = np.zeros((4, 4))
    for j in range(4):
        e = np.zeros(4)
        e[j] = fd_step
        J[:, j] = (coh_rhs(e) - coh_rhs(-e)) / (2.0 * fd_step)
    return float(np.max(np.linalg.eigvals(J).real))


def bisect_threshold(params: SystemParams, tol: float = 1e-8) -> float | None:
    """Numerical lasing threshold: the p_d at which the incoherent fixed
    point loses linear stability. Returns None if stable up to p_d = 1."""
    from .model import derive
    from dataclasses import replace

    def growth(p):
        # bisection probes arbitrary p_d; the integer-count warning from
        # derive is irrelevant here (the reduced equations never use N_d)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return coherence_growth_rate(derive(replace(params, p_d=p)))

    lo, hi = 0.0, 1.0
    if growth(hi) < 0:
        return None
    if growth(lo) > 0:
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if growth(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Standard-laser (good cavity) limit
# ---------------------------------------------------------------------------

def _gtilde_sq(params: SystemParams) -> tuple[float, float]:
    gp, gm, gz = params.gamma_plus, params.gamma_minus, params.gamma_z
    return (gm + gp) * (gm + gp + 2.0 * gz), gm * (gm + 2.0 * gz)


def standard_laser_rhs(alpha: complex, params: SystemParams) -> complex:
    """d(alpha)/dt after adiabatic elimination of the spins.

    The bracket multiplying alpha is real, so arg(alpha) is conserved.
    """
    gd2, gud2 = _gtilde_sq(params)
    O, N = params.omega, params.N
    a2 = abs(alpha) ** 2
    if params.p_ud > 0 and gud2 == 0.0 and a2 == 0.0:
        raise ZeroDivisionError(
            "undriven saturation denominator vanishes (gamma_minus = 0 with "
            "p_ud > 0 at alpha = 0)")
    gain = 2.0 * N * params.p_d * (params.gamma_plus - params.gamma_minus) \
        / (gd2 / O**2 + 8.0 * a2)
    loss = 0.0
    if params.p_ud > 0:
        loss = 2.0 * N * params.p_ud * params.gamma_minus / (gud2 / O**2 + 8.0 * a2)
    return alpha * (-0.5 * params.kappa + gain - loss)


def standard_laser_threshold(params: SystemParams) -> tuple[bool, float]:
    """Good-cavity lasing condition; returns (lasing, margin).

    margin = left-hand side minus 1/(2V) of the threshold inequality.
    """
    gd2, gud2 = _gtilde_sq(params)
    if gd2 == 0.0:
        raise ThresholdError("driven saturation rate vanishes (no gain medium)")
    lhs = params.p_d * (params.gamma_plus - params.gamma_minus) / gd2
    if params.p_ud > 0:
        if gud2 == 0.0:
            raise ThresholdError(
                "undriven saturation rate vanishes with p_ud > 0 "
                "(gamma_minus = 0 is singular here)")
        lhs -= params.p_ud * params.gamma_minus / gud2
    margin = lhs - 1.0 / (2.0 * params.V)
    return margin > 0.0, margin


# ---------------------------------------------------------------------------
# Dynamical runs
# ---------------------------------------------------------------------------

SEED_COHERENCE = 1e-3


def default_mf_options() -> IntegratorOptions:
    """Integrator settings for mean-field runs.

    The 8th-order pair at rtol 1e-10 keeps the conserved undriven purity
    stable to ~1e-9 over t*V = 1e3; the 5(4) pair at the generic defaults
    drifts a factor ~50 more, which is too coarse for the purity and
    frequency checks built on these runs.
    """
    return IntegratorOptions(rtol=1e-10, method="DOP853")


def seeded_initial_state(params: SystemParams, rng=None, seed=None) -> MeanFieldState:
    """Incoherent fixed point plus a small random-phase seed coherence.

    The equations are U(1)-symmetric; the seed breaks the symmetry so that a
    lasing run selects a phase reproducibly (via the RNG seed).
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    theta = rng.uniform(-math.pi, math.pi)
    fp = incoherent_fixed_point(params)
    seed_c = SEED_COHERENCE * cmath.exp(1j * theta)
    return MeanFieldState(s_plus_d=seed_c, s_plus_ud=seed_c,
                          s_z_d=fp.s_z_d, s_z_ud=fp.s_z_ud)


def run_reduced(params: SystemParams, y0: MeanFieldState, t_max: float,
                opts: IntegratorOptions | None = None, t_eval=None) -> Trajectory:
    """Integrate the reduced mean-field equations."""
    _warn_if_good_cavity(params)
    opts = opts or default_mf_options()
    return integrate(lambda t, y: reduced_rhs_vec(y, params),
                     y0.to_vector()[:4], (0.0, t_max), opts, t_eval=t_eval)


def run_with_cavity(params: SystemParams, y0: MeanFieldState, t_max: float,
                    opts: IntegratorOptions | None = None, t_eval=None) -> Trajectory:
    """Integrate the five with-cavity mean-field equations."""
    if y0.alpha is None:
        raise ValueError("initial state must carry a cavity amplitude")
    opts = opts or default_mf_options()
    return integrate(lambda t, y: with_cavity_rhs_vec(y, params),
                     y0.to_vector(), (0.0, t_max), opts, t_eval=t_eval)


def settle_traveling_wave(params: SystemParams, seed: int = 0,
                          t_settle: float = 1500.0, t_window: float = 50.0,
                          drift_tol: float = 1e-7, max_rounds: int = 8,
                          opts: IntegratorOptions | None = None) -> MeanFieldState:
    """Integrate the seeded state in rounds of t_settle until the amplitudes
    stop drifting; returns the settled state (on the traveling wave when one
    exists, otherwise at the stable fixed point)."""
    opts = opts or default_mf_options()
    y = seeded_initial_state(params, seed=seed).to_vector()[:4]
    t_eval = np.linspace(0.0, t_window, 100)
    for _ in range(max_rounds):
        y = run_reduced(params, MeanFieldState.from_vector(y), t_settle, opts).final
        traj = integrate(lambda t, y_: reduced_rhs_vec(y_, params),
                         y, (0.0, t_window), opts, t_eval=t_eval)
        drift = 0.0
        for comp in (np.abs(traj.y[0]), np.abs(traj.y[1]),
                     traj.y[2].real, traj.y[3].real):
            drift = max(drift, float(np.ptp(comp)) / max(np.max(np.abs(comp)), 1e-30))
        y = traj.final
        if drift < drift_tol:
            break
    return MeanFieldState.from_vector(y)


@dataclass
class TravelingWaveMeasurement:
    omega: float                # signed rate of advance of arg(s+_ud)
    mag_drift: float            # max relative drift of |s+_mu|, s_z_mu
    linearity_residual: float   # rms residual of the linear phase fit (rad)


def measure_traveling_wave(params: SystemParams, t_settle: float = 1500.0,
                           t_window: float = 50.0, n_samples: int = 400,
                           seed: int = 0, drift_tol: float = 1e-7,
                           max_rounds: int = 8,
                           opts: IntegratorOptions | None = None
                           ) -> TravelingWaveMeasurement:
    """Run the reduced equations and extract the long-time rotation rate of
    the undriven coherence together with amplitude-drift diagnostics.

    Settling is repeated in rounds of t_settle until the amplitudes stop
    drifting (the approach to the limit cycle slows down close to threshold).
    """
    opts = opts or default_mf_options()
    y = seeded_initial_state(params, seed=seed).to_vector()[:4]
    t_eval = np.linspace(0.0, t_window, n_samples)
    best = None
    for _ in range(max_rounds):
        settle = run_reduced(params, MeanFieldState.from_vector(y), t_settle, opts)
        y = settle.final
        traj = integrate(lambda t, y_: reduced_rhs_vec(y_, params),
                         y, (0.0, t_window), opts, t_eval=t_eval)
        phase = np.unwrap(np.angle(traj.y[1]))
        coef, res = np.polyfit(traj.t, phase, 1, full=True)[:2]
        rms = math.sqrt(float(res[0]) / len(phase)) if len(res) else 0.0
        drift = 0.0
        for comp in (np.abs(traj.y[0]), np.abs(traj.y[1]),
                     traj.y[2].real, traj.y[3].real):
            scale = max(np.max(np.abs(comp)), 1e-30)
            drift = max(drift, float(np.ptp(comp)) / scale)
        best = TravelingWaveMeasurement(omega=float(coef[0]), mag_drift=drift,
                                        linearity_residual=rms)
        if drift < drift_tol:
            break
        y = traj.final
    return best
