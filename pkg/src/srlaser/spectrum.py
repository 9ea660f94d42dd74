"""Emission spectra via the quantum regression theorem.

The two-time correlation vector (<a^dag(t+tau)a(t)>, <sp_d(t+tau)a(t)>,
<sp_ud(t+tau)a(t)>) obeys a linear 3x3 system in tau; the spectrum is its
one-sided Laplace transform, evaluated as a per-frequency resolvent solve.
Also provides the double-Lorentzian fit and the eigenvalue-based extraction
of linewidth and frequency shift.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .model import CumulantState, LorentzianFit, SpectrumGrid, SystemParams


class MarginalStabilityError(RuntimeError):
    """The regression matrix has an eigenvalue on or beyond the imaginary axis."""


NEG_CLAMP_TOL = 1e-12   # negative values above -tol*max(S) are clamped to 0


@dataclass
class RegressionSystem:
    M: np.ndarray                  # 3x3 complex
    c0: np.ndarray                 # 3-component complex correlation vector


def regression_matrix(params: SystemParams, s_z_d: float, s_z_ud: float) -> np.ndarray:
    """3x3 drift matrix of the two-time correlations at fixed populations."""
    O = params.omega
    G, gp, k = params.Gamma, params.gamma_plus, params.kappa
    return np.array([
        [-0.5 * k, 1j * params.N_d * O, 1j * params.N_ud * O],
        [-1j * O * s_z_d, -0.5 * (G + gp), 0.0],
        [-1j * O * s_z_ud, 0.0, -0.5 * G],
    ], dtype=complex)


def correlation_vector(state: CumulantState) -> np.ndarray:
    """Equal-time seed (<a^dag a>, <sp_d a>, <sp_ud a>) from the moments.

    <sigma^+ a> = <a^dag sigma^->^* for a Hermitian-product pair.
    """
    return np.array([state.n_phot, np.conj(state.ad_sm_d),
                     np.conj(state.ad_sm_ud)], dtype=complex)


def regression_system(params: SystemParams, state: CumulantState) -> RegressionSystem:
    """Drift matrix and equal-time seed, with empty spin classes removed.

    A class with zero atoms contributes an exactly neutral mode that never
    couples into the photon component; keeping it would only make the
    resolvent singular.
    """
    M = regression_matrix(params, state.s_z_d, state.s_z_ud)
    c0 = correlation_vector(state)
    active = [0]
    if params.N_d > 0:
        active.append(1)
    if params.N_ud > 0:
        active.append(2)
    idx = np.ix_(active, active)
    return RegressionSystem(M=M[idx], c0=c0[active])


def _check_stable(M: np.ndarray) -> np.ndarray:
    eig = np.linalg.eigvals(M)
    if np.any(eig.real >= 0.0):
        raise MarginalStabilityError(
            f"regression matrix is not strictly stable (max Re eig = "
            f"{float(np.max(eig.real)):.3e})")
    return eig


def _resolvent_spectrum(M: np.ndarray, c: np.ndarray, omegas: np.ndarray) -> np.ndarray:
    omegas = np.asarray(omegas, dtype=float)
    dim = M.shape[0]
    A = (1j * omegas)[:, None, None] * np.eye(dim) - M[None, :, :]
    x = np.linalg.solve(A, np.broadcast_to(c[:, None], (len(omegas), dim, 1)))
    return 2.0 * x[:, 0, 0].real


def _clamp(values: np.ndarray, metadata: dict) -> np.ndarray:
    top = float(np.max(values)) if len(values) else 0.0
    neg = values < 0.0
    small = neg & (values > -NEG_CLAMP_TOL * max(top, 1e-300))
    metadata["clamped_points"] = int(np.count_nonzero(small))
    out = values.copy()
    out[small] = 0.0
    return out


def steady_state_spectrum(params: SystemParams, c_ss: np.ndarray, M: np.ndarray,
                          omegas: np.ndarray) -> SpectrumGrid:
    """S(omega) = 2 Re [(i*omega - M)^-1 c_ss]_1 on the given grid."""
    _check_stable(M)
    meta = {"kind": "steady_state"}
    values = _clamp(_resolvent_spectrum(M, c_ss, omegas), meta)
    return SpectrumGrid(omegas=np.asarray(omegas, dtype=float), values=values,
                        metadata=meta)


def transient_spectrum(params: SystemParams, state: CumulantState, t: float,
                       omegas: np.ndarray) -> SpectrumGrid:
    """Quasi-static spectrum at time t from the instantaneous moments.

    Valid while the populations drift slowly (rate Gamma) compared to the
    typical peak frequency; a warning is emitted otherwise.
    """
    sys = regression_system(params, state)
    eig = _check_stable(sys.M)
    delta = float(np.max(np.abs(eig.imag)))
    if params.Gamma > 0 and delta > 0 and params.Gamma > 0.5 * delta:
        warnings.warn(
            f"quasi-static approximation marginal: Gamma = {params.Gamma:.3g} "
            f"is not small compared to the peak frequency {delta:.3g}",
            stacklevel=2)
    meta = {"kind": "transient", "t": t}
    values = _clamp(_resolvent_spectrum(sys.M, sys.c0, omegas), meta)
    return SpectrumGrid(omegas=np.asarray(omegas, dtype=float), values=values,
                        metadata=meta)


def linewidth_from_eigenvalues(M: np.ndarray) -> tuple[float, float]:
    """(delta_nu, delta) from the slowest-decaying eigenvalue of M."""
    eig = _check_stable(M)
    slow = eig[int(np.argmax(eig.real))]
    return float(-slow.real), float(abs(slow.imag))


def default_grid(params: SystemParams, M: np.ndarray, n_points: int = 2001) -> np.ndarray:
    """Frequency grid resolving every eigenmode of M, centered at 0.

    Spans +/- max(10*delta_nu, 3*delta, 0.5*V) where (delta_nu, delta) come
    from the slowest eigenvalue; points are clustered in windows around each
    eigenmode frequency so that lines far narrower than the span stay
    resolved.
    """
    eig = np.linalg.eigvals(M)
    dnu, delta = linewidth_from_eigenvalues(M)
    span = max(10.0 * dnu, 3.0 * delta, 0.5 * params.V)

    pieces = [np.linspace(-span, span, max(n_points // 2, 16))]
    n_win = max(n_points // (4 * len(eig)), 16)
    for lam in eig:
        width = max(-lam.real, 1e-6 * span)
        for center in (lam.imag, -lam.imag):
            if abs(center) > span:
                continue
            half = min(20.0 * width, span)
            pieces.append(center + half * np.tanh(np.linspace(-3.0, 3.0, n_win)))
    grid = np.unique(np.concatenate(pieces))
    grid = grid[(grid >= -span) & (grid <= span)]
    # np.unique leaves distinct-but-adjacent floats; enforce strict increase
    keep = np.concatenate(([True], np.diff(grid) > 0))
    return grid[keep]


def wide_grid(params: SystemParams, M: np.ndarray, n_points: int = 4001,
              span_factor: float = 100.0) -> np.ndarray:
    """Grid wide enough for the total-intensity integral: spans well past the
    broadest eigenmode (the cavity line at kappa/2), with per-mode windows."""
    eig = np.linalg.eigvals(M)
    span = span_factor * float(np.max(-eig.real + np.abs(eig.imag)))
    pieces = [np.linspace(-span, span, n_points // 4)]
    n_win = max(n_points // 8, 32)
    for lam in eig:
        width = max(-lam.real, 1e-12 * span)
        for center in (lam.imag, -lam.imag):
            # log-spaced shells resolve the peak core and its tails
            shells = width * np.logspace(-2, np.log10(max(span / width, 10.0)), n_win // 2)
            pieces.append(center + np.concatenate((-shells[::-1], [0.0], shells)))
    grid = np.unique(np.concatenate(pieces))
    grid = grid[(grid >= -span) & (grid <= span)]
    keep = np.concatenate(([True], np.diff(grid) > 0))
    return grid[keep]


def double_lorentzian(omegas: np.ndarray, A: float, delta_nu: float,
                      delta: float) -> np.ndarray:
    """(A/pi) * [dn/(dn^2+(w-d)^2) + dn/(dn^2+(w+d)^2)]."""
    dn2 = delta_nu**2
    return (A / np.pi) * (delta_nu / (dn2 + (omegas - delta) ** 2)
                          + delta_nu / (dn2 + (omegas + delta) ** 2))


def fit_double_lorentzian(spec: SpectrumGrid, init=None,
                          max_iter: int = 2000) -> LorentzianFit:
    """Least-squares fit of a symmetric pair of Lorentzians to a spectrum.

    init: optional (A, delta_nu, delta) guess; defaults to a peak-based guess
    from the grid itself.
    """
    if len(spec.omegas) < 50:
        raise ValueError("need at least 50 grid points for a stable fit")
    w, s = spec.omegas, spec.values
    if init is None:
        i_pk = int(np.argmax(s))
        d0 = abs(w[i_pk])
        half = s[i_pk] / 2.0
        above = np.abs(w[s >= half])
        dn0 = max((above.max() - above.min()) / 2.0, (w[-1] - w[0]) / len(w)) \
            if len(above) > 1 else (w[-1] - w[0]) / len(w)
        a0 = s[i_pk] * np.pi * dn0 / 2.0
        init = (a0, dn0, d0)

    scale = max(float(np.max(s)), 1e-300)

    def residuals(p):
        return (double_lorentzian(w, *p) - s) / scale

    lower = [0.0, 1e-300, 0.0]
    upper = [np.inf, np.inf, np.inf]
    p0 = [max(init[0], 1e-300), max(init[1], 1e-300), max(init[2], 0.0)]
    sol = optimize.least_squares(residuals, p0, bounds=(lower, upper),
                                 max_nfev=max_iter,
                                 xtol=1e-14, ftol=1e-14, gtol=1e-14)
    A, dn, d = sol.x
    rms = float(np.sqrt(np.mean((double_lorentzian(w, *sol.x) - s) ** 2)))
    return LorentzianFit(A=float(A), delta_nu=float(dn), delta=float(d),
                         residual=rms, converged=bool(sol.success))


def fit_spectrum(params: SystemParams, state: CumulantState,
                 n_points: int = 2001) -> tuple[LorentzianFit, SpectrumGrid]:
    """Spectrum on an auto-built peak-resolving grid plus its fit, seeded from
    the eigenvalues of the regression matrix."""
    sys = regression_system(params, state)
    dnu, delta = linewidth_from_eigenvalues(sys.M)
    # fit only the neighbourhood of the slow peaks; the broad cavity line is
    # a background the double-Lorentzian model does not describe
    half = max(30.0 * dnu, 3.0 * delta)
    centers = (delta, -delta) if delta > dnu else (0.0,)
    pieces = [c + half * np.tanh(np.linspace(-3.0, 3.0, max(n_points // 2, 200)))
              for c in centers]
    win = max(20.0 * dnu, 0.2 * max(delta, dnu))
    pieces += [c + win * np.tanh(np.linspace(-3.0, 3.0, max(n_points // 4, 100)))
               for c in centers]
    grid = np.unique(np.concatenate(pieces))
    keep = np.concatenate(([True], np.diff(grid) > 0))
    grid = grid[keep]
    spec = steady_state_spectrum(params, sys.c0, sys.M, grid)
    # amplitude guess from the peak integral; width/shift from the eigenvalue
    a0 = max(spec.integral() * np.pi, 1e-300)
    fit = fit_double_lorentzian(spec, init=(a0, dnu, delta))
    return fit, spec


def export_csv(spec: SpectrumGrid, path, params: SystemParams | None = None,
               extra: dict | None = None) -> None:
    """Write a spectrum as CSV with a `#`-prefixed metadata header."""
    with open(path, "w") as fh:
        if params is not None:
            for key in ("N", "p_d", "omega", "kappa", "gamma_plus",
                        "gamma_minus", "gamma_z", "V", "Gamma", "N_d", "N_ud"):
                fh.write(f"# {key} = {getattr(params, key)!r}\n")
        for k, v in {**spec.metadata, **(extra or {})}.items():
            fh.write(f"# {k} = {v!r}\n")
        fh.write("omega,S\n")
        for w, s in zip(spec.omegas, spec.values):
            fh.write(f"{w:.17g},{s:.17g}\n")


def read_csv(path) -> SpectrumGrid:
    """Inverse of export_csv (metadata values come back as repr strings)."""
    meta = {}
    omegas, values = [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].partition("=")
                meta[key.strip()] = val.strip()
            elif line != "omega,S":
                w, s = line.split(",")
                omegas.append(float(w))
                values.append(float(s))
    return SpectrumGrid(omegas=np.array(omegas), values=np.array(values),
                        metadata=meta)
