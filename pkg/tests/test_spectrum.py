"""Regression-theorem spectra, grids, and double-Lorentzian fits."""

import numpy as np
import pytest

from srlaser import cumulant, spectrum
from srlaser.model import CumulantState, SpectrumGrid, from_V
from srlaser.spectrum import (
    MarginalStabilityError,
    correlation_vector,
    default_grid,
    double_lorentzian,
    fit_double_lorentzian,
    fit_spectrum,
    linewidth_from_eigenvalues,
    regression_matrix,
    regression_system,
    steady_state_spectrum,
    transient_spectrum,
    wide_grid,
)


@pytest.fixture(scope="module")
def lasing_point():
    """Traveling-wave operating point used across several tests."""
    p = from_V(N=1000, p_d=0.8, gamma_plus=1.0)
    ss = cumulant.cumulant_steady_state(p)
    return p, ss


def test_regression_matrix_structure():
    p = from_V(N=1000, p_d=0.8, gamma_plus=1.0, gamma_minus=1e-4, gamma_z=1e-3)
    M = regression_matrix(p, 0.3, -0.6)
    assert M.shape == (3, 3)
    assert M[0, 0] == -0.5 * p.kappa
    assert M[0, 1] / M[0, 2] == pytest.approx(p.N_d / p.N_ud)
    assert M[1, 0] == pytest.approx(-1j * p.omega * 0.3)
    assert M[2, 0] == pytest.approx(-1j * p.omega * (-0.6))
    assert M[1, 1] == pytest.approx(-0.5 * (p.Gamma + p.gamma_plus))
    assert M[2, 2] == pytest.approx(-0.5 * p.Gamma)
    assert M[1, 2] == 0 and M[2, 1] == 0


def test_regression_matrix_diagonal_at_zero_coupling():
    p = from_V(N=100, p_d=0.5, gamma_plus=0.8, gamma_minus=0.1, gamma_z=0.05)
    p = from_V(N=100, p_d=0.5, gamma_plus=0.8, gamma_minus=0.1, gamma_z=0.05,
               V=0.0) if False else p
    M = regression_matrix(p, 0.0, -1.0)
    off = M - np.diag(np.diag(M))
    # only the coupling columns/rows carry Omega
    assert np.allclose(np.diag(M), [-0.5 * p.kappa,
                                    -0.5 * (p.Gamma + p.gamma_plus),
                                    -0.5 * p.Gamma])
    dnu, delta = linewidth_from_eigenvalues(np.diag(np.diag(M)))
    assert dnu == pytest.approx(0.5 * p.Gamma)
    assert delta == 0.0
    assert off.shape == (3, 3)


def test_stability_at_operating_point(lasing_point):
    p, ss = lasing_point
    sys = regression_system(p, ss)
    eig = np.linalg.eigvals(sys.M)
    assert np.all(eig.real < 0)
    assert sys.M.shape == (3, 3)
    # equal-time seed mirrors the moments
    assert np.allclose(sys.c0, correlation_vector(ss))


def test_empty_class_removed_from_system():
    p = from_V(N=1000, p_d=1.0, gamma_plus=1.0)
    ss = cumulant.cumulant_steady_state(p)
    sys = regression_system(p, ss)
    assert sys.M.shape == (2, 2)   # undriven class has no atoms
    eig = np.linalg.eigvals(sys.M)
    assert np.all(eig.real < 0)


def test_marginal_stability_error():
    M = np.diag([-1.0, 1e-3]).astype(complex)
    with pytest.raises(MarginalStabilityError):
        steady_state_spectrum(from_V(N=10, p_d=1.0, gamma_plus=1.0),
                              np.array([1.0, 0.0], dtype=complex), M,
                              np.linspace(-1, 1, 101))


def test_scalar_limit_is_cavity_lorentzian():
    # Omega = 0, c = (n, 0, 0): S = n*kappa/(w^2 + kappa^2/4)
    p = from_V(N=100, p_d=0.5, gamma_plus=0.8, gamma_minus=0.1)
    n = 2.5
    M = regression_matrix(p, 0.0, -1.0).copy()
    M[0, 1] = M[0, 2] = M[1, 0] = M[2, 0] = 0.0   # Omega -> 0 structure
    w = np.linspace(-5 * p.kappa, 5 * p.kappa, 2001)
    spec = steady_state_spectrum(p, np.array([n, 0, 0], dtype=complex), M, w)
    expect = n * p.kappa / (w**2 + p.kappa**2 / 4.0)
    assert np.max(np.abs(spec.values - expect)) < 1e-12 * np.max(expect)


def test_integral_identity(lasing_point):
    p, ss = lasing_point
    sys = regression_system(p, ss)
    grid = wide_grid(p, sys.M)
    spec = steady_state_spectrum(p, sys.c0, sys.M, grid)
    assert spec.integral() == pytest.approx(ss.n_phot, rel=0.01)


def test_spectrum_symmetric_and_nonnegative(lasing_point):
    p, ss = lasing_point
    sys = regression_system(p, ss)
    w = np.linspace(-0.4, 0.4, 4001)
    spec = steady_state_spectrum(p, sys.c0, sys.M, w)
    assert np.all(spec.values >= -1e-12 * np.max(spec.values))
    sym = spec.values[::-1]
    assert np.max(np.abs(spec.values - sym)) < 1e-6 * np.max(spec.values)


def test_peaks_at_traveling_wave_frequency(lasing_point):
    p, ss = lasing_point
    sys = regression_system(p, ss)
    grid = default_grid(p, sys.M)
    spec = steady_state_spectrum(p, sys.c0, sys.M, grid)
    assert abs(abs(spec.peak_omega()) - 0.19544) / 0.19544 < 0.05


def test_default_grid_contract(lasing_point):
    p, ss = lasing_point
    sys = regression_system(p, ss)
    grid = default_grid(p, sys.M)
    dnu, delta = linewidth_from_eigenvalues(sys.M)
    span = max(10 * dnu, 3 * delta, 0.5 * p.V)
    assert grid[0] >= -span - 1e-12 and grid[-1] <= span + 1e-12
    assert np.all(np.diff(grid) > 0)
    # resolution near the narrow peaks is much finer than the mean spacing
    near = np.abs(grid - delta) < dnu
    assert np.count_nonzero(near) >= 10


def test_fit_recovers_synthetic_parameters():
    w = np.linspace(-1.0, 1.0, 4001)
    truth = (1.0, 0.05, 0.2)
    spec = SpectrumGrid(omegas=w, values=double_lorentzian(w, *truth))
    fit = fit_double_lorentzian(spec)
    assert fit.converged
    assert fit.A == pytest.approx(truth[0], rel=1e-6)
    assert fit.delta_nu == pytest.approx(truth[1], rel=1e-6)
    assert fit.delta == pytest.approx(truth[2], rel=1e-6)
    assert fit.residual < 1e-9


def test_fit_degenerate_single_peak():
    w = np.linspace(-1.0, 1.0, 2001)
    spec = SpectrumGrid(omegas=w, values=double_lorentzian(w, 1.0, 0.05, 0.0))
    fit = fit_double_lorentzian(spec)
    assert fit.delta < 1e-6
    assert fit.delta_nu == pytest.approx(0.05, rel=1e-4)


def test_fit_needs_enough_points():
    w = np.linspace(-1.0, 1.0, 20)
    with pytest.raises(ValueError):
        fit_double_lorentzian(SpectrumGrid(omegas=w, values=np.ones(20)))


def test_fit_vs_eigenvalues_at_full_rates():
    p = from_V(N=100_000, p_d=0.8, gamma_plus=1.0, gamma_minus=1e-4,
               gamma_z=1e-3)
    ss = cumulant.cumulant_steady_state(p)
    fit, _ = fit_spectrum(p, ss)
    sys = regression_system(p, ss)
    dnu_e, delta_e = linewidth_from_eigenvalues(sys.M)
    assert abs(fit.delta_nu - dnu_e) / dnu_e < 0.1
    assert delta_e > 3 * dnu_e      # separated peaks: shift also comparable
    assert abs(fit.delta - delta_e) / delta_e < 0.1


def test_transient_limit_matches_steady(lasing_point):
    p, ss = lasing_point
    sys = regression_system(p, ss)
    w = np.linspace(-0.4, 0.4, 801)
    stead = steady_state_spectrum(p, sys.c0, sys.M, w)
    trans = transient_spectrum(p, ss, 1e6, w)
    assert np.allclose(trans.values, stead.values, rtol=1e-10)
    assert trans.metadata["t"] == 1e6


def test_transient_quasi_static_warning():
    # Gamma comparable to the peak frequency: the approximation is flagged
    p = from_V(N=1000, p_d=0.8, gamma_plus=1.0, gamma_minus=0.05, gamma_z=0.05)
    st = CumulantState(s_z_d=0.4, s_z_ud=-0.6, n_phot=1.0,
                       ad_sm_d=0.01j, ad_sm_ud=0.01j, sp_sm_dd=0.02,
                       sp_sm_udud=0.01, sp_d_sm_ud=0.005 + 0j)
    with pytest.warns(UserWarning, match="quasi-static"):
        transient_spectrum(p, st, 0.0, np.linspace(-0.4, 0.4, 101))


def test_export_read_roundtrip(tmp_path, lasing_point):
    p, ss = lasing_point
    sys = regression_system(p, ss)
    w = np.linspace(-0.3, 0.3, 301)
    spec = steady_state_spectrum(p, sys.c0, sys.M, w)
    path = tmp_path / "spec.csv"
    spectrum.export_csv(spec, path, params=p, extra={"note": "roundtrip"})
    back = spectrum.read_csv(path)
    assert np.array_equal(back.omegas, spec.omegas)
    assert np.array_equal(back.values, spec.values)
    assert back.metadata["N"] == "1000"
    assert back.metadata["note"] == "'roundtrip'"
