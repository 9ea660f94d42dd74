"""Parameter sweeps and dataset generation.

Every run reads a plain-text ``key = value`` config, writes CSV datasets into
an output directory, and finishes with a JSON manifest listing inputs,
outputs, and checksums. Identical config + seed give bit-identical output.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from .integrate import integrate
from .model import CumulantState, SystemParams, derive, from_V, from_coupling
from . import cumulant, meanfield, spectrum


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------

def parse_config(text: str) -> dict:
    """Parse `key = value` lines; `#` starts a comment; blank lines ignored."""
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        cfg[key.strip()] = val.strip()
    return cfg


def load_config(path) -> dict:
    with open(path) as fh:
        return parse_config(fh.read())


def _get(cfg, key, cast, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing config key {key!r}")
        return default
    try:
        return cast(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from None


def _float_list(raw: str) -> list[float]:
    return [float(tok) for tok in raw.split(",") if tok.strip()]


def _values(cfg, name, default=None) -> list[float]:
    """Sweep values from `<name>_values = a,b,c` or
    `<name>_min/_max/_steps`."""
    if f"{name}_values" in cfg:
        return _float_list(cfg[f"{name}_values"])
    if f"{name}_min" in cfg:
        lo = _get(cfg, f"{name}_min", float)
        hi = _get(cfg, f"{name}_max", float)
        n = _get(cfg, f"{name}_steps", int)
        return list(np.linspace(lo, hi, n))
    if name in cfg:
        return [_get(cfg, name, float)]
    if default is not None:
        return list(default)
    raise ConfigError(f"missing sweep values for {name!r}")


def params_from_config(cfg, **overrides) -> SystemParams:
    """Build SystemParams from config; accepts the (omega, kappa) or the
    (V, cavity_ratio) input style. Keyword overrides win over config values."""
    def val(key, cast, default=None):
        if key in overrides:
            return overrides[key]
        return _get(cfg, key, cast, default)

    kw = dict(
        N=val("N", int),
        p_d=val("p_d", float),
        gamma_plus=val("gamma_plus", float),
        gamma_minus=val("gamma_minus", float, 0.0),
        gamma_z=val("gamma_z", float, 0.0),
    )
    if "omega" in cfg or "omega" in overrides:
        return from_coupling(omega=val("omega", float), kappa=val("kappa", float), **kw)
    return from_V(V=val("V", float, 1.0),
                  cavity_ratio=val("cavity_ratio", float, 10.0), **kw)


# ---------------------------------------------------------------------------
# Output plumbing
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, str):
        return x.replace(",", ";")
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return f"{float(x):.17g}"


def write_csv(path, header: list[str], rows, params: SystemParams | None = None,
              meta: dict | None = None) -> str:
    with open(path, "w") as fh:
        fh.write(f"# srlaser {__version__}\n")
        if params is not None:
            for key in ("N", "p_d", "omega", "kappa", "gamma_plus",
                        "gamma_minus", "gamma_z", "V", "Gamma", "p_ud",
                        "N_d", "N_ud", "bad_cavity_ratio"):
                fh.write(f"# {key} = {getattr(params, key)!r}\n")
        for k, v in (meta or {}).items():
            fh.write(f"# {k} = {v!r}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")
    return path


def read_csv(path):
    """Read a harness CSV back as (header, rows of floats, metadata dict)."""
    meta, header, rows = {}, None, []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].partition("=")
                if val:
                    meta[key.strip()] = val.strip()
                continue
            if header is None:
                header = line.split(",")
            else:
                rows.append([_maybe_float(tok) for tok in line.split(",")])
    return header, rows, meta


def _maybe_float(tok: str):
    try:
        return float(tok)
    except ValueError:
        return tok


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(outdir, command: str, cfg: dict, seed: int,
                   outputs: list[str], extra: dict | None = None) -> str:
    manifest = {
        "tool": "srlaser",
        "version": __version__,
        "command": command,
        "seed": seed,
        "config": dict(sorted(cfg.items())),
        "outputs": [{"file": os.path.basename(p), "sha256": _sha256(p)}
                    for p in sorted(outputs)],
    }
    if extra:
        manifest["extra"] = extra
    path = os.path.join(outdir, "run_manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _pool_map(fn, items, workers: int):
    if workers <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# spectrum-sweep
# ---------------------------------------------------------------------------

def _sweep_point(args):
    cfg, p_d, omegas = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        params = params_from_config(cfg, p_d=p_d)
        try:
            ss = cumulant.cumulant_steady_state(params)
            sys = spectrum.regression_system(params, ss)
            spec = spectrum.steady_state_spectrum(params, sys.c0, sys.M, omegas)
            return p_d, spec.values, None
        except Exception as exc:   # per-point failures recorded, sweep continues
            return p_d, None, f"{type(exc).__name__}: {exc}"


def run_spectrum_sweep(cfg: dict, outdir, seed: int = 0, workers: int = 1) -> list[str]:
    """Steady-state spectrum for each p_d on a common frequency grid, plus the
    closed-form traveling-wave frequency for comparison."""
    os.makedirs(outdir, exist_ok=True)
    p_ds = sorted(_values(cfg, "p_d"))
    ref = params_from_config(cfg, p_d=p_ds[-1])
    omega_max = _get(cfg, "omega_max", float, 0.3 * ref.V)
    n_omega = _get(cfg, "omega_points", int, 601)
    omegas = np.linspace(-omega_max, omega_max, n_omega)

    results = _pool_map(_sweep_point, [(cfg, p, omegas) for p in p_ds], workers)

    rows, failures = [], []
    for p_d, values, err in sorted(results, key=lambda r: r[0]):
        if err is not None:
            failures.append((p_d, err))
            continue
        for w, s in zip(omegas, values):
            rows.append((p_d, w, s))
    outputs = [write_csv(os.path.join(outdir, "spectrum_sweep.csv"),
                         ["p_d", "omega", "S"], rows, params=ref,
                         meta={"omega_max": omega_max, "omega_points": n_omega})]

    mf_rows = []
    for p_d in p_ds:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            tw = meanfield.traveling_wave_frequency(params_from_config(cfg, p_d=p_d))
        if tw.exists:
            mf_rows.append((p_d, tw.omega, -tw.omega, True))
        else:
            mf_rows.append((p_d, math.nan, math.nan, False))
    outputs.append(write_csv(os.path.join(outdir, "meanfield_frequency.csv"),
                             ["p_d", "omega_plus", "omega_minus", "exists"],
                             mf_rows, params=ref))
    if failures:
        outputs.append(write_csv(os.path.join(outdir, "sweep_failures.csv"),
                                 ["p_d", "error"],
                                 [(p, e) for p, e in failures]))
    write_manifest(outdir, "spectrum-sweep", cfg, seed, outputs)
    return outputs


# ---------------------------------------------------------------------------
# steady-map
# ---------------------------------------------------------------------------

def _map_point(args):
    cfg, gp, p_d = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        params = params_from_config(cfg, p_d=p_d, gamma_plus=gp)
        try:
            ss = cumulant.cumulant_steady_state(params)
            pw = cumulant.output_power(ss, params)
            fit, _ = spectrum.fit_spectrum(params, ss)
            return (gp, p_d, pw.power, pw.n_phot, fit.delta_nu, fit.delta,
                    fit.residual, fit.converged, None)
        except Exception as exc:
            return (gp, p_d, math.nan, math.nan, math.nan, math.nan,
                    math.nan, False, f"{type(exc).__name__}: {exc}")


def run_steady_map(cfg: dict, outdir, seed: int = 0, workers: int = 1) -> list[str]:
    """Power, linewidth, and frequency shift over a (gamma_plus, p_d) grid."""
    os.makedirs(outdir, exist_ok=True)
    ref = params_from_config(cfg, p_d=1.0, gamma_plus=1.0)
    gps = sorted(_values(cfg, "gamma_plus"))
    p_ds = sorted(_values(cfg, "p_d"))
    shift_min_lw = _get(cfg, "shift_min_linewidths", float, 3.0)
    shift_min_ratio = _get(cfg, "shift_min_ratio", float, 0.5)
    dnu_min = ref.V / ref.N

    pts = [(cfg, gp, p) for gp in gps for p in p_ds]
    results = sorted(_pool_map(_map_point, pts, workers), key=lambda r: (r[0], r[1]))

    def threshold_at(gp):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                return meanfield.lasing_threshold(
                    params_from_config(cfg, p_d=1.0, gamma_plus=gp))
            except meanfield.ThresholdError:
                return math.inf

    thresholds = {gp: threshold_at(gp) for gp in gps}
    rows = []
    for gp, p_d, power, n, dnu, delta, res, ok, err in results:
        # only a lasing line can be displaced; below threshold the broad
        # fluctuation spectrum has no peak to shift
        shifted = bool(ok and p_d >= thresholds[gp]
                       and delta > shift_min_lw * dnu_min
                       and delta > shift_min_ratio * dnu)
        rows.append((gp, p_d, power, n, dnu, delta, res, ok, shifted,
                     0 if err is None else 1))
    outputs = [write_csv(
        os.path.join(outdir, "steady_map.csv"),
        ["gamma_plus", "p_d", "power", "n_phot", "delta_nu", "delta",
         "fit_residual", "fit_ok", "shifted", "failed"],
        rows, params=ref,
        meta={"delta_nu_min": dnu_min, "shift_min_linewidths": shift_min_lw,
              "shift_min_ratio": shift_min_ratio})]

    thr_rows = [(gp, thresholds[gp] if math.isfinite(thresholds[gp])
                 else math.nan) for gp in gps]
    outputs.append(write_csv(os.path.join(outdir, "threshold_curve.csv"),
                             ["gamma_plus", "p_c"], thr_rows, params=ref))
    write_manifest(outdir, "steady-map", cfg, seed, outputs)
    return outputs


# ---------------------------------------------------------------------------
# transient
# ---------------------------------------------------------------------------

def meanfield_frequency_track(params: SystemParams, times: np.ndarray,
                              seed: int = 0, t_settle: float = 1500.0):
    """Mean-field run of the switch-on protocol: settle into the traveling
    wave with Gamma = 0, switch the full rates on, and record the
    instantaneous rotation rate of the undriven coherence."""
    params0 = derive(replace(params, gamma_minus=0.0, gamma_z=0.0))
    opts = meanfield.default_mf_options()
    settled = meanfield.settle_traveling_wave(params0, seed=seed,
                                              t_settle=t_settle, opts=opts)
    # dense sampling so the phase derivative is a clean finite difference
    dt = min(np.min(np.diff(times)), 0.5) if len(times) > 1 else 0.5
    t_dense = np.arange(0.0, times[-1] + dt, dt)
    traj = integrate(lambda t, y: meanfield.reduced_rhs_vec(y, params),
                     settled.to_vector()[:4], (0.0, float(t_dense[-1])),
                     opts, t_eval=t_dense)
    phase = np.unwrap(np.angle(traj.y[1]))
    omega_inst = np.gradient(phase, t_dense)
    return np.abs(np.interp(times, t_dense, omega_inst)), traj


def fit_exponential_decay(times: np.ndarray, values: np.ndarray,
                          floor: float = 1e-12):
    """Fit values ~ A*exp(-rate*t) by linear regression on log(values).

    Returns (rate, amplitude, r_squared) using only samples above floor.
    """
    mask = values > floor
    t, v = np.asarray(times)[mask], np.log(np.asarray(values)[mask])
    if len(t) < 3:
        return math.nan, math.nan, 0.0
    slope, intercept = np.polyfit(t, v, 1)
    pred = slope * t + intercept
    ss_res = float(np.sum((v - pred) ** 2))
    ss_tot = float(np.sum((v - np.mean(v)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return float(-slope), float(math.exp(intercept)), r2


def _transient_single_N(cfg, N, times, spect_omegas):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        params = params_from_config(cfg, N=N)
        params0 = derive(replace(params, gamma_minus=0.0, gamma_z=0.0))
        ss0 = cumulant.cumulant_steady_state(params0)
        traj = cumulant.run(params, ss0, float(times[-1]),
                            cumulant.default_options(params, t_max=float(times[-1])),
                            t_eval=times)
        track, spect_rows = [], []
        for i, t in enumerate(times):
            state = CumulantState.from_vector(traj.y[:, i])
            sysr = spectrum.regression_system(params, state)
            dnu_e, delta_e = spectrum.linewidth_from_eigenvalues(sysr.M)
            fit, _ = spectrum.fit_spectrum(params, state)
            track.append((t, fit.delta, fit.delta_nu, delta_e, dnu_e))
            if spect_omegas is not None:
                spec = spectrum.transient_spectrum(params, state, t, spect_omegas)
                top = max(float(np.max(spec.values)), 1e-300)
                spect_rows += [(t, w, s / top)
                               for w, s in zip(spec.omegas, spec.values)]
        return params, track, spect_rows


def run_transient(cfg: dict, outdir, seed: int = 0, workers: int = 1) -> list[str]:
    """Switch-on protocol: start from the dissipation-free steady state, turn
    on spontaneous emission and dephasing, follow the spectral peak in time,
    and compare against the mean-field frequency decay."""
    os.makedirs(outdir, exist_ok=True)
    ref = params_from_config(cfg)
    if ref.Gamma <= 0:
        raise ConfigError("transient protocol needs gamma_minus or gamma_z > 0")
    t_max = _get(cfg, "t_max", float, 4.0 / ref.Gamma)
    n_times = _get(cfg, "n_times", int, 25)
    times = np.linspace(0.0, t_max, n_times)

    tw = meanfield.traveling_wave_frequency(
        derive(replace(ref, gamma_minus=0.0, gamma_z=0.0)))
    omega0 = tw.omega if tw.exists else 0.3 * ref.V
    n_omega = _get(cfg, "omega_points", int, 241)
    spect_omegas = np.linspace(-1.6 * omega0, 1.6 * omega0, n_omega) \
        if omega0 > 0 else None

    params, track, spect_rows = _transient_single_N(cfg, ref.N, times, spect_omegas)
    outputs = [write_csv(os.path.join(outdir, "peak_track.csv"),
                         ["t", "delta_fit", "delta_nu_fit", "delta_eig",
                          "delta_nu_eig"], track, params=params)]
    if spect_rows:
        outputs.append(write_csv(os.path.join(outdir, "spectrogram.csv"),
                                 ["t", "omega", "S_normalized"], spect_rows,
                                 params=params))

    mf_omega, _ = meanfield_frequency_track(ref, times, seed=seed)
    outputs.append(write_csv(os.path.join(outdir, "meanfield_track.csv"),
                             ["t", "omega_mf"],
                             list(zip(times, mf_omega)), params=ref))

    # fit only the initial decay; at long times the track can flatten onto a
    # small residual frequency that is not part of the exponential
    fit_mask = times <= 4.0 / ref.Gamma
    rate, amp, r2 = fit_exponential_decay(times[fit_mask], mf_omega[fit_mask],
                                          floor=1e-4 * max(mf_omega[0], 1e-300))
    summary = [("fitted_rate", rate), ("amplitude", amp), ("r_squared", r2),
               ("Gamma", ref.Gamma), ("Gamma_half", 0.5 * ref.Gamma),
               ("rate_over_Gamma", rate / ref.Gamma),
               ("rate_over_half_Gamma", rate / (0.5 * ref.Gamma))]
    outputs.append(write_csv(os.path.join(outdir, "transient_summary.csv"),
                             ["quantity", "value"],
                             [(k, v) for k, v in summary], params=ref))

    if "N_values" in cfg:
        n_rows = []
        for N in [int(x) for x in _float_list(cfg["N_values"])]:
            _, trackN, _ = _transient_single_N(cfg, N, times, None)
            n_rows.append((N, trackN[-1][1], times[-1]))
        outputs.append(write_csv(os.path.join(outdir, "nscaling.csv"),
                                 ["N", "residual_shift", "t"], n_rows, params=ref))
    write_manifest(outdir, "transient", cfg, seed, outputs)
    return outputs


# ---------------------------------------------------------------------------
# thresholds
# ---------------------------------------------------------------------------

def run_threshold_report(cfg: dict, outdir, seed: int = 0, workers: int = 1) -> list[str]:
    """Tabulate the analytic thresholds plus the bisected numerical boundary."""
    os.makedirs(outdir, exist_ok=True)
    params = params_from_config(cfg, p_d=_get(cfg, "p_d", float, 1.0))
    rows = []

    gp, gm, gz, V = params.gamma_plus, params.gamma_minus, params.gamma_z, params.V
    rows.append(("coupled_simple", 0.5 + gp / (4.0 * V)))
    try:
        rows.append(("coupled_full", meanfield.lasing_threshold(params)))
    except meanfield.ThresholdError:
        rows.append(("coupled_full", math.nan))
    try:
        rows.append(("decoupled", meanfield.lasing_threshold_decoupled(params)))
    except meanfield.ThresholdError:
        rows.append(("decoupled", math.nan))

    gd2 = (gm + gp) * (gm + gp + 2.0 * gz)
    gud2 = gm * (gm + 2.0 * gz)
    term_ud = gm / gud2 if gud2 > 0 else 0.0
    denom = (gp - gm) / gd2 + term_ud if gd2 > 0 else 0.0
    pc_std = (1.0 / (2.0 * V) + term_ud) / denom if denom > 0 else math.nan
    rows.append(("standard_laser", pc_std))
    try:
        _, margin = meanfield.standard_laser_threshold(params)
        rows.append(("standard_laser_margin_at_p_d", margin))
    except meanfield.ThresholdError:
        rows.append(("standard_laser_margin_at_p_d", math.nan))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pc_num = meanfield.bisect_threshold(params)
    rows.append(("numerical_bisection", math.nan if pc_num is None else pc_num))

    outputs = [write_csv(os.path.join(outdir, "thresholds.csv"),
                         ["threshold", "critical_p_d"], rows, params=params)]
    write_manifest(outdir, "thresholds", cfg, seed, outputs)
    return outputs
