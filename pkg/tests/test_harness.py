"""Config parsing, CSV/manifest plumbing, and the CLI sweep commands."""

import json
import math

import numpy as np
import pytest

from srlaser import cli, harness
from srlaser.harness import (
    ConfigError,
    fit_exponential_decay,
    load_config,
    params_from_config,
    parse_config,
    read_csv,
    write_csv,
)


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------

def test_parse_config_basics():
    cfg = parse_config("""
# a comment
N = 1000
p_d = 0.8   # trailing comment
gamma_plus=1.0
name_values = 0.1, 0.2, 0.3
""")
    assert cfg == {"N": "1000", "p_d": "0.8", "gamma_plus": "1.0",
                   "name_values": "0.1, 0.2, 0.3"}
    with pytest.raises(ConfigError, match="line 2"):
        parse_config("a = 1\nnot a pair\n")


def test_values_forms():
    assert harness._values({"x_values": "1, 2, 3"}, "x") == [1.0, 2.0, 3.0]
    got = harness._values({"x_min": "0", "x_max": "1", "x_steps": "5"}, "x")
    assert got == pytest.approx(np.linspace(0, 1, 5).tolist())
    assert harness._values({"x": "0.7"}, "x") == [0.7]
    assert harness._values({}, "x", default=(1.0,)) == [1.0]
    with pytest.raises(ConfigError):
        harness._values({}, "x")


def test_params_from_config_styles_and_overrides():
    cfg = {"N": "1000", "p_d": "0.8", "gamma_plus": "1.0"}
    p = params_from_config(cfg)
    assert p.V == pytest.approx(1.0)          # (V, cavity_ratio) defaults
    assert p.bad_cavity_ratio == pytest.approx(10.0)

    p = params_from_config(cfg, p_d=0.9)      # override wins over config
    assert p.p_d == 0.9

    cfg2 = {"N": "100", "p_d": "1.0", "gamma_plus": "0.5",
            "omega": "0.2", "kappa": "40.0"}
    p2 = params_from_config(cfg2)
    assert p2.omega == 0.2 and p2.kappa == 40.0
    with pytest.raises(ConfigError, match="N"):
        params_from_config({"p_d": "1.0", "gamma_plus": "1.0"})


# ---------------------------------------------------------------------------
# CSV + manifest plumbing
# ---------------------------------------------------------------------------

def test_csv_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    rows = [(float(a), float(b)) for a, b in rng.normal(size=(20, 2))]
    rows.append((math.nan, 1.0))
    path = tmp_path / "data.csv"
    write_csv(path, ["x", "y"], rows, meta={"note": "roundtrip"})
    header, back, meta = read_csv(path)
    assert header == ["x", "y"]
    assert meta["note"] == "'roundtrip'"
    for (a, b), (c, d) in zip(rows, back):
        assert (math.isnan(a) and math.isnan(c)) or a == c
        assert b == d


def test_csv_string_cells_survive(tmp_path):
    path = tmp_path / "mixed.csv"
    write_csv(path, ["k", "v"], [("some, message", 1.0)])
    _, rows, _ = read_csv(path)
    assert rows[0][0] == "some; message"     # commas sanitized
    assert rows[0][1] == 1.0


def test_manifest_lists_outputs_with_checksums(tmp_path):
    p1 = write_csv(tmp_path / "a.csv", ["x"], [(1.0,)])
    mf = harness.write_manifest(tmp_path, "test", {"k": "v"}, 7, [p1])
    with open(mf) as fh:
        manifest = json.load(fh)
    assert manifest["command"] == "test"
    assert manifest["seed"] == 7
    assert manifest["outputs"][0]["file"] == "a.csv"
    assert manifest["outputs"][0]["sha256"] == harness._sha256(p1)


def test_fit_exponential_decay_recovers_rate():
    t = np.linspace(0.0, 10.0, 50)
    v = 2.0 * np.exp(-0.35 * t)
    rate, amp, r2 = fit_exponential_decay(t, v)
    assert rate == pytest.approx(0.35, rel=1e-10)
    assert amp == pytest.approx(2.0, rel=1e-10)
    assert r2 > 0.999999


# ---------------------------------------------------------------------------
# CLI commands (small but end-to-end)
# ---------------------------------------------------------------------------

THRESHOLD_CFG = """
N = 1000
p_d = 0.8
gamma_plus = 1.0
"""


def _write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_threshold_report_values(tmp_path):
    cfg = _write(tmp_path, THRESHOLD_CFG)
    rc = cli.main(["thresholds", "--config", cfg,
                   "--out", str(tmp_path / "out")])
    assert rc == 0
    _, rows, _ = read_csv(tmp_path / "out" / "thresholds.csv")
    table = {name: val for name, val in rows}
    assert table["coupled_simple"] == pytest.approx(0.75)
    assert table["coupled_full"] == pytest.approx(0.75)
    assert table["decoupled"] == pytest.approx(0.5)
    assert abs(table["numerical_bisection"] - 0.75) < 1e-4
    assert (tmp_path / "out" / "run_manifest.json").exists()


def test_threshold_report_deterministic(tmp_path):
    cfg = _write(tmp_path, THRESHOLD_CFG)
    cli.main(["thresholds", "--config", cfg, "--out", str(tmp_path / "a")])
    cli.main(["thresholds", "--config", cfg, "--out", str(tmp_path / "b")])
    a = (tmp_path / "a" / "thresholds.csv").read_bytes()
    b = (tmp_path / "b" / "thresholds.csv").read_bytes()
    assert a == b


SWEEP_CFG = """
N = 1000
gamma_plus = 1.0
p_d_values = 0.6, 0.8, 1.0
omega_points = 101
omega_max = 0.3
"""


def test_spectrum_sweep_end_to_end(tmp_path):
    cfg = _write(tmp_path, SWEEP_CFG)
    out = tmp_path / "out"
    rc = cli.main(["spectrum-sweep", "--config", cfg, "--out", str(out)])
    assert rc == 0
    header, rows, meta = read_csv(out / "spectrum_sweep.csv")
    assert header == ["p_d", "omega", "S"]
    assert len(rows) == 3 * 101
    data = np.array(rows)
    # peak of the p_d = 0.8 block sits near the traveling-wave frequency
    blk = data[np.isclose(data[:, 0], 0.8)]
    peak_w = abs(blk[np.argmax(blk[:, 2]), 1])
    assert abs(peak_w - 0.19544) < 0.02
    # below threshold the spectrum shows no comparable peak
    blk_low = data[np.isclose(data[:, 0], 0.6)]
    assert np.max(blk_low[:, 2]) < 0.05 * np.max(blk[:, 2])

    _, mf_rows, _ = read_csv(out / "meanfield_frequency.csv")
    by_pd = {r[0]: r for r in mf_rows}
    assert by_pd[0.8][1] == pytest.approx(0.19544, abs=1e-4)
    assert by_pd[0.8][3] == 1.0
    assert math.isnan(by_pd[0.6][1]) and by_pd[0.6][3] == 0.0
    assert by_pd[1.0][1] == pytest.approx(0.0, abs=1e-12)


def test_spectrum_sweep_determinism(tmp_path):
    cfg = _write(tmp_path, SWEEP_CFG)
    cli.main(["spectrum-sweep", "--config", cfg, "--out", str(tmp_path / "a"),
              "--seed", "3"])
    cli.main(["spectrum-sweep", "--config", cfg, "--out", str(tmp_path / "b"),
              "--seed", "3", "--workers", "2"])
    for name in ("spectrum_sweep.csv", "meanfield_frequency.csv"):
        assert (tmp_path / "a" / name).read_bytes() \
            == (tmp_path / "b" / name).read_bytes()


STEADY_CFG = """
N = 1000
gamma_plus_values = 1.0
p_d_values = 0.9, 1.0
"""


def test_steady_map_end_to_end(tmp_path):
    cfg = _write(tmp_path, STEADY_CFG)
    out = tmp_path / "out"
    rc = cli.main(["steady-map", "--config", cfg, "--out", str(out)])
    assert rc == 0
    header, rows, meta = read_csv(out / "steady_map.csv")
    cols = {name: i for i, name in enumerate(header)}
    by_pd = {r[cols["p_d"]]: r for r in rows}
    assert by_pd[1.0][cols["failed"]] == 0
    # no shift on the fully driven edge; a real one at p_d = 0.9
    assert by_pd[1.0][cols["shifted"]] == 0
    assert by_pd[0.9][cols["shifted"]] == 1
    assert by_pd[0.9][cols["delta"]] == pytest.approx(0.07969, rel=0.1)
    assert by_pd[1.0][cols["power"]] > 0
    _, thr_rows, _ = read_csv(out / "threshold_curve.csv")
    assert thr_rows[0][1] == pytest.approx(0.75, abs=1e-12)


TRANSIENT_CFG = """
N = 1000
p_d = 0.8
gamma_plus = 1.0
gamma_minus = 1e-3
gamma_z = 1e-2
t_max = 200
n_times = 6
omega_points = 101
"""


def test_transient_end_to_end(tmp_path):
    cfg = _write(tmp_path, TRANSIENT_CFG)
    out = tmp_path / "out"
    rc = cli.main(["transient", "--config", cfg, "--out", str(out)])
    assert rc == 0
    header, rows, _ = read_csv(out / "peak_track.csv")
    assert header[:3] == ["t", "delta_fit", "delta_nu_fit"]
    assert len(rows) == 6
    # the shift decays from near the dissipation-free value
    assert rows[0][3] == pytest.approx(0.19, abs=0.02)
    assert rows[-1][3] < rows[0][3]

    _, srows, _ = read_csv(out / "transient_summary.csv")
    summary = {k: v for k, v in srows}
    assert summary["r_squared"] > 0.99
    assert summary["Gamma"] == pytest.approx(0.021)
    # the measured decay rate sits at Gamma/2, not Gamma
    assert summary["rate_over_half_Gamma"] == pytest.approx(1.0, abs=0.1)

    _, mrows, _ = read_csv(out / "meanfield_track.csv")
    assert len(mrows) == 6 and mrows[0][1] > mrows[-1][1]
    assert (out / "spectrogram.csv").exists()


def test_transient_requires_dissipation(tmp_path):
    cfg = _write(tmp_path, "N = 1000\np_d = 0.8\ngamma_plus = 1.0\n")
    rc = cli.main(["transient", "--config", cfg,
                   "--out", str(tmp_path / "out")])
    assert rc == 2


def test_cli_reports_outputs(tmp_path, capsys):
    cfg = _write(tmp_path, THRESHOLD_CFG)
    cli.main(["thresholds", "--config", cfg, "--out", str(tmp_path / "out")])
    printed = capsys.readouterr().out.splitlines()
    assert any(line.endswith("thresholds.csv") for line in printed)


def test_load_config_file(tmp_path):
    cfg = _write(tmp_path, "N = 10\n")
    assert load_config(cfg) == {"N": "10"}
