"""Smoke tests: each figure kind renders from its golden dataset and carries
the documented overlays; broken datasets fail loudly without emitting images."""

import os
import subprocess
import sys

import matplotlib.pyplot as plt
import pytest

import render
from render import DatasetError

HERE = os.path.dirname(__file__)
GOLDEN = os.path.join(HERE, "golden")
SCRIPT = os.path.join(HERE, os.pardir, "render.py")


def golden(kind):
    return os.path.join(GOLDEN, kind.replace("-", "_"))


@pytest.mark.parametrize("kind", sorted(render.RENDERERS))
def test_cli_renders_golden_dataset(kind, tmp_path):
    out = tmp_path / f"{kind}.png"
    proc = subprocess.run([sys.executable, SCRIPT, golden(kind),
                           "--kind", kind, "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert out.exists() and out.stat().st_size > 10_000


def test_pdf_output(tmp_path):
    out = tmp_path / "fig.pdf"
    render.render(golden("transient"), "transient", str(out))
    assert out.exists() and out.read_bytes()[:5] == b"%PDF-"


def test_spectrum_sweep_has_dashed_meanfield_overlay():
    fig = render.render_spectrum_sweep(golden("spectrum-sweep"))
    ax = fig.axes[0]
    dashed = [ln for ln in ax.lines if ln.get_linestyle() == "--"]
    assert len(dashed) == 2          # both frequency branches
    assert any(ln.get_label() == "mean field" for ln in dashed)
    # overlay only covers the drive fractions where the formula applies
    xdata = dashed[0].get_xdata()
    assert len(xdata) > 0 and min(xdata) > 0.6
    assert len(ax.collections) >= 1  # the heatmap itself
    plt.close(fig)


def test_steady_map_has_threshold_line_and_hatched_mask():
    fig = render.render_steady_map(golden("steady-map"))
    ax = fig.axes[0]
    white = [ln for ln in ax.lines
             if ln.get_color() in ("w", "white") and ln.get_linestyle() == "-"]
    assert any(ln.get_label() == "lasing threshold" for ln in white)
    hatched = [c for c in ax.collections if getattr(c, "get_hatch", None)
               and c.get_hatch()]
    assert hatched, "no hatched shift mask drawn"
    plt.close(fig)


def test_transient_has_track_and_meanfield_curve():
    fig = render.render_transient(golden("transient"))
    ax = fig.axes[0]
    labels = {ln.get_label() for ln in ax.lines}
    assert {"fitted peak", "mean field"} <= labels
    assert len(ax.collections) >= 1  # spectrogram background
    plt.close(fig)


def test_empty_dataset_graceful(tmp_path):
    dataset = tmp_path / "empty"
    dataset.mkdir()
    out = tmp_path / "fig.png"
    proc = subprocess.run([sys.executable, SCRIPT, str(dataset),
                           "--kind", "transient", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert "run_manifest" in proc.stderr
    assert not out.exists()          # no blank image emitted


def test_headerless_csv_rejected(tmp_path):
    (tmp_path / "run_manifest.json").write_text("{}")
    (tmp_path / "peak_track.csv").write_text("# only metadata\n")
    with pytest.raises(DatasetError, match="header"):
        render.render(str(tmp_path), "transient", str(tmp_path / "f.png"))


def test_schema_mismatch_names_missing_column(tmp_path):
    (tmp_path / "run_manifest.json").write_text("{}")
    (tmp_path / "peak_track.csv").write_text("t,wrong_name\n0.0,1.0\n")
    with pytest.raises(DatasetError, match="delta_fit"):
        render.render(str(tmp_path), "transient", str(tmp_path / "f.png"))


def test_rendering_does_not_mutate_dataset():
    dataset = golden("spectrum-sweep")
    before = {f: open(os.path.join(dataset, f), "rb").read()
              for f in os.listdir(dataset)}
    fig = render.render_spectrum_sweep(dataset)
    plt.close(fig)
    after = {f: open(os.path.join(dataset, f), "rb").read()
             for f in os.listdir(dataset)}
    assert before == after


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(DatasetError, match="unknown figure kind"):
        render.render(golden("transient"), "volcano-plot",
                      str(tmp_path / "f.png"))
