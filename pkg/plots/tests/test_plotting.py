import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from regretplot import PlotSpec, SchemaError, plotted_arrays, read_aggregate_csv, render_regret_plot
from regretplot.cli import main as cli_main

HEADER = "algo,t,mean_R,std_R,mean_R_over_sqrt_t"


def write_csv(path: Path, rows: list[str]) -> Path:
    path.write_text("\n".join([HEADER] + rows) + "\n", encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def harness_csv(tmp_path_factory):
    """Aggregate CSV produced by the simulator CLI (the consumed interface)."""
    out = tmp_path_factory.mktemp("run")
    config = out / "config.json"
    config.write_text(json.dumps({
        "setting": "linear",
        "T": 2000,
        "trials": 6,
        "master_seed": 1,
        "algos": "roful,croful,oplb,lts",
        "log_stride": 10,
        "invariant_checks": False,
    }))
    subprocess.run(
        [sys.executable, "-m", "safebandit.cli", "run", "--config", str(config),
         "--out", str(out), "--workers", "2"],
        check=True,
        capture_output=True,
    )
    return out / "aggregate.csv"


def test_single_algorithm_single_curve(tmp_path):
    csv = write_csv(tmp_path / "a.csv", ["roful,10,1.5,0.2,0.47434164902525691",
                                         "roful,20,2.5,0.3,0.55901699437494745"])
    spec = PlotSpec(csv_path=csv, out_path=tmp_path / "fig.png")
    image, sidecar = render_regret_plot(spec)
    assert image.exists() and image.stat().st_size > 0
    payload = json.loads(sidecar.read_text())
    assert list(payload["algorithms"]) == ["roful"]
    assert payload["algorithms"]["roful"]["t"] == [10, 20]


def test_band_off_omits_band(tmp_path):
    csv = write_csv(tmp_path / "a.csv", ["roful,10,1.5,0.2,0.474"])
    _, sidecar = render_regret_plot(PlotSpec(csv_path=csv, out_path=tmp_path / "f.png", band=False))
    payload = json.loads(sidecar.read_text())
    assert payload["algorithms"]["roful"]["band"] is None


def test_missing_column_names_it(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("algo,t,mean_R,std_R\nroful,1,0.0,0.0\n")
    with pytest.raises(SchemaError, match="mean_R_over_sqrt_t"):
        read_aggregate_csv(bad)


def test_unknown_algorithm_rejected(tmp_path):
    csv = write_csv(tmp_path / "a.csv", ["roful,10,1.5,0.2,0.474"])
    with pytest.raises(SchemaError, match="oplb"):
        plotted_arrays(PlotSpec(csv_path=csv, out_path=tmp_path / "f.png", algorithms=["oplb"]))


def test_bad_y_axis_rejected(tmp_path):
    with pytest.raises(SchemaError):
        PlotSpec(csv_path="x.csv", out_path="y.png", y_axis="bogus")


def test_sidecar_arrays_equal_csv_columns_exactly(harness_csv, tmp_path):
    # the acceptance contract: plotted arrays == CSV columns, float-exact
    raw = harness_csv.read_text().splitlines()
    header = raw[0].split(",")
    cols = {name: [] for name in header}
    for ln in raw[1:]:
        for name, val in zip(header, ln.split(",")):
            cols[name].append(val)
    algos = sorted(set(cols["algo"]))
    assert algos == ["croful", "lts", "oplb", "roful"]

    spec = PlotSpec(csv_path=harness_csv, out_path=tmp_path / "fig.png", y_axis="r_over_sqrt_t")
    _, sidecar = render_regret_plot(spec)
    payload = json.loads(sidecar.read_text())
    for algo in algos:
        rows = [i for i, a in enumerate(cols["algo"]) if a == algo]
        t_csv = [int(cols["t"][i]) for i in rows]
        y_csv = [float(cols["mean_R_over_sqrt_t"][i]) for i in rows]
        std_csv = [float(cols["std_R"][i]) for i in rows]
        entry = payload["algorithms"][algo]
        assert entry["t"] == t_csv
        assert entry["y"] == y_csv  # exact float equality
        expected_band = (np.asarray(std_csv) / np.sqrt(np.asarray(t_csv, dtype=float))).tolist()
        assert entry["band"] == expected_band

    spec_r = PlotSpec(csv_path=harness_csv, out_path=tmp_path / "fig_r.png", y_axis="r")
    _, sidecar_r = render_regret_plot(spec_r)
    payload_r = json.loads(sidecar_r.read_text())
    for algo in algos:
        rows = [i for i, a in enumerate(cols["algo"]) if a == algo]
        assert payload_r["algorithms"][algo]["y"] == [float(cols["mean_R"][i]) for i in rows]
        assert payload_r["algorithms"][algo]["band"] == [float(cols["std_R"][i]) for i in rows]


def test_four_curves_decline_after_burn_in(harness_csv, tmp_path):
    spec = PlotSpec(csv_path=harness_csv, out_path=tmp_path / "fig.png")
    arrays = plotted_arrays(spec)
    assert len(arrays) == 4
    # the sampling baseline is still ramping at this short horizon; the
    # UCB-style curves have already turned over
    for algo in ("roful", "croful", "oplb"):
        t = np.asarray(arrays[algo]["t"])
        y = np.asarray(arrays[algo]["y"])
        burn_in = int(np.searchsorted(t, 200))
        assert y[-1] < y[burn_in], f"{algo}: no decline after burn-in"


def test_cli_end_to_end(harness_csv, tmp_path, capsys):
    out = tmp_path / "cli.png"
    code = cli_main(["--csv", str(harness_csv), "--out", str(out), "--y", "r_over_sqrt_t",
                     "--algos", "roful,oplb"])
    assert code == 0
    assert out.exists()
    sidecar = json.loads((tmp_path / "cli.png.data.json").read_text())
    assert list(sidecar["algorithms"]) == ["roful", "oplb"]
    assert cli_main(["--csv", str(tmp_path / "missing.csv"), "--out", str(out)]) == 1


def test_render_is_deterministic(harness_csv, tmp_path):
    a = render_regret_plot(PlotSpec(csv_path=harness_csv, out_path=tmp_path / "a.png"))
    b = render_regret_plot(PlotSpec(csv_path=harness_csv, out_path=tmp_path / "b.png"))
    assert a[1].read_text() == b[1].read_text()
    assert a[0].read_bytes() == b[0].read_bytes()
