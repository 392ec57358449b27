import os

import numpy as np
import pytest

from thickjunction import artifacts, configio, harness
from thickjunction import homogenized as hom
from thickjunction.cli import main as cli_main
from thickjunction.errors import ConfigError, MalformedCSV

TINY_SWEEP = """
[geometry]
N = 4

[time]
T = 0.04
steps_base = 4
N_base = 2

[resolution]
hom_nx = 64

[sweep]
N_values = 2 4 8
rho = 0.1
"""


def test_config_defaults_and_overrides():
    cfg = configio.load_config(TINY_SWEEP)
    assert cfg["geometry"]["N"] == 4
    assert cfg["time"]["T"] == 0.04
    assert cfg["sweep"]["N_values"] == (2, 4, 8)
    assert cfg["exponents"]["alpha"] == (2.0, 2.0, 2.0)
    assert cfg["solver"]["newton_tol"] == 1e-10


def test_config_rejects_unknown_key():
    with pytest.raises(ConfigError):
        configio.load_config("[geometry]\nbogus = 1\n")


def test_config_rejects_unknown_section():
    with pytest.raises(ConfigError):
        configio.load_config("[nonsense]\nx = 1\n")


def test_config_nonlinearity_sections():
    cfg = configio.load_config(
        "[nonlinearity.k]\nfamily = affine\nlam = 1.5\nc = 0.0\n")
    params = configio.build_geometry(cfg)
    data = configio.build_problem(cfg, params)
    assert data.k.family == "affine"
    assert data.k.lam == 1.5


def test_config_text_roundtrip():
    cfg = configio.load_config(TINY_SWEEP)
    text = configio.config_text(cfg)
    cfg2 = configio.load_config(text)
    assert configio.config_text(cfg2) == text


def test_time_steps_policy():
    cfg = configio.load_config(TINY_SWEEP)
    assert configio.time_steps(cfg, 2) == 4
    assert configio.time_steps(cfg, 4) == 16
    assert configio.time_steps(cfg, 8) == 64


def test_ladder_validation():
    with pytest.raises(ConfigError):
        harness._validate_ladder([8, 4, 16])
    with pytest.raises(ConfigError):
        harness._validate_ladder([4, 8])
    with pytest.raises(ConfigError):
        harness._validate_ladder([4, 8, 12])
    assert harness._validate_ladder([4, 8, 16]) == [4, 8, 16]


def test_fit_loglog_exact_power():
    eps = np.array([1 / 8, 1 / 16, 1 / 32, 1 / 64])
    errs = 3.7 * eps ** 1.25
    slope, intercept, stderr = harness.fit_loglog(eps, errs)
    assert slope == pytest.approx(1.25, abs=1e-12)
    assert stderr == pytest.approx(0.0, abs=1e-10)


def test_fit_single_constant_recovers_c():
    eps = np.array([1 / 8, 1 / 16, 1 / 32, 1 / 64])
    phi = eps ** 0.5 + eps ** 0.9
    C, rel = harness.fit_single_constant(eps, 2.5 * phi, (0.5, 0.9))
    assert C == pytest.approx(2.5, rel=1e-12)
    assert rel < 1e-12


def test_predicted_exponent():
    cfg = configio.load_config(TINY_SWEEP)
    assert harness.predicted_exponent(cfg) == pytest.approx(0.9)
    cfg["exponents"]["beta"] = (1.5, 1.5, 1.5)
    assert harness.predicted_exponent(cfg) == pytest.approx(0.5)
    cfg["exponents"]["alpha"] = (1.0, 1.0, 1.0)
    cfg["exponents"]["beta"] = (2.0, 2.0, 2.0)
    assert harness.predicted_exponent(cfg) == pytest.approx(0.9)


def test_bound_columns_monotone_in_N():
    cfg = configio.load_config(TINY_SWEEP)
    b_coarse = harness.bound_columns(cfg, 0.25)
    b_fine = harness.bound_columns(cfg, 0.125)
    for key in b_coarse:
        assert b_fine[key] <= b_coarse[key]


@pytest.fixture(scope="module")
def tiny_sweep_report(tmp_path_factory):
    cfg = configio.load_config(TINY_SWEEP)
    out = tmp_path_factory.mktemp("sweep")
    report = harness.run_sweep(cfg, str(out))
    return cfg, out, report


def test_sweep_csv_schema_and_rows(tiny_sweep_report):
    _, out, report = tiny_sweep_report
    rows = artifacts.read_sweep_csv(os.path.join(out, "sweep.csv"))
    assert len(rows) == 3
    assert [r["N"] for r in rows] == [2, 4, 8]
    header = open(os.path.join(out, "sweep.csv")).readline().strip()
    assert header == artifacts.SWEEP_HEADER
    assert len(header.split(",")) == 10


def test_sweep_slope_sane(tiny_sweep_report):
    _, _, report = tiny_sweep_report
    assert 0.5 < report.slope < 1.6
    errs = [r["max_L2"] + r["L2H1"] for r in report.rows]
    assert errs[0] > errs[1] > errs[2]


def test_sweep_bound_columns_decrease(tiny_sweep_report):
    _, _, report = tiny_sweep_report
    rows = report.rows
    for key in ("bound_eps_term", "bound_alpha_term", "bound_beta_term"):
        vals = [r[key] for r in rows]
        assert all(b < a for a, b in zip(vals[:-1], vals[1:]))


def test_plot_emission(tiny_sweep_report):
    cfg, out, report = tiny_sweep_report
    from thickjunction.plots import emit_plotdata
    res = emit_plotdata(os.path.join(out, "sweep.csv"))
    for name in ("measured", "bound", "fit"):
        assert os.path.exists(res["paths"][name])
    assert os.path.exists(res["paths"]["figure"])
    assert res["slope"] == pytest.approx(report.slope, abs=1e-12)


def test_malformed_csv(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(MalformedCSV):
        artifacts.read_sweep_csv(str(path))
    path.write_text(artifacts.SWEEP_HEADER + "\n")
    with pytest.raises(MalformedCSV):
        artifacts.read_sweep_csv(str(path))


def test_run_single_zero_case(tmp_path):
    cfg = configio.load_config(
        "[geometry]\nN = 4\n[time]\nT = 0.02\nsteps_base = 4\nN_base = 4\n"
        "[resolution]\nhom_nx = 48\n"
        "[sources]\nf0_amplitude = 0.0\ng_amplitude = 0.0\n")
    row = harness.run_single(cfg, str(tmp_path))
    for key in ("max_L2", "L2H1", "corollary_L2_body", "corollary_L2_rods"):
        assert row[key] == 0.0


def test_run_single_deterministic(tmp_path):
    cfg = configio.load_config(
        "[geometry]\nN = 4\n[time]\nT = 0.02\nsteps_base = 4\nN_base = 4\n"
        "[resolution]\nhom_nx = 48\n")
    harness.run_single(cfg, str(tmp_path / "a"))
    harness.run_single(cfg, str(tmp_path / "b"))
    a = (tmp_path / "a" / "single.csv").read_bytes()
    b = (tmp_path / "b" / "single.csv").read_bytes()
    assert a == b


def test_trajectory_roundtrip(tmp_path):
    values = np.random.default_rng(0).standard_normal((3, 17))
    path = tmp_path / "x.traj"
    artifacts.write_trajectory(path, values, {"dt": 0.1, "mesh_hash": "abc"})
    back = artifacts.read_trajectory(path)
    assert np.array_equal(back, values)
    manifest = (tmp_path / "x.traj.manifest").read_text()
    assert "mesh_hash = abc" in manifest


def test_multisheet_roundtrip(tmp_path, params4, default_data4):
    sys = hom.assemble(params4, default_data4, hom.HomResolution(nx=32))
    u = np.random.default_rng(1).standard_normal(sys.n)
    field = hom.extract_field(sys, u)
    path = tmp_path / "f.msf"
    artifacts.write_multisheet(path, field)
    back = artifacts.read_multisheet(path)
    assert np.array_equal(back["+"], field.body)
    assert np.array_equal(back["1_2"], field.sheets[(1, 2)])


def test_cell_export(tmp_path, cells_ref):
    path = tmp_path / "z.cell"
    artifacts.write_cell_solution(path, cells_ref["Z0_2"])
    blob = path.read_bytes()
    head, _, rest = blob.partition(b"\n---\n")
    import json
    meta = json.loads(head)
    assert meta["problem"] == "Z2"
    arr = np.frombuffer(rest, dtype=np.float64)
    assert arr.shape[0] == meta["n_nodes"]
    assert np.array_equal(arr, cells_ref["Z0_2"].u)


def test_traces_csv(tmp_path, params4, default_data4):
    sys = hom.assemble(params4, default_data4, hom.HomResolution(nx=32))
    tr = hom.interface_traces(sys, np.zeros(sys.n))
    path = tmp_path / "tr.csv"
    artifacts.write_traces_csv(path, sys.x1, tr)
    lines = path.read_text().strip().split("\n")
    assert len(lines) == len(sys.x1) + 1
    assert lines[0].startswith("x1,")


def test_cli_validate_ok(tmp_path):
    cfgfile = tmp_path / "c.ini"
    cfgfile.write_text("[geometry]\nN = 4\n")
    assert cli_main(["validate", str(cfgfile)]) == 0


def test_cli_validate_bad_geometry(tmp_path):
    cfgfile = tmp_path / "c.ini"
    cfgfile.write_text("[geometry]\nh0 = 1.5\n")
    assert cli_main(["validate", str(cfgfile)]) == 2


def test_cli_unknown_key(tmp_path):
    cfgfile = tmp_path / "c.ini"
    cfgfile.write_text("[geometry]\nwhatever = 3\n")
    assert cli_main(["validate", str(cfgfile)]) == 2


def test_cli_plot_malformed(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("")
    assert cli_main(["plot", str(bad)]) == 3


def test_cli_cells_writes_exports(tmp_path):
    cfgfile = tmp_path / "c.ini"
    cfgfile.write_text("[geometry]\nN = 4\n[resolution]\ncell_L = 6.0\n"
                       "cell_across = 6\n")
    out = tmp_path / "cells"
    assert cli_main(["cells", str(cfgfile), "--out", str(out)]) == 0
    assert (out / "cell_constants.txt").exists()
    assert (out / "cell_Z0_2.cell").exists()


TINY_RUN = ("[geometry]\nN = 4\n[time]\nT = 0.02\nsteps_base = 2\n"
            "N_base = 4\n[resolution]\nhom_nx = 48\n"
            "[output]\nwrite_checkpoints = true\n")


def test_cli_solve_eps_writes_trajectory(tmp_path):
    cfgfile = tmp_path / "c.ini"
    cfgfile.write_text(TINY_RUN)
    out = tmp_path / "eps"
    assert cli_main(["solve-eps", str(cfgfile), "--out", str(out)]) == 0
    values = artifacts.read_trajectory(out / "eps_trajectory.traj")
    assert values.shape[0] == 3
    assert np.all(values[0] == 0.0)


def test_cli_solve_hom_writes_checkpoint(tmp_path):
    cfgfile = tmp_path / "c.ini"
    cfgfile.write_text(TINY_RUN)
    out = tmp_path / "hom"
    assert cli_main(["solve-hom", str(cfgfile), "--out", str(out)]) == 0
    sheets = artifacts.read_multisheet(out / "hom_final.msf")
    assert "+" in sheets and "2_4" in sheets
    assert (out / "hom_traces.csv").exists()


def test_cli_approx_full_pipeline(tmp_path):
    cfgfile = tmp_path / "c.ini"
    cfgfile.write_text(TINY_RUN)
    out = tmp_path / "approx"
    assert cli_main(["approx", str(cfgfile), "--out", str(out)]) == 0
    rows = artifacts.read_sweep_csv(out / "single.csv")
    assert rows[0]["N"] == 4
    assert (out / "layout.txt").exists()
    assert (out / "run_manifest.json").exists()
    assert (out / "eps_trajectory_N4.traj").exists()


def test_sweep_with_worker_pool_matches_inline(tmp_path):
    cfg = configio.load_config(
        "[geometry]\nN = 4\n[time]\nT = 0.02\nsteps_base = 2\nN_base = 2\n"
        "[resolution]\nhom_nx = 48\n[sweep]\nN_values = 2 4 8\n")
    rep1 = harness.run_sweep(cfg, str(tmp_path / "w1"), workers=1)
    rep2 = harness.run_sweep(cfg, str(tmp_path / "w2"), workers=2)
    a = (tmp_path / "w1" / "sweep.csv").read_bytes()
    b = (tmp_path / "w2" / "sweep.csv").read_bytes()
    assert a == b


def test_calibrate_time_base_returns_stable_choice():
    cfg = configio.load_config(
        "[geometry]\nN = 2\n[time]\nT = 0.04\nsteps_base = 4\nN_base = 2\n"
        "[resolution]\nhom_nx = 48\n[sweep]\nN_values = 2 4 8\n")
    base = harness.calibrate_time_base(cfg, max_rounds=1)
    assert base in (4, 8)
