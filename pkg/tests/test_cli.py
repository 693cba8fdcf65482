import csv
import json
import math

import numpy as np
import pytest
import yaml

from mcfpf import field as fld
from mcfpf import solver as sv
from mcfpf.cli import AGGREGATE_COLUMNS, main
from mcfpf.config import ConfigError, from_dict, load_config

BASE = {
    "potential": "double_well",
    "grid": {"d": 2, "n": 32, "lambda": 1.0},
    "epsilon": 0.08,
    "scheme": "semi_implicit",
    "dt": 0.0005,
    "t_end": 0.002,
    "geometry": {"circle": {"center": [0.5, 0.5], "radius": 0.3}},
    "observe": {"stride": 2, "snapshot_stride": 2},
}


def write_config(tmp_path, **changes):
    raw = {**BASE, **changes}
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(raw))
    return path


# ---------------------------------------------------------------------------
# configuration


def test_from_dict_builds_objects():
    cfg = from_dict(dict(BASE))
    assert cfg.grid.n == 32 and cfg.grid.dim == 2
    assert cfg.stepper.scheme == sv.SEMI_IMPLICIT and cfg.stepper.dt == 0.0005
    assert isinstance(cfg.geometry, sv.Circle)
    assert cfg.mesh is True
    assert cfg.sweep_points() == [{"epsilon": 0.08, "n": 32, "dt": 0.0005}]


def test_unknown_key_names_its_path():
    with pytest.raises(ConfigError) as err:
        from_dict({**BASE, "grid": {"d": 2, "n": 32, "spacing": 1}})
    assert err.value.path == "grid"
    with pytest.raises(ConfigError):
        from_dict({**BASE, "colour": "red"})


def test_missing_required_key():
    raw = dict(BASE)
    del raw["dt"]
    with pytest.raises(ConfigError, match="dt"):
        from_dict(raw)


def test_underresolved_epsilon_needs_override():
    with pytest.raises(ConfigError) as err:
        from_dict({**BASE, "epsilon": 0.05})
    assert err.value.path == "epsilon"
    assert from_dict({**BASE, "epsilon": 0.05, "allow_underresolved": True}).epsilon == 0.05


def test_sweep_points_are_the_cartesian_product():
    cfg = from_dict({**BASE, "sweep": {"epsilon": [0.08, 0.1], "dt": [1e-4, 2e-4, 4e-4]}})
    points = cfg.sweep_points()
    assert len(points) == 6
    assert {p["n"] for p in points} == {32}
    one = cfg.with_point(points[-1])
    assert one.epsilon == 0.1 and one.stepper.dt == 4e-4 and not one.sweep


def test_empty_sweep_axis_is_a_schema_error():
    with pytest.raises(ConfigError):
        from_dict({**BASE, "sweep": {"epsilon": []}})


def test_sweep_checks_every_resolution_pair():
    with pytest.raises(ConfigError):
        from_dict({**BASE, "sweep": {"epsilon": [0.08, 0.03]}})


def test_forcing_dimension_must_match():
    with pytest.raises(ConfigError, match="forcing"):
        from_dict({**BASE, "variant": "forced", "forcing": {"constant": [1.0, 2.0]}})


def test_mm_scheme_rejects_variants():
    with pytest.raises(ConfigError, match="scheme"):
        from_dict({**BASE, "scheme": "minimizing_movement", "variant": "volume"})


def test_polynomial_potential_config():
    raw = {**BASE, "potential": {"polynomial": {
        "terms": [{"coef": 0.25, "exponents": [4]}, {"coef": -0.5, "exponents": [2]}, {"coef": 0.25, "exponents": [0]}],
        "wells": [[-1.0], [1.0]], "growth_exponent": 4, "growth_radius": 2.0, "growth_lower": 0.01,
        "growth_upper": 1.0, "pert_hessian_bound": 1.0}}}
    cfg = from_dict(raw)
    u = np.linspace(-2, 2, 9)[None]
    np.testing.assert_allclose(cfg.potential.value(u), (1 - u[0] ** 2) ** 2 / 4, atol=1e-14)


def test_load_config_yaml_and_json(tmp_path):
    path = write_config(tmp_path)
    assert load_config(path).epsilon == 0.08
    jpath = tmp_path / "c.json"
    jpath.write_text(json.dumps(BASE))
    assert load_config(jpath).grid.n == 32
    bad = tmp_path / "bad.yaml"
    bad.write_text("- just\n- a list\n")
    with pytest.raises(ConfigError):
        load_config(bad)


# ---------------------------------------------------------------------------
# commands


def test_run_writes_full_output_set(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--quiet"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "completed"
    assert manifest["config"]["epsilon"] == 0.08
    assert manifest["wall_clock_seconds"] >= 0
    expected = {"snapshot_00000000.mcfpf", "snapshot_00000002.mcfpf", "snapshot_00000004.mcfpf",
                "mesh_00000000.csv", "mesh_00000004.csv", "diagnostics.csv", "monitor.csv"}
    assert expected <= set(manifest["files"])
    for name in manifest["files"]:
        assert (out / name).exists()
    final = fld.load_snapshot(out / "snapshot_00000004.mcfpf")
    assert final.time == pytest.approx(0.002)
    with open(out / "diagnostics.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["time"]) for r in rows] == pytest.approx([0.0, 0.001, 0.002])
    assert b"\r\n" not in (out / "diagnostics.csv").read_bytes()


def test_run_with_t_end_at_start_writes_initial_snapshot_only(tmp_path):
    cfg = write_config(tmp_path, t_end=0.0)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--quiet"]) == 0
    snaps = sorted(p.name for p in out.glob("snapshot_*"))
    assert snaps == ["snapshot_00000000.mcfpf"]


def test_run_config_errors_exit_2(tmp_path, capsys):
    cfg = write_config(tmp_path, unknown_key=1)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "unknown_key" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_run_is_deterministic(tmp_path):
    cfg = write_config(tmp_path)
    outs = []
    for k in range(2):
        out = tmp_path / f"out{k}"
        main(["run", "--config", str(cfg), "--out", str(out), "--quiet", "--seed", "3"])
        outs.append(out)
    for name in ("diagnostics.csv", "monitor.csv", "mesh_00000004.csv", "snapshot_00000004.mcfpf"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    assert json.loads((outs[0] / "manifest.json").read_text())["config"]["seed"] == 3


def test_sweep_aggregate(tmp_path):
    cfg = write_config(tmp_path, sweep={"epsilon": [0.08, 0.1], "dt": [0.0005, 0.001]})
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", str(cfg), "--out", str(out), "--threads", "2", "--quiet"]) == 0
    with open(out / "aggregate.csv", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    assert tuple(header) == AGGREGATE_COLUMNS
    assert len(rows) == 4
    for row in rows:
        rec = dict(zip(header, row))
        assert rec["status"] == "completed"
        assert (out / rec["run_dir"] / "manifest.json").exists()
        assert float(rec["energy_eps"]) > 0


def test_single_point_sweep_matches_run(tmp_path):
    cfg = write_config(tmp_path, sweep={"epsilon": [0.08]})
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s"), "--quiet"]) == 0
    plain = write_config(tmp_path)
    assert main(["run", "--config", str(plain), "--out", str(tmp_path / "r"), "--quiet"]) == 0
    a = (tmp_path / "s" / "run_000" / "diagnostics.csv").read_bytes()
    assert a == (tmp_path / "r" / "diagnostics.csv").read_bytes()


def test_sweep_without_axes_is_an_error(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 2


def test_geodesics_prints_sigma_matrix(tmp_path, capsys):
    assert main(["geodesics", "--potential", "double_well", "--out", str(tmp_path)]) == 0
    rows = [list(map(float, line.split(","))) for line in capsys.readouterr().out.splitlines()]
    assert rows[0][0] == 0.0
    assert rows[0][1] == pytest.approx(2 * math.sqrt(2) / 3, abs=1e-6)
    assert (tmp_path / "curve_0_1.csv").exists()


def test_profile_table(capsys):
    assert main(["profile", "--potential", "double_well", "--samples", "5", "--half-width", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "s,q0"
    s, q = zip(*(map(float, line.split(",")) for line in lines[1:]))
    np.testing.assert_allclose(q, np.tanh(np.array(s) / math.sqrt(2)), atol=1e-4)


def test_verify_unknown_suite_is_a_usage_error():
    with pytest.raises(SystemExit) as err:
        main(["verify", "nonsense"])
    assert err.value.code == 2


def test_verify_geodesic_passes(capsys):
    assert main(["verify", "geodesic"]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 4 and "[FAIL]" not in out


def test_run_requires_config():
    with pytest.raises(SystemExit):
        main(["run"])
