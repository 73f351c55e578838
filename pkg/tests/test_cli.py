import hashlib
import json
import os

import numpy as np
import pytest

from sigmak import cli
from sigmak.errors import ManifestError


def write_manifest(tmp_path, obj, name="m.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def base_manifest(out_dir, scenarios):
    return {
        "chart": {"kind": "sphere_chart", "n": 3, "resolution": 9, "extent": 1.0},
        "metric": {"formula": "round_normal"},
        "problem": {
            "branch": "W", "t": 1.0, "a": 1.0, "b": -0.5, "S": "half_g",
            "operator": {"kind": "sigma_k_root", "k": 2},
            "rhs": {"kind": "exp_decay", "psi": 0.5, "k_exp": 1},
        },
        "solver": {"residual_tol": 1e-11},
        "scenarios": scenarios,
        "output_dir": out_dir,
        "seed": 3,
    }


def test_unknown_scenario_id_named(tmp_path):
    m = base_manifest(str(tmp_path / "out"), ["no_such_scenario"])
    path = write_manifest(tmp_path, m)
    with pytest.raises(ManifestError) as err:
        cli.load_manifest(path)
    assert "no_such_scenario" in str(err.value)


def test_missing_field_named(tmp_path):
    m = base_manifest(str(tmp_path / "out"), ["sphere_exact"])
    del m["chart"]
    path = write_manifest(tmp_path, m)
    with pytest.raises(ManifestError) as err:
        cli.load_manifest(path)
    assert "chart" in str(err.value)


def test_invalid_json_reported(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ManifestError):
        cli.load_manifest(str(p))


def test_run_sphere_exact_records_convergence(tmp_path):
    out = str(tmp_path / "out")
    m = base_manifest(out, [{"id": "sphere_exact", "k": 2, "perturbation": 0.01}])
    path = write_manifest(tmp_path, m)
    record, code = cli.run(path)
    assert code == 0
    sc = record["scenarios"][0]
    assert sc["status"] == "ok" and sc["detail"]["converged"]
    assert os.path.exists(os.path.join(out, "sphere_exact_log.csv"))
    assert os.path.exists(os.path.join(out, "run_record.json"))
    assert os.path.exists(os.path.join(out, "schema.json"))


def test_determinism_byte_identical(tmp_path):
    scenarios = [
        {"id": "sphere_exact", "k": 2, "perturbation": 0.01},
        {"id": "property_sweep", "samples": 400},
        {"id": "structure_conditions", "k": 2, "samples": 300, "epsilon": 0.01},
    ]
    hashes = []
    for run_dir in ("a", "b"):
        out = str(tmp_path / run_dir)
        m = base_manifest(out, scenarios)
        path = write_manifest(tmp_path, m, f"{run_dir}.json")
        record, code = cli.run(path)
        assert code == 0
        digest = {}
        for fn in sorted(os.listdir(out)):
            if fn.endswith(".csv"):
                digest[fn] = hashlib.sha256(
                    open(os.path.join(out, fn), "rb").read()
                ).hexdigest()
        hashes.append(digest)
    assert hashes[0] == hashes[1]
    assert len(hashes[0]) >= 2


def test_scenario_failure_isolation(tmp_path):
    out = str(tmp_path / "out")
    scenarios = [
        {"id": "structure_conditions", "k": 2, "samples": 200, "epsilon": 10.0},
        {"id": "property_sweep", "samples": 300},
    ]
    m = base_manifest(out, scenarios)
    path = write_manifest(tmp_path, m)
    record, code = cli.run(path)
    assert code == 1
    statuses = {sc["id"]: sc["status"] for sc in record["scenarios"]}
    assert statuses["structure_conditions"] == "failed"
    assert statuses["property_sweep"] == "ok"
    assert os.path.exists(os.path.join(out, "property_sweep.csv"))


def test_newton_scenario_with_field_export(tmp_path):
    out = str(tmp_path / "out")
    m = base_manifest(out, [{"id": "newton", "u0": {"perturbation": 0.005}}])
    path = write_manifest(tmp_path, m)
    record, code = cli.run(path)
    assert code == 0
    assert record["scenarios"][0]["detail"]["converged"]
    u_csv = os.path.join(out, "newton_u.csv")
    assert os.path.exists(u_csv)
    header = open(u_csv).readline().strip().split(",")
    assert header == ["index", "x1", "x2", "x3", "value"]


def test_parallel_flag(tmp_path):
    out = str(tmp_path / "out")
    m = base_manifest(out, [
        {"id": "property_sweep", "samples": 200},
        {"id": "structure_conditions", "k": 2, "samples": 200, "epsilon": 0.01},
    ])
    path = write_manifest(tmp_path, m)
    record, code = cli.run(path, parallel=True)
    assert code == 0


def test_out_dir_env_override(tmp_path, monkeypatch):
    override = str(tmp_path / "envout")
    monkeypatch.setenv("SIGMAK_OUT", override)
    m = base_manifest(str(tmp_path / "ignored"), [{"id": "property_sweep", "samples": 200}])
    path = write_manifest(tmp_path, m)
    record, code = cli.run(path)
    assert code == 0
    assert os.path.exists(os.path.join(override, "property_sweep.csv"))


def test_study_requires_two_resolutions(tmp_path):
    m = base_manifest(str(tmp_path / "out"), ["property_sweep"])
    m["chart"] = {"kind": "periodic_torus", "n": 3, "resolution": 9}
    m["metric"] = {"formula": "flat"}
    path = write_manifest(tmp_path, m)
    with pytest.raises(ManifestError):
        cli.convergence_study(path, [17])


def test_study_round_trip_order(tmp_path):
    out = str(tmp_path / "out")
    m = base_manifest(out, ["property_sweep"])
    m["chart"] = {"kind": "periodic_torus", "n": 3, "resolution": 9}
    m["metric"] = {"formula": "torus_conformal_bump", "params": {"eps": 0.05}}
    path = write_manifest(tmp_path, m)
    rows = cli.convergence_study(path, [9, 17, 33], out_dir=out)
    assert rows[1][3] != "" and 1.5 <= float(rows[2][3]) <= 2.3
    assert os.path.exists(os.path.join(out, "study.csv"))


def test_study_flat_metric_exact(tmp_path):
    # flat metrics run the curvature-zero study; errors sit at rounding
    # level and the order column reports "exact"
    out = str(tmp_path / "out")
    m = base_manifest(out, ["property_sweep"])
    m["chart"] = {"kind": "periodic_torus", "n": 3, "resolution": 9}
    m["metric"] = {"formula": "flat"}
    path = write_manifest(tmp_path, m)
    rows = cli.convergence_study(path, [9, 17], out_dir=out)
    assert rows[0][2] <= 1e-12 and rows[1][2] <= 1e-12
    assert rows[1][3] == "exact"


def test_cli_main_entry(tmp_path, capsys):
    out = str(tmp_path / "out")
    m = base_manifest(out, [{"id": "property_sweep", "samples": 200}])
    path = write_manifest(tmp_path, m)
    code = cli.main(["run", path])
    assert code == 0
    captured = capsys.readouterr()
    assert "[ok] property_sweep" in captured.out


def test_cli_main_manifest_error(tmp_path, capsys):
    m = base_manifest(str(tmp_path / "out"), ["bogus"])
    path = write_manifest(tmp_path, m)
    code = cli.main(["run", path])
    assert code == 2
    assert "bogus" in capsys.readouterr().err
