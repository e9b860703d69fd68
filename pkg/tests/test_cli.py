import csv
import json
import os
import subprocess
import sys

import pytest

from sympmono.cli import ConfigError, ExperimentConfig, main


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, [json.loads(line) for line in out.splitlines() if line.strip()]


def test_index_cp3(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    # CP^3 with L = O(-1): c1 = 4H, c2 = 6H^2, L = -H
    cfg.write_text(json.dumps({"c1c2": 24, "c1sq_l": -16, "c2_l": -6, "l2_c1": 4, "l3": -1}))
    code, rows = _run(capsys, "index", "--config", str(cfg))
    assert code == 0
    assert rows[-1]["virtual_dimension"] == -1 and rows[-1]["branch"] == "Zero"


def test_index_default_is_point_count(capsys):
    code, rows = _run(capsys, "index")
    assert code == 0 and rows[-1]["branch"] == "PointCount"


def test_usage_errors(capsys, tmp_path):
    assert main(["bogus"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nope": 1}))
    assert main(["index", "--config", str(bad)]) == 2
    bad.write_text("{not json")
    assert main(["index", "--config", str(bad)]) == 2
    assert main(["solve-kw", "--s", "-1"]) == 2
    assert main(["verify", "nosuch"]) == 2
    assert main(["verify", "index", "--grid", "4"]) == 2
    capsys.readouterr()


def test_config_build():
    c = ExperimentConfig.build("trichotomy", {"twists": "-1,0,0"}, {"grid": "4"})
    assert c.params["twists"] == (-1, 0, 0) and c.params["grid"] == 4
    with pytest.raises(ConfigError):
        ExperimentConfig.build("spectrum", {"grid": 1})


def test_solve_kw_outputs(capsys, tmp_path):
    code, rows = _run(capsys, "solve-kw", "--out", str(tmp_path / "o"), "--grid", "16")
    assert code == 0 and rows[-1]["converged"]
    assert (tmp_path / "o" / "u.smf").exists() and (tmp_path / "o" / "report.jsonl").exists()
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"problem": "manufactured", "grid": 16}))
    code, rows = _run(capsys, "solve-kw", "--config", str(cfg))
    assert code == 0 and rows[-1]["linf_error"] < 1e-8


def test_solve_kw_no_solution(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"w": 0.0}))
    code, rows = _run(capsys, "solve-kw", "--config", str(cfg))
    assert code == 3 and rows[-1]["reason"] == "no-solution"


def test_spectrum_and_gap_error(capsys, tmp_path):
    code, rows = _run(capsys, "spectrum", "--twists", "2", "--grid", "16")
    assert code == 0
    assert rows[-1]["sections"]["count"] == 2 and rows[-1]["dolbeault"]["dims"] == [2, 0]
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"tol_gap": 1e30, "grid": 8}))
    code, rows = _run(capsys, "spectrum", "--config", str(cfg))
    assert code == 4 and rows[-1]["error"] == "indeterminate-gap"


def test_solve_monopole_writes_configuration(capsys, tmp_path):
    code, rows = _run(capsys, "solve-monopole", "--twists", "0", "--grid", "8",
                      "--out", str(tmp_path), "--csv", str(tmp_path / "r.csv"))
    assert code == 0 and rows[-1]["converged"]
    assert any(p.name.startswith("configuration") for p in tmp_path.iterdir())
    with open(tmp_path / "r.csv") as fh:
        table = list(csv.DictReader(fh))
    assert len(table) == len(rows) - 1 and "residual" in table[0]


def test_verify_passes_and_strips_timings(capsys):
    code, rows = _run(capsys, "verify", "index")
    assert code == 0 and rows[-1]["passed"]
    assert '"seconds"' not in json.dumps(rows) and '"timing"' not in json.dumps(rows)
    code, rows = _run(capsys, "verify", "index", "--timings")
    assert '"seconds"' in json.dumps(rows)


def _cli(args, env=None):
    e = dict(os.environ, **(env or {}))
    return subprocess.run([sys.executable, "-m", "sympmono", *args], capture_output=True, env=e)


def test_byte_identical_reruns_and_thread_limit():
    args = ["verify", "kazdan-warner", "--seed", "5"]
    a = _cli(args)
    b = _cli(args, {"SYMPMONO_THREADS": "1"})
    assert a.returncode == 0 and b.returncode == 0
    assert a.stdout == b.stdout and a.stdout
