import json
import math
import os

import pytest

from compgeom.cli import EXIT_CONFIG, EXIT_OK, EXIT_VIOLATION, main
from compgeom.errors import ConfigError
from compgeom.io import format_number, parse_config, parse_grid, to_jsonable

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")


def cfg(name):
    return os.path.join(CONFIGS, name)


def read(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def test_format_number():
    assert format_number(0.1) == "0.10000000000000001"
    assert float(format_number(math.pi)) == math.pi
    assert format_number(True) == "1" and format_number(3) == "3"
    assert to_jsonable({"x": 1.5, "y": [2]}) == {"x": "1.5", "y": [2]}


def test_config_errors():
    with pytest.raises(ConfigError):
        parse_grid("12")
    with pytest.raises(ConfigError):
        parse_config("[run]\nformat = xml\n")
    c = parse_config("[pinch]\nR = 2\n[run]\nseed = 5\ngrid = 64x32\n")
    assert c.section("pinch")["R"] == "2" and c.seed == 5 and c.grid == (64, 32)


def test_dtable_csv(tmp_path):
    out = str(tmp_path)
    assert main(["dtable", "--config", cfg("plane_sphere.ini"), "--out", out]) == EXIT_OK
    text = read(os.path.join(out, "dtable.csv")).splitlines()
    assert text[0] == "r1,r2,theta,D"
    assert text[-1].startswith("# tool=compgeom-") and "seed=0" in text[-1]
    assert len(text) == 2 + 2 * 2 * 4


def test_sra_json_and_repeatability(tmp_path):
    runs = []
    for k in range(2):
        out = str(tmp_path / str(k))
        assert main(["sra", "--config", cfg("plane_sphere.ini"), "--out", out,
                     "--format", "json"]) == EXIT_OK
        runs.append(read(os.path.join(out, "sra.json")))
    assert runs[0] == runs[1]
    doc = json.loads(runs[0])
    assert all(isinstance(row["margin_min"], str) for row in doc["data"])


def test_cylinder_expected_counterexample(tmp_path):
    args = ["triangle", "--config", cfg("cylinder_triangle.ini"), "--out", str(tmp_path)]
    assert main(args) == EXIT_OK


def test_cylinder_without_expectation_is_violation(tmp_path):
    text = read(cfg("cylinder_triangle.ini")).replace("expected_counterexample = true",
                                                     "expected_counterexample = false")
    p = tmp_path / "c.ini"
    p.write_text(text)
    assert main(["triangle", "--config", str(p), "--out", str(tmp_path)]) == EXIT_VIOLATION


def test_bad_profile_exit_code(tmp_path):
    assert main(["model-info", "--config", cfg("bad_profile.ini"),
                 "--out", str(tmp_path)]) == EXIT_CONFIG


def test_pinch(tmp_path):
    assert main(["pinch", "--config", cfg("pinch_example.ini"), "--out", str(tmp_path)]) == EXIT_OK
    doc = json.loads(read(os.path.join(str(tmp_path), "pinch.json")))
    assert doc["data"]["verdict"] == "Sphere"


def test_usage_errors(tmp_path):
    assert main(["--config", cfg("plane_sphere.ini")]) == EXIT_CONFIG
    assert main(["nonsense"]) == EXIT_CONFIG
    assert main(["dtable", "--config", str(tmp_path / "missing.ini")]) == EXIT_CONFIG


def test_sweep_jobs_identical(tmp_path):
    small = tmp_path / "small.ini"
    small.write_text(read(cfg("plane_sphere.ini")).replace("n = 20", "n = 6"))
    outs = []
    for jobs in (1, 2):
        out = str(tmp_path / f"j{jobs}")
        assert main(["triangle-sweep", "--config", str(small), "--out", out,
                     "--jobs", str(jobs)]) == EXIT_OK
        outs.append(read(os.path.join(out, "triangle_sweep.csv")))
    assert outs[0] == outs[1]


def test_volume_and_eigen(tmp_path):
    out = str(tmp_path)
    assert main(["volume", "--config", cfg("plane_sphere.ini"), "--out", out]) == EXIT_OK
    assert main(["eigen", "--config", cfg("plane_sphere.ini"), "--out", out]) == EXIT_OK
    assert "margin=lambda_man-lambda_model" in read(os.path.join(out, "eigen.csv"))
