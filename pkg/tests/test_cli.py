import json

import numpy as np
import pytest

from geomhull.cli import (EXIT_BUDGET, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERIC,
                          EXIT_PASS, main, read_config_file)
from geomhull.bodies import load_generating_set_json
from geomhull.errors import InputError


def run(*argv):
    return main(list(argv))


@pytest.fixture()
def lp_ball_file(tmp_path):
    path = str(tmp_path / "lp.json")
    assert run("generate", "lp-ball", "--n", "4", "--p", "0.5",
               "--out", path) == EXIT_PASS
    return path


@pytest.fixture()
def cube_file(tmp_path):
    path = str(tmp_path / "cube.json")
    assert run("generate", "cube-vertices", "--n", "4",
               "--out", path) == EXIT_PASS
    return path


class TestGenerate:
    def test_lp_ball_shape(self, lp_ball_file):
        S, p = load_generating_set_json(lp_ball_file)
        assert p == 0.5
        assert S.points.shape == (8, 4)

    def test_cube_vertices_shape(self, cube_file):
        S, p = load_generating_set_json(cube_file)
        assert p is None
        assert S.points.shape == (16, 4)

    def test_random_vertex_subset_formula_count(self, tmp_path):
        # ceil(2^(10 * 0.95)) = 725
        path = str(tmp_path / "v.json")
        assert run("generate", "random-vertex-subset", "--n", "10",
                   "--eps", "0.5", "--const.c", "0.1", "--seed", "3",
                   "--out", path) == EXIT_PASS
        S, _ = load_generating_set_json(path)
        assert S.points.shape == (725, 10)
        assert set(np.unique(S.points)) == {-1.0, 1.0}

    def test_sphere_sample_unit_norms(self, tmp_path):
        path = str(tmp_path / "s.json")
        assert run("generate", "sphere-sample", "--n", "6", "--count", "40",
                   "--seed", "1", "--out", path) == EXIT_PASS
        S, _ = load_generating_set_json(path)
        assert S.points.shape == (40, 6)
        assert np.abs(np.linalg.norm(S.points, axis=1) - 1).max() < 1e-12

    def test_overfull_subset_is_input_error(self):
        assert run("generate", "random-vertex-subset", "--n", "3",
                   "--count", "100") == EXIT_INPUT

    def test_csv_format(self, tmp_path, capsys):
        assert run("generate", "lp-ball", "--n", "2", "--p", "0.5",
                   "--format", "csv") == EXIT_PASS
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "index,x0,x1,p"
        assert len(out) == 5


class TestVerify:
    def test_delta_passes_on_lp_ball(self, lp_ball_file, capsys):
        assert run("verify", "delta", "--input", lp_ball_file) == EXIT_PASS
        report = json.loads(capsys.readouterr().out)
        assert report["realized"]["analytic"] == 4.0
        assert report["calibration"]["c1"] == 0.03125

    def test_delta_needs_p(self, cube_file):
        assert run("verify", "delta", "--input", cube_file) == EXIT_INPUT

    def test_missing_input_file(self):
        assert run("verify", "delta", "--input", "/nonexistent") == EXIT_INPUT

    def test_pconv_passes(self, lp_ball_file):
        assert run("verify", "pconv", "--input", lp_ball_file, "--theta",
                   "0.5", "--samples", "300") == EXIT_PASS

    def test_pconv_from_flags_without_input(self):
        assert run("verify", "pconv", "--p", "0.5", "--theta", "0.75",
                   "--samples", "300") == EXIT_PASS
        assert run("verify", "pconv", "--theta", "0.75") == EXIT_INPUT

    def test_failing_verification_exits_one(self, tmp_path):
        # a 1-trial search on a lumpy set cannot meet eta = 0.001
        path = str(tmp_path / "s.json")
        run("generate", "sphere-sample", "--n", "8", "--count", "30",
            "--seed", "2", "--out", path)
        assert run("verify", "dvoretzky", "--input", path, "--k", "2",
                   "--eta", "0.001", "--trials", "1") == EXIT_FAIL

    def test_budget_exhaustion_exits_four(self):
        assert run("verify", "alesker", "--n", "8", "--eps", "0.5",
                   "--seed", "5", "--budget", "5") == EXIT_BUDGET

    def test_numerical_failure_exits_three(self, lp_ball_file):
        # cross-polytope envelope cannot contain the cube
        assert run("run", "pnormed-quotient", "--input", lp_ball_file,
                   "--eps", "0.5") == EXIT_NUMERIC

    def test_main_passes_on_cube(self, cube_file, tmp_path):
        out = str(tmp_path / "main.json")
        assert run("verify", "main", "--input", cube_file, "--queries", "8",
                   "--out", out) == EXIT_PASS
        report = json.loads(open(out).read())
        assert report["realized"]["verified_fraction"] == 1.0
        assert report["report"]["sigma"] == [0, 1, 2, 3]


class TestRun:
    def test_cube_quotient_byte_identical(self, cube_file, tmp_path):
        a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        args = ("run", "cube-quotient", "--input", cube_file, "--eps", "0.5",
                "--seed", "9", "--queries", "6")
        assert run(*args, "--out", a) == EXIT_PASS
        assert run(*args, "--out", b) == EXIT_PASS
        assert open(a, "rb").read() == open(b, "rb").read()

    def test_cube_quotient_csv_rows(self, cube_file, tmp_path):
        out = str(tmp_path / "q.csv")
        assert run("run", "cube-quotient", "--input", cube_file, "--eps",
                   "0.5", "--seed", "9", "--queries", "6", "--format", "csv",
                   "--out", out) == EXIT_PASS
        lines = open(out).read().splitlines()
        header = lines[0].split(",")
        assert "record" in header and "residual" in header
        kinds = {line.split(",")[0] for line in lines[1:]}
        assert kinds == {"vertex-certificate", "query"}
        assert len(lines) == 1 + 16 + 6

    def test_pnormed_quotient_p1(self, tmp_path):
        src = str(tmp_path / "c.json")
        run("generate", "cube-vertices", "--n", "3", "--p", "1.0",
            "--out", src)
        out = str(tmp_path / "pn.json")
        assert run("run", "pnormed-quotient", "--input", src, "--eps", "0.5",
                   "--seed", "1", "--queries", "4", "--out", out) == EXIT_PASS
        payload = json.loads(open(out).read())
        assert payload["distance"]["contraction"] == 1.0
        assert payload["quotient"]["seed"] == 1

    def test_cubic_from_delta(self, lp_ball_file, tmp_path):
        out = str(tmp_path / "cfd.json")
        assert run("run", "cubic-from-delta", "--input", lp_ball_file,
                   "--coords", "0,1,2,3", "--seed", "2", "--queries", "4",
                   "--out", out) == EXIT_PASS
        payload = json.loads(open(out).read())
        assert payload["summary"]["operator_k"] == 1

    def test_dvoretzky_search_report(self, tmp_path):
        src = str(tmp_path / "s.json")
        run("generate", "sphere-sample", "--n", "8", "--count", "40",
            "--seed", "3", "--out", src)
        out = str(tmp_path / "d.json")
        assert run("run", "dvoretzky-search", "--input", src, "--k", "2",
                   "--eta", "0.3", "--trials", "3", "--seed", "4",
                   "--out", out) == EXIT_PASS
        payload = json.loads(open(out).read())
        assert payload["rank"] == 2
        assert payload["seed"] == 4
        assert "calibration" in payload


class TestConfig:
    def test_config_file_then_cli_override(self, cube_file, tmp_path):
        cfgfile = tmp_path / "run.cfg"
        cfgfile.write_text("eps=0.5\nseed=11\nqueries=4\nconst.c2=2.0\n")
        out = str(tmp_path / "r.json")
        assert run("run", "cube-quotient", "--input", cube_file, "--config",
                   str(cfgfile), "--seed", "12", "--out", out) == EXIT_PASS
        payload = json.loads(open(out).read())
        assert payload["seed"] == 12          # CLI wins over the file
        assert payload["calibration"]["c2"] == 2.0

    def test_unknown_config_key_rejected(self, cube_file, tmp_path):
        cfgfile = tmp_path / "bad.cfg"
        cfgfile.write_text("epsilon=0.5\n")
        assert run("run", "cube-quotient", "--input", cube_file,
                   "--config", str(cfgfile)) == EXIT_INPUT

    def test_read_config_file_parsing(self, tmp_path):
        cfgfile = tmp_path / "c.cfg"
        cfgfile.write_text("# comment\nseed=3\neps=0.25 # tail\nname=abc\n")
        assert read_config_file(str(cfgfile)) == {"seed": 3, "eps": 0.25,
                                                  "name": "abc"}

    def test_malformed_line_rejected(self, tmp_path):
        cfgfile = tmp_path / "c.cfg"
        cfgfile.write_text("just a line\n")
        with pytest.raises(InputError):
            read_config_file(str(cfgfile))

    def test_calibrate_roundtrip(self, tmp_path, capsys):
        calfile = str(tmp_path / "cal.cfg")
        assert run("calibrate", "--const.c1", "0.0625",
                   "--out", calfile) == EXIT_PASS
        printed = json.loads(capsys.readouterr().out)
        assert printed["calibration"]["c1"] == 0.0625
        assert run("calibrate", "--config", calfile) == EXIT_PASS
        again = json.loads(capsys.readouterr().out)
        assert again["calibration"] == printed["calibration"]
