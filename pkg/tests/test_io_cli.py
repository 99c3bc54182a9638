import json
import math

import numpy as np
import pytest

from minkflow import io
from minkflow.cli import build_config, build_parser, eval_angle, load_config_file, main, parse_body, parse_function
from minkflow.errors import BadGrid, ConfigError, NonConvex
from minkflow.geometry import disk, ellipse


def run_cli(argv, capsys):
    code = main(argv)
    return code, capsys.readouterr()


class TestIO:
    def test_body_roundtrip_is_exact(self, tmp_path):
        s = ellipse(1.7, 1.0, 64)
        io.write_body(tmp_path / "b.csv", s)
        assert np.array_equal(io.read_body(tmp_path / "b.csv").h, s.h)

    def test_nonuniform_grid(self, tmp_path):
        (tmp_path / "b.csv").write_text("theta,h\n0,1\n1,1\n2,1\n3,1\n4,1\n5,1\n6,1\n6.2,1\n")
        with pytest.raises(BadGrid):
            io.read_body(tmp_path / "b.csv")

    def test_missing_column(self, tmp_path):
        (tmp_path / "b.csv").write_text("angle,h\n0,1\n")
        with pytest.raises(ConfigError):
            io.read_body(tmp_path / "b.csv")

    def test_resample(self):
        theta = np.linspace(0, 2 * np.pi, 9)[:-1]
        np.testing.assert_allclose(io.resample_periodic(theta, np.cos(theta), 8), np.cos(theta), atol=1e-14)

    def test_dumps_rejects_nan(self):
        assert json.loads(io.dumps({"a": np.float64(1.5), "b": [1, 2]})) == {"a": 1.5, "b": [1, 2]}
        with pytest.raises(ValueError):
            io.dumps({"a": float("inf")})


class TestConfig:
    def test_key_value_file(self, tmp_path):
        (tmp_path / "c.cfg").write_text("# run\nq = 3\nt-max = 2.5\neven_mode = yes\nsymmetrize = None\n")
        assert load_config_file(tmp_path / "c.cfg") == {"q": 3.0, "t_max": 2.5, "even_mode": True,
                                                        "symmetrize": None}

    def test_json_file(self, tmp_path):
        (tmp_path / "c.json").write_text('{"N": 128, "init": "ellipse:1.2,1", "rescale": false}')
        assert load_config_file(tmp_path / "c.json") == {"N": 128, "init": "ellipse:1.2,1", "rescale": False}

    @pytest.mark.parametrize("text", ["bogus = 1\n", "q 3\n", "q = three\n", "rescale = maybe\n"])
    def test_bad_files(self, tmp_path, text):
        (tmp_path / "c.cfg").write_text(text)
        with pytest.raises(ConfigError):
            load_config_file(tmp_path / "c.cfg")

    def test_precedence(self, tmp_path, monkeypatch):
        (tmp_path / "c.cfg").write_text("out = from-file\nq = 3\np = -2\n")
        monkeypatch.setenv("MINKFLOW_OUT", "from-env")
        args = build_parser().parse_args(["run", "--config", str(tmp_path / "c.cfg"), "--q", "4"])
        cfg = build_config(args)
        assert (cfg.out, cfg.q, cfg.p, cfg.N) == ("from-env", 4.0, -2.0, 256)
        args = build_parser().parse_args(["run", "--out", "from-flag", "--no-rescale"])
        cfg = build_config(args)
        assert cfg.out == "from-flag" and cfg.rescale is False


class TestSpecStrings:
    def test_functions(self, tmp_path):
        t = 2 * np.pi * np.arange(16) / 16
        np.testing.assert_array_equal(parse_function("const:2", 16), 2.0)
        np.testing.assert_allclose(parse_function("trig:1,2:0.3:0.1", 16), 1 + 0.3 * np.cos(2 * t) + 0.1 * np.sin(2 * t))
        (tmp_path / "f.csv").write_text("theta,f\n" + "".join(f"{float(x)!r},{1 + math.cos(x)!r}\n" for x in t))
        np.testing.assert_allclose(parse_function(f"csv:{tmp_path / 'f.csv'}", 16), 1 + np.cos(t), atol=1e-14)

    @pytest.mark.parametrize("text", ["const:x", "trig:", "trig:1,0:1:0", "trig:1,2:1", "poly:1"])
    def test_bad_functions(self, text):
        with pytest.raises(ConfigError):
            parse_function(text, 16)

    def test_even_mode_rejects_odd_harmonics(self):
        with pytest.raises(ConfigError):
            parse_function("trig:1,1:0.1:0", 16, even_mode=True)

    def test_bodies(self):
        assert np.array_equal(parse_body("disk:2", 32).h, disk(2.0, 32).h)
        assert np.array_equal(parse_body("ellipse:2,1", 32).h, ellipse(2.0, 1.0, 32).h)
        assert parse_body("fourier:1,2:0.05:0", 32).h[0] == pytest.approx(1.05)
        for bad in ("disk:x", "ellipse:2", "square:1"):
            with pytest.raises(ConfigError):
                parse_body(bad, 32)

    def test_csv_body_grid_mismatch(self, tmp_path):
        io.write_body(tmp_path / "b.csv", disk(1.0, 32))
        with pytest.raises(ConfigError):
            parse_body(f"csv:{tmp_path / 'b.csv'}", 64)

    @pytest.mark.parametrize("text, value", [("1.5", 1.5), ("pi", math.pi), ("pi/2", math.pi / 2),
                                             ("3pi/4", 0.75 * math.pi), ("-pi", -math.pi), ("2*pi", 2 * math.pi)])
    def test_angles(self, text, value):
        assert eval_angle(text) == pytest.approx(value, rel=1e-15)


class TestCommands:
    def test_measure_disk(self, tmp_path, capsys):
        io.write_body(tmp_path / "d.csv", disk(1.0, 128))
        code, out = run_cli(["measure", str(tmp_path / "d.csv"), "--q", "2", "--p", "-1", "--target-size", "0.08",
                             "--arc", "0,pi/2", "--densities", str(tmp_path / "dens.csv"),
                             "--dump-mesh", str(tmp_path / "m")], capsys)
        assert code == 0
        rep = json.loads(out.out)
        assert set(rep) == {"p", "q", "n", "total", "total_x", "gap", "arcs"}
        assert rep["total"] == pytest.approx(math.pi / 8, rel=1e-2)
        assert rep["arcs"][0]["value_x"] == pytest.approx(rep["total_x"] / 4, rel=1e-6)
        assert (tmp_path / "dens.csv").read_text().startswith("angle,density_v,density_x")
        assert (tmp_path / "m_vertices.csv").exists() and (tmp_path / "m_triangles.csv").exists()

    def test_measure_rejects_bad_input(self, tmp_path, capsys):
        t = 2 * np.pi * np.arange(64) / 64
        (tmp_path / "b.csv").write_text("theta,h\n" + "".join(f"{float(x)!r},{1 + 0.9 * math.cos(2 * x)!r}\n" for x in t))
        assert run_cli(["measure", str(tmp_path / "b.csv"), "--q", "2", "--p", "-1"], capsys)[0] == 1
        io.write_body(tmp_path / "d.csv", disk(1.0, 64))
        assert run_cli(["measure", str(tmp_path / "d.csv"), "--q", "2", "--p", "0"], capsys)[0] == 1
        assert run_cli(["measure", str(tmp_path / "missing.csv"), "--q", "2", "--p", "-1"], capsys)[0] == 1

    def test_run_disk(self, tmp_path, capsys):
        out = tmp_path / "o"
        code, res = run_cli(["run", "--N", "128", "--target-size", "0.08", "--out", str(out), "--dump-mesh"], capsys)
        assert code == 0
        assert json.loads(res.out)["status"] == "Converged"
        for name in ("run.log", "timeseries.csv", "final_body.csv", "summary.json", "mesh_vertices.csv"):
            assert (out / name).exists()
        assert json.loads((out / "summary.json").read_text())["steps"] == 0

    def test_run_timeout_exit(self, tmp_path, capsys):
        code, _ = run_cli(["run", "--N", "128", "--target-size", "0.08", "--init", "ellipse:1.2,1", "--even-mode",
                           "--t-max", "1e-3", "--out", str(tmp_path)], capsys)
        assert code == 2

    def test_run_abort_exit(self, tmp_path, capsys):
        code, res = run_cli(["run", "--N", "128", "--target-size", "0.08", "--init", "ellipse:1.2,1", "--even-mode",
                             "--t-max", "1e-2", "--dt0", "1e-3", "--c-guard", "1.25", "--out", str(tmp_path)], capsys)
        assert code in (1, 3)

    def test_run_rejects_nonnegative_p_without_even_mode(self, tmp_path, capsys):
        assert run_cli(["run", "--p", "1", "--out", str(tmp_path)], capsys)[0] == 1

    def test_variation_nonconvex(self, capsys):
        code, res = run_cli(["variation", "--init", "disk:1", "--N", "64", "--functional", "T", "--q", "2",
                             "--direction", "trig:0,8:1:0", "--s", "0.5", "--target-size", "0.2"], capsys)
        assert code == 1 and "NonConvexPerturbation" in res.err

    def test_variation_report(self, capsys):
        code, res = run_cli(["variation", "--init", "disk:1", "--N", "128", "--functional", "T", "--q", "2",
                             "--target-size", "0.08"], capsys)
        assert code == 0
        rep = json.loads(res.out)
        assert rep["functional"] == "T" and "measured" in rep and "predicted" in rep

    def test_verify(self, capsys):
        code, res = run_cli(["verify"], capsys)
        assert code == 0 and all(c["pass"] for c in json.loads(res.out))

    def test_verify_coarse_grid_fails_interpolation_check(self, capsys):
        code, res = run_cli(["verify", "--N", "128"], capsys)
        failed = [c["check"] for c in json.loads(res.out) if not c["pass"]]
        assert code == 1 and failed == ["brute vs interpolated radial, ellipse 2:1"]

    def test_no_command(self, capsys):
        with pytest.raises(SystemExit):
            main([])
