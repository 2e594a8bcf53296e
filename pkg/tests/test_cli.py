import csv
import json

import numpy as np
import pytest

from mtarmix.cli import (DataError, RunConfig, main, parse_config, parse_data_csv, read_draws_csv,
                         summary_document, summary_from_document, write_data_csv, write_draws_csv)
from mtarmix.gibbs import ChainControl, run_chain
from mtarmix.model_core import ConfigurationError, ModelSpec, MultivariateSeries
from mtarmix.selection import posterior_summary
from mtarmix.simlab import make_m2, simulate_mtar


def write(path, text):
    path.write_text(text)
    return path


def csv_rows(path):
    return list(csv.reader(open(path)))


@pytest.fixture
def m2_csv(tmp_path):
    series = simulate_mtar(make_m2(), 200, rng=np.random.default_rng(0))
    path = tmp_path / "data.csv"
    write_data_csv(series, path)
    return path, series


FAST = "iterations = 120\nburn_in = 40\n"


class TestDataCsv:
    def test_shapes(self, tmp_path):
        rows = "\n".join(f"{i},{-i},{i % 3}" for i in range(100))
        s = parse_data_csv(write(tmp_path / "a.csv", "y1,y2,z\n" + rows + "\n"))
        assert (s.T, s.k, s.r) == (100, 2, 0)
        s = parse_data_csv(write(tmp_path / "b.csv", "y1,x1,z\n1,2,3\n4,5,6\n"))
        assert (s.k, s.r) == (1, 1) and s.x[1, 0] == 5.0

    def test_column_order_free(self, tmp_path):
        s = parse_data_csv(write(tmp_path / "c.csv", "z,y2,y1\n0.5,2,1\n"))
        np.testing.assert_array_equal(s.y, [[1.0, 2.0]])
        assert s.z[0] == 0.5

    def test_blank_cell_names_row(self, tmp_path):
        lines = ["y1,z"] + [f"{i},{i}" for i in range(1, 31)]
        lines[17] = "17,"
        with pytest.raises(DataError, match="row 17"):
            parse_data_csv(write(tmp_path / "d.csv", "\n".join(lines)))

    @pytest.mark.parametrize("text, match", [
        ("y1,y2\n1,2\n", "no z column"),
        ("y1,z\n1,2\n3\n", "row 2 has 1 cells"),
        ("y1,z\n1,abc\n", "row 1, column z"),
        ("y1,z\n1,inf\n", "non-finite"),
        ("y2,z\n1,2\n", "y1..yk"),
        ("y1,w,z\n1,2,3\n", "unexpected"),
        ("y1,z\n", "no data rows"),
    ])
    def test_errors(self, tmp_path, text, match):
        with pytest.raises(DataError, match=match):
            parse_data_csv(write(tmp_path / "e.csv", text))

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        s = MultivariateSeries(rng.normal(size=(20, 2)), rng.normal(size=20), rng.normal(size=(20, 1)))
        write_data_csv(s, tmp_path / "rt.csv")
        back = parse_data_csv(tmp_path / "rt.csv")
        np.testing.assert_allclose(back.y, s.y, rtol=1e-9)
        np.testing.assert_allclose(back.x, s.x, rtol=1e-9)


class TestConfig:
    def test_defaults(self, tmp_path):
        cfg = parse_config(write(tmp_path / "c.cfg", "mode = fit\ndata = x.csv\n"))
        assert cfg.iterations is None and cfg.burn_in == 500 and cfg.level == 0.95
        assert (cfg.h_min, cfg.h_max, cfg.zeta, cfg.grid_m) == (0, 3, 100.0, 1000)
        ctl = cfg.chain_control()
        assert (ctl.iterations, ctl.n_stored) == (1500, 1000)
        assert RunConfig(family="symmetric_hyperbolic").chain_control().iterations == 2000
        pr = cfg.priors(cfg.model_spec(), 2, 0)
        np.testing.assert_array_equal(pr.delta0[0], 1e3 * np.eye(3))
        np.testing.assert_array_equal(pr.omega0[0], np.eye(2))
        assert pr.tau0[0] == 4

    def test_family_defaults(self, tmp_path):
        cfg = parse_config(write(tmp_path / "c.cfg", "family = student_t\n"))
        pr = cfg.priors(cfg.model_spec(), 1, 0)
        assert (pr.gamma0, pr.eta0) == (2.0, 100.0)
        cfg = parse_config(write(tmp_path / "d.cfg", "family = slash\neta0 = 0.5\n"))
        pr = cfg.priors(cfg.model_spec(), 1, 0)
        assert (pr.gamma0, pr.eta0) == (1.0, 0.5)

    def test_comments_lists_and_overrides(self, tmp_path):
        cfg = parse_config(write(tmp_path / "c.cfg", "# header\nl = 2  # two regimes\np = 1,2\nseed = 5\n"),
                           seed=9)
        assert cfg.p == (1, 2) and cfg.seed == 9
        assert cfg.model_spec().p == (1, 2) and cfg.model_spec().q == (0, 0)

    @pytest.mark.parametrize("text, match", [
        ("colour = red\n", "unknown key"),
        ("family = student_t\ngamma01 = 1\n", "does not apply"),
        ("level = 1.5\n", "level"),
        ("iterations = 100\nburn_in = 100\n", "iterations"),
        ("l = two\n", "invalid value"),
        ("l = 1\nl = 2\n", "duplicate"),
        ("family = cauchy\n", "cauchy"),
        ("family = contaminated_normal\nextra = 0.5\n", "extra"),
        ("just text\n", "key = value"),
        ("l = 3\np = 1,2\n", "entries"),
        ("mode = plot\n", "unknown mode"),
    ])
    def test_errors(self, tmp_path, text, match):
        with pytest.raises(ConfigurationError, match=match):
            parse_config(write(tmp_path / "bad.cfg", text))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="not found"):
            parse_config(tmp_path / "nope.cfg")


@pytest.fixture(scope="module")
def fitted():
    series = simulate_mtar(make_m2("student_t", [5.0]), 150, rng=np.random.default_rng(2))
    spec = ModelSpec(l=3, p=1, h_max=1, family="student_t")
    return series, run_chain(series, spec, control=ChainControl(60, 20, seed=1))


class TestRoundTrips:
    def test_draws(self, fitted, tmp_path):
        _, draws = fitted
        write_draws_csv(draws, tmp_path / "d.csv")
        header = csv_rows(tmp_path / "d.csv")[0]
        assert header[:2] == ["iteration", "theta1[1,1]"] and header[-2:] == ["h", "nu1"]
        back = read_draws_csv(tmp_path / "d.csv", draws.spec, draws.k, draws.r)
        for a, b in zip(draws.theta + draws.sigma, back.theta + back.sigma):
            np.testing.assert_allclose(a, b, rtol=1e-9)
        np.testing.assert_array_equal(back.h, draws.h)
        np.testing.assert_allclose(back.extra, draws.extra, rtol=1e-9)
        with pytest.raises(DataError):
            read_draws_csv(tmp_path / "d.csv", ModelSpec(l=2, p=1), 2, 0)

    def test_summary(self, fitted, tmp_path):
        from mtarmix.cli import rounded, write_json
        _, draws = fitted
        doc = summary_document(posterior_summary(draws), None, draws.control)
        write_json(doc, tmp_path / "s.json")
        loaded = json.load(open(tmp_path / "s.json"))
        assert loaded == rounded(doc)
        summ = summary_from_document(loaded)
        again = summary_document(summ, None, draws.control)
        assert rounded(again) == loaded


def run_cli(mode, cfg_path, *extra):
    return main([mode, "--config", str(cfg_path), *extra])


class TestModes:
    def test_simulate_is_byte_deterministic(self, tmp_path):
        cfg = write(tmp_path / "sim.cfg", "preset = m1\nT = 120\n")
        for name in ("a", "b"):
            assert run_cli("simulate", cfg, "--out", str(tmp_path / name), "--seed", "7") == 0
        assert (tmp_path / "a/data.csv").read_bytes() == (tmp_path / "b/data.csv").read_bytes()
        head = csv_rows(tmp_path / "a/data.csv")[0]
        assert head == ["y1", "y2", "y3", "x1", "x2", "z"]
        assert run_cli("simulate", cfg, "--out", str(tmp_path / "c"), "--seed", "8") == 0
        assert (tmp_path / "a/data.csv").read_bytes() != (tmp_path / "c/data.csv").read_bytes()

    def test_fit_residuals_forecast_pipeline(self, m2_csv, tmp_path, capsys):
        data, series = m2_csv
        cfg = write(tmp_path / "fit.cfg", FAST + "l = 3\np = 1\nh_max = 2\nsave_draws = true\nhorizon = 3\n"
                    "self_exciting = 1\nh_min = 1\n")
        out = tmp_path / "out"
        assert run_cli("fit", cfg, "--data", str(data), "--out", str(out)) == 0
        doc = json.load(open(out / "summary.json"))
        assert doc["G"] == 80 and {"DIC", "WAIC"} <= set(doc["criteria"])
        assert len(csv_rows(out / "draws.csv")) == 81
        first = (out / "summary.json").read_bytes()
        assert run_cli("fit", cfg, "--data", str(data), "--out", str(out)) == 0
        assert (out / "summary.json").read_bytes() == first

        assert run_cli("residuals", cfg, "--data", str(data), "--out", str(out)) == 0
        res = csv_rows(out / "residuals.csv")
        assert len(res) - 1 == series.T - 2   # eligible points start after h_max = 2

        cfg2 = write(tmp_path / "fc.cfg", (tmp_path / "fit.cfg").read_text() + f"draws = {out / 'draws.csv'}\n")
        assert run_cli("forecast", cfg2, "--data", str(data), "--out", str(out)) == 0
        fc = csv_rows(out / "forecast.csv")
        assert fc[0] == ["step", "coordinate", "truth", "mean", "lower", "upper"] and len(fc) == 1 + 3 * 2
        assert '"status": "ok"' in capsys.readouterr().out

    def test_forecast_with_future_file(self, m2_csv, tmp_path):
        data, _ = m2_csv
        fut = write(tmp_path / "future.csv", "z\n1.0\n2.5\n")
        cfg = write(tmp_path / "f.cfg", FAST + f"l = 3\nh_max = 1\nhorizon = 2\nfuture = {fut}\n")
        assert run_cli("forecast", cfg, "--data", str(data), "--out", str(tmp_path / "o")) == 0
        cfg = write(tmp_path / "g.cfg", FAST + f"l = 3\nh_max = 1\nhorizon = 3\nfuture = {fut}\n")
        assert run_cli("forecast", cfg, "--data", str(data), "--out", str(tmp_path / "o")) == 1

    def test_compare_ranks(self, m2_csv, tmp_path):
        data, _ = m2_csv
        cfg = write(tmp_path / "cmp.cfg", FAST + "h_max = 1\ncompare_l = 1,2\ncompare_p = 1,2\n"
                    "compare_families = gaussian,student_t\nn_jobs = 2\n")
        assert run_cli("compare", cfg, "--data", str(data), "--out", str(tmp_path / "c")) == 0
        rows = csv_rows(tmp_path / "c/compare.csv")
        assert len(rows) == 1 + 8
        assert [int(r[6]) for r in rows[1:]] == list(range(1, 9))
        dics = [float(r[4]) for r in rows[1:]]
        assert dics == sorted(dics)
        doc = json.load(open(tmp_path / "c/summary.json"))
        assert doc["best"]["DIC"] == rows[1][0]

    def test_experiment_report(self, tmp_path):
        cfg = write(tmp_path / "e.cfg", "iterations = 60\nburn_in = 20\npreset = m2\nT = 150\n"
                    "replications = 1\nhorizon = 1\nh_min = 1\nh_max = 1\nl = 3\n")
        assert run_cli("experiment", cfg, "--out", str(tmp_path / "e")) == 0
        doc = json.load(open(tmp_path / "e/report.json"))
        assert doc["replications"] == 1 and doc["config"]["preset"] == "m2"

    def test_exit_codes(self, tmp_path, capsys):
        bad = write(tmp_path / "bad.cfg", "colour = red\n")
        assert run_cli("fit", bad) == 1
        assert capsys.readouterr().err.startswith("ERROR:")
        ok = write(tmp_path / "ok.cfg", FAST)
        assert run_cli("fit", ok, "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "o")) == 1
        assert "ERROR:" in capsys.readouterr().err
        # too few observations for three regimes
        short = write(tmp_path / "short.csv", "y1,z\n" + "\n".join(f"{i},{i}" for i in range(12)))
        cfg = write(tmp_path / "s.cfg", FAST + "l = 3\n")
        assert run_cli("fit", cfg, "--data", str(short), "--out", str(tmp_path / "o")) == 1

    def test_numerical_failure_exit_code(self, tmp_path, monkeypatch):
        from mtarmix import cli
        from mtarmix.gibbs import NumericalError

        def boom(*a, **k):
            raise NumericalError("Sigma not positive definite", 1)
        monkeypatch.setattr(cli, "run_chain", boom)
        data = write(tmp_path / "d.csv", "y1,z\n" + "\n".join(f"{i % 5},{i}" for i in range(30)))
        assert run_cli("fit", write(tmp_path / "c.cfg", FAST), "--data", str(data),
                       "--out", str(tmp_path / "o")) == 2
