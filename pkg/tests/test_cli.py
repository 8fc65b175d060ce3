import csv
import json
import statistics

import numpy as np
import pytest

from hrkriging import cli

OSC = lambda x: np.exp(-6 * x) * np.cos(6 * np.pi * x)


def _write_xy(path, X, Y):
    with open(path, "w") as fh:
        fh.write(",".join([f"x{j + 1}" for j in range(X.shape[1])] + ["y"]) + "\n")
        for row, y in zip(X, Y):
            fh.write(",".join(repr(float(v)) for v in row) + f",{float(y)!r}\n")


def _read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


@pytest.fixture
def osc_file(tmp_path):
    X = np.linspace(0, 1, 10)[:, None]
    path = tmp_path / "osc.csv"
    _write_xy(path, X, OSC(X[:, 0]))
    return path, X


def test_fit_predict_round_trip(tmp_path, osc_file, capsys):
    path, X = osc_file
    model = tmp_path / "m.json"
    assert cli.main(["fit", str(path), "--model", "hrk", "--out", str(model)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["g_final"] <= summary["g_rk"] + 1e-12
    for key in ("theta", "mu", "nu2", "c_norm", "jitter", "loglik", "wall_time_s"):
        assert key in summary
    pts = tmp_path / "pts.csv"
    pts.write_text("x1\n" + "".join(f"{float(v)!r}\n" for v in X[:, 0]))
    out = tmp_path / "pred.csv"
    assert cli.main(["predict", str(model), str(pts), "--out", str(out)]) == 0
    rows = _read_csv(out)
    assert list(rows[0]) == ["x1", "mean", "sd", "tau"]
    mean = np.array([float(r["mean"]) for r in rows])
    sd = np.array([float(r["sd"]) for r in rows])
    Y = OSC(X[:, 0])
    assert np.max(np.abs(mean - Y)) <= 1e-6 * np.ptp(Y)
    assert np.max(sd**2) <= 1e-6 * summary["nu2"]


def test_native_scaling_is_stored(tmp_path, capsys):
    X = np.column_stack([np.linspace(100, 200, 8), np.linspace(-5, 5, 8)[::-1] ** 3])
    Y = np.log(X[:, 0]) + X[:, 1] / 100
    path = tmp_path / "d.csv"
    _write_xy(path, X, Y)
    model = tmp_path / "m.json"
    cli.main(["fit", str(path), "--model", "rk", "--out", str(model)])
    capsys.readouterr()
    saved = json.loads(model.read_text())
    np.testing.assert_allclose(saved["lower"], X.min(axis=0))
    np.testing.assert_allclose(saved["upper"], X.max(axis=0))
    pts = tmp_path / "p.csv"
    pts.write_text("x1,x2\n" + "".join(f"{float(a)!r},{float(b)!r}\n" for a, b in X[:3]))
    cli.main(["predict", str(model), str(pts)])
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    np.testing.assert_allclose([float(r["mean"]) for r in rows], Y[:3], atol=1e-6 * np.ptp(Y))


def test_ok_model_reports_ok_weights_and_constant_tau(tmp_path, osc_file, capsys):
    path, _ = osc_file
    model = tmp_path / "ok.json"
    cli.main(["fit", str(path), "--model", "ok", "--out", str(model)])
    summary = json.loads(capsys.readouterr().out)
    assert summary["c0"] == 1.0 and summary["c_norm"] == 0.0
    pts = tmp_path / "p.csv"
    pts.write_text("x1\n0.05\n0.5\n0.93\n")
    cli.main(["predict", str(model), str(pts)])
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    taus = {float(r["tau"]) for r in rows}
    assert len(taus) == 1
    assert taus.pop() == pytest.approx(np.sqrt(summary["nu2"]), rel=1e-12)


def test_empty_points_file(tmp_path, osc_file, capsys):
    path, _ = osc_file
    model = tmp_path / "m.json"
    cli.main(["fit", str(path), "--model", "ok", "--out", str(model)])
    capsys.readouterr()
    pts = tmp_path / "empty.csv"
    pts.write_text("x1\n")
    assert cli.main(["predict", str(model), str(pts)]) == 0
    assert capsys.readouterr().out == "x1,mean,sd,tau\n"


def test_errors(tmp_path, osc_file, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("x1,y\n0.1,0.2\n0.3,abc\n")
    assert cli.main(["fit", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "line 3" in err and "column y" in err and "abc" in err
    assert cli.main(["predict", str(tmp_path / "missing.json"), str(bad)]) == 2
    path, _ = osc_file
    model = tmp_path / "m.json"
    cli.main(["fit", str(path), "--model", "ok", "--out", str(model)])
    pts = tmp_path / "p2.csv"
    pts.write_text("x1,x2\n0.1,0.2\n")
    assert cli.main(["predict", str(model), str(pts)]) == 2
    assert "columns" in capsys.readouterr().err


def test_constant_response_warns(tmp_path):
    path = tmp_path / "c.csv"
    _write_xy(path, np.linspace(0, 1, 5)[:, None], np.full(5, 3.0))
    with pytest.warns(UserWarning, match="constant"):
        assert cli.main(["fit", str(path), "--out", str(tmp_path / "c.json")]) == 0


def test_bench_list(capsys):
    assert cli.main(["bench-list"]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    ids = {r["id"]: int(r["p"]) for r in rows}
    assert ids["borehole"] == 8 and ids["oscillator"] == 1 and len(ids) == 7


def _config(tmp_path, **kw):
    keys = {"function": "oscillator", "models": "ok,hrk", "n_ini": 5, "budget": 7, "replicates": 2, "seed": 11,
            "test_size": 300, **kw}
    path = tmp_path / "exp.cfg"
    path.write_text("".join(f"{k} = {v}\n" for k, v in keys.items()))
    return path


def test_unknown_function_fails_before_running(tmp_path, capsys):
    cfg = _config(tmp_path, function="nonesuch")
    out = tmp_path / "out"
    assert cli.main(["al", str(cfg), "--out-dir", str(out)]) == 2
    assert "nonesuch" in capsys.readouterr().err
    assert not out.exists()


def test_config_errors(tmp_path):
    with pytest.raises(cli.ConfigError):
        cli.load_experiment(_config(tmp_path, replicates=0))
    with pytest.raises(cli.ConfigError):
        cli.load_experiment(_config(tmp_path, models="ok,gp"))
    path = tmp_path / "x.cfg"
    path.write_text("function = oscillator\nbogus = 1\n")
    with pytest.raises(cli.ConfigError):
        cli.load_experiment(path)


def test_defaults_follow_dimension(tmp_path):
    path = tmp_path / "d.cfg"
    path.write_text("function = gramacy_lee\n")
    cfg = cli.load_experiment(path)
    assert cfg["n_ini"] == 20 and cfg["replicates"] == 10


def test_al_outputs_and_independent_summary(tmp_path):
    cfg = _config(tmp_path, replicates=3)
    out = tmp_path / "out"
    assert cli.main(["al", str(cfg), "--out-dir", str(out), "--threads", "2", "--seed", "4"]) == 0
    traces = sorted(out.glob("trace_*.csv"))
    assert len(traces) == 6
    text = traces[0].read_text()
    assert "# base_seed=4" in text
    header = [l for l in text.splitlines() if not l.startswith("#")][0]
    assert header == "rep,step,n,x1,y,rmse,is,fit_ms,status"

    # recompute the summary from the trace files with the statistics module
    per = {}
    for t in traces:
        rows = _read_csv(t)
        model = t.name.split("_")[1]
        seen = set()
        for r in rows:
            n = int(r["n"])
            if n in seen:
                continue
            seen.add(n)
            per.setdefault((model, n), []).append((float(r["rmse"]), float(r["is"])))
    summary = _read_csv(out / "summary.csv")
    assert len(summary) == len(per)
    for row in summary:
        vals = per[(row["model"], int(row["n"]))]
        for j, name in enumerate(("rmse", "is")):
            v = sorted(x[j] for x in vals)
            q = statistics.quantiles(v, n=20, method="inclusive")
            assert float(row[f"{name}_median"]) == pytest.approx(statistics.median(v), rel=1e-12)
            assert float(row[f"{name}_p05"]) == pytest.approx(q[0], rel=1e-12)
            assert float(row[f"{name}_p95"]) == pytest.approx(q[-1], rel=1e-12)


def test_single_replicate_percentiles_equal_median(tmp_path):
    cfg = _config(tmp_path, replicates=1, models="ok")
    out = tmp_path / "one"
    assert cli.main(["al", str(cfg), "--out-dir", str(out)]) == 0
    for row in _read_csv(out / "summary.csv"):
        assert row["rmse_p05"] == row["rmse_median"] == row["rmse_p95"]
        assert row["is_p05"] == row["is_median"] == row["is_p95"]


def test_all_replicates_failing_gives_nonzero_exit(tmp_path, monkeypatch):
    real = cli.run_active_learning

    def fail_hrk(cfg):
        if cfg.model == "hrk":
            raise RuntimeError("boom")
        return real(cfg)

    monkeypatch.setattr(cli, "run_active_learning", fail_hrk)
    out = tmp_path / "f"
    assert cli.main(["al", str(_config(tmp_path)), "--out-dir", str(out)]) == 1
    text = (out / "summary.csv").read_text()
    assert "# failed: hrk rep 0" in text
    assert {r["model"] for r in _read_csv(out / "summary.csv")} == {"ok"}


def test_threads_default_from_environment(monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "3")
    args = cli.build_parser().parse_args(["al", "x.cfg"])
    assert args.threads == 3
