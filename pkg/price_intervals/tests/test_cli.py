import os

import numpy as np
import pandas as pd
import pytest
import yaml

from price_intervals import arma_aparch, config
from price_intervals.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main
from price_intervals.data import load_series
from price_intervals.tests.utils import slow

FIXTURE_CONFIG = os.path.join(
    os.path.dirname(config.__file__), "configs", "fixture.yaml")


@pytest.fixture
def data_path(tmpdir):
    path = str(tmpdir.join("prices.csv"))
    assert main(["synth", "aparch", "n=200", "--seed", "1", "--out",
                 path]) == EXIT_OK
    return path


def write_config(tmpdir, data, **sections):
    series = load_series(data)
    document = {
        "data": {
            "path": data
        },
        "backtest": {
            "refit_every": 25
        },
        "regimes": [{
            "name": "tail",
            "start": str(series.dates[150]),
            "end": str(series.dates[-1])
        }],
        "forecasters": [{
            "kind": "arma_aparch",
            "params": {
                "n_starts": 1
            }
        }, {
            "kind": "copula",
            "params": {
                "n_samples": 500
            }
        }],
        "output": {
            "dir": str(tmpdir.join("report"))
        },
    }
    document.update(sections)
    path = str(tmpdir.join("run.yaml"))
    with open(path, "w") as f:
        yaml.safe_dump(document, f)
    return path


def test_synth(tmpdir, capsys):
    path = str(tmpdir.join("fixture.csv"))
    assert main(["synth", "fixture", "--out", path]) == EXIT_OK
    assert "3123 rows" in capsys.readouterr().out
    series = load_series(path)
    assert len(series) == 3123
    assert str(series.dates[-1]) == "2023-01-20"
    assert os.path.exists(path + ".quantiles.csv")


def test_synth_bad_spec(tmpdir):
    out = str(tmpdir.join("x.csv"))
    assert main(["synth", "aparch", "a9=1", "--out", out]) == EXIT_USAGE
    assert not os.path.exists(out)


def test_describe(data_path, capsys):
    assert main(["describe", data_path]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert [c.strip() for c in lines[0].split("|")] == [
        "Period", "Std", "Skewness", "Kurtosis"
    ]
    assert lines[2].startswith("all")
    std = float(lines[2].split("|")[1])
    diffs = np.diff(load_series(data_path).values)
    assert std == pytest.approx(diffs.std(ddof=1), abs=1e-4)


def test_describe_periods(data_path, capsys):
    dates = load_series(data_path).dates
    first = f"first:{dates[0]}:{dates[99]}"
    second = f"second:{dates[100]}:{dates[-1]}"
    assert main(["describe", data_path, "--period", first, "--period",
                 second]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert [line.split()[0] for line in lines[2:]] == ["first", "second"]


def test_describe_errors(tmpdir, data_path):
    assert main(["describe", str(tmpdir.join("nope.csv"))]) == EXIT_USAGE
    assert main(["describe"]) == EXIT_USAGE
    assert main(["describe", data_path, "--period", "bad"]) == EXIT_USAGE
    bad = tmpdir.join("bad.csv")
    bad.write("date,price\n2020-01-01,abc\n")
    assert main(["describe", str(bad)]) == EXIT_USAGE


def test_describe_from_config(tmpdir, data_path, capsys):
    dates = load_series(data_path).dates
    path = write_config(
        tmpdir,
        data_path,
        describe={
            "periods": [{
                "name": "head",
                "start": str(dates[0]),
                "end": str(dates[50])
            }]
        })
    assert main(["describe", "--config", path]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[2].startswith("head")


def test_fit_arma_aparch(tmpdir, data_path, capsys):
    out = str(tmpdir.join("arma.params"))
    code = main(["fit", "arma_aparch", data_path, "--out", out, "--param",
                 "n_starts=1"])
    assert code == EXIT_OK
    printed = capsys.readouterr().out
    assert "aic:" in printed
    params = arma_aparch.load(out)
    assert params.p == 1 and params.q == 0


def test_fit_window(tmpdir, data_path):
    dates = load_series(data_path).dates
    out = str(tmpdir.join("copula.params"))
    assert main([
        "fit", "copula", data_path, "--out", out, "--end",
        str(dates[99])
    ]) == EXIT_OK
    assert len(np.loadtxt(out + ".marginal")) == 99


def test_fit_mlp_writes_trials(tmpdir, data_path):
    out = str(tmpdir.join("net.bin"))
    code = main([
        "fit", "mlp_pb", data_path, "--out", out, "--param", "trials=2",
        "--param", "train={max_epochs: 3, patience: 2, lags: 2}"
    ])
    assert code == EXIT_OK
    trials = pd.read_csv(out + ".trials.csv")
    assert list(trials["trial"]) == [0, 1]


def test_fit_errors(tmpdir, data_path):
    out = str(tmpdir.join("m.params"))
    assert main(["fit", "garch", data_path, "--out", out]) == EXIT_USAGE
    assert main(["fit", "copula", data_path, "--out", out, "--param",
                 "lags=3"]) == EXIT_USAGE
    assert main(["fit", "copula", data_path]) == EXIT_USAGE


def test_no_command():
    assert main([]) == EXIT_USAGE


def test_backtest(tmpdir, data_path, capsys):
    path = write_config(tmpdir, data_path)
    assert main(["-v", "backtest", path]) == EXIT_OK
    printed = capsys.readouterr().out
    assert printed.startswith("tail (")
    assert "ARMA-APARCH" in printed and "Copula" in printed

    report = str(tmpdir.join("report"))
    forecasts = pd.read_csv(os.path.join(report, "forecasts.csv"))
    # Targets from index 150 of 200 prices.
    assert (forecasts["forecaster"] == "Copula").sum() == 50
    with open(os.path.join(report, "metrics.yaml")) as f:
        metrics = yaml.safe_load(f)
    assert metrics["metrics"]["tail"]["Copula"]["n"] == 50
    assert os.path.exists(os.path.join(report, "table_tail.txt"))


def test_backtest_overrides(tmpdir, data_path):
    path = write_config(tmpdir, data_path)
    out = str(tmpdir.join("other"))
    overrides = [
        "forecasters.0.kind=copula", "forecasters.0.params={}",
        "forecasters.0.name=second", "backtest.alpha=0.2"
    ]
    argv = ["backtest", path, "--out", out]
    for override in overrides:
        argv += ["--set", override]
    assert main(argv) == EXIT_OK
    with open(os.path.join(out, "metrics.yaml")) as f:
        metrics = yaml.safe_load(f)
    assert metrics["forecasters"] == ["second", "Copula"]
    assert metrics["alpha"] == 0.2
    assert "backtest.alpha=0.2" in metrics["header"]["overrides"]


def test_backtest_missing_data(tmpdir, data_path):
    path = write_config(tmpdir, data_path)
    code = main([
        "backtest", path, "--set",
        f"data.path={tmpdir.join('missing.csv')}"
    ])
    assert code == EXIT_USAGE


def test_backtest_without_forecasts(tmpdir, data_path):
    """A model that can never be fitted makes the run fail."""
    path = write_config(
        tmpdir,
        data_path,
        backtest={
            "refit_every": 25,
            "window": "moving",
            "window_length": 30
        },
        forecasters=[{
            "kind": "copula",
            "params": {
                "p": 5
            }
        }])
    assert main(["backtest", path]) == EXIT_FAILURE
    refits = pd.read_csv(str(tmpdir.join("report", "refits.csv")))
    assert not refits["ok"].any()


def test_backtest_rejects_wrong_setting_type(tmpdir, data_path, capsys):
    path = write_config(
        tmpdir,
        data_path,
        forecasters=[{
            "kind": "arma_aparch",
            "params": {
                "p": "2"
            }
        }])
    assert main(["backtest", path]) == EXIT_USAGE
    assert "forecasters.0.params.p" in capsys.readouterr().err
    assert not os.path.exists(str(tmpdir.join("report")))


def test_fit_rejects_wrong_setting_type(tmpdir, data_path):
    out = str(tmpdir.join("m.params"))
    assert main(["fit", "copula", data_path, "--out", out, "--param",
                 "n_samples=1.5"]) == EXIT_USAGE
    assert main(["fit", "arma_aparch", data_path, "--out", out, "--param",
                 "p='2'"]) == EXIT_USAGE
    assert not os.path.exists(out)


@slow
def test_fixture_backtest(tmpdir, capsys):
    """All four forecasters on the bundled fixture; intervals in the shock
    regime are wider than after it."""
    data = str(tmpdir.join("fixture.csv"))
    assert main(["synth", "fixture", "--seed", "0", "--out", data]) == EXIT_OK
    out = str(tmpdir.join("report"))
    argv = [
        "backtest", FIXTURE_CONFIG, "--out", out, "--set",
        f"data.path={data}", "--set", "backtest.refit_every=60"
    ]
    assert main(argv) == EXIT_OK
    printed = capsys.readouterr().out
    assert printed.startswith("shock (")

    with open(os.path.join(out, "metrics.yaml")) as f:
        metrics = yaml.safe_load(f)
    names = ["ARMA-APARCH", "Copula", "MLP-PB", "MLP-QD"]
    assert metrics["forecasters"] == names
    for name in names:
        shock = metrics["metrics"]["shock"][name]
        after = metrics["metrics"]["after_shock"][name]
        assert shock["n"] > 0 and after["n"] > 0
        assert shock["piaw"] > after["piaw"], name
