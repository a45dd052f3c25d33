import numpy as np
import pytest

import pytorch_lightning as pl

from price_intervals import arma_aparch, copula, forecasters
from price_intervals.forecasters import (ArmaAparchForecaster,
                                         CopulaForecaster, MlpForecaster)
from price_intervals.tests.utils import true_aparch_params

MLP_PARAMS = {
    "trials": 2,
    "ranges": {
        "learning_rate": [1e-3, 1e-2]
    },
    "train": {
        "lags": 2,
        "hidden_layers": 1,
        "neurons": 8,
        "max_epochs": 3,
        "patience": 2
    },
}


@pytest.fixture
def seed():
    pl.seed_everything(0)


@pytest.fixture(scope="module")
def diffs():
    return arma_aparch.simulate(true_aparch_params(), 400, seed=0)


def test_build_kinds():
    assert isinstance(
        forecasters.build("arma_aparch", {"n_starts": 1}),
        ArmaAparchForecaster)
    assert isinstance(forecasters.build("copula", {}), CopulaForecaster)
    mlp = forecasters.build("mlp_qd", {"trials": 1}, alpha=0.2, seed=4)
    assert isinstance(mlp, MlpForecaster)
    assert mlp.base.loss == "qd"
    assert mlp.base.alpha == 0.2
    assert mlp.settings.master_seed == 4


def test_build_rejects_unknown():
    with pytest.raises(ValueError):
        forecasters.build("garch", {})
    with pytest.raises(ValueError):
        forecasters.build("copula", {"lags": 3})
    assert forecasters.check_params("copula", {"p": 1, "x": 2}) == [
        ("x", "not a copula setting")
    ]


@pytest.mark.parametrize("kind,params,key", [
    ("arma_aparch", {"p": "2"}, "p"),
    ("arma_aparch", {"n_starts": 1.5}, "n_starts"),
    ("arma_aparch", {"innovation": 1}, "innovation"),
    ("copula", {"n_samples": 1.5}, "n_samples"),
    ("copula", {"p": True}, "p"),
    ("mlp_pb", {"trials": "3"}, "trials"),
    ("mlp_qd", {"num_workers": 2.0}, "num_workers"),
    ("mlp_pb", {"train": {"lags": "3"}}, "train.lags"),
    ("mlp_pb", {"train": {"loss": "qd"}}, "train.loss"),
    ("mlp_pb", {"ranges": {"lags": [1, "4"]}}, "ranges.lags"),
    ("mlp_pb", {"ranges": {"lags": 3}}, "ranges.lags"),
])
def test_check_params_types(kind, params, key):
    problems = forecasters.check_params(kind, params)
    assert [k for k, _ in problems] == [key]
    with pytest.raises(ValueError, match=key):
        forecasters.build(kind, params)


def test_check_params_accepts_numbers_for_floats():
    params = {
        "train": {
            "learning_rate": 1,
            "l2": 0.0
        },
        "ranges": {
            "learning_rate": [1e-4, 1e-3]
        }
    }
    assert forecasters.check_params("mlp_pb", params) == []


@pytest.mark.parametrize("kind,params", [
    ("arma_aparch", {"p": -1}),
    ("arma_aparch", {"n_starts": 0}),
    ("arma_aparch", {"innovation": "normal"}),
    ("copula", {"p": 0}),
    ("copula", {"n_samples": 1}),
    ("mlp_pb", {"trials": 0}),
    ("mlp_qd", {"num_workers": 0}),
    ("mlp_pb", {"train": {"lags": 20}}),
    ("mlp_pb", {"ranges": {"lags": [1, 40]}}),
])
def test_build_rejects_out_of_range(kind, params):
    with pytest.raises(ValueError):
        forecasters.build(kind, params)


def test_arma_aparch_forecaster(tmpdir, diffs):
    model = forecasters.build("arma_aparch", {"n_starts": 1})
    model.fit(diffs)
    lower, upper = model.forecast(diffs)
    assert lower < upper
    summary = model.summary()
    assert summary["order"] == (1, 0)
    assert summary["aic"] == pytest.approx(
        2 * 6 - 2 * summary["loglik"], abs=1e-9)

    path = str(tmpdir.join("arma.params"))
    model.save(path)
    assert arma_aparch.load(path) == model.params


def test_arma_aparch_order_chosen_once(diffs):
    model = ArmaAparchForecaster(p_max=1, q_max=0, n_starts=1)
    model.fit(diffs[:300])
    order = model.order
    assert order in [(0, 0), (1, 0)]
    model.fit(diffs)
    assert model.order == order


def test_copula_forecaster_seeds_by_call(diffs):
    first = CopulaForecaster(n_samples=2000, seed=3)
    second = CopulaForecaster(n_samples=2000, seed=3)
    first.fit(diffs)
    second.fit(diffs)
    a = [first.forecast(diffs[:k]) for k in (200, 201)]
    b = [second.forecast(diffs[:k]) for k in (200, 201)]
    assert a == b
    again = first.forecast(diffs[:200])
    assert again != a[0]
    assert first.summary()["order"] == 1


def test_copula_forecaster_save(tmpdir, diffs):
    model = forecasters.build("copula", {"n_samples": 1000})
    model.fit(diffs)
    path = str(tmpdir.join("copula.params"))
    model.save(path)
    assert copula.load(path).rho == model.params.rho


def test_mlp_forecaster_searches_once(seed, diffs):
    model = forecasters.build("mlp_pb", MLP_PARAMS)
    model.fit(diffs[:300])
    assert len(model.trials) == 2
    config = model.config
    lower, upper = model.forecast(diffs[:300])
    assert lower <= upper

    model.fit(diffs)
    assert model.config == config
    assert len(model.trials) == 2
    assert model.summary()["trials"] == 2


def test_mlp_forecaster_save(tmpdir, seed, diffs):
    model = forecasters.build("mlp_qd", dict(MLP_PARAMS, trials=1))
    model.fit(diffs)
    path = str(tmpdir.join("net.bin"))
    model.save(path)
    assert tmpdir.join("net.bin").check()
    assert tmpdir.join("net.bin.scaler").check()
