"""End-to-end smoke checks of the python bindings."""

from pathlib import Path

import numpy as np
import pytest

try:
    import _stmpc as stmpc
except ImportError:
    import stmpc

CFG_PATH = Path(__file__).resolve().parents[2] / "data" / "batch_reactor.cfg"


@pytest.fixture(scope="module")
def config():
    return stmpc.load_config(str(CFG_PATH))


@pytest.fixture(scope="module")
def ingredients(config):
    return stmpc.synthesize(config)


def test_config_fields(config):
    assert config.n == 4
    assert config.m == 2
    assert (config.g, config.c, config.b) == (1, 3, 14)
    assert config.base_period == 3
    assert (config.N, config.P, config.delta_max) == (6, 2, 5)
    assert config.T == 150
    assert config.loss == "script:100"
    assert np.asarray(config.x0).shape == (4,)
    assert config.Q[0, 0] == 10.0


def test_parse_rejects_unknown_key():
    with pytest.raises(ValueError):
        stmpc.parse_config("[plant]\nZZ = [1]\n")


def test_synthesis_certified(config, ingredients):
    assert ingredients.Kf.shape == (2, 4)
    assert ingredients.Pf.shape == (4, 4)
    assert ingredients.M == 3
    eigvals = np.linalg.eigvalsh(ingredients.Pf)
    assert eigvals.min() > 0

    report = stmpc.verify(config, ingredients, samples=200, seed=7)
    assert report["ok"]
    assert max(report["qmi_residuals"]) <= 1e-8
    assert report["decrease_margin"] >= -1e-7


def test_ingredients_text_roundtrip(ingredients):
    text = stmpc.format_ingredients(ingredients)
    back = stmpc.parse_ingredients(text)
    assert np.allclose(back.Kf, ingredients.Kf, atol=1e-9)
    assert np.allclose(back.Pf, ingredients.Pf, atol=1e-9)
    assert back.M == ingredients.M


def test_short_robust_run(config, ingredients):
    result = stmpc.simulate(config, ingredients, T=12)
    assert result["x"].shape == (13, 4)
    assert result["u"].shape == (13, 2)
    assert result["infeasible_instants"] == 0
    assert not result["diverged"]
    beta = result["beta"]
    assert beta.min() >= 0 and beta.max() <= 14
    assert all(1 <= d <= 5 for d in result["events"]["delta"])
    assert result["trace_csv"].startswith("t,k,x_1")
    if result["margins"]:
        assert min(result["margins"]) >= -1e-6


def test_loss_override_and_nominal_flag(config, ingredients):
    result = stmpc.simulate(config, ingredients, nominal=True, loss="script:1", T=6)
    assert result["x"].shape == (7, 4)
    assert not result["diverged"]
