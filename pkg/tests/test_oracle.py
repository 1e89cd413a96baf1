"""Reference implementations: the binomial pricer and the tiny-tree evaluator."""
import ast
import pathlib

import pytest

from reflected_gbsde import oracle
from reflected_gbsde.oracle import AmericanPutSpec, OracleRefusal, crr_price, tiny_tree_eval

# Pinned at first computation; any change to crr_price must explain a move.
CRR_ATM_1000 = 6.089595282977709


def test_crr_pinned_reference():
    spec = AmericanPutSpec(spot=100, strike=100, rate=0.05, vol=0.2, T=1, n_steps=1000)
    assert crr_price(spec) == pytest.approx(CRR_ATM_1000, abs=1e-12)


def test_crr_no_volatility_at_the_money_is_worthless():
    spec = AmericanPutSpec(spot=100, strike=100, rate=0.0, vol=1e-6, T=1, n_steps=1000)
    assert abs(crr_price(spec)) <= 1e-4


@pytest.mark.parametrize("vol", [0.1, 0.3, 0.8])
def test_crr_intrinsic_floor(vol):
    spec = AmericanPutSpec(spot=80, strike=100, rate=0.0, vol=vol, T=1, n_steps=1)
    assert crr_price(spec) >= 20.0


def test_crr_shape_in_spot_and_strike():
    spots = [70, 85, 100, 115, 130]
    by_spot = [crr_price(AmericanPutSpec(s, 100, 0.05, 0.2, 1, 200)) for s in spots]
    assert all(a >= b for a, b in zip(by_spot, by_spot[1:]))
    strikes = [80, 90, 100, 110, 120]
    by_strike = [crr_price(AmericanPutSpec(100, k, 0.05, 0.2, 1, 200)) for k in strikes]
    assert all(a <= b for a, b in zip(by_strike, by_strike[1:]))


@pytest.mark.parametrize(
    "field, value",
    [("spot", 0.0), ("strike", -1.0), ("vol", 0.0), ("T", 0.0), ("n_steps", 0), ("rate", -0.1)],
)
def test_crr_rejects_bad_specs(field, value):
    kwargs = dict(spot=100, strike=100, rate=0.05, vol=0.2, T=1, n_steps=10)
    kwargs[field] = value
    with pytest.raises(ValueError):
        AmericanPutSpec(**kwargs)


def _inputs(**extra):
    base = dict(sigma_low=0.5, sigma_high=1.0, horizon=1.0, dx=0.5, half_width=3, payoff=lambda x: x * x)
    base.update(extra)
    return base


def test_tiny_tree_second_moment_by_hand():
    surface = tiny_tree_eval("expectation", _inputs(dx=1.0), 2)
    assert surface[0][3] == 1.0


def test_tiny_tree_inactive_obstacle_matches_gbsde():
    inputs = _inputs(f=lambda t, x, y, z: -0.5 * y, psi=lambda t, x: -1e6)
    assert tiny_tree_eval("reflected", inputs, 3) == tiny_tree_eval("gbsde", inputs, 3)


def test_tiny_tree_unit_generator():
    inputs = _inputs(payoff=lambda x: 0.0, f=lambda t, x, y, z: 1.0)
    surface = tiny_tree_eval("gbsde", inputs, 4)
    assert surface[0][3] == pytest.approx(1.0, abs=1e-15)


def test_tiny_tree_refuses_large_trees():
    with pytest.raises(OracleRefusal):
        tiny_tree_eval("expectation", _inputs(), 5)
    with pytest.raises(ValueError):
        tiny_tree_eval("unknown", _inputs(), 2)


def test_oracle_is_independent_of_the_engine():
    source = pathlib.Path(oracle.__file__).read_text()
    imported = set()
    for node in ast.walk(ast.parse(source)):
        if isinstance(node, ast.Import):
            imported |= {a.name for a in node.names}
        elif isinstance(node, ast.ImportFrom):
            imported.add("." * node.level + (node.module or ""))
    assert imported <= {"__future__", "math", "dataclasses"}
    assert "numpy" not in source
