"""Continuous-time pricers and the binomial bridge to the tree engine."""

import itertools
import math

import numpy as np

import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st

from cli.convergence import run_convergence
from engine.pricing.binomial_bridge import binomial_bridge, one_period_q
from engine.pricing.black_scholes import (
    ClosedFormParams,
    bachelier_call,
    bachelier_call_quadrature,
    bs_call,
    bs_put,
    no_arbitrage_bounds,
)
from engine.pricing.distributions import DistributionSpec, samuelson_merton_price
from engine.pricing.monte_carlo import feynman_kac_mc, split_paths
from engine.pricing.pde_solver import GridSpec, bs_pde_solve

REFERENCE = ClosedFormParams(spot=100.0, strike=100.0, rate=0.05, volatility=0.2, tau=1.0)
REFERENCE_CALL = 10.450583572185565
REFERENCE_PUT = 5.573526022256971


def test_reference_call_and_put():
    assert bs_call(REFERENCE) == pytest.approx(REFERENCE_CALL, abs=1e-10)
    assert bs_put(REFERENCE) == pytest.approx(REFERENCE_PUT, abs=1e-10)


def test_expiry_is_intrinsic_value():
    params = ClosedFormParams(110.0, 100.0, 0.05, 0.2, 0.0)
    assert bs_call(params) == 10.0
    assert bs_put(params) == 0.0


def test_params_validation():
    with pytest.raises(ValueError, match="volatility"):
        ClosedFormParams(100.0, 100.0, 0.05, 0.0, 1.0)
    with pytest.raises(ValueError, match="tau"):
        ClosedFormParams(100.0, 100.0, 0.05, 0.2, -1.0)
    params = ClosedFormParams.from_dict({"spot": 1, "strike": 2, "rate": 0, "vol": 0.3, "tau": 2})
    assert params.volatility == 0.3
    assert params.to_dict()["strike"] == 2.0


@seed(1)
@settings(max_examples=200, deadline=None)
@given(spot=st.floats(1.0, 500.0), strike=st.floats(1.0, 500.0), rate=st.floats(-0.05, 0.2),
       vol=st.floats(0.01, 1.5), tau=st.floats(0.01, 5.0))
def test_call_within_model_free_bounds(spot, strike, rate, vol, tau):
    params = ClosedFormParams(spot, strike, rate, vol, tau)
    low, high = no_arbitrage_bounds(params)
    call = bs_call(params)
    assert low - 1e-9 <= call <= high + 1e-9
    parity = call - bs_put(params) - (spot - strike * params.discount)
    assert abs(parity) <= 1e-9 * max(spot, strike)


def test_bachelier_at_the_money():
    expected = 20.0 / math.sqrt(2.0 * math.pi)
    assert bachelier_call(100.0, 100.0, 20.0, 1.0) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("strike", [60.0, 95.0, 100.0, 120.0, 180.0])
def test_bachelier_quadrature_agrees(strike):
    closed = bachelier_call(100.0, strike, 20.0, 2.0)
    assert bachelier_call_quadrature(100.0, strike, 20.0, 2.0) == pytest.approx(closed, abs=1e-9)


def test_bachelier_rejects_bad_inputs():
    with pytest.raises(ValueError):
        bachelier_call(100.0, 100.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        bachelier_call_quadrature(100.0, 100.0, 20.0, 0.0)


def test_samuelson_merton_lognormal_is_black_scholes():
    dist = DistributionSpec.for_black_scholes(REFERENCE)
    assert dist.mean() == pytest.approx(math.exp(0.05), rel=1e-12)
    assert samuelson_merton_price(REFERENCE, dist) == pytest.approx(REFERENCE_CALL, abs=1e-6)


def test_samuelson_merton_normal_is_bachelier():
    params = ClosedFormParams(100.0, 95.0, 0.0, 0.2, 1.0)
    price = samuelson_merton_price(params, DistributionSpec.normal(1.0, 0.2))
    assert price == pytest.approx(bachelier_call(100.0, 95.0, 20.0, 1.0), abs=1e-8)


def test_samuelson_merton_atoms_and_table():
    params = ClosedFormParams(100.0, 100.0, 0.0, 0.2, 1.0)
    atoms = DistributionSpec.atoms([1.2, 0.8], [1.0, 1.0])
    assert samuelson_merton_price(params, atoms) == pytest.approx(10.0)
    table = DistributionSpec.tabulated([0.5, 1.0, 1.5], [1.0, 2.0, 1.0])
    assert table.mean() == pytest.approx(1.0)


def test_samuelson_merton_checks_mean():
    with pytest.raises(ValueError, match="violates"):
        samuelson_merton_price(REFERENCE, DistributionSpec.lognormal(0.04, 0.0))
    with pytest.raises(ValueError, match="Unknown distribution"):
        DistributionSpec("cauchy")


def test_pde_coarse_grid():
    solution = bs_pde_solve(REFERENCE, GridSpec(n_space=400, n_time=100))
    assert solution.price == pytest.approx(REFERENCE_CALL, abs=5e-2)
    assert solution.space[solution.spot_index] == pytest.approx(100.0)
    assert solution.values.shape == (201, len(solution.space))


@pytest.mark.slow
def test_pde_reference_grid():
    solution = bs_pde_solve(REFERENCE)
    assert solution.price == pytest.approx(REFERENCE_CALL, abs=1e-3)
    assert solution.to_dict()["n_time"] == 2000


def test_pde_domain_must_cover_strike():
    with pytest.raises(ValueError, match="does not cover"):
        bs_pde_solve(REFERENCE, GridSpec(x_max=150.0))


def test_pde_at_expiry():
    params = ClosedFormParams(120.0, 100.0, 0.05, 0.2, 0.0)
    assert bs_pde_solve(params, GridSpec(n_space=100, n_time=10)).price == pytest.approx(20.0)


def test_split_paths():
    assert split_paths(10, 3) == [4, 3, 3]
    assert sum(split_paths(100_003, 8)) == 100_003


def test_mc_is_deterministic_across_workers():
    serial = feynman_kac_mc(REFERENCE, 20_000, seed=42, n_jobs=1)
    parallel = feynman_kac_mc(REFERENCE, 20_000, seed=42, n_jobs=2)
    assert serial.price == parallel.price
    assert serial.stderr == parallel.stderr
    assert feynman_kac_mc(REFERENCE, 20_000, seed=43).price != serial.price


def test_mc_agrees_with_formula():
    estimate = feynman_kac_mc(REFERENCE, 200_000, seed=7)
    assert abs(estimate.price - REFERENCE_CALL) <= 4.0 * estimate.stderr
    assert estimate.to_dict()["n_paths"] == 200_000


def test_mc_rejects_bad_inputs():
    with pytest.raises(ValueError, match="at least"):
        feynman_kac_mc(REFERENCE, 10, seed=1)
    with pytest.raises(ValueError, match="64-bit"):
        feynman_kac_mc(REFERENCE, 1000, seed=-1)


def test_bridge_one_step_by_hand():
    up, down, growth = math.exp(0.2), math.exp(-0.2), math.exp(0.05)
    q = (growth - down) / (up - down)
    result = binomial_bridge(REFERENCE, 1)
    assert result.q_up == pytest.approx(q, abs=1e-10)
    assert result.price == pytest.approx(q * (100.0 * up - 100.0) / growth, abs=1e-9)
    assert result.tree is not None
    assert one_period_q(REFERENCE, 1) == pytest.approx(q, abs=1e-10)


def test_bridge_tree_and_lattice_agree():
    on_tree = binomial_bridge(REFERENCE, 8)
    on_lattice = binomial_bridge(REFERENCE, 8, max_tree_steps=0)
    assert on_lattice.tree is None
    assert on_tree.price == pytest.approx(on_lattice.price, abs=1e-9)
    put = binomial_bridge(REFERENCE, 8, max_tree_steps=0, kind="put")
    parity = on_lattice.price - put.price - (100.0 - 100.0 * REFERENCE.discount)
    assert abs(parity) <= 1e-9


def test_bridge_price_ignores_physical_probability():
    assert binomial_bridge(REFERENCE, 3, phys_up=0.2).price == pytest.approx(
        binomial_bridge(REFERENCE, 3, phys_up=0.7).price, abs=1e-10)


def test_bridge_needs_viable_step():
    with pytest.raises(ValueError, match="no EMM"):
        binomial_bridge(ClosedFormParams(100.0, 100.0, 2.0, 0.1, 1.0), 1)


def test_convergence_table():
    result = run_convergence(REFERENCE, [1000, 10, 100, 10])
    assert list(result.table["n_steps"]) == [10, 100, 1000]
    assert result.reference == pytest.approx(REFERENCE_CALL)
    assert result.final_error < 1e-2
    assert result.converged
    assert result.table["abs_error"].iloc[0] > result.final_error


@pytest.mark.parametrize("n_steps", [10, 11, 12])
def test_bridge_tree_at_low_volatility(n_steps):
    # down moves carry ~0.1 per period, so deep leaves fall far below 1e-9
    params = ClosedFormParams(100.0, 100.0, 0.05, 0.02, 1.0)
    on_tree = binomial_bridge(params, n_steps)
    on_lattice = binomial_bridge(params, n_steps, max_tree_steps=0)
    assert on_tree.tree is not None
    assert on_tree.price == pytest.approx(on_lattice.price, abs=1e-9)
    assert on_tree.q_up == on_lattice.q_up


def test_pde_without_diffusion_or_rate_keeps_the_payoff():
    for spot, expected in ((120.0, 20.0), (80.0, 0.0)):
        params = ClosedFormParams(spot, 100.0, 0.0, 1e-9, 1.0)
        solution = bs_pde_solve(params, GridSpec(n_space=400, n_time=50))
        assert solution.price == pytest.approx(expected, abs=1e-6)
        payoff = np.maximum(solution.space - 100.0, 0.0)
        assert np.max(np.abs(solution.values - payoff)) <= 1e-6


FOUR_WAY_GRID = list(itertools.product((0.1, 0.2, 0.4), (0.25, 1.0, 2.0), (0.8, 1.0, 1.2)))


@pytest.mark.slow
@pytest.mark.parametrize("vol, tau, moneyness", FOUR_WAY_GRID)
def test_four_way_agreement(vol, tau, moneyness):
    params = ClosedFormParams(100.0, 100.0 * moneyness, 0.05, vol, tau)
    reference = bs_call(params)
    assert abs(bs_pde_solve(params).price - reference) <= 1e-3
    lognormal = samuelson_merton_price(params, DistributionSpec.for_black_scholes(params))
    assert abs(lognormal - reference) <= 1e-6
    bridge = binomial_bridge(params, 1000).price
    assert abs(bridge - reference) <= max(1e-2 * reference, 2e-2)
    estimate = feynman_kac_mc(params, 1_000_000, seed=2024)
    assert abs(estimate.price - reference) <= 3.0 * estimate.stderr
