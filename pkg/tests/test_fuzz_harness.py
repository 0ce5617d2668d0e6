"""Property harness: settings, reproducibility and small end-to-end runs."""

import numpy as np
import pytest

from cli.fuzz_harness import (
    SUITES,
    FuzzHarness,
    FuzzSettings,
    grid_minimizer,
    projection_minimizer,
    rescale_predictably,
    run_promotion_task,
    run_selection_task,
    run_tree_task,
    task_rng,
)
from engine.data.tree_factory import binomial_tree, trinomial_tree
from engine.optimization.arbitrage_engine import fftap_verdict, find_emm
from engine.optimization.completeness import emm_polytope
from engine.optimization.measure_selection import minimal_divergence_measure
from engine.optimization.preferences import DivergenceSpec

ENTROPY_UP = 1.0 / (3.0 + 4.0 ** (1.0 / 3.0))


def _small(seed=3, **overrides):
    values = dict(count=6, strategies_per_tree=10, claims_per_tree=5, promotion_instances=4,
                  selection_trees=3)
    values.update(overrides)
    return FuzzSettings(seed=seed, **values)


def test_settings_from_config():
    section = {"count": 20, "max_horizon": 2, "unknown": True}
    settings = FuzzSettings.from_config(section, 9, count=None, n_jobs=2)
    assert settings.seed == 9
    assert settings.count == 20
    assert settings.max_horizon == 2
    assert settings.n_jobs == 2
    assert not settings.selection


def test_task_rng_is_keyed_by_stream_and_task():
    draw = task_rng(5, 0, 7).random(4)
    np.testing.assert_array_equal(draw, task_rng(5, 0, 7).random(4))
    assert not np.array_equal(draw, task_rng(5, 1, 7).random(4))
    assert not np.array_equal(draw, task_rng(5, 0, 8).random(4))


def test_predictable_rescaling_keeps_verdict(binomial, arbitrage_tree):
    rng = np.random.default_rng(0)
    for tree in (binomial, arbitrage_tree):
        rescaled = rescale_predictably(tree, rng)
        assert rescaled.prices[tree.root, 1] == tree.prices[tree.root, 1]
        assert fftap_verdict(rescaled).kind == fftap_verdict(tree).kind


def test_single_tasks_pass():
    settings = _small()
    outcome = run_tree_task(settings, 0)
    assert outcome.failures == []
    assert outcome.results["dichotomy"]
    assert outcome.kind in ("emm", "arbitrage")
    promoted = run_promotion_task(settings, 0)
    assert promoted.results == {"promotion": True}


def test_small_run_passes():
    summary = FuzzHarness(_small()).run()
    assert summary.ok, summary.failures
    assert summary.emm_trees + summary.arbitrage_trees == 6
    assert "selection" not in summary.suites
    assert summary.suites["promotion"] == {"passed": 4, "failed": 0}
    assert summary.suites["dichotomy"]["passed"] == 6


def test_runs_are_reproducible_across_workers():
    serial = FuzzHarness(_small(seed=11)).run().to_dict()
    parallel = FuzzHarness(_small(seed=11, n_jobs=2)).run().to_dict()
    assert serial == parallel


def test_empty_run():
    summary = FuzzHarness(_small(count=0)).run()
    assert summary.ok
    assert summary.to_dict()["count"] == 0
    assert all(counts == {"passed": 0, "failed": 0} for counts in summary.suites.values())


def test_selection_suite():
    summary = FuzzHarness(_small(count=2, selection=True)).run()
    assert summary.ok, summary.failures
    assert set(summary.suites) == set(SUITES)


@pytest.mark.slow
def test_thousand_trees():
    summary = FuzzHarness(FuzzSettings(seed=7, count=1000)).run()
    assert summary.ok, summary.failures[:5]
    assert summary.emm_trees >= 200
    assert summary.arbitrage_trees > 0
    assert summary.complete_trees > 0


def test_settings_carry_viable_share():
    assert FuzzSettings(seed=1).viable_share == 0.5
    settings = FuzzSettings.from_config({"viable_share": 1.0}, 1)
    assert settings.viable_share == 1.0


def test_projection_minimizer_on_trinomial(trinomial):
    np.testing.assert_allclose(projection_minimizer(trinomial), np.array([3, 5, 6]) / 14, atol=1e-12)


def test_grid_minimizer_matches_closed_forms(trinomial):
    polytope = emm_polytope(trinomial, find_emm(trinomial))
    phys = trinomial.phys_leaf_prob
    entropy = grid_minimizer(DivergenceSpec.entropy(), polytope, phys)
    np.testing.assert_allclose(entropy, [ENTROPY_UP, 1 - 3 * ENTROPY_UP, 2 * ENTROPY_UP], atol=1e-7)
    quadratic = grid_minimizer(DivergenceSpec.quadratic(), polytope, phys)
    np.testing.assert_allclose(quadratic, np.array([3, 5, 6]) / 14, atol=1e-7)


def test_grid_minimizer_finds_boundary_optimum():
    skewed = trinomial_tree(4.0, (2.0, 1.5, 0.5), probs=(0.05, 0.9, 0.05))
    polytope = emm_polytope(skewed, find_emm(skewed))
    spec = DivergenceSpec.quadratic()
    oracle = grid_minimizer(spec, polytope, skewed.phys_leaf_prob)
    np.testing.assert_allclose(oracle, [0.0, 0.5, 0.5], atol=1e-9)
    selection = minimal_divergence_measure(skewed, spec)
    np.testing.assert_allclose(selection.leaf_prob, oracle, atol=1e-6)
    assert np.min(projection_minimizer(skewed)) < 0.0


def test_grid_minimizer_needs_one_dimension(binomial):
    polytope = emm_polytope(binomial, find_emm(binomial))
    with pytest.raises(ValueError, match="one-dimensional"):
        grid_minimizer(DivergenceSpec.entropy(), polytope, binomial.phys_leaf_prob)


def test_selection_task_reports_missing_incomplete_tree(monkeypatch):
    monkeypatch.setattr("cli.fuzz_harness.random_tree", lambda *args, **kwargs: binomial_tree())
    outcome = run_selection_task(_small(), 0)
    assert outcome.results == {"selection": False}
    assert "no incomplete arbitrage-free tree" in outcome.failures[0]["message"]


def test_selection_task_checks_an_incomplete_tree():
    outcome = run_selection_task(_small(), 1)
    assert outcome.results == {"selection": True}, outcome.failures


@pytest.mark.slow
def test_fifty_selection_trees():
    summary = FuzzHarness(FuzzSettings(seed=7, count=0, selection=True)).run()
    assert summary.suites["selection"] == {"passed": 50, "failed": 0}, summary.failures[:5]
