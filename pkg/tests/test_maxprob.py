import numpy as np
import pytest

from gazemap.kalman import GaussianMap
from gazemap.maxprob import (MaxProbMap, QuadratureConfig, max_probability_map,
                             max_probability_map_reference, sequential_log_sum,
                             tree_log_sum)

from oracles import mc_argmax_probs


def belief_of(means, sds):
    means = np.asarray(means, dtype=float)
    sds = np.asarray(sds, dtype=float)
    return GaussianMap(means, np.broadcast_to(sds, means.shape).astype(float) ** 2)


class TestTreeLogSum:
    def test_matches_sequential_within_relative_tolerance(self):
        rng = np.random.default_rng(0)
        values = -rng.random(4096) * 30.0
        tree = tree_log_sum(values)
        seq = sequential_log_sum(values)
        assert abs(tree - seq) / max(1.0, abs(seq)) < 1e-10

    def test_order_invariance(self):
        rng = np.random.default_rng(1)
        values = -rng.random(1000) * 5.0
        base = tree_log_sum(values)
        for _ in range(5):
            perm = rng.permutation(values)
            assert abs(tree_log_sum(perm) - base) / max(1.0, abs(base)) < 1e-10

    def test_non_power_of_two_lengths(self):
        for n in (1, 2, 3, 5, 17, 100):
            values = np.linspace(-1.0, -2.0, n)
            assert tree_log_sum(values) == pytest.approx(values.sum(), rel=1e-12)

    def test_axis_handling(self):
        values = -np.arange(12.0).reshape(3, 4)
        assert np.allclose(tree_log_sum(values, axis=1), values.sum(axis=1))
        assert np.allclose(tree_log_sum(values, axis=0), values.sum(axis=0))


class TestMaxProbabilityMap:
    def test_two_identical_cells_split_evenly(self):
        out = max_probability_map(belief_of([0.5, 0.5], [0.1, 0.1]))
        assert np.allclose(out.probs, [0.5, 0.5], atol=1e-9)

    def test_forty_sigma_separation_is_certain(self):
        out = max_probability_map(belief_of([0.9, 0.1], [0.01, 0.01]))
        assert out.probs[0] == pytest.approx(1.0, abs=1e-9)
        assert out.probs[1] == pytest.approx(0.0, abs=1e-9)

    def test_normalization_on_random_grids(self):
        rng = np.random.default_rng(2)
        for shape in ((8, 8), (16, 16), (64, 64)):
            belief = GaussianMap(rng.random(shape),
                                 rng.uniform(0.02, 0.3, shape) ** 2)
            out = max_probability_map(belief)
            assert abs(out.probs.sum() - 1.0) < 1e-6
            assert np.all(out.probs >= 0)
            assert out.diagnostics["defect"] < 1e-6

    def test_three_cell_case_matches_monte_carlo(self):
        means = np.array([0.3, 0.5, 0.6])
        sds = np.array([0.2, 0.1, 0.1])
        out = max_probability_map(belief_of(means, sds))
        mc = mc_argmax_probs(means, sds, 10_000_000, seed=123)
        se = np.sqrt(np.maximum(mc * (1 - mc), 1e-12) / 10_000_000)
        assert np.all(np.abs(out.probs - mc) <= 3 * se)

    def test_single_cell_is_certain(self):
        out = max_probability_map(belief_of([0.5], [0.1]))
        assert out.probs[0] == 1.0

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError):
            max_probability_map(GaussianMap(np.array([0.1, 0.2]),
                                            np.array([0.0, 0.01])))

    def test_shape_preserved(self):
        rng = np.random.default_rng(3)
        belief = GaussianMap(rng.random((5, 7)), np.full((5, 7), 0.01))
        out = max_probability_map(belief)
        assert out.probs.shape == (5, 7)

    def test_agrees_with_naive_reference(self):
        rng = np.random.default_rng(4)
        for k in (3, 17, 64, 300):
            means = rng.random(k)
            sds = rng.uniform(0.02, 0.3, k)
            fast = max_probability_map(belief_of(means, sds))
            ref = max_probability_map_reference(belief_of(means, sds))
            assert np.allclose(fast.probs, ref.probs, atol=1e-11), k

    def test_uniform_sigma_large_grid_matches_reference(self):
        # exercises the windowed fast path against the literal computation
        rng = np.random.default_rng(5)
        means = rng.random((40, 50)) ** 3
        belief = GaussianMap(means, np.full((40, 50), 0.06 ** 2))
        fast = max_probability_map(belief)
        ref = max_probability_map_reference(belief)
        assert np.allclose(fast.probs, ref.probs, atol=1e-11)
        assert abs(fast.probs.sum() - 1.0) < 1e-6

    def test_more_nodes_reduce_defect_flag(self):
        belief = belief_of(np.linspace(0, 1, 32), np.full(32, 0.05))
        coarse = max_probability_map(belief, QuadratureConfig(num_nodes=16))
        fine = max_probability_map(belief, QuadratureConfig(num_nodes=512))
        assert fine.diagnostics["defect"] <= coarse.diagnostics["defect"] + 1e-12
        assert "coarse" in coarse.diagnostics
