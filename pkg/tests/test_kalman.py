import numpy as np
import pytest

from gazemap.kalman import (GaussianMap, SaliencyParams, em_fit_saliency,
                            initial_belief, kalman_filter, kalman_predict,
                            kalman_smooth, kalman_update,
                            load_filter_history, riccati_fixed_point,
                            save_filter_history)
from gazemap.synth import simulate_saliency_stream

from oracles import riccati_root


def test_params_must_be_positive():
    with pytest.raises(ValueError):
        SaliencyParams(0.0, 0.1)
    with pytest.raises(ValueError):
        SaliencyParams(0.1, -1.0)


def test_predict_adds_process_noise():
    prior = GaussianMap(np.full((2, 2), 0.5), np.full((2, 2), 0.04))
    out = kalman_predict(prior, SaliencyParams(1.0, 0.1))
    assert np.allclose(out.mean, 0.5)
    assert np.allclose(out.variance, 0.05)


def test_predict_zero_noise_limit():
    prior = GaussianMap(np.array([[0.3]]), np.array([[0.2]]))
    out = kalman_predict(prior, SaliencyParams(1.0, 1e-12))
    assert np.allclose(out.variance, 0.2)
    assert np.allclose(out.mean, prior.mean)


def test_two_predicts_add_twice_the_noise():
    params = SaliencyParams(1.0, 0.2)
    prior = GaussianMap(np.array([[0.0]]), np.array([[1.0]]))
    out = kalman_predict(kalman_predict(prior, params), params)
    assert np.allclose(out.variance, 1.0 + 2 * 0.04)


def test_update_equal_precision_averages():
    predicted = GaussianMap(np.array([[0.0]]), np.array([[1.0]]))
    out = kalman_update(predicted, np.array([[1.0]]), SaliencyParams(1.0, 0.1))
    assert np.allclose(out.mean, 0.5)
    assert np.allclose(out.variance, 0.5)


def test_update_huge_observation_noise_keeps_prediction():
    predicted = GaussianMap(np.array([[0.2]]), np.array([[0.01]]))
    out = kalman_update(predicted, np.array([[5.0]]), SaliencyParams(1e6, 0.1))
    assert np.allclose(out.mean, 0.2, atol=1e-6)
    assert np.allclose(out.variance, 0.01, rtol=1e-6)


def test_update_shape_mismatch_raises():
    predicted = GaussianMap(np.zeros((2, 2)), np.ones((2, 2)))
    with pytest.raises(ValueError):
        kalman_update(predicted, np.zeros((3, 2)), SaliencyParams(1.0, 1.0))


def test_posterior_variance_below_both_sources():
    rng = np.random.default_rng(0)
    params = SaliencyParams(0.3, 0.08)
    predicted = kalman_predict(GaussianMap(rng.random((4, 4)),
                                           rng.random((4, 4)) + 0.01), params)
    out = kalman_update(predicted, rng.random((4, 4)), params)
    assert np.all(out.variance < params.sigma_s1 ** 2)
    assert np.all(out.variance < predicted.variance)


def test_constant_observations_reach_riccati_fixed_point():
    # frozen oracle value for (0.1, 0.05): positive root of p^2 + pq - rq = 0
    params = SaliencyParams(0.1, 0.05)
    expected = 0.0039038820320220757
    assert abs(riccati_fixed_point(params) - expected) < 1e-15
    assert abs(riccati_root(0.1, 0.05) - expected) < 1e-12

    obs = np.full((200, 1, 1), 0.7)
    hist = kalman_filter(obs, params)
    assert abs(hist.posterior_variance[-1, 0, 0] - expected) < 1e-10
    assert abs(hist.posterior_mean[-1, 0, 0] - 0.7) < 1e-6


def test_filter_pixel_independence_under_permutation():
    rng = np.random.default_rng(3)
    obs = rng.random((20, 3, 5))
    params = SaliencyParams(0.2, 0.1)
    perm = rng.permutation(15)
    flat = obs.reshape(20, 15)
    hist = kalman_filter(obs, params)
    hist_perm = kalman_filter(flat[:, perm].reshape(20, 3, 5), params)
    assert np.allclose(hist.posterior_mean.reshape(20, 15)[:, perm],
                       hist_perm.posterior_mean.reshape(20, 15))


class TestSmoother:
    def test_single_frame_equals_filter(self):
        params = SaliencyParams(0.2, 0.1)
        hist = kalman_filter(np.random.default_rng(0).random((1, 2, 2)), params)
        smooth = kalman_smooth(hist, params)
        assert np.allclose(smooth.means[0], hist.posterior_mean[0])
        assert np.allclose(smooth.variances[0], hist.posterior_variance[0])

    def test_terminal_frame_equals_filter(self):
        params = SaliencyParams(0.15, 0.05)
        obs = np.random.default_rng(1).random((30, 2, 2))
        hist = kalman_filter(obs, params)
        smooth = kalman_smooth(hist, params)
        assert np.allclose(smooth.means[-1], hist.posterior_mean[-1])
        assert np.allclose(smooth.variances[-1], hist.posterior_variance[-1])

    def test_smoother_variance_never_exceeds_filter(self):
        params = SaliencyParams(0.25, 0.07)
        obs = np.random.default_rng(2).random((50, 1, 1))
        hist = kalman_filter(obs, params)
        smooth = kalman_smooth(hist, params)
        assert np.all(smooth.variances <= hist.posterior_variance + 1e-15)

    def test_constant_input_steady_state_mean_preserved(self):
        params = SaliencyParams(0.1, 0.05)
        obs = np.full((300, 1, 1), 0.4)
        hist = kalman_filter(obs, params)
        smooth = kalman_smooth(hist, params)
        # in steady state the smoothed mean equals the filtered one
        assert np.allclose(smooth.means[100:], 0.4, atol=1e-8)


class TestEm:
    def test_recovers_generating_parameters(self):
        obs = simulate_saliency_stream(1000, (16, 16), SaliencyParams(0.10, 0.05),
                                       seed=42)
        fitted, diag = em_fit_saliency(obs, SaliencyParams(0.3, 0.3))
        assert abs(fitted.sigma_s1 - 0.10) / 0.10 < 0.10
        assert abs(fitted.sigma_s2 - 0.05) / 0.05 < 0.10

    def test_loglik_non_decreasing(self):
        obs = simulate_saliency_stream(200, (8, 8), SaliencyParams(0.12, 0.04),
                                       seed=7)
        _, diag = em_fit_saliency(obs, SaliencyParams(0.4, 0.2))
        logliks = [row["loglik"] for row in diag["iterations"]]
        diffs = np.diff(logliks)
        assert np.all(diffs >= -1e-9)

    def test_constant_observations_hit_sigma_floor(self):
        obs = np.full((50, 4, 4), 0.5)
        fitted, _ = em_fit_saliency(obs, SaliencyParams(0.2, 0.2))
        assert fitted.sigma_s2 == pytest.approx(1e-4)

    def test_infinite_tol_returns_after_one_iteration(self):
        obs = simulate_saliency_stream(20, (4, 4), SaliencyParams(0.1, 0.05), seed=0)
        _, diag = em_fit_saliency(obs, SaliencyParams(0.3, 0.3), tol=np.inf)
        assert diag["n_iters"] == 1

    def test_rejects_short_streams(self):
        with pytest.raises(ValueError):
            em_fit_saliency(np.zeros((1, 4, 4)), SaliencyParams(0.1, 0.1))


def test_spill_roundtrip(tmp_path):
    params = SaliencyParams(0.2, 0.1)
    obs = np.random.default_rng(5).random((4, 3, 3))
    hist = kalman_filter(obs, params)
    save_filter_history(tmp_path, hist)
    loaded = load_filter_history(tmp_path)
    assert np.allclose(loaded.posterior_mean, hist.posterior_mean, atol=1e-6)
    assert np.allclose(loaded.predicted_variance, hist.predicted_variance, atol=1e-6)


def test_initial_belief_matches_first_observation():
    params = SaliencyParams(0.3, 0.1)
    obs = np.array([[0.2, 0.8]])
    belief = initial_belief(obs, params)
    assert np.allclose(belief.mean, obs)
    assert np.allclose(belief.variance, 0.09)
