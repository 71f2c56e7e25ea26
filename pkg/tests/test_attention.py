import numpy as np
import pytest

from gazemap.attention import RunConfig, run_attention
from gazemap.kalman import SaliencyParams, initial_belief, kalman_predict, kalman_update
from gazemap.maxprob import max_probability_map
from gazemap.particles import (AttentionParams, ParticleSet, bilinear_lookup,
                               density_map, metropolis_ring_move)
from gazemap.synth import blob_positions, moving_blob_frames
from gazemap.saliency import compute_saliency_map


def small_params():
    return AttentionParams(0.6, 1.0, 3.0, 2.0, np.array([[0.9, 0.2], [0.1, 0.8]]))


def blob_saliency_stream(t_len=12, h=64, w=64, seed=3):
    # 64x64 is the smallest frame admitting the default (2, 3) scale pair
    frames = moving_blob_frames(t_len, w, h, blob_sigma=3.0, seed=seed)
    prev = None
    maps = []
    for t in range(t_len):
        maps.append(compute_saliency_map(frames[t], prev))
        prev = frames[t]
    return maps


class TestRunAttention:
    def test_fixed_seed_is_bit_identical(self):
        stream = blob_saliency_stream()
        params_s = SaliencyParams(0.1, 0.05)
        config = RunConfig(num_particles=400, rng_seed=11)
        a, _ = run_attention(stream, params_s, small_params(), config)
        b, _ = run_attention(stream, params_s, small_params(), config)
        assert np.array_equal(a, b)

    def test_different_seed_differs(self):
        stream = blob_saliency_stream()
        params_s = SaliencyParams(0.1, 0.05)
        a, _ = run_attention(stream, params_s, small_params(),
                             RunConfig(num_particles=400, rng_seed=1))
        b, _ = run_attention(stream, params_s, small_params(),
                             RunConfig(num_particles=400, rng_seed=2))
        assert not np.array_equal(a, b)

    def test_densities_are_normalized(self):
        stream = blob_saliency_stream()
        densities, diag = run_attention(stream, SaliencyParams(0.1, 0.05),
                                        small_params(), RunConfig(num_particles=300))
        assert densities.shape == (12, 16, 16)
        sums = densities.reshape(len(densities), -1).sum(axis=1)
        assert np.allclose(sums, 1.0, atol=1e-6)
        assert all(info["defect"] < 1e-5 for info in diag)

    def test_single_frame_composition(self):
        # one frame: the density is the kernel-smoothed initial particle set
        # reweighted by the first max-probability map
        rng_obs = np.random.default_rng(4)
        obs = rng_obs.random((8, 8))
        params_s = SaliencyParams(0.1, 0.05)
        params_x = small_params()
        config = RunConfig(num_particles=2000, rng_seed=5, kernel_bandwidth=1.0,
                           resample_interval=1)
        densities, _ = run_attention([obs], params_s, params_x, config)

        belief = initial_belief(obs, params_s)
        belief = kalman_update(kalman_predict(belief, params_s), obs, params_s)
        mpm = max_probability_map(belief)
        rng = np.random.default_rng(np.random.SeedSequence(entropy=5, spawn_key=(0,)))
        init = ParticleSet.uniform_init(2000, (8, 8), params_x, rng)
        rng = np.random.default_rng(np.random.SeedSequence(entropy=5, spawn_key=(1,)))
        patterns = (rng.random(2000) >= params_x.phi[0, init.patterns]).astype(int)
        positions = metropolis_ring_move(init.positions,
                                         params_x.gammas()[patterns],
                                         params_x.sigmas()[patterns],
                                         init.positions, 10, rng, (8, 8))
        weights = init.weights * bilinear_lookup(mpm.probs, positions)
        weights /= weights.sum()
        from gazemap.particles import systematic_resample
        idx = systematic_resample(weights, rng)
        expected = density_map(ParticleSet(positions[idx], patterns[idx],
                                           np.full(2000, 1 / 2000)), 1.0, (8, 8))
        assert np.allclose(densities[0], expected)

    def test_tracks_persistent_blob(self):
        # mean density-weighted distance to the blob shrinks over early frames
        t_len, h, w = 12, 64, 64
        stream = blob_saliency_stream(t_len, h, w, seed=6)
        centers = blob_positions(t_len, w, h, seed=6) / 4.0  # working resolution
        config = RunConfig(num_particles=3000, rng_seed=7, kernel_bandwidth=1.0)
        densities, _ = run_attention(stream, SaliencyParams(0.1, 0.05),
                                     AttentionParams(0.5, 0.8, 2.0, 1.5,
                                                     np.array([[0.9, 0.2],
                                                               [0.1, 0.8]])),
                                     config)
        gh, gw = densities[0].shape
        yy, xx = np.mgrid[0:gh, 0:gw]
        dists = []
        for t in range(t_len):
            cx, cy = centers[t]
            d = np.sqrt((xx + 0.5 - cx) ** 2 + (yy + 0.5 - cy) ** 2)
            dists.append(float((densities[t] * d).sum()))
        assert np.mean(dists[6:]) < np.mean(dists[:3])

    def test_empty_stream_raises(self):
        with pytest.raises(ValueError):
            run_attention([], SaliencyParams(0.1, 0.05), small_params())


class TestRunConfig:
    def test_roundtrip_file(self, tmp_path):
        config = RunConfig(num_particles=123, resample_interval=2,
                           quadrature_nodes=64, kernel_bandwidth=1.5, rng_seed=9)
        config.save(tmp_path / "run.cfg")
        loaded = RunConfig.load(tmp_path / "run.cfg")
        assert loaded == config

    def test_defaults(self):
        config = RunConfig()
        assert config.num_particles == 2000
        assert config.resample_interval == 1
        assert config.quadrature_nodes == 256
        assert config.kernel_bandwidth == 2.0
