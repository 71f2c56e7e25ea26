"""Frame-by-frame attention pipeline: Gaussian belief tracking, probability-of-
maximum, particle propagation, and density readout."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import formats
from .kalman import GaussianMap, SaliencyParams, initial_belief, kalman_predict, kalman_update
from .maxprob import QuadratureConfig, max_probability_map
from .particles import AttentionParams, ParticleSet, density_map, step_particle_filter


@dataclass
class RunConfig:
    num_particles: int = 2000
    resample_interval: int = 1
    quadrature_nodes: int = 256
    kernel_bandwidth: float = 2.0
    rng_seed: int = 0
    metropolis_burn_in: int = 10

    def save(self, path):
        formats.save_key_value(path, {
            "N": self.num_particles,
            "resample_interval": self.resample_interval,
            "quadrature_nodes": self.quadrature_nodes,
            "kernel_bandwidth": self.kernel_bandwidth,
            "rng_seed": self.rng_seed,
            "metropolis_burn_in": self.metropolis_burn_in,
        })

    @classmethod
    def load(cls, path):
        pairs = formats.load_key_value(path)
        defaults = cls()
        return cls(
            num_particles=int(pairs.get("N", defaults.num_particles)),
            resample_interval=int(pairs.get("resample_interval", defaults.resample_interval)),
            quadrature_nodes=int(pairs.get("quadrature_nodes", defaults.quadrature_nodes)),
            kernel_bandwidth=float(pairs.get("kernel_bandwidth", defaults.kernel_bandwidth)),
            rng_seed=int(pairs.get("rng_seed", defaults.rng_seed)),
            metropolis_burn_in=int(pairs.get("metropolis_burn_in", defaults.metropolis_burn_in)),
        )

    def as_dict(self) -> dict:
        return {"N": self.num_particles, "resample_interval": self.resample_interval,
                "quadrature_nodes": self.quadrature_nodes,
                "kernel_bandwidth": self.kernel_bandwidth, "rng_seed": self.rng_seed,
                "metropolis_burn_in": self.metropolis_burn_in}


def _frame_rng(seed: int, frame: int):
    """Independent, schedule-free stream per (seed, frame); frame 0 seeds the
    initial particle draw."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(frame,)))


def iter_attention(saliency_stream, params_s: SaliencyParams,
                   params_x: AttentionParams, config: RunConfig | None = None):
    """Yield (density, frame_info) per frame of a saliency-map stream.

    Per frame: Kalman predict/update of the stochastic-saliency belief, then
    the probability-of-maximum map, one particle-filter step, and a kernel
    density readout.  Deterministic for a fixed config.rng_seed.
    """
    config = config or RunConfig()
    quad = QuadratureConfig(num_nodes=config.quadrature_nodes)
    belief: GaussianMap | None = None
    particles: ParticleSet | None = None
    for t, observation in enumerate(saliency_stream, start=1):
        observation = np.asarray(observation, dtype=np.float64)
        info = {"frame": t}
        if belief is None:
            belief = initial_belief(observation, params_s)
            particles = ParticleSet.uniform_init(
                config.num_particles, observation.shape, params_x,
                _frame_rng(config.rng_seed, 0))

        tic = time.perf_counter()
        belief = kalman_update(kalman_predict(belief, params_s), observation, params_s)
        info["ms_kalman"] = (time.perf_counter() - tic) * 1e3

        tic = time.perf_counter()
        mpm = max_probability_map(belief, quad)
        info["ms_maxprob"] = (time.perf_counter() - tic) * 1e3
        info["defect"] = mpm.diagnostics["defect"]

        tic = time.perf_counter()
        resample_now = (t % config.resample_interval) == 0
        particles = step_particle_filter(particles, mpm, params_x,
                                         _frame_rng(config.rng_seed, t),
                                         resample_now,
                                         burn_in=config.metropolis_burn_in,
                                         diagnostics=info)
        info["ms_particles"] = (time.perf_counter() - tic) * 1e3

        tic = time.perf_counter()
        density = density_map(particles, config.kernel_bandwidth, observation.shape)
        info["ms_density"] = (time.perf_counter() - tic) * 1e3
        yield density, info


def run_attention(saliency_stream, params_s: SaliencyParams,
                  params_x: AttentionParams, config: RunConfig | None = None):
    """Run the attention pipeline over a whole stream.

    Returns (densities, diagnostics): a (T, H, W) stack of eye-focusing
    density maps and the per-frame diagnostic records.
    """
    densities = []
    diag = []
    for density, info in iter_attention(saliency_stream, params_s, params_x, config):
        densities.append(density)
        diag.append(info)
    if not densities:
        raise ValueError("empty saliency stream")
    return np.stack(densities), diag
