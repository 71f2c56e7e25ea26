"""Synthetic corpora: blob videos, model-sampled observation streams, and
gaze traces.  These drive the oracle tests and give the CLI a self-contained
way to produce demo inputs."""

from __future__ import annotations

import math

import numpy as np

from .kalman import SaliencyParams
from .particles import AttentionParams
from .traces import EyeTrace


def moving_blob_frames(num_frames: int, width: int = 64, height: int = 64,
                       blob_sigma: float = 3.0, orbit_fraction: float = 0.3,
                       brightness: float = 1.0, seed: int = 0) -> np.ndarray:
    """Frames with one bright blob orbiting the frame center on black.

    Returns (T, H, W, 3) float32 in [0, 1]; the blob path is deterministic
    for a fixed seed (the seed only randomizes the starting phase).
    """
    rng = np.random.default_rng(seed)
    phase = rng.uniform(0, 2 * math.pi)
    cx, cy = width / 2.0, height / 2.0
    radius = orbit_fraction * min(width, height)
    yy = np.arange(height, dtype=np.float32)[:, None]
    xx = np.arange(width, dtype=np.float32)[None, :]
    frames = np.zeros((num_frames, height, width, 3), dtype=np.float32)
    for t in range(num_frames):
        angle = phase + 2 * math.pi * t / max(num_frames, 1)
        bx = cx + radius * math.cos(angle)
        by = cy + radius * math.sin(angle)
        blob = np.exp(-((xx - bx) ** 2 + (yy - by) ** 2) / (2 * blob_sigma ** 2))
        frames[t] = (brightness * blob)[..., None]
    return np.clip(frames, 0.0, 1.0)


def blob_positions(num_frames: int, width: int, height: int,
                   orbit_fraction: float = 0.3, seed: int = 0) -> np.ndarray:
    """Centers of the moving_blob_frames blob, shape (T, 2)."""
    rng = np.random.default_rng(seed)
    phase = rng.uniform(0, 2 * math.pi)
    radius = orbit_fraction * min(width, height)
    t = np.arange(num_frames)
    angle = phase + 2 * math.pi * t / max(num_frames, 1)
    return np.stack([width / 2.0 + radius * np.cos(angle),
                     height / 2.0 + radius * np.sin(angle)], axis=1)


def wandering_blob_positions(num_frames: int, width: int, height: int,
                             hop_frames: int = 10, seed: int = 0,
                             margin: float = 4.0) -> np.ndarray:
    """Blob centers teleporting between tile-stratified random waypoints.

    The frame interior is split into a near-square tile grid; each cycle
    visits every tile once in random order, dwelling hop_frames per waypoint.
    Occupancy over a run is therefore uniform across tiles and decorrelates
    after one hop, so temporally misaligned comparisons against the path
    carry no shared spatial prior.
    """
    rng = np.random.default_rng(seed)
    n_way = num_frames // hop_frames + 1
    side = max(int(math.floor(math.sqrt(n_way))), 1)
    tiles = np.array([(i, j) for i in range(side) for j in range(side)])
    order = np.concatenate([rng.permutation(len(tiles))
                            for _ in range(n_way // len(tiles) + 1)])[:n_way]
    tile_w = (width - 2 * margin) / side
    tile_h = (height - 2 * margin) / side
    offsets = rng.random((n_way, 2))
    waypoints = np.stack(
        [margin + (tiles[order][:, 0] + offsets[:, 0]) * tile_w,
         margin + (tiles[order][:, 1] + offsets[:, 1]) * tile_h], axis=1)
    return waypoints[np.arange(num_frames) // hop_frames]


def wandering_blob_frames(num_frames: int, width: int = 64, height: int = 64,
                          blob_sigma: float = 3.0, hop_frames: int = 10,
                          brightness: float = 1.0, seed: int = 0,
                          margin: float = 0.0) -> np.ndarray:
    """Frames with one bright blob on a waypoint-hopping path, (T, H, W, 3)."""
    centers = wandering_blob_positions(num_frames, width, height, hop_frames,
                                       seed, margin)
    yy = np.arange(height, dtype=np.float32)[:, None]
    xx = np.arange(width, dtype=np.float32)[None, :]
    frames = np.zeros((num_frames, height, width, 3), dtype=np.float32)
    for t, (bx, by) in enumerate(centers):
        blob = np.exp(-((xx - bx) ** 2 + (yy - by) ** 2) / (2 * blob_sigma ** 2))
        frames[t] = (brightness * blob)[..., None]
    return np.clip(frames, 0.0, 1.0)


def simulate_saliency_stream(num_frames: int, shape, params: SaliencyParams,
                             seed: int = 0, initial_mean: float = 0.5) -> np.ndarray:
    """Observations from the stochastic-saliency state model itself.

    Each pixel performs an independent Gaussian random walk (process std
    sigma_s2) observed with noise sigma_s1; used as the ground-truth stream
    for parameter-recovery tests.
    """
    rng = np.random.default_rng(seed)
    state = np.full(shape, float(initial_mean))
    frames = np.empty((num_frames,) + tuple(shape))
    for t in range(num_frames):
        state = state + rng.normal(0.0, params.sigma_s2, size=shape)
        frames[t] = state + rng.normal(0.0, params.sigma_s1, size=shape)
    return frames


def sample_pattern_chain(num_steps: int, phi, rng) -> np.ndarray:
    """HMM pattern chain started from the stationary distribution."""
    phi = np.asarray(phi, dtype=np.float64)
    p10, p01 = phi[1, 0], phi[0, 1]
    pi0 = 0.5 if p10 + p01 <= 0 else p01 / (p10 + p01)
    u = np.empty(num_steps, dtype=np.int64)
    u[0] = int(rng.random() >= pi0)
    flips = rng.random(num_steps)
    for t in range(1, num_steps):
        u[t] = int(flips[t] >= phi[0, u[t - 1]])
    return u


def sample_step_lengths(patterns, params: AttentionParams, d_max: float, rng) -> np.ndarray:
    """Step lengths from each pattern's radial profile law.

    The length follows the ring profile exp(-(d - gamma)^2 / 2 sigma^2)
    truncated to [0, d_max], drawn by rejection from the untruncated normal.
    """
    patterns = np.asarray(patterns)
    gammas = params.gammas()[patterns]
    sigmas = params.sigmas()[patterns]
    out = rng.normal(gammas, sigmas)
    bad = (out < 0) | (out > d_max)
    while np.any(bad):
        out[bad] = rng.normal(gammas[bad], sigmas[bad])
        bad = (out < 0) | (out > d_max)
    return out


def sample_trace(num_frames: int, params: AttentionParams, frame_size=(640, 480),
                 rng=None, subject_id: str = "synthetic",
                 start=None, first_frame: int = 1) -> tuple[EyeTrace, np.ndarray]:
    """Gaze trace sampled from the movement model.

    Patterns follow the transition matrix; each step's length follows the
    pattern's radial law and its direction is uniform, re-drawn until the new
    position lands inside the frame.  Returns (trace, patterns).
    """
    rng = rng or np.random.default_rng(0)
    w, h = frame_size
    d_max = math.hypot(w, h)
    patterns = sample_pattern_chain(num_frames, params.phi, rng)
    positions = np.empty((num_frames, 2))
    positions[0] = (np.array([w, h]) / 2.0 if start is None
                    else np.asarray(start, dtype=np.float64))
    for t in range(1, num_frames):
        step = sample_step_lengths(patterns[t:t + 1], params, d_max, rng)[0]
        for _ in range(10_000):
            angle = rng.uniform(0.0, 2.0 * math.pi)
            cand = positions[t - 1] + step * np.array([math.cos(angle), math.sin(angle)])
            if 0 <= cand[0] < w and 0 <= cand[1] < h:
                break
            # no angle can work: the step overshoots every corner; redraw it
            if step > d_max - 1:
                step = sample_step_lengths(patterns[t:t + 1], params, d_max, rng)[0]
        else:
            cand = positions[t - 1]
        positions[t] = cand
    frames = np.arange(first_frame, first_frame + num_frames)
    return EyeTrace(subject_id, frames, positions), patterns


def sample_gaze_from_density(density, num_points: int, rng) -> np.ndarray:
    """Gaze points drawn from a density map (cell multinomial + jitter)."""
    density = np.asarray(density, dtype=np.float64)
    h, w = density.shape
    flat = density.reshape(-1)
    total = flat.sum()
    probs = np.full(flat.shape, 1.0 / flat.size) if total <= 0 else flat / total
    cells = rng.choice(flat.size, size=num_points, p=probs)
    ys, xs = np.divmod(cells, w)
    jitter = rng.random((num_points, 2))
    return np.stack([xs + jitter[:, 0], ys + jitter[:, 1]], axis=1)
