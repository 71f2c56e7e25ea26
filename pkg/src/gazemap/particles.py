"""Eye-focusing state particles: pattern HMM, ring-shaped position moves,
weighting against a probability-of-maximum map, and kernel density readout.

Positions live in continuous coordinates inside the [0, W) x [0, H) grid
rectangle; grid cells are unit squares whose centers sit at integer + 0.5.
The position transition law is a ring ("shifted") Gaussian: the density of a
move from x_prev peaks at distance gamma and has radial width sigma,

    L(x | x_prev, gamma, sigma) ~ exp(-(||x - x_prev|| - gamma)^2 / (2 sigma^2)),

restricted to the rectangle.  Samples are drawn with a Metropolis chain whose
isotropic Gaussian proposal has the same sigma; proposals outside the
rectangle are rejected, which implements the truncated-and-renormalized law.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import formats
from .maxprob import MaxProbMap

DEFAULT_BURN_IN = 10


@dataclass
class AttentionParams:
    """Ring-move parameters per pattern plus the pattern transition matrix.

    ``phi[i, j]`` is the probability of moving to pattern i given previous
    pattern j, so each column sums to one.  Pattern 0 is the short-range
    (passive) state, pattern 1 the exploratory (active) state.
    """

    gamma_x0: float
    sigma_x0: float
    gamma_x1: float
    sigma_x1: float
    phi: np.ndarray

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=np.float64)
        if self.phi.shape != (2, 2):
            raise ValueError("phi must be 2x2")
        if np.any(self.phi < 0) or np.any(self.phi > 1):
            raise ValueError("phi entries must lie in [0, 1]")
        if not np.allclose(self.phi.sum(axis=0), 1.0, atol=1e-9):
            raise ValueError("phi columns must sum to 1")
        if self.sigma_x0 <= 0 or self.sigma_x1 <= 0:
            raise ValueError("sigmas must be positive")
        if self.gamma_x0 < 0 or self.gamma_x1 < 0:
            raise ValueError("gammas must be non-negative")

    def gammas(self) -> np.ndarray:
        return np.array([self.gamma_x0, self.gamma_x1])

    def sigmas(self) -> np.ndarray:
        return np.array([self.sigma_x0, self.sigma_x1])

    def stationary(self) -> np.ndarray:
        """Stationary distribution of the pattern chain."""
        p10 = self.phi[1, 0]
        p01 = self.phi[0, 1]
        if p10 + p01 <= 0:
            return np.array([0.5, 0.5])
        return np.array([p01, p10]) / (p10 + p01)

    def save(self, path):
        formats.save_key_value(path, {
            "gamma_x0": self.gamma_x0, "sigma_x0": self.sigma_x0,
            "gamma_x1": self.gamma_x1, "sigma_x1": self.sigma_x1,
            "phi_00": self.phi[0, 0], "phi_01": self.phi[0, 1],
            "phi_10": self.phi[1, 0], "phi_11": self.phi[1, 1],
        })

    @classmethod
    def load(cls, path):
        pairs = formats.load_key_value(path)
        try:
            phi = np.array([[float(pairs["phi_00"]), float(pairs["phi_01"])],
                            [float(pairs["phi_10"]), float(pairs["phi_11"])]])
            return cls(float(pairs["gamma_x0"]), float(pairs["sigma_x0"]),
                       float(pairs["gamma_x1"]), float(pairs["sigma_x1"]), phi)
        except KeyError as exc:
            raise formats.FormatError(f"{path}: missing key {exc}") from exc


@dataclass
class EyeState:
    """A single particle: continuous position plus binary movement pattern."""

    position: np.ndarray
    pattern: int


@dataclass
class ParticleSet:
    positions: np.ndarray  # (N, 2) as (x, y)
    patterns: np.ndarray   # (N,) in {0, 1}
    weights: np.ndarray    # (N,) non-negative, summing to 1

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.patterns = np.asarray(self.patterns, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        n = self.positions.shape[0]
        if n < 1 or self.positions.shape != (n, 2):
            raise ValueError("positions must be (N, 2) with N >= 1")
        if self.patterns.shape != (n,) or self.weights.shape != (n,):
            raise ValueError("patterns/weights length mismatch")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be non-negative and sum to 1")

    @classmethod
    def uniform_init(cls, n, grid_shape, params: AttentionParams, rng):
        """Uniform positions, patterns from the stationary law, equal weights."""
        h, w = grid_shape
        positions = rng.random((n, 2)) * np.array([w, h])
        patterns = (rng.random(n) >= params.stationary()[0]).astype(np.int64)
        return cls(positions, patterns, np.full(n, 1.0 / n))


def propagate_pattern(pattern_prev: int, phi, rng) -> int:
    """Draw the next pattern: 0 with probability phi[0, prev], else 1."""
    phi = np.asarray(phi)
    return int(rng.random() >= phi[0, pattern_prev])


def metropolis_ring_move(centers, gammas, sigmas, starts, n_steps, rng, grid_shape):
    """Advance M parallel Metropolis chains targeting ring Gaussians.

    centers/starts are (M, 2); gammas/sigmas broadcast to (M,).  Proposals are
    isotropic Gaussians with per-chain std sigma; out-of-rectangle proposals
    are rejected.  Returns the chain states after n_steps.
    """
    h, w = grid_shape
    centers = np.asarray(centers, dtype=np.float64)
    x = np.array(starts, dtype=np.float64, copy=True)
    m = x.shape[0]
    gammas = np.broadcast_to(np.asarray(gammas, dtype=np.float64), (m,))
    sigmas = np.broadcast_to(np.asarray(sigmas, dtype=np.float64), (m,))
    inv2s2 = 1.0 / (2.0 * sigmas * sigmas)

    dist = np.linalg.norm(x - centers, axis=1)
    log_target = -(dist - gammas) ** 2 * inv2s2
    steps = rng.normal(size=(n_steps, m, 2)) * sigmas[None, :, None]
    log_u = np.log(rng.random((n_steps, m)))
    for k in range(n_steps):
        cand = x + steps[k]
        dist = np.linalg.norm(cand - centers, axis=1)
        log_cand = -(dist - gammas) ** 2 * inv2s2
        in_bounds = ((cand[:, 0] >= 0) & (cand[:, 0] < w)
                     & (cand[:, 1] >= 0) & (cand[:, 1] < h))
        accept = in_bounds & (log_u[k] <= log_cand - log_target)
        x[accept] = cand[accept]
        log_target[accept] = log_cand[accept]
    return x


def propagate_position(pos_prev, pattern: int, params: AttentionParams, rng,
                       grid_shape, n_steps: int = DEFAULT_BURN_IN, init=None):
    """Sample a new position from the ring law around pos_prev.

    The chain starts at the previously accepted position (``init``, defaulting
    to pos_prev itself), so repeated calls with a fixed pos_prev continue one
    chain whose stationary law is the truncated ring Gaussian.
    """
    start = pos_prev if init is None else init
    out = metropolis_ring_move(np.asarray(pos_prev, dtype=np.float64)[None, :],
                               params.gammas()[pattern], params.sigmas()[pattern],
                               np.asarray(start, dtype=np.float64)[None, :],
                               n_steps, rng, grid_shape)
    return out[0]


def bilinear_lookup(grid, positions):
    """Bilinear interpolation of a (H, W) grid at continuous (x, y) positions,
    using the four nearest cell centers (centers at integer + 0.5)."""
    grid = np.asarray(grid, dtype=np.float64)
    h, w = grid.shape
    u = np.clip(positions[:, 0] - 0.5, 0.0, w - 1.0)
    v = np.clip(positions[:, 1] - 0.5, 0.0, h - 1.0)
    i0 = np.minimum(u.astype(np.intp), w - 2) if w > 1 else np.zeros(len(u), np.intp)
    j0 = np.minimum(v.astype(np.intp), h - 2) if h > 1 else np.zeros(len(v), np.intp)
    i1 = np.minimum(i0 + 1, w - 1)
    j1 = np.minimum(j0 + 1, h - 1)
    fu = u - i0
    fv = v - j0
    return ((1 - fv) * ((1 - fu) * grid[j0, i0] + fu * grid[j0, i1])
            + fv * ((1 - fu) * grid[j1, i0] + fu * grid[j1, i1]))


def systematic_resample(weights, rng) -> np.ndarray:
    """Systematic (low-variance) resampling; returns selected indices."""
    n = len(weights)
    positions = (np.arange(n) + rng.random()) / n
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0  # guard against round-off
    return np.searchsorted(cumulative, positions)


def step_particle_filter(particles: ParticleSet, maxprob, params: AttentionParams,
                         rng, resample_now: bool,
                         burn_in: int = DEFAULT_BURN_IN,
                         diagnostics: dict | None = None) -> ParticleSet:
    """One filter step: propagate patterns and positions, reweight, resample.

    Propagation draws each particle's pattern from the transition matrix and
    its position from the ring law for that pattern; weights are multiplied by
    the max-probability map interpolated at the new position.  If every weight
    collapses to zero the weights reset to uniform and the event is recorded.
    """
    probs = maxprob.probs if isinstance(maxprob, MaxProbMap) else np.asarray(maxprob)
    grid_shape = probs.shape
    n = len(particles.weights)

    patterns = (rng.random(n) >= params.phi[0, particles.patterns]).astype(np.int64)
    positions = metropolis_ring_move(
        particles.positions, params.gammas()[patterns], params.sigmas()[patterns],
        particles.positions, burn_in, rng, grid_shape)

    weights = particles.weights * bilinear_lookup(probs, positions)
    total = weights.sum()
    if total <= 0.0:
        weights = np.full(n, 1.0 / n)
        if diagnostics is not None:
            diagnostics["degenerate_resets"] = diagnostics.get("degenerate_resets", 0) + 1
    else:
        weights = weights / total

    if resample_now:
        idx = systematic_resample(weights, rng)
        positions = positions[idx]
        patterns = patterns[idx]
        weights = np.full(n, 1.0 / n)
    return ParticleSet(positions, patterns, weights)


def density_map(particles: ParticleSet, kernel_bandwidth: float, grid_shape) -> np.ndarray:
    """Kernel-density estimate of the position marginal on the grid.

    Weights are binned at each particle's cell and smoothed with a Gaussian
    kernel of the given bandwidth (in cells); bandwidth below 1e-9 degenerates
    to a pure histogram.  The returned map is renormalized to sum to exactly 1
    (kernel mass clipped at the border is folded back in).
    """
    h, w = grid_shape
    ix = np.clip(particles.positions[:, 0].astype(np.intp), 0, w - 1)
    iy = np.clip(particles.positions[:, 1].astype(np.intp), 0, h - 1)
    acc = np.zeros((h, w))
    np.add.at(acc, (iy, ix), particles.weights)
    if kernel_bandwidth > 1e-9:
        acc = ndimage.gaussian_filter(acc, kernel_bandwidth, mode="constant")
    total = acc.sum()
    if total > 0:
        acc /= total
    return acc
