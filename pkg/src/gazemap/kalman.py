"""Pixel-wise Gaussian tracking of perceived saliency.

Each pixel carries an independent scalar state: the perceived (stochastic)
saliency drifts as a Gaussian random walk with process noise ``sigma_s2`` and
is observed through the deterministic saliency map with observation noise
``sigma_s1``.  This module provides the filter recursions, the fixed-interval
smoother, and EM estimation of the two noise parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import formats

SIGMA_FLOOR = 1e-4  # lower clamp for both noise stds during EM


@dataclass
class SaliencyParams:
    """Observation / process noise standard deviations (saliency units)."""

    sigma_s1: float
    sigma_s2: float

    def __post_init__(self):
        if self.sigma_s1 <= 0 or self.sigma_s2 <= 0:
            raise ValueError("noise parameters must be positive")

    def save(self, path):
        formats.save_key_value(path, {"sigma_s1": self.sigma_s1,
                                      "sigma_s2": self.sigma_s2})

    @classmethod
    def load(cls, path):
        pairs = formats.load_key_value(path)
        try:
            return cls(float(pairs["sigma_s1"]), float(pairs["sigma_s2"]))
        except KeyError as exc:
            raise formats.FormatError(f"{path}: missing key {exc}") from exc


@dataclass
class GaussianMap:
    """Per-pixel Gaussian belief: mean map and variance map."""

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.variance = np.asarray(self.variance, dtype=np.float64)
        if self.mean.shape != self.variance.shape:
            raise ValueError("mean and variance shapes differ")
        if not np.all(self.variance > 0):
            raise ValueError("variance must be positive everywhere")


@dataclass
class FilterHistory:
    """Stacked forward-pass quantities, time-major: (T, ...) arrays."""

    predicted_mean: np.ndarray
    predicted_variance: np.ndarray
    posterior_mean: np.ndarray
    posterior_variance: np.ndarray

    def __len__(self):
        return self.posterior_mean.shape[0]


@dataclass
class SmootherOutput:
    """Fixed-interval smoother results plus the per-step lag quantity
    needed by the process-noise M step."""

    means: np.ndarray
    variances: np.ndarray
    lag_variances: np.ndarray  # sigma_sq^2(t|t) per frame


def initial_belief(first_observation, params: SaliencyParams) -> GaussianMap:
    """Default prior: mean = first observation, variance = sigma_s1^2."""
    obs = np.asarray(first_observation, dtype=np.float64)
    return GaussianMap(obs.copy(), np.full_like(obs, params.sigma_s1 ** 2))


def kalman_predict(prior: GaussianMap, params: SaliencyParams) -> GaussianMap:
    """One-step prediction: mean unchanged, variance grows by sigma_s2^2."""
    return GaussianMap(prior.mean.copy(), prior.variance + params.sigma_s2 ** 2)


def kalman_update(predicted: GaussianMap, observation, params: SaliencyParams) -> GaussianMap:
    """Measurement update: precision-weighted mean of prediction and observation."""
    obs = np.asarray(observation, dtype=np.float64)
    if obs.shape != predicted.mean.shape:
        raise ValueError(f"observation shape {obs.shape} does not match "
                         f"belief shape {predicted.mean.shape}")
    r = params.sigma_s1 ** 2
    p = predicted.variance
    gain = p / (r + p)
    mean = (1.0 - gain) * predicted.mean + gain * obs
    variance = r * p / (r + p)
    return GaussianMap(mean, variance)


def kalman_filter(observations, params: SaliencyParams,
                  prior: GaussianMap | None = None) -> FilterHistory:
    """Run the forward pass over a (T, ...) observation stack."""
    obs = np.asarray(observations, dtype=np.float64)
    if obs.shape[0] < 1:
        raise ValueError("need at least one observation")
    if prior is None:
        prior = initial_belief(obs[0], params)
    t_len = obs.shape[0]
    shape = (t_len,) + obs.shape[1:]
    hist = FilterHistory(np.empty(shape), np.empty(shape),
                         np.empty(shape), np.empty(shape))
    belief = prior
    for t in range(t_len):
        predicted = kalman_predict(belief, params)
        belief = kalman_update(predicted, obs[t], params)
        hist.predicted_mean[t] = predicted.mean
        hist.predicted_variance[t] = predicted.variance
        hist.posterior_mean[t] = belief.mean
        hist.posterior_variance[t] = belief.variance
    return hist


def riccati_fixed_point(params: SaliencyParams) -> float:
    """Steady-state posterior variance under constant observations.

    Positive root of  p^2 + p*q - r*q = 0  with r = sigma_s1^2, q = sigma_s2^2.
    """
    r = params.sigma_s1 ** 2
    q = params.sigma_s2 ** 2
    return 0.5 * (-q + np.sqrt(q * q + 4.0 * r * q))


def kalman_smooth(history: FilterHistory, params: SaliencyParams) -> SmootherOutput:
    """Backward pass; at t = T the smoothed belief equals the filtered one."""
    t_len = len(history)
    if t_len == 0:
        raise ValueError("empty filter history")
    q = params.sigma_s2 ** 2
    means = np.empty_like(history.posterior_mean)
    variances = np.empty_like(history.posterior_variance)
    lag = q * history.posterior_variance / (q + history.posterior_variance)
    means[-1] = history.posterior_mean[-1]
    variances[-1] = history.posterior_variance[-1]
    for t in range(t_len - 2, -1, -1):
        lag_t = lag[t]
        means[t] = (lag_t / history.posterior_variance[t] * history.posterior_mean[t]
                    + lag_t / q * means[t + 1])
        variances[t] = lag_t + (lag_t / q) ** 2 * variances[t + 1]
    return SmootherOutput(means, variances, lag)


def innovation_log_likelihood(observations, params: SaliencyParams,
                              prior: GaussianMap) -> float:
    """Observed-data log likelihood from the filter's innovation terms."""
    obs = np.asarray(observations, dtype=np.float64)
    r = params.sigma_s1 ** 2
    q = params.sigma_s2 ** 2
    mean, var = prior.mean, prior.variance
    total = 0.0
    for t in range(obs.shape[0]):
        pvar = var + q
        innov_var = pvar + r
        resid = obs[t] - mean
        total += -0.5 * np.sum(np.log(2.0 * np.pi * innov_var)
                               + resid * resid / innov_var)
        gain = pvar / innov_var
        mean = mean + gain * resid
        var = r * pvar / innov_var
    return float(total)


def em_fit_saliency(observations, init: SaliencyParams,
                    max_iters: int = 100, tol: float = 1e-4):
    """Estimate (sigma_s1, sigma_s2) by EM over a (T, ...) observation stack.

    The t=0 prior (mean = first observation, variance = init.sigma_s1^2) is
    held fixed across iterations so the observed-data likelihood is
    non-decreasing.  Returns (params, diagnostics) where diagnostics records
    the per-iteration parameters and log likelihood.
    """
    obs = np.asarray(observations, dtype=np.float64)
    if obs.shape[0] < 2:
        raise ValueError("EM needs at least two frames")
    prior = initial_belief(obs[0], init)
    params = SaliencyParams(init.sigma_s1, init.sigma_s2)
    trace = []
    for iteration in range(1, max_iters + 1):
        history = kalman_filter(obs, params, prior)
        smooth = kalman_smooth(history, params)
        loglik = innovation_log_likelihood(obs, params, prior)

        resid = obs - smooth.means
        s1_sq = np.mean(resid * resid + smooth.variances)

        q = params.sigma_s2 ** 2
        dmean = smooth.means[1:] - smooth.means[:-1]
        prev_post = history.posterior_variance[:-1]
        shrink = (q - prev_post) / (q + prev_post)
        s2_sq = np.mean(dmean * dmean + smooth.variances[:-1]
                        + shrink * smooth.variances[1:])

        new = SaliencyParams(float(max(np.sqrt(s1_sq), SIGMA_FLOOR)),
                             float(max(np.sqrt(s2_sq), SIGMA_FLOOR)))
        trace.append({"iteration": iteration, "sigma_s1": new.sigma_s1,
                      "sigma_s2": new.sigma_s2, "loglik": loglik})
        rel = max(abs(new.sigma_s1 - params.sigma_s1) / params.sigma_s1,
                  abs(new.sigma_s2 - params.sigma_s2) / params.sigma_s2)
        params = new
        if rel < tol:
            break
    diagnostics = {"iterations": trace, "n_iters": len(trace),
                   "converged": bool(len(trace) < max_iters or rel < tol)}
    return params, diagnostics


# ---------------------------------------------------------------------------
# Disk-backed spill for long sequences (same binary layout as saliency maps)


def save_filter_history(directory, history: FilterHistory, cfg_hash=0):
    from pathlib import Path
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = (("pred", history.predicted_mean, history.predicted_variance),
             ("post", history.posterior_mean, history.posterior_variance))
    for stem, mean, var in names:
        for t in range(len(history)):
            formats.write_scalar_map(directory / f"{stem}_mean_{t:06d}.smap",
                                     mean[t], t, formats.ROLE_MEAN, cfg_hash)
            formats.write_scalar_map(directory / f"{stem}_var_{t:06d}.smap",
                                     var[t], t, formats.ROLE_VARIANCE, cfg_hash)


def load_filter_history(directory) -> FilterHistory:
    from pathlib import Path
    directory = Path(directory)
    stacks = {}
    for stem in ("pred_mean", "pred_var", "post_mean", "post_var"):
        files = sorted(directory.glob(f"{stem}_*.smap"))
        if not files:
            raise formats.FormatError(f"{directory}: no {stem} spill files")
        stacks[stem] = np.stack([formats.read_scalar_map(p)[0] for p in files])
    return FilterHistory(stacks["pred_mean"], stacks["pred_var"],
                         stacks["post_mean"], stacks["post_var"])
