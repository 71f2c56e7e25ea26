"""Probability-of-maximum maps for grids of independent Gaussian beliefs.

For each cell x the quantity computed is

    p(x) = integral  pdf_x(s) * prod_{x' != x} CDF_x'(s)  ds,

the probability that cell x carries the largest value.  The shared product
over all cells is evaluated once per quadrature node in the log domain with a
balanced-tree reduction, and each cell then divides out its own factor.  The
whole computation runs in the log domain, so the ratio pdf/CDF never divides
by a vanishing CDF; cells whose log-CDF falls below ``log_cdf_floor`` zero the
node product outright.

Per-node windows skip cells whose contribution is provably below double
precision (|z| beyond ~9 for the integrand, z above ~8.3 for the log-CDF sum),
which keeps large grids fast without changing any reported digit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .kalman import GaussianMap

# Window thresholds, in standard deviations.  Outside these the skipped terms
# are below 1e-16 per cell (CDF side) or 1e-17 of total mass (pdf side).
_Z_CDF_SKIP = 8.3
_Z_PDF_SKIP = 9.0
_Z_NUMERATOR_DEAD = 11.0  # a cell this far above a node forces product < e-63
_TOT_SKIP = -60.0
_F32_CUTOFF = 8192  # cells; larger grids run window math in float32

# Uniform-grid log-CDF table for the large-grid path: linear interpolation
# error is bounded by (dz^2/8) * max |d^2 log ndtr| ~ 1e-9 per cell.
_LUT_LO, _LUT_HI, _LUT_N = -39.0, 9.0, 1 << 19
_LUT_TABLE = None


def _log_ndtr_lut(z):
    global _LUT_TABLE
    if _LUT_TABLE is None:
        from scipy.special import log_ndtr
        _LUT_TABLE = log_ndtr(np.linspace(_LUT_LO, _LUT_HI, _LUT_N))
    scale = (_LUT_N - 1) / (_LUT_HI - _LUT_LO)
    x = (np.clip(z, _LUT_LO, _LUT_HI).astype(np.float64) - _LUT_LO) * scale
    idx = np.minimum(x.astype(np.intp), _LUT_N - 2)
    frac = x - idx
    return _LUT_TABLE[idx] * (1.0 - frac) + _LUT_TABLE[idx + 1] * frac

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass
class QuadratureConfig:
    """Uniform quadrature over [min mean - span*max std, max mean + span*max std]."""

    num_nodes: int = 256
    span_sigmas: float = 6.0
    log_cdf_floor: float = -745.0
    defect_tolerance: float = 1e-6


@dataclass
class MaxProbMap:
    """Per-cell probability of being the maximum; sums to ~1 over the grid."""

    probs: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def tree_log_sum(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """Balanced binary-tree sum (a tree product in the log domain).

    The operand axis is padded to a power of two with zeros (log 1) and
    halved repeatedly, so the reduction has O(log n) depth and a fixed
    association order independent of how the work would be scheduled.
    """
    values = np.asarray(values, dtype=np.float64)
    values = np.moveaxis(values, axis, -1)
    n = values.shape[-1]
    if n == 0:
        return np.zeros(values.shape[:-1])
    size = 1 << (n - 1).bit_length()
    if size != n:
        pad = np.zeros(values.shape[:-1] + (size - n,))
        values = np.concatenate([values, pad], axis=-1)
    while values.shape[-1] > 1:
        values = values[..., 0::2] + values[..., 1::2]
    return values[..., 0]


def sequential_log_sum(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """Left-to-right accumulation, the reference ordering for tree_log_sum."""
    values = np.moveaxis(np.asarray(values, dtype=np.float64), axis, -1)
    acc = np.zeros(values.shape[:-1])
    for i in range(values.shape[-1]):
        acc = acc + values[..., i]
    return acc


def _quadrature_nodes(means, sds, quad):
    lo = means.min() - quad.span_sigmas * sds.max()
    hi = means.max() + quad.span_sigmas * sds.max()
    if hi <= lo:  # single degenerate spread; widen minimally
        hi = lo + 1.0
    nodes = np.linspace(lo, hi, quad.num_nodes)
    return nodes, nodes[1] - nodes[0]


def max_probability_map(belief: GaussianMap,
                        quad: QuadratureConfig | None = None) -> MaxProbMap:
    """Probability, per cell, that this cell's Gaussian takes the maximum."""
    quad = quad or QuadratureConfig()
    shape = belief.mean.shape
    means = belief.mean.reshape(-1).astype(np.float64)
    sds = np.sqrt(belief.variance.reshape(-1).astype(np.float64))
    n = means.size
    if n == 0:
        raise ValueError("empty belief")
    if n == 1:
        return MaxProbMap(np.ones(shape), {"defect": 0.0, "num_nodes": 0})

    order = np.argsort(means, kind="stable")
    # Above the cutoff the per-window transcendentals run in float32; the
    # (~1e-4) normalization defect this costs is visible in diagnostics, while
    # grids small enough for the 1e-6 normalization contract stay in float64.
    dtype = np.float32 if n > _F32_CUTOFF else np.float64
    mu = means[order].astype(dtype)
    sd = sds[order].astype(dtype)
    inv_sd = (1.0 / sd).astype(dtype)
    sd_max = float(sd.max())
    log_norm = (np.log(sd) + _LOG_SQRT_2PI).astype(dtype)

    nodes, h = _quadrature_nodes(means, sds, quad)
    m = quad.num_nodes
    weights = np.full(m, h)
    weights[0] *= 0.5
    weights[-1] *= 0.5

    # Nodes below s_dead have some cell CDF underflowing: product clamps to 0.
    # Nodes below s_live have a provably negligible product (< e-63).
    s_dead = np.max(mu - 38.7 * sd)
    s_live = np.max(mu - _Z_NUMERATOR_DEAD * sd)

    tot = np.full(m, -np.inf)
    lf_windows: list = [None] * m
    lf_starts = np.zeros(m, dtype=np.intp)
    floor = quad.log_cdf_floor
    for i in range(m):
        s = nodes[i]
        if s < s_live or s < s_dead:
            continue
        j0 = np.searchsorted(mu, s - _Z_CDF_SKIP * sd_max)
        z = (dtype(s) - mu[j0:]) * inv_sd[j0:]
        if dtype is np.float32:
            lf = _log_ndtr_lut(z).astype(np.float32)
        else:
            with np.errstate(divide="ignore"):
                lf = np.log(ndtr(z))
        if lf.size and lf.min() < floor:
            continue  # clamp node product to -inf, integrand row to 0
        lf_windows[i] = lf
        lf_starts[i] = j0
        tot[i] = tree_log_sum(lf)

    probs_sorted = np.zeros(n)
    for i in range(m):
        if tot[i] < _TOT_SKIP:
            continue
        s = nodes[i]
        j0 = np.searchsorted(mu, s - _Z_PDF_SKIP * sd_max)
        j1 = np.searchsorted(mu, s + _Z_PDF_SKIP * sd_max)
        if j1 <= j0:
            continue
        z = (dtype(s) - mu[j0:j1]) * inv_sd[j0:j1]
        lf_full = np.zeros(j1 - j0, dtype=dtype)
        jc = lf_starts[i]
        if jc < j1:
            src = lf_windows[i][: j1 - jc]
            lf_full[max(jc - j0, 0):] = src[max(j0 - jc, 0):]
        arg = -0.5 * z * z - log_norm[j0:j1] - lf_full + dtype(tot[i])
        probs_sorted[j0:j1] += weights[i] * np.exp(arg)

    # Close the right tail beyond the last node analytically: there the
    # product of the other cells' CDFs is within rounding of its value at the
    # last node, so the remaining mass for cell i is ~ (1 - CDF_i(hi)) times
    # that product.  (The left tail is a product of >= 2 CDFs each below
    # CDF(-6 sigma_max/sigma) and is negligible outright.)
    if np.isfinite(tot[-1]):
        s = nodes[-1]
        j0 = np.searchsorted(mu, s - _Z_CDF_SKIP * sd_max)
        z = (dtype(s) - mu[j0:]) * inv_sd[j0:]
        lf = np.zeros(n - j0, dtype=dtype)
        jc = lf_starts[m - 1]
        if lf_windows[m - 1] is not None and jc < n:
            lf[jc - j0:] = lf_windows[m - 1]
        probs_sorted[j0:] += ndtr(-z) * np.exp(dtype(tot[-1]) - lf)

    probs = np.empty(n)
    probs[order] = probs_sorted
    defect = abs(1.0 - probs.sum())
    diagnostics = {
        "defect": float(defect),
        "num_nodes": m,
        "span": (float(nodes[0]), float(nodes[-1])),
        "coarse": bool(defect > quad.defect_tolerance),
    }
    return MaxProbMap(probs.reshape(shape), diagnostics)


def max_probability_map_reference(belief: GaussianMap,
                                  quad: QuadratureConfig | None = None) -> MaxProbMap:
    """Naive reference: re-multiplies the CDF product per cell, O(n) per cell
    per node, straight from the defining integral.  Shipped for benchmarking
    against the shared tree-reduced product; outputs agree to rounding.
    """
    quad = quad or QuadratureConfig()
    shape = belief.mean.shape
    means = belief.mean.reshape(-1).astype(np.float64)
    sds = np.sqrt(belief.variance.reshape(-1).astype(np.float64))
    n = means.size
    if n == 1:
        return MaxProbMap(np.ones(shape), {"defect": 0.0})

    nodes, h = _quadrature_nodes(means, sds, quad)
    weights = np.full(quad.num_nodes, h)
    weights[0] *= 0.5
    weights[-1] *= 0.5

    z = (nodes[:, None] - means[None, :]) / sds[None, :]
    with np.errstate(divide="ignore"):
        lf = np.log(ndtr(z))
    alive = lf.min(axis=1) >= quad.log_cdf_floor
    lpdf = -0.5 * z * z - (np.log(sds) + _LOG_SQRT_2PI)[None, :]

    probs = np.empty(n)
    for j in range(n):
        others = lf[:, :j].sum(axis=1) + lf[:, j + 1:].sum(axis=1)
        integrand = np.where(alive, np.exp(lpdf[:, j] + others), 0.0)
        probs[j] = np.dot(weights, integrand)
        if alive[-1]:  # same analytic right-tail closure as the tree path
            probs[j] += ndtr(-z[-1, j]) * np.exp(others[-1])
    defect = abs(1.0 - probs.sum())
    return MaxProbMap(probs.reshape(shape), {"defect": float(defect)})
