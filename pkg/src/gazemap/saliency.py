"""Deterministic saliency maps from video frames.

Twelve contrast channels (two color opponencies, flicker, luminance contrast,
four oriented edge energies, four signed motion energies) feed dyadic
pyramids; center-surround differences across pyramid scales are sharpened by
a peak-competition normalization and summed into a single conspicuity map at
the working resolution (pyramid scale 2, quarter linear size).  A centered
Gaussian "retinal" weight emphasizes the frame center before the final
rescale to [0, 1].

Fixed kernels (also listed in the README): pyramid smoothing is the 5-tap
binomial [1 4 6 4 1]/16 per axis; luminance contrast is |Y - box3(Y)|;
oriented energies are |cos(a) Gx + sin(a) Gy| from 3x3 Sobel gradients
(scaled by 1/8); motion energies are half-rectified Reichardt correlations
against the previous frame under one-pixel shifts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

CHANNEL_NAMES = (
    "color_rg", "color_by", "flicker", "luminance_contrast",
    "orient_0", "orient_45", "orient_90", "orient_135",
    "motion_right", "motion_left", "motion_down", "motion_up",
)

_BINOMIAL5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0], dtype=np.float32) / 16.0
_LUMINANCE_FLOOR = 0.1


@dataclass
class PyramidConfig:
    num_scales: int = 9
    center_scales: tuple = (2, 3, 4)
    surround_deltas: tuple = (3, 4)

    def __post_init__(self):
        if max(self.center_scales) + max(self.surround_deltas) >= self.num_scales:
            raise ValueError("deepest surround scale exceeds pyramid depth")


@dataclass
class RetinalConfig:
    """Center-weighting strength; sigma is sigma_fraction * min(W, H) of the
    map it is applied to.  None disables the weighting."""

    sigma_fraction: float | None = 0.4


class SaliencyError(ValueError):
    pass


def _as_rgb(frame) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float32)
    if frame.ndim == 2:
        frame = np.stack([frame] * 3, axis=-1)
    if frame.ndim != 3 or frame.shape[-1] != 3:
        raise SaliencyError(f"expected (H, W, 3) or (H, W) frame, got {frame.shape}")
    return frame


def _shift(arr, dy, dx):
    """Shift the trailing two axes with edge replication (no wrap-around)."""
    out = arr
    if dy:
        out = np.roll(out, dy, axis=-2)
        if dy > 0:
            out[..., :dy, :] = out[..., dy:dy + 1, :]
        else:
            out[..., dy:, :] = out[..., dy - 1:dy, :]
    if dx:
        out = np.roll(out, dx, axis=-1)
        if dx > 0:
            out[..., :dx] = out[..., dx:dx + 1]
        else:
            out[..., dx:] = out[..., dx - 1:dx]
    return out


def luminance(frame) -> np.ndarray:
    frame = _as_rgb(frame)
    return frame.mean(axis=2)


def build_feature_channels(frame, prev_frame=None) -> np.ndarray:
    """Twelve per-pixel contrast channels, stacked as (12, H, W) float32.

    Temporal channels (flicker, the four motion energies) are zero maps on
    the first frame.  All channels are finite and non-negative.
    """
    frame = _as_rgb(frame)
    if prev_frame is not None:
        prev_frame = _as_rgb(prev_frame)
        if prev_frame.shape != frame.shape:
            raise SaliencyError(f"frame dimensions differ: {frame.shape} "
                                f"vs {prev_frame.shape}")
    r, g, b = frame[..., 0], frame[..., 1], frame[..., 2]
    lum = frame.mean(axis=2)
    floor = np.maximum(lum, _LUMINANCE_FLOOR)

    channels = np.zeros((12,) + lum.shape, dtype=np.float32)
    channels[0] = np.abs(r - g) / floor
    channels[1] = np.abs(b - 0.5 * (r + g)) / floor

    box = ndimage.uniform_filter(lum, size=3, mode="nearest")
    channels[3] = np.abs(lum - box)

    gx = ndimage.sobel(lum, axis=1, mode="nearest") / 8.0
    gy = ndimage.sobel(lum, axis=0, mode="nearest") / 8.0
    inv_sqrt2 = np.float32(1.0 / math.sqrt(2.0))
    channels[4] = np.abs(gx)
    channels[5] = np.abs(gx + gy) * inv_sqrt2
    channels[6] = np.abs(gy)
    channels[7] = np.abs(gx - gy) * inv_sqrt2

    if prev_frame is not None:
        prev_lum = prev_frame.mean(axis=2)
        channels[2] = np.abs(lum - prev_lum)
        # Half-rectified Reichardt correlators: each responds to motion along
        # one shift direction and vanishes on static inputs.
        pair = np.stack([prev_lum, lum])
        for slot, (dy, dx) in zip(range(8, 12), ((0, 1), (0, -1), (1, 0), (-1, 0))):
            shifted = _shift(pair, dy, dx)
            channels[slot] = np.maximum(lum * shifted[0] - prev_lum * shifted[1], 0.0)
    return channels


def _decimate_axis(arr, axis) -> np.ndarray:
    """Binomial [1 4 6 4 1]/16 smoothing evaluated only at even positions
    (edge-replicated), i.e. smooth-then-subsample without the wasted half."""
    arr = np.moveaxis(arr, axis, -1)
    n = arr.shape[-1]
    m = (n + 1) // 2
    pad = np.concatenate([arr[..., :1], arr[..., :1], arr,
                          arr[..., -1:], arr[..., -1:], arr[..., -1:]], axis=-1)
    acc = pad[..., 0:2 * m:2] + pad[..., 4:4 + 2 * m:2]
    acc += 4.0 * (pad[..., 1:1 + 2 * m:2] + pad[..., 3:3 + 2 * m:2])
    acc += 6.0 * pad[..., 2:2 + 2 * m:2]
    acc *= np.asarray(1.0 / 16.0, dtype=arr.dtype)
    return np.moveaxis(acc, -1, axis)


def _decimate(stack) -> np.ndarray:
    """Binomial smoothing then 2x subsampling along the two trailing axes."""
    return _decimate_axis(_decimate_axis(stack, -2), -1)


def _double_axis(arr, axis) -> np.ndarray:
    """Corner-aligned linear 2x upsampling along one axis."""
    arr = np.moveaxis(arr, axis, -1)
    n = arr.shape[-1]
    out = np.empty(arr.shape[:-1] + (2 * n,), dtype=arr.dtype)
    out[..., 0::2] = arr
    out[..., 1:-1:2] = 0.5 * (arr[..., :-1] + arr[..., 1:])
    out[..., -1] = arr[..., -1]
    return np.moveaxis(out, -1, axis)


def upsample_to(arr, shape) -> np.ndarray:
    """Repeated 2x linear upsampling of the trailing axes, cropped to shape.

    Pyramid levels are corner-aligned ceil-halves of each other, so doubling
    k times and cropping restores any shallower level's exact shape.
    """
    out = np.asarray(arr)
    while out.shape[-2] < shape[0] or out.shape[-1] < shape[1]:
        if out.shape[-2] < shape[0]:
            out = _double_axis(out, -2)
        if out.shape[-1] < shape[1]:
            out = _double_axis(out, -1)
    return out[..., :shape[0], :shape[1]]


def gaussian_pyramid(stack, num_scales: int) -> list:
    """Dyadic pyramid: level k is the input decimated k times."""
    levels = [np.asarray(stack, dtype=np.float32)]
    for _ in range(1, num_scales):
        levels.append(_decimate(levels[-1]))
    return levels


def resize_bilinear(arr, shape) -> np.ndarray:
    """Bilinear resize of the two trailing axes to an exact target shape."""
    arr = np.asarray(arr)
    src_h, src_w = arr.shape[-2:]
    dst_h, dst_w = shape
    if (src_h, src_w) == (dst_h, dst_w):
        return arr.copy()
    rows = (np.arange(dst_h) + 0.5) * (src_h / dst_h) - 0.5
    cols = (np.arange(dst_w) + 0.5) * (src_w / dst_w) - 0.5
    grid = np.meshgrid(rows, cols, indexing="ij")
    coords = np.stack([g.astype(np.float32) for g in grid])
    if arr.ndim == 2:
        return ndimage.map_coordinates(arr, coords, order=1, mode="nearest")
    flat = arr.reshape((-1,) + arr.shape[-2:])
    out = np.stack([ndimage.map_coordinates(p, coords, order=1, mode="nearest")
                    for p in flat])
    return out.reshape(arr.shape[:-2] + (dst_h, dst_w))


def effective_num_scales(shape, config: PyramidConfig) -> int:
    depth = int(math.floor(math.log2(min(shape))))
    num = min(config.num_scales, depth)
    if num < 2:
        raise SaliencyError(f"frame {shape} too small: fewer than 2 pyramid scales")
    return num


def valid_scale_pairs(num_scales: int, config: PyramidConfig) -> list:
    return [(c, s) for c in config.center_scales for s in config.surround_deltas
            if c + s <= num_scales - 1]


def center_surround(pyramid, config: PyramidConfig | None = None) -> list:
    """Across-scale absolute differences |level c - upsampled level c+s| for
    each (center, delta) pair, rescaled to the shallowest center scale."""
    config = config or PyramidConfig()
    num_scales = len(pyramid)
    pairs = valid_scale_pairs(num_scales, config)
    if not pairs:
        raise SaliencyError(f"pyramid of {num_scales} scales cannot support any "
                            f"(center, delta) pair of {config}")
    target = pyramid[min(min(config.center_scales), num_scales - 1)].shape[-2:]
    maps = []
    for c, s in pairs:
        surround = upsample_to(pyramid[c + s], pyramid[c].shape[-2:])
        diff = np.abs(pyramid[c] - surround)
        maps.append(upsample_to(diff, target))
    return maps


def normalize_map(values) -> np.ndarray:
    """Peak-competition normalization.

    The map is scaled to [0, 1] and multiplied by (1 - mbar)^2, where mbar is
    the mean of block-local maxima: maps dominated by one peak keep their
    mass, maps with many rivals of similar height are suppressed.  Constant
    maps (no contrast) come back all zero.
    """
    values = np.asarray(values, dtype=np.float32)
    lo = float(values.min())
    hi = float(values.max())
    if hi <= lo:
        return np.zeros_like(values)
    scaled = (values - lo) / (hi - lo)
    h, w = scaled.shape[-2:]
    block = max(1, min(h, w) // 8)
    pad_h = (-h) % block
    pad_w = (-w) % block
    padded = np.pad(scaled, ((0, pad_h), (0, pad_w)), constant_values=0.0)
    blocks = padded.reshape(padded.shape[0] // block, block,
                            padded.shape[1] // block, block)
    mbar = float(blocks.max(axis=(1, 3)).mean())
    return scaled * np.float32((1.0 - mbar) ** 2)


def retinal_weight(shape, retinal: RetinalConfig) -> np.ndarray:
    h, w = shape
    if retinal.sigma_fraction is None:
        return np.ones((h, w), dtype=np.float32)
    sigma = retinal.sigma_fraction * min(w, h)
    yy = np.arange(h, dtype=np.float32) - (h - 1) / 2.0
    xx = np.arange(w, dtype=np.float32) - (w - 1) / 2.0
    sq = yy[:, None] ** 2 + xx[None, :] ** 2
    return np.exp(-sq / np.float32(2.0 * sigma * sigma))


def compute_saliency_map(frame, prev_frame=None,
                         config: PyramidConfig | None = None,
                         retinal: RetinalConfig | None = None) -> np.ndarray:
    """Saliency map of one frame at the working resolution, values in [0, 1].

    Deterministic for fixed inputs; an all-zero integrated map stays zero,
    otherwise the result is rescaled so its maximum is exactly 1.
    """
    config = config or PyramidConfig()
    retinal = retinal or RetinalConfig()
    channels = build_feature_channels(frame, prev_frame)
    num_scales = effective_num_scales(channels.shape[-2:], config)
    pyramid = gaussian_pyramid(channels, num_scales)

    working_scale = min(min(config.center_scales), num_scales - 1)
    working_shape = pyramid[working_scale].shape[-2:]
    pairs = valid_scale_pairs(num_scales, config)

    conspicuity = np.zeros((channels.shape[0],) + working_shape, dtype=np.float32)
    for c, s in pairs:
        surround = upsample_to(pyramid[c + s], pyramid[c].shape[-2:])
        diff = np.abs(pyramid[c] - surround)
        normalized = np.stack([normalize_map(d) for d in diff])
        conspicuity += upsample_to(normalized, working_shape)

    integrated = np.zeros(working_shape, dtype=np.float32)
    for ch in range(channels.shape[0]):
        integrated += normalize_map(conspicuity[ch])

    integrated *= retinal_weight(working_shape, retinal)
    peak = float(integrated.max())
    if peak > 0:
        integrated /= peak
    return integrated
