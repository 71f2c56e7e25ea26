#!/usr/bin/env python3
# Deterministic saliency maps from a synthetic clip: feature channels,
# center-surround pyramid, and the final center-weighted map.
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from gazemap.saliency import CHANNEL_NAMES, build_feature_channels, compute_saliency_map
from gazemap.synth import wandering_blob_frames

out_dir = Path(__file__).resolve().parent / "output"
out_dir.mkdir(exist_ok=True)

# a bright blob hopping around a 128x128 frame
frames = wandering_blob_frames(12, 128, 128, blob_sigma=6.0, hop_frames=4, seed=3)

# the twelve contrast channels of one frame (temporal ones need the previous frame)
channels = build_feature_channels(frames[5], frames[4])
fig, axes = plt.subplots(3, 4, figsize=(12, 9))
for ax, name, channel in zip(axes.ravel(), CHANNEL_NAMES, channels):
    ax.imshow(channel, cmap="magma")
    ax.set_title(name, fontsize=9)
    ax.axis("off")
fig.suptitle("feature channels, frame 6")
fig.savefig(out_dir / "saliency_channels.png", dpi=110, bbox_inches="tight")

# saliency maps over the clip (quarter-resolution working grid, values in [0, 1])
prev = None
maps = []
for frame in frames:
    maps.append(compute_saliency_map(frame, prev))
    prev = frame

fig, axes = plt.subplots(2, 6, figsize=(14, 5))
for t, (ax, smap) in enumerate(zip(axes.ravel(), maps)):
    ax.imshow(smap, cmap="viridis", vmin=0, vmax=1)
    ax.set_title(f"t={t + 1}", fontsize=9)
    ax.axis("off")
fig.suptitle("saliency maps (working resolution)")
fig.savefig(out_dir / "saliency_maps.png", dpi=110, bbox_inches="tight")
print(f"wrote {out_dir / 'saliency_channels.png'}")
print(f"wrote {out_dir / 'saliency_maps.png'}")
print(f"map shape {maps[0].shape}, range [{maps[-1].min():.3f}, {maps[-1].max():.3f}]")
