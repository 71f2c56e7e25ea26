#!/usr/bin/env python3
# Probability-of-maximum maps: which cell of a Gaussian belief grid carries
# the largest value?  Quadrature result against a Monte-Carlo check.
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from gazemap.kalman import GaussianMap
from gazemap.maxprob import max_probability_map

out_dir = Path(__file__).resolve().parent / "output"
out_dir.mkdir(exist_ok=True)

# five competing cells: close means, mixed uncertainties
means = np.array([0.55, 0.60, 0.50, 0.62, 0.40])
sds = np.array([0.05, 0.10, 0.02, 0.15, 0.08])
out = max_probability_map(GaussianMap(means, sds ** 2))

rng = np.random.default_rng(0)
draws = rng.normal(means, sds, size=(2_000_000, 5))
mc = np.bincount(np.argmax(draws, axis=1), minlength=5) / 2e6

width = 0.35
x = np.arange(5)
fig, ax = plt.subplots(figsize=(7, 3.5))
ax.bar(x - width / 2, out.probs, width, label="quadrature")
ax.bar(x + width / 2, mc, width, label="Monte Carlo (2M draws)")
ax.set_xticks(x, [f"N({m:.2f}, {s:.2f}²)" for m, s in zip(means, sds)], fontsize=8)
ax.set_ylabel("P(cell is the maximum)")
ax.legend()
fig.savefig(out_dir / "maxprob_bars.png", dpi=110, bbox_inches="tight")

print("quadrature:", np.round(out.probs, 4))
print("monte carlo:", np.round(mc, 4))
print(f"sum defect {out.diagnostics['defect']:.2e}")

# and on a 2-D belief grid: a confident bright patch vs an uncertain rival
yy, xx = np.mgrid[0:24, 0:24]
mean = 0.3 + 0.4 * np.exp(-((xx - 7) ** 2 + (yy - 7) ** 2) / 18.0) \
           + 0.38 * np.exp(-((xx - 17) ** 2 + (yy - 17) ** 2) / 18.0)
var = np.full((24, 24), 0.08 ** 2)
var[12:, 12:] = 0.12 ** 2  # the second patch is noisier
grid_out = max_probability_map(GaussianMap(mean, var))

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
ax1.imshow(mean, cmap="viridis")
ax1.set_title("belief mean")
ax2.imshow(grid_out.probs, cmap="magma")
ax2.set_title("probability of being the maximum")
for ax in (ax1, ax2):
    ax.axis("off")
fig.savefig(out_dir / "maxprob_grid.png", dpi=110, bbox_inches="tight")
print(f"wrote {out_dir / 'maxprob_bars.png'} and {out_dir / 'maxprob_grid.png'}")
