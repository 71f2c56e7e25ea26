"""Normalized scan-path saliency scoring of predicted density maps.

A frame's score standardizes the map (subtract its mean, divide by its
standard deviation) and averages, over subjects, the maximum standardized
value inside a circular region around each subject's gaze point.  A score of
1 means gaze fell where the prediction is one standard deviation above
average; constant maps score 0 by convention so batch runs never abort.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_RADIUS = 30.0       # pixels, at 480-line frames
_REFERENCE_MIN_DIM = 480.0


def default_radius(shape) -> float:
    """Gaze-region radius scaled to the map resolution."""
    h, w = shape
    return DEFAULT_RADIUS * min(w, h) / _REFERENCE_MIN_DIM


@dataclass
class NssReport:
    per_frame: list          # (frame, nss) pairs
    mean: float
    stderr: float
    num_subjects: int
    radius: float
    degenerate_frames: int = 0


def nss_frame(density, gaze_points, radius: float) -> float:
    """NSS of one density map against one frame's gaze points.

    Regions are clipped to the map bounds.  A constant map (zero standard
    deviation) scores 0 by the degenerate-case convention.
    """
    density = np.asarray(density, dtype=np.float64)
    if not np.all(np.isfinite(density)):
        raise ValueError("density map contains non-finite values")
    gaze_points = np.atleast_2d(np.asarray(gaze_points, dtype=np.float64))
    if gaze_points.size == 0:
        raise ValueError("need at least one gaze point")
    if density.max() == density.min():  # constant map: degenerate convention
        return 0.0
    mean = density.mean()
    std = density.std()
    if std == 0.0:
        return 0.0
    h, w = density.shape
    total = 0.0
    for x, y in gaze_points:
        x = min(max(x, 0.0), w - 1.0)
        y = min(max(y, 0.0), h - 1.0)
        x0 = max(int(np.floor(x - radius)), 0)
        x1 = min(int(np.ceil(x + radius)), w - 1)
        y0 = max(int(np.floor(y - radius)), 0)
        y1 = min(int(np.ceil(y + radius)), h - 1)
        yy, xx = np.ogrid[y0:y1 + 1, x0:x1 + 1]
        mask = (xx - x) ** 2 + (yy - y) ** 2 <= radius * radius
        region = density[y0:y1 + 1, x0:x1 + 1]
        peak = region[mask].max() if mask.any() else density[int(round(y)), int(round(x))]
        total += (peak - mean) / std
    return total / len(gaze_points)


def evaluate_run(densities, traces, radius: float | None = None,
                 frame_indices=None) -> NssReport:
    """Score a density sequence against gaze traces, frame by frame.

    ``densities[i]`` is matched to ``frame_indices[i]`` (default 1..T).
    Subjects without a sample at a frame are excluded from that frame's
    average; frames with no samples at all are skipped.
    """
    densities = [np.asarray(d, dtype=np.float64) for d in densities]
    if not densities:
        raise ValueError("no density maps")
    if frame_indices is None:
        frame_indices = list(range(1, len(densities) + 1))
    if radius is None:
        radius = default_radius(densities[0].shape)

    gaze_by_frame: dict[int, list] = {}
    subjects = set()
    for trace in traces:
        subjects.add(trace.subject_id)
        for frame, pos in zip(trace.frames, trace.positions):
            gaze_by_frame.setdefault(int(frame), []).append(pos)

    per_frame = []
    degenerate = 0
    for idx, density in zip(frame_indices, densities):
        points = gaze_by_frame.get(int(idx))
        if not points:
            continue
        if density.max() == density.min():
            degenerate += 1
        per_frame.append((int(idx), nss_frame(density, np.array(points), radius)))
    if not per_frame:
        raise ValueError("densities and traces share no frames")
    values = np.array([v for _, v in per_frame])
    stderr = float(values.std(ddof=1) / np.sqrt(len(values))) if len(values) > 1 else 0.0
    return NssReport(per_frame, float(values.mean()), stderr,
                     len(subjects), float(radius), degenerate)
