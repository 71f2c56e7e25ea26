"""Learning eye-movement parameters from recorded gaze traces.

The hidden pattern sequence is decoded with an exact Viterbi pass and the
parameters re-fit from the hard assignment (segmental k-means style), which
converges in a handful of iterations.  The per-step emission is the ring
Gaussian evaluated at the observed step length and normalized by the integral
of its radial profile over [0, diag(W, H)], so likelihoods compared across
patterns are proper densities of step length.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import erf

from . import formats
from .particles import AttentionParams

DEFAULT_KAPPA = 15.0            # step-length threshold (px) for initial labels
DEFAULT_FRAME_SIZE = (640, 480)
SIGMA_FLOOR = 0.5               # px; guards degenerate single-valued labelings

# Fallback parameters for patterns that received no assignments at all.
_FALLBACK = dict(gamma_x0=5.0, sigma_x0=3.0, gamma_x1=40.0, sigma_x1=15.0)


@dataclass
class EyeTrace:
    """Per-subject gaze positions indexed by frame number."""

    subject_id: str
    frames: np.ndarray     # (T,) strictly increasing ints
    positions: np.ndarray  # (T, 2) pixel coordinates (x, y)
    sample_rate: float = 30.0

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.int64)
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.positions.shape != (len(self.frames), 2):
            raise ValueError("positions must be (T, 2) aligned with frames")
        if len(self.frames) > 1 and not np.all(np.diff(self.frames) > 0):
            raise ValueError("frame indices must be strictly increasing")

    def __len__(self):
        return len(self.frames)

    def step_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.positions, axis=0), axis=1)


@dataclass
class PatternSequence:
    patterns: np.ndarray  # (T,) in {0, 1}

    def __post_init__(self):
        self.patterns = np.asarray(self.patterns, dtype=np.int64)

    def __len__(self):
        return len(self.patterns)

    def indicators(self) -> np.ndarray:
        """(T, 2) one-hot encoding."""
        out = np.zeros((len(self.patterns), 2))
        out[np.arange(len(self.patterns)), self.patterns] = 1.0
        return out


def radial_profile_norm(gamma: float, sigma: float, d_max: float) -> float:
    """Integral of exp(-(r-gamma)^2 / 2 sigma^2) over [0, d_max]."""
    a = math.sqrt(2.0) * sigma
    return sigma * math.sqrt(math.pi / 2.0) * (erf((d_max - gamma) / a) + erf(gamma / a))


def log_emission(step_lengths, gamma: float, sigma: float, d_max: float):
    """Log density of observed step lengths under one pattern's ring law."""
    d = np.asarray(step_lengths, dtype=np.float64)
    z = radial_profile_norm(gamma, sigma, d_max)
    return -((d - gamma) ** 2) / (2.0 * sigma * sigma) - math.log(z)


def init_patterns(trace: EyeTrace, kappa_x: float = DEFAULT_KAPPA) -> PatternSequence:
    """Threshold labeling: pattern 1 where the step exceeds kappa_x.

    The first element copies the first defined label.
    """
    if len(trace) < 2:
        raise ValueError("trace too short: need at least 2 samples")
    steps = trace.step_lengths()
    u = np.empty(len(trace), dtype=np.int64)
    u[1:] = (steps > kappa_x).astype(np.int64)
    u[0] = u[1]
    return PatternSequence(u)


def viterbi_decode(trace: EyeTrace, params: AttentionParams,
                   frame_size=DEFAULT_FRAME_SIZE) -> PatternSequence:
    """Most likely pattern sequence; exact dynamic program, ties favor 0.

    The first pattern has a uniform prior and no emission (there is no step
    into it); every later pattern u(t) scores the transition from u(t-1) plus
    the emission of the step x(t-1) -> x(t).
    """
    if len(trace) < 2:
        raise ValueError("trace too short: need at least 2 samples")
    d_max = math.hypot(*frame_size)
    steps = trace.step_lengths()
    em = np.stack([log_emission(steps, params.gamma_x0, params.sigma_x0, d_max),
                   log_emission(steps, params.gamma_x1, params.sigma_x1, d_max)], axis=1)
    with np.errstate(divide="ignore"):
        ltr = np.log(params.phi)  # ltr[i, j]: j -> i

    t_len = len(trace)
    score = np.full(2, math.log(0.5))
    back = np.zeros((t_len, 2), dtype=np.int64)
    for t in range(1, t_len):
        cand = score[None, :] + ltr           # cand[i, j]
        back[t] = np.argmax(cand, axis=1)     # ties pick j = 0
        score = cand[np.arange(2), back[t]] + em[t - 1]
    path = np.empty(t_len, dtype=np.int64)
    path[-1] = int(np.argmax(score))          # tie picks 0
    for t in range(t_len - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return PatternSequence(path)


def path_log_posterior(trace: EyeTrace, patterns: PatternSequence,
                       params: AttentionParams, frame_size=DEFAULT_FRAME_SIZE) -> float:
    """Unnormalized log p(U, steps; params) scored by the same terms the
    decoder uses (uniform prior on the first pattern)."""
    d_max = math.hypot(*frame_size)
    steps = trace.step_lengths()
    u = patterns.patterns
    gam = np.array([params.gamma_x0, params.gamma_x1])
    sig = np.array([params.sigma_x0, params.sigma_x1])
    with np.errstate(divide="ignore"):
        total = math.log(0.5) + float(np.log(params.phi[u[1:], u[:-1]]).sum())
    znorm = np.array([radial_profile_norm(gam[i], sig[i], d_max) for i in range(2)])
    dev = (steps - gam[u[1:]]) / sig[u[1:]]
    total += float(np.sum(-0.5 * dev * dev - np.log(znorm[u[1:]])))
    return total


def update_params(traces, patterns_list, prev: AttentionParams,
                  sigma_floor: float = SIGMA_FLOOR) -> AttentionParams:
    """Closed-form refit from hard assignments, pooled across traces.

    Per pattern: gamma is the mean assigned step length and sigma^2 is half
    the mean squared deviation from it (the two components of the planar
    displacement share the spread).  Transitions get one pseudo-count per
    cell, so decoded sequences can always leave a pattern.  Patterns with no
    assigned steps keep their previous (gamma, sigma).
    """
    if isinstance(traces, EyeTrace):
        traces, patterns_list = [traces], [patterns_list]
    sum_d = np.zeros(2)
    sum_sq = np.zeros(2)
    count = np.zeros(2)
    trans = np.zeros((2, 2))
    per_trace = []
    for trace, patterns in zip(traces, patterns_list):
        steps = trace.step_lengths()
        u = patterns.patterns
        if len(u) != len(trace):
            raise ValueError("pattern sequence not aligned with trace")
        labels = u[1:]
        per_trace.append((steps, labels))
        for i in (0, 1):
            sel = labels == i
            count[i] += sel.sum()
            sum_d[i] += steps[sel].sum()
        np.add.at(trans, (u[1:], u[:-1]), 1.0)

    gammas = np.array([prev.gamma_x0, prev.gamma_x1])
    sigmas = np.array([prev.sigma_x0, prev.sigma_x1])
    for i in (0, 1):
        if count[i] > 0:
            gammas[i] = sum_d[i] / count[i]
    for steps, labels in per_trace:
        for i in (0, 1):
            sel = labels == i
            sum_sq[i] += np.sum((steps[sel] - gammas[i]) ** 2)
    for i in (0, 1):
        if count[i] > 0:
            sigmas[i] = max(math.sqrt(sum_sq[i] / (2.0 * count[i])), sigma_floor)

    phi = (trans + 1.0) / (trans.sum(axis=0, keepdims=True) + 2.0)
    return AttentionParams(gammas[0], sigmas[0], gammas[1], sigmas[1], phi)


def viterbi_learn(traces, kappa_x: float = DEFAULT_KAPPA, max_iters: int = 50,
                  frame_size=DEFAULT_FRAME_SIZE):
    """Alternate decoding and refitting until the labels stop changing.

    Returns (params, diagnostics); diagnostics records the per-iteration
    joint objective and the number of label flips.
    """
    traces = [traces] if isinstance(traces, EyeTrace) else list(traces)
    usable = [t for t in traces if len(t) >= 2]
    if not usable:
        raise ValueError("no trace long enough to learn from (need >= 2 samples)")
    fallback = AttentionParams(phi=np.full((2, 2), 0.5), **_FALLBACK)
    patterns = [init_patterns(t, kappa_x) for t in usable]
    params = update_params(usable, patterns, fallback)
    history = []
    for iteration in range(1, max_iters + 1):
        decoded = [viterbi_decode(t, params, frame_size) for t in usable]
        flips = sum(int(np.sum(a.patterns != b.patterns))
                    for a, b in zip(decoded, patterns))
        objective = sum(path_log_posterior(t, u, params, frame_size)
                        for t, u in zip(usable, decoded))
        history.append({"iteration": iteration, "objective": objective,
                        "label_flips": flips})
        patterns = decoded
        params = update_params(usable, patterns, params)
        if flips == 0:
            break
    diagnostics = {"iterations": history, "n_iters": len(history),
                   "converged": history[-1]["label_flips"] == 0}
    return params, diagnostics


# ---------------------------------------------------------------------------
# Trace CSV files: header frame,x,y,subject; one file may hold many subjects.

_REQUIRED_COLUMNS = ("frame", "x", "y", "subject")


def load_trace_csv(path, split_gaps: bool = True, frame_size=None,
                   sample_rate: float = 30.0) -> list[EyeTrace]:
    """Load gaze traces grouped by subject.

    Rows are sorted by frame per subject; duplicate frames keep the first
    sample.  Out-of-bounds rows (when frame_size is given) are dropped, and
    the resulting gaps split a subject's trace into separate segments rather
    than interpolating across them.
    """
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        for column in _REQUIRED_COLUMNS:
            if column not in header:
                raise formats.FormatError(f"{path}: missing column '{column}'")
        rows = []
        for lineno, row in enumerate(reader, 2):
            try:
                rows.append((row["subject"], int(float(row["frame"])),
                             float(row["x"]), float(row["y"])))
            except (TypeError, ValueError) as exc:
                raise formats.FormatError(f"{path}:{lineno}: bad row ({exc})") from exc

    by_subject: dict[str, list] = {}
    for subject, frame, x, y in rows:
        by_subject.setdefault(subject, []).append((frame, x, y))

    traces = []
    for subject in sorted(by_subject):
        samples = sorted(by_subject[subject], key=lambda r: r[0])
        deduped = []
        for frame, x, y in samples:
            if deduped and deduped[-1][0] == frame:
                continue
            if frame_size is not None and not (0 <= x < frame_size[0]
                                               and 0 <= y < frame_size[1]):
                deduped.append((frame, None, None))  # gap marker
                continue
            deduped.append((frame, x, y))
        segment: list = []
        segments = [segment]
        prev_frame = None
        for frame, x, y in deduped:
            gap = x is None or (split_gaps and prev_frame is not None
                                and frame - prev_frame > 1)
            if gap and segment:
                segment = []
                segments.append(segment)
            if x is not None:
                segment.append((frame, x, y))
                prev_frame = frame
            else:
                prev_frame = None
        for seg in segments:
            if seg:
                arr = np.array(seg, dtype=np.float64)
                traces.append(EyeTrace(subject, arr[:, 0].astype(np.int64),
                                       arr[:, 1:3], sample_rate))
    return traces


def save_trace_csv(path, traces):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(_REQUIRED_COLUMNS)
        for trace in traces:
            for frame, (x, y) in zip(trace.frames, trace.positions):
                writer.writerow([int(frame), f"{x:.4f}", f"{y:.4f}", trace.subject_id])
