"""Command-line pipelines: predict, learn-saliency, learn-traces, evaluate, synth.

Exit codes: 0 success, 2 bad input, 3 numerical failure, 4 config error.
Every command writes a JSON run manifest recording inputs, the config
snapshot, seeds, per-stage timings (ms/frame) and the produced files, so a
run can be reproduced bit-exactly from its manifest.

The environment variable GAZEMAP_THREADS caps BLAS/OpenMP pools; results are
identical for any thread count (all reductions have fixed association order).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, formats
from .attention import RunConfig, iter_attention
from .evaluation import default_radius, evaluate_run
from .kalman import SaliencyParams, em_fit_saliency
from .particles import AttentionParams
from .saliency import PyramidConfig, RetinalConfig, compute_saliency_map, resize_bilinear
from .synth import moving_blob_frames, sample_trace
from .traces import DEFAULT_KAPPA, load_trace_csv, save_trace_csv, viterbi_learn

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_CONFIG = 4


class InputError(Exception):
    pass


class NumericalError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    inputs: dict
    config: dict
    rng_seed: int | None
    outputs: list = field(default_factory=list)
    timings_ms_per_frame: dict = field(default_factory=dict)
    version: str = __version__

    def save(self, path):
        record = {
            "command": self.command, "version": self.version,
            "inputs": self.inputs, "config": self.config,
            "config_hash": formats.config_hash(self.config),
            "rng_seed": self.rng_seed, "outputs": self.outputs,
            "timings_ms_per_frame": self.timings_ms_per_frame,
        }
        Path(path).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
        return record


def _apply_thread_override():
    threads = os.environ.get("GAZEMAP_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)


def _load_frames(path) -> list:
    """Frames from a directory of images or a raw planar RGB file."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"input path does not exist: {path}")
    if path.is_file():
        return list(formats.iter_raw_rgb(path))
    files = formats.list_frame_files(path)
    if not files:
        raise InputError(f"no frames found in {path}")
    return [formats.load_frame(p) for p in files]


def _check_finite(name, array):
    if not np.all(np.isfinite(array)):
        raise NumericalError(f"non-finite values in {name}")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_predict(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    params_s = SaliencyParams.load(args.params_saliency)
    params_x = AttentionParams.load(args.params_attention)
    config = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        config.rng_seed = args.seed
    frames = _load_frames(args.frames)

    pyramid = PyramidConfig()
    retinal = RetinalConfig()
    cfg_snapshot = {"run": config.as_dict(),
                    "sigma_s1": params_s.sigma_s1, "sigma_s2": params_s.sigma_s2,
                    "retinal_sigma_fraction": retinal.sigma_fraction,
                    "num_scales": pyramid.num_scales}
    cfg_hash = formats.config_hash(cfg_snapshot)

    saliency_ms = []
    frame_shape = frames[0].shape[:2]
    outputs = []

    def saliency_stream():
        prev = None
        for t, frame in enumerate(frames, start=1):
            tic = time.perf_counter()
            smap = compute_saliency_map(frame, prev, pyramid, retinal)
            saliency_ms.append((time.perf_counter() - tic) * 1e3)
            _check_finite("saliency map", smap)
            if args.save_saliency:
                # plain 16-byte-header layout for saliency maps
                sal_path = out_dir / f"saliency_{t:06d}.smap"
                formats.write_scalar_map(sal_path, smap, t)
                outputs.append(str(sal_path))
                if args.previews:
                    formats.write_pgm_preview(out_dir / f"saliency_{t:06d}.pgm", smap)
            prev = frame
            yield smap

    stage_ms = {"saliency": saliency_ms, "kalman": [], "maxprob": [],
                "particles": [], "density": []}
    for density, info in iter_attention(saliency_stream(), params_s, params_x, config):
        t = info["frame"]
        _check_finite(f"density map {t}", density)
        for stage, key in (("kalman", "ms_kalman"), ("maxprob", "ms_maxprob"),
                           ("particles", "ms_particles"), ("density", "ms_density")):
            stage_ms[stage].append(info[key])
        exported = resize_bilinear(density, frame_shape)
        total = exported.sum()
        if total > 0:
            exported = exported / total
        out_path = out_dir / f"density_{t:06d}.smap"
        formats.write_scalar_map(out_path, exported, t, formats.ROLE_DENSITY, cfg_hash)
        outputs.append(str(out_path))
        if args.previews:
            formats.write_pgm_preview(out_dir / f"density_{t:06d}.pgm", exported)

    manifest = RunManifest(
        command="predict",
        inputs={"frames": str(args.frames),
                "params_saliency": str(args.params_saliency),
                "params_attention": str(args.params_attention)},
        config=cfg_snapshot, rng_seed=config.rng_seed, outputs=outputs,
        timings_ms_per_frame={k: float(np.mean(v)) for k, v in stage_ms.items() if v})
    manifest.save(out_dir / "manifest.json")
    return EXIT_OK


def cmd_learn_saliency(args) -> int:
    out_path = Path(args.out_params)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    smap_files = []
    in_path = Path(args.frames)
    if in_path.is_dir():
        smap_files = sorted(in_path.glob("*.smap"))
    if smap_files:
        observations = np.stack([formats.read_scalar_map(p)[0] for p in smap_files])
    else:
        frames = _load_frames(args.frames)
        prev = None
        maps = []
        tic = time.perf_counter()
        for frame in frames:
            maps.append(compute_saliency_map(frame, prev))
            prev = frame
        observations = np.stack(maps)
    _check_finite("saliency observations", observations)

    init = SaliencyParams(args.init_sigma_s1, args.init_sigma_s2)
    tic = time.perf_counter()
    params, diagnostics = em_fit_saliency(observations, init,
                                          max_iters=args.max_iters, tol=args.tol)
    fit_ms = (time.perf_counter() - tic) * 1e3 / len(observations)
    params.save(out_path)
    diag_path = out_path.with_suffix(".em.json")
    diag_path.write_text(json.dumps(diagnostics, indent=2) + "\n")

    manifest = RunManifest(
        command="learn-saliency", inputs={"frames": str(args.frames)},
        config={"init_sigma_s1": args.init_sigma_s1, "init_sigma_s2": args.init_sigma_s2,
                "max_iters": args.max_iters, "tol": args.tol},
        rng_seed=None, outputs=[str(out_path), str(diag_path)],
        timings_ms_per_frame={"em": fit_ms})
    manifest.save(out_path.with_suffix(".manifest.json"))
    return EXIT_OK


def cmd_learn_traces(args) -> int:
    out_path = Path(args.out_params)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    traces = load_trace_csv(args.traces)
    if not traces:
        raise InputError(f"{args.traces}: no usable traces")
    tic = time.perf_counter()
    params, diagnostics = viterbi_learn(traces, kappa_x=args.kappa,
                                        frame_size=(args.width, args.height))
    elapsed = (time.perf_counter() - tic) * 1e3
    params.save(out_path)
    log_path = out_path.with_suffix(".viterbi.json")
    log_path.write_text(json.dumps(diagnostics, indent=2) + "\n")
    manifest = RunManifest(
        command="learn-traces", inputs={"traces": str(args.traces)},
        config={"kappa_x": args.kappa, "frame_size": [args.width, args.height]},
        rng_seed=None, outputs=[str(out_path), str(log_path)],
        timings_ms_per_frame={"viterbi": elapsed / max(sum(len(t) for t in traces), 1)})
    manifest.save(out_path.with_suffix(".manifest.json"))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    density_dir = Path(args.densities)
    files = sorted(density_dir.glob("density_*.smap")) or sorted(density_dir.glob("*.smap"))
    if not files:
        raise InputError(f"no density maps in {density_dir}")
    densities, indices = [], []
    for p in files:
        values, t, _, _ = formats.read_scalar_map(p)
        densities.append(values)
        indices.append(t)
    traces = load_trace_csv(args.traces)
    radius = args.radius if args.radius is not None else default_radius(densities[0].shape)
    report = evaluate_run(densities, traces, radius, frame_indices=indices)

    out_csv = Path(args.out_report)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    lines = ["frame,nss"] + [f"{t},{v:.6f}" for t, v in report.per_frame]
    out_csv.write_text("\n".join(lines) + "\n")
    summary = {"mean": report.mean, "stderr": report.stderr,
               "n_frames": len(report.per_frame), "num_subjects": report.num_subjects,
               "radius": report.radius, "degenerate_frames": report.degenerate_frames,
               "config_hash": formats.config_hash({"radius": report.radius})}
    out_json = out_csv.with_suffix(".json")
    out_json.write_text(json.dumps(summary, indent=2) + "\n")
    manifest = RunManifest(
        command="evaluate",
        inputs={"densities": str(args.densities), "traces": str(args.traces)},
        config={"radius": radius}, rng_seed=None,
        outputs=[str(out_csv), str(out_json)])
    manifest.save(out_csv.with_suffix(".manifest.json"))
    return EXIT_OK


def cmd_synth(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    frames = moving_blob_frames(args.frames, args.width, args.height,
                                blob_sigma=args.blob_sigma, seed=args.seed)
    outputs = []
    from PIL import Image
    for t in range(frames.shape[0]):
        img = Image.fromarray((frames[t] * 255).astype(np.uint8))
        frame_path = out_dir / f"frame_{t + 1:06d}.png"
        img.save(frame_path)
        outputs.append(str(frame_path))

    params_x = AttentionParams(args.gamma0, args.sigma0, args.gamma1, args.sigma1,
                               np.array([[args.phi00, 1.0 - args.phi11],
                                         [1.0 - args.phi00, args.phi11]]))
    traces = []
    for j in range(args.subjects):
        trace, _ = sample_trace(args.frames, params_x,
                                frame_size=(args.width, args.height), rng=rng,
                                subject_id=f"s{j:02d}")
        traces.append(trace)
    trace_path = out_dir / "traces.csv"
    save_trace_csv(trace_path, traces)
    outputs.append(str(trace_path))

    params_s = SaliencyParams(args.sigma_s1, args.sigma_s2)
    params_s_path = out_dir / "params_saliency.txt"
    params_s.save(params_s_path)
    params_x_path = out_dir / "params_attention.txt"
    params_x.save(params_x_path)
    outputs += [str(params_s_path), str(params_x_path)]

    config = {k: getattr(args, k) for k in
              ("frames", "width", "height", "blob_sigma", "subjects", "seed",
               "gamma0", "sigma0", "gamma1", "sigma1", "phi00", "phi11",
               "sigma_s1", "sigma_s2")}
    manifest = RunManifest(command="synth", inputs={}, config=config,
                           rng_seed=args.seed, outputs=outputs)
    manifest.save(out_dir / "manifest.json")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gazemap",
                                     description="Gaze density prediction pipelines")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", help="frames -> eye-focusing density maps")
    p.add_argument("frames", help="frame directory or raw planar RGB file")
    p.add_argument("params_saliency")
    p.add_argument("params_attention")
    p.add_argument("out_dir")
    p.add_argument("--config", default=None, help="run config key=value file")
    p.add_argument("--seed", type=int, default=None, help="override rng seed")
    p.add_argument("--save-saliency", action="store_true")
    p.add_argument("--previews", action="store_true", help="also write PGM previews")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("learn-saliency", help="fit observation/process noise by EM")
    p.add_argument("frames", help="frame directory, raw RGB file, or directory of .smap maps")
    p.add_argument("out_params")
    p.add_argument("--init-sigma-s1", type=float, default=0.3)
    p.add_argument("--init-sigma-s2", type=float, default=0.3)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_learn_saliency)

    p = sub.add_parser("learn-traces", help="fit movement parameters from gaze traces")
    p.add_argument("traces", help="CSV with header frame,x,y,subject")
    p.add_argument("out_params")
    p.add_argument("--kappa", type=float, default=DEFAULT_KAPPA,
                   help="step threshold (px) for the initial labeling")
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=480)
    p.set_defaults(func=cmd_learn_traces)

    p = sub.add_parser("evaluate", help="score density maps against gaze traces")
    p.add_argument("densities", help="directory of density .smap files")
    p.add_argument("traces")
    p.add_argument("out_report", help="CSV output path (JSON summary written beside)")
    p.add_argument("--radius", type=float, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("out_dir")
    p.add_argument("--frames", type=int, default=30)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--blob-sigma", type=float, default=3.0)
    p.add_argument("--subjects", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gamma0", type=float, default=3.0)
    p.add_argument("--sigma0", type=float, default=2.0)
    p.add_argument("--gamma1", type=float, default=40.0)
    p.add_argument("--sigma1", type=float, default=15.0)
    p.add_argument("--phi00", type=float, default=0.95)
    p.add_argument("--phi11", type=float, default=0.80)
    p.add_argument("--sigma-s1", type=float, default=0.1)
    p.add_argument("--sigma-s2", type=float, default=0.05)
    p.set_defaults(func=cmd_synth)
    return parser


def _error_record(kind, exc) -> str:
    return json.dumps({"error": kind, "detail": str(exc)})


def main(argv=None) -> int:
    _apply_thread_override()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (InputError, formats.FormatError, FileNotFoundError, NotADirectoryError) as exc:
        print(_error_record("bad_input", exc), file=sys.stderr)
        return EXIT_BAD_INPUT
    except NumericalError as exc:
        print(_error_record("numerical", exc), file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(_error_record("config", exc), file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
