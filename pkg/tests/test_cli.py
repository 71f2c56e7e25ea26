import json

import numpy as np
import pytest
from PIL import Image

from gazemap import formats
from gazemap.cli import main
from gazemap.kalman import SaliencyParams
from gazemap.particles import AttentionParams
from gazemap.synth import moving_blob_frames, simulate_saliency_stream


@pytest.fixture
def corpus(tmp_path):
    """Small synthetic corpus: frames + both parameter files."""
    frames_dir = tmp_path / "frames"
    frames_dir.mkdir()
    frames = moving_blob_frames(3, 64, 64, blob_sigma=3.0, seed=1)
    for t in range(3):
        Image.fromarray((frames[t] * 255).astype(np.uint8)).save(
            frames_dir / f"frame_{t + 1:03d}.png")
    ps = tmp_path / "params_s.txt"
    SaliencyParams(0.1, 0.05).save(ps)
    px = tmp_path / "params_x.txt"
    AttentionParams(1.0, 1.0, 4.0, 2.0,
                    np.array([[0.9, 0.2], [0.1, 0.8]])).save(px)
    return {"frames": frames_dir, "params_s": ps, "params_x": px, "root": tmp_path}


class TestPredict:
    def test_smoke_writes_densities_and_manifest(self, corpus):
        out = corpus["root"] / "out"
        code = main(["predict", str(corpus["frames"]), str(corpus["params_s"]),
                     str(corpus["params_x"]), str(out), "--seed", "3"])
        assert code == 0
        files = sorted(out.glob("density_*.smap"))
        assert len(files) == 3
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["rng_seed"] == 3
        assert set(manifest["timings_ms_per_frame"]) >= {"saliency", "maxprob",
                                                         "particles", "kalman"}
        for name in manifest["outputs"]:
            assert (corpus["root"] / name).exists() or name.startswith(str(out))
        values, t, role, _ = formats.read_scalar_map(files[0])
        assert role == formats.ROLE_DENSITY
        assert values.shape == (64, 64)  # upsampled to frame size
        assert abs(values.sum() - 1.0) < 1e-3

    def test_rerun_same_seed_byte_identical(self, corpus):
        out_a = corpus["root"] / "a"
        out_b = corpus["root"] / "b"
        for out in (out_a, out_b):
            assert main(["predict", str(corpus["frames"]), str(corpus["params_s"]),
                         str(corpus["params_x"]), str(out), "--seed", "9"]) == 0
        for pa, pb in zip(sorted(out_a.glob("*.smap")), sorted(out_b.glob("*.smap"))):
            assert pa.read_bytes() == pb.read_bytes()

    def test_corrupt_frame_names_file(self, corpus, capsys):
        bad = corpus["frames"] / "frame_002.png"
        bad.write_bytes(b"\x89PNG corrupted")
        code = main(["predict", str(corpus["frames"]), str(corpus["params_s"]),
                     str(corpus["params_x"]), str(corpus["root"] / "out")])
        assert code == 2
        record = json.loads(capsys.readouterr().err.strip())
        assert record["error"] == "bad_input"
        assert "frame_002.png" in record["detail"]

    def test_missing_params_file(self, corpus, capsys):
        code = main(["predict", str(corpus["frames"]), "/nonexistent/p.txt",
                     str(corpus["params_x"]), str(corpus["root"] / "out")])
        assert code == 2


class TestLearnSaliency:
    def test_recovers_from_smap_stream(self, tmp_path):
        stream_dir = tmp_path / "maps"
        stream_dir.mkdir()
        obs = simulate_saliency_stream(600, (12, 12), SaliencyParams(0.1, 0.05),
                                       seed=2)
        for t in range(obs.shape[0]):
            formats.write_scalar_map(stream_dir / f"obs_{t:05d}.smap", obs[t], t + 1)
        out = tmp_path / "fit.txt"
        code = main(["learn-saliency", str(stream_dir), str(out)])
        assert code == 0
        fitted = SaliencyParams.load(out)
        assert abs(fitted.sigma_s1 - 0.1) / 0.1 < 0.10
        assert abs(fitted.sigma_s2 - 0.05) / 0.05 < 0.10
        diag = json.loads(out.with_suffix(".em.json").read_text())
        assert diag["n_iters"] >= 1

    def test_single_iteration_cap(self, tmp_path):
        stream_dir = tmp_path / "maps"
        stream_dir.mkdir()
        obs = simulate_saliency_stream(30, (6, 6), SaliencyParams(0.1, 0.05), seed=3)
        for t in range(30):
            formats.write_scalar_map(stream_dir / f"obs_{t:05d}.smap", obs[t], t + 1)
        out = tmp_path / "fit.txt"
        assert main(["learn-saliency", str(stream_dir), str(out),
                     "--max-iters", "1"]) == 0
        diag = json.loads(out.with_suffix(".em.json").read_text())
        assert diag["n_iters"] == 1

    def test_empty_directory_fails(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        code = main(["learn-saliency", str(empty), str(tmp_path / "out.txt")])
        assert code == 2


class TestLearnTraces:
    def test_smoke_recovery(self, tmp_path):
        from gazemap.synth import sample_trace
        from gazemap.traces import save_trace_csv
        true = AttentionParams(3.0, 2.0, 40.0, 15.0,
                               np.array([[0.95, 0.2], [0.05, 0.8]]))
        trace, _ = sample_trace(2000, true, rng=np.random.default_rng(4))
        csv_path = tmp_path / "traces.csv"
        save_trace_csv(csv_path, [trace])
        out = tmp_path / "theta_x.txt"
        assert main(["learn-traces", str(csv_path), str(out)]) == 0
        fitted = AttentionParams.load(out)
        assert abs(fitted.gamma_x1 - 40.0) / 40.0 < 0.15
        assert out.with_suffix(".viterbi.json").exists()

    def test_two_row_trace_converges(self, tmp_path):
        csv_path = tmp_path / "tiny.csv"
        csv_path.write_text("frame,x,y,subject\n1,100,100,s0\n2,104,103,s0\n")
        out = tmp_path / "theta_x.txt"
        assert main(["learn-traces", str(csv_path), str(out)]) == 0
        diag = json.loads(out.with_suffix(".viterbi.json").read_text())
        assert diag["n_iters"] == 1

    def test_missing_column_named(self, tmp_path, capsys):
        csv_path = tmp_path / "bad.csv"
        csv_path.write_text("frame,x,subject\n1,5,s0\n")
        code = main(["learn-traces", str(csv_path), str(tmp_path / "o.txt")])
        assert code == 2
        record = json.loads(capsys.readouterr().err.strip())
        assert "'y'" in record["detail"]


class TestEvaluate:
    def test_report_roundtrip(self, tmp_path):
        dens_dir = tmp_path / "dens"
        dens_dir.mkdir()
        rng = np.random.default_rng(5)
        for t in (1, 2):
            formats.write_scalar_map(dens_dir / f"density_{t:06d}.smap",
                                     rng.random((32, 32)), t, formats.ROLE_DENSITY)
        csv_path = tmp_path / "traces.csv"
        csv_path.write_text("frame,x,y,subject\n1,16,16,s0\n2,8,8,s0\n")
        out = tmp_path / "report.csv"
        assert main(["evaluate", str(dens_dir), str(csv_path), str(out),
                     "--radius", "3"]) == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "frame,nss"
        assert len(lines) == 3
        summary = json.loads(out.with_suffix(".json").read_text())
        assert summary["n_frames"] == 2
        assert summary["radius"] == 3

    def test_no_densities_fails(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        csv_path = tmp_path / "t.csv"
        csv_path.write_text("frame,x,y,subject\n1,1,1,s0\n")
        assert main(["evaluate", str(empty), str(csv_path),
                     str(tmp_path / "r.csv")]) == 2


class TestSynth:
    def test_fixed_seed_identical_corpus(self, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        for out in (out_a, out_b):
            assert main(["synth", str(out), "--frames", "5", "--seed", "7"]) == 0
        for name in ("frame_000001.png", "traces.csv", "params_attention.txt"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_requested_frame_count(self, tmp_path):
        out = tmp_path / "c"
        assert main(["synth", str(out), "--frames", "9"]) == 0
        assert len(list(out.glob("frame_*.png"))) == 9
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["frames"] == 9

    def test_synth_output_feeds_predict_and_evaluate(self, tmp_path):
        corpus = tmp_path / "corpus"
        assert main(["synth", str(corpus), "--frames", "4", "--width", "64",
                     "--height", "64", "--seed", "2"]) == 0
        out = tmp_path / "pred"
        assert main(["predict", str(corpus), str(corpus / "params_saliency.txt"),
                     str(corpus / "params_attention.txt"), str(out)]) == 0
        report = tmp_path / "rep.csv"
        assert main(["evaluate", str(out), str(corpus / "traces.csv"),
                     str(report)]) == 0
        assert report.exists()
