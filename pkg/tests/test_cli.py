import json

import numpy as np
import pytest

from loopclose import read_feature_file
from loopclose.cli import main
from loopclose.evaluation import write_ground_truth_csv
from loopclose.model_io import load_model

from conftest import texture_image, write_png


@pytest.fixture
def image_dir(tmp_path):
    d = tmp_path / "imgs"
    d.mkdir()
    for i in range(6):
        img = texture_image(50 + i, size=64)
        write_png(d / f"f{i:02d}.png", np.round(img.pixels * 255).astype(np.uint8))
    return d


def run(*argv):
    return main([str(a) for a in argv])


class TestTrainCommands:
    def test_train_vocab(self, tmp_path, image_dir):
        out = tmp_path / "vocab.lcdm"
        assert run("train-codebook", "--kind", "vocab", "--k", 16, "--seed", 7,
                   "--images", image_dir, "--out", out) == 0
        model = load_model(out)
        assert model.k == 16 and model.dim == 128
        manifest = json.loads(out.with_suffix(".manifest.json").read_text())
        assert manifest["seed"] == 7

    def test_train_gmm_with_pca(self, tmp_path, image_dir):
        pca_out = tmp_path / "pca.lcdm"
        assert run("train-pca", "--images", image_dir, "--out-dim", 8,
                   "--out", pca_out) == 0
        gmm_out = tmp_path / "gmm.lcdm"
        assert run("train-codebook", "--kind", "gmm", "--k", 4, "--seed", 3,
                   "--images", image_dir, "--pca", pca_out, "--out", gmm_out) == 0
        model = load_model(gmm_out)
        assert model.k == 4 and model.dim == 8

    def test_subsample_cap(self, tmp_path, image_dir):
        out = tmp_path / "v.lcdm"
        assert run("train-codebook", "--kind", "vocab", "--k", 8, "--seed", 1,
                   "--images", image_dir, "--max-descriptors", 64, "--out", out) == 0
        manifest = json.loads(out.with_suffix(".manifest.json").read_text())
        assert manifest["parameters"]["n_training_descriptors"] == 64


class TestEncode:
    def test_gist_default_dim_512(self, tmp_path, image_dir):
        out = tmp_path / "feat"
        assert run("encode", "--desc", "gist", "--images", image_dir,
                   "--out", out, "--jobs", 1) == 0
        files = sorted(out.glob("*.lcdf"))
        assert len(files) == 6
        layer, image_id, desc = read_feature_file(files[0])
        assert layer == "gist" and desc.dim == 512
        assert image_id == "f00"

    def test_bovw_dim_is_vocab_size(self, tmp_path, image_dir):
        vocab = tmp_path / "v.lcdm"
        run("train-codebook", "--kind", "vocab", "--k", 12, "--seed", 0,
            "--images", image_dir, "--out", vocab)
        out = tmp_path / "bovw"
        assert run("encode", "--desc", "bovw", "--images", image_dir,
                   "--out", out, "--vocab", vocab, "--jobs", 1) == 0
        _, _, desc = read_feature_file(sorted(out.glob("*.lcdf"))[0])
        assert desc.dim == 12

    def test_parallel_jobs_match_serial(self, tmp_path, image_dir):
        out1 = tmp_path / "s"
        out2 = tmp_path / "p"
        run("encode", "--desc", "gist", "--images", image_dir, "--out", out1,
            "--jobs", 1, "--gist-size", 64, "--gist-scales", 2,
            "--gist-orientations", 4, "--gist-grid", 2)
        run("encode", "--desc", "gist", "--images", image_dir, "--out", out2,
            "--jobs", 2, "--gist-size", 64, "--gist-scales", 2,
            "--gist-orientations", 4, "--gist-grid", 2)
        for a, b in zip(sorted(out1.glob("*.lcdf")), sorted(out2.glob("*.lcdf"))):
            assert a.read_bytes() == b.read_bytes()

    def test_missing_model_is_runtime_error(self, tmp_path, image_dir, capsys):
        assert run("encode", "--desc", "bovw", "--images", image_dir,
                   "--out", tmp_path / "x", "--jobs", 1) == 1
        assert "error:" in capsys.readouterr().err


class TestMatchEvalBench:
    @pytest.fixture
    def features(self, tmp_path, image_dir):
        out = tmp_path / "gistfeat"
        run("encode", "--desc", "gist", "--images", image_dir, "--out", out,
            "--jobs", 1, "--gist-size", 64, "--gist-scales", 2,
            "--gist-orientations", 4, "--gist-grid", 2)
        return out

    def test_match_csv(self, tmp_path, features, image_dir):
        out = tmp_path / "matches.csv"
        assert run("match", "--query-features", features, "--ref-features",
                   features, "--threshold", 0.5, "--out", out) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "query_id,matched_id,distance,accepted"
        assert len(lines) == 7
        for line in lines[1:]:
            qid, mid, dist, acc = line.split(",")
            assert qid == mid  # self-retrieval
            assert float(dist) == 0.0
            assert acc == "1"

    def test_import_features(self, tmp_path, features):
        out = tmp_path / "copied"
        assert run("import-features", "--input", features, "--out", out) == 0
        assert len(list(out.glob("*.lcdf"))) == 6

    def test_eval_command(self, tmp_path, features, capsys):
        gt = tmp_path / "gt.csv"
        write_ground_truth_csv(gt, {(f"f{i:02d}", f"f{i:02d}") for i in range(6)})
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            f"output_dir = {tmp_path / 'out'}\ndescriptors = mygist\n"
            f"features.mygist.reference = {features}\n"
            f"features.mygist.query.self = {features}\n"
            f"ground_truth = {gt}\n"
        )
        assert run("eval", "--config", cfg) == 0
        assert "vsself mygist: AP = 1.00000" in capsys.readouterr().out

    def test_eval_rerun_byte_identical(self, tmp_path, features):
        gt = tmp_path / "gt.csv"
        write_ground_truth_csv(gt, {(f"f{i:02d}", f"f{i:02d}") for i in range(6)})
        outputs = []
        for name in ("o1", "o2"):
            cfg = tmp_path / f"{name}.cfg"
            cfg.write_text(
                f"output_dir = {tmp_path / name}\ndescriptors = mygist\nseed = 4\n"
                f"features.mygist.reference = {features}\n"
                f"features.mygist.query.self = {features}\n"
                f"ground_truth = {gt}\n"
            )
            assert run("eval", "--config", cfg) == 0
            outputs.append(
                {
                    p.name: p.read_bytes()
                    for p in sorted((tmp_path / name).glob("*.csv"))
                }
            )
        assert outputs[0] == outputs[1]

    def test_bench_command(self, tmp_path, image_dir, capsys):
        out = tmp_path / "bench.csv"
        assert run("bench", "--images", image_dir, "--desc", "gist",
                   "--repetitions", 1, "--gist-size", 64, "--gist-scales", 2,
                   "--gist-orientations", 4, "--gist-grid", 2, "--out", out) == 0
        text = capsys.readouterr().out
        assert "gist:" in text and "s/image" in text
        lines = out.read_text().splitlines()
        assert lines[0] == "descriptor,mean_seconds_per_image"
        assert float(lines[1].split(",")[1]) > 0


class TestConvertGt:
    def test_text_matrix(self, tmp_path):
        matrix = tmp_path / "m.txt"
        matrix.write_text("0 1 0\n0 0 0\n1 0 1\n")
        out = tmp_path / "gt.csv"
        assert run("convert-gt", "--matrix", matrix, "--out", out) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "query_id,reference_id"
        assert set(lines[1:]) == {"q0,r1", "q2,r0", "q2,r2"}

    def test_with_id_files(self, tmp_path):
        matrix = tmp_path / "m.txt"
        matrix.write_text("1 0\n0 1\n")
        qids = tmp_path / "q.txt"
        qids.write_text("alpha\nbeta\n")
        rids = tmp_path / "r.txt"
        rids.write_text("one\ntwo\n")
        out = tmp_path / "gt.csv"
        assert run("convert-gt", "--matrix", matrix, "--out", out,
                   "--query-ids", qids, "--reference-ids", rids) == 0
        assert set(out.read_text().splitlines()[1:]) == {"alpha,one", "beta,two"}

    def test_npy_matrix(self, tmp_path):
        matrix = tmp_path / "m.npy"
        np.save(matrix, np.eye(3, dtype=np.uint8))
        out = tmp_path / "gt.csv"
        assert run("convert-gt", "--matrix", matrix, "--out", out) == 0
        assert len(out.read_text().splitlines()) == 4

    def test_mat_matrix(self, tmp_path):
        from scipy.io import savemat

        matrix = tmp_path / "m.mat"
        savemat(matrix, {"truth": np.eye(2)})
        out = tmp_path / "gt.csv"
        assert run("convert-gt", "--matrix", matrix, "--out", out) == 0
        assert set(out.read_text().splitlines()[1:]) == {"q0,r0", "q1,r1"}


class TestErrors:
    def test_usage_error_exits_2(self):
        with pytest.raises(SystemExit) as err:
            main(["no-such-command"])
        assert err.value.code == 2

    def test_runtime_error_exits_1(self, tmp_path, capsys):
        assert run("eval", "--config", tmp_path / "missing.cfg") == 1
        assert "error:" in capsys.readouterr().err
