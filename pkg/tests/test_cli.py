import numpy as np
import pytest

from tactile_splitter import cli
from tactile_splitter.align import Correspondences, project, save_correspondences
from tactile_splitter.tensorio import load_tensor


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "ds"
    assert cli.main(["simulate", "--seed", "0", "--out", str(out), "--no-previews"]) == 0
    return out


def test_simulate_default_benchmark(dataset):
    lines = (dataset / "dataset.txt").read_text().split()
    assert lines.count("train") == 4 and lines.count("val") == 1 and lines.count("test") == 4
    assert (dataset / "lighting.txt").is_file()


def test_simulate_same_seed_same_bytes(dataset, tmp_path):
    assert cli.main(["simulate", "--seed", "0", "--out", str(tmp_path / "b"), "--no-previews"]) == 0
    for name in ("sphere_0", "hair"):
        for f in ("frame.tsr", "normals.tsr", "depth.tsr"):
            assert (dataset / name / f).read_bytes() == (tmp_path / "b" / name / f).read_bytes()


def test_simulate_rejects_deep_press(tmp_path, capsys):
    scene = tmp_path / "deep.txt"
    scene.write_text("scene height=120 width=160 pitch=0.1\nsphere radius=5 depth=1.6 cx=80 cy=60\n")
    assert cli.main(["simulate", "--scene", str(scene), "--out", str(tmp_path / "o")]) == 2
    assert ":2:" in capsys.readouterr().err


def test_simulate_custom_scenes_and_lighting(tmp_path):
    (tmp_path / "a.txt").write_text("sphere radius=4 depth=0.5 cx=80 cy=60\n")
    (tmp_path / "b.txt").write_text("sphere radius=3 depth=0.3 cx=70 cy=50\n")
    (tmp_path / "l.txt").write_text("elevation_deg=45\nnoise_sigma=0\n")
    rc = cli.main(["simulate", "--train-scene", str(tmp_path / "a.txt"), "--scene",
                   str(tmp_path / "b.txt"), "--lighting", str(tmp_path / "l.txt"),
                   "--out", str(tmp_path / "o"), "--no-previews"])
    assert rc == 0
    assert (tmp_path / "o" / "dataset.txt").read_text() == "a train\nb test\n"


def test_train_epochs_zero_and_modality(dataset, tmp_path):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("epochs=0\n")
    assert cli.main(["train", str(dataset), "--config", str(cfg), "--mode", "rgb",
                     "--out", str(tmp_path / "t")]) == 0
    from tactile_splitter.pfsnn import init_weights
    np.testing.assert_array_equal(load_tensor(tmp_path / "t" / "model" / "w1.tsr"), init_weights(0)["w1"])
    rc = cli.main(["reconstruct", "--frame", str(dataset / "sphere_val" / "frame.tsr"),
                   "--background", str(dataset / "sphere_val" / "background.tsr"),
                   "--weights", str(tmp_path / "t" / "model"), "--mode", "rgb+nir",
                   "--out", str(tmp_path / "r")])
    assert rc == 2


def test_train_and_reconstruct(dataset, tmp_path):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("epochs=2\n")
    assert cli.main(["train", str(dataset), "--config", str(cfg), "--out", str(tmp_path / "t")]) == 0
    rows = (tmp_path / "t" / "loss.csv").read_text().splitlines()
    assert rows[0] == "epoch,train_l1,val_l1" and len(rows) == 4
    assert float(rows[-1].split(",")[2]) < float(rows[1].split(",")[2])
    rc = cli.main(["reconstruct", "--frame", str(dataset / "sphere_val" / "frame.tsr"),
                   "--background", str(dataset / "sphere_val" / "background.tsr"),
                   "--weights", str(tmp_path / "t" / "model"), "--out", str(tmp_path / "r")])
    assert rc == 0
    d = load_tensor(tmp_path / "r" / "depth.tsr")
    assert d.shape == (120, 160) and d.max() > 0.1
    assert (tmp_path / "r" / "depth.png").is_file() and (tmp_path / "r" / "normals.png").is_file()


def test_reconstruct_missing_weights(dataset, tmp_path):
    rc = cli.main(["reconstruct", "--frame", str(dataset / "sphere_val" / "frame.tsr"),
                   "--background", str(dataset / "sphere_val" / "background.tsr"),
                   "--weights", str(tmp_path / "nope"), "--out", str(tmp_path / "r")])
    assert rc == 2


def test_usage_errors():
    assert cli.main(["bogus"]) == 2
    assert cli.main(["train"]) == 2
    assert cli.main(["simulate", "--threads", "0"]) == 2
    assert cli.main(["train", "/nonexistent/dataset"]) == 2


def test_align_command(tmp_path, rng):
    h = np.array([[1.0, 0.01, 2.0], [-0.01, 1.0, -1.5], [0.0, 0.0, 1.0]])
    src = rng.uniform(0, 150, (40, 2))
    dst = project(h, src)
    dst[:8] = rng.uniform(0, 150, (8, 2))
    save_correspondences(Correspondences(src, dst), tmp_path / "c.txt")
    assert cli.main(["align", str(tmp_path / "c.txt"), "--out", str(tmp_path / "a")]) == 0
    est = load_tensor(tmp_path / "a" / "homography.tsr")
    np.testing.assert_allclose(est, h, atol=1e-4)
    inl = (tmp_path / "a" / "inliers.txt").read_text().split()
    assert inl[8:] == ["1"] * 32


def test_align_failure_exit_code(tmp_path):
    pts = np.stack([np.arange(6.0), np.arange(6.0)], axis=1)
    save_correspondences(Correspondences(pts, pts), tmp_path / "c.txt")
    assert cli.main(["align", str(tmp_path / "c.txt"), "--out", str(tmp_path / "a")]) == 1
