import numpy as np
import pytest

from tactile_splitter import align, benchmark
from tactile_splitter.textconfig import ConfigError


def test_default_benchmark_layout(bench_items):
    roles = [it.role for it in bench_items]
    assert roles.count("train") == 4 and roles.count("val") == 1 and roles.count("test") == 4
    names = {it.name for it in bench_items if it.role == "test"}
    assert names == {"screw_cap", "screw", "hair", "fingerprint"}
    assert all(it.frame.shape == (120, 160) for it in bench_items)
    assert all(it.depth.depth.max() <= 1.5 for it in bench_items)


def test_generation_is_seeded(bench_items):
    again = benchmark.generate_benchmark(seed=0)
    other = benchmark.generate_benchmark(seed=1)
    assert all(a.frame.stack().tobytes() == b.frame.stack().tobytes()
               for a, b in zip(bench_items, again))
    assert bench_items[0].frame.stack().tobytes() != other[0].frame.stack().tobytes()


def test_dataset_round_trip(tmp_path, bench_items):
    benchmark.save_dataset(bench_items[:2], tmp_path / "ds")
    back = benchmark.load_dataset(tmp_path / "ds")
    assert [b.name for b in back] == [a.name for a in bench_items[:2]]
    for a, b in zip(bench_items, back):
        assert a.frame.stack().tobytes() == b.frame.stack().tobytes()
        assert a.scene == b.scene and a.role == b.role
        np.testing.assert_array_equal(a.depth.depth, b.depth.depth)
    assert (tmp_path / "ds" / bench_items[0].name / "rgb.png").is_file()


def test_dataset_index_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        benchmark.load_dataset(tmp_path)
    (tmp_path / "dataset.txt").write_text("a train\nb holdout\n")
    with pytest.raises(ConfigError) as err:
        benchmark.load_dataset(tmp_path)
    assert err.value.lineno == 2


def test_misalignment_homography_magnitude():
    h = benchmark.misalignment_homography(3.0, 0.3)
    center = np.array([[79.5, 59.5]])
    assert np.linalg.norm(align.project(h, center) - center) == pytest.approx(3.0, abs=1e-9)
    corners = np.array([[0, 0], [159, 0], [0, 119], [159, 119]], dtype=float)
    shift = np.linalg.norm(align.project(h, corners) - corners, axis=1)
    assert shift.max() < 3.6


def test_realign_restores_nir(bench_items):
    h = benchmark.misalignment_homography()
    items = bench_items[:2]
    mis = benchmark.misalign(items, h)
    np.testing.assert_array_equal(mis[0].frame.rgb, items[0].frame.rgb)
    coverage = align.valid_mask((120, 160), h)
    corr = benchmark.corner_correspondences(h, seed=0)
    fixed, h_est, valid = benchmark.realign(mis, corr, coverage=coverage)
    assert 0.85 < valid.mean() < 1.0
    err = np.abs(fixed[0].frame.nir[..., 0] - items[0].frame.nir[..., 0])[valid]
    before = np.abs(mis[0].frame.nir[..., 0] - items[0].frame.nir[..., 0])[valid]
    assert err.mean() < 0.5 * before.mean()
    assert fixed[0].mask is valid
