import numpy as np
import pytest

from tactile_splitter.core import UNIT, ContractError, MultiModalFrame, NormalMap
from tactile_splitter.gelsim import LightingConfig, background_frame
from tactile_splitter.lut import LutTable, build_lut, load_lut, lut_gradients, lut_lookup, save_lut
from tactile_splitter.metrics import angular_mae


def _calib(bench_items):
    return [(it.frame, it.background, it.normals) for it in bench_items if it.role == "train"]


def test_flat_pixel_maps_to_zero_gradient():
    bg = background_frame(LightingConfig.default(noise_sigma=0.0), 1, 1)
    n = NormalMap(np.array([[[0.0, 0.0, 1.0]]]), UNIT)
    t = build_lut([(bg, bg, n)])
    assert len(t) == 1
    np.testing.assert_array_equal(t.grads[0], [0.0, 0.0])
    out = lut_lookup(t, bg, bg).as_unit().normals[0, 0]
    np.testing.assert_allclose(out, [0, 0, 1], atol=1e-7)


def test_bin_stores_mean_gradient():
    bg = MultiModalFrame(np.full((1, 2, 3), 0.2), np.full((1, 2, 1), 0.9))
    frame = bg  # both pixels share one key
    v = np.array([[[-0.3, 0.1, 1.0], [-0.1, -0.3, 1.0]]])
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    t = build_lut([(frame, bg, NormalMap(v, UNIT))])
    assert len(t) == 1 and t.counts[0] == 2
    np.testing.assert_allclose(t.grads[0], [0.2, 0.1], atol=1e-7)


def test_steep_pixels_skipped():
    bg = MultiModalFrame(np.full((1, 2, 3), 0.2), np.full((1, 2, 1), 0.9))
    frame = MultiModalFrame(np.array([[[0.2] * 3, [0.5] * 3]]), np.full((1, 2, 1), 0.9))
    v = np.array([[[0.0, 0.0, 1.0], [0.999, 0.0, 0.04]]])
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    t = build_lut([(frame, bg, NormalMap(v, UNIT))])
    assert t.counts.sum() == 1


def test_exact_training_pixel_reproduces_bin(bench_items):
    samples = _calib(bench_items)
    t = build_lut(samples, channels=4)
    frame, bg, _ = samples[0]
    g = lut_gradients(t, frame, bg)
    delta = (frame.stack() - bg.stack()).reshape(-1, 4).astype(np.float64)
    keys = t.flat_keys(t.quantize(delta))
    index = dict(zip(t.flat_keys(t.keys).tolist(), range(len(t))))
    rows = np.array([index[k] for k in keys.tolist()])
    np.testing.assert_array_equal(g.reshape(-1, 2), t.grads[rows])


def test_unseen_key_takes_nearest_bin():
    t = LutTable(4, 3, np.zeros(3), np.ones(3),
                 keys=[[0, 0, 0], [3, 3, 3]], grads=[[0.1, 0.0], [0.0, -0.2]], counts=[1, 1])
    f = MultiModalFrame(np.array([[[0.1, 0.2, 0.1], [0.9, 0.6, 0.99]]]), np.zeros((1, 2, 1)))
    bg = MultiModalFrame(np.zeros((1, 2, 3)), np.zeros((1, 2, 1)))
    g = lut_gradients(t, f, bg)
    np.testing.assert_allclose(g[0], [[0.1, 0.0], [0.0, -0.2]])


def test_empty_table_rejected(rng):
    t = LutTable(4, 3, np.zeros(3), np.ones(3), np.zeros((0, 3)), np.zeros((0, 2)), np.zeros(0))
    f = MultiModalFrame(rng.random((2, 2, 3)), rng.random((2, 2, 1)))
    with pytest.raises(ContractError):
        lut_lookup(t, f, f)


def test_lookup_deterministic_and_total(bench_items):
    samples = _calib(bench_items)
    t = build_lut(samples, channels=3)
    for it in bench_items:
        a = lut_lookup(t, it.frame, it.background)
        b = lut_lookup(t, it.frame, it.background)
        assert a.normals.tobytes() == b.normals.tobytes()
        assert np.all(np.isfinite(a.normals))


def test_more_bins_never_fit_worse(bench_items):
    samples = _calib(bench_items)
    for channels in (3, 4):
        fits = []
        for bins in (8, 16, 32, 64):
            t = build_lut(samples, channels=channels, bins=bins)
            fits.append(np.mean([angular_mae(lut_lookup(t, f, b), n) for f, b, n in samples]))
        assert all(b <= a + 1e-9 for a, b in zip(fits, fits[1:])), fits


def test_nir_table_beats_rgb_table(bench_items):
    samples = _calib(bench_items)
    held = [it for it in bench_items if it.role != "train"]
    maes = {}
    for ch in (3, 4):
        t = build_lut(samples, channels=ch)
        maes[ch] = np.mean([angular_mae(lut_lookup(t, it.frame, it.background), it.normals)
                            for it in held])
    assert maes[4] <= maes[3]


def test_save_load_round_trip(tmp_path, bench_items):
    t = build_lut(_calib(bench_items), channels=4)
    save_lut(t, tmp_path / "lut")
    back = load_lut(tmp_path / "lut")
    assert back.modality == "rgb+nir" and back.bins == 32
    np.testing.assert_array_equal(back.keys, t.keys)
    np.testing.assert_array_equal(back.counts, t.counts)
    it = bench_items[-1]
    np.testing.assert_allclose(lut_lookup(back, it.frame, it.background).normals,
                               lut_lookup(t, it.frame, it.background).normals, atol=1e-6)
    with pytest.raises(ContractError):
        load_lut(tmp_path / "lut", expect_modality="rgb")


def test_calibration_needs_unit_ground_truth(bench_items):
    it = bench_items[0]
    with pytest.raises(ContractError):
        build_lut([(it.frame, it.background, it.normals.as_encoded())])
