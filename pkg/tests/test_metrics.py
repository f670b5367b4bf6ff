import math

import numpy as np
import pytest

from tactile_splitter.core import ENCODED01, UNIT, ContractError, DepthMap, NormalMap, encode_normals
from tactile_splitter.metrics import (
    CONDITIONS, PAPER_TABLE2, EvalReport, ItemResult, angular_errors, angular_mae, depth_rmse,
    format_table, write_reports_csv,
)


def const(v, h=4, w=4):
    return NormalMap(np.tile(np.asarray(v, float), (h, w, 1)), UNIT)


def test_identical_maps_zero():
    rng = np.random.default_rng(0)
    v = rng.normal(size=(30, 30, 3))
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    n = NormalMap(v, UNIT)
    assert angular_mae(n, n) < 1e-4
    assert angular_mae(encode_normals(n), n) < 1e-4


def test_orthogonal_ninety():
    assert angular_mae(const((0, 0, 1)), const((0, 1, 0))) == pytest.approx(90.0)


def test_half_and_half_mean():
    a = const((0, 0, 1))
    b = np.tile([0.0, 0.0, 1.0], (4, 4, 1))
    b[:2] = [0.0, 1.0, 0.0]
    assert angular_mae(a, NormalMap(b, UNIT)) == pytest.approx(45.0)


def test_symmetry_and_encoding_invariance():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(2, 10, 10, 3))
    a /= np.linalg.norm(a, axis=-1, keepdims=True)
    b /= np.linalg.norm(b, axis=-1, keepdims=True)
    na, nb = NormalMap(a, UNIT), NormalMap(b, UNIT)
    assert angular_mae(na, nb) == pytest.approx(angular_mae(nb, na), abs=1e-12)
    assert angular_mae(encode_normals(na), nb) == pytest.approx(angular_mae(na, nb), abs=1e-4)
    assert 0 <= angular_errors(na, nb).min() and angular_errors(na, nb).max() <= 180


def test_masks():
    with pytest.raises(ContractError):
        angular_mae(const((0, 0, 1)), const((0, 0, 1)), np.zeros((4, 4), bool))
    with pytest.raises(ContractError):
        angular_mae(const((0, 0, 1)), const((0, 0, 1)), np.ones((3, 4), bool))


def test_depth_rmse_examples():
    z = DepthMap(np.zeros((5, 5)), 0.1)
    assert depth_rmse(z, z) == 0.0
    assert depth_rmse(DepthMap(np.full((5, 5), 0.1), 0.1), z) == pytest.approx(0.1, rel=1e-6)
    with pytest.raises(ContractError):
        depth_rmse(z, DepthMap(np.zeros((5, 5)), 0.05))


def test_depth_rmse_matches_two_pass():
    rng = np.random.default_rng(2)
    a = DepthMap(rng.random((40, 50)), 0.1)
    z = DepthMap(np.zeros((40, 50)), 0.1)
    vals = a.depth.astype(np.float64).ravel()
    total = 0.0
    for v in vals:
        total += v * v
    assert depth_rmse(a, z) == pytest.approx(math.sqrt(total / vals.size), rel=1e-12)


def test_reference_row_values():
    assert PAPER_TABLE2 == {"LUT w/o NIR": 9.292, "LUT w. NIR": 8.731,
                            "PFSNN w/o NIR": 6.057, "PFSNN w. NIR": 5.682}
    assert CONDITIONS == ("LUT w/o NIR", "LUT w. NIR", "PFSNN w/o NIR", "PFSNN w. NIR")


def test_table_and_csv(tmp_path):
    reports = [EvalReport(c, [ItemResult("a", 1.0 + i, 2.0, 0.01), ItemResult("b", 3.0 + i, 4.0, 0.03)])
               for i, c in enumerate(CONDITIONS)]
    text = format_table(reports)
    lines = text.splitlines()
    assert all(c in lines[0] for c in CONDITIONS)
    assert "2.000" in lines[1] and "5.000" in lines[1]
    ref = [ln for ln in lines if ln.startswith("MAE(deg)") and "9.292" in ln]
    assert len(ref) == 1 and "reference" in text
    assert text.index("reference") > text.index("depth RMSE")
    write_reports_csv(reports, tmp_path / "r.csv")
    rows = (tmp_path / "r.csv").read_text().splitlines()
    assert rows[0].startswith("condition,item") and len(rows) == 1 + 4 * 3
