import json

import numpy as np
import pytest
import scipy.sparse as sp

from subtk.io import (
    canonical_json,
    read_csv,
    read_matrix_market,
    read_vector,
    sha256_of,
    write_csv,
    write_json,
    write_matrix_market,
    write_vector,
)


def test_vector_roundtrip(tmp_path):
    arr = np.random.default_rng(0).standard_normal((7, 5))
    path = write_vector(tmp_path / "v.vec", arr)
    data = path.read_bytes()
    assert data[:8] == b"SUBTKVEC"
    back = read_vector(path)
    assert back.shape == (7, 5)
    assert np.array_equal(back, arr)


def test_vector_rejects_bad_files(tmp_path):
    bad = tmp_path / "bad.vec"
    bad.write_bytes(b"NOTAVEC!" + b"\0" * 16)
    with pytest.raises(ValueError):
        read_vector(bad)
    good = write_vector(tmp_path / "g.vec", np.ones(4))
    truncated = tmp_path / "t.vec"
    truncated.write_bytes(good.read_bytes()[:-8])
    with pytest.raises(ValueError):
        read_vector(truncated)


def test_matrix_market_roundtrip(tmp_path):
    A = sp.random(30, 30, density=0.1, random_state=1)
    A = (A + A.T).tocsr()
    path = write_matrix_market(tmp_path / "a.mtx", A, comment="test")
    assert path.read_text().startswith("%%MatrixMarket matrix coordinate real symmetric")
    B = read_matrix_market(path)
    assert abs(A - B).max() < 1e-14


def test_canonical_json_is_byte_stable():
    a = {"b": np.float64(1.5), "a": [np.int64(2), np.bool_(True)], "c": np.array([0.1, 0.2])}
    b = {"c": [0.1, 0.2], "a": [2, True], "b": 1.5}
    assert canonical_json(a) == canonical_json(b)
    assert canonical_json(a).endswith("\n")
    assert sha256_of(a) == sha256_of(b)
    assert json.loads(canonical_json({"x": float("nan")})) == {"x": None}


def test_json_and_csv_files(tmp_path):
    p = write_json(tmp_path / "x.json", {"z": 1, "a": 0.1})
    assert json.loads(p.read_text()) == {"a": 0.1, "z": 1}
    q = write_csv(tmp_path / "x.csv", ["k", "v"], [(1, 0.1 + 0.2), (2, np.float64(1 / 3))])
    header, rows = read_csv(q)
    assert header == ["k", "v"]
    assert float(rows[0][1]) == 0.1 + 0.2
    assert float(rows[1][1]) == 1 / 3
    assert not list(tmp_path.glob(".*.tmp"))
