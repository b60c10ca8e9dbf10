import numpy as np
import pytest

from vmhd.io import atomic_write_text, pack_ensemble, pack_fields, unpack_ensemble, unpack_fields


def test_atomic_write_leaves_no_temp_files(tmp_path):
    p = atomic_write_text(tmp_path / "sub" / "a.txt", "hello\n")
    assert p.read_text() == "hello\n"
    assert sorted(x.name for x in p.parent.iterdir()) == ["a.txt"]


def test_ensemble_record_layout_and_corruption():
    X, V, w = np.arange(6.0).reshape(2, 3), -np.arange(6.0).reshape(2, 3), np.array([0.5, 0.25])
    data = pack_ensemble(X, V, w)
    assert len(data) == 8 + 4 + 8 + 2 * 7 * 8
    back = unpack_ensemble(data)
    assert all(np.array_equal(a, b) for a, b in zip(back, (X, V, w)))
    with pytest.raises(ValueError, match="truncated"):
        unpack_ensemble(data[:-1])
    with pytest.raises(ValueError, match="magic"):
        unpack_ensemble(b"X" + data[1:])


def test_field_record_round_trip_and_corruption():
    u = np.random.default_rng(0).standard_normal((3, 8, 10))
    b = -u
    data = pack_fields((8, 10), (1.0, 2.0), u, b)
    n, lengths, u2, b2 = unpack_fields(data)
    assert n == (8, 10) and lengths == (1.0, 2.0)
    assert np.array_equal(u, u2) and np.array_equal(b, b2)
    with pytest.raises(ValueError, match="truncated"):
        unpack_fields(data[:-8])
    with pytest.raises(ValueError, match="magic"):
        unpack_fields(b"\0" * len(data))
