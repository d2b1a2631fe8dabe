import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from frt_reach.grid import ScalarField, make_grid
from frt_reach.io import (FieldFormatError, load_field, read_manifest, save_field,
                          write_contour_csv, write_field_csv, write_manifest, write_profile_csv,
                          write_trajectory_csv)
from frt_reach.safety_sim import Trajectory

axis = st.tuples(st.floats(-10, 10), st.floats(0.1, 10), st.integers(2, 6), st.booleans())


@st.composite
def fields(draw):
    axes = draw(st.lists(axis, min_size=1, max_size=3))
    g = make_grid([{"min": lo, "max": lo + w, "count": n, "periodic": p} for lo, w, n, p in axes])
    vals = draw(arrays(np.float64, g.shape, elements=st.floats(allow_nan=True, allow_infinity=True)))
    return ScalarField(g, vals)


@given(fields())
def test_hjf1_round_trip_is_bit_identical(tmp_path_factory, f):
    path = tmp_path_factory.mktemp("hjf") / "f.hjf"
    save_field(path, f)
    g = load_field(path)
    assert g.grid == f.grid
    assert g.values.tobytes() == f.values.tobytes()


def test_hjf1_layout(tmp_path):
    # hand-assembled file: magic, u32 ndim, per-axis (u64 count, f64 min, f64 max, u8 periodic), values
    raw = b"HJF1" + struct.pack("<I", 2)
    raw += struct.pack("<QddB", 2, 0.0, 1.0, 0) + struct.pack("<QddB", 3, -1.0, 2.0, 1)
    raw += struct.pack("<6d", 0, 1, 2, 3, 4, 5)
    p = tmp_path / "hand.hjf"
    p.write_bytes(raw)
    f = load_field(p)
    assert f.grid.shape == (2, 3) and f.grid.axes[1].periodic
    np.testing.assert_array_equal(f.values, [[0, 1, 2], [3, 4, 5]])
    save_field(tmp_path / "again.hjf", f)
    assert (tmp_path / "again.hjf").read_bytes() == raw


@pytest.mark.parametrize("mutate", [
    lambda b: b"HJF2" + b[4:],
    lambda b: b[:-8],
    lambda b: b[:20],
])
def test_hjf1_rejects_damaged_files(tmp_path, mutate):
    f = ScalarField(make_grid([{"min": 0, "max": 1, "count": 4}]), np.arange(4.0))
    p = save_field(tmp_path / "f.hjf", f)
    p.write_bytes(mutate(p.read_bytes()))
    with pytest.raises(FieldFormatError):
        load_field(p)


def test_csv_exports(tmp_path):
    f = ScalarField(make_grid([{"min": 0, "max": 1, "count": 2}] * 2), np.arange(4.0))
    lines = write_field_csv(tmp_path / "f.csv", f).read_text().splitlines()
    assert lines[0] == "x1,x2,value" and lines[2] == "0.0,1.0,1.0"
    tr = Trajectory(np.array([0.0, 0.01]), np.zeros((2, 2)), np.ones((2, 1)), np.zeros((2, 1)),
                    np.array([0.5, 0.4]), np.array([0.1, 0.2]), np.array([True, False]))
    lines = write_trajectory_csv(tmp_path / "t.csv", tr).read_text().splitlines()
    assert lines[0] == "t,x1,x2,u,d,h,lhs,feasible"
    assert lines[2].endswith(",0")
    lines = write_contour_csv(tmp_path / "c.csv", [np.zeros((3, 2)), np.ones((2, 2))]).read_text().splitlines()
    assert lines[0] == "line,x1,x2" and len(lines) == 6 and lines[-1].startswith("1,")
    lines = write_profile_csv(tmp_path / "p.csv", np.array([0.0, 1.0]), {"frt": np.array([2.0, 3.0])}).read_text().splitlines()
    assert lines == ["x,frt", "0.0,2.0", "1.0,3.0"]


def test_manifest_round_trip(tmp_path):
    entries = {"name": "run", "iterations": 12, "verdict": "fixed_point", "formula": "a=b"}
    p = write_manifest(tmp_path / "m.txt", entries)
    assert read_manifest(p) == {k: str(v) for k, v in entries.items()}
    with pytest.raises(ValueError):
        write_manifest(tmp_path / "bad.txt", {"a=b": 1})
