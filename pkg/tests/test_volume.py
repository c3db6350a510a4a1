import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tubeseg.volume import (FormatError, InstanceLabeling, MaskTube, VolumeDims, coordinate_grid,
                            format_labeling, format_tube, parse_labeling, parse_tube, rle_decode,
                            rle_encode, tube_iou)


def test_coordinate_grid_singleton_axes():
    grid = coordinate_grid(VolumeDims(1, 1, 1))
    assert grid.tolist() == [[0.0, 0.0, 0.0]]


def test_coordinate_grid_last_pixel_of_cube():
    grid = coordinate_grid(VolumeDims(2, 2, 2))
    assert grid[-1].tolist() == [1.0, 1.0, 1.0]


def test_coordinate_grid_interior_pixel():
    dims = VolumeDims(3, 4, 5)
    x, y, t = coordinate_grid(dims)[dims.ravel(1, 2, 2)]
    assert (x, y, t) == pytest.approx((0.5, 2 / 3, 0.5), abs=1e-15)


@given(st.integers(1, 5), st.integers(1, 6), st.integers(1, 6))
def test_coordinates_in_unit_cube_and_ravel_roundtrip(t, h, w):
    dims = VolumeDims(t, h, w)
    grid = coordinate_grid(dims)
    assert grid.shape == (dims.n_pixels, 3)
    assert grid.min() >= 0 and grid.max() <= 1
    for i in range(dims.n_pixels):
        assert dims.ravel(*dims.unravel(i)) == i


def test_invalid_dims():
    with pytest.raises(ValueError):
        VolumeDims(0, 4, 4)


def _cube(dims, t0, r0, c0, size=2):
    m = np.zeros(dims.shape, dtype=bool)
    m[t0:t0 + size, r0:r0 + size, c0:c0 + size] = True
    return MaskTube.from_dense(dims, m)


def test_tube_iou_examples():
    dims = VolumeDims(4, 4, 4)
    a = _cube(dims, 0, 0, 0)
    assert tube_iou(a, a) == 1.0
    assert tube_iou(a, _cube(dims, 2, 2, 2)) == 0.0
    # shifted by one column: 4 of 8 pixels shared, union 12
    b = _cube(dims, 0, 0, 1)
    inter = np.count_nonzero(a.dense() & b.dense())
    union = np.count_nonzero(a.dense() | b.dense())
    assert (inter, union) == (4, 12)
    assert tube_iou(a, b) == pytest.approx(1 / 3)


def test_tube_iou_dims_mismatch():
    with pytest.raises(ValueError):
        tube_iou(MaskTube.empty(VolumeDims(1, 2, 2)), MaskTube.empty(VolumeDims(1, 2, 3)))


def test_rle_examples():
    assert rle_encode(np.zeros(5, bool)).shape == (0, 2)
    assert rle_encode(np.ones(10, bool)).tolist() == [[0, 10]]
    mask = np.zeros(12, bool)
    mask[[2, 3, 4, 9]] = True
    assert rle_encode(mask).tolist() == [[2, 3], [9, 1]]


@given(arrays(np.bool_, st.integers(0, 200)))
def test_rle_roundtrip(flat):
    runs = rle_encode(flat)
    assert np.array_equal(rle_decode(runs, flat.size), flat)
    # canonical: every run non-empty and separated by a gap
    if len(runs) > 1:
        assert np.all(runs[1:, 0] > runs[:-1].sum(axis=1))


@pytest.mark.parametrize("runs", [
    [[3, 2], [1, 1]],      # unsorted
    [[0, 2], [2, 1]],      # adjacent, not canonical
    [[0, 3], [2, 2]],      # overlapping
    [[0, 0]],              # empty run
    [[9, 3]],              # past the end
])
def test_bad_runs_rejected(runs):
    with pytest.raises(FormatError):
        MaskTube(VolumeDims(1, 2, 5), np.array(runs))


@settings(max_examples=50)
@given(arrays(np.int64, (2, 3, 4), elements=st.integers(0, 3)))
def test_labeling_text_roundtrip(labels):
    lab = InstanceLabeling(VolumeDims(2, 3, 4), labels)
    assert parse_labeling(format_labeling(lab)) == lab
    tube = MaskTube.from_dense(lab.dims, labels > 0)
    assert parse_tube(format_tube(tube)) == tube


def test_labeling_tubes_partition():
    labels = np.array([[[0, 1], [2, 2]], [[1, 0], [0, 2]]])
    lab = InstanceLabeling(VolumeDims(2, 2, 2), labels)
    assert lab.ids() == [1, 2]
    rebuilt = InstanceLabeling.from_tubes(lab.dims, lab.tubes())
    assert rebuilt == lab
    assert lab.frames(1, 2).labels.tolist() == [[[1, 0], [0, 2]]]


def test_from_tubes_rejects_overlap():
    dims = VolumeDims(1, 1, 2)
    t = MaskTube.from_dense(dims, [[[True, False]]])
    with pytest.raises(ValueError):
        InstanceLabeling.from_tubes(dims, {1: t, 2: t})


@pytest.mark.parametrize("text", [
    "",
    "dims 1 2\n",
    "dims 1 2 2\n1 0\n",
    "dims 1 2 2\n1 3 2\n",
    "dims 1 2 2\n1 2 1\n2 0 1\n",
    "dims 1 2 2\n0 0 1\n",
    "dims 1 2 2\na 0 1\n",
])
def test_malformed_labeling_files(text):
    with pytest.raises(FormatError):
        parse_labeling(text)
