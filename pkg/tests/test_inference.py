import numpy as np
import pytest

from oracles import gaussian_prob_loop
from tubeseg.inference import FieldSet, assign_category, cluster_instances
from tubeseg.volume import MaskTube, VolumeDims


def test_zero_heat_gives_no_instances():
    dims = VolumeDims(2, 3, 3)
    f = FieldSet(dims, np.zeros((18, 2)), np.ones((18, 2)), np.zeros(18))
    res = cluster_instances(f)
    assert res.n_instances == 0
    assert res.labeling.n_instances == 0


def test_single_pixel_instance():
    dims = VolumeDims(1, 1, 1)
    f = FieldSet(dims, np.array([[3.0, -1.0]]), np.array([[0.1, 0.1]]), np.array([0.9]))
    res = cluster_instances(f, min_pixels=1)
    assert res.n_instances == 1
    assert res.labeling.labels.ravel().tolist() == [1]
    assert res.confidence(1) == 0.9


def _two_blobs(rng):
    """Two embedding blobs on the left / right halves with heat peaks at their centres."""
    dims = VolumeDims(2, 6, 8)
    n = dims.n_pixels
    labels = np.zeros(dims.shape, dtype=int)
    labels[:, 1:5, 0:3] = 1
    labels[:, 1:5, 5:8] = 2
    centres = {1: np.array([0.0, 0.0]), 2: np.array([5.0, 5.0])}
    e = rng.normal(0, 3.0, (n, 2)) + 20.0     # background far from both blobs
    heat = np.zeros(n)
    flat = labels.ravel()
    for k, c in centres.items():
        idx = np.flatnonzero(flat == k)
        e[idx] = c + rng.normal(0, 0.05, (idx.size, 2))
        heat[idx] = 0.6
        heat[idx[idx.size // 2]] = 0.95 if k == 1 else 0.9
    return FieldSet(dims, e, np.full((n, 2), 0.2), heat), labels


def test_two_cluster_volume_against_seed_oracle():
    rng = np.random.default_rng(0)
    fields, labels = _two_blobs(rng)
    res = cluster_instances(fields)
    assert res.n_instances == 2
    remaining = np.ones(fields.dims.n_pixels, bool)
    for inst in res.instances:
        seed = inst.seed_index
        mean, var = fields.embeddings[seed], fields.variances[seed]
        want = np.array([remaining[i] and gaussian_prob_loop(fields.embeddings[i], mean, var) > 0.5
                         for i in range(fields.dims.n_pixels)])
        got = res.labeling.flat() == inst.instance_id
        assert np.array_equal(got, want)
        remaining &= ~want
    # the blobs themselves are recovered, highest heat first
    assert np.array_equal(res.labeling.labels, labels)
    assert [i.seed_heat for i in res.instances] == [0.95, 0.9]


def test_small_tube_discarded_but_seed_removed():
    dims = VolumeDims(1, 1, 4)
    e = np.array([[0.0], [10.0], [20.0], [30.0]])
    f = FieldSet(dims, e, np.full((4, 1), 0.1), np.array([0.9, 0.8, 0.7, 0.6]))
    res = cluster_instances(f, min_pixels=2)
    assert res.n_instances == 0
    res = cluster_instances(f, min_pixels=1)
    assert res.n_instances == 4


def test_ties_break_to_lowest_index():
    dims = VolumeDims(1, 1, 3)
    e = np.array([[0.0], [9.0], [18.0]])
    f = FieldSet(dims, e, np.full((3, 1), 0.1), np.array([0.7, 0.8, 0.8]))
    res = cluster_instances(f, min_pixels=1)
    assert [i.seed_index for i in res.instances] == [1, 2, 0]


def test_instances_are_disjoint_and_labels_consistent():
    rng = np.random.default_rng(3)
    dims = VolumeDims(2, 5, 5)
    n = dims.n_pixels
    f = FieldSet(dims, rng.normal(0, 1, (n, 3)), rng.uniform(0.05, 0.5, (n, 3)), rng.random(n))
    res = cluster_instances(f, min_pixels=1)
    counts = [np.count_nonzero(res.labeling.flat() == i.instance_id) for i in res.instances]
    assert counts == [i.n_pixels for i in res.instances]
    assert res.labeling.ids() == list(range(1, res.n_instances + 1))


def test_fieldset_validation():
    dims = VolumeDims(1, 1, 2)
    with pytest.raises(ValueError):
        FieldSet(dims, np.zeros((2, 2)), np.zeros((2, 2)), np.zeros(2))
    with pytest.raises(ValueError):
        FieldSet(dims, np.zeros((2, 2)), np.ones((2, 2)), np.array([0.1, 1.5]))
    with pytest.raises(ValueError):
        cluster_instances(FieldSet(dims, np.zeros((2, 2)), np.ones((2, 2)), np.zeros(2)), heat_threshold=1.0)


def test_assign_category_examples():
    dims = VolumeDims(1, 1, 2)
    full = MaskTube.from_dense(dims, np.ones(2, bool))
    assert assign_category(full, np.array([[4.0], [-1.0]])) == 0
    assert assign_category(full, np.array([[1.0, 0.0], [0.0, 3.0]])) == 1


def test_assign_category_loop_oracle():
    rng = np.random.default_rng(4)
    dims = VolumeDims(2, 4, 4)
    for _ in range(20):
        mask = MaskTube.from_dense(dims, rng.random(dims.shape) < 0.4)
        if mask.n_pixels == 0:
            continue
        logits = rng.normal(size=(dims.n_pixels, 5))
        members = [i for i in range(dims.n_pixels) if mask.dense().ravel()[i]]
        sums = [sum(logits[i, c] for i in members) for c in range(5)]
        assert assign_category(mask, logits) == int(np.argmax(sums))
    with pytest.raises(ValueError):
        assign_category(MaskTube.empty(dims), np.zeros((dims.n_pixels, 2)))
