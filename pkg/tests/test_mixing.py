import numpy as np
import pytest

from tubeseg.mixing import KINDS, MixingSpec, apply_mixing, apply_variance_policy

# embedding dimension per kind, read off the ablation table of mixing functions
EXPECTED_DIM = {"identity": 2, "xy": 2, "xyt": 3, "xyf": 3, "xytf": 4, "xyff": 4, "xyfff": 5}


def _coords(x, y, t):
    return np.array([[x, y, t]], dtype=float)


def test_kind_dimensions():
    assert set(KINDS) == set(EXPECTED_DIM)
    for kind, dim in EXPECTED_DIM.items():
        assert MixingSpec(kind).dim == dim
    assert MixingSpec("xyff").dim == 4


def test_identity_passthrough():
    e = np.array([[0.3, -0.7]])
    assert apply_mixing(e, _coords(0.9, 0.9, 0.9), MixingSpec("identity")).tolist() == [[0.3, -0.7]]


def test_xy_adds_coordinates():
    out = apply_mixing(np.array([[0.1, -0.2]]), _coords(0.5, 0.25, 0.0), MixingSpec("xy"))
    np.testing.assert_allclose(out, [[0.6, 0.05]], rtol=0, atol=1e-15)


def test_zero_embedding_exposes_offset():
    out = apply_mixing(np.zeros((1, 4)), _coords(0.2, 0.4, 0.6), MixingSpec("xytf"))
    assert out.tolist() == [[0.2, 0.4, 0.6, 0.0]]


def test_variance_policy_without_free_dims():
    v = np.array([[0.2, 0.3], [1.0, 4.0]])
    assert np.array_equal(apply_variance_policy(v, MixingSpec("xy")), v)


def test_variance_policy_pins_free_dims():
    out = apply_variance_policy(np.array([[0.2, 0.3, 9.9, 9.9]]), MixingSpec("xyff", 0.05))
    assert out.tolist() == [[0.2, 0.3, 0.05, 0.05]]


def test_variance_policy_three_free_dims():
    rng = np.random.default_rng(3)
    out = apply_variance_policy(rng.uniform(0.1, 2, (50, 5)), MixingSpec("xyfff", 0.1))
    assert np.all(out[:, 2:] == 0.1)


def test_mixing_is_a_pure_translation():
    rng = np.random.default_rng(0)
    coords = rng.uniform(0, 1, (20, 3))
    for kind in KINDS:
        spec = MixingSpec(kind)
        a = rng.normal(size=(20, spec.dim))
        b = rng.normal(size=(20, spec.dim))
        np.testing.assert_allclose(apply_mixing(a, coords, spec) - apply_mixing(b, coords, spec), a - b,
                                   atol=1e-12)


def test_errors():
    with pytest.raises(ValueError):
        MixingSpec("xyz")
    with pytest.raises(ValueError):
        MixingSpec("xyff", v_free=0.0)
    with pytest.raises(ValueError):
        apply_mixing(np.zeros((1, 3)), _coords(0, 0, 0), MixingSpec("xy"))
    with pytest.raises(ValueError):
        apply_variance_policy(np.array([[0.1, -0.1]]), MixingSpec("xy"))
