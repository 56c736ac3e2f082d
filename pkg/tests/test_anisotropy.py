import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdv.anisotropy import (
    DirectionModel,
    StructureTensorField,
    assemble_M,
    beta_from_anisotropy,
    coherence_weight,
    eig2x2,
    estimate_direction_model,
    gaussian_kernel,
    gaussian_smooth,
    smooth_direction_field,
    structure_tensor,
)


def stripes(n=32, period=8):
    _, l = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return np.sin(2 * np.pi * l / period)


def test_gaussian_kernel():
    k = gaussian_kernel(1.0)
    assert k.size == 7 and k.sum() == pytest.approx(1.0)
    assert np.allclose(k, k[::-1])
    assert np.array_equal(gaussian_kernel(0.0), [1.0])
    with pytest.raises(ValueError):
        gaussian_kernel(-1.0)


def test_gaussian_smooth_preserves_constants():
    assert np.allclose(gaussian_smooth(np.full((9, 7), 3.0), 1.5), 3.0)


def test_structure_tensor_of_ramp():
    k, l = np.meshgrid(np.arange(12.0), np.arange(12.0), indexing="ij")
    J = structure_tensor(3 * l, 0.0, 0.0)
    assert np.allclose(J.j22, 9.0) and np.allclose(J.j11, 0.0) and np.allclose(J.j12, 0.0)


def test_eig2x2_against_numpy():
    rng = np.random.default_rng(0)
    a, c = rng.random((2, 5, 5))
    b = rng.standard_normal((5, 5))
    l1, l2, e1, e2 = eig2x2(StructureTensorField(a, b, c, 0, 0))
    for i in range(5):
        for j in range(5):
            A = np.array([[a[i, j], b[i, j]], [b[i, j], c[i, j]]])
            ev = np.linalg.eigvalsh(A)
            assert l2[i, j] == pytest.approx(ev[0]) and l1[i, j] == pytest.approx(ev[1])
            assert np.allclose(A @ e1[:, i, j], l1[i, j] * e1[:, i, j])
            assert np.allclose(A @ e2[:, i, j], l2[i, j] * e2[:, i, j])


def test_eig2x2_degenerate_convention():
    z = np.zeros((1, 1))
    _, _, e1, e2 = eig2x2(StructureTensorField(z + 2, z, z + 2, 0, 0))
    assert np.allclose(e1[:, 0, 0], [1, 0]) and np.allclose(e2[:, 0, 0], [0, 1])


def test_coherence_and_beta():
    w = coherence_weight(np.array([2.0, 1.0]), np.array([0.0, 1.0]))
    assert w[0] == pytest.approx(1.0, abs=1e-7) and w[1] == 0.0
    with pytest.raises(ValueError):
        coherence_weight(1.0, 0.0, eps=0.0)
    assert np.allclose(beta_from_anisotropy(np.array([0.0, 0.5, 1.0])), [1.0, 0.5, 0.0])
    assert np.allclose(beta_from_anisotropy(np.full(3, 0.4)), 1.0)


def test_stripes_give_direction_along_stripes():
    model, w = estimate_direction_model(stripes(), 1.0, 2.0)
    inner = (slice(4, -4), slice(4, -4))
    # stripes are constant along axis 0
    assert np.abs(model.v[0][inner]).min() > 0.99
    assert w[inner].min() > 0.9
    assert model.b2.min() >= 0 and model.b2.max() <= 1


def test_smooth_direction_field_cases():
    rng = np.random.default_rng(1)
    theta = rng.uniform(0, 2 * np.pi, (6, 6))
    v = np.stack([np.cos(theta), np.sin(theta)])
    assert np.allclose(smooth_direction_field(v, np.ones((6, 6)), 0.0), v)
    flat = smooth_direction_field(v, np.zeros((6, 6)), 1.0)
    assert np.allclose(flat, flat[:, :1, :1])
    out = smooth_direction_field(v, rng.random((6, 6)), 1.0)
    assert np.allclose(np.hypot(out[0], out[1]), 1.0)
    with pytest.raises(ValueError):
        smooth_direction_field(v, np.ones((6, 6)), -1.0)


def test_smoothing_fills_incoherent_cells():
    v = np.zeros((2, 5, 5))
    v[0] = 1.0
    v[:, 2, 2] = (0.0, 1.0)
    w = np.ones((5, 5))
    w[2, 2] = 0.0
    out = smooth_direction_field(v, w, 1.0)
    assert np.allclose(out[:, 2, 2], [1.0, 0.0], atol=1e-6)


def test_assemble_M_validation():
    v = np.zeros((2, 3, 3))
    v[0] = 1
    with pytest.raises(ValueError):
        assemble_M(v * 2, 1, 1)
    with pytest.raises(ValueError):
        assemble_M(v, 1.5, 1)
    with pytest.raises(ValueError):
        assemble_M(v[0], 1, 1)
    assert assemble_M(v, 1, 0.3).with_b2(0.0).b2.max() == 0.0


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(0, 1), st.floats(0, 1), st.integers(0, 2**31 - 1))
def test_model_matrix_properties(theta, b1, b2, seed):
    v = np.array([np.cos(theta), np.sin(theta)]).reshape(2, 1, 1)
    m = assemble_M(v, b1, b2)
    M = m.M[:, :, 0, 0]
    s = np.linalg.svd(M, compute_uv=False)
    assert s.max() <= max(b1, b2) + 1e-12
    g = np.random.default_rng(seed).standard_normal((2, 1, 1))
    assert np.allclose(np.stack(m.apply(g[0], g[1]))[:, 0, 0], M @ g[:, 0, 0])
    p = np.random.default_rng(seed + 1).standard_normal((2, 1, 1))
    assert np.allclose(np.stack(m.apply_transpose(p[0], p[1]))[:, 0, 0], M.T @ p[:, 0, 0])


def test_direction_model_perp():
    v = np.zeros((2, 2, 2))
    v[0] = 1.0
    m = DirectionModel(v, np.ones((2, 2)), np.ones((2, 2)))
    assert np.allclose((m.v * m.v_perp).sum(axis=0), 0.0)
    assert m.shape == (2, 2)
