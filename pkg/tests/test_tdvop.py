import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdv.anisotropy import assemble_M
from tdv.diffops import UnsupportedOrderError, grad1, grad_q
from tdv.fields import ShapeError
from tdv.tdvop import (
    UNCONSTRAINED,
    LevelWeights,
    Unconstrained,
    WeightedLevel,
    build_joint,
    build_stack,
    composite_norm_bound,
    power_iteration,
    tdv_energy_reduced,
    weighted_div1,
    weighted_grad1,
)


def random_model(rng, m, n):
    theta = rng.uniform(0, 2 * np.pi, (m - 1, n - 1))
    v = np.stack([np.cos(theta), np.sin(theta)])
    return assemble_M(v, rng.uniform(0, 1, (m - 1, n - 1)), rng.uniform(0, 1, (m - 1, n - 1)))


def weighted_grad_oracle(u, model):
    """Loop form: forward differences averaged to centres, then the 2x2 matrix per cell."""
    m, n = u.shape
    d1 = np.zeros((m, n))
    d2 = np.zeros((m, n))
    d1[:-1] = u[1:] - u[:-1]
    d2[:, :-1] = u[:, 1:] - u[:, :-1]
    out = np.zeros((2, m - 1, n - 1))
    for k in range(m - 1):
        for l in range(n - 1):
            g = np.array([(d1[k, l] + d1[k, l + 1]) / 2, (d2[k, l] + d2[k + 1, l]) / 2])
            v = model.v[:, k, l]
            M = np.array([[model.b1[k, l] * v[0], model.b1[k, l] * v[1]], [-model.b2[k, l] * v[1], model.b2[k, l] * v[0]]])
            out[:, k, l] = M @ g
    return out


def dense_norm(K):
    sizes = [int(np.prod(s)) for s in K.primal_shapes]
    cols = []
    for i in range(sum(sizes)):
        e = np.zeros(sum(sizes))
        e[i] = 1
        parts, o = [], 0
        for s, sz in zip(K.primal_shapes, sizes):
            parts.append(e[o : o + sz].reshape(s))
            o += sz
        cols.append(np.concatenate([np.ravel(x) for x in K.apply(parts)]))
    return np.linalg.norm(np.array(cols).T, 2)


def test_weighted_grad_matches_oracle():
    rng = np.random.default_rng(0)
    u = rng.standard_normal((6, 7))
    model = random_model(rng, 6, 7)
    assert np.allclose(weighted_grad1(u, model), weighted_grad_oracle(u, model))


def test_weighted_div_is_adjoint():
    rng = np.random.default_rng(1)
    u = rng.standard_normal((6, 5))
    p = rng.standard_normal((2, 5, 4))
    model = random_model(rng, 6, 5)
    assert np.vdot(weighted_grad1(u, model), p) == pytest.approx(np.vdot(u, weighted_div1(p, model)))


def test_direction_annihilates_invariant_ramp():
    # u grows along axis 1 only; v = (1, 0) with b2 = 0 sees nothing
    _, l = np.meshgrid(np.arange(8.0), np.arange(8.0), indexing="ij")
    v = np.zeros((2, 7, 7))
    v[0] = 1
    assert np.allclose(weighted_grad1(l, assemble_M(v, 1, 0)), 0.0)
    assert not np.allclose(weighted_grad1(l, assemble_M(v, 1, 1)), 0.0)


def test_identity_stack_matches_isotropic_tgv():
    rng = np.random.default_rng(2)
    z0, z1 = rng.standard_normal((6, 6)), rng.standard_normal((2, 6, 6))
    K = build_stack(2, LevelWeights.identity(2), [1.0, 2.0], (6, 6))
    out = K.apply([z0, z1])
    assert np.allclose(out[0], grad1(z0) - z1)
    assert np.allclose(out[1], grad1(z1))
    assert K.radii == [2.0, 1.0]


def test_joint_identity_is_plain_derivatives():
    rng = np.random.default_rng(3)
    u = rng.standard_normal((7, 6))
    K = build_joint((1.0, 0.0, 2.0), None, u.shape)
    out = K.apply([u])
    assert K.orders == (1, 3)
    assert np.allclose(out[0], grad1(u)) and np.allclose(out[1], grad_q(u, 3))


def test_energies():
    rng = np.random.default_rng(4)
    u = rng.standard_normal((6, 6))
    g = grad1(u)
    assert tdv_energy_reduced(u, 1, None, 2.0) == pytest.approx(2.0 * np.hypot(g[0], g[1]).sum())
    model = random_model(rng, 6, 6)
    wg = weighted_grad_oracle(u, model)
    assert tdv_energy_reduced(u, 1, model, 1.0) == pytest.approx(np.hypot(wg[0], wg[1]).sum())
    K = build_stack(2, LevelWeights.identity(2), [1.0, UNCONSTRAINED], (6, 6))
    z1 = grad1(u)
    assert K.energy([u, z1]) == pytest.approx(np.sqrt((grad1(z1) ** 2).sum(axis=0)).sum())


def test_unconstrained_singleton():
    assert Unconstrained() is UNCONSTRAINED
    assert repr(UNCONSTRAINED) == "UNCONSTRAINED"


@pytest.mark.parametrize("bad", [0.0, -1.0, np.inf])
def test_radius_validation(bad):
    with pytest.raises(ValueError):
        build_stack(1, LevelWeights.identity(1), [bad], (4, 4))


def test_builder_validation():
    with pytest.raises(UnsupportedOrderError):
        build_stack(4, LevelWeights.identity(3), [1] * 4, (4, 4))
    with pytest.raises(ValueError):
        build_stack(2, LevelWeights.identity(1), [1, 1], (4, 4))
    with pytest.raises(ValueError):
        build_joint((0.0, 0.0), None, (4, 4))
    with pytest.raises(TypeError):
        LevelWeights(["x"])
    K = build_joint((1.0,), None, (4, 4))
    with pytest.raises(ShapeError):
        K.apply([np.zeros((3, 3))])
    S = build_stack(2, LevelWeights.identity(2), [1, 1], (4, 4))
    with pytest.raises(ShapeError):
        S.apply([np.zeros((4, 4)), np.zeros((2, 3, 3))])


def test_identity_bounds():
    assert build_joint((1.0,), None, (16, 16)).norm_bound() ** 2 == pytest.approx(8.0)
    assert build_joint((0.0, 1.0), None, (16, 16)).norm_bound() ** 2 == pytest.approx(64.0)
    levels = [WeightedLevel(j, 8, 8, None, top=False, h=0.5) for j in (1, 2)]
    assert composite_norm_bound(levels) == pytest.approx(8 / 0.25)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(3, 12), st.integers(3, 12), st.integers(0, 2**31 - 1), st.booleans())
def test_stack_adjointness(q, m, n, seed, joint):
    rng = np.random.default_rng(seed)
    if joint:
        K = build_joint(rng.uniform(0.5, 1, q), random_model(rng, m, n), (m, n))
    else:
        models = [random_model(rng, m, n) if rng.random() < 0.7 else None for _ in range(q)]
        K = build_stack(q, LevelWeights(models), [1.0] * q, (m, n))
    z = [rng.standard_normal(s) for s in K.primal_shapes]
    w = [rng.standard_normal(s) for s in K.dual_shapes]
    lhs = sum(np.vdot(a, b) for a, b in zip(K.apply(z), w))
    rhs = sum(np.vdot(a, b) for a, b in zip(z, K.apply_adjoint(w)))
    assert abs(lhs - rhs) <= 1e-10 * (1 + abs(lhs))


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**31 - 1), st.booleans())
def test_bounds_dominate_true_norm(q, seed, joint):
    rng = np.random.default_rng(seed)
    m, n = 5, 4
    if joint:
        K = build_joint(rng.uniform(0, 1, q) + np.eye(q)[q - 1], random_model(rng, m, n), (m, n))
    else:
        K = build_stack(q, LevelWeights([random_model(rng, m, n) for _ in range(q)]), [1.0] * q, (m, n))
    true = dense_norm(K)
    assert power_iteration(K, 300) <= true + 1e-9
    assert true <= K.norm_bound() + 1e-9
