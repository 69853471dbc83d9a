import numpy as np
import pytest

from ttlindblad.tt import (
    DenseCapExceeded,
    ModeMismatch,
    TensorTrain,
    _rank_for_tol,
    canonicalize,
    svd_sweep,
    tt_add,
    tt_from_dense,
    tt_inner,
    tt_norm,
    tt_product_state,
    tt_random,
    tt_scale,
    tt_to_dense,
    tt_zero,
)


def rng(seed=0):
    return np.random.Generator(np.random.Philox(seed))


def test_roundtrip_dense():
    g = rng(1)
    x = g.standard_normal((2, 3, 4)) + 1j * g.standard_normal((2, 3, 4))
    tt = tt_from_dense(x)
    assert np.allclose(tt_to_dense(tt), x, atol=1e-13)
    assert tt.ortho_center == 2


def test_from_dense_tolerance_bound():
    g = rng(2)
    x = g.standard_normal((4, 4, 4, 4))
    for tol in (1e-1, 1e-3, 1e-8):
        tt = tt_from_dense(x, tol=tol)
        assert np.linalg.norm(tt_to_dense(tt) - x) <= tol + 1e-13


def test_zero_and_product_state():
    z = tt_zero((2, 3, 2))
    assert z.bonds == (1, 1, 1, 1)
    assert np.allclose(tt_to_dense(z), 0.0)
    vecs = [np.array([1.0, 0.0]), np.array([0.0, 1.0, 0.0])]
    p = tt_product_state(vecs)
    dense = tt_to_dense(p)
    assert dense[0, 1] == 1.0
    assert np.sum(np.abs(dense)) == 1.0


def test_add_scale_inner_norm_against_dense():
    g = rng(3)
    a = tt_random((2, 3, 2, 4), (2, 3, 2), g)
    b = tt_random((2, 3, 2, 4), (3, 2, 4), g)
    da, db = tt_to_dense(a), tt_to_dense(b)
    assert np.allclose(tt_to_dense(tt_add(a, b)), da + db)
    assert np.allclose(tt_to_dense(tt_scale(2.5 - 1j, a)), (2.5 - 1j) * da)
    assert np.isclose(tt_inner(a, b), np.vdot(db, da))
    assert np.isclose(tt_norm(a), np.linalg.norm(da))


def test_add_bonds_are_sums():
    g = rng(4)
    a = tt_random((2, 2, 2), (2, 3), g)
    b = tt_random((2, 2, 2), (4, 2), g)
    assert tt_add(a, b).bonds == (1, 6, 5, 1)


def test_mode_mismatch_raises():
    g = rng(5)
    a = tt_random((2, 3), (2,), g)
    b = tt_random((2, 2), (2,), g)
    with pytest.raises(ModeMismatch):
        tt_add(a, b)
    with pytest.raises(ModeMismatch):
        tt_inner(a, b)


def test_canonicalize_preserves_tensor_and_orthogonality():
    g = rng(6)
    x = tt_random((2, 3, 4, 2), (3, 5, 4), g)
    dense = tt_to_dense(x)
    for center in range(4):
        c = canonicalize(x, center)
        assert c.ortho_center == center
        assert np.allclose(tt_to_dense(c), dense, atol=1e-12)
        for k in range(center):
            core = c.cores[k]
            m = core.reshape(-1, core.shape[2])
            assert np.allclose(m.conj().T @ m, np.eye(m.shape[1]), atol=1e-12)
        for k in range(center + 1, 4):
            core = c.cores[k]
            m = core.reshape(core.shape[0], -1)
            assert np.allclose(m @ m.conj().T, np.eye(m.shape[0]), atol=1e-12)


def test_norm_from_center_core():
    g = rng(7)
    x = tt_random((2, 2, 3), (3, 4), g)
    c = canonicalize(x, 1)
    assert np.isclose(tt_norm(c), np.linalg.norm(tt_to_dense(x)))


def test_svd_sweep_error_bound():
    g = rng(8)
    x = tt_random((3, 3, 3, 3), (6, 9, 6), g)
    dense = tt_to_dense(x)
    for tol in (1e-1, 1e-4, 0.0):
        out, rep = svd_sweep(x, tol)
        err = np.linalg.norm(tt_to_dense(out) - dense)
        assert err <= tol + 1e-12
        assert err <= rep.error_bound + 1e-12
        assert out.ortho_center == 3


def test_svd_sweep_max_bond_cap():
    g = rng(9)
    x = tt_random((2, 2, 2, 2), (4, 4, 4), g)
    out, rep = svd_sweep(x, 0.0, max_bond=2)
    assert out.max_bond <= 2
    assert rep.max_bond_capped


def test_rank_for_tol_keeps_ties():
    s = np.array([2.0, 1.0, 1.0, 0.1])
    # tolerance between: keeping rank 2 would discard sqrt(1 + 0.01) > 0.5
    r = _rank_for_tol(s, 0.5)
    assert r == 3
    # identical singular values at the cut are kept together
    s2 = np.array([1.0, 0.5, 0.5, 0.5])
    r2 = _rank_for_tol(s2, 0.75)
    assert r2 == 4


def test_rank_for_tol_keeps_at_least_one():
    assert _rank_for_tol(np.array([1e-30]), 1.0) == 1
    assert _rank_for_tol(np.array([]), 1.0) == 1


def test_dense_cap():
    big = tt_zero((2,) * 30)
    with pytest.raises(DenseCapExceeded):
        tt_to_dense(big)


def test_boundary_validation():
    with pytest.raises(ValueError):
        TensorTrain((np.zeros((2, 2, 1)),))
    with pytest.raises(ValueError):
        TensorTrain((np.zeros((1, 2, 3)), np.zeros((2, 2, 1))))
