import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wcr.regression import StridgeConfig, stridge


@settings(max_examples=30, deadline=None)
@given(st.integers(5, 60), st.integers(1, 6), st.integers(0, 10**6), st.booleans())
def test_threshold_zero_equals_ols(n_extra, p, seed, normalize):
    rng = np.random.default_rng(seed)
    n = p + n_extra
    A = rng.normal(size=(n, p)) * rng.uniform(0.1, 10, p)
    H = rng.normal(size=n)
    res = stridge(A, H, threshold=0.0, ridge=0.0, normalize=normalize)
    ref = np.linalg.lstsq(A, H, rcond=None)[0]
    np.testing.assert_allclose(res.coef, ref, rtol=1e-8, atol=1e-10)


def test_sparse_recovery():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(200, 8))
    z = np.array([0, 1.5, 0, -2, 0, 0, 0.7, 0])
    H = A @ z + 1e-3 * rng.normal(size=200)
    res = stridge(A, H, threshold=0.05)
    assert res.active.tolist() == (z != 0).tolist()
    np.testing.assert_allclose(res.coef, z, atol=1e-3)
    assert res.residual < 1e-2


def test_zero_response_gives_zero():
    res = stridge(np.ones((5, 2)), np.zeros(5))
    assert np.all(res.coef == 0) and not res.active.any()


def test_mask_holds_columns_at_zero():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(100, 4))
    H = A @ np.array([1.0, 1.0, 1.0, 1.0])
    res = stridge(A, H, threshold=0.0, mask=[True, False, True, True])
    assert res.coef[1] == 0 and not res.active[1]
    ref = np.linalg.lstsq(A[:, [0, 2, 3]], H, rcond=None)[0]
    np.testing.assert_allclose(res.coef[[0, 2, 3]], ref, rtol=1e-3)
    with pytest.raises(ValueError):
        stridge(A, H, mask=[True, False])


def test_rank_deficiency_flag_and_warnings():
    A = np.ones((10, 2))
    res = stridge(A, np.arange(10.0), threshold=0.0, ridge=0.0)
    assert res.rank_deficient
    with pytest.warns(UserWarning):
        stridge(np.ones((2, 3)), np.ones(2))
    with pytest.raises(ValueError):
        stridge(np.array([[np.nan]]), np.ones(1))


def test_config_validation():
    with pytest.raises(ValueError):
        StridgeConfig(threshold=-1)
    with pytest.raises(ValueError):
        StridgeConfig(ridge=-1)
    with pytest.raises(ValueError):
        StridgeConfig(max_iter=0)


def test_history_is_nested():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(50, 6))
    H = A[:, 0] + 0.01 * rng.normal(size=50)
    res = stridge(A, H, threshold=0.1)
    for prev, cur in zip(res.history, res.history[1:]):
        assert np.all(cur <= prev)
