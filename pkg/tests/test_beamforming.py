import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from merisc.beamforming import normalize_columns, pinv_rank, zf_weights


def _rand(rng, L, M):
    return rng.normal(size=(L, M)) + 1j * rng.normal(size=(L, M))


def test_identity_channel():
    bw = zf_weights(np.eye(4, dtype=complex), 8.0)
    assert np.allclose(bw.A, np.eye(4) * np.sqrt(2.0))
    assert np.allclose(np.linalg.norm(bw.A, axis=0), np.sqrt(8.0 / 4))
    assert bw.rank == 4 and not bw.zf_degenerate


def test_random_channel_inverts():
    rng = np.random.default_rng(0)
    ups = _rand(rng, 3, 8)
    a_raw, rank = pinv_rank(ups)
    assert rank == 3
    assert np.allclose(ups @ a_raw, np.eye(3), atol=1e-9)
    assert np.allclose(ups @ a_raw @ ups, ups, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 4), st.integers(0, 2 ** 32 - 1),
       st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3, allow_nan=False,
                          allow_infinity=False))
def test_homogeneity(L, extra, seed, a):
    rng = np.random.default_rng(seed)
    ups = _rand(rng, L, L + extra)
    a_raw, _ = pinv_rank(ups)
    b_raw, _ = pinv_rank(a * ups)
    assert np.allclose(b_raw, a_raw / a, rtol=1e-8, atol=1e-12 * np.abs(a_raw / a).max())
    A = zf_weights(ups, 2.0).A
    B = zf_weights(a * ups, 2.0).A
    # unchanged up to a global phase per column
    ph = np.sum(np.conj(A) * B, axis=0)
    assert np.allclose(np.abs(ph), np.linalg.norm(A, axis=0) ** 2, rtol=1e-8)
    assert np.allclose(B, A * (ph / np.abs(ph)), atol=1e-8 * np.abs(A).max())


def test_rank_deficient_channel_flags_degenerate():
    rng = np.random.default_rng(1)
    row = _rand(rng, 1, 6)
    ups = np.vstack([row, 2 * row])
    bw = zf_weights(ups, 1.0)
    assert bw.zf_degenerate and bw.rank == 1
    assert np.all(np.isfinite(bw.A))


def test_zero_channel_gives_zero_weights():
    bw = zf_weights(np.zeros((2, 4), complex), 1.0)
    assert bw.zf_degenerate and not bw.A.any()


def test_more_users_than_antennas_rejected():
    with pytest.raises(ValueError):
        zf_weights(np.ones((3, 2), complex), 1.0)


def test_normalize_columns_power_split():
    rng = np.random.default_rng(2)
    A = normalize_columns(_rand(rng, 5, 3), 6.0)
    assert np.allclose(np.linalg.norm(A, axis=0) ** 2, 2.0)
    assert np.sum(np.abs(A) ** 2) == pytest.approx(6.0)


def test_stacked_pinv_matches_single():
    rng = np.random.default_rng(3)
    stack = np.stack([_rand(rng, 2, 5) for _ in range(4)])
    p, r = pinv_rank(stack)
    for i in range(4):
        q, ri = pinv_rank(stack[i])
        assert np.allclose(p[i], q) and r[i] == ri
