"""MRT / ZF / flat precoders and the global power normalization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mimo_dpd.channel import ChannelScenario, PathlossParams, sample_channel, sample_los
from mimo_dpd.precoding import (make_precoder, mrt, pathloss_inverse_weights,
                                precode, zf, flat)

N = 64
P_T = 2.5


def rayleigh_real(b=8, u=3, seed=0, taps=4):
    sc = ChannelScenario(kind="iso", n_antennas=b, n_users=u,
                         ue_positions=tuple((20.0, 0.0) for _ in range(u)),
                         pathloss=PathlossParams(-30.0, 3.0, 0.0), n_taps=taps)
    return sample_channel(sc, N, np.random.default_rng(seed))


def test_zf_inverts_the_channel():
    real = rayleigh_real()
    pre = zf(real, P_T)
    prod = np.einsum("kbu,kbv->kuv", real.fd, pre.matrices)
    alpha = pre.norm_factor
    err = np.abs(prod - alpha * np.eye(3)[None]).max()
    assert err <= 1e-9


def test_zf_zeroes_the_guards_when_given_data_bins():
    real = rayleigh_real()
    bins = np.arange(10, 30)
    pre = zf(real, P_T, data_bins=bins)
    mask = np.ones(N, bool)
    mask[bins] = False
    assert np.all(pre.matrices[mask] == 0)
    assert np.all(pre.matrices[bins] != 0)


def test_zf_power_normalization():
    bins = np.arange(8, 40)
    pre = zf(rayleigh_real(), P_T, data_bins=bins)
    mean_fro = np.mean(np.sum(np.abs(pre.matrices[bins]) ** 2, axis=(1, 2)))
    assert mean_fro == pytest.approx(P_T, rel=1e-12)


def test_zf_needs_enough_antennas():
    real = rayleigh_real(b=2, u=3)
    with pytest.raises(ValueError, match="U <= B"):
        zf(real, P_T)


def test_zf_flags_rank_deficient_subcarriers():
    """Two LOS users at the same angle leave a rank-1 channel everywhere."""
    sc = ChannelScenario(kind="los", n_antennas=4, n_users=2,
                         ue_positions=((25.0, 0.3), (25.0, 0.3)),
                         pathloss=PathlossParams(-60.0, 2.0, 0.0))
    real = sample_los(sc, N)
    with pytest.raises(np.linalg.LinAlgError, match="subcarrier"):
        zf(real, P_T)


def test_mrt_is_scaled_conjugate():
    real = rayleigh_real()
    pre = mrt(real, P_T)
    np.testing.assert_allclose(pre.matrices, pre.norm_factor * np.conj(real.fd),
                               atol=1e-14)
    assert pre.kind == "mrt"
    assert pre.n_antennas == 8 and pre.n_users == 3


def test_flat_precoder_is_uniform_and_blind():
    real = rayleigh_real()
    bins = np.arange(16, 48)
    pre = flat(real, P_T, data_bins=bins)
    w = pre.matrices[bins]
    assert np.ptp(np.abs(w)) < 1e-14  # same weight everywhere
    assert np.all(pre.matrices[np.setdiff1d(np.arange(N), bins)] == 0)
    mean_fro = np.mean(np.sum(np.abs(w) ** 2, axis=(1, 2)))
    assert mean_fro == pytest.approx(P_T, rel=1e-12)


def test_make_precoder_dispatch_and_unknown_kind():
    real = rayleigh_real()
    assert make_precoder("zf", real, P_T).kind == "zf"
    assert make_precoder("flat", real, P_T).kind == "flat"
    with pytest.raises(ValueError, match="unknown precoder"):
        make_precoder("dirty", real, P_T)


def test_precode_applies_per_subcarrier_products():
    real = rayleigh_real(b=4, u=2)
    pre = mrt(real, P_T)
    rng = np.random.default_rng(3)
    s = rng.standard_normal((5, 2, N)) + 1j * rng.standard_normal((5, 2, N))
    x = precode(pre, s)
    assert x.shape == (5, 4, N)
    k = 11
    np.testing.assert_allclose(x[3, :, k], pre.matrices[k] @ s[3, :, k],
                               atol=1e-12)


def test_precode_shape_guard():
    pre = mrt(rayleigh_real(b=4, u=2), P_T)
    with pytest.raises(ValueError, match="does not match"):
        precode(pre, np.zeros((3, N)))


def test_user_weights_shift_power_between_streams():
    real = rayleigh_real(b=8, u=2, seed=5)
    weights = [4.0, 1.0]
    pre = mrt(real, P_T, user_weights=weights)
    p_per_ue = np.mean(np.sum(np.abs(pre.matrices) ** 2, axis=1), axis=0)
    assert p_per_ue.sum() == pytest.approx(P_T, rel=1e-12)
    # per-stream transmit power scales with the weights for this channel draw
    base = mrt(real, P_T).matrices
    base_p = np.mean(np.sum(np.abs(base) ** 2, axis=1), axis=0)
    np.testing.assert_allclose((p_per_ue / base_p) / (p_per_ue / base_p)[1],
                               [4.0, 1.0], rtol=1e-10)


def test_pathloss_inverse_weights():
    w = pathloss_inverse_weights([-80.0, -90.0])
    assert np.mean(w) == pytest.approx(1.0)
    assert w[1] / w[0] == pytest.approx(10.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 16))
def test_zf_product_property(seed):
    real = rayleigh_real(b=5, u=2, seed=seed, taps=3)
    pre = zf(real, 1.0)
    prod = np.einsum("kbu,kbv->kuv", real.fd, pre.matrices)
    assert np.abs(prod - pre.norm_factor * np.eye(2)[None]).max() <= 1e-9
