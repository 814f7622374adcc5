"""DPD scheme behavior: identity passthroughs, checkpoint round trips,
indirect learning, and the gradient training loop on tiny chains."""

import numpy as np
import pytest

from mimo_dpd import autodiff as ad
from mimo_dpd import pa as pa_mod
from mimo_dpd.autodiff import const
from mimo_dpd.channel import ChannelScenario, PathlossParams
from mimo_dpd.dpd import (FdCnnDpd, FdGmpDpd, FdNnDpd, TdGmpDpd, TrainConfig,
                          TrainingDiverged, bank_forward_var, cascade_nmse_db,
                          fd_gmp_predistort, ila_train, ila_train_bank,
                          load_dpd, mse_loss, save_dpd, smoothed,
                          td_gmp_predistort, train_fd_dpd)
from mimo_dpd.pa import (GmpModel, GmpStructure, PaBank, crosstalk_matrix,
                         gmp_forward, synth_pa_fixture)
from mimo_dpd.signals import OfdmConfig, SignalBlock, SignalGrid, random_symbols
from mimo_dpd.simulate import build_chain, make_probe

TINY = OfdmConfig(n_total=32, n_data=8, subcarrier_spacing_hz=120e3,
                  qam_order=16)


def cgauss(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) \
        / np.sqrt(2.0)


def data_grid(rng, n_users, n_symbols, cfg=TINY):
    syms = random_symbols(rng, n_users, n_symbols, cfg)
    grid = np.zeros((n_symbols, n_users, cfg.n_total), dtype=np.complex128)
    grid[..., cfg.data_bins()] = syms
    return grid


def tiny_chain(**kw):
    scn = ChannelScenario(kind="los", n_antennas=2, n_users=1,
                          ue_positions=((25.0, np.radians(10.0)),),
                          pathloss=PathlossParams(-61.9, 2.1, 0.0),
                          n_taps=1, carrier_hz=30e9)
    args = dict(pa_seed=3, channel_seed=4, backoff_db=6.0,
                precoder_kind="mrt")
    args.update(kw)
    return build_chain(TINY, scn, **args)


# ---------------------------------------------------------------------------
# identity configurations are exact passthroughs

def test_td_gmp_identity_passthrough():
    dpd = TdGmpDpd.identity(GmpStructure(5, 3, 1), 4)
    x = cgauss(np.random.default_rng(0), (3, 4, 64))
    np.testing.assert_allclose(dpd.predistort(x), x, atol=1e-12)


def test_td_gmp_branch_count_mismatch():
    dpd = TdGmpDpd.identity(GmpStructure(3, 1, 0), 2)
    with pytest.raises(ValueError, match="branches"):
        dpd.predistort(np.zeros((3, 64), dtype=complex))


def test_td_gmp_distinct_models_per_branch():
    rng = np.random.default_rng(1)
    st = GmpStructure(3, 2, 1)
    models = []
    for _ in range(3):
        m = GmpModel.identity(st)
        vec = m.coeff_vector() + 0.05 * cgauss(rng, (m.structure.n_coeffs,))
        models.append(GmpModel.from_coeff_vector(st, vec))
    dpd = TdGmpDpd(models)
    x = cgauss(rng, (2, 3, 32))
    y = dpd.predistort(x)
    for b in range(3):
        np.testing.assert_allclose(y[:, b, :], gmp_forward(models[b], x[:, b, :]),
                                   atol=1e-12)


def test_fd_gmp_fresh_model_is_identity():
    rng = np.random.default_rng(2)
    grid = data_grid(rng, 2, 3)
    dpd = FdGmpDpd(2, GmpStructure(7, 3, 1))
    out = dpd.predistort_var(grid, TINY).value
    np.testing.assert_allclose(out, grid, atol=1e-10)
    # the IDFT/DFT round trip leaves only numerical dust on the guards
    guards = np.setdiff1d(np.arange(TINY.n_total), TINY.data_bins())
    assert np.max(np.abs(out[..., guards])) < 1e-12


def test_fd_nn_identity_passthrough():
    rng = np.random.default_rng(3)
    grid = data_grid(rng, 2, 3)
    dpd = FdNnDpd.identity(2, memory=3)
    out = dpd.predistort_var(grid, TINY).value
    np.testing.assert_allclose(out, grid, atol=1e-10)


def test_fd_cnn_identity_passthrough():
    rng = np.random.default_rng(4)
    grid = data_grid(rng, 2, 3)
    dpd = FdCnnDpd.identity(2, TINY.n_data, kernel_size=3, lift=2.0)
    out = dpd.predistort_var(grid, TINY).value
    np.testing.assert_allclose(out, grid, atol=1e-10)
    guards = np.setdiff1d(np.arange(TINY.n_total), TINY.data_bins())
    assert np.all(out[..., guards] == 0.0)


def test_fd_cnn_identity_needs_enough_lift():
    # a lift smaller than the largest |Re/Im| clips through the ReLU
    rng = np.random.default_rng(5)
    grid = data_grid(rng, 1, 4)
    dpd = FdCnnDpd.identity(1, TINY.n_data, lift=0.1)
    out = dpd.predistort_var(grid, TINY).value
    assert not np.allclose(out, grid, atol=1e-6)


def test_fd_user_count_mismatch():
    grid = data_grid(np.random.default_rng(6), 2, 1)
    for dpd in (FdGmpDpd(3), FdNnDpd.identity(3), FdCnnDpd.identity(3, TINY.n_data)):
        with pytest.raises(ValueError, match="streams"):
            dpd.predistort_var(grid, TINY)


def test_fd_input_grid_must_be_constant():
    grid = ad.param(data_grid(np.random.default_rng(7), 1, 1))
    with pytest.raises(ValueError, match="constant"):
        FdGmpDpd(1).predistort_var(grid, TINY)


# ---------------------------------------------------------------------------
# FD-GMP autodiff path against the plain-numpy GMP

def test_fd_gmp_matches_numpy_gmp_pipeline():
    rng = np.random.default_rng(8)
    st = GmpStructure(5, 2, 1)
    dpd = FdGmpDpd(2, st)
    for th in dpd.thetas:
        th.value[...] += 0.03 * cgauss(rng, th.value.shape)
    grid = data_grid(rng, 2, 3)
    out = dpd.predistort_var(grid, TINY).value

    td = np.fft.ifft(grid, axis=-1, norm="ortho")
    want = np.empty_like(td)
    for u in range(2):
        model = GmpModel.from_coeff_vector(st, dpd.thetas[u].value.ravel())
        want[:, u, :] = gmp_forward(model, td[:, u, :])
    want = np.fft.fft(want, axis=-1, norm="ortho")
    np.testing.assert_allclose(out, want, atol=1e-10)


def test_functional_wrappers_round_trip():
    rng = np.random.default_rng(9)
    grid = SignalGrid(data_grid(rng, 1, 1)[0], TINY)
    out = fd_gmp_predistort(FdGmpDpd(1), grid)
    assert isinstance(out, SignalGrid)
    np.testing.assert_allclose(out.data, grid.data, atol=1e-10)

    block = SignalBlock(cgauss(rng, (2, TINY.n_total)), TINY)
    out2 = td_gmp_predistort(TdGmpDpd.identity(GmpStructure(3, 1, 0), 2), block)
    assert isinstance(out2, SignalBlock)
    np.testing.assert_allclose(out2.data, block.data, atol=1e-12)


# ---------------------------------------------------------------------------
# checkpoints are bit-exact

def perturbed(dpd, rng, scale=0.1):
    for p in dpd.params():
        if np.iscomplexobj(p.value):
            p.value[...] += scale * cgauss(rng, p.value.shape)
        else:
            p.value[...] += scale * rng.standard_normal(p.value.shape)
    return dpd


@pytest.mark.parametrize("make", [
    lambda rng: TdGmpDpd([GmpModel.from_coeff_vector(
        GmpStructure(5, 3, 1),
        GmpModel.identity(GmpStructure(5, 3, 1)).coeff_vector()
        + 0.1 * cgauss(rng, (GmpStructure(5, 3, 1).n_coeffs,)))
        for _ in range(3)]),
    lambda rng: perturbed(FdGmpDpd(2, GmpStructure(5, 2, 1)), rng),
    lambda rng: perturbed(FdNnDpd(2, memory=2, width=9, hidden_layers=2,
                                  rng=rng), rng),
    lambda rng: perturbed(FdCnnDpd(2, TINY.n_data, kernels=6, kernel_size=3,
                                   rng=rng), rng),
], ids=["td_gmp", "fd_gmp", "fd_nn", "fd_cnn"])
def test_checkpoint_round_trip(tmp_path, make):
    rng = np.random.default_rng(10)
    dpd = make(rng)
    path = tmp_path / "ckpt.npz"
    save_dpd(path, dpd)
    back = load_dpd(path)
    assert type(back) is type(dpd)

    if isinstance(dpd, TdGmpDpd):
        for a, b in zip(dpd.models, back.models):
            assert np.array_equal(a.coeff_vector(), b.coeff_vector())
        x = cgauss(rng, (2, 3, 32))
        np.testing.assert_array_equal(dpd.predistort(x), back.predistort(x))
    else:
        for p, q in zip(dpd.params(), back.params()):
            assert np.array_equal(p.value, q.value)
        grid = data_grid(rng, 2, 2)
        np.testing.assert_array_equal(dpd.predistort_var(grid, TINY).value,
                                      back.predistort_var(grid, TINY).value)


def test_checkpoint_rejects_unknown_object(tmp_path):
    with pytest.raises(TypeError, match="checkpoint"):
        save_dpd(tmp_path / "x.npz", object())


# ---------------------------------------------------------------------------
# indirect learning

def test_ila_inverts_memoryless_gain():
    # a PA that is exactly y = 2 u has the exact postdistorter u = y / 2
    st = GmpStructure(3, 1, 0)
    model = GmpModel.identity(st)
    vec = model.coeff_vector() * 2.0
    model = GmpModel.from_coeff_vector(st, vec)
    model.sat_point = 1.0
    rng = np.random.default_rng(11)
    probe = 0.3 * cgauss(rng, 4096)
    res = ila_train(model, probe, st, iters=2)
    assert res.nmse_trace_db[-1] < -200.0
    assert res.gain == pytest.approx(2.0)


def test_ila_improves_fixture_pa():
    model = synth_pa_fixture(12, measurement_noise=True)
    rng = np.random.default_rng(12)
    rms = model.sat_point * 10.0 ** (-6.0 / 20.0)
    probe = rms * cgauss(rng, 8192)
    probe = pa_mod.mag_clip(probe, 2.0 * np.sqrt(np.mean(np.abs(probe) ** 2)))
    res = ila_train(model, probe, GmpStructure(7, 5, 1), iters=2)
    trace = res.nmse_trace_db
    assert trace[-1] < trace[0] - 15.0
    assert all(trace[i + 1] <= trace[i] + 0.1 for i in range(len(trace) - 1))
    # the predistorter support clamp sits at the observed output level
    assert res.model.sat_level == pytest.approx(
        np.max(np.abs(gmp_forward(model, gmp_forward(res.model, probe))))
        / res.gain, rel=0.5)


def test_ila_keeps_best_iterate():
    model = synth_pa_fixture(13, measurement_noise=True)
    rng = np.random.default_rng(13)
    rms = model.sat_point * 10.0 ** (-6.0 / 20.0)
    probe = rms * cgauss(rng, 4096)
    res = ila_train(model, probe, GmpStructure(7, 5, 1), iters=3)
    assert cascade_nmse_db(res.model, model, probe, res.gain) == \
        pytest.approx(min(res.nmse_trace_db), abs=1e-9)


def test_ila_bank_matches_per_branch_runs():
    model = synth_pa_fixture(14, measurement_noise=True)
    bank = PaBank.uniform(model, 2)
    rng = np.random.default_rng(14)
    rms = model.sat_point * 10.0 ** (-6.0 / 20.0)
    block = rms * cgauss(rng, (2, 2048))
    st = GmpStructure(5, 3, 1)
    td = ila_train_bank(bank, block, st, iters=2)
    assert td.n_branches == 2
    gain = pa_mod.measure_gain(bank, block, with_crosstalk=False)
    for b in range(2):
        solo = ila_train(model, block[b], st, iters=2, gain=gain)
        assert np.array_equal(td.models[b].coeff_vector(),
                              solo.model.coeff_vector())


def test_cascade_nmse_perfect_inverse_is_minus_inf_like():
    st = GmpStructure(3, 1, 0)
    model = GmpModel.identity(st)
    probe = 0.5 * cgauss(np.random.default_rng(15), 512)
    assert cascade_nmse_db(model, model, probe, 1.0) < -280.0


# ---------------------------------------------------------------------------
# gradient training loop

def test_train_threshold_stop_on_linear_bank():
    chain = tiny_chain(measurement_noise=False)
    cfg = TrainConfig(seed=1, batch_symbols=2, max_batches=50, lr=1e-3,
                      eps_frac=1.0)
    res = train_fd_dpd(FdGmpDpd(1, GmpStructure(3, 1, 0)), chain.bank,
                       (chain.realization, chain.precoder), "mrt", TINY,
                       chain.p_t, cfg)
    # eps equals the batch-0 loss, so the loop stops immediately
    assert res.stop_reason == "threshold"
    assert res.n_batches == 1
    assert res.eps == pytest.approx(res.losses[0])


def test_train_loss_decreases_on_tiny_chain():
    chain = tiny_chain(measurement_noise=False)
    cfg = TrainConfig(seed=2, batch_symbols=4, max_batches=40, lr=2e-3,
                      eps_frac=0.0)
    res = train_fd_dpd(FdGmpDpd(1, GmpStructure(5, 2, 1)), chain.bank,
                       (chain.realization, chain.precoder), "mrt", TINY,
                       chain.p_t, cfg)
    assert res.stop_reason == "max_batches"
    assert res.n_batches == 40
    assert np.mean(res.losses[-5:]) < 0.5 * res.losses[0]
    assert res.gain > 0


def test_train_resamples_iso_channel_per_batch():
    scn = ChannelScenario(kind="iso", n_antennas=2, n_users=1,
                          ue_positions=((25.0, 0.0),),
                          pathloss=PathlossParams(-35.3, 3.76, 4.0),
                          n_taps=4, carrier_hz=3.5e9)
    chain = build_chain(TINY, scn, pa_seed=3, channel_seed=4,
                        precoder_kind="zf", measurement_noise=False)
    cfg = TrainConfig(seed=3, batch_symbols=2, max_batches=10, lr=1e-3,
                      eps_frac=0.0)
    res = train_fd_dpd(FdGmpDpd(1, GmpStructure(3, 1, 0)), chain.bank, scn,
                       "zf", TINY, chain.p_t, cfg)
    assert res.n_batches == 10
    assert np.all(np.isfinite(res.losses))


def test_train_divergence_raises():
    chain = tiny_chain(measurement_noise=False)
    cfg = TrainConfig(seed=4, batch_symbols=2, max_batches=400, lr=5.0,
                      eps_frac=0.0, diverge_factor=2.0, diverge_patience=5)
    with pytest.raises(TrainingDiverged) as err:
        train_fd_dpd(FdGmpDpd(1, GmpStructure(5, 2, 1)), chain.bank,
                     (chain.realization, chain.precoder), "mrt", TINY,
                     chain.p_t, cfg)
    assert err.value.losses.size >= 5


def test_train_crosstalk_flag_changes_forward_model():
    xt = crosstalk_matrix(2, -10.0)
    model = synth_pa_fixture(3, measurement_noise=False)
    chain = tiny_chain(measurement_noise=False, crosstalk_in_db=-10.0,
                       crosstalk_out_db=-10.0)
    base = TrainConfig(seed=5, batch_symbols=2, max_batches=1, eps_frac=0.0)
    with_xt = TrainConfig(seed=5, batch_symbols=2, max_batches=1,
                          eps_frac=0.0, with_crosstalk=True)
    r0 = train_fd_dpd(FdGmpDpd(1), chain.bank,
                      (chain.realization, chain.precoder), "mrt", TINY,
                      chain.p_t, base)
    r1 = train_fd_dpd(FdGmpDpd(1), chain.bank,
                      (chain.realization, chain.precoder), "mrt", TINY,
                      chain.p_t, with_xt)
    assert r0.losses[0] != pytest.approx(r1.losses[0], rel=1e-6)


# ---------------------------------------------------------------------------
# small pieces

def test_bank_forward_var_matches_numpy_bank():
    model = synth_pa_fixture(16, measurement_noise=False)
    xt_in = crosstalk_matrix(3, -12.0)
    xt_out = crosstalk_matrix(3, -15.0)
    bank = PaBank.uniform(model, 3, xt_in, xt_out)
    rng = np.random.default_rng(16)
    u = 0.3 * model.sat_point * cgauss(rng, (2, 3, 64))
    for flag in (False, True):
        got = bank_forward_var(bank, const(u), with_crosstalk=flag).value
        want = pa_mod.pa_bank_forward(bank, u, with_crosstalk=flag)
        np.testing.assert_allclose(got, want, atol=1e-12)


def test_mse_loss_matches_definition():
    rng = np.random.default_rng(17)
    x = cgauss(rng, (3, 5))
    d = cgauss(rng, (3, 5))
    assert mse_loss(x, d) == pytest.approx(np.mean(np.abs(x - d) ** 2))
    with pytest.raises(ValueError, match="shape"):
        mse_loss(x, d[:2])


def test_smoothed_moving_average():
    np.testing.assert_allclose(smoothed([1.0, 2.0, 3.0, 4.0], window=2),
                               [1.5, 2.5, 3.5])
    np.testing.assert_allclose(smoothed([1.0, 2.0], window=10), [1.5])


def test_make_probe_is_crosstalk_free():
    chain = tiny_chain(measurement_noise=False, crosstalk_in_db=-10.0,
                       crosstalk_out_db=-10.0)
    probe = make_probe(chain, 2, 99)
    clean = tiny_chain(measurement_noise=False)
    probe2 = make_probe(clean, 2, 99)
    np.testing.assert_allclose(probe, probe2, atol=1e-12)
