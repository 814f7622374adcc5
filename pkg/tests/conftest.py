"""Shared chains and cached trainings for the test suite.

Gradient-training a frequency-domain DPD takes minutes and several tests
interrogate the same trained model from different angles, so trainings (and
the per-branch ILA fits) are memoized at session scope, keyed by chain name
and scheme.  The helpers are plain functions so scripts can reuse them.
"""

import numpy as np
import pytest

from mimo_dpd.channel import ChannelScenario, PathlossParams
from mimo_dpd.dpd import (FdCnnDpd, FdGmpDpd, FdNnDpd, TrainConfig,
                          ila_train_bank, train_fd_dpd)
from mimo_dpd.pa import GmpStructure
from mimo_dpd.signals import OfdmConfig
from mimo_dpd.simulate import build_chain, make_probe

OFDM = OfdmConfig(n_total=256, n_data=64, subcarrier_spacing_hz=120e3,
                  qam_order=64)

PA_SEED = 7
CHANNEL_SEED = 107
TRAIN_SEED = 5
EVAL_SEED = 909
UE_ANGLE_DEG = 20.0

ISO_PATHLOSS = PathlossParams(-35.3, 3.76, 4.0)
LOS_PATHLOSS = PathlossParams(-61.9, 2.1, 4.0)

TD_STRUCTURE = GmpStructure(order=7, memory=5, cross_terms=1)


def los_scenario(n_antennas=16):
    return ChannelScenario(
        kind="los", n_antennas=n_antennas, n_users=1,
        ue_positions=((25.0, np.radians(UE_ANGLE_DEG)),),
        pathloss=LOS_PATHLOSS, n_taps=1, carrier_hz=30e9,
        noise_power_dbm=-92.1)


def iso_scenario(n_antennas=16, n_users=1, n_taps=100):
    return ChannelScenario(
        kind="iso", n_antennas=n_antennas, n_users=n_users,
        ue_positions=tuple((25.0, 0.0) for _ in range(n_users)),
        pathloss=ISO_PATHLOSS, n_taps=n_taps, carrier_hz=3.5e9,
        noise_power_dbm=-92.1)


def make_chain(name):
    """Fixed experiment chains: "los", "iso", and "los_xt" (-10 dB coupling
    on both sides of the PA bank)."""
    if name == "los":
        return build_chain(OFDM, los_scenario(), pa_seed=PA_SEED,
                           channel_seed=CHANNEL_SEED, backoff_db=6.0,
                           precoder_kind="mrt")
    if name == "iso":
        return build_chain(OFDM, iso_scenario(), pa_seed=PA_SEED,
                           channel_seed=CHANNEL_SEED, backoff_db=6.0,
                           precoder_kind="zf")
    if name == "los_xt":
        return build_chain(OFDM, los_scenario(), pa_seed=PA_SEED,
                           channel_seed=CHANNEL_SEED, backoff_db=6.0,
                           precoder_kind="mrt", crosstalk_in_db=-10.0,
                           crosstalk_out_db=-10.0)
    raise KeyError(name)


# per-scheme budgets: the GMP is linear in its coefficients and converges in
# a few dozen batches; the nets need a longer Adam run and the CNN a gentler
# step to keep the early exploration from spiking
TRAIN_PLAN = {
    "fd_gmp": dict(max_batches=300, lr=1e-3),
    "fd_nn": dict(max_batches=400, lr=1e-3),
    "fd_cnn": dict(max_batches=1000, lr=5e-4),
}


def fresh_dpd(scheme, chain):
    u = chain.scenario.n_users
    if scheme == "fd_gmp":
        return FdGmpDpd(u, GmpStructure(7, 3, 1))
    if scheme == "fd_nn":
        return FdNnDpd.identity(u, memory=3)
    if scheme == "fd_cnn":
        return FdCnnDpd.identity(u, OFDM.n_data, kernel_size=3, lift=2.0)
    raise KeyError(scheme)


def train_scheme(chain, scheme, max_batches=None):
    """Run the gradient loop for one scheme on one chain (fixed channel for
    line-of-sight chains, resampled per batch for isotropic ones)."""
    plan = TRAIN_PLAN[scheme]
    cfg = TrainConfig(seed=TRAIN_SEED,
                      batch_symbols=20,
                      max_batches=max_batches or plan["max_batches"],
                      lr=plan["lr"],
                      eps_frac=0.0,
                      with_crosstalk=chain.bank.crosstalk_in is not None)
    target = chain.scenario if chain.scenario.kind == "iso" \
        else (chain.realization, chain.precoder)
    return train_fd_dpd(fresh_dpd(scheme, chain), chain.bank, target,
                        chain.precoder.kind, OFDM, chain.p_t, cfg)


def fit_td(chain, iters=2, probe_symbols=16):
    """Per-branch indirect-learning fit on crosstalk-free chain probes."""
    probe = make_probe(chain, probe_symbols, CHANNEL_SEED + 300)
    block = probe.transpose(1, 0, 2).reshape(chain.bank.n_branches, -1)
    std = chain.bank.models[0].sat_point * 0.053 / 24.02
    rng = np.random.Generator(np.random.Philox(CHANNEL_SEED + 301))
    return ila_train_bank(chain.bank, block, TD_STRUCTURE, iters=iters,
                          gain=chain.gain, meas_noise_std=std, rng=rng)


@pytest.fixture(scope="session")
def ofdm():
    return OFDM


@pytest.fixture(scope="session")
def chains():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = make_chain(name)
        return cache[name]

    return get


@pytest.fixture(scope="session")
def trainings(chains):
    cache = {}

    def get(chain_name, scheme):
        key = (chain_name, scheme)
        if key not in cache:
            cache[key] = train_scheme(chains(chain_name), scheme)
        return cache[key]

    return get


@pytest.fixture(scope="session")
def td_fits(chains):
    cache = {}

    def get(chain_name):
        if chain_name not in cache:
            cache[chain_name] = fit_td(chains(chain_name))
        return cache[chain_name]

    return get
