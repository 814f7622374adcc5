"""End-to-end downlink chain: symbols -> (FD DPD) -> precoder -> IDFT ->
(TD DPD) -> crosstalk -> PA bank -> channel -> demodulated symbols.

`build_chain` assembles the fixed pieces (PA fixture, channel draw, precoder)
from a scenario; `run_chain` pushes fresh symbols through with any of the DPD
schemes plugged in; `evaluate` turns one run into the metric set.
"""

from dataclasses import dataclass

import numpy as np

from .signals import OfdmConfig, random_symbols
from .channel import ChannelScenario, sample_channel, apply_channel
from .precoding import make_precoder, pathloss_inverse_weights
from . import pa as pa_mod
from .pa import PaBank, synth_pa_fixture, crosstalk_matrix, backoff_to_total_power
from .dpd import TdGmpDpd
from . import metrics as met


@dataclass
class Chain:
    ofdm: OfdmConfig
    scenario: ChannelScenario
    realization: object
    precoder: object
    bank: PaBank
    gain: float             # measured bank amplitude gain at the operating point
    p_t: float
    plan: object


def build_chain(ofdm, scenario, pa_seed, channel_seed, backoff_db=6.0,
                precoder_kind="zf", crosstalk_in_db=None, crosstalk_out_db=None,
                user_weights="equal", measurement_noise=True):
    """Fix the PA bank, channel realization and precoder of one experiment.

    ``backoff_db`` sets the total transmit power so the mean per-branch drive
    sits that far below the PA fixture's input saturation point.
    """
    model = synth_pa_fixture(pa_seed, measurement_noise=measurement_noise)
    b = scenario.n_antennas
    xt_in = crosstalk_matrix(b, crosstalk_in_db) if crosstalk_in_db is not None else None
    xt_out = crosstalk_matrix(b, crosstalk_out_db) if crosstalk_out_db is not None else None
    bank = PaBank.uniform(model, b, xt_in, xt_out)

    rng = np.random.Generator(np.random.Philox(channel_seed))
    realization = sample_channel(scenario, ofdm.n_total, rng)
    p_t = backoff_to_total_power(model, backoff_db, b, ofdm.osr)
    weights = None
    if user_weights == "pathloss_inverse":
        weights = pathloss_inverse_weights(realization.large_scale_db)
    elif user_weights != "equal":
        raise ValueError(f"unknown user weighting {user_weights!r}")
    prec = make_precoder(precoder_kind, realization, p_t, ofdm.data_bins(),
                         weights)

    probe_rng = np.random.Generator(np.random.Philox(channel_seed + 1))
    syms = random_symbols(probe_rng, scenario.n_users, 8, ofdm)
    grid = _embed_grid(syms, ofdm)
    u = np.fft.ifft(np.einsum("kbu,tuk->tbk", prec.matrices, grid),
                    axis=-1, norm="ortho")
    gain = pa_mod.measure_gain(bank, u, with_crosstalk=False)
    return Chain(ofdm, scenario, realization, prec, bank, gain, p_t,
                 met.band_plan(ofdm))


def _embed_grid(symbols, ofdm):
    grid = np.zeros(symbols.shape[:-1] + (ofdm.n_total,), dtype=np.complex128)
    grid[..., ofdm.data_bins()] = symbols
    return grid


@dataclass
class RunOutput:
    symbols: np.ndarray        # (t, U, N_d) transmitted QAM symbols
    rx_symbols: np.ndarray     # (t, U, N_d) after channel (and noise)
    branch_td: np.ndarray      # (t, B, N) PA inputs
    pa_out_td: np.ndarray      # (t, B, N) PA outputs


def run_chain(chain, dpd, n_symbols, seed, with_noise=False,
              with_crosstalk=True):
    """Push ``n_symbols`` fresh OFDM symbols through the chain with ``dpd``
    plugged in (None, a TdGmpDpd, or any frequency-domain scheme)."""
    ofdm = chain.ofdm
    rng = np.random.Generator(np.random.Philox(seed))
    syms = random_symbols(rng, chain.scenario.n_users, n_symbols, ofdm)
    grid = _embed_grid(syms, ofdm)

    if dpd is not None and not isinstance(dpd, TdGmpDpd):
        grid = dpd.predistort_var(grid, ofdm).value

    x_fd = np.einsum("kbu,tuk->tbk", chain.precoder.matrices, grid)
    u_td = np.fft.ifft(x_fd, axis=-1, norm="ortho")
    if isinstance(dpd, TdGmpDpd):
        u_td = dpd.predistort(u_td)

    y_td = pa_mod.pa_bank_forward(chain.bank, u_td,
                                  with_crosstalk=with_crosstalk)

    y_fd = np.fft.fft(y_td, axis=-1, norm="ortho")
    noise_dbm = chain.scenario.noise_power_dbm if with_noise else None
    rx_grid = apply_channel(chain.realization, y_fd, noise_power_dbm=noise_dbm,
                            rng=rng, n_data=ofdm.n_data)
    rx_symbols = rx_grid[..., ofdm.data_bins()]
    return RunOutput(syms, rx_symbols, u_td, y_td)


@dataclass
class EvalResult:
    record: met.MetricsRecord
    run: RunOutput
    bin_power: np.ndarray      # (N,) mean PA-output spectrum, natural order
    pattern: np.ndarray        # (A, N) far-field power
    angles_deg: np.ndarray


def evaluate(chain, dpd, n_symbols, seed, scheme_name, with_noise=False,
             with_crosstalk=True, per_subcarrier_evm=False, angles_deg=None):
    run = run_chain(chain, dpd, n_symbols, seed, with_noise=with_noise,
                    with_crosstalk=with_crosstalk)
    evm_pct = met.evm(run.rx_symbols, run.symbols,
                      per_subcarrier=per_subcarrier_evm)
    p_bin = met.bin_powers(run.pa_out_td)
    pattern = met.far_field_pattern(run.pa_out_td, angles_deg)
    if angles_deg is None:
        angles_deg = met.DEFAULT_ANGLES_DEG
    inband, _ = met.beam_band_powers(pattern, chain.plan)
    rec = met.MetricsRecord(
        scheme=scheme_name,
        evm_pct=np.atleast_1d(evm_pct),
        aclr_dbc=met.aclr(p_bin, chain.plan),
        trp_aclr_dbc=met.trp_aclr(pattern, chain.plan),
        sll_db=met.sll(inband),
    )
    return EvalResult(rec, run, p_bin, pattern, np.asarray(angles_deg))


def make_probe(chain, n_symbols, seed):
    """Crosstalk-free, DPD-free branch signals for TD-DPD identification."""
    run = run_chain(chain, None, n_symbols, seed, with_crosstalk=False)
    return run.branch_td
