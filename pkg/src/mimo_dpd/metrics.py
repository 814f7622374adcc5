"""Linearity and beam-domain metrics: EVM, ACLR, far-field patterns,
radiated (TRP) ACLR, sidelobe level, and victim-position OOB statistics.

Amplitudes are in sqrt(mW) throughout, so squared magnitudes are mW and
10*log10(.) of them is dBm.
"""

import os
import dataclasses
from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .channel import sample_channel

DEFAULT_ANGLES_DEG = np.linspace(-90.0, 90.0, 721)


@dataclass(frozen=True)
class BandPlan:
    """Natural-FFT-order bin indices of the data block and the two adjacent
    blocks of equal width that flank it in centered-spectrum order."""
    n_total: int
    n_data: int
    data: np.ndarray
    adj_left: np.ndarray
    adj_right: np.ndarray


def band_plan(cfg):
    if cfg.osr < 3:
        raise ValueError("adjacent-channel bands need an oversampling "
                         f"ratio of at least 3, got {cfg.osr}")
    nd, n = cfg.n_data, cfg.n_total
    half = nd // 2
    data = cfg.data_bins()
    left = np.arange(-half - nd, -half) % n
    right = np.arange(nd - half, nd - half + nd) % n
    return BandPlan(n, nd, data, left, right)


def evm(rx, ref, per_subcarrier=False):
    """Per-UE EVM in percent between received and reference data symbols.

    Shapes are (..., U, N_d); leading axes are averaged.  A complex LS scale
    per UE (or per UE and subcarrier with ``per_subcarrier``) absorbs the
    common gain/rotation before the error is measured.
    """
    rx = np.asarray(rx, dtype=np.complex128)
    ref = np.asarray(ref, dtype=np.complex128)
    if rx.shape != ref.shape:
        raise ValueError(f"shape mismatch {rx.shape} vs {ref.shape}")
    rx = rx.reshape((-1,) + rx.shape[-2:])
    ref = ref.reshape((-1,) + ref.shape[-2:])
    if per_subcarrier:
        num = np.sum(np.conj(ref) * rx, axis=0, keepdims=True)
        den = np.sum(np.abs(ref) ** 2, axis=0, keepdims=True)
    else:
        num = np.sum(np.conj(ref) * rx, axis=(0, 2), keepdims=True)
        den = np.sum(np.abs(ref) ** 2, axis=(0, 2), keepdims=True)
    c = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    err = np.sum(np.abs(rx - c * ref) ** 2, axis=(0, 2))
    sig = np.sum(np.abs(c * ref) ** 2, axis=(0, 2))
    return 100.0 * np.sqrt(err / sig)


def bin_powers(x_td):
    """Mean per-bin power (mW) of (..., N) time-domain symbols, all leading
    axes averaged; the spectrum stays in natural FFT order."""
    spec = np.fft.fft(np.asarray(x_td), axis=-1, norm="ortho")
    p = np.abs(spec) ** 2
    return p.reshape(-1, p.shape[-1]).mean(axis=0)


ACLR_SENTINEL_DB = 200.0


def aclr(power_per_bin, plan):
    """Worst-side adjacent-channel leakage ratio, in dB (in-band over the
    larger adjacent-band power; large sentinel when both are exactly zero)."""
    p = np.asarray(power_per_bin)
    inband = p[plan.data].sum()
    adj = max(p[plan.adj_left].sum(), p[plan.adj_right].sum())
    if adj == 0.0:
        return ACLR_SENTINEL_DB
    return 10.0 * np.log10(inband / adj)


def far_field_pattern(x_td, angles_deg=None):
    """Per-angle, per-bin radiated power of a ULA with half-wavelength
    spacing: mean_t |sum_b exp(-j pi b sin(theta)) X_b[k]|^2.

    x_td is (..., B, N) branch time series; returns (A, N) in mW.
    """
    if angles_deg is None:
        angles_deg = DEFAULT_ANGLES_DEG
    x = np.asarray(x_td, dtype=np.complex128)
    x = x.reshape((-1,) + x.shape[-2:])
    spec = np.fft.fft(x, axis=-1, norm="ortho")           # (t, B, N)
    b = np.arange(x.shape[-2])
    steer = np.exp(-1j * np.pi * np.outer(np.sin(np.radians(angles_deg)), b))
    # going through the per-bin branch covariance keeps the memory bounded by
    # (N, B, B) + (A, N) instead of (A, t, N)
    cov = np.einsum("tbk,tck->kbc", spec, np.conj(spec)) / spec.shape[0]
    pattern = np.einsum("ab,kbc,ac->ak", steer, cov, np.conj(steer),
                        optimize=True)
    return np.maximum(pattern.real, 0.0)


def beam_band_powers(pattern, plan):
    """(in-band, OOB) power versus angle; OOB sums both adjacent bands."""
    inband = pattern[:, plan.data].sum(axis=1)
    oob = pattern[:, plan.adj_left].sum(axis=1) + pattern[:, plan.adj_right].sum(axis=1)
    return inband, oob


def trp_aclr(pattern, plan):
    """ACLR of total radiated power: angle-summed (uniform weights) in-band
    power over the worse angle-summed adjacent band, in dB."""
    inband = pattern[:, plan.data].sum()
    adj = max(pattern[:, plan.adj_left].sum(), pattern[:, plan.adj_right].sum())
    if adj == 0.0:
        return ACLR_SENTINEL_DB
    return 10.0 * np.log10(inband / adj)


def sll(power, angles_deg=None):
    """Sidelobe level in dB: the largest local maximum outside the main
    lobe's contiguous -3 dB region, relative to the peak."""
    p = np.asarray(power, dtype=float)
    i0 = int(np.argmax(p))
    peak = p[i0]
    if peak <= 0:
        raise ValueError("pattern has no power")
    thr = peak * 10.0 ** (-3.0 / 10.0)
    lo = i0
    while lo > 0 and p[lo - 1] >= thr:
        lo -= 1
    hi = i0
    while hi < p.size - 1 and p[hi + 1] >= thr:
        hi += 1
    best = 0.0
    for i in range(p.size):
        if lo <= i <= hi:
            continue
        left_ok = i == 0 or p[i] >= p[i - 1]
        right_ok = i == p.size - 1 or p[i] >= p[i + 1]
        if left_ok and right_ok and p[i] > best:
            best = p[i]
    if best == 0.0:
        return -np.inf
    return 10.0 * np.log10(best / peak)


# ---------------------------------------------------------------------------
# victim-position OOB statistics

def _worker_count():
    env = os.environ.get("MIMO_DPD_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def oob_victim_cdf(x_td, serving, plan, scenario, n_victims=200, rng=None):
    """OOB power at randomly placed victim receivers, relative to the in-band
    power delivered to the served users; returns the sorted dB ratios.

    Victims share the serving distance but draw fresh small-scale fading
    (and, for LOS, a uniform random angle) with shadowing disabled, so the
    spread of the CDF reflects the fading statistics alone.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    x = np.asarray(x_td, dtype=np.complex128)
    x = x.reshape((-1,) + x.shape[-2:])
    spec = np.fft.fft(x, axis=-1, norm="ortho")            # (t, B, N)

    rx_srv = np.einsum("kbu,tbk->tuk", serving.fd, spec)
    inband = np.mean(np.sum(np.abs(rx_srv[..., plan.data]) ** 2, axis=-1))

    dist = scenario.ue_positions[0][0]
    quiet = dataclasses.replace(scenario.pathloss, shadow_sigma_db=0.0)
    oob_bins = np.concatenate([plan.adj_left, plan.adj_right])

    def one_victim(seed_angle):
        seed, angle = seed_angle
        vic_scn = dataclasses.replace(
            scenario, n_users=1, ue_positions=((dist, angle),), pathloss=quiet)
        real = sample_channel(vic_scn, plan.n_total,
                              np.random.Generator(np.random.Philox(seed)))
        rx = np.einsum("kb,tbk->tk", real.fd[:, :, 0], spec)
        return np.mean(np.sum(np.abs(rx[..., oob_bins]) ** 2, axis=-1))

    seeds = rng.integers(0, 2 ** 62, size=n_victims)
    angles = rng.uniform(-np.pi / 2, np.pi / 2, size=n_victims)
    with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        powers = list(pool.map(one_victim, zip(seeds, angles)))
    ratios = 10.0 * np.log10(np.asarray(powers) / inband)
    return np.sort(ratios)


@dataclass
class MetricsRecord:
    scheme: str
    evm_pct: np.ndarray      # one entry per UE
    aclr_dbc: float
    trp_aclr_dbc: float
    sll_db: float
