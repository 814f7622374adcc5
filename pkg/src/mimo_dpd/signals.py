"""OFDM signal generation: QAM mapping, guard-band grids, unitary (de)modulation, Welch PSD.

Conventions used throughout the package:

* Frequency-domain grids are ``streams x N`` complex arrays in natural FFT
  ordering (bin 0 = DC).  The N_d data subcarriers sit in a contiguous block
  centered on DC, i.e. bins ``[-N_d/2, N_d/2) mod N``.
* Time-domain blocks are ``branches x N`` complex arrays related to the grid
  by the unitary IDFT x[n] = (1/sqrt(N)) sum_k X[k] exp(j 2 pi k n / N), so
  energy is preserved exactly (Parseval).
* Amplitudes carry power in mW: ``|x|^2`` is instantaneous power in mW and
  10*log10(|x|^2) is dBm.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sp_signal

_QAM_ORDERS = (4, 16, 64, 256)


@dataclass(frozen=True)
class OfdmConfig:
    """OFDM numerology.

    Parameters
    ----------
    n_total : int
        IDFT size N (power of two).
    n_data : int
        Number of data subcarriers N_d; the oversampling ratio is R = N / N_d.
    subcarrier_spacing_hz : float
        Subcarrier spacing, used only to attach physical rates to outputs.
    qam_order : int
        Constellation size, one of 4 / 16 / 64 / 256.
    """

    n_total: int
    n_data: int
    subcarrier_spacing_hz: float = 120e3
    qam_order: int = 64

    def __post_init__(self):
        n, nd = self.n_total, self.n_data
        if n <= 0 or (n & (n - 1)) != 0:
            raise ValueError(f"n_total must be a power of two, got {n}")
        if nd <= 0 or n % nd != 0:
            raise ValueError(f"n_data must divide n_total ({nd} vs {n})")
        if self.qam_order not in _QAM_ORDERS:
            raise ValueError(f"qam_order must be one of {_QAM_ORDERS}")

    @property
    def osr(self):
        return self.n_total // self.n_data

    @property
    def n_guard(self):
        return self.n_total - self.n_data

    @property
    def sample_rate_hz(self):
        return self.n_total * self.subcarrier_spacing_hz

    @property
    def bandwidth_hz(self):
        return self.n_data * self.subcarrier_spacing_hz

    def data_bins(self):
        """FFT-bin indices of the data block, centered on DC, DC included."""
        nd, n = self.n_data, self.n_total
        return np.arange(-(nd // 2), nd - nd // 2) % n


@dataclass
class SignalGrid:
    """Frequency-domain signal, shape (streams, N)."""

    data: np.ndarray
    cfg: OfdmConfig

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=np.complex128))
        if self.data.shape[-1] != self.cfg.n_total:
            raise ValueError(
                f"grid width {self.data.shape[-1]} != n_total {self.cfg.n_total}")

    @property
    def n_streams(self):
        return self.data.shape[0]


@dataclass
class SignalBlock:
    """Time-domain signal, shape (branches, N)."""

    data: np.ndarray
    cfg: OfdmConfig
    sample_rate_hz: float = field(default=0.0)

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=np.complex128))
        if not self.sample_rate_hz:
            self.sample_rate_hz = self.cfg.sample_rate_hz

    @property
    def n_branches(self):
        return self.data.shape[0]


def qam_constellation(order):
    """Gray-coded square QAM constellation, unit mean power, indexed by symbol label.

    The label is the concatenation of the Gray-coded I bits (MSBs) and Q bits
    (LSBs); adjacent points along each axis differ in exactly one bit.
    """
    if order not in _QAM_ORDERS:
        raise ValueError(f"order must be one of {_QAM_ORDERS}")
    m_side = int(np.sqrt(order))
    k = m_side.bit_length() - 1  # bits per axis
    gray = np.arange(m_side) ^ (np.arange(m_side) >> 1)
    # position on the PAM axis for each Gray label
    levels = np.empty(m_side)
    levels[gray] = 2 * np.arange(m_side) - (m_side - 1)
    # unit average power: E{I^2 + Q^2} = 2*(m_side^2-1)/3
    scale = np.sqrt(3.0 / (2.0 * (order - 1)))
    pts = np.empty(order, dtype=np.complex128)
    for i_lab in range(m_side):
        for q_lab in range(m_side):
            pts[(i_lab << k) | q_lab] = scale * (levels[i_lab] + 1j * levels[q_lab])
    return pts


def map_qam(bits, order):
    """Map a bit vector onto unit-power Gray-coded square QAM symbols."""
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be 0/1")
    bps = int(np.log2(order))
    if bits.size % bps != 0:
        raise ValueError(f"bit count {bits.size} not divisible by {bps}")
    labels = bits.reshape(-1, bps) @ (1 << np.arange(bps - 1, -1, -1))
    return qam_constellation(order)[labels]


def random_symbols(rng, n_streams, n_symbols, cfg):
    """Draw (n_symbols, n_streams, N_d) fresh QAM data symbols from ``rng``."""
    bps = int(np.log2(cfg.qam_order))
    bits = rng.integers(0, 2, size=(n_symbols * n_streams * cfg.n_data * bps))
    syms = map_qam(bits, cfg.qam_order)
    return syms.reshape(n_symbols, n_streams, cfg.n_data)


def build_grid(symbols, cfg):
    """Place N_d data symbols per stream into an N-wide grid with zero guards."""
    symbols = np.atleast_2d(np.asarray(symbols, dtype=np.complex128))
    if symbols.shape[-1] != cfg.n_data:
        raise ValueError(
            f"symbol matrix has {symbols.shape[-1]} columns, expected {cfg.n_data}")
    grid = np.zeros(symbols.shape[:-1] + (cfg.n_total,), dtype=np.complex128)
    grid[..., cfg.data_bins()] = symbols
    return SignalGrid(grid, cfg) if symbols.ndim == 2 else grid


def extract_data(grid_data, cfg):
    """Inverse of build_grid: pull the data block out of an N-wide grid."""
    arr = grid_data.data if isinstance(grid_data, SignalGrid) else np.asarray(grid_data)
    return arr[..., cfg.data_bins()]


def ofdm_modulate(grid):
    """Unitary IDFT per stream: frequency-domain grid -> time-domain block."""
    td = np.fft.ifft(grid.data, axis=-1, norm="ortho")
    return SignalBlock(td, grid.cfg)


def ofdm_demodulate(block):
    """Unitary DFT per branch: time-domain block -> frequency-domain grid."""
    fd = np.fft.fft(block.data, axis=-1, norm="ortho")
    return SignalGrid(fd, block.cfg)


def estimate_psd(block, seg_len=256, overlap=0.5):
    """Welch PSD (Hann window) of a time-domain block, per-bin power.

    Returns (freqs_hz, psd) with ``psd`` summing to the mean signal power
    (density times bin width).  Multiple branches are RMS-averaged into a
    single spectrum.  Frequencies are baseband-centered (fftshift order).
    """
    data = block.data if isinstance(block, SignalBlock) else np.atleast_2d(block)
    fs = block.sample_rate_hz if isinstance(block, SignalBlock) else 1.0
    n = data.shape[-1]
    if seg_len > n:
        raise ValueError(f"segment length {seg_len} exceeds signal length {n}")
    if seg_len & (seg_len - 1):
        raise ValueError("segment length must be a power of two")
    noverlap = int(seg_len * overlap)
    f, pxx = sp_signal.welch(
        data, fs=fs, window="hann", nperseg=seg_len, noverlap=noverlap,
        axis=-1, return_onesided=False, detrend=False, scaling="density")
    pxx = pxx.mean(axis=0)  # average across branches
    # density -> power per bin, baseband-centered
    pxx = pxx * (fs / seg_len)
    return np.fft.fftshift(f), np.fft.fftshift(pxx)
