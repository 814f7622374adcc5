"""Downlink channel models: isotropic Rayleigh taps, frequency-flat LOS, AWGN.

The per-subcarrier channel tensor ``fd`` has shape (N, B, U) and acts on a
B-branch grid as y[k] = fd[k]^T x[k] (U x B times B); ``td_taps`` holds the
matching tapped-delay-line representation (n_taps, B, U) so that fd is its
zero-padded N-point DFT along the first axis.
"""

from dataclasses import dataclass, field

import numpy as np

C_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class PathlossParams:
    median_gain_db: float   # channel gain at the 1 m reference distance
    exponent: float
    shadow_sigma_db: float = 0.0


@dataclass(frozen=True)
class ChannelScenario:
    """Static description of the propagation scenario.

    kind is "iso" (frequency-selective Rayleigh, uniform power-delay profile)
    or "los" (frequency-flat line-of-sight ULA with half-wavelength spacing).
    ue_positions is a list of (distance_m, angle_rad) with broadside = 0.
    """

    kind: str
    n_antennas: int
    n_users: int
    ue_positions: tuple
    pathloss: PathlossParams
    n_taps: int = 1
    carrier_hz: float = 30e9
    noise_power_dbm: float = -92.1

    def __post_init__(self):
        if self.kind not in ("iso", "los"):
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if len(self.ue_positions) != self.n_users:
            raise ValueError("ue_positions must have one entry per user")
        if self.n_taps < 1:
            raise ValueError("n_taps must be >= 1")
        for d, th in self.ue_positions:
            if d <= 0:
                raise ValueError("UE distance must be positive")
            if not (-np.pi / 2 <= th <= np.pi / 2):
                raise ValueError("UE angle must lie in [-pi/2, pi/2]")


@dataclass
class ChannelRealization:
    fd: np.ndarray            # (N, B, U)
    td_taps: np.ndarray       # (n_taps, B, U)
    large_scale_db: np.ndarray  # (U,)
    scenario: ChannelScenario = field(repr=False, default=None)

    @property
    def n_antennas(self):
        return self.fd.shape[1]

    @property
    def n_users(self):
        return self.fd.shape[2]


def large_scale_fading(distance_m, params, rng=None):
    """Large-scale channel gain in dB: median + pathloss slope + shadowing."""
    if np.any(np.asarray(distance_m) <= 0):
        raise ValueError("distance must be positive")
    gain = params.median_gain_db - 10.0 * params.exponent * np.log10(distance_m)
    if params.shadow_sigma_db > 0 and rng is not None:
        gain = gain + params.shadow_sigma_db * rng.standard_normal(np.shape(distance_m))
    return gain


def _taps_to_fd(td_taps, n_total):
    # DFT along the delay axis of the zero-padded taps: fd[k] = sum_t h_t e^{-j2pi kt/N}
    return np.fft.fft(td_taps, n=n_total, axis=0)


def sample_rayleigh(scenario, n_total, rng):
    """Draw an isotropic Rayleigh realization: n_taps i.i.d. CN taps per (b, u).

    Uniform power-delay profile: each tap has variance sigma_beta^2 / n_taps,
    so the per-subcarrier power E{|h[k]|^2} equals the large-scale gain.
    """
    if scenario.kind != "iso":
        raise ValueError("sample_rayleigh needs an iso scenario")
    b, u, g = scenario.n_antennas, scenario.n_users, scenario.n_taps
    dists = np.array([p[0] for p in scenario.ue_positions])
    ls_db = large_scale_fading(dists, scenario.pathloss, rng)
    sigma = np.sqrt(10.0 ** (ls_db / 10.0) / g)  # per-tap std, per UE
    taps = (rng.standard_normal((g, b, u)) + 1j * rng.standard_normal((g, b, u)))
    taps *= sigma / np.sqrt(2.0)
    return ChannelRealization(_taps_to_fd(taps, n_total), taps, ls_db, scenario)


def sample_los(scenario, n_total, rng=None):
    """Frequency-flat LOS realization for a half-wavelength ULA.

    h_b = beta * exp(-j 2 pi (f_c tau + b sin(theta) / 2)); identical on all
    subcarriers.  The absolute propagation phase f_c*tau is physically
    irrelevant to every metric but kept for completeness.
    """
    if scenario.kind != "los":
        raise ValueError("sample_los needs a los scenario")
    b, u = scenario.n_antennas, scenario.n_users
    dists = np.array([p[0] for p in scenario.ue_positions])
    angles = np.array([p[1] for p in scenario.ue_positions])
    ls_db = large_scale_fading(dists, scenario.pathloss, rng)
    beta = np.sqrt(10.0 ** (ls_db / 10.0))
    tau = dists / C_LIGHT
    ant = np.arange(b)[:, None]  # (B, 1)
    phase = -2.0 * np.pi * (scenario.carrier_hz * tau)[None, :] \
        - np.pi * ant * np.sin(angles)[None, :]
    taps = (beta[None, :] * np.exp(1j * phase))[None, :, :]  # (1, B, U)
    return ChannelRealization(_taps_to_fd(taps, n_total), taps, ls_db, scenario)


def sample_channel(scenario, n_total, rng):
    return (sample_rayleigh if scenario.kind == "iso" else sample_los)(
        scenario, n_total, rng)


def apply_channel(real, x, noise_power_dbm=None, rng=None, n_data=None):
    """Per-subcarrier channel product y[k] = fd[k]^T x[k] (+ AWGN).

    ``x`` is (..., B, N); the result is (..., U, N).  The noise power is the
    total in-band receiver noise in dBm, spread as CN(0, sigma^2/N_d) per
    subcarrier, which makes the summed noise power over the N_d data bins
    equal sigma^2.
    """
    x = np.asarray(x)
    n = real.fd.shape[0]
    if x.shape[-1] != n or x.shape[-2] != real.n_antennas:
        raise ValueError(f"branch signal shape {x.shape} does not match channel "
                         f"({real.n_antennas} antennas, {n} subcarriers)")
    y = np.einsum("kbu,...bk->...uk", real.fd, x)
    if noise_power_dbm is not None and rng is not None:
        if n_data is None:
            raise ValueError("n_data required to scale the per-bin noise")
        var_bin = 10.0 ** (noise_power_dbm / 10.0) / n_data
        w = rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
        y = y + np.sqrt(var_bin / 2.0) * w
    return y


def apply_channel_td(real, x_td):
    """Time-domain dual of apply_channel: per-(b,u) linear convolution.

    Returns (..., U, N + n_taps - 1) series.  Because the frequency-domain
    product corresponds to a circular convolution of the isolated symbol, the
    two paths agree exactly on samples n >= n_taps - 1 of the symbol (the
    first n_taps-1 samples differ by the wrap-around tail).
    """
    x_td = np.asarray(x_td)
    taps = real.td_taps  # (g, B, U)
    g = taps.shape[0]
    n = x_td.shape[-1]
    out_shape = x_td.shape[:-2] + (real.n_users, n + g - 1)
    y = np.zeros(out_shape, dtype=np.complex128)
    for t in range(g):
        y[..., :, t:t + n] += np.einsum("bu,...bn->...un", taps[t], x_td)
    return y
