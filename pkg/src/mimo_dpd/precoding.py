"""Linear downlink precoders (MRT, ZF) with a single global power normalization.

With the channel convention y[k] = fd[k]^T x[k] (fd shaped N x B x U), the
precoders read

    MRT:  W0[k] = conj(fd[k])
    ZF:   W0[k] = conj(fd[k]) (fd[k]^T conj(fd[k]))^-1

so the ZF product satisfies fd[k]^T W[k] = alpha * I_U.  One global alpha is
fitted so the ensemble-average transmit power per data subcarrier equals P_T
for unit-power i.i.d. symbols: alpha^2 * mean_k ||W0[k]||_F^2 = P_T.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class Precoder:
    kind: str                # "mrt" | "zf" | "flat"
    matrices: np.ndarray     # (N, B, U), includes alpha
    norm_factor: float       # alpha
    p_t: float

    @property
    def n_antennas(self):
        return self.matrices.shape[1]

    @property
    def n_users(self):
        return self.matrices.shape[2]


def _normalize(w0, p_t, data_bins, user_weights=None):
    """Scale W0 by one global alpha (and optional per-UE weights) to meet P_T."""
    if user_weights is not None:
        w0 = w0 * np.sqrt(np.asarray(user_weights))[None, None, :]
    mean_fro = np.mean(np.sum(np.abs(w0[data_bins]) ** 2, axis=(1, 2)))
    if mean_fro <= 0:
        raise ValueError("precoder is identically zero on the data bins")
    alpha = np.sqrt(p_t / mean_fro)
    return alpha * w0, alpha


def mrt(real, p_t, data_bins=None, user_weights=None):
    """Maximum ratio transmission: per-subcarrier conjugate beamforming."""
    if not np.any(real.fd):
        raise ValueError("all-zero channel")
    if data_bins is None:
        data_bins = np.arange(real.fd.shape[0])
    w, alpha = _normalize(np.conj(real.fd), p_t, data_bins, user_weights)
    return Precoder("mrt", w, alpha, p_t)


def flat(real, p_t, data_bins=None, user_weights=None):
    """Uniform weights without channel knowledge: W0[k] = 1 on the data bins.

    Models a legacy transmitter that maps every stream to every branch with
    equal amplitude and no phase steering.  Useful as the power-matched
    single-antenna baseline when comparing against a precoded array.
    """
    n, b, u = real.fd.shape
    if data_bins is None:
        data_bins = np.arange(n)
    w = np.zeros((n, b, u), dtype=complex)
    w[data_bins] = 1.0
    w, alpha = _normalize(w, p_t, data_bins, user_weights)
    return Precoder("flat", w, alpha, p_t)


def zf(real, p_t, data_bins=None, user_weights=None):
    """Zero forcing via the channel pseudo-inverse, per subcarrier.

    Only the data bins are solved (guards carry no symbols and keep W = 0);
    a rank-deficient data subcarrier raises with its index.
    """
    n, b, u = real.fd.shape
    if u > b:
        raise ValueError(f"ZF needs U <= B, got U={u}, B={b}")
    if data_bins is None:
        data_bins = np.arange(n)
    w = np.zeros_like(real.fd)
    h = real.fd[data_bins]                      # (nd, B, U)
    gram = np.einsum("kbu,kbv->kuv", h, np.conj(h))  # fd^T conj(fd), (nd, U, U)
    cond = np.linalg.cond(gram)
    bad = np.where(~np.isfinite(cond) | (cond > 1e12))[0]
    if bad.size:
        raise np.linalg.LinAlgError(
            f"rank-deficient channel at subcarrier index {data_bins[bad[0]]}")
    w[data_bins] = np.einsum("kbu,kuv->kbv", np.conj(h), np.linalg.inv(gram))
    w, alpha = _normalize(w, p_t, data_bins, user_weights)
    return Precoder("zf", w, alpha, p_t)


def make_precoder(kind, real, p_t, data_bins=None, user_weights=None):
    fns = {"mrt": mrt, "zf": zf, "flat": flat}
    if kind not in fns:
        raise ValueError(f"unknown precoder kind {kind!r}")
    return fns[kind](real, p_t, data_bins, user_weights)


def precode(precoder, s):
    """Apply x[k] = W[k] s[k] per subcarrier; s is (..., U, N) -> (..., B, N)."""
    s = np.asarray(s)
    n, _, u = precoder.matrices.shape
    if s.shape[-1] != n or s.shape[-2] != u:
        raise ValueError(f"symbol grid shape {s.shape} does not match precoder "
                         f"({u} users, {n} subcarriers)")
    return np.einsum("kbu,...uk->...bk", precoder.matrices, s)


def pathloss_inverse_weights(large_scale_db):
    """Per-UE power weights proportional to inverse channel gain, mean 1.

    Used by the pathloss-based power-allocation preset: weaker UEs get more
    transmit power so service quality stays uniform.
    """
    inv = 10.0 ** (-np.asarray(large_scale_db, dtype=float) / 10.0)
    return inv * (inv.size / inv.sum())
