"""Digital predistortion schemes and their trainers.

Four schemes are provided:

* ``TdGmpDpd``   - per-RF-branch GMP after the IDFT, fitted with the indirect
                   learning architecture (LS postdistorter copied as the
                   predistorter).
* ``FdGmpDpd``   - per-UE-stream GMP wrapped in IDFT/DFT, trained end to end.
* ``FdNnDpd``    - per-UE-sample ReLU MLP over a short tap window, in the
                   time domain between an IDFT/DFT pair, trained end to end.
* ``FdCnnDpd``   - 2D CNN acting directly on the frequency-domain data
                   symbols (guards stay exactly zero), trained end to end.

The frequency-domain schemes share one gradient trainer (``train_fd_dpd``)
that differentiates through DPD -> precoder -> IDFT -> (crosstalk) -> PA bank
-> MSE against the linearly amplified reference g * u.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Var, const, param
from . import pa as pa_mod
from .pa import GmpModel, GmpStructure, gmp_forward, gmp_regressor, fit_gmp_ls
from .precoding import make_precoder
from .channel import sample_channel
from .signals import random_symbols


def mse_loss(x, desired):
    """Mean squared complex error between PA output and the linear target."""
    x = np.asarray(x)
    desired = np.asarray(desired)
    if x.shape != desired.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {desired.shape}")
    return float(np.mean(np.abs(x - desired) ** 2))


# ---------------------------------------------------------------------------
# fused differentiable GMP (constant coefficients, e.g. the PA bank)

def _stack_bank_coeffs(bank):
    """Per-term coefficient vectors over branches for a uniform-structure bank."""
    st = bank.models[0].structure
    sat = bank.models[0].sat_level
    for m in bank.models:
        if m.structure != st or m.sat_level != sat:
            raise ValueError("differentiable bank forward needs a uniform-"
                             "structure, uniform-clamp bank")
    theta = np.stack([m.coeff_vector() for m in bank.models])  # (B, n_coeffs)
    return st, sat, theta


def gmp_apply_const(u, structure, theta, branch_axis=None):
    """Differentiable GMP with *constant* coefficients applied to Var ``u``.

    theta is (n_coeffs,) for one shared model or (B, n_coeffs) for per-branch
    models; in the latter case ``u`` is (..., B, N) and branch_axis=-2.
    Gradients flow into ``u`` only (PA parameters are frozen during DPD
    training).
    """
    u = const(u)
    uv = u.value
    terms = pa_mod._term_shifts(structure)
    theta = np.asarray(theta, dtype=np.complex128)
    per_branch = theta.ndim == 2
    if per_branch and branch_axis is None:
        branch_axis = -2

    shifts = sorted({t[4] for t in terms} | {t[5] for t in terms})
    u_sh = {s: pa_mod.shift_series(uv, s) for s in shifts}
    env_pow = {}
    for s in shifts:
        mag = np.abs(u_sh[s])
        pows = [np.ones_like(mag)]
        for _ in range(1, structure.order):
            pows.append(pows[-1] * mag)
        env_pow[s] = pows

    def coef(i):
        c = theta[:, i] if per_branch else theta[i]
        if per_branch:
            c = np.expand_dims(c, axis=-1)  # (B, 1) broadcasting over samples
        return c

    y = np.zeros_like(uv)
    for i, (_, q, _, _, m_lin, s_env) in enumerate(terms):
        y += coef(i) * u_sh[m_lin] * env_pow[s_env][q]

    def vjp(g):
        gu = np.zeros_like(uv)
        for i, (_, q, _, _, m_lin, s_env) in enumerate(terms):
            c = coef(i)
            env_q = env_pow[s_env][q]
            # linear-factor path
            gu += pa_mod.shift_series(g * np.conj(c) * env_q, -m_lin)
            if q >= 1:
                # envelope path: packed grad of |v|^q is g_h * q * |v|^(q-2) * v
                g_h = np.real(g * np.conj(c * u_sh[m_lin]))
                vs = u_sh[s_env]
                mag = env_pow[s_env][1]
                fac = np.where(mag > 0,
                               env_pow[s_env][q - 1] / np.where(mag > 0, mag, 1.0),
                               0.0)
                gu += pa_mod.shift_series(g_h * q * fac * vs, -s_env)
        return gu

    return Var(y, (u,), (vjp,))


def bank_forward_var(bank, x, with_crosstalk=True):
    """Differentiable version of pa.pa_bank_forward (uniform-structure banks)."""
    st, sat, theta = _stack_bank_coeffs(bank)
    x = const(x)
    if with_crosstalk and bank.crosstalk_in is not None:
        x = ad.mix(x, bank.crosstalk_in)
    if sat is not None:
        x = ad.vmag_clip(x, sat)
    y = gmp_apply_const(x, st, theta)
    if with_crosstalk and bank.crosstalk_out is not None:
        y = ad.mix(y, bank.crosstalk_out)
    return y


# ---------------------------------------------------------------------------
# TD-GMP with indirect learning

@dataclass
class TdGmpDpd:
    models: list  # one GmpModel per RF branch

    @property
    def n_branches(self):
        return len(self.models)

    @classmethod
    def identity(cls, structure, n_branches):
        return cls([GmpModel.identity(structure) for _ in range(n_branches)])

    def predistort(self, x):
        """Apply the per-branch GMPs to (..., B, N) time-domain data."""
        x = np.asarray(x, dtype=np.complex128)
        if x.shape[-2] != self.n_branches:
            raise ValueError(f"{x.shape[-2]} branches, DPD has {self.n_branches}")
        if all(m is self.models[0] for m in self.models):
            return gmp_forward(self.models[0], x)
        y = np.empty_like(x)
        for i, m in enumerate(self.models):
            y[..., i, :] = gmp_forward(m, x[..., i, :])
        return y


@dataclass
class IlaResult:
    model: GmpModel
    nmse_trace_db: list
    gain: float


def cascade_nmse_db(dpd_model, pa_model, probe, gain):
    """NMSE of (PA o DPD)(probe)/gain against the probe itself."""
    z = gmp_forward(pa_model, gmp_forward(dpd_model, probe)) / gain
    err = np.sum(np.abs(z - probe) ** 2)
    if err == 0.0:
        return -np.inf
    return 10.0 * np.log10(err / np.sum(np.abs(probe) ** 2))


def ila_train(pa_model, probe, structure, iters=2, gain=None,
              meas_noise_std=None, rng=None, ridge=0.0):
    """Indirect learning: LS-fit a postdistorter on (PA out / g -> PA in)
    pairs, copy it as the predistorter, iterate; returns the best iterate.

    ``meas_noise_std`` adds complex Gaussian noise to the observed PA output
    (the identification measurement), never to the cascade itself.
    """
    probe = np.asarray(probe, dtype=np.complex128).ravel()
    if gain is None:
        gain = pa_mod.measure_gain(pa_model, probe)
    dpd = GmpModel.identity(structure)
    trace = [cascade_nmse_db(dpd, pa_model, probe, gain)]
    best = (trace[0], dpd)
    for _ in range(iters):
        u_pa = gmp_forward(dpd, probe)          # current PA input
        y = gmp_forward(pa_model, u_pa)         # observed PA output
        if meas_noise_std and rng is not None:
            y = y + meas_noise_std / np.sqrt(2.0) * (
                rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))
        fit = fit_gmp_ls(y / gain, u_pa, structure, ridge=ridge)
        dpd = fit.model
        # clamp the predistorter at its fitted support edge: beyond it the
        # polynomial extrapolates and the PA has no headroom left anyway
        dpd.sat_level = float(np.max(np.abs(y))) / gain
        trace.append(cascade_nmse_db(dpd, pa_model, probe, gain))
        if trace[-1] < best[0]:
            best = (trace[-1], dpd)
    return IlaResult(best[1], trace, gain)


def ila_train_bank(bank, probe_block, structure, iters=2, gain=None,
                   meas_noise_std=None, rng=None):
    """Per-branch ILA over a PA bank; probe_block is (B, N) branch signals.

    Each branch is identified in isolation (no crosstalk): the classic ILA
    feedback taps the PA itself, not the coupled array.
    """
    probe_block = np.atleast_2d(probe_block)
    if gain is None:
        gain = pa_mod.measure_gain(bank, probe_block, with_crosstalk=False)
    models = []
    for b in range(bank.n_branches):
        res = ila_train(bank.models[b], probe_block[b], structure, iters,
                        gain=gain, meas_noise_std=meas_noise_std, rng=rng)
        models.append(res.model)
    return TdGmpDpd(models)


# ---------------------------------------------------------------------------
# frequency-domain schemes

class FdGmpDpd:
    """Per-UE GMP between an IDFT/DFT pair; linear in its coefficients."""

    kind = "fd_gmp"

    def __init__(self, n_users, structure=GmpStructure(7, 3, 1)):
        self.n_users = n_users
        self.structure = structure
        ident = GmpModel.identity(structure).coeff_vector()
        self.thetas = [param(ident.reshape(-1, 1)) for _ in range(n_users)]

    def params(self):
        return list(self.thetas)

    def predistort_var(self, grid, cfg):
        grid = const(grid)
        if grid.requires_grad:
            raise ValueError("FD-GMP treats its input grid as constant")
        gv = np.atleast_3d(grid.value)            # (t, U, N)
        t, u_cnt, n = gv.shape
        if u_cnt != self.n_users:
            raise ValueError(f"{u_cnt} streams, DPD has {self.n_users}")
        td = np.fft.ifft(gv, axis=-1, norm="ortho")
        outs = []
        for u in range(self.n_users):
            phi = gmp_regressor(td[:, u, :], self.structure)   # (t*N, F)
            y = ad.matmul(const(phi), self.thetas[u])          # (t*N, 1)
            outs.append(ad.reshape(y, (t, 1, n)))
        y_td = ad.concat(outs, axis=1)
        return ad.fft_u(y_td)


class FdNnDpd:
    """Per-sample ReLU MLP over the current and M_FD past samples of all UEs."""

    kind = "fd_nn"

    def __init__(self, n_users, memory=3, width=15, hidden_layers=1, rng=None):
        if hidden_layers < 1:
            raise ValueError("need at least one hidden layer")
        self.n_users = n_users
        self.memory = memory
        self.width = width
        self.hidden_layers = hidden_layers
        f_in = 2 * n_users * (memory + 1)
        sizes = [f_in] + [width] * hidden_layers + [2 * n_users]
        self.weights, self.biases = [], []
        for a, b in zip(sizes[:-1], sizes[1:]):
            w = _init_uniform(rng, (a, b), a)
            self.weights.append(param(w))
            self.biases.append(param(np.zeros(b)))

    @classmethod
    def identity(cls, n_users, memory=3):
        """Exact passthrough: relu(x) - relu(-x) = x per current-tap feature."""
        net = cls(n_users, memory, width=4 * n_users, hidden_layers=1)
        w1 = np.zeros((2 * n_users * (memory + 1), 4 * n_users))
        w2 = np.zeros((4 * n_users, 2 * n_users))
        for j in range(2 * n_users):  # tap-0 features occupy the first 2U slots
            w1[j, 2 * j] = 1.0
            w1[j, 2 * j + 1] = -1.0
            w2[2 * j, j] = 1.0
            w2[2 * j + 1, j] = -1.0
        net.weights[0].value[...] = w1
        net.weights[1].value[...] = w2
        return net

    def params(self):
        return list(self.weights) + list(self.biases)

    def _features(self, td):
        """(t, U, N) complex -> (t*N, 2U(M+1)) real, tap-major layout."""
        t, u_cnt, n = td.shape
        blocks = []
        for tap in range(self.memory + 1):
            sh = pa_mod.shift_series(td, tap)           # (t, U, N)
            ch = np.empty((t, 2 * u_cnt, n))
            ch[:, 0::2, :] = sh.real
            ch[:, 1::2, :] = sh.imag
            blocks.append(np.moveaxis(ch, 1, 2))        # (t, N, 2U)
        return np.concatenate(blocks, axis=-1).reshape(t * n, -1)

    def predistort_var(self, grid, cfg):
        grid = const(grid)
        if grid.requires_grad:
            raise ValueError("FD-NN treats its input grid as constant")
        gv = np.atleast_3d(grid.value)
        t, u_cnt, n = gv.shape
        if u_cnt != self.n_users:
            raise ValueError(f"{u_cnt} streams, DPD has {self.n_users}")
        td = np.fft.ifft(gv, axis=-1, norm="ortho")
        h = const(self._features(td))
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = ad.add(ad.matmul(h, w), b)
            if i < len(self.weights) - 1:
                h = ad.vrelu(h)
        out = ad.moveaxis(ad.reshape(h, (t, n, 2 * u_cnt)), 1, 2)  # (t, 2U, N)
        re = ad.take(out, np.arange(0, 2 * u_cnt, 2), axis=1)
        im = ad.take(out, np.arange(1, 2 * u_cnt, 2), axis=1)
        return ad.fft_u(ad.make_complex(re, im))


class FdCnnDpd:
    """Two SAME-padded 2D conv layers over square-reshaped data symbols, then
    one linear layer per UE back to 2*N_d outputs; guards stay exactly zero."""

    kind = "fd_cnn"

    def __init__(self, n_users, n_data, kernels=20, kernel_size=3, stride=1,
                 rng=None):
        self.n_users = n_users
        self.n_data = n_data
        self.kernels = kernels
        self.kernel_size = kernel_size
        self.stride = stride
        self.side = int(np.ceil(np.sqrt(n_data)))
        self.out_side = -(-self.side // stride)
        k, u = kernel_size, n_users
        self.conv1_w = param(_init_uniform(rng, (kernels, 2 * u, k, k), 2 * u * k * k))
        self.conv1_b = param(np.zeros(kernels))
        self.conv2_w = param(_init_uniform(rng, (2 * u, kernels, k, k), kernels * k * k))
        self.conv2_b = param(np.zeros(2 * u))
        f_fc = 2 * self.out_side ** 2
        self.fc_w = param(_init_uniform(rng, (u, 2 * n_data, f_fc), f_fc))
        self.fc_b = param(np.zeros((u, 2 * n_data)))

    @classmethod
    def identity(cls, n_users, n_data, kernel_size=3, lift=10.0):
        """Exact passthrough built with center-tap kernels and bias lifting.

        ReLU is transparent once the signal is shifted by a constant larger
        than any |Re/Im| of the symbols; the final linear layer removes the
        shift.  Needs stride 1 and one kernel per real channel.
        """
        u = n_users
        net = cls(n_users, n_data, kernels=2 * u, kernel_size=kernel_size, stride=1)
        ctr = kernel_size // 2
        w = np.zeros((2 * u, 2 * u, kernel_size, kernel_size))
        for c in range(2 * u):
            w[c, c, ctr, ctr] = 1.0
        net.conv1_w.value[...] = w
        net.conv1_b.value[...] = lift
        net.conv2_w.value[...] = w
        net.conv2_b.value[...] = 0.0  # second layer keeps the +lift offset
        side = net.side
        fc = np.zeros((u, 2 * n_data, 2 * side * side))
        for i in range(n_data):
            fc[:, i, i] = 1.0                      # Re channel pixels
            fc[:, n_data + i, side * side + i] = 1.0  # Im channel pixels
        net.fc_w.value[...] = fc
        net.fc_b.value[...] = -lift
        return net

    def params(self):
        return [self.conv1_w, self.conv1_b, self.conv2_w, self.conv2_b,
                self.fc_w, self.fc_b]

    def predistort_var(self, grid, cfg):
        grid = const(grid)
        if grid.requires_grad:
            raise ValueError("FD-CNN treats its input grid as constant")
        gv = np.atleast_3d(grid.value)
        t, u_cnt, n = gv.shape
        if u_cnt != self.n_users:
            raise ValueError(f"{u_cnt} streams, DPD has {self.n_users}")
        bins = cfg.data_bins()
        syms = gv[..., bins]                       # (t, U, N_d)
        ch = np.empty((t, 2 * u_cnt, self.n_data))
        ch[:, 0::2, :] = syms.real
        ch[:, 1::2, :] = syms.imag
        pad = self.side ** 2 - self.n_data
        if pad:
            ch = np.pad(ch, ((0, 0), (0, 0), (0, pad)))
        x = const(ch.reshape(t, 2 * u_cnt, self.side, self.side))
        h = ad.vrelu(ad.add(ad.conv2d(x, self.conv1_w, self.stride),
                            ad.reshape(self.conv1_b, (1, -1, 1, 1))))
        h = ad.vrelu(ad.add(ad.conv2d(h, self.conv2_w, 1),
                            ad.reshape(self.conv2_b, (1, -1, 1, 1))))
        # channel pair (2u, 2u+1) is one UE: flatten pairwise
        flat = ad.reshape(h, (t, u_cnt, 2 * self.out_side ** 2))
        out = ad.add(ad.per_group_matmul(flat, self.fc_w), self.fc_b)
        re = ad.take(out, np.arange(self.n_data), axis=-1)
        im = ad.take(out, np.arange(self.n_data, 2 * self.n_data), axis=-1)
        return ad.embed(ad.make_complex(re, im), bins, n, axis=-1)


def _init_uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    if rng is None:
        return np.zeros(shape)
    return rng.uniform(-bound, bound, size=shape)


# functional wrappers over SignalGrid / SignalBlock ------------------------

def td_gmp_predistort(dpd, block):
    from .signals import SignalBlock
    return SignalBlock(dpd.predistort(block.data), block.cfg)


def _fd_predistort(dpd, grid):
    from .signals import SignalGrid
    out = dpd.predistort_var(grid.data[None], grid.cfg).value[0]
    return SignalGrid(out, grid.cfg)


fd_gmp_predistort = _fd_predistort
fd_nn_predistort = _fd_predistort
fd_cnn_predistort = _fd_predistort


# ---------------------------------------------------------------------------
# Algorithm-style gradient training for the FD schemes

@dataclass
class TrainConfig:
    seed: int
    batch_symbols: int = 100
    max_batches: int = 5000
    lr: float = 1e-3
    eps_frac: float = 0.01        # loss threshold as a fraction of batch-0 loss
    with_crosstalk: bool = False
    gain_probe_symbols: int = 8
    diverge_factor: float = 10.0
    diverge_patience: int = 100


@dataclass
class TrainResult:
    dpd: object
    losses: np.ndarray
    n_batches: int
    stop_reason: str      # "threshold" | "max_batches"
    eps: float
    gain: float


class TrainingDiverged(RuntimeError):
    def __init__(self, msg, losses):
        super().__init__(msg)
        self.losses = np.asarray(losses)


def train_fd_dpd(dpd, bank, scenario, precoder_kind, ofdm, p_t, cfg,
                 user_weights=None):
    """Gradient training of a frequency-domain DPD against a GMP PA bank.

    ``scenario`` is either a ChannelScenario (isotropic kinds draw a fresh
    realization and precoder every mini-batch, LOS fixes them once) or a
    ready (realization, precoder) tuple for fully pinned runs.  The desired
    PA output is g * u with u the DPD-free precoded branch signal and g the
    bank's measured amplitude gain.  When crosstalk is part of the training
    loop the linear coupling is folded into the target as well (desired =
    g * XT_out XT_in u): branch mixing is a property of the linear system
    the receiver equalizes, so the loss should only charge the DPD for the
    nonlinear part it can actually remove.
    """
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    n_users = scenario[1].n_users if isinstance(scenario, tuple) \
        else scenario.n_users
    bins = ofdm.data_bins()

    def fresh_precoder():
        if isinstance(scenario, tuple):
            return scenario
        real = sample_channel(scenario, ofdm.n_total, rng)
        prec = make_precoder(precoder_kind, real, p_t, bins, user_weights)
        return real, prec

    resample = (not isinstance(scenario, tuple)) and scenario.kind == "iso"
    real, prec = fresh_precoder()

    # measured amplitude gain of the bank at the no-DPD operating point
    syms = random_symbols(rng, n_users, cfg.gain_probe_symbols, ofdm)
    grid = np.zeros(syms.shape[:-1] + (ofdm.n_total,), dtype=np.complex128)
    grid[..., bins] = syms
    u_probe = np.fft.ifft(np.einsum("kbu,tuk->tbk", prec.matrices, grid),
                          axis=-1, norm="ortho")
    gain = pa_mod.measure_gain(bank, u_probe, with_crosstalk=False)

    opt = ad.Adam(dpd.params(), lr=cfg.lr)
    losses = []
    eps = None
    bad_streak = 0
    stop_reason = "max_batches"
    for batch in range(cfg.max_batches):
        if resample and batch > 0:
            real, prec = fresh_precoder()
        syms = random_symbols(rng, n_users, cfg.batch_symbols, ofdm)
        grid = np.zeros(syms.shape[:-1] + (ofdm.n_total,), dtype=np.complex128)
        grid[..., bins] = syms

        u_clean = np.fft.ifft(np.einsum("kbu,tuk->tbk", prec.matrices, grid),
                              axis=-1, norm="ortho")
        u_lin = u_clean
        if cfg.with_crosstalk:
            if bank.crosstalk_in is not None:
                u_lin = pa_mod.apply_crosstalk(bank.crosstalk_in, u_lin)
            if bank.crosstalk_out is not None:
                u_lin = pa_mod.apply_crosstalk(bank.crosstalk_out, u_lin)
        desired = gain * u_lin

        s_dpd = dpd.predistort_var(const(grid), ofdm)
        x_fd = ad.precode_apply(s_dpd, prec.matrices)
        u_td = ad.ifft_u(x_fd)
        y = bank_forward_var(bank, u_td, with_crosstalk=cfg.with_crosstalk)
        loss = ad.mse(y, desired)
        lval = float(loss.value)
        losses.append(lval)
        if eps is None:
            eps = cfg.eps_frac * lval
        if lval <= eps:  # threshold check wins over the batch budget
            stop_reason = "threshold"
            break
        if lval > cfg.diverge_factor * losses[0]:
            bad_streak += 1
            if bad_streak >= cfg.diverge_patience:
                raise TrainingDiverged(
                    f"loss {lval:.3g} stayed above {cfg.diverge_factor}x the "
                    f"initial loss for {bad_streak} batches", losses)
        else:
            bad_streak = 0
        ad.backward(loss)
        opt.step()
        opt.zero_grad()
    return TrainResult(dpd, np.asarray(losses), len(losses), stop_reason,
                       eps, gain)


def smoothed(losses, window=50):
    """Moving average used for convergence bookkeeping on loss traces."""
    losses = np.asarray(losses, dtype=float)
    if losses.size < window:
        window = max(1, losses.size)
    kernel = np.ones(window) / window
    return np.convolve(losses, kernel, mode="valid")


# ---------------------------------------------------------------------------
# checkpoints

def save_dpd(path, dpd):
    """Bit-exact scheme checkpoint: structure metadata plus parameter arrays."""
    arrays = {}
    if isinstance(dpd, TdGmpDpd):
        st = dpd.models[0].structure
        meta = {"kind": "td_gmp", "n_branches": dpd.n_branches,
                "structure": [st.order, st.memory, st.cross_terms]}
        for i, m in enumerate(dpd.models):
            arrays[f"theta_{i}"] = m.coeff_vector()
    elif isinstance(dpd, FdGmpDpd):
        st = dpd.structure
        meta = {"kind": "fd_gmp", "n_users": dpd.n_users,
                "structure": [st.order, st.memory, st.cross_terms]}
        for i, th in enumerate(dpd.thetas):
            arrays[f"theta_{i}"] = th.value
    elif isinstance(dpd, FdNnDpd):
        meta = {"kind": "fd_nn", "n_users": dpd.n_users, "memory": dpd.memory,
                "width": dpd.width, "hidden_layers": dpd.hidden_layers}
        for i, (w, b) in enumerate(zip(dpd.weights, dpd.biases)):
            arrays[f"w_{i}"] = w.value
            arrays[f"b_{i}"] = b.value
    elif isinstance(dpd, FdCnnDpd):
        meta = {"kind": "fd_cnn", "n_users": dpd.n_users, "n_data": dpd.n_data,
                "kernels": dpd.kernels, "kernel_size": dpd.kernel_size,
                "stride": dpd.stride}
        names = ["conv1_w", "conv1_b", "conv2_w", "conv2_b", "fc_w", "fc_b"]
        for name in names:
            arrays[name] = getattr(dpd, name).value
    else:
        raise TypeError(f"cannot checkpoint {type(dpd).__name__}")
    np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
             **arrays)


def load_dpd(path):
    with np.load(path) as z:
        meta = json.loads(bytes(z["meta"]))
        kind = meta["kind"]
        if kind == "td_gmp":
            st = GmpStructure(*meta["structure"])
            models = [GmpModel.from_coeff_vector(st, z[f"theta_{i}"])
                      for i in range(meta["n_branches"])]
            return TdGmpDpd(models)
        if kind == "fd_gmp":
            st = GmpStructure(*meta["structure"])
            dpd = FdGmpDpd(meta["n_users"], st)
            for i in range(meta["n_users"]):
                dpd.thetas[i].value[...] = z[f"theta_{i}"]
            return dpd
        if kind == "fd_nn":
            dpd = FdNnDpd(meta["n_users"], meta["memory"], meta["width"],
                          meta["hidden_layers"])
            for i in range(len(dpd.weights)):
                dpd.weights[i].value[...] = z[f"w_{i}"]
                dpd.biases[i].value[...] = z[f"b_{i}"]
            return dpd
        if kind == "fd_cnn":
            dpd = FdCnnDpd(meta["n_users"], meta["n_data"], meta["kernels"],
                           meta["kernel_size"], meta["stride"])
            for name in ["conv1_w", "conv1_b", "conv2_w", "conv2_b",
                         "fc_w", "fc_b"]:
                getattr(dpd, name).value[...] = z[name]
            return dpd
    raise ValueError(f"unknown checkpoint kind {kind!r}")
