"""Generalized memory polynomial (GMP) PA bank: forward model, crosstalk,
least-squares identification, and a synthetic saturating PA fixture.

A GMP with nonlinear order Q, memory length M (M+1 taps) and cross-term
length G maps u -> y as

    y[n] =   sum_{q=0}^{Q-1} sum_{m=0}^{M} a[q,m]   u[n-m] |u[n-m]|^q
           + sum_{q=1}^{Q-1} sum_{m=0}^{M} sum_{g=1}^{G} c[q-1,m,g-1] u[n-m] |u[n-m-g]|^q
           + sum_{q=1}^{Q-1} sum_{m=0}^{M} sum_{g=1}^{G} e[q-1,m,g-1] u[n-m] |u[n-m+g]|^q

with u zero outside the symbol.  Signals are complex baseband with |u|^2 in mW.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GmpStructure:
    order: int        # Q
    memory: int       # M, taps = M + 1
    cross_terms: int  # G

    def __post_init__(self):
        if self.order < 1 or self.memory < 0 or self.cross_terms < 0:
            raise ValueError("need Q >= 1, M >= 0, G >= 0")

    @property
    def n_coeffs(self):
        q, mp, g = self.order, self.memory + 1, self.cross_terms
        return q * mp + 2 * (q - 1) * mp * g


@dataclass
class GmpModel:
    structure: GmpStructure
    a: np.ndarray                  # (Q, M+1)
    c: np.ndarray                  # (Q-1, M+1, G)
    e: np.ndarray                  # (Q-1, M+1, G)
    sat_level: float = None        # input magnitude clamp (fit support edge)
    sat_point: float = None        # rated input amplitude (backoff reference)

    def __post_init__(self):
        q, mp, g = (self.structure.order, self.structure.memory + 1,
                    self.structure.cross_terms)
        self.a = np.asarray(self.a, dtype=np.complex128).reshape(q, mp)
        self.c = np.asarray(self.c, dtype=np.complex128).reshape(max(q - 1, 0), mp, g)
        self.e = np.asarray(self.e, dtype=np.complex128).reshape(max(q - 1, 0), mp, g)

    @classmethod
    def zeros(cls, structure):
        q, mp, g = structure.order, structure.memory + 1, structure.cross_terms
        return cls(structure, np.zeros((q, mp)), np.zeros((max(q - 1, 0), mp, g)),
                   np.zeros((max(q - 1, 0), mp, g)))

    @classmethod
    def identity(cls, structure):
        m = cls.zeros(structure)
        m.a[0, 0] = 1.0
        return m

    @classmethod
    def linear(cls, structure, gain):
        m = cls.zeros(structure)
        m.a[0, 0] = gain
        return m

    def coeff_vector(self):
        return np.concatenate([self.a.ravel(), self.c.ravel(), self.e.ravel()])

    @classmethod
    def from_coeff_vector(cls, structure, theta, **kw):
        q, mp, g = structure.order, structure.memory + 1, structure.cross_terms
        na = q * mp
        nc = (q - 1) * mp * g
        theta = np.asarray(theta, dtype=np.complex128)
        if theta.size != structure.n_coeffs:
            raise ValueError("coefficient vector length mismatch")
        return cls(structure, theta[:na], theta[na:na + nc], theta[na + nc:], **kw)


def shift_series(x, m):
    """x[n - m] along the last axis with zero padding (negative m looks ahead)."""
    if m == 0:
        return x
    out = np.zeros_like(x)
    if m > 0:
        out[..., m:] = x[..., :-m]
    else:
        out[..., :m] = x[..., -m:]
    return out


def mag_clip(u, level):
    """Clip |u| at ``level`` preserving phase."""
    mag = np.abs(u)
    over = mag > level
    if not np.any(over):
        return u
    out = np.array(u)
    out[over] *= level / mag[over]
    return out


def _term_shifts(structure):
    """(kind, q, m, g, m_linear, s_envelope) tuples for every GMP term, in
    exactly the order of GmpModel.coeff_vector(): all a, then all c, then all e."""
    q_max, m_max, g_max = structure.order, structure.memory, structure.cross_terms
    terms = []
    for q in range(q_max):
        for m in range(m_max + 1):
            terms.append(("a", q, m, 0, m, m))
    for kind, sign in (("c", +1), ("e", -1)):
        for q in range(1, q_max):
            for m in range(m_max + 1):
                for g in range(1, g_max + 1):
                    terms.append((kind, q, m, g, m, m + sign * g))
    return terms


def _env_powers(u, shifts, q_max):
    """Cache |u[n-s]|^q for every needed shift s and q = 0..q_max-1."""
    cache = {}
    for s in shifts:
        env = np.abs(shift_series(u, s))
        pows = [np.ones_like(env)]
        for _ in range(1, q_max):
            pows.append(pows[-1] * env)
        cache[s] = pows
    return cache


def gmp_forward(model, u):
    """Evaluate the GMP on a (..., N) series (zero-padded edges)."""
    u = np.asarray(u, dtype=np.complex128)
    if model.sat_level is not None:
        u = mag_clip(u, model.sat_level)
    st = model.structure
    terms = _term_shifts(st)
    env = _env_powers(u, {t[5] for t in terms}, st.order)
    lin = {m: shift_series(u, m) for m in range(st.memory + 1)}
    y = np.zeros_like(u)
    coeffs = {"a": model.a, "c": model.c, "e": model.e}
    for kind, q, m, g, m_lin, s_env in terms:
        coef = coeffs[kind][q, m] if kind == "a" else coeffs[kind][q - 1, m, g - 1]
        if coef != 0:
            y += coef * lin[m_lin] * env[s_env][q]
    return y


def gmp_regressor(u, structure):
    """Regression matrix Phi with one column per GMP term (a, then c, then e),
    ordered exactly like GmpModel.coeff_vector().

    ``u`` may be (..., N); leading axes are treated as independent records
    (each zero-padded at its own edges) and flattened into the row axis.
    """
    u = np.asarray(u, dtype=np.complex128)
    terms = _term_shifts(structure)
    env = _env_powers(u, {t[5] for t in terms}, structure.order)
    lin = {m: shift_series(u, m) for m in range(structure.memory + 1)}
    cols = [lin[m_lin] * env[s_env][q] for _, q, m, g, m_lin, s_env in terms]
    return np.stack(cols, axis=-1).reshape(-1, len(cols))


@dataclass
class GmpFit:
    model: GmpModel
    nmse_db: float
    cond: float


def fit_gmp_ls(inputs, outputs, structure, ridge=0.0, cond_limit=1e10):
    """Least-squares GMP identification on (input, output) records.

    The input is normalized to unit RMS before building the regressor (the
    q=6 monomials are otherwise hopelessly conditioned at physical signal
    levels) and the coefficients are rescaled back afterwards.
    """
    u = np.asarray(inputs, dtype=np.complex128).ravel()
    y = np.asarray(outputs, dtype=np.complex128).ravel()
    if u.shape != y.shape:
        raise ValueError("inputs and outputs must have equal length")
    if u.size < 3 * structure.n_coeffs:
        raise ValueError(f"need at least {3 * structure.n_coeffs} samples "
                         f"for {structure.n_coeffs} coefficients")
    rms = np.sqrt(np.mean(np.abs(u) ** 2))
    if rms == 0:
        raise ValueError("all-zero input record")
    phi = gmp_regressor(u / rms, structure)
    cond = np.linalg.cond(phi)
    if cond > cond_limit and ridge == 0.0:
        raise np.linalg.LinAlgError(
            f"regressor condition number {cond:.3g} exceeds {cond_limit:.3g}; "
            "pass ridge > 0 to regularize")
    if ridge > 0.0:
        gram = phi.conj().T @ phi + ridge * np.eye(phi.shape[1])
        theta = np.linalg.solve(gram, phi.conj().T @ y)
    else:
        theta, *_ = np.linalg.lstsq(phi, y, rcond=None)
    resid = phi @ theta - y
    nmse_db = 10.0 * np.log10(np.sum(np.abs(resid) ** 2) / np.sum(np.abs(y) ** 2))
    # undo the input normalization: a column of envelope order q scales as rms^(q+1)
    orders = np.array([q for _, q, *_ in _term_shifts(structure)])
    theta = theta / rms ** (orders + 1)
    return GmpFit(GmpModel.from_coeff_vector(structure, theta), nmse_db, cond)


# ---------------------------------------------------------------------------
# crosstalk

def crosstalk_matrix(n_antennas, level_db, decay="inverse_square"):
    """Nearest-neighbor coupling matrix for a half-wavelength ULA.

    |g| at distance 1 element equals 10^(level_db/20) and decays with the
    square of the element distance; the phase is the propagation phase of the
    physical spacing (pi per half wavelength).  Diagonal is zero.
    """
    if decay != "inverse_square":
        raise ValueError("only inverse-square decay is implemented")
    amp0 = 10.0 ** (level_db / 20.0)
    idx = np.arange(n_antennas)
    dist = np.abs(idx[:, None] - idx[None, :]).astype(float)
    with np.errstate(divide="ignore"):
        amp = np.where(dist > 0, amp0 / dist ** 2, 0.0)
    return amp * np.exp(-1j * np.pi * dist)


def apply_crosstalk(matrix, x):
    """Memoryless mixing x_b += sum_{b' != b} g[b,b'] x_b' on (..., B, N) data.

    Only the off-diagonal part of ``matrix`` couples; the identity path is
    implicit (diagonal entries are ignored).
    """
    matrix = np.asarray(matrix)
    x = np.asarray(x)
    if matrix.shape[0] != matrix.shape[1] or matrix.shape[0] != x.shape[-2]:
        raise ValueError(f"coupling matrix {matrix.shape} does not match "
                         f"{x.shape[-2]} branches")
    off = matrix - np.diag(np.diag(matrix))
    return x + np.einsum("ab,...bn->...an", off, x)


# ---------------------------------------------------------------------------
# PA bank

@dataclass
class PaBank:
    models: list                      # B GmpModel entries
    crosstalk_in: np.ndarray = None   # B x B coupling (before the PAs)
    crosstalk_out: np.ndarray = None  # B x B coupling (after the PAs)
    gain_db: float = field(default=None)  # measured average power gain

    @property
    def n_branches(self):
        return len(self.models)

    @classmethod
    def uniform(cls, model, n_branches, crosstalk_in=None, crosstalk_out=None):
        return cls([model] * n_branches, crosstalk_in, crosstalk_out)


def pa_bank_forward(bank, x, with_crosstalk=True):
    """Input crosstalk -> per-branch GMP -> output crosstalk on (..., B, N)."""
    x = np.asarray(x, dtype=np.complex128)
    b = bank.n_branches
    if x.shape[-2] != b:
        raise ValueError(f"{x.shape[-2]} branches fed into a {b}-branch bank")
    if with_crosstalk and bank.crosstalk_in is not None:
        x = apply_crosstalk(bank.crosstalk_in, x)
    if all(m is bank.models[0] for m in bank.models):
        y = gmp_forward(bank.models[0], x)  # identical PAs: one vectorized pass
    else:
        y = np.empty_like(x)
        for i, model in enumerate(bank.models):
            y[..., i, :] = gmp_forward(model, x[..., i, :])
    if with_crosstalk and bank.crosstalk_out is not None:
        y = apply_crosstalk(bank.crosstalk_out, y)
    return y


def measure_gain(bank_or_model, u, with_crosstalk=False):
    """Measured amplitude gain sqrt(mean|y|^2 / mean|u|^2) over all samples.

    This is the linear reference gain used for desired outputs and ILA
    normalization; the squared value in dB is the bank's average power gain.
    """
    u = np.asarray(u, dtype=np.complex128)
    if isinstance(bank_or_model, PaBank):
        y = pa_bank_forward(bank_or_model, u, with_crosstalk=with_crosstalk)
    else:
        y = gmp_forward(bank_or_model, u)
    pin = np.mean(np.abs(u) ** 2)
    if pin == 0:
        raise ValueError("zero-power probe")
    return np.sqrt(np.mean(np.abs(y) ** 2) / pin)


# ---------------------------------------------------------------------------
# synthetic PA fixture

FIXTURE_STRUCTURE = GmpStructure(order=7, memory=5, cross_terms=1)
_FIXTURE_GAIN = 2.0          # small-signal amplitude gain of the reference curve
_KNEE_OVER_SAT = 2.0         # Rapp knee sits above the rated input level, so the
                             # curve is invertible over most of the drive range
_CLIP_OVER_SAT = 2.2         # fitted support / input clamp, relative to rated
_MEAS_NOISE_RATIO = 0.053 / 24.02  # measurement noise std per unit rated amplitude


def rapp_response(u, knee, smoothness=2.0, gain=_FIXTURE_GAIN):
    """Soft-limiting memoryless AM/AM curve (phase preserved)."""
    mag = np.abs(u)
    return gain * u / (1.0 + (mag / knee) ** (2 * smoothness)) ** (1.0 / (2 * smoothness))


_FIXTURE_FIR = np.array([1.0,
                         0.060 * np.exp(1j * 0.50),
                         -0.018 * np.exp(-1j * 1.20),
                         0.004 * np.exp(1j * 2.40)])


def fixture_reference(u, sat_amp):
    """The curve the fixture is fitted to: Rapp followed by a short FIR."""
    v = rapp_response(u, _KNEE_OVER_SAT * sat_amp)
    y = np.zeros_like(v)
    for m, h in enumerate(_FIXTURE_FIR):
        y += h * shift_series(v, m)
    return y


def synth_pa_fixture(seed, sat_dbm=37.6, measurement_noise=True):
    """Deterministic GMP PA fixture fitted to a Rapp + memory reference.

    ``sat_dbm`` sets the rated input drive level; the soft-limiting knee sits
    2x above it (about 2 dB of compression at the edge of the fitted support)
    and the model clamps its input at that support edge, 2.2x the rated
    amplitude, where the degree-7 polynomial is last trustworthy.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    sat_amp = np.sqrt(10.0 ** (sat_dbm / 10.0))
    clip_amp = _CLIP_OVER_SAT * sat_amp
    n = 16384
    # two-level excitation: bulk at ~5 dB input backoff plus a hot minority so
    # the LS fit sees the full support up to the clip level
    u = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)
    hot = rng.random(n) < 0.25
    scale = np.where(hot, 1.2 * sat_amp, sat_amp * 10 ** (-5.0 / 20.0))
    u = mag_clip(u * scale, clip_amp)
    y = fixture_reference(u, sat_amp)
    if measurement_noise:
        std = _MEAS_NOISE_RATIO * sat_amp
        y = y + std / np.sqrt(2.0) * (rng.standard_normal(n)
                                      + 1j * rng.standard_normal(n))
    fit = fit_gmp_ls(u, y, FIXTURE_STRUCTURE)
    model = fit.model
    model.sat_level = clip_amp
    model.sat_point = sat_amp
    return model


def static_am_curve(model, amps):
    """|y| of the GMP driven by a constant-envelope input, per amplitude."""
    out = np.empty_like(np.asarray(amps, dtype=float))
    pad = 4 * (model.structure.memory + model.structure.cross_terms) + 8
    for i, a in enumerate(np.asarray(amps, dtype=float)):
        y = gmp_forward(model, np.full(pad, a, dtype=np.complex128))
        out[i] = np.abs(y[pad // 2])
    return out


def backoff_to_total_power(model, backoff_db, n_antennas, osr):
    """Total transmit power P_T that puts each branch ``backoff_db`` below the
    fixture's rated input level (mean TD branch power = P_T / (R*B))."""
    p_branch = model.sat_point ** 2 * 10.0 ** (-backoff_db / 10.0)
    return p_branch * n_antennas * osr


# ---------------------------------------------------------------------------
# PA I/O records

def save_pa_records(path, inputs, outputs):
    """Write (index, in_re, in_im, out_re, out_im) CSV with a header row."""
    u = np.asarray(inputs).ravel()
    y = np.asarray(outputs).ravel()
    if u.shape != y.shape:
        raise ValueError("inputs and outputs must have equal length")
    with open(path, "w") as fh:
        fh.write("index,in_re,in_im,out_re,out_im\n")
        for i, (a, b) in enumerate(zip(u, y)):
            fh.write(f"{i},{a.real:.17g},{a.imag:.17g},{b.real:.17g},{b.imag:.17g}\n")


def load_pa_records(path):
    with open(path) as fh:
        header = fh.readline().strip()
        if header.split(",") != ["index", "in_re", "in_im", "out_re", "out_im"]:
            raise ValueError(f"unrecognized PA record header: {header!r}")
        rows = np.loadtxt(fh, delimiter=",", ndmin=2)
    u = rows[:, 1] + 1j * rows[:, 2]
    y = rows[:, 3] + 1j * rows[:, 4]
    return u, y
