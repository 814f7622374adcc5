"""Minimal reverse-mode differentiation over numpy arrays, plus Adam.

Complex quantities are differentiated in real-pair form: the gradient stored
for a complex node z is the packed array

    g = dL/d Re(z) + 1j * dL/d Im(z)

(equal to 2 * dL/d conj(z) in Wirtinger terms), and for a real node it is the
plain real gradient.  This makes every rule below a two-line adjoint and lets
Adam treat a complex parameter as an interleaved pair of real ones.

The graph is built eagerly: each op returns a `Var` holding its value, its
parents and one vector-Jacobian closure per parent.  `backward(loss)` walks
the graph once in reverse topological order; a second walk over the same
nodes raises (single-use tape).
"""

import numpy as np

__all__ = [
    "Var", "const", "param", "backward",
    "add", "sub", "neg", "mul", "vconj", "vreal", "vimag", "make_complex",
    "vabs_pow", "vmag_clip", "vshift", "fft_u", "ifft_u", "take", "embed",
    "reshape", "moveaxis", "pad_last", "concat", "vrelu", "matmul",
    "per_group_matmul", "conv2d", "precode_apply", "mix", "mse",
    "Adam", "numeric_grad",
]


class Var:
    __slots__ = ("value", "parents", "vjps", "requires_grad", "grad", "_used")

    def __init__(self, value, parents=(), vjps=(), requires_grad=None):
        self.value = np.asarray(value)
        if self.value.dtype == np.complex64:
            self.value = self.value.astype(np.complex128)
        elif self.value.dtype not in (np.complex128, np.float64):
            if not np.iscomplexobj(self.value):
                self.value = self.value.astype(np.float64)
        self.parents = tuple(parents)
        self.vjps = tuple(vjps)
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in self.parents)
        self.requires_grad = requires_grad
        self.grad = None
        self._used = False

    @property
    def shape(self):
        return self.value.shape

    @property
    def is_complex(self):
        return np.iscomplexobj(self.value)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __repr__(self):
        return (f"Var(shape={self.value.shape}, dtype={self.value.dtype}, "
                f"requires_grad={self.requires_grad})")


def const(x):
    return x if isinstance(x, Var) else Var(x)


def param(x):
    """A trainable leaf; holds its gradient after backward()."""
    arr = np.ascontiguousarray(x)
    arr = arr.astype(np.complex128 if np.iscomplexobj(arr) else np.float64)
    return Var(arr, requires_grad=True)


def _match(g, parent_value):
    """Adapt an upstream packed gradient to the parent's dtype and shape."""
    if not np.iscomplexobj(parent_value) and np.iscomplexobj(g):
        g = g.real
    # undo numpy broadcasting: sum over prepended axes and stretched ones
    extra = g.ndim - np.ndim(parent_value)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    shape = np.shape(parent_value)
    squeeze = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if squeeze:
        g = g.sum(axis=squeeze, keepdims=True)
    return g


def _topo(root):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order  # postorder: parents before children


def backward(loss):
    """Accumulate dL into .grad of every reachable trainable leaf."""
    if not isinstance(loss, Var):
        raise TypeError("backward expects a Var")
    if loss._used:
        raise RuntimeError("this tape was already consumed by a backward pass")
    if loss.value.size != 1 or loss.is_complex:
        raise ValueError("loss must be a real scalar")
    order = _topo(loss)
    for v in order:
        v.grad = None
    loss.grad = np.ones_like(loss.value)
    for v in reversed(order):
        g = v.grad
        v._used = True
        if g is None:
            continue
        for p, vjp in zip(v.parents, v.vjps):
            if not p.requires_grad:
                continue
            contrib = _match(vjp(g), p.value)
            p.grad = contrib if p.grad is None else p.grad + contrib
        if v.parents:  # free intermediate grads, keep leaves
            v.grad = None


# ---------------------------------------------------------------------------
# elementwise and structural ops

def add(x, y):
    x, y = const(x), const(y)
    return Var(x.value + y.value, (x, y), (lambda g: g, lambda g: g))


def sub(x, y):
    x, y = const(x), const(y)
    return Var(x.value - y.value, (x, y), (lambda g: g, lambda g: -g))


def neg(x):
    x = const(x)
    return Var(-x.value, (x,), (lambda g: -g,))


def mul(x, y):
    x, y = const(x), const(y)
    xv, yv = x.value, y.value
    return Var(xv * yv, (x, y),
               (lambda g: g * np.conj(yv), lambda g: g * np.conj(xv)))


def vconj(x):
    x = const(x)
    return Var(np.conj(x.value), (x,), (lambda g: np.conj(g),))


def vreal(x):
    x = const(x)
    return Var(x.value.real.copy(), (x,), (lambda g: g.astype(np.complex128),))


def vimag(x):
    x = const(x)
    return Var(x.value.imag.copy(), (x,), (lambda g: 1j * g,))


def make_complex(re, im):
    re, im = const(re), const(im)
    return Var(re.value + 1j * im.value, (re, im),
               (lambda g: g.real, lambda g: g.imag))


def vabs_pow(x, q):
    """|x|^q as a real array; gradient masked at |x| = 0."""
    x = const(x)
    xv = x.value
    mag = np.abs(xv)
    if q == 0:
        val = np.ones_like(mag)
        return Var(val, (x,), (lambda g: np.zeros_like(xv),))
    val = mag ** q

    def vjp(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.where(mag > 0, mag ** (q - 2.0), 0.0)
        return g * q * f * xv

    return Var(val, (x,), (vjp,))


def vmag_clip(x, level):
    """Magnitude clipping, phase preserved; identity inside the ball."""
    x = const(x)
    xv = x.value
    mag = np.abs(xv)
    over = mag > level
    safe = np.where(over, mag, 1.0)
    val = np.where(over, xv * (level / safe), xv)

    def vjp(g):
        inv = np.where(over, 1.0 / safe, 0.0)
        # clipped region: the radial component dies, the tangential one
        # scales by level/|x|:  y = level*x/|x|, dy/dx = level/(2|x|),
        # dy/dconj(x) = -level*x^2/(2|x|^3)
        gt = g * (0.5 * level * inv) + np.conj(g) * (-0.5 * level * xv ** 2 * inv ** 3)
        return np.where(over, gt, g)

    return Var(val, (x,), (vjp,))


def vshift(x, m):
    """x[n - m] along the last axis, zero padded (negative m looks ahead)."""
    x = const(x)
    xv = x.value

    def do(a, k):
        if k == 0:
            return a.copy()
        out = np.zeros_like(a)
        if k > 0:
            out[..., k:] = a[..., :-k]
        else:
            out[..., :k] = a[..., -k:]
        return out

    return Var(do(xv, m), (x,), (lambda g: do(g, -m),))


def fft_u(x):
    """Unitary DFT along the last axis (adjoint: unitary IDFT)."""
    x = const(x)
    return Var(np.fft.fft(x.value, axis=-1, norm="ortho"), (x,),
               (lambda g: np.fft.ifft(g, axis=-1, norm="ortho"),))


def ifft_u(x):
    x = const(x)
    return Var(np.fft.ifft(x.value, axis=-1, norm="ortho"), (x,),
               (lambda g: np.fft.fft(g, axis=-1, norm="ortho"),))


def take(x, idx, axis=-1):
    x = const(x)
    idx = np.asarray(idx)
    val = np.take(x.value, idx, axis=axis)
    shape = x.value.shape
    dtype = x.value.dtype

    def vjp(g):
        out = np.zeros(shape, dtype=dtype)
        # scatter-add so repeated indices accumulate (adjoint of gather)
        np.add.at(np.moveaxis(out, axis, 0), idx, np.moveaxis(g, axis, 0))
        return out

    return Var(val, (x,), (vjp,))


def embed(x, idx, n, axis=-1):
    """Scatter x's slices into a zero array of size n along ``axis``."""
    x = const(x)
    idx = np.asarray(idx)
    shape = list(x.value.shape)
    shape[axis] = n
    val = np.zeros(shape, dtype=x.value.dtype)
    sl = [slice(None)] * len(shape)
    sl[axis] = idx
    val[tuple(sl)] = x.value
    return Var(val, (x,), (lambda g: np.take(g, idx, axis=axis),))


def reshape(x, shape):
    x = const(x)
    old = x.value.shape
    return Var(x.value.reshape(shape), (x,), (lambda g: g.reshape(old),))


def moveaxis(x, src, dst):
    x = const(x)
    return Var(np.moveaxis(x.value, src, dst), (x,),
               (lambda g: np.moveaxis(g, dst, src),))


def pad_last(x, n):
    """Zero-pad the last axis up to length n."""
    x = const(x)
    cur = x.value.shape[-1]
    if n < cur:
        raise ValueError("pad_last cannot shrink")
    width = [(0, 0)] * (x.value.ndim - 1) + [(0, n - cur)]
    return Var(np.pad(x.value, width), (x,), (lambda g: g[..., :cur],))


def concat(xs, axis=-1):
    xs = [const(x) for x in xs]
    val = np.concatenate([x.value for x in xs], axis=axis)
    sizes = [x.value.shape[axis] for x in xs]
    offsets = np.cumsum([0] + sizes)

    def make_vjp(i):
        def vjp(g):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offsets[i], offsets[i + 1])
            return g[tuple(sl)]
        return vjp

    return Var(val, tuple(xs), tuple(make_vjp(i) for i in range(len(xs))))


def vrelu(x):
    x = const(x)
    if x.is_complex:
        raise TypeError("relu is defined on real arrays")
    mask = x.value > 0
    return Var(np.where(mask, x.value, 0.0), (x,), (lambda g: g * mask,))


# ---------------------------------------------------------------------------
# linear-algebra ops

def matmul(x, w):
    """y = x @ w on the trailing axes; complex uses the conjugate adjoints."""
    x, w = const(x), const(w)
    xv, wv = x.value, w.value
    return Var(
        xv @ wv, (x, w),
        (lambda g: g @ np.conj(np.swapaxes(wv, -1, -2)),
         lambda g: _sum_leading(np.conj(np.swapaxes(xv, -1, -2)) @ g, wv.ndim)))


def _sum_leading(g, ndim):
    while g.ndim > ndim:
        g = g.sum(axis=0)
    return g


def per_group_matmul(x, w):
    """y[t,u,o] = sum_f w[u,o,f] x[t,u,f] (one linear layer per group u)."""
    x, w = const(x), const(w)
    xv, wv = x.value, w.value
    return Var(
        np.einsum("uof,tuf->tuo", wv, xv), (x, w),
        (lambda g: np.einsum("uof,tuo->tuf", np.conj(wv), g),
         lambda g: np.einsum("tuf,tuo->uof", np.conj(xv), g)))


def conv2d(x, w, stride=1):
    """2D convolution with TF-style SAME padding: out = ceil(in / stride).

    x: (batch, C_in, H, W), w: (C_out, C_in, K, K).  Real dtype only.
    """
    x, w = const(x), const(w)
    xv, wv = x.value, w.value
    if np.iscomplexobj(xv) or np.iscomplexobj(wv):
        raise TypeError("conv2d is defined on real arrays")
    _, _, h, wd = xv.shape
    k = wv.shape[-1]
    s = stride
    out_h, out_w = -(-h // s), -(-wd // s)
    pad_h = max((out_h - 1) * s + k - h, 0)
    pad_w = max((out_w - 1) * s + k - wd, 0)
    pt, pl = pad_h // 2, pad_w // 2
    xp = np.pad(xv, ((0, 0), (0, 0), (pt, pad_h - pt), (pl, pad_w - pl)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    win = win[:, :, ::s, ::s][:, :, :out_h, :out_w]
    val = np.einsum("bchwkl,ockl->bohw", win, wv)

    def vjp_x(g):
        gx = np.zeros_like(xp)
        for ki in range(k):
            for kj in range(k):
                tmp = np.einsum("oc,bohw->bchw", wv[:, :, ki, kj], g)
                gx[:, :, ki:ki + s * out_h:s, kj:kj + s * out_w:s] += tmp
        return gx[:, :, pt:pt + h, pl:pl + wd]

    def vjp_w(g):
        return np.einsum("bchwkl,bohw->ockl", win, g)

    return Var(val, (x, w), (vjp_x, vjp_w))


def precode_apply(s, w_matrices):
    """x[t,b,k] = sum_u W[k,b,u] s[t,u,k]; the precoder tensor is constant."""
    s = const(s)
    wm = np.asarray(w_matrices)
    sv = s.value
    return Var(np.einsum("kbu,tuk->tbk", wm, sv), (s,),
               (lambda g: np.einsum("kbu,tbk->tuk", np.conj(wm), g),))


def mix(x, coupling):
    """Crosstalk mixing x + off(coupling) @ x along the branch axis (-2)."""
    x = const(x)
    cm = np.asarray(coupling)
    off = cm - np.diag(np.diag(cm))
    return Var(x.value + np.einsum("ab,...bn->...an", off, x.value), (x,),
               (lambda g: g + np.einsum("ab,...an->...bn", np.conj(off), g),))


def mse(x, target):
    """Mean squared complex magnitude of (x - target); real scalar Var."""
    x = const(x)
    t = np.asarray(target)
    d = x.value - t
    k = d.size
    val = np.array(np.mean(np.abs(d) ** 2))

    def vjp(g):
        return (2.0 / k) * g * d

    return Var(val, (x,), (vjp,))


# ---------------------------------------------------------------------------
# optimizer

def _real_view(arr):
    return arr.view(np.float64) if np.iscomplexobj(arr) else arr


class Adam:
    """Standard Adam with bias correction, acting on Var leaves in place.

    Complex parameters are updated as interleaved real pairs, which is the
    real-pair gradient convention used by backward().
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(_real_view(p.value)) for p in self.params]
        self.v = [np.zeros_like(_real_view(p.value)) for p in self.params]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            if not np.all(np.isfinite(p.grad)):
                raise FloatingPointError(
                    f"non-finite gradient in parameter {i} at step {self.t}")
            g = _real_view(np.ascontiguousarray(p.grad))
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            m_hat = self.m[i] / (1 - b1 ** self.t)
            v_hat = self.v[i] / (1 - b2 ** self.t)
            _real_view(p.value)[...] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


# ---------------------------------------------------------------------------
# finite-difference reference

def numeric_grad(f, params, h=1e-4):
    """Central finite differences of the scalar ``f()`` w.r.t. each Var leaf.

    ``f`` must recompute the loss from the parameters' current values.  The
    step is relative: h * max(1, |component|).  Returns packed gradients in
    the same convention as backward().
    """
    grads = []
    for p in params:
        flat = _real_view(p.value).ravel()
        g = np.zeros_like(flat)
        for i in range(flat.size):
            keep = flat[i]
            step = h * max(1.0, abs(keep))
            flat[i] = keep + step
            lp = float(f())
            flat[i] = keep - step
            lm = float(f())
            flat[i] = keep
            g[i] = (lp - lm) / (2 * step)
        if np.iscomplexobj(p.value):
            g = (g[0::2] + 1j * g[1::2]).reshape(p.value.shape)
        else:
            g = g.reshape(p.value.shape)
        grads.append(g)
    return grads
