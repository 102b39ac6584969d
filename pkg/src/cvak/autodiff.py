"""Complex tensors with reverse-mode differentiation in Wirtinger form.

Values are numpy complex128 arrays. The reverse sweep runs over real
component pairs: the adjoint accumulated for a node packs the two real
partials of the (real, scalar) loss as ``dL/d(re) + 1j * dL/d(im)``. That
way non-holomorphic primitives (abs, phase, split-ReLU) need no holomorphic
chain rule; for a holomorphic primitive F the packed rule reduces to
``adj_in = adj_out * conj(dF/dz)``. The Wirtinger gradient
``dL/d(conj z) = adjoint / 2`` is assembled only at the API boundary, in
:func:`wirtinger_backward`.

Graphs are recorded implicitly: each operation returns a node holding its
inputs and a VJP closure, and the backward pass visits the induced DAG once
in reverse topological order. Nodes are immutable after creation;
independent graphs may be built and swept concurrently.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "CTensor",
    "ShapeError",
    "NumericsError",
    "BackwardError",
    "add",
    "sub",
    "neg",
    "mul",
    "scale",
    "conj",
    "real_part",
    "imag_part",
    "magnitude",
    "phase",
    "cexp",
    "split_relu",
    "matmul",
    "conv2d",
    "concat",
    "reshape",
    "sum_all",
    "mean_all",
    "cross_entropy",
    "wirtinger_backward",
    "backward_components",
    "complex_sign",
    "kink_margin",
]


class ShapeError(ValueError):
    """Operand shapes do not conform for a primitive."""


class NumericsError(FloatingPointError):
    """A public operation produced a non-finite value."""


class BackwardError(ValueError):
    """The requested reverse sweep is ill-posed (non-real or non-scalar loss)."""


class CTensor:
    """One node of the recorded operation graph.

    ``value`` is always complex128. ``real_only`` marks tensors whose
    imaginary part is structurally zero (real weights, magnitudes, logits,
    losses); it gates which nodes may serve as a loss root.
    """

    __slots__ = ("value", "real_only", "_parents", "_vjp", "_op")

    def __init__(self, value, real_only=None, _parents=(), _vjp=None, _op="leaf"):
        arr = np.asarray(value)
        if real_only is None:
            real_only = not np.iscomplexobj(arr)
        val = np.asarray(arr, dtype=np.complex128)
        if not np.all(np.isfinite(val)):
            raise NumericsError(f"{_op}: produced non-finite values")
        if real_only and np.iscomplexobj(arr) and np.any(arr.imag != 0.0):
            raise ValueError("real_only tensor constructed with nonzero imaginary part")
        self.value = val
        self.real_only = bool(real_only)
        self._parents = _parents
        self._vjp = _vjp
        self._op = _op

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return self.value.size

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"CTensor(op={self._op!r}, shape={self.shape}, real_only={self.real_only})"

    # arithmetic sugar, mirrors the functional API
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _lift(x) -> CTensor:
    return x if isinstance(x, CTensor) else CTensor(x)


def _unbroadcast(adj, shape):
    """Sum an adjoint over the axes numpy broadcasting introduced."""
    extra = adj.ndim - len(shape)
    if extra > 0:
        adj = adj.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (have, want) in enumerate(zip(adj.shape, shape)) if want == 1 and have != 1)
    if axes:
        adj = adj.sum(axis=axes, keepdims=True)
    return adj


def add(a, b):
    a, b = _lift(a), _lift(b)
    try:
        value = a.value + b.value
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} are not broadcastable") from None

    def vjp(adj):
        return _unbroadcast(adj, a.shape), _unbroadcast(adj, b.shape)

    return CTensor(value, a.real_only and b.real_only, (a, b), vjp, "add")


def sub(a, b):
    a, b = _lift(a), _lift(b)
    try:
        value = a.value - b.value
    except ValueError:
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape} are not broadcastable") from None

    def vjp(adj):
        return _unbroadcast(adj, a.shape), _unbroadcast(-adj, b.shape)

    return CTensor(value, a.real_only and b.real_only, (a, b), vjp, "sub")


def neg(a):
    a = _lift(a)

    def vjp(adj):
        return (-adj,)

    return CTensor(-a.value, a.real_only, (a,), vjp, "neg")


def mul(a, b):
    """Elementwise complex product (broadcasting)."""
    a, b = _lift(a), _lift(b)
    try:
        value = a.value * b.value
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} are not broadcastable") from None
    av, bv = a.value, b.value

    def vjp(adj):
        # holomorphic in each factor: adj_in = adj * conj(other)
        return _unbroadcast(adj * np.conj(bv), a.shape), _unbroadcast(adj * np.conj(av), b.shape)

    return CTensor(value, a.real_only and b.real_only, (a, b), vjp, "mul")


def scale(a, c):
    """Multiply by a real scalar constant."""
    a = _lift(a)
    c = float(c)

    def vjp(adj):
        return (adj * c,)

    return CTensor(a.value * c, a.real_only, (a,), vjp, "scale")


def conj(a):
    a = _lift(a)

    def vjp(adj):
        return (np.conj(adj),)

    return CTensor(np.conj(a.value), a.real_only, (a,), vjp, "conj")


def real_part(a):
    a = _lift(a)

    def vjp(adj):
        return (adj.real.astype(np.complex128),)

    return CTensor(a.value.real.astype(np.complex128), True, (a,), vjp, "real_part")


def imag_part(a):
    a = _lift(a)

    def vjp(adj):
        return (1j * adj.real,)

    return CTensor(a.value.imag.astype(np.complex128), True, (a,), vjp, "imag_part")


def magnitude(a):
    """Per-element |z|, real output. Subgradient 0 at z = 0."""
    a = _lift(a)
    r = np.abs(a.value)
    av = a.value

    def vjp(adj):
        unit = np.divide(av, r, out=np.zeros_like(av), where=r > 0)
        return (adj.real * unit,)

    return CTensor(r.astype(np.complex128), True, (a,), vjp, "magnitude")


def phase(a):
    """Per-element atan2(im, re), real output. phase(0) = 0 by convention."""
    a = _lift(a)
    av = a.value
    r2 = av.real * av.real + av.imag * av.imag

    def vjp(adj):
        g = np.divide(1j * av, r2, out=np.zeros_like(av), where=r2 > 0)
        return (adj.real * g,)

    return CTensor(np.angle(av).astype(np.complex128), True, (a,), vjp, "phase")


def cexp(a):
    a = _lift(a)
    value = np.exp(a.value)

    def vjp(adj):
        return (adj * np.conj(value),)

    return CTensor(value, a.real_only, (a,), vjp, "cexp")


def soft_normalize(a, s):
    """z / (|z| + s): phase-preserving magnitude compression toward the unit
    circle, smooth for s > 0 (first-order even at z = 0)."""
    a = _lift(a)
    s = float(s)
    if s <= 0:
        raise ValueError("soft_normalize: s must be > 0")
    av = a.value
    r = np.abs(av)
    g = 1.0 / (r + s)
    value = av * g

    def vjp(adj):
        gp = -g * g  # d/dr of 1/(r+s)
        fz = g + 0.5 * gp * r  # real
        fzbar = np.divide(gp * av * av, 2.0 * r, out=np.zeros_like(av), where=r > 0)
        return (adj * fz + np.conj(adj) * fzbar,)

    return CTensor(value, a.real_only, (a,), vjp, "soft_normalize")


def split_relu(a):
    """ReLU applied to real and imaginary parts independently."""
    a = _lift(a)
    av = a.value
    mre = av.real > 0
    mim = av.imag > 0
    value = av.real * mre + 1j * (av.imag * mim)

    def vjp(adj):
        return (adj.real * mre + 1j * (adj.imag * mim),)

    return CTensor(value, a.real_only, (a,), vjp, "split_relu")


def matmul(a, b):
    """2-D matrix product (batch, fin) @ (fin, fout)."""
    a, b = _lift(a), _lift(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    av, bv = a.value, b.value

    def vjp(adj):
        return adj @ np.conj(bv).T, np.conj(av).T @ adj

    return CTensor(av @ bv, a.real_only and b.real_only, (a, b), vjp, "matmul")


def conv2d(x, w, bias=None):
    """2-D cross-correlation, stride 1, zero padding preserving H and W.

    x: (batch, cin, H, W); w: (cout, cin, kh, kw) with odd kh, kw;
    bias: optional (cout,).
    """
    x, w = _lift(x), _lift(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-D input and kernel, got {x.shape} and {w.shape}")
    batch, cin, height, width = x.shape
    cout, cin_w, kh, kw = w.shape
    if cin != cin_w:
        raise ShapeError(f"conv2d: input channels {x.shape} do not match kernel {w.shape}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d: kernel must have odd spatial dims, got {w.shape}")
    if bias is not None:
        bias = _lift(bias)
        if bias.shape != (cout,):
            raise ShapeError(f"conv2d: bias shape {bias.shape} does not match kernel {w.shape}")
    ph, pw = kh // 2, kw // 2

    xp = np.pad(x.value, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    patches = np.empty((batch, cin, kh, kw, height, width), dtype=np.complex128)
    for i in range(kh):
        for j in range(kw):
            patches[:, :, i, j] = xp[:, :, i : i + height, j : j + width]
    cols = patches.reshape(batch, cin * kh * kw, height * width)
    wmat = w.value.reshape(cout, cin * kh * kw)
    out = (wmat @ cols).reshape(batch, cout, height, width)
    if bias is not None:
        out = out + bias.value[None, :, None, None]

    def vjp(adj):
        am = adj.reshape(batch, cout, height * width)
        a_w = np.einsum("bop,bkp->ok", am, np.conj(cols)).reshape(w.shape)
        a_cols = np.conj(wmat).T @ am
        a_patches = a_cols.reshape(batch, cin, kh, kw, height, width)
        a_xp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                a_xp[:, :, i : i + height, j : j + width] += a_patches[:, :, i, j]
        a_x = a_xp[:, :, ph : ph + height, pw : pw + width]
        if bias is None:
            return a_x, a_w
        return a_x, a_w, adj.sum(axis=(0, 2, 3))

    parents = (x, w) if bias is None else (x, w, bias)
    real_only = x.real_only and w.real_only and (bias is None or bias.real_only)
    return CTensor(out, real_only, parents, vjp, "conv2d")


def concat(parts, axis=1):
    parts = [_lift(p) for p in parts]
    try:
        value = np.concatenate([p.value for p in parts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: shapes {[p.shape for p in parts]} do not conform on axis {axis}") from None
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum(sizes)[:-1]

    def vjp(adj):
        return tuple(np.split(adj, offsets, axis=axis))

    return CTensor(value, all(p.real_only for p in parts), tuple(parts), vjp, "concat")


def reshape(a, shape):
    a = _lift(a)
    old = a.shape
    value = a.value.reshape(shape)

    def vjp(adj):
        return (adj.reshape(old),)

    return CTensor(value, a.real_only, (a,), vjp, "reshape")


def sum_all(a):
    a = _lift(a)
    shape = a.shape

    def vjp(adj):
        return (np.broadcast_to(adj, shape).copy(),)

    return CTensor(a.value.sum(), a.real_only, (a,), vjp, "sum_all")


def mean_all(a):
    a = _lift(a)
    shape = a.shape
    n = max(1, a.size)

    def vjp(adj):
        return (np.broadcast_to(adj / n, shape).copy(),)

    return CTensor(a.value.mean(), a.real_only, (a,), vjp, "mean_all")


def cross_entropy(logits, labels, reduce="mean"):
    """Softmax cross-entropy on real logits (batch, classes) -> real scalar."""
    logits = _lift(logits)
    if not logits.real_only:
        raise ValueError("cross_entropy: logits must be real-valued")
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy: expected (batch, classes) logits, got {logits.shape}")
    if reduce not in ("mean", "sum"):
        raise ValueError(f"cross_entropy: unknown reduce {reduce!r}")
    y = np.asarray(labels)
    batch, classes = logits.shape
    if y.shape != (batch,):
        raise ShapeError(f"cross_entropy: labels shape {y.shape} does not match logits {logits.shape}")
    if y.size and (y.min() < 0 or y.max() >= classes):
        raise ValueError(f"cross_entropy: label out of range [0, {classes})")
    z = logits.value.real
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    sez = ez.sum(axis=1, keepdims=True)
    nll = (zmax[:, 0] + np.log(sez[:, 0])) - z[np.arange(batch), y]
    value = nll.mean() if reduce == "mean" else nll.sum()
    denom = batch if reduce == "mean" else 1

    def vjp(adj):
        p = ez / sez
        p[np.arange(batch), y] -= 1.0
        return ((adj.real / denom) * p.astype(np.complex128),)

    return CTensor(np.complex128(value), True, (logits,), vjp, "cross_entropy")


def softmax_nll_values(logits, labels):
    """Per-sample cross-entropy on a raw real (batch, classes) array."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels)
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    return lse - z[np.arange(z.shape[0]), y]


def _topo(root):
    """Inputs-before-consumers ordering of the DAG under ``root``."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            stack.append((parent, False))
    return order


def backward_components(loss, wrt):
    """Reverse sweep returning packed real adjoints dL/d(re) + 1j*dL/d(im).

    One sweep per call; each node is visited exactly once. Tensors not
    reachable from the loss get a zero adjoint.
    """
    if not isinstance(loss, CTensor):
        raise BackwardError("loss must be a CTensor")
    if not loss.real_only:
        raise BackwardError("loss must be real-valued")
    if loss.size != 1:
        raise BackwardError(f"loss must be scalar, got shape {loss.shape}")
    order = _topo(loss)
    keep = {id(t) for t in wrt}
    adjoints = {id(loss): np.ones(loss.shape, dtype=np.complex128)}
    for node in reversed(order):
        if id(node) in keep:
            adj = adjoints.get(id(node))
        else:
            adj = adjoints.pop(id(node), None)
        if adj is None or node._vjp is None:
            continue
        for parent, contribution in zip(node._parents, node._vjp(adj)):
            if contribution is None:
                continue
            have = adjoints.get(id(parent))
            adjoints[id(parent)] = contribution if have is None else have + contribution
    out = {}
    for t in wrt:
        out[t] = adjoints.get(id(t), np.zeros(t.shape, dtype=np.complex128))
    return out


def wirtinger_backward(loss, wrt):
    """Gradients dL/d(conj z) of a real scalar loss for each requested tensor.

    For a real loss, dL/dz is the conjugate of the returned array; it is
    derived, never recomputed. Disconnected tensors map to zeros.
    """
    comps = backward_components(loss, wrt)
    return {t: 0.5 * g for t, g in comps.items()}


def complex_sign(z):
    """exp(i*phase(z)) per element, with sign(0) = 0."""
    arr = np.asarray(z, dtype=np.complex128)
    r = np.abs(arr)
    out = np.divide(arr, r, out=np.zeros_like(arr), where=r > 0)
    return out if arr.ndim else out[()]


def kink_margin(root):
    """Distance of the recorded forward pass to the nearest non-smooth point.

    Checks split-ReLU component zeros, |z| and phase(z) at the origin, and
    the phase branch cut on the negative real axis. Used by the
    finite-difference oracle to reject samples too close to a kink.
    """
    margin = np.inf
    for node in _topo(root):
        if node._op == "split_relu":
            v = node._parents[0].value
            if v.size:
                margin = min(margin, float(np.abs(v.real).min()), float(np.abs(v.imag).min()))
        elif node._op in ("magnitude", "soft_normalize"):
            v = node._parents[0].value
            if v.size:
                margin = min(margin, float(np.abs(v).min()))
        elif node._op == "phase":
            v = node._parents[0].value
            if v.size:
                margin = min(margin, float(np.abs(v).min()))
                cut = v.real < 0
                if np.any(cut):
                    margin = min(margin, float(np.abs(v.imag[cut]).min()))
    return margin
