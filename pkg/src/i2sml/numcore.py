"""Minimal dense numeric kernel with reverse-mode gradients.

Tensors are 1-D or 2-D, float64, stored as flat row-major Python lists.
Every operation below builds a node in a backward graph; calling
``Tensor.backward()`` on a scalar result accumulates gradients into the
leaves.  The op set is fixed to what the model layers actually need
(affine maps, elementwise nonlinearities, softmax, squared distances,
log-sum-exp, set statistics); there is no broadcasting beyond the few
fused ops defined here.

Models in this package are desk scale, so the kernel optimizes for
exactness and reproducibility, not throughput.  Hot loops still lean on
C-level builtins (``sum``/``map``/``zip``) because training runs many
thousands of episodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from operator import mul as _num_mul


class ShapeMismatch(ValueError):
    """Raised when tensor shapes do not line up for an operation."""


class NonFiniteError(ValueError):
    """Raised when a NaN or infinity reaches a checked boundary."""


def _prod(shape):
    n = 1
    for s in shape:
        n *= s
    return n


class Tensor:
    """A 1-D or 2-D float64 tensor participating in a backward graph.

    ``data`` is a flat row-major list; ``grad`` is lazily allocated with
    the same layout.  Leaf tensors (parameters, inputs) have no parents;
    op results carry a closure that pushes gradients to their parents.
    """

    __slots__ = ("shape", "data", "grad", "name", "_parents", "_bwd")

    def __init__(self, shape, data, name=None, parents=(), bwd=None):
        shape = tuple(int(s) for s in shape)
        if not shape or len(shape) > 2 or any(s < 1 for s in shape):
            raise ShapeMismatch(f"unsupported tensor shape {shape}")
        if len(data) != _prod(shape):
            raise ShapeMismatch(
                f"shape {shape} needs {_prod(shape)} values, got {len(data)}"
            )
        self.shape = shape
        self.data = data
        self.grad = None
        self.name = name
        self._parents = parents
        self._bwd = bwd

    # -- constructors -------------------------------------------------

    @staticmethod
    def vector(values, name=None):
        return Tensor((len(values),), [float(v) for v in values], name=name)

    @staticmethod
    def matrix(rows, name=None):
        r = len(rows)
        c = len(rows[0])
        flat = []
        for row in rows:
            if len(row) != c:
                raise ShapeMismatch("ragged rows in matrix constructor")
            flat.extend(float(v) for v in row)
        return Tensor((r, c), flat, name=name)

    @staticmethod
    def scalar(value, name=None):
        return Tensor((1,), [float(value)], name=name)

    @staticmethod
    def zeros(shape, name=None):
        return Tensor(shape, [0.0] * _prod(shape), name=name)

    # -- views ---------------------------------------------------------

    @property
    def size(self):
        return len(self.data)

    @property
    def is_matrix(self):
        return len(self.shape) == 2

    def item(self):
        if self.size != 1:
            raise ShapeMismatch(f"item() on tensor of shape {self.shape}")
        return self.data[0]

    def rows(self):
        """Iterate matrix rows as list slices (copies)."""
        r, c = self.shape
        d = self.data
        return [d[i * c:(i + 1) * c] for i in range(r)]

    def tolist(self):
        if self.is_matrix:
            return self.rows()
        return list(self.data)

    def detach_copy(self):
        """Leaf copy of this tensor's current values."""
        return Tensor(self.shape, list(self.data), name=self.name)

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape})"

    # -- autodiff -------------------------------------------------------

    def backward(self):
        """Accumulate gradients of this scalar into all graph leaves."""
        if self.size != 1:
            raise ShapeMismatch("backward() requires a scalar tensor")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = [1.0]
        for node in reversed(topo):
            if node._bwd is not None:
                node._bwd()


def _gbuf(t):
    if t.grad is None:
        t.grad = [0.0] * len(t.data)
    return t.grad


def zero_grads(tensors):
    for t in tensors:
        t.grad = None


def assert_finite(t, context=""):
    if not all(map(math.isfinite, t.data)):
        where = t.name or context or "tensor"
        raise NonFiniteError(f"non-finite values in {where}")
    return t


def _same_shape(a, b, op):
    if a.shape != b.shape:
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------
# elementwise ops
# ---------------------------------------------------------------------


def add(a, b):
    _same_shape(a, b, "add")
    out = Tensor(a.shape, [x + y for x, y in zip(a.data, b.data)], parents=(a, b))

    def bwd():
        g = out.grad
        ag, bg = _gbuf(a), _gbuf(b)
        for i, gi in enumerate(g):
            ag[i] += gi
            bg[i] += gi

    out._bwd = bwd
    return out


def mul(a, b):
    _same_shape(a, b, "mul")
    out = Tensor(a.shape, [x * y for x, y in zip(a.data, b.data)], parents=(a, b))

    def bwd():
        g = out.grad
        ad, bd = a.data, b.data
        ag, bg = _gbuf(a), _gbuf(b)
        for i, gi in enumerate(g):
            ag[i] += gi * bd[i]
            bg[i] += gi * ad[i]

    out._bwd = bwd
    return out


def neg(a):
    out = Tensor(a.shape, [-x for x in a.data], parents=(a,))

    def bwd():
        g = out.grad
        ag = _gbuf(a)
        for i, gi in enumerate(g):
            ag[i] -= gi

    out._bwd = bwd
    return out


def scale(a, c):
    """Multiply by a plain float constant (not a graph node)."""
    c = float(c)
    out = Tensor(a.shape, [c * x for x in a.data], parents=(a,))

    def bwd():
        g = out.grad
        ag = _gbuf(a)
        for i, gi in enumerate(g):
            ag[i] += c * gi

    out._bwd = bwd
    return out


def shift(a, c):
    """Add a plain float constant elementwise."""
    c = float(c)
    out = Tensor(a.shape, [x + c for x in a.data], parents=(a,))

    def bwd():
        g = out.grad
        ag = _gbuf(a)
        for i, gi in enumerate(g):
            ag[i] += gi

    out._bwd = bwd
    return out


def scale_by(a, s):
    """Multiply tensor ``a`` by a learnable scalar tensor ``s`` (shape (1,))."""
    if s.size != 1:
        raise ShapeMismatch("scale_by: scale must be a scalar tensor")
    sv = s.data[0]
    out = Tensor(a.shape, [sv * x for x in a.data], parents=(a, s))

    def bwd():
        g = out.grad
        ad = a.data
        ag, sg = _gbuf(a), _gbuf(s)
        acc = 0.0
        for i, gi in enumerate(g):
            ag[i] += sv * gi
            acc += gi * ad[i]
        sg[0] += acc

    out._bwd = bwd
    return out


def add_scalar(a, s):
    """Add a scalar tensor (shape (1,)) to every entry of ``a``."""
    if s.size != 1:
        raise ShapeMismatch("add_scalar: addend must be a scalar tensor")
    sv = s.data[0]
    out = Tensor(a.shape, [x + sv for x in a.data], parents=(a, s))

    def bwd():
        g = out.grad
        ag, sg = _gbuf(a), _gbuf(s)
        acc = 0.0
        for i, gi in enumerate(g):
            ag[i] += gi
            acc += gi
        sg[0] += acc

    out._bwd = bwd
    return out


def relu(a):
    out = Tensor(a.shape, [x if x > 0.0 else 0.0 for x in a.data], parents=(a,))

    def bwd():
        g = out.grad
        od = out.data
        ag = _gbuf(a)
        for i, gi in enumerate(g):
            if od[i] > 0.0:
                ag[i] += gi

    out._bwd = bwd
    return out


def sigmoid(a):
    def _sig(x):
        if x >= 0.0:
            return 1.0 / (1.0 + math.exp(-x))
        e = math.exp(x)
        return e / (1.0 + e)

    out = Tensor(a.shape, [_sig(x) for x in a.data], parents=(a,))

    def bwd():
        g = out.grad
        od = out.data
        ag = _gbuf(a)
        for i, gi in enumerate(g):
            y = od[i]
            ag[i] += gi * y * (1.0 - y)

    out._bwd = bwd
    return out


def tanh(a):
    out = Tensor(a.shape, [math.tanh(x) for x in a.data], parents=(a,))

    def bwd():
        g = out.grad
        od = out.data
        ag = _gbuf(a)
        for i, gi in enumerate(g):
            y = od[i]
            ag[i] += gi * (1.0 - y * y)

    out._bwd = bwd
    return out


def softplus(a):
    """log(1 + e^x), computed without overflow; exact 0.0 for very negative x."""

    def _sp(x):
        if x > 0.0:
            return x + math.log1p(math.exp(-x))
        return math.log1p(math.exp(x))

    out = Tensor(a.shape, [_sp(x) for x in a.data], parents=(a,))

    def bwd():
        g = out.grad
        ad = a.data
        ag = _gbuf(a)
        for i, gi in enumerate(g):
            x = ad[i]
            if x >= 0.0:
                s = 1.0 / (1.0 + math.exp(-x))
            else:
                e = math.exp(x)
                s = e / (1.0 + e)
            ag[i] += gi * s

    out._bwd = bwd
    return out


# ---------------------------------------------------------------------
# softmax / log-sum-exp
# ---------------------------------------------------------------------


def _softmax_flat(values):
    m = max(values)
    exps = [math.exp(v - m) for v in values]
    s = sum(exps)
    return [e / s for e in exps]


def softmax(a, axis=-1):
    """Stable softmax along ``axis``.

    Vectors accept axis 0 or -1; matrices accept axis 1 or -1 (rows).
    """
    if a.is_matrix:
        if axis not in (1, -1):
            raise ShapeMismatch(f"softmax: axis {axis} invalid for shape {a.shape}")
        r, c = a.shape
        d = a.data
        flat = []
        for i in range(r):
            flat.extend(_softmax_flat(d[i * c:(i + 1) * c]))
        out = Tensor(a.shape, flat, parents=(a,))

        def bwd():
            g = out.grad
            od = out.data
            ag = _gbuf(a)
            for i in range(r):
                base = i * c
                dot = 0.0
                for j in range(c):
                    dot += g[base + j] * od[base + j]
                for j in range(c):
                    k = base + j
                    ag[k] += od[k] * (g[k] - dot)

        out._bwd = bwd
        return out

    if axis not in (0, -1):
        raise ShapeMismatch(f"softmax: axis {axis} invalid for shape {a.shape}")
    out = Tensor(a.shape, _softmax_flat(a.data), parents=(a,))

    def bwd():
        g = out.grad
        od = out.data
        ag = _gbuf(a)
        dot = sum(gi * yi for gi, yi in zip(g, od))
        for i, gi in enumerate(g):
            ag[i] += od[i] * (gi - dot)

    out._bwd = bwd
    return out


def logsumexp(a):
    """log(sum(exp(x))) over a vector, with max-subtraction."""
    if a.is_matrix:
        raise ShapeMismatch("logsumexp expects a vector")
    m = max(a.data)
    s = sum(math.exp(v - m) for v in a.data)
    out = Tensor((1,), [m + math.log(s)], parents=(a,))

    def bwd():
        g = out.grad[0]
        ag = _gbuf(a)
        w = _softmax_flat(a.data)
        for i, wi in enumerate(w):
            ag[i] += g * wi

    out._bwd = bwd
    return out


# ---------------------------------------------------------------------
# structural ops
# ---------------------------------------------------------------------


def concat(parts):
    """Concatenate vectors into one vector."""
    parts = tuple(parts)
    flat = []
    for p in parts:
        if p.is_matrix:
            raise ShapeMismatch("concat expects vectors")
        flat.extend(p.data)
    out = Tensor((len(flat),), flat, parents=parts)

    def bwd():
        g = out.grad
        off = 0
        for p in parts:
            pg = _gbuf(p)
            n = len(p.data)
            for i in range(n):
                pg[i] += g[off + i]
            off += n

    out._bwd = bwd
    return out


def stack_rows(vectors):
    """Stack equal-length vectors into a matrix, one per row."""
    vectors = tuple(vectors)
    if not vectors:
        raise ShapeMismatch("stack_rows of nothing")
    c = vectors[0].size
    flat = []
    for v in vectors:
        if v.is_matrix or v.size != c:
            raise ShapeMismatch("stack_rows: inconsistent vector lengths")
        flat.extend(v.data)
    out = Tensor((len(vectors), c), flat, parents=vectors)

    def bwd():
        g = out.grad
        for k, v in enumerate(vectors):
            vg = _gbuf(v)
            base = k * c
            for i in range(c):
                vg[i] += g[base + i]

    out._bwd = bwd
    return out


def stack_scalars(scalars):
    """Stack scalar tensors into a vector."""
    scalars = tuple(scalars)
    for s in scalars:
        if s.size != 1:
            raise ShapeMismatch("stack_scalars expects scalar tensors")
    out = Tensor((len(scalars),), [s.data[0] for s in scalars], parents=scalars)

    def bwd():
        g = out.grad
        for k, s in enumerate(scalars):
            _gbuf(s)[0] += g[k]

    out._bwd = bwd
    return out


def flatten_column(a):
    """Reshape a (K, 1) matrix into a (K,) vector."""
    if not a.is_matrix or a.shape[1] != 1:
        raise ShapeMismatch(f"flatten_column on shape {a.shape}")
    out = Tensor((a.shape[0],), list(a.data), parents=(a,))

    def bwd():
        g = out.grad
        ag = _gbuf(a)
        for i, gi in enumerate(g):
            ag[i] += gi

    out._bwd = bwd
    return out


def concat_rows(x, v):
    """Append vector ``v`` to every row of matrix ``x``: (K,a)+(b,) -> (K,a+b)."""
    if not x.is_matrix or v.is_matrix:
        raise ShapeMismatch("concat_rows expects (matrix, vector)")
    r, c = x.shape
    n = v.size
    xd, vd = x.data, v.data
    flat = []
    for i in range(r):
        flat.extend(xd[i * c:(i + 1) * c])
        flat.extend(vd)
    out = Tensor((r, c + n), flat, parents=(x, v))

    def bwd():
        g = out.grad
        xg, vg = _gbuf(x), _gbuf(v)
        w = c + n
        for i in range(r):
            base = i * w
            xb = i * c
            for j in range(c):
                xg[xb + j] += g[base + j]
            for j in range(n):
                vg[j] += g[base + c + j]

    out._bwd = bwd
    return out


# ---------------------------------------------------------------------
# reductions and distances
# ---------------------------------------------------------------------


def vsum(a):
    if a.is_matrix:
        raise ShapeMismatch("vsum expects a vector")
    out = Tensor((1,), [sum(a.data)], parents=(a,))

    def bwd():
        g = out.grad[0]
        ag = _gbuf(a)
        for i in range(len(ag)):
            ag[i] += g

    out._bwd = bwd
    return out


def vmin(a):
    """Minimum entry of a vector; subgradient goes to the first argmin."""
    if a.is_matrix:
        raise ShapeMismatch("vmin expects a vector")
    m = min(a.data)
    idx = a.data.index(m)
    out = Tensor((1,), [m], parents=(a,))

    def bwd():
        _gbuf(a)[idx] += out.grad[0]

    out._bwd = bwd
    return out


def weighted_sum_rows(w, x):
    """Convex-combination style reduction: (K,) weights over (K,d) rows -> (d,)."""
    if x.is_matrix is False or w.is_matrix:
        raise ShapeMismatch("weighted_sum_rows expects (vector, matrix)")
    r, c = x.shape
    if w.size != r:
        raise ShapeMismatch(f"weighted_sum_rows: {w.size} weights for {r} rows")
    wd, xd = w.data, x.data
    acc = [0.0] * c
    for i in range(r):
        wi = wd[i]
        if wi == 0.0:
            continue
        base = i * c
        acc = [a + wi * xj for a, xj in zip(acc, xd[base:base + c])]
    out = Tensor((c,), acc, parents=(w, x))

    def bwd():
        g = out.grad
        wg, xg = _gbuf(w), _gbuf(x)
        for i in range(r):
            base = i * c
            row = xd[base:base + c]
            wg[i] += sum(map(_num_mul, g, row))
            wi = wd[i]
            if wi != 0.0:
                xg[base:base + c] = [
                    xgj + wi * gj for xgj, gj in zip(xg[base:base + c], g)
                ]

    out._bwd = bwd
    return out


def sqdist(a, b):
    """Squared euclidean distance between two vectors, as a scalar tensor."""
    _same_shape(a, b, "sqdist")
    if a.is_matrix:
        raise ShapeMismatch("sqdist expects vectors")
    s = 0.0
    for x, y in zip(a.data, b.data):
        d = x - y
        s += d * d
    out = Tensor((1,), [s], parents=(a, b))

    def bwd():
        g = out.grad[0]
        ag, bg = _gbuf(a), _gbuf(b)
        ad, bd = a.data, b.data
        for i in range(len(ad)):
            d = 2.0 * g * (ad[i] - bd[i])
            ag[i] += d
            bg[i] -= d

    out._bwd = bwd
    return out


def sqdist_rows(x, f):
    """Squared distances from each row of (K,d) to a query vector: -> (K,)."""
    if not x.is_matrix or f.is_matrix:
        raise ShapeMismatch("sqdist_rows expects (matrix, vector)")
    r, c = x.shape
    if f.size != c:
        raise ShapeMismatch(f"sqdist_rows: rows of width {c}, query {f.size}")
    xd, fd = x.data, f.data
    vals = []
    for i in range(r):
        base = i * c
        s = 0.0
        for j in range(c):
            d = xd[base + j] - fd[j]
            s += d * d
        vals.append(s)
    out = Tensor((r,), vals, parents=(x, f))

    def bwd():
        g = out.grad
        xg, fg = _gbuf(x), _gbuf(f)
        for i in range(r):
            gi = g[i]
            if gi == 0.0:
                continue
            base = i * c
            for j in range(c):
                d = 2.0 * gi * (xd[base + j] - fd[j])
                xg[base + j] += d
                fg[j] -= d

    out._bwd = bwd
    return out


def set_stats(x):
    """Per-dimension (mean, population std, min, max) over matrix rows.

    Output is their concatenation: shape (4*d,).  The std term uses a
    zero subgradient wherever the std itself is zero (constant columns,
    singleton sets).
    """
    if not x.is_matrix:
        raise ShapeMismatch("set_stats expects a matrix")
    r, c = x.shape
    xd = x.data
    means = [0.0] * c
    mins = list(xd[0:c])
    maxs = list(xd[0:c])
    for i in range(r):
        base = i * c
        for j in range(c):
            v = xd[base + j]
            means[j] += v
            if v < mins[j]:
                mins[j] = v
            elif v > maxs[j]:
                maxs[j] = v
    means = [m / r for m in means]
    variances = [0.0] * c
    for i in range(r):
        base = i * c
        for j in range(c):
            d = xd[base + j] - means[j]
            variances[j] += d * d
    stds = [math.sqrt(v / r) for v in variances]
    out = Tensor((4 * c,), means + stds + mins + maxs, parents=(x,))

    def bwd():
        g = out.grad
        xg = _gbuf(x)
        # mean part
        for j in range(c):
            gj = g[j] / r
            if gj != 0.0:
                for i in range(r):
                    xg[i * c + j] += gj
        # std part
        for j in range(c):
            gj = g[c + j]
            sd = out.data[c + j]
            if gj != 0.0 and sd > 0.0:
                coef = gj / (r * sd)
                mj = means[j]
                for i in range(r):
                    xg[i * c + j] += coef * (xd[i * c + j] - mj)
        # min / max route to the first achieving row
        for j in range(c):
            gmin = g[2 * c + j]
            gmax = g[3 * c + j]
            if gmin != 0.0:
                target = out.data[2 * c + j]
                for i in range(r):
                    if xd[i * c + j] == target:
                        xg[i * c + j] += gmin
                        break
            if gmax != 0.0:
                target = out.data[3 * c + j]
                for i in range(r):
                    if xd[i * c + j] == target:
                        xg[i * c + j] += gmax
                        break

    out._bwd = bwd
    return out


# ---------------------------------------------------------------------
# affine layers and MLPs
# ---------------------------------------------------------------------


def linear(x, w, b=None):
    """Affine map: W @ x + b for a vector, or row-wise X @ W^T + b for a matrix.

    ``w`` has shape (out, in); ``b`` is (out,) or None.
    """
    if not w.is_matrix:
        raise ShapeMismatch("linear: weight must be a matrix")
    n_out, n_in = w.shape
    if b is not None and (b.is_matrix or b.size != n_out):
        raise ShapeMismatch(
            f"linear: bias shape {b.shape} incompatible with weight {w.shape}"
        )
    wd = w.data
    w_rows = [wd[i * n_in:(i + 1) * n_in] for i in range(n_out)]

    if x.is_matrix:
        n, c = x.shape
        if c != n_in:
            raise ShapeMismatch(f"linear: input width {c}, weight expects {n_in}")
        xd = x.data
        bd = b.data if b is not None else None
        flat = []
        for i in range(n):
            row = xd[i * c:(i + 1) * c]
            if bd is None:
                flat.extend(sum(map(_num_mul, wr, row)) for wr in w_rows)
            else:
                flat.extend(
                    sum(map(_num_mul, wr, row)) + bk for wr, bk in zip(w_rows, bd)
                )
        parents = (x, w) if b is None else (x, w, b)
        out = Tensor((n, n_out), flat, parents=parents)

        def bwd():
            g = out.grad
            xg, wg = _gbuf(x), _gbuf(w)
            bg = _gbuf(b) if b is not None else None
            for i in range(n):
                gbase = i * n_out
                xbase = i * c
                xrow = xd[xbase:xbase + c]
                for k in range(n_out):
                    gk = g[gbase + k]
                    if gk == 0.0:
                        continue
                    if bg is not None:
                        bg[k] += gk
                    wbase = k * n_in
                    wg[wbase:wbase + n_in] = [
                        wv + gk * xv for wv, xv in zip(wg[wbase:wbase + n_in], xrow)
                    ]
                    xg[xbase:xbase + c] = [
                        xv + gk * wv
                        for xv, wv in zip(xg[xbase:xbase + c], w_rows[k])
                    ]

        out._bwd = bwd
        return out

    if x.size != n_in:
        raise ShapeMismatch(f"linear: input width {x.size}, weight expects {n_in}")
    xd = x.data
    if b is None:
        vals = [sum(map(_num_mul, wr, xd)) for wr in w_rows]
        parents = (x, w)
    else:
        vals = [sum(map(_num_mul, wr, xd)) + bk for wr, bk in zip(w_rows, b.data)]
        parents = (x, w, b)
    out = Tensor((n_out,), vals, parents=parents)

    def bwd():
        g = out.grad
        xg, wg = _gbuf(x), _gbuf(w)
        bg = _gbuf(b) if b is not None else None
        for k in range(n_out):
            gk = g[k]
            if gk == 0.0:
                continue
            if bg is not None:
                bg[k] += gk
            wbase = k * n_in
            wg[wbase:wbase + n_in] = [
                wv + gk * xv for wv, xv in zip(wg[wbase:wbase + n_in], xd)
            ]
            xg[:] = [xv + gk * wv for xv, wv in zip(xg, w_rows[k])]

    out._bwd = bwd
    return out


_ACTIVATIONS = ("relu", "tanh")
_FINAL_ACTIVATIONS = ("none", "sigmoid", "softmax")


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of a multilayer perceptron.

    ``layer_widths`` runs input -> hidden... -> output; ``activation``
    sits between layers; ``final_activation`` is applied to the output.
    """

    layer_widths: tuple
    activation: str = "relu"
    final_activation: str = "none"

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if len(self.layer_widths) < 2:
            raise ValueError("MlpSpec needs at least input and output widths")
        if any(w < 1 for w in self.layer_widths):
            raise ValueError(f"MlpSpec widths must be >= 1, got {self.layer_widths}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.final_activation not in _FINAL_ACTIVATIONS:
            raise ValueError(f"unknown final activation {self.final_activation!r}")

    @property
    def n_layers(self):
        return len(self.layer_widths) - 1

    @property
    def in_width(self):
        return self.layer_widths[0]

    @property
    def out_width(self):
        return self.layer_widths[-1]


def init_mlp_params(spec, rng, name=""):
    """Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases."""
    params = []
    for li in range(spec.n_layers):
        n_in = spec.layer_widths[li]
        n_out = spec.layer_widths[li + 1]
        bound = math.sqrt(6.0 / (n_in + n_out))
        wdata = [rng.uniform(-bound, bound) for _ in range(n_out * n_in)]
        prefix = f"{name}." if name else ""
        params.append(Tensor((n_out, n_in), wdata, name=f"{prefix}w{li}"))
        params.append(Tensor.zeros((n_out,), name=f"{prefix}b{li}"))
    return params


def mlp_forward(spec, params, x):
    """Run an MLP described by ``spec``/``params`` on a vector or matrix.

    Raises ShapeMismatch naming the offending layer on any disagreement
    between the spec, the parameter shapes, and the input width.
    """
    if len(params) != 2 * spec.n_layers:
        raise ShapeMismatch(
            f"mlp: spec has {spec.n_layers} layers, needs {2 * spec.n_layers} "
            f"parameter tensors, got {len(params)}"
        )
    h = x
    for li in range(spec.n_layers):
        w = params[2 * li]
        b = params[2 * li + 1]
        n_in = spec.layer_widths[li]
        n_out = spec.layer_widths[li + 1]
        if w.shape != (n_out, n_in):
            raise ShapeMismatch(
                f"mlp layer {li}: weight {w.name or ''} has shape {w.shape}, "
                f"spec wants {(n_out, n_in)}"
            )
        if b.shape != (n_out,):
            raise ShapeMismatch(
                f"mlp layer {li}: bias {b.name or ''} has shape {b.shape}, "
                f"spec wants {(n_out,)}"
            )
        width = h.shape[1] if h.is_matrix else h.size
        if width != n_in:
            raise ShapeMismatch(
                f"mlp layer {li}: input width {width}, spec wants {n_in}"
            )
        h = linear(h, w, b)
        if li < spec.n_layers - 1:
            h = relu(h) if spec.activation == "relu" else tanh(h)
    if spec.final_activation == "sigmoid":
        h = sigmoid(h)
    elif spec.final_activation == "softmax":
        h = softmax(h, -1)
    return h


@dataclass
class Mlp:
    """An MlpSpec bundled with its parameter tensors."""

    spec: MlpSpec
    params: list = field(default_factory=list)

    @staticmethod
    def build(spec, rng, name=""):
        return Mlp(spec, init_mlp_params(spec, rng, name=name))

    def __call__(self, x):
        return mlp_forward(self.spec, self.params, x)


# ---------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------


@dataclass
class OptimizerState:
    """Classical (heavy-ball) SGD-with-momentum state.

    Velocity buffers mirror the parameter list they were created for:
    v <- momentum*v + grad, p <- p - lr*v.
    """

    learning_rate: float
    momentum: float
    velocity: list

    def __post_init__(self):
        if not self.learning_rate > 0.0:
            raise ValueError("learning rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")

    @staticmethod
    def for_params(params, learning_rate, momentum):
        return OptimizerState(
            learning_rate=learning_rate,
            momentum=momentum,
            velocity=[[0.0] * len(p.data) for p in params],
        )


def sgd_step(params, grads, state):
    """One momentum-SGD update, in place; returns (params, state).

    ``grads`` may be None to use each tensor's accumulated ``.grad``
    (missing gradients count as zero).
    """
    if len(state.velocity) != len(params):
        raise ShapeMismatch("optimizer state does not match parameter list")
    if grads is None:
        grads = [p.grad if p.grad is not None else [0.0] * len(p.data) for p in params]
    if len(grads) != len(params):
        raise ShapeMismatch(f"{len(grads)} gradients for {len(params)} parameters")
    lr = state.learning_rate
    mom = state.momentum
    for k, (p, g) in enumerate(zip(params, grads)):
        if len(g) != len(p.data):
            raise ShapeMismatch(
                f"gradient size {len(g)} for parameter {p.name or k} of size {len(p.data)}"
            )
        if not all(map(math.isfinite, g)):
            raise NonFiniteError(f"non-finite gradient for parameter {p.name or k}")
        v = state.velocity[k]
        pd = p.data
        if len(v) != len(pd):
            raise ShapeMismatch(f"velocity size mismatch for parameter {p.name or k}")
        for i in range(len(pd)):
            vi = mom * v[i] + g[i]
            v[i] = vi
            pd[i] -= lr * vi
    return params, state


# ---------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------


def grad_check(closure, params, epsilon=1e-5):
    """Compare backward-pass gradients against central differences.

    ``closure(params)`` must rebuild the loss graph from the current
    parameter values and return a scalar tensor.  Returns the maximum of
    |analytic - numeric| / max(1, |analytic|) over every coordinate of
    every parameter.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon {epsilon} outside [1e-7, 1e-3]")
    zero_grads(params)
    loss = closure(params)
    if loss.size != 1:
        raise ShapeMismatch("grad_check closure must return a scalar tensor")
    if not math.isfinite(loss.item()):
        raise NonFiniteError("closure produced a non-finite loss")
    loss.backward()
    analytic = [
        list(p.grad) if p.grad is not None else [0.0] * len(p.data) for p in params
    ]

    def eval_loss():
        value = closure(params).item()
        if not math.isfinite(value):
            raise NonFiniteError("closure produced a non-finite loss during probing")
        return value

    worst = 0.0
    for p, a in zip(params, analytic):
        d = p.data
        for i in range(len(d)):
            saved = d[i]
            d[i] = saved + epsilon
            up = eval_loss()
            d[i] = saved - epsilon
            down = eval_loss()
            d[i] = saved
            numeric = (up - down) / (2.0 * epsilon)
            err = abs(a[i] - numeric) / max(1.0, abs(a[i]))
            if err > worst:
                worst = err
    return worst
