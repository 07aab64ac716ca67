"""Dense-tensor arithmetic with reverse-mode automatic differentiation.

A tape is built implicitly as operations run (define-by-run); calling
``backward`` on a scalar result walks the tape once in reverse topological
order and fills ``grad`` buffers. Data is float32 by default with float64
accumulation in reductions; float64 tensors are supported for verification
work where finite-difference noise matters.

Tape nodes are never mutated in place. Forward/backward over one tape is
single-threaded; independent tapes may live on separate threads.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import ContractViolation, DimensionError, NumericError

_node_ids = itertools.count()

_FLOAT_DTYPES = (np.float32, np.float64)


def _as_dtype(dtype):
    dt = np.dtype(dtype)
    if dt.type not in _FLOAT_DTYPES:
        raise ContractViolation(f"tensor dtype must be float32 or float64, got {dt}")
    return dt


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing trailing-dimension broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A dense n-dimensional array participating in reverse-mode differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "node_id")

    def __init__(self, data, requires_grad=False, dtype=np.float32):
        dt = _as_dtype(dtype)
        arr = np.asarray(data, dtype=dt)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.node_id = next(_node_ids)

    # -- constructors -------------------------------------------------------

    @staticmethod
    def zeros(shape, requires_grad=False, dtype=np.float32):
        return Tensor(np.zeros(shape, dtype=dtype), requires_grad, dtype=dtype)

    @staticmethod
    def ones(shape, requires_grad=False, dtype=np.float32):
        return Tensor(np.ones(shape, dtype=dtype), requires_grad, dtype=dtype)

    @staticmethod
    def eye(n, dtype=np.float32):
        return Tensor(np.eye(n, dtype=dtype), dtype=dtype)

    # -- bookkeeping --------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self):
        return Tensor(self.data.copy(), requires_grad=False, dtype=self.dtype)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, grad={'yes' if self.requires_grad else 'no'})"

    # -- graph construction -------------------------------------------------

    def _make(self, data, parents, backward):
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.requires_grad = any(p.requires_grad for p in parents)
        out._parents = tuple(parents) if out.requires_grad else ()
        out._backward = backward if out.requires_grad else None
        out.node_id = next(_node_ids)
        return out

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g.astype(self.dtype, copy=False)

    def backward(self):
        """Reverse-mode sweep seeding d(self)/d(self) = 1; self must be scalar.

        Grad buffers of every node reachable from `self` are (re)initialized,
        so repeated calls over the same graph give bit-identical results.
        """
        if self.data.size != 1:
            raise ContractViolation(
                f"backward requires a scalar loss, got shape {self.shape}"
            )
        topo: list[Tensor] = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        for node in topo:
            node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # -- elementwise arithmetic ---------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other), dtype=self.dtype)

    def __add__(self, other):
        other = self._coerce(other)
        out_data = self.data + other.data

        def bwd(g):
            if self.requires_grad:
                self._accum(_unbroadcast(g, self.shape))
            if other.requires_grad:
                other._accum(_unbroadcast(g, other.shape))

        return self._make(out_data, (self, other), bwd)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        out_data = self.data - other.data

        def bwd(g):
            if self.requires_grad:
                self._accum(_unbroadcast(g, self.shape))
            if other.requires_grad:
                other._accum(_unbroadcast(-g, other.shape))

        return self._make(out_data, (self, other), bwd)

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        out_data = self.data * other.data

        def bwd(g):
            if self.requires_grad:
                self._accum(_unbroadcast(g * other.data, self.shape))
            if other.requires_grad:
                other._accum(_unbroadcast(g * self.data, other.shape))

        return self._make(out_data, (self, other), bwd)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        with np.errstate(divide="ignore", invalid="ignore"):
            out_data = self.data / other.data

        def bwd(g):
            with np.errstate(divide="ignore", invalid="ignore"):
                if self.requires_grad:
                    self._accum(_unbroadcast(g / other.data, self.shape))
                if other.requires_grad:
                    other._accum(
                        _unbroadcast(-g * self.data / (other.data * other.data), other.shape)
                    )

        return self._make(out_data, (self, other), bwd)

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __neg__(self):
        def bwd(g):
            self._accum(-g)

        return self._make(-self.data, (self,), bwd)

    def __pow__(self, p):
        if isinstance(p, Tensor):
            raise ContractViolation("pow exponent must be a Python scalar")
        p = float(p)
        out_data = self.data ** p

        def bwd(g):
            with np.errstate(divide="ignore", invalid="ignore"):
                self._accum(g * p * self.data ** (p - 1.0))

        return self._make(out_data, (self,), bwd)

    def exp(self):
        out_data = np.exp(self.data)

        def bwd(g):
            self._accum(g * out_data)

        return self._make(out_data, (self,), bwd)

    def tanh(self):
        out_data = np.tanh(self.data)

        def bwd(g):
            self._accum(g * (1.0 - out_data * out_data))

        return self._make(out_data, (self,), bwd)

    def recip(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            out_data = 1.0 / self.data

        def bwd(g):
            self._accum(-g * out_data * out_data)

        return self._make(out_data, (self,), bwd)

    def sqrt(self):
        out_data = np.sqrt(self.data)

        def bwd(g):
            with np.errstate(divide="ignore", invalid="ignore"):
                self._accum(g * 0.5 / out_data)

        return self._make(out_data, (self,), bwd)

    def abs(self):
        out_data = np.abs(self.data)

        def bwd(g):
            self._accum(g * np.sign(self.data))

        return self._make(out_data, (self,), bwd)

    def sigmoid(self):
        s = 1.0 / (1.0 + np.exp(-self.data))
        s = s.astype(self.dtype, copy=False)

        def bwd(g):
            self._accum(g * s * (1.0 - s))

        return self._make(s, (self,), bwd)

    def silu(self):
        s = 1.0 / (1.0 + np.exp(-self.data))
        out_data = (self.data * s).astype(self.dtype, copy=False)

        def bwd(g):
            self._accum(g * (s + self.data * s * (1.0 - s)))

        return self._make(out_data, (self,), bwd)

    def elu1(self):
        """elu(x) + 1: positive everywhere, used as linear-attention feature map."""
        pos = self.data > 0
        e = np.exp(np.where(pos, 0.0, self.data))
        out_data = np.where(pos, self.data + 1.0, e).astype(self.dtype, copy=False)

        def bwd(g):
            self._accum(g * np.where(pos, 1.0, e))

        return self._make(out_data, (self,), bwd)

    # -- reductions (64-bit accumulation) ------------------------------------

    def sum(self, axis=None, keepdims=False):
        out_data = np.sum(self.data, axis=axis, keepdims=keepdims, dtype=np.float64)
        out_data = out_data.astype(self.dtype)

        def bwd(g):
            gg = g
            if axis is not None and not keepdims:
                gg = np.expand_dims(g, axis)
            self._accum(np.broadcast_to(gg, self.shape))

        return self._make(out_data, (self,), bwd)

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            n = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            n = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def l2norm(self):
        """Global (unsquared) L2 norm with subgradient 0 at the origin."""
        n = math.sqrt(float(np.sum(self.data.astype(np.float64) ** 2)))
        out_data = np.asarray(n, dtype=self.dtype)

        def bwd(g):
            if n > 0.0:
                self._accum(g * (self.data / n))
            # norm == 0: subgradient choice is 0, contribute nothing

        return self._make(out_data, (self,), bwd)

    # -- shape manipulation ---------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out_data = self.data.reshape(shape)

        def bwd(g):
            self._accum(g.reshape(self.shape))

        return self._make(out_data, (self,), bwd)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inv = tuple(np.argsort(axes))
        out_data = self.data.transpose(axes)

        def bwd(g):
            self._accum(g.transpose(inv))

        return self._make(out_data, (self,), bwd)

    def __getitem__(self, idx):
        out_data = self.data[idx]
        if np.isscalar(out_data) or out_data.ndim == 0:
            out_data = np.asarray(out_data, dtype=self.dtype)
        else:
            out_data = out_data.copy()

        def bwd(g):
            buf = np.zeros_like(self.data)
            buf[idx] += g
            self._accum(buf)

        return self._make(out_data, (self,), bwd)

    def nearest_upsample2d(self, factor):
        """Repeat the trailing two (spatial) axes by an integer factor."""
        f = int(factor)
        out_data = self.data.repeat(f, axis=-2).repeat(f, axis=-1)

        def bwd(g):
            s = g.shape
            gg = g.reshape(s[:-2] + (self.shape[-2], f, self.shape[-1], f))
            self._accum(gg.sum(axis=(-3, -1)))

        return self._make(out_data, (self,), bwd)


def concat(tensors, axis=0):
    tensors = list(tensors)
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accum(g[tuple(sl)])

    return tensors[0]._make(out_data, tensors, bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product; gradient rule dA = dC.B^T, dB = A^T.dC."""
    if a.ndim < 1 or b.ndim < 1:
        raise DimensionError("matmul needs at least 1-d operands")
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else -1]:
        raise DimensionError(f"matmul inner dims differ: {a.shape} vs {b.shape}")
    out_data = np.matmul(a.data, b.data)

    def bwd(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            a._accum(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            b._accum(_unbroadcast(gb, b.shape))

    return a._make(out_data, (a, b), bwd)


_ELEMENTWISE_KINDS = ("add", "sub", "mul", "div", "exp", "tanh", "recip", "pow")


def elementwise(op_kind: str, a: Tensor, b=None) -> Tensor:
    """Broadcasting elementwise arithmetic recorded on the tape.

    `op_kind` is one of add/sub/mul/div (binary, `b` tensor or scalar) or
    exp/tanh/recip (unary) or pow (scalar exponent `b`).
    """
    if op_kind not in _ELEMENTWISE_KINDS:
        raise ContractViolation(f"unknown elementwise op {op_kind!r}")
    if op_kind in ("add", "sub", "mul", "div"):
        other = b if isinstance(b, Tensor) else a._coerce(b)
        try:
            np.broadcast_shapes(a.shape, other.shape)
        except ValueError as exc:
            raise DimensionError(str(exc)) from None
        return {"add": a.__add__, "sub": a.__sub__,
                "mul": a.__mul__, "div": a.__truediv__}[op_kind](other)
    if op_kind == "pow":
        return a ** b
    return {"exp": a.exp, "tanh": a.tanh, "recip": a.recip}[op_kind]()


def conv2d(x: Tensor, w: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """2-d cross-correlation of x[N,C,H,W] with filters w[F,C,kh,kw]."""
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError("conv2d expects x[N,C,H,W] and w[F,C,kh,kw]")
    n, c, h, wd = x.shape
    f, cw, kh, kw = w.shape
    if c != cw:
        raise DimensionError(f"conv2d channel mismatch: input {c}, filter {cw}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise DimensionError("conv2d kernel dims must be odd")
    s, p = int(stride), int(pad)
    oh = (h + 2 * p - kh) // s + 1
    ow = (wd + 2 * p - kw) // s + 1
    if oh < 1 or ow < 1:
        raise DimensionError("conv2d output would be empty")
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + s * oh : s, j : j + s * ow : s]
    cols2 = cols.reshape(n, c * kh * kw, oh * ow)
    w2 = w.data.reshape(f, c * kh * kw)
    out_data = np.matmul(w2, cols2).reshape(n, f, oh, ow)

    def bwd(g):
        g2 = g.reshape(n, f, oh * ow)
        if w.requires_grad:
            dw = np.matmul(g2, cols2.transpose(0, 2, 1)).sum(axis=0)
            w._accum(dw.reshape(w.shape))
        if x.requires_grad:
            dcols = np.matmul(w2.T, g2).reshape(n, c, kh, kw, oh, ow)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i : i + s * oh : s, j : j + s * ow : s] += dcols[:, :, i, j]
            x._accum(dxp[:, :, p : p + h, p : p + wd] if p else dxp)

    return x._make(out_data, (x, w), bwd)


def _gauss_jordan(a64: np.ndarray) -> np.ndarray:
    n = a64.shape[0]
    aug = np.concatenate([a64, np.eye(n)], axis=1)
    for col in range(n):
        piv = col + int(np.argmax(np.abs(aug[col:, col])))
        if abs(aug[piv, col]) < 1e-300:
            raise NumericError("singular matrix in mat_inverse", condition=math.inf)
        if piv != col:
            aug[[col, piv]] = aug[[piv, col]]
        aug[col] = aug[col] / aug[col, col]
        for row in range(n):
            if row != col and aug[row, col] != 0.0:
                aug[row] = aug[row] - aug[row, col] * aug[col]
    return aug[:, n:]


def mat_inverse(a: Tensor) -> Tensor:
    """Inverse of a small square matrix via Gauss-Jordan with partial pivoting.

    Condition number (1-norm estimate) is checked against 1e8. Backward rule:
    d(A^-1) = -A^-1 . dA . A^-1.
    """
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"mat_inverse expects a square matrix, got {a.shape}")
    if a.shape[0] > 16:
        raise DimensionError("mat_inverse is limited to matrices up to 16x16")
    a64 = a.data.astype(np.float64)
    inv64 = _gauss_jordan(a64)
    cond = float(np.abs(a64).sum(axis=0).max() * np.abs(inv64).sum(axis=0).max())
    if not np.isfinite(cond) or cond > 1e8:
        raise NumericError(
            f"ill-conditioned matrix in mat_inverse (cond ~ {cond:.3e})", condition=cond
        )
    out_data = inv64.astype(a.dtype)

    def bwd(g):
        it = out_data.T
        a._accum(-(it @ g @ it))

    return a._make(out_data, (a,), bwd)


def softmax(t: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax built from tape primitives.

    The max-shift is treated as a constant, which leaves the gradient exact.
    """
    shift = Tensor(np.max(t.data, axis=axis, keepdims=True), dtype=t.dtype)
    e = (t - shift).exp()
    return e / e.sum(axis=axis, keepdims=True)


# -- pseudo-random numbers ----------------------------------------------------

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _mix64(x: np.ndarray) -> np.ndarray:
    # modular uint64 arithmetic throughout; wraparound is the point
    with np.errstate(over="ignore"):
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return x ^ (x >> np.uint64(31))


class Prng:
    """Seedable counter-indexed generator (64-bit xorshift-multiply mixer).

    Each output mixes `seed + k * golden` for a monotonically increasing draw
    counter k, so block draws vectorize while the stream stays a pure function
    of (seed, draw index): the same seed always reproduces the same stream.
    Gaussians come from Box-Muller over consecutive counter pairs.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        with np.errstate(over="ignore"):
            self._base = _mix64(np.uint64(self.seed) * _GOLDEN + _GOLDEN)
        self._counter = 0

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        with np.errstate(over="ignore"):
            return _mix64(self._base + idx * _GOLDEN)

    def uniform(self, shape=None) -> np.ndarray | float:
        """Uniform draws in [0, 1)."""
        n = 1 if shape is None else int(np.prod(shape))
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        return float(u[0]) if shape is None else u.reshape(shape)

    def gaussian(self, shape=None, dtype=np.float32) -> np.ndarray | float:
        """Standard normal draws via Box-Muller."""
        n = 1 if shape is None else int(np.prod(shape))
        m = (n + 1) // 2
        raw = self._raw(2 * m)
        u1 = ((raw[:m] >> np.uint64(11)).astype(np.float64) + 1.0) * (2.0 ** -53)
        u2 = (raw[m:] >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * m, dtype=np.float64)
        z[0::2] = r * np.cos(2.0 * np.pi * u2)
        z[1::2] = r * np.sin(2.0 * np.pi * u2)
        z = z[:n].astype(dtype)
        return float(z[0]) if shape is None else z.reshape(shape)

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi)."""
        if hi <= lo:
            raise ContractViolation("randint needs hi > lo")
        return lo + int(self._raw(1)[0] % np.uint64(hi - lo))
