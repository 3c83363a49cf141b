"""Dense vectors and matrices with deferred scaling and transposition.

The containers here carry two pending flags, a scalar multiplier and (for
matrices) a transposition bit, instead of applying those operations eagerly.
Fused kernels consume the flags at the point of use, so an update like

    d = (alpha * A.T) @ b + beta * c

costs one fresh allocation (the matvec result) and two kernel calls (a
gemv-like matvec and an axpy-like accumulation) instead of the chain of
temporaries a naive evaluation produces.  The ``naive_*`` functions implement
that eager chain for comparison; both routes are tallied by the module-level
instrumentation counters.

Lifetime contract: ``scaled()`` and ``.T`` return non-owning views that share
the operand's storage and must not outlive the expression statement that
created them.  Kernel results are consumable temporaries; adding onto a
temporary reuses its storage.  Call ``simplify()`` before storing any value
long term or touching its elements: it materialises the transposition,
deep-copies borrowed storage and applies the pending scale, in that order.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import blas as _blas


class LazyStateError(RuntimeError):
    """Element access attempted while scale/transpose flags are pending."""


class InstrumentationCounters:
    """Tally of fresh result allocations, kernel calls and element copies."""

    __slots__ = ("allocations", "kernel_calls", "element_copies")

    def __init__(self):
        self.reset()

    def reset(self):
        self.allocations = 0
        self.kernel_calls = 0
        self.element_copies = 0

    def snapshot(self):
        return (self.allocations, self.kernel_calls, self.element_copies)


counters = InstrumentationCounters()


def reset_counters():
    counters.reset()


def _fresh(shape, order="F"):
    counters.allocations += 1
    return np.empty(shape, dtype=np.float64, order=order)


class DenseVector:
    """Real vector with a deferred scalar multiplier."""

    __slots__ = ("_data", "_scale", "_owns", "_temp")

    def __init__(self, data, _share=False):
        if _share:
            self._data = data
        else:
            self._data = np.array(data, dtype=np.float64, copy=True).reshape(-1)
        self._scale = 1.0
        self._owns = not _share
        self._temp = False

    @classmethod
    def zeros(cls, n):
        v = cls.__new__(cls)
        v._data = np.zeros(int(n), dtype=np.float64)
        v._scale = 1.0
        v._owns = True
        v._temp = False
        return v

    @classmethod
    def _result(cls, data):
        v = cls.__new__(cls)
        v._data = data
        v._scale = 1.0
        v._owns = True
        v._temp = True
        return v

    # ---- state ----------------------------------------------------------

    @property
    def size(self):
        return self._data.shape[0]

    @property
    def owns_storage(self):
        return self._owns

    @property
    def pending_scale(self):
        return self._scale

    def is_simplified(self):
        return self._scale == 1.0

    # ---- lazy ops --------------------------------------------------------

    def scaled(self, alpha):
        """Non-owning view of this vector with the multiplier folded in."""
        v = DenseVector.__new__(DenseVector)
        v._data = self._data
        v._scale = self._scale * float(alpha)
        v._owns = False
        v._temp = False
        return v

    def __mul__(self, alpha):
        return self.scaled(alpha)

    __rmul__ = __mul__

    def __neg__(self):
        return self.scaled(-1.0)

    def simplify(self):
        """Resolve pending state in place; after this, flags are neutral."""
        if not self._owns:
            src = self._data
            self._data = _fresh(src.shape)
            np.copyto(self._data, src)
            counters.kernel_calls += 1
            counters.element_copies += src.size
            self._owns = True
        if self._scale != 1.0:
            self._data *= self._scale
            counters.kernel_calls += 1
            self._scale = 1.0
        self._temp = False
        return self

    # ---- element access ---------------------------------------------------

    def _check_neutral(self):
        if self._scale != 1.0:
            raise LazyStateError(
                "element access on a vector with a pending scale; call simplify()"
            )

    def __getitem__(self, i):
        self._check_neutral()
        return float(self._data[i])

    def __setitem__(self, i, value):
        self._check_neutral()
        self._data[i] = value

    def __len__(self):
        return self.size

    def to_array(self):
        """Fully evaluated copy as a plain numpy array (no counter traffic)."""
        return self._scale * self._data

    # ---- kernels -----------------------------------------------------------

    def __add__(self, other):
        return _vec_add(self, other)

    def __sub__(self, other):
        return _vec_add(self, other.scaled(-1.0))

    def dot(self, other):
        if self.size != other.size:
            raise ValueError("dot: size mismatch %d vs %d" % (self.size, other.size))
        counters.kernel_calls += 1
        return self._scale * other._scale * float(_blas.ddot(self._data, other._data))

    def norm2(self):
        counters.kernel_calls += 1
        return abs(self._scale) * float(_blas.dnrm2(self._data))

    def __repr__(self):
        tag = "temp" if self._temp else ("own" if self._owns else "view")
        return "DenseVector(n=%d, scale=%g, %s)" % (self.size, self._scale, tag)


def _vec_add(u, v):
    """Fused u + v.  A temporary operand donates its storage (axpy), otherwise
    a fresh result is allocated."""
    if u.size != v.size:
        raise ValueError("add: size mismatch %d vs %d" % (u.size, v.size))
    if u._temp and u._owns and u._scale == 1.0:
        _blas.daxpy(v._data, u._data, a=v._scale)
        counters.kernel_calls += 1
        return u
    if v._temp and v._owns and v._scale == 1.0:
        _blas.daxpy(u._data, v._data, a=u._scale)
        counters.kernel_calls += 1
        return v
    out = _fresh(u._data.shape)
    np.multiply(u._data, u._scale, out=out)
    _blas.daxpy(v._data, out, a=v._scale)
    counters.kernel_calls += 2
    return DenseVector._result(out)


class DenseMatrix:
    """Real matrix with deferred scale and transpose flags.

    Storage is column-major so the fused BLAS kernels consume it without
    hidden copies.  The logical shape honours the transpose flag.
    """

    __slots__ = ("_data", "_scale", "_trans", "_owns", "_temp")

    def __init__(self, data, _share=False):
        if _share:
            self._data = data
        else:
            self._data = np.array(data, dtype=np.float64, copy=True, order="F")
            if self._data.ndim != 2:
                raise ValueError("DenseMatrix expects a 2-D array")
        self._scale = 1.0
        self._trans = False
        self._owns = not _share
        self._temp = False

    @classmethod
    def zeros(cls, nrows, ncols):
        m = cls.__new__(cls)
        m._data = np.zeros((int(nrows), int(ncols)), dtype=np.float64, order="F")
        m._scale = 1.0
        m._trans = False
        m._owns = True
        m._temp = False
        return m

    @classmethod
    def _result(cls, data):
        m = cls.__new__(cls)
        m._data = data
        m._scale = 1.0
        m._trans = False
        m._owns = True
        m._temp = True
        return m

    # ---- state -------------------------------------------------------------

    @property
    def shape(self):
        r, c = self._data.shape
        return (c, r) if self._trans else (r, c)

    @property
    def owns_storage(self):
        return self._owns

    @property
    def pending_scale(self):
        return self._scale

    @property
    def pending_transpose(self):
        return self._trans

    def is_simplified(self):
        return self._scale == 1.0 and not self._trans

    # ---- lazy ops ------------------------------------------------------------

    def scaled(self, alpha):
        m = DenseMatrix.__new__(DenseMatrix)
        m._data = self._data
        m._scale = self._scale * float(alpha)
        m._trans = self._trans
        m._owns = False
        m._temp = False
        return m

    def __mul__(self, alpha):
        return self.scaled(alpha)

    __rmul__ = __mul__

    def __neg__(self):
        return self.scaled(-1.0)

    @property
    def T(self):
        m = DenseMatrix.__new__(DenseMatrix)
        m._data = self._data
        m._scale = self._scale
        m._trans = not self._trans
        m._owns = False
        m._temp = False
        return m

    def simplify(self):
        """Resolve pending state: materialise the transpose, then deep-copy
        borrowed storage, then apply the scale in place."""
        if self._trans:
            src = self._data
            self._data = _fresh(src.T.shape)
            np.copyto(self._data, src.T)
            counters.kernel_calls += 1
            counters.element_copies += src.size
            self._trans = False
            self._owns = True
        if not self._owns:
            src = self._data
            self._data = _fresh(src.shape)
            np.copyto(self._data, src)
            counters.kernel_calls += 1
            counters.element_copies += src.size
            self._owns = True
        if self._scale != 1.0:
            self._data *= self._scale
            counters.kernel_calls += 1
            self._scale = 1.0
        self._temp = False
        return self

    # ---- element access ---------------------------------------------------------

    def _check_neutral(self):
        if self._scale != 1.0 or self._trans:
            raise LazyStateError(
                "element access on a matrix with pending scale/transpose; call simplify()"
            )

    def __getitem__(self, ij):
        self._check_neutral()
        return float(self._data[ij])

    def __setitem__(self, ij, value):
        self._check_neutral()
        self._data[ij] = value

    def to_array(self):
        a = self._data.T if self._trans else self._data
        return self._scale * a

    # ---- kernels -------------------------------------------------------------------

    def matvec(self, x, extra_scale=1.0):
        """Fused y = (pending scales) * op(M) @ x; one allocation, one kernel."""
        nr, nc = self.shape
        if nc != x.size:
            raise ValueError("matvec: shape %s against vector of size %d" % ((nr, nc), x.size))
        alpha = self._scale * x._scale * extra_scale
        y = _blas.dgemv(alpha, self._data, x._data, trans=1 if self._trans else 0)
        counters.allocations += 1
        counters.kernel_calls += 1
        return DenseVector._result(y)

    def matmat(self, other):
        """Fused C = (pending scales) * op(A) @ op(B)."""
        if self.shape[1] != other.shape[0]:
            raise ValueError("matmat: %s @ %s" % (self.shape, other.shape))
        alpha = self._scale * other._scale
        c = _blas.dgemm(alpha, self._data, other._data,
                        trans_a=1 if self._trans else 0,
                        trans_b=1 if other._trans else 0)
        counters.allocations += 1
        counters.kernel_calls += 1
        return DenseMatrix._result(np.asfortranarray(c))

    def __matmul__(self, other):
        if isinstance(other, DenseVector):
            return self.matvec(other)
        if isinstance(other, DenseMatrix):
            return self.matmat(other)
        return NotImplemented

    def __add__(self, other):
        if self.shape != other.shape:
            raise ValueError("add: shape mismatch %s vs %s" % (self.shape, other.shape))
        if self._temp and self._owns and self.is_simplified() and not other._trans:
            self._data += other._scale * other._data if other._scale != 1.0 else other._data
            counters.kernel_calls += 1
            return self
        out = _fresh(self.shape)
        a = self._data.T if self._trans else self._data
        b = other._data.T if other._trans else other._data
        np.multiply(a, self._scale, out=out)
        out += other._scale * b if other._scale != 1.0 else b
        counters.kernel_calls += 2
        return DenseMatrix._result(out)

    def __sub__(self, other):
        return self.__add__(other.scaled(-1.0))

    def __repr__(self):
        tag = "temp" if self._temp else ("own" if self._owns else "view")
        return "DenseMatrix(shape=%s, scale=%g, trans=%s, %s)" % (
            self.shape, self._scale, self._trans, tag)


# ---------------------------------------------------------------------------
# Descriptive aliases for the lazy constructors.

def scale_lazy(alpha, a):
    return a.scaled(alpha)


def transpose_lazy(m):
    return m.T


def matvec(m, x):
    return m.matvec(x)


def dot(u, v):
    return u.dot(v)


# ---------------------------------------------------------------------------
# Naive reference route: every step eager, every result a fresh container.
# Kept deliberately wasteful; the accounting tests compare it with the fused
# route above.

def naive_transpose(m):
    m._check_neutral()
    out = _fresh(m._data.T.shape)
    np.copyto(out, m._data.T)
    counters.kernel_calls += 1
    counters.element_copies += m._data.size
    return DenseMatrix._result(out)


def naive_scale(alpha, a):
    a._check_neutral()
    out = _fresh(a._data.shape)
    np.multiply(a._data, float(alpha), out=out)
    counters.kernel_calls += 1
    if isinstance(a, DenseVector):
        return DenseVector._result(out)
    return DenseMatrix._result(out)


def naive_matvec(m, x):
    m._check_neutral()
    x._check_neutral()
    y = _blas.dgemv(1.0, m._data, x._data)
    counters.allocations += 1
    counters.kernel_calls += 1
    return DenseVector._result(y)


def naive_add(u, v):
    u._check_neutral()
    v._check_neutral()
    out = _fresh(u._data.shape)
    np.add(u._data, v._data, out=out)
    counters.kernel_calls += 1
    return DenseVector._result(out)
