"""Complex affine expressions over a real decision vector.

An :class:`Affine` of shape ``S`` represents ``const + sum_i x_i * lin[i]`` where
``x`` is the real decision vector of a conic program, ``const`` has shape ``S``
and ``lin`` has shape ``(n,) + S``.  Complex decision variables are stored as
interleaved ``(re, im)`` pairs of real variables, so conjugation and real parts
stay affine.

Only products with constants are supported.  Multiplying two expressions raises,
which keeps every constraint built from them linear-conic.
"""

from __future__ import annotations

import numpy as np


class Affine:
    # make numpy defer to the reflected operators (A @ expr, 2.0 * expr)
    __array_ufunc__ = None

    def __init__(self, const, lin):
        self.const = np.asarray(const, dtype=complex)
        self.lin = np.asarray(lin, dtype=complex)
        if self.lin.shape[1:] != self.const.shape:
            raise ValueError(f"lin shape {self.lin.shape} does not match const {self.const.shape}")

    # basic properties
    @property
    def shape(self):
        return self.const.shape

    @property
    def ndim(self):
        return self.const.ndim

    @property
    def n(self):
        return self.lin.shape[0]

    def __len__(self):
        return self.shape[0]

    def __repr__(self):
        return f"Affine(shape={self.shape}, n={self.n})"

    def padded(self, n):
        if n == self.n:
            return self
        if n < self.n:
            raise ValueError("cannot shrink the variable dimension")
        extra = np.zeros((n - self.n,) + self.shape, dtype=complex)
        return Affine(self.const, np.concatenate([self.lin, extra], axis=0))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self.const + np.tensordot(x[: self.n], self.lin, axes=(0, 0))

    def _lin_as(self, shape):
        """lin broadcast to (n,) + shape, with numpy's right-aligned rules on the value axes."""
        lead = len(shape) - self.ndim
        lin = self.lin.reshape((self.n,) + (1,) * lead + self.shape) if lead > 0 else self.lin
        return np.broadcast_to(lin, (self.n,) + tuple(shape))

    # arithmetic
    def __add__(self, other):
        if isinstance(other, Affine):
            n = max(self.n, other.n)
            a, b = self.padded(n), other.padded(n)
            const = a.const + b.const
            return Affine(const, a._lin_as(const.shape) + b._lin_as(const.shape))
        other = np.asarray(other)
        const = self.const + other
        return Affine(const, self._lin_as(const.shape).copy())

    __radd__ = __add__

    def __neg__(self):
        return Affine(-self.const, -self.lin)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Affine):
            raise TypeError("product of two affine expressions is not affine")
        other = np.asarray(other)
        const = self.const * other
        return Affine(const, self._lin_as(const.shape) * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Affine):
            raise TypeError("division by an affine expression")
        return self * (1.0 / np.asarray(other))

    def __matmul__(self, other):
        if isinstance(other, Affine):
            raise TypeError("product of two affine expressions is not affine")
        B = np.asarray(other)
        return Affine(self.const @ B, self.lin @ B)

    def __rmatmul__(self, other):
        A = np.asarray(other)
        if self.ndim == 1:
            return Affine(A @ self.const, self.lin @ A.T)
        return Affine(A @ self.const, A @ self.lin)

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Affine(self.const[idx], self.lin[(slice(None),) + idx])

    def conj(self):
        return Affine(self.const.conj(), self.lin.conj())

    @property
    def real(self):
        return Affine(self.const.real, self.lin.real)

    @property
    def imag(self):
        return Affine(self.const.imag, self.lin.imag)

    @property
    def T(self):
        if self.ndim < 2:
            return self
        return Affine(self.const.T, np.swapaxes(self.lin, -1, -2))

    @property
    def H(self):
        return self.conj().T

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        const = self.const.reshape(shape, order="F")
        lin = self.lin.reshape((self.n,) + const.shape, order="F")
        return Affine(const, lin)

    def vec(self):
        """Column-major vectorization."""
        return self.reshape(self.const.size)

    def sum(self):
        return Affine(self.const.sum(), self.lin.reshape(self.n, -1).sum(axis=1))

    def trace(self):
        return Affine(np.trace(self.const), np.trace(self.lin, axis1=1, axis2=2))


def as_affine(v, n=0):
    if isinstance(v, Affine):
        return v.padded(max(n, v.n))
    v = np.asarray(v, dtype=complex)
    return Affine(v, np.zeros((n,) + v.shape, dtype=complex))


def _common_n(items):
    return max((it.n for it in items if isinstance(it, Affine)), default=0)


def stack(items, axis=0):
    n = _common_n(items)
    items = [as_affine(it, n) for it in items]
    return Affine(np.stack([it.const for it in items], axis=axis),
                  np.stack([it.lin for it in items], axis=axis + 1 if axis >= 0 else axis))


def concatenate(items, axis=0):
    n = _common_n(items)
    items = [as_affine(it, n) for it in items]
    return Affine(np.concatenate([it.const for it in items], axis=axis),
                  np.concatenate([it.lin for it in items], axis=axis + 1 if axis >= 0 else axis))


def bmat(blocks):
    """Assemble a block matrix from Affine, ndarray or ``None`` (zero) blocks.

    Block sizes are inferred per block-row and block-column, so every row and
    column needs at least one non-``None`` entry.
    """
    n = _common_n([b for row in blocks for b in row])
    rows = [None] * len(blocks)
    cols = [None] * len(blocks[0])
    for i, row in enumerate(blocks):
        for j, b in enumerate(row):
            if b is None:
                continue
            shp = np.shape(b.const if isinstance(b, Affine) else b)
            rows[i], cols[j] = shp[0], shp[1]
    if None in rows or None in cols:
        raise ValueError("every block row and column needs a sized entry")
    out_rows = []
    for i, row in enumerate(blocks):
        parts = []
        for j, b in enumerate(row):
            parts.append(as_affine(np.zeros((rows[i], cols[j])) if b is None else b, n))
        out_rows.append(concatenate(parts, axis=1))
    return concatenate(out_rows, axis=0)


def kron(A, B):
    """Kronecker product where at most one factor is affine."""
    if isinstance(A, Affine) and isinstance(B, Affine):
        raise TypeError("product of two affine expressions is not affine")
    if not isinstance(A, Affine) and not isinstance(B, Affine):
        return np.kron(A, B)
    if isinstance(A, Affine):
        B = np.asarray(B)
        lin = np.stack([np.kron(L, B) for L in A.lin]) if A.n else \
            np.zeros((0,) + np.kron(A.const, B).shape, dtype=complex)
        return Affine(np.kron(A.const, B), lin)
    A = np.asarray(A)
    lin = np.stack([np.kron(A, L) for L in B.lin]) if B.n else \
        np.zeros((0,) + np.kron(A, B.const).shape, dtype=complex)
    return Affine(np.kron(A, B.const), lin)


def outer(u, v):
    """u v^T for vectors where at most one factor is affine."""
    if isinstance(u, Affine) and isinstance(v, Affine):
        raise TypeError("product of two affine expressions is not affine")
    if isinstance(u, Affine):
        v = np.asarray(v)
        return Affine(np.outer(u.const, v), u.lin[:, :, None] * v[None, None, :])
    if isinstance(v, Affine):
        u = np.asarray(u)
        return Affine(np.outer(u, v.const), u[None, :, None] * v.lin[:, None, :])
    return np.outer(u, v)


def vdot(u, v):
    """u^H v for vectors where at most one factor is affine."""
    if isinstance(u, Affine) and isinstance(v, Affine):
        raise TypeError("product of two affine expressions is not affine")
    if isinstance(u, Affine):
        return u.conj() @ np.asarray(v)
    if isinstance(v, Affine):
        return np.asarray(u).conj() @ v
    return np.vdot(u, v)


def value(expr, x):
    return expr.value(x) if isinstance(expr, Affine) else np.asarray(expr)
