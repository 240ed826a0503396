"""Vectorised forward-mode dual numbers.

A ``Dual`` carries a value array of shape ``S`` and a tangent array of shape
``S + (P,)`` holding the derivative of every value element with respect to
``P`` seed coordinates. All tangents propagate in one pass, so the gradient of
a scalar with respect to all ``P`` coordinates costs one forward evaluation.
"""

from __future__ import annotations

import numpy as np


class Dual:
    __slots__ = ("val", "tan")
    # make numpy defer to our reflected operators (ndarray @ Dual, float * Dual)
    __array_ufunc__ = None

    def __init__(self, val, tan):
        self.val = np.asarray(val, dtype=float)
        self.tan = np.asarray(tan, dtype=float)
        if self.tan.shape[:-1] != self.val.shape:
            raise ValueError(f"tangent shape {self.tan.shape} does not extend value shape {self.val.shape}")

    @classmethod
    def seed(cls, x) -> "Dual":
        """Independent variables: tangent is the identity."""
        x = np.asarray(x, dtype=float).ravel()
        return cls(x, np.eye(x.size))

    @classmethod
    def constant(cls, x, p: int) -> "Dual":
        x = np.asarray(x, dtype=float)
        return cls(x, np.zeros(x.shape + (p,)))

    @property
    def shape(self):
        return self.val.shape

    @property
    def nparam(self) -> int:
        return self.tan.shape[-1]

    def __len__(self):
        return len(self.val)

    def __repr__(self):
        return f"Dual(val={self.val!r}, P={self.nparam})"

    # -- arithmetic ----------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.tan + other.tan)
        other = np.asarray(other, dtype=float)
        v = self.val + other
        return Dual(v, np.broadcast_to(self.tan, v.shape + (self.nparam,)))

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.val, -self.tan)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Dual) else -np.asarray(other, dtype=float))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val * other.val,
                        self.tan * other.val[..., None] + other.tan * self.val[..., None])
        other = np.asarray(other, dtype=float)
        return Dual(self.val * other, self.tan * other[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            return self * other.reciprocal()
        other = np.asarray(other, dtype=float)
        return Dual(self.val / other, self.tan / other[..., None])

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def reciprocal(self):
        r = 1.0 / self.val
        return Dual(r, -self.tan * (r * r)[..., None])

    def __pow__(self, k):
        if isinstance(k, Dual):
            return exp(log(self) * k)
        k = float(k)
        return Dual(self.val ** k, self.tan * (k * self.val ** (k - 1.0))[..., None])

    def __rmatmul__(self, mat):
        mat = np.asarray(mat, dtype=float)
        return Dual(mat @ self.val, mat @ self.tan)

    # -- structure -------------------------------------------------------------
    def __getitem__(self, idx):
        return Dual(self.val[idx], self.tan[idx])

    def sum(self, axis=None):
        if axis is None:
            return Dual(self.val.sum(), self.tan.sum(axis=tuple(range(self.val.ndim))))
        return Dual(self.val.sum(axis=axis), self.tan.sum(axis=axis))

    def mean(self, axis=None):
        n = self.val.size if axis is None else self.val.shape[axis]
        return self.sum(axis) / n

    def cumsum(self):
        return Dual(np.cumsum(self.val, axis=0), np.cumsum(self.tan, axis=0))

    def dot(self, other):
        return (self * other).sum()


def _unary(x, f, df):
    if isinstance(x, Dual):
        return Dual(f(x.val), x.tan * df(x.val)[..., None])
    return f(np.asarray(x, dtype=float))


def exp(x):
    return _unary(x, np.exp, np.exp)


def log(x):
    return _unary(x, np.log, lambda v: 1.0 / v)


def sin(x):
    return _unary(x, np.sin, np.cos)


def cos(x):
    return _unary(x, np.cos, lambda v: -np.sin(v))


def sqrt(x):
    return _unary(x, np.sqrt, lambda v: 0.5 / np.sqrt(v))


def sigmoid(x):
    def f(v):
        return 0.5 * (1.0 + np.tanh(0.5 * v))
    return _unary(x, f, lambda v: f(v) * (1.0 - f(v)))


def softplus(x):
    return _unary(x, lambda v: np.logaddexp(0.0, v), lambda v: 0.5 * (1.0 + np.tanh(0.5 * v)))


def log_sigmoid(x):
    return _unary(x, lambda v: -np.logaddexp(0.0, -v), lambda v: 0.5 * (1.0 - np.tanh(0.5 * v)))


def stack(items) -> Dual:
    items = list(items)
    p = next(i.nparam for i in items if isinstance(i, Dual))
    lifted = [i if isinstance(i, Dual) else Dual.constant(i, p) for i in items]
    return Dual(np.stack([i.val for i in lifted]), np.stack([i.tan for i in lifted]))


def value(x):
    """Primal part as a plain float/array."""
    if isinstance(x, Dual):
        return x.val if x.val.ndim else float(x.val)
    return x


def as_dual(x) -> Dual:
    """Wrap a plain array as a Dual with an empty tangent."""
    return x if isinstance(x, Dual) else Dual.constant(x, 0)
