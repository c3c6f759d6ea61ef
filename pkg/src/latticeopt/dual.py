"""Minimal forward-mode automatic differentiation with dual numbers.

A :class:`Dual` carries a value and its derivative with respect to a single
scalar seed; value and derivative may be numpy arrays of matching shape.
Only the operations needed to differentiate the material model are
implemented.
"""

import numpy as np

__all__ = ["Dual", "softplus", "sqrt"]


def _as_dual(x):
    if isinstance(x, Dual):
        return x
    return Dual(x, np.zeros_like(np.asarray(x, dtype=float)))


class Dual:
    """Value/derivative pair propagated through arithmetic operations."""

    __slots__ = ("val", "dot")
    __array_priority__ = 100  # numpy defers binary ops to Dual

    def __init__(self, val, dot=None):
        self.val = np.asarray(val, dtype=float)
        if dot is None:
            dot = np.zeros_like(self.val)
        self.dot = np.asarray(dot, dtype=float)
        if self.val.shape != self.dot.shape:
            raise ValueError("value and derivative shapes differ")

    def __repr__(self):
        return f"Dual({self.val!r}, {self.dot!r})"

    def __add__(self, other):
        o = _as_dual(other)
        return Dual(self.val + o.val, self.dot + o.dot)

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.val, -self.dot)

    def __sub__(self, other):
        o = _as_dual(other)
        return Dual(self.val - o.val, self.dot - o.dot)

    def __rsub__(self, other):
        o = _as_dual(other)
        return Dual(o.val - self.val, o.dot - self.dot)

    def __mul__(self, other):
        o = _as_dual(other)
        return Dual(self.val * o.val, self.dot * o.val + self.val * o.dot)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = _as_dual(other)
        return Dual(
            self.val / o.val,
            (self.dot * o.val - self.val * o.dot) / o.val**2,
        )

    def __rtruediv__(self, other):
        return _as_dual(other) / self

    def __pow__(self, n):
        if not np.isscalar(n):
            raise TypeError("only constant exponents supported")
        return Dual(self.val**n, n * self.val ** (n - 1) * self.dot)

    def __matmul__(self, other):
        o = _as_dual(other)
        return Dual(self.val @ o.val, self.dot @ o.val + self.val @ o.dot)

    def __rmatmul__(self, other):
        return _as_dual(other) @ self

    @property
    def T(self):
        return Dual(self.val.T, self.dot.T)

    def __getitem__(self, idx):
        return Dual(self.val[idx], self.dot[idx])


def sqrt(x):
    if isinstance(x, Dual):
        r = np.sqrt(x.val)
        return Dual(r, x.dot / (2.0 * r))
    return np.sqrt(x)


def softplus(x):
    """Numerically stable ln(1 + exp(x)), dual-aware."""
    if isinstance(x, Dual):
        return Dual(softplus(x.val), _sigmoid(x.val) * x.dot)
    x = np.asarray(x, dtype=float)
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out
