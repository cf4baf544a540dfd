"""
Second-order forward-mode dual numbers ("jets").

A Jet carries a value together with its gradient and Hessian with respect to
n independent variables. All three are numpy arrays so a single expression
evaluates a field, its first and its second derivatives at a whole batch of
points:

    x = Jet.variable(X, 0, 2)
    y = Jet.variable(Y, 1, 2)
    u = exp(x * y) * cos(x)
    u.val, u.grad[1], u.hess[0, 1]

Charts use n = 1 (parameter t), manufactured solutions use n = 2.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class Jet:
    val: np.ndarray
    grad: np.ndarray   # (n, *val.shape)
    hess: np.ndarray   # (n, n, *val.shape)

    @property
    def n(self) -> int:
        return self.grad.shape[0]

    @classmethod
    def variable(cls, value, index: int, n: int) -> "Jet":
        val = np.asarray(value, dtype=float)
        grad = np.zeros((n,) + val.shape)
        grad[index] = 1.0
        return cls(val, grad, np.zeros((n, n) + val.shape))

    @classmethod
    def constant(cls, value, n: int, shape=()) -> "Jet":
        val = np.broadcast_to(np.asarray(value, dtype=float), shape).copy()
        return cls(val, np.zeros((n,) + val.shape), np.zeros((n, n) + val.shape))

    def _lift(self, other) -> "Jet":
        if isinstance(other, Jet):
            return other
        return Jet.constant(other, self.n, self.val.shape)

    def _apply(self, f0, f1, f2) -> "Jet":
        """Chain rule for a scalar function with value f0 and derivatives f1, f2."""
        g = self.grad
        outer = g[:, None] * g[None, :]
        return Jet(f0, f1 * g, f1 * self.hess + f2 * outer)

    def __add__(self, other):
        o = self._lift(other)
        return Jet(self.val + o.val, self.grad + o.grad, self.hess + o.hess)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.val, -self.grad, -self.hess)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            c = np.asarray(other, dtype=float)
            return Jet(self.val * c, self.grad * c, self.hess * c)
        a, b = self, other
        cross = a.grad[:, None] * b.grad[None, :]
        return Jet(
            a.val * b.val,
            a.grad * b.val + a.val * b.grad,
            a.hess * b.val + cross + np.swapaxes(cross, 0, 1) + a.val * b.hess,
        )

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        v = self.val
        return self._apply(1.0 / v, -1.0 / v**2, 2.0 / v**3)

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        v = self.val
        if isinstance(p, (int, np.integer)):
            if p == 0:
                return Jet.constant(1.0, self.n, v.shape)
            if p == 1:
                return Jet(v.copy(), self.grad.copy(), self.hess.copy())
            if p > 1:
                return self._apply(v**p, p * v**(p - 1), p * (p - 1) * v**(p - 2) if p > 2 else 2.0 * np.ones_like(v))
        p = float(p)
        return self._apply(v**p, p * v**(p - 1), p * (p - 1) * v**(p - 2))


def _unary(x, f0, f1, f2):
    if isinstance(x, Jet):
        return x._apply(f0(x.val), f1(x.val), f2(x.val))
    return f0(np.asarray(x, dtype=float))


def exp(x):
    return _unary(x, np.exp, np.exp, np.exp)


def sin(x):
    return _unary(x, np.sin, np.cos, lambda v: -np.sin(v))


def cos(x):
    return _unary(x, np.cos, lambda v: -np.sin(v), lambda v: -np.cos(v))


def sqrt(x):
    return _unary(x, np.sqrt, lambda v: 0.5 / np.sqrt(v), lambda v: -0.25 / v**1.5)
