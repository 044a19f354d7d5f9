"""Forward-propagated second-order dual numbers (2-jets).

A ``Jet2`` carries a value together with its gradient and Hessian with
respect to the four chart coordinates.  Metric catalog entries are written
against the dispatching helpers at the bottom of this module (``exp``,
``sin``, ...), so a single definition yields values, first and second
derivatives without finite differencing.

All fields broadcast over arbitrary leading batch axes: ``val`` has shape
``(...,)``, ``d1`` has shape ``(..., 4)`` and ``d2`` has ``(..., 4, 4)``.
"""

from __future__ import annotations

import numpy as np

DIM = 4


class Jet2:
    __slots__ = ("val", "d1", "d2")

    def __init__(self, val, d1, d2):
        self.val = np.asarray(val, dtype=float)
        self.d1 = np.asarray(d1, dtype=float)
        self.d2 = np.asarray(d2, dtype=float)

    # ------------------------------------------------------------------
    @staticmethod
    def seed_coords(x):
        """Return the four coordinate functions of ``x`` as jets.

        ``x`` has shape ``(..., 4)``; coordinate ``p`` gets ``d1 = e_p``
        and a vanishing Hessian.
        """
        x = np.asarray(x, dtype=float)
        batch = x.shape[:-1]
        coords = []
        for p in range(DIM):
            d1 = np.zeros(batch + (DIM,))
            d1[..., p] = 1.0
            coords.append(Jet2(x[..., p], d1, np.zeros(batch + (DIM, DIM))))
        return coords

    @staticmethod
    def constant(c, batch=()):
        c = np.broadcast_to(np.asarray(c, dtype=float), batch)
        return Jet2(c, np.zeros(batch + (DIM,)), np.zeros(batch + (DIM, DIM)))

    # ------------------------------------------------------------------
    def _lift(self, other):
        if isinstance(other, Jet2):
            return other
        return Jet2.constant(np.asarray(other, dtype=float) * np.ones_like(self.val),
                             self.val.shape)

    def __add__(self, other):
        o = self._lift(other)
        return Jet2(self.val + o.val, self.d1 + o.d1, self.d2 + o.d2)

    __radd__ = __add__

    def __neg__(self):
        return Jet2(-self.val, -self.d1, -self.d2)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __mul__(self, other):
        o = self._lift(other)
        a, b = self, o
        cross = a.d1[..., :, None] * b.d1[..., None, :]
        return Jet2(
            a.val * b.val,
            a.d1 * b.val[..., None] + b.d1 * a.val[..., None],
            a.d2 * b.val[..., None, None] + b.d2 * a.val[..., None, None]
            + cross + np.swapaxes(cross, -1, -2),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        return self * o._unary(1.0 / o.val, -1.0 / o.val**2, 2.0 / o.val**3)

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __pow__(self, n):
        v = self.val
        return self._unary(v**n, n * v**(n - 1), n * (n - 1) * v**(n - 2))

    def _unary(self, f, df, d2f):
        """Chain rule for a scalar function applied to this jet."""
        outer = self.d1[..., :, None] * self.d1[..., None, :]
        return Jet2(f, df[..., None] * self.d1,
                    df[..., None, None] * self.d2 + d2f[..., None, None] * outer)


def _dispatch(x, f, df, d2f):
    if isinstance(x, Jet2):
        return x._unary(f(x.val), df(x.val), d2f(x.val))
    return f(np.asarray(x, dtype=float))


def exp(x):
    return _dispatch(x, np.exp, np.exp, np.exp)


def sin(x):
    return _dispatch(x, np.sin, np.cos, lambda v: -np.sin(v))


def cos(x):
    return _dispatch(x, np.cos, lambda v: -np.sin(v), lambda v: -np.cos(v))


def sqrt(x):
    return _dispatch(x, np.sqrt,
                     lambda v: 0.5 / np.sqrt(v),
                     lambda v: -0.25 * v**-1.5)


def log(x):
    return _dispatch(x, np.log, lambda v: 1.0 / v, lambda v: -1.0 / v**2)
