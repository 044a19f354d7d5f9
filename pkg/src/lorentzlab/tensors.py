"""Light tensor containers with index-variance tags.

Hot loops work on raw ndarrays; these wrappers live at the public API of
the curvature operations, where symmetry promises and index bookkeeping
are worth making explicit.
"""

from __future__ import annotations

import numpy as np

LOWER = "lower"
UPPER = "upper"


class Tensor2:
    """Rank-2 tensor with per-index variance and an enforced symmetry flag."""

    def __init__(self, components, variance=(LOWER, LOWER), symmetric=False):
        comp = np.asarray(components, dtype=float)
        if comp.shape[-2:] != (4, 4):
            raise ValueError("Tensor2 needs trailing shape (4, 4)")
        if symmetric:
            asym = np.abs(comp - np.swapaxes(comp, -1, -2)).max()
            if asym > 1e-10 * max(1.0, np.abs(comp).max()):
                raise ValueError(f"symmetry violated by {asym:.3e}")
            comp = 0.5 * (comp + np.swapaxes(comp, -1, -2))
        self.components = comp
        self.variance = tuple(variance)
        self.symmetric = bool(symmetric)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.components, dtype=dtype)

    def raise_index(self, g_inv, slot):
        comp = self.components
        if self.variance[slot] != LOWER:
            raise ValueError("index already contravariant")
        if slot == 0:
            comp = np.einsum("...ab,...bc->...ac", g_inv, comp)
        else:
            comp = np.einsum("...ab,...cb->...ca", g_inv, comp)
        variance = list(self.variance)
        variance[slot] = UPPER
        return Tensor2(comp, tuple(variance), symmetric=False)

    def lower_index(self, g, slot):
        comp = self.components
        if self.variance[slot] != UPPER:
            raise ValueError("index already covariant")
        if slot == 0:
            comp = np.einsum("...ab,...bc->...ac", g, comp)
        else:
            comp = np.einsum("...ab,...cb->...ca", g, comp)
        variance = list(self.variance)
        variance[slot] = LOWER
        return Tensor2(comp, tuple(variance), symmetric=False)

    def trace(self, g_inv):
        if self.variance != (LOWER, LOWER):
            raise ValueError("trace with g_inv expects two covariant indices")
        return np.einsum("...ab,...ab->...", g_inv, self.components)


class Tensor3:
    """Rank-3 tensor; used for connection coefficients (upper, lower, lower)."""

    def __init__(self, components, variance=(UPPER, LOWER, LOWER),
                 symmetric_lower=False):
        comp = np.asarray(components, dtype=float)
        if comp.shape[-3:] != (4, 4, 4):
            raise ValueError("Tensor3 needs trailing shape (4, 4, 4)")
        if symmetric_lower:
            asym = np.abs(comp - np.swapaxes(comp, -1, -2)).max()
            if asym > 1e-10 * max(1.0, np.abs(comp).max()):
                raise ValueError(f"lower-index symmetry violated by {asym:.3e}")
            comp = 0.5 * (comp + np.swapaxes(comp, -1, -2))
        self.components = comp
        self.variance = tuple(variance)
        self.symmetric_lower = bool(symmetric_lower)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.components, dtype=dtype)
