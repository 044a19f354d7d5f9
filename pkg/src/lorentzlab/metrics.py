"""Chart-based metric providers and the named metric catalog.

A provider evaluates a Lorentzian metric of signature (-,+,+,+) on a single
global chart of R^4, together with first and second coordinate derivatives.
Derivatives come either from closed-form expressions (``analytic`` mode) or
from forward-propagated dual numbers (``dual`` mode, the default for curved
entries).  Finite differences are deliberately not offered here; they live
in the test suite as an independent oracle.

Catalog names understood by :func:`make_metric`:

* ``minkowski``
* ``desitter_like``                     -dt^2 + e^{2t} (dx^2+dy^2+dz^2)
* ``product``                           -dt^2 + c(y)^{-2} |dy|^2
* ``perturbed``                         smooth random perturbation of a base
"""

from __future__ import annotations

import numpy as np

from . import dual
from .dual import Jet2

MINKOWSKI = np.diag([-1.0, 1.0, 1.0, 1.0])


class DegenerateMetricError(ValueError):
    """Raised when a queried metric matrix is singular or has wrong signature."""


class MetricProvider:
    """Smooth map x -> g_jk with derivatives, batched over leading axes.

    Parameters
    ----------
    name : str
        Catalog name (used by scenario configs and repr).
    entry_fn : callable
        ``entry_fn(x0, x1, x2, x3)`` -> nested 4x4 list of scalars/jets.
        Called with floats in plain evaluation and with ``Jet2`` coordinates
        when derivatives are requested.
    derivative_mode : {"dual", "analytic"}
        ``analytic`` requires ``d_fn``/``d2_fn`` overrides.
    """

    def __init__(self, name, entry_fn, derivative_mode="dual",
                 d_fn=None, d2_fn=None, params=None):
        self.name = name
        self._entry_fn = entry_fn
        self.derivative_mode = derivative_mode
        self._d_fn = d_fn
        self._d2_fn = d2_fn
        self.params = dict(params or {})

    def __repr__(self):
        return f"MetricProvider({self.name!r}, mode={self.derivative_mode})"

    # -- evaluation ----------------------------------------------------
    def eval(self, x):
        """Metric components, shape ``x.shape[:-1] + (4, 4)``."""
        x = np.asarray(x, dtype=float)
        rows = self._entry_fn(x[..., 0], x[..., 1], x[..., 2], x[..., 3])
        batch = x.shape[:-1]
        out = np.empty(batch + (4, 4))
        for j in range(4):
            for k in range(4):
                out[..., j, k] = rows[j][k]
        return out

    def _jet_rows(self, x):
        c0, c1, c2, c3 = Jet2.seed_coords(x)
        return self._entry_fn(c0, c1, c2, c3)

    def d_eval(self, x):
        """First derivatives d_p g_jk, shape ``(..., 4, 4, 4)``, p first."""
        x = np.asarray(x, dtype=float)
        if self.derivative_mode == "analytic" and self._d_fn is not None:
            return self._d_fn(x)
        rows = self._jet_rows(x)
        batch = x.shape[:-1]
        out = np.zeros(batch + (4, 4, 4))
        for j in range(4):
            for k in range(4):
                e = rows[j][k]
                if isinstance(e, Jet2):
                    out[..., :, j, k] = e.d1
        return out

    def d2_eval(self, x):
        """Second derivatives d_p d_q g_jk, shape ``(..., 4, 4, 4, 4)``."""
        x = np.asarray(x, dtype=float)
        if self.derivative_mode == "analytic" and self._d2_fn is not None:
            return self._d2_fn(x)
        rows = self._jet_rows(x)
        batch = x.shape[:-1]
        out = np.zeros(batch + (4, 4, 4, 4))
        for j in range(4):
            for k in range(4):
                e = rows[j][k]
                if isinstance(e, Jet2):
                    out[..., :, :, j, k] = e.d2
        return out

    def jet_eval(self, x):
        """(g, dg, d2g) in one pass; the jet evaluation is shared."""
        x = np.asarray(x, dtype=float)
        if self.derivative_mode == "analytic":
            return self.eval(x), self.d_eval(x), self.d2_eval(x)
        rows = self._jet_rows(x)
        batch = x.shape[:-1]
        g = np.empty(batch + (4, 4))
        dg = np.zeros(batch + (4, 4, 4))
        d2g = np.zeros(batch + (4, 4, 4, 4))
        for j in range(4):
            for k in range(4):
                e = rows[j][k]
                if isinstance(e, Jet2):
                    g[..., j, k] = e.val
                    dg[..., :, j, k] = e.d1
                    d2g[..., :, :, j, k] = e.d2
                else:
                    g[..., j, k] = e
        return g, dg, d2g

    def inverse(self, x):
        g = self.eval(x)
        try:
            return np.linalg.inv(g)
        except np.linalg.LinAlgError as exc:
            raise DegenerateMetricError(f"singular metric at {x!r}") from exc

    def check_signature(self, x):
        """Assert one negative eigenvalue at x (batched); raise otherwise."""
        g = self.eval(np.asarray(x, dtype=float))
        w = np.linalg.eigvalsh(g)
        neg = (w < 0).sum(axis=-1)
        if np.any(neg != 1):
            raise DegenerateMetricError(
                f"metric at {x!r} does not have signature (-,+,+,+)")
        return True


class ScalarFieldFrame:
    """L scalar fields phi_l(x) with gradients and a common mass m > 0."""

    def __init__(self, fields, mass, name="fields"):
        # fields: list of callables phi_l(x0,x1,x2,x3) written jet-generically
        self.fields = list(fields)
        self.L = len(self.fields)
        self.mass = float(mass)
        self.name = name

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        vals = [np.broadcast_to(np.asarray(f(x[..., 0], x[..., 1], x[..., 2], x[..., 3]),
                                           dtype=float), x.shape[:-1])
                for f in self.fields]
        return np.stack(vals, axis=-1)

    def d_phi(self, x):
        """Gradients d_j phi_l, shape ``(..., 4, L)``."""
        x = np.asarray(x, dtype=float)
        c0, c1, c2, c3 = Jet2.seed_coords(x)
        batch = x.shape[:-1]
        out = np.zeros(batch + (4, self.L))
        for l, f in enumerate(self.fields):
            e = f(c0, c1, c2, c3)
            if isinstance(e, Jet2):
                out[..., :, l] = e.d1
        return out


# ----------------------------------------------------------------------
# catalog


def _minkowski_entries(x0, x1, x2, x3):
    zero = 0.0 * x0 if not isinstance(x0, Jet2) else x0 * 0.0
    one = zero + 1.0
    return [[-one, zero, zero, zero],
            [zero, one, zero, zero],
            [zero, zero, one, zero],
            [zero, zero, zero, one]]


def _minkowski_d(x):
    return np.zeros(x.shape[:-1] + (4, 4, 4))


def _minkowski_d2(x):
    return np.zeros(x.shape[:-1] + (4, 4, 4, 4))


def minkowski():
    return MetricProvider("minkowski", _minkowski_entries, "analytic",
                          d_fn=_minkowski_d, d2_fn=_minkowski_d2,
                          params={"affine_chart": True})


def desitter_like():
    def entries(x0, x1, x2, x3):
        zero = 0.0 * x0
        a = dual.exp(2.0 * x0)
        return [[zero - 1.0, zero, zero, zero],
                [zero, a, zero, zero],
                [zero, zero, a, zero],
                [zero, zero, zero, a]]

    return MetricProvider("desitter_like", entries)


class GaussianBump:
    """Spatial slowness profile n(y) = c(y)^{-2} = 1 + A exp(-|y-y0|^2 / (2 w^2))."""

    def __init__(self, amplitude, width, center=(0.0, 0.0, 0.0)):
        self.amplitude = float(amplitude)
        self.width = float(width)
        self.center = np.asarray(center, dtype=float)

    def n(self, x1, x2, x3):
        r2 = ((x1 - self.center[0]) ** 2 + (x2 - self.center[1]) ** 2
              + (x3 - self.center[2]) ** 2)
        return 1.0 + self.amplitude * dual.exp(r2 * (-0.5 / self.width**2))

    def n_np(self, y):
        y = np.asarray(y, dtype=float)
        r2 = np.sum((y - self.center) ** 2, axis=-1)
        return 1.0 + self.amplitude * np.exp(-0.5 * r2 / self.width**2)

    def grad_n(self, y):
        y = np.asarray(y, dtype=float)
        d = y - self.center
        r2 = np.sum(d**2, axis=-1)
        f = self.amplitude * np.exp(-0.5 * r2 / self.width**2)
        return (-f / self.width**2)[..., None] * d

    def hess_n(self, y):
        y = np.asarray(y, dtype=float)
        d = y - self.center
        r2 = np.sum(d**2, axis=-1)
        f = self.amplitude * np.exp(-0.5 * r2 / self.width**2)
        w2 = self.width**2
        outer = d[..., :, None] * d[..., None, :]
        eye = np.broadcast_to(np.eye(3), outer.shape)
        return (f / w2**2)[..., None, None] * outer \
            - (f / w2)[..., None, None] * eye


def product_metric(bump=None, amplitude=0.0, width=1.0, center=(0.0, 0.0, 0.0)):
    """Static product metric -dt^2 + c(y)^{-2}|dy|^2.

    The optical profile is attached as ``provider.params['bump']`` so the
    causal engine can reduce 4D causal queries to 3D optical geometry.
    Derivatives are closed-form (the profile is Gaussian).
    """
    if bump is None:
        bump = GaussianBump(amplitude, width, center)

    def entries(x0, x1, x2, x3):
        zero = 0.0 * x0
        n = bump.n(x1, x2, x3)
        return [[zero - 1.0, zero, zero, zero],
                [zero, n, zero, zero],
                [zero, zero, n, zero],
                [zero, zero, zero, n]]

    def d_fn(x):
        batch = x.shape[:-1]
        out = np.zeros(batch + (4, 4, 4))
        gn = bump.grad_n(x[..., 1:])          # (..., 3)
        for a in range(3):
            for i in range(3):
                out[..., 1 + a, 1 + i, 1 + i] = gn[..., a]
        return out

    def d2_fn(x):
        batch = x.shape[:-1]
        out = np.zeros(batch + (4, 4, 4, 4))
        hn = bump.hess_n(x[..., 1:])          # (..., 3, 3)
        for a in range(3):
            for b in range(3):
                for i in range(3):
                    out[..., 1 + a, 1 + b, 1 + i, 1 + i] = hn[..., a, b]
        return out

    return MetricProvider("product", entries, "analytic",
                          d_fn=d_fn, d2_fn=d2_fn, params={"bump": bump})


def lens_metric(amplitude=0.8, width=0.5, center=(0.0, 0.0, 0.0)):
    """Focusing lens: product metric with a strong slowness bump."""
    p = product_metric(amplitude=amplitude, width=width, center=center)
    p.name = "lens"
    return p


def perturbed(base=None, amplitude=1e-2, seed=0, n_modes=3):
    """Smooth random low-frequency perturbation of a base metric.

    g = g_base + amplitude * sum_m sin(k_m . x + phase_m) E_m with seeded
    wave vectors and symmetric mode matrices; C^infinity and signature-safe
    for small amplitudes on the desk-scale chart.
    """
    if base is None:
        base = minkowski()
    rng = np.random.default_rng(seed)
    ks = rng.uniform(-1.0, 1.0, size=(n_modes, 4))
    phases = rng.uniform(0.0, 2 * np.pi, size=n_modes)
    mats = rng.standard_normal((n_modes, 4, 4))
    mats = 0.5 * (mats + np.swapaxes(mats, -1, -2))
    mats /= max(1.0, np.abs(mats).max())

    def entries(x0, x1, x2, x3):
        rows = base._entry_fn(x0, x1, x2, x3)
        rows = [[rows[j][k] for k in range(4)] for j in range(4)]
        for m in range(n_modes):
            s = dual.sin(ks[m, 0] * x0 + ks[m, 1] * x1 + ks[m, 2] * x2
                         + ks[m, 3] * x3 + phases[m])
            for j in range(4):
                for k in range(4):
                    if mats[m, j, k] != 0.0:
                        rows[j][k] = rows[j][k] + (amplitude * mats[m, j, k]) * s
        return rows

    return MetricProvider(f"perturbed({base.name},a={amplitude},seed={seed})",
                          entries, params={"base": base.name,
                                           "amplitude": amplitude, "seed": seed})


_CATALOG = {
    "minkowski": minkowski,
    "desitter_like": desitter_like,
    "product": product_metric,
    "lens": lens_metric,
    "perturbed": perturbed,
}


def make_metric(name, **params):
    """Instantiate a catalog metric by name; unknown names raise KeyError."""
    if name not in _CATALOG:
        raise KeyError(f"unknown metric {name!r}; catalog: {sorted(_CATALOG)}")
    return _CATALOG[name](**params)


def canonical_fields(L=5, slope=1.0, offset=1.0):
    """Fields phi_l = slope * x^l for l=0..3, phi_4 = offset, rest harmonic bumps.

    The first five satisfy Condition A at every point with sigma = identity.
    """
    fields = []

    def coord(i):
        return lambda x0, x1, x2, x3: slope * (x0, x1, x2, x3)[i]

    for i in range(min(4, L)):
        fields.append(coord(i))
    if L >= 5:
        fields.append(lambda x0, x1, x2, x3: offset + 0.0 * x0)
    for l in range(5, L):
        k = 0.3 + 0.1 * l
        fields.append(lambda x0, x1, x2, x3, k=k, l=l:
                      dual.sin(k * (x1 + x2) + 0.2 * l) + 0.0 * x0)
    return ScalarFieldFrame(fields, mass=1.0)
