"""Geodesic flow: batched fixed-step integration, adaptive single-trajectory
flow with conservation monitoring, and the Jacobi (variational) system.

The batched RK4 path is the workhorse of the causal engine: states have
shape ``(..., 8)`` = (x, dx/ds) and all trajectories advance together.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp

from .curvature import christoffel_components
from .metrics import MetricProvider


class IntegrationFailure(RuntimeError):
    """Geodesic integration stopped early; carries the last good state."""

    def __init__(self, message, last_state=None, last_s=None):
        super().__init__(message)
        self.last_state = last_state
        self.last_s = last_s


def geodesic_rhs(metric: MetricProvider, state):
    """Right-hand side of the geodesic equation, batched over leading axes."""
    x = state[..., 0:4]
    v = state[..., 4:8]
    g, dg, _ = metric.jet_eval(x)
    gamma = christoffel_components(g, dg, x)
    acc = -np.einsum("...kij,...i,...j->...k", gamma, v, v)
    return np.concatenate([v, acc], axis=-1)


def rk4_path(metric: MetricProvider, state0, s_max, n_steps, s_min=0.0):
    """Fixed-step RK4 trajectory bundle.

    Returns ``(s_grid, states)`` with ``states.shape = batch + (n_steps+1, 8)``.
    Straight charts (``affine_chart``) are propagated exactly.
    """
    state0 = np.asarray(state0, dtype=float)
    s_grid = np.linspace(s_min, s_max, n_steps + 1)
    if metric.params.get("affine_chart") or metric.name == "minkowski":
        out = np.empty(state0.shape[:-1] + (n_steps + 1, 8))
        out[..., :, 4:8] = state0[..., None, 4:8]
        out[..., :, 0:4] = (state0[..., None, 0:4]
                            + (s_grid - s_min)[:, None]
                            * state0[..., None, 4:8])
        return s_grid, out
    h = (s_max - s_min) / n_steps
    out = np.empty(state0.shape[:-1] + (n_steps + 1, 8))
    y = state0.copy()
    out[..., 0, :] = y
    for i in range(n_steps):
        k1 = geodesic_rhs(metric, y)
        k2 = geodesic_rhs(metric, y + 0.5 * h * k1)
        k3 = geodesic_rhs(metric, y + 0.5 * h * k2)
        k4 = geodesic_rhs(metric, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[..., i + 1, :] = y
    return s_grid, out


class PathBundle:
    """Sampled geodesics with cubic Hermite interpolation between samples."""

    def __init__(self, metric, s_grid, states):
        self.metric = metric
        self.s = np.asarray(s_grid, dtype=float)
        self.states = np.asarray(states, dtype=float)
        self._deriv = None

    def _derivs(self):
        if self._deriv is None:
            if self.metric.params.get("affine_chart") \
                    or self.metric.name == "minkowski":
                self._deriv = np.concatenate(
                    [self.states[..., 4:8], np.zeros_like(self.states[..., 0:4])],
                    axis=-1)
            else:
                self._deriv = geodesic_rhs(self.metric, self.states)
        return self._deriv

    def eval(self, s):
        """Interpolated state at parameters ``s``.

        For an unbatched path, ``s`` may have any shape and the result has
        shape ``s.shape + (8,)``; for a batched path, ``s`` must match the
        batch shape (one parameter per trajectory).
        """
        s = np.asarray(s, dtype=float)
        grid = self.s
        idx = np.clip(np.searchsorted(grid, s) - 1, 0, len(grid) - 2)
        s0 = grid[idx]
        h = grid[idx + 1] - grid[idx]
        t = (s - s0) / h
        d = self._derivs()
        if self.states.ndim == 2:
            y0, y1 = self.states[idx], self.states[idx + 1]
            d0, d1 = d[idx], d[idx + 1]
        else:
            y0 = np.take_along_axis(self.states, idx[..., None, None], axis=-2)[..., 0, :]
            y1 = np.take_along_axis(self.states, (idx + 1)[..., None, None], axis=-2)[..., 0, :]
            d0 = np.take_along_axis(d, idx[..., None, None], axis=-2)[..., 0, :]
            d1 = np.take_along_axis(d, (idx + 1)[..., None, None], axis=-2)[..., 0, :]
        t = t[..., None]
        h = h[..., None]
        h00 = 2 * t**3 - 3 * t**2 + 1
        h10 = t**3 - 2 * t**2 + t
        h01 = -2 * t**3 + 3 * t**2
        h11 = t**3 - t**2
        return h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1

    def position(self, s):
        return self.eval(s)[..., 0:4]


def norm_sq(metric: MetricProvider, state):
    """g(v, v) along states (batched)."""
    state = np.asarray(state, dtype=float)
    g = metric.eval(state[..., 0:4])
    v = state[..., 4:8]
    return np.einsum("...jk,...j,...k->...", g, v, v)


def geodesic_flow(metric: MetricProvider, x0, v0, s_max, tol=1e-10, n_samples=200):
    """Adaptive geodesic trajectory with a conservation postcondition.

    Integrates with DOP853 and checks that the drift of g(v, v) stays below
    ``tol * (1 + |s|)``; a blow-up or step-size underflow raises
    :class:`IntegrationFailure` carrying the last good state.
    """
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    y0 = np.concatenate([x0, v0])

    def rhs(s, y):
        return geodesic_rhs(metric, y)

    s_eval = np.linspace(0.0, s_max, n_samples + 1)
    sol = solve_ivp(rhs, (0.0, s_max), y0, method="DOP853",
                    rtol=min(tol, 1e-9), atol=min(tol, 1e-9) * 0.1,
                    t_eval=s_eval, dense_output=False)
    if not sol.success:
        last = sol.y[:, -1] if sol.y.size else y0
        last_s = sol.t[-1] if sol.t.size else 0.0
        raise IntegrationFailure(f"integration failed: {sol.message}",
                                 last_state=last, last_s=last_s)
    states = sol.y.T
    q = norm_sq(metric, states)
    drift = np.abs(q - q[0])
    bound = tol * (1.0 + np.abs(sol.t)) * max(1.0, np.abs(q[0]))
    if np.any(drift > np.maximum(bound, 10 * tol)):
        raise IntegrationFailure(
            f"conservation drift {drift.max():.3e} exceeds tolerance",
            last_state=states[-1], last_s=sol.t[-1])
    return PathBundle(metric, sol.t, states)


# ----------------------------------------------------------------------
# Jacobi / variational system


def _variational_rhs(metric, x, v, J, K):
    g, dg, d2g = metric.jet_eval(x)
    gamma = christoffel_components(g, dg, x)
    from .curvature import _christoffel_derivative
    dgamma = _christoffel_derivative(g, dg, d2g, x)
    acc = -np.einsum("...kij,...i,...j->...k", gamma, v, v)
    dK = (-np.einsum("...mkij,...ma,...i,...j->...ka", dgamma, J, v, v)
          - 2.0 * np.einsum("...kij,...i,...ja->...ka", gamma, v, K))
    return v, acc, K, dK


def jacobi_determinant(metric: MetricProvider, x0, v0, s_max, n_steps=1200):
    """Normalized Jacobi determinant d(s) = det J(s) / s^4 along geodesics.

    J solves the linearized geodesic equation with J(0) = 0, J'(0) = I, so
    d(s) -> 1 as s -> 0 and the first zero of d marks the first conjugate
    point.  Batched over leading axes of (x0, v0); returns
    ``(s_grid, d, path_states)`` with d of shape ``batch + (n_steps + 1,)``.
    """
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    batch = x0.shape[:-1]
    h = s_max / n_steps
    x, v = x0.copy(), v0.copy()
    J = np.zeros(batch + (4, 4))
    K = np.broadcast_to(np.eye(4), batch + (4, 4)).copy()
    s_grid = np.linspace(0.0, s_max, n_steps + 1)
    dets = np.empty(batch + (n_steps + 1,))
    states = np.empty(batch + (n_steps + 1, 8))
    dets[..., 0] = 1.0
    states[..., 0, :] = np.concatenate([x, v], axis=-1)

    def f(x, v, J, K):
        return _variational_rhs(metric, x, v, J, K)

    for i in range(n_steps):
        a1 = f(x, v, J, K)
        a2 = f(x + 0.5 * h * a1[0], v + 0.5 * h * a1[1],
               J + 0.5 * h * a1[2], K + 0.5 * h * a1[3])
        a3 = f(x + 0.5 * h * a2[0], v + 0.5 * h * a2[1],
               J + 0.5 * h * a2[2], K + 0.5 * h * a2[3])
        a4 = f(x + h * a3[0], v + h * a3[1], J + h * a3[2], K + h * a3[3])
        x = x + (h / 6) * (a1[0] + 2 * a2[0] + 2 * a3[0] + a4[0])
        v = v + (h / 6) * (a1[1] + 2 * a2[1] + 2 * a3[1] + a4[1])
        J = J + (h / 6) * (a1[2] + 2 * a2[2] + 2 * a3[2] + a4[2])
        K = K + (h / 6) * (a1[3] + 2 * a2[3] + 2 * a3[3] + a4[3])
        s = s_grid[i + 1]
        dets[..., i + 1] = np.linalg.det(J) / s**4
        states[..., i + 1, :] = np.concatenate([x, v], axis=-1)
    return s_grid, dets, states


def first_conjugate_parameter(metric: MetricProvider, x0, v0, s_max,
                              n_steps=1200):
    """First zero crossing of the normalized Jacobi determinant.

    Scalar inputs return a float or None; batched inputs return an array
    with NaN marking rays without a conjugate point before ``s_max``.
    """
    x0 = np.asarray(x0, dtype=float)
    scalar = x0.ndim == 1
    s_grid, dets, _ = jacobi_determinant(metric, x0, v0, s_max, n_steps)
    dets2 = np.atleast_2d(dets)
    out = np.full(dets2.shape[:-1], np.nan)
    sign = np.sign(dets2[..., 1:])
    crossing = sign[..., 1:] * sign[..., :-1] < 0
    for idx in np.ndindex(out.shape):
        hits = np.nonzero(crossing[idx])[0]
        if hits.size == 0:
            continue
        i = hits[0] + 1
        d_lo, d_hi = dets2[idx][i], dets2[idx][i + 1]
        out[idx] = s_grid[i] + (s_grid[i + 1] - s_grid[i]) * d_lo / (d_lo - d_hi)
    if scalar:
        val = float(out.reshape(-1)[0])
        return None if np.isnan(val) else val
    return out.reshape(dets.shape[:-1])
