"""Principal-symbol linear algebra on null covector fibers.

A polarization is a (10+L)-vector: 10 components of a symmetric metric
perturbation plus L scalar-field components.  This module houses the
harmonicity and conservation constraint maps, their kernel bases, the
transport of symbols along bicharacteristics, the source-to-wave map
(which is the trace reversal on the metric block in the flat decoupled
regime), Gaussian-beam phases, and localized test sources.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geodesics
from .metrics import MetricProvider

# fixed index map for the symmetric 4x4 block: row-major upper triangle
SYM_INDEX = [(0, 0), (0, 1), (0, 2), (0, 3),
             (1, 1), (1, 2), (1, 3),
             (2, 2), (2, 3), (3, 3)]


class DegenerateFrameError(ValueError):
    """Constraint map is rank-deficient (covector too close to zero)."""


class TopologyError(ValueError):
    """Frames are not connected by one bicharacteristic."""


class CausticError(RuntimeError):
    """Riccati blow-up before the requested parameter."""

    def __init__(self, message, parameter):
        super().__init__(message)
        self.parameter = parameter


def sym_to_vec(m):
    m = np.asarray(m)
    return np.array([m[i, j] for i, j in SYM_INDEX])


def vec_to_sym(v):
    out = np.zeros((4, 4), dtype=np.asarray(v).dtype)
    for a, (i, j) in enumerate(SYM_INDEX):
        out[i, j] = v[a]
        out[j, i] = v[a]
    return out


@dataclass
class PolarizationVector:
    """Symmetric metric part (10 dof) plus L scalar components."""

    metric_part: np.ndarray
    scalar_part: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.metric_part, dtype=float)
        if m.shape == (4, 4):
            asym = np.abs(m - m.T).max()
            if asym > 1e-12 * max(1.0, np.abs(m).max()):
                raise ValueError(f"metric part not symmetric ({asym:.2e})")
            self.metric_part = 0.5 * (m + m.T)
        else:
            raise ValueError("metric part must be a 4x4 symmetric matrix")
        self.scalar_part = np.asarray(self.scalar_part, dtype=float)

    @property
    def L(self):
        return len(self.scalar_part)

    def flat(self):
        return np.concatenate([sym_to_vec(self.metric_part), self.scalar_part])

    @classmethod
    def from_flat(cls, vec, L):
        vec = np.asarray(vec, dtype=float)
        return cls(vec_to_sym(vec[:10]), vec[10:10 + L])


@dataclass
class NullCovectorFrame:
    """Base point, null covector and the metric value there."""

    x: np.ndarray
    xi: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.xi = np.asarray(self.xi, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        self.g_inv = np.linalg.inv(self.g)
        q = self.xi @ self.g_inv @ self.xi
        scale = float(self.xi @ self.xi)
        if scale == 0.0:
            raise DegenerateFrameError("zero covector")
        if abs(q) > 1e-10 * scale:
            raise ValueError(f"covector not null: g(xi,xi)={q:.3e}")

    @classmethod
    def at(cls, metric: MetricProvider, x, xi):
        return cls(x, xi, metric.eval(np.asarray(x, dtype=float)))


def harmonicity_residual(frame: NullCovectorFrame, v):
    """r_j = -g^mn xi_m v_nj + (1/2) xi_j (g^pq v_pq); zero iff the
    harmonicity condition holds for the symbol."""
    m = _metric_part(v)
    xi_up = frame.g_inv @ frame.xi
    return -xi_up @ m + 0.5 * frame.xi * np.einsum("pq,pq->", frame.g_inv, m)


def conservation_residual(frame: NullCovectorFrame, v):
    """r_j = g^lk xi_l v_kj; zero iff the linearized conservation law holds
    for the principal symbol."""
    m = _metric_part(v)
    xi_up = frame.g_inv @ frame.xi
    return xi_up @ m


def _metric_part(v):
    if isinstance(v, PolarizationVector):
        return v.metric_part
    v = np.asarray(v, dtype=float)
    if v.shape == (4, 4):
        return 0.5 * (v + v.T)
    return vec_to_sym(v[:10])


def constraint_matrix(frame: NullCovectorFrame, which):
    """The 4 x (10+L-free) residual map on the metric-part coordinates.

    Returns the 4x10 matrix acting on the symmetric-part coordinates;
    scalar components never enter either condition.
    """
    rows = np.zeros((4, 10))
    for a in range(10):
        e = np.zeros(10)
        e[a] = 1.0
        m = vec_to_sym(e)
        if which == "harmonicity":
            rows[:, a] = harmonicity_residual(frame, m)
        elif which == "conservation":
            rows[:, a] = conservation_residual(frame, m)
        else:
            raise ValueError(f"unknown constraint {which!r}")
    return rows


def constraint_space_basis(frame: NullCovectorFrame, which, L,
                           threshold=1e-8):
    """Orthonormal basis of the kernel of the chosen residual map in
    R^{10+L}; always (6+L)-dimensional for a genuinely null frame.

    SVD-based with threshold ``1e-8 * ||map||``; a rank-deficient map
    raises DegenerateFrameError.
    """
    mat = constraint_matrix(frame, which)
    u, s, vt = np.linalg.svd(mat)
    scale = s[0] if s[0] > 0 else 0.0
    if scale == 0.0 or np.sum(s > threshold * scale) < 4:
        raise DegenerateFrameError(
            f"{which} map rank-deficient (singular values {s})")
    kernel10 = vt[4:].T                      # 6 metric-part kernel vectors
    dim = 6 + L
    basis = np.zeros((10 + L, dim))
    basis[:10, :6] = kernel10
    basis[10:, 6:] = np.eye(L)
    return basis


def trace_reversal_matrix(g, L):
    """Flat map of the source symbol to the wave symbol: v - (1/2) g tr_g v
    on the metric block, identity on the scalar block."""
    g = np.asarray(g, dtype=float)
    g_inv = np.linalg.inv(g)
    out = np.zeros((10 + L, 10 + L))
    for a in range(10):
        e = np.zeros(10)
        e[a] = 1.0
        m = vec_to_sym(e)
        rev = m - 0.5 * g * np.einsum("pq,pq->", g_inv, m)
        out[:10, a] = sym_to_vec(rev)
    out[10:, 10:] = np.eye(L)
    return out


def _connecting_parameter(metric, frame_from, frame_to, tol=1e-8):
    """Affine parameter taking frame_from to frame_to along the ray."""
    xi_up = frame_from.g_inv @ frame_from.xi
    span = 8.0
    path = geodesics.geodesic_flow(metric, frame_from.x, xi_up, span,
                                   tol=1e-10, n_samples=400)
    d = np.linalg.norm(path.states[:, 0:4] - frame_to.x, axis=-1)
    i = int(np.argmin(d))
    s = path.s[i]
    # quadratic polish on the squared distance
    if 0 < i < len(path.s) - 1:
        q = d**2
        denom = q[i - 1] - 2 * q[i] + q[i + 1]
        if abs(denom) > 1e-30:
            s = s + 0.5 * (q[i - 1] - q[i + 1]) / denom * (path.s[1] - path.s[0])
    end = path.eval(s)
    if np.linalg.norm(end[0:4] - frame_to.x) > tol:
        raise TopologyError("frames are not on one bicharacteristic")
    eta_up = frame_to.g_inv @ frame_to.xi
    cross = np.linalg.norm(np.cross(end[4:8][1:], eta_up[1:]))
    if cross > 1e-6 * np.linalg.norm(eta_up):
        raise TopologyError("target covector not tangent to the ray")
    return float(s)


def transport_matrix(metric: MetricProvider, frame_from: NullCovectorFrame,
                     frame_to: NullCovectorFrame, V=None, L=0, n_steps=200):
    """Parallel-transport factor R of the first transport equation.

    Solves dR/ds = -(1/2) V(s) R with R(0) = I along the connecting
    bicharacteristic; V is a callable s -> (10+L, 10+L) subprincipal
    coefficient (None means the flat decoupled regime, R = identity).
    Returns ``(R, condition_number)``.
    """
    s_total = _connecting_parameter(metric, frame_from, frame_to)
    dim = 10 + L
    if V is None:
        return np.eye(dim), 1.0
    R = np.eye(dim)
    h = s_total / n_steps
    for i in range(n_steps):
        s = i * h

        def rhs(s, R):
            return -0.5 * np.asarray(V(s)) @ R

        k1 = rhs(s, R)
        k2 = rhs(s + 0.5 * h, R + 0.5 * h * k1)
        k3 = rhs(s + 0.5 * h, R + 0.5 * h * k2)
        k4 = rhs(s + h, R + h * k3)
        R = R + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    return R, float(np.linalg.cond(R))


def transport_symbol(metric: MetricProvider, frame_from: NullCovectorFrame,
                     frame_to: NullCovectorFrame, v: PolarizationVector,
                     V=None, n_steps=200):
    """Transport a polarization along the connecting bicharacteristic.

    Identity in the flat decoupled regime (V = None); with coefficients it
    propagates by the first transport equation.  This is the flow factor
    only; the full source-to-wave map of the linearized system additionally
    applies the trace reversal at injection (see ``source_to_wave_map``).
    """
    R, cond = transport_matrix(metric, frame_from, frame_to, V, v.L, n_steps)
    out = R @ v.flat()
    return PolarizationVector.from_flat(out, v.L), cond


def source_to_wave_map(metric: MetricProvider, frame_from: NullCovectorFrame,
                       frame_to: NullCovectorFrame, L, V=None):
    """R(y, eta, x, xi): principal symbol of the source to that of the wave.

    The linearized reduced system has principal part -(1/2) box applied to
    the trace-reversed metric perturbation, so the injection map is the
    trace reversal on the metric block (identity on the scalar block),
    composed with the transport flow.  Maps the conservation space at the
    source frame bijectively onto the harmonicity space at the target and
    cannot move leading-order content from the metric to the scalar block.
    """
    flow, _ = transport_matrix(metric, frame_from, frame_to, V, L)
    return flow @ trace_reversal_matrix(frame_from.g, L)


# ----------------------------------------------------------------------
# gaussian beams


class GaussianBeamPhase:
    """Leading-order complex beam phase along a null geodesic.

    Carries A(s) (affine phase value), dA(s) = zeta(s) (the covector of the
    ray velocity) and the complex Hessian H(s) propagated by the matrix
    Riccati equation dH/ds = -H G H with H(0) u = 0; Im H stays positive
    definite on the orthocomplement of the ray direction until a caustic.
    """

    def __init__(self, metric, path, s_grid, H_all):
        self.metric = metric
        self.path = path
        self.s_grid = s_grid
        self.H_all = H_all

    def A(self, s):
        # Re phi normalized to vanish along the ray (eikonal homogeneity)
        return 0.0

    def dA(self, s):
        st = self.path.eval(s)
        g = self.metric.eval(st[0:4])
        return g @ st[4:8]

    def H(self, s):
        i = np.clip(np.searchsorted(self.s_grid, s) - 1, 0,
                    len(self.s_grid) - 2)
        t = (s - self.s_grid[i]) / (self.s_grid[i + 1] - self.s_grid[i])
        return (1 - t) * self.H_all[i] + t * self.H_all[i + 1]

    def phase(self, x, s_hint=None):
        """Complex phase at a chart point near the ray (footpoint form)."""
        x = np.asarray(x, dtype=float)
        grid = self.s_grid
        pts = self.path.eval(grid)[..., 0:4]
        d = np.linalg.norm(pts - x, axis=-1)
        i = int(np.argmin(d)) if s_hint is None else int(
            np.clip(np.searchsorted(grid, s_hint), 0, len(grid) - 1))
        s = grid[i]
        st = self.path.eval(s)
        w = x - st[0:4]
        # slide the footpoint so w is Euclid-orthogonal to the velocity
        u = st[4:8]
        s = s + float(w @ u) / float(u @ u)
        st = self.path.eval(s)
        w = x - st[0:4]
        zeta = self.dA(s)
        return float(zeta @ w) + 0.5 * (w @ self.H(s) @ w)

    def eikonal_residual(self, x):
        """g(d phi, d phi) at x; O(dist^2) off the ray by construction."""
        x = np.asarray(x, dtype=float)
        grid = self.s_grid
        pts = self.path.eval(grid)[..., 0:4]
        i = int(np.argmin(np.linalg.norm(pts - x, axis=-1)))
        s = grid[i]
        st = self.path.eval(s)
        u = st[4:8]
        s = s + float((x - st[0:4]) @ u) / float(u @ u)
        st = self.path.eval(s)
        w = x - st[0:4]
        dphi = self.dA(s) + self.H(s) @ w
        g_inv = np.linalg.inv(self.metric.eval(x))
        return complex(dphi @ g_inv @ dphi)


def gaussian_beam_phase(metric: MetricProvider, x0, xi, s_max=3.0,
                        H0=None, n_steps=300):
    """Construct the beam phase data along gamma_{x0, xi} (xi null vector).

    The Hessian solves dH/ds = -H g^{-1} H with H(0) annihilating the ray
    velocity (default: i times the Euclidean projector onto the velocity's
    orthocomplement).  A blow-up before ``s_max`` raises CausticError with
    the blow-up parameter.
    """
    x0 = np.asarray(x0, dtype=float)
    xi = np.asarray(xi, dtype=float)
    path = geodesics.geodesic_flow(metric, x0, xi, s_max, tol=1e-10,
                                   n_samples=n_steps)
    s_grid = path.s
    if H0 is None:
        u = xi / np.linalg.norm(xi)
        H0 = 1j * (np.eye(4) - np.outer(u, u))
    H = np.asarray(H0, dtype=complex)
    H_all = [H.copy()]
    h = s_grid[1] - s_grid[0]
    for i in range(len(s_grid) - 1):
        st = path.eval(s_grid[i])
        g_inv = np.linalg.inv(metric.eval(st[0:4]))

        def rhs(H):
            return -H @ g_inv @ H

        k1 = rhs(H)
        k2 = rhs(H + 0.5 * h * k1)
        k3 = rhs(H + 0.5 * h * k2)
        k4 = rhs(H + h * k3)
        H = H + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.isfinite(H).all() or np.abs(H).max() > 1e8:
            raise CausticError("Riccati blow-up along the beam",
                               parameter=float(s_grid[i + 1]))
        H_all.append(H.copy())
    return GaussianBeamPhase(metric, path, s_grid, np.array(H_all))


class TestSourceField:
    """Localized oscillatory test source F_tau(x) = tau^{-1} e^{i tau p} h.

    The phase p is point-concentrated: p(y) = 0, d(Re p)|_y equals the
    chosen null covector and Im p has a positive definite Hessian at y.
    """

    def __init__(self, y, eta_covector, tau, amplitude=None, im_hessian=None):
        self.y = np.asarray(y, dtype=float)
        self.eta = np.asarray(eta_covector, dtype=float)
        self.tau = float(tau)
        self.h = amplitude if amplitude is not None else (lambda x: 1.0)
        self.M = (np.eye(4) if im_hessian is None
                  else np.asarray(im_hessian, dtype=float))
        w = np.linalg.eigvalsh(self.M)
        if w.min() <= 0:
            raise ValueError("Im p Hessian must be positive definite")

    def p(self, x):
        w = np.asarray(x, dtype=float) - self.y
        return float(self.eta @ w) + 0.5j * float(w @ self.M @ w)

    def __call__(self, x):
        return np.exp(1j * self.tau * self.p(x)) * self.h(x) / self.tau


def test_source(y, eta_covector, tau, amplitude=None, im_hessian=None):
    return TestSourceField(y, eta_covector, tau, amplitude, im_hessian)


# keep pytest from collecting the factory as a test
test_source.__test__ = False
TestSourceField.__test__ = False
