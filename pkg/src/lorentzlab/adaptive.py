"""Adaptive source functions: Condition A, the pointwise fixed-point solve,
stress density bookkeeping, the source differential, and the linearized
source assembly at the symbol level.

The solver realizes the pointwise system

    sum_{l<=5} S_l d_j phi_l = -R_j - sum_{l>=6} Q_l d_j phi_l     (j = 1..4)
    sum_{l<=5} S_l phi_l     = -(Q_K + sum_{l>=6} Q_l phi_l
                                 + sum_l S_l^2 / (2 m^2))
    S_l = Q_l                                                      (l >= 6)

by plain Banach iteration on the 5x5 block; the stress density follows the
appendix sign convention Z = -sum_l (S_l phi_l + S_l^2 / (2 m^2)), which is
what the conservation derivation uses.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .metrics import MetricProvider, ScalarFieldFrame
from .symbols import NullCovectorFrame, PolarizationVector, conservation_residual


class ConditionAError(ValueError):
    """The 5x5 Condition-A matrix is not invertible at this frame."""


class RadiusExceededError(RuntimeError):
    """Fixed point did not contract; input outside the admission radius."""


@dataclass
class PointFrame:
    """Pointwise background data (metric, fields, gradients, mass)."""

    g: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray   # (4, L): d_j phi_l
    mass: float

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        self.dphi = np.asarray(self.dphi, dtype=float)
        if self.L < 5:
            raise ValueError("Condition A machinery needs L >= 5 fields")
        w = np.linalg.eigvalsh(self.g)
        if (w < 0).sum() != 1:
            raise ValueError("metric does not have signature (-,+,+,+)")

    @property
    def L(self):
        return len(self.phi)

    @classmethod
    def at(cls, metric: MetricProvider, fields: ScalarFieldFrame, x):
        x = np.asarray(x, dtype=float)
        return cls(metric.eval(x), fields.phi(x), fields.d_phi(x), fields.mass)


@dataclass
class SourceInput:
    """Controlled scalars Q (K components, Q_K is the Z target) and the
    divergence data R (4 components)."""

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        if self.R.shape != (4,):
            raise ValueError("R must have 4 components")

    @property
    def K(self):
        return len(self.Q)

    def norm(self):
        return float(np.sqrt(self.Q @ self.Q + self.R @ self.R))


def condition_A_matrix(frame: PointFrame, sigma=None):
    """The 5x5 matrix B^sigma and its condition number.

    Rows 1-4 hold the gradients (d_j phi_sigma(l)) for the first five
    permuted fields, row 5 their values; invertibility is decided at
    condition number <= 1e8.
    """
    sigma = _as_permutation(sigma, frame.L)
    cols = sigma[:5]
    B = np.empty((5, 5))
    B[:4, :] = frame.dphi[:, cols]
    B[4, :] = frame.phi[cols]
    cond = float(np.linalg.cond(B))
    return B, cond


def _as_permutation(sigma, L):
    if sigma is None:
        return np.arange(L)
    sigma = np.asarray(sigma, dtype=int)
    if sorted(sigma.tolist()) != list(range(L)):
        raise ValueError("sigma must be a permutation of 0..L-1")
    return sigma


def select_permutation(frame: PointFrame, cond_max=1e8):
    """Identity first, then permutations ranked by |det B^sigma|."""
    B, cond = condition_A_matrix(frame)
    if cond <= cond_max:
        return np.arange(frame.L), B, cond
    best = None
    for perm in permutations(range(frame.L)):
        sigma = np.asarray(perm)
        B, cond = condition_A_matrix(frame, sigma)
        det = abs(np.linalg.det(B))
        if best is None or det > best[0]:
            best = (det, sigma, B, cond)
    _, sigma, B, cond = best
    if cond > cond_max:
        raise ConditionAError(f"no permutation yields cond <= {cond_max:.1e}")
    return sigma, B, cond


def admission_radius(frame: PointFrame, sigma=None):
    """0.1 / ||B^-1||: the calibrated smallness gate for solver admission."""
    B, cond = condition_A_matrix(frame, sigma)
    if cond > 1e8:
        raise ConditionAError(f"Condition A fails (cond={cond:.2e})")
    return 0.1 / np.linalg.norm(np.linalg.inv(B), 2)


def solve_adaptive_sources(frame: PointFrame, inp: SourceInput, sigma=None,
                           max_iter=100, tol=1e-13):
    """Banach fixed-point solve of the adaptive source system.

    Returns ``(S, iterations, residual)`` with S in the original field
    order; raises ConditionAError when B^sigma is singular and
    RadiusExceededError when the iteration fails to reach ``tol`` within
    ``max_iter`` (input outside the contraction regime).
    """
    sigma = _as_permutation(sigma, frame.L)
    B, cond = condition_A_matrix(frame, sigma)
    if cond > 1e8:
        raise ConditionAError(f"Condition A fails (cond={cond:.2e})")
    Y = np.linalg.inv(B)
    L, K = frame.L, inp.K
    if K < L + 1:
        raise ValueError("need K >= L + 1 controlled scalars")
    m2 = frame.mass**2
    phi_s = frame.phi[sigma]
    dphi_s = frame.dphi[:, sigma]
    Q = inp.Q
    # permuted tail sources: S_{sigma,l} = Q_l for l >= 6
    S_tail = Q[5:L]
    rhs_top = -inp.R - dphi_s[:, 5:] @ S_tail
    base = -Q[K - 1] - phi_s[5:] @ S_tail

    S_head = np.zeros(5)
    it = 0
    for it in range(1, max_iter + 1):
        if np.abs(S_head).max() > 1e18:
            raise RadiusExceededError("fixed point diverged")
        quad = (S_head @ S_head + S_tail @ S_tail) / (2 * m2)
        new = Y @ np.concatenate([rhs_top, [base - quad]])
        delta = np.abs(new - S_head).max()
        S_head = new
        if delta < tol:
            break
    else:
        raise RadiusExceededError(
            f"no contraction after {max_iter} iterations (delta={delta:.2e})")
    if not np.isfinite(S_head).all():
        raise RadiusExceededError("fixed point diverged")

    S_perm = np.concatenate([S_head, S_tail])
    S = np.empty(L)
    S[sigma] = S_perm
    res1 = np.abs(frame.dphi @ S + inp.R).max()
    res2 = abs(S @ frame.phi + (S @ S) / (2 * m2) + Q[K - 1])
    return S, it, max(res1, res2)


def stress_density_Z(S, phi, mass):
    """Z = -sum_l (S_l phi_l + S_l^2 / (2 m^2)) (appendix sign convention)."""
    S = np.asarray(S, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return float(-(S @ phi + (S @ S) / (2 * mass**2)))


def conservation_residual_pointwise(frame: PointFrame, S, R):
    """residual_j = sum_l S_l d_j phi_l + R_j; vanishes for solver output."""
    S = np.asarray(S, dtype=float)
    return frame.dphi @ S + np.asarray(R, dtype=float)


def source_differential(frame: PointFrame, sigma=None, K=None):
    """Differential D of S with respect to (Q, R) at the origin.

    Columns ordered (Q_1 .. Q_K, R_1 .. R_4); the closed-form block matrix
    built from Y_sigma = (B^sigma)^{-1} and the K-block of the remaining
    field data.  Returns ``(D, rank)``; rank equals L exactly when
    Condition A holds at the frame.
    """
    sigma = _as_permutation(sigma, frame.L)
    L = frame.L
    K = K if K is not None else L + 1
    B, cond = condition_A_matrix(frame, sigma)
    if cond > 1e8:
        raise ConditionAError(f"Condition A fails (cond={cond:.2e})")
    Y = np.linalg.inv(B)
    D_perm = np.zeros((L, K + 4))
    # tail rows: S_{sigma,l} = Q_l exactly for l >= 6
    for l in range(5, L):
        D_perm[l, l] = 1.0
    # head rows: S_head = Y [ -R - dphi_tail Q_tail ; -Q_K - phi_tail Q_tail ]
    phi_s = frame.phi[sigma]
    dphi_s = frame.dphi[:, sigma]
    for l in range(5, L):
        col = np.concatenate([-dphi_s[:, l], [-phi_s[l]]])
        D_perm[:5, l] = Y @ col
    D_perm[:5, K - 1] = Y @ np.array([0.0, 0, 0, 0, -1.0])
    for j in range(4):
        e = np.zeros(5)
        e[j] = -1.0
        D_perm[:5, K + j] = Y @ e
    D = np.empty_like(D_perm)
    D[sigma, :] = D_perm
    rank = int(np.linalg.matrix_rank(D, tol=1e-10 * max(1.0, np.abs(D).max())))
    return D, rank


# ----------------------------------------------------------------------
# linearized sources at the symbol level


def conservation_projector(frame: NullCovectorFrame):
    """Orthogonal projector of a symmetric matrix onto the kernel of the
    symbol conservation map v -> (g^lk xi_l v_kj)."""
    from .symbols import constraint_matrix, sym_to_vec, vec_to_sym
    mat = constraint_matrix(frame, "conservation")
    u, s, vt = np.linalg.svd(mat)
    kernel = vt[4:]

    def project(m):
        vec = sym_to_vec(m)
        return vec_to_sym(kernel.T @ (kernel @ vec))

    return project


def linearized_source(point_frame: PointFrame, frame: NullCovectorFrame,
                      data, sigma=None, K=None):
    """Assemble the principal-symbol pair (f1, f2) of the linearized source.

    ``data`` maps names to symbol inputs: ``v_a`` (10), ``w2_a`` (scalar z),
    ``w1_a`` (K-1 vector of primary-source symbols), ``v_b``/``w2_b``
    (subprincipal parts entering only through r_j = g^lk xi_l m^b_kj), and
    ``v_c``/``d_c`` (x-derivative data; enters the implementation-defined
    J-block, taken as zero here and validated through the image test).

    f1 = v_a + w2_a g; f2 = M w1' + L z + N r with the blocks read off the
    source differential.  Output satisfies the symbol conservation law
    whenever the input combination does.
    """
    from .symbols import vec_to_sym
    L_fields = point_frame.L
    K = K if K is not None else L_fields + 1
    D, rank = source_differential(point_frame, sigma, K)
    v_a = data.get("v_a")
    v_a = np.zeros((4, 4)) if v_a is None else _as_sym(v_a)
    z = float(data.get("w2_a", 0.0))
    w1 = np.asarray(data.get("w1_a", np.zeros(K - 1)), dtype=float)
    m_b = _as_sym(data.get("v_b", np.zeros((4, 4))))
    m_b = m_b + float(data.get("w2_b", 0.0)) * frame.g

    f1 = v_a + z * frame.g
    r = conservation_residual(frame, m_b)          # g^lk xi_l m^b_kj
    dq = np.concatenate([w1, [z], r])              # (Q', Q_K=z, R)
    f2 = D @ dq
    return f1, f2


def _as_sym(v):
    from .symbols import vec_to_sym
    v = np.asarray(v, dtype=float)
    if v.shape == (4, 4):
        return 0.5 * (v + v.T)
    return vec_to_sym(v)
