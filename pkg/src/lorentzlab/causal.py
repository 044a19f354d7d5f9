"""Causal structure engine: time separation, cut loci, observer families,
earliest light observations, and four-ray intersections.

Two evaluation routes coexist:

* a generic *shooting* route (coarse direction fan + Gauss-Newton arrival
  refinement) that works for any metric provider and realizes the design
  contract "approximate from below";
* a *product* route for static metrics -dt^2 + c(y)^{-2}|dy|^2 (Minkowski
  included) that reduces causal queries to 3D optical distances.  The two
  routes are cross-checked in the test suite.

Shooting solves use the affine trick exp_x(r v) = exp-flow of (x, r v) over
unit parameter, so rays with different endpoints batch into one fixed-step
integration.  All set memberships are tolerance-banded; the hit tolerance
defaults to 1e-6 in chart coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geodesics
from .geodesics import PathBundle, rk4_path
from .metrics import MetricProvider


class OutOfDiamondError(ValueError):
    """Point lies outside the causal diamond of the observer span."""


@dataclass
class CausalConfig:
    hit_tol: float = 1e-6          # chart-coordinate tolerance for set hits
    horizon: float = 8.0           # affine horizon for cut/shooting searches
    ray_steps: int = 48            # RK4 steps per unit-parameter ray solve
    coarse_samples: int = 33       # samples along each coarse fan ray
    fan_size: int = 128            # coarse direction fan for cone searches
    tau_fan: int = 288             # coarse fan for time-separation shooting
    newton_iters: int = 16
    newton_tol: float = 1e-12
    tau_gate: float = 1e-7         # tau above this counts as "> 0"
    jacobi_steps: int = 1200

    def steps_for(self, metric) -> int:
        # straight-line charts are integrated exactly by any step count
        if metric.params.get("affine_chart") or metric.name == "minkowski":
            return 6
        return self.ray_steps


DEFAULT_CFG = CausalConfig()


def _fibonacci_sphere(n):
    """Deterministic quasi-uniform unit vectors on S^2."""
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = np.pi * (1 + 5**0.5) * i
    return np.stack([np.sin(phi) * np.cos(theta),
                     np.sin(phi) * np.sin(theta),
                     np.cos(phi)], axis=-1)


def null_direction(metric, x, omega, future=True):
    """Future (or past) pointing null vector at x with given spatial part.

    Solves g(v, v) = 0 for the time component; exact for block metrics
    g = [[g00, 0], [0, g_sp]] (the whole catalog), seed-quality otherwise.
    """
    x = np.asarray(x, dtype=float)
    omega = np.asarray(omega, dtype=float)
    g = metric.eval(x)
    batch = np.broadcast_shapes(x.shape[:-1], omega.shape[:-1])
    sp = np.einsum("...jk,...j,...k->...", g[..., 1:, 1:], omega, omega)
    g0s = np.einsum("...k,...k->...", g[..., 0, 1:], omega)
    g00 = g[..., 0, 0]
    disc = np.sqrt(np.maximum(g0s**2 - g00 * sp, 0.0))
    t = (-g0s + (disc if future else -disc)) / g00
    t = np.abs(t) * (1.0 if future else -1.0)
    v = np.empty(batch + (4,))
    v[..., 0] = t
    v[..., 1:] = omega
    return v


def timelike_unit(metric, x, w):
    """Future unit timelike vector with spatial part w (block metrics)."""
    w = np.asarray(w, dtype=float)
    g = metric.eval(np.asarray(x, dtype=float))
    sp = np.einsum("...jk,...j,...k->...", g[..., 1:, 1:], w, w)
    v = np.empty(w.shape[:-1] + (4,))
    v[..., 0] = np.sqrt((sp + 1.0) / -g[..., 0, 0])
    v[..., 1:] = w
    return v


def _exp_map(metric, x, scaled_v, n_steps, n_samples=None):
    """exp_x applied to a batch of scaled velocities over unit parameter.

    Returns endpoint positions ``(..., 4)``; with ``n_samples`` also the
    sampled positions along each ray ``(..., n_samples + 1, 4)``.  Straight
    charts (``affine_chart``) evaluate the exponential map exactly.
    """
    scaled_v = np.asarray(scaled_v, dtype=float)
    x = np.broadcast_to(np.asarray(x, dtype=float), scaled_v.shape)
    if metric.params.get("affine_chart") or metric.name == "minkowski":
        end = x + scaled_v
        if n_samples:
            t = np.linspace(0.0, 1.0, n_samples + 1)
            samples = x[..., None, :] + t[:, None] * scaled_v[..., None, :]
            return end, samples
        return end
    states = np.concatenate([x, scaled_v], axis=-1)
    n = n_samples if n_samples else n_steps
    _, path = rk4_path(metric, states, 1.0, n)
    if n_samples:
        return path[..., -1, 0:4], path[..., 0:4]
    return path[..., -1, 0:4]


# ----------------------------------------------------------------------
# observer families and observation records


class ObserverFamily:
    """Finite grid of freely falling observers around a central one.

    Observers are geodesics mu_i : [-1, 1] -> M anchored at parameter
    ``s_anchor`` by states (z_i, eta_i) sampled deterministically (seeded)
    in a ball of radius ``radius`` around the central state; index 0 is the
    central observer itself.
    """

    def __init__(self, metric: MetricProvider, z0, eta0, radius=0.1,
                 count=24, s_anchor=-0.85, seed=7, path_steps=400):
        self.metric = metric
        self.z0 = np.asarray(z0, dtype=float)
        eta0 = np.asarray(eta0, dtype=float)
        self.eta0 = self._normalize_timelike(self.z0, eta0)
        self.radius = float(radius)
        self.count = int(count)
        self.s_anchor = float(s_anchor)
        self.seed = int(seed)

        rng = np.random.default_rng(seed)
        zs = [self.z0]
        etas = [self.eta0]
        while len(zs) < count:
            dz = rng.uniform(-1, 1, 4)
            de = rng.uniform(-1, 1, 3)
            if np.linalg.norm(dz) > 1 or np.linalg.norm(de) > 1:
                continue
            z = self.z0 + radius * dz
            eta = self.eta0.copy()
            eta[1:] = eta[1:] + radius * de
            zs.append(z)
            etas.append(self._normalize_timelike(z, eta))
        self.anchors_z = np.array(zs)
        self.anchors_eta = np.array(etas)
        self._build_paths(path_steps)

    def _normalize_timelike(self, z, eta):
        g = self.metric.eval(z)
        q = np.einsum("jk,j,k->", g, eta, eta)
        if q >= 0:
            raise ValueError("observer anchor velocity is not timelike")
        eta = eta / np.sqrt(-q)
        if eta[0] < 0:
            eta = -eta
        return eta

    def _build_paths(self, path_steps):
        state0 = np.concatenate([self.anchors_z, self.anchors_eta], axis=-1)
        span_fwd = 1.0 - self.s_anchor
        span_bwd = self.s_anchor - (-1.0)
        n_fwd = max(8, int(path_steps * span_fwd / 2))
        n_bwd = max(8, int(path_steps * span_bwd / 2))
        s_f, st_f = rk4_path(self.metric, state0, span_fwd, n_fwd)
        back0 = state0.copy()
        back0[..., 4:] *= -1
        s_b, st_b = rk4_path(self.metric, back0, span_bwd, n_bwd)
        st_b = st_b[..., ::-1, :].copy()
        st_b[..., 4:] *= -1
        states = np.concatenate([st_b[..., :-1, :], st_f], axis=-2)
        s_grid = np.concatenate([self.s_anchor - s_b[::-1][:-1], self.s_anchor + s_f])
        self.paths = PathBundle(self.metric, s_grid, states)
        q = geodesics.norm_sq(self.metric, self.paths.states)
        if np.any(q > -1e-8):
            raise ValueError("an observer leaves the timelike regime on [-1, 1]")

    def __len__(self):
        return self.count

    def positions(self, s):
        """Observer positions at common parameter s, shape (count, 4)."""
        return self.paths.eval(np.full(self.count, float(s)))[..., 0:4]

    def path_of(self, i):
        return PathBundle(self.metric, self.paths.s, self.paths.states[i])


@dataclass
class ObservationRecord:
    """Earliest-observation data of a source point over an observer family.

    ``values[i]`` is the observer parameter in [-1, 1] at which observer i
    first sees the source; 1.0 encodes "not seen within the span".
    """

    source: np.ndarray | None
    values: np.ndarray
    family: ObserverFamily | None = field(default=None, repr=False)

    def distance(self, other) -> float:
        return float(np.abs(self.values - other.values).max())

    def to_json_dict(self):
        return {str(i): float(v) for i, v in enumerate(self.values)}


# ----------------------------------------------------------------------
# optical (product metric) route


class OpticalSolver:
    """Distances of the 3D optical metric n(y) delta_ij, n = c^{-2}.

    ``bump=None`` means n == 1 (flat spatial part) with exact Euclidean
    distances; otherwise a batched Newton two-point shooting on the
    conformal geodesic equations.
    """

    def __init__(self, bump=None, n_steps=28, newton_iters=14, tol=1e-11):
        self.bump = bump
        self.n_steps = n_steps
        self.newton_iters = newton_iters
        self.tol = tol

    def _flow(self, p, w):
        """Conformal geodesic endpoint from p with velocity w at unit time."""
        h = 1.0 / self.n_steps
        y, v = p.copy(), w.copy()
        bump = self.bump
        w2 = bump.width**2
        center = bump.center
        amp = bump.amplitude

        def acc(y, v):
            # n, grad n and grad log n in one pass (shared exponential)
            d = y - center
            r2 = np.einsum("...i,...i->...", d, d)
            f = amp * np.exp(-0.5 * r2 / w2)
            n = 1.0 + f
            glog = (-f / (w2 * n))[..., None] * d
            vv = np.einsum("...i,...i->...", v, v)
            vg = np.einsum("...i,...i->...", v, glog)
            return -vg[..., None] * v + 0.5 * vv[..., None] * glog

        for _ in range(self.n_steps):
            k1v, k1y = acc(y, v), v
            k2v = acc(y + 0.5 * h * k1y, v + 0.5 * h * k1v)
            k2y = v + 0.5 * h * k1v
            k3v = acc(y + 0.5 * h * k2y, v + 0.5 * h * k2v)
            k3y = v + 0.5 * h * k2v
            k4v = acc(y + h * k3y, v + h * k3v)
            k4y = v + h * k3v
            y = y + (h / 6) * (k1y + 2 * k2y + 2 * k3y + k4y)
            v = v + (h / 6) * (k1v + 2 * k2v + 2 * k3v + k4v)
        return y

    def distance(self, p, q, w0=None, return_w=False):
        """Optical distance, batched over leading axes of p, q.

        ``w0`` warm-starts the boundary-value Newton solve (the chord by
        default); ``return_w`` also returns the solved initial velocities
        for reuse at nearby targets.
        """
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        p, q = np.broadcast_arrays(p, q)
        if self.bump is None:
            d = np.linalg.norm(q - p, axis=-1)
            return (d, q - p) if return_w else d
        flat = np.ascontiguousarray(p.reshape(-1, 3))
        target = np.ascontiguousarray(q.reshape(-1, 3))
        w = (target - flat if w0 is None
             else np.asarray(w0, dtype=float).reshape(-1, 3).copy())
        for _ in range(self.newton_iters):
            eps = 1e-7
            trial = np.concatenate(
                [w[None], w[None] + eps * np.eye(3)[:, None, :]], axis=0)
            ends = self._flow(np.broadcast_to(flat, trial.shape).copy(), trial)
            res = ends[0] - target
            if np.abs(res).max() < self.tol:
                break
            jac = np.moveaxis((ends[1:] - ends[0]) / eps, 0, -1)
            try:
                dw = np.linalg.solve(jac, res[..., None])[..., 0]
            except np.linalg.LinAlgError:
                dw = np.einsum("nab,nb->na", np.linalg.pinv(jac), res)
            w = w - dw
        d = np.sqrt(self.bump.n_np(flat)) * np.linalg.norm(w, axis=-1)
        d = d.reshape(p.shape[:-1])
        if return_w:
            return d, w.reshape(p.shape)
        return d


def optical_solver_for(metric: MetricProvider):
    """Optical reduction for product-form metrics; None when unavailable."""
    if metric.name == "minkowski":
        return OpticalSolver(None)
    if "bump" in metric.params:
        return OpticalSolver(metric.params["bump"])
    return None


class ProductKit:
    """Fast causal predicates for -dt^2 + c(y)^{-2}|dy|^2 charts."""

    def __init__(self, metric, solver=None):
        self.metric = metric
        self.solver = solver or optical_solver_for(metric)
        if self.solver is None:
            raise ValueError(f"metric {metric.name!r} has no optical reduction")

    def tau(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        dt = y[..., 0] - x[..., 0]
        d = self.solver.distance(x[..., 1:], y[..., 1:])
        gap = dt**2 - d**2
        return np.where((dt > 0) & (gap > 0), np.sqrt(np.maximum(gap, 0.0)), 0.0)

    def in_future(self, x, y, slack=0.0):
        """y in J^+(x), tolerance-banded by ``slack`` in time units."""
        return self.causal_gap(x, y) >= -slack

    def causal_gap(self, x, y):
        """dt - d_optical; positive inside J^+, zero on the cone (linear scale,
        unlike tau whose square-root geometry amplifies noise at the cone)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        dt = y[..., 0] - x[..., 0]
        d = self.solver.distance(x[..., 1:], y[..., 1:])
        return dt - d


# ----------------------------------------------------------------------
# generic shooting route


def time_separation_batch(metric: MetricProvider, xs, ys,
                          cfg: CausalConfig = DEFAULT_CFG):
    """Shooting time separation for many point pairs at once.

    Stage 1 shoots a fan of future timelike unit directions from each x and
    keeps the proper time of the best arrival near y; stage 2 polishes with
    Gauss-Newton on (spatial direction, proper time).  Pairs with no causal
    connection found return 0 (approximation from below).
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    P = xs.shape[0]
    steps = cfg.steps_for(metric)

    n_sphere = max(16, cfg.tau_fan // 4)
    dirs = _fibonacci_sphere(n_sphere)
    rapidities = np.array([0.3, 1.0, 1.9, 3.0])
    w_fan = (np.sinh(rapidities)[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
    F = w_fan.shape[0]

    u = timelike_unit(metric, xs[:, None, :], np.broadcast_to(w_fan, (P, F, 3)))
    span = cfg.horizon
    _, sampled = _exp_map(metric, xs[:, None, :], span * u, steps,
                          n_samples=cfg.coarse_samples)
    d2 = np.sum((sampled - ys[:, None, None, :]) ** 2, axis=-1)  # (P, F, S+1)
    flat = d2.reshape(P, -1)
    best = flat.argmin(axis=1)
    i_dir, i_s = np.unravel_index(best, d2.shape[1:])
    s_guess = np.maximum(i_s * span / cfg.coarse_samples, 1e-6)

    w = w_fan[i_dir].copy()
    s = s_guess.astype(float)
    for _ in range(cfg.newton_iters):
        # stacked variants: base, 3 direction offsets, 1 time offset
        eps = 1e-7
        wv = np.repeat(w[None], 5, axis=0)
        sv = np.repeat(s[None], 5, axis=0)
        for a in range(3):
            wv[1 + a, :, a] += eps
        sv[4] += eps
        uu = timelike_unit(metric, xs[None, :, :], wv)
        ends = _exp_map(metric, xs[None, :, :], sv[..., None] * uu, steps)
        res = ends[0] - ys
        J = np.stack([(ends[1 + a] - ends[0]) / eps for a in range(4)], axis=-1)
        ok = np.isfinite(J).all(axis=(1, 2)) & np.isfinite(res).all(axis=1)
        step = np.zeros((P, 4))
        if ok.any():
            try:
                step[ok] = np.linalg.solve(J[ok], res[ok][..., None])[..., 0]
            except np.linalg.LinAlgError:
                step[ok] = np.einsum("nab,nb->na", np.linalg.pinv(J[ok]), res[ok])
        # damp oversized steps and keep the proper time positive
        scale = np.maximum(1.0, np.abs(step).max(axis=1) / 2.0)
        step /= scale[:, None]
        w = w - step[:, :3]
        s = np.maximum(s - step[:, 3], 0.05 * s)
        if np.abs(res[ok]).max(initial=0.0) < cfg.newton_tol:
            break
    u = timelike_unit(metric, xs, w)
    ends = _exp_map(metric, xs, s[:, None] * u, steps)
    res = np.linalg.norm(ends - ys, axis=-1)
    tau = np.where(np.isfinite(s) & (res < 100 * cfg.hit_tol) & (s > 0), s, 0.0)
    return tau


def time_separation(metric: MetricProvider, x, y,
                    cfg: CausalConfig = DEFAULT_CFG, engine="shooting"):
    """Time separation tau(x, y) >= 0 (sup of causal path lengths).

    Default engine is the generic two-stage shooting; ``product`` (or
    ``auto`` on product-form charts) uses the optical reduction.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if engine == "product" or (engine == "auto" and optical_solver_for(metric)):
        return float(ProductKit(metric).tau(x, y))
    return float(time_separation_batch(metric, x[None], y[None], cfg)[0])


def cut_locus(metric: MetricProvider, x, xi, cfg: CausalConfig = DEFAULT_CFG,
              engine="auto"):
    """Modified cut-locus parameter rho(x, xi) along a future null geodesic.

    Minimum of (a) the first conjugate parameter (Jacobi determinant zero)
    and (b) the first parameter where tau(x, gamma(s)) turns positive
    (competing causal path, located by bisection).  Returns ``(value,
    kind)`` with kind in {"conjugate", "competing", "horizon"}; the horizon
    sentinel means no cut point within ``cfg.horizon``.
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    s_conj = geodesics.first_conjugate_parameter(metric, x, xi, cfg.horizon,
                                                 cfg.jacobi_steps)

    kit = None
    if engine in ("auto", "product") and optical_solver_for(metric):
        kit = ProductKit(metric)
    n_scan = 200
    s_grid, path = rk4_path(metric, np.concatenate([x, xi]), cfg.horizon, n_scan)
    pts = path[:, 0:4]
    # competing-path indicator: on product charts use the linear causal gap
    # (tau's square-root geometry would amplify integration noise near the
    # cone); the generic route gates on shooting tau and is coarser.
    gap_gate = 3e-6
    if kit is not None:
        ind = kit.causal_gap(x, pts) > gap_gate
        ind[0] = False
    else:
        taus = time_separation_batch(metric, np.broadcast_to(x, pts.shape), pts, cfg)
        taus[0] = 0.0
        ind = taus > cfg.tau_gate
    positive = np.nonzero(ind)[0]
    s_comp = None
    if positive.size:
        i = int(positive[0])
        lo, hi = s_grid[max(i - 1, 0)], s_grid[i]
        bundle = PathBundle(metric, s_grid, path)
        for _ in range(48):
            mid = 0.5 * (lo + hi)
            p = bundle.eval(mid)[0:4]
            if kit is not None:
                hit = float(kit.causal_gap(x, p)) > gap_gate
            else:
                hit = float(time_separation_batch(metric, x[None], p[None],
                                                  cfg)[0]) > cfg.tau_gate
            if hit:
                hi = mid
            else:
                lo = mid
        s_comp = 0.5 * (lo + hi)

    candidates = [(s, k) for s, k in [(s_conj, "conjugate"), (s_comp, "competing")]
                  if s is not None]
    if not candidates:
        return cfg.horizon, "horizon"
    return min(candidates)


def first_cone_arrivals(metric: MetricProvider, q, family: ObserverFamily,
                        cfg: CausalConfig = DEFAULT_CFG, future=True):
    """Earliest null-cone crossing parameter per family observer (shooting).

    Batched over observers: coarse fan rays from q against each observer
    polyline, then Gauss-Newton on gamma_{q, xi(omega)}(r) = mu_i(s).
    Returns an array of observer parameters (1.0 for observers the cone
    misses within the span).
    """
    q = np.asarray(q, dtype=float)
    N = len(family)
    steps = cfg.steps_for(metric)
    omegas = _fibonacci_sphere(cfg.fan_size)
    v = null_direction(metric, q, omegas, future=future)
    _, sampled = _exp_map(metric, q, cfg.horizon * v, steps,
                          n_samples=cfg.coarse_samples)
    ray_pts = sampled  # (F, S+1, 4)

    s_obs = np.linspace(-1.0, 1.0, 65)
    obs_pts = np.stack([family.path_of(i).eval(s_obs)[..., 0:4]
                        for i in range(N)])  # (N, 65, 4)

    d2 = np.sum((ray_pts[None, :, :, None, :] - obs_pts[:, None, None, :, :]) ** 2,
                axis=-1)  # (N, F, S+1, 65)
    values = np.full(N, 1.0)
    n_starts = 3
    flatd = d2.reshape(N, -1)
    order = np.argsort(flatd, axis=1)[:, : 6 * n_starts]

    for i in range(N):
        obs = family.path_of(i)
        got = []
        used = 0
        for f in order[i]:
            fi, si, oi = np.unravel_index(f, d2.shape[1:])
            r0 = max(cfg.horizon * si / cfg.coarse_samples, 1e-3)
            sol = _refine_cone_hit(metric, q, omegas[fi], r0, s_obs[oi], obs,
                                   cfg, future)
            used += 1
            if sol is not None:
                got.append(sol[0])
            if used >= n_starts and got:
                break
        if got:
            values[i] = min(got) if future else max(got)
    return values


def _refine_cone_hit(metric, q, omega, r0, s0, observer, cfg, future=True):
    """Gauss-Newton solve of gamma_{q, xi(omega)}(r) = mu(s)."""
    w = np.asarray(omega, dtype=float).copy()
    r, s = float(max(r0, 1e-3)), float(s0)
    steps = cfg.steps_for(metric)

    def gamma_end(wv, rv):
        u = wv / np.linalg.norm(wv, axis=-1, keepdims=True)
        v = null_direction(metric, q, u, future=future)
        return _exp_map(metric, q, rv[..., None] * v, steps)

    for _ in range(cfg.newton_iters):
        eps = 1e-7
        wv = np.repeat(w[None], 5, axis=0)
        rv = np.full(5, r)
        for a in range(3):
            wv[1 + a, a] += eps
        rv[4] += eps
        ends = gamma_end(wv, rv)
        target = observer.eval(s)[0:4]
        res = ends[0] - target
        if np.linalg.norm(res) < cfg.newton_tol:
            break
        cols = [(ends[1 + a] - ends[0]) / eps for a in range(4)]
        cols.append(-(observer.eval(s + eps)[0:4] - target) / eps)
        J = np.stack(cols, axis=-1)  # 4 x 5; omega direction has a gauge scale
        step, *_ = np.linalg.lstsq(J, res, rcond=None)
        w = w - step[:3]
        r = r - step[3]
        s = s - step[4]
        if r <= 0 or not np.isfinite(r + s):
            return None
    target = observer.eval(s)[0:4]
    if np.linalg.norm(gamma_end(w[None], np.array([r]))[0] - target) > 100 * cfg.hit_tol:
        return None
    if not (observer.s[0] - 1e-9 <= s <= observer.s[-1] + 1e-9):
        return None
    return float(s), float(r), w / np.linalg.norm(w)


def cone_observer_hits(metric: MetricProvider, q, observer: PathBundle,
                       cfg: CausalConfig = DEFAULT_CFG, future=True):
    """All refined crossings of the null cone of q with one observer curve."""
    q = np.asarray(q, dtype=float)
    steps = cfg.steps_for(metric)
    omegas = _fibonacci_sphere(cfg.fan_size)
    v = null_direction(metric, q, omegas, future=future)
    _, sampled = _exp_map(metric, q, cfg.horizon * v, steps,
                          n_samples=cfg.coarse_samples)
    s_obs = np.linspace(observer.s[0], observer.s[-1], 65)
    obs_pts = observer.eval(s_obs)[..., 0:4]
    d2 = np.sum((sampled[:, :, None, :] - obs_pts[None, None, :, :]) ** 2, axis=-1)
    order = np.argsort(d2.reshape(-1))[:10]
    sols = []
    for f in order:
        fi, si, oi = np.unravel_index(f, d2.shape)
        r0 = max(cfg.horizon * si / cfg.coarse_samples, 1e-3)
        sol = _refine_cone_hit(metric, q, omegas[fi], r0, s_obs[oi], observer,
                               cfg, future)
        if sol is not None and not any(abs(sol[0] - s) < 1e-9 for s, _, _ in sols):
            sols.append(sol)
    return sols


def f_plus(metric: MetricProvider, observer: PathBundle, x,
           cfg: CausalConfig = DEFAULT_CFG, sign=+1, engine="auto"):
    """f^+ = inf{s : tau(x, mu(s)) > 0} with span-endpoint conventions.

    ``sign=-1`` computes f^- = sup{s : tau(mu(s), x) > 0}.  On product-form
    charts the causal indicator reduces to the optical inequality and the
    crossing is found by bisection; otherwise by null-cone shooting.
    Points on the curve itself return their own parameter.
    """
    x = np.asarray(x, dtype=float)
    s_lo, s_hi = float(observer.s[0]), float(observer.s[-1])
    ss = np.linspace(s_lo, s_hi, 257)
    samples = observer.eval(ss)[..., 0:4]
    d = np.linalg.norm(samples - x, axis=-1)
    if d.min() < cfg.hit_tol:
        return float(ss[int(np.argmin(d))])

    kit = ProductKit(metric) if (engine in ("auto", "product")
                                 and optical_solver_for(metric)) else None
    if kit is not None:
        grid = np.linspace(s_lo, s_hi, 129)
        pts = observer.eval(grid)[..., 0:4]
        inside = kit.in_future(x, pts) if sign > 0 else kit.in_future(pts, x)
        if sign > 0:
            if not inside.any():
                return 1.0
            if inside[0]:
                return s_lo
            i = int(np.argmax(inside))
            lo, hi = grid[i - 1], grid[i]
        else:
            if not inside.any():
                return -1.0
            if inside[-1]:
                return s_hi
            i = len(grid) - 1 - int(np.argmax(inside[::-1]))
            lo, hi = grid[i], grid[i + 1]
        for _ in range(52):
            mid = 0.5 * (lo + hi)
            p = observer.eval(mid)[0:4]
            ok = bool(kit.in_future(x, p)) if sign > 0 else bool(kit.in_future(p, x))
            if ok == (sign > 0):
                hi = mid
            else:
                lo = mid
        return float(0.5 * (lo + hi))

    hits = cone_observer_hits(metric, x, observer, cfg, future=(sign > 0))
    if not hits:
        return 1.0 if sign > 0 else -1.0
    ss = [h[0] for h in hits]
    return float(min(ss) if sign > 0 else max(ss))


def f_minus(metric: MetricProvider, observer: PathBundle, x,
            cfg: CausalConfig = DEFAULT_CFG, engine="auto"):
    return f_plus(metric, observer, x, cfg, sign=-1, engine=engine)


def require_in_diamond(metric: MetricProvider, observer: PathBundle, x,
                       cfg: CausalConfig = DEFAULT_CFG):
    """Raise OutOfDiamondError unless x in J^+(mu(-1)) cap J^-(mu(+1))."""
    kit = ProductKit(metric) if optical_solver_for(metric) else None
    lo = observer.eval(observer.s[0])[0:4]
    hi = observer.eval(observer.s[-1])[0:4]
    if kit is not None:
        ok = bool(kit.in_future(lo, x, slack=cfg.hit_tol)
                  and kit.in_future(x, hi, slack=cfg.hit_tol))
    else:
        ok = (time_separation(metric, lo, x, cfg) > 0
              or np.linalg.norm(x - lo) < cfg.hit_tol) and \
             (time_separation(metric, x, hi, cfg) > 0
              or np.linalg.norm(x - hi) < cfg.hit_tol)
    if not ok:
        raise OutOfDiamondError(f"{x!r} outside observer diamond")


def earliest_point(metric: MetricProvider, observer: PathBundle, points,
                   cfg: CausalConfig = DEFAULT_CFG):
    """Earliest observer parameter whose point lies in the sample set.

    Set membership is banded by ``cfg.hit_tol``; returns ``(s, point)`` or
    None when the curve misses the set.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    grid = np.linspace(observer.s[0], observer.s[-1], 2049)
    curve = observer.eval(grid)[..., 0:4]
    d = np.linalg.norm(curve[:, None, :] - pts[None, :, :], axis=-1).min(axis=1)
    hits = np.nonzero(d <= max(cfg.hit_tol, 2 * (grid[1] - grid[0])))[0]
    if hits.size == 0:
        return None
    # first contiguous run of coarse hits bounds the refinement window
    i = hits[0]
    j_end = i
    while j_end + 1 in hits:
        j_end += 1
    lo = grid[max(i - 1, 0)]
    hi = grid[min(j_end + 1, len(grid) - 1)]
    fine = np.linspace(lo, hi, 257)
    dc = np.linalg.norm(observer.eval(fine)[..., 0:4][:, None, :] - pts[None, :, :],
                        axis=-1).min(axis=1)
    fhits = np.nonzero(dc <= cfg.hit_tol)[0]
    if fhits.size:
        s = float(fine[fhits[0]])
        return s, observer.eval(s)[0:4]
    # parabola through the squared distance (exact for on-curve points,
    # where the distance itself is V-shaped)
    j = int(np.argmin(dc))
    j = max(1, min(j, len(fine) - 2))
    q = dc**2
    denom = q[j - 1] - 2 * q[j] + q[j + 1]
    shift = 0.0 if abs(denom) < 1e-30 else 0.5 * (q[j - 1] - q[j + 1]) / denom
    s = float(fine[j] + shift * (fine[1] - fine[0]))
    p = observer.eval(s)[0:4]
    if np.linalg.norm(p[None, :] - pts, axis=-1).min() > cfg.hit_tol:
        return None
    return s, p


def earliest_light_observation_set(metric: MetricProvider, q,
                                   family: ObserverFamily,
                                   cfg: CausalConfig = DEFAULT_CFG,
                                   engine="auto"):
    """Earliest light observation record of q over the family.

    Per observer: the f^+ value of the first crossing of the forward null
    cone of q with that observer (1.0 when the cone misses the span).  The
    cut-parameter truncation of the cone is automatic for first crossings:
    the earliest causal connection is always pre-cut; spot checks in the
    test suite verify this against rho.
    """
    q = np.asarray(q, dtype=float)
    use_product = engine in ("auto", "product") and optical_solver_for(metric)
    if use_product:
        values = np.array([f_plus(metric, family.path_of(i), q, cfg)
                           for i in range(len(family))])
    else:
        values = first_cone_arrivals(metric, q, family, cfg, future=True)
    return ObservationRecord(source=q, values=values, family=family)


# ----------------------------------------------------------------------
# four-ray intersections


def intersection_point(metric: MetricProvider, tuples, t0=0.0,
                       tol=1e-8, cfg: CausalConfig = DEFAULT_CFG,
                       check_cut=False):
    """Earliest common point of four null geodesics.

    ``tuples`` is a sequence of four (x_j, xi_j) future null states.  The
    search runs over parameters r_j in (t0, cut_j); candidates come from
    pairwise closest approaches on a sampled bundle, polished by an
    alternating barycenter / closest-approach iteration.  Returns
    ``(q, params, multiplicity_flag)`` or None when the minimum spread
    exceeds ``tol``.
    """
    xs = np.array([np.asarray(t[0], dtype=float) for t in tuples])
    vs = np.array([np.asarray(t[1], dtype=float) for t in tuples])
    states = np.concatenate([xs, vs], axis=-1)
    n_scan = max(96, int(48 * cfg.horizon))
    s_grid, rays = rk4_path(metric, states, cfg.horizon, n_scan)
    bundle = PathBundle(metric, s_grid, rays)
    pos = rays[..., 0:4]

    cut_params = np.full(4, cfg.horizon)
    if check_cut:
        for j in range(4):
            cut_params[j], _ = cut_locus(metric, xs[j], vs[j], cfg)

    d01 = np.linalg.norm(pos[0][:, None, :] - pos[1][None, :, :], axis=-1)
    cands = []
    scan_step = cfg.horizon / n_scan
    for f in np.argsort(d01.reshape(-1))[:12]:
        i, j = np.unravel_index(f, d01.shape)
        c = 0.5 * (pos[0][i] + pos[1][j])
        if not any(np.linalg.norm(c - c0) < 2 * scan_step for c0 in cands):
            cands.append(c)

    solutions = []
    quad_bundle = bundle
    for p0 in cands:
        p = p0.copy()
        params = np.empty(4)
        # coarse per-ray parameters by closest approach to the candidate
        for j in range(4):
            params[j] = s_grid[int(np.argmin(np.linalg.norm(pos[j] - p, axis=-1)))]
        # Gauss-Newton on r -> stack_j(gamma_j(r_j) - mean): the barycenter
        # is eliminated analytically, velocities give the exact Jacobian
        for _ in range(40):
            ev = quad_bundle.eval(params)
            pts, vel = ev[..., 0:4], ev[..., 4:8]
            mean = pts.mean(axis=0)
            res = (pts - mean).reshape(-1)
            if np.linalg.norm(res) < 0.25 * tol:
                break
            # d(pts_j - mean)/dr_k = delta_jk vel_j - vel_k / 4
            J = np.zeros((16, 4))
            for j in range(4):
                for k in range(4):
                    block = -0.25 * vel[k]
                    if j == k:
                        block = block + vel[j]
                    J[4 * j:4 * j + 4, k] = block
            step, *_ = np.linalg.lstsq(J, res, rcond=None)
            params = params - step
            if not np.isfinite(params).all():
                break
        pts = quad_bundle.eval(params)[..., 0:4]
        p = pts.mean(axis=0)
        spread = float(max(np.linalg.norm(pts[j] - p) for j in range(4)))
        if spread < tol and np.all(params > t0) and np.all(params < cut_params):
            if not any(np.linalg.norm(p - s[0]) < 10 * tol for s in solutions):
                solutions.append((p.copy(), params.copy(), spread))

    if not solutions:
        return None
    solutions.sort(key=lambda s: s[0][0])
    q, params, _ = solutions[0]
    return q, params, len(solutions) > 1


def _eval_single(bundle: PathBundle, j, s_values):
    sub = PathBundle(bundle.metric, bundle.s, bundle.states[j])
    return sub.eval(s_values)[..., 0:4]


def direction_tuples_for(metric: MetricProvider, q, eta, t0,
                         count=1, spread=0.05, seed=0,
                         cfg: CausalConfig = DEFAULT_CFG):
    """Tuples (x_j, xi_j) of null states whose geodesics meet at q.

    ``eta`` is the reference future null direction at q (the direction in
    which light from q reaches the observer).  Each tuple consists of four
    pairwise non-parallel directions within ``spread`` of the reference
    (the first being the reference itself), run backwards from q so the
    common point sits at forward parameter t0 + depth_j.
    """
    q = np.asarray(q, dtype=float)
    eta = np.asarray(eta, dtype=float)
    rng = np.random.default_rng(seed)
    omega0 = eta[1:] / np.linalg.norm(eta[1:])
    steps = cfg.steps_for(metric)
    tuples = []
    for _ in range(count):
        omegas = [omega0]
        while len(omegas) < 4:
            cand = omega0 + spread * rng.uniform(-1, 1, 3)
            cand /= np.linalg.norm(cand)
            if all(np.linalg.norm(cand - o) > 0.1 * spread for o in omegas):
                omegas.append(cand)
        tup = []
        for k, om in enumerate(omegas):
            v = null_direction(metric, q, om, future=True)
            depth = t0 + 0.35 + 0.08 * k   # staggered starting depths
            states = np.concatenate([q, -depth * v])
            _, pth = rk4_path(metric, states, 1.0, max(12, steps))
            x_j = pth[-1, 0:4]
            xi_j = -pth[-1, 4:8] / depth
            tup.append((x_j, xi_j))
        tuples.append(tup)
    return tuples
