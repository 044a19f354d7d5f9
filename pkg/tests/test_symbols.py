import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lorentzlab import metrics, symbols
from lorentzlab.symbols import (NullCovectorFrame, PolarizationVector,
                                constraint_space_basis, conservation_residual,
                                harmonicity_residual)

MK = metrics.minkowski()
ETA = metrics.MINKOWSKI


def frame_from_spatial(omega, x=None):
    omega = np.asarray(omega, dtype=float)
    omega = omega / np.linalg.norm(omega)
    xi = np.concatenate([[-1.0], omega])  # covector null w.r.t. eta
    return NullCovectorFrame.at(MK, np.zeros(4) if x is None else x, xi)


def random_frames(n, seed=0):
    rng = np.random.default_rng(seed)
    return [frame_from_spatial(rng.normal(size=3)) for _ in range(n)]


class TestResiduals:
    def test_xi_outer_xi_harmonicity(self):
        fr = frame_from_spatial([1.0, 0, 0])
        v = PolarizationVector(np.outer(fr.xi, fr.xi), np.zeros(5))
        assert np.abs(harmonicity_residual(fr, v)).max() < 1e-14

    def test_metric_itself_gives_xi(self):
        # v = g: r_j = -xi_j + (1/2) xi_j * 4 = xi_j
        fr = frame_from_spatial([0.0, 1.0, 0])
        v = PolarizationVector(ETA, np.zeros(3))
        assert np.abs(harmonicity_residual(fr, v) - fr.xi).max() < 1e-14

    def test_conservation_orthogonal_vector(self):
        fr = frame_from_spatial([1.0, 0, 0])
        a = np.array([0.0, 0.0, 1.0, 0.0])  # eta-orthogonal to xi^sharp
        v = PolarizationVector(np.outer(a, a), np.zeros(2))
        assert np.abs(conservation_residual(fr, v)).max() < 1e-14

    def test_conservation_of_null_square(self):
        fr = frame_from_spatial([0.3, 0.4, np.sqrt(1 - 0.09 - 0.16)])
        v = PolarizationVector(np.outer(fr.xi, fr.xi), np.zeros(1))
        assert np.abs(conservation_residual(fr, v)).max() < 1e-13

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10**9))
    def test_linearity(self, seed):
        rng = np.random.default_rng(seed)
        fr = frame_from_spatial(rng.normal(size=3))
        m1 = rng.standard_normal((4, 4))
        m1 = 0.5 * (m1 + m1.T)
        m2 = rng.standard_normal((4, 4))
        m2 = 0.5 * (m2 + m2.T)
        a, b = rng.standard_normal(2)
        for res in (harmonicity_residual, conservation_residual):
            lhs = res(fr, a * m1 + b * m2)
            rhs = a * res(fr, m1) + b * res(fr, m2)
            assert np.abs(lhs - rhs).max() < 1e-13

    def test_conservation_matches_dense_contraction(self):
        rng = np.random.default_rng(5)
        fr = frame_from_spatial(rng.normal(size=3))
        m = rng.standard_normal((4, 4))
        m = 0.5 * (m + m.T)
        oracle = np.einsum("lk,l,kj->j", fr.g_inv, fr.xi, m)
        assert np.abs(conservation_residual(fr, m) - oracle).max() < 1e-13


class TestConstraintSpaces:
    def test_dimension_with_five_fields(self):
        for fr in random_frames(10, seed=1):
            for which in ("harmonicity", "conservation"):
                basis = constraint_space_basis(fr, which, L=5)
                assert basis.shape == (15, 11)

    def test_dimension_no_fields(self):
        fr = frame_from_spatial([0, 0, 1.0])
        assert constraint_space_basis(fr, "conservation", L=0).shape == (10, 6)

    def test_basis_vectors_satisfy_residual(self):
        fr = frame_from_spatial([0.6, 0.8, 0.0])
        for which, res in (("harmonicity", harmonicity_residual),
                           ("conservation", conservation_residual)):
            basis = constraint_space_basis(fr, which, L=3)
            for col in basis.T:
                pv = PolarizationVector.from_flat(col, 3)
                assert np.abs(res(fr, pv)).max() < 1e-12

    def test_rank_four_with_gap(self):
        # exactly 4 singular values above 1e-6 scale, rest below 1e-10 scale
        for fr in random_frames(25, seed=2):
            for which in ("harmonicity", "conservation"):
                mat = symbols.constraint_matrix(fr, which)
                s = np.linalg.svd(mat, compute_uv=False)
                assert (s > 1e-6 * s[0]).sum() == 4

    def test_degenerate_frame_raises(self):
        fr = frame_from_spatial([1.0, 0, 0])
        fr_bad = NullCovectorFrame.__new__(NullCovectorFrame)
        fr_bad.x = fr.x
        fr_bad.xi = np.zeros(4)
        fr_bad.g = fr.g
        fr_bad.g_inv = fr.g_inv
        with pytest.raises(symbols.DegenerateFrameError):
            constraint_space_basis(fr_bad, "harmonicity", L=5)


class TestTransport:
    def _two_frames(self, omega=(1.0, 0.0, 0.0), length=2.0):
        fr1 = frame_from_spatial(omega)
        xi_up = fr1.g_inv @ fr1.xi
        fr2 = NullCovectorFrame.at(MK, fr1.x + length * xi_up, fr1.xi)
        return fr1, fr2

    def test_flat_identity(self):
        fr1, fr2 = self._two_frames()
        rng = np.random.default_rng(3)
        m = rng.standard_normal((4, 4))
        v = PolarizationVector(0.5 * (m + m.T), rng.standard_normal(5))
        out, cond = symbols.transport_symbol(MK, fr1, fr2, v)
        assert np.abs(out.flat() - v.flat()).max() == 0.0
        assert cond == 1.0

    def test_topology_error_off_ray(self):
        fr1 = frame_from_spatial([1.0, 0, 0])
        fr_off = NullCovectorFrame.at(MK, np.array([0.0, 0.0, 1.0, 0.0]),
                                      fr1.xi)
        with pytest.raises(symbols.TopologyError):
            symbols.transport_symbol(MK, fr1, fr_off,
                                     PolarizationVector(np.zeros((4, 4)),
                                                        np.zeros(5)))

    def test_composition_with_coefficients(self):
        # nontrivial V: R(z<-y) R(y<-x) = R(z<-x) along one ray
        fr1 = frame_from_spatial([0.0, 1.0, 0.0])
        xi_up = fr1.g_inv @ fr1.xi
        frm = NullCovectorFrame.at(MK, fr1.x + 1.2 * xi_up, fr1.xi)
        fr2 = NullCovectorFrame.at(MK, fr1.x + 3.0 * xi_up, fr1.xi)
        rng = np.random.default_rng(4)
        A = rng.standard_normal((15, 15)) / 15

        def V(s):
            return A * (1.0 + 0.3 * np.sin(s))

        R_full, _ = symbols.transport_matrix(MK, fr1, fr2, V, L=5, n_steps=600)
        R_a, _ = symbols.transport_matrix(MK, fr1, frm, V, L=5, n_steps=400)

        def V_shift(s):
            return V(s + 1.2)

        R_b, _ = symbols.transport_matrix(MK, frm, fr2, V_shift, L=5,
                                          n_steps=400)
        assert np.abs(R_b @ R_a - R_full).max() < 1e-8

    def test_source_to_wave_bijection(self):
        # conservation space at the source maps onto the harmonicity space
        # at the target with full numeric rank 6 + L
        L = 5
        rng = np.random.default_rng(6)
        for _ in range(10):
            fr1 = frame_from_spatial(rng.normal(size=3))
            xi_up = fr1.g_inv @ fr1.xi
            fr2 = NullCovectorFrame.at(MK, fr1.x + 1.7 * xi_up, fr1.xi)
            R = symbols.source_to_wave_map(MK, fr1, fr2, L)
            C = constraint_space_basis(fr1, "conservation", L)
            S = constraint_space_basis(fr2, "harmonicity", L)
            img = R @ C
            assert np.linalg.matrix_rank(img, tol=1e-8) == 6 + L
            assert np.linalg.matrix_rank(np.hstack([img, S]), tol=1e-8) == 6 + L

    def test_scalar_part_zero_preserved(self):
        L = 5
        fr1, fr2 = self._two_frames([0.0, 0.0, 1.0])
        R = symbols.source_to_wave_map(MK, fr1, fr2, L)
        rng = np.random.default_rng(7)
        m = rng.standard_normal((4, 4))
        v = PolarizationVector(0.5 * (m + m.T), np.zeros(L))
        out = R @ v.flat()
        assert np.abs(out[10:]).max() == 0.0

    def test_superposition(self):
        fr1, fr2 = self._two_frames([0.5, 0.5, np.sqrt(0.5)])
        R = symbols.source_to_wave_map(MK, fr1, fr2, 4)
        rng = np.random.default_rng(8)
        u, w = rng.standard_normal((2, 14))
        assert np.abs(R @ (2 * u + 3 * w) - 2 * R @ u - 3 * R @ w).max() < 1e-12


class TestGaussianBeam:
    def test_flat_hessian_matches_explicit_riccati(self):
        # explicit solution H(s) = H0 (I + s G H0)^{-1}
        xi = np.array([1.0, 1.0, 0.0, 0.0])
        beam = symbols.gaussian_beam_phase(MK, np.zeros(4), xi, s_max=3.0)
        u = xi / np.linalg.norm(xi)
        H0 = 1j * (np.eye(4) - np.outer(u, u))
        G = np.linalg.inv(ETA)
        for s in (0.5, 1.7, 3.0):
            exact = H0 @ np.linalg.inv(np.eye(4) + s * G @ H0)
            assert np.abs(beam.H(s) - exact).max() < 1e-8

    def test_im_positive_on_orthocomplement(self):
        # transverse eigenvalues follow 1/(1+s^2): minimum 0.1 at s = 3
        xi = np.array([1.0, 0.0, 1.0, 0.0])
        beam = symbols.gaussian_beam_phase(MK, np.zeros(4), xi, s_max=3.0)
        u = xi / np.linalg.norm(xi)
        P = np.eye(4) - np.outer(u, u)
        for s in np.linspace(0, 3, 13):
            w = np.linalg.eigvalsh(P @ beam.H(s).imag @ P)
            transverse = np.sort(w)[1:]
            assert transverse.min() > 0.099
            assert abs(transverse.min() - 1 / (1 + s**2)) < 1e-6

    def test_im_phase_zero_on_ray(self):
        xi = np.array([1.0, 1.0, 0.0, 0.0])
        beam = symbols.gaussian_beam_phase(MK, np.zeros(4), xi, s_max=3.0)
        for s in (0.3, 1.1, 2.9):
            x = beam.path.eval(s)[0:4]
            assert abs(beam.phase(x).imag) < 1e-20

    def test_eikonal_residual_quadratic(self):
        xi = np.array([1.0, 1.0, 0.0, 0.0])
        beam = symbols.gaussian_beam_phase(MK, np.zeros(4), xi, s_max=3.0)
        base = beam.path.eval(1.3)[0:4]
        c_vals = []
        for r in (0.02, 0.01, 0.005):
            res = abs(beam.eikonal_residual(base + np.array([0, 0, r, 0])))
            c_vals.append(res / r**2)
        assert abs(c_vals[0] - c_vals[1]) < 0.05 * abs(c_vals[0])
        assert abs(c_vals[1] - c_vals[2]) < 0.05 * abs(c_vals[1])

    def test_caustic_error(self):
        # a real negative transverse Hessian focuses: h(s) = h0/(1 + s h0)
        # blows up at s = -1/h0 = 2, inside the integration span
        xi = np.array([1.0, 1.0, 0.0, 0.0])
        u = xi / np.linalg.norm(xi)
        H0 = -0.5 * (np.eye(4) - np.outer(u, u)).astype(complex)
        with pytest.raises(symbols.CausticError) as err:
            symbols.gaussian_beam_phase(MK, np.zeros(4), xi, s_max=6.0, H0=H0)
        assert 1.5 < err.value.parameter < 2.5


class TestTestSource:
    def test_value_at_center(self):
        xi = np.array([-1.0, 1.0, 0.0, 0.0])
        F = symbols.test_source(np.zeros(4), xi, tau=50.0)
        assert F(np.zeros(4)) == pytest.approx(1 / 50.0)

    def test_gaussian_decay(self):
        xi = np.array([-1.0, 0.0, 1.0, 0.0])
        tau = 200.0
        F = symbols.test_source(np.zeros(4), xi, tau=tau)
        d = 0.05
        x = np.array([0.0, d, 0.0, 0.0])
        expect = np.exp(-tau * 0.5 * d**2)
        assert abs(F(x)) / abs(F(np.zeros(4))) == pytest.approx(expect,
                                                                rel=1e-10)

    def test_tau_scaling(self):
        xi = np.array([-1.0, 0.0, 0.0, 1.0])
        y = np.array([0.1, 0.2, 0.0, -0.1])
        F1 = symbols.test_source(y, xi, tau=100.0)
        F2 = symbols.test_source(y, xi, tau=200.0)
        assert F2(y) / F1(y) == pytest.approx(0.5)

    def test_amplitude_bound(self):
        xi = np.array([-1.0, 1.0, 0.0, 0.0])
        rng = np.random.default_rng(9)
        F = symbols.test_source(np.zeros(4), xi, tau=30.0,
                                amplitude=lambda x: 2.0)
        for _ in range(20):
            x = rng.uniform(-1, 1, 4)
            assert abs(F(x)) <= 2.0 / 30.0 + 1e-15
