import numpy as np
import pytest
from scipy.optimize import brentq

from lorentzlab import causal, reconstruction as rc
from lorentzlab.causal import null_direction

import oracles


@pytest.fixture(scope="module")
def scn():
    return rc.build_scenario("minkowski", family_count=14)


@pytest.fixture(scope="module")
def curved():
    return rc.build_scenario("product",
                             metric_params=dict(amplitude=0.05, width=0.7),
                             family_count=10)


def ray_probe(scn, seed=0, depth=0.25):
    """A (y, zeta) aiming across the diamond, avoiding the observer."""
    rng = np.random.default_rng(seed)
    while True:
        q = np.concatenate([rng.uniform(-0.03, 0.06, 1),
                            rng.uniform(-0.02, 0.02, 3)])
        om = rng.normal(size=3)
        om /= np.linalg.norm(om)
        zeta = null_direction(scn.metric, q, om)
        y = q - depth * zeta
        if rc.ray_avoids_observer(scn, y, zeta):
            return y, zeta


class TestScenario:
    def test_calibration_flat_sentinels(self, scn):
        # no cut points anywhere: kappa_1 is the capped sentinel and
        # kappa_2 defaults to the full observation window
        assert scn.kappa1 == pytest.approx(0.5 * scn.cfg.horizon / 5.0)
        assert scn.kappa2 == pytest.approx(scn.s_plus2 - scn.s_minus2)
        assert scn.t0 == scn.t0_max

    def test_kappa1_below_fifth_of_rho(self, scn, curved):
        # kappa_1 <= rho / 5 for every sampled direction (rho = horizon
        # sentinel on these charts)
        for s in (scn, curved):
            assert s.kappa1 <= s.cfg.horizon / 5.0 + 1e-12

    def test_kappa2_stability_lens(self):
        # on a focusing chart kappa_2 is positive and grid-stable (+-20%)
        lens_scn = rc.build_scenario(
            "lens", metric_params=dict(amplitude=0.8, width=0.5),
            family_count=6, calibrate=False)
        k1_a, k2_a, _ = rc.calibrate_kappa(lens_scn, n_points=3, n_dirs=4)
        k1_b, k2_b, _ = rc.calibrate_kappa(lens_scn, n_points=3, n_dirs=8)
        assert k2_a > 0
        assert k2_b > 0
        assert abs(k2_a - k2_b) <= 0.2 * max(k2_a, k2_b) or \
            min(k2_a, k2_b) == lens_scn.s_plus2 - lens_scn.s_minus2


class TestConditionI:
    def _tuple_through(self, scn, q, seed=1):
        eta = null_direction(scn.metric, q,
                             np.array([0.3, 0.5, np.sqrt(0.66)]))
        tup = causal.direction_tuples_for(scn.metric, q, eta, scn.t0,
                                          count=1, seed=seed)[0]
        return tup, eta

    def test_cone_point_detected(self, scn):
        q = np.array([0.02, 0.01, -0.02, 0.015])
        tup, eta = self._tuple_through(scn, q)
        ray = causal.rk4_path(scn.metric, np.concatenate([q, eta]), 0.4, 8)
        y = ray[1][-1, 0:4]
        res = rc.condition_I(scn, y, tup)
        assert res is not None
        q_got, zeta, t = res
        assert np.linalg.norm(q_got - q) < 1e-8
        end = causal._exp_map(scn.metric, q_got, t * zeta, 8)
        assert np.linalg.norm(end - y) < 1e-7

    def test_interior_point_rejected(self, scn):
        q = np.array([0.02, 0.01, -0.02, 0.015])
        tup, eta = self._tuple_through(scn, q)
        y = q + np.array([0.3, 0.0, 0.0, 0.0])  # strictly inside I^+(q)
        assert rc.condition_I(scn, y, tup) is None

    def test_past_point_rejected(self, scn):
        q = np.array([0.02, 0.01, -0.02, 0.015])
        tup, eta = self._tuple_through(scn, q)
        assert rc.condition_I(scn, q - np.array([0.4, 0, 0, 0]), tup) is None


class TestDetectionSet:
    def test_record_matches_direct_observation(self, scn):
        q = np.array([0.01, 0.015, 0.02, -0.01])
        eta = null_direction(scn.metric, q, np.array([0.0, 0.6, 0.8]))
        tup = causal.direction_tuples_for(scn.metric, q, eta, scn.t0,
                                          count=1, seed=2)[0]
        det = rc.detection_set(scn, tup)
        assert det.q is not None
        truth = rc.ground_truth_record(scn, q)
        assert det.record.distance(truth) < 1e-6

    def test_nonintersecting_tuple_empty(self, scn):
        q = np.array([0.01, 0.015, 0.02, -0.01])
        eta = null_direction(scn.metric, q, np.array([0.0, 0.6, 0.8]))
        tup = causal.direction_tuples_for(scn.metric, q, eta, scn.t0,
                                          count=1, seed=3)[0]
        shifted = [(np.asarray(x) + i * np.array([0.0, 0.08, 0, 0]), v)
                   for i, (x, v) in enumerate(tup)]
        det = rc.detection_set(scn, shifted)
        assert det.q is None
        assert det.record is None

    def test_admissibility_error_names_clause(self, scn):
        q = np.array([0.01, 0.015, 0.02, -0.01])
        eta = null_direction(scn.metric, q, np.array([0.0, 0.6, 0.8]))
        tup = causal.direction_tuples_for(scn.metric, q, eta, scn.t0,
                                          count=1, seed=4)[0]
        # move x_1 into the causal future of x_0
        bad = list(tup)
        x0 = np.asarray(bad[0][0])
        bad[1] = (x0 + np.array([0.3, 0.0, 0.0, 0.0]), bad[1][1])
        with pytest.raises(rc.AdmissibilityError, match="causal future"):
            rc.detection_set(scn, bad)

    def test_membership_agrees_with_condition_I(self, scn):
        # clean probes off the tolerance band never disagree
        q = np.array([0.0, 0.01, 0.02, -0.015])
        eta = null_direction(scn.metric, q, np.array([0.7, 0.1, 0.707]))
        tup = causal.direction_tuples_for(scn.metric, q, eta, scn.t0,
                                          count=1, seed=5)[0]
        det = rc.detection_set(scn, tup)
        rng = np.random.default_rng(6)
        disagreements = 0
        for _ in range(120):
            om = rng.normal(size=3)
            om /= np.linalg.norm(om)
            r = rng.uniform(0.05, 0.6)
            if rng.random() < 0.5:
                y = causal._exp_map(scn.metric, q,
                                    r * null_direction(scn.metric, q, om), 8)
            else:
                y = q + np.concatenate([rng.uniform(0.1, 0.5, 1),
                                        rng.uniform(-0.4, 0.4, 3)])
            gap = abs(float(scn.kit.causal_gap(q, y)))
            if gap <= 2 * scn.eps_hit or y[0] <= q[0]:
                continue  # inside the tolerance band: either answer is fine
            member = det.contains(scn, y)
            cond = rc.condition_I(scn, y, tup) is not None
            if member != cond:
                disagreements += 1
        assert disagreements == 0


class TestCutObservation:
    def test_flat_closed_form_entry(self, scn):
        y, zeta = ray_probe(scn, seed=7)
        s1 = 0.02
        S = rc.cut_observation_S(scn, y, zeta, s1)
        x1 = scn.mu_hat.eval(s1)[0:4]

        def f(r):
            return (y[0] + r * zeta[0] - x1[0]) \
                - np.linalg.norm(y[1:] + r * zeta[1:] - x1[1:])

        if f(1e-9) * f(8.0) < 0:
            r1 = brentq(f, 1e-9, 8.0)
            q0 = y + r1 * zeta
            in_past = (scn.p_plus[0] - q0[0]) >= np.linalg.norm(
                scn.p_plus[1:] - q0[1:])
            expect = (q0[0] + np.linalg.norm(q0[1:])) if in_past \
                else scn.s_plus
        else:
            expect = scn.s_plus
        assert S == pytest.approx(expect, abs=1e-7)

    def test_never_entering_gives_s_plus(self, scn):
        # outward-directed ray never catches the observer's future cone
        y = np.array([-0.05, 0.18, 0.015, 0.0])
        omega = np.array([0.97, 0.05, 0.24])
        omega /= np.linalg.norm(omega)
        zeta = null_direction(scn.metric, y, omega)
        assert rc.cut_observation_S(scn, y, zeta, 0.05) == scn.s_plus

    def test_monotone_in_s1(self, scn):
        # decreasing s1 enlarges J^+(mu(s1)), which is then entered no
        # later, so S never increases as s1 decreases (equivalently: S is
        # non-decreasing in s1)
        vals = []
        y, zeta = ray_probe(scn, seed=8)
        for s1 in np.linspace(-0.05, 0.08, 10):
            vals.append(rc.cut_observation_S(scn, y, zeta, float(s1)))
        diffs = np.diff(vals)
        assert (diffs >= -1e-9).all()


class TestGenuineObservation:
    def test_t_equals_s_flat(self, scn):
        rng = np.random.default_rng(9)
        checked = 0
        k = 0
        while checked < 6:
            k += 1
            y, zeta = ray_probe(scn, seed=100 + k)
            s1 = float(rng.uniform(-0.02, 0.06))
            S = rc.cut_observation_S(scn, y, zeta, s1)
            if S >= scn.s_plus:  # degenerate window
                continue
            T = rc.genuine_observation_T(scn, y, zeta, s1, n_grid=20)
            assert abs(T - S) <= 1e-3
            checked += 1

    def test_degenerate_window(self, scn):
        # ray that never enters gives T = S = s_plus
        y = np.array([-0.05, 0.18, 0.015, 0.0])
        omega = np.array([0.97, 0.05, 0.24])
        omega /= np.linalg.norm(omega)
        zeta = null_direction(scn.metric, y, omega)
        with pytest.warns(RuntimeWarning):
            T = rc.genuine_observation_T(scn, y, zeta, 0.05, n_grid=6)
        assert T == scn.s_plus

    def test_theta_refinement_monotone(self, scn):
        y, zeta = ray_probe(scn, seed=11)
        s1 = 0.0
        vals = [rc.genuine_observation_T(scn, y, zeta, s1, theta=th,
                                         n_grid=12)
                for th in (0.04, 0.02, 0.01)]
        assert vals[1] <= vals[0] + 1e-9
        assert vals[2] <= vals[1] + 1e-9


class TestCollect:
    def test_two_path_consistency(self, scn):
        y, zeta = ray_probe(scn, seed=12)
        pairs = rc.collect_earliest_sets(scn, y, zeta, 0.05, n_grid=6)
        assert pairs
        for q, rec in pairs:
            truth = rc.ground_truth_record(scn, q)
            assert rec.distance(truth) < 1e-5

    def test_grid_domain_restriction(self, scn):
        y, zeta = ray_probe(scn, seed=13)
        s1 = 0.02
        r0 = rc.r0_parameter(scn, y, zeta, s1)
        pairs = rc.collect_earliest_sets(scn, y, zeta, s1, n_grid=6)
        ray = causal.rk4_path(scn.metric, np.concatenate([y, zeta]), r0, 64)
        for q, _ in pairs:
            # every generating point lies strictly before the window entry
            d = np.linalg.norm(ray[1][:, 0:4] - q, axis=-1)
            t_of_q = ray[0][int(np.argmin(d))]
            assert t_of_q <= r0 + 1e-6

    def test_record_count_matches_grid(self, scn):
        y, zeta = ray_probe(scn, seed=14)
        pairs = rc.collect_earliest_sets(scn, y, zeta, 0.06, n_grid=5)
        assert 0 < len(pairs) <= 5


class TestRecords:
    def test_fixed_point_matches_engine(self, scn, curved):
        rng = np.random.default_rng(15)
        for s in (scn, curved):
            for _ in range(4):
                q = np.concatenate([rng.uniform(-0.05, 0.05, 1),
                                    rng.uniform(-0.05, 0.05, 3)])
                vals = rc.record_values(s, q)
                rec = causal.earliest_light_observation_set(
                    s.metric, q, s.family)
                assert np.abs(vals - rec.values).max() < 1e-8

    def test_flat_against_quadratic_oracle(self, scn):
        q = np.array([0.01, 0.03, -0.02, 0.005])
        vals = rc.record_values(scn, q)
        fam = scn.family
        for i in range(len(fam)):
            want = oracles.mink_f_plus(fam.anchors_z[i], fam.anchors_eta[i],
                                       fam.s_anchor, q)
            assert abs(vals[i] - want) < 1e-8


class TestConformalConsistency:
    def test_self_score_zero(self, scn):
        q = np.array([0.0, 0.01, 0.0, 0.02])
        cloud = [(q, rc.ground_truth_record(scn, q))]
        assert rc.conformal_consistency(cloud, cloud) == 0.0

    def test_time_shift_sensitivity(self, scn):
        q = np.array([0.0, 0.01, 0.0, 0.02])
        rec = rc.ground_truth_record(scn, q)
        shift = 0.013
        shifted = causal.ObservationRecord(q, rec.values + shift, scn.family)
        score = rc.conformal_consistency([(q, rec)], [(q, shifted)],
                                         matching="index")
        assert score == pytest.approx(shift)

    def test_matching_modes(self, scn):
        qs = [np.array([0.0, 0.01, 0.0, 0.02]),
              np.array([0.02, -0.01, 0.01, 0.0])]
        cloud = [(q, rc.ground_truth_record(scn, q)) for q in qs]
        assert rc.conformal_consistency(cloud, cloud[::-1],
                                        matching="nearest") == 0.0
        with pytest.raises(ValueError):
            rc.conformal_consistency(cloud, cloud, matching="bogus")


@pytest.mark.slow
class TestEndToEnd:
    def test_flat_diamond(self, scn):
        cloud = rc.reconstruct_diamond(scn, n_stage_points=12, n_dirs=16,
                                       n_grid=10, seed_count=120)
        assert len(cloud) >= 200
        targets = rc.diamond_targets(scn, delta=0.05)
        assert rc.coverage_radius(cloud, targets) <= 0.05 * 1.6
        truth = [(q, rc.ground_truth_record(scn, q)) for q, _ in cloud]
        assert rc.conformal_consistency(cloud, truth,
                                        matching="index") <= 1e-4
        # injectivity of records on a subsample
        recs = [r for _, r in cloud][::max(1, len(cloud) // 30)]
        for i in range(len(recs)):
            for j in range(i + 1, len(recs)):
                assert recs[i].distance(recs[j]) > 1e-6
