import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from inbore_kin.robot import default_robot
from inbore_kin.scenes import NOMINAL_CONFIG
from inbore_kin.transmission import (CableParams, CouplingModel, PulleyGeometry,
                                     TransmissionModel, actuator_to_joint,
                                     cable_stretch, default_transmission,
                                     ee_cable_stiffness, joint_to_actuator,
                                     pulley_load, series_stiffness,
                                     transmission_rating)


class TestCoupling:
    def test_zero_maps_to_zero(self, transmission):
        assert np.allclose(actuator_to_joint(transmission.coupling, np.zeros(8)), 0.0)

    def test_unit_motor_one_gear_ratio(self, transmission):
        q = actuator_to_joint(transmission.coupling, np.eye(8)[0])
        assert q[0] == pytest.approx(0.637e-3)
        assert np.allclose(q[1:], 0.0)

    def test_unit_motor_five_couples_down_the_chain(self, transmission):
        q = actuator_to_joint(transmission.coupling, np.eye(8)[4])
        assert np.allclose(q[:4], 0.0)
        assert q[4] == pytest.approx(-0.21)
        assert q[5] == pytest.approx(0.15)
        assert q[6] == pytest.approx(-0.29)
        assert q[7] == pytest.approx(2.4e-4)

    def test_round_trip_identity(self, transmission, rng):
        for _ in range(20):
            q = rng.normal(size=8)
            back = actuator_to_joint(transmission.coupling,
                                     joint_to_actuator(transmission.coupling, q))
            assert np.allclose(back, q, atol=1e-12)

    def test_unit_joint_five_matches_dense_solve_oracle(self, transmission):
        theta = joint_to_actuator(transmission.coupling, np.eye(8)[4])
        oracle = np.linalg.solve(transmission.coupling.matrix, np.eye(8)[4])
        assert np.allclose(theta, oracle, atol=1e-12)

    def test_lower_triangular_enforced(self):
        bad = np.eye(4)
        bad[0, 1] = 0.1
        with pytest.raises(ValueError):
            CouplingModel(np.eye(4), bad)

    def test_singular_rejected(self):
        m_c = np.eye(4)
        m_c[2, 2] = 0.0
        with pytest.raises(ValueError):
            CouplingModel(np.eye(4), m_c)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_round_trip_property(self, transmission, seed):
        q = np.random.default_rng(seed).normal(size=8)
        theta = joint_to_actuator(transmission.coupling, q)
        assert np.allclose(actuator_to_joint(transmission.coupling, theta), q,
                           atol=1e-12)


class TestCableStretch:
    CABLE = CableParams(youngs_modulus=1.2e11, nominal_length=1.0,
                        cross_section=6.36e-7, capstan_radius=0.01)

    def test_zero_force(self):
        assert cable_stretch(self.CABLE, 0.0) == (0.0, 0.0)

    def test_linear_in_force(self):
        dl1, dth1 = cable_stretch(self.CABLE, 10.0)
        dl2, dth2 = cable_stretch(self.CABLE, 20.0)
        assert dl2 == pytest.approx(2 * dl1)
        assert dth2 == pytest.approx(2 * dth1)

    def test_formula(self):
        dl, dth = cable_stretch(self.CABLE, 50.0)
        assert dl == pytest.approx(50.0 * 1.0 / (6.36e-7 * 1.2e11))
        assert dth == pytest.approx(dl / (2 * math.pi * 0.01))

    def test_angle_inverse_in_radius(self):
        fat = CableParams(1.2e11, 1.0, 6.36e-7, 0.02)
        _, dth_small = cable_stretch(self.CABLE, 10.0)
        _, dth_big = cable_stretch(fat, 10.0)
        assert dth_small == pytest.approx(2 * dth_big)

    def test_negative_force_rejected(self):
        with pytest.raises(ValueError):
            cable_stretch(self.CABLE, -1.0)

    def test_nonpositive_params_rejected(self):
        with pytest.raises(ValueError):
            CableParams(0.0, 1.0, 1.0, 1.0)

    def test_default_params_give_calibrated_ee_stiffness(self, model, transmission):
        k = ee_cable_stiffness(model, transmission, NOMINAL_CONFIG)
        assert k == pytest.approx(800.0, rel=1e-3)  # 0.80 N/mm


class TestSeriesStiffness:
    def test_published_values(self):
        assert series_stiffness(1.79, 0.80) == pytest.approx(0.553, abs=0.005)

    def test_equal_springs_halve(self):
        assert series_stiffness(3.0, 3.0) == pytest.approx(1.5)

    def test_rigid_partner_limit(self):
        assert series_stiffness(2.0, 1e12) == pytest.approx(2.0, rel=1e-9)

    def test_never_exceeds_softer_spring(self, rng):
        for _ in range(50):
            a, b = rng.uniform(0.01, 100, 2)
            assert series_stiffness(a, b) <= min(a, b)

    def test_nonpositive_rejected(self):
        with pytest.raises(ValueError):
            series_stiffness(-1.0, 1.0)


class TestPulleyLoad:
    def test_zero_wrap(self):
        assert pulley_load(100.0, 0.0) == 0.0

    def test_pi_wrap_full_tension(self):
        assert pulley_load(117.0, math.pi) == pytest.approx(117.0)

    def test_rated_load_inversion(self):
        theta = 2.0
        f_c = 117.0 / math.sin(theta / 2)
        assert pulley_load(f_c, theta) == pytest.approx(117.0)

    def test_range_checks(self):
        with pytest.raises(ValueError):
            pulley_load(-1.0, 1.0)
        with pytest.raises(ValueError):
            pulley_load(1.0, 7.0)


class TestTransmissionRating:
    def test_published_rating_ordering(self, transmission, model):
        kinds = [model.joints[j].kind for j in (4, 5, 6, 7)]
        ranges = [model.joints[j].limits for j in (4, 5, 6, 7)]
        ratings = [transmission_rating(g, rng_, kind)
                   for g, rng_, kind in zip(transmission.pulleys, ranges, kinds)]
        assert ratings[0] == pytest.approx(2.5, rel=1e-2)
        assert ratings[1] == pytest.approx(1.25, rel=1e-2)
        assert ratings[2] == pytest.approx(1.25, rel=1e-2)
        assert ratings[3] == pytest.approx(50.0, rel=1e-2)
        assert ratings[0] / ratings[1] == pytest.approx(2.0, rel=1e-3)

    def test_constant_wrap_equals_point_formula(self):
        g = PulleyGeometry(rated_load=100.0, wrap_offset=1.0, joint_pulley_radius=0.02)
        rating = transmission_rating(g, (0.5, 0.5), "revolute")
        assert rating == pytest.approx(0.02 * 100.0 / math.sin((0.5 + 1.0) / 2))

    def test_widening_range_never_increases_rating(self):
        g = PulleyGeometry(rated_load=100.0, wrap_offset=0.5, joint_pulley_radius=0.02)
        widths = np.linspace(0.1, 3.5, 12)
        ratings = [transmission_rating(g, (-w, w), "revolute") for w in widths]
        assert all(r2 <= r1 + 1e-12 for r1, r2 in zip(ratings, ratings[1:]))

    def test_zero_wrap_everywhere_is_unbounded(self):
        g = PulleyGeometry(rated_load=100.0, wrap_offset=0.0, joint_pulley_radius=0.02)
        assert transmission_rating(g, (0.0, 0.0), "revolute") == math.inf

    def test_empty_range_rejected(self):
        g = PulleyGeometry(rated_load=100.0, wrap_offset=0.5, joint_pulley_radius=0.02)
        with pytest.raises(ValueError):
            transmission_rating(g, (1.0, 0.5), "revolute")


class TestDeflection:
    def test_prismatic_joint_uses_linear_cable_stiffness(self, transmission):
        kappa = transmission.joint_stiffness()
        cable = transmission.cables[3]
        expected = cable.cross_section * cable.youngs_modulus \
            / cable.nominal_length * transmission.stiffness_scale
        assert kappa[3] == pytest.approx(expected)

    def test_base_joints_rigid(self, transmission):
        dq = transmission.joint_deflection(np.ones(8))
        assert np.allclose(dq[:4], 0.0)
        assert np.all(dq[4:] > 0.0)
