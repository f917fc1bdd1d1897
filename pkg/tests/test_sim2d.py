import json
import math

import numpy as np
import pytest
from scipy import stats

from planarhand.sim2d import (
    ConfigError,
    DomainRandomization,
    SimConfig,
    SimulationDiverged,
    create_world,
    finger_fk,
    hand_keypoints,
    pd_torque,
    square,
)


def make_world(seed=7, **cfg_kw):
    cfg = SimConfig(**cfg_kw)
    return create_world(cfg, DomainRandomization.disabled(), seed)


class TestCreateWorld:
    def test_same_seed_identical_snapshots(self):
        cfg = SimConfig()
        dr = DomainRandomization()
        w1 = create_world(cfg, dr, seed=7)
        w2 = create_world(cfg, dr, seed=7)
        assert json.dumps(w1.snapshot()) == json.dumps(w2.snapshot())
        for _ in range(20):
            w1.step(w1.q)
            w2.step(w2.q)
        assert json.dumps(w1.snapshot()) == json.dumps(w2.snapshot())

    def test_zero_width_ranges_give_nominal_parameters(self):
        dr = DomainRandomization.disabled()
        w = create_world(SimConfig(), dr, seed=3)
        assert w.object_mass == pytest.approx(dr.object_mass_range[0], abs=0)
        assert w.mu_obj == pytest.approx(dr.object_friction_range[0], abs=0)
        assert w.mu_hand == pytest.approx(dr.hand_friction_range[0], abs=0)
        assert w.kp == pytest.approx(SimConfig().kp)
        assert w.kd == pytest.approx(SimConfig().kd)
        assert w.obs_offset == [0.0] * 9

    def test_shape_scale_draw_stays_in_declared_range(self):
        cfg = SimConfig()
        dr = DomainRandomization()
        base_r = cfg.object_shape.radius
        for seed in range(1000):
            w = create_world(cfg, dr, seed=seed)
            s = w.shape.radius / base_r
            assert 0.95 <= s <= 1.05

    def test_invalid_dt_split_rejected(self):
        cfg = SimConfig(physics_dt=0.03, control_dt=0.1)
        with pytest.raises(ConfigError):
            create_world(cfg, DomainRandomization(), seed=0)

    def test_bad_link_lengths_rejected(self):
        cfg = SimConfig(link_lengths=(0.06, -0.05, 0.04))
        with pytest.raises(ConfigError):
            create_world(cfg, DomainRandomization(), seed=0)


class TestPdTorque:
    def test_zero_damping(self):
        assert pd_torque([0.5], [0.0], [0.0], (1.0, 0.0)) == [0.5]

    def test_zero_stiffness(self):
        assert pd_torque([0.0], [0.0], [2.0], (0.0, 0.5)) == [-1.0]

    def test_hand_evaluated_case(self):
        # Kp=3, Kd=0.1, error 0.2, q_dot 1 -> 3*0.2 - 0.1*1 = 0.5
        (tau,) = pd_torque([0.2], [0.0], [1.0], (3.0, 0.1))
        assert tau == pytest.approx(0.5, abs=1e-12)

    def test_clamped_to_limit(self):
        (tau,) = pd_torque([10.0], [0.0], [0.0], (5.0, 0.0), torque_limit=2.0)
        assert tau == 2.0

    def test_length_mismatch_raises(self):
        with pytest.raises(ValueError):
            pd_torque([0.1, 0.2], [0.0], [0.0], (1.0, 0.0))


class TestStep:
    def test_equilibrium_without_gravity(self):
        w = make_world(gravity=(0.0, 0.0))
        q0 = list(w.q)
        pose0 = w.object_pose
        for _ in range(10):
            w.step(q0)
        assert w.q == pytest.approx(q0, abs=1e-12)
        assert w.q_dot == pytest.approx([0.0] * 9, abs=1e-12)
        assert w.object_pose == pytest.approx(pose0, abs=1e-12)

    def test_object_settles_on_palm(self):
        # square cannot roll; after 10 s flat on the palm it must be at rest.
        # the middle finger is tucked below the palm so the landing zone is
        # clear of compliant finger circles
        w = make_world(object_shape=square(0.06), object_init_pose=(0.0, 0.05, 0.0))
        q = list(w.q)
        q[3:6] = [0.25, -2.5, -0.2]
        w.set_state(q, [0.0] * 9, (0.0, 0.05, 0.0), (0.0, 0.0, 0.0))
        for _ in range(100):
            w.step(q)
        assert math.hypot(w.obj_vx, w.obj_vy) < 1e-3
        assert abs(w.obj_w) < 0.05
        assert not w.dropped_flag

    def test_step_determinism_from_cloned_state(self):
        w = make_world()
        for _ in range(5):
            w.step(w.q)
        w2 = w.clone()
        target = [v + 0.05 for v in w.q]
        w.step(target)
        w2.step(target)
        assert json.dumps(w.snapshot()) == json.dumps(w2.snapshot())

    def test_nan_state_raises_divergence(self):
        w = make_world()
        w.obj_x = float("nan")
        with pytest.raises(SimulationDiverged):
            w.step(w.q)

    def test_nonfinite_target_rejected(self):
        w = make_world()
        bad = list(w.q)
        bad[0] = float("inf")
        with pytest.raises(ValueError):
            w.step(bad)

    def test_joint_limits_hold_after_every_step(self):
        w = make_world()
        lo, hi = w.cfg.joint_limits()
        rng = np.random.default_rng(0)
        for _ in range(30):
            target = rng.uniform(-4, 4, 9)
            w.step(list(target))
            for i in range(9):
                assert lo[i] - 1e-12 <= w.q[i] <= hi[i] + 1e-12


class TestForwardKinematics:
    def test_straight_two_link_chain(self):
        pts, _ = finger_fk(0.0, 0.0, (1.0, 1.0), (0.0, 0.0))
        assert pts[-1] == pytest.approx((2.0, 0.0), abs=1e-12)

    def test_quarter_turn(self):
        pts, _ = finger_fk(0.0, 0.0, (1.0, 1.0), (math.pi / 2, 0.0))
        assert pts[-1] == pytest.approx((0.0, 2.0), abs=1e-12)

    def test_against_transform_composition_oracle(self):
        rng = np.random.default_rng(42)
        lengths = (0.06, 0.05, 0.04)
        for _ in range(50):
            angles = rng.uniform(-math.pi, math.pi, 3)
            pts, _ = finger_fk(0.1, -0.2, lengths, list(angles))
            # oracle: compose homogeneous transforms
            T = np.eye(3)
            T[0, 2], T[1, 2] = 0.1, -0.2
            oracle_pts = []
            for L, a in zip(lengths, angles):
                R = np.array(
                    [
                        [math.cos(a), -math.sin(a), L * math.cos(a)],
                        [math.sin(a), math.cos(a), L * math.sin(a)],
                        [0, 0, 1],
                    ]
                )
                # rotation applies about the current joint, then translate
                T = T @ R
                oracle_pts.append((T[0, 2], T[1, 2]))
            for got, want in zip(pts[1:], oracle_pts):
                assert got == pytest.approx(want, abs=1e-9)

    def test_perturbing_one_joint_moves_only_distal_keypoints(self):
        cfg = SimConfig()
        q = list(make_world().q)
        base = hand_keypoints(cfg, q)
        q2 = list(q)
        q2[4] += 0.1  # middle finger, second joint
        moved = hand_keypoints(cfg, q2)
        for k, (a, b) in enumerate(zip(base, moved)):
            finger, which = divmod(k, 2)
            delta = math.hypot(a[0] - b[0], a[1] - b[1])
            if finger != 1:
                assert delta == 0.0
            elif which == 0:  # PIP of middle finger: proximal to joint 2
                assert delta == 0.0
            else:
                assert delta > 1e-4


class TestDetectDrop:
    def test_resting_object_not_dropped(self):
        w = make_world(object_shape=square(0.06), object_init_pose=(0.0, 0.08, 0.0))
        for _ in range(30):
            w.step(w.q)
        assert len(w.contacts) >= 1
        assert not w.detect_drop()

    def test_teleported_below_palm_is_drop(self):
        w = make_world()
        w.obj_y = -1.0
        assert w.detect_drop()

    def test_contact_loss_free_flight_is_drop_after_half_second(self):
        # sideways gravity so the object escapes without passing below the palm
        w = make_world(gravity=(9.81, 0.0), object_init_pose=(0.0, 0.2, 0.0))
        for i in range(6):  # 0.6 s
            w.step(w.q)
        assert w.obj_y > 0
        assert w.detect_drop()

    def test_not_dropped_at_point_four_seconds(self):
        w = make_world(gravity=(9.81, 0.0), object_init_pose=(0.0, 0.2, 0.0))
        for i in range(4):  # 0.4 s
            w.step(w.q)
        assert not w.detect_drop()


class TestInvariants:
    def test_velocity_zeroed_at_limit_clamp(self):
        w = make_world()
        hi = w.limits_hi
        w.step([h + 1.0 for h in hi])  # push every joint into its upper limit
        for _ in range(20):
            w.step([h + 1.0 for h in hi])
        for i in range(9):
            if w.q[i] >= hi[i] - 1e-9:
                assert w.q_dot[i] <= 1e-9

    def test_passivity_zero_torque_zero_gravity(self):
        # with no commanded torque and no gravity, every energy change comes
        # from contacts/friction (dissipative) plus O(h^2) integrator noise
        w = make_world(gravity=(0.0, 0.0), kp=0.0, kd=0.0)
        w.q_dot = [0.5, -0.3, 0.2, 0.1, 0.4, -0.2, -0.5, 0.3, 0.1]
        w.obj_vx, w.obj_vy, w.obj_w = 0.2, 0.1, 1.0
        ke = w.kinetic_energy()
        start = ke
        for _ in range(240):
            w.substep(w.cfg.physics_dt)
            ke_next = w.kinetic_energy()
            assert ke_next <= ke + 1e-7
            ke = ke_next
        assert ke <= start

    def test_snapshot_field_names(self):
        snap = make_world().snapshot()
        assert set(snap) == {
            "version",
            "q",
            "q_dot",
            "q_target",
            "object_pose",
            "object_vel",
            "time",
            "seed",
            "config_hash",
        }

    def test_snapshot_round_trips_through_json(self):
        w = make_world()
        for _ in range(7):
            w.step(w.q)
        snap = w.snapshot()
        assert json.loads(json.dumps(snap)) == snap


class TestDomainRandomizationStatistics:
    N = 10_000

    def _draws(self, attr):
        cfg = SimConfig()
        dr = DomainRandomization(gravity_angle_range=(-math.pi, math.pi))
        return np.array(
            [getattr(create_world(cfg, dr, seed=s), attr) for s in range(self.N)]
        )

    def test_object_mass_uniform(self):
        x = self._draws("object_mass")
        lo, hi = DomainRandomization().object_mass_range
        assert x.min() >= lo and x.max() <= hi
        p = stats.kstest(x, stats.uniform(loc=lo, scale=hi - lo).cdf).pvalue
        assert p > 0.01

    def test_friction_uniform(self):
        x = self._draws("mu_obj")
        lo, hi = DomainRandomization().object_friction_range
        p = stats.kstest(x, stats.uniform(loc=lo, scale=hi - lo).cdf).pvalue
        assert p > 0.01

    def test_p_gain_mult_uniform(self):
        x = self._draws("kp") / SimConfig().kp
        lo, hi = DomainRandomization().p_gain_mult_range
        p = stats.kstest(x, stats.uniform(loc=lo, scale=hi - lo).cdf).pvalue
        assert p > 0.01

    def test_gravity_angle_uniform_over_circle(self):
        cfg = SimConfig()
        dr = DomainRandomization(gravity_angle_range=(-math.pi, math.pi))
        angs = np.array(
            [
                math.atan2(-create_world(cfg, dr, seed=s).gravity[0],
                           -create_world(cfg, dr, seed=s).gravity[1])
                for s in range(2000)
            ]
        )
        p = stats.kstest(
            angs, stats.uniform(loc=-math.pi, scale=2 * math.pi).cdf
        ).pvalue
        assert p > 0.01

    def test_episode_obs_noise_gaussian(self):
        cfg = SimConfig()
        dr = DomainRandomization()
        x = np.concatenate(
            [create_world(cfg, dr, seed=s).obs_offset for s in range(2000)]
        )
        p = stats.kstest(x, stats.norm(scale=dr.joint_obs_episode_noise).cdf).pvalue
        assert p > 0.01
