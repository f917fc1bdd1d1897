import math

import numpy as np
import pytest

from planarhand.neuralcore import Tensor, grad_check, square, sub, sum_
from planarhand.controller import (
    Controller,
    ControllerConfig,
    DiffusionTrainer,
    ModelNotTrained,
    MotionDenoiser,
    NoiseSchedule,
    Normalizer,
    StateHistory,
    action_to_targets,
    clamp_motion,
    ddim_sample,
    diffuse_forward,
    dist,
    dist_grad,
    guided_reverse_step,
    invdyn_predict,
    InverseDynamics,
    load_bundle,
    save_bundle,
    targets_to_action,
)
from planarhand.controller.invdyn import InvDynTrainer
from planarhand.sim2d import SimConfig


class TestSchedule:
    def test_default_endpoints(self):
        s = NoiseSchedule()
        assert s.alpha_bar(1) > 0.99
        assert s.alpha_bar(s.steps) < 0.05

    def test_alpha_bar_monotone_decreasing(self):
        s = NoiseSchedule()
        ab = s.alpha_bars
        assert np.all(np.diff(ab) < 0)

    def test_posterior_variance_positive_past_first_step(self):
        s = NoiseSchedule()
        assert all(s.posterior_var(t) > 0 for t in range(2, s.steps + 1))


class TestDiffuseForward:
    def test_no_noise_endpoint(self):
        s = NoiseSchedule(steps=2, beta_start=0.0, beta_end=0.0)
        x0 = np.array([1.0, -2.0])
        eps = np.array([5.0, 5.0])
        assert np.allclose(diffuse_forward(x0, 1, eps, s), x0)

    def test_pure_noise_endpoint(self):
        s = NoiseSchedule(steps=2, beta_start=0.0, beta_end=1.0)
        x0 = np.array([1.0, -2.0])
        eps = np.array([5.0, -7.0])
        assert np.allclose(diffuse_forward(x0, 2, eps, s), eps)

    def test_hand_evaluated_quarter_signal(self):
        # betas (0.5, 0.5): abar_2 = 0.25; x_t = 0.5*2 + sqrt(0.75)*1
        s = NoiseSchedule(steps=2, beta_start=0.5, beta_end=0.5)
        got = diffuse_forward(np.array([2.0]), 2, np.array([1.0]), s)
        assert got[0] == pytest.approx(1.8660, abs=1e-4)

    def test_out_of_range_t(self):
        s = NoiseSchedule()
        with pytest.raises(ValueError):
            diffuse_forward(np.zeros(3), 0, np.zeros(3), s)
        with pytest.raises(ValueError):
            diffuse_forward(np.zeros(3), 101, np.zeros(3), s)

    def test_forward_process_variance_approaches_unity(self):
        # unit-variance x0: Var(x_t) = abar + (1 - abar) = 1 for every t
        s = NoiseSchedule()
        rng = np.random.default_rng(0)
        n = 100_000
        x0 = rng.standard_normal(n)
        eps = rng.standard_normal(n)
        xt = diffuse_forward(x0, s.steps, eps, s)
        assert abs(xt.var() - 1.0) < 0.03


class TestDist:
    def test_equal_is_zero(self):
        dx = np.tile(np.array([[0.1, -0.2]]), (2, 1)).reshape(2, 1, 2)
        assert dist(dx, np.array([[0.1, -0.2]])) == 0.0

    def test_hand_evaluated(self):
        dx = np.array([[[0.0, 0.0]], [[1.0, 0.0]]])
        assert dist(dx, np.array([[1.0, 0.0]])) == pytest.approx(1.0)

    def test_negated_input_scaling(self):
        inp = np.array([[0.3, -0.4]])
        dx = np.zeros((2, 1, 2))
        want = (0.3**2 + 0.4**2) * 2
        assert dist(dx, -inp) == pytest.approx(want)
        assert dist(dx, inp) == pytest.approx(want)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            dist(np.zeros((2, 3, 2)), np.zeros((4, 2)))

    def test_analytic_gradient_matches_tape_and_fd(self):
        rng = np.random.default_rng(1)
        inp = rng.normal(size=(3, 2))
        x = rng.normal(size=(2, 3, 2))
        analytic = dist_grad(x, inp)

        tile = np.tile(inp[None], (2, 1, 1)).reshape(1, -1)

        def f(t):
            return sum_(square(sub(t, Tensor(tile, dtype=np.float64))))

        err = grad_check(f, x.reshape(1, -1), h=1e-4)
        assert err < 1e-5
        # tape gradient equals the analytic broadcast formula
        t = Tensor(x.reshape(1, -1), requires_grad=True, dtype=np.float64)
        out = f(t)
        out.backward()
        assert np.allclose(t.grad.reshape(2, 3, 2), analytic, atol=1e-9)


class TestGuidedReverseStep:
    def test_zero_strength_is_identity(self):
        mu = np.random.default_rng(0).normal(size=(2, 2, 2))
        out = guided_reverse_step(mu, 0.1, np.zeros((2, 2)), 0.0)
        assert np.array_equal(out, mu)

    def test_zero_gradient_at_input(self):
        inp = np.array([[0.5, -0.5]])
        mu = np.tile(inp[None], (2, 1, 1))
        out = guided_reverse_step(mu, 0.1, inp, 3.0)
        assert np.allclose(out, mu)

    def test_hand_evaluated(self):
        # gradient 2(mu - inp) = (0.5, 0) -> mu' = 1 - 2*0.04*0.5 = 0.96
        mu = np.array([[[1.0, 0.0]]])
        inp = np.array([[0.75, 0.0]])
        out = guided_reverse_step(mu, 0.04, inp, 2.0)
        assert out[0, 0, 0] == pytest.approx(0.96, abs=1e-12)
        assert out[0, 0, 1] == 0.0


def _tiny_trained_model(rng, x_dim=8, obs_dim=12, width=64, steps=300):
    model = MotionDenoiser(x_dim=x_dim, obs_dim=obs_dim, rng=rng, width=width)
    sched = NoiseSchedule()
    tr = DiffusionTrainer(model, sched, horizon=2, n_keypoints=2)
    obs = np.zeros((64, obs_dim), dtype=np.float32)
    modes = np.tile(np.array([[1.0, 0.0]], dtype=np.float32), (64, 1))
    losses = []
    for _ in range(steps):
        data = rng.choice([-1.5, 1.5]) + 0.1 * rng.standard_normal((64, x_dim)).astype(np.float32)
        losses.append(tr.train_step(obs, modes, data, rng))
    return model, sched, losses


class TestTrainStep:
    def test_perfect_denoiser_loss_is_zero(self):
        # directly pin the loss reduction: 2 * mean((eps_hat - eps)^2)
        eps = np.random.default_rng(0).standard_normal((4, 8)).astype(np.float32)
        from planarhand.neuralcore import mean, mul

        loss = mul(mean(square(sub(Tensor(eps), Tensor(eps)))), 2.0).item()
        assert loss == 0.0

    def test_initial_loss_near_two_on_unit_variance_data(self):
        rng = np.random.default_rng(3)
        model = MotionDenoiser(x_dim=8, obs_dim=12, rng=rng, width=64)
        sched = NoiseSchedule()
        tr = DiffusionTrainer(model, sched, horizon=2, n_keypoints=2)
        obs = np.zeros((256, 12), dtype=np.float32)
        modes = np.tile(np.array([[1.0, 0.0]], dtype=np.float32), (256, 1))
        data = rng.standard_normal((256, 8)).astype(np.float32)
        loss = tr.train_step(obs, modes, data, rng)
        assert 1.5 < loss < 2.5

    def test_smoke_train_loss_decreases_over_windows(self):
        rng = np.random.default_rng(4)
        _, _, losses = _tiny_trained_model(rng, steps=300)
        w = 100
        means = [np.mean(losses[i : i + w]) for i in range(0, 300, w)]
        assert means[1] < means[0]
        assert means[2] < means[1]


class TestDdimSample:
    def test_untrained_model_refused(self):
        rng = np.random.default_rng(0)
        model = MotionDenoiser(x_dim=8, obs_dim=12, rng=rng, width=64)
        cond = model.encode_condition(np.zeros((1, 12), dtype=np.float32), np.array([[1.0, 0.0]], dtype=np.float32))
        with pytest.raises(ModelNotTrained):
            ddim_sample(model, cond, NoiseSchedule(), rng)

    def test_invalid_step_count_rejected(self):
        rng = np.random.default_rng(0)
        model = MotionDenoiser(x_dim=8, obs_dim=12, rng=rng, width=64)
        model.trained = True
        cond = model.encode_condition(np.zeros((1, 12), dtype=np.float32), np.array([[1.0, 0.0]], dtype=np.float32))
        with pytest.raises(ValueError):
            ddim_sample(model, cond, NoiseSchedule(), rng, steps=9)

    def test_zero_guidance_equals_no_input(self):
        rng = np.random.default_rng(5)
        model, sched, _ = _tiny_trained_model(rng, steps=60)
        cond = model.encode_condition(np.zeros((3, 12), dtype=np.float32), np.tile(np.array([[1.0, 0.0]], dtype=np.float32), (3, 1)))
        a = ddim_sample(model, cond, sched, np.random.default_rng(9), dx_input_norm=None, alpha_g=0.0)
        b = ddim_sample(model, cond, sched, np.random.default_rng(9), dx_input_norm=np.ones(8, dtype=np.float32), alpha_g=0.0)
        assert np.array_equal(a, b)

    def test_guidance_pulls_samples_toward_input(self):
        rng = np.random.default_rng(6)
        model, sched, _ = _tiny_trained_model(rng, steps=250)
        cond = model.encode_condition(np.zeros((200, 12), dtype=np.float32), np.tile(np.array([[1.0, 0.0]], dtype=np.float32), (200, 1)))
        target = np.full(8, 1.5, dtype=np.float32)
        means = {}
        for ag in (0.0, 1.0, 5.0):
            s = ddim_sample(model, cond, sched, np.random.default_rng(11), dx_input_norm=target, alpha_g=ag)
            means[ag] = float(((s - target) ** 2).sum(axis=1).mean())
        assert means[1.0] < means[0.0]
        assert means[5.0] <= means[1.0] * 1.05

    def test_determinism_given_rng(self):
        rng = np.random.default_rng(7)
        model, sched, _ = _tiny_trained_model(rng, steps=60)
        cond = model.encode_condition(np.zeros((2, 12), dtype=np.float32), np.tile(np.array([[1.0, 0.0]], dtype=np.float32), (2, 1)))
        a = ddim_sample(model, cond, sched, np.random.default_rng(3))
        b = ddim_sample(model, cond, sched, np.random.default_rng(3))
        assert np.array_equal(a, b)


class TestClampMotion:
    def test_caps_per_keypoint_norm(self):
        dx = np.zeros((2, 3, 2))
        dx[0, 0] = (1.0, 0.0)
        dx[1, 2] = (0.01, 0.01)
        out = clamp_motion(dx, 0.03)
        assert np.linalg.norm(out[0, 0]) == pytest.approx(0.03)
        assert np.allclose(out[1, 2], (0.01, 0.01))


class TestNormalizer:
    def test_round_trip_exact(self):
        rng = np.random.default_rng(0)
        data = rng.normal(2.0, 3.0, size=(500, 6)).astype(np.float32)
        norm = Normalizer.fit(data)
        z = norm.encode(data)
        back = norm.decode(z)
        assert np.max(np.abs(back - data)) < 1e-6
        assert abs(z.mean()) < 0.05 and abs(z.std() - 1.0) < 0.05


class TestInvDyn:
    def test_duplicated_pair_identical_prediction(self):
        rng = np.random.default_rng(0)
        model = InverseDynamics(obs_dim=10, dx_dim=6, act_dim=4, rng=rng, width=32)
        obs = rng.normal(size=10).astype(np.float32)
        dx = rng.normal(size=6).astype(np.float32)
        a, _ = invdyn_predict(model, obs, dx)
        b, _ = invdyn_predict(model, obs, dx)
        assert np.array_equal(a, b)

    def test_learns_linear_map(self):
        from planarhand.neuralcore import AdamWHyper

        rng = np.random.default_rng(1)
        model = InverseDynamics(obs_dim=4, dx_dim=4, act_dim=4, rng=rng, width=32)
        tr = InvDynTrainer(model, AdamWHyper(lr=2e-3, weight_decay=1e-4))
        W = rng.normal(size=(4, 4)).astype(np.float32) * 0.3
        for _ in range(500):
            dx = rng.normal(size=(64, 4)).astype(np.float32)
            act = np.clip(dx @ W, -1, 1)
            obs = np.zeros((64, 4), dtype=np.float32)
            loss = tr.train_step(obs, dx, act)
        assert loss < 0.02

    def test_action_target_round_trip(self):
        cfg = SimConfig()
        rng = np.random.default_rng(2)
        lo, hi = cfg.joint_limits()
        q = np.array([rng.uniform(a, b) for a, b in zip(lo, hi)])
        a = targets_to_action(cfg, q)
        back = action_to_targets(cfg, a)
        assert np.allclose(back, q, atol=1e-12)


class TestStateHistory:
    def _obs(self, t):
        from planarhand.sim2d.world import Observation

        return Observation(
            time=t,
            keypoints=[(0.1 * t, 0.2)] * 6,
            q=[t] * 9,
            q_target=[t + 0.5] * 9,
            ctrl_error=[0.5] * 9,
            contact_count=0,
            dropped=False,
        )

    def test_backfills_first_tick(self):
        h = StateHistory(SimConfig())
        h.push(self._obs(1.0))
        assert h.full
        f = h.features()
        assert f.shape == (4 * (12 + 27),)
        # all four stacked rows identical after one push
        rows = f.reshape(4, -1)
        assert np.array_equal(rows[0], rows[3])

    def test_rolls_forward(self):
        h = StateHistory(SimConfig())
        for t in range(6):
            h.push(self._obs(float(t)))
        rows = h.features().reshape(4, -1)
        assert rows[3][12] == 5.0  # newest joint reading
        assert rows[0][12] == 2.0  # oldest of the window


class TestBundle:
    def test_round_trip_identical_outputs(self, tmp_path):
        rng = np.random.default_rng(8)
        sim_cfg = SimConfig()
        obs_dim = 4 * (12 + 27)
        model = MotionDenoiser(x_dim=24, obs_dim=obs_dim, rng=rng, width=64)
        model.trained = True
        invdyn = InverseDynamics(obs_dim=obs_dim, dx_dim=24, act_dim=9, rng=rng, width=32)
        sched = NoiseSchedule()
        obs_norm = Normalizer(np.zeros(obs_dim, np.float32), np.ones(obs_dim, np.float32))
        dx_norm = Normalizer(np.zeros(24, np.float32), np.ones(24, np.float32))
        ctrl_cfg = ControllerConfig()
        save_bundle(tmp_path / "b", sim_cfg, model, invdyn, sched, obs_norm, dx_norm, ctrl_cfg)
        ctl = load_bundle(tmp_path / "b")

        h = StateHistory(sim_cfg)
        from planarhand.sim2d import DomainRandomization, create_world

        w = create_world(sim_cfg, DomainRandomization.disabled(), 0)
        h.push(w.observe())
        direct = Controller(sim_cfg, model, invdyn, sched, obs_norm, dx_norm, ctrl_cfg)
        qa, _ = direct.act(h, None, "default", np.random.default_rng(5))
        qb, _ = ctl.act(h, None, "default", np.random.default_rng(5))
        assert np.allclose(qa, qb, atol=0)

    def test_tampered_bundle_refused(self, tmp_path):
        rng = np.random.default_rng(9)
        sim_cfg = SimConfig()
        obs_dim = 4 * (12 + 27)
        model = MotionDenoiser(x_dim=24, obs_dim=obs_dim, rng=rng, width=64)
        invdyn = InverseDynamics(obs_dim=obs_dim, dx_dim=24, act_dim=9, rng=rng, width=32)
        save_bundle(
            tmp_path / "b",
            sim_cfg,
            model,
            invdyn,
            NoiseSchedule(),
            Normalizer(np.zeros(obs_dim, np.float32), np.ones(obs_dim, np.float32)),
            Normalizer(np.zeros(24, np.float32), np.ones(24, np.float32)),
            ControllerConfig(),
        )
        p = tmp_path / "b" / "schedule.json"
        p.write_text(p.read_text().replace("0.06", "0.07"))
        from planarhand.controller import BundleError

        with pytest.raises(BundleError):
            load_bundle(tmp_path / "b")
