"""Assisted vs. unassisted trials with paired seeding.

Both arms of a pair build the identical world and consume identical
corruption noise; only the action pathway differs. The corrupted expert's
normalized action is either executed raw or converted to a commanded
keypoint motion and refined by the controller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..controller.pipeline import (
    Controller,
    StateHistory,
    action_to_targets,
    targets_to_action,
)
from ..datagen.episodes import ExpertPolicy, _pick_goal, eligible_start_indices
from ..datagen.expert import ExpertParams
from ..datagen.rewards import AchievementThresholds, goal_achieved
from ..graspgen.cache import GraspCache
from ..sim2d.config import DomainRandomization, SimConfig
from ..sim2d.kinematics import hand_keypoints
from ..sim2d.world import SimulationDiverged, create_world
from .corrupt import CorruptedPolicy, CorruptionSpec

GOAL_BAND = (0.08, 0.8)
GOAL_TIMEOUT = 12.0
GOAL_COOLDOWN = 2.0
SETTLE_TICKS = 3


@dataclass
class TrialMetrics:
    seed: int
    assisted: bool
    alpha_n: float
    alpha_g: float
    kind: str
    duration: float
    goals: int
    budget: float
    dropped: bool

    def to_json(self):
        return {
            "seed": self.seed,
            "assisted": self.assisted,
            "alpha_n": self.alpha_n,
            "alpha_g": self.alpha_g,
            "kind": self.kind,
            "duration_s": self.duration,
            "goals": self.goals,
            "budget_s": self.budget,
            "dropped": self.dropped,
        }


def commanded_motion(cfg: SimConfig, q_now, q_target, cap: float) -> np.ndarray:
    """Keypoint offsets implied by a joint-target command, norm-capped."""
    now = np.asarray(hand_keypoints(cfg, list(q_now)), dtype=np.float64)
    tgt = np.asarray(hand_keypoints(cfg, list(q_target)), dtype=np.float64)
    dx = tgt - now
    norms = np.linalg.norm(dx, axis=1, keepdims=True)
    dx = dx * np.minimum(1.0, cap / np.maximum(norms, 1e-12))
    return dx


def run_trial(
    cache: GraspCache,
    spec: CorruptionSpec,
    assisted: bool,
    seed: int,
    budget: float,
    cfg: SimConfig | None = None,
    dr: DomainRandomization | None = None,
    controller: Controller | None = None,
    alpha_g: float | None = None,
    expert_params: ExpertParams | None = None,
    thresholds: AchievementThresholds | None = None,
    mode: str = "default",
) -> TrialMetrics:
    """One trial; ends at the first drop or at the budget."""
    if assisted and controller is None:
        raise ValueError("assisted trials need a loaded controller bundle")
    cfg = cfg or SimConfig(object_shape=cache.shape)
    dr = dr or DomainRandomization()
    thresholds = thresholds or AchievementThresholds()

    world = create_world(cfg, dr, seed)
    rng = np.random.default_rng(seed)
    corrupt_rng = np.random.Generator(np.random.PCG64(seed + 911))
    expert = ExpertPolicy(cfg, cache, expert_params)
    corrupted = CorruptedPolicy(expert, spec, corrupt_rng)

    starts = eligible_start_indices(cache)
    start_idx = int(starts[int(rng.integers(0, len(starts)))])
    g0 = cache.grasps[start_idx]
    world.set_state(g0.q, [0.0] * cfg.dof, g0.p, (0.0, 0.0, 0.0))
    restrict = set(cache.component_indices(cache.component_of(start_idx)))
    expert.start(world, start_idx)

    history = StateHistory(cfg)
    obs = world.observe()
    history.push(obs)
    goals = 0
    duration = budget
    dropped = False
    cap = controller.cfg.motion_cap if controller is not None else 0.03

    try:
        for _ in range(SETTLE_TICKS):
            a = expert.act(world, history, obs)
            obs = world.step(a)
            history.push(obs)

        goal_idx, goal = _pick_goal(cache, world, GOAL_BAND, 64, rng, restrict, False, start_idx)
        expert.on_goal(world, goal_idx)
        goal_set = world.time
        cooldown_until = world.time + GOAL_COOLDOWN
        counted = False

        n_ticks = int(round(budget / cfg.control_dt))
        t_offset = world.time
        for tick in range(n_ticks):
            a_rad = expert.act(world, history, obs)
            a_norm = targets_to_action(cfg, a_rad)
            a_cmd = corrupted.act_normalized(world, history, obs, a_norm)
            q_cmd = action_to_targets(cfg, a_cmd)
            if assisted:
                dx_input = commanded_motion(cfg, world.q, q_cmd, cap)
                tick_rng = np.random.Generator(np.random.PCG64(seed * 1_000_003 + tick))
                q_exec, _ = controller.act(history, dx_input, mode, tick_rng, alpha_g)
            else:
                q_exec = q_cmd
            obs = world.step(list(q_exec))
            history.push(obs)
            if world.dropped_flag:
                duration = world.time - t_offset
                dropped = True
                break
            if goal_achieved(world, goal, cache.metric_weights, thresholds):
                if not counted:
                    goals += 1
                    counted = True
                if world.time >= cooldown_until:
                    anchor = expert.anchor
                    goal_idx, goal = _pick_goal(
                        cache, world, GOAL_BAND, 64, rng, restrict, False, anchor
                    )
                    expert.on_goal(world, goal_idx)
                    goal_set = world.time
                    cooldown_until = world.time + GOAL_COOLDOWN
                    counted = False
            elif world.time - goal_set > GOAL_TIMEOUT:
                expert.reanchor(world, restrict)
                goal_idx, goal = _pick_goal(
                    cache, world, GOAL_BAND, 64, rng, restrict, False, expert.anchor
                )
                expert.on_goal(world, goal_idx)
                goal_set = world.time
                counted = False
    except SimulationDiverged:
        duration = world.time - t_offset
        dropped = True

    return TrialMetrics(
        seed=seed,
        assisted=assisted,
        alpha_n=spec.scale,
        alpha_g=(alpha_g if alpha_g is not None else (controller.cfg.guidance_strength if controller else 0.0)) if assisted else 0.0,
        kind=spec.kind,
        duration=duration,
        goals=goals,
        budget=budget,
        dropped=dropped,
    )
