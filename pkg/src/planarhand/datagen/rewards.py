"""Rollout scoring: goal, style, and regularization reward terms.

The style term is a penalty on fingertip speed (applied with a negative
sign; the coefficient table stays non-negative). Work is summed as
|q_dot_j| * |tau_j| per joint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..graspgen.cache import Grasp, grasp_distance
from ..sim2d.geometry import symmetric_angle_diff
from ..sim2d.kinematics import wrap_angle


@dataclass
class RewardCoeffs:
    w_goal: float = 1.0
    w_style: float = 0.05
    w_reg: float = 0.1
    alpha_pos: float = 200.0
    alpha_orn: float = 2.0
    alpha_hand: float = 0.1
    alpha_bonus: float = 10.0
    alpha_work: float = 0.2
    alpha_action: float = 0.01
    alpha_tau: float = 0.05
    alpha_style: tuple = (1.0, 1.0, 1.0)

    def validate(self):
        vals = [
            self.w_goal, self.w_style, self.w_reg,
            self.alpha_pos, self.alpha_orn, self.alpha_hand, self.alpha_bonus,
            self.alpha_work, self.alpha_action, self.alpha_tau,
            *self.alpha_style,
        ]
        if any(v < 0 for v in vals):
            raise ValueError("reward coefficients must be non-negative")


@dataclass
class AchievementThresholds:
    grasp_dist: float = 0.35
    pos: float = 0.03
    theta: float = 0.15


def goal_achieved(world, goal: Grasp, weights, thresholds: AchievementThresholds) -> bool:
    """Shared achievement test used by both the reward bonus and episode
    goal dynamics."""
    order = getattr(world.shape, "symmetry_order", 1)
    state = Grasp(q=list(world.q), p=world.object_pose, contacts=[])
    if grasp_distance(state, goal, weights, order) >= thresholds.grasp_dist:
        return False
    dp = math.hypot(world.obj_x - goal.p[0], world.obj_y - goal.p[1])
    dth = abs(symmetric_angle_diff(world.obj_th - goal.p[2], order))
    return dp < thresholds.pos and dth < thresholds.theta


def reward(
    world,
    goal: Grasp,
    action_norm,
    torque,
    coeffs: RewardCoeffs,
    metric_weights=(0.3, 1.0),
    thresholds: AchievementThresholds | None = None,
    achieved: bool | None = None,
):
    """(scalar reward, per-term breakdown). The breakdown recomposes to the
    scalar exactly: r = w_goal*goal + w_style*style + w_reg*reg."""
    coeffs.validate()
    if len(action_norm) != len(world.q) or len(torque) != len(world.q):
        raise ValueError("action/torque length mismatch with joint state")
    thresholds = thresholds or AchievementThresholds()
    order = getattr(world.shape, "symmetry_order", 1)
    dp2 = (world.obj_x - goal.p[0]) ** 2 + (world.obj_y - goal.p[1]) ** 2
    dth = abs(symmetric_angle_diff(world.obj_th - goal.p[2], order))
    dq2 = sum((a - b) ** 2 for a, b in zip(world.q, goal.q))
    if achieved is None:
        achieved = goal_achieved(world, goal, metric_weights, thresholds)
    r_goal = (
        math.exp(-coeffs.alpha_pos * dp2 - coeffs.alpha_orn * dth)
        - coeffs.alpha_hand * dq2
        + coeffs.alpha_bonus * (1.0 if achieved else 0.0)
    )
    work = sum(abs(qd) * abs(t) for qd, t in zip(world.q_dot, torque))
    a2 = sum(a * a for a in action_norm)
    t2 = sum(t * t for t in torque)
    r_reg = -coeffs.alpha_work * work - coeffs.alpha_action * a2 - coeffs.alpha_tau * t2
    tips = world.tip_speeds()
    r_style = -sum(a * v for a, v in zip(coeffs.alpha_style, tips))
    r = coeffs.w_goal * r_goal + coeffs.w_style * r_style + coeffs.w_reg * r_reg
    breakdown = {
        "goal": r_goal,
        "style": r_style,
        "reg": r_reg,
        "achieved": 1.0 if achieved else 0.0,
    }
    return r, breakdown
