"""Episode rollout with goal dynamics, scoring, and full bookkeeping."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ..controller.pipeline import StateHistory, targets_to_action
from ..graspgen.cache import Grasp, GraspCache
from ..graspgen.goals import next_goal
from ..sim2d.config import SimConfig
from ..sim2d.world import SimulationDiverged, World
from .expert import ExpertParams, PathExpert
from .rewards import AchievementThresholds, RewardCoeffs, goal_achieved, reward

HORIZON = 2
GOAL_BAND = (0.08, 0.8)
GOAL_TIMEOUT = 12.0
SETTLE_TICKS = 3
GOAL_COOLDOWN = 2.0  # hold the achieved grasp briefly before the next goal


@dataclass
class Transition:
    obs: np.ndarray
    action: np.ndarray
    next_obs: np.ndarray
    keypoints: np.ndarray                 # (K, 2) at decision time
    future_keypoints: np.ndarray | None   # (T, K, 2), None near episode end
    mode: str
    reward: float
    reward_terms: dict
    achieved: bool
    dropped: bool
    contact_count: int
    time: float

    def delta_x(self) -> np.ndarray | None:
        if self.future_keypoints is None:
            return None
        return self.future_keypoints - self.keypoints[None]


@dataclass
class Episode:
    transitions: list
    outcome: str                           # completed | dropped | timeout
    seed: int
    goal_indices: list
    goals_achieved: int
    mode: str

    def to_json(self) -> dict:
        return {
            "outcome": self.outcome,
            "seed": self.seed,
            "goal_indices": self.goal_indices,
            "goals_achieved": self.goals_achieved,
            "mode": self.mode,
            "transitions": [
                {
                    "obs": t.obs.tolist(),
                    "action": t.action.tolist(),
                    "keypoints": t.keypoints.tolist(),
                    "future": None if t.future_keypoints is None else t.future_keypoints.tolist(),
                    "reward": float(t.reward),
                    "achieved": bool(t.achieved),
                    "dropped": bool(t.dropped),
                    "contacts": int(t.contact_count),
                    "time": float(t.time),
                }
                for t in self.transitions
            ],
        }


class ExpertPolicy:
    """Adapter running a PathExpert against the episode's goal stream.

    Carries a safety reflex: if the object is down to fewer than two
    contacts mid-maneuver, abandon the plan and re-grip at the nearest
    cached grasp (the episode's goal timeout will re-plan later).
    """

    def __init__(self, cfg: SimConfig, cache: GraspCache, params: ExpertParams | None = None):
        self.cfg = cfg
        self.cache = cache
        self.expert = PathExpert(cfg, cache, params)
        self.anchor = None  # cache index the current plan started from
        self.restrict = None
        self._low_contact_ticks = 0

    def start(self, world: World, start_idx: int):
        self.anchor = start_idx
        self.restrict = sorted(
            self.cache.component_indices(self.cache.component_of(start_idx))
        )
        self.expert.set_plan([start_idx])
        self._low_contact_ticks = 0

    def on_goal(self, world: World, goal_idx: int):
        start = self.anchor
        if not self.expert.plan_to(start, goal_idx):
            # disconnected (should not happen with component-restricted goals)
            self.expert.set_plan([goal_idx])
        self.anchor = goal_idx

    def reanchor(self, world: World, restrict):
        """After a timeout, re-anchor planning at the nearest cache grasp."""
        state = Grasp(q=list(world.q), p=world.object_pose, contacts=[])
        idx = list(restrict)
        d = self.cache.distances_from(state, indices=idx)
        self.anchor = int(idx[int(np.argmin(d))])

    def act(self, world: World, history, obs):
        if self.expert.phase != "hold" and len(world.contacts) < 2:
            self._low_contact_ticks += 1
            if self._low_contact_ticks >= 2 and self.restrict:
                state = Grasp(q=list(world.q), p=world.object_pose, contacts=[])
                d = self.cache.distances_from(state, indices=self.restrict)
                idx = int(self.restrict[int(np.argmin(d))])
                self.expert.set_plan([idx])
                self.expert.regrip_until = world.time + self.expert.params.regrip_time
                self.anchor = idx
                self._low_contact_ticks = 0
        else:
            self._low_contact_ticks = 0
        return self.expert.action(world)


def eligible_start_indices(cache: GraspCache, min_component: int = 4) -> list:
    """Start grasps: big-enough tree, and at least 3 contacts so the initial
    settle is forgiving (2-contact pinches remain reachable as goals)."""
    sizes = Counter(cache._component)
    out = [
        i
        for i in range(len(cache))
        if sizes[cache.component_of(i)] >= min_component
        and len(cache.grasps[i].contacts) >= 3
    ]
    if out:
        return out
    return [
        i for i in range(len(cache)) if sizes[cache.component_of(i)] >= min_component
    ]


MAX_PLAN_EDGES = 4


def _pick_goal(cache, world, band, m, rng, restrict, precision: bool, anchor=None):
    """Draw a goal; when an anchor grasp is given, retry a few times for one
    whose tree path is short (long gaiting chains are drop-prone)."""
    from .expert import path_relocations, tree_path

    allow_gait = rng.uniform() < 0.2  # keep some regrasp maneuvers in the data
    for attempt in range(6):
        idx, goal = _pick_goal_once(cache, world, band, m, rng, restrict, precision)
        if anchor is None:
            return idx, goal
        path = tree_path(cache, anchor, idx)
        path_ok = path is not None and len(path) - 1 <= MAX_PLAN_EDGES
        if not path_ok:
            continue
        # 2-contact pinches are fragile hold targets; prefer sturdier goals
        sturdy = len(goal.contacts) >= 3 or attempt >= 4
        safe = allow_gait or attempt >= 4 or path_relocations(
            world.cfg, cache.shape, cache, path
        ) == 0
        if sturdy and safe:
            return idx, goal
    return idx, goal


def _pick_goal_once(cache, world, band, m, rng, restrict, precision: bool):
    state = Grasp(q=list(world.q), p=world.object_pose, contacts=[])
    if precision:
        idx = np.asarray(sorted(restrict))
        pos = np.array([cache.grasps[i].p[:2] for i in idx])
        th = np.array([cache.grasps[i].p[2] for i in idx])
        dp = np.hypot(pos[:, 0] - world.obj_x, pos[:, 1] - world.obj_y)
        order = cache.symmetry_order
        if order == 0:
            dth = np.full_like(dp, np.inf)  # no precision-rotation goals for disks
        else:
            period = 2 * math.pi / order
            dth = np.abs(np.remainder(th - world.obj_th + period / 2, period) - period / 2)
        mask = (dp < 0.035) & (dth > 0.03) & (dth <= 0.3)
        sub = set(int(i) for i in idx[mask])
        if sub:
            try:
                return next_goal(cache, state, (1e-6, math.inf), m, rng, restrict=sub)
            except ValueError:
                pass
    return next_goal(cache, state, band, m, rng, restrict=restrict)


def collect_episode(
    policy,
    world: World,
    cache: GraspCache,
    goal_band=GOAL_BAND,
    max_t: float = 60.0,
    rng=None,
    mode: str = "default",
    coeffs: RewardCoeffs | None = None,
    thresholds: AchievementThresholds | None = None,
    goal_timeout: float = GOAL_TIMEOUT,
    m_downsample: int = 64,
    min_component: int = 4,
    precision: bool = False,
    start_idx: int | None = None,
) -> Episode:
    """Run one episode: settle into a start grasp, chase goals, record.

    The policy must provide act(world, history, obs); start/on_goal hooks
    are called when present (the scripted expert uses them to plan).
    """
    cfg = world.cfg
    rng = rng or np.random.default_rng(world.seed)
    coeffs = coeffs or RewardCoeffs()
    thresholds = thresholds or AchievementThresholds()
    weights = cache.metric_weights

    starts = eligible_start_indices(cache, min_component)
    if not starts:
        raise ValueError("no start grasps in sufficiently large components")
    if start_idx is None:
        start_idx = int(starts[int(rng.integers(0, len(starts)))])
    g0 = cache.grasps[start_idx]
    world.set_state(g0.q, [0.0] * cfg.dof, g0.p, (0.0, 0.0, 0.0))
    restrict = set(cache.component_indices(cache.component_of(start_idx)))

    if hasattr(policy, "start"):
        policy.start(world, start_idx)

    history = StateHistory(cfg)
    obs = world.observe()
    history.push(obs)
    outcome = "timeout"
    transitions: list[Transition] = []
    kp_series = []
    goal_indices = []
    goals_achieved = 0

    try:
        for _ in range(SETTLE_TICKS):
            a = policy.act(world, history, obs)
            obs = world.step(a)
            history.push(obs)

        anchor = start_idx if hasattr(policy, "on_goal") else None
        goal_idx, goal = _pick_goal(
            cache, world, goal_band, m_downsample, rng, restrict, precision, anchor
        )
        goal_indices.append(goal_idx)
        goal_set_time = world.time
        cooldown_until = world.time + GOAL_COOLDOWN
        goal_counted = False
        if hasattr(policy, "on_goal"):
            policy.on_goal(world, goal_idx)

        n_ticks = int(round(max_t / cfg.control_dt))
        for _ in range(n_ticks):
            a_rad = policy.act(world, history, obs)
            prev_obs = obs
            kps = np.asarray(world.keypoints(), dtype=np.float32)
            feats = history.features()
            obs = world.step(a_rad)
            achieved = goal_achieved(world, goal, weights, thresholds)
            a_norm = targets_to_action(cfg, a_rad).astype(np.float32)
            r, terms = reward(
                world, goal, a_norm, world.last_torque, coeffs,
                metric_weights=weights, thresholds=thresholds, achieved=achieved,
            )
            history.push(obs)
            kp_series.append(kps)
            transitions.append(
                Transition(
                    obs=feats,
                    action=a_norm,
                    next_obs=history.features(),
                    keypoints=kps,
                    future_keypoints=None,
                    mode=mode,
                    reward=r,
                    reward_terms=terms,
                    achieved=achieved,
                    dropped=world.dropped_flag,
                    contact_count=obs.contact_count,
                    time=world.time,
                )
            )
            if world.dropped_flag:
                outcome = "dropped"
                break
            if achieved:
                if not goal_counted:
                    goals_achieved += 1
                    goal_counted = True
                if world.time < cooldown_until:
                    continue
                anchor = goal_idx if hasattr(policy, "on_goal") else None
                goal_idx, goal = _pick_goal(
                    cache, world, goal_band, m_downsample, rng, restrict, precision, anchor
                )
                goal_indices.append(goal_idx)
                goal_set_time = world.time
                cooldown_until = world.time + GOAL_COOLDOWN
                goal_counted = False
                if hasattr(policy, "on_goal"):
                    policy.on_goal(world, goal_idx)
            elif world.time - goal_set_time > goal_timeout:
                if hasattr(policy, "reanchor"):
                    policy.reanchor(world, restrict)
                anchor = getattr(policy, "anchor", None)
                goal_idx, goal = _pick_goal(
                    cache, world, goal_band, m_downsample, rng, restrict, precision, anchor
                )
                goal_indices.append(goal_idx)
                goal_set_time = world.time
                goal_counted = False
                if hasattr(policy, "on_goal"):
                    policy.on_goal(world, goal_idx)
    except SimulationDiverged:
        outcome = "dropped"

    if outcome == "timeout" and goals_achieved > 0:
        outcome = "completed"

    # final post-step keypoints close the series for future windows
    kp_series.append(np.asarray(world.keypoints(), dtype=np.float32))
    for t, tr in enumerate(transitions):
        if t + HORIZON < len(kp_series):
            tr.future_keypoints = np.stack(kp_series[t + 1 : t + 1 + HORIZON])

    return Episode(
        transitions=transitions,
        outcome=outcome,
        seed=world.seed,
        goal_indices=goal_indices,
        goals_achieved=goals_achieved,
        mode=mode,
    )
