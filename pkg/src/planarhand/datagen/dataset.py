"""Training-set assembly: stratified episode collection, failure filtering,
normalization statistics, and the packed dataset file.

File layout: one JSON header line, then fixed-stride little-endian float32
records. The header documents the exact field order and offsets, carries
per-stratum counts, and the normalization statistics computed from the
stored training records.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..controller.nets import MODES
from ..sim2d.config import DomainRandomization, SimConfig
from ..sim2d.geometry import BUILTIN_SHAPES
from ..sim2d.world import create_world
from ..graspgen.cache import GraspCache
from .episodes import Episode, ExpertPolicy, collect_episode
from .expert import ExpertParams, SLOW_RATE
from .rewards import AchievementThresholds, RewardCoeffs

DATASET_VERSION = 1
DROP_CUT_SECONDS = 2.0


class DatasetError(RuntimeError):
    pass


@dataclass
class Stratum:
    object_id: str
    gravity_angle: float = 0.0
    style: str = "fast"            # fast | slow (expert rate limit)
    mode: str = "default"          # mode label recorded on transitions
    episodes: int = 10
    max_t: float = 60.0

    def to_json(self):
        return {
            "object_id": self.object_id,
            "gravity_angle": self.gravity_angle,
            "style": self.style,
            "mode": self.mode,
            "episodes": self.episodes,
            "max_t": self.max_t,
        }

    @classmethod
    def from_json(cls, doc):
        return cls(**doc)


@dataclass
class DatasetManifest:
    strata: list
    seed: int = 0
    eval_every: int = 10           # every n-th episode goes to the eval split

    def to_json(self):
        return {
            "strata": [s.to_json() for s in self.strata],
            "seed": self.seed,
            "eval_every": self.eval_every,
        }


def filter_dataset(episodes) -> list:
    """Drop every transition within 2 s of the end of a dropped episode."""
    out = []
    for ep in episodes:
        if ep.outcome == "dropped" and ep.transitions:
            end = ep.transitions[-1].time
            kept = [t for t in ep.transitions if t.time <= end - DROP_CUT_SECONDS]
        else:
            kept = list(ep.transitions)
        out.extend(kept)
    return out


# record field layout (start, length) built from the sim dims
def record_fields(obs_dim: int, act_dim: int, dx_dim: int):
    fields = [
        ("obs", obs_dim),
        ("action", act_dim),
        ("dx", dx_dim),
        ("mode", len(MODES)),
        ("stratum", 1),
        ("episode_seed", 1),
        ("step", 1),
        ("secs_to_end", 1),
        ("episode_dropped", 1),
        ("contacts", 1),
        ("reward", 1),
    ]
    offs = {}
    pos = 0
    for name, n in fields:
        offs[name] = (pos, n)
        pos += n
    return offs, pos


def _episode_records(ep: Episode, stratum_id: int, stride_fields, stride: int):
    """Pack one (already filtered) episode's usable transitions."""
    if ep.outcome == "dropped" and ep.transitions:
        end = ep.transitions[-1].time
        usable = [t for t in ep.transitions if t.time <= end - DROP_CUT_SECONDS]
    else:
        usable = ep.transitions
    rows = []
    ep_end = ep.transitions[-1].time if ep.transitions else 0.0
    for step, tr in enumerate(usable):
        dx = tr.delta_x()
        if dx is None:
            continue
        row = np.zeros(stride, dtype=np.float32)
        o, n = stride_fields["obs"]
        row[o : o + n] = tr.obs
        o, n = stride_fields["action"]
        row[o : o + n] = tr.action
        o, n = stride_fields["dx"]
        row[o : o + n] = dx.reshape(-1)
        o, n = stride_fields["mode"]
        row[o + MODES.index(tr.mode)] = 1.0
        row[stride_fields["stratum"][0]] = stratum_id
        row[stride_fields["episode_seed"][0]] = ep.seed
        row[stride_fields["step"][0]] = step
        row[stride_fields["secs_to_end"][0]] = ep_end - tr.time
        row[stride_fields["episode_dropped"][0]] = 1.0 if ep.outcome == "dropped" else 0.0
        row[stride_fields["contacts"][0]] = tr.contact_count
        row[stride_fields["reward"][0]] = tr.reward
        rows.append(row)
    return rows


def expert_params_for(style: str) -> ExpertParams:
    if style == "slow":
        return ExpertParams(rate=SLOW_RATE)
    return ExpertParams()


def build_dataset(
    manifest: DatasetManifest,
    out_path,
    eval_path=None,
    cfg: SimConfig | None = None,
    dr: DomainRandomization | None = None,
    caches: dict | None = None,
    coeffs: RewardCoeffs | None = None,
    thresholds: AchievementThresholds | None = None,
    config_hash: str = "",
    progress=None,
):
    """Collect, filter, shuffle, and write train (and optional eval) files.

    Returns the header dict of the training file. Deterministic for a given
    manifest and seed.
    """
    caches = caches or {}
    for st in manifest.strata:
        if st.object_id not in caches:
            raise DatasetError(f"missing grasp cache for object {st.object_id!r}")

    base_cfg = cfg or SimConfig()
    dr = dr or DomainRandomization()
    master = np.random.Generator(np.random.PCG64(manifest.seed))

    train_eps = []   # (stratum_id, Episode)
    eval_eps = []
    stats = []
    for sid, st in enumerate(manifest.strata):
        cache = caches[st.object_id]
        st_cfg = SimConfig.from_json(
            {**base_cfg.to_json(), "object_shape": cache.shape.to_json()}
        )
        st_dr = DomainRandomization.from_json(
            {**dr.to_json(), "gravity_angle_range": (st.gravity_angle, st.gravity_angle)}
        )
        params = expert_params_for(st.style)
        n_train = n_eval = 0
        outcomes = {"completed": 0, "dropped": 0, "timeout": 0}
        goals = 0
        for k in range(st.episodes):
            seed = int(master.integers(1, 2**23))
            world = create_world(st_cfg, st_dr, seed)
            policy = ExpertPolicy(st_cfg, cache, params)
            ep = collect_episode(
                policy,
                world,
                cache,
                max_t=st.max_t,
                rng=np.random.default_rng(seed),
                mode=st.mode,
                coeffs=coeffs,
                thresholds=thresholds,
                precision=(st.mode == "precision"),
            )
            outcomes[ep.outcome] += 1
            goals += ep.goals_achieved
            if manifest.eval_every > 0 and (k % manifest.eval_every) == manifest.eval_every - 1:
                eval_eps.append((sid, ep, seed))
                n_eval += 1
            else:
                train_eps.append((sid, ep, seed))
                n_train += 1
            if progress:
                progress(st, k, ep)
        stats.append(
            {
                **st.to_json(),
                "train_episodes": n_train,
                "eval_episodes": n_eval,
                "outcomes": outcomes,
                "goals": goals,
            }
        )

    probe_cfg = base_cfg
    obs_dim = 4 * (2 * 2 * probe_cfg.n_fingers + 3 * probe_cfg.dof)
    act_dim = probe_cfg.dof
    dx_dim = 2 * (2 * probe_cfg.n_fingers) * 2  # T * K * 2
    fields, stride = record_fields(obs_dim, act_dim, dx_dim)

    def pack(eps):
        rows = []
        for sid, ep, _ in eps:
            rows.extend(_episode_records(ep, sid, fields, stride))
        return rows

    train_rows = pack(train_eps)
    eval_rows = pack(eval_eps)
    if not train_rows:
        raise DatasetError("no usable transitions collected")
    order = master.permutation(len(train_rows))
    train_arr = np.stack([train_rows[i] for i in order])
    o, n = fields["obs"]
    obs_mean = train_arr[:, o : o + n].mean(axis=0)
    obs_std = np.maximum(train_arr[:, o : o + n].std(axis=0), 1e-4)
    o, n = fields["dx"]
    dx_mean = train_arr[:, o : o + n].mean(axis=0)
    dx_std = np.maximum(train_arr[:, o : o + n].std(axis=0), 1e-5)

    header = {
        "version": DATASET_VERSION,
        "config_hash": config_hash,
        "seed": manifest.seed,
        "stride": stride,
        "fields": {k: list(v) for k, v in fields.items()},
        "dims": {"obs": obs_dim, "action": act_dim, "dx": dx_dim, "modes": len(MODES)},
        "count": len(train_arr),
        "strata": stats,
        "normalization": {
            "obs_mean": obs_mean.tolist(),
            "obs_std": obs_std.tolist(),
            "dx_mean": dx_mean.tolist(),
            "dx_std": dx_std.tolist(),
        },
        "sim": base_cfg.to_json(),
        "dr": dr.to_json(),
        "manifest": manifest.to_json(),
    }
    _write(out_path, header, train_arr)
    if eval_path is not None:
        eval_arr = (
            np.stack(eval_rows) if eval_rows else np.zeros((0, stride), dtype=np.float32)
        )
        eval_header = dict(header)
        eval_header["count"] = len(eval_arr)
        eval_header["split"] = "eval"
        _write(eval_path, eval_header, eval_arr)
    return header


def _write(path, header, arr):
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_dataset(path):
    """(header, records array) from a packed dataset file."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        payload = fh.read()
    stride = header["stride"]
    arr = np.frombuffer(payload, dtype="<f4").reshape(-1, stride).copy()
    if len(arr) != header["count"]:
        raise DatasetError(f"{path}: record count mismatch")
    return header, arr


def dataset_columns(header, arr, name):
    o, n = header["fields"][name]
    return arr[:, o : o + n]


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()
