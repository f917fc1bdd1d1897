"""Model bundle directory: weights, normalization, schedule, config, and a
manifest whose hashes gate loading."""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np

from ..sim2d.config import SimConfig
from ..neuralcore import load_module, save_module
from .diffusion import Normalizer
from .nets import InverseDynamics, MotionDenoiser
from .pipeline import Controller, ControllerConfig
from .schedule import NoiseSchedule

BUNDLE_VERSION = 1


class BundleError(RuntimeError):
    pass


def _file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def save_bundle(
    dirpath,
    sim_cfg: SimConfig,
    denoiser: MotionDenoiser,
    invdyn: InverseDynamics,
    schedule: NoiseSchedule,
    obs_norm: Normalizer,
    dx_norm: Normalizer,
    ctrl_cfg: ControllerConfig,
    meta: dict | None = None,
) -> str:
    os.makedirs(dirpath, exist_ok=True)
    files = {}
    save_module(os.path.join(dirpath, "denoiser.bin"), denoiser)
    save_module(
        os.path.join(dirpath, "invdyn.bin"),
        invdyn,
        extra={
            "std": invdyn.std.tolist(),
            "obs_dim": invdyn.obs_dim,
            "dx_dim": invdyn.dx_dim,
            "act_dim": invdyn.act_dim,
            "width": invdyn.inp.weight.data.shape[1],
        },
    )
    with open(os.path.join(dirpath, "normalization.json"), "w") as fh:
        json.dump(
            {"obs": obs_norm.to_json(), "dx": dx_norm.to_json()},
            fh,
            sort_keys=True,
        )
    with open(os.path.join(dirpath, "schedule.json"), "w") as fh:
        json.dump(schedule.to_json(), fh, sort_keys=True)
    with open(os.path.join(dirpath, "config.json"), "w") as fh:
        json.dump(
            {
                "controller": ctrl_cfg.to_json(),
                "sim": sim_cfg.to_json(),
                "denoiser_width": denoiser.width,
                "x_dim": denoiser.x_dim,
                "obs_dim": denoiser.obs_dim,
                "meta": meta or {},
            },
            fh,
            sort_keys=True,
        )
    for name in ("denoiser.bin", "invdyn.bin", "normalization.json", "schedule.json", "config.json"):
        files[name] = _file_hash(os.path.join(dirpath, name))
    manifest = {"version": BUNDLE_VERSION, "files": files}
    with open(os.path.join(dirpath, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, sort_keys=True)
    return _file_hash(os.path.join(dirpath, "manifest.json"))


def load_bundle(dirpath, rng=None) -> Controller:
    """Rebuild a Controller; any hash mismatch refuses to load."""
    manifest_path = os.path.join(dirpath, "manifest.json")
    if not os.path.exists(manifest_path):
        raise BundleError(f"{dirpath}: no manifest.json (not a model bundle)")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("version") != BUNDLE_VERSION:
        raise BundleError(f"{dirpath}: unsupported bundle version")
    for name, want in manifest["files"].items():
        got = _file_hash(os.path.join(dirpath, name))
        if got != want:
            raise BundleError(f"{dirpath}/{name}: hash mismatch, refusing to load")

    with open(os.path.join(dirpath, "config.json")) as fh:
        cfgdoc = json.load(fh)
    sim_cfg = SimConfig.from_json(cfgdoc["sim"])
    ctrl_cfg = ControllerConfig.from_json(cfgdoc["controller"])
    with open(os.path.join(dirpath, "schedule.json")) as fh:
        schedule = NoiseSchedule.from_json(json.load(fh))
    with open(os.path.join(dirpath, "normalization.json")) as fh:
        norms = json.load(fh)
    obs_norm = Normalizer.from_json(norms["obs"])
    dx_norm = Normalizer.from_json(norms["dx"])

    rng = rng or np.random.default_rng(0)
    denoiser = MotionDenoiser(
        x_dim=cfgdoc["x_dim"], obs_dim=cfgdoc["obs_dim"], rng=rng, width=cfgdoc["denoiser_width"]
    )
    load_module(os.path.join(dirpath, "denoiser.bin"), denoiser)
    denoiser.trained = True
    import_extra = None
    from ..neuralcore.serialize import load_weights

    _, import_extra = load_weights(os.path.join(dirpath, "invdyn.bin"))
    invdyn = InverseDynamics(
        obs_dim=import_extra["obs_dim"],
        dx_dim=import_extra["dx_dim"],
        act_dim=import_extra["act_dim"],
        rng=rng,
        width=import_extra["width"],
    )
    load_module(os.path.join(dirpath, "invdyn.bin"), invdyn)
    invdyn.std = np.asarray(import_extra["std"], dtype=np.float32)
    return Controller(sim_cfg, denoiser, invdyn, schedule, obs_norm, dx_norm, ctrl_cfg)
