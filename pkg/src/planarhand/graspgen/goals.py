"""Goal proposal over a grasp cache: downsample, band-filter, draw."""

from __future__ import annotations

import numpy as np

from .cache import Grasp, GraspCache


def next_goal(
    cache: GraspCache,
    current: Grasp,
    band: tuple,
    m_downsample: int,
    rng,
    restrict=None,
) -> tuple[int, Grasp]:
    """Pick the next goal grasp near the current one.

    Uniformly downsamples the cache to m_downsample candidates, keeps those
    whose grasp distance from `current` lies in [d_min, d_max], and returns
    one uniformly. If the band is empty, falls back to the nearest sampled
    grasp farther than d_min. `restrict` optionally limits candidates to a
    subset of cache indices (datagen uses this to stay inside one RRT tree).

    Returns (cache index, grasp).
    """
    if len(cache) == 0:
        raise ValueError("next_goal: empty grasp cache")
    d_min, d_max = band
    if restrict is None:
        pool = np.arange(len(cache))
    else:
        pool = np.asarray(sorted(restrict), dtype=int)
        if pool.size == 0:
            raise ValueError("next_goal: empty restriction set")
    m = min(m_downsample, pool.size)
    picked = pool[rng.choice(pool.size, size=m, replace=False)]
    dists = cache.distances_from(current, indices=picked)
    in_band = picked[(dists >= d_min) & (dists <= d_max) & (dists > 1e-12)]
    if in_band.size > 0:
        idx = int(in_band[int(rng.integers(0, in_band.size))])
        return idx, cache.grasps[idx]
    beyond = dists > max(d_min, 1e-12)
    if not np.any(beyond):
        raise ValueError("next_goal: no candidate farther than d_min")
    sub = np.flatnonzero(beyond)
    best = sub[np.argmin(dists[sub])]
    idx = int(picked[best])
    return idx, cache.grasps[idx]
