"""Force-only grasp stability test.

A contact set is stable when some non-negative combination of pushes along
the inward contact normals (with at least one force pinned to 1 so the
trivial all-zero solution is excluded) produces a near-zero net force. The
pinned-force constraint is handled by solving one small non-negative
least-squares subproblem per contact.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import nnls


def _check_normals(normals):
    arr = np.asarray(normals, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("normals must be an (m, 2) array")
    m = arr.shape[0]
    if not 2 <= m <= 4:
        raise ValueError(f"need 2..4 contact normals, got {m}")
    norms = np.hypot(arr[:, 0], arr[:, 1])
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise ValueError("contact normals must be unit vectors")
    return arr


def net_force_min(normals) -> float:
    """min over j of  min_{f>=0, f_j=1} || sum_i f_i n_i ||."""
    arr = _check_normals(normals)
    m = arr.shape[0]
    best = math.inf
    for j in range(m):
        others = np.delete(arr, j, axis=0)
        # minimize || others^T f + n_j ||  ->  nnls(A, b) with b = -n_j
        _, resid = nnls(others.T, -arr[j])
        best = min(best, resid)
    return float(best)


def grasp_analysis(points, normals, f_thresh: float) -> bool:
    """True iff the minimal net force is strictly below the threshold."""
    return net_force_min(normals) < f_thresh
