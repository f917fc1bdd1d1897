"""Contact point sampling on object boundaries."""

from __future__ import annotations


CONTACT_ARITIES = (2, 3, 4)


def draw_arity(rng) -> int:
    """Number of contact points for one grasp attempt, uniform over 2/3/4."""
    return int(rng.choice(CONTACT_ARITIES))


def sample_surface(shape, n_points: int, rng):
    """n_points (point, inward unit normal) pairs, uniform over boundary length.

    Points and normals are in the object frame; normals point into the
    object (the direction a finger pushes).
    """
    if n_points not in CONTACT_ARITIES:
        raise ValueError(f"n_points must be one of {CONTACT_ARITIES}")
    perimeter = shape.perimeter()
    if perimeter <= 0:
        raise ValueError("shape has zero perimeter")
    out = []
    for _ in range(n_points):
        s = float(rng.uniform(0.0, perimeter))
        (px, py), (ox, oy) = shape.boundary_point_at(s)
        out.append(((px, py), (-ox, -oy)))
    return out
