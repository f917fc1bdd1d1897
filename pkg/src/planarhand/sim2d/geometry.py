"""Planar convex shapes (disk / convex polygon) and the distance queries the
contact solver and grasp sampler need.

Shapes live in their own body frame with the centroid at the origin. All
queries are analytic; there is no mesh discretization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


def _wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


@dataclass(frozen=True)
class Disk:
    radius: float

    @property
    def kind(self) -> str:
        return "disk"

    # continuous rotational symmetry: orientation carries no information
    @property
    def symmetry_order(self) -> int:
        return 0

    def scaled(self, s: float) -> "Disk":
        return Disk(self.radius * s)

    def perimeter(self) -> float:
        return 2.0 * math.pi * self.radius

    def bounding_radius(self) -> float:
        return self.radius

    def area(self) -> float:
        return math.pi * self.radius**2

    def unit_inertia(self) -> float:
        """Moment of inertia per unit mass about the centroid."""
        return 0.5 * self.radius**2

    def signed_distance(self, px: float, py: float) -> float:
        return math.hypot(px, py) - self.radius

    def closest_boundary_point(self, px: float, py: float):
        """Closest boundary point and outward unit normal for a body-frame point.

        Degenerate center query falls back to the +x boundary point.
        """
        d = math.hypot(px, py)
        if d < 1e-12:
            return (self.radius, 0.0), (1.0, 0.0)
        nx, ny = px / d, py / d
        return (nx * self.radius, ny * self.radius), (nx, ny)

    def boundary_point_at(self, s: float):
        """Point and outward normal at arclength s from angle 0, CCW."""
        a = s / self.radius
        c, sn = math.cos(a), math.sin(a)
        return (self.radius * c, self.radius * sn), (c, sn)

    def to_json(self) -> dict:
        return {"kind": "disk", "radius": self.radius}


@dataclass(frozen=True)
class ConvexPolygon:
    """Convex polygon, vertices CCW, centroid at the origin.

    symmetry_order is the object's rotational symmetry (n-fold); pose
    orientation is compared modulo 2*pi/order. 1 means no symmetry.
    """

    vertices: tuple
    symmetry_order: int = 1

    @property
    def kind(self) -> str:
        return "polygon"

    def __post_init__(self):
        if len(self.vertices) < 3:
            raise ValueError("polygon needs at least 3 vertices")
        if self.symmetry_order < 1:
            raise ValueError("polygon symmetry order must be >= 1")

    def scaled(self, s: float) -> "ConvexPolygon":
        return ConvexPolygon(
            tuple((x * s, y * s) for x, y in self.vertices), self.symmetry_order
        )

    def edges(self):
        v = self.vertices
        n = len(v)
        for i in range(n):
            yield v[i], v[(i + 1) % n]

    def perimeter(self) -> float:
        return sum(math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in self.edges())

    def bounding_radius(self) -> float:
        return max(math.hypot(x, y) for x, y in self.vertices)

    def area(self) -> float:
        a = 0.0
        for (x0, y0), (x1, y1) in self.edges():
            a += x0 * y1 - x1 * y0
        return 0.5 * a

    def unit_inertia(self) -> float:
        num = 0.0
        den = 0.0
        for (x0, y0), (x1, y1) in self.edges():
            cross = x0 * y1 - x1 * y0
            num += cross * (x0 * x0 + x0 * x1 + x1 * x1 + y0 * y0 + y0 * y1 + y1 * y1)
            den += cross
        return num / (6.0 * den)

    def contains(self, px: float, py: float) -> bool:
        for (x0, y0), (x1, y1) in self.edges():
            if (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0) < 0.0:
                return False
        return True

    def signed_distance(self, px: float, py: float) -> float:
        (_, _), (_, _), d = self._closest(px, py)
        return d

    def closest_boundary_point(self, px: float, py: float):
        (cx, cy), (nx, ny), _ = self._closest(px, py)
        return (cx, cy), (nx, ny)

    def _closest(self, px: float, py: float):
        """Closest boundary point, outward normal, signed distance (<0 inside)."""
        best_d2 = float("inf")
        best_pt = (0.0, 0.0)
        best_edge_n = (1.0, 0.0)
        inside = True
        max_plane = -float("inf")
        plane_n = (1.0, 0.0)
        plane_pt = (0.0, 0.0)
        for (x0, y0), (x1, y1) in self.edges():
            ex, ey = x1 - x0, y1 - y0
            el2 = ex * ex + ey * ey
            t = ((px - x0) * ex + (py - y0) * ey) / el2
            t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
            cx, cy = x0 + t * ex, y0 + t * ey
            d2 = (px - cx) ** 2 + (py - cy) ** 2
            # outward edge normal (CCW winding)
            el = math.sqrt(el2)
            onx, ony = ey / el, -ex / el
            side = (px - x0) * onx + (py - y0) * ony
            if side > 0.0:
                inside = False
            if side > max_plane:
                max_plane = side
                plane_n = (onx, ony)
                plane_pt = (cx, cy)
            if d2 < best_d2:
                best_d2 = d2
                best_pt = (cx, cy)
                best_edge_n = (onx, ony)
        if inside:
            # nearest-plane normal; perpendicular foot is on that edge segment
            return plane_pt, plane_n, max_plane
        dn = math.sqrt(best_d2)
        if dn > 1e-12:
            best_n = ((px - best_pt[0]) / dn, (py - best_pt[1]) / dn)
        else:
            best_n = best_edge_n
        return best_pt, best_n, dn

    def boundary_point_at(self, s: float):
        """Point and outward normal at arclength s along the boundary, CCW."""
        s = math.fmod(s, self.perimeter())
        if s < 0.0:
            s += self.perimeter()
        for (x0, y0), (x1, y1) in self.edges():
            el = math.hypot(x1 - x0, y1 - y0)
            if s <= el:
                t = s / el
                nx, ny = (y1 - y0) / el, -(x1 - x0) / el
                return (x0 + t * (x1 - x0), y0 + t * (y1 - y0)), (nx, ny)
            s -= el
        (x0, y0), (x1, y1) = list(self.edges())[-1]
        el = math.hypot(x1 - x0, y1 - y0)
        return (x1, y1), ((y1 - y0) / el, -(x1 - x0) / el)

    def to_json(self) -> dict:
        return {
            "kind": "polygon",
            "vertices": [[x, y] for x, y in self.vertices],
            "symmetry_order": self.symmetry_order,
        }


Shape = Disk | ConvexPolygon


def shape_from_json(doc: dict) -> Shape:
    kind = doc.get("kind")
    if kind == "disk":
        return Disk(float(doc["radius"]))
    if kind == "polygon":
        return ConvexPolygon(
            tuple((float(x), float(y)) for x, y in doc["vertices"]),
            int(doc.get("symmetry_order", 1)),
        )
    raise ValueError(f"unknown shape kind: {kind!r}")


def regular_polygon(n: int, circumradius: float, phase: float = 0.0) -> ConvexPolygon:
    verts = []
    for i in range(n):
        a = phase + 2.0 * math.pi * i / n
        verts.append((circumradius * math.cos(a), circumradius * math.sin(a)))
    # re-center on the centroid so unit_inertia is about the mass center
    cx = sum(x for x, _ in verts) / n
    cy = sum(y for _, y in verts) / n
    return ConvexPolygon(tuple((x - cx, y - cy) for x, y in verts), symmetry_order=n)


def square(side: float) -> ConvexPolygon:
    h = side / 2.0
    return ConvexPolygon(((h, -h), (h, h), (-h, h), (-h, -h)), symmetry_order=4)


def symmetric_angle_diff(dtheta: float, order: int) -> float:
    """Signed orientation difference modulo the object's symmetry group.

    order 0 (continuous symmetry) always compares equal; order n folds the
    difference into (-pi/n, pi/n].
    """
    if order == 0:
        return 0.0
    period = 2.0 * math.pi / order
    d = math.fmod(dtheta, period)
    if d <= -period / 2.0:
        d += period
    elif d > period / 2.0:
        d -= period
    return d


BUILTIN_SHAPES = {
    "disk": Disk(0.035),
    "square": square(0.06),
    "hex": regular_polygon(6, 0.036),
    "tri": regular_polygon(3, 0.042, phase=math.pi / 2),
}
