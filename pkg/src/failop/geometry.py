"""Planar geometry helpers shared by the simulator, perception paths and monitors.

All polygons are lists of (x, y) float tuples, counter-clockwise, without a
repeated closing vertex. Everything here is pure and allocation-light; the
per-tick hot loops (ray casting, clustering) live in failop.kernels instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

Point = tuple[float, float]
Polygon = list[Point]

_EPS = 1e-12


def polygon_signed_area(poly: Sequence[Point]) -> float:
    """Shoelace area; positive for counter-clockwise winding."""
    acc = 0.0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return 0.5 * acc


def polygon_area(poly: Sequence[Point]) -> float:
    return abs(polygon_signed_area(poly))


def polygon_centroid(poly: Sequence[Point]) -> Point:
    a = polygon_signed_area(poly)
    if abs(a) < _EPS:
        xs = [p[0] for p in poly]
        ys = [p[1] for p in poly]
        return (sum(xs) / len(poly), sum(ys) / len(poly))
    cx = cy = 0.0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        cross = x0 * y1 - x1 * y0
        cx += (x0 + x1) * cross
        cy += (y0 + y1) * cross
    return (cx / (6.0 * a), cy / (6.0 * a))


def ensure_ccw(poly: Sequence[Point]) -> Polygon:
    pts = [(float(x), float(y)) for x, y in poly]
    if polygon_signed_area(pts) < 0.0:
        pts.reverse()
    return pts


def is_convex(poly: Sequence[Point], tol: float = 1e-9) -> bool:
    """True when every turn along the (CCW) boundary is non-clockwise."""
    n = len(poly)
    if n < 3:
        return False
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        cx, cy = poly[(i + 2) % n]
        cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if cross < -tol:
            return False
    return True


def convex_hull(points: Iterable[Point]) -> Polygon:
    """Andrew's monotone chain; returns the hull CCW. Collinear inputs give
    a degenerate 1- or 2-point "hull"."""
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) <= 2:
        return list(pts)

    def half(seq: list[Point]) -> list[Point]:
        out: list[Point] = []
        for p in seq:
            while len(out) >= 2:
                ox, oy = out[-2]
                ax, ay = out[-1]
                if (ax - ox) * (p[1] - oy) - (ay - oy) * (p[0] - ox) <= 0.0:
                    out.pop()
                else:
                    break
            out.append(p)
        return out

    lower = half(pts)
    upper = half(list(reversed(pts)))
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:  # all collinear
        return [pts[0], pts[-1]]
    return hull


def point_in_polygon(pt: Point, poly: Sequence[Point], edge_tol: float = 1e-9) -> bool:
    """Ray-crossing containment; points within edge_tol of the boundary count
    as inside (containment tests between nested zone polygons rely on it)."""
    x, y = pt
    n = len(poly)
    inside = False
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        if _point_near_segment(x, y, x0, y0, x1, y1, edge_tol):
            return True
        if (y0 > y) != (y1 > y):
            t = (y - y0) / (y1 - y0)
            if x < x0 + t * (x1 - x0):
                inside = not inside
    return inside


def _point_near_segment(px: float, py: float, x0: float, y0: float,
                        x1: float, y1: float, tol: float) -> bool:
    dx, dy = x1 - x0, y1 - y0
    L2 = dx * dx + dy * dy
    if L2 < _EPS:
        return (px - x0) ** 2 + (py - y0) ** 2 <= tol * tol
    t = ((px - x0) * dx + (py - y0) * dy) / L2
    t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
    qx, qy = x0 + t * dx, y0 + t * dy
    return (px - qx) ** 2 + (py - qy) ** 2 <= tol * tol


def segments_intersect(p0: Point, p1: Point, q0: Point, q1: Point) -> bool:
    def orient(a: Point, b: Point, c: Point) -> float:
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q0, q1, p0)
    d2 = orient(q0, q1, p1)
    d3 = orient(p0, p1, q0)
    d4 = orient(p0, p1, q1)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True

    def on_seg(a: Point, b: Point, c: Point) -> bool:
        return (min(a[0], b[0]) - _EPS <= c[0] <= max(a[0], b[0]) + _EPS
                and min(a[1], b[1]) - _EPS <= c[1] <= max(a[1], b[1]) + _EPS)

    if abs(d1) < _EPS and on_seg(q0, q1, p0):
        return True
    if abs(d2) < _EPS and on_seg(q0, q1, p1):
        return True
    if abs(d3) < _EPS and on_seg(p0, p1, q0):
        return True
    if abs(d4) < _EPS and on_seg(p0, p1, q1):
        return True
    return False


def polygons_intersect(a: Sequence[Point], b: Sequence[Point]) -> bool:
    """True when the two simple polygons share any point (boundary included).
    Quadratic in edge counts with a bbox precheck; fine at monitor scale."""
    ax0 = min(p[0] for p in a); ax1 = max(p[0] for p in a)
    ay0 = min(p[1] for p in a); ay1 = max(p[1] for p in a)
    bx0 = min(p[0] for p in b); bx1 = max(p[0] for p in b)
    by0 = min(p[1] for p in b); by1 = max(p[1] for p in b)
    if ax1 < bx0 or bx1 < ax0 or ay1 < by0 or by1 < ay0:
        return False
    if point_in_polygon(a[0], b) or point_in_polygon(b[0], a):
        return True
    na, nb = len(a), len(b)
    for i in range(na):
        p0, p1 = a[i], a[(i + 1) % na]
        for j in range(nb):
            if segments_intersect(p0, p1, b[j], b[(j + 1) % nb]):
                return True
    return False


def clip_polygon_to_rect(poly: Sequence[Point], xmin: float, ymin: float,
                         xmax: float, ymax: float) -> Polygon:
    """Sutherland–Hodgman clip of a convex polygon against an axis-aligned
    rectangle. Returns [] when nothing remains."""
    def clip_edge(pts: list[Point], inside, intersect) -> list[Point]:
        out: list[Point] = []
        n = len(pts)
        for i in range(n):
            cur, nxt = pts[i], pts[(i + 1) % n]
            cin, nin = inside(cur), inside(nxt)
            if cin:
                out.append(cur)
                if not nin:
                    out.append(intersect(cur, nxt))
            elif nin:
                out.append(intersect(cur, nxt))
        return out

    def ix_at_x(x: float):
        def f(a: Point, b: Point) -> Point:
            t = (x - a[0]) / (b[0] - a[0])
            return (x, a[1] + t * (b[1] - a[1]))
        return f

    def ix_at_y(y: float):
        def f(a: Point, b: Point) -> Point:
            t = (y - a[1]) / (b[1] - a[1])
            return (a[0] + t * (b[0] - a[0]), y)
        return f

    pts = list(poly)
    for inside, intersect in (
        (lambda p: p[0] >= xmin, ix_at_x(xmin)),
        (lambda p: p[0] <= xmax, ix_at_x(xmax)),
        (lambda p: p[1] >= ymin, ix_at_y(ymin)),
        (lambda p: p[1] <= ymax, ix_at_y(ymax)),
    ):
        if not pts:
            return []
        pts = clip_edge(pts, inside, intersect)
    return pts


@dataclass(frozen=True)
class ObbFit:
    """Minimum-area oriented rectangle of a point set."""

    center: Point
    length: float   # extent along `heading`, >= width
    width: float
    heading: float  # radians in [-pi/2, pi/2)
    area: float

    def corners(self) -> Polygon:
        c, s = math.cos(self.heading), math.sin(self.heading)
        hl, hw = 0.5 * self.length, 0.5 * self.width
        cx, cy = self.center
        return ensure_ccw([
            (cx + c * hl - s * hw, cy + s * hl + c * hw),
            (cx - c * hl - s * hw, cy - s * hl + c * hw),
            (cx - c * hl + s * hw, cy - s * hl - c * hw),
            (cx + c * hl + s * hw, cy + s * hl - c * hw),
        ])


def normalize_box_heading(angle: float) -> float:
    """Rectangles are symmetric under pi rotation: fold into [-pi/2, pi/2)."""
    a = math.fmod(angle, math.pi)
    if a < -0.5 * math.pi:
        a += math.pi
    elif a >= 0.5 * math.pi:
        a -= math.pi
    return a


def min_area_rect(points: Sequence[Point]) -> ObbFit:
    """Rotating calipers over the convex hull. The optimal rectangle has one
    side collinear with a hull edge, so scanning edge directions is exact."""
    hull = convex_hull(points)
    if len(hull) == 1:
        x, y = hull[0]
        return ObbFit((x, y), 0.0, 0.0, 0.0, 0.0)
    if len(hull) == 2:
        (x0, y0), (x1, y1) = hull
        dx, dy = x1 - x0, y1 - y0
        length = math.sqrt(dx * dx + dy * dy)
        heading = normalize_box_heading(math.atan2(dy, dx))
        return ObbFit(((x0 + x1) / 2.0, (y0 + y1) / 2.0), length, 0.0, heading, 0.0)

    best = None
    n = len(hull)
    for i in range(n):
        x0, y0 = hull[i]
        x1, y1 = hull[(i + 1) % n]
        ex, ey = x1 - x0, y1 - y0
        elen = math.sqrt(ex * ex + ey * ey)
        if elen < _EPS:
            continue
        ux, uy = ex / elen, ey / elen          # edge direction
        lo_u = hi_u = hull[0][0] * ux + hull[0][1] * uy
        lo_v = hi_v = -hull[0][0] * uy + hull[0][1] * ux
        for (px, py) in hull[1:]:
            u = px * ux + py * uy
            v = -px * uy + py * ux
            if u < lo_u: lo_u = u
            if u > hi_u: hi_u = u
            if v < lo_v: lo_v = v
            if v > hi_v: hi_v = v
        du, dv = hi_u - lo_u, hi_v - lo_v
        area = du * dv
        if best is None or area < best[0]:
            best = (area, ux, uy, lo_u, hi_u, lo_v, hi_v)

    area, ux, uy, lo_u, hi_u, lo_v, hi_v = best
    cu, cv = 0.5 * (lo_u + hi_u), 0.5 * (lo_v + hi_v)
    # back to world coordinates: p = u*(ux,uy) + v*(-uy,ux)
    cx = cu * ux - cv * uy
    cy = cu * uy + cv * ux
    du, dv = hi_u - lo_u, hi_v - lo_v
    if du >= dv:
        length, width = du, dv
        heading = normalize_box_heading(math.atan2(uy, ux))
    else:
        length, width = dv, du
        heading = normalize_box_heading(math.atan2(ux, -uy))
    return ObbFit((cx, cy), length, width, heading, area)


def min_enclosing_circle(points: Sequence[Point]) -> tuple[Point, float]:
    """Smallest enclosing circle, incremental construction in deterministic
    input order (the minimal circle is unique, so order only affects cost;
    cluster sizes here keep the worst case irrelevant)."""
    pts = [(float(x), float(y)) for x, y in points]
    if not pts:
        raise ValueError("min_enclosing_circle of empty point set")

    def inside(c: tuple[Point, float], p: Point) -> bool:
        (cx, cy), r = c
        return (p[0] - cx) ** 2 + (p[1] - cy) ** 2 <= r * r * (1.0 + 1e-12) + 1e-14

    def circle2(a: Point, b: Point) -> tuple[Point, float]:
        cx, cy = (a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0
        r = 0.5 * math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2)
        return ((cx, cy), r)

    def circle3(a: Point, b: Point, c: Point) -> tuple[Point, float]:
        d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]))
        if abs(d) < _EPS:
            # collinear: widest pair wins
            cands = [circle2(a, b), circle2(a, c), circle2(b, c)]
            return max(cands, key=lambda t: t[1])
        a2 = a[0] * a[0] + a[1] * a[1]
        b2 = b[0] * b[0] + b[1] * b[1]
        c2 = c[0] * c[0] + c[1] * c[1]
        ux = (a2 * (b[1] - c[1]) + b2 * (c[1] - a[1]) + c2 * (a[1] - b[1])) / d
        uy = (a2 * (c[0] - b[0]) + b2 * (a[0] - c[0]) + c2 * (b[0] - a[0])) / d
        r = math.sqrt((a[0] - ux) ** 2 + (a[1] - uy) ** 2)
        return ((ux, uy), r)

    circ = (pts[0], 0.0)
    for i, p in enumerate(pts[1:], start=1):
        if inside(circ, p):
            continue
        circ = (p, 0.0)
        for j, q in enumerate(pts[:i]):
            if inside(circ, q):
                continue
            circ = circle2(p, q)
            for r in pts[:j]:
                if not inside(circ, r):
                    circ = circle3(p, q, r)
    return circ
