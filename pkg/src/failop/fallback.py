"""Deterministic non-learned perception path.

Lidar points are clustered (DBSCAN or plain euclidean proximity components),
each cluster is fitted with both a minimum-area oriented rectangle and a
minimum enclosing circle, and the better-fitting shape is classified through
a hardcoded size-constraint rule table. No learned parameters anywhere: the
output is a pure function of (point cloud, parameters, rules).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry, kernels
from .records import register, require
from .scene import DetectedObject, ObjectList, PointCloud, VISUAL_CLASSES

CLUSTER_METHODS = frozenset({"euclidean", "dbscan"})
SHAPES = frozenset({"rectangle", "cylinder"})


@register("cluster_params")
@dataclass(frozen=True)
class ClusterParams:
    eps: float = 0.7
    min_pts: int = 3
    method: str = "dbscan"

    def __post_init__(self):
        require(self.eps > 0, "eps must be positive")
        require(self.min_pts >= 1, "min_pts must be >= 1")
        require(self.method in CLUSTER_METHODS, f"unknown method {self.method!r}")

    def to_payload(self) -> dict:
        return {"eps": self.eps, "min_pts": self.min_pts, "method": self.method}

    @classmethod
    def from_payload(cls, p: dict) -> "ClusterParams":
        return cls(**p)


@register("shape_rule")
@dataclass(frozen=True)
class ShapeRule:
    shape: str
    length_range: tuple[float, float]
    width_range: tuple[float, float]
    class_out: str

    def __post_init__(self):
        require(self.shape in SHAPES, f"unknown shape {self.shape!r}")
        require(self.class_out in VISUAL_CLASSES, f"unknown class {self.class_out!r}")
        require(self.length_range[0] <= self.length_range[1]
                and self.width_range[0] <= self.width_range[1],
                "rule ranges must satisfy min <= max")
        object.__setattr__(self, "length_range", tuple(self.length_range))
        object.__setattr__(self, "width_range", tuple(self.width_range))

    def matches(self, shape: str, length: float, width: float) -> bool:
        return (shape == self.shape
                and self.length_range[0] <= length <= self.length_range[1]
                and self.width_range[0] <= width <= self.width_range[1])

    def to_payload(self) -> dict:
        return {"shape": self.shape, "length_range": list(self.length_range),
                "width_range": list(self.width_range), "class_out": self.class_out}

    @classmethod
    def from_payload(cls, p: dict) -> "ShapeRule":
        return cls(shape=p["shape"], length_range=tuple(p["length_range"]),
                   width_range=tuple(p["width_range"]), class_out=p["class_out"])


# the shape->class mapping is fixed; the numeric ranges are tuning choices
DEFAULT_RULES = (
    ShapeRule("rectangle", (3.5, 6.0), (1.5, 2.2), "vehicle"),
    ShapeRule("cylinder", (0.2, 1.0), (0.2, 1.0), "pedestrian"),
)


def cluster(points: PointCloud, params: ClusterParams) -> list[list[int]]:
    """Cluster point indices. dbscan: core/border/noise semantics with
    deterministic scan order. euclidean: connected components of the
    eps-proximity graph (every point, including singletons, is assigned)."""
    n = len(points.points)
    if n == 0:
        return []
    xs = np.array([p[0] for p in points.points], dtype=np.float64)
    ys = np.array([p[1] for p in points.points], dtype=np.float64)
    min_pts = params.min_pts if params.method == "dbscan" else 1
    labels = kernels.cluster_labels(xs, ys, params.eps, min_pts)
    out: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        if lab >= 0:
            out.setdefault(int(lab), []).append(i)
    return [out[k] for k in sorted(out)]


@dataclass(frozen=True)
class ShapeFit:
    shape: str                      # "rectangle" | "cylinder"
    center: tuple[float, float]
    length: float                   # cylinder: diameter in both components
    width: float
    heading: float
    residual: float                 # normalized mean boundary distance
    degenerate: bool = False


def _rect_residual(pts: list[tuple[float, float]], box: geometry.ObbFit) -> float:
    """Mean distance of points to the rectangle boundary, normalized by
    perimeter/4 so shape competition is scale-free."""
    c, s = math.cos(box.heading), math.sin(box.heading)
    hl, hw = 0.5 * box.length, 0.5 * box.width
    total = 0.0
    for (px, py) in pts:
        dx, dy = px - box.center[0], py - box.center[1]
        u = c * dx + s * dy
        v = -s * dx + c * dy
        du = hl - abs(u)
        dv = hw - abs(v)
        if du >= 0.0 and dv >= 0.0:
            d = min(du, dv)
        else:
            ox = max(0.0, -du)
            oy = max(0.0, -dv)
            d = math.sqrt(ox * ox + oy * oy)
        total += d
    char = max(1e-9, 0.5 * (box.length + box.width))  # perimeter / 4
    return total / len(pts) / char


def _circle_residual(pts: list[tuple[float, float]], center: tuple[float, float],
                     radius: float) -> float:
    total = 0.0
    for (px, py) in pts:
        r = math.sqrt((px - center[0]) ** 2 + (py - center[1]) ** 2)
        total += abs(r - radius)
    return total / len(pts) / max(1e-9, radius)


RESIDUAL_TIE = 1e-12


def fit_shape(points: list[tuple[float, float]]) -> ShapeFit:
    """Fit both candidate shapes to a cluster and keep the lower normalized
    residual. Exact residual ties (rectangle corners lie on their own
    circumcircle; ring points lie on their minimum bounding square) go to
    the shape with the smaller footprint area, rectangle if those tie too.
    A single point is a degenerate zero-radius cylinder."""
    require(len(points) >= 1, "fit_shape needs a non-empty cluster")
    if len(points) == 1:
        return ShapeFit("cylinder", points[0], 0.0, 0.0, 0.0, 0.0, degenerate=True)

    box = geometry.min_area_rect(points)
    rect_res = _rect_residual(points, box)
    (ccx, ccy), radius = geometry.min_enclosing_circle(points)
    circ_res = _circle_residual(points, (ccx, ccy), radius)

    if abs(rect_res - circ_res) <= RESIDUAL_TIE:
        rectangle_wins = box.length * box.width <= math.pi * radius * radius
    else:
        rectangle_wins = rect_res < circ_res
    if rectangle_wins:
        return ShapeFit("rectangle", box.center, box.length, box.width,
                        box.heading, rect_res, degenerate=box.width <= 1e-9)
    return ShapeFit("cylinder", (ccx, ccy), 2.0 * radius, 2.0 * radius,
                    0.0, circ_res, degenerate=radius <= 1e-9)


def classify_shape(fit: ShapeFit, rules: tuple[ShapeRule, ...],
                   source: str = "fallback") -> DetectedObject:
    """First matching size rule wins; anything unmatched is a static obstacle."""
    cls = "static_obstacle"
    for rule in rules:
        if rule.matches(fit.shape, fit.length, fit.width):
            cls = rule.class_out
            break
    return DetectedObject(object_class=cls, center=fit.center,
                          extent=(max(fit.length, 0.05), max(fit.width, 0.05)),
                          heading=fit.heading, confidence=0.5, source=source)


def validate_rules(rules: tuple[ShapeRule, ...]) -> None:
    """Reject rule tables with overlapping ranges for the same shape."""
    for i in range(len(rules)):
        for j in range(i + 1, len(rules)):
            a, b = rules[i], rules[j]
            if a.shape != b.shape:
                continue
            lo = (max(a.length_range[0], b.length_range[0]),
                  max(a.width_range[0], b.width_range[0]))
            hi = (min(a.length_range[1], b.length_range[1]),
                  min(a.width_range[1], b.width_range[1]))
            require(lo[0] > hi[0] or lo[1] > hi[1],
                    f"overlapping rules for shape {a.shape!r}")


def fallback_perceive(cloud: PointCloud, params: ClusterParams,
                      rules: tuple[ShapeRule, ...] = DEFAULT_RULES,
                      source: str = "fallback") -> ObjectList:
    """Full fallback path: cluster, fit, classify."""
    detections = []
    for idxs in cluster(cloud, params):
        pts = [cloud.points[i] for i in idxs]
        detections.append(classify_shape(fit_shape(pts), rules, source=source))
    return ObjectList(tick=cloud.tick, source=source, objects=tuple(detections))
