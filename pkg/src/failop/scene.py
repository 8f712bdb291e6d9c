"""Shared world-model types and coordinate conventions.

World is planar: object footprints are convex polygons plus a pose tag, the
ego frame sits at the rear-axle center with x forward / y left, and every
type serializes through the line-delimited record codec. Splitting an
object's visual class (what a camera would label) from its physical class
(what its shape/mass is) is the fault model that lets modality-specific
perception disagree — e.g. a box wearing a truck poster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .records import register, require

VISUAL_CLASSES = frozenset({"pedestrian", "vehicle", "truck", "bicycle",
                            "static_obstacle", "poster"})
PHYSICAL_CLASSES = frozenset({"pedestrian", "vehicle", "static_obstacle"})
POSE_TAGS = frozenset({"standing", "lying", "riding", "none"})

# physically plausible pairings; vehicle/truck imagery on a static prop is
# the poster case.
_VISUAL_TO_PHYSICAL = {
    "pedestrian": {"pedestrian"},
    "vehicle": {"vehicle", "static_obstacle"},
    "truck": {"vehicle", "static_obstacle"},
    "bicycle": {"pedestrian"},
    "static_obstacle": {"static_obstacle"},
    "poster": {"static_obstacle"},
}

DEFAULT_MAX_STEERING = 0.6


@register("ego_state")
@dataclass(frozen=True)
class EgoState:
    x: float
    y: float
    heading: float
    speed: float
    steering_angle: float
    wheelbase: float = 2.7
    width: float = 1.8
    length: float = 4.3
    max_steering: float = DEFAULT_MAX_STEERING

    def __post_init__(self):
        require(self.speed >= 0.0, "ego speed must be >= 0")
        require(self.wheelbase > 0.0 and self.width > 0.0 and self.length > 0.0,
                "ego dimensions must be positive")
        require(abs(self.steering_angle) <= self.max_steering + 1e-12,
                f"|steering_angle| exceeds max_steering {self.max_steering}")

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)

    def footprint(self) -> geometry.Polygon:
        """Body rectangle in the world frame; axles symmetric in the body."""
        overhang = 0.5 * (self.length - self.wheelbase)
        corners = [(-overhang, -0.5 * self.width),
                   (self.wheelbase + overhang, -0.5 * self.width),
                   (self.wheelbase + overhang, 0.5 * self.width),
                   (-overhang, 0.5 * self.width)]
        return [transform_from_ego(p, self) for p in corners]

    def to_payload(self) -> dict:
        return {"x": self.x, "y": self.y, "heading": self.heading,
                "speed": self.speed, "steering_angle": self.steering_angle,
                "wheelbase": self.wheelbase, "width": self.width,
                "length": self.length, "max_steering": self.max_steering}

    @classmethod
    def from_payload(cls, p: dict) -> "EgoState":
        return cls(**p)


def transform_to_ego(point: tuple[float, float], ego: EgoState) -> tuple[float, float]:
    """World point -> ego frame (origin at rear-axle center, x forward)."""
    dx, dy = point[0] - ego.x, point[1] - ego.y
    c, s = math.cos(ego.heading), math.sin(ego.heading)
    return (c * dx + s * dy, -s * dx + c * dy)


def transform_from_ego(point: tuple[float, float], ego: EgoState) -> tuple[float, float]:
    c, s = math.cos(ego.heading), math.sin(ego.heading)
    return (ego.x + c * point[0] - s * point[1],
            ego.y + s * point[0] + c * point[1])


@register("truth_object")
@dataclass(frozen=True)
class TruthObject:
    id: str
    visual_class: str
    physical_class: str
    footprint: tuple[tuple[float, float], ...]  # convex, CCW, world frame
    pose_tag: str = "none"
    velocity: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        require(self.visual_class in VISUAL_CLASSES,
                f"unknown visual_class {self.visual_class!r}")
        require(self.physical_class in PHYSICAL_CLASSES,
                f"unknown physical_class {self.physical_class!r}")
        require(self.physical_class in _VISUAL_TO_PHYSICAL[self.visual_class],
                f"implausible class pairing {self.visual_class}/{self.physical_class}")
        require(self.pose_tag in POSE_TAGS, f"unknown pose_tag {self.pose_tag!r}")
        require(len(self.footprint) >= 3, "footprint needs >= 3 vertices")
        poly = geometry.ensure_ccw(self.footprint)
        require(geometry.polygon_area(poly) > 1e-9, "footprint is degenerate")
        require(geometry.is_convex(poly), "footprint must be convex")
        object.__setattr__(self, "footprint", tuple(poly))
        object.__setattr__(self, "velocity",
                           (float(self.velocity[0]), float(self.velocity[1])))

    @property
    def is_poster(self) -> bool:
        return (self.visual_class in ("vehicle", "truck")
                and self.physical_class == "static_obstacle")

    def moved(self, dx: float, dy: float) -> "TruthObject":
        fp = tuple((x + dx, y + dy) for x, y in self.footprint)
        return TruthObject(self.id, self.visual_class, self.physical_class,
                           fp, self.pose_tag, self.velocity)

    def to_payload(self) -> dict:
        return {"id": self.id, "visual_class": self.visual_class,
                "physical_class": self.physical_class,
                "footprint": [list(p) for p in self.footprint],
                "pose_tag": self.pose_tag, "velocity": list(self.velocity)}

    @classmethod
    def from_payload(cls, p: dict) -> "TruthObject":
        return cls(id=p["id"], visual_class=p["visual_class"],
                   physical_class=p["physical_class"],
                   footprint=tuple(tuple(v) for v in p["footprint"]),
                   pose_tag=p.get("pose_tag", "none"),
                   velocity=tuple(p.get("velocity", (0.0, 0.0))))


@register("detected_object")
@dataclass(frozen=True)
class DetectedObject:
    object_class: str
    center: tuple[float, float]      # ego frame
    extent: tuple[float, float]      # (length, width), length >= width
    heading: float                   # ego frame, folded into [-pi/2, pi/2)
    confidence: float
    source: str

    def __post_init__(self):
        require(self.object_class in VISUAL_CLASSES,
                f"unknown object_class {self.object_class!r}")
        require(self.extent[0] > 0.0 and self.extent[1] > 0.0,
                "extent components must be positive")
        require(0.0 <= self.confidence <= 1.0, "confidence outside [0,1]")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "extent", (float(self.extent[0]), float(self.extent[1])))

    def corners(self) -> geometry.Polygon:
        return geometry.ObbFit(self.center, self.extent[0], self.extent[1],
                               self.heading, self.extent[0] * self.extent[1]).corners()

    def to_payload(self) -> dict:
        return {"object_class": self.object_class, "center": list(self.center),
                "extent": list(self.extent), "heading": self.heading,
                "confidence": self.confidence, "source": self.source}

    @classmethod
    def from_payload(cls, p: dict) -> "DetectedObject":
        return cls(object_class=p["object_class"], center=tuple(p["center"]),
                   extent=tuple(p["extent"]), heading=p["heading"],
                   confidence=p["confidence"], source=p["source"])


@register("object_list")
@dataclass(frozen=True)
class ObjectList:
    tick: int
    source: str
    objects: tuple[DetectedObject, ...]

    def __post_init__(self):
        require(self.tick >= 0, "tick must be >= 0")
        if self.source != "fused":
            # a fused list carries provenance: merged objects are tagged
            # "fused", pass-through singletons keep their original source
            for obj in self.objects:
                require(obj.source == self.source,
                        f"object source {obj.source!r} differs from list source {self.source!r}")
        object.__setattr__(self, "objects", tuple(self.objects))

    def to_payload(self) -> dict:
        return {"tick": self.tick, "source": self.source,
                "objects": [o.to_payload() for o in self.objects]}

    @classmethod
    def from_payload(cls, p: dict) -> "ObjectList":
        return cls(tick=p["tick"], source=p["source"],
                   objects=tuple(DetectedObject.from_payload(o) for o in p["objects"]))


@register("point_cloud")
@dataclass(frozen=True)
class PointCloud:
    tick: int
    points: tuple[tuple[float, float], ...]  # ego frame

    def __post_init__(self):
        require(self.tick >= 0, "tick must be >= 0")
        object.__setattr__(self, "points",
                           tuple((float(x), float(y)) for x, y in self.points))

    def to_payload(self) -> dict:
        return {"tick": self.tick, "points": [list(p) for p in self.points]}

    @classmethod
    def from_payload(cls, p: dict) -> "PointCloud":
        return cls(tick=p["tick"], points=tuple(tuple(q) for q in p["points"]))


@register("raster_window")
@dataclass(frozen=True)
class RasterWindow:
    """Ego-frame raster extent: x in [0, depth] ahead, y centered."""

    depth: float = 40.0
    width: float = 40.0
    cells: int = 16

    def __post_init__(self):
        require(self.depth > 0.0 and self.width > 0.0, "window dimensions must be positive")
        require(self.cells >= 1, "cells must be >= 1")

    def to_payload(self) -> dict:
        return {"depth": self.depth, "width": self.width, "cells": self.cells}

    @classmethod
    def from_payload(cls, p: dict) -> "RasterWindow":
        return cls(**p)


@register("scene_raster")
@dataclass(frozen=True, eq=False)
class SceneRaster:
    tick: int
    window: RasterWindow
    grid: np.ndarray = field(repr=False)  # (cells, cells), [ix][iy], values in [0,1]

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=np.float64)
        require(g.shape == (self.window.cells, self.window.cells),
                f"grid shape {g.shape} does not match window cells")
        require(bool(np.all((g >= 0.0) & (g <= 1.0))), "raster cells outside [0,1]")
        object.__setattr__(self, "grid", g)

    def __eq__(self, other) -> bool:
        return (isinstance(other, SceneRaster) and self.tick == other.tick
                and self.window == other.window
                and bool(np.array_equal(self.grid, other.grid)))

    def flat(self) -> np.ndarray:
        return self.grid.reshape(-1)

    def to_payload(self) -> dict:
        return {"tick": self.tick, "window": self.window.to_payload(),
                "grid": self.grid.tolist()}

    @classmethod
    def from_payload(cls, p: dict) -> "SceneRaster":
        return cls(tick=p["tick"], window=RasterWindow.from_payload(p["window"]),
                   grid=np.array(p["grid"], dtype=np.float64))


@register("scene_state")
@dataclass(frozen=True)
class SceneState:
    tick: int
    time: float
    ego: EgoState
    objects: tuple[TruthObject, ...]

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))

    def to_payload(self) -> dict:
        return {"tick": self.tick, "time": self.time,
                "ego": self.ego.to_payload(),
                "objects": [o.to_payload() for o in self.objects]}

    @classmethod
    def from_payload(cls, p: dict) -> "SceneState":
        return cls(tick=p["tick"], time=p["time"],
                   ego=EgoState.from_payload(p["ego"]),
                   objects=tuple(TruthObject.from_payload(o) for o in p["objects"]))


def footprint_in_ego(obj: TruthObject, ego: EgoState) -> geometry.Polygon:
    return [transform_to_ego(p, ego) for p in obj.footprint]


def rasterize_scene(truth: SceneState, window: RasterWindow) -> SceneRaster:
    """Occupancy raster of the truth footprints in the ego frame.

    Each cell holds the covered area fraction, summed over footprints and
    clamped to 1 (footprints of distinct objects essentially never overlap).
    Exact polygon-rectangle clipping; cells outside a footprint's bbox are
    skipped, which cannot change values (their clip area is zero).
    """
    g = window.cells
    grid = np.zeros((g, g), dtype=np.float64)
    cell_dx = window.depth / g
    cell_dy = window.width / g
    y0 = -0.5 * window.width
    cell_area = cell_dx * cell_dy

    for obj in truth.objects:
        poly = footprint_in_ego(obj, truth.ego)
        xs = [p[0] for p in poly]
        ys = [p[1] for p in poly]
        ix_lo = max(0, int(math.floor(min(xs) / cell_dx)))
        ix_hi = min(g - 1, int(math.floor(max(xs) / cell_dx)))
        iy_lo = max(0, int(math.floor((min(ys) - y0) / cell_dy)))
        iy_hi = min(g - 1, int(math.floor((max(ys) - y0) / cell_dy)))
        if min(xs) >= window.depth or max(xs) <= 0.0:
            continue
        if min(ys) >= 0.5 * window.width or max(ys) <= y0:
            continue
        for ix in range(ix_lo, ix_hi + 1):
            for iy in range(iy_lo, iy_hi + 1):
                clipped = geometry.clip_polygon_to_rect(
                    poly, ix * cell_dx, y0 + iy * cell_dy,
                    (ix + 1) * cell_dx, y0 + (iy + 1) * cell_dy)
                if len(clipped) >= 3:
                    grid[ix, iy] += geometry.polygon_area(clipped) / cell_area

    np.clip(grid, 0.0, 1.0, out=grid)
    return SceneRaster(tick=truth.tick, window=window, grid=grid)
