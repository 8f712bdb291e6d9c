"""Emulated AI perception paths and the post-voter fusion stage.

Each configured model is a pure function of (config, truth snapshot, derived
seed): it sees objects inside its field of view and range, reports geometry
from the footprint's oriented bounding box, and reports semantics according
to its modality — a camera reads the *visual* class (so a truck poster is a
truck), a lidar model only ever knows the *physical* class. Structured error
directives (misclassify / drop / phantom / freeze) make faults injectable
and deterministic; noise streams are derived per object so removing one
object never perturbs another's draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry
from .function_monitor import MatchSet
from .records import register, require
from .scene import (DetectedObject, ObjectList, SceneState, TruthObject,
                    VISUAL_CLASSES, footprint_in_ego)
from .rng import stream

MODALITIES = frozenset({"camera", "lidar"})

# what a geometry-only sensor can say about each physical class
_PHYSICAL_TO_CLASS = {"pedestrian": "pedestrian", "vehicle": "vehicle",
                      "static_obstacle": "static_obstacle"}

FAULT_KINDS = frozenset({"misclassify", "drop", "phantom", "freeze"})


@register("fault")
@dataclass(frozen=True)
class FaultDirective:
    """Timed error-process entry attached to one perception model."""

    model: str
    kind: str
    t_start: float = 0.0
    t_end: float | None = None
    from_class: str | None = None   # misclassify
    to_class: str | None = None     # misclassify
    object_id: str | None = None    # drop
    object_class: str | None = None  # phantom
    center: tuple[float, float] | None = None  # phantom, ego frame
    extent: tuple[float, float] | None = None  # phantom
    heading: float = 0.0            # phantom
    freeze_ticks: int = 0           # freeze

    def __post_init__(self):
        require(self.kind in FAULT_KINDS, f"unknown fault kind {self.kind!r}")
        if self.kind == "misclassify":
            require(self.from_class in VISUAL_CLASSES and self.to_class in VISUAL_CLASSES,
                    "misclassify needs valid from/to classes")
        elif self.kind == "drop":
            require(bool(self.object_id), "drop needs object_id")
        elif self.kind == "phantom":
            require(self.object_class in VISUAL_CLASSES and self.center is not None
                    and self.extent is not None, "phantom needs class/center/extent")
        elif self.kind == "freeze":
            require(self.freeze_ticks >= 1, "freeze needs ticks >= 1")
        if self.center is not None:
            object.__setattr__(self, "center", tuple(self.center))
        if self.extent is not None:
            object.__setattr__(self, "extent", tuple(self.extent))

    def active(self, time: float) -> bool:
        if time + 1e-12 < self.t_start:
            return False
        return self.t_end is None or time <= self.t_end + 1e-12

    def to_payload(self) -> dict:
        p: dict = {"model": self.model, "kind": self.kind, "t_start": self.t_start}
        if self.t_end is not None:
            p["t_end"] = self.t_end
        if self.kind == "misclassify":
            p["from"] = self.from_class
            p["to"] = self.to_class
        elif self.kind == "drop":
            p["object_id"] = self.object_id
        elif self.kind == "phantom":
            p.update({"object_class": self.object_class, "center": list(self.center),
                      "extent": list(self.extent), "heading": self.heading})
        elif self.kind == "freeze":
            p["freeze_ticks"] = self.freeze_ticks
        return p

    @classmethod
    def from_payload(cls, p: dict) -> "FaultDirective":
        return cls(model=p["model"], kind=p["kind"], t_start=p.get("t_start", 0.0),
                   t_end=p.get("t_end"), from_class=p.get("from"), to_class=p.get("to"),
                   object_id=p.get("object_id"), object_class=p.get("object_class"),
                   center=tuple(p["center"]) if "center" in p else None,
                   extent=tuple(p["extent"]) if "extent" in p else None,
                   heading=p.get("heading", 0.0), freeze_ticks=p.get("freeze_ticks", 0))


@register("perception_model")
@dataclass(frozen=True)
class PerceptionModelConfig:
    id: str
    modality: str
    fov: float = 2.0 * math.pi
    max_range: float = 40.0
    position_sigma: float = 0.0
    extent_sigma: float = 0.0

    def __post_init__(self):
        require(self.modality in MODALITIES, f"unknown modality {self.modality!r}")
        require(self.max_range > 0, "max_range must be positive")
        require(self.position_sigma >= 0 and self.extent_sigma >= 0,
                "noise sigmas must be >= 0")

    def to_payload(self) -> dict:
        return {"id": self.id, "modality": self.modality, "fov": self.fov,
                "max_range": self.max_range, "position_sigma": self.position_sigma,
                "extent_sigma": self.extent_sigma}

    @classmethod
    def from_payload(cls, p: dict) -> "PerceptionModelConfig":
        return cls(**p)


def _truncated_normal(rng: np.random.Generator, sigma: float) -> float:
    """One draw clipped to +-3 sigma, so noisy outputs stay inside the
    advertised max_range + 3*sigma envelope."""
    v = rng.normal(0.0, sigma)
    return float(max(-3.0 * sigma, min(3.0 * sigma, v)))


def _detect_one(model: PerceptionModelConfig, obj: TruthObject, truth: SceneState,
                seed: int) -> DetectedObject | None:
    box = geometry.min_area_rect(footprint_in_ego(obj, truth.ego))
    cx, cy = box.center
    dist = math.sqrt(cx * cx + cy * cy)
    if dist > model.max_range:
        return None
    if abs(math.atan2(cy, cx)) > 0.5 * model.fov:
        return None

    if model.modality == "camera":
        cls = obj.visual_class
    else:
        cls = _PHYSICAL_TO_CLASS[obj.physical_class]

    length = max(box.length, 0.05)
    width = max(box.width, 0.05)
    if model.position_sigma > 0.0 or model.extent_sigma > 0.0:
        rng = stream(seed, f"perceive:{model.id}:{obj.id}", truth.tick)
        cx += _truncated_normal(rng, model.position_sigma)
        cy += _truncated_normal(rng, model.position_sigma)
        length = max(0.05, length + _truncated_normal(rng, model.extent_sigma))
        width = max(0.05, width + _truncated_normal(rng, model.extent_sigma))

    conf = max(0.1, 0.95 - 0.25 * dist / model.max_range)
    return DetectedObject(object_class=cls, center=(cx, cy), extent=(length, width),
                          heading=box.heading, confidence=conf, source=model.id)


def perceive(model: PerceptionModelConfig, truth: SceneState, seed: int,
             faults: tuple[FaultDirective, ...] = ()) -> ObjectList:
    """One model's object list for one truth snapshot. Freeze directives are
    handled by the pipeline (they replay a previous output and need state);
    everything here is pure."""
    active = [f for f in faults if f.model == model.id and f.active(truth.time)]
    detections: list[DetectedObject] = []
    for obj in truth.objects:
        if any(f.kind == "drop" and f.object_id == obj.id for f in active):
            continue
        det = _detect_one(model, obj, truth, seed)
        if det is None:
            continue
        for f in active:
            if f.kind == "misclassify" and det.object_class == f.from_class:
                det = DetectedObject(object_class=f.to_class, center=det.center,
                                     extent=det.extent, heading=det.heading,
                                     confidence=det.confidence, source=det.source)
        detections.append(det)
    for f in active:
        if f.kind == "phantom":
            detections.append(DetectedObject(
                object_class=f.object_class, center=f.center, extent=f.extent,
                heading=f.heading, confidence=0.5, source=model.id))
    return ObjectList(tick=truth.tick, source=model.id, objects=tuple(detections))


def fuse(validated_lists: list[ObjectList], assignment: MatchSet) -> ObjectList:
    """Merge voter-validated lists into one output.

    Matched groups collapse to a confidence-weighted average of center,
    extent and heading (box headings are pi-periodic, hence the double-angle
    mean); the class comes from the highest-confidence member. Unmatched
    detections pass through with their source tag intact.
    """
    if not validated_lists:
        return ObjectList(tick=0, source="fused", objects=())
    tick = validated_lists[0].tick
    by_source = {lst.source: lst for lst in validated_lists}

    merged: list[DetectedObject] = []
    for group in assignment.groups:
        members = [(src, by_source[src].objects[idx]) for src, idx in group
                   if src in by_source and idx < len(by_source[src].objects)]
        if not members:
            continue
        if len(members) == 1:
            merged.append(members[0][1])
            continue
        wsum = sum(o.confidence for _, o in members)
        cx = sum(o.confidence * o.center[0] for _, o in members) / wsum
        cy = sum(o.confidence * o.center[1] for _, o in members) / wsum
        length = sum(o.confidence * o.extent[0] for _, o in members) / wsum
        width = sum(o.confidence * o.extent[1] for _, o in members) / wsum
        sin2 = sum(o.confidence * math.sin(2.0 * o.heading) for _, o in members)
        cos2 = sum(o.confidence * math.cos(2.0 * o.heading) for _, o in members)
        heading = geometry.normalize_box_heading(0.5 * math.atan2(sin2, cos2))
        best_src, best = min(members, key=lambda m: (-m[1].confidence, m[0]))
        merged.append(DetectedObject(object_class=best.object_class, center=(cx, cy),
                                     extent=(length, width), heading=heading,
                                     confidence=best.confidence, source="fused"))
    return ObjectList(tick=tick, source="fused", objects=tuple(merged))
