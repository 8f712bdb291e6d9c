"""Runtime consistency monitor for the redundant perception paths.

Builds the speed/steering-dependent safe zone (clear + focus corridors swept
along the bicycle-model arc) and validates that the perception sources agree
about every object inside it: detections are matched across sources by
distance gating and each matched group must satisfy the configured center,
extent and class-compatibility tolerances and be confirmed by enough
sources. Violations name the minority side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import geometry
from .records import register, require
from .scene import DetectedObject, EgoState, ObjectList

ZONE_GRID = 0.25  # arc-length sampling step, m


@register("safe_zone_params")
@dataclass(frozen=True)
class SafeZoneParams:
    a_max: float = 5.0              # braking deceleration, m/s^2
    t_react: float = 0.5            # reaction time, s
    lateral_margin: float = 0.5
    standstill_margin: float = 0.3
    focus_extension: float = 0.3    # fractional enlargement of the focus zone

    def __post_init__(self):
        require(self.a_max > 0 and self.t_react > 0, "a_max and t_react must be positive")
        require(self.lateral_margin > 0 and self.standstill_margin > 0,
                "margins must be positive")
        require(self.focus_extension >= 0, "focus_extension must be >= 0")

    def to_payload(self) -> dict:
        return {"a_max": self.a_max, "t_react": self.t_react,
                "lateral_margin": self.lateral_margin,
                "standstill_margin": self.standstill_margin,
                "focus_extension": self.focus_extension}

    @classmethod
    def from_payload(cls, p: dict) -> "SafeZoneParams":
        return cls(**p)


@register("safe_zone")
@dataclass(frozen=True)
class SafeZone:
    clear_zone: tuple[tuple[float, float], ...]
    focus_zone: tuple[tuple[float, float], ...]
    stop_distance: float  # forward extension beyond the front bumper, m

    def __post_init__(self):
        require(len(self.clear_zone) >= 3 and len(self.focus_zone) >= 3,
                "zone polygons need >= 3 vertices")
        object.__setattr__(self, "clear_zone", tuple(tuple(p) for p in self.clear_zone))
        object.__setattr__(self, "focus_zone", tuple(tuple(p) for p in self.focus_zone))

    def to_payload(self) -> dict:
        return {"clear_zone": [list(p) for p in self.clear_zone],
                "focus_zone": [list(p) for p in self.focus_zone],
                "stop_distance": self.stop_distance}

    @classmethod
    def from_payload(cls, p: dict) -> "SafeZone":
        return cls(clear_zone=tuple(tuple(v) for v in p["clear_zone"]),
                   focus_zone=tuple(tuple(v) for v in p["focus_zone"]),
                   stop_distance=p["stop_distance"])


def _corridor(ego: EgoState, half_width: float, extension: float) -> list[tuple[float, float]]:
    """Swept band around the constant-curvature rear-axle arc, from the rear
    bumper to the front bumper plus `extension`. Sampled on a fixed
    0.25 m arc-length grid anchored at the rear bumper and rounded *up*, so
    a shorter corridor's vertices are literally vertices of a longer one
    (the zone monotonicity checks rely on this). The arc is capped at half
    a turn to keep the polygon simple at extreme steering."""
    overhang = 0.5 * (ego.length - ego.wheelbase)
    s0 = -overhang
    length = ego.length + extension
    kappa = math.tan(ego.steering_angle) / ego.wheelbase

    n_steps = max(1, int(math.ceil(length / ZONE_GRID - 1e-9)))
    if kappa != 0.0:
        max_steps = int(math.floor((math.pi / abs(kappa)) / ZONE_GRID))
        n_steps = min(n_steps, max(1, max_steps))

    left: list[tuple[float, float]] = []
    right: list[tuple[float, float]] = []
    for k in range(n_steps + 1):
        s = s0 + k * ZONE_GRID
        if kappa == 0.0:
            cx, cy = s, 0.0
            nx, ny = 0.0, 1.0
        else:
            phi = kappa * s
            cx = math.sin(phi) / kappa
            cy = (1.0 - math.cos(phi)) / kappa
            nx, ny = -math.sin(phi), math.cos(phi)
        left.append((cx + half_width * nx, cy + half_width * ny))
        right.append((cx - half_width * nx, cy - half_width * ny))
    return right + left[::-1]


def compute_safe_zone(ego: EgoState, params: SafeZoneParams) -> SafeZone:
    """Clear zone: stopping corridor (reaction + braking distance plus the
    standstill margin) at half-width width/2 + lateral_margin. Focus zone:
    same construction with the stopping distance and the lateral margin both
    scaled by (1 + focus_extension)."""
    d = ego.speed * params.t_react + ego.speed * ego.speed / (2.0 * params.a_max)
    clear = _corridor(ego, 0.5 * ego.width + params.lateral_margin,
                      params.standstill_margin + d)
    focus = _corridor(ego, 0.5 * ego.width + params.lateral_margin * (1.0 + params.focus_extension),
                      params.standstill_margin + d * (1.0 + params.focus_extension))
    return SafeZone(clear_zone=tuple(clear), focus_zone=tuple(focus),
                    stop_distance=d + params.standstill_margin)


DEFAULT_COMPATIBLE = (("truck", "vehicle"), ("bicycle", "pedestrian"),
                      ("poster", "static_obstacle"))


@register("hara_thresholds")
@dataclass(frozen=True)
class HaraThresholds:
    """Attribute tolerances for cross-source agreement. The numeric defaults
    are engineering choices pinned by the hazard analysis config, not
    derived quantities."""

    max_center_delta: float = 0.75
    max_extent_delta: float = 1.0
    gating_distance: float = 2.0
    min_agreeing_sources: int | None = None  # None -> ceil(n_sources / 2)
    compatible: tuple[tuple[str, str], ...] = DEFAULT_COMPATIBLE

    def __post_init__(self):
        require(self.max_center_delta > 0 and self.max_extent_delta > 0
                and self.gating_distance > 0, "threshold distances must be positive")
        norm = tuple(sorted(tuple(sorted(p)) for p in self.compatible))
        object.__setattr__(self, "compatible", norm)

    def classes_compatible(self, a: str, b: str) -> bool:
        return a == b or tuple(sorted((a, b))) in self.compatible

    def required_sources(self, n_sources: int) -> int:
        if self.min_agreeing_sources is not None:
            return self.min_agreeing_sources
        return (n_sources + 1) // 2

    def to_payload(self) -> dict:
        return {"max_center_delta": self.max_center_delta,
                "max_extent_delta": self.max_extent_delta,
                "gating_distance": self.gating_distance,
                "min_agreeing_sources": self.min_agreeing_sources,
                "compatible": [list(p) for p in self.compatible]}

    @classmethod
    def from_payload(cls, p: dict) -> "HaraThresholds":
        return cls(max_center_delta=p["max_center_delta"],
                   max_extent_delta=p["max_extent_delta"],
                   gating_distance=p["gating_distance"],
                   min_agreeing_sources=p.get("min_agreeing_sources"),
                   compatible=tuple(tuple(q) for q in p["compatible"]))


@dataclass(frozen=True)
class MatchSet:
    """Grouping of detections across sources; every in-scope detection
    appears in exactly one group, keyed by (source, index into that
    source's list)."""

    groups: tuple[tuple[tuple[str, int], ...], ...]

    def group_of(self, source: str, index: int) -> tuple[tuple[str, int], ...] | None:
        for g in self.groups:
            if (source, index) in g:
                return g
        return None


def _center_dist(a: DetectedObject, b: DetectedObject) -> float:
    dx = a.center[0] - b.center[0]
    dy = a.center[1] - b.center[1]
    return math.sqrt(dx * dx + dy * dy)


def _extent_delta(a: DetectedObject, b: DetectedObject) -> float:
    return max(abs(a.extent[0] - b.extent[0]), abs(a.extent[1] - b.extent[1]))


def match_across_sources(lists: list[ObjectList], thresholds: HaraThresholds) -> MatchSet:
    """Greedy distance-ascending matching of detections across sources.

    Cross-source pairs within the gating distance are accepted (transitively
    unioned) closest-first, provided neither side's group already contains a
    member from the other's source. Inputs are put into a canonical order
    first (source id, then center lexicographic), so the result is invariant
    under permutation of the argument lists. Class compatibility does not
    gate the grouping: co-located detections with conflicting classes must
    land in one group so the validator can see the conflict.
    """
    require(len(lists) >= 2, "matching needs at least 2 object lists")
    items: list[tuple[str, int, DetectedObject]] = []
    for lst in sorted(lists, key=lambda l: l.source):
        order = sorted(range(len(lst.objects)),
                       key=lambda i: (lst.objects[i].center[0], lst.objects[i].center[1],
                                      lst.objects[i].object_class))
        for i in order:
            items.append((lst.source, i, lst.objects[i]))

    pairs: list[tuple[float, int, int]] = []
    for a in range(len(items)):
        for b in range(a + 1, len(items)):
            if items[a][0] == items[b][0]:
                continue
            d = _center_dist(items[a][2], items[b][2])
            if d <= thresholds.gating_distance:
                pairs.append((d, a, b))
    pairs.sort(key=lambda t: (t[0], t[1], t[2]))

    parent = list(range(len(items)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    group_sources: list[set[str]] = [{items[i][0]} for i in range(len(items))]
    for d, a, b in pairs:
        ra, rb = find(a), find(b)
        if ra == rb:
            continue
        if items[b][0] in group_sources[ra] or items[a][0] in group_sources[rb]:
            continue
        parent[rb] = ra
        group_sources[ra] |= group_sources[rb]

    by_root: dict[int, list[tuple[str, int]]] = {}
    for i, (src, idx, _) in enumerate(items):
        by_root.setdefault(find(i), []).append((src, idx))
    groups = sorted(tuple(sorted(g)) for g in by_root.values())
    return MatchSet(groups=tuple(groups))


@register("fm_verdict")
@dataclass(frozen=True)
class FmVerdict:
    tick: int
    flag: bool
    implicated_sources: tuple[str, ...]
    evidence: tuple[dict, ...]      # one entry per violating group
    zone: SafeZone

    def __post_init__(self):
        object.__setattr__(self, "implicated_sources",
                           tuple(sorted(self.implicated_sources)))

    def to_payload(self) -> dict:
        return {"tick": self.tick, "flag": self.flag,
                "implicated_sources": list(self.implicated_sources),
                "evidence": [dict(e) for e in self.evidence],
                "zone": self.zone.to_payload()}

    @classmethod
    def from_payload(cls, p: dict) -> "FmVerdict":
        return cls(tick=p["tick"], flag=p["flag"],
                   implicated_sources=tuple(p["implicated_sources"]),
                   evidence=tuple(p["evidence"]),
                   zone=SafeZone.from_payload(p["zone"]))


def _in_zone(obj: DetectedObject, zone_poly) -> bool:
    return geometry.polygons_intersect(obj.corners(), list(zone_poly))


def _consistent(a: DetectedObject, b: DetectedObject, th: HaraThresholds) -> bool:
    return (th.classes_compatible(a.object_class, b.object_class)
            and _center_dist(a, b) <= th.max_center_delta
            and _extent_delta(a, b) <= th.max_extent_delta)


def _majority_split(objs: list[tuple[str, DetectedObject]],
                    th: HaraThresholds) -> tuple[set[str], set[str]]:
    """Partition a violating group's sources into (majority, implicated).
    Majority = the unique largest mutually-consistent subset; any tie (the
    2-source case, 3-cycles) implicates everyone."""
    n = len(objs)
    best_size = 0
    best_masks: list[int] = []
    for mask in range(1, 1 << n):
        members = [i for i in range(n) if mask >> i & 1]
        ok = all(_consistent(objs[i][1], objs[j][1], th)
                 for ai, i in enumerate(members) for j in members[ai + 1:])
        if not ok:
            continue
        if len(members) > best_size:
            best_size = len(members)
            best_masks = [mask]
        elif len(members) == best_size:
            best_masks.append(mask)
    if len(best_masks) != 1 or best_size <= n // 2:
        every = {src for src, _ in objs}
        return set(), every
    keep = {objs[i][0] for i in range(n) if best_masks[0] >> i & 1}
    return keep, {src for src, _ in objs} - keep


def validate(lists: list[ObjectList], zone: SafeZone,
             thresholds: HaraThresholds) -> FmVerdict:
    """Cross-source consistency verdict for one tick.

    Detections whose boxes do not touch the focus zone are ignored. A flag
    is raised when a matched in-zone group violates the center/extent/class
    tolerances, or when an in-zone group is confirmed by fewer than the
    required number of sources.
    """
    tick = lists[0].tick if lists else 0
    filtered: list[ObjectList] = []
    for lst in lists:
        keep = tuple(o for o in lst.objects if _in_zone(o, zone.focus_zone))
        filtered.append(ObjectList(tick=lst.tick, source=lst.source, objects=keep))

    n_sources = len(filtered)
    needed = thresholds.required_sources(n_sources)
    implicated: set[str] = set()
    evidence: list[dict] = []

    if n_sources >= 2:
        matches = match_across_sources(filtered, thresholds)
        by_source = {lst.source: lst for lst in filtered}
        for group in matches.groups:
            objs = [(src, by_source[src].objects[idx]) for src, idx in group]
            violations: list[str] = []
            max_cd = 0.0
            max_ed = 0.0
            for i in range(len(objs)):
                for j in range(i + 1, len(objs)):
                    a, b = objs[i][1], objs[j][1]
                    max_cd = max(max_cd, _center_dist(a, b))
                    max_ed = max(max_ed, _extent_delta(a, b))
                    if not thresholds.classes_compatible(a.object_class, b.object_class):
                        violations.append("class_mismatch")
                    if _center_dist(a, b) > thresholds.max_center_delta:
                        violations.append("center_delta")
                    if _extent_delta(a, b) > thresholds.max_extent_delta:
                        violations.append("extent_delta")
            confirmed = len({src for src, _ in group})
            if confirmed < needed:
                violations.append("unconfirmed")
            if not violations:
                continue
            if violations == ["unconfirmed"]:
                blamed = {src for src, _ in group}
            else:
                _, blamed = _majority_split(objs, thresholds)
                if confirmed < needed:
                    blamed |= {src for src, _ in group}
            implicated |= blamed
            evidence.append({
                "members": [{"source": src, "object": obj.to_payload()}
                            for src, obj in objs],
                "violations": sorted(set(violations)),
                "max_center_delta": max_cd,
                "max_extent_delta": max_ed,
                "implicated": sorted(blamed),
            })

    return FmVerdict(tick=tick, flag=bool(evidence),
                     implicated_sources=tuple(sorted(implicated)),
                     evidence=tuple(evidence), zone=zone)
