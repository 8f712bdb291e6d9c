"""Deterministic fixed-step scenario simulation.

The tick loop is single-threaded, owns all mutable state, and never reads
wall-clock time; (scenario, seed) fully determines the run log. Hooks are
invoked synchronously in registration order each tick with an immutable
scene snapshot plus the emulated sensor outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable

import numpy as np

from . import records
from .records import RecordError, register, require
from .rng import stream
from .scene import (EgoState, PointCloud, RasterWindow, SceneRaster,
                    SceneState, TruthObject, footprint_in_ego,
                    rasterize_scene)
from . import kernels

TWO_PI = 2.0 * math.pi


@register("ego_command")
@dataclass(frozen=True)
class EgoCommand:
    """Scripted setpoint: holds from time t until the next entry."""

    t: float
    target_speed: float
    steering: float

    def to_payload(self) -> dict:
        return {"t": self.t, "target_speed": self.target_speed, "steering": self.steering}

    @classmethod
    def from_payload(cls, p: dict) -> "EgoCommand":
        return cls(**p)


@register("motion")
@dataclass(frozen=True)
class MotionDirective:
    """Timed velocity change for a scripted object."""

    object_id: str
    t: float
    velocity: tuple[float, float]

    def to_payload(self) -> dict:
        return {"object_id": self.object_id, "t": self.t, "velocity": list(self.velocity)}

    @classmethod
    def from_payload(cls, p: dict) -> "MotionDirective":
        return cls(object_id=p["object_id"], t=p["t"], velocity=tuple(p["velocity"]))


@register("lidar_config")
@dataclass(frozen=True)
class LidarConfig:
    ray_count: int = 360
    max_range: float = 50.0
    range_noise_sigma: float = 0.02
    fov: float = TWO_PI

    def __post_init__(self):
        require(self.ray_count >= 1, "ray_count must be >= 1")
        require(self.max_range > 0.0, "max_range must be positive")
        require(self.range_noise_sigma >= 0.0, "range_noise_sigma must be >= 0")
        require(0.0 < self.fov <= TWO_PI + 1e-12, "fov must be in (0, 2*pi]")

    def bearings(self) -> np.ndarray:
        k = np.arange(self.ray_count, dtype=np.float64)
        return -0.5 * self.fov + k * (self.fov / self.ray_count)

    def to_payload(self) -> dict:
        return {"ray_count": self.ray_count, "max_range": self.max_range,
                "range_noise_sigma": self.range_noise_sigma, "fov": self.fov}

    @classmethod
    def from_payload(cls, p: dict) -> "LidarConfig":
        return cls(**p)


def step_ego(ego: EgoState, command: tuple[float, float], dt: float) -> EgoState:
    """Kinematic bicycle update. command = (acceleration, steering angle);
    steering is clamped to the vehicle limit, speed floors at zero."""
    require(dt > 0.0, "dt must be positive")
    accel, steer = command
    steer = max(-ego.max_steering, min(ego.max_steering, steer))
    x = ego.x + ego.speed * math.cos(ego.heading) * dt
    y = ego.y + ego.speed * math.sin(ego.heading) * dt
    heading = ego.heading + (ego.speed / ego.wheelbase) * math.tan(steer) * dt
    speed = max(0.0, ego.speed + accel * dt)
    return EgoState(x=x, y=y, heading=heading, speed=speed, steering_angle=steer,
                    wheelbase=ego.wheelbase, width=ego.width, length=ego.length,
                    max_steering=ego.max_steering)


def scan_lidar(truth: SceneState, cfg: LidarConfig, rng: np.random.Generator) -> PointCloud:
    """Planar ray-cast scan from the ego origin against all object footprints.

    Nearest-hit ranges come from the kernel backend; seeded Gaussian range
    noise is applied afterwards in ray order and clamped to (0, max_range].
    """
    segs: list[tuple[float, float, float, float]] = []
    for obj in truth.objects:
        poly = footprint_in_ego(obj, truth.ego)
        n = len(poly)
        for i in range(n):
            p, q = poly[i], poly[(i + 1) % n]
            segs.append((p[0], p[1], q[0], q[1]))
    seg_arr = np.array(segs, dtype=np.float64).reshape(-1, 4)

    bearings = cfg.bearings()
    dir_x = np.cos(bearings)
    dir_y = np.sin(bearings)
    ranges = kernels.scan_rays(0.0, 0.0, dir_x, dir_y, seg_arr)

    hit = ranges <= cfg.max_range
    idx = np.nonzero(hit)[0]
    r = ranges[idx]
    if cfg.range_noise_sigma > 0.0 and idx.size > 0:
        r = r + rng.normal(0.0, cfg.range_noise_sigma, size=idx.size)
        r = np.clip(r, 1e-6, cfg.max_range)
    points = tuple((float(r[i] * dir_x[idx[i]]), float(r[i] * dir_y[idx[i]]))
                   for i in range(idx.size))
    return PointCloud(tick=truth.tick, points=points)


@register("run_header")
@dataclass(frozen=True)
class RunHeader:
    scenario: str
    seed: int
    dt: float
    n_ticks: int

    def to_payload(self) -> dict:
        return {"scenario": self.scenario, "seed": self.seed,
                "dt": self.dt, "n_ticks": self.n_ticks}

    @classmethod
    def from_payload(cls, p: dict) -> "RunHeader":
        return cls(**p)


@register("event")
@dataclass(frozen=True)
class Event:
    tick: int
    kind: str
    data: dict = field(default_factory=dict)

    def to_payload(self) -> dict:
        return {"tick": self.tick, "kind": self.kind, "data": self.data}

    @classmethod
    def from_payload(cls, p: dict) -> "Event":
        return cls(tick=p["tick"], kind=p["kind"], data=p.get("data", {}))


class RunLog:
    """Ordered record stream of one run; its NDJSON text is the artifact the
    determinism checks compare byte-for-byte."""

    def __init__(self) -> None:
        self.records: list[Any] = []

    def append(self, obj: Any) -> None:
        self.records.append(obj)

    def by_type(self, cls) -> list[Any]:
        return [r for r in self.records if isinstance(r, cls)]

    def to_text(self) -> str:
        return "".join(records.encode(r) + "\n" for r in self.records)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> "RunLog":
        log = cls()
        log.records = records.read_records(path)
        return log


class HookError(RuntimeError):
    """A pipeline hook raised; the offending tick is recorded in the log."""

    def __init__(self, tick: int, hook: str, cause: BaseException, log: RunLog):
        super().__init__(f"hook {hook!r} failed at tick {tick}: {cause!r}")
        self.tick = tick
        self.hook = hook
        self.cause = cause
        self.log = log


class TickContext:
    """Mutable per-tick blackboard passed through the hook chain."""

    def __init__(self, tick: int, time: float, scenario: "Scenario",
                 truth: SceneState, cloud: PointCloud, raster: SceneRaster,
                 log: RunLog):
        self.tick = tick
        self.time = time
        self.scenario = scenario
        self.truth = truth
        self.cloud = cloud
        self.raster = raster
        self.log = log
        self.source_lists: dict[str, Any] = {}
        self.fallback_list: Any = None
        self.fm_verdict: Any = None
        self.am_verdict: Any = None
        self.mode: Any = None
        self.fused: Any = None
        # (accel, steering) override from the reactor, else the script drives
        self.ego_command_override: tuple[float, float] | None = None


Hook = tuple[str, Callable[[TickContext], None]]


@dataclass
class Scenario:
    name: str
    seed: int
    dt: float
    duration: float
    ego: EgoState
    ego_script: tuple[EgoCommand, ...] = ()
    objects: tuple[TruthObject, ...] = ()
    motions: tuple[MotionDirective, ...] = ()
    lidar: LidarConfig = LidarConfig()
    raster_window: RasterWindow = RasterWindow()
    accel_limit: float = 2.5
    brake_limit: float = 5.0
    # opaque config records consumed by downstream modules (perception,
    # monitors, reactor); kept as decoded objects in file order
    extra: tuple[Any, ...] = ()

    def __post_init__(self):
        require(self.dt > 0.0, "dt must be positive")
        require(self.duration > 0.0, "duration must be positive")
        require(all(a.t <= b.t for a, b in zip(self.ego_script, self.ego_script[1:])),
                "ego_script must be time-sorted")
        require(all(a.t <= b.t for a, b in zip(self.motions, self.motions[1:])),
                "motion directives must be time-sorted")
        ids = [o.id for o in self.objects]
        require(len(ids) == len(set(ids)), "duplicate object ids")
        for m in self.motions:
            require(m.object_id in ids, f"motion for unknown object {m.object_id!r}")

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration / self.dt))

    def of_type(self, cls) -> list[Any]:
        return [r for r in self.extra if isinstance(r, cls)]

    def header_payload(self) -> dict:
        return {"name": self.name, "seed": self.seed, "dt": self.dt,
                "duration": self.duration, "ego": self.ego.to_payload(),
                "accel_limit": self.accel_limit, "brake_limit": self.brake_limit}

    def to_lines(self) -> str:
        lines = [records.canonical_json({"type": "scenario", **self.header_payload()})]
        for rec in (list(self.ego_script) + list(self.objects) + list(self.motions)
                    + [self.lidar, self.raster_window] + list(self.extra)):
            lines.append(records.encode(rec))
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_lines(), encoding="utf-8")


def load_scenario(path: str | Path, seed_override: int | None = None) -> Scenario:
    """Parse and validate a scenario file; diagnostics carry line numbers."""
    path = Path(path)
    header: dict | None = None
    script: list[EgoCommand] = []
    objects: list[TruthObject] = []
    motions: list[MotionDirective] = []
    lidar = LidarConfig()
    window = RasterWindow()
    extra: list[Any] = []
    import json

    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordError(f"{path}:{lineno}: invalid JSON: {exc}") from None
        if not isinstance(payload, dict) or "type" not in payload:
            raise RecordError(f"{path}:{lineno}: expected an object with a 'type' field")
        tag = payload["type"]
        if tag == "scenario":
            if header is not None:
                raise RecordError(f"{path}:{lineno}: duplicate scenario header")
            header = payload
            continue
        try:
            obj = records.decode(line)
        except RecordError as exc:
            raise RecordError(f"{path}:{lineno}: {exc}") from None
        if isinstance(obj, EgoCommand):
            script.append(obj)
        elif isinstance(obj, TruthObject):
            objects.append(obj)
        elif isinstance(obj, MotionDirective):
            motions.append(obj)
        elif isinstance(obj, LidarConfig):
            lidar = obj
        elif isinstance(obj, RasterWindow):
            window = obj
        else:
            extra.append(obj)

    if header is None:
        raise RecordError(f"{path}: missing scenario header record")
    for fld in ("name", "seed", "dt", "duration", "ego"):
        if fld not in header:
            raise RecordError(f"{path}: scenario header missing field {fld!r}")
    try:
        ego = EgoState.from_payload(header["ego"])
    except (RecordError, TypeError) as exc:
        raise RecordError(f"{path}: bad ego field: {exc}") from None

    seed = int(header["seed"]) if seed_override is None else int(seed_override)
    try:
        return Scenario(name=str(header["name"]), seed=seed, dt=float(header["dt"]),
                        duration=float(header["duration"]), ego=ego,
                        ego_script=tuple(script), objects=tuple(objects),
                        motions=tuple(motions), lidar=lidar, raster_window=window,
                        accel_limit=float(header.get("accel_limit", 2.5)),
                        brake_limit=float(header.get("brake_limit", 5.0)),
                        extra=tuple(extra))
    except RecordError as exc:
        raise RecordError(f"{path}: {exc}") from None


def _script_setpoint(script: tuple[EgoCommand, ...], time: float) -> tuple[float, float]:
    target, steer = 0.0, 0.0
    for cmd in script:
        if cmd.t <= time + 1e-12:
            target, steer = cmd.target_speed, cmd.steering
        else:
            break
    return target, steer


def run_scenario(scenario: Scenario, hooks: Iterable[Hook] = ()) -> RunLog:
    """Advance ticks 0..n-1, emitting (truth, cloud, raster) through the hook
    chain, then integrating ego and scripted object motion. Returns the
    complete tick-indexed log; a hook exception aborts with the offending
    tick recorded."""
    hooks = list(hooks)
    log = RunLog()
    log.append(RunHeader(scenario=scenario.name, seed=scenario.seed,
                         dt=scenario.dt, n_ticks=scenario.n_ticks))

    ego = scenario.ego
    objs = list(scenario.objects)
    velocities = {o.id: o.velocity for o in objs}

    for tick in range(scenario.n_ticks):
        time = tick * scenario.dt
        for m in scenario.motions:
            if m.t <= time + 1e-12:
                velocities[m.object_id] = m.velocity

        truth = SceneState(tick=tick, time=time, ego=ego, objects=tuple(objs))
        cloud = scan_lidar(truth, scenario.lidar, stream(scenario.seed, "lidar", tick))
        raster = rasterize_scene(truth, scenario.raster_window)

        log.append(truth)
        log.append(cloud)
        log.append(raster)

        ctx = TickContext(tick, time, scenario, truth, cloud, raster, log)
        for name, fn in hooks:
            try:
                fn(ctx)
            except Exception as exc:
                log.append(Event(tick=tick, kind="run_aborted",
                                 data={"hook": name, "error": repr(exc)}))
                raise HookError(tick, name, exc, log) from exc

        if ctx.ego_command_override is not None:
            command = ctx.ego_command_override
        else:
            target, steer = _script_setpoint(scenario.ego_script, time)
            accel = (target - ego.speed) / scenario.dt
            accel = max(-scenario.brake_limit, min(scenario.accel_limit, accel))
            command = (accel, steer)
        ego = step_ego(ego, command, scenario.dt)
        objs = [o.moved(velocities[o.id][0] * scenario.dt,
                        velocities[o.id][1] * scenario.dt) for o in objs]

    return log
