"""Regenerates the shipped scenario fixtures.

Run from the repo root:  python scenarios/make_fixtures.py
"""

from __future__ import annotations

from pathlib import Path

from failop.fallback import ClusterParams, ShapeRule
from failop.function_monitor import HaraThresholds, SafeZoneParams
from failop.perception import FaultDirective, PerceptionModelConfig
from failop.reactor import RecorderConfig
from failop.scene import EgoState, RasterWindow, TruthObject
from failop.sim import EgoCommand, LidarConfig, Scenario

OUT = Path(__file__).parent

EGO = EgoState(x=0.0, y=0.0, heading=0.0, speed=0.0, steering_angle=0.0,
               wheelbase=2.7, width=1.8, length=4.3)
WINDOW = RasterWindow(depth=20.0, width=8.0, cells=16)
LIDAR = LidarConfig(ray_count=360, max_range=50.0, range_noise_sigma=0.02)

COMMON = [SafeZoneParams(), HaraThresholds(), ClusterParams(),
          ShapeRule("rectangle", (3.5, 6.0), (1.5, 2.2), "vehicle"),
          ShapeRule("cylinder", (0.2, 1.0), (0.2, 1.0), "pedestrian"),
          RecorderConfig()]


def box(cx: float, cy: float, lx: float, ly: float) -> tuple:
    hx, hy = lx / 2.0, ly / 2.0
    return ((cx - hx, cy - hy), (cx + hx, cy - hy), (cx + hx, cy + hy), (cx - hx, cy + hy))


def two_path_models(noisy: bool) -> list[PerceptionModelConfig]:
    ps = 0.05 if noisy else 0.0
    es = 0.03 if noisy else 0.0
    return [
        PerceptionModelConfig(id="cam0", modality="camera", fov=1.8, max_range=45.0,
                              position_sigma=ps, extent_sigma=es),
        PerceptionModelConfig(id="lidar0", modality="lidar", fov=6.283185307179586,
                              max_range=50.0, position_sigma=ps, extent_sigma=es),
    ]


def three_path_models() -> list[PerceptionModelConfig]:
    return [
        PerceptionModelConfig(id="cam0", modality="camera", fov=1.8, max_range=45.0),
        PerceptionModelConfig(id="cam1", modality="camera", fov=1.8, max_range=45.0),
        PerceptionModelConfig(id="lidar0", modality="lidar", fov=6.283185307179586,
                              max_range=50.0),
    ]


def benign() -> Scenario:
    objects = (
        TruthObject("car1", "vehicle", "vehicle", box(30.0, 6.0, 4.5, 1.8)),
        TruthObject("ped1", "pedestrian", "pedestrian", box(50.0, -3.5, 0.5, 0.5),
                    pose_tag="standing"),
        TruthObject("bin1", "static_obstacle", "static_obstacle", box(70.0, 3.5, 0.8, 0.8)),
        TruthObject("car2", "vehicle", "vehicle", box(90.0, -6.0, 4.5, 1.8)),
    )
    return Scenario(name="benign", seed=7, dt=0.05, duration=20.0, ego=EGO,
                    ego_script=(EgoCommand(0.0, 6.0, 0.0),), objects=objects,
                    lidar=LIDAR, raster_window=WINDOW,
                    extra=tuple(COMMON + two_path_models(noisy=True)))


def poster() -> Scenario:
    objects = (
        TruthObject("car1", "vehicle", "vehicle", box(25.0, 4.5, 4.5, 1.8)),
        # a box wearing a truck poster: camera semantics say truck, the
        # physical shape is a thin static obstacle across the lane
        TruthObject("poster1", "truck", "static_obstacle", box(55.0, 0.3, 0.4, 2.4)),
    )
    return Scenario(name="poster", seed=11, dt=0.05, duration=12.0, ego=EGO,
                    ego_script=(EgoCommand(0.0, 8.0, 0.0),), objects=objects,
                    lidar=LIDAR, raster_window=WINDOW,
                    extra=tuple(COMMON + two_path_models(noisy=False)))


def lying_pedestrian() -> Scenario:
    objects = (
        TruthObject("car1", "vehicle", "vehicle", box(30.0, 6.0, 4.5, 1.8)),
        TruthObject("ped2", "pedestrian", "pedestrian", box(50.0, -3.5, 0.5, 0.5),
                    pose_tag="standing"),
        TruthObject("ped1", "pedestrian", "pedestrian", box(62.0, 0.2, 1.8, 0.5),
                    pose_tag="lying"),
    )
    return Scenario(name="lying_pedestrian", seed=13, dt=0.05, duration=14.0, ego=EGO,
                    ego_script=(EgoCommand(0.0, 6.0, 0.0), EgoCommand(9.0, 0.0, 0.0)),
                    objects=objects, lidar=LIDAR, raster_window=WINDOW,
                    extra=tuple(COMMON + two_path_models(noisy=True)))


def three_source() -> Scenario:
    objects = (
        TruthObject("car1", "vehicle", "vehicle", box(40.0, 1.9, 4.5, 1.8)),
    )
    faults = [FaultDirective(model="cam1", kind="misclassify",
                             from_class="vehicle", to_class="pedestrian")]
    return Scenario(name="three_source", seed=17, dt=0.05, duration=12.0, ego=EGO,
                    ego_script=(EgoCommand(0.0, 6.0, 0.0),), objects=objects,
                    lidar=LIDAR, raster_window=WINDOW,
                    extra=tuple(COMMON + three_path_models() + faults))


def all_sources_fault() -> Scenario:
    objects = (
        TruthObject("car1", "vehicle", "vehicle", box(40.0, 1.9, 4.5, 1.8)),
    )
    faults = [
        FaultDirective(model="cam0", kind="misclassify",
                       from_class="vehicle", to_class="pedestrian"),
        FaultDirective(model="cam1", kind="misclassify",
                       from_class="vehicle", to_class="static_obstacle"),
    ]
    return Scenario(name="all_sources_fault", seed=19, dt=0.05, duration=12.0, ego=EGO,
                    ego_script=(EgoCommand(0.0, 6.0, 0.0),), objects=objects,
                    lidar=LIDAR, raster_window=WINDOW,
                    extra=tuple(COMMON + three_path_models() + faults))


def main() -> None:
    for build in (benign, poster, lying_pedestrian, three_source, all_sources_fault):
        scn = build()
        path = OUT / f"{scn.name}.scn"
        scn.write(path)
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
