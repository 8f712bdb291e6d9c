import math

import numpy as np
import pytest

from failop import geometry as g
from failop.function_monitor import HaraThresholds, MatchSet, match_across_sources
from failop.perception import (FaultDirective, PerceptionModelConfig, fuse,
                               perceive)
from failop.scene import DetectedObject, EgoState, ObjectList, SceneState, TruthObject


def make_ego(x=0.0, y=0.0, heading=0.0):
    return EgoState(x=x, y=y, heading=heading, speed=0.0, steering_angle=0.0)


def box(cx, cy, lx, ly):
    hx, hy = lx / 2, ly / 2
    return ((cx - hx, cy - hy), (cx + hx, cy - hy), (cx + hx, cy + hy), (cx - hx, cy + hy))


def scene(objects, tick=0):
    return SceneState(tick=tick, time=tick * 0.05, ego=make_ego(), objects=tuple(objects))


POSTER = TruthObject("p1", "truck", "static_obstacle", box(12.0, 0.0, 0.4, 2.4))
CAR = TruthObject("c1", "vehicle", "vehicle", box(20.0, 3.0, 4.5, 1.8))

CAM = PerceptionModelConfig(id="cam0", modality="camera", fov=1.8, max_range=45.0)
LID = PerceptionModelConfig(id="lidar0", modality="lidar", fov=2 * math.pi,
                            max_range=50.0)


def test_camera_reports_visual_class_lidar_reports_physical():
    truth = scene([POSTER])
    cam = perceive(CAM, truth, seed=1)
    lid = perceive(LID, truth, seed=1)
    assert [o.object_class for o in cam.objects] == ["truck"]
    assert [o.object_class for o in lid.objects] == ["static_obstacle"]
    # geometry agrees: both read the same physical footprint
    assert cam.objects[0].center == lid.objects[0].center
    assert cam.objects[0].extent == lid.objects[0].extent


def test_empty_scene_empty_list():
    out = perceive(CAM, scene([]), seed=1)
    assert out.objects == ()
    assert out.source == "cam0"


def test_fov_and_range_limits():
    behind = TruthObject("b", "vehicle", "vehicle", box(-10.0, 0.0, 4.5, 1.8))
    far = TruthObject("f", "vehicle", "vehicle", box(100.0, 0.0, 4.5, 1.8))
    out = perceive(CAM, scene([behind, far, CAR]), seed=1)
    assert [o.object_class for o in out.objects] == ["vehicle"]
    wide = perceive(LID, scene([behind, far, CAR]), seed=1)
    assert len(wide.objects) == 2  # lidar sees behind, still not beyond range


def test_drop_directive_is_exact_set_difference():
    noisy_cam = PerceptionModelConfig(id="cam0", modality="camera", fov=1.8,
                                      max_range=45.0, position_sigma=0.05,
                                      extent_sigma=0.03)
    truth = scene([POSTER, CAR], tick=4)
    drop = (FaultDirective(model="cam0", kind="drop", object_id="p1"),)
    full = perceive(noisy_cam, truth, seed=3)
    dropped = perceive(noisy_cam, truth, seed=3, faults=drop)
    # per-object noise streams: remaining detections are bit-identical
    kept = [o for o in full.objects if o.object_class != "truck"]
    assert list(dropped.objects) == kept


def test_misclassify_and_phantom_and_windows():
    faults = (
        FaultDirective(model="cam0", kind="misclassify", from_class="vehicle",
                       to_class="pedestrian", t_start=0.0, t_end=1.0),
        FaultDirective(model="cam0", kind="phantom", object_class="bicycle",
                       center=(5.0, 1.0), extent=(1.5, 0.5), t_start=0.0),
    )
    early = perceive(CAM, scene([CAR], tick=0), seed=1, faults=faults)
    assert sorted(o.object_class for o in early.objects) == ["bicycle", "pedestrian"]
    late = perceive(CAM, scene([CAR], tick=100), seed=1, faults=faults)
    # misclassify window ended at t=1.0; phantom persists
    assert sorted(o.object_class for o in late.objects) == ["bicycle", "vehicle"]


def test_perceive_never_reports_beyond_range_plus_noise():
    noisy = PerceptionModelConfig(id="lidar0", modality="lidar", fov=2 * math.pi,
                                  max_range=20.0, position_sigma=0.5)
    edge = TruthObject("e", "vehicle", "vehicle", box(19.9, 0.0, 1.0, 1.0))
    limit = noisy.max_range + 3 * noisy.position_sigma
    for tick in range(200):
        out = perceive(noisy, scene([edge], tick=tick), seed=tick)
        for o in out.objects:
            assert math.hypot(*o.center) <= limit + 1e-9


def test_perceive_deterministic_per_seed():
    noisy = PerceptionModelConfig(id="cam0", modality="camera", fov=1.8,
                                  max_range=45.0, position_sigma=0.1)
    a = perceive(noisy, scene([CAR], tick=7), seed=5)
    b = perceive(noisy, scene([CAR], tick=7), seed=5)
    c = perceive(noisy, scene([CAR], tick=7), seed=6)
    assert a == b
    assert a != c


# ---------------------------------------------------------------- fuse


def det(src, cx, cy, conf, cls="vehicle", extent=(4.5, 1.8), heading=0.0):
    return DetectedObject(cls, (cx, cy), extent, heading, conf, src)


def lists_and_match(*lists):
    match = match_across_sources(list(lists), HaraThresholds())
    return list(lists), match


def test_fuse_two_identical_lists_is_idempotent():
    a = ObjectList(tick=0, source="cam0", objects=(det("cam0", 10, 0, 0.8),))
    b = ObjectList(tick=0, source="lidar0", objects=(det("lidar0", 10, 0, 0.8),))
    lists, match = lists_and_match(a, b)
    fused = fuse(lists, match)
    assert len(fused.objects) == 1
    out = fused.objects[0]
    assert out.center == (pytest.approx(10.0), pytest.approx(0.0))
    assert out.extent == (pytest.approx(4.5), pytest.approx(1.8))
    assert out.object_class == "vehicle"


def test_fuse_weighted_mean_hand_computed():
    a = ObjectList(tick=0, source="cam0", objects=(det("cam0", 10.0, 0, 0.5),))
    b = ObjectList(tick=0, source="lidar0", objects=(det("lidar0", 10.4, 0, 0.5),))
    lists, match = lists_and_match(a, b)
    fused = fuse(lists, match)
    assert fused.objects[0].center == (pytest.approx(10.2), pytest.approx(0.0))


def test_fuse_single_source_identity():
    a = ObjectList(tick=0, source="cam0",
                   objects=(det("cam0", 10, 0, 0.8), det("cam0", 20, 3, 0.6)))
    fused = fuse([a], MatchSet(groups=((("cam0", 0),), (("cam0", 1),))))
    assert fused.objects == a.objects


def test_fuse_center_in_convex_hull_of_members():
    rng = np.random.default_rng(41)
    for _ in range(50):
        centers = rng.uniform(-20, 20, (3, 2))
        confs = rng.uniform(0.2, 1.0, 3)
        lists = [ObjectList(tick=0, source=f"s{i}",
                            objects=(det(f"s{i}", *centers[i], confs[i]),))
                 for i in range(3)]
        match = MatchSet(groups=((("s0", 0), ("s1", 0), ("s2", 0)),))
        fused = fuse(lists, match)
        hull = g.convex_hull([tuple(c) for c in centers])
        if len(hull) >= 3:
            assert g.point_in_polygon(fused.objects[0].center, hull, edge_tol=1e-9)


def test_fuse_output_size_bounded_and_order_invariant():
    a = ObjectList(tick=0, source="cam0",
                   objects=(det("cam0", 10, 0, 0.9), det("cam0", 30, 5, 0.7)))
    b = ObjectList(tick=0, source="lidar0",
                   objects=(det("lidar0", 10.2, 0, 0.6), det("lidar0", -5, 2, 0.5)))
    l1, m1 = lists_and_match(a, b)
    l2, m2 = lists_and_match(b, a)
    f1 = fuse(l1, m1)
    f2 = fuse(l2, m2)
    assert len(f1.objects) <= 4
    assert sorted(records_key(o) for o in f1.objects) == \
           sorted(records_key(o) for o in f2.objects)


def records_key(o):
    return (o.object_class, round(o.center[0], 9), round(o.center[1], 9), o.source)


def test_fuse_class_from_highest_confidence():
    a = ObjectList(tick=0, source="cam0", objects=(det("cam0", 10, 0, 0.9, cls="truck"),))
    b = ObjectList(tick=0, source="lidar0", objects=(det("lidar0", 10.1, 0, 0.4),))
    lists, match = lists_and_match(a, b)
    assert fuse(lists, match).objects[0].object_class == "truck"
