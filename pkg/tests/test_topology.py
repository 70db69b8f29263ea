import copy
import json
import math

import pytest

from flowsim import topology
from flowsim.body_builder import build_default_topology
from flowsim.topology import (
    MultipleLoopsError,
    TopologyError,
    VascularTopology,
    VesselSegment,
    all_loop_times,
    from_dict,
    load_and_validate,
    load_default,
    loop_time,
    region_centroid,
    serialize,
    to_dict,
)


def straight(sid, a, b, speed, kind, region, successors):
    return VesselSegment(
        id=sid, polyline=[a, b], speed=speed, kind=kind, region=region,
        successors=successors,
    )


@pytest.fixture(scope="module")
def default_topo():
    return load_default()


# -- loop_time ---------------------------------------------------------------

def test_loop_time_sums_length_over_speed():
    # aorta 10 cm @20 + artery 30 @10 + transition 4 @1 + vein 30 @2 = 22.5 s
    segs = {
        "ao": straight("ao", (0, 0, 1), (0, 10, 1), 20.0, "aorta", "heart", [("ar", 1.0)]),
        "ar": straight("ar", (0, 10, 1), (0, 40, 1), 10.0, "artery", "limb", [("tr", 1.0)]),
        "tr": straight("tr", (0, 40, 1), (0, 40 - math.sqrt(12), -1), 1.0, "transition",
                       "limb", [("ve", 1.0)]),
        "ve": straight("ve", (0, 40 - math.sqrt(12), -1), (0, 10 - math.sqrt(12), -1),
                       2.0, "vein", "limb", [("ao", 1.0)]),
    }
    topo = VascularTopology(
        segments=segs,
        regions={"heart": ["ao"], "limb": ["ar", "tr", "ve"]},
        heart_region="heart",
        mirrored_pairs=[],
        anchor_position=(0.0, 0.0, 2.0),
    )
    assert loop_time(topo, "limb") == pytest.approx(22.5, abs=1e-12)
    with pytest.raises(TopologyError):
        loop_time(topo, "heart")


def test_loop_time_scales_linearly():
    def build(scale):
        segs = {
            "ao": straight("ao", (0, 0, 1), (0, 10 * scale, 1), 20.0, "aorta", "heart",
                           [("ve", 1.0)]),
            "ve": straight("ve", (0, 10 * scale, -1), (0, 0, -1), 2.0, "vein", "limb",
                           [("ao", 1.0)]),
        }
        return VascularTopology(segs, {"heart": ["ao"], "limb": ["ve"]}, "heart", [],
                                (0, 0, 2))
    assert loop_time(build(2), "limb") == pytest.approx(2 * loop_time(build(1), "limb"))


def test_loop_time_multiple_loops_reports_all():
    segs = {
        "h": straight("h", (0, 0, 0), (0, 1, 0), 5.0, "heart", "heart",
                      [("a", 1.0), ("b", 1.0)]),
        "a": straight("a", (0, 1, 1), (0, 11, 1), 10.0, "artery", "organ", [("h", 1.0)]),
        "b": straight("b", (0, 1, 1), (0, 21, 1), 10.0, "artery", "organ", [("h", 1.0)]),
    }
    topo = VascularTopology(segs, {"heart": ["h"], "organ": ["a", "b"]}, "heart", [],
                            (0, 0, 2))
    with pytest.raises(MultipleLoopsError) as err:
        loop_time(topo, "organ")
    assert sorted(err.value.times) == pytest.approx([1.2, 2.2])


def test_mirrored_pairs_have_identical_loop_times(default_topo):
    times = all_loop_times(default_topo)
    for a, b in default_topo.mirrored_pairs:
        assert times[a] == times[b]


def test_default_topology_loop_time_separation(default_topo):
    times = all_loop_times(default_topo)
    assert len(times) == 24
    assert all(t > 0 for t in times.values())
    distinct = sorted(set(times.values()))
    assert len(distinct) == 20  # 4 mirrored pairs collapse
    gaps = [b - a for a, b in zip(distinct, distinct[1:])]
    assert min(gaps) >= 0.5


# -- region_centroid ---------------------------------------------------------

def test_centroid_single_straight_segment():
    segs = {"s": straight("s", (0, 0, 1), (0, 10, 1), 10.0, "artery", "r", [("s", 1.0)])}
    topo = VascularTopology(segs, {"r": ["s"]}, "r", [], (0, 0, 2))
    assert region_centroid(topo, "r") == pytest.approx((0.0, 5.0, 1.0))


def test_centroid_two_collinear_segments():
    segs = {
        "a": straight("a", (0, 0, 1), (0, 10, 1), 10.0, "artery", "r", [("b", 1.0)]),
        "b": straight("b", (0, 10, 1), (0, 20, 1), 10.0, "artery", "r", [("a", 1.0)]),
    }
    topo = VascularTopology(segs, {"r": ["a", "b"]}, "r", [], (0, 0, 2))
    assert region_centroid(topo, "r") == pytest.approx((0.0, 10.0, 1.0))


def test_centroid_invariant_under_polyline_reversal():
    seg = VesselSegment("s", [(0, 0, 1), (1, 4, 1), (3, 7, 0.5)], 10.0, "artery", "r",
                        [("s", 1.0)])
    rev = VesselSegment("s", list(reversed(seg.polyline)), 10.0, "artery", "r",
                        [("s", 1.0)])
    t1 = VascularTopology({"s": seg}, {"r": ["s"]}, "r", [], (0, 0, 2))
    t2 = VascularTopology({"s": rev}, {"r": ["s"]}, "r", [], (0, 0, 2))
    assert region_centroid(t1, "r") == pytest.approx(region_centroid(t2, "r"))


def test_default_heart_centroid_near_origin(default_topo):
    c = region_centroid(default_topo, "heart")
    assert math.dist(c, (0, 0, 0)) < 1.0


def test_unknown_region_rejected(default_topo):
    with pytest.raises(TopologyError):
        region_centroid(default_topo, "no_such_region")
    with pytest.raises(TopologyError):
        loop_time(default_topo, "no_such_region")


# -- load_and_validate -------------------------------------------------------

def test_default_file_loads_with_expected_shape(default_topo):
    assert len(default_topo.regions) == 25
    assert default_topo.heart_region == "heart"
    assert len(default_topo.mirrored_pairs) == 4
    pairs = {frozenset(p) for p in default_topo.mirrored_pairs}
    assert frozenset(("left_arm", "right_arm")) in pairs
    assert frozenset(("left_leg", "right_leg")) in pairs
    assert frozenset(("left_lung", "right_lung")) in pairs
    assert frozenset(("left_kidney", "right_kidney")) in pairs


def test_shipped_file_matches_builder(default_topo):
    assert to_dict(default_topo) == to_dict(build_default_topology())


def test_vein_must_be_posterior(tmp_path, default_topo):
    data = to_dict(default_topo)
    for seg in data["segments"]:
        if seg["kind"] == "vein":
            seg["polyline"][0][2] = +1.0
            broken = seg["id"]
            break
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(data))
    with pytest.raises(TopologyError, match="posterior"):
        load_and_validate(p)


def test_region_count_enforced(tmp_path, default_topo):
    data = to_dict(default_topo)
    # merge one region into another to drop to 24
    victim = "thymus"
    keep = "diaphragm"
    for seg in data["segments"]:
        if seg["region"] == victim:
            seg["region"] = keep
    data["regions"][keep].extend(data["regions"].pop(victim))
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(data))
    with pytest.raises(TopologyError, match="25 regions"):
        load_and_validate(p)


def test_speed_defaults_enforced_and_relaxable(tmp_path, default_topo):
    data = to_dict(default_topo)
    for seg in data["segments"]:
        if seg["kind"] == "aorta":
            seg["speed"] = 25.0
    p = tmp_path / "fast.json"
    p.write_text(json.dumps(data))
    with pytest.raises(TopologyError, match="speed"):
        load_and_validate(p)
    assert load_and_validate(p, relax_speeds=True).segments["aorta"].speed == 25.0


def test_malformed_file_rejected(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    with pytest.raises(TopologyError, match="JSON"):
        load_and_validate(p)
    with pytest.raises(TopologyError, match="not found"):
        load_and_validate(tmp_path / "missing.json")


def test_round_trip_identity(tmp_path, default_topo):
    p = tmp_path / "copy.json"
    serialize(default_topo, p)
    again = load_and_validate(p)
    assert to_dict(again) == to_dict(default_topo)
    assert again == default_topo


def test_dead_end_rejected(default_topo):
    broken = from_dict(to_dict(default_topo))
    broken.segments["liver_capillary"].successors = []
    with pytest.raises(TopologyError, match="dead end"):
        topology.validate(broken)
