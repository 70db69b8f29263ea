import math

import numpy as np
import pytest

from flowsim.mobility import MOBILITY_DT, DevicePosition, advance_device, choose_branch
from flowsim.topology import VascularTopology, VesselSegment, loop_time


def seg(sid, a, b, speed, kind, region, succ):
    return VesselSegment(id=sid, polyline=[a, b], speed=speed, kind=kind,
                         region=region, successors=succ)


@pytest.fixture
def two_segment_loop():
    segs = {
        "art": seg("art", (0, 0, 1), (0, 10, 1), 10.0, "artery", "organ", [("tr", 1.0)]),
        "tr": seg("tr", (0, 10, 1), (0, 10, -1), 1.0, "transition", "organ", [("h", 1.0)]),
        "h": seg("h", (0, 10, -1), (0, 0, 1), 5.0, "heart", "heart", [("art", 1.0)]),
    }
    return VascularTopology(segs, {"heart": ["h"], "organ": ["art", "tr"]}, "heart",
                            [], (0, 0, 2))


def test_advance_within_segment(two_segment_loop):
    rng = np.random.default_rng(0)
    pos = DevicePosition("art", 2.0)
    new, crossed = advance_device(pos, 0.01, two_segment_loop, rng)
    assert new.segment == "art"
    assert new.offset == pytest.approx(2.1, abs=1e-12)
    assert not crossed


def test_advance_piecewise_across_boundary(two_segment_loop):
    # 0.05 cm from the artery end at 10 cm/s: 5 ms there, then 5 ms at 1 cm/s
    rng = np.random.default_rng(0)
    pos = DevicePosition("art", 9.95)
    new, crossed = advance_device(pos, 0.01, two_segment_loop, rng)
    assert new.segment == "tr"
    assert new.offset == pytest.approx(0.005, abs=1e-12)
    assert not crossed


def test_crossed_heart_flag(two_segment_loop):
    rng = np.random.default_rng(0)
    pos = DevicePosition("tr", 1.999)
    new, crossed = advance_device(pos, 0.01, two_segment_loop, rng)
    assert new.segment == "h"
    assert crossed


def test_distance_conservation(two_segment_loop):
    rng = np.random.default_rng(3)
    pos = DevicePosition("art", 9.9)
    dt = 0.05
    new, _ = advance_device(pos, dt, two_segment_loop, rng)
    # time split: (10-9.9)/10 s in artery, the rest in the transition
    t_art = 0.1 / 10.0
    expected_tr = (dt - t_art) * 1.0
    assert new.offset == pytest.approx(expected_tr, abs=1e-9)


def test_mean_return_time_matches_loop_time(two_segment_loop):
    rng = np.random.default_rng(7)
    expected = loop_time(two_segment_loop, "organ")
    pos = DevicePosition("h", 0.0)
    crossings = []
    t = 0.0
    last = 0.0
    # run long enough for 100 heart entries
    while len(crossings) < 100:
        pos, crossed = advance_device(pos, MOBILITY_DT, two_segment_loop, rng)
        t += MOBILITY_DT
        if crossed and pos.segment == "h" and pos.offset < 5.0 * MOBILITY_DT:
            crossings.append(t - last)
            last = t
    mean_rt = sum(crossings[1:]) / len(crossings[1:])
    assert abs(mean_rt - expected) <= MOBILITY_DT + 1e-9


def test_determinism_same_seed_same_trajectory(two_segment_loop):
    def run(seed):
        rng = np.random.default_rng(seed)
        pos = DevicePosition("art", 0.0)
        out = []
        for _ in range(1000):
            pos, _ = advance_device(pos, MOBILITY_DT, two_segment_loop, rng)
            out.append((pos.segment, pos.offset))
        return out
    assert run(5) == run(5)


def test_choose_branch_single_successor():
    rng = np.random.default_rng(0)
    assert choose_branch([("only", 3.0)], rng) == "only"


def test_choose_branch_empty_rejected():
    with pytest.raises(ValueError):
        choose_branch([], np.random.default_rng(0))


@pytest.mark.parametrize("weights,expected", [((1.0, 1.0), 0.5), ((3.0, 1.0), 0.75)])
def test_choose_branch_frequencies(weights, expected):
    rng = np.random.default_rng(123)
    succ = [("a", weights[0]), ("b", weights[1])]
    n = 100_000
    hits = sum(choose_branch(succ, rng) == "a" for _ in range(n))
    # binomial 5-sigma bound is ~0.8%, inside the +/-1% contract
    assert abs(hits / n - expected) < 0.01
