"""Passive nanodevice transport along the vascular graph.

Devices drift with the blood at each segment's speed; at a segment end the
remaining step time continues onto a successor chosen by weighted random
branching. Pure functions of (state, rng) so trajectories are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .topology import VascularTopology, VesselSegment

MOBILITY_DT = 0.01  # s; keeps spatial resolution <= 2 mm at aortic speed


@dataclass
class DevicePosition:
    segment: str
    offset: float  # cm from segment start

    def coords(self, topo: VascularTopology) -> tuple[float, float, float]:
        return topo.segments[self.segment].point_at(self.offset)


def choose_branch(successors: list[tuple[str, float]], rng: np.random.Generator) -> str:
    """Pick successor i with probability weight_i / sum(weights)."""
    if not successors:
        raise ValueError("empty successor list")
    if len(successors) == 1:
        return successors[0][0]
    weights = np.array([w for _, w in successors], dtype=float)
    total = weights.sum()
    if total <= 0.0:
        raise ValueError("branch weights must sum to > 0")
    r = rng.random() * total
    acc = 0.0
    for (sid, w) in successors:
        acc += w
        if r < acc:
            return sid
    return successors[-1][0]


def advance_device(
    position: DevicePosition,
    dt: float,
    topo: VascularTopology,
    rng: np.random.Generator,
) -> tuple[DevicePosition, bool]:
    """Move a device for dt seconds; returns (new position, crossed_heart).

    Each segment's own speed applies to the portion of dt spent inside it.
    crossed_heart is true iff any segment traversed during the step
    (including the starting one) has kind 'heart'.
    """
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    seg: VesselSegment = topo.segments[position.segment]
    offset = position.offset
    remaining = dt
    crossed_heart = seg.kind == "heart"
    while True:
        seg_len = seg.length
        advance = seg.speed * remaining
        if offset + advance <= seg_len:
            offset += advance
            break
        remaining -= (seg_len - offset) / seg.speed
        if not seg.successors:
            raise ValueError(f"dead-end segment '{seg.id}'")
        seg = topo.segments[choose_branch(seg.successors, rng)]
        offset = 0.0
        if seg.kind == "heart":
            crossed_heart = True
    return DevicePosition(segment=seg.id, offset=offset), crossed_heart
