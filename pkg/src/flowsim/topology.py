"""Vascular graph model: vessel segments, body regions, closed loops.

The bloodstream is a directed graph of 3-D polyline segments grouped into
25 named regions. Every segment lies on at least one closed loop through
the heart, which is what makes circulation-time classification possible.
Coordinates are centimetres: x left-right, y head-toe, z anterior-posterior
(anterior positive). Speeds are cm/s.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx

SCHEMA_VERSION = 1

# Speeds the validator pins per vessel kind (cm/s). Veins are a range.
KIND_SPEEDS = {"aorta": 20.0, "artery": 10.0, "transition": 1.0}
VEIN_SPEED_RANGE = (2.0, 4.0)
REQUIRED_REGION_COUNT = 25
Z_RANGE = (-2.0, 2.0)


class TopologyError(ValueError):
    """Raised when a topology file fails schema or invariant validation."""


class MultipleLoopsError(TopologyError):
    """A region lies on more than one heart-to-heart loop."""

    def __init__(self, region: str, times: list[float]):
        super().__init__(f"region '{region}' lies on {len(times)} loops with times {times}")
        self.times = times


@dataclass
class VesselSegment:
    id: str
    polyline: list[tuple[float, float, float]]
    speed: float
    kind: str
    region: str
    successors: list[tuple[str, float]] = field(default_factory=list)

    def piece_lengths(self) -> list[float]:
        out = []
        for a, b in zip(self.polyline, self.polyline[1:]):
            out.append(math.dist(a, b))
        return out

    @property
    def length(self) -> float:
        return sum(self.piece_lengths())

    def point_at(self, offset: float) -> tuple[float, float, float]:
        """Interpolated point at arc-length `offset` from the segment start."""
        if offset <= 0.0:
            return self.polyline[0]
        remaining = offset
        for a, b, plen in zip(self.polyline, self.polyline[1:], self.piece_lengths()):
            if remaining <= plen or plen == 0.0:
                f = remaining / plen if plen > 0.0 else 0.0
                return (
                    a[0] + f * (b[0] - a[0]),
                    a[1] + f * (b[1] - a[1]),
                    a[2] + f * (b[2] - a[2]),
                )
            remaining -= plen
        return self.polyline[-1]


@dataclass
class VascularTopology:
    segments: dict[str, VesselSegment]
    regions: dict[str, list[str]]
    heart_region: str
    mirrored_pairs: list[tuple[str, str]]
    anchor_position: tuple[float, float, float]
    schema_version: int = SCHEMA_VERSION

    def region_of(self, segment_id: str) -> str:
        return self.segments[segment_id].region

    def heart_segment_ids(self) -> list[str]:
        return [s.id for s in self.segments.values() if s.kind == "heart"]

    def digraph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.segments)
        for seg in self.segments.values():
            for succ, w in seg.successors:
                g.add_edge(seg.id, succ, weight=w)
        return g


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _validate_segment(seg: VesselSegment, relax_speeds: bool) -> None:
    if len(seg.polyline) < 2:
        raise TopologyError(f"segment '{seg.id}': polyline needs >= 2 vertices")
    if seg.length <= 0.0:
        raise TopologyError(f"segment '{seg.id}': polyline has zero length")
    if seg.speed <= 0.0:
        raise TopologyError(f"segment '{seg.id}': speed must be > 0")
    if not relax_speeds:
        if seg.kind in KIND_SPEEDS and seg.speed != KIND_SPEEDS[seg.kind]:
            raise TopologyError(
                f"segment '{seg.id}': kind '{seg.kind}' requires speed "
                f"{KIND_SPEEDS[seg.kind]} cm/s, got {seg.speed}"
            )
        if seg.kind == "vein" and not (VEIN_SPEED_RANGE[0] <= seg.speed <= VEIN_SPEED_RANGE[1]):
            raise TopologyError(
                f"segment '{seg.id}': vein speed must lie in {VEIN_SPEED_RANGE}, got {seg.speed}"
            )
    if seg.kind not in ("aorta", "artery", "vein", "transition", "heart"):
        raise TopologyError(f"segment '{seg.id}': unknown kind '{seg.kind}'")
    for x, y, z in seg.polyline:
        if not (Z_RANGE[0] <= z <= Z_RANGE[1]):
            raise TopologyError(f"segment '{seg.id}': vertex z={z} outside {Z_RANGE}")
        if seg.kind == "artery" and z <= 0.0:
            raise TopologyError(f"segment '{seg.id}': artery must be anterior (z > 0), got z={z}")
        if seg.kind == "vein" and z >= 0.0:
            raise TopologyError(f"segment '{seg.id}': vein must be posterior (z < 0), got z={z}")
    if seg.successors:
        weights = [w for _, w in seg.successors]
        if any(w < 0 for w in weights):
            raise TopologyError(f"segment '{seg.id}': negative branch weight")
        if sum(weights) <= 0.0:
            raise TopologyError(f"segment '{seg.id}': branch weights must sum to > 0")


def validate(topo: VascularTopology, relax_speeds: bool = False) -> VascularTopology:
    for seg in topo.segments.values():
        _validate_segment(seg, relax_speeds)

    if len(topo.regions) != REQUIRED_REGION_COUNT:
        raise TopologyError(f"expected {REQUIRED_REGION_COUNT} regions, got {len(topo.regions)}")
    if topo.heart_region not in topo.regions:
        raise TopologyError(f"heart region '{topo.heart_region}' not among regions")

    for region, members in topo.regions.items():
        if not members:
            raise TopologyError(f"region '{region}' has no segments")
        for sid in members:
            if sid not in topo.segments:
                raise TopologyError(f"region '{region}' references unknown segment '{sid}'")
            if topo.segments[sid].region != region:
                raise TopologyError(
                    f"segment '{sid}' says region '{topo.segments[sid].region}' "
                    f"but is listed under '{region}'"
                )
    assigned = {sid for members in topo.regions.values() for sid in members}
    if assigned != set(topo.segments):
        missing = set(topo.segments) - assigned
        raise TopologyError(f"segments not assigned to any region: {sorted(missing)}")

    heart_kinds = topo.heart_segment_ids()
    if not heart_kinds:
        raise TopologyError("no heart-kind segment")
    if any(topo.segments[sid].region != topo.heart_region for sid in heart_kinds):
        raise TopologyError("heart-kind segments must belong to the heart region")

    for seg in topo.segments.values():
        for succ, _ in seg.successors:
            if succ not in topo.segments:
                raise TopologyError(f"segment '{seg.id}' has unknown successor '{succ}'")
        if not seg.successors:
            raise TopologyError(f"segment '{seg.id}' is a dead end")

    # Strong connectivity through the heart: forward and reverse reachability
    # from any heart segment must cover every segment, which puts each
    # segment on some heart-to-heart cycle.
    g = topo.digraph()
    start = heart_kinds[0]
    fwd = set(nx.descendants(g, start)) | {start}
    rev = set(nx.ancestors(g, start)) | {start}
    if fwd != set(topo.segments) or rev != set(topo.segments):
        unreachable = sorted(set(topo.segments) - (fwd & rev))
        raise TopologyError(f"segments not on a heart-to-heart cycle: {unreachable}")

    cycles = _heart_anchored_cycles(topo)
    for region in topo.regions:
        if region == topo.heart_region:
            continue
        times = _loop_times_for_region(topo, region, cycles)
        if not times:
            raise TopologyError(f"region '{region}' lies on no heart loop")

    for a, b in topo.mirrored_pairs:
        for r in (a, b):
            if r not in topo.regions:
                raise TopologyError(f"mirrored pair names unknown region '{r}'")
        ta = _loop_times_for_region(topo, a, cycles)
        tb = _loop_times_for_region(topo, b, cycles)
        if sorted(ta) != sorted(tb):
            raise TopologyError(f"mirrored pair ({a}, {b}) has unequal loop times: {ta} vs {tb}")

    ax, ay, az = topo.anchor_position
    if not all(math.isfinite(v) for v in (ax, ay, az)):
        raise TopologyError("anchor position must be finite")
    return topo


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def to_dict(topo: VascularTopology) -> dict:
    return {
        "schema_version": topo.schema_version,
        "segments": [
            {
                "id": s.id,
                "polyline": [list(p) for p in s.polyline],
                "speed": s.speed,
                "kind": s.kind,
                "region": s.region,
                "successors": [[sid, w] for sid, w in s.successors],
            }
            for s in topo.segments.values()
        ],
        "regions": {name: list(members) for name, members in topo.regions.items()},
        "heart_region": topo.heart_region,
        "mirrored_pairs": [list(p) for p in topo.mirrored_pairs],
        "anchor_position_cm": list(topo.anchor_position),
    }


def from_dict(data: dict) -> VascularTopology:
    try:
        segments = {}
        for raw in data["segments"]:
            seg = VesselSegment(
                id=str(raw["id"]),
                polyline=[tuple(float(c) for c in p) for p in raw["polyline"]],
                speed=float(raw["speed"]),
                kind=str(raw["kind"]),
                region=str(raw["region"]),
                successors=[(str(s), float(w)) for s, w in raw.get("successors", [])],
            )
            if seg.id in segments:
                raise TopologyError(f"duplicate segment id '{seg.id}'")
            segments[seg.id] = seg
        topo = VascularTopology(
            segments=segments,
            regions={str(k): [str(s) for s in v] for k, v in data["regions"].items()},
            heart_region=str(data["heart_region"]),
            mirrored_pairs=[(str(a), str(b)) for a, b in data.get("mirrored_pairs", [])],
            anchor_position=tuple(float(c) for c in data["anchor_position_cm"]),
            schema_version=int(data.get("schema_version", SCHEMA_VERSION)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, TopologyError):
            raise
        raise TopologyError(f"malformed topology data: {exc}") from exc
    return topo


def serialize(topo: VascularTopology, path: str | Path) -> None:
    Path(path).write_text(json.dumps(to_dict(topo), indent=1), encoding="utf-8")


def load_and_validate(path: str | Path, relax_speeds: bool = False) -> VascularTopology:
    """Load a topology file, validate every invariant, return the topology."""
    p = Path(path)
    if not p.exists():
        raise TopologyError(f"topology file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise TopologyError(f"topology file {p} is not valid JSON: {exc}") from exc
    return validate(from_dict(data), relax_speeds=relax_speeds)


def default_body_path() -> Path:
    return Path(__file__).parent / "data" / "default_body.json"


def load_default() -> VascularTopology:
    return load_and_validate(default_body_path())


# ---------------------------------------------------------------------------
# Geometric queries
# ---------------------------------------------------------------------------

def point_to_polyline_distance(p, polyline) -> float:
    """Euclidean distance from a 3-D point to the nearest point of a polyline."""
    best = math.inf
    for a, b in zip(polyline, polyline[1:]):
        vx, vy, vz = b[0] - a[0], b[1] - a[1], b[2] - a[2]
        wx, wy, wz = p[0] - a[0], p[1] - a[1], p[2] - a[2]
        vv = vx * vx + vy * vy + vz * vz
        s = 0.0 if vv == 0.0 else max(0.0, min(1.0, (wx * vx + wy * vy + wz * vz) / vv))
        dx = p[0] - (a[0] + s * vx)
        dy = p[1] - (a[1] + s * vy)
        dz = p[2] - (a[2] + s * vz)
        best = min(best, math.sqrt(dx * dx + dy * dy + dz * dz))
    return best


def region_centroid(topo: VascularTopology, region: str) -> tuple[float, float, float]:
    """Length-weighted centroid of all polyline pieces belonging to a region."""
    if region not in topo.regions:
        raise TopologyError(f"unknown region '{region}'")
    sx = sy = sz = total = 0.0
    for sid in topo.regions[region]:
        seg = topo.segments[sid]
        for a, b in zip(seg.polyline, seg.polyline[1:]):
            plen = math.dist(a, b)
            sx += plen * (a[0] + b[0]) / 2.0
            sy += plen * (a[1] + b[1]) / 2.0
            sz += plen * (a[2] + b[2]) / 2.0
            total += plen
    return (sx / total, sy / total, sz / total)


def _heart_anchored_cycles(topo: VascularTopology) -> list[list[str]]:
    """All simple cycles that pass through the heart region."""
    heart = set(topo.regions.get(topo.heart_region, ()))
    cycles = []
    for cyc in nx.simple_cycles(topo.digraph()):
        if heart & set(cyc):
            cycles.append(cyc)
    return cycles


def _cycle_time(topo: VascularTopology, cyc: list[str]) -> float:
    # rotate to start at the lowest heart-region id so the float summation
    # order is structural, keeping mirrored loops bit-identical
    heart = set(topo.regions.get(topo.heart_region, ()))
    anchors = [i for i, s in enumerate(cyc) if s in heart]
    start = min(anchors, key=lambda i: cyc[i]) if anchors else 0
    ordered = cyc[start:] + cyc[:start]
    return sum(topo.segments[s].length / topo.segments[s].speed for s in ordered)


def _loop_times_for_region(
    topo: VascularTopology, region: str, cycles: list[list[str]] | None = None
) -> list[float]:
    members = set(topo.regions[region])
    times = []
    for cyc in cycles if cycles is not None else _heart_anchored_cycles(topo):
        if members & set(cyc):
            times.append(_cycle_time(topo, cyc))
    return sorted(times)


def loop_time(topo: VascularTopology, region: str) -> float:
    """Heart-to-heart traversal time of the region's canonical loop (s).

    Sums length/speed over every segment of the unique cycle through the
    heart that visits the region, the heart-passage segments included.
    """
    if region not in topo.regions:
        raise TopologyError(f"unknown region '{region}'")
    if region == topo.heart_region:
        raise TopologyError("heart region has no single canonical loop")
    times = _loop_times_for_region(topo, region)
    if not times:
        raise TopologyError(f"region '{region}' lies on no heart loop")
    if len(times) > 1:
        raise MultipleLoopsError(region, times)
    return times[0]


def all_loop_times(topo: VascularTopology) -> dict[str, float]:
    cycles = _heart_anchored_cycles(topo)
    out = {}
    for region in topo.regions:
        if region == topo.heart_region:
            continue
        times = _loop_times_for_region(topo, region, cycles)
        if not times:
            raise TopologyError(f"region '{region}' lies on no heart loop")
        if len(times) > 1:
            raise MultipleLoopsError(region, times)
        out[region] = times[0]
    return out
