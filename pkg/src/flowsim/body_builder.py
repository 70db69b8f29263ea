"""Builder for the shipped default vascular topology.

The default body is synthetic: a heart-plus-aorta trunk feeding 24 closed
loops, one per peripheral region. The arterial side is a binary branching
tree with uniform per-junction weights; an organ's visit probability is
2^-(depth+1), from 1/8 for near-trunk organs down to 1/64 for distal ones
(depth multisets satisfy Kraft equality exactly, so probabilities sum to
one). Both body sides share one tree shape over the same |x| columns,
which keeps the four mirrored left/right pairs bit-identical in loop time.

Each loop is an artery column on the anterior plane (z = +1), a slow
serpentine "capillary" descent through the organ to the posterior plane
(z = -1), and a vein column merging into the venous trunk back to the
heart. Trunk plumbing (corridor edges along y = +3, vein returns along
y = -2) belongs to the heart region so organ centroids stay on the organs.

Organ placement is solved numerically: the serpentine is centred on the
region's own length-weighted centroid (fixed point in y, clamped at the
trunk corridors), which guarantees an event dropped at the centroid is
within detection range of its own loop. Region names are a stand-in list;
no anatomical dataset is used.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass

from .topology import (
    VascularTopology,
    VesselSegment,
    all_loop_times,
    point_to_polyline_distance,
    region_centroid,
    to_dict,
    validate,
)

HEART_ENTRY = (0.0, -2.0, -1.0)
AORTA_START = (0.0, 1.0, 1.0)
BRANCH_POINT = (0.0, 3.0, 1.0)
ARTERY_TRUNK_Y = 3.0
VEIN_TRUNK_Y = -2.0
HEART_SPEED = 5.0
TRUNK_MARGIN = 1.0  # min gap between a serpentine and the trunk corridors (cm)
JUNCTION_STEP = 0.25  # x spacing between nested corridor junctions (cm)


@dataclass
class OrganPlan:
    name: str
    column_x: float      # +/- pairs mirror; one organ per column per side
    y_guess: float       # initial organ centre, refined by the solver
    loop_time: float     # target heart-to-heart circulation time (s)
    vein_speed: float    # 2 cm/s limb loops, 4 cm/s torso loops
    depth: int           # arterial-tree depth per side; visit p = 2^-(depth+1)


# Distinct target loop times, pairwise separated by 2 s; mirrored pairs
# share one value, giving 20 distinct times over 24 regions. Tree depths
# are assigned per |x| column identically on both sides (Kraft equality
# per side: 1/4 + 3/8 + 4/16 + 4/32 = 1).
ORGAN_PLANS = [
    OrganPlan("thymus", 2.5, 9.0, 22.0, 4.0, 2),
    OrganPlan("neck", -2.5, 20.0, 34.0, 4.0, 2),
    OrganPlan("diaphragm", 5.0, -7.0, 16.0, 4.0, 3),
    OrganPlan("stomach", -5.0, -8.0, 18.0, 4.0, 3),
    OrganPlan("left_lung", 7.5, 9.0, 32.0, 4.0, 3),
    OrganPlan("right_lung", -7.5, 9.0, 32.0, 4.0, 3),
    OrganPlan("left_kidney", 10.0, -12.0, 24.0, 4.0, 3),
    OrganPlan("right_kidney", -10.0, -12.0, 24.0, 4.0, 3),
    OrganPlan("left_leg", 12.5, -60.0, 54.0, 2.0, 5),
    OrganPlan("right_leg", -12.5, -60.0, 54.0, 2.0, 5),
    OrganPlan("pancreas", 15.0, -9.0, 20.0, 4.0, 4),
    OrganPlan("duodenum", -15.0, -11.0, 26.0, 4.0, 4),
    OrganPlan("liver", 17.5, -10.0, 28.0, 4.0, 4),
    OrganPlan("gallbladder", -17.5, -12.0, 30.0, 4.0, 4),
    OrganPlan("spleen", 20.0, -13.0, 36.0, 4.0, 4),
    OrganPlan("small_intestine", -20.0, -20.0, 38.0, 4.0, 4),
    OrganPlan("adrenal_glands", 22.5, -16.0, 40.0, 4.0, 5),
    OrganPlan("large_intestine", -22.5, -23.0, 46.0, 4.0, 5),
    OrganPlan("left_arm", 25.0, 8.0, 42.0, 2.0, 4),
    OrganPlan("right_arm", -25.0, 8.0, 42.0, 2.0, 4),
    OrganPlan("bladder", 27.5, -28.0, 48.0, 4.0, 5),
    OrganPlan("rectum", -27.5, -34.0, 52.0, 4.0, 5),
    OrganPlan("head", 30.0, 30.0, 44.0, 4.0, 5),
    OrganPlan("pelvis", -30.0, -28.0, 50.0, 4.0, 5),
]

MIRRORED_PAIRS = [
    ("left_arm", "right_arm"),
    ("left_leg", "right_leg"),
    ("left_lung", "right_lung"),
    ("left_kidney", "right_kidney"),
]


# ---------------------------------------------------------------------------
# Arterial branching tree (one shape shared by both body sides)
# ---------------------------------------------------------------------------

@dataclass
class TreeNode:
    depth: int
    min_col: float                  # smallest organ column below, for layout
    organ: OrganPlan | None = None  # leaves only
    children: tuple["TreeNode", "TreeNode"] | None = None


def _build_side_tree(plans: list[OrganPlan]) -> TreeNode:
    """Binary tree realizing the per-side leaf depths (Kraft sum must be 1)."""
    kraft = sum(2.0 ** -p.depth for p in plans)
    if abs(kraft - 1.0) > 1e-12:
        raise ValueError(f"side depths violate Kraft equality: sum {kraft}")
    nodes = [TreeNode(depth=p.depth, min_col=abs(p.column_x), organ=p) for p in plans]
    while len(nodes) > 1:
        nodes.sort(key=lambda n: (-n.depth, n.min_col))
        a, b = nodes[0], nodes[1]
        if a.depth != b.depth:
            raise ValueError("unmergeable depth multiset")
        nodes = nodes[2:]
        nodes.append(TreeNode(depth=a.depth - 1, min_col=min(a.min_col, b.min_col),
                              children=(a, b)))
    root = nodes[0]
    if root.depth != 0:
        raise ValueError(f"tree root at depth {root.depth}, expected 0")
    return root


def _junctions_to_min_leaf(node: TreeNode) -> int:
    if node.organ is not None:
        return 0
    child = min(node.children, key=lambda c: c.min_col)
    return 1 + _junctions_to_min_leaf(child)


def _node_x(node: TreeNode) -> float:
    """Corridor position: strictly increasing along every root-to-leaf path."""
    if node.organ is not None:
        return abs(node.organ.column_x)
    return node.min_col - JUNCTION_STEP * _junctions_to_min_leaf(node)


def _tree_path_lengths(root: TreeNode) -> dict[str, float]:
    """Corridor length from the side root to each organ's column base."""
    out: dict[str, float] = {}

    def walk(node: TreeNode, x_here: float, length: float):
        if node.organ is not None:
            out[node.organ.name] = length
            return
        for child in node.children:
            x_child = _node_x(child)
            walk(child, x_child, length + abs(x_child - x_here))

    walk(root, _node_x(root), 0.0)
    return out


# ---------------------------------------------------------------------------
# Organ placement solver
# ---------------------------------------------------------------------------

def _serpentine_shape(transition_len: float) -> tuple[int, float]:
    """Rung count (even) and sweep amplitude for a given capillary length."""
    rungs = 2 * max(1, round(transition_len / 10.0))
    dz = 2.0 / rungs
    amplitude = math.sqrt((transition_len / rungs) ** 2 - dz**2)
    return rungs, amplitude


def _budget(plan: OrganPlan, t: float, artery_path: float, trunk_time: float):
    """(artery leg, vein leg, serpentine length) for column endpoint t."""
    x = abs(plan.column_x)
    la = abs(t - ARTERY_TRUNK_Y)
    lv = abs(t - VEIN_TRUNK_Y)
    lt = (
        plan.loop_time
        - trunk_time
        - (artery_path + la) / 10.0
        - (lv + x) / plan.vein_speed
    )
    if lt <= 2.5:
        raise ValueError(f"{plan.name}: loop time {plan.loop_time} leaves no capillary budget")
    return la, lv, lt


def _organ_geometry(plan: OrganPlan, u: float, above: bool,
                    artery_path: float, trunk_time: float):
    """Self-consistent (t, la, lv, lt, rungs, amp) for a serpentine centred at u."""
    t0 = (u - 1.5) if above else (u + 1.5)
    rungs, amp = _serpentine_shape(_budget(plan, t0, artery_path, trunk_time)[2])
    dz = 2.0 / rungs
    for _ in range(300):
        t = (u - amp / 2.0) if above else (u + amp / 2.0)
        la, lv, lt = _budget(plan, t, artery_path, trunk_time)
        amp_new = math.sqrt((lt / rungs) ** 2 - dz**2)
        if abs(amp_new - amp) < 1e-13:
            return t, la, lv, lt, rungs, amp_new
        amp = amp_new
    raise ValueError(f"{plan.name}: serpentine shape did not converge")


def _solve_organ(plan: OrganPlan, artery_path: float, trunk_time: float):
    """Place the organ centre u so the region centroid lies on the serpentine.

    The approach legs always pull the centroid toward the trunk, so u is
    clamped at a margin outside the trunk corridors and the serpentine sweep
    must be wide enough to contain the resulting centroid.
    """
    above = plan.y_guess > ARTERY_TRUNK_Y
    u = plan.y_guess
    for _ in range(500):
        t, la, lv, lt, rungs, amp = _organ_geometry(plan, u, above, artery_path, trunk_time)
        mid_a = (ARTERY_TRUNK_Y + t) / 2.0
        mid_v = (t + VEIN_TRUNK_Y) / 2.0
        yc = (la * mid_a + lt * u + lv * mid_v) / (la + lt + lv)
        u_new = u + 0.6 * (yc - u)
        if above:
            u_new = max(u_new, ARTERY_TRUNK_Y + TRUNK_MARGIN + amp / 2.0)
        else:
            u_new = min(u_new, VEIN_TRUNK_Y - TRUNK_MARGIN - amp / 2.0)
        if abs(u_new - u) < 1e-12:
            u = u_new
            break
        u = u_new
    t, la, lv, lt, rungs, amp = _organ_geometry(plan, u, above, artery_path, trunk_time)
    mid_a = (ARTERY_TRUNK_Y + t) / 2.0
    mid_v = (t + VEIN_TRUNK_Y) / 2.0
    yc = (la * mid_a + lt * u + lv * mid_v) / (la + lt + lv)
    if abs(yc - u) > amp / 2.0 - 0.3:
        raise ValueError(
            f"{plan.name}: centroid offset {abs(yc - u):.2f} cm exceeds the "
            f"serpentine half-sweep {amp / 2.0:.2f} cm"
        )
    return u, lt, rungs, amp


def _serpentine_polyline(x: float, u: float, rungs: int, amp: float, above: bool):
    """Zigzag from the artery end down to z = -1, centred on y = u."""
    y_lo, y_hi = u - amp / 2.0, u + amp / 2.0
    start_y = y_lo if above else y_hi
    other_y = y_hi if above else y_lo
    pts = [(x, start_y, 1.0)]
    for k in range(1, rungs + 1):
        y = other_y if k % 2 == 1 else start_y
        pts.append((x, y, 1.0 - 2.0 * k / rungs))
    return pts


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

def build_default_topology() -> VascularTopology:
    segments: dict[str, VesselSegment] = {}
    regions: dict[str, list[str]] = {"heart": []}

    def add(seg: VesselSegment) -> None:
        segments[seg.id] = seg
        regions.setdefault(seg.region, []).append(seg.id)

    heart = VesselSegment(
        id="heart",
        polyline=[HEART_ENTRY, (0.0, 0.0, -1.0), (0.0, 0.0, 1.0), AORTA_START],
        speed=HEART_SPEED,
        kind="heart",
        region="heart",
        successors=[("aorta", 1.0)],
    )
    add(heart)
    aorta = VesselSegment(
        id="aorta",
        polyline=[AORTA_START, BRANCH_POINT],
        speed=20.0,
        kind="aorta",
        region="heart",
        successors=[],  # the two side roots attach below
    )
    add(aorta)
    trunk_time = heart.length / heart.speed + aorta.length / aorta.speed

    sides = {
        +1: [p for p in ORGAN_PLANS if p.column_x > 0],
        -1: [p for p in ORGAN_PLANS if p.column_x < 0],
    }
    # one shared tree shape: the |x| -> depth map is identical on both sides,
    # keeping mirrored path lengths bit-identical
    trees = {s: _build_side_tree(plans) for s, plans in sides.items()}
    path_lengths: dict[str, float] = {}
    for s, tree in trees.items():
        for name, length in _tree_path_lengths(tree).items():
            # corridor runs from the branch point to the side root, then tree
            path_lengths[name] = abs(_node_x(tree)) + length

    def add_tree(side: int, node: TreeNode, parent_id: str, x_parent: float,
                 counter: list[int]) -> None:
        x_here = _node_x(node)
        if node.organ is not None:
            leaf_id = f"{node.organ.name}_trunk_artery"
            add(VesselSegment(
                id=leaf_id,
                polyline=[(side * x_parent, ARTERY_TRUNK_Y, 1.0),
                          (side * x_here, ARTERY_TRUNK_Y, 1.0)],
                speed=10.0,
                kind="artery",
                region="heart",
                successors=[(f"{node.organ.name}_artery", 1.0)],
            ))
            segments[parent_id].successors.append((leaf_id, 1.0))
            return
        label = "right" if side > 0 else "left"
        jid = f"trunk_{label}_j{counter[0]}"
        counter[0] += 1
        add(VesselSegment(
            id=jid,
            polyline=[(side * x_parent, ARTERY_TRUNK_Y, 1.0),
                      (side * x_here, ARTERY_TRUNK_Y, 1.0)],
            speed=10.0,
            kind="artery",
            region="heart",
            successors=[],
        ))
        segments[parent_id].successors.append((jid, 1.0))
        for child in node.children:
            add_tree(side, child, jid, x_here, counter)

    for s, tree in trees.items():
        # root edge leaves the aorta branch point toward the side root
        add_tree(s, tree, "aorta", 0.0, counter=[0])

    for plan in ORGAN_PLANS:
        name = plan.name
        x = plan.column_x
        above = plan.y_guess > ARTERY_TRUNK_Y
        u, lt, rungs, amp = _solve_organ(plan, path_lengths[name], trunk_time)
        t = (u - amp / 2.0) if above else (u + amp / 2.0)

        regions[name] = []
        artery_id = f"{name}_artery"
        serp_id = f"{name}_capillary"
        vein_id = f"{name}_vein"
        add(VesselSegment(
            id=artery_id,
            polyline=[(x, ARTERY_TRUNK_Y, 1.0), (x, t, 1.0)],
            speed=10.0,
            kind="artery",
            region=name,
            successors=[(serp_id, 1.0)],
        ))
        add(VesselSegment(
            id=serp_id,
            polyline=_serpentine_polyline(x, u, rungs, amp, above),
            speed=1.0,
            kind="transition",
            region=name,
            successors=[(vein_id, 1.0)],
        ))
        conn_v_id = f"{name}_trunk_vein"
        add(VesselSegment(
            id=vein_id,
            polyline=[(x, t, -1.0), (x, VEIN_TRUNK_Y, -1.0)],
            speed=plan.vein_speed,
            kind="vein",
            region=name,
            successors=[(conn_v_id, 1.0)],
        ))
        add(VesselSegment(
            id=conn_v_id,
            polyline=[(x, VEIN_TRUNK_Y, -1.0), HEART_ENTRY],
            speed=plan.vein_speed,
            kind="vein",
            region="heart",
            successors=[("heart", 1.0)],
        ))

    topo = VascularTopology(
        segments=segments,
        regions=regions,
        heart_region="heart",
        mirrored_pairs=list(MIRRORED_PAIRS),
        anchor_position=(0.0, 0.0, 2.0),
    )
    return validate(topo)


def visit_probabilities() -> dict[str, float]:
    """Analytic per-circulation visit probability for each organ."""
    return {p.name: 2.0 ** -(p.depth + 1) for p in ORGAN_PLANS}


# ---------------------------------------------------------------------------
# Geometry audit: detectability and separation guarantees
# ---------------------------------------------------------------------------

def centroid_vessel_distances(topo: VascularTopology) -> dict[str, tuple[float, float]]:
    """Per region: (distance centroid->own vessels, distance centroid->other regions')."""
    out = {}
    for region in topo.regions:
        c = region_centroid(topo, region)
        own = min(
            point_to_polyline_distance(c, topo.segments[sid].polyline)
            for sid in topo.regions[region]
        )
        other = min(
            point_to_polyline_distance(c, seg.polyline)
            for seg in topo.segments.values()
            if seg.region != region
        )
        out[region] = (own, other)
    return out


def audit(topo: VascularTopology) -> list[str]:
    """Return a list of audit failures (empty = default-body guarantees hold)."""
    problems = []
    dists = centroid_vessel_distances(topo)
    for region, (own, other) in dists.items():
        if own > 0.85:
            problems.append(f"{region}: centroid {own:.2f} cm from own vessels (> 0.85)")
        if region != topo.heart_region and other < 1.15:
            problems.append(f"{region}: centroid {other:.2f} cm from another region (< 1.15)")
    times = all_loop_times(topo)
    values = sorted(set(round(t, 9) for t in times.values()))
    if len(values) != 20:
        problems.append(f"expected 20 distinct loop times, got {len(values)}")
    gaps = [b - a for a, b in zip(values, values[1:])]
    if gaps and min(gaps) < 0.5:
        problems.append(f"minimum loop-time separation {min(gaps):.3f} s < 0.5 s")
    for a, b in topo.mirrored_pairs:
        if times[a] != times[b]:
            problems.append(f"mirrored pair ({a}, {b}) loop times differ")
    plans = {p.name: p for p in ORGAN_PLANS}
    for region, t in times.items():
        if abs(t - plans[region].loop_time) > 1e-9:
            problems.append(
                f"{region}: loop time {t:.6f} s misses target {plans[region].loop_time}"
            )
    if abs(sum(visit_probabilities().values()) - 1.0) > 1e-12:
        problems.append("visit probabilities do not sum to 1")
    hc = region_centroid(topo, topo.heart_region)
    if math.dist(hc, (0.0, 0.0, 0.0)) > 1.0:
        problems.append(f"heart centroid {hc} more than 1 cm from origin")
    return problems


def main(argv=None) -> int:
    out_path = (argv or sys.argv[1:] or ["src/flowsim/data/default_body.json"])[0]
    topo = build_default_topology()
    problems = audit(topo)
    times = all_loop_times(topo)
    p_visit = visit_probabilities()
    print(f"{len(topo.segments)} segments, {len(topo.regions)} regions")
    for region in sorted(times, key=times.get):
        own, other = centroid_vessel_distances(topo)[region]
        print(f"  {region:18s} loop {times[region]:7.3f} s  p_visit 1/{round(1/p_visit[region]):>3d}"
              f"  centroid->own {own:.3f} cm  ->other {other:.2f} cm")
    if problems:
        for p in problems:
            print("AUDIT FAIL:", p)
        return 1
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(to_dict(topo), fh, indent=1)
        fh.write("\n")
    print(f"wrote {out_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
