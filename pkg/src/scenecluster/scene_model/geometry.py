"""Frenet-frame geometry on polyline centerlines."""
from __future__ import annotations

import math

import numpy as np

from .types import EntityState, FrenetCoord, Gates, Lane, LaneMap, normalize_angle


def arc_length_project(centerline, point) -> tuple[float, float, int]:
    """Project ``point`` onto a polyline.

    Returns ``(s, d, seg_idx)``: arc length of the closest point, signed
    offset (left of travel positive) and the index of the segment holding it.
    On ties the lower segment index wins.
    """
    pts = np.asarray(centerline, dtype=float)
    p = np.asarray(point, dtype=float)
    a = pts[:-1]
    b = pts[1:]
    ab = b - a
    seg_len2 = np.einsum("ij,ij->i", ab, ab)
    t = np.einsum("ij,ij->i", p - a, ab) / seg_len2
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[:, None] * ab
    # exact vertices at the clamps so ties between neighbouring segments are bitwise ties
    closest = np.where((t >= 1.0)[:, None], b, closest)
    closest = np.where((t <= 0.0)[:, None], a, closest)
    diff = p - closest
    dist = np.hypot(diff[:, 0], diff[:, 1])
    k = int(np.argmin(dist))
    seg_len = math.sqrt(seg_len2[k])
    s_start = float(np.sum(np.sqrt(seg_len2[:k])))
    s = s_start + float(t[k]) * seg_len
    cross = ab[k, 0] * diff[k, 1] - ab[k, 1] * diff[k, 0]
    d = math.copysign(float(dist[k]), cross) if dist[k] > 0 else 0.0
    return s, d, k


def lane_project(lane: Lane, point) -> tuple[float, float, int]:
    s, d, k = arc_length_project(lane.centerline, point)
    return min(s, lane.length), d, k


def frenet_to_cartesian(centerline, s: float, d: float = 0.0) -> tuple[float, float, float]:
    """Walk ``s`` along the polyline and offset ``d`` along the left normal.

    Returns ``(x, y, heading)``. ``s`` is clamped to the polyline.
    """
    pts = np.asarray(centerline, dtype=float)
    seg = np.diff(pts, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    s = min(max(s, 0.0), cum[-1])
    k = int(np.searchsorted(cum, s, side="right") - 1)
    k = min(max(k, 0), len(seg) - 1)
    u = seg[k] / seg_len[k]
    base = pts[k] + (s - cum[k]) * u
    normal = np.array([-u[1], u[0]])
    x, y = base + d * normal
    return float(x), float(y), math.atan2(u[1], u[0])


def segment_heading(lane: Lane, seg_idx: int) -> float:
    dx, dy = lane.centerline[seg_idx + 1] - lane.centerline[seg_idx]
    return math.atan2(dy, dx)


def project_to_lanes(
    entity: EntityState,
    lane_map: LaneMap,
    max_lateral: float | None = None,
    max_heading: float = math.pi / 4,
) -> list[tuple[FrenetCoord, float]]:
    """Candidate lane assignments for an entity, best first.

    An empty list means the entity is off-road.
    """
    if len(lane_map) == 0:
        raise ValueError("lane map is empty")
    found = []
    for lane_id in sorted(lane_map.lanes):
        lane = lane_map.lanes[lane_id]
        s, d, k = lane_project(lane, (entity.x, entity.y))
        gate = lane.default_max_lateral() if max_lateral is None else max_lateral
        if abs(d) > gate:
            continue
        if abs(normalize_angle(entity.yaw - segment_heading(lane, k))) > max_heading:
            continue
        weight = math.exp(-((d / lane.width * 2.0) ** 2))
        found.append((FrenetCoord(lane_id, s, d), weight))
    if not found:
        return []
    total = sum(w for _, w in found)
    found = [(c, w / total) for c, w in found]
    found.sort(key=lambda cw: (abs(cw[0].d), cw[0].lane_id))
    return found


def project_with_gates(entity: EntityState, lane_map: LaneMap, gates: Gates) -> list[tuple[FrenetCoord, float]]:
    return project_to_lanes(entity, lane_map, gates.max_lateral, gates.max_heading)


def _successor_paths(lane_map: LaneMap, start: str, goal: str, max_hops: int) -> list[tuple[str, ...]]:
    paths = []
    stack = [(start,)]
    while stack:
        path = stack.pop()
        if len(path) > 1 and path[-1] == goal:
            paths.append(path)
            continue
        if len(path) - 1 >= max_hops:
            continue
        for succ in lane_map.lanes[path[-1]].successors:
            if succ not in path:
                stack.append(path + (succ,))
    return paths


def _chain_distance(lane_map: LaneMap, path: tuple[str, ...], s_from: float, s_to: float) -> float:
    return sum(lane_map.lanes[lid].length for lid in path[:-1]) - s_from + s_to


def frenet_distance_along(lane_map: LaneMap, src: FrenetCoord, dst: FrenetCoord, max_hops: int = 3) -> float | None:
    """Signed longitudinal distance from ``src`` to ``dst`` along successor chains.

    Positive when ``dst`` lies downstream, negative when upstream, ``None`` when
    the two coordinates are not longitudinally related within ``max_hops``.
    """
    if src.lane_id == dst.lane_id:
        return dst.s - src.s
    candidates = []
    for path in _successor_paths(lane_map, src.lane_id, dst.lane_id, max_hops):
        candidates.append(((len(path) - 1, path), _chain_distance(lane_map, path, src.s, dst.s)))
    for path in _successor_paths(lane_map, dst.lane_id, src.lane_id, max_hops):
        candidates.append(((len(path) - 1, path), -_chain_distance(lane_map, path, dst.s, src.s)))
    if not candidates:
        return None
    # the key depends only on the path, so swapping src/dst picks the same chain
    return min(candidates, key=lambda kc: kc[0])[1]


def _segment_intersections(a: Lane, b: Lane, tol: float = 1e-12):
    pa, pb = a.centerline, b.centerline
    for i in range(len(pa) - 1):
        p, r = pa[i], pa[i + 1] - pa[i]
        for j in range(len(pb) - 1):
            q, w = pb[j], pb[j + 1] - pb[j]
            denom = r[0] * w[1] - r[1] * w[0]
            if denom == 0.0:
                continue
            qp = q - p
            t = (qp[0] * w[1] - qp[1] * w[0]) / denom
            u = (qp[0] * r[1] - qp[1] * r[0]) / denom
            if -tol <= t <= 1 + tol and -tol <= u <= 1 + tol:
                t = min(max(t, 0.0), 1.0)
                u = min(max(u, 0.0), 1.0)
                yield float(a.cum_s[i] + t * a.seg_lengths[i]), float(b.cum_s[j] + u * b.seg_lengths[j])


def lanes_conflict(a: Lane, b: Lane) -> tuple[float, float] | None:
    """Conflict point of two lanes as ``(s_a, s_b)``, or None if they never meet.

    Declared conflicts take precedence, then the first geometric crossing,
    then a shared successor (merge at both lane ends).
    """
    if a.lane_id == b.lane_id:
        raise ValueError("lanes_conflict needs two distinct lanes")
    for other, s_self, s_other in a.conflicts:
        if other == b.lane_id:
            return float(s_self), float(s_other)
    for other, s_self, s_other in b.conflicts:
        if other == a.lane_id:
            return float(s_other), float(s_self)
    hits = []
    for s_a, s_b in _segment_intersections(a, b):
        # a lane touching its direct successor end-to-start is continuation, not conflict
        if b.lane_id in a.successors and s_a == a.length and s_b == 0.0:
            continue
        if a.lane_id in b.successors and s_b == b.length and s_a == 0.0:
            continue
        hits.append((s_a, s_b))
    if hits:
        return min(hits)
    if set(a.successors) & set(b.successors):
        return a.length, b.length
    return None


def _box_corners(e: EntityState) -> np.ndarray:
    c, s = math.cos(e.yaw), math.sin(e.yaw)
    fwd = np.array([c, s]) * (e.length / 2.0)
    left = np.array([-s, c]) * (e.width / 2.0)
    center = np.array([e.x, e.y])
    return np.array([center + fwd + left, center + fwd - left, center - fwd - left, center - fwd + left])


def obb_overlap(a: EntityState, b: EntityState) -> bool:
    """Separating-axis test for two yaw-oriented length x width rectangles.

    Touching boxes count as overlapping.
    """
    reach = (math.hypot(a.length, a.width) + math.hypot(b.length, b.width)) / 2.0
    if math.hypot(a.x - b.x, a.y - b.y) > reach:
        return False
    ca, cb = _box_corners(a), _box_corners(b)
    for yaw in (a.yaw, b.yaw):
        for axis in (np.array([math.cos(yaw), math.sin(yaw)]), np.array([-math.sin(yaw), math.cos(yaw)])):
            pa, pb = ca @ axis, cb @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True
