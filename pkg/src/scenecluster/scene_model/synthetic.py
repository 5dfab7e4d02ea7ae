"""Synthetic scenes and a small demo map standing in for recorded drone data."""
from __future__ import annotations

import math
from enum import Enum

import numpy as np

from .geometry import frenet_to_cartesian, lanes_conflict, obb_overlap
from .types import AgentType, EntityState, Lane, LaneMap, TrafficScene


class Archetype(str, Enum):
    JamChain = "JamChain"
    Sparse = "Sparse"
    Following = "Following"
    ParkedMixed = "ParkedMixed"


class SyntheticSceneError(ValueError):
    pass


LANE_WIDTH = 3.5


def default_lane_map() -> LaneMap:
    """Two-lane eastbound road, a westbound lane and a crossing northbound lane.

    E1-E2-E3 and F1-F2-F3 are successor chains, F lanes are left of E lanes,
    N1 crosses W1, E2 and F2 at x = 105.
    """
    lanes = {}
    for k, (x0, x1) in enumerate([(0.0, 70.0), (70.0, 140.0), (140.0, 210.0)], start=1):
        succ = [f"E{k + 1}"] if k < 3 else []
        lanes[f"E{k}"] = Lane(f"E{k}", [[x0, 0.0], [x1, 0.0]], LANE_WIDTH, succ, left_adjacent=f"F{k}")
        succ = [f"F{k + 1}"] if k < 3 else []
        lanes[f"F{k}"] = Lane(f"F{k}", [[x0, 3.5], [x1, 3.5]], LANE_WIDTH, succ, right_adjacent=f"E{k}")
    lanes["W1"] = Lane("W1", [[210.0, -4.0], [0.0, -4.0]], LANE_WIDTH)
    lanes["N1"] = Lane("N1", [[105.0, -60.0], [105.0, 60.0]], LANE_WIDTH)
    return LaneMap(lanes)


def successor_chains(lane_map: LaneMap, max_lanes: int = 6) -> list[tuple[str, ...]]:
    """Maximal successor chains starting at lanes without predecessors, longest first."""
    starts = [lid for lid in sorted(lane_map.lanes) if not lane_map.predecessors(lid)] or sorted(lane_map.lanes)
    chains = []
    stack = [(lid,) for lid in reversed(starts)]
    while stack:
        path = stack.pop()
        succ = [s for s in lane_map.lanes[path[-1]].successors if s not in path]
        if not succ or len(path) >= max_lanes:
            chains.append(path)
            continue
        for s in reversed(succ):
            stack.append(path + (s,))
    return sorted(chains, key=lambda c: (-chain_length(lane_map, c), c))


def chain_length(lane_map: LaneMap, chain) -> float:
    return sum(lane_map.lanes[lid].length for lid in chain)


def _main_chains(lane_map: LaneMap) -> list[tuple[str, ...]]:
    """The two longest successor chains; jams and platoons stay on the main road."""
    return successor_chains(lane_map)[:2]


def _adjacent_chain(lane_map: LaneMap, chain) -> tuple[str, ...] | None:
    out = []
    for lid in chain:
        lane = lane_map.lanes[lid]
        side = lane.left_adjacent or lane.right_adjacent
        if side is None:
            return None
        out.append(side)
    return tuple(out)


def _place(lane_map: LaneMap, chain, s_chain: float, d: float, speed: float, yaw_noise: float,
           entity_id: int, agent: AgentType, length: float, width: float) -> EntityState:
    for lid in chain:
        lane = lane_map.lanes[lid]
        if s_chain <= lane.length or lid == chain[-1]:
            break
        s_chain -= lane.length
    x, y, heading = frenet_to_cartesian(lane.centerline, s_chain, d)
    yaw = heading + yaw_noise
    return EntityState(entity_id, x, y, speed * math.cos(yaw), speed * math.sin(yaw), yaw, length, width, agent)


def _footprint(rng, agent: AgentType) -> tuple[float, float]:
    if agent is AgentType.TruckBus:
        return rng.uniform(9.0, 12.0), rng.uniform(2.4, 2.6)
    if agent is AgentType.PedestrianBicycle:
        return rng.uniform(1.6, 1.9), rng.uniform(0.6, 0.8)
    return rng.uniform(4.2, 5.0), rng.uniform(1.7, 2.0)


def _free(entity: EntityState, placed) -> bool:
    return not any(obb_overlap(entity, other) for other in placed)


def _jam_chain(lane_map, rng):
    n = int(rng.integers(5, 11))
    sizes = [_footprint(rng, AgentType.Car) for _ in range(n)]
    gaps = rng.uniform(1.5, 4.0, size=n)
    needed = sum(l for l, _ in sizes) + gaps.sum()
    chains = [c for c in _main_chains(lane_map) if chain_length(lane_map, c) >= needed]
    if not chains:
        longest = chain_length(lane_map, successor_chains(lane_map)[0])
        raise SyntheticSceneError(f"JamChain needs a {needed:.1f} m successor chain, longest is {longest:.1f} m")
    chain = chains[int(rng.integers(0, len(chains)))]
    total = chain_length(lane_map, chain)
    s = rng.uniform(0.0, total - needed) + sizes[0][0] / 2.0
    out = []
    for i in range(n):
        length, width = sizes[i]
        speed = rng.uniform(0.0, 1.9)
        out.append(_place(lane_map, chain, s, rng.uniform(-0.3, 0.3), speed, rng.normal(0, 0.03),
                          i + 1, AgentType.Car, length, width))
        if i + 1 < n:
            s += length / 2.0 + gaps[i] + sizes[i + 1][0] / 2.0
    return out


def _following(lane_map, rng):
    n = int(rng.integers(3, 5))
    spacing = rng.uniform(14.0, 26.0, size=n - 1)
    chains = [c for c in _main_chains(lane_map) if chain_length(lane_map, c) >= spacing.sum() + 10.0]
    if not chains:
        longest = chain_length(lane_map, successor_chains(lane_map)[0])
        raise SyntheticSceneError(f"Following needs a {spacing.sum() + 10.0:.1f} m successor chain, longest is {longest:.1f} m")
    chain = chains[int(rng.integers(0, len(chains)))]
    total = chain_length(lane_map, chain)
    s = rng.uniform(5.0, total - spacing.sum() - 5.0)
    out = []
    for i in range(n):
        length, width = _footprint(rng, AgentType.Car)
        out.append(_place(lane_map, chain, s, rng.uniform(-0.3, 0.3), rng.uniform(8.0, 13.0),
                          rng.normal(0, 0.02), i + 1, AgentType.Car, length, width))
        if i + 1 < n:
            s += spacing[i]
    return out


def _conflicting_pairs(lane_map: LaneMap):
    ids = sorted(lane_map.lanes)
    pairs = []
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            la, lb = lane_map.lanes[a], lane_map.lanes[b]
            if b in la.successors or a in lb.successors or lane_map.adjacent(a, b):
                continue
            hit = lanes_conflict(la, lb)
            if hit is not None and hit[0] > 10.0 and hit[1] > 10.0:
                pairs.append((a, b, hit))
    return pairs


def _sparse(lane_map, rng):
    pairs = _conflicting_pairs(lane_map)
    if not pairs:
        raise SyntheticSceneError("Sparse needs two lanes that cross at least 10 m from their starts")
    a, b, (s_a, s_b) = pairs[int(rng.integers(0, len(pairs)))]
    out = []
    for lid, s_hit in ((a, s_a), (b, s_b)):
        length, width = _footprint(rng, AgentType.Car)
        s = max(1.0, s_hit - rng.uniform(6.0, 25.0))
        out.append(_place(lane_map, (lid,), s, rng.uniform(-0.3, 0.3), rng.uniform(4.0, 9.0),
                          rng.normal(0, 0.03), len(out) + 1, AgentType.Car, length, width))
    if rng.random() < 0.5:
        lid = sorted(lane_map.lanes)[int(rng.integers(0, len(lane_map)))]
        lane = lane_map.lanes[lid]
        for _ in range(20):
            length, width = _footprint(rng, AgentType.Car)
            cand = _place(lane_map, (lid,), rng.uniform(0.0, lane.length), rng.uniform(-0.3, 0.3),
                          rng.uniform(4.0, 9.0), rng.normal(0, 0.03), 3, AgentType.Car, length, width)
            if _free(cand, out):
                out.append(cand)
                break
    return out


_MIXED_TYPES = [AgentType.Car, AgentType.TruckBus, AgentType.PedestrianBicycle]


def _parked_mixed(lane_map, rng):
    chain = successor_chains(lane_map)[0]
    total = chain_length(lane_map, chain)
    if total < 60.0:
        raise SyntheticSceneError(f"ParkedMixed needs a 60 m successor chain, longest is {total:.1f} m")
    side = _adjacent_chain(lane_map, chain)
    n_moving = int(rng.integers(3, 6))
    out = []
    length, width = _footprint(rng, AgentType.Car)
    s0 = rng.uniform(10.0, total - 10.0)
    out.append(_place(lane_map, chain, s0, 0.8 * rng.choice([-1.0, 1.0]), 0.0, rng.normal(0, 0.05),
                      1, AgentType.Car, length, width))
    attempts = 0
    while len(out) < n_moving + 1:
        attempts += 1
        if attempts > 200:
            raise SyntheticSceneError("ParkedMixed could not place non-overlapping entities")
        agent = _MIXED_TYPES[int(rng.integers(0, 3))]
        length, width = _footprint(rng, agent)
        speed = rng.uniform(1.0, 3.0) if agent is AgentType.PedestrianBicycle else rng.uniform(3.0, 7.0)
        lanes = chain if side is None or rng.random() < 0.5 else side
        s = s0 + rng.uniform(-35.0, 35.0)
        if not 2.0 < s < total - 2.0:
            continue
        cand = _place(lane_map, lanes, s, rng.uniform(-0.3, 0.3), speed, rng.normal(0, 0.03),
                      len(out) + 1, agent, length, width)
        if all(math.hypot(cand.x - o.x, cand.y - o.y) > 6.0 for o in out) and _free(cand, out):
            out.append(cand)
    return out


_BUILDERS = {
    Archetype.JamChain: _jam_chain,
    Archetype.Sparse: _sparse,
    Archetype.Following: _following,
    Archetype.ParkedMixed: _parked_mixed,
}


def generate_synthetic_scene(archetype, lane_map: LaneMap, rng_seed, scene_id: str | None = None,
                             timestamp_ms: int = 0) -> TrafficScene:
    """Deterministic synthetic scene of the given archetype on ``lane_map``.

    JamChain: 5-10 slow cars bumper to bumper on one successor chain.
    Following: 3-4 cars at speed with 14-26 m spacing.
    Sparse: two or three cars approaching a lane crossing.
    ParkedMixed: one parked car plus 3-5 cars, trucks and bicycles nearby.
    """
    if len(lane_map) == 0:
        raise SyntheticSceneError("lane map is empty")
    archetype = Archetype(archetype)
    rng = np.random.default_rng(rng_seed)
    entities = _BUILDERS[archetype](lane_map, rng)
    return TrafficScene(scene_id or f"{archetype.value}_{rng_seed}", timestamp_ms, entities)
