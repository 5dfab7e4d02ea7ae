"""Semantic scene graphs: entities as nodes, lane-topology relations as typed edges."""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

from .scene_model import (
    AgentType,
    EntityState,
    Gates,
    LaneMap,
    TrafficScene,
    frenet_distance_along,
    lanes_conflict,
    project_with_gates,
)

NODE_DIM = 6
EDGE_DIM = 7


class RelationType(str, Enum):
    Longitudinal = "Longitudinal"
    Lateral = "Lateral"
    Intersecting = "Intersecting"

    @property
    def index(self) -> int:
        return list(RelationType).index(self)


class Relation(NamedTuple):
    src_entity: int
    dst_entity: int
    relation: RelationType
    frenet_path_distance: float
    d_src: float
    d_dst: float
    probability: float


@dataclass
class SceneGraph:
    scene_id: str
    node_features: np.ndarray  # (N, 6)
    node_entity_ids: np.ndarray  # (N,)
    edge_src: np.ndarray  # (E,)
    edge_dst: np.ndarray  # (E,)
    edge_features: np.ndarray  # (E, 7)
    relations: list[RelationType]

    def __post_init__(self):
        self.node_features = np.asarray(self.node_features, dtype=float).reshape(-1, NODE_DIM)
        self.node_entity_ids = np.asarray(self.node_entity_ids, dtype=np.int64)
        self.edge_src = np.asarray(self.edge_src, dtype=np.int64)
        self.edge_dst = np.asarray(self.edge_dst, dtype=np.int64)
        self.edge_features = np.asarray(self.edge_features, dtype=float).reshape(-1, EDGE_DIM)
        self.relations = [RelationType(r) for r in self.relations]

    @property
    def num_nodes(self) -> int:
        return len(self.node_features)

    @property
    def num_edges(self) -> int:
        return len(self.edge_src)

    @property
    def edges(self):
        return [
            (int(s), int(d), self.edge_features[k], self.relations[k])
            for k, (s, d) in enumerate(zip(self.edge_src, self.edge_dst))
        ]

    def validate(self) -> None:
        n, e = self.num_nodes, self.num_edges
        if n < 2 or e == 0:
            raise ValueError(f"graph {self.scene_id}: needs >= 2 nodes and >= 1 edge")
        if not (len(self.node_entity_ids) == n and len(self.edge_dst) == e
                and len(self.edge_features) == e and len(self.relations) == e):
            raise ValueError(f"graph {self.scene_id}: inconsistent array lengths")
        if np.any(self.edge_src == self.edge_dst):
            raise ValueError(f"graph {self.scene_id}: self edge")
        if np.any((self.edge_src < 0) | (self.edge_src >= n) | (self.edge_dst < 0) | (self.edge_dst >= n)):
            raise ValueError(f"graph {self.scene_id}: edge endpoint out of range")
        keys = list(zip(self.edge_src.tolist(), self.edge_dst.tolist(), self.relations))
        if len(keys) != len(set(keys)):
            raise ValueError(f"graph {self.scene_id}: duplicate edge of the same relation type")

    def to_dict(self, **extra) -> dict:
        out = {"scene_id": self.scene_id}
        out.update(extra)
        out["node_entity_ids"] = self.node_entity_ids.tolist()
        out["node_features"] = self.node_features.tolist()
        out["edges"] = [
            {"src": s, "dst": d, "relation": r.value, "features": f.tolist()}
            for s, d, f, r in self.edges
        ]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SceneGraph":
        edges = d["edges"]
        return cls(
            scene_id=d["scene_id"],
            node_features=d["node_features"],
            node_entity_ids=d["node_entity_ids"],
            edge_src=[e["src"] for e in edges],
            edge_dst=[e["dst"] for e in edges],
            edge_features=[e["features"] for e in edges],
            relations=[e["relation"] for e in edges],
        )


def node_features(e: EntityState) -> np.ndarray:
    """``[speed, yaw, one-hot(agent type) x 4]``."""
    out = np.zeros(NODE_DIM)
    out[0] = e.speed
    out[1] = e.yaw
    out[2 + AgentType(e.agent_type).index] = 1.0
    return out


def _conflict(lane_map: LaneMap, a: str, b: str):
    cache = lane_map.__dict__.setdefault("_conflict_cache", {})
    if (a, b) not in cache:
        cache[(a, b)] = lanes_conflict(lane_map.lanes[a], lane_map.lanes[b])
    return cache[(a, b)]


def infer_relations(scene: TrafficScene, lane_map: LaneMap, gates: Gates = Gates()) -> list[Relation]:
    """Directed relations between every ordered pair of assigned entities.

    Each entity uses its best lane assignment. Longitudinal and lateral
    distances are antisymmetric; an intersecting edge stores the distance of
    its source to the conflict point.
    """
    best = {}
    for e in scene.entities:
        cands = project_with_gates(e, lane_map, gates)
        if cands:
            best[e.entity_id] = cands[0]
    out = []
    ids = [e.entity_id for e in scene.entities if e.entity_id in best]
    for i in ids:
        ci, pi = best[i]
        for j in ids:
            if i == j:
                continue
            cj, pj = best[j]
            prob = pi * pj
            lon = frenet_distance_along(lane_map, ci, cj, gates.max_hops)
            if lon is not None:
                out.append(Relation(i, j, RelationType.Longitudinal, lon, ci.d, cj.d, prob))
            if ci.lane_id == cj.lane_id:
                continue
            if lane_map.adjacent(ci.lane_id, cj.lane_id):
                li, lj = lane_map[ci.lane_id].length, lane_map[cj.lane_id].length
                # progress difference scaled by the mean length of the two lanes
                lat = (cj.s / lj - ci.s / li) * (li + lj) / 2.0
                out.append(Relation(i, j, RelationType.Lateral, lat, ci.d, cj.d, prob))
            hit = _conflict(lane_map, ci.lane_id, cj.lane_id)
            if hit is not None:
                out.append(Relation(i, j, RelationType.Intersecting, hit[0] - ci.s, ci.d, cj.d, prob))
    return out


def build_graph(scene: TrafficScene, lane_map: LaneMap, gates: Gates = Gates()) -> SceneGraph | None:
    """Scene graph of ``scene``, or None when it has no edges."""
    relations = infer_relations(scene, lane_map, gates)
    if not relations or len(scene) < 2:
        return None
    index = {e.entity_id: k for k, e in enumerate(scene.entities)}
    feats = np.zeros((len(relations), EDGE_DIM))
    for k, r in enumerate(relations):
        feats[k, r.relation.index] = 1.0
        feats[k, 3:] = (r.frenet_path_distance, r.d_src, r.d_dst, r.probability)
    return SceneGraph(
        scene_id=scene.scene_id,
        node_features=np.array([node_features(e) for e in scene.entities]),
        node_entity_ids=[e.entity_id for e in scene.entities],
        edge_src=[index[r.src_entity] for r in relations],
        edge_dst=[index[r.dst_entity] for r in relations],
        edge_features=feats,
        relations=[r.relation for r in relations],
    )


def write_graphs_jsonl(records, path) -> None:
    """``records`` are graphs or ``(graph, extra_fields)`` pairs."""
    with open(path, "w") as fh:
        for rec in records:
            graph, extra = rec if isinstance(rec, tuple) else (rec, {})
            fh.write(json.dumps(graph.to_dict(**extra)) + "\n")


def read_graphs_jsonl(path, with_extra: bool = False):
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            g = SceneGraph.from_dict(d)
            if with_extra:
                extra = {k: v for k, v in d.items() if k not in ("scene_id", "node_entity_ids", "node_features", "edges")}
                out.append((g, extra))
            else:
                out.append(g)
    return out
