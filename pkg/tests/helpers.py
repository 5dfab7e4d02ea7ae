import math

import numpy as np

from scenecluster.augmentor import AugmentParams, augment_scene
from scenecluster.graph_builder import RelationType, SceneGraph
from scenecluster.scene_model import AgentType, EntityState, Lane, LaneMap, TrafficScene


def car(eid, x, y, vx=0.0, vy=0.0, yaw=None, length=4.5, width=1.8, agent=AgentType.Car):
    if yaw is None:
        yaw = math.atan2(vy, vx) if (vx or vy) else 0.0
    return EntityState(eid, x, y, vx, vy, yaw, length, width, agent)


def scene(*entities, scene_id="s"):
    return TrafficScene(scene_id, 0, entities)


def random_graph(rng, n_nodes, n_edges=None, scene_id="g"):
    """Random SceneGraph with valid one-hots and distinct (src, dst, relation) edges."""
    nodes = np.zeros((n_nodes, 6))
    nodes[:, 0] = rng.uniform(0, 15, n_nodes)
    nodes[:, 1] = rng.uniform(-math.pi, math.pi, n_nodes)
    nodes[np.arange(n_nodes), 2 + rng.integers(0, 4, n_nodes)] = 1.0
    slots = [(s, d, r) for s in range(n_nodes) for d in range(n_nodes) if s != d for r in range(3)]
    if n_edges is None:
        n_edges = int(rng.integers(1, len(slots) + 1))
    picked = [slots[i] for i in rng.choice(len(slots), size=min(n_edges, len(slots)), replace=False)]
    edges = np.zeros((len(picked), 7))
    for k, (_, _, r) in enumerate(picked):
        edges[k, r] = 1.0
    edges[:, 3] = rng.uniform(-50, 50, len(picked))
    edges[:, 4:6] = rng.uniform(-2, 2, (len(picked), 2))
    edges[:, 6] = 1.0
    kinds = list(RelationType)
    return SceneGraph(scene_id, nodes, np.arange(1, n_nodes + 1), [p[0] for p in picked],
                      [p[1] for p in picked], edges, [kinds[p[2]] for p in picked])


def permute_graph(graph, rng):
    """Same graph with shuffled node and edge order."""
    perm = rng.permutation(graph.num_nodes)
    new_index = np.empty_like(perm)
    new_index[perm] = np.arange(len(perm))
    eperm = rng.permutation(graph.num_edges)
    return SceneGraph(graph.scene_id, graph.node_features[perm], graph.node_entity_ids[perm],
                      new_index[graph.edge_src[eperm]], new_index[graph.edge_dst[eperm]],
                      graph.edge_features[eperm], [graph.relations[k] for k in eperm])


def perturbation_deltas(open_map, n=10_000, seed=0):
    """Per-draw (dx, dy, dvx, dvy) of one always-selected entity."""
    rng = np.random.default_rng(seed)
    e = car(1, 0, 0, vx=10.0)
    deltas = []
    for _ in range(n):
        out = augment_scene(scene(e), open_map, AugmentParams(p_entity=1.0), rng=rng).entities[0]
        deltas.append((out.x - e.x, out.y - e.y, out.vx - e.vx, out.vy - e.vy))
    return np.array(deltas)


def unbounded_map():
    # wide enough that nothing leaves the road
    return LaneMap({"W": Lane("W", [(-1e5, 0), (1e5, 0)], 1e6)})


def selection_rate(n=10_000, seed=0):
    """Fraction of entities changed at p_entity=0.5 over ``n`` entity trials."""
    m = unbounded_map()
    rng = np.random.default_rng(seed)
    # entities far apart so nothing collides; changed entities were selected
    s = scene(*[car(i, 100.0 * i, 0, vx=5) for i in range(100)])
    changed = 0
    for _ in range(n // 100):
        out = augment_scene(s, m, AugmentParams(p_entity=0.5), rng=rng)
        changed += sum(a != b for a, b in zip(s.entities, out.entities))
    return changed / n
