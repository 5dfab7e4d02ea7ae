"""Embedding-space studies: batch embedding, per-scene statistics, velocity sweep, scatter plots."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoder import EncoderParams, forward
from .graph_builder import RelationType, SceneGraph, build_graph
from .scene_model import Gates, LaneMap, TrafficScene


@dataclass(frozen=True)
class EmbeddingRow:
    scene_id: str
    sx: float
    sy: float


def embed_dataset(params: EncoderParams, graphs) -> list[EmbeddingRow]:
    """One embedding per graph, in input order.

    Graphs are embedded one at a time so a row never depends on its neighbours.
    """
    rows = []
    for g in graphs:
        e, _ = forward(params, g)
        rows.append(EmbeddingRow(g.scene_id, e.sx, e.sy))
    return rows


@dataclass(frozen=True)
class SceneStatistics:
    scene_id: str
    num_vehicles: int
    mean_speed: float
    num_edges: int
    num_longitudinal: int
    num_lateral: int
    num_intersecting: int


def scene_statistics(scene: TrafficScene, graph: SceneGraph | None) -> SceneStatistics:
    counts = {r: 0 for r in RelationType}
    if graph is not None:
        for r in graph.relations:
            counts[r] += 1
    speeds = [e.speed for e in scene.entities]
    return SceneStatistics(
        scene_id=scene.scene_id,
        num_vehicles=len(scene),
        mean_speed=float(np.mean(speeds)) if speeds else 0.0,
        num_edges=sum(counts.values()),
        num_longitudinal=counts[RelationType.Longitudinal],
        num_lateral=counts[RelationType.Lateral],
        num_intersecting=counts[RelationType.Intersecting],
    )


def with_speed_offset(scene: TrafficScene, delta: float) -> TrafficScene:
    """Every entity's speed raised by ``delta`` with its direction kept.

    Stationary entities start moving along their yaw.
    """
    if delta == 0:
        return scene
    entities = []
    for e in scene.entities:
        speed = e.speed
        target = speed + delta
        if speed > 0:
            vx, vy = e.vx * target / speed, e.vy * target / speed
        else:
            vx, vy = target * math.cos(e.yaw), target * math.sin(e.yaw)
        entities.append(e.with_(vx=vx, vy=vy))
    return TrafficScene(scene.scene_id, scene.timestamp_ms, entities)


@dataclass(frozen=True)
class SweepRow:
    scene_id: str
    step: int
    sx: float
    sy: float


def velocity_sweep(
    params: EncoderParams,
    scenes,
    lane_map: LaneMap,
    delta_v: float = 0.5,
    steps: int = 10,
    gates: Gates = Gates(),
) -> tuple[list[SweepRow], list[tuple[str, int]]]:
    """Embed every scene at speed offsets ``0, delta_v, ..., steps * delta_v``.

    Returns the rows and the ``(scene_id, step)`` pairs whose rebuilt graph
    came out edgeless.
    """
    rows, missing = [], []
    for scene in scenes:
        for k in range(steps + 1):
            g = build_graph(with_speed_offset(scene, k * delta_v), lane_map, gates)
            if g is None:
                missing.append((scene.scene_id, k))
                continue
            e, _ = forward(params, g)
            rows.append(SweepRow(scene.scene_id, k, e.sx, e.sy))
    return rows, missing


def sample_sweep_scenes(scenes, n: int, seed: int, labels: dict[str, int] | None = None):
    """Seeded sample of ``n`` scenes, spread over distinct clusters when labels are given.

    Clusters are visited round-robin in random order; noise (-1) is used last.
    """
    scenes = list(scenes)
    rng = np.random.default_rng(seed)
    if n >= len(scenes):
        return scenes
    if not labels:
        idx = sorted(rng.choice(len(scenes), size=n, replace=False))
        return [scenes[i] for i in idx]
    groups: dict[int, list[int]] = {}
    for i, s in enumerate(scenes):
        groups.setdefault(labels.get(s.scene_id, -1), []).append(i)
    order = [c for c in rng.permutation(sorted(k for k in groups if k >= 0))]
    if -1 in groups:
        order.append(-1)
    pools = {c: list(rng.permutation(groups[c])) for c in order}
    picked = []
    while len(picked) < n:
        for c in order:
            if pools[c] and len(picked) < n:
                picked.append(int(pools[c].pop()))
    return [scenes[i] for i in sorted(picked)]


# viridis-like stops
_RAMP = [(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)]


def _color(t: float) -> str:
    t = min(max(t, 0.0), 1.0) * (len(_RAMP) - 1)
    i = min(int(t), len(_RAMP) - 2)
    f = t - i
    r, g, b = (round(a + (c - a) * f) for a, c in zip(_RAMP[i], _RAMP[i + 1]))
    return f"#{r:02x}{g:02x}{b:02x}"


def scatter_export(rows, path, title: str = "") -> tuple[Path, Path]:
    """Write ``<path>.csv`` (sx,sy,value) and ``<path>.svg`` over the square [-1, 1]^2."""
    rows = [(float(sx), float(sy), float(v)) for sx, sy, v in rows]
    if not rows:
        raise ValueError("nothing to plot")
    for sx, sy, _ in rows:
        if not (-1.0 <= sx <= 1.0 and -1.0 <= sy <= 1.0):
            raise ValueError(f"embedding ({sx}, {sy}) lies outside [-1, 1]^2")
    base = Path(path)
    if base.suffix in (".csv", ".svg"):
        base = base.with_suffix("")
    csv_path, svg_path = base.with_suffix(".csv"), base.with_suffix(".svg")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sx", "sy", "value"])
        for r in rows:
            w.writerow([repr(v) for v in r])

    size, pad = 400, 40
    values = [v for _, _, v in rows]
    lo, hi = min(values), max(values)

    def px(v):
        return pad + (v + 1.0) / 2.0 * size

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size + 2 * pad}" height="{size + 2 * pad}">',
        f'<rect x="{pad}" y="{pad}" width="{size}" height="{size}" fill="white" stroke="black"/>',
        f'<text x="{pad}" y="{pad - 10}" font-size="12">{title}</text>',
        f'<text x="{pad}" y="{size + pad + 15}" font-size="10">-1</text>',
        f'<text x="{size + pad - 8}" y="{size + pad + 15}" font-size="10">1</text>',
    ]
    for sx, sy, v in rows:
        t = (v - lo) / (hi - lo) if hi > lo else 0.0
        parts.append(f'<circle class="pt" cx="{px(sx):.2f}" cy="{size + 2 * pad - px(sy):.2f}" r="3" fill="{_color(t)}"/>')
    parts.append("</svg>")
    svg_path.write_text("\n".join(parts) + "\n")
    return csv_path, svg_path


def read_scatter_csv(path) -> list[tuple[float, float, float]]:
    with open(path, newline="") as fh:
        return [(float(r["sx"]), float(r["sy"]), float(r["value"])) for r in csv.DictReader(fh)]
