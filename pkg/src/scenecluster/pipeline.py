"""Stage orchestration: config, artifacts, reproducibility metadata and the stages themselves."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    embed_dataset,
    sample_sweep_scenes,
    scatter_export,
    scene_statistics,
    velocity_sweep,
)
from .augmentor import RNG_NAME, AugmentParams, augment_dataset
from .clusterer import dbscan, k_distance, knee
from .encoder import (GraphBatch, forward_batch, init_params, kink_margin, load_checkpoint, max_relative_error,
                      save_checkpoint)
from .graph_builder import build_graph, read_graphs_jsonl, write_graphs_jsonl
from .scene_model import (
    Archetype,
    Gates,
    LaneMap,
    default_lane_map,
    generate_synthetic_scene,
    load_lane_map,
    load_tracks,
    read_scenes_jsonl,
    save_lane_map,
    save_tracks,
    write_scenes_jsonl,
)
from .scene_model.io import scene_id_for_frame
from .trainer import FD_RESOLUTION, TrainConfig, train, triplet_gradients, write_history

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"stage {stage} failed: {message}")
        self.stage = stage


# artifact key -> default file name inside the workdir
ARTIFACTS = {
    "tracks": "tracks.csv",
    "map": "map.json",
    "archetypes": "archetypes.csv",
    "scenes": "scenes.jsonl",
    "augmented": "augmented.jsonl",
    "graphs": "graphs.jsonl",
    "checkpoint": "checkpoint.json",
    "history": "history.csv",
    "emb": "emb.csv",
    "stats": "stats.csv",
    "stats_plot": "cars_plot.svg",
    "labels": "labels.csv",
    "kdist": "kdist.csv",
    "sweep": "sweep.csv",
    "sweep_missing": "sweep_missing.csv",
    "sweep_plot": "sweep_plot.svg",
    "gradcheck": "gradcheck.json",
}


def _reject_unknown(section: str, data: dict, allowed) -> None:
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"{section}: unknown keys {sorted(unknown)}")


@dataclass(frozen=True)
class SyntheticConfig:
    count: int = 100
    mix: dict = field(default_factory=lambda: {a.value: 1.0 for a in Archetype})

    def __post_init__(self):
        if self.count < 1:
            raise ConfigError("synthetic.count must be >= 1")
        for name, w in self.mix.items():
            try:
                Archetype(name)
            except ValueError:
                raise ConfigError(f"synthetic.mix: unknown archetype {name!r}") from None
            if not (isinstance(w, (int, float)) and w >= 0):
                raise ConfigError(f"synthetic.mix[{name}] must be a non-negative number")
        if not sum(self.mix.values()) > 0:
            raise ConfigError("synthetic.mix needs a positive total weight")


@dataclass(frozen=True)
class ClusterConfig:
    eps: float | None = None  # None: knee of the k-distance curve
    min_samples: int = 5
    knee_k: int | None = None  # None: min_samples

    def __post_init__(self):
        if self.eps is not None and not self.eps > 0:
            raise ConfigError("cluster.eps must be > 0")
        if self.min_samples < 1:
            raise ConfigError("cluster.min_samples must be >= 1")
        if self.knee_k is not None and self.knee_k < 1:
            raise ConfigError("cluster.knee_k must be >= 1")


@dataclass(frozen=True)
class SweepConfig:
    scenes: int = 25
    delta_v: float = 0.5
    steps: int = 10

    def __post_init__(self):
        if self.scenes < 1 or self.steps < 0:
            raise ConfigError("sweep.scenes must be >= 1 and sweep.steps >= 0")


@dataclass(frozen=True)
class PipelineConfig:
    workdir: Path = Path(".")
    paths: dict = field(default_factory=dict)
    seed: int = 0
    synthetic: SyntheticConfig | None = None
    frame_stride: int = 1
    augment: AugmentParams = AugmentParams()
    copies: int = 1
    gates: Gates = Gates()
    train: TrainConfig = TrainConfig()
    cluster: ClusterConfig = ClusterConfig()
    sweep: SweepConfig = SweepConfig()
    gradcheck_instances: int = 50

    def path(self, key: str) -> Path:
        return Path(self.paths.get(key) or self.workdir / ARTIFACTS[key])

    def stage_config(self, stage: str) -> dict:
        """The slice of the config that determines a stage's output."""
        parts = {
            "synth": {"synthetic": asdict(self.synthetic) if self.synthetic else None, "seed": self.seed,
                      "generate_map": self.generates_map},
            "ingest": {"frame_stride": self.frame_stride},
            "augment": {"augment": asdict(self.augment), "copies": self.copies, "gates": asdict(self.gates)},
            "build-graphs": {"gates": asdict(self.gates)},
            "train": {"train": self.train.to_dict()},
            "embed": {},
            "stats": {},
            "cluster": {"cluster": asdict(self.cluster)},
            "sweep": {"sweep": asdict(self.sweep), "gates": asdict(self.gates), "seed": self.seed},
            "gradcheck": {"instances": self.gradcheck_instances, "seed": self.seed},
        }
        return parts[stage]

    @property
    def generates_map(self) -> bool:
        return self.synthetic is not None and "map" not in self.paths


def _build(cls, section: str, data: dict, **fixed):
    _reject_unknown(section, data, [f.name for f in fields(cls)])
    try:
        return cls(**{**fixed, **data})
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from None


TOP_LEVEL = {"seed", "paths", "synthetic", "ingest", "augment", "gates", "train", "cluster", "sweep", "gradcheck"}


def config_from_dict(data: dict, base_dir=".", seed: int | None = None) -> PipelineConfig:
    """Validate every section up front; relative paths resolve against ``base_dir``.

    A sub-config's own seed wins over the global one; ``seed`` overrides the global seed.
    """
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown("config", data, TOP_LEVEL)
    base_dir = Path(base_dir)
    global_seed = seed if seed is not None else data.get("seed", 0)
    if not isinstance(global_seed, int):
        raise ConfigError("seed must be an integer")

    paths = dict(data.get("paths", {}))
    _reject_unknown("paths", paths, ["workdir", *ARTIFACTS])
    resolved = {k: base_dir / v for k, v in paths.items() if v is not None}
    workdir = resolved.pop("workdir", base_dir / "work")

    synthetic = None
    if data.get("synthetic") is not None:
        synthetic = _build(SyntheticConfig, "synthetic", data["synthetic"])

    ingest = dict(data.get("ingest", {}))
    _reject_unknown("ingest", ingest, ["frame_stride"])
    frame_stride = ingest.get("frame_stride", 1)
    if not (isinstance(frame_stride, int) and frame_stride >= 1):
        raise ConfigError("ingest.frame_stride must be an integer >= 1")

    aug = dict(data.get("augment", {}))
    copies = aug.pop("copies", 1)
    if not (isinstance(copies, int) and copies >= 1):
        raise ConfigError("augment.copies must be an integer >= 1")
    augment = _build(AugmentParams, "augment", aug, rng_seed=global_seed)
    gates = _build(Gates, "gates", dict(data.get("gates", {})))
    train_cfg = _build(TrainConfig, "train", dict(data.get("train", {})), seed=global_seed)
    cluster = _build(ClusterConfig, "cluster", dict(data.get("cluster", {})))
    sweep = _build(SweepConfig, "sweep", dict(data.get("sweep", {})))
    gc = dict(data.get("gradcheck", {}))
    _reject_unknown("gradcheck", gc, ["instances"])
    instances = gc.get("instances", 50)
    if not (isinstance(instances, int) and instances >= 1):
        raise ConfigError("gradcheck.instances must be an integer >= 1")

    return PipelineConfig(workdir, resolved, global_seed, synthetic, frame_stride, augment, copies, gates,
                          train_cfg, cluster, sweep, instances)


def load_config(path, seed: int | None = None) -> PipelineConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    return config_from_dict(data, path.parent, seed)


# ---------------------------------------------------------------- helpers

def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(data) -> str:
    return hashlib.sha256(json.dumps(data, sort_keys=True, default=str).encode()).hexdigest()


def archetype_schedule(mix: dict, count: int) -> list[Archetype]:
    """Deterministic interleaving proportional to ``mix`` (smooth weighted round-robin).

    Equal weights cycle through the archetypes in declaration order.
    """
    names = [a for a in Archetype if mix.get(a.value, 0) > 0]
    weights = {a: float(mix[a.value]) for a in names}
    total = sum(weights.values())
    current = {a: 0.0 for a in names}
    out = []
    for _ in range(count):
        for a in names:
            current[a] += weights[a]
        pick = max(names, key=lambda a: current[a])
        current[pick] -= total
        out.append(pick)
    return out


def synth_scenes(mix: dict, count: int, lane_map: LaneMap, seed: int):
    """Scenes named like ingested frames, plus the archetype of each."""
    schedule = archetype_schedule(mix, count)
    scenes = [
        generate_synthetic_scene(a, lane_map, [seed, i], scene_id=scene_id_for_frame(i), timestamp_ms=100 * i)
        for i, a in enumerate(schedule)
    ]
    return scenes, schedule


def synth_dataset(mix: dict, count: int, lane_map: LaneMap, seed: int, tracks_path, labels_path) -> None:
    """Write a track CSV of ``count`` synthetic scenes and a ``scene_id,archetype`` sidecar."""
    if count < 1:
        raise ValueError("count must be >= 1")
    scenes, schedule = synth_scenes(mix, count, lane_map, seed)
    save_tracks(scenes, tracks_path)
    with open(labels_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scene_id", "archetype"])
        for s, a in zip(scenes, schedule):
            w.writerow([s.scene_id, a.value])


def read_archetypes(path) -> dict[str, str]:
    with open(path, newline="") as fh:
        return {r["scene_id"]: r["archetype"] for r in csv.DictReader(fh)}


def build_pair_records(scenes, augmented, lane_map: LaneMap, gates: Gates = Gates()):
    """Graph records tagged ``kind`` anchor/positive; edgeless graphs are left out.

    ``augmented`` holds ``(source_index, copy, scene)`` triples.
    """
    anchors = [build_graph(s, lane_map, gates) for s in scenes]
    by_source: dict[int, list] = {}
    for idx, c, aug in augmented:
        by_source.setdefault(idx, []).append((c, aug))
    records = []
    for idx, (scene, ga) in enumerate(zip(scenes, anchors)):
        if ga is None:
            continue
        records.append((ga, {"kind": "anchor", "source": scene.scene_id}))
        for c, aug in by_source.get(idx, []):
            gp = build_graph(aug, lane_map, gates)
            if gp is not None:
                records.append((gp, {"kind": "positive", "source": scene.scene_id, "copy": c}))
    return records


def pairs_from_records(records):
    anchors = {extra["source"]: g for g, extra in records if extra["kind"] == "anchor"}
    return [(anchors[extra["source"]], g) for g, extra in records
            if extra["kind"] == "positive" and extra["source"] in anchors]


def write_embeddings(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scene_id", "sx", "sy"])
        for r in rows:
            w.writerow([r.scene_id, repr(r.sx), repr(r.sy)])


def read_embeddings(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    ids = [r["scene_id"] for r in rows]
    return ids, np.array([[float(r["sx"]), float(r["sy"])] for r in rows]).reshape(-1, 2)


def read_labels(path) -> dict[str, int]:
    with open(path, newline="") as fh:
        return {r["scene_id"]: int(r["label"]) for r in csv.DictReader(fh)}


def cluster_embeddings(points: np.ndarray, cfg: ClusterConfig):
    """DBSCAN with ``cfg.eps``, or the k-distance knee when it is unset. Returns (labels, eps, kdist)."""
    k = cfg.knee_k or cfg.min_samples
    kd = k_distance(points, k) if len(points) > max(k, 2) else np.array([])
    if cfg.eps is not None:
        eps = cfg.eps
    else:
        if len(kd) < 3:
            raise ValueError(f"need more than {max(k, 2)} embeddings to pick eps from the k-distance curve")
        idx, prominence = knee(kd)
        if prominence < 1e-6:
            raise ValueError("k-distance curve has no knee; set cluster.eps explicitly")
        eps = float(kd[idx])
        if not eps > 0:
            raise ValueError("k-distance knee is at distance 0; set cluster.eps explicitly")
    return dbscan(points, eps, cfg.min_samples), eps, kd


def gradcheck_instances(n: int, seed: int, lane_map: LaneMap | None = None, min_margin: float = 1e-4):
    """``n`` seeded (params, anchor, positive, negative) draws away from non-differentiable points.

    Draws whose LeakyReLU pre-activations or triplet hinge lie within
    ``min_margin`` of a kink are skipped.
    """
    lane_map = lane_map or default_lane_map()
    arch = list(Archetype)
    out, j = [], 0
    while len(out) < n:
        rng = np.random.default_rng([seed, j])
        graphs = []
        while len(graphs) < 3:
            a = arch[int(rng.integers(len(arch)))]
            g = build_graph(generate_synthetic_scene(a, lane_map, [seed, j, len(graphs), int(rng.integers(1 << 30))]),
                            lane_map)
            if g is not None:
                graphs.append(g)
        params = init_params(int(rng.integers(1 << 31)))
        emb, trace = forward_batch(params, GraphBatch.from_graphs(graphs))
        d_pos = float(np.linalg.norm(emb[0] - emb[1]))
        d_neg = float(np.linalg.norm(emb[0] - emb[2]))
        hinge = d_pos - d_neg + 0.5
        if kink_margin(trace) > min_margin and abs(hinge) > min_margin and min(d_pos, d_neg) > min_margin:
            out.append((params, *graphs))
        j += 1
    return out


# ---------------------------------------------------------------- stages

def _load_map(cfg: PipelineConfig) -> LaneMap:
    return load_lane_map(cfg.path("map"))


def _stage_synth(cfg: PipelineConfig) -> dict:
    if cfg.synthetic is None:
        raise ValueError("no synthetic section in the config")
    if cfg.generates_map:
        lane_map = default_lane_map()
        save_lane_map(lane_map, cfg.path("map"))
    else:
        lane_map = _load_map(cfg)
    synth_dataset(cfg.synthetic.mix, cfg.synthetic.count, lane_map, cfg.seed, cfg.path("tracks"), cfg.path("archetypes"))
    return {"scenes": cfg.synthetic.count}


def _stage_ingest(cfg: PipelineConfig) -> dict:
    scenes = load_tracks(cfg.path("tracks"), cfg.frame_stride)
    if not scenes:
        raise ValueError("track file contains no scenes")
    write_scenes_jsonl(scenes, cfg.path("scenes"))
    return {"scenes": len(scenes)}


def _stage_augment(cfg: PipelineConfig) -> dict:
    lane_map = _load_map(cfg)
    scenes = read_scenes_jsonl(cfg.path("scenes"))
    augs = augment_dataset(scenes, lane_map, cfg.augment, cfg.copies, cfg.gates)
    write_scenes_jsonl([(aug, {"source": scenes[idx].scene_id, "source_index": idx, "copy": c})
                        for idx, c, aug in augs], cfg.path("augmented"))
    return {"augmented": len(augs)}


def _read_augmented(path):
    return [(extra["source_index"], extra["copy"], scene) for scene, extra in read_scenes_jsonl(path, with_extra=True)]


def _stage_build_graphs(cfg: PipelineConfig) -> dict:
    lane_map = _load_map(cfg)
    scenes = read_scenes_jsonl(cfg.path("scenes"))
    records = build_pair_records(scenes, _read_augmented(cfg.path("augmented")), lane_map, cfg.gates)
    write_graphs_jsonl(records, cfg.path("graphs"))
    anchors = sum(1 for _, e in records if e["kind"] == "anchor")
    return {"anchors": anchors, "positives": len(records) - anchors, "edgeless_scenes": len(scenes) - anchors}


def _stage_train(cfg: PipelineConfig) -> dict:
    pairs = pairs_from_records(read_graphs_jsonl(cfg.path("graphs"), with_extra=True))
    if len(pairs) < 2:
        raise ValueError(f"only {len(pairs)} training pairs; need at least 2")
    result = train(pairs, cfg.train)
    save_checkpoint(result.params, cfg.path("checkpoint"))
    write_history(result.history, cfg.path("history"))
    last = result.history[-1] if result.history else None
    return {"pairs": len(pairs), "final_val_triplet_acc": last.val_triplet_acc if last else None}


def _anchor_graphs(cfg: PipelineConfig):
    return [g for g, e in read_graphs_jsonl(cfg.path("graphs"), with_extra=True) if e["kind"] == "anchor"]


def _stage_embed(cfg: PipelineConfig) -> dict:
    params = load_checkpoint(cfg.path("checkpoint"))
    rows = embed_dataset(params, _anchor_graphs(cfg))
    write_embeddings(rows, cfg.path("emb"))
    return {"embeddings": len(rows)}


def _stage_stats(cfg: PipelineConfig) -> dict:
    scenes = {s.scene_id: s for s in read_scenes_jsonl(cfg.path("scenes"))}
    graphs = {g.scene_id: g for g in _anchor_graphs(cfg)}
    ids, points = read_embeddings(cfg.path("emb"))
    with open(cfg.path("stats"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scene_id", "num_vehicles", "mean_speed", "num_edges", "num_longitudinal", "num_lateral",
                    "num_intersecting"])
        for sid, scene in scenes.items():
            st = scene_statistics(scene, graphs.get(sid))
            w.writerow([st.scene_id, st.num_vehicles, repr(st.mean_speed), st.num_edges, st.num_longitudinal,
                        st.num_lateral, st.num_intersecting])
    if ids:
        scatter_export([(sx, sy, len(scenes[sid])) for sid, (sx, sy) in zip(ids, points)],
                       cfg.path("stats_plot"), title="embeddings colored by number of vehicles")
    return {"scenes": len(scenes)}


def _stage_cluster(cfg: PipelineConfig) -> dict:
    ids, points = read_embeddings(cfg.path("emb"))
    if len(ids) == 0:
        raise ValueError("no embeddings to cluster")
    result, eps, kd = cluster_embeddings(points, cfg.cluster)
    with open(cfg.path("labels"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scene_id", "label"])
        for sid, lab in zip(ids, result.labels):
            w.writerow([sid, int(lab)])
    with open(cfg.path("kdist"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "kdist"])
        for i, v in enumerate(kd):
            w.writerow([i, repr(float(v))])
    return {"eps": eps, "clusters": result.num_clusters, "noise": result.num_noise}


def _stage_sweep(cfg: PipelineConfig) -> dict:
    params = load_checkpoint(cfg.path("checkpoint"))
    lane_map = _load_map(cfg)
    labels = read_labels(cfg.path("labels"))
    candidates = [s for s in read_scenes_jsonl(cfg.path("scenes")) if s.scene_id in labels]
    if not candidates:
        raise ValueError("no embedded scenes to sweep")
    sample = sample_sweep_scenes(candidates, cfg.sweep.scenes, cfg.seed, labels)
    rows, missing = velocity_sweep(params, sample, lane_map, cfg.sweep.delta_v, cfg.sweep.steps, cfg.gates)
    with open(cfg.path("sweep"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scene_id", "step", "sx", "sy"])
        for r in rows:
            w.writerow([r.scene_id, r.step, repr(r.sx), repr(r.sy)])
    with open(cfg.path("sweep_missing"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scene_id", "step"])
        w.writerows(missing)
    if rows:
        scatter_export([(r.sx, r.sy, r.step) for r in rows], cfg.path("sweep_plot"),
                       title=f"velocity sweep, +{cfg.sweep.delta_v} m/s per step")
    return {"scenes": len(sample), "rows": len(rows), "missing": len(missing)}


def _stage_gradcheck(cfg: PipelineConfig) -> dict:
    errors, strict = [], []
    for params, a, pos, neg in gradcheck_instances(cfg.gradcheck_instances, cfg.seed):
        analytic, numeric = triplet_gradients(params, a, pos, neg)
        errors.append(max_relative_error(analytic, numeric, FD_RESOLUTION))
        strict.append(max_relative_error(analytic, numeric))
    report = {"epsilon": 1e-5, "denominator_floor": FD_RESOLUTION, "max_relative_error": max(errors),
              "max_relative_error_unfloored": max(strict), "errors": errors}
    Path(cfg.path("gradcheck")).write_text(json.dumps(report, indent=1))
    if max(errors) >= 1e-4:
        raise ValueError(f"max relative gradient error {max(errors):.3g} >= 1e-4")
    return {k: report[k] for k in ("max_relative_error", "max_relative_error_unfloored")}


@dataclass(frozen=True)
class Stage:
    name: str
    inputs: tuple
    outputs: tuple
    run: object


STAGES = {
    s.name: s
    for s in [
        Stage("synth", (), ("tracks", "archetypes"), _stage_synth),
        Stage("ingest", ("tracks",), ("scenes",), _stage_ingest),
        Stage("augment", ("scenes", "map"), ("augmented",), _stage_augment),
        Stage("build-graphs", ("scenes", "augmented", "map"), ("graphs",), _stage_build_graphs),
        Stage("train", ("graphs",), ("checkpoint", "history"), _stage_train),
        Stage("embed", ("checkpoint", "graphs"), ("emb",), _stage_embed),
        Stage("stats", ("scenes", "graphs", "emb"), ("stats",), _stage_stats),
        Stage("cluster", ("emb",), ("labels", "kdist"), _stage_cluster),
        Stage("sweep", ("checkpoint", "scenes", "map", "labels"), ("sweep", "sweep_missing"), _stage_sweep),
        Stage("gradcheck", (), ("gradcheck",), _stage_gradcheck),
    ]
}

RUN_ORDER = ["synth", "ingest", "augment", "build-graphs", "train", "embed", "stats", "cluster", "sweep"]


def _io_keys(stage: Stage, cfg: PipelineConfig) -> tuple[list[str], list[str]]:
    inputs, outputs = list(stage.inputs), list(stage.outputs)
    if stage.name == "synth":
        (outputs if cfg.generates_map else inputs).append("map")
    return inputs, outputs


def meta_path(cfg: PipelineConfig, stage: str) -> Path:
    return cfg.workdir / f"{stage}.meta.json"


def _hashes(cfg: PipelineConfig, keys) -> dict:
    return {k: {"path": str(cfg.path(k)), "sha256": file_sha256(cfg.path(k))} for k in keys}


def is_up_to_date(cfg: PipelineConfig, stage_name: str) -> bool:
    stage = STAGES[stage_name]
    inputs, outputs = _io_keys(stage, cfg)
    mp = meta_path(cfg, stage_name)
    if not mp.exists() or not all(cfg.path(k).exists() for k in inputs + outputs):
        return False
    try:
        meta = json.loads(mp.read_text())
    except json.JSONDecodeError:
        return False
    if meta.get("config_hash") != config_hash(cfg.stage_config(stage_name)):
        return False
    if inputs and outputs:
        newest_in = max(os.path.getmtime(cfg.path(k)) for k in inputs)
        if min(os.path.getmtime(cfg.path(k)) for k in outputs) < newest_in:
            return False
    return meta.get("inputs") == _hashes(cfg, inputs) and meta.get("outputs") == _hashes(cfg, outputs)


def run_stage(cfg: PipelineConfig, stage_name: str, force: bool = False) -> bool:
    """Run one stage unless it is up to date. Returns whether it ran.

    Any failure surfaces as :class:`StageError` naming the stage.
    """
    stage = STAGES[stage_name]
    inputs, outputs = _io_keys(stage, cfg)
    cfg.workdir.mkdir(parents=True, exist_ok=True)
    if not force and is_up_to_date(cfg, stage_name):
        logger.info("%s: up to date, skipped", stage_name)
        return False
    for k in inputs:
        if not cfg.path(k).exists():
            raise StageError(stage_name, f"missing input {k} ({cfg.path(k)})")
    try:
        input_hashes = _hashes(cfg, inputs)
        summary = stage.run(cfg)
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - every failure is reported against its stage
        raise StageError(stage_name, f"{type(exc).__name__}: {exc}") from exc
    meta = {
        "stage": stage_name,
        "version": __version__,
        "seed": cfg.seed,
        "rng": RNG_NAME,
        "config_hash": config_hash(cfg.stage_config(stage_name)),
        "config": cfg.stage_config(stage_name),
        "inputs": input_hashes,
        "outputs": _hashes(cfg, outputs),
        "summary": summary,
    }
    meta_path(cfg, stage_name).write_text(json.dumps(meta, indent=1, sort_keys=True, default=str))
    logger.info("%s: done %s", stage_name, summary)
    return True


def run_pipeline(cfg: PipelineConfig, force: bool = False) -> list[str]:
    """Run every stage in order; returns the names of stages that actually ran."""
    ran = []
    for name in RUN_ORDER:
        if name == "synth" and cfg.synthetic is None:
            continue
        if run_stage(cfg, name, force):
            ran.append(name)
    return ran


__all__ = [
    "ConfigError", "StageError", "PipelineConfig", "ClusterConfig", "SweepConfig", "SyntheticConfig",
    "config_from_dict", "load_config", "run_stage", "run_pipeline", "synth_dataset", "synth_scenes",
    "build_pair_records", "pairs_from_records", "cluster_embeddings", "gradcheck_instances", "STAGES",
    "RUN_ORDER",
]
