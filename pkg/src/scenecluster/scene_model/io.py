"""Track CSV, lane-map JSON and scene JSON-lines readers/writers."""
from __future__ import annotations

import csv
import json
import logging
from collections import OrderedDict
from pathlib import Path

from .types import AgentType, EntityState, Lane, LaneMap, LaneMapError, TrafficScene, parse_agent_type

logger = logging.getLogger(__name__)

TRACK_COLUMNS = ["track_id", "frame_id", "timestamp_ms", "agent_type", "x", "y", "vx", "vy", "psi_rad", "length", "width"]


class TrackFormatError(ValueError):
    pass


def scene_id_for_frame(frame_id: int) -> str:
    return f"frame_{frame_id}"


def load_tracks(path, frame_stride: int = 1) -> list[TrafficScene]:
    """Read a track CSV into one TrafficScene per retained frame.

    Every ``frame_stride``-th distinct frame (in ascending frame order) is kept.
    Unknown agent classes become ``Other``; their count is logged as a warning.
    """
    if frame_stride < 1:
        raise ValueError("frame_stride must be >= 1")
    frames: dict[int, list] = {}
    stamps: dict[int, int] = {}
    unknown = 0
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != TRACK_COLUMNS:
            raise TrackFormatError(f"{path}: line 1: expected header {','.join(TRACK_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(TRACK_COLUMNS):
                raise TrackFormatError(f"{path}: line {lineno}: expected {len(TRACK_COLUMNS)} fields, got {len(row)}")
            try:
                track_id, frame_id, ts = int(row[0]), int(row[1]), int(row[2])
                x, y, vx, vy, psi, length, width = (float(v) for v in row[4:])
                agent = parse_agent_type(row[3])
                if agent is None:
                    unknown += 1
                    agent = AgentType.Other
                entity = EntityState(track_id, x, y, vx, vy, psi, length, width, agent)
            except ValueError as exc:
                raise TrackFormatError(f"{path}: line {lineno}: {exc}") from exc
            frames.setdefault(frame_id, []).append(entity)
            stamps.setdefault(frame_id, ts)
    if unknown:
        logger.warning("%s: %d rows with unknown agent_type mapped to Other", path, unknown)
    scenes = []
    for n, frame_id in enumerate(sorted(frames)):
        if n % frame_stride or not frames[frame_id]:
            continue
        try:
            scenes.append(TrafficScene(scene_id_for_frame(frame_id), stamps[frame_id], frames[frame_id]))
        except ValueError as exc:
            raise TrackFormatError(f"{path}: frame {frame_id}: {exc}") from exc
    return scenes


def save_tracks(scenes, path) -> None:
    """Write scenes as a track CSV; frame ids are the scenes' list positions."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACK_COLUMNS)
        for frame_id, scene in enumerate(scenes):
            for e in scene.entities:
                writer.writerow([
                    e.entity_id, frame_id, scene.timestamp_ms, e.agent_type.value,
                    repr(e.x), repr(e.y), repr(e.vx), repr(e.vy), repr(e.yaw), repr(e.length), repr(e.width),
                ])


def lane_map_from_dict(data: dict) -> LaneMap:
    lanes = OrderedDict()
    try:
        for item in data["lanes"]:
            lane = Lane(
                lane_id=str(item["id"]),
                centerline=item["centerline"],
                width=float(item["width"]),
                successors=[str(s) for s in item.get("successors", [])],
                left_adjacent=item.get("left"),
                right_adjacent=item.get("right"),
                conflicts=[(str(c[0]), float(c[1]), float(c[2])) for c in item.get("conflicts", [])],
            )
            if lane.lane_id in lanes:
                raise LaneMapError(f"duplicate lane id {lane.lane_id!r}")
            lanes[lane.lane_id] = lane
    except (KeyError, TypeError, IndexError) as exc:
        raise LaneMapError(f"malformed lane map: {exc!r}") from exc
    return LaneMap(dict(lanes))


def lane_map_to_dict(lane_map: LaneMap) -> dict:
    return {
        "lanes": [
            {
                "id": lane.lane_id,
                "width": lane.width,
                "centerline": lane.centerline.tolist(),
                "successors": list(lane.successors),
                "left": lane.left_adjacent,
                "right": lane.right_adjacent,
                "conflicts": [list(c) for c in lane.conflicts],
            }
            for lane in lane_map.lanes.values()
        ]
    }


def load_lane_map(path) -> LaneMap:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise LaneMapError(f"{path}: invalid JSON: {exc}") from exc
    return lane_map_from_dict(data)


def save_lane_map(lane_map: LaneMap, path) -> None:
    Path(path).write_text(json.dumps(lane_map_to_dict(lane_map), indent=1))


def entity_to_dict(e: EntityState) -> dict:
    return {
        "id": e.entity_id, "x": e.x, "y": e.y, "vx": e.vx, "vy": e.vy, "yaw": e.yaw,
        "length": e.length, "width": e.width, "type": e.agent_type.value,
    }


def entity_from_dict(d: dict) -> EntityState:
    return EntityState(
        int(d["id"]), d["x"], d["y"], d["vx"], d["vy"], d["yaw"], d["length"], d["width"], AgentType(d["type"])
    )


def scene_to_dict(scene: TrafficScene, **extra) -> dict:
    out = {"scene_id": scene.scene_id, "timestamp_ms": scene.timestamp_ms}
    out.update(extra)
    out["entities"] = [entity_to_dict(e) for e in scene.entities]
    return out


def scene_from_dict(d: dict) -> TrafficScene:
    return TrafficScene(d["scene_id"], int(d["timestamp_ms"]), [entity_from_dict(e) for e in d["entities"]])


def write_scenes_jsonl(records, path) -> None:
    """``records`` are scenes or ``(scene, extra_fields)`` pairs."""
    with open(path, "w") as fh:
        for rec in records:
            scene, extra = rec if isinstance(rec, tuple) else (rec, {})
            fh.write(json.dumps(scene_to_dict(scene, **extra)) + "\n")


def read_scenes_jsonl(path, with_extra: bool = False):
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            scene = scene_from_dict(d)
            if with_extra:
                extra = {k: v for k, v in d.items() if k not in ("scene_id", "timestamp_ms", "entities")}
                out.append((scene, extra))
            else:
                out.append(scene)
    return out
