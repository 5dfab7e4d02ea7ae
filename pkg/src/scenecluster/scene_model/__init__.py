"""Traffic scenes, lane maps and Frenet-frame geometry."""
from .geometry import (
    arc_length_project,
    frenet_distance_along,
    frenet_to_cartesian,
    lanes_conflict,
    obb_overlap,
    project_to_lanes,
    project_with_gates,
)
from .io import (
    TrackFormatError,
    lane_map_from_dict,
    lane_map_to_dict,
    load_lane_map,
    load_tracks,
    read_scenes_jsonl,
    save_lane_map,
    save_tracks,
    write_scenes_jsonl,
)
from .synthetic import Archetype, SyntheticSceneError, default_lane_map, generate_synthetic_scene
from .types import (
    AgentType,
    EntityState,
    FrenetCoord,
    Gates,
    Lane,
    LaneMap,
    LaneMapError,
    TrafficScene,
    normalize_angle,
)

__all__ = [
    "Archetype",
    "SyntheticSceneError",
    "default_lane_map",
    "generate_synthetic_scene",
    "arc_length_project",
    "frenet_distance_along",
    "frenet_to_cartesian",
    "lanes_conflict",
    "obb_overlap",
    "project_to_lanes",
    "project_with_gates",
    "TrackFormatError",
    "lane_map_from_dict",
    "lane_map_to_dict",
    "load_lane_map",
    "load_tracks",
    "read_scenes_jsonl",
    "save_lane_map",
    "save_tracks",
    "write_scenes_jsonl",
    "AgentType",
    "EntityState",
    "FrenetCoord",
    "Gates",
    "Lane",
    "LaneMap",
    "LaneMapError",
    "TrafficScene",
    "normalize_angle",
]
