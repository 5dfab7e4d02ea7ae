"""Object-list and lane-map data model."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np


class AgentType(str, Enum):
    Car = "Car"
    TruckBus = "TruckBus"
    PedestrianBicycle = "PedestrianBicycle"
    Other = "Other"

    @property
    def index(self) -> int:
        return _AGENT_ORDER.index(self)


_AGENT_ORDER = [AgentType.Car, AgentType.TruckBus, AgentType.PedestrianBicycle, AgentType.Other]

# INTERACTION uses lower-case strings like "car" and "pedestrian/bicycle"
_AGENT_ALIASES = {
    "car": AgentType.Car,
    "truck": AgentType.TruckBus,
    "bus": AgentType.TruckBus,
    "truck/bus": AgentType.TruckBus,
    "truckbus": AgentType.TruckBus,
    "pedestrian/bicycle": AgentType.PedestrianBicycle,
    "pedestrianbicycle": AgentType.PedestrianBicycle,
    "pedestrian": AgentType.PedestrianBicycle,
    "bicycle": AgentType.PedestrianBicycle,
    "other": AgentType.Other,
}


def parse_agent_type(text: str) -> AgentType | None:
    """Map a class string to an AgentType, or None when unknown."""
    return _AGENT_ALIASES.get(text.strip().lower())


def normalize_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.remainder(angle, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    return a


@dataclass(frozen=True)
class EntityState:
    entity_id: int
    x: float
    y: float
    vx: float
    vy: float
    yaw: float
    length: float
    width: float
    agent_type: AgentType = AgentType.Car

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0):
            raise ValueError(f"entity {self.entity_id}: footprint must be positive, got {self.length}x{self.width}")
        object.__setattr__(self, "yaw", normalize_angle(float(self.yaw)))

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)

    def with_(self, **changes) -> "EntityState":
        return replace(self, **changes)


@dataclass(frozen=True)
class TrafficScene:
    scene_id: str
    timestamp_ms: int
    entities: tuple[EntityState, ...]

    def __post_init__(self):
        object.__setattr__(self, "entities", tuple(self.entities))
        ids = [e.entity_id for e in self.entities]
        if len(ids) != len(set(ids)):
            raise ValueError(f"scene {self.scene_id}: duplicate entity ids")

    def __len__(self) -> int:
        return len(self.entities)


@dataclass
class Lane:
    lane_id: str
    centerline: np.ndarray
    width: float
    successors: list[str] = field(default_factory=list)
    left_adjacent: str | None = None
    right_adjacent: str | None = None
    # (other lane id, s on this lane, s on the other lane)
    conflicts: list[tuple[str, float, float]] = field(default_factory=list)

    def __post_init__(self):
        self.centerline = np.asarray(self.centerline, dtype=float).reshape(-1, 2)
        if len(self.centerline) < 2:
            raise ValueError(f"lane {self.lane_id}: centerline needs at least 2 points")
        seg = np.diff(self.centerline, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(seg_len <= 0):
            raise ValueError(f"lane {self.lane_id}: repeated consecutive centerline points")
        if not self.width > 0:
            raise ValueError(f"lane {self.lane_id}: width must be positive")
        self.seg_lengths = seg_len
        self.cum_s = np.concatenate([[0.0], np.cumsum(seg_len)])

    @property
    def length(self) -> float:
        return float(self.cum_s[-1])

    def default_max_lateral(self) -> float:
        return self.width / 2.0 + 0.5


class LaneMapError(ValueError):
    pass


@dataclass
class LaneMap:
    lanes: dict[str, Lane]

    def __post_init__(self):
        self.validate()
        self._predecessors: dict[str, list[str]] = {lid: [] for lid in self.lanes}
        for lid in sorted(self.lanes):
            for succ in self.lanes[lid].successors:
                self._predecessors[succ].append(lid)

    def validate(self) -> None:
        dangling = []
        for lid, lane in self.lanes.items():
            if lane.lane_id != lid:
                raise LaneMapError(f"lane key {lid!r} does not match lane_id {lane.lane_id!r}")
            refs = list(lane.successors) + [c[0] for c in lane.conflicts]
            refs += [r for r in (lane.left_adjacent, lane.right_adjacent) if r is not None]
            dangling += [f"{lid}->{r}" for r in refs if r not in self.lanes]
        if dangling:
            raise LaneMapError("dangling lane references: " + ", ".join(dangling))

    def __len__(self) -> int:
        return len(self.lanes)

    def __getitem__(self, lane_id: str) -> Lane:
        return self.lanes[lane_id]

    def predecessors(self, lane_id: str) -> list[str]:
        return self._predecessors[lane_id]

    def adjacent(self, a: str, b: str) -> bool:
        la, lb = self.lanes[a], self.lanes[b]
        return b in (la.left_adjacent, la.right_adjacent) or a in (lb.left_adjacent, lb.right_adjacent)


@dataclass(frozen=True)
class FrenetCoord:
    lane_id: str
    s: float
    d: float


@dataclass(frozen=True)
class Gates:
    """Lane-assignment and relation gates shared by augmentation and graph building.

    ``max_lateral=None`` means per-lane ``width/2 + 0.5``.
    """

    max_lateral: float | None = None
    max_heading: float = math.pi / 4
    max_hops: int = 3

    def __post_init__(self):
        if self.max_lateral is not None and self.max_lateral < 0:
            raise ValueError("max_lateral must be >= 0")
        if not 0 <= self.max_heading <= math.pi:
            raise ValueError("max_heading must be in [0, pi]")
        if self.max_hops < 0:
            raise ValueError("max_hops must be >= 0")
