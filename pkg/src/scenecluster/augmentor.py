"""Positive samples by perturbing entity states in Cartesian space."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scene_model import EntityState, Gates, LaneMap, TrafficScene, obb_overlap, project_to_lanes

# recorded in artifact metadata
RNG_NAME = "numpy.random.PCG64"

# below this speed a perturbed velocity says nothing reliable about heading
YAW_SPEED_THRESHOLD = 0.5


@dataclass(frozen=True)
class AugmentParams:
    sigma_pos: float = 1.5
    sigma_vel: float = 2.0
    p_entity: float = 0.5
    max_retries: int = 10
    rng_seed: int = 0

    def __post_init__(self):
        if self.sigma_pos < 0 or self.sigma_vel < 0:
            raise ValueError("sigma_pos and sigma_vel must be >= 0")
        if not 0.0 <= self.p_entity <= 1.0:
            raise ValueError("p_entity must be in [0, 1]")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


def _perturb(e: EntityState, draws, params: AugmentParams) -> EntityState:
    dx, dy, dvx, dvy = draws
    vx = e.vx + params.sigma_vel * dvx
    vy = e.vy + params.sigma_vel * dvy
    yaw = math.atan2(vy, vx) if math.hypot(vx, vy) > YAW_SPEED_THRESHOLD else e.yaw
    return e.with_(x=e.x + params.sigma_pos * dx, y=e.y + params.sigma_pos * dy, vx=vx, vy=vy, yaw=yaw)


def on_road(entity: EntityState, lane_map: LaneMap, gates: Gates = Gates()) -> bool:
    """Whether the entity's position lies within the lateral gate of some lane.

    Heading is ignored: a vehicle turned by velocity noise is still on the road.
    """
    return bool(project_to_lanes(entity, lane_map, gates.max_lateral, max_heading=math.pi))


def augment_scene(
    scene: TrafficScene,
    lane_map: LaneMap,
    params: AugmentParams,
    gates: Gates = Gates(),
    rng=None,
) -> TrafficScene:
    """Return a perturbed copy of ``scene``.

    Each entity is selected with probability ``p_entity``; selected entities
    get Gaussian position and velocity noise. A draw whose footprint overlaps
    an entity already placed, or the original footprint of one still to be
    processed, is redrawn up to ``max_retries`` times before falling back to
    the original state. Perturbed entities whose position lands off-road
    are dropped.

    ``rng`` overrides the generator seeded from ``params.rng_seed``; it must
    provide ``random()`` and ``normal(size=4)``.
    """
    if len(scene) == 0:
        raise ValueError("cannot augment an empty scene")
    if rng is None:
        rng = np.random.default_rng(params.rng_seed)
    originals = list(scene.entities)
    placed: list[EntityState] = []
    for i, e in enumerate(originals):
        if not rng.random() < params.p_entity:
            placed.append(e)
            continue
        others = placed + originals[i + 1:]
        chosen = None
        for _ in range(params.max_retries + 1):
            cand = _perturb(e, rng.normal(size=4), params)
            if not any(obb_overlap(cand, o) for o in others):
                chosen = cand
                break
        if chosen is None:
            placed.append(e)
        elif on_road(chosen, lane_map, gates):
            placed.append(chosen)
    return TrafficScene(scene.scene_id, scene.timestamp_ms, placed)


def augment_dataset(scenes, lane_map: LaneMap, params: AugmentParams, copies: int = 1, gates: Gates = Gates()):
    """``copies`` augmentations of every scene as ``(source_index, copy, scene)``.

    Each (scene, copy) gets its own generator stream derived from ``params.rng_seed``.
    """
    out = []
    for idx, scene in enumerate(scenes):
        for c in range(copies):
            rng = np.random.default_rng([params.rng_seed, idx, c])
            aug = augment_scene(scene, lane_map, params, gates, rng=rng)
            out.append((idx, c, aug))
    return out


__all__ = ["AugmentParams", "augment_scene", "augment_dataset", "obb_overlap", "RNG_NAME"]
