"""Synthetic bird's-eye-view scenes and the rule-based expert scorer.

The expert produces the five sub-scores (NC, DAC, EP, C, TTC) for any
trajectory in a scene. Obstacles are axis-aligned boxes in the ego frame
moving at constant velocity; the ego footprint is a 4.5 m x 2.0 m box
centred on each waypoint and rotated by its heading.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import geometry
from .errors import InvalidParameterError, SchemaVersionError, UnknownCategoryError
from .geometry import DT, TIMES, PlanningVocabulary, Trajectory

CATEGORIES = ("RDBT", "YLLT", "EXR", "UNPL", "ENR", "UNTS", "OTLC", "NLA", "BWTH", "YLD")
NONE_CATEGORY = "NONE"
ALL_CATEGORIES = CATEGORIES + (NONE_CATEGORY,)
COMMANDS = ("left", "straight", "right")

EGO_HALF_LENGTH = 2.25
EGO_HALF_WIDTH = 1.0
MAX_ACCEL = 4.0  # m/s^2
MAX_JERK = 8.0  # m/s^3
TTC_HORIZON_STEPS = 10  # 1.0 s at 0.1 s
CAR_HALF = (2.25, 1.0)
PEDESTRIAN_HALF = (0.4, 0.4)
CONE_HALF = (0.5, 0.5)

SCENE_FORMAT_VERSION = 1
SUBSCORE_FIELDS = ("nc", "dac", "ep", "c", "ttc")


@dataclass(frozen=True)
class EgoStatus:
    speed: float
    acceleration: float
    command: str

    def __post_init__(self):
        if not 0.0 <= self.speed <= 20.0:
            raise InvalidParameterError(f"ego speed {self.speed} outside [0, 20]")
        if abs(self.acceleration) > 5.0:
            raise InvalidParameterError(f"ego acceleration {self.acceleration} outside [-5, 5]")
        if self.command not in COMMANDS:
            raise InvalidParameterError(f"unknown command {self.command!r}")


@dataclass(frozen=True)
class Obstacle:
    x: float
    y: float
    vx: float
    vy: float
    hl: float
    hw: float

    def __post_init__(self):
        if self.hl <= 0 or self.hw <= 0:
            raise InvalidParameterError("obstacle half extents must be positive")
        if math.hypot(self.vx, self.vy) > 25.0:
            raise InvalidParameterError("obstacle speed above 25 m/s")

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)


@dataclass(frozen=True)
class Corridor:
    centerline: tuple
    half_width: float

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.centerline)
        object.__setattr__(self, "centerline", pts)
        if len(pts) < 2:
            raise InvalidParameterError("corridor centerline needs at least 2 points")
        if not 1.5 <= self.half_width <= 8.0:
            raise InvalidParameterError(f"half_width {self.half_width} outside [1.5, 8]")
        seg = np.diff(np.asarray(pts), axis=0)
        if np.any(np.hypot(seg[:, 0], seg[:, 1]) <= 0):
            raise InvalidParameterError("centerline arc length must be strictly increasing")

    @property
    def points(self) -> np.ndarray:
        return np.asarray(self.centerline)


@dataclass(frozen=True)
class Scene:
    ego: EgoStatus
    corridor: Corridor
    obstacles: tuple
    category: str = NONE_CATEGORY
    seed: int = 0
    frame_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if self.category not in ALL_CATEGORIES:
            raise UnknownCategoryError(f"unknown category {self.category!r}")
        if self.frame_index < 0:
            raise InvalidParameterError("frame_index must be >= 0")


@dataclass(frozen=True)
class SubScores:
    nc: float
    dac: float
    ep: float
    c: float
    ttc: float

    def __post_init__(self):
        for name in SUBSCORE_FIELDS:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidParameterError(f"sub-score {name}={v} outside [0, 1]")

    def as_tuple(self) -> tuple:
        return (self.nc, self.dac, self.ep, self.c, self.ttc)

    @classmethod
    def from_row(cls, row) -> "SubScores":
        return cls(*(float(v) for v in row))


# ---------------------------------------------------------------------------
# geometry helpers


def _poses_of(trajs) -> np.ndarray:
    if isinstance(trajs, Trajectory):
        return trajs.poses[None]
    if isinstance(trajs, PlanningVocabulary):
        return trajs.poses
    if isinstance(trajs, np.ndarray):
        return trajs if trajs.ndim == 3 else trajs[None]
    return np.stack([t.poses for t in trajs])


def _obstacle_arrays(scene: Scene):
    if not scene.obstacles:
        z = np.zeros((0, 2))
        return z, z, z
    pos = np.array([(o.x, o.y) for o in scene.obstacles])
    vel = np.array([(o.vx, o.vy) for o in scene.obstacles])
    half = np.array([(o.hl, o.hw) for o in scene.obstacles])
    return pos, vel, half


def boxes_overlap(center, heading, obs_center, obs_half) -> np.ndarray:
    """Separating-axis test between rotated ego boxes and axis-aligned boxes.

    ``center`` (..., 2) and ``heading`` (...) broadcast against ``obs_center``
    (..., 2) and ``obs_half`` (..., 2). Touching boxes count as overlapping.
    """
    L, W = EGO_HALF_LENGTH, EGO_HALF_WIDTH
    c, s = np.cos(heading), np.sin(heading)
    ac, as_ = np.abs(c), np.abs(s)
    d = obs_center - center
    dx, dy = d[..., 0], d[..., 1]
    hl, hw = obs_half[..., 0], obs_half[..., 1]
    sep = np.abs(dx) > hl + L * ac + W * as_
    sep |= np.abs(dy) > hw + L * as_ + W * ac
    sep |= np.abs(dx * c + dy * s) > L + hl * ac + hw * as_
    sep |= np.abs(-dx * s + dy * c) > W + hl * as_ + hw * ac
    return ~sep


def _collides(centers, headings, times, scene: Scene) -> np.ndarray:
    """Any-overlap flag over the trailing axes; centers (..., 2), times broadcastable."""
    pos, vel, half = _obstacle_arrays(scene)
    lead = centers.shape[:-1]
    if len(pos) == 0:
        return np.zeros(lead, dtype=bool)
    t = np.asarray(times)[..., None, None]
    obs = pos + vel * t  # (..., O, 2)
    hit = boxes_overlap(centers[..., None, :], headings[..., None], obs, half)
    return hit.any(axis=-1)


def velocities(poses: np.ndarray) -> np.ndarray:
    """Finite-difference velocity at each waypoint, origin as the previous pose."""
    xy = poses[..., :2]
    prev = np.concatenate([np.zeros_like(xy[..., :1, :]), xy[..., :-1, :]], axis=-2)
    return (xy - prev) / DT


def _segments(corridor: Corridor):
    p = corridor.points
    a, b = p[:-1], p[1:]
    ab = b - a
    length = np.hypot(ab[:, 0], ab[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(length)])
    return a, ab, length, cum


def _project(points: np.ndarray, corridor: Corridor):
    """Distance to the centerline polyline and arc length of the foot point."""
    a, ab, length, cum = _segments(corridor)
    shape = points.shape[:-1]
    pts = points.reshape(-1, 2)
    apx = pts[:, 0:1] - a[:, 0]
    apy = pts[:, 1:2] - a[:, 1]
    t = np.clip((apx * ab[:, 0] + apy * ab[:, 1]) / length**2, 0.0, 1.0)
    ex = apx - t * ab[:, 0]
    ey = apy - t * ab[:, 1]
    d2 = ex * ex + ey * ey
    seg = np.argmin(d2, axis=1)
    rows = np.arange(len(pts))
    dist = np.sqrt(d2[rows, seg])
    arc = cum[seg] + t[rows, seg] * length[seg]
    return dist.reshape(shape), arc.reshape(shape)


def point_to_polyline(points, corridor: Corridor) -> np.ndarray:
    return _project(np.asarray(points, dtype=np.float64), corridor)[0]


# ---------------------------------------------------------------------------
# sub-scores, vectorized over a batch of trajectories


def no_collision_batch(scene: Scene, poses: np.ndarray) -> np.ndarray:
    hit = _collides(poses[..., :2], poses[..., 2], TIMES, scene)
    return (~hit.any(axis=-1)).astype(np.float64)


def ttc_batch(scene: Scene, poses: np.ndarray) -> np.ndarray:
    steps = DT * np.arange(TTC_HORIZON_STEPS + 1)
    vel = velocities(poses)
    centers = poses[..., :, None, :2] + vel[..., :, None, :] * steps[:, None]
    headings = np.broadcast_to(poses[..., :, None, 2], centers.shape[:-1])
    times = TIMES[:, None] + steps[None, :]
    hit = _collides(centers, headings, times, scene)
    return (~hit.any(axis=(-1, -2))).astype(np.float64)


def drivable_area_batch(scene: Scene, poses: np.ndarray) -> np.ndarray:
    dist = point_to_polyline(poses[..., :2], scene.corridor)
    return np.all(dist <= scene.corridor.half_width, axis=-1).astype(np.float64)


def comfort_batch(poses: np.ndarray) -> np.ndarray:
    vel = np.diff(poses[..., :2], axis=-2) / DT
    acc = np.diff(vel, axis=-2) / DT
    jerk = np.diff(acc, axis=-2) / DT
    ok = np.all(np.linalg.norm(acc, axis=-1) <= MAX_ACCEL, axis=-1)
    ok &= np.all(np.linalg.norm(jerk, axis=-1) <= MAX_JERK, axis=-1)
    return ok.astype(np.float64)


def progress_batch(scene: Scene, poses: np.ndarray) -> np.ndarray:
    """Arc length gained along the centerline between the origin and the endpoint."""
    _, s_end = _project(poses[..., -1, :2], scene.corridor)
    _, s0 = _project(np.zeros(2), scene.corridor)
    return np.maximum(s_end - s0, 0.0)


@lru_cache(maxsize=512)
def progress_normalizer(scene: Scene, vocab: PlanningVocabulary) -> float:
    """Best progress among vocabulary members with NC = 1 and DAC = 1."""
    poses = vocab.poses
    feasible = (no_collision_batch(scene, poses) == 1) & (drivable_area_batch(scene, poses) == 1)
    if not feasible.any():
        return 0.0
    return float(progress_batch(scene, poses[feasible]).max())


def score_no_collision(scene: Scene, traj: Trajectory) -> float:
    return float(no_collision_batch(scene, traj.poses))


def score_ttc(scene: Scene, traj: Trajectory) -> float:
    return float(ttc_batch(scene, traj.poses))


def score_drivable_area(scene: Scene, traj: Trajectory) -> float:
    return float(drivable_area_batch(scene, traj.poses))


def score_comfort(scene: Scene, traj: Trajectory) -> float:
    return float(comfort_batch(traj.poses))


def score_progress(scene: Scene, traj: Trajectory, vocab: PlanningVocabulary) -> float:
    denom = progress_normalizer(scene, vocab)
    if denom <= 0.0:
        return 0.0
    return float(np.clip(progress_batch(scene, traj.poses) / denom, 0.0, 1.0))


def pdm_score(sub) -> float:
    """NC * DAC * (5 TTC + 2 C + 5 EP) / 12."""
    nc, dac, ep, c, ttc = sub.as_tuple() if isinstance(sub, SubScores) else sub
    return nc * dac * (5.0 * ttc + 2.0 * c + 5.0 * ep) / 12.0


def pdm_scores(table: np.ndarray) -> np.ndarray:
    """Row-wise PDMS for an (n, 5) sub-score array."""
    t = np.asarray(table)
    return t[:, 0] * t[:, 1] * (5.0 * t[:, 4] + 2.0 * t[:, 3] + 5.0 * t[:, 2]) / 12.0


def expert_score(scene: Scene, traj: Trajectory, vocab: PlanningVocabulary) -> SubScores:
    return SubScores(
        nc=score_no_collision(scene, traj),
        dac=score_drivable_area(scene, traj),
        ep=score_progress(scene, traj, vocab),
        c=score_comfort(scene, traj),
        ttc=score_ttc(scene, traj),
    )


def expert_table(scene: Scene, vocab: PlanningVocabulary, trajs=None) -> np.ndarray:
    """(n, 5) sub-scores for ``trajs`` (default: the whole vocabulary)."""
    poses = vocab.poses if trajs is None else _poses_of(trajs)
    nc = no_collision_batch(scene, poses)
    dac = drivable_area_batch(scene, poses)
    progress = progress_batch(scene, poses)
    if trajs is None:
        feasible = (nc == 1) & (dac == 1)
        denom = float(progress[feasible].max()) if feasible.any() else 0.0
    else:
        denom = progress_normalizer(scene, vocab)
    ep = np.clip(progress / denom, 0.0, 1.0) if denom > 0 else np.zeros(len(poses))
    return np.column_stack([nc, dac, ep, comfort_batch(poses), ttc_batch(scene, poses)])


# ---------------------------------------------------------------------------
# scene generation


def build_centerline(
    turn_start: float,
    curvature: float,
    lateral_offset: float = 0.0,
    max_turn: float = math.pi / 2,
    length: float = 160.0,
    step: float = 2.0,
) -> tuple:
    """Centerline starting 10 m behind the ego: straight, then an arc, then straight."""
    s = np.arange(-10.0, length + step, step)
    kappa = np.where(s >= turn_start, curvature, 0.0)
    if curvature != 0.0:
        arc_end = turn_start + max_turn / abs(curvature)
        kappa = np.where(s >= arc_end, 0.0, kappa)
    heading = np.concatenate([[0.0], np.cumsum(kappa[:-1] * step)])
    x = s[0] + np.concatenate([[0.0], np.cumsum(np.cos(heading[:-1] + 0.5 * kappa[:-1] * step) * step)])
    y = lateral_offset + np.concatenate([[0.0], np.cumsum(np.sin(heading[:-1] + 0.5 * kappa[:-1] * step) * step)])
    return tuple(zip(x.tolist(), y.tolist()))


def _along(centerline, s: float, lateral: float = 0.0):
    """Point at arc length ``s`` (measured from the first point) plus its tangent."""
    p = np.asarray(centerline)
    seg = np.diff(p, axis=0)
    length = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(length)])
    i = int(np.clip(np.searchsorted(cum, s) - 1, 0, len(seg) - 1))
    t = (s - cum[i]) / length[i]
    tangent = seg[i] / length[i]
    normal = np.array([-tangent[1], tangent[0]])
    return p[i] + t * seg[i] + lateral * normal, tangent, normal


def _corridor_heading_change(centerline, s: float = 40.0) -> float:
    _, tan, _ = _along(centerline, s + 10.0)
    return math.atan2(tan[1], tan[0])


def _car(pos, vel, half=CAR_HALF) -> Obstacle:
    return Obstacle(float(pos[0]), float(pos[1]), float(vel[0]), float(vel[1]), *half)


def _lane_car(rng, cl, s_range, lateral, speed_range, direction=1.0) -> Obstacle:
    s = rng.uniform(*s_range) + 10.0
    pos, tan, _ = _along(cl, s, lateral)
    return _car(pos, direction * rng.uniform(*speed_range) * tan)


def _category_layout(category: str, rng: np.random.Generator):
    """Corridor and obstacles for one synthetic scenario type."""
    u = rng.uniform
    obstacles = []
    if category == "RDBT":
        kappa = rng.choice([-1.0, 1.0]) * u(0.03, 0.05)
        cl = build_centerline(u(5.0, 15.0), kappa, u(-0.5, 0.5))
        hw = u(3.0, 4.0)
        pos, tan, nrm = _along(cl, u(25.0, 40.0) + 10.0)
        side = rng.choice([-1.0, 1.0])
        obstacles.append(_car(pos + side * u(6.0, 12.0) * nrm, -side * u(3.0, 6.0) * nrm))
    elif category == "YLLT":
        cl = build_centerline(u(20.0, 60.0), u(-0.005, 0.005), u(-0.5, 0.5))
        hw = u(3.0, 4.0)
        obstacles.append(_lane_car(rng, cl, (15.0, 35.0), u(-0.5, 0.5), (0.0, 3.0)))
    elif category == "EXR":
        cl = build_centerline(u(10.0, 25.0), -u(0.015, 0.03), u(-0.5, 0.5))
        hw = u(2.5, 3.5)
        obstacles.append(_lane_car(rng, cl, (20.0, 45.0), 0.0, (4.0, 8.0)))
    elif category == "UNPL":
        cl = build_centerline(u(5.0, 15.0), u(0.03, 0.05), u(-0.5, 0.5))
        hw = u(3.0, 4.5)
        pos, tan, nrm = _along(cl, u(30.0, 50.0) + 10.0, u(0.5, 2.5))
        obstacles.append(_car(pos, -u(4.0, 8.0) * tan))
    elif category == "ENR":
        cl = build_centerline(u(20.0, 50.0), u(-0.01, 0.01), u(-0.5, 0.5))
        hw = u(3.0, 4.0)
        pos, tan, nrm = _along(cl, u(10.0, 25.0) + 10.0, -u(4.0, 6.0))
        obstacles.append(_car(pos, u(8.0, 12.0) * tan + u(0.5, 1.2) * nrm))
    elif category == "UNTS":
        cl = build_centerline(u(20.0, 60.0), u(-0.01, 0.01), u(-0.5, 0.5))
        hw = u(3.0, 4.0)
        pos, _, _ = _along(cl, u(15.0, 30.0) + 10.0, rng.choice([-1.0, 1.0]) * u(0.5, 1.5))
        obstacles.append(_car(pos, (0.0, 0.0), CONE_HALF))
    elif category == "OTLC":
        cl = build_centerline(u(30.0, 70.0), u(-0.005, 0.005), 0.0)
        hw = u(5.5, 7.0)
        obstacles.append(_lane_car(rng, cl, (10.0, 25.0), u(-0.3, 0.3), (1.0, 3.0)))
    elif category == "NLA":
        cl = build_centerline(u(10.0, 40.0), u(-0.01, 0.01), u(-1.0, 1.0))
        hw = u(6.0, 8.0)
        for _ in range(int(rng.integers(3, 7))):
            pos, _, _ = _along(cl, u(12.0, 60.0) + 10.0, u(-5.0, 5.0))
            obstacles.append(_car(pos, (0.0, 0.0)))
    elif category == "BWTH":
        cl = build_centerline(u(10.0, 40.0), u(-0.015, 0.015), u(-0.3, 0.3))
        hw = u(2.5, 3.0)
        obstacles.append(_lane_car(rng, cl, (15.0, 35.0), 0.0, (5.0, 9.0)))
    elif category == "YLD":
        cl = build_centerline(u(20.0, 60.0), u(-0.01, 0.01), u(-0.5, 0.5))
        hw = u(3.0, 4.0)
        side = rng.choice([-1.0, 1.0])
        pos, tan, nrm = _along(cl, u(12.0, 30.0) + 10.0, side * u(hw - 1.0, hw + 2.0))
        obstacles.append(_car(pos, -side * u(0.8, 1.8) * nrm, PEDESTRIAN_HALF))
    elif category == NONE_CATEGORY:
        cl = build_centerline(u(10.0, 40.0), u(-0.01, 0.01), u(-0.5, 0.5))
        hw = u(3.0, 4.0)
        for _ in range(int(rng.integers(0, 3))):
            if rng.random() < 0.5:
                obstacles.append(_lane_car(rng, cl, (15.0, 60.0), u(-0.5, 0.5), (3.0, 12.0)))
            else:
                obstacles.append(
                    _lane_car(rng, cl, (30.0, 80.0), -u(2.5, 3.5), (3.0, 10.0), direction=-1.0)
                )
    else:
        raise UnknownCategoryError(f"unknown category {category!r}")
    return cl, float(hw), obstacles


def _extra_obstacles(rng, cl, hw, density: float) -> list:
    out = []
    for _ in range(int(rng.poisson(density))):
        if rng.random() < 0.5:
            out.append(_lane_car(rng, cl, (8.0, 45.0), rng.uniform(-hw, hw), (0.0, 8.0)))
        else:
            pos, tan, nrm = _along(cl, rng.uniform(10.0, 40.0) + 10.0)
            side = rng.choice([-1.0, 1.0])
            out.append(_car(pos + side * rng.uniform(4.0, 10.0) * nrm, -side * rng.uniform(1.0, 5.0) * nrm))
    return out


@lru_cache(maxsize=1)
def default_test_vocabulary() -> PlanningVocabulary:
    return geometry.generate_vocabulary(25, 5, 5, 0)


def admissible(scene: Scene, vocab: PlanningVocabulary | None = None) -> bool:
    """True if some vocabulary trajectory earns a positive PDMS and the ego starts clear."""
    vocab = vocab or default_test_vocabulary()
    if _collides(np.zeros((1, 2)), np.zeros(1), np.zeros(1), scene).any():
        return False
    return bool(np.any(pdm_scores(expert_table(scene, vocab)) > 0))


def _ego(rng, centerline) -> EgoStatus:
    turn = _corridor_heading_change(centerline)
    command = "left" if turn > 0.3 else "right" if turn < -0.3 else "straight"
    return EgoStatus(float(rng.uniform(0.0, 15.0)), float(rng.uniform(-2.0, 2.0)), command)


def generate_scene(category: str, seed: int, density: float = 0.0, frame_index: int = 0) -> Scene:
    """Deterministic synthetic scene for ``(category, seed)``.

    ``density`` is the expected number of additional random obstacles. Scenes
    are redrawn until admissible under the 25-entry test vocabulary; as a last
    resort the obstacles are dropped, which always leaves a slow straight
    trajectory with positive PDMS.
    """
    if category not in ALL_CATEGORIES:
        raise UnknownCategoryError(f"unknown category {category!r}")
    cat_index = ALL_CATEGORIES.index(category)
    scene = None
    for attempt in range(50):
        rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, cat_index, attempt])
        cl, hw, obstacles = _category_layout(category, rng)
        if density > 0:
            obstacles += _extra_obstacles(rng, cl, hw, density)
        scene = Scene(_ego(rng, cl), Corridor(cl, hw), tuple(obstacles), category, int(seed), frame_index)
        if admissible(scene):
            return scene
    return Scene(scene.ego, scene.corridor, (), category, int(seed), frame_index)


def _jitter(scene: Scene, rng, frame_index: int) -> Scene:
    obstacles = tuple(
        Obstacle(
            o.x + rng.normal(0.0, 0.3),
            o.y + rng.normal(0.0, 0.15),
            o.vx + rng.normal(0.0, 0.2) if o.speed > 0 else 0.0,
            o.vy + rng.normal(0.0, 0.1) if o.speed > 0 else 0.0,
            o.hl,
            o.hw,
        )
        for o in scene.obstacles
    )
    ego = EgoStatus(
        float(np.clip(scene.ego.speed + rng.normal(0.0, 0.3), 0.0, 20.0)),
        float(np.clip(scene.ego.acceleration + rng.normal(0.0, 0.2), -5.0, 5.0)),
        scene.ego.command,
    )
    return Scene(ego, scene.corridor, obstacles, scene.category, scene.seed, frame_index)


def _normalize_mix(category_mix) -> tuple[list, np.ndarray]:
    if category_mix is None:
        category_mix = ALL_CATEGORIES
    if isinstance(category_mix, str):
        category_mix = [c for c in category_mix.split(",") if c]
    if isinstance(category_mix, dict):
        names = list(category_mix)
        w = np.array([float(category_mix[c]) for c in names])
    else:
        names = list(category_mix)
        w = np.ones(len(names))
    for c in names:
        if c not in ALL_CATEGORIES:
            raise UnknownCategoryError(f"unknown category {c!r}")
    if not names or w.sum() <= 0:
        raise InvalidParameterError("category mix is empty")
    return names, w / w.sum()


def generate_stream(
    n_frames: int,
    category_mix=None,
    seed: int = 0,
    density: float = 0.0,
    clip_length: int = 8,
) -> list[Scene]:
    """Consecutive frames grouped into clips of ``clip_length``.

    Each clip starts from ``generate_scene`` and perturbs obstacle and ego
    kinematics frame to frame, so obstacle count is shared inside a clip.
    Frame 0 equals ``generate_scene(category_0, seed)``.
    """
    if n_frames < 0 or clip_length < 1:
        raise InvalidParameterError("n_frames must be >= 0 and clip_length >= 1")
    names, probs = _normalize_mix(category_mix)
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, 7919])
    frames: list[Scene] = []
    scene = None
    for i in range(n_frames):
        clip, offset = divmod(i, clip_length)
        if offset == 0:
            category = names[int(rng.choice(len(names), p=probs))]
            clip_seed = int(seed) + 1_000_003 * clip
            scene = generate_scene(category, clip_seed, density, frame_index=i)
        else:
            candidate = _jitter(scene, rng, i)
            scene = candidate if admissible(candidate) else _jitter_free_copy(scene, i)
        frames.append(scene)
    return frames


def _jitter_free_copy(scene: Scene, frame_index: int) -> Scene:
    return Scene(scene.ego, scene.corridor, scene.obstacles, scene.category, scene.seed, frame_index)


# ---------------------------------------------------------------------------
# scene files (JSON lines)


def scene_to_record(scene: Scene) -> dict:
    return {
        "format_version": SCENE_FORMAT_VERSION,
        "category": scene.category,
        "seed": scene.seed,
        "frame_index": scene.frame_index,
        "ego": asdict(scene.ego),
        "corridor": {
            "half_width": scene.corridor.half_width,
            "centerline": [list(p) for p in scene.corridor.centerline],
        },
        "obstacles": [asdict(o) for o in scene.obstacles],
    }


def scene_from_record(rec: dict) -> Scene:
    if rec.get("format_version") != SCENE_FORMAT_VERSION:
        raise SchemaVersionError(
            f"scene format_version {rec.get('format_version')} != {SCENE_FORMAT_VERSION}"
        )
    return Scene(
        ego=EgoStatus(**rec["ego"]),
        corridor=Corridor(tuple(map(tuple, rec["corridor"]["centerline"])), rec["corridor"]["half_width"]),
        obstacles=tuple(Obstacle(**o) for o in rec["obstacles"]),
        category=rec["category"],
        seed=rec["seed"],
        frame_index=rec["frame_index"],
    )


def save_scenes(scenes: Iterable[Scene], path) -> None:
    with open(path, "w") as fh:
        for scene in scenes:
            fh.write(json.dumps(scene_to_record(scene)) + "\n")


def load_scenes(path) -> list[Scene]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            out.append(scene_from_record(json.loads(line)))
    return out
