"""Trajectories, the planning vocabulary and direction-based clustering.

Conventions: ego frame with x forward and y to the left, so a left turn has a
positive lateral endpoint. A trajectory holds 40 poses sampled at 10 Hz, the
i-th pose belonging to time ``0.1 * (i + 1)`` seconds; the ego pose at t=0 is
the implicit origin and is not stored.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateCandidatesError,
    InsufficientPositiveWeightsError,
    InvalidParameterError,
    SchemaVersionError,
)

N_WAYPOINTS = 40
DT = 0.1
TIMES = DT * np.arange(1, N_WAYPOINTS + 1)
MAX_STEP = 3.0  # m per 0.1 s, i.e. 30 m/s

MIN_SPEED = 1.0
MAX_SPEED = 15.0
MAX_LATERAL_ACCEL = 3.0  # m/s^2, keeps every vocabulary entry comfortable
MAX_CURVATURE = 0.25  # 1/m
MAX_LONG_ACCEL = 1.5  # m/s^2 for the jittered fill entries

LABELS = ("sharp_left", "slight_left", "forward", "slight_right", "sharp_right")
N_CLUSTERS = len(LABELS)

VOCAB_FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class Trajectory:
    """40 poses ``(x, y, heading)``; ``id`` is the vocabulary index or -1."""

    poses: np.ndarray
    id: int = -1

    def __post_init__(self):
        poses = np.array(self.poses, dtype=np.float64)
        if poses.shape != (N_WAYPOINTS, 3):
            raise InvalidParameterError(
                f"trajectory needs shape ({N_WAYPOINTS}, 3), got {poses.shape}"
            )
        if not np.all(np.isfinite(poses)):
            raise InvalidParameterError("trajectory poses must be finite")
        poses.setflags(write=False)
        object.__setattr__(self, "poses", poses)

    @property
    def xy(self) -> np.ndarray:
        return self.poses[:, :2]

    def check(self) -> None:
        """Raise if the kinematic invariants do not hold.

        Step lengths, including the step from the origin to the first pose,
        must not exceed ``MAX_STEP``.
        """
        path = np.vstack([np.zeros((1, 2)), self.xy])
        steps = np.linalg.norm(np.diff(path, axis=0), axis=1)
        if np.any(steps > MAX_STEP + 1e-9):
            raise InvalidParameterError(
                f"trajectory {self.id}: waypoint spacing {steps.max():.3f} m exceeds {MAX_STEP} m"
            )
        heading = self.poses[:, 2]
        if np.any(heading <= -np.pi) or np.any(heading > np.pi):
            raise InvalidParameterError(f"trajectory {self.id}: heading outside (-pi, pi]")

    def mirrored(self) -> "Trajectory":
        poses = self.poses.copy()
        poses[:, 1] *= -1.0
        poses[:, 2] = wrap_angle(-poses[:, 2])
        return Trajectory(poses, self.id)

    def with_id(self, new_id: int) -> "Trajectory":
        return Trajectory(self.poses, new_id)


@dataclass(frozen=True, eq=False)
class PlanningVocabulary:
    trajectories: tuple
    speed_levels: int = 0
    curvature_levels: int = 0
    seed: int = 0

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        ids = [t.id for t in trajs]
        if ids != list(range(len(trajs))):
            raise InvalidParameterError("vocabulary ids must be 0..k-1 in order")
        object.__setattr__(self, "trajectories", trajs)
        stacked = np.stack([t.poses for t in trajs]) if trajs else np.zeros((0, N_WAYPOINTS, 3))
        stacked.setflags(write=False)
        object.__setattr__(self, "_poses", stacked)

    @property
    def k(self) -> int:
        return len(self.trajectories)

    @property
    def poses(self) -> np.ndarray:
        """All poses stacked, shape (k, 40, 3)."""
        return self._poses

    def __len__(self):
        return self.k

    def __getitem__(self, i) -> Trajectory:
        return self.trajectories[i]


def wrap_angle(a):
    """Map angles into (-pi, pi]."""
    a = np.asarray(a, dtype=np.float64)
    out = np.mod(a + np.pi, 2.0 * np.pi) - np.pi
    return np.where(out <= -np.pi, out + 2.0 * np.pi, out)


def arc_poses(speed0: float, accel: float, curvature: float) -> np.ndarray:
    """Constant-curvature arc with a linear speed profile, shape (40, 3)."""
    s = speed0 * TIMES + 0.5 * accel * TIMES**2
    if abs(curvature) < 1e-12:
        x, y = s, np.zeros_like(s)
    else:
        x = np.sin(curvature * s) / curvature
        y = (1.0 - np.cos(curvature * s)) / curvature
    heading = wrap_angle(curvature * s)
    return np.column_stack([x, y, heading])


def curvature_limit(max_speed: float) -> float:
    return min(MAX_CURVATURE, MAX_LATERAL_ACCEL / max_speed**2)


def generate_vocabulary(
    k: int = 512, speed_levels: int = 8, curvature_levels: int = 15, seed: int = 0
) -> PlanningVocabulary:
    """Synthesize a vocabulary of constant-curvature arcs.

    The first ``speed_levels * curvature_levels`` entries form a grid of
    constant speeds in [1, 15] m/s and curvatures symmetric about zero, scaled
    per speed so lateral acceleration stays below 3 m/s^2. The remaining
    entries are seeded random arcs with gentle longitudinal acceleration.
    """
    if k < 25:
        raise InvalidParameterError(f"k must be >= 25, got {k}")
    if speed_levels < 2:
        raise InvalidParameterError(f"speed_levels must be >= 2, got {speed_levels}")
    if curvature_levels < 5 or curvature_levels % 2 == 0:
        raise InvalidParameterError(
            f"curvature_levels must be odd and >= 5, got {curvature_levels}"
        )
    if speed_levels * curvature_levels > k:
        raise InvalidParameterError(
            f"grid of {speed_levels}x{curvature_levels} does not fit into k={k}"
        )

    poses = []
    fractions = np.linspace(-1.0, 1.0, curvature_levels)
    fractions[curvature_levels // 2] = 0.0
    for v in np.linspace(MIN_SPEED, MAX_SPEED, speed_levels):
        for c in fractions:
            poses.append(arc_poses(v, 0.0, c * curvature_limit(v)))

    rng = np.random.default_rng(seed)
    for _ in range(k - len(poses)):
        v0 = rng.uniform(MIN_SPEED, MAX_SPEED)
        lo = max(-MAX_LONG_ACCEL, (MIN_SPEED - v0) / 4.0)
        hi = min(MAX_LONG_ACCEL, (MAX_SPEED - v0) / 4.0)
        a = rng.uniform(lo, hi)
        c = rng.uniform(-1.0, 1.0)
        poses.append(arc_poses(v0, a, c * curvature_limit(max(v0, v0 + 4.0 * a))))

    trajs = tuple(Trajectory(p, i) for i, p in enumerate(poses))
    for t in trajs:
        t.check()
    return PlanningVocabulary(trajs, speed_levels, curvature_levels, seed)


def lateral_endpoint(traj: Trajectory) -> float:
    return float(traj.poses[-1, 1])


def trajectory_l2(a: Trajectory, b: Trajectory) -> float:
    """Euclidean distance between the stacked (x, y) waypoints; headings ignored."""
    return float(np.linalg.norm(a.xy - b.xy))


def pairwise_l2(xy_a: np.ndarray, xy_b: np.ndarray) -> np.ndarray:
    """L2 distances between two stacks of (n, 40, 2) waypoint arrays."""
    fa = xy_a.reshape(len(xy_a), -1)
    fb = xy_b.reshape(len(xy_b), -1)
    diff = fa[:, None, :] - fb[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def sample_candidates(
    vocab: PlanningVocabulary, weights, M: int, seed: int
) -> list[int]:
    """Weighted sampling of ``M`` distinct ids without replacement.

    Uses exponential keys: each id with weight w gets ``log(u) / w`` and the
    ``M`` largest keys win, which reproduces successive draws proportional to
    weight.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (vocab.k,):
        raise InvalidParameterError(f"expected {vocab.k} weights, got shape {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise InvalidParameterError("weights must be finite and nonnegative")
    if M > vocab.k or M < 1:
        raise InvalidParameterError(f"M must be in [1, {vocab.k}], got {M}")
    positive = np.flatnonzero(w > 0)
    if len(positive) < M:
        raise InsufficientPositiveWeightsError(
            f"only {len(positive)} positive weights for M={M}"
        )
    rng = np.random.default_rng(seed)
    u = rng.random(vocab.k)
    keys = np.full(vocab.k, -np.inf)
    # 1 - u lies in (0, 1], so the log is finite
    keys[positive] = np.log1p(-u[positive]) / w[positive]
    order = np.lexsort((np.arange(vocab.k), -keys))
    return [int(i) for i in order[:M]]


@dataclass(frozen=True)
class AnchorSet:
    """Positions (into the candidate list) of the five direction anchors."""

    indices: tuple

    def __post_init__(self):
        if len(self.indices) != N_CLUSTERS or len(set(self.indices)) != N_CLUSTERS:
            raise InvalidParameterError("an anchor set needs 5 distinct indices")

    def __getitem__(self, label: str) -> int:
        return self.indices[LABELS.index(label)]


def _tie_key(candidates: Sequence[Trajectory]) -> np.ndarray:
    ids = np.array([t.id for t in candidates], dtype=np.int64)
    return ids


def select_anchors(candidates: Sequence[Trajectory]) -> AnchorSet:
    """Pick sharp/slight left, forward, slight/sharp right anchors.

    Labels are filled in the order sharp -> slight -> forward; a label whose
    best candidate is already taken falls back to its next-best candidate.
    Ties go to the lower trajectory id, then to the earlier position.
    """
    if len(candidates) < N_CLUSTERS:
        raise InvalidParameterError(f"need at least 5 candidates, got {len(candidates)}")
    y = np.array([lateral_endpoint(t) for t in candidates])
    if np.all(y == y[0]):
        raise DegenerateCandidatesError("all lateral endpoints are equal")
    ids = _tie_key(candidates)
    pos = np.arange(len(candidates))
    taken: set[int] = set()

    def pick(cost: np.ndarray) -> int:
        for i in np.lexsort((pos, ids, cost)):
            if int(i) not in taken:
                taken.add(int(i))
                return int(i)
        raise DegenerateCandidatesError("ran out of candidates")  # pragma: no cover

    chosen = {}
    chosen["sharp_left"] = pick(-y)
    chosen["sharp_right"] = pick(y)
    chosen["slight_left"] = pick(np.abs(y - 0.5 * y[chosen["sharp_left"]]))
    chosen["slight_right"] = pick(np.abs(y - 0.5 * y[chosen["sharp_right"]]))
    chosen["forward"] = pick(np.abs(y))
    return AnchorSet(tuple(chosen[label] for label in LABELS))


@dataclass(frozen=True)
class ClusterAssignment:
    """Cluster index (into ``LABELS``) for each of the M candidates."""

    labels: tuple

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.labels, dtype=np.int64)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.array, minlength=N_CLUSTERS)

    def one_hot(self) -> np.ndarray:
        """(M, 5) membership matrix."""
        out = np.zeros((len(self.labels), N_CLUSTERS))
        out[np.arange(len(self.labels)), self.array] = 1.0
        return out


def candidate_xy(candidates: Sequence[Trajectory]) -> np.ndarray:
    return np.stack([t.xy for t in candidates])


def assign_clusters(candidates: Sequence[Trajectory], anchors: AnchorSet) -> ClusterAssignment:
    """Label each candidate with its nearest anchor in trajectory space.

    ``argmin`` returns the first minimum, so ties resolve in label order.
    """
    xy = candidate_xy(candidates)
    dist = pairwise_l2(xy, xy[list(anchors.indices)])
    labels = np.argmin(dist, axis=1)
    labels[list(anchors.indices)] = np.arange(N_CLUSTERS)
    return ClusterAssignment(tuple(int(v) for v in labels))


def save_vocabulary(vocab: PlanningVocabulary, path) -> None:
    lines = [
        f"format_version={VOCAB_FORMAT_VERSION}",
        f"k={vocab.k}",
        f"speed_levels={vocab.speed_levels}",
        f"curvature_levels={vocab.curvature_levels}",
        f"seed={vocab.seed}",
        "---",
    ]
    for t in vocab.trajectories:
        lines.append(str(t.id) + " " + " ".join(f"{v:.6f}" for v in t.poses.ravel()))
    Path(path).write_text("\n".join(lines) + "\n")


def load_vocabulary(path) -> PlanningVocabulary:
    """Read a vocabulary cache file and validate every trajectory."""
    text = Path(path).read_text().splitlines()
    sep = text.index("---")
    header = dict(line.split("=", 1) for line in text[:sep])
    if int(header.get("format_version", -1)) != VOCAB_FORMAT_VERSION:
        raise SchemaVersionError(
            f"vocabulary format_version {header.get('format_version')} != {VOCAB_FORMAT_VERSION}"
        )
    trajs = []
    for line in text[sep + 1 :]:
        if not line.strip():
            continue
        fields = line.split()
        poses = np.array([float(v) for v in fields[1:]]).reshape(N_WAYPOINTS, 3)
        # six fractional digits can push a heading of exactly pi just past the bound
        poses[:, 2] = wrap_angle(poses[:, 2])
        t = Trajectory(poses, int(fields[0]))
        t.check()
        trajs.append(t)
    if len(trajs) != int(header["k"]):
        raise InvalidParameterError(f"expected {header['k']} records, found {len(trajs)}")
    return PlanningVocabulary(
        tuple(trajs),
        int(header["speed_levels"]),
        int(header["curvature_levels"]),
        int(header["seed"]),
    )
