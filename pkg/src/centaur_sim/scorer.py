"""The trajectory-scoring planner and its evidential regression variant.

Frozen featurizers turn a scene into 32 numbers and a trajectory into 16. A
feed-forward decoder (48 -> 64 -> 64 -> 5, tanh hidden units, sigmoid
outputs) predicts the five score features for every (scene, trajectory)
pair. Gradients come from :mod:`centaur_sim.autodiff`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import (
    EmptyDatasetError,
    InvalidParameterError,
    NonFiniteLossError,
    SchemaVersionError,
    ShapeMismatchError,
)
from .geometry import (
    DT,
    N_WAYPOINTS,
    PlanningVocabulary,
    Trajectory,
    pairwise_l2,
    wrap_angle,
)
from .worldsim import Scene, expert_table, pdm_scores, _along

SCENE_DIM = 32
TRAJ_DIM = 16
INPUT_DIM = SCENE_DIM + TRAJ_DIM
HIDDEN = 64
N_SCORES = 5
OUT_DIM = 2 * N_WAYPOINTS  # evidential head: (x, y) per waypoint
FEATURE_LAYOUT_VERSION = 1
CHECKPOINT_FORMAT_VERSION = 1

KD_EPS = 1e-7
IMITATION_TEMPERATURE = 2.0  # m
IMITATION_WEIGHT = 0.01
EVIDENTIAL_REG = 0.01
GAMMA_SCALE = 20.0  # m per unit of raw regression output

TRAJ_SAMPLE_STEPS = (4, 9, 19, 29, 39)
CURVATURE_LOOKAHEAD = (0.0, 15.0, 30.0, 45.0, 60.0)  # m of arc ahead of the ego


# ---------------------------------------------------------------------------
# frozen featurizers


def _centerline_curvature(scene: Scene) -> np.ndarray:
    pts = scene.corridor.points
    if len(pts) < 3:
        return np.zeros(len(CURVATURE_LOOKAHEAD))  # a single segment is straight
    seg = np.diff(pts, axis=0)
    heading = np.unwrap(np.arctan2(seg[:, 1], seg[:, 0]))
    length = np.hypot(seg[:, 0], seg[:, 1])
    mid = np.concatenate([[0.0], np.cumsum(length)])[:-1] + 0.5 * length
    kappa = np.diff(heading) / (0.5 * (length[:-1] + length[1:]))
    kappa_s = 0.5 * (mid[:-1] + mid[1:])
    # arc length of the ego's foot point on the centerline
    d = np.hypot(pts[:, 0], pts[:, 1])
    s0 = np.concatenate([[0.0], np.cumsum(length)])[int(np.argmin(d))]
    return np.interp(s0 + np.asarray(CURVATURE_LOOKAHEAD), kappa_s, kappa)


def encode_scene(scene: Scene) -> np.ndarray:
    """Layout: speed, accel, command one-hot (3), half width, 5 curvature
    samples, then (x, y, vx, vy, hl, hw) for the 3 nearest obstacles, padded."""
    f = np.zeros(SCENE_DIM)
    f[0] = scene.ego.speed
    f[1] = scene.ego.acceleration
    f[2 + ("left", "straight", "right").index(scene.ego.command)] = 1.0
    f[5] = scene.corridor.half_width
    f[6:11] = _centerline_curvature(scene)
    obs = sorted(scene.obstacles, key=lambda o: (math.hypot(o.x, o.y), o.x, o.y))[:3]
    for j, o in enumerate(obs):
        f[11 + 6 * j : 17 + 6 * j] = (o.x, o.y, o.vx, o.vy, o.hl, o.hw)
    return f


def encode_trajectory(traj) -> np.ndarray:
    """(x, y) at 5 waypoints, final heading, mean speed, mean |curvature|, padded."""
    poses = traj.poses if isinstance(traj, Trajectory) else np.asarray(traj)
    return encode_trajectories(poses[None])[0]


def encode_trajectories(poses: np.ndarray) -> np.ndarray:
    poses = np.asarray(poses)
    n = len(poses)
    f = np.zeros((n, TRAJ_DIM))
    f[:, 0:10] = poses[:, TRAJ_SAMPLE_STEPS, :2].reshape(n, 10)
    f[:, 10] = poses[:, -1, 2]
    path = np.concatenate([np.zeros((n, 1, 2)), poses[:, :, :2]], axis=1)
    step = np.linalg.norm(np.diff(path, axis=1), axis=2)
    f[:, 11] = step.mean(axis=1) / DT
    dheading = np.abs(np.diff(np.unwrap(poses[:, :, 2], axis=1), axis=1))
    f[:, 12] = np.mean(dheading / np.maximum(step[:, 1:], 1e-6), axis=1)
    return f


@dataclass(frozen=True)
class EncoderParams:
    """Fixed per-feature scales; part of the full parameter vector but never trained."""

    scene_scale: np.ndarray = field(
        default_factory=lambda: np.array(
            [0.1, 0.5, 1, 1, 1, 0.25] + [20.0] * 5 + [0.05, 0.05, 0.2, 0.2, 1, 1] * 3 + [0.0] * 3
        )
    )
    traj_scale: np.ndarray = field(
        default_factory=lambda: np.array([0.05] * 10 + [1.0, 0.1, 10.0] + [0.0] * 3)
    )

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.scene_scale, self.traj_scale])

    @classmethod
    def from_vector(cls, vec) -> "EncoderParams":
        vec = np.asarray(vec, dtype=np.float64)
        return cls(vec[:SCENE_DIM].copy(), vec[SCENE_DIM:INPUT_DIM].copy())

    @property
    def size(self) -> int:
        return INPUT_DIM


# ---------------------------------------------------------------------------
# parameter containers


class _ParamSet:
    """Mixin for dataclasses whose fields are arrays (or Tensors)."""

    def arrays(self) -> list:
        return [getattr(self, f.name) for f in fields(self)]

    def flatten(self) -> np.ndarray:
        return np.concatenate([np.asarray(a).ravel() for a in self.arrays()])

    @property
    def size(self) -> int:
        return int(sum(np.size(a) for a in self.arrays()))

    def unflatten(self, vec):
        """Same layout, values taken from ``vec``."""
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.size,):
            raise ShapeMismatchError(f"expected {self.size} parameters, got {vec.shape}")
        out, i = {}, 0
        for f in fields(self):
            shape = np.shape(getattr(self, f.name))
            n = int(np.prod(shape))
            out[f.name] = vec[i : i + n].reshape(shape).copy()
            i += n
        return type(self)(**out)

    def map(self, fn):
        return type(self)(**{f.name: fn(getattr(self, f.name)) for f in fields(self)})

    def __sub__(self, other):
        return self.unflatten(self.flatten() - other.flatten())


@dataclass(frozen=True, eq=False)
class DecoderParams(_ParamSet):
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    LAYER_SIZES = (INPUT_DIM, HIDDEN, HIDDEN, N_SCORES)

    @classmethod
    def zeros(cls) -> "DecoderParams":
        return init_decoder(0, scale=0.0)


def init_decoder(seed: int, scale: float = 1.0) -> DecoderParams:
    rng = np.random.default_rng(seed)
    sizes = DecoderParams.LAYER_SIZES
    ws = [scale * rng.normal(0.0, 1.0 / math.sqrt(a), size=(a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    return DecoderParams(ws[0], np.zeros(sizes[1]), ws[1], np.zeros(sizes[2]), ws[2], np.zeros(sizes[3]))


@dataclass(frozen=True, eq=False)
class RegressionParams(_ParamSet):
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    LAYER_SIZES = (SCENE_DIM, HIDDEN, 4 * OUT_DIM)


def init_regression(seed: int, scale: float = 1.0) -> RegressionParams:
    rng = np.random.default_rng(seed)
    a, h, o = RegressionParams.LAYER_SIZES
    return RegressionParams(
        scale * rng.normal(0.0, 1.0 / math.sqrt(a), size=(a, h)),
        np.zeros(h),
        scale * rng.normal(0.0, 0.1 / math.sqrt(h), size=(h, o)),
        np.zeros(o),
    )


# ---------------------------------------------------------------------------
# score decoder


@dataclass(frozen=True, eq=False)
class ScoreTable:
    """Predicted score features, one row per trajectory id, columns (nc, dac, ep, c, ttc)."""

    scores: np.ndarray
    ids: tuple

    def __post_init__(self):
        if self.scores.ndim != 2 or self.scores.shape[1] != N_SCORES:
            raise ShapeMismatchError(f"score table needs (n, 5), got {self.scores.shape}")
        if len(self.ids) != len(self.scores):
            raise ShapeMismatchError("ids and rows differ in length")

    def __len__(self):
        return len(self.ids)

    def subset(self, rows) -> "ScoreTable":
        rows = list(rows)
        return ScoreTable(self.scores[rows], tuple(self.ids[r] for r in rows))


def decoder_inputs(scene_features, traj_features, encoder: EncoderParams | None = None) -> np.ndarray:
    encoder = encoder or DEFAULT_ENCODER
    sf = np.asarray(scene_features, dtype=np.float64)
    tf = np.atleast_2d(np.asarray(traj_features, dtype=np.float64))
    if sf.shape != (SCENE_DIM,) or tf.shape[1] != TRAJ_DIM:
        raise ShapeMismatchError(
            f"expected scene ({SCENE_DIM},) and trajectories (n, {TRAJ_DIM}); got {sf.shape}, {tf.shape}"
        )
    return np.concatenate(
        [np.broadcast_to(sf * encoder.scene_scale, (len(tf), SCENE_DIM)), tf * encoder.traj_scale], axis=1
    )


def decode(params: DecoderParams, inputs) -> Tensor:
    """Score features for a batch of encoded inputs (..., 48); works on Tensor params."""
    x = ad.as_tensor(inputs)
    w1, b1, w2, b2, w3, b3 = (ad.as_tensor(a) for a in params.arrays())
    if x.shape[-1] != w1.shape[0]:
        raise ShapeMismatchError(f"input width {x.shape[-1]} != {w1.shape[0]}")
    h = ad.tanh(x @ w1 + b1)
    h = ad.tanh(h @ w2 + b2)
    return ad.sigmoid(h @ w3 + b3)


def forward(params: DecoderParams, scene_features, traj_features, ids=None, encoder=None) -> ScoreTable:
    inputs = decoder_inputs(scene_features, traj_features, encoder)
    scores = decode(params, inputs).data
    ids = tuple(range(len(scores))) if ids is None else tuple(ids)
    return ScoreTable(scores, ids)


def aggregate(row):
    """s_nc * s_dac * (5 s_ttc + 2 s_c + 5 s_ep) / 12 over the last axis.

    Accepts a 5-tuple, an (n, 5) array, or a Tensor.
    """
    if isinstance(row, Tensor):
        nc, dac, ep, c, ttc = (row[..., i] for i in range(N_SCORES))
        return nc * dac * (ttc * 5.0 + c * 2.0 + ep * 5.0) * (1.0 / 12.0)
    r = np.asarray(row, dtype=np.float64)
    out = r[..., 0] * r[..., 1] * (5.0 * r[..., 4] + 2.0 * r[..., 3] + 5.0 * r[..., 2]) / 12.0
    return float(out) if out.ndim == 0 else out


def select_trajectory(table: ScoreTable) -> int:
    """Id of the row with the largest aggregated score; ties go to the lower id."""
    final = aggregate(table.scores)
    ids = np.asarray(table.ids)
    best = np.flatnonzero(final == final.max())
    return int(ids[best].min())


# ---------------------------------------------------------------------------
# losses


def _has_tensor(x) -> bool:
    return isinstance(x, Tensor) or (isinstance(x, tuple) and any(isinstance(v, Tensor) for v in x))


def _scalar(fn):
    """Return a float unless one of the inputs is a Tensor."""

    def wrapper(*args, **kwargs):
        out = fn(*args, **kwargs)
        if any(_has_tensor(a) for a in args) or any(_has_tensor(v) for v in kwargs.values()):
            return out
        return out.item()

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _scores_of(x):
    if isinstance(x, ScoreTable):
        return x.scores
    return x


@_scalar
def kd_loss(predicted, expert, eps: float = KD_EPS):
    """Mean binary cross-entropy between predicted and expert score features."""
    p = ad.clip(ad.as_tensor(_scores_of(predicted)), eps, 1.0 - eps)
    y = np.asarray(expert, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeMismatchError(f"predicted {p.shape} vs expert {y.shape}")
    bce = -(ad.log(p) * y + ad.log(1.0 - p) * (1.0 - y))
    return bce.mean()


def imitation_targets(vocab_xy: np.ndarray, human_xy: np.ndarray, temperature=IMITATION_TEMPERATURE) -> np.ndarray:
    """Softmax of negative L2 distance to the human trajectory."""
    d = pairwise_l2(vocab_xy, human_xy[None])[:, 0]
    logits = -d / temperature
    logits -= logits.max()
    t = np.exp(logits)
    return t / t.sum()


@_scalar
def imitation_loss(final_scores, vocab, human_traj, temperature: float = IMITATION_TEMPERATURE):
    """Cross-entropy between distance-softmax targets and softmax of final scores."""
    xy = vocab.poses[:, :, :2] if isinstance(vocab, PlanningVocabulary) else np.asarray(vocab)[:, :, :2]
    human = human_traj.xy if isinstance(human_traj, Trajectory) else np.asarray(human_traj)[:, :2]
    target = imitation_targets(xy, human, temperature)
    s = ad.as_tensor(final_scores)
    if s.shape != target.shape:
        raise ShapeMismatchError(f"{s.shape} final scores for a vocabulary of {len(target)}")
    return -(ad.log_softmax(s) * target).sum()


@_scalar
def loss_total(predicted, expert, vocab, human_traj):
    p = predicted if isinstance(predicted, Tensor) else ad.as_tensor(_scores_of(predicted))
    return kd_loss(p, expert) + imitation_loss(aggregate(p), vocab, human_traj)


def backward(params, closure: Callable) -> np.ndarray:
    """Exact gradient of ``closure(params)`` in the layout of ``params.flatten()``.

    ``closure`` receives a copy of ``params`` whose arrays are leaf Tensors.
    """
    leaves = params.map(lambda a: Tensor(np.array(a, dtype=np.float64), requires_grad=True))
    loss = closure(leaves)
    if not isinstance(loss, Tensor):
        return np.zeros(params.size)
    if loss.data.size != 1 or not np.isfinite(loss.data).all():
        raise NonFiniteLossError(f"loss is {loss.data}")
    loss.backward()
    return np.concatenate(
        [np.zeros(t.data.size) if t.grad is None else t.grad.ravel() for t in leaves.arrays()]
    )


# ---------------------------------------------------------------------------
# training data and training


@dataclass(frozen=True, eq=False)
class TrainingRecord:
    scene: Scene
    expert: np.ndarray  # (k, 5)
    human_id: int


@dataclass(frozen=True, eq=False)
class TrainingDataset:
    vocab: PlanningVocabulary
    records: tuple

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))

    def __len__(self):
        return len(self.records)

    def mean_pdms(self) -> np.ndarray:
        """Average expert PDMS of every vocabulary trajectory over the records."""
        return np.mean([pdm_scores(r.expert) for r in self.records], axis=0)


def expert_argmax(table: np.ndarray) -> int:
    """Vocabulary index with the best expert PDMS, ties to the lower id."""
    p = pdm_scores(table)
    return int(np.flatnonzero(p == p.max())[0])


def build_dataset(scenes: Sequence[Scene], vocab: PlanningVocabulary, jobs: int = 1) -> TrainingDataset:
    scenes = list(scenes)
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(jobs) as pool:
            tables = list(pool.map(lambda s: expert_table(s, vocab), scenes))
    else:
        tables = [expert_table(s, vocab) for s in scenes]
    return TrainingDataset(vocab, [TrainingRecord(s, t, expert_argmax(t)) for s, t in zip(scenes, tables)])


class _BatchData:
    """Encoded arrays for a dataset, built once per training run."""

    def __init__(self, dataset: TrainingDataset, encoder: EncoderParams):
        vocab = dataset.vocab
        tf = encode_trajectories(vocab.poses) * encoder.traj_scale
        sf = np.stack([encode_scene(r.scene) for r in dataset.records]) * encoder.scene_scale
        self.k = vocab.k
        self.inputs = np.concatenate(
            [np.broadcast_to(sf[:, None, :], (len(sf), vocab.k, SCENE_DIM)), np.broadcast_to(tf, (len(sf), vocab.k, TRAJ_DIM))],
            axis=2,
        )
        self.expert = np.stack([r.expert for r in dataset.records])
        xy = vocab.poses[:, :, :2]
        self.targets = np.stack([imitation_targets(xy, xy[r.human_id]) for r in dataset.records])

    def loss(self, params: DecoderParams, rows, imitation_weight: float = 1.0) -> Tensor:
        s = decode(params, self.inputs[rows])  # (B, k, 5)
        kd = kd_loss(s, self.expert[rows])
        if imitation_weight == 0:
            return kd
        final = aggregate(s)  # (B, k)
        im = -(ad.log_softmax(final, axis=-1) * self.targets[rows]).sum(axis=-1).mean()
        return kd + im * imitation_weight


def train(
    dataset: TrainingDataset,
    epochs: int = 60,
    lr: float = 1.0,
    seed: int = 0,
    batch_size: int = 8,
    init: DecoderParams | None = None,
    history: list | None = None,
    imitation_weight: float = IMITATION_WEIGHT,
) -> DecoderParams:
    """Mini-batch gradient descent on kd + imitation_weight * imitation loss.

    The imitation term is kept small by default: its targets pull every
    frame toward a single trajectory, and at full weight it trades a lot of
    safety for progress. ``history`` (if given) receives the full-dataset
    loss before training and after each epoch.
    """
    if len(dataset) == 0:
        raise EmptyDatasetError("training dataset is empty")
    params = init if init is not None else init_decoder(seed)
    if epochs == 0:
        return params
    data = _BatchData(dataset, DEFAULT_ENCODER)
    rng = np.random.default_rng([seed, 1])
    everything = np.arange(len(dataset))
    if history is not None:
        history.append(data.loss(params, everything, imitation_weight).item())
    for _ in range(epochs):
        order = rng.permutation(len(dataset))
        for start in range(0, len(order), batch_size):
            rows = np.sort(order[start : start + batch_size])
            grad = backward(params, lambda p: data.loss(p, rows, imitation_weight))
            params = params.unflatten(params.flatten() - lr * grad)
        if history is not None:
            history.append(data.loss(params, everything, imitation_weight).item())
    return params


# ---------------------------------------------------------------------------
# evidential regression head


@dataclass(frozen=True, eq=False)
class EvidentialOutput:
    gamma: np.ndarray
    upsilon: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        for name in ("gamma", "upsilon", "alpha", "beta"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if v.shape != (OUT_DIM,):
                raise ShapeMismatchError(f"{name} must have shape ({OUT_DIM},), got {v.shape}")
            object.__setattr__(self, name, v)
        if np.any(self.upsilon <= 0) or np.any(self.beta <= 0) or np.any(self.alpha <= 1):
            raise InvalidParameterError("evidential parameters out of range")

    def trajectory(self) -> Trajectory:
        """Mean trajectory; headings follow the displacement between waypoints."""
        xy = self.gamma.reshape(N_WAYPOINTS, 2)
        disp = np.diff(np.vstack([np.zeros((1, 2)), xy]), axis=0)
        heading = np.arctan2(disp[:, 1], disp[:, 0])
        # stationary steps keep the previous heading
        still = np.hypot(disp[:, 0], disp[:, 1]) < 1e-9
        for i in np.flatnonzero(still):
            heading[i] = heading[i - 1] if i > 0 else 0.0
        return Trajectory(np.column_stack([xy, wrap_angle(heading)]))


def regression_head(params: RegressionParams, scene_inputs):
    """Raw (gamma, upsilon, alpha, beta) Tensors for scaled scene features."""
    x = ad.as_tensor(scene_inputs)
    w1, b1, w2, b2 = (ad.as_tensor(a) for a in params.arrays())
    out = ad.tanh(x @ w1 + b1) @ w2 + b2
    gamma = out[..., 0:OUT_DIM] * GAMMA_SCALE
    upsilon = ad.softplus(out[..., OUT_DIM : 2 * OUT_DIM])
    alpha = ad.softplus(out[..., 2 * OUT_DIM : 3 * OUT_DIM]) + 1.0
    beta = ad.softplus(out[..., 3 * OUT_DIM :])
    return gamma, upsilon, alpha, beta


def forward_regression(params: RegressionParams, scene_features, encoder=None) -> EvidentialOutput:
    encoder = encoder or DEFAULT_ENCODER
    sf = np.asarray(scene_features, dtype=np.float64)
    if sf.shape != (SCENE_DIM,):
        raise ShapeMismatchError(f"scene features need shape ({SCENE_DIM},), got {sf.shape}")
    g, u, a, b = regression_head(params, sf * encoder.scene_scale)
    return EvidentialOutput(g.data, u.data, a.data, b.data)


@_scalar
def evidential_loss(ev, target, reg: float = EVIDENTIAL_REG):
    """Summed Normal-Inverse-Gamma negative log-likelihood plus evidence regularizer.

    ``ev`` is an :class:`EvidentialOutput` or a ``(gamma, upsilon, alpha,
    beta)`` tuple of Tensors.
    """
    if isinstance(ev, EvidentialOutput):
        gamma, upsilon, alpha, beta = (ad.as_tensor(v) for v in (ev.gamma, ev.upsilon, ev.alpha, ev.beta))
    else:
        gamma, upsilon, alpha, beta = (ad.as_tensor(v) for v in ev)
    y = ad.as_tensor(target)
    omega = beta * (upsilon + 1.0) * 2.0
    resid = y - gamma
    nll = (
        ad.log(upsilon * (1.0 / math.pi)) * -0.5
        - alpha * ad.log(omega)
        + (alpha + 0.5) * ad.log(resid * resid * upsilon + omega)
        + ad.lgamma(alpha)
        - ad.lgamma(alpha + 0.5)
    )
    penalty = ad.abs_(resid) * (upsilon * 2.0 + alpha) * reg
    return (nll + penalty).sum()


def sample_nig(ev: EvidentialOutput, n: int, seed: int, return_variance: bool = False):
    """Draw sigma^2 ~ InvGamma(alpha, beta), then mu ~ N(gamma, sigma^2 / upsilon).

    Returns the (n, 80) mu samples, and the sigma^2 draws if requested.
    """
    rng = np.random.default_rng(seed)
    sigma2 = ev.beta / rng.gamma(ev.alpha, 1.0, size=(n, OUT_DIM))
    mu = ev.gamma + np.sqrt(sigma2 / ev.upsilon) * rng.standard_normal((n, OUT_DIM))
    return (mu, sigma2) if return_variance else mu


def train_regression(
    dataset: TrainingDataset, epochs: int = 60, lr: float = 1e-3, seed: int = 0, batch_size: int = 8
) -> RegressionParams:
    """Gradient descent on the evidential loss towards each record's human trajectory."""
    if len(dataset) == 0:
        raise EmptyDatasetError("training dataset is empty")
    params = init_regression(seed)
    sf = np.stack([encode_scene(r.scene) for r in dataset.records]) * DEFAULT_ENCODER.scene_scale
    xy = dataset.vocab.poses[:, :, :2]
    targets = np.stack([xy[r.human_id].ravel() for r in dataset.records])
    rng = np.random.default_rng([seed, 2])
    for _ in range(epochs):
        order = rng.permutation(len(dataset))
        for start in range(0, len(order), batch_size):
            rows = order[start : start + batch_size]
            grad = backward(
                params,
                lambda p: evidential_loss(regression_head(p, sf[rows]), targets[rows]) * (1.0 / len(rows)),
            )
            params = params.unflatten(params.flatten() - lr * grad)
    return params


# ---------------------------------------------------------------------------
# planner bundle and checkpoints


DEFAULT_ENCODER = EncoderParams()


@dataclass(frozen=True, eq=False)
class ScoringPlanner:
    """Everything needed to score a scene: vocabulary, frozen encoder, decoder."""

    vocab: PlanningVocabulary
    decoder: DecoderParams
    encoder: EncoderParams = DEFAULT_ENCODER
    trajectory_weights: np.ndarray | None = None  # mean expert PDMS on the training split

    def __post_init__(self):
        tf = encode_trajectories(self.vocab.poses)
        tf.setflags(write=False)
        object.__setattr__(self, "vocab_features", tf)

    def with_decoder(self, decoder: DecoderParams) -> "ScoringPlanner":
        return replace(self, decoder=decoder)

    def score(self, scene: Scene, ids=None, decoder: DecoderParams | None = None) -> ScoreTable:
        ids = range(self.vocab.k) if ids is None else ids
        ids = list(ids)
        return forward(
            decoder or self.decoder, encode_scene(scene), self.vocab_features[ids], ids, self.encoder
        )

    def full_parameters(self) -> np.ndarray:
        return np.concatenate([self.encoder.flatten(), self.decoder.flatten()])


def save_checkpoint(path, decoder: DecoderParams, seed: int, encoder: EncoderParams | None = None,
                    trajectory_weights=None) -> None:
    encoder = encoder or DEFAULT_ENCODER
    params = np.concatenate([encoder.flatten(), decoder.flatten()])
    lines = [
        f"format_version={CHECKPOINT_FORMAT_VERSION}",
        "layer_sizes=" + ",".join(str(s) for s in DecoderParams.LAYER_SIZES),
        f"feature_layout_version={FEATURE_LAYOUT_VERSION}",
        f"seed={seed}",
        f"n_encoder={encoder.size}",
        f"n_params={len(params)}",
        f"n_weights={0 if trajectory_weights is None else len(trajectory_weights)}",
        "[params]",
    ]
    lines += [f"{v:.17g}" for v in params]
    if trajectory_weights is not None:
        lines.append("[trajectory_weights]")
        lines += [f"{v:.17g}" for v in np.asarray(trajectory_weights)]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True, eq=False)
class Checkpoint:
    decoder: DecoderParams
    encoder: EncoderParams
    seed: int
    trajectory_weights: np.ndarray | None


def load_checkpoint(path) -> Checkpoint:
    lines = Path(path).read_text().splitlines()
    p_at = lines.index("[params]")
    header = dict(line.split("=", 1) for line in lines[:p_at])
    if int(header.get("format_version", -1)) != CHECKPOINT_FORMAT_VERSION:
        raise SchemaVersionError(f"checkpoint format_version {header.get('format_version')}")
    if int(header["feature_layout_version"]) != FEATURE_LAYOUT_VERSION:
        raise SchemaVersionError(f"feature_layout_version {header['feature_layout_version']}")
    sizes = tuple(int(s) for s in header["layer_sizes"].split(","))
    if sizes != DecoderParams.LAYER_SIZES:
        raise ShapeMismatchError(f"layer sizes {sizes} != {DecoderParams.LAYER_SIZES}")
    n_params, n_enc, n_w = int(header["n_params"]), int(header["n_encoder"]), int(header["n_weights"])
    params = np.array([float(v) for v in lines[p_at + 1 : p_at + 1 + n_params]])
    weights = None
    if n_w:
        w_at = lines.index("[trajectory_weights]")
        weights = np.array([float(v) for v in lines[w_at + 1 : w_at + 1 + n_w]])
    return Checkpoint(
        decoder=DecoderParams.zeros().unflatten(params[n_enc:]),
        encoder=EncoderParams.from_vector(params[:n_enc]),
        seed=int(header["seed"]),
        trajectory_weights=weights,
    )
