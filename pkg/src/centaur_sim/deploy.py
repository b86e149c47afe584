"""Deployment strategies: test-time training with a gradient buffer, and a fallback layer.

The TTT schedule is causal. At frame i the decoder is updated with the mean
of the buffered uncertainty gradients (all from frames before i), the frame
is scored, and only then is frame i's own gradient computed and pushed.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidParameterError, SimError
from .geometry import PlanningVocabulary, Trajectory, pairwise_l2
from .scorer import (
    DecoderParams,
    ScoringPlanner,
    backward,
    decode,
    decoder_inputs,
    encode_scene,
    select_trajectory,
)
from .uncertainty import CandidateSet, MEASURES, objective, prepare_candidates
from .worldsim import Scene, expert_table, pdm_scores

log = logging.getLogger(__name__)

STRATEGIES = ("none", "ttt", "ttt_gated", "fallback")


@dataclass(frozen=True)
class DeploymentConfig:
    strategy: str = "none"
    eta: float = 1e-4
    measure: str = "cluster"
    threshold: float = 0.8
    fallback_size: int = 20
    buffer: int = 4
    persistent: bool = True
    M: int = 100
    tau: float = 0.06
    candidate_seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InvalidParameterError(f"unknown strategy {self.strategy!r}")
        if self.measure not in MEASURES:
            raise InvalidParameterError(f"unknown measure {self.measure!r}")
        if not self.eta > 0:
            raise InvalidParameterError("eta must be positive")
        if self.threshold < 0:
            raise InvalidParameterError("threshold must be >= 0")
        if self.buffer < 1 or self.fallback_size < 1:
            raise InvalidParameterError("buffer and fallback_size must be >= 1")


# ---------------------------------------------------------------------------
# gradient buffer and the update


@dataclass(frozen=True)
class GradientBuffer:
    capacity: int = 4
    entries: tuple = ()  # (frame_index, gradient) pairs, oldest first

    def __post_init__(self):
        if self.capacity < 1:
            raise InvalidParameterError("buffer capacity must be >= 1")

    def __len__(self):
        return len(self.entries)

    @property
    def frames(self) -> tuple:
        return tuple(f for f, _ in self.entries)

    def mean(self) -> np.ndarray:
        return np.mean([g for _, g in self.entries], axis=0)


def push_gradient(buffer: GradientBuffer, grad, frame_index: int) -> GradientBuffer:
    """FIFO append; the oldest entry is evicted once capacity is reached."""
    if buffer.entries and frame_index <= buffer.entries[-1][0]:
        raise InvalidParameterError(
            f"frame {frame_index} is not after buffered frame {buffer.entries[-1][0]}"
        )
    g = np.array(grad, dtype=np.float64)
    g.setflags(write=False)
    entries = (buffer.entries + ((int(frame_index), g),))[-buffer.capacity :]
    return GradientBuffer(buffer.capacity, entries)


def ttt_step(params: DecoderParams, buffer: GradientBuffer, eta: float) -> DecoderParams:
    """theta - eta * mean(buffer); an empty buffer leaves ``params`` untouched."""
    if not buffer.entries:
        log.debug("ttt_step called with an empty buffer; parameters unchanged")
        return params
    return params.unflatten(params.flatten() - eta * buffer.mean())


def compute_uncertainty_gradient(
    planner: ScoringPlanner,
    scene: Scene,
    config: DeploymentConfig,
    candidates: CandidateSet,
    decoder: DecoderParams | None = None,
    full: bool = False,
) -> np.ndarray:
    """Gradient of the configured uncertainty with respect to the decoder.

    With ``full=True`` the result covers the planner's full parameter vector
    (frozen encoder scales first), and the encoder entries are zero.
    """
    decoder = decoder or planner.decoder
    ids = list(range(planner.vocab.k)) if config.measure == "kl" else list(candidates.ids)
    inputs = decoder_inputs(encode_scene(scene), planner.vocab_features[ids], planner.encoder)

    def closure(p):
        scores = decode(p, inputs)
        if config.measure == "kl":
            return objective("kl", None, scores, candidates, config.tau)
        return objective(config.measure, scores, None, candidates, config.tau)

    grad = backward(decoder, closure)
    if full:
        return np.concatenate([np.zeros(planner.encoder.size), grad])
    return grad


def measure_uncertainty(table_scores: np.ndarray, config: DeploymentConfig, candidates: CandidateSet) -> float:
    """Uncertainty from a full-vocabulary score array (k, 5)."""
    if config.measure == "kl":
        return objective("kl", None, table_scores, candidates, config.tau).item()
    cand = table_scores[list(candidates.ids)]
    return objective(config.measure, cand, None, candidates, config.tau).item()


# ---------------------------------------------------------------------------
# fallback layer


@dataclass(frozen=True, eq=False)
class FallbackSet:
    ids: tuple
    trajectories: tuple
    mean_pdms: tuple

    def __post_init__(self):
        if len(set(self.ids)) != len(self.ids):
            raise InvalidParameterError("fallback ids must be distinct")


def trajectory_mean_pdms(vocab: PlanningVocabulary, scenes: Sequence[Scene], tables=None) -> np.ndarray:
    """Average expert PDMS of every vocabulary trajectory over ``scenes``."""
    tables = tables if tables is not None else [expert_table(s, vocab) for s in scenes]
    if len(tables) == 0:
        raise InvalidParameterError("need at least one reference scene")
    return np.mean([pdm_scores(t) for t in tables], axis=0)


def fallback_from_weights(vocab: PlanningVocabulary, mean_pdms, size: int = 20) -> FallbackSet:
    w = np.asarray(mean_pdms, dtype=np.float64)
    order = np.lexsort((np.arange(vocab.k), -w))[:size]
    return FallbackSet(
        tuple(int(i) for i in order),
        tuple(vocab[int(i)] for i in order),
        tuple(float(w[i]) for i in order),
    )


def build_fallback_set(vocab: PlanningVocabulary, reference_scenes: Sequence[Scene], size: int = 20,
                       tables=None) -> FallbackSet:
    """Top ``size`` trajectories by mean expert PDMS; ties go to the lower id."""
    return fallback_from_weights(vocab, trajectory_mean_pdms(vocab, reference_scenes, tables), size)


def fallback_select(predicted: Trajectory, fallback: FallbackSet, uncertainty: float, threshold: float) -> Trajectory:
    """Swap in the nearest fallback trajectory when uncertainty exceeds the threshold."""
    if uncertainty <= threshold:
        return predicted
    xy = np.stack([t.xy for t in fallback.trajectories])
    d = pairwise_l2(predicted.xy[None], xy)[0]
    ids = np.asarray(fallback.ids)
    best = np.flatnonzero(d == d.min())
    return fallback.trajectories[int(best[np.argmin(ids[best])])]


# ---------------------------------------------------------------------------
# the deployment loop


@dataclass(frozen=True)
class DeploymentRecord:
    frame_index: int
    strategy: str
    measure: str
    uncertainty: float
    replaced: int
    nc: float
    dac: float
    ep: float
    c: float
    ttc: float
    pdms: float
    params_version: int
    category: str = "NONE"
    trajectory_id: int = -1


RECORD_FIELDS = (
    "frame_index", "strategy", "measure", "uncertainty", "replaced",
    "nc", "dac", "ep", "c", "ttc", "pdms", "params_version", "category", "trajectory_id",
)


@dataclass
class _State:
    decoder: DecoderParams
    buffer: GradientBuffer
    version: int = 0


def _record(scene, strategy, config, unc, replaced, traj_id, table, version) -> DeploymentRecord:
    row = table[traj_id]
    return DeploymentRecord(
        frame_index=scene.frame_index,
        strategy=strategy,
        measure=config.measure,
        uncertainty=float(unc),
        replaced=int(replaced),
        nc=float(row[0]), dac=float(row[1]), ep=float(row[2]), c=float(row[3]), ttc=float(row[4]),
        pdms=float(pdm_scores(row[None])[0]),
        params_version=version,
        category=scene.category,
        trajectory_id=int(traj_id),
    )


def run_deployment(
    stream: Sequence[Scene],
    planner: ScoringPlanner,
    config: DeploymentConfig,
    expert_tables=None,
    fallback: FallbackSet | None = None,
    jobs: int = 1,
) -> list[DeploymentRecord]:
    """Run a strategy over a stream of frames and score every output with the expert.

    ``expert_tables`` may map frame_index to precomputed (k, 5) expert tables.
    With ``jobs > 1`` each frame's gradient is computed on a worker thread
    while the next frame's expert table is prepared; the schedule, and so
    every record, is identical to the single-threaded run.
    """
    frames = list(stream)
    idx = [s.frame_index for s in frames]
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise InvalidParameterError("frame_index must be strictly increasing")
    expert_tables = {} if expert_tables is None else expert_tables
    candidates = prepare_candidates(planner.vocab, planner.trajectory_weights, config.M, config.candidate_seed)
    if config.strategy == "fallback" and fallback is None:
        if planner.trajectory_weights is None:
            raise InvalidParameterError("fallback strategy needs trajectory weights or a fallback set")
        fallback = fallback_from_weights(planner.vocab, planner.trajectory_weights, config.fallback_size)

    base = planner.decoder
    state = _State(base, GradientBuffer(config.buffer))
    pending = None
    pool = ThreadPoolExecutor(1) if jobs > 1 else None
    records = []
    try:
        for scene in frames:
            table = expert_tables.get(scene.frame_index)
            if table is None:
                table = expert_table(scene, planner.vocab)
            if pending is not None:
                state.buffer = push_gradient(state.buffer, pending[1].result(), pending[0])
                pending = None
            try:
                rec, grad_job = _deploy_frame(scene, planner, config, candidates, fallback, base, state, table)
            except SimError as exc:
                log.warning("frame %d failed (%s); using the base planner", scene.frame_index, exc)
                scores = planner.score(scene, decoder=base)
                rec = _record(scene, "none", config, float("nan"), 0, select_trajectory(scores), table, state.version)
                grad_job = None
            records.append(rec)
            if grad_job is not None:
                fut = pool.submit(grad_job) if pool else _Done(grad_job())
                pending = (scene.frame_index, fut)
    finally:
        if pool:
            pool.shutdown()
    return records


class _Done:
    def __init__(self, value):
        self._value = value

    def result(self):
        return self._value


def _deploy_frame(scene, planner, config, candidates, fallback, base, state, table):
    strategy = config.strategy
    if strategy in ("ttt", "ttt_gated") and state.buffer.entries:
        start = state.decoder if config.persistent else base
        apply = True
        if strategy == "ttt_gated":
            pre = planner.score(scene, decoder=start).scores
            apply = measure_uncertainty(pre, config, candidates) > config.threshold
        if apply:
            state.decoder = ttt_step(start, state.buffer, config.eta)
            state.version += 1
        elif not config.persistent:
            state.decoder = base
    decoder = state.decoder
    scores = planner.score(scene, decoder=decoder)
    unc = measure_uncertainty(scores.scores, config, candidates)
    chosen = select_trajectory(scores)
    replaced = 0
    if strategy == "fallback":
        picked = fallback_select(planner.vocab[chosen], fallback, unc, config.threshold)
        replaced = int(unc > config.threshold)
        chosen = picked.id
    rec = _record(scene, strategy, config, unc, replaced, chosen, table, state.version)
    grad_job = None
    if strategy in ("ttt", "ttt_gated"):
        def grad_job(scene=scene, decoder=decoder):
            return compute_uncertainty_gradient(planner, scene, config, candidates, decoder)
    return rec, grad_job
