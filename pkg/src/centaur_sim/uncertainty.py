"""Uncertainty measures over predicted trajectory scores.

Every entropy-style measure follows the same recipe: pick a mass per
candidate, sum masses within clusters, normalize, take the Shannon entropy.
They differ only in how candidates are grouped. The Tensor paths are used
for test-time training gradients; the public functions return reports.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import AllZeroScoresError, InvalidParameterError, ShapeMismatchError
from .geometry import (
    N_CLUSTERS,
    AnchorSet,
    ClusterAssignment,
    PlanningVocabulary,
    Trajectory,
    assign_clusters,
    candidate_xy,
    sample_candidates,
    select_anchors,
)
from .scorer import EvidentialOutput, ScoreTable, aggregate, sample_nig

PROB_FLOOR = 1e-12
MEASURES = ("cluster", "full", "semantic", "kl")
REGRESSION_MEASURES = ("evidential", "semantic_regression")


@dataclass(frozen=True)
class UncertaintyConfig:
    M: int = 100
    tau: float = 0.06
    tau_regression: float = 0.02
    N: int = 32
    measure: str = "cluster"
    candidate_seed: int = 0

    def __post_init__(self):
        if self.M < 5:
            raise InvalidParameterError(f"M must be >= 5, got {self.M}")
        if self.tau <= 0 or self.tau_regression <= 0:
            raise InvalidParameterError("tau must be positive")
        if self.N < 1:
            raise InvalidParameterError("N must be >= 1")
        if self.measure not in MEASURES + REGRESSION_MEASURES:
            raise InvalidParameterError(f"unknown measure {self.measure!r}")


@dataclass(frozen=True)
class ClusterDistribution:
    probs: tuple

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.shape != (N_CLUSTERS,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise InvalidParameterError(f"not a 5-way distribution: {self.probs}")


@dataclass(frozen=True)
class UncertaintyReport:
    value: float
    measure: str
    cluster_distribution: ClusterDistribution | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise InvalidParameterError(f"uncertainty value {self.value} is not finite")


# ---------------------------------------------------------------------------
# entropy on Tensors


def entropy_of_masses(masses) -> Tensor:
    """Shannon entropy (nats) of ``masses / masses.sum()`` with a probability floor."""
    m = ad.as_tensor(masses)
    total = m.sum()
    if not total.data > 0:
        raise AllZeroScoresError("masses sum to zero")
    p = m / total
    return -(p * ad.log(ad.maximum(p, PROB_FLOOR))).sum()


def _final_scores(scores) -> Tensor:
    s = ad.as_tensor(scores.scores if isinstance(scores, ScoreTable) else scores)
    if s.ndim != 2 or s.shape[1] != 5:
        raise ShapeMismatchError(f"expected (M, 5) scores, got {s.shape}")
    return aggregate(s)


def cluster_entropy_tensor(scores, assignment: ClusterAssignment) -> Tensor:
    final = _final_scores(scores)
    if len(assignment.labels) != final.shape[0]:
        raise ShapeMismatchError("assignment and score rows differ in length")
    return entropy_of_masses(final @ assignment.one_hot())


def full_entropy_tensor(scores) -> Tensor:
    return entropy_of_masses(_final_scores(scores))


def kl_divergence_tensor(full_table) -> Tensor:
    """Sum of KL(p_i || p_j) over the 20 ordered pairs of feature columns."""
    s = ad.as_tensor(full_table.scores if isinstance(full_table, ScoreTable) else full_table)
    col_sums = ad.maximum(s.sum(axis=0, keepdims=True), PROB_FLOOR)
    p = s / col_sums  # (k, 5)
    logp = ad.log(ad.maximum(p, PROB_FLOOR))
    # sum_{i != j} sum_x p_i (log p_i - log p_j) = 5 * sum_i sum_x p_i log p_i - sum_x (sum_i p_i)(sum_j log p_j)
    n = s.shape[1]
    self_term = (p * logp).sum() * float(n)
    cross = (p.sum(axis=1) * logp.sum(axis=1)).sum()
    return self_term - cross


# ---------------------------------------------------------------------------
# public measures


def _report(value: Tensor, measure: str, masses=None, labels=None, final=None) -> UncertaintyReport:
    dist = None
    diag = {}
    if masses is not None:
        m = np.asarray(masses, dtype=np.float64)
        dist = ClusterDistribution(tuple(m / m.sum()))
        diag["cluster_mass"] = m
    if labels is not None:
        diag["labels"] = np.asarray(labels)
    if final is not None:
        diag["final_scores"] = np.asarray(final)
    return UncertaintyReport(float(value.data), measure, dist, diag)


def cluster_entropy(scoretable, assignment: ClusterAssignment) -> UncertaintyReport:
    final = _final_scores(scoretable)
    masses = final.data @ assignment.one_hot()
    value = entropy_of_masses(masses)
    return _report(value, "cluster", masses, assignment.labels, final.data)


def full_entropy(scoretable) -> UncertaintyReport:
    final = _final_scores(scoretable)
    return _report(entropy_of_masses(final), "full", final=final.data)


def semantic_clusters(
    features: np.ndarray, anchors: AnchorSet, candidates: Sequence[Trajectory], tau: float
) -> ClusterAssignment:
    """Fixed-centre one-step k-means in feature space.

    Centres are the anchors' feature rows. A candidate within ``tau`` of its
    nearest centre joins that centre; the rest fall back to their nearest
    anchor in trajectory space.
    """
    feats = np.asarray(features, dtype=np.float64)
    centers = feats[list(anchors.indices)]
    d = np.linalg.norm(feats[:, None, :] - centers[None, :, :], axis=2)
    nearest = np.argmin(d, axis=1)
    within = d[np.arange(len(feats)), nearest] <= tau
    default = assign_clusters(candidates, anchors).array
    return ClusterAssignment(tuple(int(v) for v in np.where(within, nearest, default)))


def semantic_entropy_tensor(scores, anchors, candidates, tau) -> Tensor:
    s = ad.as_tensor(scores.scores if isinstance(scores, ScoreTable) else scores)
    assignment = semantic_clusters(s.data, anchors, candidates, tau)
    return cluster_entropy_tensor(s, assignment)


def semantic_entropy(
    scoretable, anchors: AnchorSet, candidates: Sequence[Trajectory], tau: float = 0.06,
    features=None, masses=None,
) -> UncertaintyReport:
    """Entropy after semantic clustering.

    By default features and masses come from the score table (score rows and
    their aggregated values); pass ``features``/``masses`` to cluster on other
    per-candidate features, as the regression variant does.
    """
    if features is None:
        features = _scores_of(scoretable)
    if masses is None:
        masses = _final_scores(scoretable).data
    masses = np.asarray(masses, dtype=np.float64)
    assignment = semantic_clusters(features, anchors, candidates, tau)
    cluster_mass = masses @ assignment.one_hot()
    value = entropy_of_masses(cluster_mass)
    return _report(value, "semantic", cluster_mass, assignment.labels, masses)


def _scores_of(table):
    return table.scores if isinstance(table, ScoreTable) else np.asarray(table)


def kl_divergence_uncertainty(full_table) -> UncertaintyReport:
    return _report(kl_divergence_tensor(full_table), "kl")


def regression_semantic_features(
    ev: EvidentialOutput, candidates: Sequence[Trajectory], N: int = 32, seed: int = 0
) -> np.ndarray:
    """(M, 2) features: L2 distance to gamma and to the closest of N sampled mu."""
    xy = candidate_xy(candidates).reshape(len(candidates), -1)
    mu = sample_nig(ev, N, seed)
    l_gamma = np.linalg.norm(xy - ev.gamma, axis=1)
    l_mu = np.linalg.norm(xy[:, None, :] - mu[None, :, :], axis=2).min(axis=1)
    return np.column_stack([l_gamma, l_mu])


def regression_semantic_entropy(
    ev: EvidentialOutput, candidates: Sequence[Trajectory], anchors: AnchorSet | None = None,
    N: int = 32, seed: int = 0, tau: float = 0.02,
) -> UncertaintyReport:
    anchors = anchors or select_anchors(candidates)
    feats = regression_semantic_features(ev, candidates, N, seed)
    report = semantic_entropy(None, anchors, candidates, tau, features=feats, masses=np.ones(len(candidates)))
    return UncertaintyReport(report.value, "semantic_regression", report.cluster_distribution, report.diagnostics)


def evidential_uncertainty(ev: EvidentialOutput) -> UncertaintyReport:
    """1 - exp(-v) with v the mean epistemic variance beta / (upsilon (alpha - 1))."""
    v = float(np.mean(ev.beta / (ev.upsilon * (ev.alpha - 1.0))))
    return UncertaintyReport(-float(np.expm1(-v)), "evidential", diagnostics={"epistemic_variance": v})


# ---------------------------------------------------------------------------
# candidate sets for a planner


@dataclass(frozen=True, eq=False)
class CandidateSet:
    ids: tuple
    trajectories: tuple
    anchors: AnchorSet
    assignment: ClusterAssignment


def prepare_candidates(vocab: PlanningVocabulary, weights, M: int = 100, seed: int = 0) -> CandidateSet:
    """Weighted candidate sample, its direction anchors and trajectory-space clusters."""
    w = np.ones(vocab.k) if weights is None else np.asarray(weights, dtype=np.float64)
    positive = int(np.count_nonzero(w > 0))
    if positive < M:
        # too few trajectories ever scored above zero; give the rest a tiny floor
        w = np.where(w > 0, w, 1e-6 * max(float(w.max()), 1.0))
    ids = tuple(sample_candidates(vocab, w, M, seed))
    trajs = tuple(vocab[i] for i in ids)
    anchors = select_anchors(trajs)
    return CandidateSet(ids, trajs, anchors, assign_clusters(trajs, anchors))


def objective(measure: str, candidate_scores, full_scores, candidates: CandidateSet, tau: float) -> Tensor:
    """Uncertainty as a differentiable function of predicted scores."""
    if measure == "cluster":
        return cluster_entropy_tensor(candidate_scores, candidates.assignment)
    if measure == "full":
        return full_entropy_tensor(candidate_scores)
    if measure == "semantic":
        return semantic_entropy_tensor(candidate_scores, candidates.anchors, candidates.trajectories, tau)
    if measure == "kl":
        return kl_divergence_tensor(full_scores)
    raise InvalidParameterError(f"measure {measure!r} has no scoring-planner objective")


def report_for_planner_scores(table_scores: np.ndarray, measure: str, candidates: CandidateSet, tau: float = 0.06) -> UncertaintyReport:
    """Report for a full-vocabulary (k, 5) predicted score array."""
    cand = np.asarray(table_scores)[list(candidates.ids)]
    if measure == "cluster":
        return cluster_entropy(cand, candidates.assignment)
    if measure == "full":
        return full_entropy(cand)
    if measure == "semantic":
        return semantic_entropy(cand, candidates.anchors, candidates.trajectories, tau)
    if measure == "kl":
        return kl_divergence_uncertainty(table_scores)
    raise InvalidParameterError(f"measure {measure!r} has no scoring-planner report")


UNCERTAINTY_CSV_FIELDS = ("frame_index", "measure", "value", "p1", "p2", "p3", "p4", "p5")


def write_uncertainty_csv(rows, path) -> None:
    """``rows`` are (frame_index, UncertaintyReport) pairs; missing distributions leave p1..p5 blank."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(UNCERTAINTY_CSV_FIELDS)
        for frame, rep in rows:
            probs = rep.cluster_distribution.probs if rep.cluster_distribution else ("",) * N_CLUSTERS
            w.writerow([frame, rep.measure, repr(rep.value), *(repr(float(p)) if p != "" else "" for p in probs)])


def read_uncertainty_csv(path) -> list:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != UNCERTAINTY_CSV_FIELDS:
            raise ShapeMismatchError(f"unexpected uncertainty CSV header {reader.fieldnames}")
        for row in reader:
            ps = [row[f"p{i}"] for i in range(1, N_CLUSTERS + 1)]
            dist = ClusterDistribution(tuple(float(p) for p in ps)) if all(ps) else None
            out.append((int(row["frame_index"]), UncertaintyReport(float(row["value"]), row["measure"], dist)))
    return out
