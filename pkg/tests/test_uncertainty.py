import math

import numpy as np
import pytest
from scipy.stats import entropy

from centaur_sim import autodiff as ad
from centaur_sim import geometry as g
from centaur_sim import scorer as sc
from centaur_sim import uncertainty as u
from centaur_sim.errors import AllZeroScoresError, InvalidParameterError

from conftest import straight


def rows_with_final(values):
    """Score rows whose aggregated value equals ``values`` exactly."""
    v = np.asarray(values, dtype=float)
    return np.column_stack([np.ones_like(v), np.ones_like(v), v, v, v])


def lateral_candidates(n=10, seed=0):
    ys = np.random.default_rng(seed).permutation(np.linspace(-4, 4, n))
    return [straight(5.0, y, id=i) for i, y in enumerate(ys)]


# -- cluster and full entropy ----------------------------------------------------


def test_cluster_entropy_examples():
    cands = lateral_candidates(5)
    anchors = g.select_anchors(cands)
    singletons = g.assign_clusters(cands, anchors)
    one = np.zeros(5)
    one[2] = 0.7
    assert u.cluster_entropy(rows_with_final(one), singletons).value == 0.0
    eq = u.cluster_entropy(rows_with_final(np.full(5, 0.3)), singletons)
    assert eq.value == pytest.approx(math.log(5), abs=1e-12)
    assert eq.cluster_distribution.probs == pytest.approx((0.2,) * 5)
    masses = [0.4, 0.4, 0.1, 0.05, 0.05]
    value = u.cluster_entropy(rows_with_final(masses), singletons).value
    assert value == pytest.approx(entropy(masses), abs=1e-12)
    assert value == pytest.approx(1.2628643221541278, abs=1e-12)


def test_cluster_entropy_sums_members():
    cands = lateral_candidates(10, seed=1)
    anchors = g.select_anchors(cands)
    assignment = g.assign_clusters(cands, anchors)
    final = np.random.default_rng(0).uniform(0.1, 1, 10)
    rep = u.cluster_entropy(rows_with_final(final), assignment)
    masses = np.bincount(assignment.array, weights=final, minlength=5)
    assert rep.value == pytest.approx(entropy(masses), abs=1e-12)


def test_all_zero_scores_raise():
    cands = lateral_candidates(5)
    assignment = g.assign_clusters(cands, g.select_anchors(cands))
    with pytest.raises(AllZeroScoresError) as err:
        u.cluster_entropy(np.zeros((5, 5)), assignment)
    assert err.value.code == "all-zero-scores"
    with pytest.raises(AllZeroScoresError):
        u.full_entropy(np.zeros((5, 5)))


def test_full_entropy_examples():
    one = np.zeros(100)
    one[17] = 0.4
    assert u.full_entropy(rows_with_final(one)).value == 0.0
    assert u.full_entropy(rows_with_final(np.full(100, 0.6))).value == pytest.approx(math.log(100), abs=1e-12)
    cands = lateral_candidates(5)
    singletons = g.assign_clusters(cands, g.select_anchors(cands))
    scores = np.random.default_rng(3).random((5, 5))
    assert u.full_entropy(scores).value == pytest.approx(u.cluster_entropy(scores, singletons).value, abs=1e-12)


def test_scale_and_permutation_invariance():
    cands = lateral_candidates(12, seed=2)
    anchors = g.select_anchors(cands)
    assignment = g.assign_clusters(cands, anchors)
    final = np.random.default_rng(1).uniform(0.05, 0.5, 12)
    base = u.cluster_entropy(rows_with_final(final), assignment).value
    scaled = u.cluster_entropy(rows_with_final(final * 1.7), assignment).value
    assert scaled == pytest.approx(base, abs=1e-12)
    perm = np.random.default_rng(5).permutation(12)
    permuted = g.ClusterAssignment(tuple(assignment.labels[i] for i in perm))
    assert u.cluster_entropy(rows_with_final(final[perm]), permuted).value == pytest.approx(base, abs=1e-12)


def test_cluster_entropy_gradient_through_decoder():
    cands = lateral_candidates(10, seed=4)
    assignment = g.assign_clusters(cands, g.select_anchors(cands))
    params = sc.init_decoder(2)
    rng = np.random.default_rng(2)
    x = sc.decoder_inputs(rng.normal(size=sc.SCENE_DIM), rng.normal(size=(10, sc.TRAJ_DIM)))
    grad = sc.backward(params, lambda p: u.cluster_entropy_tensor(sc.decode(p, x), assignment))
    flat = params.flatten()
    for i in rng.choice(len(flat), 30, replace=False):
        up, down = flat.copy(), flat.copy()
        up[i] += 1e-5
        down[i] -= 1e-5
        f = lambda v: u.cluster_entropy(sc.decode(params.unflatten(v), x).data, assignment).value
        num = (f(up) - f(down)) / 2e-5
        assert abs(grad[i] - num) <= 1e-4 * max(abs(num), 1e-6) + 1e-9


# -- semantic entropy -------------------------------------------------------------


def test_semantic_entropy_identical_rows():
    cands = lateral_candidates(10)
    anchors = g.select_anchors(cands)
    scores = np.tile([0.9, 0.8, 0.7, 0.6, 0.5], (10, 1))
    rep = u.semantic_entropy(scores, anchors, cands, tau=0.06)
    assert rep.value == 0.0
    assert set(rep.diagnostics["labels"]) == {0}


def test_semantic_entropy_small_tau_equals_cluster_entropy():
    rng = np.random.default_rng(6)
    for seed in range(10):
        cands = lateral_candidates(15, seed)
        anchors = g.select_anchors(cands)
        scores = rng.random((15, 5))
        sem = u.semantic_entropy(scores, anchors, cands, tau=1e-12).value
        assert sem == u.cluster_entropy(scores, g.assign_clusters(cands, anchors)).value


def test_semantic_entropy_large_tau_is_score_space_clustering():
    rng = np.random.default_rng(7)
    cands = lateral_candidates(15, 3)
    anchors = g.select_anchors(cands)
    scores = rng.random((15, 5))
    centers = scores[list(anchors.indices)]
    labels = [min(range(5), key=lambda c: (np.linalg.norm(s - centers[c]), c)) for s in scores]
    masses = np.bincount(labels, weights=sc.aggregate(scores), minlength=5)
    rep = u.semantic_entropy(scores, anchors, cands, tau=1e9)
    assert list(rep.diagnostics["labels"]) == labels
    assert rep.value == pytest.approx(entropy(masses), abs=1e-12)


# -- KL divergence ----------------------------------------------------------------


def kl_oracle(table):
    p = table / table.sum(axis=0)
    return sum(entropy(p[:, i], p[:, j]) for i in range(5) for j in range(5) if i != j)


def test_kl_examples():
    same = np.tile([[0.3], [0.5], [0.2]], (1, 5))
    assert u.kl_divergence_uncertainty(same).value == pytest.approx(0.0, abs=1e-12)
    table = np.array([[0.5, 0.5, 0.5, 0.5, 0.9], [0.5, 0.5, 0.5, 0.5, 0.1]])
    value = u.kl_divergence_uncertainty(table).value
    # four copies of column a against b: 4 * [KL(a||b) + KL(b||a)]
    a, b = np.array([0.5, 0.5]), np.array([0.9, 0.1])
    assert value == pytest.approx(4 * (entropy(a, b) + entropy(b, a)), abs=1e-12)
    assert value == pytest.approx(3.515559323737952, abs=1e-12)


def test_kl_matches_oracle_and_is_nonnegative():
    rng = np.random.default_rng(8)
    for _ in range(20):
        table = rng.uniform(0.01, 1.0, (30, 5))
        value = u.kl_divergence_uncertainty(table).value
        assert value >= 0
        assert value == pytest.approx(kl_oracle(table), rel=1e-10)


# -- regression measures ---------------------------------------------------------


def evidential(gamma=None, upsilon=1.0, alpha=3.0, beta=1.0):
    ones = np.ones(sc.OUT_DIM)
    gamma = np.zeros(sc.OUT_DIM) if gamma is None else gamma
    return sc.EvidentialOutput(gamma, upsilon * ones, alpha * ones, beta * ones)


def test_regression_semantic_features():
    cands = lateral_candidates(8)
    ev = evidential(cands[3].xy.ravel(), beta=0.5)
    feats = u.regression_semantic_features(ev, cands, N=16, seed=1)
    assert feats[3, 0] == 0.0
    mu = sc.sample_nig(ev, 16, seed=1)
    max_dev = np.linalg.norm(mu - ev.gamma, axis=1).max()
    assert np.all(feats[:, 1] <= feats[:, 0] + max_dev + 1e-12)
    assert np.array_equal(feats, u.regression_semantic_features(ev, cands, N=16, seed=1))
    rep = u.regression_semantic_entropy(ev, cands, N=16, seed=1)
    assert 0 <= rep.value <= math.log(5) + 1e-12


def test_evidential_uncertainty():
    assert u.evidential_uncertainty(evidential(beta=1e-12)).value == pytest.approx(0.0, abs=1e-11)
    by_beta = [u.evidential_uncertainty(evidential(beta=b)).value for b in (0.1, 0.5, 1, 5, 50)]
    assert all(b > a for a, b in zip(by_beta, by_beta[1:]))
    by_up = [u.evidential_uncertainty(evidential(upsilon=v)).value for v in (0.1, 0.5, 1, 5, 50)]
    assert all(b < a for a, b in zip(by_up, by_up[1:]))
    assert all(0 < v < 1 for v in by_beta + by_up)


# -- candidates, objectives and files -----------------------------------------------


def test_config_validation():
    u.UncertaintyConfig()
    for bad in ({"M": 4}, {"tau": 0.0}, {"N": 0}, {"measure": "vibes"}):
        with pytest.raises(InvalidParameterError):
            u.UncertaintyConfig(**bad)


def test_objective_matches_reports(small_vocab):
    cands = u.prepare_candidates(small_vocab, np.ones(small_vocab.k), M=20, seed=1)
    full = np.random.default_rng(0).uniform(0.05, 0.95, (small_vocab.k, 5))
    cand = full[list(cands.ids)]
    for measure in u.MEASURES:
        obj = u.objective(measure, ad.Tensor(cand), ad.Tensor(full), cands, 0.06).item()
        assert obj == pytest.approx(u.report_for_planner_scores(full, measure, cands).value, abs=1e-12)
    with pytest.raises(InvalidParameterError):
        u.objective("evidential", cand, full, cands, 0.06)


def test_uncertainty_csv_round_trip(tmp_path):
    cands = lateral_candidates(5)
    assignment = g.assign_clusters(cands, g.select_anchors(cands))
    rows = [(0, u.cluster_entropy(rows_with_final([0.1, 0.2, 0.3, 0.2, 0.2]), assignment)),
            (3, u.kl_divergence_uncertainty(np.random.default_rng(0).random((6, 5))))]
    path = tmp_path / "unc.csv"
    u.write_uncertainty_csv(rows, path)
    back = u.read_uncertainty_csv(path)
    assert [f for f, _ in back] == [0, 3]
    assert back[0][1].value == rows[0][1].value
    assert back[0][1].cluster_distribution.probs == rows[0][1].cluster_distribution.probs
    assert back[1][1].cluster_distribution is None
