import numpy as np
import pytest
from matplotlib import image

from centaur_sim import evalharness as eh
from centaur_sim.deploy import DeploymentRecord
from centaur_sim import plotting
from centaur_sim import uncertainty as u
from centaur_sim.geometry import generate_vocabulary


def is_png(path):
    return path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_score_distribution(tmp_path):
    vocab = generate_vocabulary(64, 4, 7, 0)
    cands = u.prepare_candidates(vocab, None, 30, 0)
    scores = np.random.default_rng(0).random(30)
    path = plotting.plot_score_distribution(cands.trajectories, scores, cands.assignment.labels,
                                            tmp_path / "s.png", "frame 0")
    assert is_png(path)
    assert image.imread(path).shape[2] in (3, 4)


def test_category_bars_skip_empty(tmp_path):
    path = plotting.plot_category_bars({"YLD": 40.0, "NLA": None, "RDBT": 75.5}, tmp_path / "c.png")
    assert is_png(path)


def test_threshold_sweep(tmp_path):
    recs = [DeploymentRecord(i, "none", "cluster", i / 10, 0, 1, 1, 1, 1, 1, float(i % 3 != 0), 0) for i in range(15)]
    path = plotting.plot_threshold_sweep(eh.sweep_thresholds(recs), tmp_path / "t.png")
    assert is_png(path)


def test_new_figure_default_aspect():
    fig, _ = plotting.new_figure(5.0)
    w, h = fig.get_size_inches()
    assert h == pytest.approx(5.0 * (5 ** 0.5 - 1) / 2)
    plotting.plt.close(fig)
