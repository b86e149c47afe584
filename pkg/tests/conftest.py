import numpy as np
import pytest

from centaur_sim import geometry, scorer, worldsim


@pytest.fixture(scope="session")
def small_vocab():
    return geometry.generate_vocabulary(64, 4, 7, 0)


@pytest.fixture(scope="session")
def tiny_vocab():
    return geometry.generate_vocabulary(25, 5, 5, 0)


@pytest.fixture(scope="session")
def small_dataset(small_vocab):
    scenes = worldsim.generate_stream(24, seed=11, clip_length=1)
    return scorer.build_dataset(scenes, small_vocab)


@pytest.fixture(scope="session")
def small_planner(small_dataset):
    params = scorer.train(small_dataset, epochs=8, seed=0)
    return scorer.ScoringPlanner(small_dataset.vocab, params, trajectory_weights=small_dataset.mean_pdms())


@pytest.fixture(scope="session")
def small_stream():
    return worldsim.generate_stream(12, seed=5, clip_length=4)


def straight(speed=5.0, lateral=0.0, id=-1):
    """Constant-speed straight trajectory offset sideways by ``lateral`` metres."""
    t = geometry.TIMES
    return geometry.Trajectory(np.column_stack([speed * t, np.full(40, lateral), np.zeros(40)]), id)


def empty_scene(half_width=3.0, obstacles=(), length=200.0):
    cl = ((-10.0, 0.0), (length, 0.0))
    ego = worldsim.EgoStatus(5.0, 0.0, "straight")
    return worldsim.Scene(ego, worldsim.Corridor(cl, half_width), tuple(obstacles))
