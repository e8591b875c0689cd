import numpy as np
import pytest

from dcpkit.model import MechanismKernel, World, default_adjacency


@pytest.fixture
def invertible_world():
    joint = np.array([[0.5, 0.0], [0.0, 0.5]])
    return World(("s0", "s1"), ("x0", "x1"), joint, default_adjacency(joint))


@pytest.fixture
def mixing_world_2x2():
    joint = np.array([[0.45, 0.05], [0.05, 0.45]])
    return World(("s0", "s1"), ("x0", "x1"), joint, default_adjacency(joint))


@pytest.fixture
def uniform_world():
    joint = np.array([[0.25, 0.25], [0.25, 0.25]])
    return World(("s0", "s1"), ("x0", "x1"), joint, default_adjacency(joint))


@pytest.fixture
def rr_mechanism():
    return MechanismKernel("rr", ("0", "1"), np.array([[0.75, 0.25], [0.25, 0.75]]))


@pytest.fixture
def noise_mechanism():
    return MechanismKernel("noise", ("0", "1"), np.array([[0.5, 0.5], [0.5, 0.5]]))


def random_dist_pair(rng, max_outcomes=16):
    n = int(rng.integers(2, max_outcomes + 1))
    return rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
