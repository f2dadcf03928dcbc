import numpy as np
import pytest

from she_martin.geometry import build_path, build_regular_tree
from she_martin.heat import build_generator


@pytest.fixture(scope="session")
def path3():
    return build_path(3)


@pytest.fixture(scope="session")
def path5():
    return build_path(5)


@pytest.fixture(scope="session")
def tree22():
    return build_regular_tree(2, 2)


@pytest.fixture(scope="session")
def tree23():
    return build_regular_tree(2, 3)


@pytest.fixture(scope="session")
def gen_path3(path3):
    return build_generator(path3)


@pytest.fixture(scope="session")
def gen_path5(path5):
    return build_generator(path5)


@pytest.fixture(scope="session")
def gen_tree23(tree23):
    return build_generator(tree23)


def jump_chain(graph):
    """Independent oracle: one-step jump probabilities of the embedded chain."""
    w = graph.weights
    return w / w.sum(axis=1)[:, None]


def fundamental_matrix(graph):
    """Independent oracle: (I - Q)^-1 over interior states of the jump chain."""
    q = jump_chain(graph)[np.ix_(graph.interior, graph.interior)]
    return np.linalg.inv(np.eye(len(graph.interior)) - q)
