import numpy as np
import pytest

from voract import PointSet, Shape


@pytest.fixture(scope="session")
def line_k() -> PointSet:
    return PointSet([[-1.0], [1.0]])


@pytest.fixture(scope="session")
def triangle_k() -> PointSet:
    return PointSet([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])


@pytest.fixture(scope="session")
def grid3_k() -> PointSet:
    pts = [[float(i), float(j)] for i in range(3) for j in range(3)]
    return PointSet(pts)


@pytest.fixture(scope="session")
def identity_shape() -> Shape:
    return Shape.identity()


def waiting_nodes(c: float, m: int, delta: float = 1.0) -> np.ndarray:
    """Closed-form zero-energy minimizer of the two-site scenario.

    Entry branch (1-c)e^t - 1 up to t0 = -log(1-c), exact waiting at the
    midpoint, mirrored exit branch.
    """
    t0 = -np.log(1.0 - c)
    t1 = delta - t0
    t = np.linspace(0.0, delta, m + 1)
    x = np.zeros_like(t)
    entry = t < t0
    exits = t > t1
    x[entry] = (1.0 - c) * np.exp(t[entry]) - 1.0
    x[exits] = 1.0 - (1.0 - c) * np.exp(delta - t[exits])
    return x[:, None]
