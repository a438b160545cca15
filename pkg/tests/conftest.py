import numpy as np
import pytest

from chaosmoments import Tensor


@pytest.fixture
def diag222():
    arr = np.zeros((2, 2, 2))
    arr[0, 0, 0] = arr[1, 1, 1] = 1.0
    return Tensor.from_array(arr)


def rank_one(*vectors):
    arr = np.ones(())
    for v in vectors:
        arr = np.multiply.outer(arr, np.asarray(v, dtype=float))
    return Tensor.from_array(arr)


@pytest.fixture
def ones222():
    return rank_one([1, 1], [1, 1], [1, 1])


@pytest.fixture
def unit_rank_one3():
    u = np.ones(2) / np.sqrt(2)
    return rank_one(u, u, u)
