from pathlib import Path

import numpy as np
import pytest

from catmix.core import Case, Dataset, ModelIndex, random_params

DATA_DIR = Path(__file__).parent / "data"


def random_dataset(rng, case, n, n_states):
    """Uniform random dataset; every state is forced to appear once."""
    case = Case(case)
    L = len(n_states)
    if case is Case.HAPLOID:
        states = np.stack([rng.integers(a, size=n) for a in n_states], axis=1)
        for l, a in enumerate(n_states):
            states[:a, l] = np.arange(a)
    else:
        states = np.stack([rng.integers(a, size=(n, 2)) for a in n_states], axis=1)
        for l, a in enumerate(n_states):
            states[:a, l, 0] = np.arange(a)
    return Dataset(case, states, tuple(n_states))


def random_index(rng, K_max, L):
    K = int(rng.integers(1, K_max + 1))
    if K == 1:
        return ModelIndex(1)
    size = int(rng.integers(1, L + 1))
    return ModelIndex(K, frozenset(rng.choice(L, size=size, replace=False).tolist()))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def data_dir():
    return DATA_DIR
