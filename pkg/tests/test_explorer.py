import numpy as np
import pytest

from catmix.core import Case, ModelIndex, model_universe
from catmix.criteria import Penalty, criterion, select_fitted
from catmix.em import EmConfig
from catmix.errors import BudgetExceeded
from catmix.explorer import (
    ExplorerConfig,
    ModelPool,
    build_pool,
    collection_size,
    exhaustive_pool,
    explore_k,
    lambda_grid,
)
from catmix.simulation import make_truth, simulate

FAST = EmConfig(n_restarts=4)


@pytest.fixture(scope="module")
def noisy3():
    # variables 1, 2 and 4 strongly separated, variable 3 uniform noise
    truth = make_truth(Case.HAPLOID, 2, (3, 3, 3, 3), (0.8, 0.8, 0.0, 0.8), seed=3)
    return simulate(truth, 500, 21)


def test_collection_sizes():
    assert collection_size(3, 3) == 15 == len(model_universe(3, 3))
    assert collection_size(5, 6) == 253 == len(model_universe(5, 6))
    assert collection_size(10, 10) == 9208
    assert collection_size(2, 1) == 2


def test_grid_defaults():
    g = lambda_grid(500)
    assert len(g) == 50 and g[0] == 0.5 and g[-1] == pytest.approx(np.log(500))
    with pytest.raises(ValueError):
        lambda_grid(1)


def test_k1_and_single_variable(noisy3):
    pool = ModelPool(noisy3, FAST)
    assert [f.index for f in explore_k(pool, 1, Penalty.bic())] == [ModelIndex(1)]
    one = noisy3.subset(slice(None))
    from catmix.core import Dataset

    ds1 = Dataset(one.case, one.states[:, :1], one.n_states[:1])
    pool = ModelPool(ds1, FAST)
    for K in (2, 3):
        assert [f.index for f in explore_k(pool, K, Penalty.bic())] == [ModelIndex(K, {0})]


def test_backward_path_drops_noise(noisy3):
    pool = ModelPool(noisy3, FAST)
    visited = explore_k(pool, 2, Penalty.bic())
    best = select_fitted(visited, Penalty.bic())
    assert 2 not in best.index.S
    full = exhaustive_pool(noisy3, 2, ExplorerConfig(em=FAST))
    assert select_fitted(list(full), Penalty.bic()).index == best.index


def test_exhaustive_counts_and_budget(noisy3):
    ds = noisy3.subset(slice(0, 200))
    from catmix.core import Dataset

    ds = Dataset(ds.case, ds.states[:, :3], ds.n_states[:3])
    pool = exhaustive_pool(ds, 3, ExplorerConfig(em=FAST))
    assert len(pool) == 15
    with pytest.raises(BudgetExceeded):
        exhaustive_pool(ds, 3, ExplorerConfig(em=FAST, budget=10))


def test_explored_fits_match_exhaustive(noisy3):
    cfg = ExplorerConfig(K_max=3, em=FAST, grid_size=10)
    explored = build_pool(noisy3, cfg)
    full = exhaustive_pool(noisy3, 3, cfg)
    assert len(explored) < len(full)
    assert len(explored) <= cfg.grid_size * cfg.K_max * 2 * noisy3.L
    for f in explored:
        assert full[f.index].contrast == f.contrast
    for lam in cfg.grid(noisy3.n):
        pen = Penalty.raw(float(lam))
        gap = criterion(select_fitted(list(explored), pen), pen) - criterion(select_fitted(list(full), pen), pen)
        # same fits on both sides, so the explored winner can only be worse
        assert gap >= 0


def test_build_pool_deterministic_and_forward(noisy3):
    cfg = ExplorerConfig(K_max=3, em=FAST, grid_size=8)
    a, b = build_pool(noisy3, cfg), build_pool(noisy3, cfg)
    assert a.indices() == b.indices()
    assert [f.contrast for f in a] == [f.contrast for f in b]
    fwd = build_pool(noisy3, ExplorerConfig(K_max=3, em=FAST, grid_size=8, enable_forward=True))
    assert set(a.indices()) <= set(fwd.indices())
    assert all(m.K == 1 or m.S for m in fwd.indices())


def test_pool_first_writer_wins(noisy3):
    pool = ModelPool(noisy3, FAST)
    first = pool.ensure([ModelIndex(2, {0})], "a")[0]
    again = pool.ensure([ModelIndex(2, {0})], "b")[0]
    assert again is first
    assert pool.provenance[ModelIndex(2, {0})] == ["a", "b"]
