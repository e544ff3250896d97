import math

import numpy as np
import pytest

from catmix.calibration import (
    DimensionPath,
    calibrate_and_select,
    dimension_jump,
    dimension_path,
    slope_regression,
    window_to_h,
)
from catmix.core import FittedModel, ModelIndex
from catmix.errors import DegenerateRegression, FlatPath


def stub(K, S, contrast, D, n=100):
    return FittedModel(ModelIndex(K, S), None, contrast, D, n, 6)


def path(lambdas, dims):
    return DimensionPath(np.asarray(lambdas, float), (ModelIndex(1),) * len(dims), np.asarray(dims))


GRID4 = (0.5, 1.0, 1.5, 2.0)


def test_hand_traced_jumps():
    j = dimension_jump(path(GRID4, (100, 100, 40, 40)), 1)
    assert (j.i_init, j.i_end, j.lambda_min) == (1, 2, 1.25)
    j = dimension_jump(path(GRID4, (100, 100, 40, 40)), 2)
    assert (j.i_init, j.i_end, j.lambda_min) == (1, 2, 1.25)
    stairs = path((0.5, 1.0, 1.5, 2.0, 2.5), (100, 60, 30, 10, 10))
    j = dimension_jump(stairs, 3)
    assert (j.i_init, j.i_end, j.drop, j.lambda_min) == (0, 3, 90, 1.25)
    assert dimension_jump(stairs, 1).lambda_min == 0.75


def test_window_bounds_and_flat():
    with pytest.raises(ValueError):
        dimension_jump(path(GRID4, (3, 2, 1, 0)), 4)
    with pytest.raises(FlatPath):
        dimension_jump(path(GRID4, (5, 5, 5, 5)), 1)


def _classical(lambdas, dims):
    drops = [dims[i - 1] - dims[i] for i in range(1, len(dims))]
    i = int(np.argmax(drops)) + 1
    return 0.5 * (lambdas[i - 1] + lambdas[i])


def test_h1_is_biggest_single_jump(rng):
    for _ in range(200):
        r = int(rng.integers(3, 30))
        dims = np.sort(rng.integers(0, 50, size=r))[::-1]
        if dims[0] == dims[-1]:
            continue
        grid = np.cumsum(rng.uniform(0.05, 0.5, size=r))
        j = dimension_jump(path(grid, dims), 1)
        assert j.lambda_min == pytest.approx(_classical(grid, dims), rel=1e-15)
        assert grid[0] <= j.lambda_min <= grid[-1]


def test_wider_window_never_shrinks_drop(rng):
    for _ in range(100):
        dims = np.sort(rng.integers(0, 50, size=20))[::-1]
        if dims[0] == dims[-1]:
            continue
        p = path(np.linspace(0.5, 5, 20), dims)
        drops = [dimension_jump(p, h).drop for h in range(1, 19)]
        assert all(b >= a for a, b in zip(drops, drops[1:]))


def test_path_on_planted_pool():
    A, B = stub(2, {0}, 1.0, 10), stub(3, {0, 1}, 0.9, 30)
    grid = np.linspace(0.1, 1.0, 10)  # 0.5 is the crossover
    p = dimension_path([A, B], grid)
    assert p.dimensions.tolist() == [30, 30, 30, 30, 10, 10, 10, 10, 10, 10]
    assert p.selected[4] == A.index  # exact tie at 0.5 goes to the smaller D
    assert dimension_path([B, A], grid).dimensions.tolist() == p.dimensions.tolist()
    assert dimension_path([A], grid).dimensions.tolist() == [10] * 10


def test_calibrate_planted_pool():
    A, B = stub(2, {0}, 1.0, 10), stub(3, {0, 1}, 0.9, 30)
    grid = np.linspace(0.1, 1.0, 10)
    res = calibrate_and_select([A, B], grid, h=1)
    assert res.lambda_min_hat == pytest.approx(0.45)
    assert res.final_lambda == pytest.approx(0.9)
    # at lambda = 0.9: A scores 1.09, B scores 1.17
    assert res.final_selection == A.index
    lam = res.lambda_min_hat
    assert res.path.lambdas[res.i_init] <= lam <= res.path.lambdas[res.i_end]


def test_single_model_pool_is_flat():
    with pytest.raises(FlatPath):
        calibrate_and_select([stub(2, {0}, 1.0, 10)], np.linspace(0.5, math.log(100), 50))


def test_rescaling_contrasts_rescales_estimate(rng):
    pool = [stub(2, {0}, float(c), int(d)) for c, d in zip(rng.uniform(0, 1, 30), rng.integers(5, 80, 30))]
    grid = np.linspace(0.5, 5.0, 50)
    a = calibrate_and_select(pool, grid, h=3)
    doubled = [stub(f.index.K, f.index.S, 2 * f.contrast, f.dimension) for f in pool]
    b = calibrate_and_select(doubled, 2 * grid, h=3)
    assert b.lambda_min_hat == pytest.approx(2 * a.lambda_min_hat, rel=1e-12)
    assert b.final_selection == a.final_selection


def test_slope_regression_exact_line():
    n = 200
    pool = [stub(2, {0}, 3.0 - 1.7 * D / n, D, n) for D in (5, 9, 14, 20, 33)]
    assert slope_regression(pool, lambda m: m) == pytest.approx(1.7, rel=1e-12)
    shifted = [stub(2, {0}, f.contrast + 4.2, f.dimension, n) for f in pool]
    assert slope_regression(shifted, lambda m: m) == pytest.approx(1.7, rel=1e-12)
    assert slope_regression(pool) == pytest.approx(1.7, rel=1e-12)
    with pytest.raises(DegenerateRegression):
        slope_regression([stub(2, {0}, 1.0, 5), stub(2, {1}, 0.9, 5)])


def test_flat_path_falls_back_to_regression():
    # every model is selected nowhere but the largest on [0.5, 0.6]
    n = 100
    pool = [stub(2, {0}, 3.0 - 1.5 * D / n, D, n) for D in (10, 20, 30)]
    res = calibrate_and_select(pool, np.linspace(0.5, 0.6, 10), h=1)
    assert res.method == "slope_regression"
    assert res.lambda_min_hat == pytest.approx(1.5)
    assert res.final_selection.S == {0} and res.final_model.dimension == 10


def test_window_width_conversion():
    grid = np.linspace(0.5, math.log(500), 50)
    assert window_to_h(grid, 0.15) == max(1, round(0.15 / (grid[1] - grid[0])))
    assert window_to_h(grid, 1e-9) == 1
