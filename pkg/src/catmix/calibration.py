"""Data-driven calibration of the penalty multiplier.

The penalty shape is ``lambda * D / n``.  Below a minimal multiplier the
selected model is among the largest ones; above it the selected dimension
drops sharply.  :func:`dimension_jump` locates that drop with a sliding
window of ``h`` grid intervals, which aggregates a staircase of small
jumps into one, and the final selection uses twice the estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from .core import FittedModel, ModelIndex
from .criteria import Penalty, select_fitted
from .errors import DegenerateRegression, EmptyPool, FlatPath

DEFAULT_WINDOW_WIDTH = 0.15


@dataclass(frozen=True, eq=False)
class DimensionPath:
    """Selected model and its dimension for every ``lambda`` of an ascending grid."""

    lambdas: np.ndarray
    selected: tuple
    dimensions: np.ndarray

    def __len__(self) -> int:
        return len(self.lambdas)


@dataclass(frozen=True)
class Jump:
    lambda_min: float
    i_init: int
    i_end: int
    drop: int
    h: int


@dataclass(frozen=True, eq=False)
class CalibrationResult:
    """Outcome of a calibration; ``i_init``/``i_end`` are 0-based grid positions."""

    lambda_grid: np.ndarray
    path: DimensionPath
    lambda_min_hat: float
    window_h: int
    final_selection: ModelIndex
    final_model: FittedModel
    method: str = "dimension_jump"
    i_init: Optional[int] = None
    i_end: Optional[int] = None
    slope_estimate: Optional[float] = None
    notes: tuple = ()

    @property
    def final_lambda(self) -> float:
        return 2.0 * self.lambda_min_hat

    @property
    def selected_per_lambda(self) -> list:
        return list(zip(self.path.lambdas.tolist(), self.path.selected, self.path.dimensions.tolist()))


def _models(pool: Iterable[FittedModel]) -> list:
    models = [f for f in pool if not f.failed]
    if not models:
        raise EmptyPool("the pool holds no successfully fitted model")
    sizes = {f.n_obs for f in models}
    if len(sizes) != 1:
        raise ValueError("pool mixes fits on different sample sizes")
    return models


def dimension_path(pool: Iterable[FittedModel], lambda_grid) -> DimensionPath:
    """Winner of ``contrast + lambda * D / n`` for every grid value.

    Ties go to the smaller dimension, then smaller ``K``, then the
    lexicographically smaller ``S``.
    """
    models = sorted(_models(pool), key=lambda f: (f.dimension, f.index.K, f.index.variables))
    grid = np.asarray(lambda_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("lambda grid must be strictly ascending")
    n = models[0].n_obs
    contrasts = np.array([f.contrast for f in models])
    dims = np.array([f.dimension for f in models])
    crit = contrasts[None, :] + grid[:, None] * dims[None, :] / n
    # argmin returns the first minimum, which is the tie-break order above
    winners = np.argmin(crit, axis=1)
    return DimensionPath(
        lambdas=grid,
        selected=tuple(models[w].index for w in winners),
        dimensions=dims[winners],
    )


def dimension_jump(path: DimensionPath, h: int = 1) -> Jump:
    """Sliding-window dimension jump.

    ``i_end`` is the first grid position maximizing the drop
    ``D[i - h] - D[i]``; ``i_init`` is the last position of the window
    ``[i_end - h, i_end - 1]`` still at the window's starting dimension.
    The estimate is the midpoint of ``lambda[i_init]`` and ``lambda[i_end]``.
    """
    D = np.asarray(path.dimensions)
    r = len(D)
    if not 1 <= h <= r - 1:
        raise ValueError(f"window h = {h} must lie in [1, {r - 1}]")
    drops = D[:-h] - D[h:]
    j = int(np.argmax(drops))
    if drops[j] <= 0:
        raise FlatPath("the dimension path has no jump", {"dimensions": D.tolist(), "h": h})
    i_end = j + h
    top = D[i_end - h]
    i_init = max(k for k in range(i_end - h, i_end) if D[k] == top)
    lam = 0.5 * (path.lambdas[i_init] + path.lambdas[i_end])
    return Jump(float(lam), i_init, i_end, int(drops[j]), h)


def largest_half(models: list) -> list:
    """Best model of each dimension, restricted to the larger half of dimensions."""
    best = {}
    for f in sorted(models, key=lambda f: (f.contrast, f.index.K, f.index.variables)):
        best.setdefault(f.dimension, f)
    dims = sorted(best, reverse=True)
    keep = dims[: max(2, math.ceil(len(dims) / 2))]
    return [best[d] for d in sorted(keep)]


def slope_regression(pool: Iterable[FittedModel], model_filter: Optional[Callable] = None) -> float:
    """Minus the least-squares slope of contrast against ``D / n``.

    ``model_filter`` maps the list of fitted models to the ones entering the
    regression; by default the lowest contrast at each dimension, over the
    larger half of the dimensions present.
    """
    models = _models(pool)
    chosen = (model_filter or largest_half)(models)
    if len({f.dimension for f in chosen}) < 2:
        raise DegenerateRegression("slope regression needs at least two distinct dimensions")
    x = np.array([f.dimension / f.n_obs for f in chosen])
    y = np.array([f.contrast for f in chosen])
    xc = x - x.mean()
    slope = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    return -slope


def window_to_h(grid, width: float) -> int:
    """Number of grid intervals spanned by a ``lambda``-width on a uniform grid."""
    if not width > 0:
        raise ValueError("window width must be positive")
    spacing = float(np.median(np.diff(grid)))
    return max(1, int(round(width / spacing)))


def calibrate_and_select(
    pool: Iterable[FittedModel],
    lambda_grid,
    h: Optional[int] = None,
    width: float = DEFAULT_WINDOW_WIDTH,
) -> CalibrationResult:
    """Estimate the minimal multiplier and select under twice that multiplier.

    The window is given either as ``h`` grid intervals or as a
    ``lambda``-width.  When the dimension path is flat the estimate falls
    back to the slope regression, then to a path over a grid widened to
    ``2 ln n``; :class:`FlatPath` is raised only if all three fail.
    """
    models = _models(pool)
    n = models[0].n_obs
    grid = np.asarray(lambda_grid, dtype=float)
    if h is None:
        h = window_to_h(grid, width)
    h = min(h, len(grid) - 1)
    path = dimension_path(models, grid)
    notes = []
    try:
        slope = slope_regression(models)
    except DegenerateRegression:
        slope = None

    try:
        jump = dimension_jump(path, h)
        method, lam, i_init, i_end = "dimension_jump", jump.lambda_min, jump.i_init, jump.i_end
    except FlatPath:
        notes.append("dimension path is flat on the grid")
        i_init = i_end = None
        if slope is not None and slope > 0:
            method, lam = "slope_regression", slope
        else:
            notes.append("slope regression unusable")
            hi = 2.0 * math.log(n)
            if not hi > grid[-1]:
                raise FlatPath("flat dimension path and no usable fallback", {"notes": notes})
            grid = np.linspace(grid[0], hi, len(grid))
            path = dimension_path(models, grid)
            try:
                jump = dimension_jump(path, h)
            except FlatPath:
                notes.append(f"still flat on the grid widened to {hi:.4g}")
                raise FlatPath(
                    "flat dimension path and no usable fallback",
                    {"notes": notes, "dimensions": path.dimensions.tolist()},
                ) from None
            method, lam, i_init, i_end = "widened_grid", jump.lambda_min, jump.i_init, jump.i_end

    final = select_fitted(models, Penalty.slope(2.0 * lam))
    return CalibrationResult(
        lambda_grid=grid,
        path=path,
        lambda_min_hat=float(lam),
        window_h=h,
        final_selection=final.index,
        final_model=final,
        method=method,
        i_init=i_init,
        i_end=i_end,
        slope_estimate=slope,
        notes=tuple(notes),
    )
