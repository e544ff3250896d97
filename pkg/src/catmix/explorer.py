"""Assembling the pool of competitive models.

The number of models with at most ``K_max`` clusters over ``L`` variables is
``1 + (K_max - 1) * (2**L - 1)``, far too many to fit for moderate ``L``.
The explorer walks a backward-stepwise path over ``S`` (with an optional
forward pass) for every ``K`` and every penalty of a ``lambda`` grid, and
caches every fit so a model visited by several paths is fitted once.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

import numpy as np

from .core import Dataset, FittedModel, ModelIndex, failed_fit, model_universe
from .criteria import Penalty, select_fitted
from .em import EmConfig, fit, model_seed
from .errors import AllComponentsZero, BudgetExceeded, EmptyCluster

logger = logging.getLogger(__name__)

DEFAULT_GRID_SIZE = 50


def lambda_grid(n: int, r: int = DEFAULT_GRID_SIZE, lo: float = 0.5, hi: Optional[float] = None) -> np.ndarray:
    """Uniform grid from ``lo`` (default 1/2) to ``hi`` (default ``ln n``)."""
    hi = math.log(n) if hi is None else hi
    if r < 2:
        raise ValueError("the grid needs at least two points")
    if not hi > lo:
        raise ValueError(f"grid upper end {hi:g} must exceed lower end {lo:g}")
    return np.linspace(lo, hi, r)


def collection_size(K_max: int, L: int) -> int:
    return 1 + (K_max - 1) * (2 ** L - 1)


@dataclass(frozen=True)
class ExplorerConfig:
    K_max: int = 5
    grid_size: int = DEFAULT_GRID_SIZE
    lambda_lo: float = 0.5
    lambda_hi: Optional[float] = None
    enable_forward: bool = False
    em: EmConfig = field(default_factory=EmConfig)
    exhaustive: bool = False
    budget: int = 10_000
    n_jobs: int = 1

    def __post_init__(self):
        if self.K_max < 1:
            raise ValueError("K_max must be at least 1")
        if self.grid_size < 2:
            raise ValueError("the grid needs at least two points")

    def grid(self, n: int) -> np.ndarray:
        return lambda_grid(n, self.grid_size, self.lambda_lo, self.lambda_hi)


def fit_or_fail(ds: Dataset, index: ModelIndex, config: EmConfig) -> FittedModel:
    """Fit ``index``; a model whose restarts all fail gets infinite contrast."""
    try:
        return fit(ds, index, config)
    except (EmptyCluster, AllComponentsZero) as err:
        logger.info("fit of %s failed: %s", index, err)
        return failed_fit(index, ds.n_states, ds.n, config.n_restarts, config.rng_seed)


class ModelPool:
    """Fitted models keyed by :class:`ModelIndex`, fitted at most once each.

    Every model is fitted with a seed derived from the root seed and its
    own index, so the pool content does not depend on the order in which
    models are requested nor on how fits are spread over workers.
    """

    def __init__(self, ds: Dataset, em: EmConfig = EmConfig(), executor: Optional[Executor] = None):
        self.ds = ds
        self.em = em
        self.executor = executor
        self._models: dict = {}
        self.provenance: dict = {}

    def __len__(self) -> int:
        return len(self._models)

    def __contains__(self, index: ModelIndex) -> bool:
        return index in self._models

    def __getitem__(self, index: ModelIndex) -> FittedModel:
        return self._models[index]

    def __iter__(self) -> Iterator[FittedModel]:
        for index in sorted(self._models, key=lambda m: m.sort_key):
            yield self._models[index]

    def indices(self) -> list:
        return sorted(self._models, key=lambda m: m.sort_key)

    def add(self, fitted: FittedModel, note: Optional[str] = None) -> FittedModel:
        kept = self._models.setdefault(fitted.index, fitted)
        if note:
            self.provenance.setdefault(fitted.index, []).append(note)
        return kept

    def ensure(self, indices: Iterable[ModelIndex], note: Optional[str] = None) -> list:
        """Fit the missing models of ``indices`` and return all of them in order."""
        indices = list(indices)
        missing = [m for m in dict.fromkeys(indices) if m not in self._models]
        configs = [self.em.with_seed(model_seed(self.em.rng_seed, m)) for m in missing]
        if self.executor is not None and len(missing) > 1:
            fits = list(self.executor.map(fit_or_fail, [self.ds] * len(missing), missing, configs))
        else:
            fits = [fit_or_fail(self.ds, m, c) for m, c in zip(missing, configs)]
        for f in fits:
            self.add(f)
        if note:
            for m in dict.fromkeys(indices):
                notes = self.provenance.setdefault(m, [])
                if note not in notes:
                    notes.append(note)
        return [self._models[m] for m in indices]


def explore_k(pool: ModelPool, K: int, penalty: Penalty, enable_forward: bool = False) -> list:
    """Stepwise search over ``S`` for a fixed ``K``.

    Backward phase: start from all variables and repeatedly move to the best
    single-variable removal under ``penalty`` until one variable is left.
    Forward phase (optional): start from the best singleton and grow by the
    best single addition until all variables are in.  Every model fitted on
    the way is returned; failed fits never become a step.
    """
    ds = pool.ds
    note = f"explore(K={K}, {penalty.label})"
    if K == 1:
        return pool.ensure([ModelIndex(1)], note)
    L = ds.L
    current = frozenset(range(L))
    visited = pool.ensure([ModelIndex(K, current)], note)
    while len(current) > 1:
        step = pool.ensure([ModelIndex(K, current - {l}) for l in sorted(current)], note)
        visited.extend(step)
        alive = [f for f in step if not f.failed]
        if not alive:
            break
        current = select_fitted(alive, penalty).index.S
    if enable_forward and L > 1:
        step = pool.ensure([ModelIndex(K, {l}) for l in range(L)], note)
        visited.extend(step)
        alive = [f for f in step if not f.failed]
        current = select_fitted(alive, penalty).index.S if alive else frozenset(range(L))
        while alive and len(current) < L:
            step = pool.ensure(
                [ModelIndex(K, current | {l}) for l in range(L) if l not in current], note
            )
            visited.extend(step)
            alive = [f for f in step if not f.failed]
            if alive:
                current = select_fitted(alive, penalty).index.S
    return list({f.index: f for f in visited}.values())


def _executor(n_jobs: int):
    return ProcessPoolExecutor(max_workers=n_jobs) if n_jobs > 1 else None


def build_pool(ds: Dataset, config: ExplorerConfig = ExplorerConfig()) -> ModelPool:
    """Union of explorer paths over ``K = 1..K_max`` and the ``lambda`` grid.

    With ``config.exhaustive`` set, every model of the collection is fitted
    instead (see :func:`exhaustive_pool`).
    """
    if config.exhaustive:
        return exhaustive_pool(ds, config.K_max, config)
    executor = _executor(config.n_jobs)
    try:
        pool = ModelPool(ds, config.em, executor)
        grid = config.grid(ds.n)
        for K in range(1, min(config.K_max, ds.n) + 1):
            for lam in grid:
                explore_k(pool, K, Penalty.raw(float(lam)), config.enable_forward)
        pool.executor = None
        return pool
    finally:
        if executor is not None:
            executor.shutdown()


def exhaustive_pool(ds: Dataset, K_max: int, config: ExplorerConfig = ExplorerConfig()) -> ModelPool:
    """Fit every model with at most ``K_max`` clusters."""
    size = collection_size(K_max, ds.L)
    if size > config.budget:
        raise BudgetExceeded(f"{size} models exceed the budget of {config.budget} fits")
    executor = _executor(config.n_jobs)
    try:
        pool = ModelPool(ds, config.em, executor)
        models = [m for m in model_universe(K_max, ds.L) if m.K <= ds.n]
        pool.ensure(models, "exhaustive")
        pool.executor = None
        return pool
    finally:
        if executor is not None:
            executor.shutdown()
