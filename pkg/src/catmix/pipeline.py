"""End-to-end selection: build a pool, calibrate, select under every criterion."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .calibration import DEFAULT_WINDOW_WIDTH, CalibrationResult, calibrate_and_select
from .core import Dataset, FittedModel
from .criteria import Penalty, select_fitted
from .errors import FlatPath
from .explorer import ExplorerConfig, ModelPool, build_pool

logger = logging.getLogger(__name__)

BASE_CRITERIA = ("slope", "aic", "bic")


def parse_criterion(text: str) -> tuple:
    """``'aic'``, ``'bic'``, ``'slope'`` or ``'theoretical:KAPPA'`` -> (name, kappa)."""
    text = text.strip().lower()
    if text in BASE_CRITERIA:
        return text, None
    if text.startswith("theoretical"):
        _, _, kappa = text.partition(":")
        kappa = float(kappa) if kappa else 1.0
        if not kappa > 0:
            raise ValueError("kappa must be positive")
        return "theoretical", kappa
    raise ValueError(f"unknown criterion {text!r}")


@dataclass
class SelectionOutcome:
    pool: ModelPool
    grid: np.ndarray
    calibration: Optional[CalibrationResult]
    selections: dict = field(default_factory=dict)
    flat_path: Optional[FlatPath] = None
    warnings: list = field(default_factory=list)

    def selected(self, criterion: str) -> Optional[FittedModel]:
        return self.selections.get(criterion)


def run_selection(
    ds: Dataset,
    config: ExplorerConfig = ExplorerConfig(),
    h: Optional[int] = None,
    width: float = DEFAULT_WINDOW_WIDTH,
    kappa: Optional[float] = None,
    pool: Optional[ModelPool] = None,
) -> SelectionOutcome:
    """Select a model under the calibrated, AIC and BIC criteria.

    The theoretical penalty is added when ``kappa`` is given.  An
    unrecoverable flat dimension path leaves the calibrated selection empty
    unless the pool holds a single model, which then wins by default.
    """
    if pool is None:
        pool = build_pool(ds, config)
    grid = config.grid(ds.n)
    outcome = SelectionOutcome(pool=pool, grid=grid, calibration=None)
    models = [f for f in pool if not f.failed]
    try:
        cal = calibrate_and_select(models, grid, h=h, width=width)
        outcome.calibration = cal
        outcome.selections["slope"] = cal.final_model
        if cal.method != "dimension_jump":
            outcome.warnings.append(f"dimension jump unavailable, used {cal.method}: " + "; ".join(cal.notes))
    except FlatPath as err:
        outcome.flat_path = err
        if len(models) == 1:
            outcome.selections["slope"] = models[0]
            outcome.warnings.append("single model in the pool; calibration skipped")
        else:
            outcome.warnings.append(f"calibration failed: {err}")
    outcome.selections["aic"] = select_fitted(models, Penalty.aic())
    outcome.selections["bic"] = select_fitted(models, Penalty.bic())
    if kappa is not None:
        outcome.selections["theoretical"] = select_fitted(models, Penalty.theoretical(kappa))
    for w in outcome.warnings:
        logger.warning(w)
    return outcome
