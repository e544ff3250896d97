"""Penalties and penalized-criterion selection.

Every penalty is linear in the model dimension ``D``: ``pen = c(n, L) * D / n``
with ``c = 1`` for AIC, ``ln(n) / 2`` for BIC, a user-supplied ``lambda`` for
the calibrated shape, and the non-asymptotic lower bound for the
theoretical penalty.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable

from .core import FittedModel, ModelIndex, dimension
from .errors import EmptyPool


class PenaltyKind(str, enum.Enum):
    AIC = "aic"
    BIC = "bic"
    THEORETICAL = "theoretical"
    SLOPE = "slope"
    RAW = "raw"


def pen_aic(index: ModelIndex, n: int, n_states) -> float:
    return dimension(index, n_states) / n


def pen_bic(index: ModelIndex, n: int, n_states) -> float:
    return math.log(n) / (2 * n) * dimension(index, n_states)


def theoretical_multiplier(n: int, L: int, kappa: float = 1.0) -> float:
    """``kappa * (5 + sqrt(max(ln(n)/2 + ln(L)/2, ln(2)/2 + ln(L))))**2``."""
    inner = max(0.5 * math.log(n) + 0.5 * math.log(L), 0.5 * math.log(2) + math.log(L))
    return kappa * (5.0 + math.sqrt(inner)) ** 2


def pen_theoretical(index: ModelIndex, n: int, n_states, kappa: float = 1.0) -> float:
    """Lower bound on the penalty under which the oracle inequality holds.

    The absolute constant ``kappa`` has no known sharp value; it is exposed
    for study and is never the default selection rule.
    """
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    return theoretical_multiplier(n, len(n_states), kappa) * dimension(index, n_states) / n


@dataclass(frozen=True)
class Penalty:
    """A penalty ``multiplier(n, L) * D / n``.

    ``SLOPE`` and ``RAW`` share the same formula; the kinds only record
    whether ``lam`` came out of a calibration or was given by hand.
    """

    kind: PenaltyKind
    lam: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", PenaltyKind(self.kind))
        if self.lam < 0:
            raise ValueError("penalty multiplier must be non-negative")
        if self.kind is PenaltyKind.THEORETICAL and not self.lam > 0:
            raise ValueError("theoretical penalty needs kappa > 0")

    @classmethod
    def aic(cls):
        return cls(PenaltyKind.AIC)

    @classmethod
    def bic(cls):
        return cls(PenaltyKind.BIC)

    @classmethod
    def theoretical(cls, kappa: float = 1.0):
        return cls(PenaltyKind.THEORETICAL, kappa)

    @classmethod
    def slope(cls, lam: float):
        return cls(PenaltyKind.SLOPE, lam)

    @classmethod
    def raw(cls, lam: float):
        return cls(PenaltyKind.RAW, lam)

    def multiplier(self, n: int, L: int) -> float:
        if self.kind is PenaltyKind.AIC:
            return 1.0
        if self.kind is PenaltyKind.BIC:
            return 0.5 * math.log(n)
        if self.kind is PenaltyKind.THEORETICAL:
            return theoretical_multiplier(n, L, self.lam)
        return self.lam

    def value(self, D: int, n: int, L: int) -> float:
        return self.multiplier(n, L) * D / n

    def __call__(self, index: ModelIndex, n: int, n_states) -> float:
        return self.value(dimension(index, n_states), n, len(n_states))

    @property
    def label(self) -> str:
        if self.kind in (PenaltyKind.AIC, PenaltyKind.BIC):
            return self.kind.value
        return f"{self.kind.value}:{self.lam:g}"


def criterion(fitted: FittedModel, penalty: Penalty) -> float:
    """Contrast plus penalty; an infinite contrast stays infinite."""
    return fitted.contrast + penalty.value(fitted.dimension, fitted.n_obs, fitted.n_variables)


def selection_key(fitted: FittedModel, penalty: Penalty) -> tuple:
    """Sort key: criterion, then smaller ``D``, smaller ``K``, lexicographic ``S``."""
    return (criterion(fitted, penalty), fitted.dimension, fitted.index.K, fitted.index.variables)


def select_fitted(pool: Iterable[FittedModel], penalty: Penalty) -> FittedModel:
    models = list(pool)
    if not models:
        raise EmptyPool("cannot select from an empty pool")
    return min(models, key=lambda f: selection_key(f, penalty))


def select_under_penalty(pool: Iterable[FittedModel], penalty: Penalty) -> ModelIndex:
    """Index of the model minimizing the penalized criterion."""
    return select_fitted(pool, penalty).index
