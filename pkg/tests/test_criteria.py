import math

import numpy as np
import pytest

from catmix.core import FittedModel, ModelIndex
from catmix.criteria import (
    Penalty,
    criterion,
    pen_aic,
    pen_bic,
    pen_theoretical,
    select_under_penalty,
    theoretical_multiplier,
)
from catmix.errors import EmptyPool


def stub(K, S, contrast, D, n=100, L=6):
    return FittedModel(ModelIndex(K, S), None, contrast, D, n, L)


OAK = (ModelIndex(3, set(range(5))), (3,) * 6)  # D = 34


def test_aic_bic_hand_values():
    assert pen_aic(*OAK[:1], 500, OAK[1]) == pytest.approx(0.068, abs=1e-15)
    assert pen_bic(*OAK[:1], 500, OAK[1]) == pytest.approx(34 * math.log(500) / 1000, rel=1e-15)
    assert pen_bic(*OAK[:1], 500, OAK[1]) == pytest.approx(0.21130, abs=5e-6)


def test_aic_bic_cross_at_e_squared():
    n = math.exp(2)
    for D in (1, 7, 50):
        assert Penalty.aic().value(D, n, 3) == pytest.approx(Penalty.bic().value(D, n, 3), rel=1e-14)
    for n in (8, 100, 10**6):
        assert pen_bic(*OAK[:1], n, OAK[1]) > pen_aic(*OAK[:1], n, OAK[1])


def test_theoretical_branches():
    inner = (theoretical_multiplier(100, 10) ** 0.5 - 5) ** 2
    assert inner == pytest.approx(0.5 * math.log(1000), rel=1e-12)
    inner = (theoretical_multiplier(1, 10) ** 0.5 - 5) ** 2
    assert inner == pytest.approx(math.log(2) / 2 + math.log(10), rel=1e-12)


def test_theoretical_kappa_linear():
    idx, ns = OAK
    assert pen_theoretical(idx, 500, ns, 2.0) == pytest.approx(2 * pen_theoretical(idx, 500, ns, 1.0), rel=1e-15)


def test_theoretical_over_bic_tends_to_kappa():
    # the ratio (5 + sqrt(x))**2 / (ln(n) / 2), x ~ ln(n) / 2, approaches kappa
    # only like (1 + 5 / sqrt(x))**2, so the check needs astronomically large n
    # (Python integers keep ln(n) exact)
    ratios = [theoretical_multiplier(10**k, 6) / (0.5 * math.log(10**k)) for k in (2, 8, 100, 10**5)]
    assert all(b < a for a, b in zip(ratios, ratios[1:]))
    assert ratios[1] == pytest.approx((5 + math.sqrt(0.5 * math.log(6e8))) ** 2 / (0.5 * math.log(1e8)), rel=1e-12)
    assert ratios[-1] == pytest.approx(1.0, rel=0.05)
    assert theoretical_multiplier(10**(10**5), 6, 3.0) / (0.5 * math.log(10**(10**5))) == pytest.approx(3.0, rel=0.05)


def test_penalties_increase_with_dimension():
    for pen in (Penalty.aic(), Penalty.bic(), Penalty.theoretical(0.3), Penalty.slope(1.7)):
        vals = [pen.value(D, 200, 5) for D in range(0, 40)]
        assert all(b > a for a, b in zip(vals, vals[1:]))
        assert vals[0] == 0.0


def test_criterion_basics():
    f = stub(2, {0}, 1.3, 12)
    assert criterion(f, Penalty.raw(0.0)) == 1.3
    assert criterion(f, Penalty.slope(0.8)) == criterion(f, Penalty.raw(0.8))
    assert criterion(stub(2, {0}, math.inf, 12), Penalty.bic()) == math.inf
    g = stub(2, {0, 1}, 1.3, 20)
    assert criterion(f, Penalty.raw(0.1)) < criterion(g, Penalty.raw(0.1))


def test_planted_pool():
    A = stub(2, {0}, 1.0, 10)
    B = stub(3, {0, 1}, 0.9, 30)
    assert select_under_penalty([A, B], Penalty.raw(0.4)) == B.index
    assert select_under_penalty([A, B], Penalty.raw(0.6)) == A.index
    assert select_under_penalty([A], Penalty.bic()) == A.index
    with pytest.raises(EmptyPool):
        select_under_penalty([], Penalty.bic())


def test_tie_break_order():
    pool = [stub(3, {0}, 1.0, 10), stub(2, {1}, 1.0, 10), stub(2, {0}, 1.0, 10), stub(2, {0, 1}, 0.5, 11)]
    # at lambda = 0 the D = 11 model wins on contrast; with equal criteria the order decides
    assert select_under_penalty(pool[:3], Penalty.raw(1.0)) == ModelIndex(2, {0})
    tie = [stub(2, {0, 1}, 1.0, 12), stub(2, {0}, 1.02, 10)]  # 1.0 + 0.12 == 1.02 + 0.10
    assert select_under_penalty(tie, Penalty.raw(1.0)).S == {0}


def test_selected_dimension_non_increasing(rng):
    for _ in range(100):
        m = int(rng.integers(1, 15))
        pool = [stub(2, {0}, float(c), int(d)) for c, d in zip(rng.uniform(0, 2, m), rng.integers(1, 60, m))]
        dims = [select_fitted_dim(pool, lam) for lam in np.linspace(0.0, 10.0, 60)]
        assert all(b <= a for a, b in zip(dims, dims[1:]))


def select_fitted_dim(pool, lam):
    from catmix.criteria import select_fitted

    return select_fitted(pool, Penalty.raw(float(lam))).dimension
