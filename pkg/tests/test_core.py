import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catmix.core import (
    Case,
    Dataset,
    MixtureDistribution,
    MixtureParams,
    ModelIndex,
    complexity_constant,
    contrast,
    density,
    dimension,
    enumerate_space,
    log_density,
    log_likelihood,
    model_universe,
    random_params,
    space_size,
    theorem_precondition,
    validate_dataset,
    xi_constant,
)
from catmix.errors import DegenerateVariable, RaggedRows, UnparseableCell

from conftest import random_dataset, random_index


# --- validation -------------------------------------------------------------


def test_validate_counts_observed_labels():
    ds = validate_dataset([["a", "x"], ["b", "y"], ["a", "z"]], "haploid")
    assert ds.n_states == (2, 3)
    assert ds.labels == (("a", "b"), ("x", "y", "z"))


def test_diploid_pairs_are_unordered():
    ds = validate_dataset([["b/a"], ["a/b"]], "diploid")
    assert ds.states[0].tolist() == ds.states[1].tolist() == [[0, 1]]


def test_degenerate_variable_rejected():
    with pytest.raises(DegenerateVariable) as err:
        validate_dataset([["a", "x"], ["a", "y"]], "haploid")
    assert err.value.column == 1


def test_ragged_and_unparseable_report_position():
    with pytest.raises(RaggedRows) as err:
        validate_dataset([["a", "x"], ["b"]], "haploid")
    assert err.value.row == 2
    with pytest.raises(UnparseableCell) as err:
        validate_dataset([["a/b", "x/y"], ["a/b", "y"]], "diploid")
    assert (err.value.row, err.value.column) == (2, 2)
    with pytest.raises(UnparseableCell):
        validate_dataset([["a", ""], ["b", "x"]], "haploid")


def test_numeric_labels_sort_naturally():
    ds = validate_dataset([["10"], ["9"], ["2"]], "haploid")
    assert ds.labels == (("2", "9", "10"),)


def test_model_index_constraints():
    with pytest.raises(ValueError):
        ModelIndex(1, {0})
    with pytest.raises(ValueError):
        ModelIndex(2)
    assert str(ModelIndex(3, {0, 1})) == "(K=3, S={1,2})"


def test_params_simplex_checked():
    with pytest.raises(ValueError):
        MixtureParams([0.5, 0.6], {}, {})
    with pytest.raises(ValueError):
        MixtureParams([1.0], {}, {0: [1.2, -0.2]})
    MixtureParams([1.0], {}, {0: [1.0, 0.0]})  # zeros are legal


# --- density ---------------------------------------------------------------


def test_hardy_weinberg_hand_values():
    idx = ModelIndex(1)
    p = MixtureParams([1.0], {}, {0: [0.5, 0.5]})
    assert density([(0, 0)], Case.DIPLOID, idx, p) == pytest.approx(0.25, abs=1e-15)
    assert density([(0, 1)], Case.DIPLOID, idx, p) == pytest.approx(0.5, abs=1e-15)
    assert density([(1, 0)], Case.DIPLOID, idx, p) == pytest.approx(0.5, abs=1e-15)


def test_uniform_haploid_product():
    idx = ModelIndex(1)
    p = MixtureParams([1.0], {}, {l: [0.5, 0.5] for l in range(3)})
    for x in itertools.product(range(2), repeat=3):
        assert density(x, Case.HAPLOID, idx, p) == pytest.approx(0.125, abs=1e-15)


def test_degenerate_weight_gives_first_component(rng):
    idx = ModelIndex(2, {0, 1})
    p = random_params(idx, (3, 3), rng)
    p = MixtureParams([1.0, 0.0], p.alpha, p.beta)
    for x in itertools.product(range(3), repeat=2):
        expected = p.alpha[0][0, x[0]] * p.alpha[1][0, x[1]]
        assert density(x, Case.HAPLOID, idx, p) == pytest.approx(expected, rel=1e-14)


def test_log_likelihood_and_contrast():
    idx = ModelIndex(1)
    p = MixtureParams([1.0], {}, {0: [0.5, 0.5]})
    ds = Dataset(Case.DIPLOID, [[[0, 0]]], (2,))
    assert log_likelihood(ds, idx, p) == pytest.approx(math.log(0.25))
    assert contrast(ds, idx, p) == pytest.approx(-math.log(0.25))


def test_contrast_invariant_to_duplication(rng):
    ds = random_dataset(rng, "diploid", 40, (3, 2, 4))
    idx = ModelIndex(2, {0, 2})
    p = random_params(idx, ds.n_states, rng)
    doubled = Dataset(ds.case, np.concatenate([ds.states, ds.states]), ds.n_states)
    assert contrast(doubled, idx, p) == pytest.approx(contrast(ds, idx, p), rel=1e-13)


def test_zero_frequency_gives_infinite_contrast():
    ds = Dataset(Case.HAPLOID, [[0], [1]], (2,))
    p = MixtureParams([1.0], {}, {0: [1.0, 0.0]})
    assert contrast(ds, ModelIndex(1), p) == math.inf


@pytest.mark.parametrize("case", ["haploid", "diploid"])
def test_normalization_over_space(rng, case):
    for _ in range(10):
        n_states = tuple(int(a) for a in rng.integers(2, 5, size=int(rng.integers(1, 4))))
        idx = random_index(rng, 4, len(n_states))
        p = random_params(idx, n_states, rng, concentration=0.5)
        X = enumerate_space(case, n_states)
        assert len(X) == space_size(case, n_states)
        assert np.exp(log_density(X, case, idx, p)).sum() == pytest.approx(1.0, abs=1e-9)
        dist = MixtureDistribution(Case(case), n_states, idx, p)
        assert np.allclose(dist.space_probabilities(), np.exp(dist.log_prob(X)), rtol=1e-12, atol=0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), case=st.sampled_from(["haploid", "diploid"]))
def test_relabeling_invariance(seed, case):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, case, 25, (3, 2, 3))
    idx = ModelIndex(int(rng.integers(2, 5)), {0, 2})
    p = random_params(idx, ds.n_states, rng)
    q = p.permuted(rng.permutation(idx.K))
    assert contrast(ds, idx, q) == contrast(ds, idx, p)


# --- dimension and constants -------------------------------------------------


def _free_coordinates(index, n_states):
    """Coordinates of (pi, alpha, beta) minus the rank of the sum-to-one constraints."""
    K, L = index.K, len(n_states)
    blocks = [K]
    blocks += [n_states[l] for l in sorted(index.S) for _ in range(K)]
    blocks += [n_states[l] for l in range(L) if l not in index.S]
    total = sum(blocks)
    A = np.zeros((len(blocks), total))
    pos = 0
    for row, size in enumerate(blocks):
        A[row, pos:pos + size] = 1.0
        pos += size
    return total - int(np.linalg.matrix_rank(A))


def test_dimension_hand_values():
    assert dimension(ModelIndex(3, set(range(5))), (3,) * 6) == 34
    assert dimension(ModelIndex(1), (3,) * 6) == 12
    assert dimension(ModelIndex(5, set(range(8))), (10,) * 10) == 382


def test_dimension_matches_free_coordinates(rng):
    for L in range(1, 6):
        n_states = tuple(int(a) for a in rng.integers(2, 5, size=L))
        for idx in model_universe(4, L):
            assert dimension(idx, n_states) == _free_coordinates(idx, n_states)


def test_complexity_constant_sandwich(rng):
    lo, hi = (1 + math.log(2 * math.pi)) / 2, 2 + math.log(2 * math.pi) + math.log(2) / 2
    for _ in range(300):
        L = int(rng.integers(1, 9))
        n_states = tuple(int(a) for a in rng.integers(2, 12, size=L))
        idx = random_index(rng, 10, L)
        D = dimension(idx, n_states)
        C = complexity_constant(idx, n_states)
        assert lo * D <= C <= hi * D


def test_complexity_constant_hand_value():
    expected = 0.5 * (math.log(2 * math.pi * math.e) + math.log(4 * math.pi * math.e) + math.log(3))
    assert complexity_constant(ModelIndex(1), (2,)) == pytest.approx(expected, rel=1e-15)


def test_complexity_constant_increases_with_states():
    idx = ModelIndex(3, {0, 2})
    base = (3, 4, 2, 5)
    for l in range(4):
        bigger = list(base)
        bigger[l] += 1
        assert complexity_constant(idx, bigger) > complexity_constant(idx, base)


def test_xi_values():
    assert xi_constant("haploid", 10, 10) == pytest.approx(40 / 2047, abs=1e-12)
    assert abs(xi_constant("haploid", 10, 10) - 0.019541) < 1e-6
    xi = xi_constant("haploid", 1, 2)
    assert xi == pytest.approx(4 * math.sqrt(2) / 3)
    assert not theorem_precondition(1, 2, xi)
    assert theorem_precondition(8, 2, xi)
    for case in ("haploid", "diploid"):
        vals = [xi_constant(case, L, 10) for L in range(2, 21)]
        assert all(b < a for a, b in zip(vals, vals[1:]))


def test_sample_is_seeded_and_sorted(rng):
    idx = ModelIndex(2, {0})
    p = random_params(idx, (3, 4), rng)
    dist = MixtureDistribution(Case.DIPLOID, (3, 4), idx, p)
    a, za = dist.sample(50, np.random.default_rng(1))
    b, zb = dist.sample(50, np.random.default_rng(1))
    assert np.array_equal(a, b) and np.array_equal(za, zb)
    assert np.all(a[:, :, 0] <= a[:, :, 1])
