"""Domain types and exact density evaluation for multinomial mixtures.

Two observation cases are supported:

* haploid: each variable ``l`` takes one state in ``{0, ..., A_l - 1}``;
* diploid: each variable holds an unordered pair of states (a genotype),
  stored sorted so that ``{a, b}`` and ``{b, a}`` compare equal.  Within a
  cluster the two states are independent draws (Hardy-Weinberg), so a
  heterozygote ``{a, b}`` has probability ``2 * f[a] * f[b]``.

A model is indexed by ``(K, S)``: the number of clusters and the set of
clustering variables.  Variables outside ``S`` share one frequency vector
across all clusters.  Inside the library variable and state indices are
0-based; file formats and the command line use 1-based numbering.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import DegenerateVariable, RaggedRows, UnparseableCell

SIMPLEX_TOL = 1e-10
LN2 = math.log(2.0)


class Case(str, enum.Enum):
    HAPLOID = "haploid"
    DIPLOID = "diploid"

    @property
    def ploidy(self) -> int:
        return 1 if self is Case.HAPLOID else 2


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Dataset:
    """An ``n x L`` table of categorical observations.

    Parameters
    ----------
    case : Case
        Haploid (one state per cell) or diploid (sorted state pair per cell).
    states : ndarray of int
        Shape ``(n, L)`` for haploid data, ``(n, L, 2)`` for diploid data.
        Entries are 0-based state indices.
    n_states : tuple of int
        ``A_l`` for every variable.
    labels : tuple of tuple of str, optional
        Original state labels per variable, ``labels[l][j]`` naming state ``j``.
    """

    case: Case
    states: np.ndarray
    n_states: tuple
    labels: Optional[tuple] = None

    def __post_init__(self):
        case = Case(self.case)
        states = np.array(self.states, dtype=np.int64)
        n_states = tuple(int(a) for a in self.n_states)
        expected_ndim = 2 if case is Case.HAPLOID else 3
        if states.ndim != expected_ndim:
            raise ValueError(f"{case.value} states must be {expected_ndim}-D, got {states.ndim}-D")
        if case is Case.DIPLOID:
            if states.shape[2] != 2:
                raise ValueError("diploid cells must hold two states")
            states = np.sort(states, axis=2)
        n, L = states.shape[:2]
        if n < 1 or L < 1:
            raise ValueError("a dataset needs at least one row and one variable")
        if len(n_states) != L:
            raise ValueError(f"n_states has {len(n_states)} entries for {L} variables")
        if min(n_states) < 2:
            raise ValueError("every variable needs at least two states")
        upper = np.asarray(n_states).reshape((1, L) + (1,) * (expected_ndim - 2))
        if states.min() < 0 or np.any(states >= upper):
            raise ValueError("state index out of range")
        states.setflags(write=False)
        object.__setattr__(self, "case", case)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "n_states", n_states)

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def L(self) -> int:
        return self.states.shape[1]

    def counts(self, l: int) -> np.ndarray:
        """State counts per individual for variable ``l``, shape ``(n, A_l)``.

        Haploid rows are one-hot; diploid rows count each allele (0, 1 or 2).
        """
        return self._counts[l]

    @cached_property
    def _counts(self):
        out = []
        rows = np.arange(self.n)
        for l, a in enumerate(self.n_states):
            c = np.zeros((self.n, a))
            if self.case is Case.HAPLOID:
                c[rows, self.states[:, l]] = 1.0
            else:
                np.add.at(c, (rows, self.states[:, l, 0]), 1.0)
                np.add.at(c, (rows, self.states[:, l, 1]), 1.0)
            c.setflags(write=False)
            out.append(c)
        return tuple(out)

    def empirical_frequencies(self, l: int, weights=None) -> np.ndarray:
        c = self.counts(l)
        if weights is None:
            total = c.sum(axis=0)
        else:
            total = weights @ c
        return total / total.sum()

    def subset(self, rows) -> "Dataset":
        return Dataset(self.case, self.states[rows], self.n_states, self.labels)

    def state_label(self, l: int, j: int) -> str:
        if self.labels is None:
            return str(j + 1)
        return self.labels[l][j]


def _label_key(label: str):
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)


def validate_dataset(rows: Sequence[Sequence[str]], case, *, pair_separator: str = "/",
                     first_row: int = 1) -> Dataset:
    """Build a :class:`Dataset` from a table of raw string cells.

    States are re-indexed densely over the labels actually observed in each
    column, so ``A_l`` is the observed state count.  Row and column numbers
    in error messages are 1-based; ``first_row`` is the number reported for
    ``rows[0]`` (2 when a header line was skipped).
    """
    case = Case(case)
    rows = [list(r) for r in rows]
    if not rows:
        raise RaggedRows(first_row, "at least 1", 0)
    L = len(rows[0])
    if L == 0:
        raise RaggedRows(first_row, "at least 1", 0)
    parsed = []
    for i, row in enumerate(rows, start=first_row):
        if len(row) != L:
            raise RaggedRows(i, L, len(row))
        cells = []
        for j, cell in enumerate(row, start=1):
            cell = cell.strip()
            if case is Case.HAPLOID:
                if not cell or pair_separator in cell:
                    raise UnparseableCell(i, j, cell, "expected a single state label")
                cells.append(cell)
            else:
                parts = [p.strip() for p in cell.split(pair_separator)]
                if len(parts) != 2 or not all(parts):
                    raise UnparseableCell(i, j, cell, f"expected a pair 'a{pair_separator}b'")
                cells.append(tuple(parts))
        parsed.append(cells)

    labels = []
    for j in range(L):
        if case is Case.HAPLOID:
            seen = {r[j] for r in parsed}
        else:
            seen = {a for r in parsed for a in r[j]}
        ordered = tuple(sorted(seen, key=_label_key))
        if len(ordered) < 2:
            raise DegenerateVariable(j + 1, ordered[0])
        labels.append(ordered)

    lookup = [{lab: k for k, lab in enumerate(ls)} for ls in labels]
    if case is Case.HAPLOID:
        states = [[lookup[j][r[j]] for j in range(L)] for r in parsed]
    else:
        states = [[(lookup[j][r[j][0]], lookup[j][r[j][1]]) for j in range(L)] for r in parsed]
    return Dataset(case, np.asarray(states), tuple(len(ls) for ls in labels), tuple(labels))


# ---------------------------------------------------------------------------
# Models and parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=False)
class ModelIndex:
    """``(K, S)``: cluster count and the set of clustering variables.

    ``K == 1`` requires ``S`` to be empty and ``K >= 2`` requires a
    non-empty ``S``.
    """

    K: int
    S: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        S = frozenset(int(s) for s in self.S)
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "S", S)
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.K == 1 and S:
            raise ValueError("K = 1 requires an empty set of clustering variables")
        if self.K >= 2 and not S:
            raise ValueError("K >= 2 requires at least one clustering variable")
        if any(s < 0 for s in S):
            raise ValueError("variable indices must be non-negative")

    @property
    def variables(self) -> tuple:
        return tuple(sorted(self.S))

    @property
    def sort_key(self) -> tuple:
        return (self.K, self.variables)

    def check(self, L: int) -> None:
        if self.S and max(self.S) >= L:
            raise ValueError(f"variable {max(self.S)} out of range for L = {L}")

    def __str__(self) -> str:
        inner = ",".join(str(s + 1) for s in self.variables)
        return f"(K={self.K}, S={{{inner}}})"


def model_universe(K_max: int, L: int) -> list:
    """Every model with ``K <= K_max`` over ``L`` variables."""
    models = [ModelIndex(1)]
    subsets = [
        frozenset(c)
        for r in range(1, L + 1)
        for c in itertools.combinations(range(L), r)
    ]
    for K in range(2, K_max + 1):
        models.extend(ModelIndex(K, s) for s in subsets)
    return models


def _as_simplex(v, what: str) -> np.ndarray:
    v = np.array(v, dtype=float)
    if v.ndim == 0 or np.any(~np.isfinite(v)) or np.any(v < 0):
        raise ValueError(f"{what} must be a finite non-negative vector")
    if np.any(np.abs(v.sum(axis=-1) - 1.0) > SIMPLEX_TOL):
        raise ValueError(f"{what} must sum to 1")
    v.setflags(write=False)
    return v


@dataclass(frozen=True, eq=False)
class MixtureParams:
    """Mixing weights and state frequencies ``(pi, alpha, beta)``.

    ``alpha[l]`` has shape ``(K, A_l)`` for every ``l`` in ``S``;
    ``beta[l]`` has shape ``(A_l,)`` for every ``l`` not in ``S``.
    """

    pi: np.ndarray
    alpha: Mapping
    beta: Mapping

    def __post_init__(self):
        object.__setattr__(self, "pi", _as_simplex(self.pi, "pi"))
        object.__setattr__(
            self, "alpha", {int(l): _as_simplex(a, f"alpha[{l}]") for l, a in self.alpha.items()}
        )
        object.__setattr__(
            self, "beta", {int(l): _as_simplex(b, f"beta[{l}]") for l, b in self.beta.items()}
        )

    @property
    def K(self) -> int:
        return self.pi.shape[0]

    def check(self, index: ModelIndex, n_states: Sequence[int]) -> None:
        L = len(n_states)
        index.check(L)
        if self.pi.shape != (index.K,):
            raise ValueError(f"pi has shape {self.pi.shape}, expected ({index.K},)")
        if set(self.alpha) != set(index.S):
            raise ValueError("alpha keys must equal S")
        if set(self.beta) != set(range(L)) - set(index.S):
            raise ValueError("beta keys must be the complement of S")
        for l, a in self.alpha.items():
            if a.shape != (index.K, n_states[l]):
                raise ValueError(f"alpha[{l}] has shape {a.shape}, expected {(index.K, n_states[l])}")
        for l, b in self.beta.items():
            if b.shape != (n_states[l],):
                raise ValueError(f"beta[{l}] has shape {b.shape}, expected ({n_states[l]},)")

    def permuted(self, order) -> "MixtureParams":
        """Relabel clusters so that new cluster ``k`` is old cluster ``order[k]``."""
        order = np.asarray(order)
        return MixtureParams(self.pi[order], {l: a[order] for l, a in self.alpha.items()}, self.beta)

    def frequencies(self, l: int) -> np.ndarray:
        """Frequencies of variable ``l`` for every cluster, shape ``(K, A_l)``."""
        if l in self.alpha:
            return self.alpha[l]
        return np.broadcast_to(self.beta[l], (self.K, self.beta[l].shape[0]))

    def flat(self) -> np.ndarray:
        parts = [self.pi]
        parts += [self.alpha[l].ravel() for l in sorted(self.alpha)]
        parts += [self.beta[l] for l in sorted(self.beta)]
        return np.concatenate(parts)


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------


def logsumexp_rows(a: np.ndarray, canonical: bool = False) -> np.ndarray:
    """Row-wise ``log(sum(exp(a)))`` with a max shift; all ``-inf`` rows give ``-inf``.

    With ``canonical=True`` each row is sorted first so the result does not
    depend on column order.
    """
    if canonical:
        a = np.sort(a, axis=1)
    m = a.max(axis=1)
    out = np.full(a.shape[0], -np.inf)
    ok = np.isfinite(m)
    if np.any(ok):
        s = np.exp(a[ok] - m[ok, None]).sum(axis=1)
        out[ok] = m[ok] + np.log(s)
    return out


def log_terms(states: np.ndarray, case, index: ModelIndex, params: MixtureParams):
    """Per-component and shared log-density terms.

    Returns ``(log_comp, log_shared)`` where ``log_comp[i, k]`` is
    ``log pi_k + sum_{l in S} log P(x_i^l | Z = k)`` and ``log_shared[i]``
    collects the variables outside ``S`` (plus the heterozygote factors,
    which do not depend on the cluster).
    """
    case = Case(case)
    states = np.asarray(states)
    n, L = states.shape[:2]
    with np.errstate(divide="ignore"):
        log_comp = np.tile(np.log(params.pi), (n, 1))
        log_shared = np.zeros(n)
        for l in range(L):
            if case is Case.HAPLOID:
                x = states[:, l]
                if l in index.S:
                    log_comp += np.log(params.alpha[l])[:, x].T
                else:
                    log_shared += np.log(params.beta[l])[x]
            else:
                a, b = states[:, l, 0], states[:, l, 1]
                log_shared += np.where(a != b, LN2, 0.0)
                if l in index.S:
                    la = np.log(params.alpha[l])
                    log_comp += (la[:, a] + la[:, b]).T
                else:
                    lb = np.log(params.beta[l])
                    log_shared += lb[a] + lb[b]
    return log_comp, log_shared


def log_density(states: np.ndarray, case, index: ModelIndex, params: MixtureParams) -> np.ndarray:
    """Log-density of every row of ``states``; ``-inf`` where the density is 0."""
    log_comp, log_shared = log_terms(states, case, index, params)
    return logsumexp_rows(log_comp, canonical=True) + log_shared


def density(x, case, index: ModelIndex, params: MixtureParams) -> float:
    """Probability of a single observation ``x``.

    ``x`` is a length-``L`` sequence of states (haploid) or of state pairs
    (diploid), 0-based.
    """
    case = Case(case)
    x = np.asarray(x, dtype=np.int64)
    if case is Case.DIPLOID:
        x = np.sort(x, axis=-1)
    return float(np.exp(log_density(x[None], case, index, params)[0]))


def log_likelihood(ds: Dataset, index: ModelIndex, params: MixtureParams) -> float:
    """``sum_i ln P(X_i)``; ``-inf`` as soon as one observation has density 0."""
    params.check(index, ds.n_states)
    return float(np.sum(log_density(ds.states, ds.case, index, params)))


def contrast(ds: Dataset, index: ModelIndex, params: MixtureParams) -> float:
    """Negative average log-likelihood; ``+inf`` on a zero-density observation."""
    return -log_likelihood(ds, index, params) / ds.n


@lru_cache(maxsize=16)
def _enumerate_space(case: Case, n_states: tuple) -> np.ndarray:
    if case is Case.HAPLOID:
        per_var = [np.arange(a) for a in n_states]
        grids = np.meshgrid(*per_var, indexing="ij")
        out = np.stack([g.ravel() for g in grids], axis=1)
    else:
        per_var = [np.array([(i, j) for i in range(a) for j in range(i, a)]) for a in n_states]
        sizes = [len(p) for p in per_var]
        idx = np.meshgrid(*[np.arange(s) for s in sizes], indexing="ij")
        out = np.stack([per_var[l][idx[l].ravel()] for l in range(len(n_states))], axis=1)
    out.setflags(write=False)
    return out


def space_size(case, n_states: Sequence[int]) -> int:
    case = Case(case)
    if case is Case.HAPLOID:
        return math.prod(n_states)
    return math.prod(a * (a + 1) // 2 for a in n_states)


def enumerate_space(case, n_states: Sequence[int]) -> np.ndarray:
    """Every possible observation, one per row (genotypes sorted for diploid data)."""
    return _enumerate_space(Case(case), tuple(int(a) for a in n_states))


# ---------------------------------------------------------------------------
# Dimension and complexity
# ---------------------------------------------------------------------------


def dimension(index: ModelIndex, n_states: Sequence[int]) -> int:
    """Number of free parameters ``D_(K,S)``."""
    K = index.K
    inside = sum(n_states[l] - 1 for l in index.S)
    outside = sum(a - 1 for l, a in enumerate(n_states) if l not in index.S)
    return K - 1 + K * inside + outside


def complexity_constant(index: ModelIndex, n_states: Sequence[int]) -> float:
    """The model complexity constant ``C_(K,S)`` from the bracketing-entropy bound."""
    K, S, L = index.K, index.S, len(n_states)
    D = dimension(index, n_states)
    many = 1 if K >= 2 else 0
    total = math.log(2 * math.pi * math.e) * D
    total += math.log(4 * math.pi * math.e) * (many + L + (K - 1) * len(S))
    total += many * math.log(K + 1)
    total += sum(math.log(a + 1) for a in n_states)
    total += (K - 1) * sum(math.log(n_states[l] + 1) for l in S)
    return 0.5 * total


def xi_constant(case, L: int, A_max: int) -> float:
    case = Case(case)
    numerator = 4.0 * math.sqrt(A_max) * math.sqrt(L)
    if case is Case.HAPLOID:
        return numerator / (2.0 ** (L + 1) - 1.0)
    return numerator / (2.0 * (1.0 + 3.0 * math.sqrt(2.0)) ** L - 1.0)


def theorem_precondition(n: int, K: int, xi: float) -> bool:
    """``xi < 1`` or ``n > xi^2 K``: the regime where the penalty bound holds."""
    return xi < 1.0 or n > xi * xi * K


# ---------------------------------------------------------------------------
# Fitted models
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FittedModel:
    """A model with its maximum-likelihood fit.

    ``params`` is ``None`` when every EM restart failed; such a model has
    infinite contrast and never wins a selection.  A model read back from a
    pool summary also has no ``params`` but keeps its finite contrast.
    """

    index: ModelIndex
    params: Optional[MixtureParams]
    contrast: float
    dimension: int
    n_obs: int
    n_variables: int
    loglik_trace: tuple = ()
    n_restarts_used: int = 0
    n_restarts_failed: int = 0
    converged: bool = False
    rho_slack: Optional[float] = None
    seed: Optional[int] = None

    @property
    def failed(self) -> bool:
        return not math.isfinite(self.contrast)

    @property
    def log_likelihood(self) -> float:
        return -self.contrast * self.n_obs


def failed_fit(index: ModelIndex, n_states: Sequence[int], n: int, n_failed: int, seed=None) -> FittedModel:
    return FittedModel(
        index=index,
        params=None,
        contrast=math.inf,
        dimension=dimension(index, n_states),
        n_obs=n,
        n_variables=len(n_states),
        n_restarts_failed=n_failed,
        seed=seed,
    )


def random_params(index: ModelIndex, n_states: Sequence[int], rng, concentration: float = 1.0) -> MixtureParams:
    """Draw a parameter uniformly-ish from ``Theta_(K,S)`` via Dirichlet draws."""
    pi = rng.dirichlet(np.full(index.K, concentration))
    alpha = {l: rng.dirichlet(np.full(n_states[l], concentration), size=index.K) for l in index.S}
    beta = {
        l: rng.dirichlet(np.full(a, concentration))
        for l, a in enumerate(n_states)
        if l not in index.S
    }
    return MixtureParams(_fix(pi), {l: _fix(a) for l, a in alpha.items()}, {l: _fix(b) for l, b in beta.items()})


def _fix(v: np.ndarray) -> np.ndarray:
    return v / v.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# Distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MixtureDistribution:
    """A fully specified member of a model: ``P_(K, S, theta)`` on a given space."""

    case: Case
    n_states: tuple
    index: ModelIndex
    params: MixtureParams

    def __post_init__(self):
        object.__setattr__(self, "case", Case(self.case))
        object.__setattr__(self, "n_states", tuple(int(a) for a in self.n_states))
        if min(self.n_states) < 2:
            raise ValueError("every variable needs at least two states")
        self.params.check(self.index, self.n_states)

    @classmethod
    def from_fit(cls, fitted: FittedModel, ds: Dataset) -> "MixtureDistribution":
        if fitted.params is None:
            raise ValueError(f"model {fitted.index} has no fitted parameters")
        return cls(ds.case, ds.n_states, fitted.index, fitted.params)

    @property
    def L(self) -> int:
        return len(self.n_states)

    def same_space(self, other: "MixtureDistribution") -> bool:
        return self.case is other.case and self.n_states == other.n_states

    def log_prob(self, states: np.ndarray) -> np.ndarray:
        return log_density(states, self.case, self.index, self.params)

    def sample(self, n: int, rng) -> tuple:
        """Draw ``n`` observations; returns ``(states, cluster_labels)``."""
        params = self.params
        z = rng.choice(self.index.K, size=n, p=params.pi)
        ploidy = self.case.ploidy
        cols = []
        for l in range(self.L):
            cdf = np.cumsum(params.frequencies(l), axis=1)[z]
            draws = []
            for _ in range(ploidy):
                u = rng.random(n)
                x = np.minimum((u[:, None] >= cdf).sum(axis=1), self.n_states[l] - 1)
                draws.append(x)
            cols.append(draws[0] if ploidy == 1 else np.sort(np.stack(draws, axis=1), axis=1))
        states = np.stack(cols, axis=1)
        return states, z

    def space_probabilities(self) -> np.ndarray:
        """Probability of every point of :func:`enumerate_space`, in the same order.

        Each component is the outer product of its per-variable state (or
        genotype) probabilities, so no per-point gathering is needed.
        """
        K = self.index.K
        comp = np.ones((K, 1))
        for l, a in enumerate(self.n_states):
            f = self.params.frequencies(l)
            if self.case is Case.DIPLOID:
                i, j = np.triu_indices(a)
                g = f[:, i] * f[:, j] * np.where(i == j, 1.0, 2.0)
            else:
                g = f
            comp = (comp[:, :, None] * g[:, None, :]).reshape(K, -1)
        return self.params.pi @ comp
