"""Maximum-likelihood fitting of one model ``(K, S)`` by EM.

Variables outside ``S`` do not interact with the latent cluster, so their
frequencies are the pooled empirical frequencies and stay fixed; EM only
iterates on the mixing weights and the clustering-variable frequencies.

Fitting uses the small-EM strategy: several random hard partitions are each
run for a few iterations, and the best of them is continued to convergence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import (
    Case,
    Dataset,
    FittedModel,
    MixtureParams,
    ModelIndex,
    dimension,
    log_likelihood,
)
from .errors import AllComponentsZero, EmptyCluster

EMPTY_CLUSTER_MASS = 1e-10


@dataclass(frozen=True)
class EmConfig:
    max_iterations: int = 500
    relative_tolerance: float = 1e-8
    parameter_tolerance: Optional[float] = 1e-6
    n_restarts: int = 10
    short_run_iterations: int = 20
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("max_iterations", "n_restarts", "short_run_iterations"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not self.relative_tolerance > 0:
            raise ValueError("relative_tolerance must be positive")
        if self.parameter_tolerance is not None and not self.parameter_tolerance > 0:
            raise ValueError("parameter_tolerance must be positive or None")

    def with_seed(self, seed: int) -> "EmConfig":
        return replace(self, rng_seed=int(seed))


def model_seed(root_seed: int, index: ModelIndex) -> int:
    """Seed for fitting ``index``, derived from the root seed and the index only.

    Keying on the model (not on scheduling order) keeps results identical
    however fits are distributed over workers.
    """
    mask = sum(1 << s for s in index.S)
    ss = np.random.SeedSequence(entropy=int(root_seed), spawn_key=(index.K, mask))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


class _Workspace:
    """Flattened view of the clustering variables of one model."""

    def __init__(self, ds: Dataset, index: ModelIndex):
        index.check(ds.L)
        self.ds = ds
        self.index = index
        self.K = index.K
        self.variables = index.variables
        self.sizes = [ds.n_states[l] for l in self.variables]
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)[:-1]]).astype(np.int64)
        self.counts = np.hstack([ds.counts(l) for l in self.variables])
        self.counts_t = np.ascontiguousarray(self.counts.T)
        self.beta = {
            l: ds.empirical_frequencies(l) for l in range(ds.L) if l not in index.S
        }
        self.constant = self._shared_loglik()

    def _shared_loglik(self) -> float:
        ds = self.ds
        total = 0.0
        for l, b in self.beta.items():
            c = ds.counts(l).sum(axis=0)
            seen = c > 0
            total += float(np.sum(c[seen] * np.log(b[seen])))
        if ds.case is Case.DIPLOID:
            n_het = np.count_nonzero(ds.states[:, :, 0] != ds.states[:, :, 1])
            total += n_het * math.log(2.0)
        return total

    def split(self, alpha_cat: np.ndarray) -> dict:
        return {
            l: alpha_cat[:, o:o + a]
            for l, o, a in zip(self.variables, self.offsets, self.sizes)
        }

    def join(self, params: MixtureParams) -> np.ndarray:
        return np.hstack([params.alpha[l] for l in self.variables])

    def params(self, pi: np.ndarray, alpha_cat: np.ndarray) -> MixtureParams:
        return MixtureParams(pi, self.split(alpha_cat), self.beta)

    def expectation(self, pi: np.ndarray, alpha_cat: np.ndarray):
        """Responsibilities, shape ``(K, n)``, and total log-likelihood at ``(pi, alpha)``."""
        zero = alpha_cat <= 0.0
        with np.errstate(divide="ignore"):
            log_alpha = np.log(np.where(zero, 1.0, alpha_cat))
            log_comp = log_alpha @ self.counts_t
            log_comp += np.log(pi)[:, None]
        if zero.any():
            # an observed state with frequency 0 kills the component
            log_comp[(zero @ self.counts_t) > 0] = -np.inf
        top = log_comp.max(axis=0)
        if not np.isfinite(top).all():
            raise AllComponentsZero(np.flatnonzero(~np.isfinite(top)).tolist())
        tau = np.exp(log_comp - top)
        norm = tau.sum(axis=0)
        tau /= norm
        loglik = float(top.sum() + np.log(norm).sum()) + self.constant
        return tau, loglik

    def maximization(self, tau: np.ndarray):
        """Closed-form update from responsibilities of shape ``(K, n)``."""
        mass = tau.sum(axis=1)
        k = int(np.argmin(mass))
        if mass[k] < EMPTY_CLUSTER_MASS:
            raise EmptyCluster(k, float(mass[k]))
        pi = mass / mass.sum()
        weighted = tau @ self.counts
        seg = np.add.reduceat(weighted, self.offsets, axis=1)
        alpha_cat = weighted / np.repeat(seg, self.sizes, axis=1)
        return pi, alpha_cat


def _iterate(ws: _Workspace, pi, alpha_cat, max_iterations: int, rtol: float, ptol: Optional[float]):
    """Run EM from ``(pi, alpha)``.

    Stops when the relative log-likelihood change is at most ``rtol`` and
    (unless ``ptol`` is None) the next EM step would move no parameter by
    more than ``ptol``.  Returns the final parameters, the log-likelihood
    trace (one value per parameter visited, the last one belonging to the
    returned parameters) and whether the stopping rule was met.
    """
    trace = []
    for _ in range(max_iterations):
        tau, ll = ws.expectation(pi, alpha_cat)
        small = bool(trace) and abs(ll - trace[-1]) <= rtol * abs(trace[-1])
        trace.append(ll)
        new_pi, new_alpha = ws.maximization(tau)
        if small:
            if ptol is None:
                return pi, alpha_cat, trace, True
            step = max(np.max(np.abs(new_pi - pi)), np.max(np.abs(new_alpha - alpha_cat)))
            if step <= ptol:
                return pi, alpha_cat, trace, True
        pi, alpha_cat = new_pi, new_alpha
    _, ll = ws.expectation(pi, alpha_cat)
    trace.append(ll)
    return pi, alpha_cat, trace, False


def e_step(ds: Dataset, index: ModelIndex, params: MixtureParams) -> np.ndarray:
    """Posterior cluster memberships ``tau[i, k]``, shape ``(n, K)``."""
    params.check(index, ds.n_states)
    if index.K == 1:
        return np.ones((ds.n, 1))
    ws = _Workspace(ds, index)
    tau, _ = ws.expectation(params.pi, ws.join(params))
    return tau.T


def m_step(ds: Dataset, index: ModelIndex, resp: np.ndarray) -> MixtureParams:
    """Closed-form maximizer of the expected complete log-likelihood."""
    resp = np.asarray(resp, dtype=float)
    if resp.shape != (ds.n, index.K):
        raise ValueError(f"responsibilities must have shape {(ds.n, index.K)}")
    if index.K == 1:
        beta = {l: ds.empirical_frequencies(l) for l in range(ds.L)}
        return MixtureParams(np.ones(1), {}, beta)
    ws = _Workspace(ds, index)
    pi, alpha_cat = ws.maximization(resp.T)
    return ws.params(pi, alpha_cat)


def run_em(ds: Dataset, index: ModelIndex, start: MixtureParams, config: EmConfig = EmConfig()) -> FittedModel:
    """Run EM from a given starting point, without restarts."""
    start.check(index, ds.n_states)
    if index.K == 1:
        return _fit_single(ds, index, config)
    ws = _Workspace(ds, index)
    pi, alpha_cat, trace, converged = _iterate(
        ws, start.pi, ws.join(start), config.max_iterations, config.relative_tolerance, config.parameter_tolerance
    )
    return _package(ds, index, ws.params(pi, alpha_cat), trace, converged, 1, 0, None, config.rng_seed)


def fit(ds: Dataset, index: ModelIndex, config: EmConfig = EmConfig()) -> FittedModel:
    """Fit ``index`` to ``ds`` with the small-EM strategy.

    Each restart draws a random hard partition of the individuals, applies
    one M-step and runs ``short_run_iterations`` EM iterations; the best
    restart by log-likelihood is then continued to convergence.  A restart
    that loses a cluster or meets a zero-density row is abandoned.  Raises
    the last such error if every restart is abandoned.
    """
    index.check(ds.L)
    if index.K > ds.n:
        raise ValueError(f"K = {index.K} exceeds the number of individuals ({ds.n})")
    if index.K == 1:
        return _fit_single(ds, index, config)

    ws = _Workspace(ds, index)
    rng = np.random.default_rng(config.rng_seed)
    screened = []
    last_error: Optional[Exception] = None
    n_failed = 0
    for _ in range(config.n_restarts):
        z = rng.integers(index.K, size=ds.n)
        try:
            pi, alpha_cat = ws.maximization(np.eye(index.K)[:, z])
            pi, alpha_cat, trace, converged = _iterate(
                ws, pi, alpha_cat, config.short_run_iterations, config.relative_tolerance, config.parameter_tolerance
            )
        except (EmptyCluster, AllComponentsZero) as err:
            n_failed += 1
            last_error = err
            continue
        screened.append((trace[-1], pi, alpha_cat, trace, converged))

    if not screened:
        raise last_error

    # stable sort keeps restart order among equal log-likelihoods
    screened.sort(key=lambda item: -item[0])
    rho_slack = None
    if len(screened) >= 2:
        rho_slack = (screened[0][0] - screened[1][0]) / ds.n

    for ll, pi, alpha_cat, short_trace, converged in screened:
        if converged:
            return _package(ds, index, ws.params(pi, alpha_cat), short_trace, True,
                            len(screened), n_failed, rho_slack, config.rng_seed)
        try:
            pi, alpha_cat, trace, converged = _iterate(
                ws, pi, alpha_cat, config.max_iterations, config.relative_tolerance, config.parameter_tolerance
            )
        except (EmptyCluster, AllComponentsZero) as err:
            n_failed += 1
            last_error = err
            continue
        full_trace = short_trace + trace[1:]
        return _package(ds, index, ws.params(pi, alpha_cat), full_trace, converged,
                        len(screened), n_failed, rho_slack, config.rng_seed)
    raise last_error


def _fit_single(ds: Dataset, index: ModelIndex, config: EmConfig) -> FittedModel:
    params = m_step(ds, index, np.ones((ds.n, 1)))
    ll = log_likelihood(ds, index, params)
    return _package(ds, index, params, [ll], True, 1, 0, None, config.rng_seed)


def _package(ds, index, params, trace, converged, used, failed, rho_slack, seed) -> FittedModel:
    return FittedModel(
        index=index,
        params=params,
        contrast=-trace[-1] / ds.n,
        dimension=dimension(index, ds.n_states),
        n_obs=ds.n,
        n_variables=ds.L,
        loglik_trace=tuple(trace),
        n_restarts_used=used,
        n_restarts_failed=failed,
        converged=converged,
        rho_slack=rho_slack,
        seed=seed,
    )
