"""Simulation from a known mixture and the two benchmark experiments.

* consistency: how often each criterion recovers the number of clusters and
  the strongly differentiated variables as ``n`` grows;
* oracle: Monte Carlo estimate of the Hellinger risk of every candidate
  model, compared with the risk of the model each criterion selects.

All randomness is derived from one root seed, keyed by ``(n, replicate)``,
so results do not depend on how replicates are spread over workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .core import (
    Case,
    Dataset,
    MixtureDistribution,
    MixtureParams,
    ModelIndex,
    model_universe,
    space_size,
)
from .explorer import ExplorerConfig, ModelPool, exhaustive_pool
from .metrics import MAX_EXACT_POINTS, hellinger_sq_mc, hellinger_sq_probs
from .pipeline import run_selection


class TrueModelSpec(MixtureDistribution):
    """A data-generating mixture.

    Besides the usual parameter checks, every variable of ``S`` must be a
    genuine clustering variable: at least two clusters differ on it.
    """

    def __post_init__(self):
        super().__post_init__()
        for l, a in self.params.alpha.items():
            if np.allclose(a, a[0], rtol=0.0, atol=1e-12):
                raise ValueError(
                    f"variable {l + 1} is in S but has identical frequencies in every cluster"
                )


def make_truth(case, K: int, n_states: Sequence[int], strengths: Sequence[float],
               pi=None, seed: int = 0) -> TrueModelSpec:
    """Mixture whose clusters differ on each variable by a given strength.

    For a variable of strength ``s > 0`` cluster ``k`` puts frequency
    ``(1 - s) / A + s`` on its own peak state (a seeded permutation assigns
    peaks) and ``(1 - s) / A`` elsewhere.  Strength 0 gives a uniform,
    non-clustering variable.
    """
    n_states = tuple(int(a) for a in n_states)
    if len(strengths) != len(n_states):
        raise ValueError("one strength per variable")
    rng = np.random.default_rng(seed)
    S = frozenset(l for l, s in enumerate(strengths) if s > 0)
    index = ModelIndex(K, S) if K > 1 else ModelIndex(1)
    alpha, beta = {}, {}
    for l, (a, s) in enumerate(zip(n_states, strengths)):
        uniform = np.full(a, 1.0 / a)
        if l in index.S:
            peaks = rng.permutation(a)
            rows = np.tile((1.0 - s) * uniform, (K, 1))
            rows[np.arange(K), peaks[np.arange(K) % a]] += s
            alpha[l] = rows
        else:
            beta[l] = uniform
    pi = np.full(K, 1.0 / K) if pi is None else np.asarray(pi, dtype=float)
    return TrueModelSpec(Case(case), n_states, index, MixtureParams(pi, alpha, beta))


def consistency_truth() -> TrueModelSpec:
    """Three equal clusters over six 4-state loci: two strong, two weak, two null."""
    return make_truth(Case.DIPLOID, 3, (4,) * 6, (0.6, 0.6, 0.15, 0.15, 0.0, 0.0), seed=2024)


def oracle_truth() -> TrueModelSpec:
    """Three equal clusters over six 3-state loci; loci 4 and 5 weak, locus 6 null."""
    return make_truth(Case.DIPLOID, 3, (3,) * 6, (0.5, 0.5, 0.5, 0.2, 0.08, 0.0), seed=2024)


PRESETS = {"consistency": consistency_truth, "oracle": oracle_truth}


def simulate_labeled(truth: MixtureDistribution, n: int, seed: int) -> tuple:
    """Dataset of ``n`` draws and the true cluster of each row."""
    states, z = truth.sample(n, np.random.default_rng(seed))
    return Dataset(truth.case, states, truth.n_states), z


def simulate(truth: MixtureDistribution, n: int, seed: int) -> Dataset:
    return simulate_labeled(truth, n, seed)[0]


def task_seeds(root: int, n: int, replicate: int) -> tuple:
    """(data seed, fit seed) for one replicate."""
    ss = np.random.SeedSequence(entropy=int(root), spawn_key=(int(n), int(replicate)))
    data, fits = ss.generate_state(2, dtype=np.uint32)
    return int(data), int(fits)


def _run_tasks(func, tasks, n_jobs: int):
    if n_jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            return list(ex.map(func, tasks))
    return [func(t) for t in tasks]


def _variables_text(index: ModelIndex) -> str:
    return " ".join(str(l + 1) for l in index.variables)


# ---------------------------------------------------------------------------
# Consistency experiment
# ---------------------------------------------------------------------------


@dataclass
class ConsistencyReport:
    rows: list
    summary: list
    K_true: int
    required: tuple

    def count(self, n: int, criterion: str, what: str) -> int:
        for s in self.summary:
            if s["n"] == n and s["criterion"] == criterion:
                return s[what]
        raise KeyError((n, criterion))


def _consistency_task(args) -> list:
    truth, n, rep, seed, config, width, criteria, required = args
    data_seed, fit_seed = task_seeds(seed, n, rep)
    ds = simulate(truth, n, data_seed)
    cfg = replace(config, em=config.em.with_seed(fit_seed), n_jobs=1)
    outcome = run_selection(ds, cfg, width=width)
    rows = []
    for crit in criteria:
        sel = outcome.selected(crit)
        row = {"n": n, "criterion": crit, "replicate": rep, "data_seed": data_seed}
        if sel is None:
            row.update(K=None, S="", dimension=None, K_correct=False, S_contains_required=False, failed=True)
        else:
            row.update(
                K=sel.index.K,
                S=_variables_text(sel.index),
                dimension=sel.dimension,
                K_correct=sel.index.K == truth.index.K,
                S_contains_required=set(required) <= set(sel.index.S),
                failed=False,
            )
        if crit == "slope" and outcome.calibration is not None:
            row["lambda_min_hat"] = outcome.calibration.lambda_min_hat
        rows.append(row)
    return rows


def consistency_experiment(
    truth: TrueModelSpec,
    n_values: Sequence[int],
    n_replicates: int,
    criteria: Sequence[str] = ("aic", "bic", "slope"),
    seed: int = 0,
    config: ExplorerConfig = ExplorerConfig(),
    required: Optional[Sequence[int]] = None,
    width: float = 0.15,
    n_jobs: int = 1,
) -> ConsistencyReport:
    """Selection frequencies of the true ``K`` and of ``S`` containing ``required``.

    ``required`` holds 0-based variables and defaults to the true ``S``.
    """
    required = tuple(sorted(truth.index.S if required is None else required))
    tasks = [
        (truth, int(n), rep, seed, config, width, tuple(criteria), required)
        for n in n_values
        for rep in range(n_replicates)
    ]
    rows = [row for chunk in _run_tasks(_consistency_task, tasks, n_jobs) for row in chunk]
    summary = []
    for n in n_values:
        for crit in criteria:
            sub = [r for r in rows if r["n"] == n and r["criterion"] == crit]
            ok = [r for r in sub if not r["failed"]]
            k_hits = sum(r["K_correct"] for r in ok)
            s_hits = sum(r["S_contains_required"] for r in ok)
            summary.append({
                "n": int(n),
                "criterion": crit,
                "replicates": len(sub),
                "failures": len(sub) - len(ok),
                "K_correct": k_hits,
                "S_contains_required": s_hits,
                "prop_K_correct": k_hits / len(sub) if sub else math.nan,
                "prop_S_contains_required": s_hits / len(sub) if sub else math.nan,
            })
    return ConsistencyReport(rows, summary, truth.index.K, required)


# ---------------------------------------------------------------------------
# Oracle experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RiskEstimate:
    """Monte Carlo estimate of ``E[h^2(P0, P_hat)]`` for one model."""

    mean: float
    se: float
    n_replicates: int
    values: tuple
    n_failed: int = 0

    @classmethod
    def from_values(cls, values, n_failed: int = 0) -> "RiskEstimate":
        v = np.asarray(values, dtype=float)
        if v.size == 0:
            return cls(math.nan, math.nan, 0, (), n_failed)
        se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
        return cls(float(v.mean()), se, int(v.size), tuple(v.tolist()), n_failed)


@dataclass
class OracleReport:
    oracle: ModelIndex
    risks: dict
    rows: list = field(default_factory=list)
    summary: list = field(default_factory=list)

    def mean_risk(self, criterion: str) -> float:
        for s in self.summary:
            if s["criterion"] == criterion:
                return s["mean_h2"]
        raise KeyError(criterion)


def _risks_on(pool: ModelPool, truth: TrueModelSpec, ds: Dataset, hellinger_seed: int) -> dict:
    exact = space_size(truth.case, truth.n_states) <= MAX_EXACT_POINTS
    truth_probs = truth.space_probabilities() if exact else None
    out = {}
    for f in pool:
        if f.failed:
            out[f.index] = None
            continue
        q = MixtureDistribution.from_fit(f, ds)
        if exact:
            out[f.index] = hellinger_sq_probs(truth_probs, q)
        else:
            out[f.index] = hellinger_sq_mc(truth, q, seed=hellinger_seed).estimate
    return out


def _oracle_task(args) -> dict:
    truth, n, rep, seed, config, width, candidates, with_selection = args
    data_seed, fit_seed = task_seeds(seed, n, rep)
    ds = simulate(truth, n, data_seed)
    cfg = replace(config, em=config.em.with_seed(fit_seed), n_jobs=1)
    if candidates is None:
        pool = exhaustive_pool(ds, cfg.K_max, cfg)
    else:
        pool = ModelPool(ds, cfg.em)
        pool.ensure(candidates, "candidate")
    risks = _risks_on(pool, truth, ds, data_seed)
    selections = {}
    if with_selection:
        outcome = run_selection(ds, cfg, width=width, pool=pool)
        for crit, sel in outcome.selections.items():
            selections[crit] = sel.index if sel is not None else None
    return {"replicate": rep, "data_seed": data_seed, "risks": risks, "selections": selections}


def _risk_table(results: list) -> dict:
    table = {}
    indices = {m for r in results for m in r["risks"]}
    for m in sorted(indices, key=lambda m: m.sort_key):
        vals = [r["risks"].get(m) for r in results]
        ok = [v for v in vals if v is not None]
        table[m] = RiskEstimate.from_values(ok, n_failed=len(vals) - len(ok))
    return table


def _argmin_risk(table: dict) -> ModelIndex:
    usable = [(r.mean, m) for m, r in table.items() if r.n_replicates > 0]
    return min(usable, key=lambda t: (t[0], t[1].sort_key))[1]


def estimate_oracle(
    truth: TrueModelSpec,
    n: int,
    n_replicates: int,
    candidate_models: Optional[Sequence[ModelIndex]] = None,
    seed: int = 0,
    config: ExplorerConfig = ExplorerConfig(),
    n_jobs: int = 1,
) -> tuple:
    """Model minimizing the Monte Carlo Hellinger risk, and the full risk table.

    Candidates default to every model with ``K <= config.K_max``.
    """
    if candidate_models is not None:
        candidate_models = list(candidate_models)
        if not candidate_models:
            raise ValueError("no candidate models")
    tasks = [(truth, n, rep, seed, config, 0.15, candidate_models, False) for rep in range(n_replicates)]
    results = _run_tasks(_oracle_task, tasks, n_jobs)
    table = _risk_table(results)
    return _argmin_risk(table), table


def oracle_experiment(
    truth: TrueModelSpec,
    n: int,
    n_replicates: int,
    seed: int = 0,
    config: ExplorerConfig = ExplorerConfig(),
    criteria: Sequence[str] = ("aic", "bic", "slope"),
    width: float = 0.15,
    n_jobs: int = 1,
) -> OracleReport:
    """Oracle estimation plus the Hellinger loss of each criterion's selection.

    Every replicate fits the exhaustive pool once; the same fits serve the
    risk table and the selections.  Besides the loss of the selected model,
    rows report its ratio to and difference from the loss of the estimated
    oracle model on the same replicate (the ratio is unstable when that
    loss is tiny).
    """
    tasks = [(truth, n, rep, seed, config, width, None, True) for rep in range(n_replicates)]
    results = _run_tasks(_oracle_task, tasks, n_jobs)
    table = _risk_table(results)
    oracle = _argmin_risk(table)
    rows = []
    for r in results:
        ref = r["risks"].get(oracle)
        for crit in criteria:
            sel = r["selections"].get(crit)
            h2 = r["risks"].get(sel) if sel is not None else None
            rows.append({
                "n": n,
                "criterion": crit,
                "replicate": r["replicate"],
                "K": sel.K if sel is not None else None,
                "S": _variables_text(sel) if sel is not None else "",
                "h2": h2,
                "h2_oracle_model": ref,
                "ratio_to_oracle": h2 / ref if (h2 is not None and ref) else None,
                "diff_to_oracle": h2 - ref if (h2 is not None and ref is not None) else None,
                "is_oracle": sel == oracle,
            })
    summary = []
    for crit in criteria:
        vals = [row["h2"] for row in rows if row["criterion"] == crit and row["h2"] is not None]
        est = RiskEstimate.from_values(vals)
        summary.append({
            "criterion": crit,
            "mean_h2": est.mean,
            "se_h2": est.se,
            "replicates": est.n_replicates,
            "oracle_selected": sum(row["is_oracle"] for row in rows if row["criterion"] == crit),
        })
    return OracleReport(oracle, table, rows, summary)


def default_candidates(K_max: int, L: int) -> list:
    return model_universe(K_max, L)
