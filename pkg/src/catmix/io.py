"""Reading and writing data files, model specs and reports.

File formats use 1-based numbering for variables, clusters and rows, and
every JSON report is written with a fixed key order so that identical runs
produce identical bytes.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence

import jsonschema
import numpy as np

from .core import (
    Case,
    Dataset,
    FittedModel,
    MixtureDistribution,
    MixtureParams,
    ModelIndex,
    contrast,
    dimension,
    validate_dataset,
)
from .errors import InputError, SpecError

FORMAT_VERSION = 1

# ---------------------------------------------------------------------------
# Delimited data
# ---------------------------------------------------------------------------


def read_rows(path, delimiter: str = ",", header: bool = False) -> list:
    """Raw string cells of a delimited file; blank lines are skipped."""
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh, delimiter=delimiter) if any(c.strip() for c in r)]
    except OSError as err:
        raise InputError(f"cannot read {path}: {err.strerror}") from None
    except csv.Error as err:
        raise InputError(f"{path}: {err}") from None
    return rows[1:] if header else rows


def load_dataset(path, case, delimiter: str = ",", header: bool = False, pair_separator: str = "/") -> Dataset:
    """Load an individuals-by-variables table.

    Haploid cells hold one state label, diploid cells a pair such as
    ``A/B``.  Empty cells are rejected: missing values are not supported.
    """
    rows = read_rows(path, delimiter, header)
    return validate_dataset(rows, case, pair_separator=pair_separator, first_row=2 if header else 1)


def format_rows(ds: Dataset, pair_separator: str = "/") -> list:
    """Cells of ``ds`` as strings, using its state labels."""
    rows = []
    for i in range(ds.n):
        if ds.case is Case.HAPLOID:
            rows.append([ds.state_label(l, int(ds.states[i, l])) for l in range(ds.L)])
        else:
            rows.append([
                ds.state_label(l, int(ds.states[i, l, 0])) + pair_separator + ds.state_label(l, int(ds.states[i, l, 1]))
                for l in range(ds.L)
            ])
    return rows


def write_dataset(path, ds: Dataset, delimiter: str = ",", pair_separator: str = "/") -> None:
    write_csv(path, None, format_rows(ds, pair_separator), delimiter=delimiter)


def write_csv(path, header: Optional[Sequence[str]], rows: Iterable[Sequence], delimiter: str = ",") -> None:
    buf = _io.StringIO()
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    if header is not None:
        w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else _cell(v) for v in r])
    Path(path).write_text(buf.getvalue())


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# ---------------------------------------------------------------------------
# JSON helpers
# ---------------------------------------------------------------------------


def _num(x):
    """JSON-safe float: non-finite values become ``None``."""
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def dump_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, allow_nan=False) + "\n")


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as err:
        raise InputError(f"cannot read {path}: {err.strerror}") from None
    except json.JSONDecodeError as err:
        raise SpecError(f"{path}: not valid JSON ({err})") from None


def variables_text(index: ModelIndex) -> str:
    """``S`` as space-separated 1-based variable numbers."""
    return " ".join(str(l + 1) for l in index.variables)


def parse_variables(text: str, L: Optional[int] = None) -> frozenset:
    """Inverse of :func:`variables_text`; commas are accepted as separators too."""
    parts = text.replace(",", " ").split()
    try:
        S = [int(p) for p in parts]
    except ValueError:
        raise InputError(f"cannot parse variable list {text!r}") from None
    if any(s < 1 or (L is not None and s > L) for s in S):
        raise InputError(f"variable numbers must lie in 1..{L if L is not None else 'L'}: {text!r}")
    return frozenset(s - 1 for s in S)


# ---------------------------------------------------------------------------
# Model spec (true or fitted mixture)
# ---------------------------------------------------------------------------

MODEL_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "mixture model",
    "description": (
        "A mixture of K clusters over L categorical variables.  Variables are "
        "listed in column order; a clustering variable gives one frequency row "
        "per cluster, a non-clustering variable one shared frequency vector."
    ),
    "type": "object",
    "required": ["case", "K", "pi", "variables"],
    "properties": {
        "case": {"enum": ["haploid", "diploid"]},
        "K": {"type": "integer", "minimum": 1},
        "pi": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "variables": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["clustering", "frequencies"],
                "properties": {
                    "clustering": {"type": "boolean"},
                    "frequencies": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "anyOf": [
                                {"type": "number", "minimum": 0},
                                {
                                    "type": "array",
                                    "minItems": 2,
                                    "items": {"type": "number", "minimum": 0},
                                },
                            ]
                        },
                    },
                    "labels": {"type": "array", "items": {"type": "string"}},
                },
                "additionalProperties": False,
            },
        },
    },
}


def _schema_error(err: jsonschema.ValidationError, source: str) -> SpecError:
    where = "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
    rule = "/".join(str(p) for p in err.absolute_schema_path)
    return SpecError(f"{source}: {where}: {err.message} (schema rule: {rule})")


def validate_model_json(obj, source: str = "spec") -> None:
    validator = jsonschema.Draft202012Validator(MODEL_SCHEMA)
    err = jsonschema.exceptions.best_match(validator.iter_errors(obj))
    if err is not None:
        raise _schema_error(err, source)


def model_to_json(dist: MixtureDistribution, labels: Optional[Sequence[Sequence[str]]] = None) -> dict:
    p = dist.params
    variables = []
    for l in range(dist.L):
        entry = {"clustering": l in dist.index.S}
        if l in p.alpha:
            entry["frequencies"] = [[float(x) for x in row] for row in p.alpha[l]]
        else:
            entry["frequencies"] = [float(x) for x in p.beta[l]]
        if labels is not None:
            entry["labels"] = list(labels[l])
        variables.append(entry)
    return {
        "case": dist.case.value,
        "K": dist.index.K,
        "pi": [float(x) for x in p.pi],
        "variables": variables,
    }


def model_from_json(obj, source: str = "spec", cls=MixtureDistribution):
    """Build a distribution (``cls``) from a JSON object, citing the schema on error.

    Returns ``(distribution, labels)`` where ``labels`` is ``None`` unless
    every variable lists its state labels.
    """
    validate_model_json(obj, source)
    K = obj["K"]
    if len(obj["pi"]) != K:
        raise SpecError(f"{source}: $.pi: expected {K} weights, got {len(obj['pi'])} (schema rule: K)")
    alpha, beta, n_states, labels = {}, {}, [], []
    for l, var in enumerate(obj["variables"]):
        where = f"{source}: $.variables[{l}]"
        freq = var["frequencies"]
        if var["clustering"]:
            if not all(isinstance(row, list) for row in freq) or len(freq) != K:
                raise SpecError(f"{where}.frequencies: a clustering variable needs {K} rows (schema rule: K)")
            widths = {len(row) for row in freq}
            if len(widths) != 1:
                raise SpecError(f"{where}.frequencies: rows differ in length")
            alpha[l] = freq
            a = widths.pop()
        else:
            if any(isinstance(x, list) for x in freq) or len(freq) < 2:
                raise SpecError(f"{where}.frequencies: a non-clustering variable needs one vector of >= 2 numbers")
            beta[l] = freq
            a = len(freq)
        n_states.append(a)
        if "labels" in var:
            if len(var["labels"]) != a or len(set(var["labels"])) != a:
                raise SpecError(f"{where}.labels: expected {a} distinct labels")
            labels.append(tuple(var["labels"]))
    S = frozenset(alpha)
    try:
        index = ModelIndex(K, S)
        dist = cls(Case(obj["case"]), tuple(n_states), index, MixtureParams(obj["pi"], alpha, beta))
    except ValueError as err:
        raise SpecError(f"{source}: {err}") from None
    return dist, (tuple(labels) if len(labels) == len(n_states) else None)


def load_model(path, cls=MixtureDistribution):
    return model_from_json(load_json(path), str(path), cls)


# ---------------------------------------------------------------------------
# Fit reports
# ---------------------------------------------------------------------------


def fit_report(fitted: FittedModel, ds: Dataset) -> dict:
    """JSON-ready description of a fitted model, reloadable by :func:`fit_from_report`."""
    labels = ds.labels if ds.labels is not None else tuple(
        tuple(str(j + 1) for j in range(a)) for a in ds.n_states
    )
    out = {
        "format": "catmix-fit",
        "version": FORMAT_VERSION,
        "case": ds.case.value,
        "n": ds.n,
        "L": ds.L,
        "K": fitted.index.K,
        "S": [l + 1 for l in fitted.index.variables],
        "dimension": fitted.dimension,
        "contrast": _num(fitted.contrast),
        "log_likelihood": _num(fitted.log_likelihood),
        "converged": fitted.converged,
        "iterations": max(len(fitted.loglik_trace) - 1, 0),
        "restarts_used": fitted.n_restarts_used,
        "restarts_failed": fitted.n_restarts_failed,
        "rho_slack": _num(fitted.rho_slack),
        "seed": fitted.seed,
        "loglik_trace": [_num(x) for x in fitted.loglik_trace],
        "model": None,
    }
    if fitted.params is not None:
        out["model"] = model_to_json(MixtureDistribution.from_fit(fitted, ds), labels)
    return out


def fit_from_report(obj, ds: Dataset, source: str = "report") -> FittedModel:
    """Rebuild a fitted model on ``ds`` and re-score its contrast on that data."""
    if not isinstance(obj, dict) or obj.get("format") != "catmix-fit":
        raise SpecError(f"{source}: not a fit report")
    if obj.get("model") is None:
        raise SpecError(f"{source}: the report holds no fitted parameters")
    dist, labels = model_from_json(obj["model"], f"{source}: model")
    if dist.case is not ds.case or dist.n_states != ds.n_states:
        raise SpecError(f"{source}: model space does not match the data")
    if labels is not None and ds.labels is not None and tuple(labels) != tuple(ds.labels):
        raise SpecError(f"{source}: state labels do not match the data")
    return FittedModel(
        index=dist.index,
        params=dist.params,
        contrast=contrast(ds, dist.index, dist.params),
        dimension=dimension(dist.index, ds.n_states),
        n_obs=ds.n,
        n_variables=ds.L,
        converged=bool(obj.get("converged", False)),
        seed=obj.get("seed"),
    )


# ---------------------------------------------------------------------------
# Pools, calibration and labels
# ---------------------------------------------------------------------------

POOL_HEADER = ("K", "S", "dimension", "contrast", "n")


def write_pool(path, pool: Iterable[FittedModel]) -> None:
    rows = [
        (f.index.K, variables_text(f.index), f.dimension, _num(f.contrast), f.n_obs)
        for f in pool
    ]
    write_csv(path, POOL_HEADER, rows)


def read_pool(path) -> list:
    """Pool summary as parameter-free fitted models (enough for calibration)."""
    rows = read_rows(path, ",", header=False)
    if not rows or tuple(c.strip() for c in rows[0]) != POOL_HEADER:
        raise InputError(f"{path}: expected header {','.join(POOL_HEADER)}")
    models = []
    for i, r in enumerate(rows[1:], start=2):
        if len(r) != len(POOL_HEADER):
            raise InputError(f"{path}: row {i}: expected {len(POOL_HEADER)} columns, got {len(r)}")
        try:
            K, dim, n = int(r[0]), int(r[2]), int(r[4])
            c = float(r[3]) if r[3].strip() else math.inf
            index = ModelIndex(K, parse_variables(r[1]))
        except (ValueError, InputError) as err:
            raise InputError(f"{path}: row {i}: {err}") from None
        models.append(FittedModel(index=index, params=None, contrast=c, dimension=dim, n_obs=n, n_variables=0))
    if not models:
        raise InputError(f"{path}: empty pool")
    return models


def model_summary(f: Optional[FittedModel]) -> Optional[dict]:
    if f is None:
        return None
    return {
        "K": f.index.K,
        "S": [l + 1 for l in f.index.variables],
        "dimension": f.dimension,
        "contrast": _num(f.contrast),
    }


def calibration_report(cal, width: Optional[float]) -> dict:
    """Grid, dimension path, jump location and final model (grid positions 1-based)."""
    return {
        "method": cal.method,
        "window_h": cal.window_h,
        "window_width": _num(width),
        "lambda_grid": [float(x) for x in cal.lambda_grid],
        "path": [
            {"lambda": float(lam), "K": m.K, "S": [l + 1 for l in m.variables], "dimension": int(d)}
            for lam, m, d in cal.selected_per_lambda
        ],
        "i_init": None if cal.i_init is None else cal.i_init + 1,
        "i_end": None if cal.i_end is None else cal.i_end + 1,
        "lambda_min_hat": float(cal.lambda_min_hat),
        "final_lambda": float(cal.final_lambda),
        "slope_regression_estimate": _num(cal.slope_estimate),
        "slope_regression_subpool": "lowest contrast per dimension, larger half of dimensions",
        "notes": list(cal.notes),
        "final_model": model_summary(cal.final_model),
    }


def write_plot_data(out_dir, cal, pool: Iterable[FittedModel]) -> None:
    """CSV files for the dimension-path and contrast-versus-dimension plots."""
    out_dir = Path(out_dir)
    write_csv(
        out_dir / "dimension_path.csv",
        ("lambda", "dimension", "K", "S"),
        [(float(lam), int(d), m.K, variables_text(m)) for lam, m, d in cal.selected_per_lambda],
    )
    write_csv(
        out_dir / "contrast_vs_dim.csv",
        ("D_over_n", "contrast", "dimension", "K", "S"),
        [
            (f.dimension / f.n_obs, f.contrast, f.dimension, f.index.K, variables_text(f.index))
            for f in pool
            if not f.failed
        ],
    )


def write_labels(path, labels) -> None:
    """MAP labels, 1-based, one row per individual (0 marks an unclassifiable row)."""
    write_csv(path, ("row", "cluster"), [(i + 1, int(z) + 1) for i, z in enumerate(labels)])
