"""Per-threshold regression-tree analysis of sweep output and its CSV/text reports."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .cart import (
    FIXED_SIZES,
    AnalysisDataset,
    CvResult,
    TreeControl,
    cross_validate,
    fit_tree,
    outlier_report,
    prune_sequence,
    size_step,
    variable_importance,
)
from .fileio import atomic_write
from .sweep import PARAM_NAMES, SweepRecord, format_value, logit

# column order of the importance table
IMPORTANCE_COLUMNS = ("rho_A", "rho_I1", "theta_I2", "q_E", "q_A", "q_I1", "q_I2", "q_EA")


def datasets_by_phi(
    records: Sequence[SweepRecord], response: str
) -> tuple[dict[float, AnalysisDataset], dict[float, list[SweepRecord]], int]:
    """Logit-transformed datasets, one per phi, plus total clamp count."""
    if response not in ("cii", "peak"):
        raise ValueError(f"response must be 'cii' or 'peak', got {response!r}")
    n_max = max(r.N for r in records)
    groups: dict[float, list[SweepRecord]] = {}
    for r in records:
        groups.setdefault(r.phi, []).append(r)
    out, clamped = {}, 0
    for phi in sorted(groups):
        rows = groups[phi]
        X = np.array([[getattr(r, n) for n in PARAM_NAMES] for r in rows], dtype=float)
        y, c = logit([getattr(r, response) for r in rows], n_max)
        clamped += c
        out[phi] = AnalysisDataset(X, y, PARAM_NAMES, phi)
    return out, groups, clamped


@dataclass
class PhiModel:
    phi: float
    data: AnalysisDataset
    cv: CvResult | None
    trees: dict  # label -> RegressionTree
    cv_rmse: dict  # label -> (splits, rmse or nan)


def fit_phi_model(
    data: AnalysisDataset, control: TreeControl = TreeControl(), folds: int = 10, seed: int = 0
) -> PhiModel:
    n = len(data)
    if n >= 2:
        cv = cross_validate(data, control, min(folds, n), seed)
        seq = cv.sequence
    else:
        cv = None
        seq = prune_sequence(fit_tree(data, control))
    trees, rmse = {}, {}
    steps = {str(s): size_step(seq, s) for s in FIXED_SIZES}
    if cv is not None:
        steps["cv_1se"] = cv.one_se_step
        steps["cv_min"] = cv.min_step
    for label, k in steps.items():
        trees[label] = seq.subtree(k)
        rmse[label] = (int(seq.n_splits[k]), float(cv.cv_rmse[k]) if cv else math.nan)
    return PhiModel(data.phi, data, cv, trees, rmse)


def cv_table(models: Sequence[PhiModel]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["phi", "selector", "splits", "cv_rmse"])
    for m in models:
        for label in ("cv_1se", "cv_min") + tuple(str(s) for s in FIXED_SIZES):
            if label in m.cv_rmse:
                splits, rmse = m.cv_rmse[label]
                w.writerow([format_value(m.phi), label, splits, "" if math.isnan(rmse) else f"{rmse:.6g}"])
    return buf.getvalue()


def importance_table(models: Sequence[PhiModel]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["phi", "tree", *IMPORTANCE_COLUMNS])
    for m in models:
        for label in tuple(str(s) for s in FIXED_SIZES) + ("cv_1se", "cv_min"):
            if label not in m.trees:
                continue
            imp = variable_importance(m.trees[label])
            w.writerow(
                [format_value(m.phi), label]
                + [f"{imp[c]:.6g}" if c in imp else "" for c in IMPORTANCE_COLUMNS]
            )
    return buf.getvalue()


def outlier_table(
    flagged: dict[float, list[int]], groups: dict[float, list[SweepRecord]],
    data: dict[float, AnalysisDataset],
) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["phi", "combo_index", "replicate", "logit_response"])
    for phi, rows in flagged.items():
        for i in rows:
            r = groups[phi][i]
            w.writerow([format_value(phi), r.combo_index, r.replicate, f"{data[phi].y[i]:.6g}"])
    return buf.getvalue()


def analyze_records(
    records: Sequence[SweepRecord],
    response: str,
    outdir: Path,
    folds: int = 10,
    seed: int = 0,
    outlier_sd: float = 4.0,
    remove_outliers: bool = False,
    control: TreeControl = TreeControl(),
) -> list[Path]:
    """Fit and report models for every phi present; returns the files written."""
    if not records:
        raise ValueError("no sweep records")
    data, groups, clamped = datasets_by_phi(records, response)
    original = dict(data)
    flagged = {phi: outlier_report(d, outlier_sd) for phi, d in data.items()}
    if remove_outliers:
        for phi, rows in flagged.items():
            if rows:
                keep = np.setdiff1d(np.arange(len(data[phi])), rows)
                data[phi] = data[phi].subset(keep)
    models = [fit_phi_model(d, control, folds, seed) for d in data.values()]

    outdir = Path(outdir)
    written = []

    def emit(name: str, text: str) -> None:
        p = outdir / name
        atomic_write(p, text)
        written.append(p)

    emit(f"{response}_cv.csv", cv_table(models))
    emit(f"{response}_importance.csv", importance_table(models))
    emit(f"{response}_outliers.csv", outlier_table(flagged, groups, original))
    for m in models:
        for label, tree in m.trees.items():
            emit(f"{response}_splits_phi{format_value(m.phi)}_{label}.txt", tree.listing())
    summary = {
        "response": response,
        "logit_clamped": clamped,
        "rows": {format_value(m.phi): len(m.data) for m in models},
        "outliers_flagged": {format_value(p): len(v) for p, v in flagged.items()},
        "outliers_removed": remove_outliers,
    }
    emit(f"{response}_summary.json", json.dumps(summary, indent=2) + "\n")
    return written
