"""Classification and variable-selection metrics aggregated over replications.

TE is the test misclassification rate; CZ / IZ count coefficients that are
exactly zero where the Bayes rule has a zero / a nonzero; MS is the number
of variables with a nonzero coefficient; CM flags an exact match of the
selected variable set with the relevant one.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import CoefModel, Dataset, error_rate
from .simgen import GroundTruth


@dataclass(frozen=True, eq=False)
class ReplicationRecord:
    test_error: float
    cz: int
    iz: int
    ms: int
    cm: bool
    selected: np.ndarray


@dataclass(frozen=True, eq=False)
class SelectionReport:
    test_error_mean: float
    test_error_sd: float
    test_error_se: float
    cz_mean: float
    iz_mean: float
    ms_mean: float
    cm_count: int
    selection_frequency: np.ndarray
    n_reps: int


def evaluate_model(model: CoefModel, test: Dataset, truth: GroundTruth) -> ReplicationRecord:
    if truth.true_zero_pattern.shape != model.W.shape:
        raise ValueError(f"model shape {model.W.shape} does not match truth "
                         f"{truth.true_zero_pattern.shape}")
    zero = model.W == 0.0
    cz = int(np.sum(zero & truth.true_zero_pattern))
    iz = int(np.sum(zero & ~truth.true_zero_pattern))
    selected = ~zero.all(axis=0)
    chosen = frozenset(int(j) for j in np.flatnonzero(selected))
    return ReplicationRecord(error_rate(model, test), cz, iz, int(selected.sum()),
                             chosen == truth.relevant_vars, selected)


def aggregate(records: Sequence[ReplicationRecord]) -> SelectionReport:
    if not records:
        raise ValueError("need at least one record")
    te = np.array([r.test_error for r in records])
    n = len(records)
    sd = float(np.std(te, ddof=1)) if n > 1 else 0.0
    return SelectionReport(
        test_error_mean=float(te.mean()),
        test_error_sd=sd,
        test_error_se=sd / np.sqrt(n),
        cz_mean=float(np.mean([r.cz for r in records])),
        iz_mean=float(np.mean([r.iz for r in records])),
        ms_mean=float(np.mean([r.ms for r in records])),
        cm_count=int(sum(r.cm for r in records)),
        selection_frequency=np.sum([r.selected for r in records], axis=0).astype(int),
        n_reps=n,
    )


SUMMARY_COLUMNS = ["method", "TE", "TE_sd", "TE_se", "CZ", "IZ", "MS", "CM", "reps"]


def write_summary_csv(reports: Mapping[str, SelectionReport], path,
                      bayes: tuple[float, float, GroundTruth] | None = None):
    """One row per method plus an optional Bayes row ``(error, se, truth)``."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for name, r in reports.items():
            w.writerow([name, f"{r.test_error_mean:.6f}", f"{r.test_error_sd:.6f}",
                        f"{r.test_error_se:.6f}", f"{r.cz_mean:.4f}", f"{r.iz_mean:.4f}",
                        f"{r.ms_mean:.4f}", r.cm_count, r.n_reps])
        if bayes is not None:
            err, se, truth = bayes
            w.writerow(["Bayes", f"{err:.6f}", "", f"{se:.6f}",
                        int(truth.true_zero_pattern.sum()), 0, len(truth.relevant_vars), "", ""])


def read_summary_csv(path) -> dict[str, dict[str, float | None]]:
    out = {}
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            name = row.pop("method")
            out[name] = {k: (float(v) if v != "" else None) for k, v in row.items()}
    return out


def write_frequency_csv(reports: Mapping[str, SelectionReport], names: Sequence[str], path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", *names])
        for name, r in reports.items():
            w.writerow([name, *(int(v) for v in r.selection_frequency)])


def read_frequency_csv(path) -> tuple[list[str], dict[str, np.ndarray]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    names = rows[0][1:]
    return names, {r[0]: np.array([int(v) for v in r[1:]]) for r in rows[1:]}
