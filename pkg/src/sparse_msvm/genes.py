"""Expression-matrix pipeline: standardize, rank genes, screen, fit with LOOCV tuning."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import CoefModel, CsvFormatError, Dataset, PenaltyKind, PenaltySpec, error_rate
from .l2base import EPS_ZERO, L2FitConfig
from .select import LambdaGrid, TuneResult, fit_adaptive_pipeline, tune_loocv

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ExpressionMatrix:
    """Genes as rows, samples as columns."""
    values: np.ndarray
    gene_ids: tuple[str, ...]
    sample_ids: tuple[str, ...]
    labels: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("expression values must be a genes x samples matrix")
        if not np.all(np.isfinite(v)):
            raise ValueError("expression values must be finite")
        genes = tuple(str(g) for g in self.gene_ids)
        samples = tuple(str(s) for s in self.sample_ids)
        if len(genes) != v.shape[0] or len(samples) != v.shape[1]:
            raise ValueError(f"ids do not match matrix shape {v.shape}")
        if len(set(genes)) != len(genes):
            raise ValueError("gene ids must be unique")
        labels = None
        if self.labels is not None:
            labels = np.array(self.labels, dtype=int)
            if labels.shape != (v.shape[1],) or np.any(labels < 1):
                raise ValueError("need one label >= 1 per sample")
            labels.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "gene_ids", genes)
        object.__setattr__(self, "sample_ids", samples)
        object.__setattr__(self, "labels", labels)

    @property
    def n_genes(self) -> int:
        return self.values.shape[0]

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]

    def take_genes(self, rows) -> "ExpressionMatrix":
        rows = np.asarray(rows, dtype=int)
        return ExpressionMatrix(self.values[rows], tuple(self.gene_ids[i] for i in rows),
                                self.sample_ids, self.labels)

    def gene_rows(self, gene_ids) -> np.ndarray:
        index = {g: i for i, g in enumerate(self.gene_ids)}
        missing = [g for g in gene_ids if g not in index]
        if missing:
            raise ValueError(f"genes missing: {', '.join(missing[:5])}")
        return np.array([index[g] for g in gene_ids], dtype=int)


# --- CSV -------------------------------------------------------------------

def read_expression_csv(path, labels_path=None) -> ExpressionMatrix:
    """Header ``gene,<sample ids...>``, then one row per gene.

    The optional label file has header ``sample,label`` and must cover every
    sample.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) < 2:
        raise CsvFormatError(f"{path}: expected header 'gene,<sample ids>'")
    samples = [s.strip() for s in rows[0][1:]]
    genes, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(samples) + 1:
            raise CsvFormatError(f"{path}: line {lineno}: expected {len(samples) + 1} fields, got {len(row)}")
        try:
            values.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise CsvFormatError(f"{path}: line {lineno}: {exc}") from None
        genes.append(row[0].strip())
    labels = None
    if labels_path is not None:
        labels = read_sample_labels(labels_path, samples)
    try:
        return ExpressionMatrix(np.array(values).reshape(len(genes), len(samples)), genes, samples, labels)
    except ValueError as exc:
        raise CsvFormatError(f"{path}: {exc}") from None


def read_sample_labels(path, samples) -> np.ndarray:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0][:2]] != ["sample", "label"]:
        raise CsvFormatError(f"{path}: expected header 'sample,label'")
    found = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            found[row[0].strip()] = int(row[1])
        except (ValueError, IndexError):
            raise CsvFormatError(f"{path}: line {lineno}: bad label row {row!r}") from None
    missing = [s for s in samples if s not in found]
    if missing:
        raise CsvFormatError(f"{path}: no label for samples {', '.join(missing[:5])}")
    return np.array([found[s] for s in samples])


def write_expression_csv(expr: ExpressionMatrix, path, labels_path=None):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gene", *expr.sample_ids])
        for g, row in zip(expr.gene_ids, expr.values):
            w.writerow([g, *(repr(float(v)) for v in row)])
    if labels_path is not None and expr.labels is not None:
        with Path(labels_path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample", "label"])
            w.writerows(zip(expr.sample_ids, expr.labels.tolist()))


# --- preprocessing ---------------------------------------------------------

@dataclass(frozen=True)
class Standardization:
    center: np.ndarray
    scale: np.ndarray
    dropped: tuple[str, ...]     # constant genes removed from both matrices


def standardize(train: ExpressionMatrix, test: ExpressionMatrix | None = None):
    """Center and scale every gene with training mean and sample sd (n-1).

    Genes that are constant on the training samples are dropped from both
    matrices. Returns ``(train', test', Standardization)``.
    """
    if train.n_samples < 2:
        raise ValueError("standardizing needs at least two training samples")
    center = train.values.mean(axis=1)
    scale = train.values.std(axis=1, ddof=1)
    # rounding can leave a constant gene with a tiny nonzero sd
    keep = scale > 1e-12 * np.maximum(1.0, np.abs(center))
    dropped = tuple(g for g, k in zip(train.gene_ids, keep) if not k)
    if dropped:
        log.info("dropping %d constant genes", len(dropped))
    rows = np.flatnonzero(keep)
    c, s = center[rows, None], scale[rows, None]
    out_train = ExpressionMatrix((train.values[rows] - c) / s, tuple(train.gene_ids[i] for i in rows),
                                 train.sample_ids, train.labels)
    out_test = None
    if test is not None:
        t_rows = test.gene_rows(out_train.gene_ids)
        out_test = ExpressionMatrix((test.values[t_rows] - c) / s, out_train.gene_ids,
                                    test.sample_ids, test.labels)
    return out_train, out_test, Standardization(center[rows], scale[rows], dropped)


def relevance(train: ExpressionMatrix) -> np.ndarray:
    """Between-class over within-class sum of squares for every gene.

    Zero within-class spread gives ``inf`` (``0`` if the gene is constant).
    """
    if train.labels is None:
        raise ValueError("relevance needs labelled samples")
    y = train.labels
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("relevance needs at least two classes")
    X = train.values
    overall = X.mean(axis=1, keepdims=True)
    between = np.zeros(train.n_genes)
    within = np.zeros(train.n_genes)
    for k in classes:
        Xk = X[:, y == k]
        mk = Xk.mean(axis=1, keepdims=True)
        between += Xk.shape[1] * ((mk - overall) ** 2).ravel()
        within += ((Xk - mk) ** 2).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = between / within
    r[(within == 0) & (between > 0)] = np.inf
    r[(within == 0) & (between == 0)] = 0.0
    return r


@dataclass(frozen=True, eq=False)
class Screen:
    indices: np.ndarray          # top group by decreasing score, then bottom group by increasing score
    groups: tuple[str, ...]      # "top" or "bottom" per index

    def group_of(self) -> dict[int, str]:
        return dict(zip(self.indices.tolist(), self.groups))


def screen(scores, top: int, bottom: int) -> Screen:
    """The ``top`` highest and ``bottom`` lowest scores; ties keep gene order."""
    scores = np.asarray(scores, dtype=float)
    if top < 0 or bottom < 0:
        raise ValueError("top and bottom must be >= 0")
    if top + bottom > scores.size:
        raise ValueError(f"top + bottom = {top + bottom} exceeds {scores.size} genes")
    order_desc = np.argsort(-scores, kind="stable")
    order_asc = np.argsort(scores, kind="stable")
    chosen_top = order_desc[:top]
    taken = set(chosen_top.tolist())
    chosen_bottom = [i for i in order_asc if i not in taken][:bottom]
    idx = np.r_[chosen_top, np.asarray(chosen_bottom, dtype=int)].astype(int)
    return Screen(idx, ("top",) * top + ("bottom",) * bottom)


def to_dataset(expr: ExpressionMatrix, k_classes: int | None = None, rows=None) -> Dataset:
    """Samples become rows, the chosen genes become columns."""
    if expr.labels is None:
        raise ValueError("to_dataset needs labelled samples")
    rows = np.arange(expr.n_genes) if rows is None else np.asarray(rows, dtype=int)
    K = int(expr.labels.max()) if k_classes is None else k_classes
    return Dataset(expr.values[rows].T, expr.labels, K, tuple(expr.gene_ids[i] for i in rows))


# --- pipeline --------------------------------------------------------------

@dataclass(eq=False)
class GeneFit:
    kind: PenaltyKind
    tuned: TuneResult
    selected: list[str]
    selected_groups: dict[str, int]
    test_error: float | None


@dataclass(eq=False)
class GenePipelineResult:
    standardization: Standardization
    scores: np.ndarray               # relevance of every kept gene
    gene_ids: tuple[str, ...]        # kept genes, same order as scores
    screen: Screen
    fits: dict[PenaltyKind, GeneFit] = field(default_factory=dict)

    @property
    def screened_ids(self) -> list[str]:
        return [self.gene_ids[i] for i in self.screen.indices]


def run_gene_pipeline(train: ExpressionMatrix, test: ExpressionMatrix | None,
                      methods, top: int = 100, bottom: int = 100,
                      grid: LambdaGrid = LambdaGrid(), l2_config: L2FitConfig = L2FitConfig(),
                      eps_zero: float = EPS_ZERO, k_classes: int | None = None) -> GenePipelineResult:
    """Standardize, rank, screen, then tune every method by leave-one-out.

    Adaptive methods run both of their tuning stages by leave-one-out.
    """
    std_train, std_test, info = standardize(train, test)
    scores = relevance(std_train)
    scr = screen(scores, top, bottom)
    K = int(train.labels.max()) if k_classes is None else k_classes
    data = to_dataset(std_train, K, scr.indices)
    test_data = None
    if std_test is not None and std_test.labels is not None:
        test_data = to_dataset(std_test, K, scr.indices)
    result = GenePipelineResult(info, scores, std_train.gene_ids, scr)
    group = dict(zip(data.names, scr.groups))
    l2_stage = None
    for m in methods:
        m = PenaltyKind(m)
        if m.is_adaptive:
            if l2_stage is None:
                l2_stage = tune_loocv(data, PenaltySpec(PenaltyKind.L2), grid, l2_config)
            tuned = fit_adaptive_pipeline(data, None, m, grid, l2_config, eps_zero, l2_result=l2_stage)
        else:
            tuned = tune_loocv(data, PenaltySpec(m), grid, l2_config)
            if m is PenaltyKind.L2:
                l2_stage = tuned
        selected = [data.names[j] for j in np.flatnonzero(tuned.final_model.selected_variables())]
        counts = {"top": 0, "bottom": 0}
        for g in selected:
            counts[group[g]] += 1
        err = None if test_data is None else error_rate(tuned.final_model, test_data)
        result.fits[m] = GeneFit(m, tuned, selected, counts, err)
        log.info("%s: lambda=%g, %d genes (%d bottom)", m.value, tuned.chosen_lambda,
                 len(selected), counts["bottom"])
    return result


def write_ranked_genes_csv(result: GenePipelineResult, path):
    """Every kept gene with its score, rank and screening group (blank if not screened)."""
    group = {result.gene_ids[i]: g for i, g in result.screen.group_of().items()}
    order = np.argsort(-result.scores, kind="stable")
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "gene", "R", "group"])
        for rank, i in enumerate(order, start=1):
            g = result.gene_ids[i]
            w.writerow([rank, g, repr(float(result.scores[i])), group.get(g, "")])


def write_selected_genes_csv(result: GenePipelineResult, path):
    """One row per (method, selected gene) with the per-class coefficients."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        K = None
        for fit in result.fits.values():
            K = fit.tuned.final_model.k_classes
            break
        w.writerow(["method", "gene", "group", *(f"w{k + 1}" for k in range(K or 0))])
        group = {result.gene_ids[i]: g for i, g in result.screen.group_of().items()}
        names = result.screened_ids
        for m, fit in result.fits.items():
            model: CoefModel = fit.tuned.final_model
            for j in np.flatnonzero(model.selected_variables()):
                w.writerow([m.value, names[j], group[names[j]],
                            *(repr(float(v)) for v in model.W[:, j])])
