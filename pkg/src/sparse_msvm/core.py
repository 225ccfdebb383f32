"""Shared domain types and primitives for multicategory SVMs.

A fitted classifier is a pair ``(W, b)`` with one row per class; the decision
function of class ``k`` is ``f_k(x) = b_k + W[k] @ x`` and prediction is the
argmax over classes. Labels are 1-based throughout the public API.
"""

from __future__ import annotations

import csv
import enum
import itertools
from dataclasses import dataclass
from math import comb
from pathlib import Path
from typing import Sequence

import numpy as np

SUM_TO_ZERO_TOL = 1e-8


class DimensionError(ValueError):
    """Raised when array shapes disagree along a named axis."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix with 1-based class labels."""

    features: np.ndarray
    labels: np.ndarray
    k_classes: int
    names: tuple[str, ...] = ()

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        if x.ndim != 2:
            raise DimensionError(f"features must be 2-d, got shape {x.shape}")
        n, d = x.shape
        if n < 1 or d < 1:
            raise DimensionError(f"need n >= 1 and d >= 1, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("features contain non-finite values")
        y = np.asarray(self.labels)
        if y.shape != (n,):
            raise DimensionError(f"labels: expected {n} entries (rows), got shape {y.shape}")
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise ValueError("labels must be integers")
        y = y.astype(int)
        k = int(self.k_classes)
        if k < 2:
            raise ValueError("k_classes must be >= 2")
        if y.min() < 1 or y.max() > k:
            raise ValueError(f"labels must lie in 1..{k}")
        names = tuple(self.names) if self.names else tuple(f"x{j + 1}" for j in range(d))
        if len(names) != d:
            raise DimensionError(f"names: expected {d} (columns), got {len(names)}")
        object.__setattr__(self, "features", _frozen(x))
        object.__setattr__(self, "labels", _frozen(y))
        object.__setattr__(self, "k_classes", k)
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.features[rows], self.labels[rows], self.k_classes, self.names)

    def select_columns(self, cols) -> "Dataset":
        cols = np.asarray(cols, dtype=int)
        return Dataset(self.features[:, cols], self.labels, self.k_classes,
                       tuple(self.names[c] for c in cols))


@dataclass(frozen=True, eq=False)
class CoefModel:
    """Linear multiclass decision functions ``f_k(x) = b[k] + W[k] @ x``."""

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if W.ndim != 2:
            raise DimensionError(f"W must be K x d, got shape {W.shape}")
        if b.shape != (W.shape[0],):
            raise DimensionError(f"b: expected {W.shape[0]} entries (classes), got shape {b.shape}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError("model coefficients must be finite")
        object.__setattr__(self, "W", _frozen(W))
        object.__setattr__(self, "b", _frozen(b))

    @property
    def k_classes(self) -> int:
        return self.W.shape[0]

    @property
    def d_vars(self) -> int:
        return self.W.shape[1]

    @classmethod
    def zeros(cls, k_classes: int, d_vars: int) -> "CoefModel":
        return cls(np.zeros((k_classes, d_vars)), np.zeros(k_classes))

    def selected_variables(self) -> np.ndarray:
        """Boolean mask of variables with at least one nonzero coefficient."""
        return np.any(self.W != 0.0, axis=0)

    def model_size(self) -> int:
        return int(self.selected_variables().sum())


class PenaltyKind(enum.Enum):
    L2 = "l2"
    L1 = "l1"
    SUPNORM = "supnorm"
    ADAPTIVE_L1 = "adapt-l1"
    ADAPTIVE_SUP_I = "adapt-sup1"
    ADAPTIVE_SUP_II = "adapt-sup2"

    @property
    def is_adaptive(self) -> bool:
        return self in (PenaltyKind.ADAPTIVE_L1, PenaltyKind.ADAPTIVE_SUP_I,
                        PenaltyKind.ADAPTIVE_SUP_II)

    @property
    def is_supnorm_family(self) -> bool:
        return self in (PenaltyKind.SUPNORM, PenaltyKind.ADAPTIVE_SUP_I,
                        PenaltyKind.ADAPTIVE_SUP_II)


@dataclass(frozen=True, eq=False)
class PenaltySpec:
    """Regularizer choice plus the adaptive weights it needs.

    ``tau_matrix`` (K x d) goes with ADAPTIVE_L1 and ADAPTIVE_SUP_II,
    ``tau_vector`` (d,) with ADAPTIVE_SUP_I. ``inf`` weights force the
    matching coefficients to zero.
    """

    kind: PenaltyKind
    tau_matrix: np.ndarray | None = None
    tau_vector: np.ndarray | None = None

    def __post_init__(self):
        kind = PenaltyKind(self.kind)
        object.__setattr__(self, "kind", kind)
        needs_matrix = kind in (PenaltyKind.ADAPTIVE_L1, PenaltyKind.ADAPTIVE_SUP_II)
        needs_vector = kind is PenaltyKind.ADAPTIVE_SUP_I
        if needs_matrix != (self.tau_matrix is not None):
            raise ValueError(f"{kind.value}: tau_matrix {'required' if needs_matrix else 'not allowed'}")
        if needs_vector != (self.tau_vector is not None):
            raise ValueError(f"{kind.value}: tau_vector {'required' if needs_vector else 'not allowed'}")
        for name in ("tau_matrix", "tau_vector"):
            tau = getattr(self, name)
            if tau is None:
                continue
            tau = np.asarray(tau, dtype=float)
            if np.any(np.isnan(tau)) or np.any(tau <= 0):
                raise ValueError(f"{name}: weights must be > 0 (inf allowed)")
            object.__setattr__(self, name, _frozen(tau))
        if self.tau_matrix is not None and self.tau_matrix.ndim != 2:
            raise DimensionError("tau_matrix must be K x d")
        if self.tau_vector is not None and self.tau_vector.ndim != 1:
            raise DimensionError("tau_vector must be 1-d")

    def pinned_mask(self, k_classes: int, d_vars: int) -> np.ndarray:
        """K x d mask of coefficients forced to zero by infinite weights."""
        if self.tau_matrix is not None:
            if self.tau_matrix.shape != (k_classes, d_vars):
                raise DimensionError(
                    f"tau_matrix: expected shape {(k_classes, d_vars)}, got {self.tau_matrix.shape}")
            return np.isinf(self.tau_matrix)
        if self.tau_vector is not None:
            if self.tau_vector.shape != (d_vars,):
                raise DimensionError(f"tau_vector: expected {d_vars} entries (columns), "
                                     f"got {self.tau_vector.shape[0]}")
            return np.broadcast_to(np.isinf(self.tau_vector), (k_classes, d_vars)).copy()
        return np.zeros((k_classes, d_vars), dtype=bool)


@dataclass(frozen=True)
class BasisSpec:
    degree: int = 1
    include_cross: bool = True

    def __post_init__(self):
        if self.degree not in (1, 2, 3):
            raise UnsupportedDegreeError(f"basis degree must be 1, 2 or 3, got {self.degree}")


class UnsupportedDegreeError(ValueError):
    pass


def _check_dims(model: CoefModel, d: int, k: int | None = None):
    if model.d_vars != d:
        raise DimensionError(f"columns: model has d={model.d_vars}, data has d={d}")
    if k is not None and model.k_classes != k:
        raise DimensionError(f"classes: model has K={model.k_classes}, data has K={k}")


def decision_values(model: CoefModel, X) -> np.ndarray:
    """n x K matrix of ``f_k(x_i)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    _check_dims(model, X.shape[1])
    return X @ model.W.T + model.b


def hinge_objective_loss(model: CoefModel, data: Dataset) -> float:
    """Data-fit term ``(1/n) sum_i sum_{k != y_i} [f_k(x_i) + 1]_+``."""
    _check_dims(model, data.d, data.k_classes)
    f = decision_values(model, data.features)
    active = np.ones_like(f, dtype=bool)
    active[np.arange(data.n), data.labels - 1] = False
    return float(np.sum(np.maximum(f + 1.0, 0.0)[active]) / data.n)


def predict_many(model: CoefModel, X) -> np.ndarray:
    # np.argmax returns the first maximum, so ties go to the smallest class
    return np.argmax(decision_values(model, X), axis=1) + 1


def predict(model: CoefModel, x) -> int:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionError(f"x must be a vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    return int(predict_many(model, x[None, :])[0])


def error_rate(model: CoefModel, data: Dataset) -> float:
    return float(np.mean(predict_many(model, data.features) != data.labels))


def sup_norm(col) -> float:
    col = np.asarray(col, dtype=float)
    return float(np.max(np.abs(col))) if col.size else 0.0


def column_sup_norms(W) -> np.ndarray:
    return np.max(np.abs(np.asarray(W, dtype=float)), axis=0)


def _weighted_abs(tau: np.ndarray, W: np.ndarray) -> np.ndarray:
    """``tau * |W|`` with ``inf * 0 = 0``; a nonzero under an inf weight is a contract violation."""
    absW = np.abs(W)
    bad = np.isinf(tau) & (absW != 0)
    if np.any(bad):
        k, j = np.argwhere(bad)[0]
        raise ValueError(f"coefficient ({k + 1},{j + 1}) is nonzero but carries an infinite weight")
    out = np.zeros(np.broadcast(tau, absW).shape)
    finite = np.broadcast_to(np.isfinite(tau), out.shape)
    out[finite] = np.broadcast_to(tau, out.shape)[finite] * np.broadcast_to(absW, out.shape)[finite]
    return out


def penalty_value(spec: PenaltySpec, model: CoefModel) -> float:
    """Penalty sum without the lambda factor; intercepts are never penalized."""
    W = model.W
    kind = spec.kind
    if kind is PenaltyKind.L2:
        return float(np.sum(W ** 2))
    if kind is PenaltyKind.L1:
        return float(np.sum(np.abs(W)))
    if kind is PenaltyKind.SUPNORM:
        return float(np.sum(column_sup_norms(W)))
    spec.pinned_mask(*W.shape)  # shape check
    if kind is PenaltyKind.ADAPTIVE_L1:
        return float(np.sum(_weighted_abs(spec.tau_matrix, W)))
    if kind is PenaltyKind.ADAPTIVE_SUP_I:
        col = column_sup_norms(W)
        return float(np.sum(_weighted_abs(spec.tau_vector, col)))
    return float(np.sum(np.max(_weighted_abs(spec.tau_matrix, W), axis=0)))


def check_sum_to_zero(model: CoefModel, tol: float = SUM_TO_ZERO_TOL) -> bool:
    if tol <= 0:
        raise ValueError("tol must be positive")
    return bool(abs(model.b.sum()) <= tol and np.all(np.abs(model.W.sum(axis=0)) <= tol))


def sum_to_zero_residual(model: CoefModel) -> float:
    return float(max(abs(model.b.sum()), np.max(np.abs(model.W.sum(axis=0)), initial=0.0)))


def project_sum_to_zero(W, b):
    """Orthogonal projection onto ``sum_k b_k = 0`` and ``sum_k W[k, j] = 0``."""
    W = np.asarray(W, dtype=float)
    b = np.asarray(b, dtype=float)
    return W - W.mean(axis=-2, keepdims=True), b - b.mean(axis=-1, keepdims=True)


# --- basis expansion -------------------------------------------------------

def basis_monomials(d: int, spec: BasisSpec) -> list[tuple[int, ...]]:
    """Monomials as sorted index tuples, graded lexicographic order."""
    out = []
    for deg in range(1, spec.degree + 1):
        if spec.include_cross:
            out.extend(itertools.combinations_with_replacement(range(d), deg))
        else:
            out.extend((j,) * deg for j in range(d))
    return out


def basis_size(d: int, spec: BasisSpec) -> int:
    if spec.include_cross:
        return comb(d + spec.degree, spec.degree) - 1
    return d * spec.degree


def _monomial_name(mono: tuple[int, ...], names: Sequence[str]) -> str:
    parts = []
    for j, group in itertools.groupby(mono):
        power = len(list(group))
        parts.append(names[j] if power == 1 else f"{names[j]}^{power}")
    return "*".join(parts)


def expand_basis(data: Dataset, spec: BasisSpec) -> Dataset:
    """Replace the columns by all monomials of total degree ``1..spec.degree``."""
    if spec.degree not in (1, 2, 3):
        raise UnsupportedDegreeError(f"basis degree must be 1, 2 or 3, got {spec.degree}")
    monos = basis_monomials(data.d, spec)
    X = data.features
    cols = [np.prod(X[:, list(m)], axis=1) for m in monos]
    names = [_monomial_name(m, data.names) for m in monos]
    return Dataset(np.column_stack(cols), data.labels, data.k_classes, tuple(names))


# --- dataset CSV -----------------------------------------------------------

class CsvFormatError(ValueError):
    """Malformed CSV input; the message names the offending line."""


def read_dataset_csv(path, k_classes: int | None = None, require_labels: bool = True) -> Dataset:
    """Read the shared CSV layout: variable columns then a final ``label`` column.

    When ``require_labels`` is false a file without a ``label`` column is accepted
    and every row gets label 1 (useful for prediction-only inputs).
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: line 1: empty file") from None
        header = [h.strip() for h in header]
        has_label = bool(header) and header[-1] == "label"
        if require_labels and not has_label:
            raise CsvFormatError(f"{path}: line 1: last column must be 'label'")
        names = header[:-1] if has_label else header
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise CsvFormatError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(v) for v in (row[:-1] if has_label else row)]
                lab = int(row[-1]) if has_label else 1
            except ValueError as exc:
                raise CsvFormatError(f"{path}: line {lineno}: {exc}") from None
            rows.append(vals)
            labels.append(lab)
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    labels = np.array(labels)
    k = k_classes if k_classes is not None else int(labels.max())
    try:
        return Dataset(np.array(rows), labels, max(k, 2), tuple(names))
    except ValueError as exc:
        raise CsvFormatError(f"{path}: {exc}") from None


def dataset_has_labels(path) -> bool:
    with Path(path).open(newline="") as fh:
        header = next(csv.reader(fh), [])
    return bool(header) and header[-1].strip() == "label"


def write_dataset_csv(data: Dataset, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(data.names) + ["label"])
        for row, lab in zip(data.features, data.labels):
            w.writerow([repr(float(v)) for v in row] + [int(lab)])
