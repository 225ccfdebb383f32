"""Tuning-parameter selection and the two-stage adaptive pipeline."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import CoefModel, Dataset, PenaltyKind, PenaltySpec, column_sup_norms, error_rate
from .l2base import EPS_ZERO, L2FitConfig, adaptive_penalty, fit_l2_grid
from .lpmodel import LpFitError, fit_lp

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LambdaGrid:
    log2_values: tuple[int, ...] = tuple(range(-14, 16))

    def __post_init__(self):
        vals = tuple(int(v) for v in self.log2_values)
        if not vals:
            raise ValueError("lambda grid is empty")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("lambda grid must be strictly increasing")
        object.__setattr__(self, "log2_values", vals)

    @classmethod
    def from_range(cls, lo: int, hi: int) -> "LambdaGrid":
        return cls(tuple(range(lo, hi + 1)))

    @property
    def lambdas(self) -> np.ndarray:
        return 2.0 ** np.asarray(self.log2_values, dtype=float)


@dataclass(frozen=True, eq=False)
class TuneResult:
    chosen_lambda: float
    per_lambda_errors: list[tuple[float, float]]   # nan marks a failed fit
    final_model: CoefModel
    penalty: PenaltySpec
    fits: list = field(default_factory=list)       # per-lambda fit objects (None if failed)
    n_fits: int = 0
    l2_stage: "TuneResult | None" = None

    @property
    def chosen_index(self) -> int:
        return [lam for lam, _ in self.per_lambda_errors].index(self.chosen_lambda)


class TuningError(RuntimeError):
    pass


def fit_grid(train: Dataset, spec: PenaltySpec, lambdas, l2_config: L2FitConfig = L2FitConfig()):
    """One fit per lambda; failed LP solves come back as ``None``."""
    if spec.kind is PenaltyKind.L2:
        return fit_l2_grid(train, lambdas, l2_config)
    fits = []
    for lam in lambdas:
        try:
            fits.append(fit_lp(train, spec, float(lam)))
        except LpFitError as exc:
            log.warning("%s fit failed at lambda=%g: %s", spec.kind.value, lam, exc)
            fits.append(None)
    return fits


def choose_lambda(lambdas, errors) -> int:
    """Index of the smallest error; ties go to the largest lambda."""
    errors = np.asarray(errors, dtype=float)
    ok = ~np.isnan(errors)
    if not ok.any():
        raise TuningError("every lambda on the grid failed")
    best = np.min(errors[ok])
    lams = np.asarray(lambdas, dtype=float)
    cands = np.flatnonzero(ok & (errors == best))
    return int(cands[np.argmax(lams[cands])])


def tune_on_holdout(train: Dataset, tune: Dataset, spec: PenaltySpec,
                    grid: LambdaGrid = LambdaGrid(),
                    l2_config: L2FitConfig = L2FitConfig()) -> TuneResult:
    """Fit on ``train`` for each lambda and keep the one with least error on ``tune``."""
    if train.d != tune.d or train.k_classes != tune.k_classes:
        raise ValueError("train and tune sets must share d and K")
    lambdas = grid.lambdas
    fits = fit_grid(train, spec, lambdas, l2_config)
    errors = [np.nan if f is None else error_rate(f.model, tune) for f in fits]
    i = choose_lambda(lambdas, errors)
    return TuneResult(float(lambdas[i]), list(zip(lambdas.tolist(), errors)),
                      fits[i].model, spec, fits, len(fits))


def loocv_errors(train: Dataset, spec: PenaltySpec, lambdas,
                 l2_config: L2FitConfig = L2FitConfig()) -> tuple[np.ndarray, int]:
    """Leave-one-out misclassification rate per lambda, plus the number of fits run."""
    n = train.n
    wrong = np.zeros(len(lambdas))
    failed = np.zeros(len(lambdas), dtype=bool)
    n_fits = 0
    for i in range(n):
        keep = np.r_[0:i, i + 1:n]
        fold = train.subset(keep)
        fits = fit_grid(fold, spec, lambdas, l2_config)
        n_fits += len(fits)
        for t, f in enumerate(fits):
            if f is None:
                failed[t] = True
                continue
            scores = f.model.W @ train.features[i] + f.model.b
            wrong[t] += int(np.argmax(scores) + 1 != train.labels[i])
    errors = wrong / n
    errors[failed] = np.nan
    return errors, n_fits


def tune_loocv(train: Dataset, spec: PenaltySpec, grid: LambdaGrid = LambdaGrid(),
               l2_config: L2FitConfig = L2FitConfig()) -> TuneResult:
    """Leave-one-out tuning, then a refit on all rows at the chosen lambda."""
    if train.n < train.k_classes:
        raise ValueError("leave-one-out tuning needs at least K training rows")
    lambdas = grid.lambdas
    errors, n_fits = loocv_errors(train, spec, lambdas, l2_config)
    i = choose_lambda(lambdas, errors)
    final = fit_grid(train, spec, lambdas[i:i + 1], l2_config)[0]
    if final is None:
        raise TuningError(f"refit at lambda={lambdas[i]:g} failed")
    fits = [None] * len(lambdas)
    fits[i] = final
    return TuneResult(float(lambdas[i]), list(zip(lambdas.tolist(), errors.tolist())),
                      final.model, spec, fits, n_fits + 1)


def tune(train: Dataset, tune_set: Dataset | None, spec: PenaltySpec,
         grid: LambdaGrid = LambdaGrid(), l2_config: L2FitConfig = L2FitConfig()) -> TuneResult:
    """Holdout tuning when ``tune_set`` is given, leave-one-out otherwise."""
    if tune_set is None:
        return tune_loocv(train, spec, grid, l2_config)
    return tune_on_holdout(train, tune_set, spec, grid, l2_config)


def normalized_for_weights(model: CoefModel) -> CoefModel:
    """Rescale ``model`` to unit largest |coefficient|.

    A common factor on the adaptive weights is the same as a shift of the
    lambda grid, so this changes nothing but where on the grid the useful
    penalties fall. Without it a heavily-shrunk L2 solution (large tuned
    lambda) pushes every adaptive fit on the grid to the empty model.
    """
    scale = float(np.max(column_sup_norms(model.W), initial=0.0))
    if scale == 0.0:
        return model
    return CoefModel(model.W / scale, model.b / scale)


def fit_adaptive_pipeline(train: Dataset, tune_set: Dataset | None, kind: PenaltyKind,
                          grid: LambdaGrid = LambdaGrid(),
                          l2_config: L2FitConfig = L2FitConfig(),
                          eps_zero: float = EPS_ZERO,
                          normalize_weights: bool = True,
                          l2_result: TuneResult | None = None) -> TuneResult:
    """Tuned L2 fit, weights from it, then a tuned adaptive fit with those weights.

    ``tune_set=None`` switches both tuning stages to leave-one-out. A
    precomputed ``l2_result`` skips the first stage.
    """
    kind = PenaltyKind(kind)
    if not kind.is_adaptive:
        raise ValueError(f"{kind.value} is not an adaptive penalty")
    if l2_result is None:
        l2_result = tune(train, tune_set, PenaltySpec(PenaltyKind.L2), grid, l2_config)
    w_tilde = l2_result.final_model
    if normalize_weights:
        w_tilde = normalized_for_weights(w_tilde)
    spec = adaptive_penalty(kind, w_tilde, eps_zero)
    result = tune(train, tune_set, spec, grid, l2_config)
    return TuneResult(result.chosen_lambda, result.per_lambda_errors, result.final_model,
                      spec, result.fits, result.n_fits, l2_result)
