"""Replicated simulation studies comparing the six MSVM penalties."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .core import BasisSpec, PenaltyKind, PenaltySpec
from .l2base import EPS_ZERO, L2FitConfig
from .metrics import ReplicationRecord, SelectionReport, aggregate, evaluate_model
from .select import LambdaGrid, TuneResult, fit_adaptive_pipeline, tune_on_holdout
from .simgen import DesignKind, GroundTruth, SimDesign, generate

log = logging.getLogger(__name__)

METHOD_LABELS = {
    PenaltyKind.L2: "L2",
    PenaltyKind.L1: "L1",
    PenaltyKind.ADAPTIVE_L1: "Adapt-L1",
    PenaltyKind.SUPNORM: "Supnorm",
    PenaltyKind.ADAPTIVE_SUP_I: "Adapt-supI",
    PenaltyKind.ADAPTIVE_SUP_II: "Adapt-supII",
}
ALL_METHODS = tuple(METHOD_LABELS)

THREADS_ENV = "SPARSE_MSVM_THREADS"


@dataclass(frozen=True)
class StudyConfig:
    kind: DesignKind
    n_train: int
    n_test: int
    reps: int = 10
    n_tune: int | None = None
    basis: BasisSpec | None = None
    methods: tuple[PenaltyKind, ...] = ALL_METHODS
    grid: LambdaGrid = LambdaGrid()
    base_seed: int = 0
    l2_config: L2FitConfig = L2FitConfig()
    eps_zero: float = EPS_ZERO

    def design(self, rep: int) -> SimDesign:
        n_tune = self.n_train if self.n_tune is None else self.n_tune
        return SimDesign(self.kind, self.n_train, n_tune, self.n_test, self.base_seed + rep)


@dataclass(eq=False)
class ReplicationOutcome:
    rep: int
    records: dict[PenaltyKind, ReplicationRecord]
    tuned: dict[PenaltyKind, TuneResult] = field(repr=False)


@dataclass(eq=False)
class StudyResult:
    config: StudyConfig
    truth: GroundTruth
    outcomes: list[ReplicationOutcome]

    def reports(self) -> dict[PenaltyKind, SelectionReport]:
        return {m: aggregate([o.records[m] for o in self.outcomes]) for m in self.config.methods}

    def labelled_reports(self) -> dict[str, SelectionReport]:
        return {METHOD_LABELS[m]: r for m, r in self.reports().items()}


def run_replication(config: StudyConfig, rep: int, keep_fits: bool = True) -> ReplicationOutcome:
    train, tune, test, truth = generate(config.design(rep), config.basis)
    tuned: dict[PenaltyKind, TuneResult] = {}
    l2 = None
    needs_l2 = any(m is PenaltyKind.L2 or m.is_adaptive for m in config.methods)
    if needs_l2:
        l2 = tune_on_holdout(train, tune, PenaltySpec(PenaltyKind.L2), config.grid, config.l2_config)
    for m in config.methods:
        if m is PenaltyKind.L2:
            tuned[m] = l2
        elif m.is_adaptive:
            tuned[m] = fit_adaptive_pipeline(train, tune, m, config.grid, config.l2_config,
                                             config.eps_zero, l2_result=l2)
        else:
            tuned[m] = tune_on_holdout(train, tune, PenaltySpec(m), config.grid, config.l2_config)
        log.info("rep %d %s: lambda=%g", rep, METHOD_LABELS[m], tuned[m].chosen_lambda)
    records = {m: evaluate_model(t.final_model, test, truth) for m, t in tuned.items()}
    if not keep_fits:
        tuned = {m: TuneResult(t.chosen_lambda, t.per_lambda_errors, t.final_model, t.penalty,
                               [], t.n_fits) for m, t in tuned.items()}
    return ReplicationOutcome(rep, records, tuned)


def _run_rep_light(args):
    config, rep = args
    return run_replication(config, rep, keep_fits=False)


def default_workers() -> int:
    try:
        return max(int(os.environ.get(THREADS_ENV, "1")), 1)
    except ValueError:
        return 1


def run_study(config: StudyConfig, workers: int | None = None, keep_fits: bool = False) -> StudyResult:
    """Run every replication; results are ordered by replication index
    regardless of how many worker processes are used."""
    workers = default_workers() if not workers else workers
    reps = range(config.reps)
    if workers > 1 and config.reps > 1 and not keep_fits:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_rep_light, [(config, r) for r in reps]))
    else:
        outcomes = [run_replication(config, r, keep_fits) for r in reps]
    _, _, _, truth = generate(config.design(0), config.basis)
    return StudyResult(config, truth, outcomes)
