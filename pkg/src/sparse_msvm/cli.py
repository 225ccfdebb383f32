"""Command-line entry point: train, predict, simulate, genes.

Exit codes: 0 success, 1 runtime failure (solver, dimensions), 2 bad usage or
malformed input.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .core import (BasisSpec, CoefModel, CsvFormatError, Dataset, DimensionError, PenaltyKind,
                   PenaltySpec, dataset_has_labels, error_rate, predict_many, read_dataset_csv,
                   write_dataset_csv)
from .genes import (read_expression_csv, run_gene_pipeline, write_ranked_genes_csv,
                    write_selected_genes_csv)
from .l2base import adaptive_penalty, fit_l2
from .lpmodel import LpFitError, fit_lp
from .metrics import write_frequency_csv, write_summary_csv
from .select import (LambdaGrid, TuneResult, TuningError, fit_adaptive_pipeline,
                     normalized_for_weights, tune)
from .simgen import DesignKind, SimDesign, default_basis, estimate_bayes_error, generate
from .study import ALL_METHODS, METHOD_LABELS, THREADS_ENV, StudyConfig, run_study

log = logging.getLogger("sparse_msvm")

MODEL_HEADER = "# sparse_msvm model v1"

DESIGN_DEFAULTS = {
    DesignKind.FIVE_CLASS: (250, 50_000),
    DesignKind.FOUR_CLASS_LINEAR: (200, 40_000),
    DesignKind.NONLINEAR_THREE_CLASS: (200, 40_000),
}
BASES = {"linear": BasisSpec(1), "poly2": BasisSpec(2), "poly3": BasisSpec(3)}


class UsageError(Exception):
    pass


# --- model file ------------------------------------------------------------

def write_model(path, model: CoefModel, lam: float, penalty: PenaltyKind, names,
                errors=()):
    """Plain-text model: header, key/value lines, then W (row per class) and b."""
    fmt = "%.17g"
    lines = [MODEL_HEADER, f"penalty {penalty.value}", f"K {model.k_classes}",
             f"d {model.d_vars}", f"lambda {fmt % lam}", "names " + "\t".join(names), "W"]
    lines += [" ".join(fmt % v for v in row) for row in model.W]
    lines.append("b")
    lines.append(" ".join(fmt % v for v in model.b))
    lines.append(f"errors {len(errors)}")
    lines += [f"{fmt % lam_i} {'nan' if err is None or np.isnan(err) else fmt % err}"
              for lam_i, err in errors]
    Path(path).write_text("\n".join(lines) + "\n")


def read_model(path):
    """Inverse of ``write_model``; returns (model, lambda, penalty, names, errors)."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != MODEL_HEADER:
        raise CsvFormatError(f"{path}: line 1: not a model file")
    try:
        kv = {}
        i = 1
        while lines[i] != "W":
            key, _, value = lines[i].partition(" ")
            kv[key] = value
            i += 1
        K, d = int(kv["K"]), int(kv["d"])
        W = np.array([[float(t) for t in lines[i + 1 + k].split()] for k in range(K)]).reshape(K, d)
        i += 1 + K
        if lines[i] != "b":
            raise ValueError("expected 'b'")
        b = np.array([float(t) for t in lines[i + 1].split()])
        n_err = int(lines[i + 2].split()[1])
        errors = [tuple(float(t) for t in lines[i + 3 + r].split()) for r in range(n_err)]
    except (KeyError, IndexError, ValueError) as exc:
        raise CsvFormatError(f"{path}: malformed model file ({exc})") from None
    names = tuple(kv["names"].split("\t")) if kv.get("names") else ()
    return CoefModel(W, b), float(kv["lambda"]), PenaltyKind(kv["penalty"]), names, errors


# --- helpers ---------------------------------------------------------------

def _grid(text: str | None) -> LambdaGrid:
    if text is None:
        return LambdaGrid()
    try:
        lo, hi = (int(t) for t in text.split(":"))
        return LambdaGrid.from_range(lo, hi)
    except ValueError:
        raise UsageError(f"--grid expects lo:hi with integer log2 bounds, got {text!r}") from None


def _threads(value: int | None) -> int:
    if value is None:
        try:
            value = int(os.environ.get(THREADS_ENV, "1"))
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer") from None
    if value < 0:
        raise UsageError("--threads must be >= 0")
    return value if value > 0 else (os.cpu_count() or 1)


def _methods(text: str):
    out = []
    labels = {v.lower(): k for k, v in METHOD_LABELS.items()}
    for tok in text.split(","):
        tok = tok.strip().lower()
        if tok == "all":
            out.extend(ALL_METHODS)
        elif tok in labels:
            out.append(labels[tok])
        else:
            try:
                out.append(PenaltyKind(tok))
            except ValueError:
                raise UsageError(f"unknown method {tok!r}") from None
    return tuple(dict.fromkeys(out))


def _fixed_lambda_fit(train: Dataset, tune_set, loocv, kind: PenaltyKind, lam: float,
                      grid: LambdaGrid) -> TuneResult:
    if kind is PenaltyKind.L2:
        spec = PenaltySpec(kind)
        model = fit_l2(train, lam).model
        stage1 = None
    else:
        stage1 = None
        if kind.is_adaptive:
            if tune_set is None and not loocv:
                raise UsageError("adaptive penalties need --tune or --loocv for the weight stage")
            stage1 = tune(train, tune_set, PenaltySpec(PenaltyKind.L2), grid)
            spec = adaptive_penalty(kind, normalized_for_weights(stage1.final_model))
        else:
            spec = PenaltySpec(kind)
        model = fit_lp(train, spec, lam).model
    err = error_rate(model, tune_set) if tune_set is not None else float("nan")
    return TuneResult(lam, [(lam, err)], model, spec, [], 1, stage1)


# --- subcommands -----------------------------------------------------------

def cmd_train(args) -> int:
    if args.tune is None and not args.loocv and args.lam is None:
        raise UsageError("give --tune <csv>, --loocv or --lambda <value>")
    if args.tune is not None and args.loocv:
        raise UsageError("--tune and --loocv are exclusive")
    train = read_dataset_csv(args.data, args.classes)
    tune_set = read_dataset_csv(args.tune, train.k_classes) if args.tune else None
    if tune_set is not None and tune_set.d != train.d:
        raise DimensionError(f"tuning data has {tune_set.d} columns, training data {train.d}")
    kind = PenaltyKind(args.penalty)
    grid = _grid(args.grid)
    if args.lam is not None:
        if not args.lam >= 0:
            raise UsageError("--lambda must be >= 0")
        result = _fixed_lambda_fit(train, tune_set, args.loocv, kind, args.lam, grid)
    elif kind.is_adaptive:
        result = fit_adaptive_pipeline(train, tune_set, kind, grid)
    else:
        result = tune(train, tune_set, PenaltySpec(kind), grid)
    write_model(args.out, result.final_model, result.chosen_lambda, kind, train.names,
                result.per_lambda_errors)
    print(f"lambda={result.chosen_lambda:g} model_size={result.final_model.model_size()}")
    return 0


def cmd_predict(args) -> int:
    model, _, _, _, _ = read_model(args.model)
    labelled = dataset_has_labels(args.data)
    data = read_dataset_csv(args.data, max(model.k_classes, 2), require_labels=False)
    if data.d != model.d_vars:
        raise DimensionError(f"model has {model.d_vars} columns, data has {data.d}")
    pred = predict_many(model, data.features)
    out = Path(args.out) if args.out else None
    text = "label\n" + "".join(f"{int(v)}\n" for v in pred)
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)
    if labelled:
        print(f"error_rate={error_rate(model, data):.6f}", file=sys.stderr if out is None else sys.stdout)
    return 0


def cmd_simulate(args) -> int:
    kind = DesignKind(args.design)
    n_default, n_test_default = DESIGN_DEFAULTS[kind]
    n = args.n or n_default
    n_test = args.n_test or n_test_default
    basis = BASES[args.basis] if args.basis else default_basis(kind)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bayes_only = args.methods.strip().lower() == "bayes-only"
    methods = () if bayes_only else _methods(args.methods)
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    err, se = estimate_bayes_error(kind, args.bayes_mc, args.seed)
    config = StudyConfig(kind, n, n_test, reps=args.reps, basis=basis, methods=methods,
                         grid=_grid(args.grid), base_seed=args.seed)
    if args.write_data:
        for r in range(args.reps):
            train, tune_set, test, _ = generate(config.design(r), basis)
            for name, d in (("train", train), ("tune", tune_set), ("test", test)):
                write_dataset_csv(d, out / f"rep{r:03d}_{name}.csv")
    if bayes_only:
        _, _, _, truth = generate(SimDesign(kind, 5, 5, 5, args.seed), basis)
        write_summary_csv({}, out / "summary.csv", bayes=(err, se, truth))
        print(f"Bayes error {err:.4f} (se {se:.4f})")
        return 0
    result = run_study(config, workers=_threads(args.threads))
    reports = result.labelled_reports()
    write_summary_csv(reports, out / "summary.csv", bayes=(err, se, result.truth))
    write_frequency_csv(reports, result.truth.names, out / "frequency.csv")
    for name, r in reports.items():
        print(f"{name:12s} TE={r.test_error_mean:.4f} ({r.test_error_sd:.4f}) CZ={r.cz_mean:.2f} "
              f"IZ={r.iz_mean:.2f} MS={r.ms_mean:.2f} CM={r.cm_count}")
    print(f"{'Bayes':12s} TE={err:.4f}")
    return 0


def cmd_genes(args) -> int:
    if args.top < 0 or args.bottom < 0 or args.top + args.bottom == 0:
        raise UsageError("--top and --bottom must be >= 0 and not both 0")
    train = read_expression_csv(args.train_expr, args.train_labels)
    test = None
    if args.test_expr:
        test = read_expression_csv(args.test_expr, args.test_labels)
    methods = _methods(args.penalty)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.top + args.bottom > train.n_genes:
        raise UsageError(f"--top + --bottom exceeds the {train.n_genes} genes available")
    result = run_gene_pipeline(train, test, methods, args.top, args.bottom, _grid(args.grid))
    write_ranked_genes_csv(result, out / "ranked_genes.csv")
    write_selected_genes_csv(result, out / "selected_genes.csv")
    with (out / "gene_summary.csv").open("w") as fh:
        fh.write("method,lambda,test_error,genes,top,bottom\n")
        for m, fit in result.fits.items():
            te = "" if fit.test_error is None else f"{fit.test_error:.6f}"
            fh.write(f"{METHOD_LABELS[m]},{fit.tuned.chosen_lambda:.17g},{te},{len(fit.selected)},"
                     f"{fit.selected_groups['top']},{fit.selected_groups['bottom']}\n")
            print(f"{METHOD_LABELS[m]:12s} lambda={fit.tuned.chosen_lambda:g} test_error={te or '-'} "
                  f"genes={len(fit.selected)} top={fit.selected_groups['top']} "
                  f"bottom={fit.selected_groups['bottom']}")
    return 0


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparse-msvm", description="Sparse multiclass SVMs fitted by linear programming.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    penalties = [k.value for k in PenaltyKind]

    t = sub.add_parser("train", help="fit one MSVM on a CSV data set")
    t.add_argument("--data", required=True, help="training CSV (variables, then 'label')")
    t.add_argument("--penalty", required=True, choices=penalties)
    t.add_argument("--tune", help="held-out CSV used to choose lambda")
    t.add_argument("--loocv", action="store_true", help="choose lambda by leave-one-out")
    t.add_argument("--grid", help="log2 lambda range lo:hi (default -14:15)")
    t.add_argument("--lambda", dest="lam", type=float, help="fit at this lambda instead of tuning")
    t.add_argument("--classes", type=int, help="number of classes (default: largest label)")
    t.add_argument("--out", required=True, help="model file to write")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("predict", help="apply a saved model to a CSV")
    r.add_argument("--model", required=True)
    r.add_argument("--data", required=True, help="CSV; a final 'label' column is optional")
    r.add_argument("--out", help="write predicted labels here (default stdout)")
    r.set_defaults(func=cmd_predict)

    s = sub.add_parser("simulate", help="replicated simulation study")
    s.add_argument("--design", required=True, choices=[k.value for k in DesignKind])
    s.add_argument("--reps", type=int, default=100)
    s.add_argument("--n", type=int, help="training (and tuning) size; design default if omitted")
    s.add_argument("--n-test", type=int, help="test size; design default if omitted")
    s.add_argument("--basis", choices=list(BASES), help="basis (nonlinear default poly2)")
    s.add_argument("--methods", default="all",
                   help="comma list of penalties or labels, 'all', or 'bayes-only'")
    s.add_argument("--seed", type=int, default=0, help="base seed; replication r uses seed+r")
    s.add_argument("--grid", help="log2 lambda range lo:hi (default -14:15)")
    s.add_argument("--bayes-mc", type=int, default=50_000, help="Monte-Carlo draws for the Bayes row")
    s.add_argument("--threads", type=int, help=f"worker processes, 0 = all cores (default ${THREADS_ENV} or 1)")
    s.add_argument("--write-data", action="store_true", help="also write every replication's splits")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_simulate)

    g = sub.add_parser("genes", help="expression-data pipeline with leave-one-out tuning")
    g.add_argument("--train-expr", required=True, help="genes-as-rows CSV")
    g.add_argument("--train-labels", required=True, help="CSV with header sample,label")
    g.add_argument("--test-expr")
    g.add_argument("--test-labels")
    g.add_argument("--top", type=int, default=100)
    g.add_argument("--bottom", type=int, default=100)
    g.add_argument("--penalty", default="all", help="comma list of penalties, or 'all'")
    g.add_argument("--grid", help="log2 lambda range lo:hi (default -14:15)")
    g.add_argument("--out-dir", required=True)
    g.set_defaults(func=cmd_genes)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, CsvFormatError) as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DimensionError, LpFitError, TuningError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
