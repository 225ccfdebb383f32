"""Linear-programming formulations of the L1, sup-norm and adaptive MSVMs.

Variables are laid out in blocks ``[b+, b-, w+, w-, xi, eta]``:

* ``b = b+ - b-`` and ``w = w+ - w-`` (sign split, both parts >= 0),
* ``xi[i, k] >= f_k(x_i) + 1`` realizes the hinge ``[f_k(x_i) + 1]_+``,
* ``eta[j] >= w+[k, j] + w-[k, j]`` realizes the column sup-norm
  (sup-norm family only).

Rows are ``[sum_k b_k = 0]``, ``[sum_k w_kj = 0]`` per variable, the ``n*K``
margin rows, then ``K*d`` sup-norm rows. Coefficients with an infinite
adaptive weight have no columns at all; their sup-norm rows are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import (CoefModel, Dataset, PenaltyKind, PenaltySpec, hinge_objective_loss,
                   penalty_value)
from .simplex import DEFAULT_ITERATION_LIMIT, LinearProgram, LpSolution, LpStatus, Sense, solve

ZERO_TOL = 1e-6


class LpFitError(RuntimeError):
    def __init__(self, status: LpStatus, message: str = ""):
        super().__init__(message or f"LP solve ended with status {status.value}")
        self.status = status


@dataclass(frozen=True, eq=False)
class MsvmLpLayout:
    n: int
    k_classes: int
    d_vars: int
    b_pos: np.ndarray
    b_neg: np.ndarray
    w_pos: np.ndarray   # K x d column indices, -1 where pinned to zero
    w_neg: np.ndarray
    xi: np.ndarray      # n x K
    eta: np.ndarray | None
    m: int
    p: int

    @property
    def pinned(self) -> np.ndarray:
        return self.w_pos < 0

    def blocks(self) -> list[np.ndarray]:
        out = [self.b_pos, self.b_neg, self.w_pos[self.w_pos >= 0],
               self.w_neg[self.w_neg >= 0], self.xi.ravel()]
        if self.eta is not None:
            out.append(self.eta)
        return out


def _layout(n, K, d, pinned, with_eta, n_rows):
    nxt = 0

    def take(count):
        nonlocal nxt
        idx = np.arange(nxt, nxt + count)
        nxt += count
        return idx

    b_pos, b_neg = take(K), take(K)
    n_free = int((~pinned).sum())
    w_pos = np.full((K, d), -1)
    w_neg = np.full((K, d), -1)
    w_pos[~pinned] = take(n_free)
    w_neg[~pinned] = take(n_free)
    xi = take(n * K).reshape(n, K)
    eta = take(d) if with_eta else None
    return MsvmLpLayout(n, K, d, b_pos, b_neg, w_pos, w_neg, xi, eta, nxt, n_rows)


def _check_lambda(lam):
    if not lam > 0 or not np.isfinite(lam):
        raise ValueError(f"lambda must be a positive finite number, got {lam}")


def _base_rows(data: Dataset, layout: MsvmLpLayout, n_extra_rows: int):
    """Sum-to-zero and margin rows shared by every formulation."""
    n, K, d = data.n, data.k_classes, data.d
    A = np.zeros((layout.p, layout.m))
    rhs = np.zeros(layout.p)
    senses = []
    A[0, layout.b_pos] = 1.0
    A[0, layout.b_neg] = -1.0
    senses.append(Sense.EQ)
    for j in range(d):
        for k in range(K):
            if layout.w_pos[k, j] >= 0:
                A[1 + j, layout.w_pos[k, j]] = 1.0
                A[1 + j, layout.w_neg[k, j]] = -1.0
        senses.append(Sense.EQ)
    # xi_ik - b_k - w_k . x_i >= 1
    X = data.features
    row0 = 1 + d
    for i in range(n):
        for k in range(K):
            r = row0 + i * K + k
            A[r, layout.xi[i, k]] = 1.0
            A[r, layout.b_pos[k]] = -1.0
            A[r, layout.b_neg[k]] = 1.0
            live = layout.w_pos[k] >= 0
            A[r, layout.w_pos[k, live]] = -X[i, live]
            A[r, layout.w_neg[k, live]] = X[i, live]
            rhs[r] = 1.0
            senses.append(Sense.GE)
    costs = np.zeros(layout.m)
    a = np.ones((n, K))
    a[np.arange(n), data.labels - 1] = 0.0
    costs[layout.xi.ravel()] = (a / n).ravel()
    return A, rhs, senses, costs


def build_l1_lp(data: Dataset, lam: float, tau=None):
    """(Adaptive) L1 MSVM: ``lam * sum tau_kj |w_kj|`` penalty."""
    _check_lambda(lam)
    K, d = data.k_classes, data.d
    tau = np.ones((K, d)) if tau is None else np.asarray(tau, dtype=float)
    if tau.shape != (K, d):
        raise ValueError(f"tau: expected shape {(K, d)}, got {tau.shape}")
    if np.any(np.isnan(tau)) or np.any(tau <= 0):
        raise ValueError("tau weights must be > 0 (inf allowed)")
    pinned = np.isinf(tau)
    layout = _layout(data.n, K, d, pinned, False, 1 + d + data.n * K)
    A, rhs, senses, costs = _base_rows(data, layout, 0)
    live = ~pinned
    costs[layout.w_pos[live]] = lam * tau[live]
    costs[layout.w_neg[live]] = lam * tau[live]
    return LinearProgram(costs, A, tuple(senses), rhs), layout


def build_supnorm_lp(data: Dataset, lam: float, tau_vector=None, tau_matrix=None):
    """Sup-norm MSVM, plain or with adaptive weights of type I (per variable)
    or type II (per coefficient, inside the sup)."""
    _check_lambda(lam)
    if tau_vector is not None and tau_matrix is not None:
        raise ValueError("supply at most one of tau_vector and tau_matrix")
    K, d = data.k_classes, data.d
    scale = np.ones((K, d))
    eta_cost = np.ones(d)
    if tau_vector is not None:
        tv = np.asarray(tau_vector, dtype=float)
        if tv.shape != (d,):
            raise ValueError(f"tau_vector: expected {d} entries, got {tv.shape}")
        if np.any(np.isnan(tv)) or np.any(tv <= 0):
            raise ValueError("tau weights must be > 0 (inf allowed)")
        pinned = np.broadcast_to(np.isinf(tv), (K, d)).copy()
        eta_cost = np.where(np.isinf(tv), 0.0, tv)
    elif tau_matrix is not None:
        tm = np.asarray(tau_matrix, dtype=float)
        if tm.shape != (K, d):
            raise ValueError(f"tau_matrix: expected shape {(K, d)}, got {tm.shape}")
        if np.any(np.isnan(tm)) or np.any(tm <= 0):
            raise ValueError("tau weights must be > 0 (inf allowed)")
        pinned = np.isinf(tm)
        scale = np.where(pinned, 1.0, tm)
    else:
        pinned = np.zeros((K, d), dtype=bool)
    n_live = int((~pinned).sum())
    base_rows = 1 + d + data.n * K
    layout = _layout(data.n, K, d, pinned, True, base_rows + n_live)
    A, rhs, senses, costs = _base_rows(data, layout, n_live)
    costs[layout.eta] = lam * eta_cost
    r = base_rows
    for k in range(K):
        for j in range(d):
            if pinned[k, j]:
                continue
            A[r, layout.w_pos[k, j]] = scale[k, j]
            A[r, layout.w_neg[k, j]] = scale[k, j]
            A[r, layout.eta[j]] = -1.0
            senses.append(Sense.LE)
            r += 1
    return LinearProgram(costs, A, tuple(senses), rhs), layout


def build_lp(data: Dataset, spec: PenaltySpec, lam: float):
    kind = spec.kind
    if kind is PenaltyKind.L1:
        return build_l1_lp(data, lam)
    if kind is PenaltyKind.ADAPTIVE_L1:
        return build_l1_lp(data, lam, spec.tau_matrix)
    if kind is PenaltyKind.SUPNORM:
        return build_supnorm_lp(data, lam)
    if kind is PenaltyKind.ADAPTIVE_SUP_I:
        return build_supnorm_lp(data, lam, tau_vector=spec.tau_vector)
    if kind is PenaltyKind.ADAPTIVE_SUP_II:
        return build_supnorm_lp(data, lam, tau_matrix=spec.tau_matrix)
    raise ValueError(f"{kind.value} is not an LP-representable penalty")


def decode(solution: LpSolution, layout: MsvmLpLayout, zero_tol: float = ZERO_TOL) -> CoefModel:
    """Recover ``(W, b)`` from an optimal LP solution.

    Coefficients with ``|w| <= zero_tol`` become exact zeros; whatever that
    removes from a column sum is spread over the column's surviving entries so
    the sum-to-zero constraint still holds.
    """
    if solution.status is not LpStatus.OPTIMAL:
        raise LpFitError(solution.status)
    x = solution.x
    K, d = layout.k_classes, layout.d_vars
    b = x[layout.b_pos] - x[layout.b_neg]
    b -= b.mean()
    W = np.zeros((K, d))
    live = ~layout.pinned
    W[live] = x[layout.w_pos[live]] - x[layout.w_neg[live]]
    W[np.abs(W) <= zero_tol] = 0.0
    for j in range(d):
        nz = W[:, j] != 0.0
        if nz.any():
            W[nz, j] -= W[:, j].sum() / nz.sum()
    return CoefModel(W, b)


def cancel_split_pairs(solution: LpSolution, layout: MsvmLpLayout) -> LpSolution:
    """Remove the common part of every positive/negative pair.

    In the sup-norm LPs a coefficient below its column maximum can carry both
    parts at an optimal vertex. Subtracting the smaller part from both keeps
    ``w``, ``b``, the objective and feasibility unchanged (the only rows where
    the pair does not cancel are ``<= eta`` rows, which gain slack).
    """
    if solution.x is None:
        return solution
    x = solution.x.copy()
    live = ~layout.pinned
    for pos, neg in ((layout.b_pos, layout.b_neg), (layout.w_pos[live], layout.w_neg[live])):
        common = np.minimum(x[pos], x[neg])
        x[pos] -= common
        x[neg] -= common
    return replace(solution, x=x)


@dataclass(frozen=True, eq=False)
class LpFit:
    model: CoefModel
    lam: float
    spec: PenaltySpec
    objective: float      # hinge + lam * penalty at the decoded model
    lp_objective: float
    solution: LpSolution

    @property
    def iterations(self) -> int:
        return self.solution.iterations


def fit_lp(data: Dataset, spec: PenaltySpec, lam: float,
           iteration_limit: int = DEFAULT_ITERATION_LIMIT) -> LpFit:
    """Build, solve and decode one penalized MSVM at a fixed lambda."""
    lp, layout = build_lp(data, spec, lam)
    sol = cancel_split_pairs(solve(lp, iteration_limit), layout)
    model = decode(sol, layout)
    obj = hinge_objective_loss(model, data) + lam * penalty_value(spec, model)
    return LpFit(model, lam, spec, obj, sol.objective, sol)
