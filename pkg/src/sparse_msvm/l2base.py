"""Standard (L2-penalized) MSVM by projected subgradient descent.

The tuned L2 solution is only used to build adaptive weights, so a first-order
method that gets the coefficient magnitudes right is sufficient.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import CoefModel, Dataset, PenaltyKind, PenaltySpec, column_sup_norms

EPS_ZERO = 1e-4


@dataclass(frozen=True)
class L2FitConfig:
    max_iters: int = 20000
    step0: float = 1.0
    tol: float = 1e-6
    window: int = 100

    def __post_init__(self):
        if self.max_iters <= 0 or self.step0 <= 0 or self.tol <= 0 or self.window <= 0:
            raise ValueError("L2FitConfig fields must be positive")


@dataclass(frozen=True, eq=False)
class L2Fit:
    model: CoefModel
    lam: float
    objective: float
    converged: bool
    iterations: int


def l2_objective(W, b, data: Dataset, lam):
    """Objective of the L2 MSVM; ``W``/``b`` may carry a leading batch axis."""
    W = np.asarray(W, dtype=float)
    b = np.asarray(b, dtype=float)
    hinge, _, _ = _hinge_and_subgradient(W, b, data.features, _off_target(data))
    return hinge + np.asarray(lam) * np.sum(W ** 2, axis=(-2, -1))


def quadratic_penalty_gradient(W, lam):
    """Gradient of ``lam * sum(W**2)``."""
    return 2.0 * lam * np.asarray(W, dtype=float)


def _off_target(data: Dataset) -> np.ndarray:
    a = np.ones((data.n, data.k_classes))
    a[np.arange(data.n), data.labels - 1] = 0.0
    return a / data.n


def _hinge_and_subgradient(W, b, X, a):
    """Hinge term and one subgradient, batched over leading axes of ``W``."""
    f = np.einsum("nd,...kd->...nk", X, W) + b[..., None, :]
    act = (f > -1.0) * a
    hinge = np.sum(np.maximum(f + 1.0, 0.0) * a, axis=(-2, -1))
    gW = np.einsum("...nk,nd->...kd", act, X)
    gb = act.sum(axis=-2)
    return hinge, gW, gb


def fit_l2_grid(data: Dataset, lambdas, config: L2FitConfig = L2FitConfig()) -> list[L2Fit]:
    """Fit the L2 MSVM for every lambda at once.

    Each iteration takes a subgradient step on the hinge term, applies the
    quadratic penalty exactly (a shrink by ``1 / (1 + 2 lam step)``), and
    projects onto the sum-to-zero subspace. The best objective over the
    iterates and their running average is kept per lambda.
    """
    lam = np.asarray(lambdas, dtype=float)
    if lam.ndim != 1 or np.any(lam <= 0):
        raise ValueError("lambdas must be a 1-d array of positive values")
    L, K, d = lam.size, data.k_classes, data.d
    X, a = data.features, _off_target(data)

    W = np.zeros((L, K, d))
    b = np.zeros((L, K))
    W_avg, b_avg = W.copy(), b.copy()
    best_W, best_b = W.copy(), b.copy()
    best = np.full(L, np.inf)
    prev_best = None
    active = np.ones(L, dtype=bool)
    converged = np.zeros(L, dtype=bool)
    iters = np.zeros(L, dtype=int)

    for t in range(1, config.max_iters + 1):
        idx = np.flatnonzero(active)
        Wa, ba, la = W[idx], b[idx], lam[idx]
        hinge, gW, gb = _hinge_and_subgradient(Wa, ba, X, a)
        obj = hinge + la * np.sum(Wa ** 2, axis=(1, 2))
        better = obj < best[idx]
        best[idx[better]] = obj[better]
        best_W[idx[better]], best_b[idx[better]] = Wa[better], ba[better]

        step = config.step0 / np.sqrt(t)
        shrink = 1.0 / (1.0 + 2.0 * la * step)
        Wa = (Wa - step * gW) * shrink[:, None, None]
        ba = ba - step * gb
        Wa -= Wa.mean(axis=1, keepdims=True)
        ba -= ba.mean(axis=1, keepdims=True)
        W[idx], b[idx] = Wa, ba
        W_avg[idx] += (Wa - W_avg[idx]) / (t + 1)
        b_avg[idx] += (ba - b_avg[idx]) / (t + 1)
        iters[idx] = t

        if t % config.window == 0:
            avg_obj = l2_objective(W_avg[idx], b_avg[idx], data, la)
            better = avg_obj < best[idx]
            best[idx[better]] = avg_obj[better]
            best_W[idx[better]], best_b[idx[better]] = W_avg[idx[better]], b_avg[idx[better]]
            if prev_best is not None:
                done = prev_best[idx] - best[idx] <= config.tol * np.maximum(np.abs(best[idx]), 1e-12)
                converged[idx[done]] = True
                active[idx[done]] = False
            prev_best = best.copy()
            if not active.any():
                break

    out = []
    for i in range(L):
        Wi, bi = best_W[i], best_b[i]
        Wi = Wi - Wi.mean(axis=0)
        bi = bi - bi.mean()
        out.append(L2Fit(CoefModel(Wi, bi), float(lam[i]), float(best[i]),
                         bool(converged[i]), int(iters[i])))
    return out


def fit_l2(data: Dataset, lam: float, config: L2FitConfig = L2FitConfig()) -> L2Fit:
    return fit_l2_grid(data, [lam], config)[0]


class WeightMode(enum.Enum):
    PER_COEFFICIENT = "per-coefficient"
    PER_VARIABLE = "per-variable"


def adaptive_weights(w_tilde: CoefModel, mode: WeightMode, eps_zero: float = EPS_ZERO) -> np.ndarray:
    """Reciprocal-magnitude weights ``1/|w|`` (per coefficient) or ``1/max_k |w_kj|``
    (per variable).

    Magnitudes at or below ``eps_zero`` times the largest magnitude get an
    infinite weight, so the set of pinned coefficients does not depend on the
    overall scale of ``w_tilde``.
    """
    mode = WeightMode(mode)
    mag = np.abs(w_tilde.W) if mode is WeightMode.PER_COEFFICIENT else column_sup_norms(w_tilde.W)
    cutoff = eps_zero * float(np.max(mag, initial=0.0))
    dead = (mag <= cutoff) | (mag == 0)
    return np.where(dead, np.inf, 1.0 / np.where(dead, 1.0, mag))


def adaptive_penalty(kind: PenaltyKind, w_tilde: CoefModel, eps_zero: float = EPS_ZERO) -> PenaltySpec:
    kind = PenaltyKind(kind)
    if kind is PenaltyKind.ADAPTIVE_SUP_I:
        return PenaltySpec(kind, tau_vector=adaptive_weights(w_tilde, WeightMode.PER_VARIABLE, eps_zero))
    if kind in (PenaltyKind.ADAPTIVE_L1, PenaltyKind.ADAPTIVE_SUP_II):
        return PenaltySpec(kind, tau_matrix=adaptive_weights(w_tilde, WeightMode.PER_COEFFICIENT, eps_zero))
    raise ValueError(f"{kind.value} is not an adaptive penalty")
