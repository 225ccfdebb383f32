"""Simulation designs with known Bayes rules.

* FIVE_CLASS: ten inputs; (x1, x2) ~ N(mu_k, 2 I) around five points on a
  circle of radius 2, x3..x10 ~ N(0, 1); equal class sizes.
* FOUR_CLASS_LINEAR: x1..x4 ~ U[-1, 1], x5..x10 ~ N(0, 64); labels drawn
  with P(Y=k | x) proportional to exp(f_k(x)) for linear f_k.
* NONLINEAR_THREE_CLASS: x1 ~ U[-3, 3], x2 ~ U[-6, 6], x3..x5 ~ N(0, 4);
  quadratic f_k, fitted through a polynomial basis.

Every split draws from its own Philox stream derived from the design seed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import (BasisSpec, CoefModel, Dataset, basis_monomials, expand_basis,
                   predict_many)


class DesignKind(enum.Enum):
    FIVE_CLASS = "five-class"
    FOUR_CLASS_LINEAR = "four-class"
    NONLINEAR_THREE_CLASS = "nonlinear"


_N_CLASSES = {DesignKind.FIVE_CLASS: 5, DesignKind.FOUR_CLASS_LINEAR: 4,
              DesignKind.NONLINEAR_THREE_CLASS: 3}
_N_INPUTS = {DesignKind.FIVE_CLASS: 10, DesignKind.FOUR_CLASS_LINEAR: 10,
             DesignKind.NONLINEAR_THREE_CLASS: 5}

FIVE_CLASS_SIGMA1 = np.sqrt(2.0)
FIVE_CLASS_SIGMA2 = 1.0
FOUR_CLASS_NOISE_SD = 8.0
NONLINEAR_NOISE_SD = 2.0

_angles = (2 * np.arange(1, 6) - 1) * np.pi / 5
FIVE_CLASS_MEANS = 2.0 * np.column_stack([np.cos(_angles), np.sin(_angles)])

# rows f_1..f_4, columns x1..x4
FOUR_CLASS_COEF = np.array([
    [-5.0, 0.0, 0.0, 5.0],
    [5.0, 5.0, 0.0, 0.0],
    [0.0, -5.0, 5.0, 0.0],
    [0.0, 0.0, -5.0, -5.0],
])

# f_k = intercept + c1 x1 + c11 x1^2 + c22 x2^2
NONLINEAR_INTERCEPT = np.array([0.2, -0.4, 0.2])
NONLINEAR_TERMS = {
    (0,): np.array([-2.0, 0.0, 2.0]),
    (0, 0): np.array([0.2, -0.4, 0.2]),
    (1, 1): np.array([-0.1, 0.2, -0.1]),
}


def n_classes(kind: DesignKind) -> int:
    return _N_CLASSES[DesignKind(kind)]


def n_inputs(kind: DesignKind) -> int:
    return _N_INPUTS[DesignKind(kind)]


def default_basis(kind: DesignKind) -> BasisSpec:
    if DesignKind(kind) is DesignKind.NONLINEAR_THREE_CLASS:
        return BasisSpec(2, True)
    return BasisSpec(1, True)


@dataclass(frozen=True)
class SimDesign:
    kind: DesignKind
    n_train: int
    n_tune: int
    n_test: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", DesignKind(self.kind))
        if min(self.n_train, self.n_tune, self.n_test) < 1:
            raise ValueError("split sizes must be >= 1")
        if self.kind is DesignKind.FIVE_CLASS:
            for name in ("n_train", "n_tune", "n_test"):
                if getattr(self, name) % 5:
                    raise ValueError(f"five-class design needs {name} divisible by 5, "
                                     f"got {getattr(self, name)}")


@dataclass(frozen=True, eq=False)
class GroundTruth:
    bayes_model: CoefModel
    true_zero_pattern: np.ndarray
    relevant_vars: frozenset
    names: tuple[str, ...]
    bayes_error: float = np.nan
    bayes_error_se: float = np.nan


# --- sampling --------------------------------------------------------------

def _streams(seed: int, count: int):
    return [np.random.Generator(np.random.Philox(s))
            for s in np.random.SeedSequence(seed).spawn(count)]


def _draw_from_scores(rng, f):
    """Sample labels with P(Y=k) proportional to exp(f_k)."""
    f = f - f.max(axis=1, keepdims=True)
    p = np.exp(f)
    cdf = np.cumsum(p, axis=1)
    u = rng.random(f.shape[0]) * cdf[:, -1]
    return (cdf < u[:, None]).sum(axis=1) + 1


def sample_inputs_labels(kind: DesignKind, n: int, rng, stratified: bool = True):
    """Raw inputs and labels for ``n`` draws from a design."""
    kind = DesignKind(kind)
    if kind is DesignKind.FIVE_CLASS:
        if stratified:
            if n % 5:
                raise ValueError("stratified five-class draws need n divisible by 5")
            y = np.repeat(np.arange(1, 6), n // 5)
        else:
            y = rng.integers(1, 6, size=n)
        x12 = FIVE_CLASS_MEANS[y - 1] + FIVE_CLASS_SIGMA1 * rng.standard_normal((n, 2))
        noise = FIVE_CLASS_SIGMA2 * rng.standard_normal((n, 8))
        X = np.column_stack([x12, noise])
        order = rng.permutation(n)
        return X[order], y[order]
    if kind is DesignKind.FOUR_CLASS_LINEAR:
        X = np.column_stack([rng.uniform(-1, 1, (n, 4)),
                             FOUR_CLASS_NOISE_SD * rng.standard_normal((n, 6))])
    else:
        X = np.column_stack([rng.uniform(-3, 3, n), rng.uniform(-6, 6, n),
                             NONLINEAR_NOISE_SD * rng.standard_normal((n, 3))])
    y = _draw_from_scores(rng, true_scores(kind, X))
    return X, y


def true_scores(kind: DesignKind, X) -> np.ndarray:
    """The design's ``f_k(x)`` (log class-probability up to a constant)."""
    kind = DesignKind(kind)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if kind is DesignKind.FIVE_CLASS:
        # log N(mu_k, s^2 I) density up to a constant
        diff = X[:, None, :2] - FIVE_CLASS_MEANS[None]
        return -np.sum(diff ** 2, axis=2) / (2 * FIVE_CLASS_SIGMA1 ** 2)
    if kind is DesignKind.FOUR_CLASS_LINEAR:
        return X[:, :4] @ FOUR_CLASS_COEF.T
    f = np.tile(NONLINEAR_INTERCEPT, (X.shape[0], 1))
    for mono, coef in NONLINEAR_TERMS.items():
        f += np.prod(X[:, list(mono)], axis=1)[:, None] * coef
    return f


def bayes_predict(kind: DesignKind, X) -> np.ndarray:
    """Bayes-optimal labels; noise coordinates are ignored."""
    return np.argmax(true_scores(kind, X), axis=1) + 1


def estimate_bayes_error(kind: DesignKind, n_mc: int = 50_000, seed: int = 0):
    """Monte-Carlo Bayes error with its binomial standard error."""
    if n_mc < 1000:
        raise ValueError("n_mc must be at least 1000")
    rng = _streams(seed, 1)[0]
    X, y = sample_inputs_labels(kind, n_mc, rng, stratified=False)
    err = float(np.mean(bayes_predict(kind, X) != y))
    return err, float(np.sqrt(err * (1 - err) / n_mc))


# --- ground truth ----------------------------------------------------------

def _input_names(kind):
    return tuple(f"x{j + 1}" for j in range(n_inputs(kind)))


def bayes_coefficients(kind: DesignKind, basis: BasisSpec | None = None) -> tuple[CoefModel, tuple[str, ...]]:
    """Bayes decision functions as a sum-to-zero linear model over the basis."""
    kind = DesignKind(kind)
    basis = default_basis(kind) if basis is None else basis
    K, d0 = n_classes(kind), n_inputs(kind)
    monos = basis_monomials(d0, basis)
    W = np.zeros((K, len(monos)))
    if kind is DesignKind.FIVE_CLASS:
        b = -np.sum(FIVE_CLASS_MEANS ** 2, axis=1) / (2 * FIVE_CLASS_SIGMA1 ** 2)
        lin = FIVE_CLASS_MEANS / FIVE_CLASS_SIGMA1 ** 2
        terms = {(0,): lin[:, 0], (1,): lin[:, 1]}
    elif kind is DesignKind.FOUR_CLASS_LINEAR:
        b = np.zeros(K)
        terms = {(j,): FOUR_CLASS_COEF[:, j] for j in range(4)}
    else:
        b = NONLINEAR_INTERCEPT.copy()
        terms = NONLINEAR_TERMS
    index = {m: i for i, m in enumerate(monos)}
    for mono, coef in terms.items():
        if mono not in index:
            raise ValueError(f"basis {basis} cannot represent the Bayes rule")
        W[:, index[mono]] = coef
    W -= W.mean(axis=0)
    b -= b.mean()
    # sin(pi) and friends: clean round-off so zeros are exact
    W[np.abs(W) < 1e-12] = 0.0
    b[np.abs(b) < 1e-12] = 0.0
    names = expand_basis(Dataset(np.zeros((1, d0)), [1], K, _input_names(kind)), basis).names
    return CoefModel(W, b), names


def ground_truth(kind: DesignKind, basis: BasisSpec | None = None,
                 bayes_error: float = np.nan, bayes_error_se: float = np.nan) -> GroundTruth:
    model, names = bayes_coefficients(kind, basis)
    zero = model.W == 0.0
    relevant = frozenset(int(j) for j in np.flatnonzero(~zero.all(axis=0)))
    return GroundTruth(model, zero, relevant, names, bayes_error, bayes_error_se)


def generate(design: SimDesign, basis: BasisSpec | None = None):
    """Draw train/tune/test splits and the ground truth in the basis' coordinates."""
    kind = design.kind
    basis = default_basis(kind) if basis is None else basis
    K = n_classes(kind)
    names = _input_names(kind)
    splits = []
    for rng, n in zip(_streams(design.seed, 3), (design.n_train, design.n_tune, design.n_test)):
        X, y = sample_inputs_labels(kind, n, rng)
        data = Dataset(X, y, K, names)
        if basis != BasisSpec(1, True):
            data = expand_basis(data, basis)
        splits.append(data)
    return splits[0], splits[1], splits[2], ground_truth(kind, basis)


def bayes_predict_expanded(truth: GroundTruth, data: Dataset) -> np.ndarray:
    """Bayes labels computed from the basis-space coefficient model."""
    return predict_many(truth.bayes_model, data.features)
