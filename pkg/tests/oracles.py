"""Brute-force reference computations used by the tests.

Nothing here calls into the code paths being checked.
"""

import itertools
from math import comb

import numpy as np

from sparse_msvm.simplex import LinearProgram, Sense


def to_equality_form(lp: LinearProgram):
    """Independent conversion to ``A z = b, z >= 0``; returns (A, b, c, back)."""
    cols, costs, back = [], [], []
    for j in range(lp.n_vars):
        cols.append(lp.a_matrix[:, j])
        costs.append(lp.costs[j])
        back.append((j, 1.0))
        if lp.lower[j] == -np.inf:
            cols.append(-lp.a_matrix[:, j])
            costs.append(-lp.costs[j])
            back.append((j, -1.0))
    for i, s in enumerate(lp.senses):
        if s is Sense.EQ:
            continue
        e = np.zeros(lp.n_rows)
        e[i] = 1.0 if s is Sense.LE else -1.0
        cols.append(e)
        costs.append(0.0)
        back.append((None, 0.0))
    A = np.column_stack(cols) if cols else np.zeros((lp.n_rows, 0))
    return A, lp.rhs.copy(), np.array(costs), back


def _basic_solutions(A, b, tol=1e-9):
    p, M = A.shape
    r = np.linalg.matrix_rank(A) if A.size else 0
    if r == 0:
        if np.all(np.abs(b) <= tol):
            yield np.zeros(M)
        return
    for S in itertools.combinations(range(M), r):
        B = A[:, S]
        if np.linalg.matrix_rank(B) < r:
            continue
        zS, *_ = np.linalg.lstsq(B, b, rcond=None)
        if np.max(np.abs(B @ zS - b)) > tol * (1 + np.max(np.abs(b))):
            continue
        if np.min(zS) < -tol:
            continue
        z = np.zeros(M)
        z[list(S)] = np.maximum(zS, 0.0)
        yield z


def enumerate_lp(lp: LinearProgram):
    """Return ``("optimal", value)``, ``("infeasible", None)`` or ``("unbounded", None)``.

    Vertices: every basic feasible solution of the equality form. Rays: every
    basic feasible solution of ``A d = 0, sum(d) = 1, d >= 0``; a ray with
    negative cost on a feasible problem means unbounded.
    """
    A, b, c, _ = to_equality_form(lp)
    values = [c @ z for z in _basic_solutions(A, b)]
    if not values:
        return "infeasible", None
    R = np.vstack([A, np.ones((1, A.shape[1]))])
    rhs = np.r_[np.zeros(A.shape[0]), 1.0]
    for d in _basic_solutions(R, rhs):
        if c @ d < -1e-9:
            return "unbounded", None
    return "optimal", float(min(values))


def enumeration_cost(lp: LinearProgram) -> int:
    A, _, _, _ = to_equality_form(lp)
    return comb(A.shape[1], min(A.shape[0] + 1, A.shape[1]))


def random_lp(rng, max_vars=8, max_rows=8, budget=6000):
    """Small random LP with integer data; mixes senses, free variables and
    degenerate right-hand sides."""
    while True:
        m = int(rng.integers(1, max_vars + 1))
        p = int(rng.integers(1, max_rows + 1))
        A = rng.integers(-3, 4, size=(p, m)).astype(float)
        rhs = rng.integers(-4, 5, size=p).astype(float)
        if rng.random() < 0.3:
            rhs[rng.random(p) < 0.5] = 0.0
        c = rng.integers(-4, 5, size=m).astype(float)
        senses = tuple(rng.choice([Sense.LE, Sense.GE, Sense.EQ], p=[0.5, 0.3, 0.2])
                       for _ in range(p))
        lower = np.where(rng.random(m) < 0.2, -np.inf, 0.0)
        if rng.random() < 0.4:
            # bounding box keeps many instances bounded
            A = np.vstack([A, np.eye(m)])
            rhs = np.r_[rhs, np.full(m, 5.0)]
            senses = senses + (Sense.LE,) * m
            lower = np.zeros(m)
        lp = LinearProgram(c, A, senses, rhs, lower)
        if lp.n_rows <= max_rows + (m if lp.n_rows > max_rows else 0) and enumeration_cost(lp) <= budget:
            if lp.n_rows <= max_rows:
                return lp


def msvm_objective_grid_oracle(data, lam, penalty, grid, chunk=200_000):
    """Minimize hinge + lam * penalty over a lattice of sum-to-zero models.

    ``penalty`` maps a stack of K x d matrices to one number each. The
    parameterization uses the first K-1 rows (the last row is minus their
    sum) and the first K-1 intercepts.
    """
    K, d = data.k_classes, data.d
    n_free = (K - 1) * (d + 1)
    X = data.features
    a = np.ones((data.n, K))
    a[np.arange(data.n), data.labels - 1] = 0.0
    grid = np.asarray(grid, dtype=float)
    total = len(grid) ** n_free
    best = np.inf
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        digits = np.stack(np.unravel_index(idx, (len(grid),) * n_free), axis=1)
        theta = grid[digits]
        Wf = theta[:, : (K - 1) * d].reshape(-1, K - 1, d)
        bf = theta[:, (K - 1) * d:]
        W = np.concatenate([Wf, -Wf.sum(axis=1, keepdims=True)], axis=1)
        b = np.concatenate([bf, -bf.sum(axis=1, keepdims=True)], axis=1)
        f = np.einsum("nd,mkd->mnk", X, W) + b[:, None, :]
        vals = np.sum(a * np.maximum(f + 1, 0), axis=(1, 2)) / data.n + lam * penalty(W)
        best = min(best, float(vals.min()))
    return best


def msvm_highs_oracle(data, lam, kind="l1", tau=None, return_model=False):
    """Optimal objective of the L1 or sup-norm MSVM from HiGHS.

    Written from the problem statement with free b and W (no sign split), so
    it shares no modelling code with the package.
    """
    from scipy.optimize import linprog

    n, K, d = data.n, data.k_classes, data.d
    X, y = data.features, data.labels
    nb, nw = K, K * d
    # variables: b (K, free), W (K*d, free), t = |W| bounds (K*d), xi (n*K), eta (d)
    n_eta = d if kind == "sup" else 0
    off_t, off_xi = nb + nw, nb + 2 * nw
    off_eta = off_xi + n * K
    nv = off_eta + n_eta
    c = np.zeros(nv)
    tau = np.ones((K, d)) if tau is None else np.asarray(tau, float)
    if kind == "l1":
        c[off_t:off_xi] = lam * tau.ravel()
    else:
        c[off_eta:] = lam
    for i in range(n):
        for k in range(K):
            if y[i] != k + 1:
                c[off_xi + i * K + k] = 1.0 / n
    A_ub, b_ub = [], []
    for i in range(n):
        for k in range(K):
            if y[i] == k + 1:
                continue
            row = np.zeros(nv)   # b_k + w_k.x_i - xi_ik <= -1
            row[k] = 1.0
            row[nb + k * d: nb + (k + 1) * d] = X[i]
            row[off_xi + i * K + k] = -1.0
            A_ub.append(row)
            b_ub.append(-1.0)
    for q in range(nw):
        for s in (1.0, -1.0):   # +-w <= t
            row = np.zeros(nv)
            row[nb + q] = s
            row[off_t + q] = -1.0
            A_ub.append(row)
            b_ub.append(0.0)
        if kind == "sup":   # t_kj <= eta_j
            row = np.zeros(nv)
            row[off_t + q] = 1.0
            row[off_eta + q % d] = -1.0
            A_ub.append(row)
            b_ub.append(0.0)
    A_eq = np.zeros((1 + d, nv))
    A_eq[0, :K] = 1.0
    for j in range(d):
        A_eq[1 + j, nb + j: nb + nw: d] = 1.0
    bounds = [(None, None)] * (nb + nw) + [(0, None)] * (nv - nb - nw)
    res = linprog(c, A_ub=np.array(A_ub), b_ub=b_ub, A_eq=A_eq, b_eq=np.zeros(1 + d),
                  bounds=bounds, method="highs")
    assert res.status == 0, res.message
    if return_model:
        return float(res.fun), res.x[nb:nb + nw].reshape(K, d), res.x[:nb]
    return float(res.fun)


def l2_lattice_oracle(data, lam, half_width=2.0, points=5, rounds=40):
    """Minimize the L2 MSVM objective by shrinking full-lattice searches over
    the free parameters (first K-1 rows of W and b)."""
    K, d = data.k_classes, data.d
    X = data.features
    a = np.ones((data.n, K))
    a[np.arange(data.n), data.labels - 1] = 0.0
    n_free = (K - 1) * (d + 1)
    offsets = np.array(list(itertools.product(np.linspace(-1, 1, points), repeat=n_free)))

    def objective(theta):
        Wf = theta[:, : (K - 1) * d].reshape(-1, K - 1, d)
        bf = theta[:, (K - 1) * d:]
        W = np.concatenate([Wf, -Wf.sum(axis=1, keepdims=True)], axis=1)
        b = np.concatenate([bf, -bf.sum(axis=1, keepdims=True)], axis=1)
        f = np.einsum("nd,mkd->mnk", X, W) + b[:, None, :]
        hinge = np.sum(a * np.maximum(f + 1, 0), axis=(1, 2)) / data.n
        return hinge + lam * np.sum(W ** 2, axis=(1, 2))

    centre = np.zeros(n_free)
    width = half_width
    best = float(objective(centre[None])[0])
    for _ in range(rounds):
        vals = objective(centre + width * offsets)
        i = int(np.argmin(vals))
        if vals[i] < best:
            best = float(vals[i])
            centre = centre + width * offsets[i]
        else:
            width *= 0.5
    return best
