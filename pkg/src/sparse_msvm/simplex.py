"""Two-phase revised simplex method.

Problems are stated as::

    minimize    c @ x
    subject to  A[i] @ x  (<= | >= | ==)  rhs[i]
                x_j >= 0  or  x_j free

and converted to ``A' z = b', z >= 0`` by adding slack/surplus columns and
splitting free variables. Most basis columns of the MSVM programs are
singletons (slacks, hinge variables), so the basis is factorized as a
diagonal part plus a small dense LU on the rows the singletons leave
uncovered. Pivots between refactorizations are applied as product-form eta
updates; a fresh factorization is taken every ``REFACTOR_EVERY`` pivots.

Heavily degenerate programs are first solved with a slightly loosened
right-hand side; the optimal basis found there is then checked against the
original right-hand side, with a plain solve as fallback.

Pricing uses Dantzig's rule; after a long run of degenerate pivots it falls
back to Bland's smallest-index rule, which cannot cycle.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.sparse import csr_matrix

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7
OPT_TOL = 1e-9
REFACTOR_EVERY = 50
DEFAULT_ITERATION_LIMIT = 100_000


class Sense(enum.Enum):
    LE = "<="
    GE = ">="
    EQ = "=="


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True, eq=False)
class LinearProgram:
    costs: np.ndarray
    a_matrix: np.ndarray
    senses: tuple[Sense, ...]
    rhs: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.costs, dtype=float)
        A = np.asarray(self.a_matrix, dtype=float)
        rhs = np.asarray(self.rhs, dtype=float)
        m = c.shape[0]
        if A.ndim != 2 or A.shape[1] != m:
            A = A.reshape(-1, m) if A.size == 0 else A
            if A.shape[1] != m:
                raise ValueError(f"a_matrix has {A.shape[1]} columns, costs has {m}")
        p = A.shape[0]
        senses = tuple(Sense(s) for s in self.senses)
        if len(senses) != p or rhs.shape != (p,):
            raise ValueError(f"{p} rows but {len(senses)} senses and {rhs.shape[0]} rhs entries")
        lower = np.zeros(m) if self.lower is None else np.asarray(self.lower, dtype=float)
        upper = np.full(m, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        if lower.shape != (m,) or upper.shape != (m,):
            raise ValueError("bounds must have one entry per variable")
        if not np.all((lower == 0) | (lower == -np.inf)):
            raise ValueError("lower bounds must be 0 or -inf")
        if not np.all(upper == np.inf):
            raise ValueError("upper bounds must be +inf")
        for name, arr in (("costs", c), ("a_matrix", A), ("rhs", rhs)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
        object.__setattr__(self, "costs", c)
        object.__setattr__(self, "a_matrix", A)
        object.__setattr__(self, "senses", senses)
        object.__setattr__(self, "rhs", rhs)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def n_vars(self) -> int:
        return self.costs.shape[0]

    @property
    def n_rows(self) -> int:
        return self.a_matrix.shape[0]

    def residual(self, x) -> float:
        """Largest constraint violation, relative to ``1 + |rhs_i|``."""
        x = np.asarray(x, dtype=float)
        ax = self.a_matrix @ x
        viol = np.zeros(self.n_rows)
        for i, s in enumerate(self.senses):
            if s is Sense.LE:
                viol[i] = max(ax[i] - self.rhs[i], 0.0)
            elif s is Sense.GE:
                viol[i] = max(self.rhs[i] - ax[i], 0.0)
            else:
                viol[i] = abs(ax[i] - self.rhs[i])
        viol /= 1.0 + np.abs(self.rhs)
        bound_viol = np.maximum(self.lower - x, 0.0)
        return float(max(viol.max(initial=0.0), bound_viol.max(initial=0.0)))


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: LpStatus
    x: np.ndarray | None
    objective: float
    iterations: int
    max_primal_residual: float
    min_reduced_cost: float = 0.0


@dataclass(frozen=True, eq=False)
class StandardForm:
    """``A z = b, z >= 0`` plus the map back to the original variables.

    ``pos_col[j]`` is the column carrying ``x_j`` (or its positive part);
    ``neg_col[j]`` the negative-part column of a split free variable, else -1.
    """

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    pos_col: np.ndarray
    neg_col: np.ndarray
    n_split: int
    n_slack: int
    slack_col: np.ndarray  # per row, -1 for equality rows

    def recover(self, z: np.ndarray) -> np.ndarray:
        x = z[self.pos_col].copy()
        split = self.neg_col >= 0
        x[split] -= z[self.neg_col[split]]
        return x


def standardize(lp: LinearProgram) -> StandardForm:
    m, p = lp.n_vars, lp.n_rows
    free = np.flatnonzero(lp.lower == -np.inf)
    slack_rows = [i for i, s in enumerate(lp.senses) if s is not Sense.EQ]
    M = m + free.size + len(slack_rows)
    A = np.zeros((p, M))
    A[:, :m] = lp.a_matrix
    A[:, m:m + free.size] = -lp.a_matrix[:, free]
    c = np.zeros(M)
    c[:m] = lp.costs
    c[m:m + free.size] = -lp.costs[free]
    slack_col = np.full(p, -1)
    for t, i in enumerate(slack_rows):
        col = m + free.size + t
        A[i, col] = 1.0 if lp.senses[i] is Sense.LE else -1.0
        slack_col[i] = col
    neg_col = np.full(m, -1)
    neg_col[free] = m + np.arange(free.size)
    return StandardForm(A, lp.rhs.copy(), c, np.arange(m), neg_col,
                        int(free.size), len(slack_rows), slack_col)


class _Basis:
    """Factorization of a basis whose columns are mostly singletons.

    Slack, surplus, hinge and artificial columns have a single nonzero, so a
    basis ``B`` splits into singleton columns ``E`` (one per covered row) and
    a few dense columns ``C``. With ``R2`` the rows no singleton covers,
    ``B z = a`` reduces to the small dense system ``C[R2] z_C = a[R2]``
    followed by a diagonal back-substitution for the singletons.
    """

    def __init__(self, A, single_row, single_val, basis):
        p = A.shape[0]
        sing = single_row[basis] >= 0
        self.spos = np.flatnonzero(sing)           # basis positions of singletons
        self.cpos = np.flatnonzero(~sing)          # basis positions of dense columns
        self.srow = single_row[basis[self.spos]]
        self.sval = single_val[basis[self.spos]]
        covered = np.zeros(p, dtype=bool)
        covered[self.srow] = True
        self.r2 = np.flatnonzero(~covered)
        if self.r2.size != self.cpos.size:
            raise np.linalg.LinAlgError("singular basis")
        ccols = basis[self.cpos]
        self.Cs = A[np.ix_(self.srow, ccols)]
        if self.cpos.size:
            self.lu = lu_factor(A[np.ix_(self.r2, ccols)], check_finite=False)
            if np.min(np.abs(np.diag(self.lu[0]))) < 1e-13:
                raise np.linalg.LinAlgError("singular basis")
        self.p = p
        self.etas: list[tuple[int, np.ndarray]] = []

    def update(self, r, u):
        """Record the pivot that replaces basis position ``r``; ``u = B^-1 a_q``."""
        self.etas.append((r, u.copy()))

    def ftran(self, a):
        """Solve ``B u = a``; ``u`` is indexed by basis position."""
        u = self._ftran0(a)
        for r, e in self.etas:
            t = u[r] / e[r]
            u -= t * e
            u[r] = t
        return u

    def btran(self, cb):
        """Solve ``B^T y = cb``."""
        if self.etas:
            cb = cb.copy()
            for r, e in reversed(self.etas):
                cb[r] = (cb[r] - (e @ cb - e[r] * cb[r])) / e[r]
        return self._btran0(cb)

    def _ftran0(self, a):
        u = np.empty(self.p)
        if self.cpos.size:
            zc = lu_solve(self.lu, a[self.r2], check_finite=False)
            u[self.cpos] = zc
            u[self.spos] = (a[self.srow] - self.Cs @ zc) / self.sval
        else:
            u[self.spos] = a[self.srow] / self.sval
        return u

    def _btran0(self, cb):
        y = np.zeros(self.p)
        y[self.srow] = cb[self.spos] / self.sval
        if self.cpos.size:
            rhs = cb[self.cpos] - self.Cs.T @ y[self.srow]
            y[self.r2] = lu_solve(self.lu, rhs, trans=1, check_finite=False)
        return y


class _Tableau:
    """Revised-simplex state over ``[A | artificials]``."""

    def __init__(self, A, b, iteration_limit, costs):
        self.p, self.n_struct = A.shape
        self.costs = costs
        self.iteration_limit = iteration_limit
        self.iterations = 0
        sign = np.where(b < 0, -1.0, 1.0)
        self.sign = sign
        A = A * sign[:, None]
        b = b * sign
        nnz = np.count_nonzero(A, axis=0)
        basis = np.full(self.p, -1)
        # crash basis: a column whose only nonzero sits in row i with a positive
        # entry gives a feasible start for that row without an artificial
        cols = np.flatnonzero(nnz == 1)
        rows = np.argmax(A[:, cols] != 0, axis=0)
        good = A[rows, cols] > 0
        rows, cols = rows[good], cols[good]
        # first such column per row, as a left-to-right scan would pick
        first = np.unique(rows, return_index=True)[1]
        basis[rows[first]] = cols[first]
        need = np.flatnonzero(basis < 0)
        self.n_art = need.size
        n_total = self.n_struct + self.n_art
        self.A = np.zeros((self.p, n_total))
        self.A[:, :self.n_struct] = A
        self.A[need, self.n_struct + np.arange(self.n_art)] = 1.0
        basis[need] = self.n_struct + np.arange(self.n_art)
        self.AT = csr_matrix(self.A.T)
        self.single_row = np.full(n_total, -1)
        self.single_val = np.zeros(n_total)
        nnz = np.count_nonzero(self.A, axis=0)
        cols = np.flatnonzero(nnz == 1)
        rows = np.argmax(self.A[:, cols] != 0, axis=0)
        self.single_row[cols] = rows
        self.single_val[cols] = self.A[rows, cols]
        self.b = b
        self.basis = basis
        self.is_basic = np.zeros(n_total, dtype=bool)
        self.is_basic[basis] = True
        self.refactor()

    def set_rhs(self, b):
        """Swap in a new right-hand side (original row orientation) and refactor."""
        self.b = b * self.sign
        self.refactor()

    def refactor(self):
        self.fac = _Basis(self.A, self.single_row, self.single_val, self.basis)
        self.xB = self.fac.ftran(self.b)
        small = (self.xB < 0) & (self.xB > -FEAS_TOL)
        self.xB[small] = 0.0
        self.since_refactor = 0

    def run(self, c, allowed):
        """Iterate until optimal; returns an LpStatus."""
        p = self.p
        degenerate_run = 0
        bland_after = 3 * (p + self.A.shape[1])
        while True:
            y = self.fac.btran(c[self.basis])
            d = c - self.AT @ y
            cand = allowed & ~self.is_basic & (d < -OPT_TOL)
            if not cand.any():
                self.reduced = d
                return LpStatus.OPTIMAL
            if self.iterations >= self.iteration_limit:
                return LpStatus.ITERATION_LIMIT
            bland = degenerate_run >= bland_after
            if bland:
                q = int(np.argmax(cand))
            else:
                q = int(np.argmin(np.where(cand, d, np.inf)))
            u = self.fac.ftran(self.A[:, q])
            pos = u > PIVOT_TOL
            if not pos.any():
                return LpStatus.UNBOUNDED
            ratios = np.full(p, np.inf)
            ratios[pos] = np.maximum(self.xB[pos], 0.0) / u[pos]
            theta = ratios.min()
            ties = np.flatnonzero(ratios <= theta + 1e-12 * max(1.0, theta))
            if bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(u[ties])])
            theta = ratios[r]
            self.pivot(r, q, u, theta)
            degenerate_run = degenerate_run + 1 if theta <= FEAS_TOL * 1e-3 else 0

    def pivot(self, r, q, u, theta):
        self.iterations += 1
        self.xB -= theta * u
        self.xB[r] = theta
        self.is_basic[self.basis[r]] = False
        self.basis[r] = q
        self.is_basic[q] = True
        self.since_refactor += 1
        if self.since_refactor >= REFACTOR_EVERY:
            self.refactor()
        else:
            self.fac.update(r, u)

    def drive_out_artificials(self):
        """Pivot zero-level artificials out of the basis where possible.

        An artificial that cannot leave sits on a redundant row and stays at 0.
        """
        for r in range(self.p):
            if self.basis[r] < self.n_struct:
                continue
            e = np.zeros(self.p)
            e[r] = 1.0
            row = self.AT[:self.n_struct] @ self.fac.btran(e)
            row[self.is_basic[:self.n_struct]] = 0.0
            j = int(np.argmax(np.abs(row)))
            if abs(row[j]) > 1e-7:
                u = self.fac.ftran(self.A[:, j])
                self.pivot(r, j, u, 0.0)
                self.xB[r] = 0.0


PERTURB_SCALE = 1e-6


def _loosened_rhs(sf: StandardForm) -> np.ndarray:
    """Right-hand side with every inequality row relaxed by a small random amount.

    The slack coefficient gives the loosening direction (``+`` for ``<=``,
    ``-`` for ``>=``); equality rows are left alone so redundant equalities
    stay consistent. The draw is seeded, so solves stay deterministic.
    """
    rng = np.random.default_rng(0)
    rows = np.flatnonzero(sf.slack_col >= 0)
    b = sf.b.astype(float).copy()
    delta = PERTURB_SCALE * (1.0 + np.abs(b[rows])) * rng.uniform(1.0, 2.0, rows.size)
    b[rows] += delta * sf.A[rows, sf.slack_col[rows]]
    return b


def _two_phase(tab: _Tableau):
    n_struct = tab.n_struct
    n_total = tab.A.shape[1]
    if tab.n_art:
        c1 = np.zeros(n_total)
        c1[n_struct:] = 1.0
        status = tab.run(c1, np.ones(n_total, dtype=bool))
        if status is LpStatus.ITERATION_LIMIT:
            return status
        tab.refactor()
        art_level = float(np.sum(tab.xB[tab.basis >= n_struct]))
        if art_level > FEAS_TOL:
            return LpStatus.INFEASIBLE
        tab.drive_out_artificials()
        tab.refactor()
    c2 = np.zeros(n_total)
    c2[:n_struct] = tab.costs
    allowed = np.zeros(n_total, dtype=bool)
    allowed[:n_struct] = True
    return tab.run(c2, allowed)


def _optimal_solution(lp, sf, tab) -> LpSolution | None:
    """Solution at the final basis, or None if that basis is not primal feasible."""
    n_struct = tab.n_struct
    if np.min(tab.xB, initial=0.0) < -FEAS_TOL:
        return None
    if np.any(tab.xB[tab.basis >= n_struct] > FEAS_TOL):
        return None
    z = np.zeros(tab.A.shape[1])
    z[tab.basis] = np.maximum(tab.xB, 0.0)
    x = sf.recover(z[:n_struct])
    min_rc = float(np.min(tab.reduced[:n_struct][~tab.is_basic[:n_struct]], initial=0.0))
    return LpSolution(LpStatus.OPTIMAL, x, float(lp.costs @ x), tab.iterations,
                      lp.residual(x), min_rc)


def solve(lp: LinearProgram, iteration_limit: int = DEFAULT_ITERATION_LIMIT) -> LpSolution:
    """Solve ``lp`` with the two-phase revised simplex method.

    The first attempt runs on a slightly loosened right-hand side, which
    breaks the ties that make the MSVM LPs heavily degenerate. Its final
    basis is then re-evaluated at the true right-hand side; reduced costs do
    not depend on it, so a primal-feasible basis is optimal as it stands.
    Anything else (a non-optimal status, an infeasible basis, numerical
    trouble) falls back to a run on the unmodified problem.
    """
    sf = standardize(lp)
    if sf.A.shape[0] == 0:
        return _solve_unconstrained(lp, sf)
    tab = None
    try:
        tab = _Tableau(sf.A, _loosened_rhs(sf), iteration_limit, sf.c)
        status = _two_phase(tab)
        if status is LpStatus.ITERATION_LIMIT:
            return LpSolution(status, None, np.nan, tab.iterations, np.nan)
        if status is LpStatus.OPTIMAL:
            tab.set_rhs(sf.b)
            sol = _optimal_solution(lp, sf, tab)
            if sol is not None:
                return sol
    except np.linalg.LinAlgError:
        pass
    used = 0 if tab is None else tab.iterations
    tab = _Tableau(sf.A, sf.b, iteration_limit - used, sf.c)
    status = _two_phase(tab)
    tab.iterations += used
    if status is not LpStatus.OPTIMAL:
        return LpSolution(status, None, np.nan, tab.iterations, np.nan)
    tab.refactor()
    sol = _optimal_solution(lp, sf, tab)
    if sol is None:
        raise np.linalg.LinAlgError("final basis lost primal feasibility")
    return sol


def _solve_unconstrained(lp, sf):
    if np.any(sf.c < -OPT_TOL):
        return LpSolution(LpStatus.UNBOUNDED, None, np.nan, 0, np.nan)
    x = np.zeros(lp.n_vars)
    return LpSolution(LpStatus.OPTIMAL, x, 0.0, 0, 0.0, float(np.min(sf.c, initial=0.0)))


# --- debug dump ------------------------------------------------------------

_HEADER = "# sparse_msvm LP dump v1"


def dump_lp(lp: LinearProgram, path):
    """Write ``lp`` in the fixed-layout text format described in the README."""
    fmt = "%.17g"
    lines = [_HEADER, f"VARS {lp.n_vars}", f"ROWS {lp.n_rows}", "COSTS"]
    lines.append(" ".join(fmt % v for v in lp.costs))
    lines.append("LOWER")
    lines.append(" ".join("-inf" if v == -np.inf else "0" for v in lp.lower))
    lines.append("CONSTRAINTS")
    for row, s, r in zip(lp.a_matrix, lp.senses, lp.rhs):
        lines.append(f"{s.value} {fmt % r} " + " ".join(fmt % v for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_lp(path) -> LinearProgram:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != _HEADER:
        raise ValueError(f"{path}: not an LP dump")
    m = int(lines[1].split()[1])
    p = int(lines[2].split()[1])
    costs = np.array(lines[4].split(), dtype=float) if m else np.zeros(0)
    lower = np.array([-np.inf if t == "-inf" else 0.0 for t in lines[6].split()])
    senses, rhs, rows = [], [], []
    for line in lines[8:8 + p]:
        toks = line.split()
        senses.append(Sense(toks[0]))
        rhs.append(float(toks[1]))
        rows.append([float(t) for t in toks[2:]])
    A = np.array(rows).reshape(p, m)
    return LinearProgram(costs, A, tuple(senses), np.array(rhs), lower)
