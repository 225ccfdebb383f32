import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import msvm_highs_oracle, msvm_objective_grid_oracle
from sparse_msvm.core import (Dataset, PenaltyKind, PenaltySpec, check_sum_to_zero,
                              column_sup_norms, hinge_objective_loss, penalty_value)
from sparse_msvm.lpmodel import build_l1_lp, build_supnorm_lp, decode, fit_lp
from sparse_msvm.simplex import LpSolution, LpStatus


def toy(rng, n=12, K=3, d=3):
    return Dataset(rng.standard_normal((n, d)), rng.integers(1, K + 1, n), K)


SIX_POINTS = Dataset(np.array([[-2.0], [-1.0], [0.0], [0.5], [1.0], [2.0]]), [1, 1, 2, 2, 3, 3], 3)
ALL_LP_KINDS = [PenaltyKind.L1, PenaltyKind.SUPNORM]


def spec_for(kind, K, d, rng):
    if kind is PenaltyKind.ADAPTIVE_L1 or kind is PenaltyKind.ADAPTIVE_SUP_II:
        return PenaltySpec(kind, tau_matrix=rng.uniform(0.5, 3.0, (K, d)))
    if kind is PenaltyKind.ADAPTIVE_SUP_I:
        return PenaltySpec(kind, tau_vector=rng.uniform(0.5, 3.0, d))
    return PenaltySpec(kind)


class TestLayout:
    def test_l1_counts(self):
        data = toy(np.random.default_rng(0), n=4, K=3, d=2)
        lp, layout = build_l1_lp(data, 1.0)
        assert (lp.n_vars, lp.n_rows) == (30, 15)
        assert (layout.m, layout.p) == (30, 15)

    def test_supnorm_counts(self):
        data = toy(np.random.default_rng(0), n=4, K=3, d=2)
        lp, layout = build_supnorm_lp(data, 1.0)
        assert (lp.n_vars, lp.n_rows) == (32, 21)

    @pytest.mark.parametrize("builder", [build_l1_lp, build_supnorm_lp])
    def test_blocks_partition_columns(self, builder):
        data = toy(np.random.default_rng(1), n=5, K=4, d=3)
        lp, layout = builder(data, 0.5)
        cols = np.concatenate(layout.blocks())
        np.testing.assert_array_equal(np.sort(cols), np.arange(lp.n_vars))

    def test_infinite_weights_delete_columns(self):
        data = toy(np.random.default_rng(2), n=5, K=3, d=2)
        tau = np.ones((3, 2))
        tau[:, 1] = np.inf
        lp, layout = build_l1_lp(data, 1.0, tau)
        assert lp.n_vars == 2 * 3 + 2 * 3 + 5 * 3
        fit = fit_lp(data, PenaltySpec(PenaltyKind.ADAPTIVE_L1, tau_matrix=tau), 0.01)
        assert np.all(fit.model.W[:, 1] == 0)

    def test_both_weight_kinds_rejected(self):
        data = toy(np.random.default_rng(2), n=5, K=3, d=2)
        with pytest.raises(ValueError):
            build_supnorm_lp(data, 1.0, tau_vector=np.ones(2), tau_matrix=np.ones((3, 2)))

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValueError):
            build_l1_lp(SIX_POINTS, -1.0)


class TestDecode:
    def test_all_zero_solution(self):
        _, layout = build_l1_lp(SIX_POINTS, 1.0)
        sol = LpSolution(LpStatus.OPTIMAL, np.zeros(layout.m), 0.0, 0, 0.0)
        model = decode(sol, layout)
        assert np.all(model.W == 0) and np.all(model.b == 0)

    def test_sign_split_inversion(self):
        data = Dataset(np.zeros((2, 2)), [1, 2], 3)
        _, layout = build_l1_lp(data, 1.0)
        x = np.zeros(layout.m)
        x[layout.w_pos[0, 0]] = 0.5
        x[layout.w_neg[1, 0]] = 0.5
        model = decode(LpSolution(LpStatus.OPTIMAL, x, 0.0, 0, 0.0), layout)
        assert model.W[0, 0] == 0.5 and model.W[1, 0] == -0.5

    def test_non_optimal_raises(self):
        _, layout = build_l1_lp(SIX_POINTS, 1.0)
        from sparse_msvm.lpmodel import LpFitError
        with pytest.raises(LpFitError):
            decode(LpSolution(LpStatus.ITERATION_LIMIT, None, np.nan, 5, np.nan), layout)


@pytest.mark.parametrize("kind", ALL_LP_KINDS)
def test_huge_lambda_kills_coefficients(kind):
    data = toy(np.random.default_rng(3), n=15)
    fit = fit_lp(data, PenaltySpec(kind), 1e6)
    assert np.all(fit.model.W == 0)
    # intercept-only hinge minimum: compare against HiGHS with the same huge lambda
    assert fit.lp_objective == pytest.approx(
        msvm_highs_oracle(data, 1e6, "l1" if kind is PenaltyKind.L1 else "sup"), abs=1e-7)


@pytest.mark.parametrize("kind,penalty", [
    (PenaltyKind.L1, lambda W: np.abs(W).sum(axis=(1, 2))),
    (PenaltyKind.SUPNORM, lambda W: np.abs(W).max(axis=1).sum(axis=1)),
])
def test_lattice_oracle_on_six_points(kind, penalty):
    # the lattice contains the optimum here, so the two agree exactly
    grid = np.arange(-3, 3.01, 0.25)
    lam = 0.25
    best = msvm_objective_grid_oracle(SIX_POINTS, lam, penalty, grid)
    fit = fit_lp(SIX_POINTS, PenaltySpec(kind), lam)
    assert fit.lp_objective <= best + 1e-9
    assert fit.lp_objective == pytest.approx(best, abs=1e-6)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("kind", ALL_LP_KINDS)
def test_matches_highs(seed, kind):
    data = toy(np.random.default_rng(seed), n=15, K=3 + seed % 2, d=3)
    fit = fit_lp(data, PenaltySpec(kind), 0.05)
    ref = msvm_highs_oracle(data, 0.05, "l1" if kind is PenaltyKind.L1 else "sup")
    assert fit.lp_objective == pytest.approx(ref, rel=1e-7)


@pytest.mark.parametrize("lam", [0.01, 0.1, 1.0])
def test_three_class_l1_supnorm_equivalence(lam):
    data = toy(np.random.default_rng(4), n=20, d=4)
    l1 = fit_lp(data, PenaltySpec(PenaltyKind.L1), lam)
    sup = fit_lp(data, PenaltySpec(PenaltyKind.SUPNORM), 2 * lam)
    assert l1.lp_objective == pytest.approx(sup.lp_objective, rel=1e-6)


def test_eta_rows_bind_at_optimum():
    data = toy(np.random.default_rng(5), n=20, d=4)
    lp, layout = build_supnorm_lp(data, 0.05)
    fit = fit_lp(data, PenaltySpec(PenaltyKind.SUPNORM), 0.05)
    eta = fit.solution.x[layout.eta]
    np.testing.assert_allclose(eta, column_sup_norms(fit.model.W), atol=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(list(PenaltyKind)[1:]),
       st.sampled_from([2.0 ** -6, 2.0 ** -2, 1.0]))
def test_fit_invariants(seed, kind, lam):
    rng = np.random.default_rng(seed)
    K, d = int(rng.integers(2, 5)), int(rng.integers(1, 4))
    data = toy(rng, n=int(rng.integers(4, 14)), K=K, d=d)
    spec = spec_for(kind, K, d, rng)
    fit = fit_lp(data, spec, lam)
    assert fit.solution.status is LpStatus.OPTIMAL
    assert check_sum_to_zero(fit.model, 1e-8)
    direct = hinge_objective_loss(fit.model, data) + lam * penalty_value(spec, fit.model)
    assert direct == pytest.approx(fit.lp_objective, rel=1e-6, abs=1e-9)
    _, layout = build_lp_for(spec, data, lam)
    x = fit.solution.x
    live = ~layout.pinned
    assert np.all(x[layout.w_pos[live]] * x[layout.w_neg[live]] <= 1e-12)
    assert fit.solution.objective <= K - 1 + 1e-9


def build_lp_for(spec, data, lam):
    from sparse_msvm.lpmodel import build_lp
    return build_lp(data, spec, lam)


@pytest.mark.parametrize("kind", ALL_LP_KINDS)
def test_penalty_monotone_along_ladder(kind):
    data = toy(np.random.default_rng(6), n=25, d=4)
    spec = PenaltySpec(kind)
    values = [penalty_value(spec, fit_lp(data, spec, 2.0 ** e).model) for e in range(-8, 4)]
    assert all(b <= a + 1e-7 for a, b in zip(values, values[1:]))
