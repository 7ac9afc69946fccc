import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import stats

from ltu_eval.errors import (
    ConstantInput,
    DimensionMismatch,
    EmptyInput,
    EmptyNeighborhood,
    RankDeficient,
    SingletonOnlyGroups,
    TooFewObservations,
    ZeroVariance,
    ZeroVarianceDifferences,
)
from ltu_eval.stats_core import (
    absorb_fixed_effects,
    kernel_local_poly,
    paired_ttest,
    pearson_corr,
    welch_ttest,
    wls_fit,
)


def brute_force_wls(x, y, w=None):
    """Normal equations and an explicit-matrix HC1 sandwich."""
    n, k = x.shape
    W = np.eye(n) if w is None else np.diag(w)
    xtwx = x.T @ W @ x
    beta = np.linalg.solve(xtwx, x.T @ W @ y)
    e = y - x @ beta
    bread = np.linalg.inv(xtwx)
    meat = x.T @ W @ np.diag(e**2) @ W @ x
    return beta, n / (n - k) * bread @ meat @ bread


def dummy_design(groups):
    levels = np.unique(groups)
    return (groups[:, None] == levels[None, :]).astype(float)


class TestWlsFit:
    def test_constant_fit(self):
        res = wls_fit([[1], [1], [1]], [2, 2, 2])
        assert_allclose(res.coefficients, [2.0])
        assert_allclose(res.residuals, [0, 0, 0], atol=1e-15)
        assert res.r_squared == 0.0

    def test_exactly_identified(self):
        res = wls_fit([[1, 0], [1, 1]], [1, 3])
        assert_allclose(res.coefficients, [1.0, 2.0])
        assert_allclose(res.residuals, [0, 0], atol=1e-14)

    @pytest.mark.parametrize("weighted", [False, True])
    def test_matches_normal_equations(self, weighted):
        rng = np.random.default_rng(11)
        x = np.column_stack([np.ones(200), rng.normal(size=(200, 3))])
        y = x @ [1.0, -2.0, 0.5, 3.0] + rng.normal(size=200) * (1 + np.abs(x[:, 1]))
        w = rng.uniform(0.2, 3.0, size=200) if weighted else None
        res = wls_fit(x, y, w)
        beta, vcov = brute_force_wls(x, y, w)
        assert_allclose(res.coefficients, beta, rtol=1e-10)
        assert_allclose(res.vcov, vcov, rtol=1e-10)

    def test_hc0_scale(self):
        rng = np.random.default_rng(3)
        x = np.column_stack([np.ones(50), rng.normal(size=50)])
        y = rng.normal(size=50)
        hc0 = wls_fit(x, y, cov_type="HC0").vcov
        hc1 = wls_fit(x, y, cov_type="HC1").vcov
        assert_allclose(hc1, hc0 * 50 / 48, rtol=1e-12)

    def test_residuals_orthogonal(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(300, 4))
        y = rng.normal(size=300)
        res = wls_fit(x, y)
        scale = np.linalg.norm(x, axis=0) * np.linalg.norm(y)
        assert np.all(np.abs(x.T @ res.residuals) < 1e-8 * scale)

    def test_vcov_symmetric_psd(self):
        rng = np.random.default_rng(6)
        x = np.column_stack([np.ones(80), rng.normal(size=(80, 2))])
        res = wls_fit(x, rng.normal(size=80))
        assert_allclose(res.vcov, res.vcov.T)
        assert np.all(np.linalg.eigvalsh(res.vcov) >= -1e-14)

    def test_collinear_columns_dropped_first_listed_wins(self):
        rng = np.random.default_rng(7)
        a = rng.normal(size=40)
        b = rng.normal(size=40)
        x = np.column_stack([np.ones(40), a, b, a + b])
        y = 1 + a - b + rng.normal(size=40) * 0.1
        res = wls_fit(x, y)
        assert res.dropped == (3,)
        assert np.isnan(res.coefficients[3])
        ref = wls_fit(x[:, :3], y)
        assert_allclose(res.coefficients[:3], ref.coefficients, rtol=1e-12)
        assert_allclose(res.vcov[:3, :3], ref.vcov, rtol=1e-12)
        with pytest.raises(RankDeficient) as info:
            wls_fit(x, y, on_collinear="raise")
        assert info.value.dropped == (3,)

    def test_errors(self):
        with pytest.raises(DimensionMismatch):
            wls_fit(np.ones((3, 1)), np.ones(4))
        with pytest.raises(EmptyInput):
            wls_fit(np.ones((0, 1)), np.ones(0))
        with pytest.raises(EmptyInput):
            wls_fit(np.ones((3, 1)), np.ones(3), np.zeros(3))

    def test_r_squared_definition(self):
        rng = np.random.default_rng(8)
        x = np.column_stack([np.ones(60), rng.normal(size=60)])
        y = x @ [0.3, 1.2] + rng.normal(size=60)
        res = wls_fit(x, y)
        sst = np.sum((y - y.mean()) ** 2)
        assert res.r_squared == pytest.approx(1 - np.sum(res.residuals**2) / sst, rel=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(n=st.integers(20, 500), k=st.integers(1, 5), seed=st.integers(0, 10_000))
    def test_hc1_matches_brute_force_property(self, n, k, seed):
        rng = np.random.default_rng(seed)
        x = np.column_stack([np.ones(n), rng.normal(size=(n, k))])
        y = rng.normal(size=n) * rng.uniform(0.5, 2, size=n)
        beta, vcov = brute_force_wls(x, y)
        res = wls_fit(x, y)
        assert_allclose(res.coefficients, beta, rtol=1e-10, atol=1e-12)
        assert_allclose(res.vcov, vcov, rtol=1e-10, atol=1e-15)


class TestAbsorbFixedEffects:
    def test_two_group_within_transform(self):
        groups = np.array([0, 0, 1, 1])
        x = np.array([0.0, 1.0, 0.0, 1.0])
        y = np.array([1.0, 3.0, 5.0, 7.0])
        panel = absorb_fixed_effects(groups, x, y)
        assert_allclose(panel.outcome, [-1, 1, -1, 1])
        assert panel.dof_correction == 2
        fit = wls_fit(panel.design, panel.outcome, absorbed_dof=panel.n_groups)
        assert fit.coefficients[0] == pytest.approx(2.0)

    def test_single_group_is_global_demeaning(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(30, 2))
        y = rng.normal(size=30)
        panel = absorb_fixed_effects(np.zeros(30), x, y)
        assert_allclose(panel.outcome, y - y.mean())
        assert_allclose(panel.design, x - x.mean(axis=0))

    def test_singletons_only(self):
        with pytest.raises(SingletonOnlyGroups):
            absorb_fixed_effects([1, 2, 3], np.ones(3), np.ones(3))

    @pytest.mark.parametrize("weighted", [False, True])
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_explicit_dummies(self, weighted, seed):
        rng = np.random.default_rng(seed)
        n = 1000
        groups = rng.integers(0, 60, size=n)
        x = rng.normal(size=(n, 2)) + groups[:, None] * 0.05
        y = x @ [0.7, -1.1] + groups * 0.1 + rng.normal(size=n)
        w = rng.uniform(0.5, 5, size=n) if weighted else None
        panel = absorb_fixed_effects(groups, x, y, w)
        fe = wls_fit(panel.design, panel.outcome, panel.weights, absorbed_dof=panel.n_groups)
        full = wls_fit(np.column_stack([x, dummy_design(groups)]), y, w)
        assert np.max(np.abs(fe.coefficients - full.coefficients[:2])) < 1e-10
        assert np.max(np.abs(fe.std_errors - full.std_errors[:2])) < 1e-9

    def test_constant_within_group_column_zeroed(self):
        groups = np.repeat(np.arange(5), 4)
        x = np.column_stack([np.tile([0.0, 1, 0, 1], 5), groups * 0.3])
        y = np.arange(20.0)
        panel = absorb_fixed_effects(groups, x, y)
        assert np.all(panel.design[:, 1] == 0.0)
        assert wls_fit(panel.design, panel.outcome).dropped == (1,)


class TestWelch:
    def test_identical_samples(self):
        a = [1.0, 2.0, 4.0, 7.0]
        res = welch_ttest(a, a)
        assert res.mean_diff == 0 and res.p_value == 1.0

    def test_matches_scipy(self):
        rng = np.random.default_rng(2)
        a = rng.normal(0.3, 1.0, size=40)
        b = rng.normal(0.0, 2.5, size=25)
        res = welch_ttest(a, b)
        ref = stats.ttest_ind(a, b, equal_var=False)
        assert res.statistic == pytest.approx(ref.statistic, rel=1e-12)
        assert res.p_value == pytest.approx(ref.pvalue, rel=1e-10)

    def test_swap_symmetry(self):
        rng = np.random.default_rng(9)
        a, b = rng.normal(size=12), rng.normal(1, 3, size=9)
        ab, ba = welch_ttest(a, b), welch_ttest(b, a)
        assert ab.statistic == pytest.approx(-ba.statistic)
        assert ab.mean_diff == pytest.approx(-ba.mean_diff)
        assert ab.p_value == pytest.approx(ba.p_value)

    def test_ci_width(self):
        rng = np.random.default_rng(4)
        res = welch_ttest(rng.normal(size=10), rng.normal(size=14))
        crit = stats.t.ppf(0.975, res.dof)
        assert res.ci95[1] - res.ci95[0] == pytest.approx(2 * crit * res.std_err)

    def test_errors(self):
        with pytest.raises(TooFewObservations):
            welch_ttest([1.0], [1.0, 2.0])
        with pytest.raises(ZeroVariance):
            welch_ttest([1.0, 1.0], [1.0, 1.0])


class TestPaired:
    def test_zero_differences(self):
        res = paired_ttest([(1, 1), (2, 2), (3, 3)])
        assert res.mean_diff == 0 and res.statistic == 0 and res.p_value == 1

    def test_constant_nonzero_differences(self):
        with pytest.raises(ZeroVarianceDifferences):
            paired_ttest([(2, 1), (3, 2), (4, 3)])

    def test_matches_one_sample_t(self):
        rng = np.random.default_rng(50)
        a = rng.normal(size=50)
        b = a + rng.normal(0.1, 0.5, size=50)
        res = paired_ttest(list(zip(a, b)))
        ref = stats.ttest_1samp(a - b, 0.0)
        assert res.statistic == pytest.approx(ref.statistic, rel=1e-12)
        assert res.p_value == pytest.approx(ref.pvalue, rel=1e-12)
        assert res.dof == 49


class TestPearson:
    def test_paper_table_values(self):
        r = pearson_corr([4.34e-05, 4.69e-05, 2.48e-05, 3.81e-05], [25202, 26539, 20118, 24689])
        assert r == pytest.approx(0.98808, abs=1e-4)

    def test_self_and_sign_flip(self):
        x = np.array([0.3, 1.7, -2.2, 5.0, 0.01])
        assert pearson_corr(x, x) == 1.0
        assert pearson_corr(x, -x) == -1.0

    def test_errors(self):
        with pytest.raises(ConstantInput):
            pearson_corr([1.0, 2.0, 3.0], [2.0, 2.0, 2.0])
        with pytest.raises(DimensionMismatch):
            pearson_corr([1.0, 2.0], [1.0, 2.0, 3.0])


class TestKernelLocalPoly:
    def test_constant_function(self):
        x = np.linspace(0, 10, 41)
        for degree in range(4):
            out = kernel_local_poly(x, np.full_like(x, 3.5), degree, 2.0, np.linspace(1, 9, 9))
            assert_allclose(out, 3.5, atol=1e-12)

    @pytest.mark.parametrize("degree", [1, 2, 3])
    def test_polynomial_reproduction(self, degree):
        x = np.linspace(-3, 3, 61)
        y = 0.5 - 1.2 * x + (0.3 * x**2 if degree >= 2 else 0) + (0.05 * x**3 if degree >= 3 else 0)
        grid = np.linspace(-2.5, 2.5, 11)
        truth = 0.5 - 1.2 * grid + (0.3 * grid**2 if degree >= 2 else 0) + (0.05 * grid**3 if degree >= 3 else 0)
        assert_allclose(kernel_local_poly(x, y, degree, 1.0, grid), truth, atol=1e-9)

    def test_degree_zero_is_weighted_mean(self):
        rng = np.random.default_rng(0)
        x = np.arange(-10.0, 11.0)
        y = rng.normal(size=x.size)
        h = 4.0
        u = x / h
        w = np.where(np.abs(u) < 1, 0.75 * (1 - u**2), 0)
        expected = np.sum(w * y) / np.sum(w)
        assert kernel_local_poly(x, y, 0, h, [0.0])[0] == pytest.approx(expected, rel=1e-12)

    def test_empty_neighborhood(self):
        x = np.array([0.0, 1.0, 2.0, 10.0])
        with pytest.raises(EmptyNeighborhood) as info:
            kernel_local_poly(x, x, 1, 1.5, [1.0, 6.0])
        assert info.value.points == (6.0,)
