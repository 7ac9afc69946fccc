import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ltu_eval.bandwidth_select import balance_test, select_bandwidth, side_shares, window_for
from ltu_eval.errors import EmptySide, NoBalancedWindow, NoPairedDays
from ltu_eval.panel_ingest import DEFAULT_BALANCE_COVARIATES, CellPanel, to_daynum
from ltu_eval.synth_dgp import make_rng, planted_boundary_panel

DAYS = ("2011-01-01", "2014-12-31")


def two_cov_panel(seed, n_days=40, window=(719, 738), female_jump=0.0, jump_from=729):
    rng = make_rng(seed)
    durations = np.arange(window[0], window[1] + 1)
    day = np.repeat(to_daynum("2013-01-01") + np.arange(n_days), durations.size)
    dur = np.tile(durations, n_days)
    group = rng.integers(100, 300, day.size)
    p = 0.5 + female_jump * (dur >= jump_from)
    female = rng.binomial(group, p)
    foreign = rng.binomial(group, 0.1)
    return CellPanel(
        duration=dur, day=day, group_size=group, hires=np.zeros_like(group),
        counts={"sex:female": female, "sex:male": group - female, "citizenship:foreign": foreign,
                "citizenship:italian": group - foreign},
    )


COVS = ("sex:female", "citizenship:foreign")


class TestWindowFor:
    @pytest.mark.parametrize("k,expected", [(1, (728, 729)), (15, (714, 743)), (30, (699, 758))])
    def test_symmetric(self, k, expected):
        assert window_for(k) == expected

    def test_extra_treated(self):
        assert window_for(15, extra_treated=1) == (714, 744)


class TestSideShares:
    def test_pooled_shares_by_hand(self):
        panel = two_cov_panel(1)
        days, t, c = side_shares(panel, (719, 738), COVS)
        d0 = panel.day == days[0]
        tr = d0 & (panel.duration >= 729)
        ct = d0 & (panel.duration < 729)
        assert t[0, 0] == pytest.approx(panel.counts["sex:female"][tr].sum() / panel.group_size[tr].sum())
        assert c[0, 1] == pytest.approx(panel.counts["citizenship:foreign"][ct].sum() / panel.group_size[ct].sum())

    def test_one_sided_window(self):
        with pytest.raises(EmptySide):
            side_shares(two_cov_panel(1), (719, 728), COVS)

    def test_single_day(self):
        with pytest.raises(NoPairedDays):
            side_shares(two_cov_panel(1, n_days=1), (719, 738), COVS)


class TestBalanceTest:
    def test_matches_scipy_paired(self):
        panel = two_cov_panel(2)
        rep = balance_test(panel, (719, 738), COVS)
        _, t, c = side_shares(panel, (719, 738), COVS)
        for k, col in enumerate(COVS):
            ref = stats.ttest_rel(t[:, k], c[:, k])
            assert rep.per_covariate[col].p_value == pytest.approx(ref.pvalue, rel=1e-10)
            assert rep.per_covariate[col].statistic == pytest.approx(ref.statistic, rel=1e-10)
        assert rep.min_p == pytest.approx(min(r.p_value for r in rep.per_covariate.values()))
        assert rep.n_days == 40

    def test_detects_planted_imbalance(self):
        rep = balance_test(two_cov_panel(3, female_jump=0.1), (719, 738), COVS)
        assert not rep.balanced
        assert rep.per_covariate["sex:female"].p_value < 1e-6

    def test_bonferroni_is_more_lenient(self):
        panel = two_cov_panel(4)
        plain = balance_test(panel, (719, 738), COVS, alpha=0.5)
        corrected = balance_test(panel, (719, 738), COVS, alpha=0.5, correction="bonferroni")
        assert corrected.min_p == plain.min_p
        assert corrected.balanced or not plain.balanced

    def test_constant_nonzero_difference_is_imbalanced(self):
        panel = two_cov_panel(5)
        treated = panel.duration >= 729
        counts = dict(panel.counts)
        counts["sex:female"] = np.where(treated, panel.group_size, 0)
        rigged = CellPanel(duration=panel.duration, day=panel.day, group_size=panel.group_size,
                           hires=panel.hires, counts=counts)
        rep = balance_test(rigged, (719, 738), COVS)
        assert rep.per_covariate["sex:female"].p_value == 0.0 and not rep.balanced

    def test_unknown_correction(self):
        with pytest.raises(ValueError):
            balance_test(two_cov_panel(1), (719, 738), COVS, correction="sidak")

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_swap_sides_keeps_p(self, seed):
        # mirroring durations around the threshold swaps treated and control
        panel = two_cov_panel(seed)
        mirrored = CellPanel(duration=2 * 729 - 1 - panel.duration, day=panel.day, group_size=panel.group_size,
                             hires=panel.hires, counts=panel.counts)
        a = balance_test(panel, (719, 738), COVS)
        b = balance_test(mirrored, (719, 738), COVS)
        for col in COVS:
            assert b.per_covariate[col].p_value == pytest.approx(a.per_covariate[col].p_value, rel=1e-9)
            assert b.per_covariate[col].mean_diff == pytest.approx(-a.per_covariate[col].mean_diff, abs=1e-15)


class TestSelectBandwidth:
    @pytest.mark.parametrize("seed", range(5))
    def test_finds_planted_boundary(self, seed):
        panel = planted_boundary_panel(make_rng(100, seed), DAYS)
        sel = select_bandwidth(panel, 729, 30, 0.15)
        assert sel.window == (714, 743)
        assert sel.half_width == 15
        assert [r.balanced for r in sel.trail] == [True] * 15 + [False]

    @pytest.mark.parametrize("half_width", [3, 9, 22])
    def test_other_planted_widths(self, half_width):
        panel = planted_boundary_panel(make_rng(7), DAYS, half_width=half_width)
        assert select_bandwidth(panel, 729, 30).half_width == half_width

    def test_stops_at_max(self):
        panel = planted_boundary_panel(make_rng(8), DAYS, half_width=30)
        sel = select_bandwidth(panel, 729, 30)
        assert sel.half_width == 30 and all(r.balanced for r in sel.trail)

    def test_no_balanced_window(self):
        panel = two_cov_panel(9, female_jump=0.3, window=(699, 758))
        with pytest.raises(NoBalancedWindow):
            select_bandwidth(panel, 729, 5, covariates=COVS)

    def test_nested_windows(self):
        # a larger window never gets selected past an unbalanced smaller one
        panel = two_cov_panel(10, window=(699, 758), female_jump=0.15, jump_from=735)
        sel = select_bandwidth(panel, 729, 30, covariates=COVS)
        assert sel.half_width <= 6
        assert not sel.trail[-1].balanced

    def test_default_covariate_set(self):
        assert len(DEFAULT_BALANCE_COVARIATES) == 21
