"""Metrics against brute-force oracles; Friedman/Nemenyi; aggregation."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fgsim.errors import DegenerateLabels, InvalidTable, UnsupportedK
from fgsim.evalstats import (
    MetricPair,
    RankTable,
    ScoredSet,
    aggregate_runs,
    average_precision,
    friedman,
    nemenyi_posthoc,
    per_run_csv_rows,
    roc_auc,
    significance_payload,
    summary_csv_rows,
)
from oracles import definition_ap, friedman_exact_distribution, friedman_exact_sf, pairwise_auc

scored_sets = st.integers(min_value=2, max_value=60).flatmap(
    lambda n: st.tuples(
        st.lists(
            st.floats(min_value=0.0, max_value=1.0, allow_nan=False), min_size=n, max_size=n
        ),
        st.lists(st.integers(min_value=0, max_value=1), min_size=n, max_size=n).filter(
            lambda labels: 0 < sum(labels) < len(labels)
        ),
    )
)


class TestRocAuc:
    def test_perfect_separation(self):
        assert roc_auc(ScoredSet(scores=[0.9, 0.1], labels=[1, 0])) == 1.0

    def test_all_ties_is_half(self):
        assert roc_auc(ScoredSet(scores=[0.4] * 6, labels=[1, 0, 1, 0, 1, 0])) == 0.5

    def test_interleaved_example(self):
        s = ScoredSet(scores=[0.8, 0.6, 0.4, 0.2], labels=[1, 0, 1, 0])
        assert roc_auc(s) == 0.75
        assert pairwise_auc(s.scores, s.labels) == 0.75

    def test_degenerate_labels(self):
        with pytest.raises(DegenerateLabels):
            roc_auc(ScoredSet(scores=[0.5, 0.6], labels=[1, 1]))

    @given(scored_sets)
    @settings(max_examples=200, deadline=None)
    def test_matches_pairwise_oracle_exactly(self, case):
        scores, labels = case
        ours = roc_auc(ScoredSet(scores=scores, labels=labels))
        assert ours == pairwise_auc(scores, labels)

    @given(scored_sets, st.sampled_from([0.5, 8.0, 1024.0]))
    @settings(max_examples=100, deadline=None)
    def test_monotone_transform_invariance(self, case, scale):
        # power-of-two scaling: strictly monotone and float-exact, so it
        # cannot merge distinct scores into new ties
        scores, labels = case
        base = roc_auc(ScoredSet(scores=scores, labels=labels))
        scaled = roc_auc(ScoredSet(scores=[scale * s for s in scores], labels=labels))
        assert scaled == pytest.approx(base, abs=1e-12)

    @given(scored_sets)
    @settings(max_examples=100, deadline=None)
    def test_label_reversal_mirrors(self, case):
        scores, labels = case
        base = roc_auc(ScoredSet(scores=scores, labels=labels))
        flipped = roc_auc(ScoredSet(scores=scores, labels=[1 - y for y in labels]))
        assert flipped == pytest.approx(1.0 - base, abs=1e-12)


class TestAveragePrecision:
    def test_all_positives_on_top(self):
        assert average_precision(ScoredSet(scores=[0.9, 0.8, 0.2, 0.1], labels=[1, 1, 0, 0])) == 1.0

    def test_single_positive_ranked_last(self):
        assert average_precision(ScoredSet(scores=[0.9, 0.8, 0.7, 0.1], labels=[0, 0, 0, 1])) == 0.25

    def test_alternating_example(self):
        s = ScoredSet(scores=[0.8, 0.6, 0.4, 0.2], labels=[1, 0, 1, 0])
        assert average_precision(s) == pytest.approx((1.0 + 2.0 / 3.0) / 2.0, rel=1e-12)

    def test_needs_a_positive(self):
        with pytest.raises(DegenerateLabels):
            average_precision(ScoredSet(scores=[0.5], labels=[0]))

    @given(scored_sets)
    @settings(max_examples=200, deadline=None)
    def test_matches_definition_oracle_exactly(self, case):
        scores, labels = case
        ours = average_precision(ScoredSet(scores=scores, labels=labels))
        assert ours == definition_ap(scores, labels)


class TestFriedman:
    def test_no_separation_gives_zero(self):
        # column sums equalized by rotating ranks across rows
        table = RankTable(ranks=np.array([[1, 2, 3], [2, 3, 1], [3, 1, 2]], dtype=float))
        statistic, p_value = friedman(table)
        assert statistic == 0.0
        assert p_value == 1.0

    def test_always_first_n3_k2(self):
        table = RankTable(ranks=np.array([[1, 2], [1, 2], [1, 2]], dtype=float))
        statistic, _ = friedman(table)
        assert statistic == 3.0

    def test_row_permutation_invariance(self):
        rows = [[1.0, 3.0, 2.0], [2.0, 1.0, 3.0], [1.0, 2.0, 3.0], [3.0, 2.0, 1.0]]
        base, _ = friedman(RankTable(ranks=np.array(rows)))
        permuted, _ = friedman(RankTable(ranks=np.array(rows[::-1])))
        assert permuted == base

    def test_statistic_nonnegative_random_tables(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            scores = rng.normal(size=(4, 3))
            statistic, _ = friedman(RankTable.from_scores(scores))
            assert statistic >= 0.0

    def test_invalid_row_sum(self):
        with pytest.raises(InvalidTable):
            RankTable(ranks=np.array([[1.0, 1.0]]))

    def test_needs_two_rows(self):
        with pytest.raises(InvalidTable):
            friedman(RankTable(ranks=np.array([[1.0, 2.0]])))

    def test_tied_scores_average_ranks(self):
        table = RankTable.from_scores(np.array([[0.5, 0.5, 0.1], [0.9, 0.2, 0.2]]))
        assert table.ranks[0].tolist() == [1.5, 1.5, 3.0]
        assert table.ranks[1].tolist() == [1.0, 2.5, 2.5]

    def test_chi2_approximation_tracks_exact_in_tail(self):
        # upper-tail agreement, where significance calls actually happen
        from scipy.stats import chi2

        dist = friedman_exact_distribution(6, 3)
        checked = 0
        for statistic in sorted(dist):
            exact = friedman_exact_sf(dist, statistic)
            if exact <= 0.1:
                assert abs(chi2.sf(statistic, 2) - exact) <= 0.05
                checked += 1
        assert checked > 0


class TestNemenyi:
    def test_identical_models_nothing_significant(self):
        table = RankTable(ranks=np.array([[1.5, 1.5], [1.5, 1.5], [1.5, 1.5]]))
        result = nemenyi_posthoc(table)
        assert not result.significant.any()

    def test_k2_closed_form(self):
        # CD = 1.960 * sqrt(1/N) for k=2; N=40 -> 0.3099
        ranks = np.tile([1.0, 2.0], (40, 1))
        result = nemenyi_posthoc(RankTable(ranks=ranks))
        assert result.critical_difference == pytest.approx(0.30990, abs=5e-5)
        assert result.significant[0, 1]  # mean-rank gap 1.0 >= CD
        assert result.friedman_rejected

    def test_matrix_symmetric_false_diagonal(self):
        rng = np.random.default_rng(3)
        table = RankTable.from_scores(rng.normal(size=(6, 4)))
        result = nemenyi_posthoc(table)
        assert np.array_equal(result.significant, result.significant.T)
        assert not result.significant.diagonal().any()

    def test_unsupported_k(self):
        ranks = np.tile(np.arange(1.0, 12.0), (3, 1))
        with pytest.raises(UnsupportedK):
            nemenyi_posthoc(RankTable(ranks=ranks))

    def test_tabulated_constants_match_studentized_range(self):
        # oracle: q_alpha(k, inf) / sqrt(2) from scipy's distribution
        from scipy.stats import studentized_range

        from fgsim.evalstats import _NEMENYI_Q

        for alpha, rows in _NEMENYI_Q.items():
            for k, expected in zip(range(2, 11), rows):
                q = studentized_range.ppf(1.0 - alpha, k, 1e7) / np.sqrt(2.0)
                assert expected == pytest.approx(q, abs=2e-3)


class TestAggregateRuns:
    def run_report(self, auc: float, ap: float, model: str = "LocalM"):
        return {("UK", "buys", model): MetricPair(roc_auc=auc, average_precision=ap)}

    def test_single_run_std_zero(self):
        report = aggregate_runs([self.run_report(0.8, 0.7)])
        cell = report.cells[("UK", "buys", "LocalM")]
        assert cell.mean_auc == 0.8
        assert cell.std_auc == 0.0
        assert cell.n_runs == 1

    def test_two_run_sample_std(self):
        report = aggregate_runs([self.run_report(0.8, 0.7), self.run_report(0.9, 0.8)])
        cell = report.cells[("UK", "buys", "LocalM")]
        assert cell.mean_auc == pytest.approx(0.85)
        assert cell.std_auc == pytest.approx(0.07071, abs=5e-5)

    def test_run_order_irrelevant(self):
        runs = [self.run_report(0.8, 0.7), self.run_report(0.9, 0.8), self.run_report(0.6, 0.5)]
        a = aggregate_runs(runs)
        b = aggregate_runs(runs[::-1])
        assert a.cells == b.cells
        assert summary_csv_rows(a) == summary_csv_rows(b)

    def test_significance_built_per_relation(self):
        runs = []
        for run_idx in range(3):
            report = {}
            for country in ("UK", "KOREA", "TAIWAN"):
                for model, auc in (("LocalM", 0.6), ("FLavg", 0.8)):
                    wiggle = 0.01 * run_idx
                    report[(country, "buys", model)] = MetricPair(
                        roc_auc=auc + wiggle, average_precision=auc
                    )
            runs.append(report)
        report = aggregate_runs(runs)
        assert "buys" in report.significance
        entry = report.significance["buys"]["roc_auc"]
        assert entry.statistic == pytest.approx(3.0)
        assert entry.mean_ranks["FLavg"] == 1.0

    def test_csv_shapes(self):
        report = aggregate_runs([self.run_report(0.8, 0.7), self.run_report(0.9, 0.8)])
        assert len(per_run_csv_rows(report)) == 1 + 4  # header + 2 runs x 2 metrics
        assert len(summary_csv_rows(report)) == 1 + 2  # header + 2 metrics
        assert significance_payload(report) == {}  # single country, single model
