import numpy as np
import pytest

from entconform import (
    EmptyRun,
    EvaluationRun,
    InvalidInput,
    MetricsReport,
    PredictionSet,
    SizeBins,
    avg_set_size,
    compute_report,
    empirical_coverage,
    singleton_stats,
    size_stratified_coverage,
    sscv,
)


def make_run(label_sets, labels, alpha=0.1):
    return EvaluationRun(
        sets=tuple(PredictionSet(tuple(sorted(s))) for s in label_sets),
        labels=np.asarray(labels),
        alpha=alpha,
    )


def random_run(rng, n=50, k=10, alpha=0.1):
    sets = []
    for _ in range(n):
        size = int(rng.integers(0, k + 1))
        sets.append(tuple(sorted(rng.choice(k, size=size, replace=False))))
    labels = rng.integers(0, k, size=n)
    return make_run(sets, labels, alpha=alpha)


class TestEmpiricalCoverage:
    def test_hand_count(self):
        run = make_run([{1}, {1, 2}, {3}], [1, 3, 3])
        assert empirical_coverage(run) == pytest.approx(2 / 3)

    def test_full_sets_cover_everything(self):
        run = make_run([set(range(5))] * 4, [0, 1, 2, 4])
        assert empirical_coverage(run) == 1.0

    def test_empty_sets_cover_nothing(self):
        run = make_run([set(), set()], [0, 1])
        assert empirical_coverage(run) == 0.0

    def test_empty_run(self):
        with pytest.raises(EmptyRun):
            empirical_coverage(make_run([], []))


class TestAvgSetSize:
    def test_hand_mean(self):
        run = make_run([{0}, {0, 1}, {0, 1, 2}], [0, 0, 0])
        assert avg_set_size(run) == 2.0

    def test_all_singletons(self):
        run = make_run([{3}] * 5, [3, 3, 3, 0, 1])
        assert avg_set_size(run) == 1.0

    def test_all_full(self):
        run = make_run([set(range(10))] * 3, [0, 1, 2])
        assert avg_set_size(run) == 10.0


class TestSingletonStats:
    def test_hand_count(self):
        run = make_run([{1}, {1, 2}], [1, 0])
        ratio, cov = singleton_stats(run)
        assert ratio == 0.5
        assert cov == 1.0

    def test_no_singletons_coverage_absent(self):
        run = make_run([{1, 2}, set()], [1, 0])
        ratio, cov = singleton_stats(run)
        assert ratio == 0.0
        assert cov is None

    def test_all_correct_singletons(self):
        run = make_run([{2}, {4}], [2, 4])
        assert singleton_stats(run) == (1.0, 1.0)


class TestSizeBins:
    def test_default_for_large_k(self):
        assert SizeBins.default(1000).edges == ((0, 1), (2, 3), (4, 6), (7, 10), (11, 1000))

    def test_default_clamps_to_small_k(self):
        assert SizeBins.default(10).edges == ((0, 1), (2, 3), (4, 6), (7, 10))
        assert SizeBins.default(5).edges == ((0, 1), (2, 3), (4, 5))
        assert SizeBins.default(2).edges == ((0, 1), (2, 2))

    def test_rejects_gaps_and_disorder(self):
        with pytest.raises(InvalidInput):
            SizeBins(((0, 1), (3, 4)))
        with pytest.raises(InvalidInput):
            SizeBins(((1, 2),))
        with pytest.raises(InvalidInput):
            SizeBins(((0, 3), (2, 5)))


class TestSizeStratifiedCoverage:
    def test_hand_binning(self):
        run = make_run([{0}, {0, 1}, {0, 1, 2, 3, 4}], [0, 0, 0])
        stats = size_stratified_coverage(run, SizeBins.default(10))
        assert [(s.lo, s.hi, s.n, s.coverage) for s in stats] == [
            (0, 1, 1, 1.0),
            (2, 3, 1, 1.0),
            (4, 6, 1, 1.0),
            (7, 10, 0, None),
        ]

    def test_empty_bin_reported_as_none(self):
        run = make_run([{0}], [0])
        stats = size_stratified_coverage(run, SizeBins.default(10))
        assert stats[0].n == 1
        assert all(s.n == 0 and s.coverage is None for s in stats[1:])

    def test_single_bin_reproduces_empirical_coverage(self):
        rng = np.random.default_rng(5)
        run = random_run(rng)
        stats = size_stratified_coverage(run, SizeBins(((0, 10),)))
        assert stats[0].coverage == pytest.approx(empirical_coverage(run))


class TestSscv:
    def test_exact_conditional_coverage_is_zero(self):
        # one bin, coverage 0.9, alpha 0.1
        sets = [{0}] * 9 + [{1}]
        labels = [0] * 9 + [2]
        run = make_run(sets, labels, alpha=0.1)
        assert sscv(run, SizeBins(((0, 10),))) == pytest.approx(0.0)

    def test_max_deviation_over_bins(self):
        # bin {0-1}: 19 of 20 covered (0.95); bin {2-3}: 7 of 10 (0.7)
        sets = [{0}] * 20 + [{0, 1}] * 10
        labels = [0] * 19 + [5] + [0] * 7 + [5] * 3
        run = make_run(sets, labels, alpha=0.1)
        assert sscv(run, SizeBins.default(10)) == pytest.approx(0.2)

    def test_only_nonempty_bins_count(self):
        sets = [{0, 1}] * 4
        labels = [0, 0, 0, 5]
        run = make_run(sets, labels, alpha=0.25)
        assert sscv(run, SizeBins.default(10)) == pytest.approx(0.0)


class TestMetricIdentities:
    def test_stratified_consistency(self):
        rng = np.random.default_rng(6)
        bins = SizeBins.default(10)
        for _ in range(200):
            run = random_run(rng, n=int(rng.integers(1, 60)))
            stats = size_stratified_coverage(run, bins)
            assert sum(s.n for s in stats) == run.n
            recomposed = (
                sum(s.n * s.coverage for s in stats if s.coverage is not None) / run.n
            )
            assert recomposed == pytest.approx(empirical_coverage(run), abs=1e-12)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(7)
        run = random_run(rng, n=30)
        perm = rng.permutation(30)
        shuffled = EvaluationRun(
            sets=tuple(run.sets[i] for i in perm),
            labels=run.labels[perm],
            alpha=run.alpha,
        )
        bins = SizeBins.default(10)
        assert empirical_coverage(shuffled) == empirical_coverage(run)
        assert avg_set_size(shuffled) == avg_set_size(run)
        assert singleton_stats(shuffled) == singleton_stats(run)
        assert sscv(shuffled, bins) == sscv(run, bins)


class TestReport:
    def test_compute_report_fields(self):
        rng = np.random.default_rng(8)
        run = random_run(rng, n=40)
        report = compute_report(run, SizeBins.default(10))
        assert isinstance(report, MetricsReport)
        assert report.coverage == empirical_coverage(run)
        assert report.avg_set_size == avg_set_size(run)
        assert sum(s.n for s in report.stratified) == 40

    def test_json_omits_absent_metrics(self):
        run = make_run([{0, 1}], [0])
        doc = compute_report(run, SizeBins.default(5)).to_json_dict()
        assert "singleton_coverage" not in doc
        assert "sscv" in doc

    def test_metric_items_sorted_and_filtered(self):
        run = make_run([{0, 1}, {2}], [0, 2])
        items = compute_report(run, SizeBins.default(5)).metric_items()
        names = [name for name, _ in items]
        assert names == sorted(names)
        assert "singleton_coverage" in names
