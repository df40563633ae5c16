import numpy as np
import pytest

from trafficast import outlier
from trafficast.errors import InsufficientData, InsufficientDonors
from trafficast.outlier import MitigationMode

def brute_knn_rmse(values, k, window):
    """Reference next-step KNN regressor: full sort, pure-python distances."""
    values = list(values)
    m = len(values) - window
    sq_errors = []
    for i in range(m):
        query = values[i : i + window]
        dists = []
        for j in range(m):
            if j == i:
                continue
            d = sum((values[j + t] - query[t]) ** 2 for t in range(window))
            dists.append((d, j))
        dists.sort()
        pred = sum(values[j + window] for _, j in dists[:k]) / k
        sq_errors.append((pred - values[i + window]) ** 2)
    return (sum(sq_errors) / len(sq_errors)) ** 0.5


def brute_neighbor_mitigation(values, flagged, k, window):
    """Reference NEIGHBOR-mode imputation with NaN-aware distances."""
    values = np.asarray(values, dtype=float)
    n = values.size
    flagged = set(int(i) for i in flagged)
    masked = values.copy()
    for i in flagged:
        masked[i] = np.nan

    def feature(i):
        f = []
        for lag in range(window, 0, -1):
            j = i - lag
            f.append(masked[j] if j >= 0 else np.nan)
        return f

    def dist(a, b):
        terms = [(x - y) ** 2 for x, y in zip(a, b) if not (np.isnan(x) or np.isnan(y))]
        if not terms:
            return np.inf
        return sum(terms) * len(a) / len(terms)

    out = values.copy()
    donors = [j for j in range(n) if j not in flagged]
    for i in sorted(flagged):
        fi = feature(i)
        ranked = sorted(donors, key=lambda j: (dist(fi, feature(j)), j))
        usable = [j for j in ranked if np.isfinite(dist(fi, feature(j)))]
        out[i] = np.mean(values[usable[:k]])
    return out


class TestDetect:
    def test_constant_series_flags_nothing(self, make_series):
        bounds, flagged = outlier.detect(make_series([5.0] * 4))
        assert bounds.std_dev == 0.0
        assert flagged.size == 0

    def test_boundary_value_not_flagged(self, make_series):
        # mean 100, population sigma 300, upper bound exactly 1000;
        # the strict inequality leaves the boundary point unflagged
        bounds, flagged = outlier.detect(make_series([0.0] * 9 + [1000.0]))
        assert bounds.mean == pytest.approx(100.0)
        assert bounds.std_dev == pytest.approx(300.0)
        assert bounds.upper == pytest.approx(1000.0)
        assert flagged.size == 0

    def test_population_std_not_sample(self, make_series):
        values = np.array([1.0, 2.0, 3.0, 4.0])
        bounds, _ = outlier.detect(make_series(values))
        assert bounds.std_dev == pytest.approx(float(values.std(ddof=0)))
        assert bounds.std_dev != pytest.approx(float(values.std(ddof=1)))

    def test_gaussian_flagged_fraction(self, make_series):
        # normal theory: P(|z| > 3) ~ 0.27%
        values = np.random.default_rng(99).normal(0, 1, 10_000)
        _, flagged = outlier.detect(make_series(values))
        fraction = flagged.size / values.size
        assert 0.001 <= fraction <= 0.006

    def test_bounds_symmetric(self, make_series):
        bounds, _ = outlier.detect(make_series(np.random.default_rng(3).normal(50, 5, 300)))
        assert bounds.upper - bounds.mean == pytest.approx(bounds.mean - bounds.lower)
        assert bounds.upper - bounds.mean == pytest.approx(3 * bounds.std_dev)

    def test_too_short(self, make_series):
        with pytest.raises(InsufficientData):
            outlier.detect(make_series([1.0]))


class TestKnnRegressor:
    def test_periodic_series_zero_error(self, make_series):
        values = np.tile([1.0, 5.0, 2.0, 8.0, 3.0], 40)
        assert outlier.knn_regressor_rmse(make_series(values), 2, window=5) == 0.0

    def test_too_short_for_k(self, make_series):
        with pytest.raises(InsufficientData):
            outlier.knn_regressor_rmse(make_series([1.0, 2.0, 3.0, 4.0, 5.0]), 4, window=1)

    def test_matches_brute_force(self, make_series):
        rng = np.random.default_rng(7)
        values = rng.normal(2.0e9, 3.0e8, 220)
        s = make_series(values)
        for k in (2, 7, 13, 24):
            mine = outlier.knn_regressor_rmse(s, k, window=6)
            ref = brute_knn_rmse(values, k, 6)
            assert abs(mine - ref) <= 1e-9 * ref

    def test_optimize_k_is_argmin_of_table(self, make_series):
        rng = np.random.default_rng(17)
        s = make_series(rng.normal(100, 10, 300))
        best_k, table = outlier.optimize_k(s, (2, 24), window=5)
        assert set(table) == set(range(2, 25))
        assert best_k == min(table, key=lambda k: (table[k], k))

    def test_optimize_k_matches_brute_argmin(self, make_series):
        rng = np.random.default_rng(23)
        values = rng.normal(10, 2, 150)
        s = make_series(values)
        best_k, table = outlier.optimize_k(s, (2, 10), window=4)
        brute = {k: brute_knn_rmse(values, k, 4) for k in range(2, 11)}
        for k in brute:
            assert abs(table[k] - brute[k]) <= 1e-9 * max(brute[k], 1e-30)
        assert best_k == min(brute, key=lambda k: (brute[k], k))

    def test_exact_period_two_repetition_prefers_smallest_k(self, make_series):
        values = np.tile([4.0, 9.0], 60)
        best_k, table = outlier.optimize_k(make_series(values), (2, 6), window=2)
        assert table[2] == 0.0
        assert best_k == 2


class TestMitigate:
    def test_empty_flagged_is_identity(self, make_series):
        s = make_series([1.0, 2.0, 3.0])
        out = outlier.mitigate(s, np.array([], dtype=int), 2)
        assert np.array_equal(out.values, s.values)

    def test_preceding_mode_mean_of_equal_donors(self, make_series):
        s = make_series([10.0, 10.0, 10.0, 10.0, 1000.0])
        out = outlier.mitigate(s, np.array([4]), 4, MitigationMode.PRECEDING)
        assert out.values[4] == pytest.approx(10.0)

    def test_preceding_mode_insufficient_donors(self, make_series):
        s = make_series([10.0, 1000.0, 10.0])
        with pytest.raises(InsufficientDonors):
            outlier.mitigate(s, np.array([1]), 3, MitigationMode.PRECEDING)

    def test_neighbor_mode_matches_brute_force(self, make_series):
        rng = np.random.default_rng(5)
        values = rng.normal(50.0, 5.0, 160)
        flagged = np.array([31, 77, 120])
        values[flagged] += 400.0
        s = make_series(values)
        mine = outlier.mitigate(s, flagged, 5, MitigationMode.NEIGHBOR, window=4)
        ref = brute_neighbor_mitigation(values, flagged, 5, 4)
        assert np.max(np.abs(mine.values - ref)) <= 1e-9 * np.max(np.abs(ref))

    def test_only_flagged_indices_change(self, make_series):
        rng = np.random.default_rng(9)
        values = rng.normal(20, 3, 100)
        flagged = np.array([40, 60])
        s = make_series(values)
        out = outlier.mitigate(s, flagged, 3, MitigationMode.NEIGHBOR, window=5)
        untouched = np.ones(100, dtype=bool)
        untouched[flagged] = False
        assert np.array_equal(out.values[untouched], values[untouched])

    def test_mitigated_series_clears_original_bounds(self, make_series):
        rng = np.random.default_rng(13)
        values = rng.normal(1000.0, 10.0, 400)
        spikes = np.array([50, 150, 250])
        values[spikes] += 500.0
        s = make_series(values)
        bounds, flagged = outlier.detect(s)
        assert set(flagged) == set(spikes)
        out = outlier.mitigate(s, flagged, 5, MitigationMode.NEIGHBOR, window=4)
        recheck = (out.values > bounds.upper) | (out.values < bounds.lower)
        assert not recheck.any()


class TestAnalyze:
    def test_full_report_consistency(self, make_series):
        rng = np.random.default_rng(21)
        values = rng.normal(5.0e9, 2.0e8, 500)
        spikes = np.array([100, 300])
        values[spikes] = 5.0e9 + 3.0e9
        s = make_series(values)
        report = outlier.analyze(s, (2, 8), window=5)
        assert set(report.flagged) == set(spikes)
        assert report.best_k == min(
            report.k_rmse_table, key=lambda k: (report.k_rmse_table[k], k)
        )
        assert len(report.mitigated) == len(s)
