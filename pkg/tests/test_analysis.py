"""Statistics layer: dp tables, F tail, repeated-measures ANOVA, clustering."""

import math
from fractions import Fraction

import numpy as np
import pytest
import scipy.stats

from iselab.analysis import (
    AnovaResult,
    DpTable,
    PerformanceMatrix,
    Subject,
    betainc_regularized,
    cluster_two_groups,
    condition_sti,
    decrease_in_performance,
    export_report,
    f_cdf_upper,
    pearson_r,
    rm_anova,
    sti_label,
)


def small_matrix(ages=(31.0, 44.0, 58.0)):
    subjects = tuple(Subject(f"s{i}", a) for i, a in enumerate(ages))
    conditions = ("silence", "sti-0.25", "sti-0.75")
    cells = np.array([
        [0.90, 0.85, 0.80],
        [0.80, 0.78, 0.70],
        [0.95, 0.88, 0.86],
    ])
    return PerformanceMatrix(subjects, conditions, cells)


def test_condition_labels_round_trip():
    assert condition_sti("silence") is None
    assert condition_sti("sti-0.45") == 0.45
    assert sti_label(None) == "silence"
    assert sti_label(0.45) == "sti-0.45"
    for label in ("sti-xyz", "sti-1.5", "noise", "sti-0"):
        with pytest.raises(ValueError):
            condition_sti(label)


def test_matrix_validation():
    subjects = (Subject("a"), Subject("b"))
    with pytest.raises(ValueError, match="shape"):
        PerformanceMatrix(subjects, ("silence",), np.zeros((2, 2)))
    with pytest.raises(ValueError, match="duplicate condition"):
        PerformanceMatrix(subjects, ("silence", "silence"), np.zeros((2, 2)))
    with pytest.raises(ValueError, match="duplicate subject"):
        PerformanceMatrix((Subject("a"), Subject("a")),
                          ("silence", "sti-0.5"), np.zeros((2, 2)))
    with pytest.raises(ValueError, match=r"lie in \[0, 1\]"):
        PerformanceMatrix(subjects, ("silence", "sti-0.5"),
                          np.array([[0.5, 1.2], [0.5, 0.5]]))
    with pytest.raises(ValueError, match="finite"):
        PerformanceMatrix(subjects, ("silence", "sti-0.5"),
                          np.array([[0.5, np.nan], [0.5, 0.5]]))
    with pytest.raises(ValueError, match="unrecognized condition"):
        PerformanceMatrix(subjects, ("silence", "quiet"), np.zeros((2, 2)))


def test_matrix_access_and_immutability():
    m = small_matrix()
    assert m.n_subjects == 3
    assert m.column("sti-0.25").tolist() == [0.85, 0.78, 0.88]
    with pytest.raises(KeyError):
        m.column("sti-0.9")
    with pytest.raises(ValueError):
        m.cells[0, 0] = 0.0
    assert m.mean_performance()[0] == pytest.approx((0.90 + 0.85 + 0.80) / 3)
    assert m.ages().tolist() == [31.0, 44.0, 58.0]
    no_age = PerformanceMatrix((Subject("a"), Subject("b", 30.0)),
                               ("silence", "sti-0.5"), np.full((2, 2), 0.5))
    with pytest.raises(ValueError, match="without recorded age"):
        no_age.ages()


def test_matrix_csv_round_trip_is_lossless(tmp_path):
    rng = np.random.default_rng(5)
    subjects = tuple(Subject(f"s{i}", 20.0 + i * 0.37) for i in range(6))
    cells = rng.uniform(0, 1, size=(6, 3))
    m = PerformanceMatrix(subjects, ("silence", "sti-0.25", "sti-0.9"), cells)
    path = tmp_path / "m.csv"
    m.to_csv(path)
    again = PerformanceMatrix.from_csv(path)
    assert again.subjects == m.subjects
    assert again.conditions == m.conditions
    assert np.array_equal(again.cells, m.cells)
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n")
    with pytest.raises(ValueError, match="not a performance matrix"):
        PerformanceMatrix.from_csv(bad)


def test_decrease_in_performance_values():
    m = small_matrix()
    dp = decrease_in_performance(m)
    assert dp.conditions == ("sti-0.25", "sti-0.75")
    assert dp.unit == "proportion"
    assert dp.dp[0].tolist() == pytest.approx([0.05, 0.10])
    assert dp.stis().tolist() == [0.25, 0.75]
    percent = dp.as_percent()
    assert percent.unit == "percent"
    assert percent.dp[0].tolist() == pytest.approx([5.0, 10.0])
    assert percent.as_percent() is percent
    with pytest.raises(ValueError, match="control condition"):
        decrease_in_performance(m, control="sti-0.5")


def test_dp_table_validation_and_csv(tmp_path):
    m = small_matrix()
    dp = decrease_in_performance(m)
    with pytest.raises(ValueError, match="unknown unit"):
        DpTable(dp.subjects, dp.conditions, dp.dp, unit="points")
    with pytest.raises(ValueError, match="control condition must not"):
        DpTable(dp.subjects, ("silence", "sti-0.25"),
                np.zeros((3, 2)), unit="proportion")
    path = tmp_path / "dp.csv"
    dp.to_csv(path)
    again = DpTable.from_csv(path)
    assert again.unit == dp.unit
    assert again.control == dp.control
    assert again.conditions == dp.conditions
    assert np.array_equal(again.dp, dp.dp)


# Frozen high-precision oracle values for the F upper tail (30-digit
# arbitrary-precision evaluation of the regularized incomplete beta).
F_TAIL_ORACLE = (
    (4.32, 3, 162, 0.00583682658781),
    (1.0, 10, 10, 0.5),
    (2.5, 4, 30, 0.0634764397983),
    (0.7, 7, 120, 0.67195689098),
    (5.0, 1, 8, 0.055766528901),
    (3.1, 240, 960, 1.06364574767e-34),
)


@pytest.mark.parametrize("f,d1,d2,expected", F_TAIL_ORACLE)
def test_f_tail_against_frozen_oracle(f, d1, d2, expected):
    assert f_cdf_upper(f, d1, d2) == pytest.approx(expected, rel=1e-10)


def test_f_tail_against_scipy_grid():
    for f in (0.01, 0.5, 1.0, 2.0, 4.32, 10.0, 50.0):
        for d1, d2 in ((1, 5), (3, 162), (8, 40), (2, 2)):
            assert f_cdf_upper(f, d1, d2) == pytest.approx(
                scipy.stats.f.sf(f, d1, d2), rel=1e-10)


def test_f_tail_boundaries_and_validation():
    assert f_cdf_upper(0.0, 3, 10) == 1.0
    assert f_cdf_upper(math.inf, 3, 10) == 0.0
    values = [f_cdf_upper(f, 3, 162) for f in (0.5, 1.0, 2.0, 4.0, 8.0)]
    assert all(a > b for a, b in zip(values, values[1:]))
    with pytest.raises(ValueError, match="degrees of freedom"):
        f_cdf_upper(1.0, 0, 10)
    with pytest.raises(ValueError, match=">= 0"):
        f_cdf_upper(-1.0, 3, 10)
    with pytest.raises(ValueError, match="positive"):
        betainc_regularized(0.0, 1.0, 0.5)
    assert betainc_regularized(2.0, 3.0, 0.0) == 0.0
    assert betainc_regularized(2.0, 3.0, 1.0) == 1.0


def brute_force_rm_anova(cells):
    """Exact-rational transcription of the sum-of-squares definitions."""
    rows = [[Fraction(v).limit_denominator(10 ** 12) for v in row] for row in cells]
    n, k = len(rows), len(rows[0])
    grand = sum(sum(r) for r in rows) / (n * k)
    col_means = [sum(rows[i][j] for i in range(n)) / n for j in range(k)]
    row_means = [sum(r) / k for r in rows]
    ss_total = sum((rows[i][j] - grand) ** 2 for i in range(n) for j in range(k))
    ss_cond = n * sum((m - grand) ** 2 for m in col_means)
    ss_subj = k * sum((m - grand) ** 2 for m in row_means)
    ss_error = ss_total - ss_cond - ss_subj
    if ss_error == 0:
        return math.inf, ss_cond, ss_subj, ss_error
    f = (ss_cond / (k - 1)) / (ss_error / ((k - 1) * (n - 1)))
    return float(f), ss_cond, ss_subj, ss_error


def test_rm_anova_hand_case_zero_error():
    result = rm_anova([[1, 2], [2, 3], [3, 4]])
    assert result.zero_error_variance
    assert result.f == math.inf
    assert result.p == 0.0
    assert result.ss_effect == pytest.approx(1.5)
    assert result.ss_subjects == pytest.approx(4.0)
    assert result.ss_error == pytest.approx(0.0, abs=1e-12)


def test_rm_anova_hand_case_with_error():
    result = rm_anova([[1, 2], [2, 4], [3, 3]])
    assert result.f == pytest.approx(3.0)
    assert (result.df_effect, result.df_error) == (1, 2)
    # Analytic tail for F(1, 2): P(F > f) = 1 - sqrt(f / (f + 2)) evaluated
    # through the incomplete beta; at f = 3 this equals 1 - sqrt(0.6).
    assert result.p == pytest.approx(1 - math.sqrt(0.6), rel=1e-12)
    assert not result.zero_error_variance


def test_rm_anova_matches_exact_arithmetic_on_random_tables():
    rng = np.random.default_rng(12)
    for _ in range(20):
        n = int(rng.integers(3, 9))
        k = int(rng.integers(2, 6))
        cells = np.round(rng.uniform(0, 10, size=(n, k)), 6)
        mine = rm_anova(cells)
        f_exact, ss_cond, ss_subj, ss_error = brute_force_rm_anova(cells.tolist())
        if math.isinf(f_exact):
            assert mine.zero_error_variance
        else:
            assert mine.f == pytest.approx(f_exact, rel=1e-9)
        assert mine.ss_effect == pytest.approx(float(ss_cond), rel=1e-9, abs=1e-12)
        assert mine.ss_subjects == pytest.approx(float(ss_subj), rel=1e-9, abs=1e-12)
        total = mine.ss_effect + mine.ss_subjects + mine.ss_error
        grand = cells.mean()
        assert total == pytest.approx(float(((cells - grand) ** 2).sum()), rel=1e-12)


def test_rm_anova_invariances():
    rng = np.random.default_rng(13)
    cells = rng.uniform(0, 1, size=(8, 4))
    base = rm_anova(cells)
    shifted = rm_anova(cells + 3.7)
    assert shifted.f == pytest.approx(base.f, rel=1e-9)
    # Per-subject offsets land in the subject term, not the effect or error.
    offsets = rng.normal(0, 2, size=(8, 1))
    per_subject = rm_anova(cells + offsets)
    assert per_subject.f == pytest.approx(base.f, rel=1e-9)
    assert per_subject.ss_effect == pytest.approx(base.ss_effect, rel=1e-9)
    scaled = rm_anova(cells * 100.0)
    assert scaled.f == pytest.approx(base.f, rel=1e-9)
    assert scaled.p == pytest.approx(base.p, rel=1e-9)


def test_rm_anova_accepts_matrix_and_dp_table():
    m = small_matrix()
    from_matrix = rm_anova(m)
    from_cells = rm_anova(np.asarray(m.cells))
    assert from_matrix == from_cells
    dp = decrease_in_performance(m)
    assert rm_anova(dp).df_effect == 1  # two noise conditions


def test_rm_anova_validation():
    with pytest.raises(ValueError, match=">= 2 subjects"):
        rm_anova([[1, 2]])
    with pytest.raises(ValueError, match="2-D"):
        rm_anova([1, 2, 3])
    with pytest.raises(ValueError, match="non-finite"):
        rm_anova([[1, 2], [3, float("nan")]])


def test_anova_result_row():
    row = AnovaResult(2.0, 3, 12, 0.1, 6.0, 1.0, 24.0).row()
    assert row["f"] == 2.0
    assert row["df_error"] == 12
    assert row["zero_error_variance"] is False


def test_pearson_r_exact_cases():
    # Values with exactly representable norms hit the |r| = 1 shortcut.
    x = [1.0, 1.0, 3.0, 3.0]
    r, p = pearson_r(x, [2.0, 2.0, 6.0, 6.0])
    assert (r, p) == (1.0, 0.0)
    r, p = pearson_r(x, [6.0, 6.0, 2.0, 2.0])
    assert (r, p) == (-1.0, 0.0)
    r, p = pearson_r([1.0, 2.0, 3.0, 4.0], [2.0, 4.0, 6.0, 8.0])
    assert r == pytest.approx(1.0)
    assert p == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError, match="constant"):
        pearson_r(x, [1.0, 1.0, 1.0, 1.0])
    with pytest.raises(ValueError, match="at least 3"):
        pearson_r([1, 2], [3, 4])


def test_pearson_r_against_scipy():
    rng = np.random.default_rng(21)
    for n in (5, 12, 55):
        x = rng.normal(size=n)
        y = 0.4 * x + rng.normal(size=n)
        r, p = pearson_r(x, y)
        ref = scipy.stats.pearsonr(x, y)
        assert r == pytest.approx(ref.statistic, rel=1e-12)
        assert p == pytest.approx(ref.pvalue, rel=1e-9)


def test_pearson_r_affine_invariance():
    rng = np.random.default_rng(22)
    x = rng.normal(size=20)
    y = rng.normal(size=20)
    r, p = pearson_r(x, y)
    r2, p2 = pearson_r(3.0 * x + 1.0, y)
    assert r2 == pytest.approx(r, rel=1e-12)
    assert p2 == pytest.approx(p, rel=1e-12)
    r3, _ = pearson_r(-2.0 * x, y)
    assert r3 == pytest.approx(-r, rel=1e-12)


def test_cluster_two_groups_separates_blobs():
    rng = np.random.default_rng(30)
    young = np.column_stack([rng.normal(25, 2, 20), rng.normal(0.9, 0.02, 20)])
    old = np.column_stack([rng.normal(60, 2, 20), rng.normal(0.7, 0.02, 20)])
    points = np.vstack([young, old])
    assignment = cluster_two_groups(points, seed=0)
    assert assignment.labels[:20] == (0,) * 20   # label 0 = lower-age centroid
    assert assignment.labels[20:] == (1,) * 20
    assert assignment.centroids[0, 0] < assignment.centroids[1, 0]
    # Any seed finds the same well-separated partition.
    for seed in (1, 2, 3):
        assert cluster_two_groups(points, seed=seed).labels == assignment.labels


def test_cluster_two_groups_determinism_and_errors():
    points = [[1.0, 1.0], [1.1, 0.9], [5.0, 5.0], [5.1, 5.2]]
    a = cluster_two_groups(points, seed=7)
    b = cluster_two_groups(points, seed=7)
    assert a.labels == b.labels
    assert a.inertia == b.inertia
    with pytest.raises(ValueError, match="identical"):
        cluster_two_groups([[2.0, 2.0], [2.0, 2.0]])
    with pytest.raises(ValueError, match="at least 2"):
        cluster_two_groups([[1.0, 2.0]])
    with pytest.raises(ValueError, match="restarts"):
        cluster_two_groups(points, restarts=0)


def test_export_report_full_bundle(tmp_path):
    rng = np.random.default_rng(50)
    subjects = tuple(Subject(f"s{i:02d}", float(rng.integers(20, 70)))
                     for i in range(10))
    conditions = ("silence", "sti-0.25", "sti-0.45", "sti-0.75", "sti-0.9")
    base = rng.uniform(0.75, 0.95, size=(10, 1))
    drop = np.array([0.0, 0.01, 0.03, 0.06, 0.06])
    cells = np.clip(base - drop + rng.normal(0, 0.01, size=(10, 5)), 0, 1)
    m = PerformanceMatrix(subjects, conditions, cells)

    paths = export_report(m, tmp_path / "report")
    assert set(paths) == {"performance_matrix", "dp_table", "anova",
                          "dp_vs_sti", "correlation", "clusters"}
    again = PerformanceMatrix.from_csv(paths["performance_matrix"])
    assert np.array_equal(again.cells, m.cells)
    dp = DpTable.from_csv(paths["dp_table"])
    assert dp.unit == "percent"
    assert np.array_equal(
        dp.dp, decrease_in_performance(m).as_percent().dp)
    with open(paths["anova"]) as fh:
        header = fh.readline().strip().split(",")
        values = fh.readline().strip().split(",")
    row = dict(zip(header, values))
    assert float(row["f"]) == pytest.approx(rm_anova(dp).f)
    assert int(row["df_effect"]) == 3


def test_export_report_without_ages_skips_age_outputs(tmp_path):
    subjects = tuple(Subject(f"s{i}") for i in range(4))
    cells = np.array([
        [0.9, 0.8, 0.75], [0.85, 0.8, 0.78], [0.95, 0.9, 0.88], [0.7, 0.72, 0.65],
    ])
    m = PerformanceMatrix(subjects, ("silence", "sti-0.45", "sti-0.9"), cells)
    paths = export_report(m, tmp_path / "r2")
    assert set(paths) == {"performance_matrix", "dp_table", "anova", "dp_vs_sti"}
