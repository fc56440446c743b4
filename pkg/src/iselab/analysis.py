"""Cohort statistics for irrelevant-sound experiments.

Performance matrices (subjects x sound conditions), decrease-in-performance
tables, one-way repeated-measures ANOVA with exact F-distribution tail
probabilities, age/performance correlation, a seeded 2-means clustering of
subjects, and delimited-text report export. Table formats are lossless:
floats are written with repr precision so round trips are bit-exact.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

CONTROL_LABEL = "silence"


def condition_sti(label: str) -> float | None:
    """Parse the STI value out of a condition label, None for the control."""
    if label == CONTROL_LABEL:
        return None
    if label.startswith("sti-"):
        try:
            value = float(label[4:])
        except ValueError:
            raise ValueError(f"malformed condition label {label!r}")
        if not 0.0 < value <= 1.0:
            raise ValueError(f"condition label {label!r} has STI outside (0, 1]")
        return value
    raise ValueError(f"unrecognized condition label {label!r}")


def sti_label(sti: float | None) -> str:
    return CONTROL_LABEL if sti is None else f"sti-{sti:g}"


@dataclass(frozen=True)
class Subject:
    id: str
    age: float | None = None


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PerformanceMatrix:
    """Mean proportion correct per subject (rows) per condition (columns)."""

    subjects: tuple
    conditions: tuple          # ordered condition labels
    cells: np.ndarray

    def __post_init__(self):
        cells = _readonly(self.cells)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "subjects", tuple(self.subjects))
        object.__setattr__(self, "conditions", tuple(self.conditions))
        if cells.ndim != 2:
            raise ValueError("cells must be a 2-D subjects x conditions array")
        if cells.shape != (len(self.subjects), len(self.conditions)):
            raise ValueError(
                f"cells shape {cells.shape} does not match "
                f"{len(self.subjects)} subjects x {len(self.conditions)} conditions"
            )
        if len(set(self.conditions)) != len(self.conditions):
            raise ValueError("duplicate condition labels")
        ids = [s.id for s in self.subjects]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate subject ids")
        if not np.all(np.isfinite(cells)):
            raise ValueError("cells must be finite (no missing values)")
        if np.any(cells < 0.0) or np.any(cells > 1.0):
            raise ValueError("performance cells must lie in [0, 1]")
        for label in self.conditions:
            condition_sti(label)

    @property
    def n_subjects(self) -> int:
        return len(self.subjects)

    def column(self, label: str) -> np.ndarray:
        try:
            j = self.conditions.index(label)
        except ValueError:
            raise KeyError(f"condition {label!r} not in matrix")
        return self.cells[:, j]

    def mean_performance(self) -> np.ndarray:
        """Per-subject mean across all conditions."""
        return self.cells.mean(axis=1)

    def ages(self) -> np.ndarray:
        if any(s.age is None for s in self.subjects):
            raise ValueError("matrix has subjects without recorded age")
        return np.array([s.age for s in self.subjects], dtype=float)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["subject_id", "age", *self.conditions])
            for s, row in zip(self.subjects, self.cells):
                age = "" if s.age is None else repr(float(s.age))
                w.writerow([s.id, age, *[repr(float(v)) for v in row]])

    @classmethod
    def from_csv(cls, path) -> "PerformanceMatrix":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][:2] != ["subject_id", "age"]:
            raise ValueError(f"{path}: not a performance matrix file")
        conditions = tuple(rows[0][2:])
        subjects, cells = [], []
        for row in rows[1:]:
            if not row:
                continue
            subjects.append(Subject(row[0], float(row[1]) if row[1] else None))
            cells.append([float(v) for v in row[2:]])
        return cls(tuple(subjects), conditions, np.array(cells, dtype=float))


@dataclass(frozen=True)
class DpTable:
    """Per-subject decrease in performance relative to the control condition."""

    subjects: tuple
    conditions: tuple          # noise-condition labels, control excluded
    dp: np.ndarray
    unit: str = "proportion"   # "proportion" | "percent"
    control: str = CONTROL_LABEL

    def __post_init__(self):
        object.__setattr__(self, "dp", _readonly(self.dp))
        object.__setattr__(self, "subjects", tuple(self.subjects))
        object.__setattr__(self, "conditions", tuple(self.conditions))
        if self.unit not in ("proportion", "percent"):
            raise ValueError(f"unknown unit {self.unit!r}")
        if self.dp.shape != (len(self.subjects), len(self.conditions)):
            raise ValueError("dp shape does not match subjects x conditions")
        if self.control in self.conditions:
            raise ValueError("control condition must not appear as a dp column")

    def stis(self) -> np.ndarray:
        return np.array([condition_sti(c) for c in self.conditions], dtype=float)

    def as_percent(self) -> "DpTable":
        if self.unit == "percent":
            return self
        return DpTable(self.subjects, self.conditions, self.dp * 100.0,
                       "percent", self.control)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"subject_id", "age", f"unit={self.unit}",
                        f"control={self.control}"])
            w.writerow(["subject_id", "age", *self.conditions])
            for s, row in zip(self.subjects, self.dp):
                age = "" if s.age is None else repr(float(s.age))
                w.writerow([s.id, age, *[repr(float(v)) for v in row]])

    @classmethod
    def from_csv(cls, path) -> "DpTable":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if len(rows) < 2 or not rows[0][2].startswith("unit="):
            raise ValueError(f"{path}: not a dp table file")
        unit = rows[0][2].split("=", 1)[1]
        control = rows[0][3].split("=", 1)[1]
        conditions = tuple(rows[1][2:])
        subjects, dp = [], []
        for row in rows[2:]:
            if not row:
                continue
            subjects.append(Subject(row[0], float(row[1]) if row[1] else None))
            dp.append([float(v) for v in row[2:]])
        return cls(tuple(subjects), conditions, np.array(dp, dtype=float),
                   unit, control)


def decrease_in_performance(matrix: PerformanceMatrix,
                            control: str = CONTROL_LABEL) -> DpTable:
    """dp = performance(control) - performance(condition), per subject."""
    if control not in matrix.conditions:
        raise ValueError(f"control condition {control!r} not in matrix")
    base = matrix.column(control)
    noise = [c for c in matrix.conditions if c != control]
    dp = np.column_stack([base - matrix.column(c) for c in noise])
    return DpTable(matrix.subjects, tuple(noise), dp, "proportion", control)


# ---------------------------------------------------------------------------
# F distribution via the regularized incomplete beta function


def _log_beta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def _beta_cf(a: float, b: float, x: float, max_iter: int = 500,
             eps: float = 1e-16) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """I_x(a, b), continued-fraction evaluation with the symmetry switch."""
    if a <= 0 or b <= 0:
        raise ValueError("beta parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = a * math.log(x) + b * math.log1p(-x) - _log_beta(a, b)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(ln_front) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(ln_front) * _beta_cf(b, a, 1.0 - x) / b


def f_cdf_upper(f: float, d1: float, d2: float) -> float:
    """P(F(d1, d2) > f), the upper tail of the F distribution."""
    if d1 < 1 or d2 < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got ({d1}, {d2})")
    if math.isnan(f) or f < 0:
        raise ValueError(f"F statistic must be >= 0, got {f}")
    if f == 0.0:
        return 1.0
    if math.isinf(f):
        return 0.0
    x = d2 / (d2 + d1 * f)
    return betainc_regularized(d2 / 2.0, d1 / 2.0, x)


@dataclass(frozen=True)
class AnovaResult:
    f: float
    df_effect: int
    df_error: int
    p: float
    ss_effect: float
    ss_subjects: float
    ss_error: float
    zero_error_variance: bool = False

    def row(self) -> dict:
        return {
            "f": self.f, "df_effect": self.df_effect, "df_error": self.df_error,
            "p": self.p, "ss_effect": self.ss_effect,
            "ss_subjects": self.ss_subjects, "ss_error": self.ss_error,
            "zero_error_variance": self.zero_error_variance,
        }


def _as_cells(data) -> np.ndarray:
    if isinstance(data, PerformanceMatrix):
        return np.asarray(data.cells, dtype=float)
    if isinstance(data, DpTable):
        return np.asarray(data.dp, dtype=float)
    return np.asarray(data, dtype=float)


def rm_anova(data) -> AnovaResult:
    """One-way repeated-measures ANOVA over a complete subjects x conditions table.

    SS_total = SS_conditions + SS_subjects + SS_error;
    F = (SS_conditions/(k-1)) / (SS_error/((k-1)(n-1))).
    A table where every subject shows the identical condition pattern has zero
    error variance; that yields an infinite-F flagged result rather than an error.
    """
    x = _as_cells(data)
    if x.ndim != 2:
        raise ValueError("need a 2-D subjects x conditions table")
    n, k = x.shape
    if n < 2 or k < 2:
        raise ValueError(f"need >= 2 subjects and >= 2 conditions, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("table has missing or non-finite cells")

    grand = x.mean()
    ss_total = float(((x - grand) ** 2).sum())
    ss_cond = float(n * ((x.mean(axis=0) - grand) ** 2).sum())
    ss_subj = float(k * ((x.mean(axis=1) - grand) ** 2).sum())
    ss_error = ss_total - ss_cond - ss_subj
    if ss_error < 0.0:
        # only reachable through rounding; the partition identity is exact math
        if ss_error < -1e-9 * max(ss_total, 1.0):
            raise RuntimeError("sum-of-squares partition failed")
        ss_error = 0.0

    df_effect = k - 1
    df_error = (k - 1) * (n - 1)
    scale = max(ss_total, 1.0)
    if ss_error <= 1e-12 * scale:
        return AnovaResult(math.inf, df_effect, df_error, 0.0,
                           ss_cond, ss_subj, ss_error, zero_error_variance=True)
    f = (ss_cond / df_effect) / (ss_error / df_error)
    return AnovaResult(f, df_effect, df_error, f_cdf_upper(f, df_effect, df_error),
                       ss_cond, ss_subj, ss_error)


def pearson_r(x: Sequence[float], y: Sequence[float]) -> tuple:
    """Product-moment correlation and its two-sided p-value.

    p comes from the exact F tail: t = r*sqrt((n-2)/(1-r^2)) and
    P(|T| > t) = P(F(1, n-2) > t^2).
    """
    xv = np.asarray(x, dtype=float)
    yv = np.asarray(y, dtype=float)
    if xv.shape != yv.shape or xv.ndim != 1:
        raise ValueError("x and y must be 1-D and the same length")
    n = len(xv)
    if n < 3:
        raise ValueError("need at least 3 points")
    xc = xv - xv.mean()
    yc = yv - yv.mean()
    sx = float(np.sqrt((xc ** 2).sum()))
    sy = float(np.sqrt((yc ** 2).sum()))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("constant input has no defined correlation")
    r = float((xc * yc).sum() / (sx * sy))
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return r, 0.0
    t2 = r * r * (n - 2) / (1.0 - r * r)
    return r, f_cdf_upper(t2, 1, n - 2)


# ---------------------------------------------------------------------------
# 2-means clustering of subjects in standardized (age, mean performance) space


@dataclass(frozen=True)
class ClusterAssignment:
    labels: tuple              # 0/1 per subject; 0 = lower-age centroid
    centroids: np.ndarray      # 2 x n_features, standardized space
    inertia: float
    feature_means: tuple
    feature_scales: tuple
    restarts: int

    def __post_init__(self):
        object.__setattr__(self, "centroids", _readonly(self.centroids))


def cluster_two_groups(points: Sequence[Sequence[float]], seed: int = 0,
                       restarts: int = 10) -> ClusterAssignment:
    """Seeded 2-means over z-scored features, best inertia across restarts.

    Ties between restarts keep the earliest restart's solution. Label 0 is
    the cluster whose centroid has the lower first feature (age), so group
    numbering is stable across seeds that find the same partition.
    """
    p = np.asarray(points, dtype=float)
    if p.ndim != 2 or p.shape[1] < 1:
        raise ValueError("points must be an n x n_features array")
    n = len(p)
    if n < 2:
        raise ValueError("need at least 2 points")
    if np.all(p == p[0]):
        raise ValueError("all points identical; two groups are undefined")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")

    means = p.mean(axis=0)
    scales = p.std(axis=0)
    scales[scales == 0.0] = 1.0
    z = (p - means) / scales

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        idx = rng.choice(n, size=2, replace=False)
        if np.all(z[idx[0]] == z[idx[1]]):
            distinct = np.nonzero(np.any(z != z[idx[0]], axis=1))[0]
            idx = np.array([idx[0], distinct[0]])
        cent = z[idx].astype(float)
        labels = None
        for _ in range(200):
            d = ((z[:, None, :] - cent[None, :, :]) ** 2).sum(axis=2)
            new_labels = d.argmin(axis=1)
            for g in range(2):
                members = z[new_labels == g]
                if len(members):
                    cent[g] = members.mean(axis=0)
                else:
                    far = int(d.min(axis=1).argmax())
                    cent[g] = z[far]
                    new_labels[far] = g
            if labels is not None and np.array_equal(new_labels, labels):
                break
            labels = new_labels
        inertia = float(((z - cent[labels]) ** 2).sum())
        if best is None or inertia < best[0] - 1e-12:
            best = (inertia, labels.copy(), cent.copy())

    inertia, labels, cent = best
    if cent[0, 0] > cent[1, 0]:
        labels = 1 - labels
        cent = cent[::-1].copy()
    return ClusterAssignment(tuple(int(v) for v in labels), cent, inertia,
                             tuple(float(v) for v in means),
                             tuple(float(v) for v in scales), restarts)


# ---------------------------------------------------------------------------
# report export


def _write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def export_report(matrix: PerformanceMatrix, outdir,
                  control: str = CONTROL_LABEL, cluster_seed: int = 0) -> dict:
    """Write the analysis bundle for one cohort; returns {artifact: path}.

    Always writes the performance matrix, the dp table (percent), the ANOVA
    row over dp, and mean dp vs STI plot data. Age-dependent outputs
    (correlations, two-group clustering) are written only when every subject
    has a recorded age.
    """
    if matrix.n_subjects == 0:
        raise ValueError("empty cohort")
    os.makedirs(outdir, exist_ok=True)
    paths = {}

    matrix_path = os.path.join(outdir, "performance_matrix.csv")
    matrix.to_csv(matrix_path)
    paths["performance_matrix"] = matrix_path

    dp = decrease_in_performance(matrix, control).as_percent()
    dp_path = os.path.join(outdir, "dp_table.csv")
    dp.to_csv(dp_path)
    paths["dp_table"] = dp_path

    anova = rm_anova(dp)
    anova_path = os.path.join(outdir, "anova.csv")
    row = anova.row()
    _write_table(anova_path, list(row.keys()),
                 [[repr(v) if isinstance(v, float) else v for v in row.values()]])
    paths["anova"] = anova_path

    stis = dp.stis()
    dp_vs_sti = os.path.join(outdir, "dp_vs_sti.csv")
    _write_table(
        dp_vs_sti,
        ["sti", "condition", "mean_dp_percent", "sd_dp_percent", "n_subjects"],
        [[repr(float(s)), c, repr(float(col.mean())),
          repr(float(col.std(ddof=1))) if len(col) > 1 else "",
          len(col)]
         for s, c, col in zip(stis, dp.conditions, dp.dp.T)],
    )
    paths["dp_vs_sti"] = dp_vs_sti

    if all(s.age is not None for s in matrix.subjects) and matrix.n_subjects >= 3:
        ages = matrix.ages()
        mean_perf = matrix.mean_performance()
        mean_dp = dp.dp.mean(axis=1)
        rows = []
        for name, y in (("age_vs_mean_performance", mean_perf),
                        ("age_vs_mean_dp_percent", mean_dp)):
            try:
                r, p = pearson_r(ages, y)
                rows.append([name, repr(r), repr(p), len(ages)])
            except ValueError:
                rows.append([name, "", "", len(ages)])
        corr_path = os.path.join(outdir, "correlation.csv")
        _write_table(corr_path, ["pair", "r", "p", "n"], rows)
        paths["correlation"] = corr_path

        assignment = cluster_two_groups(
            np.column_stack([ages, mean_perf]), seed=cluster_seed)
        cluster_path = os.path.join(outdir, "clusters.csv")
        _write_table(
            cluster_path,
            ["subject_id", "age", "mean_performance", "group"],
            [[s.id, repr(float(a)), repr(float(m)), g]
             for s, a, m, g in zip(matrix.subjects, ages, mean_perf,
                                   assignment.labels)],
        )
        paths["clusters"] = cluster_path

    return paths
