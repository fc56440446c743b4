"""Logistic model of decrease in performance as a function of STI.

dp(sti) = dp_max / (1 + exp(-slope * (sti - midpoint)))

The default constants are calibrated, not measured: they are chosen so the
curve varies over STI 0.25..0.7 and sits within half a point of a 7 percent
plateau above 0.7. Fitting is least squares with a coarse grid over
(midpoint, slope) followed by a Nelder-Mead polish; dp_max has a closed
form given the other two, which keeps the fit exactly equivariant under
scaling of the observed dp values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from iselab.analysis import PerformanceMatrix, Subject, sti_label

GRID_MIDPOINTS = np.round(np.arange(0.20, 0.801, 0.05), 10)
GRID_SLOPES = np.round(np.arange(2.0, 40.01, 2.0), 10)


@dataclass(frozen=True)
class SigmoidParams:
    dp_max: float = 7.0     # plateau height, percentage points
    midpoint: float = 0.45  # STI where dp = dp_max / 2
    slope: float = 12.0     # steepness, 1/STI

    def __post_init__(self):
        if self.dp_max < 0:
            raise ValueError(f"dp_max must be >= 0, got {self.dp_max}")
        if not 0.0 < self.midpoint < 1.0:
            raise ValueError(f"midpoint must lie in (0, 1), got {self.midpoint}")
        if self.slope <= 0:
            raise ValueError(f"slope must be > 0, got {self.slope}")


DEFAULT_PARAMS = SigmoidParams()


@dataclass(frozen=True)
class DpObservation:
    sti: float
    dp: float  # percentage points; may be negative in noisy data

    def __post_init__(self):
        if not 0.0 <= self.sti <= 1.0:
            raise ValueError(f"sti must lie in [0, 1], got {self.sti}")
        if not math.isfinite(self.dp):
            raise ValueError("dp must be finite")


@dataclass(frozen=True)
class FitResult:
    params: SigmoidParams
    residual: float        # sum of squared residuals
    degenerate: bool       # all observed dp equal; slope is unidentifiable


def _logistic(sti, midpoint: float, slope: float):
    return 1.0 / (1.0 + np.exp(-slope * (np.asarray(sti, dtype=float) - midpoint)))


def predict_dp(sti: float, params: SigmoidParams = DEFAULT_PARAMS) -> float:
    """Predicted decrease in performance (percentage points) at an STI."""
    s = float(sti)
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"sti must lie in [0, 1], got {sti}")
    return float(params.dp_max * _logistic(s, params.midpoint, params.slope))


def _closed_form_dp_max(dp: np.ndarray, shape: np.ndarray) -> float:
    denom = float((shape ** 2).sum())
    if denom == 0.0:
        return 0.0
    return max(0.0, float((dp * shape).sum() / denom))


def fit_sigmoid(observations: Sequence[DpObservation]) -> FitResult:
    """Least-squares logistic fit to (sti, dp) observations.

    Deterministic: a fixed grid over midpoint 0.2..0.8 and slope 2..40 picks
    the starting basin (dp_max solved in closed form at every node), then a
    derivative-free polish refines (midpoint, slope). The returned residual
    is never worse than the best grid node.
    """
    obs = list(observations)
    if len(obs) < 3:
        raise ValueError("insufficient data: need at least 3 observations")
    stis = np.array([o.sti for o in obs], dtype=float)
    dps = np.array([o.dp for o in obs], dtype=float)
    if len(np.unique(stis)) < 2:
        raise ValueError("insufficient data: need at least 2 distinct STI values")

    degenerate = bool(np.ptp(dps) == 0.0)

    def rss_at(midpoint: float, slope: float) -> tuple:
        shape = _logistic(stis, midpoint, slope)
        dp_max = _closed_form_dp_max(dps, shape)
        resid = dps - dp_max * shape
        return float((resid ** 2).sum()), dp_max

    best = None
    for m in GRID_MIDPOINTS:
        for s in GRID_SLOPES:
            rss, dp_max = rss_at(float(m), float(s))
            if best is None or rss < best[0] - 1e-15:
                best = (rss, float(m), float(s), dp_max)
    grid_rss, m0, s0, _ = best

    def objective(theta) -> float:
        m, s = theta
        if not 1e-3 < m < 1.0 - 1e-3 or not 1e-6 < s <= 400.0:
            return 1e18
        return rss_at(m, s)[0]

    result = minimize(objective, x0=[m0, s0], method="Nelder-Mead",
                      options={"xatol": 1e-10, "fatol": 1e-14,
                               "maxiter": 4000, "maxfev": 4000})
    m_fit, s_fit = result.x
    rss_fit, dp_max_fit = rss_at(float(m_fit), float(s_fit))
    if rss_fit > grid_rss:
        m_fit, s_fit = m0, s0
        rss_fit, dp_max_fit = rss_at(m0, s0)

    params = SigmoidParams(dp_max=dp_max_fit, midpoint=float(m_fit),
                           slope=float(s_fit))
    return FitResult(params=params, residual=rss_fit, degenerate=degenerate)


@dataclass(frozen=True)
class CohortSpec:
    """Synthetic within-subject cohort for desk-scale statistics."""

    n_subjects: int = 55
    condition_stis: tuple = (0.25, 0.45, 0.75, 0.9)
    baseline_mean: float = 0.85   # proportion correct in silence
    baseline_sd: float = 0.05
    subject_sd: float = 2.0       # between-subject dp spread, percentage points
    trial_sd: float = 3.0         # within-cell noise, percentage points
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "condition_stis",
                           tuple(float(s) for s in self.condition_stis))
        if self.n_subjects < 2:
            raise ValueError("n_subjects must be >= 2")
        if any(not 0.0 <= s <= 1.0 for s in self.condition_stis):
            raise ValueError("condition STIs must lie in [0, 1]")
        if not self.condition_stis:
            raise ValueError("need at least one noise condition")
        if self.baseline_sd < 0 or self.subject_sd < 0 or self.trial_sd < 0:
            raise ValueError("standard deviations must be >= 0")
        if not 0.0 <= self.baseline_mean <= 1.0:
            raise ValueError("baseline_mean must lie in [0, 1]")


def simulate_cohort(spec: CohortSpec,
                    params: SigmoidParams = DEFAULT_PARAMS) -> PerformanceMatrix:
    """Draw a synthetic performance matrix (control column plus one per STI).

    Each subject gets a baseline level and a personal dp offset; each noise
    cell subtracts the model dp plus noise, on the proportion scale, clamped
    to [0, 1]. Deterministic for a given spec.seed.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n_subjects
    k = len(spec.condition_stis)

    baseline = rng.normal(spec.baseline_mean, spec.baseline_sd, size=n)
    subject_shift = rng.normal(0.0, spec.subject_sd, size=n)        # pp
    trial_noise = rng.normal(0.0, spec.trial_sd, size=(n, k + 1))   # pp
    model_dp = np.array([predict_dp(s, params) for s in spec.condition_stis])

    cells = np.empty((n, k + 1))
    cells[:, 0] = baseline + trial_noise[:, 0] / 100.0
    for j in range(k):
        cells[:, j + 1] = (baseline
                           - (model_dp[j] + subject_shift) / 100.0
                           + trial_noise[:, j + 1] / 100.0)
    np.clip(cells, 0.0, 1.0, out=cells)

    subjects = tuple(Subject(f"sim-{i:03d}") for i in range(n))
    conditions = (sti_label(None), *(sti_label(s) for s in spec.condition_stis))
    return PerformanceMatrix(subjects, conditions, cells)
