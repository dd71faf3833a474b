"""Split conformal calibration: residual quantiles and interval construction."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"interval lower end {self.lo} exceeds upper end {self.hi}")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi


@dataclass(frozen=True)
class ConformalCalibration:
    quantile: float
    coverage: float
    n_calib: int

    @property
    def finite(self) -> bool:
        return math.isfinite(self.quantile)


@dataclass(frozen=True)
class ArmCalibrations:
    q0: ConformalCalibration
    q1: ConformalCalibration

    @property
    def halfwidth(self) -> float:
        return self.q0.quantile + self.q1.quantile

    @property
    def finite(self) -> bool:
        return self.q0.finite and self.q1.finite


def conformal_rank(n: int, coverage: float) -> int:
    """1-based rank ``ceil((n + 1) * coverage)`` of the calibration order statistic."""
    # round first so that e.g. 10 * 0.9 does not become 9.000000000000002
    return int(math.ceil(round((n + 1) * coverage, 9)))


def residual_quantile(residuals, coverage: float) -> float:
    """Finite-sample conformal quantile of nonnegative residuals.

    Returns the ``ceil((n+1) * coverage)``-th smallest residual, or ``inf``
    when that rank exceeds ``n`` (including the empty case).
    """
    r = np.asarray(residuals, dtype=float).ravel()
    n = r.size
    if n == 0:
        return math.inf
    rank = conformal_rank(n, coverage)
    if rank > n:
        return math.inf
    if rank < 1:
        rank = 1
    return float(np.partition(r, rank - 1)[rank - 1])


def calibrate(predict: Callable[[np.ndarray], np.ndarray], covariates, outcomes, calib_idx, coverage: float) -> ConformalCalibration:
    """Calibrate a fitted predictor on the rows ``calib_idx``.

    ``predict`` maps a covariate matrix to a vector of predictions.
    """
    idx = np.asarray(calib_idx, dtype=np.intp)
    if idx.size == 0:
        return ConformalCalibration(math.inf, coverage, 0)
    x = np.asarray(covariates, dtype=float)[idx]
    y = np.asarray(outcomes, dtype=float)[idx]
    res = np.abs(y - np.asarray(predict(x), dtype=float))
    return ConformalCalibration(residual_quantile(res, coverage), coverage, int(idx.size))


def interval(prediction: float, calib: ConformalCalibration) -> Interval:
    q = calib.quantile
    return Interval(prediction - q, prediction + q)


def ite_interval(mu1: float, mu0: float, arms: ArmCalibrations) -> Interval:
    """Effect interval from the two per-arm calibrations.

    Upper end is the treated upper bound minus the control lower bound,
    and vice versa for the lower end.
    """
    tau = mu1 - mu0
    half = arms.halfwidth
    return Interval(tau - half, tau + half)


def coverage_level_per_arm(alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    return math.sqrt(1.0 - alpha)
