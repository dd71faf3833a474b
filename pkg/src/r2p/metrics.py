"""Evaluation quantities on test rows with known true effects.

Variances use the population (divide-by-n) convention. Percentiles for the
overlap measure interpolate linearly between order statistics.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunMetrics:
    v_across: float
    v_in: float
    v_pop: float
    v_in_normalized: float
    n_subgroups: int
    ci_width: float
    coverage: float
    overlap: float
    pehe_root: float
    ci_width_leaf: float = math.nan

    def as_dict(self) -> dict:
        return asdict(self)


def _nonempty(groups) -> list:
    out = []
    for g in groups:
        g = np.asarray(g, dtype=float).ravel()
        if g.size == 0:
            log.warning("empty subgroup excluded from metric")
            continue
        out.append(g)
    return out


def v_across(tau_by_group) -> float:
    """Population variance of the per-group mean effects."""
    groups = _nonempty(tau_by_group)
    if len(groups) <= 1:
        return 0.0
    return float(np.var([g.mean() for g in groups]))


def v_in(tau_by_group) -> float:
    """Unweighted average of the within-group effect variances."""
    groups = _nonempty(tau_by_group)
    if not groups:
        raise ValueError("no nonempty groups")
    return float(np.mean([g.var() for g in groups]))


def coverage_rate(lo, hi, tau) -> float:
    lo, hi, tau = (np.asarray(a, dtype=float).ravel() for a in (lo, hi, tau))
    if not (lo.size == hi.size == tau.size):
        raise ValueError("interval and truth lengths differ")
    return float(np.mean((tau >= lo) & (tau <= hi)))


def mean_ci_width(lo, hi) -> float:
    w = np.asarray(hi, dtype=float) - np.asarray(lo, dtype=float)
    if w.size == 0:
        raise ValueError("no intervals")
    if not np.all(np.isfinite(w)):
        log.warning("infinite interval present; mean width is inf")
        return math.inf
    return float(w.mean())


def overlap(tau_by_group, p: float = 20, q: float = 80) -> float:
    """Mean pairwise overlap of the groups' [p, q]-percentile effect ranges."""
    if not p < q:
        raise ValueError("p must be smaller than q")
    groups = _nonempty(tau_by_group)
    if len(groups) < 2:
        return 0.0
    bounds = [(np.percentile(g, p), np.percentile(g, q)) for g in groups]
    widths = [max(0.0, min(b1, b2) - max(a1, a2)) for (a1, b1), (a2, b2) in itertools.combinations(bounds, 2)]
    return float(np.mean(widths))


def pehe(mu1_hat, mu0_hat, tau_true) -> float:
    """Root of the mean squared effect error."""
    err = np.asarray(mu1_hat, dtype=float) - np.asarray(mu0_hat, dtype=float) - np.asarray(tau_true, dtype=float)
    return float(np.sqrt(np.mean(err**2)))


def group_by_leaf(values, leaf_ids) -> list:
    values = np.asarray(values)
    leaf_ids = np.asarray(leaf_ids)
    return [values[leaf_ids == lid] for lid in np.unique(leaf_ids)]


def evaluate(leaf_ids, estimate, lo, hi, tau, n_subgroups: int, mu_hat=None) -> RunMetrics:
    """All run-level metrics for one fitted method on one test set.

    ``mu_hat`` is an optional ``(mu1, mu0)`` pair; without it PEHE uses
    ``estimate`` as the effect prediction.
    """
    tau = np.asarray(tau, dtype=float)
    groups = group_by_leaf(tau, leaf_ids)
    vpop = float(tau.var())
    vin = v_in(groups)
    if mu_hat is None:
        pe = pehe(estimate, np.zeros_like(tau), tau)
    else:
        pe = pehe(mu_hat[0], mu_hat[1], tau)
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    widths = hi - lo
    per_leaf = [widths[np.asarray(leaf_ids) == lid][0] for lid in np.unique(leaf_ids)]
    return RunMetrics(
        v_across=v_across(groups),
        v_in=vin,
        v_pop=vpop,
        v_in_normalized=vin / vpop if vpop > 0 else math.nan,
        n_subgroups=int(n_subgroups),
        ci_width=mean_ci_width(lo, hi),
        coverage=coverage_rate(lo, hi, tau),
        overlap=overlap(groups),
        pehe_root=pe,
        ci_width_leaf=float(np.mean(per_leaf)),
    )
