"""Robust recursive partitioning driven by confident-homogeneity impurity.

A single estimator is fitted once on the training half. Every candidate
subgroup is then scored with split-conformal intervals computed from the
calibration rows that fall inside it: ``W`` is the mean interval width and
``S`` the mean distance by which a row's interval misses the subgroup centre.
A split is kept only when it cuts ``lambda * W + (1 - lambda) * S`` by at
least a fraction ``gamma``.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .conformal import (
    ArmCalibrations,
    ConformalCalibration,
    Interval,
    coverage_level_per_arm,
    residual_quantile,
)
from .data import DataSplit, HteDataset, RegressionDataset, split_dataset, split_hte
from .estimators import fit_ite_t_learner, fit_outcome


@dataclass(frozen=True)
class SplitRule:
    feature: int
    threshold: float
    side: str = "geq"

    def __post_init__(self):
        if self.side not in ("geq", "lt"):
            raise ValueError("side must be 'geq' or 'lt'")

    def accepts(self, x: np.ndarray) -> np.ndarray:
        v = np.asarray(x, dtype=float)
        col = v[..., self.feature]
        return col >= self.threshold if self.side == "geq" else col < self.threshold

    def describe(self) -> str:
        op = ">=" if self.side == "geq" else "<"
        return f"x[{self.feature}] {op} {self.threshold:.6g}"


@dataclass(frozen=True)
class PartitionConfig:
    alpha: float = 0.05
    lam: float = 0.5
    gamma: float = 0.05
    beta_s: float = 0.8
    min_leaf: int = 10
    max_depth: Optional[int] = None
    max_thresholds_per_feature: int = 64
    seed: int = 0
    split_ratio: float = 0.5
    stratify: bool = True
    # what a subgroup too small for a finite conformal quantile uses instead:
    # "inf" keeps the infinite quantile (the subgroup cannot be calibrated),
    # "max" its largest residual, "parent" the quantile of its parent.
    # None picks "inf" for regression and "max" for effects, where the
    # per-arm level needs about 39 calibration rows per arm per subgroup
    rank_overflow: Optional[str] = None
    # "proportional": each child is weighted by its share of calibration rows;
    # "sum": child impurities are added unweighted
    child_weighting: str = "proportional"
    # HTE only: apply min_leaf to each arm's training rows in a child
    min_leaf_per_arm: bool = True

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0 <= self.lam <= 1:
            raise ValueError("lambda must lie in [0, 1]")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0 < self.beta_s < 1:
            raise ValueError("beta_s must lie in (0, 1)")
        if self.min_leaf < 2:
            raise ValueError("min_leaf must be >= 2")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.max_thresholds_per_feature < 1:
            raise ValueError("max_thresholds_per_feature must be >= 1")
        if self.child_weighting not in ("sum", "proportional"):
            raise ValueError("child_weighting must be 'sum' or 'proportional'")
        if self.rank_overflow not in (None, "inf", "max", "parent"):
            raise ValueError("rank_overflow must be 'inf', 'max' or 'parent'")


@dataclass(frozen=True)
class SubgroupStats:
    w_hat: float
    s_hat: float
    center: float
    calib: object  # ConformalCalibration or ArmCalibrations at the search level
    n_calib: int
    calib_s: object = None  # same, at the beta_s level

    def impurity(self, lam: float) -> float:
        return lam * self.w_hat + (1.0 - lam) * self.s_hat

    @property
    def finite(self) -> bool:
        return math.isfinite(self.w_hat) and math.isfinite(self.s_hat)


INFINITE_STATS = SubgroupStats(math.inf, math.inf, math.nan, None, 0)


@dataclass(frozen=True)
class GroupPrediction:
    leaf_id: int
    estimate: float
    interval: Interval


def deviation(center: float, iv: Interval) -> float:
    """How far ``center`` lies outside ``iv`` (zero when inside)."""
    if center > iv.hi:
        return center - iv.hi
    if center < iv.lo:
        return iv.lo - center
    return 0.0


def _quantile(residuals, coverage: float, overflow: str, fallback: Optional[float] = None) -> float:
    q = residual_quantile(residuals, coverage)
    if math.isinf(q):
        if overflow == "max" and len(residuals) > 0:
            return float(np.max(residuals))
        if overflow == "parent" and fallback is not None:
            return fallback
    return q


class Scores:
    """Per-row quantities from the global estimator that the search needs.

    ``pred`` is the point estimate (outcome or effect), ``resid`` the
    absolute residual of the row's own observed outcome, and ``arm`` the
    treatment indicator (``None`` in regression mode).
    """

    def __init__(self, pred, resid, arm=None):
        self.pred = np.asarray(pred, dtype=float)
        self.resid = np.asarray(resid, dtype=float)
        self.arm = None if arm is None else np.asarray(arm)

    @property
    def hte(self) -> bool:
        return self.arm is not None

    def calibration(self, idx: np.ndarray, miscoverage: float, overflow: str = "inf", fallback=None):
        """Calibration of the rows ``idx`` at total miscoverage ``miscoverage``.

        ``fallback`` is the parent's calibration at the same level, used when
        ``overflow`` is "parent".
        """
        res = self.resid[idx]
        if not self.hte:
            cov = 1.0 - miscoverage
            fb = None if fallback is None else fallback.quantile
            return ConformalCalibration(_quantile(res, cov, overflow, fb), cov, int(idx.size))
        cov = coverage_level_per_arm(miscoverage)
        arm = self.arm[idx]
        cals = []
        for a in (0, 1):
            r = res[arm == a]
            fb = None if fallback is None else (fallback.q0, fallback.q1)[a].quantile
            cals.append(ConformalCalibration(_quantile(r, cov, overflow, fb), cov, int(r.size)))
        return ArmCalibrations(*cals)


def _halfwidth(calib) -> float:
    return calib.halfwidth if isinstance(calib, ArmCalibrations) else calib.quantile


def subgroup_stats(scores: Scores, calib_idx, alpha: float, beta_s: float, overflow: str = "inf",
                   parent: Optional[SubgroupStats] = None) -> SubgroupStats:
    """Estimate ``W`` and ``S`` for one subgroup from its calibration rows.

    ``W`` uses intervals at miscoverage ``alpha``; ``S`` uses the narrower
    intervals at miscoverage ``beta_s``. The centre is the mean prediction
    over the same rows.
    """
    idx = np.asarray(calib_idx, dtype=np.intp)
    if idx.size == 0:
        return INFINITE_STATS
    cal_w = scores.calibration(idx, alpha, overflow, None if parent is None else parent.calib)
    cal_s = scores.calibration(idx, beta_s, overflow, None if parent is None else parent.calib_s)
    half_w, half_s = _halfwidth(cal_w), _halfwidth(cal_s)
    pred = scores.pred[idx]
    center = float(pred.mean())
    w_hat = 2.0 * half_w
    if math.isinf(half_s):
        s_hat = math.inf
    else:
        s_hat = float(np.maximum(np.abs(pred - center) - half_s, 0.0).mean())
    return SubgroupStats(w_hat, s_hat, center, cal_w, int(idx.size), cal_s)


def candidate_thresholds(values, cap: int = 64) -> list[float]:
    """Midpoints between consecutive distinct values, thinned to at most ``cap``."""
    v = np.unique(np.asarray(values, dtype=float))
    if v.size < 2:
        return []
    mids = (v[:-1] + v[1:]) / 2.0
    if mids.size > cap:
        pick = np.unique(np.round(np.linspace(0, mids.size - 1, cap)).astype(int))
        mids = mids[pick]
    return [float(m) for m in mids]


def confident_criterion(parent: SubgroupStats, children_sum_w: float, children_sum_s: float, cfg: PartitionConfig) -> bool:
    lam = cfg.lam
    lhs = (1.0 - cfg.gamma) * parent.impurity(lam)
    rhs = lam * children_sum_w + (1.0 - lam) * children_sum_s
    return bool(lhs >= rhs)


@dataclass
class Node:
    id: int
    depth: int
    rules: tuple
    train_idx: np.ndarray
    calib_idx: np.ndarray
    stats: SubgroupStats
    split: Optional[SplitRule] = None
    children: Optional[tuple] = None
    calibration: object = None  # final leaf calibration at miscoverage alpha

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    @property
    def halfwidth(self) -> float:
        return _halfwidth(self.calibration) if self.calibration is not None else math.inf


@dataclass(frozen=True)
class SplitCandidate:
    rule: SplitRule
    geq_stats: SubgroupStats
    lt_stats: SubgroupStats
    weights: tuple = (1.0, 1.0)

    @property
    def sum_w(self) -> float:
        return self.weights[0] * self.geq_stats.w_hat + self.weights[1] * self.lt_stats.w_hat

    @property
    def sum_s(self) -> float:
        return self.weights[0] * self.geq_stats.s_hat + self.weights[1] * self.lt_stats.s_hat


def _child_weights(n_geq: int, n_lt: int, mode: str) -> tuple:
    if mode == "sum":
        return (1.0, 1.0)
    total = n_geq + n_lt
    return (n_geq / total, n_lt / total)


def best_split(covariates: np.ndarray, scores: Scores, train_idx, calib_idx, cfg: PartitionConfig,
               parent: Optional[SubgroupStats] = None) -> Optional[SplitCandidate]:
    """Exhaustive search over (feature, threshold) for the lowest child impurity.

    Returns ``None`` when no candidate passes the validity gates.
    """
    train_idx = np.asarray(train_idx, dtype=np.intp)
    calib_idx = np.asarray(calib_idx, dtype=np.intp)
    if train_idx.size < 2 * cfg.min_leaf:
        return None
    lam = cfg.lam
    best, best_val = None, math.inf
    x_train = covariates[train_idx]
    x_calib = covariates[calib_idx]
    calib_arm = scores.arm[calib_idx] if scores.hte else None
    train_arm = scores.arm[train_idx] if (scores.hte and cfg.min_leaf_per_arm) else None
    for k in range(covariates.shape[1]):
        for phi in candidate_thresholds(x_train[:, k], cfg.max_thresholds_per_feature):
            n_tr_geq = int(np.count_nonzero(x_train[:, k] >= phi))
            if n_tr_geq < cfg.min_leaf or train_idx.size - n_tr_geq < cfg.min_leaf:
                continue
            if train_arm is not None:
                geq_tr = x_train[:, k] >= phi
                a1 = int(train_arm[geq_tr].sum())
                b1 = int(train_arm.sum()) - a1
                arm_counts = (a1, n_tr_geq - a1, b1, train_idx.size - n_tr_geq - b1)
                if min(arm_counts) < cfg.min_leaf:
                    continue
            mask = x_calib[:, k] >= phi
            n_geq = int(mask.sum())
            if n_geq < cfg.min_leaf or calib_idx.size - n_geq < cfg.min_leaf:
                continue
            if calib_arm is not None:
                t1_geq = int(calib_arm[mask].sum())
                t1_all = int(calib_arm.sum())
                counts = (t1_geq, n_geq - t1_geq, t1_all - t1_geq, calib_idx.size - n_geq - (t1_all - t1_geq))
                if min(counts) < 2:
                    continue
            geq = subgroup_stats(scores, calib_idx[mask], cfg.alpha, cfg.beta_s, cfg.rank_overflow, parent)
            lt = subgroup_stats(scores, calib_idx[~mask], cfg.alpha, cfg.beta_s, cfg.rank_overflow, parent)
            if not (geq.finite and lt.finite):
                continue
            cand = SplitCandidate(SplitRule(k, phi, "geq"), geq, lt, _child_weights(n_geq, calib_idx.size - n_geq, cfg.child_weighting))
            val = lam * cand.sum_w + (1.0 - lam) * cand.sum_s
            # strict improvement keeps the lowest (feature, threshold) among ties
            if val < best_val:
                best_val, best = val, cand
    return best


@dataclass
class SplitLog:
    node: int
    parent_w: float
    parent_s: float
    children_sum_w: float
    children_sum_s: float
    rule: Optional[SplitRule]
    accepted: bool


class PartitionTree:
    """Fitted partition: routing rules, leaf calibrations and the global estimator."""

    def __init__(self, nodes: list, estimator, mode: str, cfg: PartitionConfig, history: list):
        self.nodes = nodes
        self.estimator = estimator
        self.mode = mode
        self.cfg = cfg
        self.history = history

    @property
    def leaves(self) -> list:
        return [n for n in self.nodes if n.is_leaf]

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    def estimate(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.mode == "hte":
            m0, m1 = self.estimator.predict_arms(x)
            return m1 - m0
        return np.asarray(self.estimator.predict(x), dtype=float)

    def apply(self, x) -> np.ndarray:
        """Leaf id for every row of ``x``; ties ``x_k == phi`` go to the geq child."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty(x.shape[0], dtype=int)
        stack = [(self.nodes[0], np.arange(x.shape[0]))]
        while stack:
            node, rows = stack.pop()
            if node.is_leaf:
                out[rows] = node.id
                continue
            geq = x[rows, node.split.feature] >= node.split.threshold
            stack.append((self.nodes[node.children[0]], rows[geq]))
            stack.append((self.nodes[node.children[1]], rows[~geq]))
        return out

    def predict_intervals(self, x):
        """Vectorised prediction: ``(leaf_ids, estimates, lo, hi)``."""
        leaf = self.apply(x)
        est = self.estimate(x)
        half = np.array([self.nodes[i].halfwidth for i in leaf], dtype=float)
        return leaf, est, est - half, est + half

    def predict_group(self, x) -> GroupPrediction:
        leaf, est, lo, hi = self.predict_intervals(np.asarray(x, dtype=float).reshape(1, -1))
        return GroupPrediction(int(leaf[0]), float(est[0]), Interval(float(lo[0]), float(hi[0])))

    def to_dict(self, method: str = "r2p") -> dict:
        return {"method": method, "mode": self.mode, "nodes": [_node_dict(n) for n in self.nodes]}

    def to_json(self, method: str = "r2p") -> str:
        return json.dumps(self.to_dict(method), indent=2)


def _jsonable(v: float):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _node_dict(n: Node) -> dict:
    return {
        "id": n.id,
        "split": None if n.split is None else {"feature": n.split.feature, "threshold": n.split.threshold},
        "children": None if n.children is None else list(n.children),
        "leaf": None
        if not n.is_leaf
        else {
            "n_train": int(n.train_idx.size),
            "n_calib": int(n.calib_idx.size),
            "center": _jsonable(float(n.stats.center)),
            "halfwidth": _jsonable(float(n.halfwidth)),
            "rule_path": [r.describe() for r in n.rules],
        },
    }


def grow_partition(covariates, scores: Scores, split: DataSplit, cfg: PartitionConfig, estimator, mode: str) -> PartitionTree:
    """Run the frontier loop on precomputed scores.

    Subgroups are processed first-in first-out. A subgroup is replaced by its
    two children when the best split passes the confident criterion.
    """
    covariates = np.asarray(covariates, dtype=float)
    if cfg.rank_overflow is None:
        cfg = replace(cfg, rank_overflow="max" if mode == "hte" else "inf")
    root_cal = scores.calibration(split.calib_idx, cfg.alpha, cfg.rank_overflow)
    if not math.isfinite(_halfwidth(root_cal)):
        raise ValueError("alpha too strict for calibration size")
    root_stats = subgroup_stats(scores, split.calib_idx, cfg.alpha, cfg.beta_s, cfg.rank_overflow)
    nodes = [Node(0, 0, (), split.train_idx, split.calib_idx, root_stats)]
    frontier = deque([0])
    history = []
    while frontier:
        node = nodes[frontier.popleft()]
        if cfg.max_depth is not None and node.depth >= cfg.max_depth:
            continue
        cand = best_split(covariates, scores, node.train_idx, node.calib_idx, cfg, node.stats)
        if cand is None:
            continue
        accepted = node.stats.finite and confident_criterion(node.stats, cand.sum_w, cand.sum_s, cfg)
        history.append(
            SplitLog(node.id, node.stats.w_hat, node.stats.s_hat, cand.sum_w, cand.sum_s, cand.rule, accepted)
        )
        if not accepted:
            continue
        rule = cand.rule
        lt_rule = SplitRule(rule.feature, rule.threshold, "lt")
        ids = []
        for r, st in ((rule, cand.geq_stats), (lt_rule, cand.lt_stats)):
            keep_tr = r.accepts(covariates[node.train_idx])
            keep_ca = r.accepts(covariates[node.calib_idx])
            child = Node(len(nodes), node.depth + 1, node.rules + (r,), node.train_idx[keep_tr], node.calib_idx[keep_ca], st)
            nodes.append(child)
            frontier.append(child.id)
            ids.append(child.id)
        node.split = rule
        node.children = tuple(ids)
    parent_of = {c: n for n in nodes for c in (n.children or ())}
    for n in nodes:
        if n.is_leaf:
            fb = parent_of[n.id].stats.calib if n.id in parent_of else None
            n.calibration = scores.calibration(n.calib_idx, cfg.alpha, cfg.rank_overflow, fb)
    return PartitionTree(nodes, estimator, mode, cfg, history)


def r2p_fit(dataset: RegressionDataset, estimator_cfg, cfg: PartitionConfig = PartitionConfig(), split: Optional[DataSplit] = None) -> PartitionTree:
    """Partition a regression dataset with calibrated per-subgroup intervals."""
    if split is None:
        split = split_dataset(dataset.n, cfg.split_ratio, cfg.seed)
    x, y = dataset.covariates, dataset.outcomes
    est = fit_outcome(x[split.train_idx], y[split.train_idx], estimator_cfg)
    pred = np.asarray(est.predict(x), dtype=float)
    scores = Scores(pred, np.abs(y - pred))
    return grow_partition(x, scores, split, cfg, est, "regression")


def hte_scores(dataset: HteDataset, ite_estimator) -> Scores:
    m0, m1 = ite_estimator.predict_arms(dataset.covariates)
    t = dataset.treatments
    own = np.where(t == 1, m1, m0)
    return Scores(m1 - m0, np.abs(dataset.outcomes - own), t)


def r2p_hte_fit(dataset: HteDataset, estimator_cfg, cfg: PartitionConfig = PartitionConfig(), split: Optional[DataSplit] = None) -> PartitionTree:
    """Effect-subgroup version: T-learner estimates, per-arm calibration at sqrt(1 - alpha)."""
    if split is None:
        split = split_hte(dataset, cfg.split_ratio, cfg.seed, cfg.stratify)
    est = fit_ite_t_learner(dataset, estimator_cfg, split.train_idx)
    scores = hte_scores(dataset, est)
    return grow_partition(dataset.covariates, scores, split, cfg, est, "hte")


def predict_group(tree: PartitionTree, x) -> GroupPrediction:
    return tree.predict_group(x)
