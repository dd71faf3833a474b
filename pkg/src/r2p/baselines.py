"""Sample-mean causal trees used as comparison methods.

* CT-A: adaptive tree grown and estimated on the same rows.
* CT-H: honest tree, structure from one half and leaf estimates from the other.
* CCT: CT-A structure with split-conformal per-arm leaf intervals.

Growth greedily maximises ``sum_children n_c * tau_c**2``; afterwards any
split whose two leaf children do not differ significantly (two-sample z-test
on their effect estimates) is collapsed, repeating until stable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import norm

from .conformal import ArmCalibrations, ConformalCalibration, Interval, coverage_level_per_arm
from .data import DataSplit, HteDataset, split_hte
from .partition import GroupPrediction, SplitRule, _jsonable, _quantile, candidate_thresholds


@dataclass
class CTNode:
    id: int
    rules: tuple
    idx: np.ndarray  # rows used to grow the structure
    split: Optional[SplitRule] = None
    children: Optional[tuple] = None
    n1: int = 0
    n0: int = 0
    tau_hat: float = math.nan
    var_hat: float = math.nan
    calib: Optional[ArmCalibrations] = None
    n_est: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.children is None


def arm_summary(y: np.ndarray, t: np.ndarray):
    """``(n1, n0, tau_hat, var_hat)`` from the difference of arm means.

    ``var_hat`` sums each arm's sample variance over its count; arms with a
    single row contribute zero variance.
    """
    y1, y0 = y[t == 1], y[t == 0]
    n1, n0 = y1.size, y0.size
    if n1 == 0 or n0 == 0:
        return n1, n0, math.nan, math.nan
    v1 = y1.var(ddof=1) / n1 if n1 > 1 else 0.0
    v0 = y0.var(ddof=1) / n0 if n0 > 1 else 0.0
    return n1, n0, float(y1.mean() - y0.mean()), float(v1 + v0)


class CausalTree:
    def __init__(self, nodes: list, method: str, interval_source: str, alpha: float):
        self.nodes = nodes
        self.method = method
        self.interval_source = interval_source
        self.alpha = alpha

    @property
    def leaves(self) -> list:
        return [n for n in self.nodes if n.is_leaf]

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    def apply(self, x) -> np.ndarray:
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

    def leaf_halfwidth(self, node: CTNode) -> float:
        if self.interval_source == "split_conformal":
            return node.calib.halfwidth if node.calib is not None else math.inf
        return float(norm.ppf(1.0 - self.alpha / 2.0) * math.sqrt(node.var_hat))

    def predict_intervals(self, x):
        leaf = self.apply(x)
        est = np.array([self.nodes[i].tau_hat for i in leaf], dtype=float)
        half = np.array([self.leaf_halfwidth(self.nodes[i]) for i in leaf], dtype=float)
        return leaf, est, est - half, est + half

    def predict_group(self, x) -> GroupPrediction:
        leaf, est, lo, hi = self.predict_intervals(np.asarray(x, dtype=float).reshape(1, -1))
        return GroupPrediction(int(leaf[0]), float(est[0]), Interval(float(lo[0]), float(hi[0])))

    def to_dict(self) -> dict:
        nodes = []
        for n in self.nodes:
            nodes.append({
                "id": n.id,
                "split": None if n.split is None else {"feature": n.split.feature, "threshold": n.split.threshold},
                "children": None if n.children is None else list(n.children),
                "leaf": None if not n.is_leaf else {
                    "n_train": int(n.idx.size),
                    "n_calib": int(n.n_est),
                    "center": _jsonable(float(n.tau_hat)),
                    "halfwidth": _jsonable(self.leaf_halfwidth(n)),
                    "rule_path": [r.describe() for r in n.rules],
                },
            })
        return {"method": self.method, "interval_source": self.interval_source, "nodes": nodes}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def predict_baseline(tree: CausalTree, x) -> GroupPrediction:
    return tree.predict_group(x)


def _best_adaptive_split(x, y, t, idx, min_leaf: int, cap: int):
    """Split maximising ``sum n_c * tau_c^2`` with both arms (>= 2 rows) per child."""
    best, best_gain = None, -math.inf
    xi, yi, ti = x[idx], y[idx], t[idx]
    for k in range(x.shape[1]):
        for phi in candidate_thresholds(xi[:, k], cap):
            geq = xi[:, k] >= phi
            n_geq = int(geq.sum())
            if n_geq < min_leaf or idx.size - n_geq < min_leaf:
                continue
            gain = 0.0
            ok = True
            for m in (geq, ~geq):
                tm = ti[m]
                n1 = int(tm.sum())
                if n1 < 2 or tm.size - n1 < 2:
                    ok = False
                    break
                tau = yi[m][tm == 1].mean() - yi[m][tm == 0].mean()
                gain += m.sum() * tau * tau
            if ok and gain > best_gain:
                best_gain, best = gain, SplitRule(k, phi, "geq")
    return best


def _grow(x, y, t, idx, min_leaf: int, max_depth: Optional[int], cap: int) -> list:
    nodes = [CTNode(0, (), idx)]
    depth = {0: 0}
    queue = [0]
    while queue:
        node = nodes[queue.pop(0)]
        if max_depth is not None and depth[node.id] >= max_depth:
            continue
        if node.idx.size < 2 * min_leaf:
            continue
        rule = _best_adaptive_split(x, y, t, node.idx, min_leaf, cap)
        if rule is None:
            continue
        ids = []
        for r in (rule, SplitRule(rule.feature, rule.threshold, "lt")):
            child = CTNode(len(nodes), node.rules + (r,), node.idx[r.accepts(x[node.idx])])
            depth[child.id] = depth[node.id] + 1
            nodes.append(child)
            queue.append(child.id)
            ids.append(child.id)
        node.split, node.children = rule, tuple(ids)
    return nodes


def _estimate(nodes: list, x, y, t, est_idx: Optional[np.ndarray]) -> None:
    """Fill per-node arm statistics from the growth rows or an estimation sample."""
    for n in nodes:
        if est_idx is None:
            rows = n.idx
        else:
            keep = np.ones(est_idx.size, dtype=bool)
            for r in n.rules:
                keep &= r.accepts(x[est_idx])
            rows = est_idx[keep]
        n.n1, n.n0, n.tau_hat, n.var_hat = arm_summary(y[rows], t[rows])
        n.n_est = int(rows.size)


def _collapse(node: CTNode) -> None:
    node.split, node.children = None, None


def _reachable(nodes: list) -> list:
    keep, stack = [], [nodes[0]]
    while stack:
        n = stack.pop()
        keep.append(n)
        if n.children:
            stack.extend(nodes[c] for c in n.children)
    return keep


def _prune(nodes: list, sig_level: float) -> list:
    """Collapse degenerate leaves and non-significant splits, bottom-up until stable."""
    crit = norm.ppf(1.0 - sig_level / 2.0)
    changed = True
    while changed:
        changed = False
        for n in reversed(_reachable(nodes)):
            if n.is_leaf:
                continue
            a, b = (nodes[c] for c in n.children)
            if not (a.is_leaf and b.is_leaf):
                continue
            degenerate = min(a.n1, a.n0, b.n1, b.n0) < 1
            if degenerate:
                _collapse(n)
                changed = True
                continue
            se = math.sqrt(a.var_hat + b.var_hat)
            z = abs(a.tau_hat - b.tau_hat) / se if se > 0 else (math.inf if a.tau_hat != b.tau_hat else 0.0)
            if z < crit:
                _collapse(n)
                changed = True
    # renumber the surviving nodes in breadth-first order
    order, queue = [], [nodes[0]]
    while queue:
        n = queue.pop(0)
        order.append(n)
        if n.children:
            queue.extend(nodes[c] for c in n.children)
    remap = {n.id: i for i, n in enumerate(order)}
    for n in order:
        n.id = remap[n.id]
        if n.children:
            n.children = tuple(remap[c] for c in n.children)
    return order


def _check_arms(dataset: HteDataset, idx: np.ndarray, need: int = 1) -> None:
    t = dataset.treatments[idx]
    if int(t.sum()) < need or int(t.size - t.sum()) < need:
        raise ValueError("arm starvation: both treatment arms are required at the root")


def fit_ct_a(dataset: HteDataset, min_leaf: int = 20, sig_level: float = 0.05, alpha: float = 0.05,
             max_depth: Optional[int] = None, max_thresholds: int = 64, idx=None) -> CausalTree:
    x, y, t = dataset.covariates, dataset.outcomes, dataset.treatments
    idx = np.arange(dataset.n) if idx is None else np.asarray(idx, dtype=np.intp)
    _check_arms(dataset, idx)
    nodes = _grow(x, y, t, idx, min_leaf, max_depth, max_thresholds)
    _estimate(nodes, x, y, t, None)
    return CausalTree(_prune(nodes, sig_level), "ct-a", "gaussian_plugin", alpha)


def fit_ct_h(dataset: HteDataset, min_leaf: int = 10, sig_level: float = 0.05, seed: int = 0, alpha: float = 0.05,
             max_depth: Optional[int] = None, max_thresholds: int = 64, split: Optional[DataSplit] = None) -> CausalTree:
    """Honest tree: grow on the first half, estimate leaves on the second."""
    x, y, t = dataset.covariates, dataset.outcomes, dataset.treatments
    if split is None:
        split = split_hte(dataset, 0.5, seed)
    _check_arms(dataset, split.train_idx, 2)
    _check_arms(dataset, split.calib_idx, 2)
    nodes = _grow(x, y, t, split.train_idx, min_leaf, max_depth, max_thresholds)
    _estimate(nodes, x, y, t, split.calib_idx)
    return CausalTree(_prune(nodes, sig_level), "ct-h", "gaussian_plugin", alpha)


def fit_cct(dataset: HteDataset, min_leaf: int = 10, sig_level: float = 0.05, alpha: float = 0.05, seed: int = 0,
            max_depth: Optional[int] = None, max_thresholds: int = 64, split: Optional[DataSplit] = None,
            rank_overflow: str = "max") -> CausalTree:
    """CT-A structure on the first half; per-arm conformal leaf intervals from the second.

    Residuals are taken against the leaf's arm means from the growth half and
    calibrated at ``sqrt(1 - alpha)`` per arm, then composed into an effect
    interval centred on the leaf's difference of means.
    """
    x, y, t = dataset.covariates, dataset.outcomes, dataset.treatments
    if split is None:
        split = split_hte(dataset, 0.5, seed)
    _check_arms(dataset, split.train_idx, 2)
    _check_arms(dataset, split.calib_idx, 2)
    nodes = _grow(x, y, t, split.train_idx, min_leaf, max_depth, max_thresholds)
    _estimate(nodes, x, y, t, None)
    nodes = _prune(nodes, sig_level)
    cov = coverage_level_per_arm(alpha)
    cal_x = x[split.calib_idx]
    for n in nodes:
        if not n.is_leaf:
            continue
        keep = np.ones(split.calib_idx.size, dtype=bool)
        for r in n.rules:
            keep &= r.accepts(cal_x)
        rows = split.calib_idx[keep]
        n.n_est = int(rows.size)
        grow_y, grow_t = y[n.idx], t[n.idx]
        cals = []
        for arm in (0, 1):
            mean_arm = grow_y[grow_t == arm].mean()
            res = np.abs(y[rows][t[rows] == arm] - mean_arm)
            cals.append(ConformalCalibration(_quantile(res, cov, rank_overflow), cov, int(res.size)))
        n.calib = ArmCalibrations(*cals)
    return CausalTree(nodes, "cct", "split_conformal", alpha)
