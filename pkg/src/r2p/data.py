"""Dataset containers and seeded train/calibration splits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RegressionDataset:
    covariates: np.ndarray
    outcomes: np.ndarray

    def __post_init__(self):
        x = np.array(self.covariates, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        y = np.array(self.outcomes, dtype=float).ravel()
        if x.ndim != 2 or x.shape[0] != y.shape[0]:
            raise ValueError("covariates and outcomes must have the same number of rows")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("dataset entries must be finite")
        object.__setattr__(self, "covariates", _frozen(x))
        object.__setattr__(self, "outcomes", _frozen(y))

    @property
    def n(self) -> int:
        return self.outcomes.shape[0]

    @property
    def d(self) -> int:
        return self.covariates.shape[1]


@dataclass(frozen=True)
class GroundTruth:
    """Potential outcomes and the noiseless effect for every row."""

    y0: Optional[np.ndarray]
    y1: Optional[np.ndarray]
    tau: np.ndarray

    def __post_init__(self):
        for name in ("y0", "y1", "tau"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, _frozen(np.array(v, dtype=float).ravel()))
        n = self.tau.shape[0]
        for v in (self.y0, self.y1):
            if v is not None and v.shape[0] != n:
                raise ValueError("ground-truth vectors must share one length")

    def subset(self, idx: np.ndarray) -> "GroundTruth":
        return GroundTruth(
            y0=None if self.y0 is None else self.y0[idx],
            y1=None if self.y1 is None else self.y1[idx],
            tau=self.tau[idx],
        )


@dataclass(frozen=True)
class HteDataset:
    covariates: np.ndarray
    treatments: np.ndarray
    outcomes: np.ndarray
    truth: Optional[GroundTruth] = None

    def __post_init__(self):
        x = np.array(self.covariates, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        t = np.array(self.treatments).ravel()
        y = np.array(self.outcomes, dtype=float).ravel()
        n = x.shape[0]
        if x.ndim != 2 or t.shape[0] != n or y.shape[0] != n:
            raise ValueError("covariates, treatments and outcomes must have equal length")
        if not np.all(np.isin(t, (0, 1))):
            raise ValueError("treatments must be 0 or 1")
        t = t.astype(np.int8)
        if t.sum() == 0 or t.sum() == n:
            raise ValueError("dataset needs at least one treated and one control sample")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("dataset entries must be finite")
        if self.truth is not None and self.truth.tau.shape[0] != n:
            raise ValueError("ground truth length does not match dataset")
        object.__setattr__(self, "covariates", _frozen(x))
        object.__setattr__(self, "treatments", _frozen(t))
        object.__setattr__(self, "outcomes", _frozen(y))

    @property
    def n(self) -> int:
        return self.outcomes.shape[0]

    @property
    def d(self) -> int:
        return self.covariates.shape[1]

    def subset(self, idx) -> "HteDataset":
        idx = np.asarray(idx)
        return HteDataset(
            self.covariates[idx],
            self.treatments[idx],
            self.outcomes[idx],
            None if self.truth is None else self.truth.subset(idx),
        )


@dataclass(frozen=True)
class DataSplit:
    train_idx: np.ndarray
    calib_idx: np.ndarray = field()

    def __post_init__(self):
        object.__setattr__(self, "train_idx", _frozen(np.asarray(self.train_idx, dtype=np.intp)))
        object.__setattr__(self, "calib_idx", _frozen(np.asarray(self.calib_idx, dtype=np.intp)))


def split_dataset(n: int, ratio: float = 0.5, seed: int = 0) -> DataSplit:
    """Randomly split ``range(n)`` into a training part and a calibration part.

    The first ``floor(ratio * n)`` entries of a seeded permutation form the
    training set. Both index arrays are returned sorted.
    """
    if n < 2:
        raise ValueError("dataset too small to split")
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    perm = np.random.default_rng(seed).permutation(n)
    cut = int(np.floor(ratio * n))
    return DataSplit(np.sort(perm[:cut]), np.sort(perm[cut:]))


def stratified_split_hte(dataset: HteDataset, ratio: float = 0.5, seed: int = 0) -> DataSplit:
    """Split treated and control rows separately, then merge the halves."""
    treated = np.flatnonzero(dataset.treatments == 1)
    control = np.flatnonzero(dataset.treatments == 0)
    if treated.size < 2 or control.size < 2:
        raise ValueError("arm too small")
    rng = np.random.default_rng(seed)
    train, calib = [], []
    for arm in (control, treated):
        perm = rng.permutation(arm)
        cut = int(np.floor(ratio * arm.size))
        train.append(perm[:cut])
        calib.append(perm[cut:])
    return DataSplit(np.sort(np.concatenate(train)), np.sort(np.concatenate(calib)))


def split_hte(dataset: HteDataset, ratio: float = 0.5, seed: int = 0, stratify: bool = True) -> DataSplit:
    if stratify:
        return stratified_split_hte(dataset, ratio, seed)
    return split_dataset(dataset.n, ratio, seed)
