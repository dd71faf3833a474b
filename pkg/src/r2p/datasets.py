"""Synthetic benchmark generators with exact ground truth, plus CSV ingestion.

Every ``N(m, v)`` in the benchmark descriptions is read with ``v`` as a
variance. ``noise_as_sd=True`` reinterprets the outcome-noise parameter as a
standard deviation instead (covariate distributions are unaffected).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import expit

from .data import GroundTruth, HteDataset


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str = "A"
    n_train: int = 300
    n_test: int = 1000
    seed: int = 0
    noise_as_sd: bool = False

    def __post_init__(self):
        if self.kind not in ("A", "B"):
            raise ValueError(f"unknown synthetic dataset {self.kind!r}")
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("sample counts must be >= 1")


def _noise_sd(param: float, as_sd: bool) -> float:
    return param if as_sd else math.sqrt(param)


def _assign_treatment(rng: np.random.Generator, n: int) -> np.ndarray:
    t = rng.integers(0, 2, size=n)
    if n >= 2 and (t.sum() == 0 or t.sum() == n):
        # degenerate coin flips on tiny samples; force one unit into each arm
        t[0], t[1] = 0, 1
    return t


def _observed(t, y0, y1, tau, x) -> HteDataset:
    y = np.where(t == 1, y1, y0)
    return HteDataset(x, t, y, GroundTruth(y0, y1, tau))


def synthetic_a_effect(x: np.ndarray) -> np.ndarray:
    return 0.5 * np.asarray(x)[:, 0]


def gen_synthetic_a(n: int, seed: int, noise_as_sd: bool = False) -> HteDataset:
    """Two standard-normal covariates, outcome ``x1/2 + x2 + (2t-1) x1/4 + eps``."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 2))
    t = _assign_treatment(rng, n)
    eps = rng.normal(0.0, _noise_sd(0.01, noise_as_sd), size=n)
    eta = 0.5 * x[:, 0] + x[:, 1]
    kappa = synthetic_a_effect(x)
    y0 = eta - 0.5 * kappa + eps
    y1 = eta + 0.5 * kappa + eps
    return _observed(t, y0, y1, kappa, x)


# (name, mean, variance); column 0 of the generated matrix is onset time
SYNTHETIC_B_COVARIATES = (
    ("age", 66.0, 4.0),
    ("white_cell_count", 66.0, 4.0),
    ("lymphocyte_count", 0.8, 0.1),
    ("platelet_count", 183.0, 20.4),
    ("serum_creatinine", 68.0, 6.6),
    ("ast", 31.0, 5.1),
    ("alt", 26.0, 5.1),
    ("ldh", 339.0, 51.0),
    ("creatine_kinase", 76.0, 21.0),
)
SYNTHETIC_B_COLUMNS = ("onset_days",) + tuple(c[0] for c in SYNTHETIC_B_COVARIATES)
BETA_VALUES = (0.0, 0.1, 0.2, 0.3, 0.4)
BETA_PROBS = (0.6, 0.1, 0.1, 0.1, 0.1)


def synthetic_b_effect(onset) -> np.ndarray:
    """Treated-minus-control mean: ``4 * sigmoid(onset - 9) - 5``."""
    return 4.0 * expit(np.asarray(onset, dtype=float) - 9.0) - 5.0


def gen_synthetic_b(n: int, seed: int, noise_as_sd: bool = False) -> HteDataset:
    rng = np.random.default_rng(seed)
    beta = rng.choice(BETA_VALUES, size=len(SYNTHETIC_B_COVARIATES), p=BETA_PROBS)
    means = np.array([c[1] for c in SYNTHETIC_B_COVARIATES])
    sds = np.sqrt([c[2] for c in SYNTHETIC_B_COVARIATES])
    rest = rng.normal(means, sds, size=(n, means.size))
    onset = rng.uniform(4.0, 14.0, size=n)
    x = np.column_stack([onset, rest])
    t = _assign_treatment(rng, n)
    # standardized with the generating moments so train and test share a scale
    base = ((rest - means) / sds) @ beta
    s = expit(onset - 9.0)
    sd = _noise_sd(0.1, noise_as_sd)
    m0 = base + s + 5.0
    m1 = base + 5.0 * s
    y0 = m0 + rng.normal(0.0, sd, size=n)
    y1 = m1 + rng.normal(0.0, sd, size=n)
    return _observed(t, y0, y1, m1 - m0, x)


def generate(spec: SyntheticSpec) -> tuple[HteDataset, HteDataset]:
    """Draw ``n_train + n_test`` rows and return the (train, test) pair."""
    gen = gen_synthetic_a if spec.kind == "A" else gen_synthetic_b
    full = gen(spec.n_train + spec.n_test, spec.seed, spec.noise_as_sd)
    idx = np.arange(full.n)
    return full.subset(idx[: spec.n_train]), full.subset(idx[spec.n_train :])


def gen_zero_effect_noise(n: int, seed: int, tau_sd: float = 0.1) -> HteDataset:
    """One uniform covariate and iid effects unrelated to it.

    Control outcome is ``N(0, tau_sd^2)`` noise and the treated outcome adds an
    independent ``N(0, tau_sd^2)`` effect draw, so the true conditional effect
    is zero everywhere.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, size=(n, 1))
    t = _assign_treatment(rng, n)
    y0 = rng.normal(0.0, tau_sd, size=n)
    y1 = y0 + rng.normal(0.0, tau_sd, size=n)
    return _observed(t, y0, y1, np.zeros(n), x)


@dataclass(frozen=True)
class CsvSchema:
    covariates: tuple[str, ...]
    treatment: str
    outcome: str
    tau: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        names = list(self.covariates) + [self.treatment, self.outcome] + ([self.tau] if self.tau else [])
        if len(set(names)) != len(names):
            raise ValueError("schema column names must be distinct")


class CsvFormatError(ValueError):
    pass


def load_semisynthetic_csv(path, schema: CsvSchema) -> HteDataset:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        wanted = list(schema.covariates) + [schema.treatment, schema.outcome] + ([schema.tau] if schema.tau else [])
        for name in wanted:
            if name not in header:
                raise CsvFormatError(f"missing column {name!r} in {path}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            vals = []
            for name in wanted:
                cell = (rec.get(name) or "").strip()
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise CsvFormatError(f"row {lineno}, column {name!r}: non-numeric value {cell!r}") from None
            t = vals[len(schema.covariates)]
            if t not in (0.0, 1.0):
                raise CsvFormatError(f"row {lineno}, column {schema.treatment!r}: treatment must be 0 or 1, got {t:g}")
            rows.append(vals)
    if not rows:
        raise CsvFormatError(f"{path} has no data rows")
    arr = np.array(rows, dtype=float)
    d = len(schema.covariates)
    truth = GroundTruth(None, None, arr[:, d + 2]) if schema.tau else None
    return HteDataset(arr[:, :d], arr[:, d].astype(int), arr[:, d + 1], truth)
