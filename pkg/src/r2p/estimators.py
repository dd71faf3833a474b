"""Outcome regressors and the two-arm (T-learner) effect estimator.

Any object with ``fit(X, y)`` and a vectorised ``predict(X)`` can serve as an
outcome model; three lightweight ones are built in.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist, pdist

from .data import HteDataset


class OutcomeEstimator(Protocol):
    def predict(self, x: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class EstimatorConfig:
    kind: str = "gp"
    knn_k: int = 10
    ridge_penalty: float = 1.0
    # None means "derive from the training data" (see GPRegressor.fit)
    gp_lengthscale: Optional[float] = None
    gp_signal_var: Optional[float] = None
    gp_noise_var: Optional[float] = None
    gp_mean: str = "linear"
    gp_optimize: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("knn", "ridge", "gp"):
            raise ValueError(f"unknown estimator kind {self.kind!r}")
        if self.gp_mean not in ("zero", "linear"):
            raise ValueError("gp_mean must be 'zero' or 'linear'")
        if self.knn_k < 1:
            raise ValueError("knn_k must be >= 1")
        if self.ridge_penalty < 0:
            raise ValueError("ridge_penalty must be >= 0")
        for name in ("gp_lengthscale", "gp_signal_var", "gp_noise_var"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")


def _as_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x[None, :]
    return x


class Standardizer:
    """Per-feature centering and scaling with statistics from the fit rows."""

    def __init__(self, x: np.ndarray):
        self.mean = x.mean(axis=0)
        sd = x.std(axis=0)
        self.scale = np.where(sd > 0, sd, 1.0)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.scale


class KNNRegressor:
    def __init__(self, k: int, standardize: bool = True):
        self.k = k
        self.standardize = standardize

    def fit(self, x, y):
        x = _as_matrix(x) if np.ndim(x) != 1 else np.asarray(x, dtype=float)[:, None]
        y = np.asarray(y, dtype=float).ravel()
        if self.k > y.size:
            raise ValueError(f"k={self.k} exceeds the {y.size} training rows")
        self._scaler = Standardizer(x) if self.standardize else None
        self._x = self._scaler(x) if self._scaler else x
        self._y = y
        return self

    def predict(self, x) -> np.ndarray:
        x = _as_matrix(x)
        if self._scaler:
            x = self._scaler(x)
        dist = cdist(x, self._x, "sqeuclidean")
        # stable sort keeps the lower row index first among equal distances
        nearest = np.argsort(dist, axis=1, kind="stable")[:, : self.k]
        return self._y[nearest].mean(axis=1)


class RidgeRegressor:
    """Least squares with an unpenalised intercept and an L2 penalty on weights."""

    def __init__(self, penalty: float):
        self.penalty = penalty

    def fit(self, x, y):
        x = _as_matrix(x) if np.ndim(x) != 1 else np.asarray(x, dtype=float)[:, None]
        y = np.asarray(y, dtype=float).ravel()
        n, d = x.shape
        a = np.hstack([x, np.ones((n, 1))])
        gram = a.T @ a
        gram[np.arange(d), np.arange(d)] += self.penalty
        rhs = a.T @ y
        try:
            with np.errstate(all="raise"):
                cond = np.linalg.cond(gram)
            if not np.isfinite(cond) or cond > 1e14:
                raise np.linalg.LinAlgError
            coef = linalg.solve(gram, rhs, assume_a="sym")
        except (np.linalg.LinAlgError, linalg.LinAlgError, FloatingPointError):
            raise ValueError("singular design") from None
        self.weights = coef[:d]
        self.intercept = float(coef[d])
        return self

    def predict(self, x) -> np.ndarray:
        return _as_matrix(x) @ self.weights + self.intercept


class GPRegressor:
    """Gaussian-process regression with an RBF kernel.

    Kernel ``signal_var * exp(-|a - b|^2 / (2 * lengthscale^2))`` plus
    ``noise_var`` on the diagonal, solved through a Cholesky factorization.

    With ``mean="linear"`` a ridge trend is fitted first and the GP models
    what is left; with ``mean="zero"`` predictions revert to 0 away from the
    data. Hyperparameters left as ``None`` are either fitted by maximising the
    log marginal likelihood (``optimize=True``, one lengthscale per feature)
    or set by the median heuristic: lengthscale = median pairwise distance,
    signal variance ``Var(y)``, noise ``0.1 * Var(y)``.
    """

    def __init__(self, lengthscale=None, signal_var=None, noise_var=None, mean: str = "zero",
                 optimize: bool = False, standardize: bool = True):
        if mean not in ("zero", "linear"):
            raise ValueError("mean must be 'zero' or 'linear'")
        self.lengthscale = lengthscale
        self.signal_var = signal_var
        self.noise_var = noise_var
        self.mean = mean
        self.optimize = optimize
        self.standardize = standardize

    def fit(self, x, y):
        x = _as_matrix(x) if np.ndim(x) != 1 else np.asarray(x, dtype=float)[:, None]
        y = np.asarray(y, dtype=float).ravel()
        self._scaler = Standardizer(x) if self.standardize else None
        xs = self._scaler(x) if self._scaler else x
        self._trend = None
        if self.mean == "linear":
            self._trend = RidgeRegressor(1e-3).fit(xs, y)
            y = y - self._trend.predict(xs)
        var_y = float(y.var())
        if var_y <= 0:
            var_y = 1.0
        free = [v is None for v in (self.lengthscale, self.signal_var, self.noise_var)]
        if self.optimize and any(free):
            ls, sv, nv = _fit_marginal_likelihood(xs, y, self.lengthscale, self.signal_var, self.noise_var)
        else:
            ls = self.lengthscale
            if ls is None:
                dists = pdist(xs) if xs.shape[0] > 1 else np.array([])
                dists = dists[dists > 0]
                ls = float(np.median(dists)) if dists.size else 1.0
            sv = self.signal_var if self.signal_var is not None else var_y
            nv = self.noise_var if self.noise_var is not None else 0.1 * var_y
        if not nv > 0:
            raise ValueError("gp_noise_var must be positive")
        self.lengthscale_ = np.broadcast_to(np.asarray(ls, dtype=float), (xs.shape[1],)).copy()
        self.signal_var_ = float(sv)
        self.noise_var_ = float(nv)
        k = _rbf(xs, xs, self.lengthscale_, self.signal_var_)
        k[np.diag_indices_from(k)] += self.noise_var_
        try:
            self._chol = linalg.cho_factor(k, lower=True)
        except linalg.LinAlgError:
            raise ValueError("kernel not positive definite") from None
        self._alpha = linalg.cho_solve(self._chol, y)
        self._x = xs
        return self

    def predict(self, x) -> np.ndarray:
        x = _as_matrix(x)
        if self._scaler:
            x = self._scaler(x)
        out = _rbf(x, self._x, self.lengthscale_, self.signal_var_) @ self._alpha
        if self._trend is not None:
            out = out + self._trend.predict(x)
        return out


def _rbf(a, b, lengthscale, signal_var):
    return signal_var * np.exp(-0.5 * cdist(a / lengthscale, b / lengthscale, "sqeuclidean"))


_LOG_BOUNDS = {"ls": (np.log(1e-2), np.log(1e3)), "sv": (np.log(1e-4), np.log(1e2)), "nv": (np.log(1e-8), np.log(1e1))}


def _neg_log_marginal(theta, x, y):
    d = x.shape[1]
    ls = np.exp(theta[:d])
    sv, nv = np.exp(theta[d]), np.exp(theta[d + 1])
    diff2 = (x[:, None, :] - x[None, :, :]) ** 2 / ls**2
    kf = sv * np.exp(-0.5 * diff2.sum(axis=2))
    k = kf + nv * np.eye(x.shape[0])
    try:
        c = linalg.cho_factor(k, lower=True)
    except linalg.LinAlgError:
        return 1e25, np.zeros_like(theta)
    a = linalg.cho_solve(c, y)
    nll = 0.5 * y @ a + np.log(np.diag(c[0])).sum() + 0.5 * y.size * np.log(2 * np.pi)
    inner = np.outer(a, a) - linalg.cho_solve(c, np.eye(y.size))
    grad = np.empty_like(theta)
    for j in range(d):
        grad[j] = -0.5 * np.sum(inner * kf * diff2[:, :, j])
    grad[d] = -0.5 * np.sum(inner * kf)
    grad[d + 1] = -0.5 * nv * np.trace(inner)
    return nll, grad


def _fit_marginal_likelihood(x, y, lengthscale, signal_var, noise_var):
    """Type-II maximum likelihood for the unset RBF hyperparameters.

    Targets are scaled to unit variance while optimizing. Two fixed starts
    (low and moderate noise) keep the result deterministic.
    """
    from scipy.optimize import minimize

    n, d = x.shape
    scale = float(y.std()) or 1.0
    ys = y / scale
    fixed = {
        "ls": None if lengthscale is None else np.log(np.broadcast_to(lengthscale, (d,))),
        "sv": None if signal_var is None else np.log(signal_var / scale**2),
        "nv": None if noise_var is None else np.log(noise_var / scale**2),
    }
    bounds = [_LOG_BOUNDS["ls"]] * d + [_LOG_BOUNDS["sv"], _LOG_BOUNDS["nv"]]
    for i, key in enumerate(("sv", "nv")):
        if fixed[key] is not None:
            bounds[d + i] = (fixed[key], fixed[key])
    if fixed["ls"] is not None:
        bounds[:d] = [(v, v) for v in fixed["ls"]]
    best = None
    for start_noise in (1e-2, 1e-1):
        theta0 = np.concatenate([np.zeros(d), [0.0, np.log(start_noise)]])
        theta0 = np.clip(theta0, [b[0] for b in bounds], [b[1] for b in bounds])
        res = minimize(_neg_log_marginal, theta0, args=(x, ys), jac=True, method="L-BFGS-B", bounds=bounds)
        if best is None or res.fun < best.fun:
            best = res
    th = best.x
    return np.exp(th[:d]), float(np.exp(th[d])) * scale**2, float(np.exp(th[d + 1])) * scale**2


def fit_knn(covariates, outcomes, k: int) -> KNNRegressor:
    return KNNRegressor(k).fit(covariates, outcomes)


def fit_ridge(covariates, outcomes, penalty: float) -> RidgeRegressor:
    if penalty < 0:
        raise ValueError("penalty must be >= 0")
    return RidgeRegressor(penalty).fit(covariates, outcomes)


def fit_gp(covariates, outcomes, cfg: EstimatorConfig) -> GPRegressor:
    gp = GPRegressor(cfg.gp_lengthscale, cfg.gp_signal_var, cfg.gp_noise_var, mean=cfg.gp_mean, optimize=cfg.gp_optimize)
    return gp.fit(covariates, outcomes)


def fit_outcome(covariates, outcomes, cfg):
    """Fit an outcome model described by ``cfg``.

    ``cfg`` is either an :class:`EstimatorConfig` or a zero-argument factory
    returning an object with ``fit(X, y)`` and ``predict(X)`` (for example an
    unfitted scikit-learn regressor class).
    """
    if callable(cfg) and not isinstance(cfg, EstimatorConfig):
        return cfg().fit(np.asarray(covariates, dtype=float), np.asarray(outcomes, dtype=float))
    if cfg.kind == "knn":
        return fit_knn(covariates, outcomes, cfg.knn_k)
    if cfg.kind == "ridge":
        return fit_ridge(covariates, outcomes, cfg.ridge_penalty)
    return fit_gp(covariates, outcomes, cfg)


class TLearner:
    """Effect estimator built from one outcome model per treatment arm."""

    def __init__(self, mu0, mu1):
        self.mu0 = mu0
        self.mu1 = mu1

    def predict_arms(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = _as_matrix(x)
        return self.mu0.predict(x), self.mu1.predict(x)

    def predict_ite(self, x) -> np.ndarray:
        m0, m1 = self.predict_arms(x)
        return m1 - m0


def fit_ite_t_learner(dataset: HteDataset, cfg, train_idx=None) -> TLearner:
    idx = np.arange(dataset.n) if train_idx is None else np.asarray(train_idx, dtype=np.intp)
    t = dataset.treatments[idx]
    models = []
    for arm in (0, 1):
        rows = idx[t == arm]
        too_few = isinstance(cfg, EstimatorConfig) and cfg.kind == "knn" and rows.size < cfg.knn_k
        if rows.size == 0 or too_few:
            raise ValueError(f"cannot fit arm {arm}: {rows.size} training rows")
        models.append(fit_outcome(dataset.covariates[rows], dataset.outcomes[rows], cfg))
    return TLearner(*models)
