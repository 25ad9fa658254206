"""Exact Gaussian-process surrogates, one per objective.

The model is a constant mean plus an ARD squared-exponential kernel with
Gaussian observation noise.  Hyperparameters are fitted by maximising the
exact log marginal likelihood with analytic gradients (L-BFGS-B over
log-transformed scale parameters, several starts).  Targets are standardised
per objective before fitting; predictions come back in original units.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, lapack, solve_triangular
from scipy.optimize import minimize, minimize_scalar
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_generator, check_unit_cube

logger = logging.getLogger(__name__)

JITTER_START = 1e-8
JITTER_MAX = 1e-4


class CholeskyError(np.linalg.LinAlgError):
    """Kernel matrix stayed indefinite after jitter escalation."""


@dataclass(frozen=True)
class GPHyperparams:
    lengthscales: np.ndarray
    signal_variance: float
    noise_variance: float
    constant_mean: float = 0.0

    def to_vector(self) -> np.ndarray:
        """Pack as ``[log lengthscales..., log signal, log noise, mean]``."""
        return np.concatenate([
            np.log(self.lengthscales),
            [math.log(self.signal_variance), math.log(self.noise_variance), self.constant_mean],
        ])

    @classmethod
    def from_vector(cls, theta) -> "GPHyperparams":
        theta = np.asarray(theta, dtype=np.float64)
        return cls(
            lengthscales=np.exp(theta[:-3]),
            signal_variance=float(np.exp(theta[-3])),
            noise_variance=float(np.exp(theta[-2])),
            constant_mean=float(theta[-1]),
        )

    def as_dict(self) -> dict:
        return {
            "lengthscales": [float(v) for v in self.lengthscales],
            "signal_variance": self.signal_variance,
            "noise_variance": self.noise_variance,
            "constant_mean": self.constant_mean,
        }


def rbf_kernel(A, B, lengthscales, signal_variance):
    """ARD squared-exponential kernel matrix between rows of ``A`` and ``B``."""
    As = A / lengthscales
    Bs = B / lengthscales
    sq = (As * As).sum(1)[:, None] + (Bs * Bs).sum(1)[None, :] - 2.0 * As @ Bs.T
    np.maximum(sq, 0.0, out=sq)
    return signal_variance * np.exp(-0.5 * sq)


def safe_cholesky(A, *, jitter_start=JITTER_START, jitter_max=JITTER_MAX):
    """Lower Cholesky factor of ``A``, adding diagonal jitter if needed.

    Returns ``(L, jitter)``.  Jitter grows tenfold from ``jitter_start`` up to
    ``jitter_max``; beyond that :class:`CholeskyError` is raised.
    """
    try:
        return cholesky(A, lower=True, check_finite=False), 0.0
    except np.linalg.LinAlgError:
        pass
    jitter = jitter_start
    eye = np.eye(A.shape[0])
    while jitter <= jitter_max * (1 + 1e-9):
        try:
            L = cholesky(A + jitter * eye, lower=True, check_finite=False)
            logger.debug("cholesky needed jitter %.1e", jitter)
            return L, jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise CholeskyError(f"matrix not positive definite even with jitter {jitter / 10.0:.1e}")


def gp_log_marginal_likelihood(hyperparams, inputs, targets, *, eval_gradient=True):
    """Exact log marginal likelihood and its gradient.

    The gradient is taken with respect to :meth:`GPHyperparams.to_vector`,
    i.e. log lengthscales, log signal variance, log noise variance and the
    (untransformed) constant mean.
    """
    X = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64).ravel()
    m, d = X.shape
    if m < 2:
        raise ValueError("need at least two training points")
    hp = hyperparams
    Kf = rbf_kernel(X, X, hp.lengthscales, hp.signal_variance)
    Ky = Kf + hp.noise_variance * np.eye(m)
    L, _ = safe_cholesky(Ky)
    r = y - hp.constant_mean
    alpha = cho_solve((L, True), r, check_finite=False)
    value = -0.5 * r @ alpha - np.log(np.diag(L)).sum() - 0.5 * m * math.log(2 * math.pi)
    if not eval_gradient:
        return value, None

    Kinv, info = lapack.dpotri(L, lower=1)
    if info != 0:
        raise CholeskyError(f"inverse from Cholesky factor failed (info={info})")
    Kinv += np.tril(Kinv, -1).T  # potri fills the lower triangle only
    W = np.outer(alpha, alpha) - Kinv
    M = W * Kf
    # sum_ij M_ij (x_ik - x_jk)^2 = 2 sum_i x_ik^2 (M 1)_i - 2 x_k^T M x_k
    row = M.sum(axis=1)
    sqdist_weighted = 2.0 * (X * X * row[:, None]).sum(0) - 2.0 * (X * (M @ X)).sum(0)
    grad = np.empty(d + 3)
    grad[:d] = 0.5 * sqdist_weighted / hp.lengthscales**2
    grad[d] = 0.5 * M.sum()
    grad[d + 1] = 0.5 * hp.noise_variance * np.trace(W)
    grad[d + 2] = alpha.sum()
    return value, grad


def _boxcox(logy, lam):
    return logy if lam == 0.0 else np.expm1(lam * logy) / lam


def boxcox_lambda(y, bounds=(0.0, 1.0)):
    """Maximum-likelihood Box-Cox exponent of positive ``y`` within ``bounds``."""
    logy = np.log(np.asarray(y, dtype=np.float64))
    n, total = logy.size, logy.sum()

    def neg_llf(lam):
        var = _boxcox(logy, lam).var()
        if var <= 0:
            return np.inf
        return 0.5 * n * math.log(var) - (lam - 1.0) * total

    res = minimize_scalar(neg_llf, bounds=bounds, method="bounded", options={"xatol": 1e-6})
    lam = float(res.x)
    # the bounded search never lands exactly on an end point
    for edge in bounds:
        if neg_llf(edge) <= res.fun:
            lam = float(edge)
    return lam


class GaussianProcessSurrogate(BaseEstimator, RegressorMixin):
    """Exact GP regressor on the unit hypercube.

    Parameters
    ----------
    n_restarts : int, default=3
        Number of optimizer starts; the first starts from fixed defaults,
        the rest from log-uniform draws inside the bounds.
    max_iter : int, default=100
        Iteration cap per start.
    gtol : float, default=1e-5
        Projected-gradient tolerance for convergence.
    lengthscale_bounds, noise_bounds, signal_bounds : (float, float)
        Box constraints, in standardised target units for the variances.
    output_warp : {None, "boxcox"}, default=None
        Monotone target transform applied before standardisation.
        ``"boxcox"`` fits a Box-Cox exponent in [0, 1] by maximum
        likelihood when every target is positive (0 is a log transform).
        All-negative targets get the mirrored warp ``-boxcox(-y)``, which
        compresses large costs.  Mixed signs are left alone.  With a warp, :meth:`predict` describes the
        warped target and :meth:`sample_y` maps draws back to original units.
    standardize : bool, default=True
        Shift/scale targets to zero mean and unit variance before fitting.
    warm_start : bool, default=False
        On refit, start the first optimizer run from the current
        hyperparameters instead of the fixed defaults.
    random_state : int, Generator or None
        Seed for the random restarts.
    """

    def __init__(
        self,
        n_restarts=3,
        max_iter=100,
        gtol=1e-5,
        lengthscale_bounds=(5e-3, 10.0),
        noise_bounds=(1e-6, 1e-1),
        signal_bounds=(5e-2, 20.0),
        standardize=True,
        output_warp=None,
        warm_start=False,
        random_state=None,
    ):
        self.n_restarts = n_restarts
        self.max_iter = max_iter
        self.gtol = gtol
        self.lengthscale_bounds = lengthscale_bounds
        self.noise_bounds = noise_bounds
        self.signal_bounds = signal_bounds
        self.standardize = standardize
        self.output_warp = output_warp
        self.warm_start = warm_start
        self.random_state = random_state

    def _bounds(self, d):
        lo_l, hi_l = self.lengthscale_bounds
        return (
            [(math.log(lo_l), math.log(hi_l))] * d
            + [tuple(math.log(b) for b in self.signal_bounds)]
            + [tuple(math.log(b) for b in self.noise_bounds)]
            + [(None, None)]
        )

    def _default_theta(self, d):
        ls = float(np.clip(0.5, *self.lengthscale_bounds))
        sig = float(np.clip(1.0, *self.signal_bounds))
        noise = float(np.clip(1e-3, *self.noise_bounds))
        return GPHyperparams(np.full(d, ls), sig, noise, 0.0).to_vector()

    def fit(self, X, y):
        X = check_unit_cube(X, name="training inputs")
        y = np.asarray(y, dtype=np.float64).ravel()
        if y.shape[0] != X.shape[0]:
            raise ValueError(f"{X.shape[0]} inputs but {y.shape[0]} targets")
        if not np.all(np.isfinite(y)):
            raise ValueError("targets must be finite")
        m, d = X.shape
        if m < 2:
            raise ValueError("need at least two training points")

        ys = self._prepare_targets(y)

        self.X_train_ = X
        self.y_train_ = ys
        self.n_features_in_ = d
        self.fit_warning_ = None

        theta0 = self._default_theta(d)
        previous = getattr(self, "hyperparams_", None)
        if self.warm_start and previous is not None and previous.lengthscales.shape == (d,):
            lo, hi = np.array([(-np.inf, np.inf) if b[0] is None else b for b in self._bounds(d)]).T
            theta0 = np.clip(previous.to_vector(), lo, hi)
        if np.all(X == X[0]):
            self.fit_warning_ = "degenerate inputs: all training rows identical; using prior hyperparameters"
            warnings.warn(self.fit_warning_, RuntimeWarning, stacklevel=2)
            theta0[-1] = float(ys.mean())
            self._set_hyperparams(GPHyperparams.from_vector(theta0))
            return self

        bounds = self._bounds(d)

        def objective(theta):
            try:
                val, grad = gp_log_marginal_likelihood(GPHyperparams.from_vector(theta), X, ys)
            except CholeskyError:
                return 1e25, np.zeros_like(theta)
            return -val, -grad

        rng = as_generator(self.random_state)
        starts = [theta0]
        for _ in range(max(0, self.n_restarts - 1)):
            t = theta0.copy()
            for j, (lo, hi) in enumerate(bounds[:-1]):
                t[j] = rng.uniform(lo, hi)
            starts.append(t)

        best_theta, best_val = theta0, np.inf
        for start in starts:
            res = minimize(
                objective, start, jac=True, method="L-BFGS-B", bounds=bounds,
                options={"maxiter": self.max_iter, "gtol": self.gtol},
            )
            if np.isfinite(res.fun) and res.fun < best_val:
                best_theta, best_val = res.x, res.fun
        self.log_marginal_likelihood_value_ = -best_val
        self._set_hyperparams(GPHyperparams.from_vector(best_theta))
        return self

    def set_hyperparams(self, X, y, hyperparams):
        """Condition on ``(X, y)`` with fixed hyperparameters (no optimisation)."""
        X = check_unit_cube(X, name="training inputs")
        y = np.asarray(y, dtype=np.float64).ravel()
        self.X_train_ = X
        self.y_train_ = self._prepare_targets(y)
        self.n_features_in_ = X.shape[1]
        self.fit_warning_ = None
        self._set_hyperparams(hyperparams)
        return self

    def _prepare_targets(self, y):
        self.warp_lambda_, self.warp_sign_ = None, 1.0
        if self.output_warp not in (None, "boxcox"):
            raise ValueError(f"unknown output_warp {self.output_warp!r}")
        # all-negative targets (costs) are warped as -boxcox(-y)
        sign = 1.0 if np.all(y > 0) else -1.0 if np.all(y < 0) else 0.0
        if self.output_warp == "boxcox" and sign and np.ptp(y) > 0:
            lam = boxcox_lambda(sign * y)
            self.warp_lambda_, self.warp_sign_ = lam, sign
            y = sign * _boxcox(np.log(sign * y), lam)
        if self.standardize:
            self.y_mean_ = float(y.mean())
            std = float(y.std())
            self.y_std_ = std if std > 0 else 1.0
        else:
            self.y_mean_, self.y_std_ = 0.0, 1.0
        return (y - self.y_mean_) / self.y_std_

    def inverse_warp(self, z):
        """Map warped target values back to original units."""
        lam = getattr(self, "warp_lambda_", None)
        z = np.asarray(z, dtype=np.float64)
        if lam is None:
            return z
        sign = self.warp_sign_
        z = sign * z
        if lam == 0.0:
            return sign * np.exp(np.minimum(z, 700.0))
        return sign * np.maximum(lam * z + 1.0, 0.0) ** (1.0 / lam)

    def _set_hyperparams(self, hp):
        self.hyperparams_ = hp
        m = self.X_train_.shape[0]
        K = rbf_kernel(self.X_train_, self.X_train_, hp.lengthscales, hp.signal_variance)
        K[np.diag_indices(m)] += hp.noise_variance
        self.L_, self.jitter_ = safe_cholesky(K)
        self.alpha_ = cho_solve((self.L_, True), self.y_train_ - hp.constant_mean, check_finite=False)

    def _posterior_std_units(self, X, full_cov):
        hp = self.hyperparams_
        Ks = rbf_kernel(X, self.X_train_, hp.lengthscales, hp.signal_variance)
        mean = hp.constant_mean + Ks @ self.alpha_
        V = solve_triangular(self.L_, Ks.T, lower=True, check_finite=False)
        if full_cov:
            cov = rbf_kernel(X, X, hp.lengthscales, hp.signal_variance) - V.T @ V
            cov = 0.5 * (cov + cov.T)
            return mean, cov
        var = hp.signal_variance - (V * V).sum(axis=0)
        return mean, np.maximum(var, 0.0)

    def predict(self, X, return_std=False, return_cov=False):
        """Posterior mean of the latent function, optionally with std or covariance."""
        check_is_fitted(self, "alpha_")
        X = check_unit_cube(X, d=self.n_features_in_)
        if return_cov:
            mean, cov = self._posterior_std_units(X, True)
            return self.y_mean_ + self.y_std_ * mean, cov * self.y_std_**2
        mean, var = self._posterior_std_units(X, False)
        mean = self.y_mean_ + self.y_std_ * mean
        if return_std:
            return mean, np.sqrt(var) * self.y_std_
        return mean

    def sample_y(self, X, n_samples=1, random_state=None):
        """Joint posterior draws at ``X``; returns shape ``(n_samples, len(X))``."""
        mean, cov = self.predict(X, return_cov=True)
        scale = self.y_std_**2
        L, _ = safe_cholesky(cov, jitter_start=JITTER_START * scale, jitter_max=JITTER_MAX * scale)
        rng = as_generator(random_state)
        z = rng.standard_normal((len(mean), n_samples))
        return self.inverse_warp((mean[:, None] + L @ z).T)

    @property
    def noise_variance_(self):
        """Observation-noise variance in original target units."""
        return self.hyperparams_.noise_variance * self.y_std_**2


def fit_gp(inputs, targets, *, random_state=None, **params) -> GaussianProcessSurrogate:
    return GaussianProcessSurrogate(random_state=random_state, **params).fit(inputs, targets)


def gp_posterior(model, points):
    return model.predict(points, return_cov=True)


def gp_sample_joint(model, points, rng):
    return model.sample_y(points, 1, rng)[0]


def fit_objective_models(inputs, targets, *, seeds=None, **params):
    """Fit one independent surrogate per column of ``targets``."""
    Y = np.asarray(targets, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    seeds = seeds if seeds is not None else [None] * Y.shape[1]
    return [fit_gp(inputs, Y[:, t], random_state=seeds[t], **params) for t in range(Y.shape[1])]
