"""Gaussian-process surrogate: SE-ARD kernel, marginal likelihood, fitting, prediction."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.linalg.lapack
import scipy.optimize

from .errors import FitFailed, NonPositiveDefinite

_log = logging.getLogger(__name__)

LENGTH_SCALE_BOUNDS = (1e-3, 1e3)
NOISE_FLOOR_REL = 1e-6
JITTER_LADDER = (1e-10, 1e-8, 1e-6)
_LOG_2PI = np.log(2.0 * np.pi)
_potrf, _potrs, _potri = scipy.linalg.lapack.get_lapack_funcs(
    ("potrf", "potrs", "potri"), dtype=np.float64
)


@dataclass
class GpHyperparams:
    """GP hyperparameters; lengths and scales are stored as natural logs."""

    log_length_scales: np.ndarray
    log_signal_sd: float
    log_noise_sd: float
    constant_mean: float

    def __post_init__(self):
        self.log_length_scales = np.atleast_1d(np.asarray(self.log_length_scales, dtype=float))

    @property
    def dim(self):
        return self.log_length_scales.size

    @property
    def length_scales(self):
        return np.exp(self.log_length_scales)

    @property
    def signal_var(self):
        return np.exp(2.0 * self.log_signal_sd)

    @property
    def noise_var(self):
        return np.exp(2.0 * self.log_noise_sd)

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.log_length_scales, [self.log_signal_sd, self.log_noise_sd, self.constant_mean]]
        )

    @classmethod
    def from_vector(cls, theta) -> "GpHyperparams":
        theta = np.asarray(theta, dtype=float)
        return cls(theta[:-3].copy(), float(theta[-3]), float(theta[-2]), float(theta[-1]))


def kernel_matrix(x, y, hp: GpHyperparams) -> np.ndarray:
    """SE-ARD covariance between the rows of ``x`` and ``y``."""
    xs = np.atleast_2d(x) / hp.length_scales
    ys = np.atleast_2d(y) / hp.length_scales
    r2 = (xs * xs).sum(1)[:, None] + (ys * ys).sum(1)[None, :] - 2.0 * xs @ ys.T
    return hp.signal_var * np.exp(-0.5 * np.maximum(r2, 0.0))


def kernel(x, y, hp: GpHyperparams) -> float:
    """Squared-exponential ARD covariance of two single points."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError("points must have the same dimension")
    r2 = np.sum(((x - y) / hp.length_scales) ** 2)
    return float(hp.signal_var * np.exp(-0.5 * r2))


def _cholesky(k_no_jitter, signal_var):
    """Cholesky factor with escalating diagonal jitter.

    Returns ``(lower_factor, jitter)``; the jitter actually added is part of
    the covariance the caller must account for.
    """
    if not np.all(np.isfinite(k_no_jitter)):
        raise NonPositiveDefinite("kernel matrix has non-finite entries")
    step = k_no_jitter.shape[0] + 1
    for rel in JITTER_LADDER:
        jitter = rel * signal_var
        k = k_no_jitter.copy()
        k.flat[::step] += jitter
        chol, info = _potrf(k, lower=1, clean=1, overwrite_a=1)
        if info == 0:
            return chol, jitter
    raise NonPositiveDefinite("kernel matrix not positive definite after jitter escalation")


def _noise_vector(hp, noise_sds, n):
    per_point = np.zeros(n) if noise_sds is None else np.asarray(noise_sds, dtype=float)
    return hp.noise_var + per_point**2


def _pairwise_sq_diff(x):
    """Unscaled squared coordinate differences flattened to ``(n*n, D)``."""
    diff = x[:, None, :] - x[None, :, :]
    return (diff * diff).reshape(-1, x.shape[1])


def _lml(sqdiff, y, noise_sds, hp, grad):
    n = y.size
    inv_l2 = np.exp(-2.0 * hp.log_length_scales)
    kf = hp.signal_var * np.exp(-0.5 * (sqdiff @ inv_l2)).reshape(n, n)
    k = kf.copy()
    k.flat[:: n + 1] += _noise_vector(hp, noise_sds, n)
    chol, jitter = _cholesky(k, hp.signal_var)
    resid = y - hp.constant_mean
    alpha, _ = _potrs(chol, resid, lower=1)
    lml = -0.5 * resid @ alpha - np.log(np.diag(chol)).sum() - 0.5 * n * _LOG_2PI
    if not grad:
        return float(lml), None

    k_inv, _ = _potri(chol, lower=1)
    # potri fills the lower triangle only; the upper one is zero from potrf
    k_inv = k_inv + k_inv.T
    k_inv.flat[:: n + 1] *= 0.5
    w = np.outer(alpha, alpha) - k_inv
    wkf = w * kf
    trace_w = np.trace(w)
    g = np.empty(hp.dim + 3)
    g[: hp.dim] = 0.5 * (wkf.ravel() @ sqdiff) * inv_l2
    # jitter scales with the signal variance
    g[hp.dim] = wkf.sum() + jitter * trace_w
    g[hp.dim + 1] = hp.noise_var * trace_w
    g[hp.dim + 2] = alpha.sum()
    return float(lml), g


def log_marginal_likelihood(inputs, values, noise_sds, hp: GpHyperparams, grad=True):
    """Log marginal likelihood of the training data and its gradient.

    The gradient is taken with respect to ``hp.to_vector()``, i.e. log
    length scales, log signal sd, log noise sd and the constant mean.

    Returns
    -------
    lml : float
    dlml : numpy.ndarray or None
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(values, dtype=float).ravel()
    if y.size < 1:
        raise ValueError("need at least one training point")
    return _lml(_pairwise_sq_diff(x), y, noise_sds, hp, grad)


class GpModel:
    """A GP conditioned on training data, with cached factorization.

    Instances are treated as immutable; :meth:`condition` returns a new model.
    """

    def __init__(self, hyperparams: GpHyperparams, train_inputs, train_values, train_noise_sd=None):
        self.hyperparams = hyperparams
        dim = hyperparams.dim
        self.train_inputs = np.asarray(train_inputs, dtype=float).reshape(-1, dim)
        self.train_values = np.asarray(train_values, dtype=float).ravel()
        n = self.train_values.size
        if train_noise_sd is None:
            train_noise_sd = np.zeros(n)
        self.train_noise_sd = np.asarray(train_noise_sd, dtype=float).ravel()
        if n:
            k = kernel_matrix(self.train_inputs, self.train_inputs, hyperparams)
            k += np.diag(_noise_vector(hyperparams, self.train_noise_sd, n))
            self.factorization, self.jitter = _cholesky(k, hyperparams.signal_var)
            self.alpha = scipy.linalg.cho_solve(
                (self.factorization, True), self.train_values - hyperparams.constant_mean
            )
        else:
            self.factorization = np.zeros((0, 0))
            self.jitter = 0.0
            self.alpha = np.zeros(0)
        self._ones_solve = None

    @property
    def n_train(self):
        return self.train_values.size

    def predict(self, x, include_mean_uncertainty=False):
        """Posterior mean and latent standard deviation.

        ``x`` may be a single point or an ``(m, D)`` array; the return shape
        follows (scalars for a single point).

        With ``include_mean_uncertainty`` the variance also carries the
        uncertainty of the constant mean under a flat prior,
        ``(1 - k^T K^-1 1)^2 / (1^T K^-1 1)``. This matters when the
        training points are clustered and the data look like pure noise.
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xs = x.reshape(-1, self.hyperparams.dim)
        hp = self.hyperparams
        if self.n_train == 0:
            mean = np.full(len(xs), hp.constant_mean)
            var = np.full(len(xs), hp.signal_var)
        else:
            ks = kernel_matrix(self.train_inputs, xs, hp)
            mean = hp.constant_mean + ks.T @ self.alpha
            v = scipy.linalg.solve_triangular(self.factorization, ks, lower=True, check_finite=False)
            var = hp.signal_var - np.einsum("ij,ij->j", v, v)
            if include_mean_uncertainty:
                if self._ones_solve is None:
                    self._ones_solve = scipy.linalg.cho_solve(
                        (self.factorization, True), np.ones(self.n_train)
                    )
                resid = 1.0 - ks.T @ self._ones_solve
                var = var + resid**2 / self._ones_solve.sum()
        sd = np.sqrt(np.maximum(var, 0.0))
        if single:
            return float(mean[0]), float(sd[0])
        return mean, sd

    def condition(self, x, y, noise_sd=0.0) -> "GpModel":
        """Model with one extra observation, same hyperparameters."""
        return GpModel(
            self.hyperparams,
            np.vstack([self.train_inputs, np.atleast_2d(x)]),
            np.append(self.train_values, y),
            np.append(self.train_noise_sd, noise_sd),
        )


def value_scale(values) -> float:
    sd = float(np.std(values)) if len(values) else 0.0
    return sd if sd > 0 and np.isfinite(sd) else 1.0


def default_hyperparams(dim, values=(), noise_floor=None) -> GpHyperparams:
    """Prior hyperparameters used when there is too little data to fit."""
    values = np.asarray(values, dtype=float)
    scale = value_scale(values)
    mean = float(np.median(values)) if values.size else 0.0
    floor = NOISE_FLOOR_REL * scale if noise_floor is None else max(noise_floor, NOISE_FLOOR_REL * scale)
    return GpHyperparams(np.full(dim, np.log(0.1)), np.log(scale), np.log(floor), mean)


def _hp_bounds(dim, values, noisy, noise_floor):
    scale = value_scale(values)
    lo_l, hi_l = np.log(LENGTH_SCALE_BOUNDS)
    floor = NOISE_FLOOR_REL * scale
    if noisy:
        floor = max(floor, noise_floor or 0.0)
        noise_b = (np.log(floor), max(np.log(floor), np.log(1e2 * scale)))
    else:
        noise_b = (np.log(floor), np.log(floor))
    ymin, ymax = float(np.min(values)), float(np.max(values))
    bounds = [(lo_l, hi_l)] * dim + [
        (np.log(1e-6 * scale), np.log(1e3 * scale)),
        noise_b,
        (ymin - 10.0 * scale, ymax + 10.0 * scale),
    ]
    return bounds


def _heuristic_start(inputs, values, bounds, noisy):
    dim = inputs.shape[1]
    iqr = np.percentile(inputs, 75, axis=0) - np.percentile(inputs, 25, axis=0)
    iqr = np.where(iqr > 0, iqr, LENGTH_SCALE_BOUNDS[0])
    log_noise = bounds[dim + 1][0]
    if noisy:
        log_noise = max(log_noise, np.log(0.1 * value_scale(values)))
    theta = np.concatenate(
        [np.log(iqr), [np.log(value_scale(values)), log_noise, float(np.median(values))]]
    )
    return _clip_theta(theta, bounds)


def _clip_theta(theta, bounds):
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    return np.clip(theta, lo, hi)


def fit(
    inputs,
    values,
    noise_sds=None,
    previous_hp: GpHyperparams | None = None,
    rng: np.random.Generator | None = None,
    noisy: bool = False,
    noise_floor: float | None = None,
    heuristic_start: bool = True,
    maxiter: int = 200,
) -> GpModel:
    """Fit hyperparameters by maximizing the log marginal likelihood.

    Starts are the previous hyperparameters (when given) and a data-driven
    heuristic (interquartile range of inputs for length scales, sd of the
    values for the signal, median for the mean). Without previous
    hyperparameters the second start is a random perturbation of the
    heuristic drawn from ``rng``. Passing ``heuristic_start=False`` together
    with ``previous_hp`` gives a cheap warm-started refit.

    In deterministic mode the noise sd is pinned at ``1e-6`` times the sd of
    the values; in noisy mode it is fitted with ``noise_floor`` as lower bound.
    Fewer than two points yield an unfitted prior model.

    Raises
    ------
    FitFailed
        If every start failed to produce a finite likelihood.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(values, dtype=float).ravel()
    dim = x.shape[1]
    if y.size < 2:
        hp = default_hyperparams(dim, y, noise_floor if noisy else None)
        if previous_hp is not None:
            hp = GpHyperparams(previous_hp.log_length_scales, previous_hp.log_signal_sd, hp.log_noise_sd, hp.constant_mean)
        return GpModel(hp, x[: y.size], y, noise_sds)

    bounds = _hp_bounds(dim, y, noisy, noise_floor)
    starts = []
    if previous_hp is not None:
        starts.append(_clip_theta(previous_hp.to_vector(), bounds))
    if heuristic_start or previous_hp is None:
        h = _heuristic_start(x, y, bounds, noisy)
        starts.append(h)
        if previous_hp is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            jitter = np.zeros_like(h)
            jitter[:dim] = rng.normal(0.0, 0.5, dim)
            starts.append(_clip_theta(h + jitter, bounds))

    sqdiff = _pairwise_sq_diff(x)

    def neg_lml(theta):
        try:
            val, g = _lml(sqdiff, y, noise_sds, GpHyperparams.from_vector(theta), True)
        except NonPositiveDefinite:
            return 1e25, np.zeros_like(theta)
        if not np.isfinite(val) or not np.all(np.isfinite(g)):
            return 1e25, np.zeros_like(theta)
        return -val, -g

    best_theta, best_val = None, np.inf
    for theta0 in starts:
        res = scipy.optimize.minimize(
            neg_lml, theta0, jac=True, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": maxiter, "ftol": 1e-6, "gtol": 1e-4},
        )
        if np.isfinite(res.fun) and res.fun < best_val and res.fun < 1e25:
            best_theta, best_val = res.x, res.fun
    if best_theta is None:
        raise FitFailed("all hyperparameter optimization starts failed")
    return GpModel(GpHyperparams.from_vector(best_theta), x, y, noise_sds)


def select_training_subset(points, incumbent, poll_size, incumbent_index=None, min_points=20, n_max=None, radius_factor=5.0):
    """Indices of the local training set around ``incumbent``, nearest first.

    Keeps every point within ``radius_factor * poll_size * sqrt(D)``, tops up
    with nearest neighbours to ``min(min_points, len(points))`` and truncates
    to the ``n_max`` (default ``50 + 10 * D``) nearest. ``incumbent_index``
    is always part of the result.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n, dim = points.shape
    if n_max is None:
        n_max = 50 + 10 * dim
    dist = np.sqrt(((points - np.asarray(incumbent)) ** 2).sum(-1))
    order = np.argsort(dist, kind="stable")
    radius = radius_factor * poll_size * np.sqrt(dim)
    n_in = int(np.count_nonzero(dist <= radius))
    count = min(max(n_in, min(min_points, n)), n_max)
    chosen = order[:count]
    if incumbent_index is not None and incumbent_index not in chosen:
        chosen = np.append(chosen[: count - 1], incumbent_index)
    return chosen
