"""Exact Gaussian-process regression over the block-index -> minimum-price series.

A squared-exponential GP is fit to the last n minimum prices (indexed 1..n);
the posterior predictive at n+1 gives the mean and standard deviation of the
next block's minimum price, from which percentile quotes are derived.
Targets are centered and scaled before fitting so a zero-mean prior applies;
outputs are mapped back to wei.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.linalg.lapack import dpotri
from scipy.optimize import minimize

from .errors import FitError, InsufficientHistoryError, NumericalError

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)

DEFAULT_JITTER_LADDER = (1e-10, 1e-8, 1e-6)


@dataclass(frozen=True)
class GpHyperparams:
    """Kernel signal std, length scale (in block indices), and noise std."""

    sigma_f: float
    length_scale: float
    sigma_n: float

    def __post_init__(self):
        if not self.sigma_f > 0:
            raise ValueError(f"sigma_f must be positive, got {self.sigma_f}")
        if not self.length_scale > 0:
            raise ValueError(f"length_scale must be positive, got {self.length_scale}")
        if self.sigma_n < 0:
            raise ValueError(f"sigma_n must be non-negative, got {self.sigma_n}")


@dataclass(frozen=True, eq=False)
class TrainingSeries:
    """Targets in normalized model units at inputs 1..n, plus the wei mapping.

    De-normalization is value * scale + shift; it recovers the original wei
    values up to integer rounding.
    """

    targets: np.ndarray
    shift: float
    scale: float

    def __post_init__(self):
        arr = np.asarray(self.targets, dtype=float)
        if arr.ndim != 1 or arr.size < 2:
            raise ValueError("training series needs at least 2 observations")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        object.__setattr__(self, "targets", arr)

    @property
    def n(self) -> int:
        return int(self.targets.size)

    @property
    def inputs(self) -> np.ndarray:
        return np.arange(1.0, self.n + 1.0)

    @classmethod
    def from_wei(cls, y: Iterable[int], normalize: bool = True) -> "TrainingSeries":
        arr = np.asarray(list(y), dtype=float)
        if arr.size < 2:
            raise ValueError("training series needs at least 2 observations")
        if normalize:
            shift = float(arr.mean())
            scale = float(arr.std())
            if scale <= 0.0:
                scale = 1.0  # constant series: centering alone suffices
        else:
            shift, scale = 0.0, 1.0
        return cls(targets=(arr - shift) / scale, shift=shift, scale=scale)

    def to_wei(self, value: float) -> float:
        return self.shift + self.scale * value


@dataclass(frozen=True)
class FitConfig:
    """Deterministic multi-start hyperparameter search settings.

    Starts form a fixed grid in (sigma_f, length_scale, sigma_n); the best
    local optimum of the log marginal likelihood wins.  refit_every > 1 lets
    rolling backtests reuse fitted hyperparameters between windows.
    """

    length_scale_starts: tuple[float, ...] = (2.0, 10.0, 50.0)
    sigma_f_starts: tuple[float, ...] = (1.0,)
    sigma_n_starts: tuple[float, ...] = (0.1, 0.5)
    length_scale_bounds: tuple[float, float] = (0.5, 500.0)
    sigma_f_bounds: tuple[float, float] = (1e-3, 1e3)
    sigma_n_bounds: tuple[float, float] = (1e-4, 1e3)
    jitter_ladder: tuple[float, ...] = DEFAULT_JITTER_LADDER
    refit_every: int = 1
    normalize: bool = True
    max_iterations: int = 100

    def __post_init__(self):
        if self.refit_every < 1:
            raise ValueError(f"refit_every must be >= 1, got {self.refit_every}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")


@dataclass(frozen=True, eq=False)
class GpModel:
    """A fitted GP: hyperparameters plus the factorized training covariance.

    factor is lower triangular with factor @ factor.T == K + effective_noise_var * I,
    where effective_noise_var = sigma_n**2 + jitter; alpha_vector solves that
    system against the normalized targets.
    """

    hyperparams: GpHyperparams
    training: TrainingSeries
    factor: np.ndarray
    alpha_vector: np.ndarray
    jitter: float
    log_marginal_likelihood: float

    @property
    def effective_noise_var(self) -> float:
        return self.hyperparams.sigma_n ** 2 + self.jitter


@dataclass(frozen=True)
class PredictiveDistribution:
    """Gaussian posterior predictive for the next block's minimum price (wei)."""

    mean: float
    std: float

    def __post_init__(self):
        if self.std < 0:
            raise ValueError(f"std must be non-negative, got {self.std}")


def sq_exp_kernel(x: float, x2: float, hp: GpHyperparams) -> float:
    """Squared-exponential covariance sigma_f^2 * exp(-(x - x2)^2 / (2 l^2))."""
    d = x - x2
    return hp.sigma_f ** 2 * math.exp(-(d * d) / (2.0 * hp.length_scale ** 2))


def _kernel_matrix(xa: np.ndarray, xb: np.ndarray, hp: GpHyperparams) -> np.ndarray:
    d = xa[:, None] - xb[None, :]
    return hp.sigma_f ** 2 * np.exp(-(d * d) / (2.0 * hp.length_scale ** 2))


def _try_cholesky(a: np.ndarray) -> np.ndarray | None:
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return None


def build_covariance(
    training: TrainingSeries,
    hp: GpHyperparams,
    jitter_ladder: Sequence[float] = DEFAULT_JITTER_LADDER,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Kernel matrix K and the Cholesky factor of K + sigma_n^2 I.

    If plain factorization fails, jitter (relative to sigma_f^2) is added
    following the ladder; returns (K, factor, jitter_used).
    """
    K = _kernel_matrix(training.inputs, training.inputs, hp)
    eye = np.eye(training.n)
    noisy = K + hp.sigma_n ** 2 * eye
    factor = _try_cholesky(noisy)
    if factor is not None:
        return K, factor, 0.0
    for rel in jitter_ladder:
        jitter = rel * hp.sigma_f ** 2
        factor = _try_cholesky(noisy + jitter * eye)
        if factor is not None:
            log.debug("factorization needed jitter %.3e", jitter)
            return K, factor, jitter
    cond = float(np.linalg.cond(noisy))
    raise NumericalError(
        f"covariance factorization failed after jitter ladder {tuple(jitter_ladder)}; "
        f"condition estimate {cond:.3e}"
    )


def build_model(
    training: TrainingSeries,
    hp: GpHyperparams,
    jitter_ladder: Sequence[float] = DEFAULT_JITTER_LADDER,
) -> GpModel:
    """Assemble a GpModel at fixed hyperparameters (no search)."""
    _, factor, jitter = build_covariance(training, hp, jitter_ladder)
    y = training.targets
    alpha = cho_solve((factor, True), y, check_finite=False)
    lml = (
        -0.5 * float(y @ alpha)
        - float(np.sum(np.log(np.diag(factor))))
        - 0.5 * training.n * LOG_2PI
    )
    return GpModel(
        hyperparams=hp,
        training=training,
        factor=factor,
        alpha_vector=alpha,
        jitter=jitter,
        log_marginal_likelihood=lml,
    )


def log_marginal_likelihood(
    training: TrainingSeries,
    hp: GpHyperparams,
    jitter_ladder: Sequence[float] = DEFAULT_JITTER_LADDER,
) -> float:
    """-1/2 y^T (K+s^2 I)^-1 y - 1/2 log det(K+s^2 I) - n/2 log 2pi, via the factor."""
    return build_model(training, hp, jitter_ladder).log_marginal_likelihood


def _lml_value_and_grad(
    training: TrainingSeries,
    hp: GpHyperparams,
    jitter_ladder: Sequence[float],
    sq_dist: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Log marginal likelihood and its gradient w.r.t. (log sigma_f, log l, log sigma_n).

    sq_dist is the pairwise squared-distance matrix of the inputs; fit passes
    it in once instead of rebuilding it on every optimizer step.
    """
    if sq_dist is None:
        d = training.inputs[:, None] - training.inputs[None, :]
        sq_dist = d * d
    K = hp.sigma_f ** 2 * np.exp(-sq_dist / (2.0 * hp.length_scale ** 2))
    n = training.n
    eye = np.eye(n)
    noisy = K + hp.sigma_n ** 2 * eye
    factor = _try_cholesky(noisy)
    jitter = 0.0
    if factor is None:
        for rel in jitter_ladder:
            jitter = rel * hp.sigma_f ** 2
            factor = _try_cholesky(noisy + jitter * eye)
            if factor is not None:
                break
        else:
            cond = float(np.linalg.cond(noisy))
            raise NumericalError(
                f"covariance factorization failed during fit; condition estimate {cond:.3e}"
            )
    y = training.targets
    alpha = cho_solve((factor, True), y, check_finite=False)
    value = (
        -0.5 * float(y @ alpha)
        - float(np.sum(np.log(np.diag(factor))))
        - 0.5 * n * LOG_2PI
    )
    # Each gradient component is 1/2 tr(W dK/dtheta) with W = alpha alpha^T -
    # (K + noise I)^-1, but W is never formed: the alpha^T dK alpha parts
    # collapse through (K + noise I) alpha = y, and the inverse-trace parts
    # come from potri on the existing factor.  potri fills only the lower
    # triangle; that is enough because the factor's upper triangle is zero
    # and K * sq_dist has a zero diagonal, so doubling the elementwise sum
    # recovers the full symmetric trace.
    total_noise = hp.sigma_n ** 2 + jitter
    alpha_sq = float(alpha @ alpha)
    data_f = float(y @ alpha) - total_noise * alpha_sq  # alpha^T K alpha
    kinv, info = dpotri(factor, lower=1)
    if info != 0:  # the factor already passed Cholesky, so this cannot occur
        raise NumericalError(f"inversion from the Cholesky factor failed, info {info}")
    tr_kinv = float(np.trace(kinv))
    g = K * sq_dist
    data_l = float(alpha @ (g @ alpha))
    tr_kinv_g = 2.0 * float(np.sum(kinv * g))
    grad = np.array(
        [
            data_f - (n - total_noise * tr_kinv),
            0.5 * (data_l - tr_kinv_g) / hp.length_scale ** 2,
            hp.sigma_n ** 2 * (alpha_sq - tr_kinv),
        ]
    )
    return value, grad


def log_marginal_likelihood_gradient(
    training: TrainingSeries,
    hp: GpHyperparams,
    jitter_ladder: Sequence[float] = DEFAULT_JITTER_LADDER,
) -> np.ndarray:
    """Analytic gradient of the log marginal likelihood in log-parameter space."""
    return _lml_value_and_grad(training, hp, jitter_ladder)[1]


_PENALTY = 1e25


def fit(training: TrainingSeries, config: FitConfig | None = None) -> GpModel:
    """Maximize the log marginal likelihood over the fixed multi-start grid.

    Deterministic: the start grid is fixed and L-BFGS-B is run with the
    analytic gradient from each start; the best local optimum wins.
    """
    config = config or FitConfig()
    ladder = config.jitter_ladder
    d = training.inputs[:, None] - training.inputs[None, :]
    sq_dist = d * d

    def objective(theta: np.ndarray) -> tuple[float, np.ndarray]:
        hp = GpHyperparams(
            sigma_f=math.exp(theta[0]),
            length_scale=math.exp(theta[1]),
            sigma_n=math.exp(theta[2]),
        )
        try:
            value, grad = _lml_value_and_grad(training, hp, ladder, sq_dist)
        except NumericalError:
            return _PENALTY, np.zeros(3)
        return -value, -grad

    bounds = [
        (math.log(config.sigma_f_bounds[0]), math.log(config.sigma_f_bounds[1])),
        (math.log(config.length_scale_bounds[0]), math.log(config.length_scale_bounds[1])),
        (math.log(config.sigma_n_bounds[0]), math.log(config.sigma_n_bounds[1])),
    ]
    best_theta: np.ndarray | None = None
    best_value = -math.inf
    for length_scale in config.length_scale_starts:
        for sigma_f in config.sigma_f_starts:
            for sigma_n in config.sigma_n_starts:
                theta0 = np.log([sigma_f, length_scale, sigma_n])
                result = minimize(
                    objective,
                    theta0,
                    jac=True,
                    method="L-BFGS-B",
                    bounds=bounds,
                    options={"maxiter": config.max_iterations},
                )
                if not np.isfinite(result.fun) or result.fun >= _PENALTY:
                    continue
                if -result.fun > best_value:
                    best_value = -result.fun
                    best_theta = result.x
    if best_theta is None:
        raise FitError("all hyperparameter starts failed numerically")
    hp = GpHyperparams(
        sigma_f=math.exp(best_theta[0]),
        length_scale=math.exp(best_theta[1]),
        sigma_n=math.exp(best_theta[2]),
    )
    return build_model(training, hp, ladder)


def predict(model: GpModel, x_star: float) -> PredictiveDistribution:
    """Posterior predictive mean and std at x_star, de-normalized to wei."""
    hp = model.hyperparams
    k_star = _kernel_matrix(
        np.array([float(x_star)]), model.training.inputs, hp
    ).ravel()
    mean_n = float(k_star @ model.alpha_vector)
    v = solve_triangular(model.factor, k_star, lower=True, check_finite=False)
    var_n = hp.sigma_f ** 2 - float(v @ v)
    if var_n < 0.0:
        # round-off can push the variance a hair below zero
        if var_n < -1e-12 * hp.sigma_f ** 2:
            log.debug("predictive variance clamped from %.3e", var_n)
        var_n = 0.0
    training = model.training
    return PredictiveDistribution(
        mean=training.to_wei(mean_n),
        std=training.scale * math.sqrt(var_n),
    )


def predict_next(model: GpModel) -> PredictiveDistribution:
    """Predictive distribution for the block after the training window."""
    return predict(model, model.training.n + 1)


# --- inverse standard normal CDF -------------------------------------------

# Acklam's rational approximation; one Halley correction against erfc then
# tightens it to near machine precision.
_ICDF_A = (
    -3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
    1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00,
)
_ICDF_B = (
    -5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
    6.680131188771972e01, -1.328068155288572e01,
)
_ICDF_C = (
    -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
    -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00,
)
_ICDF_D = (
    7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
    3.754408661907416e00,
)
_ICDF_P_LOW = 0.02425


def inverse_normal_cdf(p: float) -> float:
    """z such that the standard normal CDF at z equals p, for p in (0, 1)."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability must be in (0, 1), got {p}")
    a, b, c, d = _ICDF_A, _ICDF_B, _ICDF_C, _ICDF_D
    if p < _ICDF_P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        )
    elif p <= 1.0 - _ICDF_P_LOW:
        q = p - 0.5
        r = q * q
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / (
            ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
        )
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        )
    err = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    u = err * math.sqrt(2.0 * math.pi) * math.exp(x * x / 2.0)
    return x - u / (1.0 + x * u / 2.0)


def percentile_price(dist: PredictiveDistribution, alpha: float) -> int:
    """The price quoted to be accepted with probability alpha%: mean + z(alpha) * std.

    Rounded up to integer wei (never down, so a boundary quote stays a success).
    """
    if not 0.0 < alpha < 100.0:
        raise ValueError(f"alpha must be in (0, 100), got {alpha}")
    z = inverse_normal_cdf(alpha / 100.0)
    price = dist.mean + z * dist.std
    return max(0, math.ceil(price))


class GpOracle:
    """Rolling-window GP oracle for backtests: fit on the last train_size
    values, quote percentile prices for the next block.

    With refit_every > 1 fitted hyperparameters are reused between windows
    (the factor and alpha are still rebuilt per window), trading a little
    accuracy for a large speedup on long backtests.
    """

    def __init__(
        self,
        train_size: int = 200,
        fit_config: FitConfig | None = None,
        name: str = "gp",
    ):
        if train_size < 2:
            raise ValueError(f"train_size must be >= 2, got {train_size}")
        self.train_size = train_size
        self.fit_config = fit_config or FitConfig()
        self.name = name
        self.min_history = train_size
        self._cached_hp: GpHyperparams | None = None
        self._quotes_since_refit = 0

    @property
    def is_stateless(self) -> bool:
        return self.fit_config.refit_every <= 1

    def reset(self) -> None:
        self._cached_hp = None
        self._quotes_since_refit = 0

    def quote_prices(
        self, history: Sequence[int], at: int, alphas: Sequence[float]
    ) -> dict[float, int]:
        if at < self.train_size:
            raise InsufficientHistoryError(
                f"gp oracle needs {self.train_size} past blocks, have {at}"
            )
        window = history[at - self.train_size : at]
        training = TrainingSeries.from_wei(window, normalize=self.fit_config.normalize)
        cfg = self.fit_config
        if cfg.refit_every <= 1:
            model = fit(training, cfg)
        elif self._cached_hp is None or self._quotes_since_refit >= cfg.refit_every:
            model = fit(training, cfg)
            self._cached_hp = model.hyperparams
            self._quotes_since_refit = 1
        else:
            model = build_model(training, self._cached_hp, cfg.jitter_ladder)
            self._quotes_since_refit += 1
        dist = predict_next(model)
        return {alpha: percentile_price(dist, alpha) for alpha in alphas}

    def observe(self, actual_y: int) -> None:
        pass
