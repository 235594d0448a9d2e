"""Generalized Pareto primitives and Peaks-Over-Threshold tail models.

The exceedance distribution above a threshold ``t`` is modelled as a
Generalized Pareto Distribution (GPD) with location fixed at zero on the
exceedance scale. Below the threshold, probabilities come from the empirical
CDF of the fitting sample, so a :class:`PotTailModel` yields a CDF value for
every real input.

Lower-tail models (minima) are fitted on negated samples; all stored fields
of such a model live on the negated scale, and :func:`tail_probability` /
:func:`tail_quantile` accept and return values on the original scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.optimize import minimize

from .errors import (
    DegenerateSample,
    InvalidArgument,
    InvalidProbability,
    NonConvergence,
    NonFiniteValue,
    TooFewExceedances,
)

Tail = Literal["upper", "lower"]

#: shape values closer to zero than this use the exponential branch
XI_ZERO_TOL = 1e-9
MIN_EXCEEDANCES = 10

_XI_BOUNDS = (-1.0, 5.0)
_SIGMA_BOUNDS = (1e-12, 1e12)
_XI_STARTS = (-0.5, -0.2, 0.0, 0.2, 0.5, 1.0)
_SIGMA_START_FACTORS = (0.5, 1.0, 2.0)
_SIMPLEX_TOL = 1e-10
_SIMPLEX_MAXITER = 10_000


@dataclass(frozen=True)
class GpdParams:
    """Shape ``xi``, scale ``sigma`` and location ``mu`` of a GPD."""

    xi: float
    sigma: float
    mu: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.xi, self.sigma, self.mu)):
            raise NonFiniteValue(f"GPD parameters must be finite: {self}")
        if not self.sigma > 0:
            raise InvalidArgument(f"GPD scale must be positive, got {self.sigma}")

    @property
    def upper_endpoint(self) -> float:
        """Right end of the support (``inf`` unless ``xi < 0``)."""
        if self.xi < -XI_ZERO_TOL:
            return self.mu - self.sigma / self.xi
        return math.inf


def _out(values: np.ndarray, scalar: bool):
    return float(values) if scalar else values


def gpd_cdf(params: GpdParams, z):
    """CDF of the GPD, vectorized over ``z``."""
    z_arr = np.asarray(z, dtype=np.float64)
    y = (z_arr - params.mu) / params.sigma
    xi = params.xi
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if abs(xi) < XI_ZERO_TOL:
            cdf = -np.expm1(-y)
        else:
            arg = np.log1p(xi * y)
            cdf = -np.expm1(-arg / xi)
            if xi < 0:
                cdf = np.where(xi * y <= -1.0, 1.0, cdf)
    cdf = np.where(y <= 0, 0.0, cdf)
    cdf = np.clip(cdf, 0.0, 1.0)
    return _out(cdf, z_arr.ndim == 0)


def gpd_logpdf(params: GpdParams, z):
    """Log-density of the GPD; ``-inf`` outside the support."""
    z_arr = np.asarray(z, dtype=np.float64)
    y = (z_arr - params.mu) / params.sigma
    xi = params.xi
    with np.errstate(divide="ignore", invalid="ignore"):
        if abs(xi) < XI_ZERO_TOL:
            logpdf = -math.log(params.sigma) - y
            inside = y >= 0
        else:
            inside = (y >= 0) & (1.0 + xi * y > 0)
            logpdf = -math.log(params.sigma) - (1.0 / xi + 1.0) * np.log1p(xi * y)
    logpdf = np.where(inside, logpdf, -np.inf)
    return _out(logpdf, z_arr.ndim == 0)


def gpd_quantile(params: GpdParams, p):
    """Inverse CDF of the GPD for ``0 <= p < 1``."""
    p_arr = np.asarray(p, dtype=np.float64)
    if np.any(~((p_arr >= 0) & (p_arr < 1))):
        raise InvalidProbability(f"quantile level must be in [0, 1), got {p}")
    xi = params.xi
    log_surv = np.log1p(-p_arr)
    if abs(xi) < XI_ZERO_TOL:
        q = params.mu - params.sigma * log_surv
    else:
        q = params.mu + params.sigma * np.expm1(-xi * log_surv) / xi
    return _out(q, p_arr.ndim == 0)


def gev_cdf(xi: float, mu: float, sigma: float, z):
    """CDF of the Generalized Extreme Value distribution (diagnostic only)."""
    if not sigma > 0:
        raise InvalidArgument(f"GEV scale must be positive, got {sigma}")
    z_arr = np.asarray(z, dtype=np.float64)
    y = (z_arr - mu) / sigma
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if abs(xi) < XI_ZERO_TOL:
            cdf = np.exp(-np.exp(-y))
        else:
            base = 1.0 + xi * y
            inside = base > 0
            safe = np.where(inside, base, 1.0)
            cdf = np.exp(-np.exp(-np.log(safe) / xi))
            # outside the support the CDF is 0 (xi > 0, left) or 1 (xi < 0, right)
            cdf = np.where(inside, cdf, 0.0 if xi > 0 else 1.0)
    return _out(np.clip(cdf, 0.0, 1.0), z_arr.ndim == 0)


def select_threshold(samples, q: float) -> float:
    """Nearest-rank empirical ``q``-quantile, i.e. the ``ceil(q*n)``-th order statistic.

    Raises :class:`TooFewExceedances` unless at least ten samples lie
    strictly above the returned threshold.
    """
    s = np.sort(np.asarray(samples, dtype=np.float64))
    if s.size == 0:
        raise InvalidArgument("cannot select a threshold from an empty sample")
    if not 0 < q < 1:
        raise InvalidProbability(f"threshold quantile must be in (0, 1), got {q}")
    t = float(s[_nearest_rank(q, s.size) - 1])
    n_exceed = int(np.count_nonzero(s > t))
    if n_exceed < MIN_EXCEEDANCES:
        raise TooFewExceedances(
            f"{n_exceed} samples above threshold {t!r} (need {MIN_EXCEEDANCES})"
        )
    return t


def _nearest_rank(p: float, n: int) -> int:
    # round() absorbs representation error such as 0.7 * 10 = 7.000000000000001
    return min(max(math.ceil(round(p * n, 9)), 1), n)


def _negloglik(theta: np.ndarray, x: np.ndarray, x_max: float) -> float:
    xi, log_sigma = theta
    if not (_XI_BOUNDS[0] < xi < _XI_BOUNDS[1]):
        return math.inf
    sigma = math.exp(log_sigma)
    if not (_SIGMA_BOUNDS[0] < sigma < _SIGMA_BOUNDS[1]):
        return math.inf
    n = x.size
    if abs(xi) < XI_ZERO_TOL:
        return n * log_sigma + float(np.sum(x)) / sigma
    if xi < 0 and 1.0 + xi * x_max / sigma <= 0:
        return math.inf
    return n * log_sigma + (1.0 + 1.0 / xi) * float(np.sum(np.log1p(xi * x / sigma)))


def fit_gpd_mle(exceedances) -> GpdParams:
    """Maximum-likelihood GPD fit (location fixed at 0) to positive exceedances.

    Every point of a fixed (xi, sigma) start grid is refined by Nelder-Mead
    on ``(xi, log sigma)``; the best converged refinement wins. The result
    depends only on the input values.
    """
    x = np.asarray(exceedances, dtype=np.float64).ravel()
    if x.size < MIN_EXCEEDANCES:
        raise TooFewExceedances(f"{x.size} exceedances (need {MIN_EXCEEDANCES})")
    if not np.all(np.isfinite(x)):
        raise NonFiniteValue("exceedances contain NaN or infinity")
    if np.any(x <= 0):
        raise InvalidArgument("exceedances must be strictly positive")
    if np.all(x == x[0]):
        raise DegenerateSample("all exceedances are equal")

    x_max = float(x.max())
    mean = float(x.mean())
    best_theta, best_val = None, math.inf
    for xi0 in _XI_STARTS:
        for factor in _SIGMA_START_FACTORS:
            start = np.array([xi0, math.log(factor * mean)])
            if not math.isfinite(_negloglik(start, x, x_max)):
                continue
            res = minimize(
                _negloglik,
                start,
                args=(x, x_max),
                method="Nelder-Mead",
                options={
                    "xatol": _SIMPLEX_TOL,
                    "fatol": math.inf,
                    "maxiter": _SIMPLEX_MAXITER,
                    "maxfev": 4 * _SIMPLEX_MAXITER,
                },
            )
            if not res.success:
                continue
            if res.fun < best_val:
                best_theta, best_val = res.x, float(res.fun)
    if best_theta is None:
        raise NonConvergence("simplex search failed to converge from every start")
    return GpdParams(xi=float(best_theta[0]), sigma=math.exp(float(best_theta[1])))


def gpd_loglik(params: GpdParams, x) -> float:
    """Total log-likelihood of ``x`` under ``params``."""
    return float(np.sum(gpd_logpdf(params, np.asarray(x, dtype=np.float64))))


@dataclass(frozen=True, eq=False)
class PotTailModel:
    """Peaks-over-threshold model: empirical body plus GPD tail above ``t``."""

    params: GpdParams
    t: float
    n: int
    n_exceed: int
    tail: Tail = "upper"
    empirical_sorted: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)

    def __post_init__(self):
        if self.tail not in ("upper", "lower"):
            raise InvalidArgument(f"tail must be 'upper' or 'lower', got {self.tail!r}")
        if not 0 < self.n_exceed <= self.n:
            raise InvalidArgument(f"need 0 < n_exceed <= n, got {self.n_exceed}, {self.n}")
        if not math.isfinite(self.t):
            raise NonFiniteValue("threshold must be finite")
        emp = np.array(self.empirical_sorted, dtype=np.float64)
        if emp.size != self.n:
            raise InvalidArgument("empirical_sorted must hold all n fitting samples")
        emp.setflags(write=False)
        object.__setattr__(self, "empirical_sorted", emp)

    def __eq__(self, other):
        if not isinstance(other, PotTailModel):
            return NotImplemented
        return (
            self.params == other.params
            and self.t == other.t
            and self.n == other.n
            and self.n_exceed == other.n_exceed
            and self.tail == other.tail
            and np.array_equal(self.empirical_sorted, other.empirical_sorted)
        )

    @property
    def exceed_rate(self) -> float:
        return self.n_exceed / self.n


def pot_fit(samples, q: float = 0.9, tail: Tail = "upper") -> PotTailModel:
    """Fit a POT model to the upper (or, via negation, lower) tail of ``samples``."""
    s = np.asarray(samples, dtype=np.float64).ravel()
    if not np.all(np.isfinite(s)):
        raise NonFiniteValue("samples contain NaN or infinity")
    if tail == "lower":
        s = -s
    elif tail != "upper":
        raise InvalidArgument(f"tail must be 'upper' or 'lower', got {tail!r}")
    t = select_threshold(s, q)
    exceed = s[s > t] - t
    params = fit_gpd_mle(exceed)
    return PotTailModel(
        params=params,
        t=t,
        n=int(s.size),
        n_exceed=int(exceed.size),
        tail=tail,
        empirical_sorted=np.sort(s),
    )


def tail_probability(model: PotTailModel, z):
    """Estimated CDF value of ``z`` under the model (working scale).

    For an upper-tail model this is ``P(Z <= z)``; for a lower-tail model,
    evaluated on the negated scale, it is ``P(Z >= z)``.
    """
    z_arr = np.asarray(z, dtype=np.float64)
    w = -z_arr if model.tail == "lower" else z_arr
    emp = np.searchsorted(model.empirical_sorted, w, side="right") / model.n
    with np.errstate(invalid="ignore"):
        excess = np.maximum(w - model.t, 0.0)
        par = 1.0 - model.exceed_rate * (1.0 - gpd_cdf(model.params, excess))
    prob = np.where(w <= model.t, emp, par)
    return _out(prob, z_arr.ndim == 0)


def tail_quantile(model: PotTailModel, p):
    """Inverse of :func:`tail_probability` for ``0 < p < 1``."""
    p_arr = np.asarray(p, dtype=np.float64)
    if np.any(~((p_arr > 0) & (p_arr < 1))):
        raise InvalidProbability(f"quantile level must be in (0, 1), got {p}")
    flat = p_arr.ravel()
    out = np.empty_like(flat)
    junction = 1.0 - model.exceed_rate
    for i, pi in enumerate(flat):
        if pi > junction:
            tail_level = 1.0 - model.n * (1.0 - pi) / model.n_exceed
            out[i] = model.t + gpd_quantile(model.params, tail_level)
        else:
            out[i] = model.empirical_sorted[_nearest_rank(float(pi), model.n) - 1]
    if model.tail == "lower":
        out = -out
    return _out(out.reshape(p_arr.shape), p_arr.ndim == 0)
