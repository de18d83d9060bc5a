"""Asymptotic exponent law, predicted variance curve and power-law fits."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .engine import EnsembleSamples, VarianceSeries
from .errors import DomainError, NumericalError
from .levy import LevyParams, censored_moment

__all__ = [
    "Regime",
    "ExponentPrediction",
    "PowerLawFit",
    "theoretical_exponent",
    "predicted_variance",
    "log_log_slope",
    "fit_power_law",
    "bootstrap_slope",
    "default_t_min",
]

MIN_FIT_POINTS = 8
_EQ = 1e-12


class Regime(str, enum.Enum):
    BALLISTIC = "ballistic"
    SUB_BALLISTIC = "sub_ballistic"
    DIFFUSIVE = "diffusive"
    SUB_DIFFUSIVE = "sub_diffusive"


def _regime(c: float) -> Regime:
    if abs(c - 1.0) < _EQ:
        return Regime.BALLISTIC
    if abs(c - 0.5) < _EQ:
        return Regime.DIFFUSIVE
    return Regime.SUB_BALLISTIC if c > 0.5 else Regime.SUB_DIFFUSIVE


@dataclass(frozen=True)
class ExponentPrediction:
    alpha: float
    beta: float
    c: float
    regime: Regime

    @property
    def slope(self) -> float:
        """Log-log slope of the variance, ``2c``."""
        return 2.0 * self.c


def theoretical_exponent(alpha: float, beta: float = 2.0) -> ExponentPrediction:
    """Large-time exponent ``c`` in ``<sigma^2(t)> ~ t**(2c)``.

    ``beta`` is the growth exponent of the per-interval variance; ``beta = 2``
    is the resonant kicked rotor, where ``c = 1`` for ``alpha <= 1`` and
    ``c = (3 - alpha)/2`` above.
    """
    if not (0.0 < alpha <= 2.0):
        raise DomainError(f"alpha must lie in (0, 2], got {alpha}")
    if not (0.0 < beta <= 2.0):
        raise DomainError(f"beta must lie in (0, 2], got {beta}")
    if alpha <= beta:
        c = beta / 2.0 if alpha <= 1.0 else (beta - alpha + 1.0) / 2.0
    else:
        c = alpha / 2.0 if alpha <= 1.0 else 0.5
    return ExponentPrediction(float(alpha), float(beta), c, _regime(c))


def predicted_variance(alpha: float, kappa: float, t: float, beta: float | None = None) -> float:
    """Averaged variance ``(kappa**2/2) t <T**2>/<T>`` from the censored moments.

    With ``beta`` given, the per-interval variance is ``T**beta`` (the synthetic
    kernel) and the result is ``t <T**beta>/<T>``; ``kappa`` is then unused.
    """
    if t < 1:
        raise DomainError("t must be >= 1")
    params = LevyParams(alpha)
    first = censored_moment(params, 1.0, t)
    if beta is None:
        return 0.5 * kappa * kappa * t * censored_moment(params, 2.0, t) / first
    return t * censored_moment(params, beta, t) / first


def log_log_slope(f, t: float, rel_step: float = 1e-3) -> float:
    """Central-difference ``d ln f / d ln t`` at ``t``."""
    h = rel_step
    return (math.log(f(t * math.exp(h))) - math.log(f(t * math.exp(-h)))) / (2.0 * h)


def default_t_min(horizon: int) -> int:
    return max(1, int(round(math.sqrt(horizon))))


@dataclass(frozen=True)
class PowerLawFit:
    slope: float
    intercept: float
    r_squared: float
    fit_window: tuple[int, int]
    residual_max: float
    slope_stderr: float
    n_points: int

    @property
    def prefactor(self) -> float:
        return math.exp(self.intercept)


def _ols(x: np.ndarray, y: np.ndarray):
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    sxx = float(dx @ dx)
    slope = float(dx @ (y - ym)) / sxx
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    ss_res = float(resid @ resid)
    dy = y - ym
    ss_tot = float(dy @ dy)
    return slope, intercept, resid, ss_res, ss_tot, sxx


def fit_power_law(series: VarianceSeries | tuple, t_min: float, t_max: float | None = None
                  ) -> PowerLawFit:
    """Least-squares line through ``(ln t, ln variance)`` for ``t_min <= t <= t_max``.

    ``series`` may also be a ``(times, values)`` pair.
    """
    if isinstance(series, VarianceSeries):
        times, values = series.times, series.variance
    else:
        times, values = series
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = times >= t_min
    if t_max is not None:
        mask &= times <= t_max
    if mask.sum() < MIN_FIT_POINTS:
        raise NumericalError(
            f"need at least {MIN_FIT_POINTS} points in the fit window, got {int(mask.sum())}")
    t, v = times[mask], values[mask]
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise NumericalError("variance must be positive and finite inside the fit window")
    x, y = np.log(t), np.log(v)
    slope, intercept, resid, ss_res, ss_tot, sxx = _ols(x, y)
    n = x.size
    # a flat series is fitted perfectly; its ss_tot is pure rounding noise
    flat = ss_tot <= n * (1e-14 * max(1.0, abs(float(y.mean())))) ** 2
    r2 = 1.0 if flat else min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    se = math.sqrt(ss_res / (n - 2) / sxx) if n > 2 else float("nan")
    return PowerLawFit(slope, intercept, r2, (int(t[0]), int(t[-1])),
                       float(np.max(np.abs(resid))), se, n)


def bootstrap_slope(samples: EnsembleSamples, t_min: float, t_max: float | None = None,
                    n_boot: int = 200, seed: int = 0, level: float = 0.95):
    """Percentile band of the fitted slope under resampling of whole trajectories.

    Returns ``(low, high, slopes)``.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xB007]))
    n = samples.n_trajectories
    times = samples.times
    slopes = np.empty(n_boot)
    for b in range(n_boot):
        rows = rng.integers(0, n, size=n)
        var = samples.subset(rows).variance()
        try:
            slopes[b] = fit_power_law((times, var), t_min, t_max).slope
        except NumericalError:
            slopes[b] = np.nan
    good = slopes[np.isfinite(slopes)]
    if good.size == 0:
        raise NumericalError("no bootstrap replicate produced a valid fit")
    q = (1.0 - level) / 2.0
    lo, hi = np.quantile(good, [q, 1.0 - q])
    return float(lo), float(hi), slopes
