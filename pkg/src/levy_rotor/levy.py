r"""Piecewise power-law waiting times between measurements.

Density (``0 < alpha <= 2``)::

    rho(t) = alpha/(1+alpha)              0 <= t < 1
    rho(t) = alpha/(1+alpha) * t**-(1+alpha)   t >= 1

Integer waiting times are obtained by rounding a continuous draw according to
a :class:`FloorPolicy`; the default keeps zero-length intervals.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

__all__ = [
    "FloorPolicy",
    "LevyParams",
    "MeasurementSchedule",
    "density",
    "cdf",
    "inverse_cdf",
    "sample_interval",
    "sample_intervals",
    "sample_schedule",
    "censored_moment",
    "floored_censored_moment",
    "stream",
]


class FloorPolicy(str, enum.Enum):
    FLOOR_ALLOW_ZERO = "floor_allow_zero"
    FLOOR_MIN_ONE = "floor_min_one"
    CEIL = "ceil"


@dataclass(frozen=True)
class LevyParams:
    alpha: float
    floor_policy: FloorPolicy = FloorPolicy.FLOOR_ALLOW_ZERO

    def __post_init__(self):
        if not (0.0 < self.alpha <= 2.0):
            raise DomainError(f"alpha must lie in (0, 2], got {self.alpha}")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "floor_policy", FloorPolicy(self.floor_policy))

    @property
    def breakpoint_mass(self) -> float:
        """``CDF(1) = alpha / (1 + alpha)``."""
        return self.alpha / (1.0 + self.alpha)


@dataclass
class MeasurementSchedule:
    """Realised integer waiting times, run until the clock reaches ``horizon``."""

    intervals: np.ndarray
    horizon: int
    realized_time: int = field(init=False)

    def __post_init__(self):
        self.intervals = np.asarray(self.intervals, dtype=np.int64)
        if np.any(self.intervals < 0):
            raise DomainError("intervals must be non-negative")
        self.realized_time = int(self.intervals.sum())

    @property
    def epochs(self) -> np.ndarray:
        """Measurement times ``T_1, T_1+T_2, ...``."""
        return np.cumsum(self.intervals)

    def __len__(self):
        return self.intervals.size


def stream(master_seed: int, stream_id: int) -> np.random.Generator:
    """Independent PCG64 stream ``stream_id`` derived from ``master_seed``.

    The split hashes the pair through :class:`numpy.random.SeedSequence`, so
    streams do not depend on how many others exist or on execution order.
    """
    seq = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(stream_id)])
    return np.random.Generator(np.random.PCG64(seq))


def density(params: LevyParams, t: float | np.ndarray):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("density is defined for t >= 0")
    a = params.alpha
    c = a / (1.0 + a)
    with np.errstate(divide="ignore"):
        out = np.where(t < 1.0, c, c * np.maximum(t, 1.0) ** (-(a + 1.0)))
    return float(out) if out.ndim == 0 else out


def cdf(params: LevyParams, t: float | np.ndarray):
    t = np.asarray(t, dtype=float)
    a = params.alpha
    c = a / (1.0 + a)
    out = np.where(
        t < 1.0,
        c * np.clip(t, 0.0, None),
        1.0 - np.maximum(t, 1.0) ** (-a) / (1.0 + a),
    )
    return float(out) if out.ndim == 0 else out


def inverse_cdf(params: LevyParams, u: float | np.ndarray):
    """Exact inverse of :func:`cdf` on ``[0, 1)``; continuous at ``t = 1``."""
    u = np.asarray(u, dtype=float)
    if np.any((u < 0.0) | (u >= 1.0)):
        raise DomainError("uniform deviate must lie in [0, 1)")
    a = params.alpha
    c = a / (1.0 + a)
    with np.errstate(divide="ignore"):
        tail = ((1.0 + a) * (1.0 - u)) ** (-1.0 / a)
    out = np.where(u < c, u / c, tail)
    return float(out) if out.ndim == 0 else out


# Waiting times are clipped here before integer conversion (int64 headroom).
_T_MAX = float(2 ** 62)


def _round(params: LevyParams, t: np.ndarray) -> np.ndarray:
    t = np.minimum(t, _T_MAX)
    policy = params.floor_policy
    if policy is FloorPolicy.CEIL:
        r = np.ceil(t)
    else:
        r = np.floor(t)
        if policy is FloorPolicy.FLOOR_MIN_ONE:
            r = np.maximum(r, 1.0)
    return r.astype(np.int64)


def sample_interval(params: LevyParams, u: float) -> int:
    return int(_round(params, np.asarray(inverse_cdf(params, u)))[()])


def sample_intervals(params: LevyParams, u: np.ndarray) -> np.ndarray:
    return _round(params, np.asarray(inverse_cdf(params, u)))


def sample_schedule(params: LevyParams, horizon: int, rng: np.random.Generator,
                    max_intervals: int | None = None) -> MeasurementSchedule:
    """Draw intervals until their sum reaches ``horizon``.

    The last interval is kept whole even if it overshoots.  ``max_intervals``
    stops early and yields a schedule shorter than ``horizon``.
    """
    horizon = int(horizon)
    if horizon < 1:
        raise DomainError("horizon must be positive")
    chunks = []
    clock = 0
    count = 0
    block = 1024
    while clock < horizon and (max_intervals is None or count < max_intervals):
        n = block if max_intervals is None else min(block, max_intervals - count)
        T = sample_intervals(params, rng.random(n))
        csum = clock + np.cumsum(T)
        hit = np.flatnonzero(csum >= horizon)
        if hit.size:
            T = T[: hit[0] + 1]
        chunks.append(T)
        clock += int(T.sum())
        count += T.size
        block = min(block * 2, 1 << 20)
    intervals = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int64)
    return MeasurementSchedule(intervals, horizon)


def censored_moment(params: LevyParams, beta: float, horizon: float) -> float:
    """Unnormalised truncated moment ``int_0^t s**beta rho(s) ds``.

    ``alpha == beta`` uses the logarithmic closed form directly.
    """
    t = float(horizon)
    if t < 1.0:
        raise DomainError("horizon must be >= 1")
    if beta <= 0:
        raise DomainError("beta must be positive")
    a = params.alpha
    pre = a / (a + 1.0)
    head = 1.0 / (beta + 1.0)
    d = beta - a
    if d == 0.0:
        return pre * (head + math.log(t))
    return pre * (head + math.expm1(d * math.log(t)) / d)


def floored_censored_moment(params: LevyParams, beta: float, horizon: int) -> float:
    """Exact ``E[floor(t)**beta ; t < horizon]`` for integer ``horizon``.

    Companion to :func:`censored_moment` for the integer waiting times actually
    used by the simulation; the two differ by a finite-time flooring bias.
    """
    h = int(horizon)
    if h < 1:
        raise DomainError("horizon must be >= 1")
    k = np.arange(1, h, dtype=float)
    mass = cdf(params, k + 1.0) - cdf(params, k)
    return float(np.sum(k ** beta * mass))
