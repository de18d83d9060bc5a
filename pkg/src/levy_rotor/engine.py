"""Ensemble engines for the measured kicked rotor.

Two routes produce the same measurement-epoch statistics:

* ``closed_form_kernel`` draws each momentum jump directly from the
  transition kernel of the elapsed interval (valid at principal resonance, or
  for the synthetic ``T**beta`` model);
* ``full_wavefunction`` evolves the state kick by kick and collapses it.

Both consume one uniform deviate per waiting time and one more per non-empty
interval, from a per-trajectory stream, so trajectories with the same stream
id see identical deviates.  A deterministic master-equation propagator and the
exact variance of a fixed schedule complete the cross-check chain.
"""
from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numba
import numpy as np

from .bessel import DEFAULT_TAIL_TOL, TransitionKernel, _kernel_row, build_kernel, delta_kernel
from .errors import ConfigError, DomainError
from .levy import FloorPolicy, LevyParams, MeasurementSchedule, stream
from .unitary import ResonanceParams, WaveFunction, evolve, measure_momentum

__all__ = [
    "Engine",
    "RecordMode",
    "KernelModel",
    "EnsembleConfig",
    "MomentumDistribution",
    "TrajectorySamples",
    "EnsembleSamples",
    "VarianceSeries",
    "log_sample_times",
    "synthetic_kernel",
    "kernel_for",
    "run_trajectory",
    "simulate_ensemble",
    "run_ensemble",
    "run_schedule_ensemble",
    "propagate_master",
    "schedule_variance",
    "resolve_threads",
]

# Trailing probabilities below this are dropped after each master step.
MASTER_TRIM = 1e-40
# Upper bound on cached kernel CDF entries (8 bytes each).
_TABLE_BUDGET = 4_000_000
_POLICY_CODE = {
    FloorPolicy.FLOOR_ALLOW_ZERO: 0,
    FloorPolicy.FLOOR_MIN_ONE: 1,
    FloorPolicy.CEIL: 2,
}


class Engine(str, enum.Enum):
    CLOSED_FORM_KERNEL = "closed_form_kernel"
    FULL_WAVEFUNCTION = "full_wavefunction"


class RecordMode(str, enum.Enum):
    COLLAPSED = "collapsed"
    # full engine only: report the evolving state's moments between measurements
    UNITARY = "unitary"


@dataclass(frozen=True)
class KernelModel:
    kind: str = "bessel"
    beta: float | None = None

    def __post_init__(self):
        if self.kind not in ("bessel", "synthetic_beta"):
            raise ConfigError(f"unknown kernel model {self.kind!r}")
        if self.kind == "synthetic_beta":
            if self.beta is None or not (0.0 < self.beta <= 2.0):
                raise ConfigError("synthetic_beta requires beta in (0, 2]")
            object.__setattr__(self, "beta", float(self.beta))
        elif self.beta is not None:
            raise ConfigError("beta only applies to the synthetic_beta model")

    @property
    def synthetic(self) -> bool:
        return self.kind == "synthetic_beta"

    @property
    def variance_exponent(self) -> float:
        return 2.0 if not self.synthetic else self.beta


def log_sample_times(horizon: int, per_decade: int = 20) -> np.ndarray:
    """Distinct integers ``round(10**(k/per_decade))`` in ``[1, horizon]``, horizon included."""
    horizon = int(horizon)
    if horizon < 1:
        raise DomainError("horizon must be positive")
    kmax = int(math.floor(per_decade * math.log10(horizon) + 1e-9))
    times = np.rint(10.0 ** (np.arange(kmax + 1) / per_decade)).astype(np.int64)
    times = np.unique(np.append(times[times <= horizon], horizon))
    return times


@dataclass(frozen=True)
class EnsembleConfig:
    n_trajectories: int
    horizon: int
    levy: LevyParams
    resonance: ResonanceParams = field(default_factory=ResonanceParams)
    master_seed: int = 0
    sample_times: tuple[int, ...] | None = None
    engine: Engine = Engine.CLOSED_FORM_KERNEL
    kernel_model: KernelModel = field(default_factory=KernelModel)
    record_mode: RecordMode = RecordMode.COLLAPSED
    tail_tol: float = DEFAULT_TAIL_TOL

    def __post_init__(self):
        object.__setattr__(self, "engine", Engine(self.engine))
        object.__setattr__(self, "record_mode", RecordMode(self.record_mode))
        if int(self.n_trajectories) < 2:
            raise ConfigError("n_trajectories must be >= 2")
        if int(self.horizon) < 1:
            raise ConfigError("horizon must be positive")
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")
        times = self.sample_times
        if times is None:
            times = tuple(int(t) for t in log_sample_times(self.horizon))
        times = tuple(int(t) for t in times)
        if not times or any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("sample_times must be strictly increasing and non-empty")
        if times[0] < 1 or times[-1] > self.horizon:
            raise ConfigError("sample_times must lie in [1, horizon]")
        object.__setattr__(self, "sample_times", times)
        if self.engine is Engine.CLOSED_FORM_KERNEL:
            if not (self.kernel_model.synthetic or self.resonance.principal):
                raise ConfigError(
                    "closed_form_kernel requires principal resonance or the synthetic kernel")
            if self.record_mode is not RecordMode.COLLAPSED:
                raise ConfigError("unitary recording needs the full_wavefunction engine")
        elif self.kernel_model.synthetic:
            raise ConfigError("the synthetic kernel has no wave-function realisation")

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self.sample_times, dtype=np.int64)


@dataclass
class MomentumDistribution:
    """Probabilities ``P_l`` on ``l = offset, offset+1, ...``."""

    offset: int
    probabilities: np.ndarray

    @classmethod
    def delta(cls, momentum: int = 0) -> "MomentumDistribution":
        return cls(int(momentum), np.ones(1))

    @property
    def momenta(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + self.probabilities.size)

    def mean(self) -> float:
        return float(self.probabilities @ self.momenta.astype(float))

    def variance(self) -> float:
        l = self.momenta.astype(float)
        m1 = self.probabilities @ l
        # centre before squaring to avoid cancellation
        d = l - m1
        return float(self.probabilities @ (d * d))


@dataclass
class TrajectorySamples:
    """Per-sample-time first and second momentum moments of one trajectory.

    In collapsed mode ``first`` is the momentum itself and ``second`` its square.
    """

    first: np.ndarray
    second: np.ndarray
    n_measurements: int = 0


@dataclass(frozen=True)
class VarianceSeries:
    times: np.ndarray
    variance: np.ndarray
    stderr: np.ndarray
    n_effective: int

    def __post_init__(self):
        n = len(self.times)
        if len(self.variance) != n or len(self.stderr) != n:
            raise ValueError("series columns must have equal length")


@dataclass
class EnsembleSamples:
    """Raw per-trajectory moments, rows ordered by stream id."""

    times: np.ndarray
    first: np.ndarray
    second: np.ndarray

    @property
    def n_trajectories(self) -> int:
        return self.first.shape[0]

    def subset(self, rows: np.ndarray) -> "EnsembleSamples":
        return EnsembleSamples(self.times, self.first[rows], self.second[rows])

    def variance(self) -> np.ndarray:
        m1 = self.first.mean(axis=0)
        return self.second.mean(axis=0) - m1 * m1

    def series(self) -> VarianceSeries:
        """Ensemble variance with leave-one-out jackknife standard errors."""
        n = self.n_trajectories
        var = self.variance()
        s1 = self.first.sum(axis=0)
        s2 = self.second.sum(axis=0)
        loo1 = (s1 - self.first) / (n - 1)
        loo2 = (s2 - self.second) / (n - 1)
        theta = loo2 - loo1 * loo1
        centred = theta - theta.mean(axis=0)
        stderr = np.sqrt((n - 1) / n * np.sum(centred * centred, axis=0))
        return VarianceSeries(self.times.copy(), np.maximum(var, 0.0), stderr, n)


def synthetic_kernel(beta: float, T: int) -> TransitionKernel:
    """Three-point jump law with mean 0 and variance ``T**beta``.

    Mass ``p/2`` at ``+-k`` and ``1-p`` at 0 with ``k = ceil(T**(beta/2))`` and
    ``p = T**beta / k**2`` (clamped to 1 against rounding).
    """
    if not (0.0 < beta <= 2.0):
        raise DomainError("beta must lie in (0, 2]")
    T = int(T)
    if T < 0:
        raise DomainError("T must be non-negative")
    if T == 0:
        return delta_kernel(1.0, 0)
    k, p = _synthetic_params(float(beta), T)
    w = np.zeros(2 * k + 1)
    w[0] = w[-1] = 0.5 * p
    w[k] = 1.0 - p
    return TransitionKernel(k, w, 1.0, T)


@numba.njit(cache=True, nogil=True)
def _synthetic_params(beta, T):
    target = float(T) ** beta
    k = int(math.ceil(float(T) ** (0.5 * beta) * (1.0 - 1e-14)))
    p = min(target / (k * k), 1.0)
    return k, p


@lru_cache(maxsize=4096)
def _cached_kernel(kind: str, param: float, T: int, tail_tol: float) -> TransitionKernel:
    if kind == "bessel":
        return build_kernel(param, T, tail_tol)
    return synthetic_kernel(param, T)


def kernel_for(model: KernelModel, kappa: float, T: int,
               tail_tol: float = DEFAULT_TAIL_TOL) -> TransitionKernel:
    if model.synthetic:
        return _cached_kernel("synthetic", model.beta, int(T), tail_tol)
    return _cached_kernel("bessel", float(kappa), int(T), tail_tol)


# --------------------------------------------------------------------------
# closed-form kernel engine


@lru_cache(maxsize=4)
def _bessel_cdf_table(kappa: float, tail_tol: float):
    """Concatenated ascending CDF rows of ``build_kernel(kappa, T)`` for small T."""
    rows, starts, halves = [np.zeros(0)], [0, 0], [0]
    used = 0
    T = 1
    while True:
        k = build_kernel(kappa, T, tail_tol)
        if used + k.weights.size > _TABLE_BUDGET and T > 1:
            break
        rows.append(np.cumsum(k.weights))
        used += k.weights.size
        starts.append(used)
        halves.append(k.half_width)
        T += 1
    flat = np.concatenate(rows)
    return flat, np.asarray(starts, dtype=np.int64), np.asarray(halves, dtype=np.int64), T - 1


@numba.njit(cache=True, nogil=True)
def _draw_interval(rng, alpha, policy, remaining):
    u = rng.random()
    c = alpha / (1.0 + alpha)
    if u < c:
        t = u / c
    else:
        t = ((1.0 + alpha) * (1.0 - u)) ** (-1.0 / alpha)
    # anything past the horizon is never observed; cap before integer conversion
    if t > remaining + 2.0:
        t = remaining + 2.0
    if policy == 2:
        T = int(math.ceil(t))
    else:
        T = int(math.floor(t))
        if policy == 1 and T < 1:
            T = 1
    return T


@numba.njit(cache=True, nogil=True)
def _search_right(cdf, lo, hi, target):
    # first index in [lo, hi) with cdf[idx] > target; hi - 1 if none
    a, b = lo, hi
    while a < b:
        mid = (a + b) // 2
        if cdf[mid] > target:
            b = mid
        else:
            a = mid + 1
    if a >= hi:
        a = hi - 1
    return a


@numba.njit(cache=True, nogil=True)
def _bessel_jump(T, v, kappa, flat, starts, halves, tmax, tail_tol):
    if T <= tmax:
        lo = starts[T]
        hi = starts[T + 1]
        total = flat[hi - 1]
        idx = _search_right(flat, lo, hi, v * total)
        return idx - lo - halves[T]
    half, raw = _kernel_row(kappa * T, tail_tol)
    L = half.size - 1
    total = half[0]
    for k in range(1, L + 1):
        total += 2.0 * half[k]
    target = v * total
    cum = 0.0
    for l in range(-L, L + 1):
        cum += half[abs(l)]
        if cum > target:
            return l
    return L


@numba.njit(cache=True, nogil=True)
def _synthetic_jump(T, v, beta):
    k, p = _synthetic_params(beta, T)
    if v < 0.5 * p:
        return -k
    if v < 1.0 - 0.5 * p:
        return 0
    return k


@numba.njit(cache=True, nogil=True)
def _kernel_walk(rng, alpha, policy, horizon, times, synthetic, kappa, beta,
                 flat, starts, halves, tmax, tail_tol, out):
    clock = 0
    l = 0
    si = 0
    ns = times.size
    count = 0
    while clock < horizon:
        T = _draw_interval(rng, alpha, policy, horizon - clock)
        new_clock = clock + T
        while si < ns and times[si] < new_clock:
            out[si] = l
            si += 1
        clock = new_clock
        count += 1
        if clock > horizon:
            break
        if T > 0:
            v = rng.random()
            if synthetic:
                l += _synthetic_jump(T, v, beta)
            else:
                l += _bessel_jump(T, v, kappa, flat, starts, halves, tmax, tail_tol)
    while si < ns:
        out[si] = l
        si += 1
    return count


_EMPTY_TABLE = (np.zeros(1), np.zeros(2, dtype=np.int64), np.zeros(1, dtype=np.int64), 0)


def _kernel_trajectory(cfg: EnsembleConfig, stream_id: int) -> TrajectorySamples:
    model = cfg.kernel_model
    if model.synthetic:
        flat, starts, halves, tmax = _EMPTY_TABLE
        beta = model.beta
    else:
        flat, starts, halves, tmax = _bessel_cdf_table(cfg.resonance.kappa, cfg.tail_tol)
        beta = 0.0
    out = np.zeros(len(cfg.sample_times), dtype=np.int64)
    count = _kernel_walk(
        stream(cfg.master_seed, stream_id), cfg.levy.alpha, _POLICY_CODE[cfg.levy.floor_policy],
        cfg.horizon, cfg.times, model.synthetic, cfg.resonance.kappa, beta,
        flat, starts, halves, tmax, cfg.tail_tol, out,
    )
    first = out.astype(float)
    return TrajectorySamples(first, first * first, int(count))


# --------------------------------------------------------------------------
# full wave-function engine


def _draw_interval_py(rng, levy: LevyParams, remaining: int) -> int:
    return _draw_interval(rng, levy.alpha, _POLICY_CODE[levy.floor_policy], remaining)


def _wavefunction_trajectory(cfg: EnsembleConfig, stream_id: int) -> TrajectorySamples:
    rng = stream(cfg.master_seed, stream_id)
    params = cfg.resonance
    times = cfg.sample_times
    unitary = cfg.record_mode is RecordMode.UNITARY
    ns = len(times)
    first = np.zeros(ns)
    second = np.zeros(ns)
    clock = 0
    l = 0
    si = 0
    count = 0
    while clock < cfg.horizon:
        T = _draw_interval_py(rng, cfg.levy, cfg.horizon - clock)
        new_clock = clock + T
        psi = WaveFunction.eigenstate(l)
        elapsed = 0
        while si < ns and times[si] < new_clock:
            s = times[si]
            if unitary and s > clock:
                psi = evolve(psi, params, s - clock - elapsed)
                elapsed = s - clock
                first[si], second[si] = psi.moments()
            else:
                first[si], second[si] = l, float(l) * l
            si += 1
        clock = new_clock
        count += 1
        if clock > cfg.horizon:
            break
        if T > 0:
            psi = evolve(psi, params, T - elapsed)
            outcome, _ = measure_momentum(psi, rng.random())
            l = outcome.momentum
    while si < ns:
        first[si], second[si] = l, float(l) * l
        si += 1
    return TrajectorySamples(first, second, count)


def run_trajectory(cfg: EnsembleConfig, stream_id: int) -> TrajectorySamples:
    """Simulate one trajectory from ``l = 0`` and sample it at ``cfg.sample_times``.

    The momentum recorded at time ``s`` is the outcome of the last measurement
    at or before ``s``.  The interval that carries the clock past the horizon
    is drawn but never evolved, since no sample time observes its end.
    """
    if cfg.engine is Engine.CLOSED_FORM_KERNEL:
        return _kernel_trajectory(cfg, stream_id)
    return _wavefunction_trajectory(cfg, stream_id)


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get("LEVY_ROTOR_THREADS")
        threads = int(env) if env else 1
    if threads < 1:
        raise ConfigError("thread count must be >= 1")
    return int(threads)


def simulate_ensemble(cfg: EnsembleConfig, threads: int | None = None,
                      progress=None) -> EnsembleSamples:
    """Run all trajectories; rows are ordered by stream id whatever the thread count."""
    threads = resolve_threads(threads)
    n = int(cfg.n_trajectories)
    ns = len(cfg.sample_times)
    first = np.zeros((n, ns))
    second = np.zeros((n, ns))

    def work(i):
        rec = run_trajectory(cfg, i)
        first[i] = rec.first
        second[i] = rec.second
        if progress is not None:
            progress(i)

    if cfg.engine is Engine.CLOSED_FORM_KERNEL and not cfg.kernel_model.synthetic:
        _bessel_cdf_table(cfg.resonance.kappa, cfg.tail_tol)
    if threads == 1:
        for i in range(n):
            work(i)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(n)))
    return EnsembleSamples(cfg.times, first, second)


def run_ensemble(cfg: EnsembleConfig, threads: int | None = None) -> VarianceSeries:
    return simulate_ensemble(cfg, threads).series()


def run_schedule_ensemble(schedule: MeasurementSchedule, kappa: float, n_trajectories: int,
                          master_seed: int = 0, model: KernelModel | None = None,
                          tail_tol: float = DEFAULT_TAIL_TOL) -> np.ndarray:
    """Final momenta of ``n_trajectories`` walks that all share one fixed schedule."""
    model = model or KernelModel()
    finals = np.zeros(int(n_trajectories), dtype=np.int64)
    nonzero = [int(T) for T in schedule.intervals if T > 0]
    for i in range(finals.size):
        rng = stream(master_seed, i)
        v = rng.random(len(nonzero))
        l = 0
        for T, u in zip(nonzero, v):
            k = kernel_for(model, kappa, T, tail_tol)
            cdf = np.cumsum(k.weights)
            idx = min(int(np.searchsorted(cdf, u * cdf[-1], side="right")), cdf.size - 1)
            l += idx - k.half_width
        finals[i] = l
    return finals


# --------------------------------------------------------------------------
# master equation


def _trim(P: MomentumDistribution, tol: float) -> MomentumDistribution:
    p = P.probabilities
    keep = np.flatnonzero(p > tol)
    if keep.size == 0:
        return P
    lo, hi = keep[0], keep[-1] + 1
    p = p[lo:hi]
    return MomentumDistribution(P.offset + int(lo), p / p.sum())


def propagate_master(P: MomentumDistribution, schedule: MeasurementSchedule, kappa: float,
                     times=None, model: KernelModel | None = None,
                     tail_tol: float = DEFAULT_TAIL_TOL,
                     trim: float = MASTER_TRIM) -> list[MomentumDistribution]:
    """Convolve ``P`` with the kernel of every interval of ``schedule``.

    Returns the distribution at each requested time (default: the end of the
    schedule); a snapshot at ``s`` reflects all measurements at or before ``s``.
    Trailing probabilities below ``trim`` are discarded and the distribution is
    renormalised after every step.
    """
    model = model or KernelModel()
    if times is None:
        times = [schedule.realized_time]
    times = [int(s) for s in times]
    if any(b < a for a, b in zip(times, times[1:])):
        raise DomainError("snapshot times must be non-decreasing")
    out: list[MomentumDistribution] = []
    cur = MomentumDistribution(P.offset, np.asarray(P.probabilities, dtype=float).copy())
    clock = 0
    si = 0
    for T in schedule.intervals:
        T = int(T)
        new_clock = clock + T
        while si < len(times) and times[si] < new_clock:
            out.append(cur)
            si += 1
        clock = new_clock
        if T == 0:
            continue
        k = kernel_for(model, kappa, T, tail_tol)
        p = np.convolve(cur.probabilities, k.weights)
        np.clip(p, 0.0, None, out=p)
        cur = _trim(MomentumDistribution(cur.offset - k.half_width, p), trim)
    while si < len(times):
        out.append(cur)
        si += 1
    return out


def schedule_variance(schedule: MeasurementSchedule, kappa: float,
                      model: KernelModel | None = None) -> float:
    """Exact variance after a fixed schedule: the sum of per-interval kernel variances."""
    model = model or KernelModel()
    T = schedule.intervals
    if model.synthetic:
        return math.fsum(float(t) ** model.beta for t in T if t > 0)
    squares = int(np.sum(T.astype(object) ** 2)) if T.size else 0
    return 0.5 * kappa * kappa * squares
