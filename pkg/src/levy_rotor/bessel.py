r"""Integer-order Bessel functions and the measurement transition kernel.

The whole order range :math:`J_0(x), \dots, J_N(x)` at a fixed argument is
produced in one pass of Miller's downward recurrence

.. math::
    J_{k-1}(x) = \frac{2k}{x} J_k(x) - J_{k+1}(x),

normalised with :math:`J_0^2 + 2\sum_{k\ge1} J_k^2 = 1`.  The sign is taken from
the companion sum :math:`J_0 + 2\sum_k J_{2k} = 1`.

The transition kernel between two momentum measurements separated by ``T``
kicks at principal resonance is :math:`q_l(T) = J_l(\kappa T)^2`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import CapabilityError, DomainError

__all__ = [
    "BesselEvalConfig",
    "TransitionKernel",
    "bessel_j",
    "bessel_sequence",
    "build_kernel",
    "kernel_half_width_guess",
    "kernel_moments",
    "delta_kernel",
]

DEFAULT_TAIL_TOL = 1e-10

# Rescaling threshold for the unnormalised recurrence; squares must not overflow.
_BIG = 1e100
_SMALL_X = 1e-150


@numba.njit(cache=True, nogil=True)
def _miller_start(nmax, x):
    top = max(float(nmax), x)
    return int(top + 30.0 + 12.0 * x ** (1.0 / 3.0) + math.sqrt(40.0 * max(top, 1.0)))


@numba.njit(cache=True, nogil=True)
def _bessel_sequence(x, nmax):
    out = np.zeros(nmax + 1)
    if x == 0.0:
        out[0] = 1.0
        return out
    if x < _SMALL_X:
        # leading term of the ascending series; higher orders underflow
        half = 0.5 * x
        term = 1.0
        for k in range(nmax + 1):
            out[k] = term
            term *= half / (k + 1)
            if term == 0.0:
                break
        return out

    m = _miller_start(nmax, x)
    vals = np.zeros(m + 2)
    scount = np.zeros(m + 2, dtype=np.int64)
    rescales = 0
    vals[m + 1] = 0.0
    vals[m] = 1e-200
    scount[m] = 0
    for k in range(m, 0, -1):
        prev = (2.0 * k / x) * vals[k] - vals[k + 1]
        if abs(prev) > _BIG:
            prev /= _BIG
            vals[k] /= _BIG
            vals[k + 1] /= _BIG
            rescales += 1
            scount[k] = rescales
            scount[k + 1] = rescales
        vals[k - 1] = prev
        scount[k - 1] = rescales
    for k in range(m + 1):
        d = rescales - scount[k]
        if d > 0:
            vals[k] *= 10.0 ** (-100.0 * d)
    sq = vals[0] * vals[0]
    even = vals[0]
    for k in range(1, m + 1):
        sq += 2.0 * vals[k] * vals[k]
        if k % 2 == 0:
            even += 2.0 * vals[k]
    scale = 1.0 / math.sqrt(sq)
    if even < 0.0:
        scale = -scale
    for k in range(nmax + 1):
        out[k] = vals[k] * scale
    return out


@numba.njit(cache=True, nogil=True)
def _squared_row(x, half_width, tail_tol):
    """Return ``J_n(x)**2`` for ``n = 0..L`` with ``L >= half_width`` and tail < tail_tol.

    The recurrence normalisation already spans orders well past ``L``, so the
    discarded two-sided tail is ``1 - (J_0**2 + 2*sum J_n**2)``.
    """
    L = half_width
    while True:
        seq = _bessel_sequence(x, L)
        sq = seq * seq
        total = sq[0]
        for k in range(1, L + 1):
            total += 2.0 * sq[k]
        if 1.0 - total < tail_tol:
            return sq, total
        L = 2 * L


def kernel_half_width_guess(x: float) -> int:
    """Starting half-width ``ceil(x) + max(40, ceil(12 x**(1/3)))``.

    The Bessel turning point sits near order ``x``; the cube-root term spans the
    Airy transition zone beyond it.
    """
    return int(math.ceil(x)) + max(40, int(math.ceil(12.0 * x ** (1.0 / 3.0))))


@numba.njit(cache=True, nogil=True)
def _kernel_row(x, tail_tol):
    """Normalised one-sided kernel weights ``w[0..L]`` plus the raw mass."""
    L = int(math.ceil(x)) + max(40, int(math.ceil(12.0 * x ** (1.0 / 3.0))))
    half, raw = _squared_row(x, L, tail_tol)
    total = half[0]
    for k in range(1, half.size):
        total += 2.0 * half[k]
    return half / total, raw


@dataclass(frozen=True)
class BesselEvalConfig:
    """Evaluation limits for :func:`bessel_j`."""

    max_order: int = 100_000
    rel_tolerance: float = 1e-12

    def __post_init__(self):
        if int(self.max_order) < 1:
            raise ValueError("max_order must be >= 1")
        if not 0.0 < self.rel_tolerance < 1e-6:
            raise ValueError("rel_tolerance must lie in (0, 1e-6)")


_DEFAULT_CONFIG = BesselEvalConfig()


def bessel_sequence(x: float, nmax: int) -> np.ndarray:
    """Return ``[J_0(x), ..., J_nmax(x)]`` in O(nmax + x) work."""
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"argument must be finite, got {x}")
    if x < 0.0:
        raise DomainError(f"argument must be non-negative, got {x}")
    if nmax < 0:
        raise DomainError("nmax must be non-negative")
    return _bessel_sequence(x, int(nmax))


def bessel_j(order: int, x: float, config: BesselEvalConfig | None = None) -> float:
    """Cylindrical Bessel function of the first kind, integer order.

    Negative orders use ``J_{-n}(x) = (-1)**n J_n(x)``.

    Raises
    ------
    CapabilityError
        If ``|order|`` exceeds ``config.max_order``.
    DomainError
        If ``x`` is negative or not finite.
    """
    config = config or _DEFAULT_CONFIG
    order = int(order)
    n = abs(order)
    if n > config.max_order:
        raise CapabilityError(f"order {order} exceeds max_order={config.max_order}")
    value = float(bessel_sequence(x, n)[n])
    if order < 0 and n % 2:
        value = -value
    return value


@dataclass(frozen=True)
class TransitionKernel:
    """Symmetric momentum-jump distribution for one inter-measurement interval.

    ``weights[i]`` is the probability of the jump ``l = i - half_width``.
    """

    half_width: int
    weights: np.ndarray = field(repr=False)
    kappa: float
    interval: int
    raw_mass: float = 1.0

    def __post_init__(self):
        self.weights.setflags(write=False)

    @property
    def support(self) -> np.ndarray:
        return np.arange(-self.half_width, self.half_width + 1)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.weights)


def _mirror(half: np.ndarray) -> np.ndarray:
    return np.concatenate([half[:0:-1], half])


def delta_kernel(kappa: float = 1.0, interval: int = 0) -> TransitionKernel:
    return TransitionKernel(0, np.ones(1), float(kappa), int(interval))


def build_kernel(kappa: float, T: int, tail_tol: float = DEFAULT_TAIL_TOL) -> TransitionKernel:
    """Transition kernel ``q_l(T) = J_l(kappa*T)**2``, truncated and renormalised.

    The half-width starts at :func:`kernel_half_width_guess` and doubles until the
    discarded two-sided tail is below ``tail_tol``.  ``raw_mass`` keeps the
    pre-normalisation sum.
    """
    if not (0.0 < tail_tol <= 1e-6):
        raise DomainError("tail_tol must lie in (0, 1e-6]")
    if kappa <= 0 or not math.isfinite(kappa):
        raise DomainError(f"kappa must be positive and finite, got {kappa}")
    T = int(T)
    if T < 0:
        raise DomainError("interval must be non-negative")
    if T == 0:
        return delta_kernel(kappa, 0)
    x = float(kappa) * T
    if not math.isfinite(x):
        raise DomainError("kappa*T overflows")
    half, raw = _kernel_row(x, tail_tol)
    return TransitionKernel(half.size - 1, _mirror(half), float(kappa), T, float(raw))


def kernel_moments(k: TransitionKernel) -> tuple[float, float]:
    """First and second moments of the jump distribution.

    Both are accumulated over mirrored pairs ``(l, -l)`` so that a symmetric
    kernel yields a first moment of exactly zero.
    """
    L = k.half_width
    w = k.weights
    if L == 0:
        return 0.0, 0.0
    l = np.arange(1, L + 1, dtype=float)
    pos = w[L + 1:]
    neg = w[L - 1::-1]
    m1 = float(np.sum(l * (pos - neg)))
    m2 = float(np.sum(l * l * (pos + neg)))
    return m1, m2
