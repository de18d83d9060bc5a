"""Truncated-lattice evolution of the kicked rotor at quantum resonance.

One kick maps amplitudes as

    a'_l = sum_j i**(-(j - l)) * exp(-i j**2 tau) * J_{j-l}(kappa) * a_j

with ``tau = 2*pi*p/q``.  The kinetic phase only depends on ``p*j**2 mod q``,
which is evaluated in integer arithmetic and looked up in a table of ``q``
roots of unity.  A projective momentum measurement collapses the state onto a
single momentum eigenstate chosen by inverse-CDF sampling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import signal

from .bessel import bessel_sequence
from .errors import DomainError, LatticeGrowthRequired

__all__ = [
    "ResonanceParams",
    "WaveFunction",
    "MeasurementOutcome",
    "apply_kick",
    "evolve",
    "measure_momentum",
    "kick_coefficients",
]

NORM_TOL = 1e-9
BOUNDARY_SITES = 5
BOUNDARY_TOL = 1e-12
# Kick coefficients below this magnitude are dropped; keeps unitarity to ~1e-16 per kick.
_COEFF_CUTOFF = 1e-18
_DIRECT_MAX = 128
# Sites below this probability count as empty when measuring headroom.
_OCCUPIED = 1e-30


@dataclass(frozen=True)
class ResonanceParams:
    """Resonance ``tau = 2*pi*p/q`` and kick strength ``kappa``.

    ``p/q`` is reduced on construction; ``tau`` is always derived.
    """

    p: int = 1
    q: int = 1
    kappa: float = 1.0

    def __post_init__(self):
        p, q = int(self.p), int(self.q)
        if p < 1 or q < 1:
            raise DomainError("p and q must be positive integers")
        if not (self.kappa > 0 and math.isfinite(self.kappa)):
            raise DomainError("kappa must be positive and finite")
        g = math.gcd(p, q)
        object.__setattr__(self, "p", p // g)
        object.__setattr__(self, "q", q // g)
        object.__setattr__(self, "kappa", float(self.kappa))

    @property
    def tau(self) -> float:
        return 2.0 * math.pi * self.p / self.q

    @property
    def principal(self) -> bool:
        return self.q == 1


@dataclass
class WaveFunction:
    """Amplitudes on the momentum window ``offset, offset+1, ...``."""

    offset: int
    amplitudes: np.ndarray
    norm_tol: float = NORM_TOL

    @classmethod
    def eigenstate(cls, momentum: int = 0, pad: int = 0) -> "WaveFunction":
        amps = np.zeros(2 * pad + 1, dtype=complex)
        amps[pad] = 1.0
        return cls(int(momentum) - pad, amps)

    @property
    def momenta(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + self.amplitudes.size)

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        return float(np.sum(self.probabilities))

    def moments(self) -> tuple[float, float]:
        """Return ``(<l>, <l**2>)`` of the momentum distribution."""
        prob = self.probabilities
        l = self.momenta.astype(float)
        return float(prob @ l), float(prob @ (l * l))

    def headroom(self) -> int:
        """Number of empty sites on the thinner side of the window."""
        nz = np.flatnonzero(self.probabilities > _OCCUPIED)
        if nz.size == 0:
            return self.amplitudes.size
        return int(min(nz[0], self.amplitudes.size - 1 - nz[-1]))

    def boundary_mass(self, sites: int = BOUNDARY_SITES) -> float:
        prob = self.probabilities
        return float(prob[:sites].sum() + prob[-sites:].sum())

    def grow(self, min_pad: int) -> "WaveFunction":
        """Double the window (at least ``min_pad`` new sites per side), centred."""
        pad = max(int(min_pad), self.amplitudes.size // 2 + 1)
        amps = np.zeros(self.amplitudes.size + 2 * pad, dtype=complex)
        amps[pad:pad + self.amplitudes.size] = self.amplitudes
        return WaveFunction(self.offset - pad, amps, self.norm_tol)

    def copy(self) -> "WaveFunction":
        return WaveFunction(self.offset, self.amplitudes.copy(), self.norm_tol)


@dataclass(frozen=True)
class MeasurementOutcome:
    momentum: int
    probability: float


@lru_cache(maxsize=64)
def kick_coefficients(kappa: float) -> np.ndarray:
    """Return ``c_m = i**(-m) J_m(kappa)`` for ``m = -M..M`` (read-only)."""
    nmax = int(math.ceil(kappa)) + max(40, int(math.ceil(12 * kappa ** (1 / 3))))
    seq = bessel_sequence(kappa, nmax)
    keep = np.flatnonzero(np.abs(seq) > _COEFF_CUTOFF)
    M = int(keep[-1]) if keep.size else 0
    m = np.arange(-M, M + 1)
    j = seq[np.abs(m)] * np.where((m < 0) & (m % 2 == 1), -1.0, 1.0)
    coeffs = (1j) ** (-m % 4) * j
    coeffs.setflags(write=False)
    return coeffs


@lru_cache(maxsize=64)
def _phase_table(p: int, q: int) -> np.ndarray:
    r = np.arange(q)
    return np.exp(-2j * np.pi * r / q)


def kinetic_phases(momenta: np.ndarray, params: ResonanceParams) -> np.ndarray:
    """``exp(-i j**2 tau)`` with ``p*j**2`` reduced mod ``q`` in exact integers."""
    q = params.q
    if q == 1:
        return np.ones(momenta.size, dtype=complex)
    j = np.asarray(momenta, dtype=np.int64) % q
    idx = (params.p * ((j * j) % q)) % q
    return _phase_table(params.p, q)[idx]


def required_headroom(kappa: float) -> int:
    M = (kick_coefficients(kappa).size - 1) // 2
    return max(int(math.ceil(kappa)) + 20, M + BOUNDARY_SITES)


def apply_kick(psi: WaveFunction, params: ResonanceParams) -> WaveFunction:
    """Apply one Floquet period to ``psi`` and return the new wave function.

    Raises :class:`LatticeGrowthRequired` when the window is too narrow; the
    window is never truncated.
    """
    need = required_headroom(params.kappa)
    have = psi.headroom()
    if have < need:
        raise LatticeGrowthRequired(need, have)
    coeffs = kick_coefficients(params.kappa)
    b = psi.amplitudes * kinetic_phases(psi.momenta, params)
    # a'[i] = sum_m c_m b[i+m] is a convolution with the reversed coefficients
    k = coeffs[::-1]
    if k.size < _DIRECT_MAX:
        out = np.convolve(b, k, mode="same")
    else:
        out = signal.oaconvolve(b, k, mode="same")
    return WaveFunction(psi.offset, out, psi.norm_tol)


def _ensure_room(psi: WaveFunction, kappa: float) -> WaveFunction:
    need = required_headroom(kappa)
    while psi.headroom() < need:
        psi = psi.grow(need)
    return psi


def evolve(psi: WaveFunction, params: ResonanceParams, T: int) -> WaveFunction:
    """Apply ``T`` kicks, growing the window by doubling whenever needed."""
    T = int(T)
    if T < 0:
        raise DomainError("T must be non-negative")
    out = psi.copy()
    for _ in range(T):
        try:
            out = apply_kick(out, params)
        except LatticeGrowthRequired:
            out = _ensure_room(out, params.kappa)
            out = apply_kick(out, params)
    return out


def measure_momentum(psi: WaveFunction, u: float) -> tuple[MeasurementOutcome, WaveFunction]:
    """Projectively measure momentum with the uniform deviate ``u``.

    The outcome is the first momentum (ascending) whose cumulative probability
    exceeds ``u`` times the total.  The returned state is the bare eigenstate.
    """
    if not 0.0 <= u < 1.0:
        raise DomainError(f"uniform deviate must lie in [0, 1), got {u}")
    prob = psi.probabilities
    cdf = np.cumsum(prob)
    total = cdf[-1]
    if not total > 0:
        raise DomainError("cannot measure a zero state")
    idx = int(np.searchsorted(cdf, u * total, side="right"))
    if idx >= prob.size:
        idx = int(np.flatnonzero(prob > 0)[-1])
    momentum = psi.offset + idx
    outcome = MeasurementOutcome(momentum, float(prob[idx] / total))
    return outcome, WaveFunction.eigenstate(momentum)
