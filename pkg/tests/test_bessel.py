import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from levy_rotor.bessel import (
    BesselEvalConfig,
    bessel_j,
    bessel_sequence,
    build_kernel,
    kernel_half_width_guess,
    kernel_moments,
)
from levy_rotor.errors import CapabilityError, DomainError


def power_series_j(n, x, terms=40):
    """Ascending series sum_k (-1)^k (x/2)^(2k+n) / (k! (k+n)!)."""
    return math.fsum(
        (-1) ** k * (x / 2) ** (2 * k + n) / (math.factorial(k) * math.factorial(k + n))
        for k in range(terms)
    )


def test_trivial_values_at_zero():
    assert bessel_j(0, 0.0) == 1.0
    assert bessel_j(5, 0.0) == 0.0
    assert np.all(bessel_sequence(0.0, 10)[1:] == 0.0)


@pytest.mark.parametrize("n", [0, 1, 2, 5, 10])
@pytest.mark.parametrize("x", [0.1, 1.0, 2.5])
def test_matches_power_series(n, x):
    ref = power_series_j(n, x)
    assert bessel_j(n, x) == pytest.approx(ref, rel=1e-12, abs=1e-300)


def test_j0_at_one_power_series_oracle():
    assert abs(bessel_j(0, 1.0) - power_series_j(0, 1.0, terms=30)) < 1e-12


def test_negative_order_reflection():
    for n in range(1, 8):
        assert bessel_j(-n, 3.3) == pytest.approx((-1) ** n * bessel_j(n, 3.3), rel=1e-15)


@settings(max_examples=60, deadline=None)
@given(x=st.floats(0.01, 200.0), n=st.integers(0, 60))
def test_agrees_with_scipy(x, n):
    ref = special.jv(n, x)
    got = bessel_j(n, x)
    # absolute agreement in the oscillatory region, relative in the decaying tail
    assert abs(got - ref) <= 1e-12 * max(1.0, abs(ref)) or abs(got - ref) <= 1e-11 * abs(ref)


def test_tiny_argument_has_no_overflow():
    seq = bessel_sequence(1e-12, 20)
    assert seq[0] == pytest.approx(1.0)
    assert seq[1] == pytest.approx(5e-13, rel=1e-12)
    assert np.all(np.isfinite(seq))


def test_errors():
    with pytest.raises(CapabilityError):
        bessel_j(11, 1.0, BesselEvalConfig(max_order=10))
    with pytest.raises(DomainError):
        bessel_j(0, -1.0)
    with pytest.raises(DomainError):
        bessel_j(0, float("nan"))
    with pytest.raises(ValueError):
        BesselEvalConfig(max_order=0)
    with pytest.raises(ValueError):
        BesselEvalConfig(rel_tolerance=1e-3)


@pytest.mark.parametrize("x", [0.5, 1.0, 5.0, 20.0, 50.0])
def test_sum_rules(x):
    N = math.ceil(x) + 40
    j = bessel_sequence(x, N)
    sq = j * j
    n = np.arange(N + 1)
    assert abs(sq[0] + 2 * sq[1:].sum() - 1.0) < 1e-9
    second = 2 * float(n[1:] ** 2 @ sq[1:])
    assert abs(second - x * x / 2) / (x * x / 2) < 1e-9


def test_full_range_is_linear_cost():
    # one call returns every order; a per-order loop would cost O(N^2)
    seq = bessel_sequence(500.0, 600)
    ref = special.jv(np.arange(601), 500.0)
    assert np.max(np.abs(seq - ref)) < 1e-12


def test_delta_kernel():
    k = build_kernel(1.0, 0)
    assert k.half_width == 0
    assert list(k.weights) == [1.0]
    assert kernel_moments(k) == (0.0, 0.0)


def test_kernel_mass_before_normalisation():
    k = build_kernel(1.0, 10)
    assert abs(k.raw_mass - 1.0) < 1e-10
    assert k.raw_mass <= 1.0 + 1e-15
    assert math.fsum(k.weights) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("kappa,T,m2", [(2.0, 5, 50.0), (1.0, 4, 8.0), (0.5, 20, 50.0)])
def test_kernel_second_moment(kappa, T, m2):
    k = build_kernel(kappa, T)
    m1, got = kernel_moments(k)
    assert m1 == 0.0
    assert abs(got - m2) / m2 < 1e-8
    # brute-force cross-check from scipy's Bessel values
    l = np.arange(-k.half_width, k.half_width + 1)
    assert float(np.sum(l * l * special.jv(l, kappa * T) ** 2)) == pytest.approx(m2, rel=1e-8)


def test_kernel_symmetry_is_exact():
    for kappa, T in [(0.5, 3), (1.0, 17), (2.0, 64)]:
        w = build_kernel(kappa, T).weights
        assert np.array_equal(w, w[::-1])
        assert np.all(w >= 0)


def test_kernel_half_width_covers_guess():
    for kappa, T in [(1.0, 1), (2.0, 100), (0.5, 1000)]:
        k = build_kernel(kappa, T)
        assert k.half_width >= kernel_half_width_guess(kappa * T)


def test_second_moment_monotone_in_interval():
    m2 = [kernel_moments(build_kernel(0.7, T))[1] for T in range(0, 40)]
    assert all(b > a for a, b in zip(m2, m2[1:]))


def test_kernel_rejects_bad_input():
    with pytest.raises(DomainError):
        build_kernel(-1.0, 3)
    with pytest.raises(DomainError):
        build_kernel(1.0, -1)
    with pytest.raises(DomainError):
        build_kernel(1.0, 3, tail_tol=1e-3)


def test_kernel_weights_are_read_only():
    k = build_kernel(1.0, 3)
    with pytest.raises(ValueError):
        k.weights[0] = 1.0
