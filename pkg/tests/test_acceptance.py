"""End-to-end acceptance checks, one test per criterion.

Each test appends a single PASS/FAIL line to the session log, which is printed
in the terminal summary (and echoed with ``-s``).
"""
import json
import math
import time

import numpy as np
import pytest
from scipy import special, stats

from levy_rotor.analysis import bootstrap_slope, fit_power_law, theoretical_exponent
from levy_rotor.bessel import bessel_sequence
from levy_rotor.cli import run
from levy_rotor.engine import (
    Engine,
    EnsembleConfig,
    KernelModel,
    MomentumDistribution,
    propagate_master,
    simulate_ensemble,
)
from levy_rotor.levy import LevyParams, cdf, censored_moment, inverse_cdf, sample_schedule, stream
from levy_rotor.unitary import ResonanceParams, WaveFunction, evolve

pytestmark = pytest.mark.slow

SEED = 20240601
HORIZON = 10 ** 6
N_TRAJ = 2000
FIT_WINDOW = (10 ** 3, 10 ** 6)
TOL = 0.15


def report(log, number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    log.append(line)
    print(line)
    assert ok, line


def fitted_exponent(cfg, threads=None):
    samples = simulate_ensemble(cfg, threads)
    fit = fit_power_law(samples.series(), *FIT_WINDOW)
    lo, hi, _ = bootstrap_slope(samples, *FIT_WINDOW, n_boot=200, seed=cfg.master_seed)
    return fit.slope, (lo, hi)


def test_c01_bessel_identities(acceptance_log):
    bessel_sequence(3.0, 50)  # compile outside the timed region
    start = time.perf_counter()
    worst = 0.0
    for x in (0.5, 1.0, 5.0, 20.0, 50.0):
        N = int(math.ceil(x)) + 60
        sq = bessel_sequence(x, N) ** 2
        n = np.arange(N + 1, dtype=float)
        norm = sq[0] + 2.0 * sq[1:].sum()
        second = 2.0 * float(n[1:] ** 2 @ sq[1:])
        worst = max(worst, abs(norm - 1.0), abs(second - x * x / 2) / (x * x / 2))
    elapsed = time.perf_counter() - start
    report(acceptance_log, 1, worst < 1e-9 and elapsed < 1.0,
           f"Bessel sum rules, max deviation {worst:.1e} (< 1e-9), {elapsed:.3f} s (< 1 s)")


def test_c02_principal_resonance_kernel(acceptance_log):
    start = time.perf_counter()
    worst = 0.0
    for kappa in (0.5, 1.0, 2.0):
        params = ResonanceParams(1, 1, kappa)
        for T in (1, 4, 16, 64):
            psi = evolve(WaveFunction.eigenstate(0), params, T)
            l = psi.momenta
            exact = special.jv(l, kappa * T) ** 2
            worst = max(worst, float(np.max(np.abs(psi.probabilities - exact))))
    elapsed = time.perf_counter() - start
    report(acceptance_log, 2, worst < 1e-8 and elapsed < 10.0,
           f"|a_l(T)|^2 vs J_l(kT)^2, max abs error {worst:.1e} (< 1e-8), {elapsed:.2f} s (< 10 s)")


def test_c03_exactness_chain(acceptance_log):
    start = time.perf_counter()
    params = LevyParams(1.5)
    kappa = 1.0
    worst = 0.0
    lengths = []
    for i in range(100):
        sched = sample_schedule(params, 10 ** 12, stream(SEED, 10_000 + i), max_intervals=1000)
        lengths.append(len(sched))
        (P,) = propagate_master(MomentumDistribution.delta(), sched, kappa)
        exact = 0.5 * kappa ** 2 * sum(int(T) ** 2 for T in sched.intervals)
        worst = max(worst, abs(P.variance() - exact) / exact)
    elapsed = time.perf_counter() - start
    ok = worst < 1e-8 and min(lengths) >= 1000 and elapsed < 120.0
    report(acceptance_log, 3, ok,
           f"100 schedules x {min(lengths)} intervals, max rel error {worst:.1e} (< 1e-8), "
           f"{elapsed:.1f} s (< 120 s)")


def test_c04_exponent_law(acceptance_log):
    parts, ok = [], True
    for alpha, target in ((0.5, 2.0), (1.2, 1.8), (1.5, 1.5), (1.8, 1.2), (2.0, 1.0)):
        cfg = EnsembleConfig(N_TRAJ, HORIZON, LevyParams(alpha), master_seed=SEED)
        slope, (lo, hi) = fitted_exponent(cfg)
        good = abs(slope - target) <= TOL
        ok &= good
        parts.append(f"a={alpha}: {slope:.3f} [{lo:.3f},{hi:.3f}] vs {target}"
                     + ("" if good else " (miss)"))
    report(acceptance_log, 4, ok, "QKR exponent law, " + "; ".join(parts))


# (alpha, beta) pairs covering all four branches of the generalised law
BETA_PAIRS = [(0.5, 2.0), (1.5, 2.0), (0.5, 1.0), (1.5, 1.0),
              (0.6, 1.5), (1.2, 1.6), (0.8, 0.4), (0.5, 0.4)]


def test_c05_generalised_beta_model(acceptance_log):
    parts, ok = [], True
    for alpha, beta in BETA_PAIRS:
        cfg = EnsembleConfig(N_TRAJ, HORIZON, LevyParams(alpha), master_seed=SEED,
                             kernel_model=KernelModel("synthetic_beta", beta))
        target = theoretical_exponent(alpha, beta).slope
        slope, (lo, hi) = fitted_exponent(cfg)
        good = abs(slope - target) <= TOL
        ok &= good
        parts.append(f"(a={alpha},b={beta}): {slope:.3f} vs {target:g}"
                     + ("" if good else " (miss)"))
    report(acceptance_log, 5, ok, "synthetic kernel, " + "; ".join(parts))


def test_c06_branch_continuity(acceptance_log):
    eps = 1e-9
    jumps = []
    for beta in np.linspace(0.1, 2.0, 20):
        jumps.append(abs(theoretical_exponent(1 - eps, beta).c
                         - theoretical_exponent(1 + eps, beta).c))
        if beta < 2.0:
            jumps.append(abs(theoretical_exponent(beta - eps, beta).c
                             - theoretical_exponent(beta + eps, beta).c))
    grid = np.linspace(0.1, 2.0, 20)
    mismatches = sum(
        theoretical_exponent(a, 2.0).c != (1.0 if a <= 1 else (3 - a) / 2) for a in grid)
    worst = max(jumps)
    report(acceptance_log, 6, worst < 1e-6 and mismatches == 0,
           f"max jump across branch lines {worst:.1e} (< 1e-6), "
           f"beta=2 law mismatches {mismatches}/20")


def test_c07_engine_cross_validation(acceptance_log):
    start = time.perf_counter()
    kw = dict(n_trajectories=500, horizon=1000, levy=LevyParams(1.5), master_seed=SEED)
    a = simulate_ensemble(EnsembleConfig(**kw)).series()
    b = simulate_ensemble(EnsembleConfig(engine=Engine.FULL_WAVEFUNCTION, **kw)).series()
    elapsed = time.perf_counter() - start
    joint = np.sqrt(a.stderr ** 2 + b.stderr ** 2)
    diff = np.abs(a.variance - b.variance)
    inside = int(np.sum(diff <= 3 * joint))
    z = float(np.max(np.where(joint > 0, diff / np.where(joint > 0, joint, 1), 0)))
    report(acceptance_log, 7, inside == diff.size and elapsed < 300.0,
           f"kernel vs wavefunction, {inside}/{diff.size} sample times within 3 joint SE "
           f"(max |d|/SE {z:.2g}), {elapsed:.1f} s (< 300 s)")


def test_c08_kappa_independence(acceptance_log):
    slopes = {}
    for kappa in (0.5, 2.0):
        cfg = EnsembleConfig(N_TRAJ, HORIZON, LevyParams(1.5),
                             resonance=ResonanceParams(1, 1, kappa), master_seed=SEED)
        samples = simulate_ensemble(cfg)
        slopes[kappa] = fit_power_law(samples.series(), *FIT_WINDOW).slope
    gap = abs(slopes[0.5] - slopes[2.0])
    report(acceptance_log, 8, gap < 0.1,
           f"alpha=1.5 slope k=0.5 {slopes[0.5]:.3f}, k=2 {slopes[2.0]:.3f}, gap {gap:.3f} (< 0.1)")


def test_c09_levy_sampler(acceptance_log):
    parts, ok = [], True
    h = 1000.0
    for i, alpha in enumerate((0.5, 1.0, 1.5, 2.0)):
        params = LevyParams(alpha)
        t = inverse_cdf(params, stream(SEED, 50_000 + i).random(10 ** 6))
        ks = stats.kstest(t, lambda x: cdf(params, x))
        censored = float(np.mean(np.where(t < h, t, 0.0)))
        exact = censored_moment(params, 1.0, h)
        rel = abs(censored - exact) / exact
        good = ks.pvalue > 0.01 and rel < 0.02
        ok &= good
        parts.append(f"a={alpha}: KS p={ks.pvalue:.2f}, <T> rel err {rel:.1e}")
    report(acceptance_log, 9, ok, "sampler (KS p > 0.01, censored mean < 2%), " + "; ".join(parts))


def test_c10_cli_determinism(acceptance_log, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps(dict(alpha=1.5, n_trajectories=300, horizon=10 ** 5,
                                   master_seed=SEED, bootstrap=50)))
    out = tmp_path / "out"

    def snapshot(*extra):
        assert run(["simulate", "--config", str(cfg), "--out", str(out), *extra]) == 0
        return {p.name: p.read_bytes() for p in sorted(out.iterdir())}

    base = snapshot()
    runs = [snapshot(), snapshot("--threads", "2"), snapshot("--threads", "4")]
    same = all(r == base for r in runs)
    report(acceptance_log, 10, same,
           f"{len(base)} output files byte-identical over 4 runs (threads 1, 1, 2, 4)")
