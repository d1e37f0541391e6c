"""Invariant suites run by ``mimolab verify`` and by the acceptance tests.

Each suite returns a list of :class:`Check` rows. Scenarios are fixed and
seeded, so every run measures the same values.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .calibration import (
    analytic_class2_2x4,
    analytic_class2_4x4,
    calibrate,
    class2_forward,
    frequency_grid,
    relative_deviation,
    taps_to_frequency_response,
    verify_inverse,
)
from .channel import (
    ChannelConfig,
    LaneResponse,
    PolarizationParams,
    apply_cd,
    check_fo_pol_commutativity,
    make_unitary,
)
from .classes import run_class
from .equalizer import EqualizerTaps, EqualizerTopology, apply_taps, real4x4_to_widely_linear
from .pipeline import in_band, simulate_link, symbol_errors
from .signals import G_4R_TO_2C, real4_to_complex2


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    criterion: int | None = None
    seconds: float = 0.0

    @property
    def informational(self) -> bool:
        return bool(np.isnan(self.threshold))

    def row(self) -> str:
        if self.informational:
            return f"{self.name:<44} {self.value:>13.6g} {'-':>11}  info"
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name:<44} {self.value:>13.6g} {self.threshold:>11.4g}  {status}"


def _at_most(name, value, threshold, criterion=None, seconds=0.0) -> Check:
    return Check(name, float(value), threshold, bool(value <= threshold), criterion, seconds)


def _at_least(name, value, threshold, criterion=None, seconds=0.0) -> Check:
    return Check(name, float(value), threshold, bool(value >= threshold), criterion, seconds)


def _random_pols(rng, n):
    v = rng.standard_normal((n, 4))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


# -- algebra -----------------------------------------------------------------

def check_polarization_algebra(draws: int = 1000, seed: int = 1) -> list[Check]:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    orth = comm = 0.0
    for p, theta in zip(_random_pols(rng, draws), rng.uniform(-np.pi, np.pi, draws)):
        u = make_unitary(p)
        orth = max(orth, np.max(np.abs(u.T @ u - np.eye(4))))
        comm = max(comm, check_fo_pol_commutativity(p, theta))
    cd = 0.0
    for _ in range(20):
        x = rng.standard_normal((2048, 4))
        u = make_unitary(_random_pols(rng, 1)[0])
        cd_total = rng.uniform(-40, 40)
        cd = max(cd, np.max(np.abs(apply_cd(x @ u.T, cd_total) - apply_cd(x, cd_total) @ u.T)))
    dt = time.perf_counter() - t0
    return [
        _at_most("U orthogonality |U^T U - I|", orth, 1e-12, 1),
        _at_most("FO-U commutativity |UR - RU|", comm, 1e-12, 1),
        _at_most("CD-U commutativity", cd, 1e-10, 1),
        _at_most("algebra runtime [s]", dt, 5.0, 1, dt),
    ]


def check_inverse_oracle(draws: int = 1000, grid_points: int = 512, seed: int = 2) -> list[Check]:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    grid = frequency_grid(grid_points)
    worst = 0.0
    for p in _random_pols(rng, draws):
        skews = rng.uniform(-2, 2, 4)
        worst = max(worst, verify_inverse(class2_forward(p, skews, grid), analytic_class2_4x4(p, skews, grid)))
    dt = time.perf_counter() - t0
    return [
        _at_most("class II 4x4 inverse oracle", worst, 1e-12, 2),
        _at_most("inverse oracle runtime [s]", dt, 10.0, 2, dt),
    ]


def check_field_form(draws: int = 1000, grid_points: int = 512, seed: int = 3) -> list[Check]:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    grid = frequency_grid(grid_points)
    coeff = out = 0.0
    for p in _random_pols(rng, draws):
        skews = rng.uniform(-2, 2, 4)
        h2 = analytic_class2_2x4(p, skews, grid).matrices
        h4 = analytic_class2_4x4(p, skews, grid).matrices
        coeff = max(coeff, np.max(np.abs(h2 - G_4R_TO_2C @ h4)))
        lanes = rng.standard_normal((grid_points, 4, 1)) + 1j * rng.standard_normal((grid_points, 4, 1))
        out = max(out, np.max(np.abs(h2 @ lanes - G_4R_TO_2C @ (h4 @ lanes))))
    dt = time.perf_counter() - t0
    return [
        _at_most("2x4 form vs G x 4x4 (coefficients)", coeff, 1e-12, 3),
        _at_most("2x4 form vs G x 4x4 (outputs)", out, 1e-12, 3),
        _at_most("2x4 form runtime [s]", dt, 5.0, 3, dt),
    ]


def algebra_suite() -> list[Check]:
    return check_polarization_algebra() + check_inverse_oracle() + check_field_form()


# -- widely linear -------------------------------------------------------------

def check_widely_linear_equivalence(trials: int = 1000, taps: int = 5, n: int = 64, seed: int = 4) -> list[Check]:
    rng = np.random.default_rng(seed)
    top = EqualizerTopology("real_4x4", taps)
    worst = 0.0
    for _ in range(trials):
        bank = EqualizerTaps(top, rng.standard_normal(top.weight_shape))
        x = rng.standard_normal((n, 4))
        direct = real4_to_complex2(apply_taps(bank, x))
        wl = apply_taps(real4x4_to_widely_linear(bank), real4_to_complex2(x))
        worst = max(worst, np.max(np.abs(direct - wl)))
    return [_at_most("real 4x4 vs widely-linear re-encoding", worst, 1e-12, 4)]


def iq_imbalance_link(seed: int = 3, n_symbols: int = 100_000):
    """Rx IQ gain imbalance of 1 dB and 0.3-sample IQ skew on both polarizations."""
    g = 10 ** (-1 / 20)
    lanes = (LaneResponse(), LaneResponse(gain=g, skew=0.3)) * 2
    rng = np.random.default_rng(seed)
    cfg = ChannelConfig(rx_lanes=lanes, pol=PolarizationParams.random(rng), seed=seed)
    return simulate_link(cfg, n_symbols, sps=1)


def check_conjugate_necessity(seed: int = 3) -> list[Check]:
    sim = iq_imbalance_link(seed)
    wl = run_class("I", sim.cfg, sim.x, sim.received, sim.probes, topology="real_4x4")
    sl = run_class("I", sim.cfg, sim.x, sim.received, sim.probes, topology="complex_2x2")
    return [
        Check("widely-linear residual [dB]", wl.residual_db, float("nan"), True, 8),
        Check("strictly linear 2x2 residual [dB]", sl.residual_db, float("nan"), True, 8),
        _at_least("linear minus widely-linear residual [dB]", sl.residual_db - wl.residual_db, 20.0, 8),
    ]


def widely_linear_suite() -> list[Check]:
    return check_widely_linear_equivalence() + check_conjugate_necessity()


# -- convergence ---------------------------------------------------------------

def class2_link(seed: int = 0, n_samples: int = 100_000, fo: float = 0.005):
    """Noiseless back-to-back link, random polarization, Rx skews within +/-0.5 samples, 2 sps."""
    rng = np.random.default_rng([seed, 2])
    p = PolarizationParams.random(rng)
    skews = rng.uniform(-0.5, 0.5, 4)
    cfg = ChannelConfig(rx_lanes=tuple(LaneResponse(skew=s) for s in skews), pol=p, fo=fo, seed=seed)
    return simulate_link(cfg, n_samples // 2, sps=2), skews


def check_class2_convergence(seed: int = 0) -> list[Check]:
    t0 = time.perf_counter()
    sim, skews = class2_link(seed)
    grid = frequency_grid(512)
    band = in_band(sim.sps)
    run = run_class("II", sim.cfg, sim.x, sim.received, sim.probes, topology="real_4x4")
    fr = taps_to_frequency_response(run.taps, grid)
    dev = relative_deviation(fr, analytic_class2_4x4(sim.cfg.pol, skews, grid), band)
    dt = time.perf_counter() - t0
    return [
        _at_most("class II vs analytic 4x4 inverse (rel.)", dev, 5e-2, 5),
        _at_most("class II residual error [dB]", run.residual_db, -35.0, 5),
        _at_most("class II runtime [s]", dt, 60.0, 5, dt),
    ]


def check_class3_matches_class2(seed: int = 0) -> list[Check]:
    sim, skews = class2_link(seed)
    grid = frequency_grid(512)
    band = in_band(sim.sps)
    args = (sim.cfg, sim.x, sim.received, sim.probes)
    r2 = run_class("II", *args, topology="complex_2x4")
    r3 = run_class("III", *args, topology="complex_2x4")
    f2 = taps_to_frequency_response(r2.taps, grid)
    f3 = taps_to_frequency_response(r3.taps, grid)
    return [
        _at_most("class III vs class II response (rel.)", relative_deviation(f3, f2, band), 5e-2, 6),
        _at_most("class II 2x4 vs analytic 2x4 (rel.)",
                 relative_deviation(f2, analytic_class2_2x4(sim.cfg.pol, skews, grid), band), 5e-2, 6),
    ]


def class4_link(seed: int = 5, n_symbols: int = 60_000):
    rng = np.random.default_rng([seed, 4])
    cfg = ChannelConfig(
        tx_lanes=tuple(LaneResponse(skew=s) for s in (0.0, 0.2, -0.15, 0.1)),
        rx_lanes=tuple(LaneResponse(skew=s) for s in (0.1, -0.2, 0.3, 0.0)),
        pol=PolarizationParams.random(rng),
        fo=0.01,
        seed=seed,
    )
    return simulate_link(cfg, n_symbols, sps=1)


def check_class4_loopback(seed: int = 5) -> list[Check]:
    sim = class4_link(seed)
    run = run_class("IV", sim.cfg, sim.x, sim.received, sim.probes)
    errors, decided = symbol_errors(run, sim.sps)
    return [
        _at_least("class IV decided symbols", decided, 10_000, 7),
        _at_most("class IV symbol errors", errors, 0, 7),
    ]


def convergence_suite() -> list[Check]:
    t0 = time.perf_counter()
    checks = check_class2_convergence() + check_class3_matches_class2() + check_class4_loopback()
    dt = time.perf_counter() - t0
    return checks + [_at_most("convergence suite runtime [s]", dt, 120.0, None, dt)]


# -- calibration ---------------------------------------------------------------

INJECTED_SKEWS = (0.0, 0.25, -0.3, 0.1)


def skew_link(seed: int = 11, snr_db: float = float("inf"), pol=None, n_symbols: int = 100_000):
    rng = np.random.default_rng([seed, 9])
    p = pol if pol is not None else PolarizationParams.random(rng)
    cfg = ChannelConfig(
        rx_lanes=tuple(LaneResponse(skew=s) for s in INJECTED_SKEWS), pol=p, snr_db=snr_db, seed=seed
    )
    return simulate_link(cfg, n_symbols, sps=1)


def _calibrated(sim, label: str, mu: float = 1e-3):
    run = run_class(label, sim.cfg, sim.x, sim.received, sim.probes, mu=mu)
    return calibrate(taps_to_frequency_response(run.taps, frequency_grid(512)))


def check_skew_recovery() -> list[Check]:
    sim = skew_link()
    truth = np.array(INJECTED_SKEWS)
    err_i = np.max(np.abs(_calibrated(sim, "I").rx_skews - truth))
    spread = []
    for mu in (5e-4, 1e-3, 2e-3):
        spread.append(_calibrated(sim, "II", mu).rx_skews)
    spread = np.array(spread)
    err_ii = np.max(np.abs(spread - truth))
    return [
        _at_most("class I skew error [samples]", err_i, 0.02, 9),
        _at_most("class II skew error, mu sweep [samples]", err_ii, 0.02, 9),
        _at_most("skew spread across mu [samples]", np.max(np.ptp(spread, axis=0)), 0.02, 9),
    ]


def check_polarization_recovery(seeds: int = 20) -> list[Check]:
    sim = skew_link(seed=12)
    cal = _calibrated(sim, "II")
    noiseless = abs(cal.pol_estimate.as_array() @ sim.cfg.pol.as_array())
    noisy = []
    for s in range(seeds):
        sim = skew_link(seed=100 + s, snr_db=20.0, n_symbols=50_000)
        cal = _calibrated(sim, "II")
        noisy.append(abs(cal.pol_estimate.as_array() @ sim.cfg.pol.as_array()))
    return [
        _at_least("polarization overlap, noiseless", noiseless, 0.999, 9),
        _at_least(f"polarization overlap, 20 dB, min of {seeds}", min(noisy), 0.99, 9),
    ]


def calibration_suite() -> list[Check]:
    return check_skew_recovery() + check_polarization_recovery()


SUITES = {
    "algebra": algebra_suite,
    "convergence": convergence_suite,
    "calibration": calibration_suite,
    "widely_linear": widely_linear_suite,
}


def run_suite(name: str) -> list[Check]:
    try:
        suite = SUITES[name]
    except KeyError:
        raise ValueError(f"unknown suite {name!r}; valid suites: {', '.join(SUITES)}") from None
    return suite()


def format_table(checks: list[Check]) -> str:
    head = f"{'check':<44} {'measured':>13} {'threshold':>11}  result"
    return "\n".join([head, "-" * len(head)] + [c.row() for c in checks])
