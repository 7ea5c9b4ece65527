"""Fixed-seed property suites for each module, run by ``trajent verify``."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import discrete, entropy, lindblad, opalg, paycha, trajectory
from .opalg import (SIGMA_MINUS, SIGMA_X, SIGMA_Z, dag, density_with_spectrum,
                    random_density, random_hermitian)

SEEDS = range(100)


@dataclass
class PropertyResult:
    suite: str
    name: str
    passed: bool
    detail: str
    seconds: float


def _bounded_op(d, rng):
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return z / np.linalg.norm(z, 2)


def _well_conditioned(d, rng):
    return density_with_spectrum(rng.uniform(1.0, 1.6, d), rng)


def _worst(values, tol, le=True):
    worst = max(values) if le else min(values)
    ok = worst <= tol if le else worst >= tol
    return ok, f"worst {worst:.3e} ({'<=' if le else '>='} {tol:g})"


# -- opalg ------------------------------------------------------------------

def eig_reconstruction():
    errs = []
    for s in SEEDS:
        rng = np.random.default_rng(s)
        m = random_hermitian(int(rng.integers(2, 5)), rng)
        sd = opalg.hermitian_eig(m)
        errs.append(float(np.abs(sd.reconstruct() - m).max() / max(1.0, np.abs(m).max())))
    return _worst(errs, 1e-12)


def log_exp_round_trip():
    errs = []
    for s in SEEDS:
        rng = np.random.default_rng(s)
        rho = random_density(int(rng.integers(2, 5)), rng, min_eig=0.01)
        back = opalg.expm_hermitian(opalg.matrix_function_psd(rho, "log"))
        errs.append(float(np.abs(back - rho).max()))
    return _worst(errs, 1e-10)


def ad_power_traceless():
    errs = []
    for s in SEEDS:
        rng = np.random.default_rng(s)
        d = int(rng.integers(2, 4))
        rho = random_density(d, rng)
        x = _bounded_op(d, rng)
        errs.extend(abs(np.trace(opalg.ad_pow(rho, x, k))) for k in range(1, 6))
    return _worst(errs, 1e-12)


# -- lindblad ---------------------------------------------------------------

def _random_model(d, rng, n_ops=2, eta=1.0):
    return lindblad.OpenSystemModel(random_hermitian(d, rng),
                                    tuple(_bounded_op(d, rng) for _ in range(n_ops)), 0, eta)


def lindblad_duality():
    errs = []
    for s in SEEDS:
        rng = np.random.default_rng(s)
        d = int(rng.integers(2, 4))
        model = _random_model(d, rng)
        rho = random_density(d, rng)
        x = random_hermitian(d, rng)
        lhs = np.trace(x @ lindblad.adjoint_generator(model, rho))
        rhs = np.trace(lindblad.generator(model, x) @ rho)
        errs.append(abs(lhs - rhs))
    return _worst(errs, 1e-12)


def lindblad_trace_preservation():
    errs = []
    for s in SEEDS:
        rng = np.random.default_rng(s)
        d = int(rng.integers(2, 4))
        model = _random_model(d, rng)
        errs.append(abs(np.trace(lindblad.adjoint_generator(model, random_density(d, rng)))))
        errs.append(float(np.abs(lindblad.generator(model, np.eye(d))).max()))
    return _worst(errs, 1e-12)


# -- entropy ----------------------------------------------------------------

def klein_inequality():
    vals = []
    for s in SEEDS:
        rng = np.random.default_rng(s)
        d = int(rng.integers(2, 4))
        rho, sigma = random_density(d, rng), random_density(d, rng, min_eig=0.01)
        vals.append(entropy.relative_entropy(rho, sigma))
        vals.append(-abs(entropy.relative_entropy(sigma, sigma)))
    return _worst(vals, -1e-12, le=False)


def data_processing():
    gaps = []
    for s in SEEDS:
        rng = np.random.default_rng(s)
        probe = discrete.ProbeModel(random_hermitian(2, rng), _bounded_op(2, rng), 0.05)
        rho, sigma = random_density(2, rng), random_density(2, rng, min_eig=0.01)
        before = entropy.relative_entropy(rho, sigma)
        after = entropy.relative_entropy(probe.channel(rho), probe.channel(sigma))
        gaps.append(after - before)
    return _worst(gaps, 1e-10)


def mutual_information_forms():
    errs = []
    for s in SEEDS:
        rng = np.random.default_rng(s)
        rho = random_density(4, rng, min_eig=0.01)
        errs.append(abs(entropy.mutual_information(rho, (2, 2))
                        - entropy.mutual_information_divergence(rho, (2, 2))))
    return _worst(errs, 1e-10)


# -- paycha -----------------------------------------------------------------

def sigma_known_values():
    rho = np.diag([0.7, 0.3]).astype(complex)
    pap = paycha.sigma_series(rho, SIGMA_Z, 1.0, variant="paper").value
    lam = paycha.sigma_series(rho, SIGMA_Z, 1.0, variant="lambda").value
    err = max(abs(pap + 2.0), abs(lam + 1.68))
    return err <= 1e-10, f"paper {pap:.12f}, lambda {lam:.12f}"


def sigma_series_vs_oracle():
    errs = []
    for s in range(20):
        rng = np.random.default_rng(s)
        d = 2 + s % 2
        rho = _well_conditioned(d, rng)
        L = _bounded_op(d, rng)
        for v in paycha.SigmaVariant:
            est = paycha.sigma_series(rho, L, 1.0, variant=v)
            b = paycha.martingale_coefficient(rho, L, v)
            if not est.converged:
                return False, f"seed {s} {v.value}: series did not converge"
            errs.append(abs(est.value - paycha.sigma_spectral_oracle(rho, b, 1.0)))
    return _worst(errs, 1e-8)


def sigma_regrouped_shells():
    errs = []
    for s in range(20):
        rng = np.random.default_rng(s)
        d = 2 + s % 2
        rho = _well_conditioned(d, rng)
        L = _bounded_op(d, rng)
        a = paycha.sigma_series(rho, L, 1.0, variant="paper").shells
        b = paycha.sigma_regrouped(rho, L, 1.0).shells
        errs.append(float(np.abs(a - b).max()))
    return _worst(errs, 1e-10)


# -- trajectory -------------------------------------------------------------

def sme_hand_step():
    model = lindblad.OpenSystemModel(np.zeros((2, 2)), (SIGMA_Z,), 0, 1.0)
    rho = np.diag([0.7, 0.3]).astype(complex)
    dt, dw = 1e-4, 0.01
    # L*(rho) = 0 for a commuting dephasing channel, lambda = 0.8
    b = np.diag([1.4 - 0.56, -0.6 - 0.24])
    expected = rho + b * dw
    expected /= np.trace(expected).real
    got = trajectory.step_sme(rho, model, dt, dw)
    err = float(np.abs(got - expected).max())
    return err <= 1e-12, f"error {err:.3e}"


def sme_eta_zero_is_master():
    rng = np.random.default_rng(3)
    model = _random_model(2, rng, eta=0.0)
    rho = random_density(2, rng, min_eig=0.05)
    err = float(np.abs(trajectory.step_sme(rho, model, 1e-3, 0.7)
                       - trajectory.master_step(rho, model, 1e-3)).max())
    return err <= 1e-13, f"error {err:.3e}"


def seeded_determinism():
    model = lindblad.OpenSystemModel(np.zeros((2, 2)), (SIGMA_Z,), 0, 1.0)
    cfg = trajectory.TrajectoryConfig(1e-3, 0.05, seed=11, n_trajectories=4)
    rho0 = np.diag([0.6, 0.4])
    a = trajectory.simulate(cfg, model, rho0)
    b = trajectory.simulate(cfg, model, rho0)
    same = all(np.array_equal(a.series[k], b.series[k], equal_nan=True) for k in a.series)
    return same, "bit-identical" if same else "streams differ"


def unconditional_rate_fd():
    errs = []
    for s in range(10):
        rng = np.random.default_rng(s)
        model = _random_model(2, rng, n_ops=1)
        rho = random_density(2, rng, min_eig=0.05)
        rate = trajectory.unconditional_entropy_rate(rho, model)
        fd = trajectory.entropy_rate_finite_difference(rho, model, 1e-6)
        errs.append(abs(fd - rate) / max(abs(rate), 1e-12))
    return _worst(errs, 1e-6)


# -- discrete ---------------------------------------------------------------

def measurement_completeness():
    total = sum(dag(m) @ m for m in discrete.MEASUREMENT.values())
    err = float(np.abs(total - np.eye(2)).max())
    return err <= 1e-12, f"error {err:.3e}"


def branch_identities():
    errs = []
    for s in range(5):
        rng = np.random.default_rng(s)
        probe = discrete.ProbeModel(random_hermitian(2, rng), _bounded_op(2, rng), 0.05)
        rho0 = random_density(2, rng)
        _, states, probs = discrete.branch_arrays(rho0, probe, 8)
        errs.append(abs(math.fsum(probs) - 1.0))
        errs.append(float(np.abs(states.sum(axis=0) - discrete.unconditional_map(rho0, probe, 8)).max()))
    return _worst(errs, 1e-10)


def holevo_and_gain_loss():
    errs, floors = [], []
    rho0 = np.diag([0.7, 0.3]) + 0.1 * SIGMA_X
    probe = discrete.ProbeModel(np.zeros((2, 2)), SIGMA_Z, 0.04)
    for n in range(1, 7):
        g = discrete.gain_loss(rho0, probe, n)
        errs.append(abs(g.delta_h - (g.gain - g.loss)))
        errs.append(abs(g.gain - g.gain_from_entropies))
        h = discrete.holevo_info(rho0, probe, n, n)
        errs.append(abs(h.via_entropy - h.via_divergence))
        floors.append(min(g.loss, h.value))
    ok, detail = _worst(errs, 1e-10)
    return ok and min(floors) >= -1e-12, f"{detail}; min H, L {min(floors):.3e}"


def entropy_inequality_slacks():
    worst = math.inf
    for s in range(50):
        rng = np.random.default_rng(s)
        probe = discrete.ProbeModel(random_hermitian(2, rng), _bounded_op(2, rng), 0.05,
                                    probe_state=np.diag([0.1, 0.9]))
        rep = discrete.entropy_inequalities(random_density(2, rng, min_eig=0.01), probe)
        worst = min(worst, rep.lhs1, rep.lhs2)
    return worst >= -1e-10, f"min slack {worst:.3e}"


def ordering_identity():
    rng = np.random.default_rng(4)
    probe = discrete.ProbeModel(random_hermitian(2, rng), SIGMA_MINUS, 0.05)
    gaps = [max(discrete.ordering_identity_gap(random_density(2, rng), probe, y1, y2))
            for y1 in (1, -1) for y2 in (1, -1)]
    return _worst(gaps, 1e-12)


def choi_positivity():
    lows = []
    for s in range(20):
        rng = np.random.default_rng(s)
        probe = discrete.ProbeModel(random_hermitian(2, rng), _bounded_op(2, rng), 0.05)
        lows.append(float(opalg.hermitian_eig(discrete.choi_matrix(probe)).eigenvalues.min()))
    return _worst(lows, -1e-10, le=False)


SUITES = {
    "opalg": [eig_reconstruction, log_exp_round_trip, ad_power_traceless],
    "lindblad": [lindblad_duality, lindblad_trace_preservation],
    "entropy": [klein_inequality, data_processing, mutual_information_forms],
    "paycha": [sigma_known_values, sigma_series_vs_oracle, sigma_regrouped_shells],
    "trajectory": [sme_hand_step, sme_eta_zero_is_master, seeded_determinism,
                   unconditional_rate_fd],
    "discrete": [measurement_completeness, branch_identities, holevo_and_gain_loss,
                 entropy_inequality_slacks, ordering_identity, choi_positivity],
}


def run_suites(selector: str = "all") -> list[PropertyResult]:
    if selector != "all" and selector not in SUITES:
        raise KeyError(selector)
    names = list(SUITES) if selector == "all" else [selector]
    out = []
    for suite in names:
        for fn in SUITES[suite]:
            t0 = time.perf_counter()
            try:
                ok, detail = fn()
            except Exception as exc:  # a crashing property is a failing one
                ok, detail = False, f"{type(exc).__name__}: {exc}"
            out.append(PropertyResult(suite, fn.__name__, bool(ok), detail,
                                      time.perf_counter() - t0))
    return out
