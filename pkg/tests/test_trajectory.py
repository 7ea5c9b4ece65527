import math

import numpy as np
import pytest

from trajent.errors import EfficiencyNotUnit, NotFaithful
from trajent.lindblad import OpenSystemModel, adjoint_generator
from trajent.opalg import SIGMA_MINUS, SIGMA_X, SIGMA_Z, dag, random_density, random_hermitian
from trajent.trajectory import (InnovationPath, TrajectoryConfig, adjudicate_variants,
                                entropy_rate_finite_difference, entropy_rate_terms,
                                innovation_matrix, master_equation, master_step, simulate,
                                step_sme, step_sme_kraus, step_sse, unconditional_entropy_rate)

RHO = np.diag([0.7, 0.3]).astype(complex)
DEPHASING = OpenSystemModel(np.zeros((2, 2)), (SIGMA_Z,), 0, 1.0)


def test_sme_hand_evaluation():
    dt, dw = 1e-4, 0.01
    model = OpenSystemModel(0.4 * SIGMA_X, (SIGMA_MINUS,), 0, 1.0)
    rho = RHO + 0.1 * SIGMA_X
    L = SIGMA_MINUS
    lam = np.trace(L @ rho + rho @ dag(L)).real
    H = 0.4 * SIGMA_X
    drift = (-1j * (H @ rho - rho @ H) + L @ rho @ dag(L)
             - 0.5 * (dag(L) @ L @ rho + rho @ dag(L) @ L))
    expected = rho + drift * dt + (L @ rho + rho @ dag(L) - lam * rho) * dw
    assert np.abs(step_sme(rho, model, dt, dw) - expected).max() <= 1e-12


def test_sme_trivial_model_and_eta_zero():
    trivial = OpenSystemModel(np.zeros((2, 2)))
    assert np.allclose(step_sme(RHO, trivial, 1e-3, 0.3), RHO, atol=1e-15)
    rng = np.random.default_rng(0)
    model = OpenSystemModel(random_hermitian(2, rng), (SIGMA_MINUS,), 0, 0.0)
    rho = random_density(2, rng, min_eig=0.05)
    assert np.allclose(step_sme(rho, model, 1e-3, 5.0), rho + adjoint_generator(model, rho) * 1e-3,
                       atol=1e-15)


def test_kraus_step_agrees_to_leading_order_and_keeps_purity():
    model = OpenSystemModel(0.3 * SIGMA_X, (SIGMA_MINUS,), 0, 1.0)
    psi = np.array([1, 1j]) / math.sqrt(2)
    pure = np.outer(psi, psi.conj())
    out = step_sme_kraus(pure, model, 1e-4, 0.01)
    assert abs(np.trace(out @ out).real - 1) < 1e-14
    rho = random_density(2, np.random.default_rng(2), min_eig=0.1)
    diffs = [np.abs(step_sme_kraus(rho, model, dt, math.sqrt(dt)) - step_sme(rho, model, dt, math.sqrt(dt))).max()
             for dt in (1e-4, 1e-5)]
    assert diffs[0] / diffs[1] > 8  # O(dt) gap for dW of size sqrt(dt)


def test_sse_examples():
    psi = np.array([0.6, 0.8j])
    trivial = OpenSystemModel(np.zeros((2, 2)), (np.zeros((2, 2)),))
    assert np.allclose(step_sse(psi, trivial, 1e-3, 0.1), psi)
    model = OpenSystemModel(SIGMA_Z, (np.zeros((2, 2)),))
    expected = psi - 1j * SIGMA_Z @ psi * 1e-3
    assert np.allclose(step_sse(psi, model, 1e-3, 0.1), expected / np.linalg.norm(expected))
    with pytest.raises(EfficiencyNotUnit):
        step_sse(psi, DEPHASING.with_eta(0.5), 1e-3, 0.0)


def test_entropy_rate_terms_commuting_example():
    for variant, sigma in (("lambda", -1.68), ("paper", -2.0)):
        t = entropy_rate_terms(RHO, DEPHASING, variant, with_series=False)
        assert t.drift_lindblad == pytest.approx(0.0, abs=1e-15)
        assert t.martingale_coeff == pytest.approx(-0.84 * math.log(7 / 3), abs=1e-14)
        assert t.sigma == pytest.approx(sigma, abs=1e-14)
    assert entropy_rate_terms(np.eye(2) / 2, DEPHASING).martingale_coeff == pytest.approx(0, abs=1e-15)


def test_entropy_rate_terms_attach_series_and_scale_with_eta():
    rho = np.diag([0.55, 0.45]) + 0.02 * SIGMA_X
    model = OpenSystemModel(0.2 * SIGMA_X, (SIGMA_MINUS,), 0, 0.5)
    t = entropy_rate_terms(rho, model, "lambda")
    assert t.series_converged and t.sigma_series == pytest.approx(t.sigma, abs=1e-10)
    full = entropy_rate_terms(rho, model.with_eta(1.0), "lambda")
    assert t.sigma == pytest.approx(0.5 * full.sigma)
    assert t.martingale_coeff == pytest.approx(math.sqrt(0.5) * full.martingale_coeff)


def test_hamiltonian_only_rate_vanishes():
    rng = np.random.default_rng(1)
    model = OpenSystemModel(random_hermitian(3, rng))
    rho = random_density(3, rng, min_eig=0.05)
    assert abs(entropy_rate_terms(rho, model).drift_lindblad) < 1e-14
    assert abs(unconditional_entropy_rate(rho, model)) < 1e-14


def test_unconditional_rate_examples():
    assert unconditional_entropy_rate(np.eye(2) / 2, DEPHASING) == pytest.approx(0, abs=1e-15)
    decay = OpenSystemModel(np.zeros((2, 2)), (SIGMA_MINUS,))
    rate = unconditional_entropy_rate(RHO, decay)
    fd = entropy_rate_finite_difference(RHO, decay, 1e-6)
    assert abs(fd - rate) <= 1e-6 * abs(rate)
    with pytest.raises(NotFaithful):
        unconditional_entropy_rate(np.diag([1.0, 0.0]), decay)


def test_master_step_is_euler():
    rng = np.random.default_rng(5)
    model = OpenSystemModel(random_hermitian(2, rng), (SIGMA_MINUS,))
    rho = random_density(2, rng, min_eig=0.1)
    assert np.allclose(master_step(rho, model, 1e-3), rho + 1e-3 * adjoint_generator(model, rho))
    traj = master_equation(model, rho, 1e-3, 5)
    assert traj.shape == (6, 2, 2) and np.allclose(traj[1], master_step(rho, model, 1e-3))


def test_innovation_paths():
    p = InnovationPath.from_seed(3, 7, 1000, 1e-3)
    assert np.array_equal(p.increments, InnovationPath.from_seed(3, 7, 1000, 1e-3).increments)
    assert abs(np.var(p.increments) / 1e-3 - 1) < 0.15
    c = p.coarsen(2)
    assert c.dt == 2e-3 and np.allclose(c.increments, p.increments[0::2] + p.increments[1::2])
    m = innovation_matrix(3, 8, 1000, 1e-3)
    assert np.array_equal(m[7], p.increments)


def test_config_validation():
    with pytest.raises(ValueError):
        TrajectoryConfig(0.0, 1.0)
    with pytest.raises(ValueError):
        TrajectoryConfig(0.2, 1.0)
    with pytest.raises(ValueError):
        TrajectoryConfig(1e-3, 1.0, scheme="rk4")
    assert TrajectoryConfig(1e-3, 0.5).n_steps == 500


def test_empty_ensemble():
    run = simulate(TrajectoryConfig(1e-3, 0.01, n_trajectories=0), DEPHASING, RHO)
    assert run.n_trajectories == 0 and run.rho.shape[0] == 0


def test_eta_zero_run_equals_master_equation():
    model = OpenSystemModel(0.5 * SIGMA_X, (SIGMA_MINUS,), 0, 0.0)
    cfg = TrajectoryConfig(1e-3, 0.05, seed=1, n_trajectories=3)
    run = simulate(cfg, model, RHO)
    me = master_equation(model, RHO, 1e-3, cfg.n_steps)
    for i in range(3):
        assert np.abs(run.rho[i] - me[:-1]).max() <= 1e-13
        assert np.abs(run.rho_final[i] - me[-1]).max() <= 1e-13


def test_frames_and_determinism_across_worker_counts(monkeypatch):
    cfg = TrajectoryConfig(1e-3, 0.05, seed=4, n_trajectories=5, record_every=5)
    monkeypatch.setenv("TRAJENT_THREADS", "1")
    a = simulate(cfg, DEPHASING, RHO)
    monkeypatch.setenv("TRAJENT_THREADS", "4")
    b = simulate(cfg, DEPHASING, RHO)
    for k in a.series:
        assert np.array_equal(a.series[k], b.series[k], equal_nan=True)
    frames = a.frames(2)
    assert len(frames) == 10 and frames[1].t == pytest.approx(5e-3)
    f = frames[0]
    assert f.dS_pred == pytest.approx((f.dS_drift_lindblad + f.dS_sigma) * 1e-3
                                      + f.dS_martingale_coeff * f.dI)
    assert f.dS_sigma == pytest.approx(-1.68)


def test_unfaithful_trajectory_is_named():
    model = OpenSystemModel(np.zeros((2, 2)), (SIGMA_MINUS,))
    cfg = TrajectoryConfig(1e-3, 0.01, n_trajectories=2)
    with pytest.raises(NotFaithful, match="trajectory 0"):
        simulate(cfg, model, np.diag([1.0, 0.0]))


def test_adjudication_report_structure():
    verdicts = adjudicate_variants(DEPHASING, RHO, t_final=0.05, dt=1e-3, n_trajectories=10)
    assert [v.variant for v in verdicts] == ["paper", "lambda"]
    for v in verdicts:
        assert v.ratio == pytest.approx(v.rms_coarse / v.rms_fine)
        assert v.passes == (v.ratio_ok and v.bias_ok)
