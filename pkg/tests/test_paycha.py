import math
import warnings

import numpy as np
import pytest

from trajent import paycha
from trajent.errors import NotFaithful, OrderOverflow
from trajent.opalg import (SIGMA_X, SIGMA_Z, density_with_spectrum, random_density,
                           random_hermitian, spectral_apply)
from trajent.paycha import (SigmaVariant, TruncationWarning, entropy_derivative,
                            log_divided_difference, paycha_components, paycha_term,
                            sigma_regrouped, sigma_series, sigma_series_from_coefficient,
                            sigma_spectral_oracle)

RHO = np.diag([0.7, 0.3]).astype(complex)


def f(z):
    return -z * np.log(z)


@pytest.mark.parametrize("m, expected", [(0, 0.5 * math.log(2)), (1, -(1 + math.log(0.5))),
                                         (2, -2.0), (5, 96.0)])
def test_derivative_table(m, expected):
    assert entropy_derivative(m, 0.5) == pytest.approx(expected, rel=1e-14)


def test_derivative_matches_finite_difference():
    h = 1e-4
    for m in (2, 3, 4):
        fd = (entropy_derivative(m - 1, 0.4 + h) - entropy_derivative(m - 1, 0.4 - h)) / (2 * h)
        assert fd == pytest.approx(entropy_derivative(m, 0.4), rel=1e-6)


def test_log_mode_continuity_and_overflow():
    direct = math.factorial(19) * (-1 / 0.7) ** 20
    assert entropy_derivative(21, 0.7) == pytest.approx(direct, rel=1e-12)
    with pytest.raises(OrderOverflow):
        entropy_derivative(400, 1e-3)
    with pytest.raises(ValueError):
        entropy_derivative(2, 0.0)


def test_scalar_paycha_terms():
    rho, eps = np.array([[0.5]]), np.array([[0.1]])
    terms = [paycha_term(rho, eps, n, k_max=5)[0, 0].real for n in range(3)]
    assert terms == pytest.approx([0.346574, -0.030685, -0.010000], abs=5e-7)
    taylor = f(0.5) + entropy_derivative(1, 0.5) * 0.1 + 0.5 * entropy_derivative(2, 0.5) * 0.01
    assert sum(terms) == pytest.approx(taylor, abs=1e-15)
    # 0.305889 is the sum of the rounded terms; the exact sum is 0.3058883
    assert sum(terms) == pytest.approx(0.305889, abs=1e-6)
    assert f(0.6) == pytest.approx(0.306495, abs=5e-7)


def test_zero_perturbation():
    rho = random_density(3, np.random.default_rng(1), min_eig=0.05)
    t0 = paycha_term(rho, np.zeros((3, 3)), 0)
    assert np.allclose(t0, spectral_apply(rho, f))
    for n in (1, 2):
        assert np.abs(paycha_term(rho, np.zeros((3, 3)), n, k_max=6)).max() == 0


def test_commuting_inputs_reduce_to_scalar_taylor():
    w, e = np.array([0.6, 0.3, 0.1]), np.array([0.05, -0.02, 0.01])
    rho, eps = np.diag(w).astype(complex), np.diag(e).astype(complex)
    for n in (1, 2):
        got = np.diag(paycha_term(rho, eps, n, k_max=8)).real
        expected = [entropy_derivative(n, wi) * ei ** n / math.factorial(n) for wi, ei in zip(w, e)]
        assert np.allclose(got, expected, atol=1e-15)


def test_first_order_only_k0_survives_under_trace():
    rng = np.random.default_rng(6)
    rho = density_with_spectrum(rng.uniform(1, 1.5, 3), rng)
    eps = 0.01 * random_hermitian(3, rng)
    for ks, term in paycha_components(rho, eps, 1, k_max=12):
        if ks[0] >= 1:
            assert abs(np.trace(term)) <= 1e-12


def test_second_order_expansion_of_entropy():
    # with ad = [rho, .] and derivatives on the left the expansion holds under the trace
    rng = np.random.default_rng(8)
    rho = density_with_spectrum(rng.uniform(1, 1.4, 2), rng)
    for scale in (1e-3, 5e-4):
        eps = scale * random_hermitian(2, np.random.default_rng(1))
        approx = sum(np.trace(paycha_term(rho, eps, n, k_max=30)).real for n in range(3))
        exact = np.trace(spectral_apply(rho + eps, f)).real
        assert abs(approx - exact) < 20 * scale ** 3


def test_truncation_warning():
    rng = np.random.default_rng(2)
    rho = density_with_spectrum([1.0, 30.0], rng)
    with pytest.warns(TruncationWarning):
        paycha_term(rho, random_hermitian(2, rng), 1, k_max=3)


def test_sigma_commuting_examples():
    est = sigma_series(RHO, SIGMA_Z, 1.0, variant="paper")
    assert est.shells[0] == pytest.approx(-2.0, abs=1e-14)
    assert np.abs(est.shells[1:]).max() <= 1e-12
    assert est.converged and est.value == pytest.approx(-2.0, abs=1e-12)
    lam = sigma_series(RHO, SIGMA_Z, 1.0, variant="lambda")
    assert lam.value == pytest.approx(-1.68, abs=1e-12)
    assert sigma_series(RHO, SIGMA_Z, 0.0).value == 0.0
    assert sigma_regrouped(RHO, SIGMA_Z, 1.0).value == pytest.approx(-2.0, abs=1e-12)


def test_variants_differ_by_lambda_squared():
    rng = np.random.default_rng(4)
    rho = density_with_spectrum(rng.uniform(1, 1.5, 3), rng)
    L = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    L /= np.linalg.norm(L, 2)
    lam = np.trace(L @ rho + rho @ L.conj().T).real
    pap = sigma_series(rho, L, 0.7, variant="paper").value
    wl = sigma_series(rho, L, 0.7, variant="lambda").value
    assert pap - wl == pytest.approx(-0.7 * lam ** 2 / 2, abs=1e-10)


def test_identity_collapse_operator():
    rho = random_density(3, np.random.default_rng(3), min_eig=0.2)
    rho = density_with_spectrum([1.0, 1.2, 1.5], np.random.default_rng(3))
    assert sigma_regrouped(rho, np.eye(3), 0.6).value == pytest.approx(-1.2, abs=1e-10)
    assert sigma_series(rho, np.eye(3), 0.6, variant="paper").value == pytest.approx(-1.2, abs=1e-10)


def test_oracle_examples():
    b = np.diag([0.84, -0.84])
    assert sigma_spectral_oracle(RHO, b, 1.0) == pytest.approx(-1.68, abs=1e-14)
    assert sigma_spectral_oracle(RHO, SIGMA_X, 1.0) == pytest.approx(-math.log(7 / 3) / 0.4, abs=1e-14)


def _second_derivative_5pt(g, s):
    return (-g(2 * s) + 16 * g(s) - 30 * g(0.0) + 16 * g(-s) - g(-2 * s)) / (12 * s * s)


@pytest.mark.parametrize("seed", [None, 10])
def test_oracle_against_second_difference(seed):
    if seed is None:
        rho, b = RHO, SIGMA_X
    else:
        rng = np.random.default_rng(seed)
        rho = density_with_spectrum(rng.uniform(1, 1.6, 3), rng)
        b = random_hermitian(3, rng)
        b -= np.trace(b) / 3 * np.eye(3)
        b /= np.linalg.norm(b, 2)

    def g(t):
        return float(np.trace(spectral_apply(rho + t * b, f)).real)

    # five-point stencil: the three-point one carries an O(s^2) error near 1e-6
    second = _second_derivative_5pt(g, 1e-3)
    assert 0.5 * second == pytest.approx(sigma_spectral_oracle(rho, b, 1.0), abs=1e-6)


def test_log_divided_difference_confluent_limit():
    a = np.array([0.3, 0.3, 0.3])
    b = a + np.array([0.0, 1e-9, 1e-3])
    exact = np.where(a == b, 1 / a, (np.log(a) - np.log(b)) / np.where(a == b, 1, a - b))
    got = log_divided_difference(a, b)
    assert got[0] == pytest.approx(1 / 0.3, rel=1e-15)
    assert got[1] == pytest.approx(1 / 0.3, rel=1e-8)
    assert got[2] == pytest.approx(exact[2], rel=1e-12)


def test_regrouped_matches_series_shellwise_seed_5():
    rng = np.random.default_rng(5)
    rho = density_with_spectrum(rng.uniform(1, 1.6, 2), rng)
    L = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    a = sigma_series(rho, L, 1.0, variant="paper").shells
    b = sigma_regrouped(rho, L, 1.0).shells
    assert np.abs(a - b).max() <= 1e-10


def test_ill_conditioned_state_is_flagged_with_oracle():
    rng = np.random.default_rng(0)
    rho = density_with_spectrum([1.0, 9.0], rng)
    est = sigma_series(rho, SIGMA_X + 0.3 * SIGMA_Z, 1.0, k_max=30)
    assert est.diverged and not est.converged
    b = paycha.martingale_coefficient(rho, SIGMA_X + 0.3 * SIGMA_Z, "paper")
    assert est.oracle == pytest.approx(sigma_spectral_oracle(rho, b, 1.0))


def test_series_requires_faithful_state():
    with pytest.raises(NotFaithful):
        sigma_series(np.diag([1.0, 0.0]), SIGMA_X, 1.0)


def test_variant_parsing():
    assert SigmaVariant.parse("paper") is SigmaVariant.PAPER
    assert SigmaVariant.parse(SigmaVariant.WITH_LAMBDA) is SigmaVariant.WITH_LAMBDA
    with pytest.raises(ValueError):
        SigmaVariant.parse("nonsense")


def test_coefficient_table():
    assert paycha.sigma_coefficient(0, 0) == 0.5
    assert paycha.sigma_coefficient(1, 1) == pytest.approx(2 / (2 * 4))
    k1, k2 = 12, 13
    direct = math.comb(k1 + k2, k1) / ((k1 + 1) * (k1 + k2 + 2))
    assert paycha.sigma_coefficient(k1, k2) == pytest.approx(direct, rel=1e-12)


def test_explicit_coefficient_entry_point():
    rho = np.diag([0.55, 0.45]).astype(complex)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        est = sigma_series_from_coefficient(rho, SIGMA_X, 1.0)
    assert est.converged
    assert est.value == pytest.approx(-math.log(0.55 / 0.45) / 0.1, abs=1e-10)


def test_spectral_ratio_above_two_diverges():
    # the coupled pair (0.7, 0.3) lies outside the convergence domain
    est = sigma_series_from_coefficient(RHO, SIGMA_X, 1.0)
    assert est.diverged and not est.converged
    assert est.oracle == pytest.approx(-math.log(7 / 3) / 0.4, abs=1e-14)
