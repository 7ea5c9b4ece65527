"""Noncommutative Taylor expansion of f(z) = -z ln z and the entropy-production term.

The production term of the conditional-entropy rate is the series

    Sigma(rho) = eta * sum_{k1,k2} c(k1, k2) tr{ (-1/rho)^(k1+k2+1) ad^k1(B) ad^k2(B) }

with ``c(k1, k2) = binom(k1+k2, k1) / ((k1+1)(k1+k2+2))``. Two choices of
``B`` are supported (:class:`SigmaVariant`). The series is summed in shells
of constant ``k1 + k2``; :func:`sigma_spectral_oracle` evaluates the same
second-order functional in closed form from divided differences.
"""

from __future__ import annotations

import enum
import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .config import DEFAULT
from .errors import OrderOverflow
from .opalg import (
    ad_powers,
    check_faithful,
    dag,
    hermitian_eig,
    matrix_function_psd,
)

_LOG_MODE_ORDER = 20
_LOG_MAX = 700.0


class SigmaVariant(enum.Enum):
    """Which martingale coefficient enters the production series.

    ``PAPER``: B = L rho + rho L^+.
    ``WITH_LAMBDA``: B = L rho + rho L^+ - lambda rho.
    """

    PAPER = "paper"
    WITH_LAMBDA = "lambda"

    @classmethod
    def parse(cls, value) -> "SigmaVariant":
        if isinstance(value, cls):
            return value
        for v in cls:
            if value in (v.value, v.name, v.name.lower()):
                return v
        raise ValueError(f"unknown sigma variant {value!r}")


class TruncationWarning(RuntimeWarning):
    pass


# -- derivative table -------------------------------------------------------

def log_entropy_derivative(m: int, z):
    """Sign and log-magnitude of the m-th derivative of -z ln z (m >= 2)."""
    if m < 2:
        raise ValueError("log form only exists for m >= 2")
    z = np.asarray(z, dtype=float)
    sign = -1.0 if (m - 1) % 2 else 1.0
    return sign, math.lgamma(m - 1) - (m - 1) * np.log(z)


def entropy_derivative(m: int, z):
    """m-th derivative of f(z) = -z ln z at z > 0 (vectorised over z)."""
    if m < 0:
        raise ValueError("derivative order must be nonnegative")
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise ValueError("entropy derivative needs z > 0")
    if m == 0:
        out = -z * np.log(z)
    elif m == 1:
        out = -(1.0 + np.log(z))
    elif m <= _LOG_MODE_ORDER:
        out = math.factorial(m - 2) * (-1.0 / z) ** (m - 1)
    else:
        sign, logmag = log_entropy_derivative(m, z)
        if np.any(logmag > _LOG_MAX):
            raise OrderOverflow(f"derivative of order {m} overflows at z={np.min(z):.3e}")
        out = sign * np.exp(logmag)
    return float(out) if out.ndim == 0 else out


# -- general Paycha term ----------------------------------------------------

def _compositions(n: int, k_max: int):
    for ks in itertools.product(range(k_max + 1), repeat=n):
        if sum(ks) <= k_max:
            yield ks


def paycha_components(rho, eps, n: int, *, k_max: int = DEFAULT.k_max,
                      derivative=entropy_derivative, floor: float = DEFAULT.faithful_floor):
    """Yield ``(ks, matrix)`` for every summand of the order-n Paycha term.

    The summand for ``ks = (k1, ..., kn)`` is

        f^(K+n)(rho) / prod_j (k1+...+kj + j) * prod_i ad^ki(eps) / ki!

    with ``K = sum(ks)``, truncated at ``K <= k_max``.
    """
    rho = np.asarray(rho, dtype=complex)
    sd = hermitian_eig(rho)
    check_faithful(sd.eigenvalues, floor)
    if n == 0:
        yield (), sd.apply(lambda w: derivative(0, w))
        return
    ads = ad_powers(rho, eps, k_max)
    fmat = {}
    for ks in _compositions(n, k_max):
        order = sum(ks) + n
        if order not in fmat:
            fmat[order] = sd.apply(lambda w: np.asarray(derivative(order, w), dtype=float))
        denom = 1.0
        running = 0
        for j, k in enumerate(ks, start=1):
            running += k
            denom *= (running + j) * math.factorial(k)
        term = fmat[order]
        for k in ks:
            term = term @ ads[k]
        yield ks, term / denom


def paycha_term(rho, eps, n: int, *, k_max: int = DEFAULT.k_max,
                derivative=entropy_derivative, floor: float = DEFAULT.faithful_floor,
                conv_tol: float = DEFAULT.conv_tol) -> np.ndarray:
    """Order-n term of the Paycha expansion of ``f(rho + eps)``.

    A :class:`TruncationWarning` is emitted when the last shell
    (``sum(ks) == k_max``) is larger than ``conv_tol`` in max norm.
    """
    total = None
    last_shell = 0.0
    for ks, term in paycha_components(rho, eps, n, k_max=k_max, derivative=derivative, floor=floor):
        total = term if total is None else total + term
        if n > 0 and sum(ks) == k_max:
            last_shell = max(last_shell, float(np.abs(term).max()))
    if n > 0 and k_max > 0 and last_shell > conv_tol:
        warnings.warn(f"Paycha order-{n} term not converged at k_max={k_max} "
                      f"(last shell {last_shell:.2e})", TruncationWarning, stacklevel=2)
    return total


# -- the production series --------------------------------------------------

def sigma_coefficient(k1: int, k2: int) -> float:
    """binom(k1+k2, k1) / ((k1+1)(k1+k2+2)), log-domain above order 20."""
    k = k1 + k2
    if k > _LOG_MODE_ORDER:
        logc = math.lgamma(k + 1) - math.lgamma(k1 + 1) - math.lgamma(k2 + 1)
        return math.exp(logc - math.log(k1 + 1) - math.log(k + 2))
    return math.comb(k, k1) / ((k1 + 1) * (k + 2))


def martingale_coefficient(rho, L, variant=SigmaVariant.WITH_LAMBDA) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    L = np.asarray(L, dtype=complex)
    b = L @ rho + rho @ dag(L)
    if SigmaVariant.parse(variant) is SigmaVariant.WITH_LAMBDA:
        lam = np.trace(b, axis1=-2, axis2=-1).real
        b = b - lam[..., None, None] * rho
    return b


@dataclass
class SigmaEstimate:
    """Shell-wise partial sums of the production series.

    ``partial_sums[K]`` is the sum of shells ``0..K``. ``oracle`` is only
    filled when the series failed to converge.
    """

    partial_sums: np.ndarray
    shells: np.ndarray
    converged: bool
    diverged: bool
    tail_estimate: float
    k_max: int
    variant: SigmaVariant | None = None
    oracle: float | None = None

    @property
    def value(self) -> float:
        return float(self.partial_sums[-1])


def _diagnose(shells: np.ndarray, conv_tol: float):
    mags = np.abs(shells)
    converged = len(shells) >= 2 and mags[-1] <= conv_tol
    diverged = False
    for i in range(3, len(mags)):
        if mags[i] > mags[i - 1] > mags[i - 2] > mags[i - 3] and mags[i] > conv_tol:
            diverged = True
            break
    if len(mags) >= 2 and mags[-2] > 0 and mags[-1] < mags[-2]:
        r = mags[-1] / mags[-2]
        tail = mags[-1] * r / (1 - r)
    elif len(mags) >= 2 and mags[-1] == 0:
        tail = 0.0
    else:
        tail = math.inf
    return converged, diverged, tail


def _finish(shells, eta, k_max, conv_tol, variant, oracle_fn):
    shells = eta * np.asarray(shells)
    converged, diverged, tail = _diagnose(shells, conv_tol)
    est = SigmaEstimate(np.cumsum(shells), shells, converged, diverged, tail, k_max, variant)
    if not converged:
        est.oracle = oracle_fn()
    return est


def sigma_series_from_coefficient(rho, b, eta: float, *, k_max: int = DEFAULT.k_max,
                                  conv_tol: float = DEFAULT.conv_tol,
                                  floor: float = DEFAULT.faithful_floor,
                                  variant: SigmaVariant | None = None) -> SigmaEstimate:
    """Production series for an explicit martingale coefficient ``b``."""
    rho = np.asarray(rho, dtype=complex)
    b = np.asarray(b, dtype=complex)
    neg_inv = -matrix_function_psd(rho, "inverse", floor=floor)
    ads = ad_powers(rho, b, k_max)
    ads_t = [a.T for a in ads]
    shells = []
    power = neg_inv
    for k in range(k_max + 1):
        shell = 0.0
        for k1 in range(k + 1):
            k2 = k - k1
            # tr(P A1 A2) without forming the full product
            shell += sigma_coefficient(k1, k2) * np.sum((power @ ads[k1]) * ads_t[k2])
        shells.append(shell.real)
        power = power @ neg_inv
    return _finish(shells, eta, k_max, conv_tol, variant,
                   lambda: sigma_spectral_oracle(rho, b, eta, floor=floor))


def sigma_series(rho, L, eta: float, *, k_max: int = DEFAULT.k_max,
                 variant=SigmaVariant.PAPER, conv_tol: float = DEFAULT.conv_tol,
                 floor: float = DEFAULT.faithful_floor) -> SigmaEstimate:
    """Truncated production series for collapse operator ``L``."""
    variant = SigmaVariant.parse(variant)
    b = martingale_coefficient(rho, L, variant)
    return sigma_series_from_coefficient(rho, b, eta, k_max=k_max, conv_tol=conv_tol,
                                         floor=floor, variant=variant)


def sigma_regrouped(rho, L, eta: float, *, k_max: int = DEFAULT.k_max,
                    conv_tol: float = DEFAULT.conv_tol,
                    floor: float = DEFAULT.faithful_floor) -> SigmaEstimate:
    """The ``PAPER`` series rewritten as traces of ``rho^-m L1 rho^n L2``.

    Uses ``ad^k(L rho + rho L^+) = ad^k(L) rho + rho ad^k(L^+)`` so that each
    shell is a sum of four trace families over nested commutators of ``L``
    and ``L^+`` alone.
    """
    rho = np.asarray(rho, dtype=complex)
    L = np.asarray(L, dtype=complex)
    inv = matrix_function_psd(rho, "inverse", floor=floor)
    a = ad_powers(rho, L, k_max)
    c = ad_powers(rho, dag(L), k_max)
    # powers[m] = rho^m for m in [-(k_max+1), 2]
    powers = {0: np.eye(rho.shape[0], dtype=complex), 1: rho, 2: rho @ rho}
    for m in range(1, k_max + 2):
        powers[-m] = powers[-m + 1] @ inv

    def tr(x, y):
        return np.sum(x * y.T)

    shells = []
    for k in range(k_max + 1):
        sign = -1.0 if k % 2 == 0 else 1.0  # (-1)^(k+1)
        shell = 0.0
        for k1 in range(k + 1):
            k2 = k - k1
            a1, a2, c1, c2 = a[k1], a[k2], c[k1], c[k2]
            val = (tr(powers[-k] @ a1 @ rho, a2)
                   + tr(powers[-k - 1] @ a1 @ powers[2], c2)
                   + tr(powers[-k + 1] @ c1, a2)
                   + tr(powers[-k] @ c1 @ rho, c2))
            shell += sigma_coefficient(k1, k2) * val
        shells.append(sign * shell.real)
    b = L @ rho + rho @ dag(L)
    return _finish(shells, eta, k_max, conv_tol, SigmaVariant.PAPER,
                   lambda: sigma_spectral_oracle(rho, b, eta, floor=floor))


# -- closed-form oracle -----------------------------------------------------

def log_divided_difference(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(ln a - ln b) / (a - b), with the confluent limit 1/a."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    diff = a - b
    close = np.abs(diff) <= 1e-6 * np.maximum(a, b)
    safe = np.where(close, 1.0, diff)
    far = (np.log(a) - np.log(b)) / safe
    # series in d = diff / (a + b): 2/(a+b) * (1 + d^2/3 + d^4/5)
    s = a + b
    d2 = (diff / s) ** 2
    near = 2.0 / s * (1.0 + d2 / 3.0 + d2 * d2 / 5.0)
    return np.where(close, near, far)


def spectral_sigma(eigenvalues: np.ndarray, eigenvectors: np.ndarray, b: np.ndarray,
                   eta) -> np.ndarray:
    """Divided-difference evaluation of the production term (stack friendly)."""
    bt = dag(eigenvectors) @ b @ eigenvectors
    w = eigenvalues
    kernel = log_divided_difference(w[..., :, None], w[..., None, :])
    val = np.sum(np.abs(bt) ** 2 * kernel, axis=(-2, -1))
    return -0.5 * np.asarray(eta) * val


def sigma_spectral_oracle(rho, b, eta: float, *, floor: float = DEFAULT.faithful_floor) -> float:
    """-(eta/2) [ sum_{i!=j} |b_ij|^2 (ln l_i - ln l_j)/(l_i - l_j) + sum_i b_ii^2 / l_i ].

    ``b_ij`` are the entries of ``b`` in the eigenbasis of ``rho``. This is
    half the second derivative of tr(-rho ln rho) along ``b``, times eta.
    """
    sd = hermitian_eig(rho)
    check_faithful(sd.eigenvalues, floor)
    return float(spectral_sigma(sd.eigenvalues, sd.eigenvectors, np.asarray(b, complex), eta))
