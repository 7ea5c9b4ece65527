"""Entropic functionals of density matrices, in nats."""

from __future__ import annotations

import numpy as np

from .config import DEFAULT
from .opalg import hermitian_eig, partial_trace


def _xlogx(w: np.ndarray, floor: float) -> np.ndarray:
    w = np.where(w > floor, w, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(w > 0, w * np.log(np.where(w > 0, w, 1.0)), 0.0)


def entropy_from_eigenvalues(w: np.ndarray, *, floor: float = DEFAULT.zero_eigenvalue) -> np.ndarray:
    return -_xlogx(np.asarray(w), floor).sum(axis=-1)


def von_neumann_entropy(rho: np.ndarray, *, floor: float = DEFAULT.zero_eigenvalue):
    """S(rho) = -tr(rho ln rho); eigenvalues below ``floor`` count as zero.

    Works on a single state or a stack, returning a float or an array.
    """
    s = entropy_from_eigenvalues(hermitian_eig(rho).eigenvalues, floor=floor)
    return float(s) if np.ndim(s) == 0 else s


def relative_entropy(rho: np.ndarray, sigma: np.ndarray, *,
                     floor: float = DEFAULT.zero_eigenvalue, support_tol: float = 1e-10) -> float:
    """D(rho || sigma) = tr(rho ln rho - rho ln sigma).

    Returns ``inf`` if rho has weight outside the support of sigma.
    """
    sr = hermitian_eig(rho)
    ss = hermitian_eig(sigma)
    neg_s = -entropy_from_eigenvalues(sr.eigenvalues, floor=floor)
    # weights of rho on the eigenvectors of sigma
    overlap = np.abs(ss.eigenvectors.conj().T @ sr.eigenvectors) ** 2
    weights = overlap @ np.where(sr.eigenvalues > floor, sr.eigenvalues, 0.0)
    ws = ss.eigenvalues
    kernel = ws <= floor
    if np.any(weights[kernel] > support_tol):
        return float("inf")
    logs = np.log(np.where(kernel, 1.0, ws))
    cross = float(np.sum(np.where(kernel, 0.0, weights * logs)))
    return float(neg_s - cross)


def mutual_information(rho_ab: np.ndarray, dims: tuple[int, int]) -> float:
    """I(a:b) = S(rho_a) + S(rho_b) - S(rho_ab), factor ``a`` outermost."""
    rho_a = partial_trace(rho_ab, dims, 0)
    rho_b = partial_trace(rho_ab, dims, 1)
    return von_neumann_entropy(rho_a) + von_neumann_entropy(rho_b) - von_neumann_entropy(rho_ab)


def mutual_information_divergence(rho_ab: np.ndarray, dims: tuple[int, int]) -> float:
    """The same quantity computed as D(rho_ab || rho_a (x) rho_b)."""
    rho_a = partial_trace(rho_ab, dims, 0)
    rho_b = partial_trace(rho_ab, dims, 1)
    return relative_entropy(rho_ab, np.kron(rho_a, rho_b))
