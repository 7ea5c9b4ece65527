"""Dense operator algebra for small Hilbert spaces.

All routines accept a single ``(d, d)`` matrix or a stack ``(..., d, d)``;
the trajectory simulator relies on the stacked form to advance whole
ensembles at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DEFAULT
from .errors import (
    DimensionMismatch,
    InvalidState,
    NoConvergence,
    NotFaithful,
    NotHermitian,
    StateRepairFailed,
)

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
# lowering operator: maps (0, 1) to (1, 0), so (1, 0) is the ground state
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_PLUS = SIGMA_MINUS.T.copy()


def dag(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2).conj()


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def trace(a: np.ndarray) -> np.ndarray:
    return np.trace(a, axis1=-2, axis2=-1)


def max_abs(a: np.ndarray) -> np.ndarray:
    return np.abs(a).max(axis=(-2, -1))


def _check_square(*mats: np.ndarray) -> int:
    dim = None
    for m in mats:
        if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
            raise DimensionMismatch(f"expected square matrix, got shape {m.shape}")
        if dim is None:
            dim = m.shape[-1]
        elif m.shape[-1] != dim:
            raise DimensionMismatch(f"dimension {m.shape[-1]} does not match {dim}")
    return dim


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues (ascending) and unitary eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def apply(self, func) -> np.ndarray:
        """Return ``U func(Lambda) U^dagger``."""
        u = self.eigenvectors
        return (u * func(self.eigenvalues)[..., None, :]) @ dag(u)

    def reconstruct(self) -> np.ndarray:
        return self.apply(lambda w: w)


def _jacobi_rotate(a, v, p, q, scale):
    apq = a[..., p, q]
    g = np.abs(apq)
    active = g > 1e-300 + 1e-18 * scale
    if not np.any(active):
        return
    g_safe = np.where(active, g, 1.0)
    phase = np.where(active, apq / g_safe, 1.0)
    app = a[..., p, p].real
    aqq = a[..., q, q].real
    theta = (aqq - app) / (2.0 * g_safe)
    t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
    t = np.where(active, t, 0.0)
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c
    # G = diag(1, conj(phase)) @ [[c, s], [-s, c]] acting on the (p, q) plane
    g2 = np.empty(apq.shape + (2, 2), dtype=complex)
    g2[..., 0, 0] = c
    g2[..., 0, 1] = s
    g2[..., 1, 0] = -s * phase.conj()
    g2[..., 1, 1] = c * phase.conj()
    idx = [p, q]
    a[..., :, idx] = a[..., :, idx] @ g2
    a[..., idx, :] = dag(g2) @ a[..., idx, :]
    v[..., :, idx] = v[..., :, idx] @ g2
    a[..., p, q] = np.where(active, 0.0, a[..., p, q])
    a[..., q, p] = np.where(active, 0.0, a[..., q, p])


def hermitian_eig(m: np.ndarray, *, herm_tol: float = DEFAULT.hermitian,
                  max_sweeps: int = DEFAULT.max_sweeps) -> SpectralDecomposition:
    """Cyclic Jacobi eigendecomposition of a Hermitian matrix (or stack).

    Raises
    ------
    NotHermitian
        If ``max|M - M^dagger|`` exceeds ``herm_tol * max(1, max|M|)``.
    NoConvergence
        If the off-diagonal mass has not vanished after ``max_sweeps``.
    """
    m = np.asarray(m, dtype=complex)
    d = _check_square(m)
    size = np.maximum(1.0, max_abs(m))
    if np.any(max_abs(m - dag(m)) > herm_tol * size):
        raise NotHermitian("matrix is not Hermitian within tolerance")
    a = 0.5 * (m + dag(m))
    v = np.broadcast_to(np.eye(d, dtype=complex), a.shape).copy()
    scale = np.sqrt((np.abs(a) ** 2).sum(axis=(-2, -1)))
    offmask = ~np.eye(d, dtype=bool)
    for _ in range(max_sweeps + 1):
        off = np.sqrt((np.abs(a[..., offmask]) ** 2).sum(axis=-1))
        if np.all(off <= 1e-15 * scale):
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                _jacobi_rotate(a, v, p, q, scale)
    else:
        raise NoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps")
    w = np.diagonal(a, axis1=-2, axis2=-1).real
    order = np.argsort(w, axis=-1)
    w = np.take_along_axis(w, order, axis=-1)
    v = np.take_along_axis(v, order[..., None, :], axis=-1)
    return SpectralDecomposition(w, v)


def spectral_apply(m: np.ndarray, func, **kw) -> np.ndarray:
    """``func`` applied to a Hermitian matrix through its eigenvalues."""
    return hermitian_eig(m, **kw).apply(func)


def expm_hermitian(m: np.ndarray) -> np.ndarray:
    return spectral_apply(m, np.exp)


def expm_antihermitian(x: np.ndarray) -> np.ndarray:
    """exp(X) for anti-Hermitian X, via the Hermitian matrix -iX."""
    return spectral_apply(-1j * np.asarray(x, dtype=complex), lambda w: np.exp(1j * w))


def _scalar_function(f):
    if callable(f):
        return f
    if f == "log":
        return np.log
    if f == "inverse":
        return lambda w: 1.0 / w
    if isinstance(f, tuple) and len(f) == 2 and f[0] == "power":
        p = f[1]
        return lambda w: w ** p
    raise ValueError(f"unknown matrix function tag {f!r}")


def check_faithful(eigenvalues: np.ndarray, floor: float = DEFAULT.faithful_floor) -> None:
    lo = np.min(eigenvalues)
    if lo < floor:
        raise NotFaithful(f"minimum eigenvalue {lo:.3e} below faithfulness floor {floor:.1e}")


def matrix_function_psd(rho: np.ndarray, f="log", *,
                        floor: float = DEFAULT.faithful_floor) -> np.ndarray:
    """``U f(Lambda) U^dagger`` for a faithful state.

    ``f`` is ``"log"``, ``"inverse"``, ``("power", p)`` or a vectorised
    callable on the eigenvalues.
    """
    func = _scalar_function(f)
    sd = hermitian_eig(rho)
    check_faithful(sd.eigenvalues, floor)
    return sd.apply(func)


def ad_pow(rho: np.ndarray, x: np.ndarray, k: int, *, k_max: int = 4 * DEFAULT.k_max) -> np.ndarray:
    """k-fold nested commutator ``[rho, [rho, ... [rho, X]]]``."""
    _check_square(rho, x)
    if k < 0 or k > k_max:
        raise ValueError(f"k={k} outside [0, {k_max}]")
    out = np.asarray(x, dtype=complex)
    for _ in range(k):
        out = commutator(rho, out)
    return out


def ad_powers(rho: np.ndarray, x: np.ndarray, k_max: int) -> list[np.ndarray]:
    """``[ad^0 X, ad^1 X, ..., ad^k_max X]``."""
    _check_square(rho, x)
    out = [np.asarray(x, dtype=complex)]
    for _ in range(k_max):
        out.append(commutator(rho, out[-1]))
    return out


def repair_density(m: np.ndarray, *, repair_tol: float = DEFAULT.repair_tol,
                   sd: SpectralDecomposition | None = None) -> np.ndarray:
    """Hermitize, clip small negative eigenvalues at zero, renormalise the trace.

    Works on stacks. Eigenvalues below ``-repair_tol`` (relative to the
    trace) raise :class:`StateRepairFailed`.
    """
    m = np.asarray(m, dtype=complex)
    h = 0.5 * (m + dag(m))
    tr = trace(h).real
    if np.any(tr <= 0):
        raise StateRepairFailed("non-positive trace")
    if sd is None:
        sd = hermitian_eig(h)
    w = sd.eigenvalues / tr[..., None]
    lo = w.min(axis=-1)
    if np.any(lo < -repair_tol):
        raise StateRepairFailed(f"negative eigenvalue {lo.min():.3e} beyond repair tolerance")
    neg = lo < 0
    if np.any(neg):
        clipped = sd.apply(lambda x: np.clip(x, 0.0, None))
        h = np.where(neg[..., None, None], clipped, h)
        tr = trace(h).real
    return h / tr[..., None, None]


def validate_density(m: np.ndarray, tol: float = 1e-12, *, repair: bool = False,
                     repair_tol: float = DEFAULT.repair_tol) -> np.ndarray:
    """Check (or repair) a density matrix and return it.

    With ``repair=False`` any Hermiticity, trace or positivity violation
    beyond ``tol`` raises :class:`InvalidState`. With ``repair=True`` the
    matrix is Hermitized and trace-normalised unconditionally, and negative
    eigenvalues are clipped if they lie within ``repair_tol``.
    """
    m = np.asarray(m, dtype=complex)
    _check_square(m)
    if not np.all(np.isfinite(m)):
        raise InvalidState("non-finite entries")
    if repair:
        return repair_density(m, repair_tol=repair_tol)
    herm = max_abs(m - dag(m))
    if np.any(herm > tol):
        raise InvalidState(f"not Hermitian (deviation {np.max(herm):.3e})")
    tr_err = np.abs(trace(m) - 1.0)
    if np.any(tr_err > tol):
        raise InvalidState(f"trace deviates from 1 by {np.max(tr_err):.3e}")
    lo = hermitian_eig(m).eigenvalues.min(axis=-1)
    if np.any(lo < -tol):
        raise InvalidState(f"negative eigenvalue {np.min(lo):.3e}")
    return m


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))


def random_hermitian(d: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return 0.5 * (z + z.conj().T)


def random_density(d: int, rng: np.random.Generator, *, rank: int | None = None,
                   min_eig: float = 0.0) -> np.ndarray:
    """Ginibre-distributed state, optionally mixed with I/d to lift the spectrum."""
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = g @ g.conj().T
    rho /= np.trace(rho).real
    if min_eig > 0:
        rho = (1 - d * min_eig) * rho + min_eig * np.eye(d)
    return 0.5 * (rho + rho.conj().T)


def density_with_spectrum(eigenvalues, rng: np.random.Generator) -> np.ndarray:
    w = np.asarray(eigenvalues, dtype=float)
    w = w / w.sum()
    u = random_unitary(len(w), rng)
    rho = (u * w) @ u.conj().T
    return 0.5 * (rho + rho.conj().T)


def partial_trace(m: np.ndarray, dims: tuple[int, ...], keep) -> np.ndarray:
    """Partial trace of ``m`` on the tensor product ``dims`` (first factor outermost)."""
    keep = [keep] if isinstance(keep, int) else sorted(keep)
    n = len(dims)
    t = np.asarray(m).reshape(tuple(dims) * 2)
    letters = "abcdefghijklmnopqrstuvwxyz"
    rows = list(letters[:n])
    cols = list(letters[n:2 * n])
    for i in range(n):
        if i not in keep:
            cols[i] = rows[i]
    out = "".join(rows[i] for i in keep) + "".join(cols[i] for i in keep)
    r = np.einsum("".join(rows) + "".join(cols) + "->" + out, t)
    dk = int(np.prod([dims[i] for i in keep]))
    return r.reshape(dk, dk)
