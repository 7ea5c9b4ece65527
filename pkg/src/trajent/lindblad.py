"""Lindblad generator, its trace-dual, and the open-system model record."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch
from .opalg import dag


@dataclass(frozen=True)
class OpenSystemModel:
    """Hamiltonian, collapse operators and the monitored channel.

    ``collapse_ops[monitored_index]`` is the operator seen by the homodyne
    detector with efficiency ``eta``. Every other collapse operator only
    contributes dissipation.
    """

    H: np.ndarray
    collapse_ops: tuple = field(default_factory=tuple)
    monitored_index: int = 0
    eta: float = 1.0

    def __post_init__(self):
        h = np.asarray(self.H, dtype=complex)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise DimensionMismatch(f"H must be square, got {h.shape}")
        if np.abs(h - h.conj().T).max() > 1e-12:
            raise ValueError("H is not Hermitian")
        ops = tuple(np.asarray(c, dtype=complex) for c in self.collapse_ops)
        for c in ops:
            if c.shape != h.shape:
                raise DimensionMismatch(f"collapse operator shape {c.shape} != {h.shape}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta={self.eta} outside [0, 1]")
        if ops and not 0 <= self.monitored_index < len(ops):
            raise ValueError(f"monitored_index {self.monitored_index} invalid for {len(ops)} channels")
        object.__setattr__(self, "H", h)
        object.__setattr__(self, "collapse_ops", ops)

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @property
    def L(self) -> np.ndarray:
        """The monitored collapse operator (zero if the model has none)."""
        if not self.collapse_ops:
            return np.zeros_like(self.H)
        return self.collapse_ops[self.monitored_index]

    def with_eta(self, eta: float) -> "OpenSystemModel":
        return OpenSystemModel(self.H, self.collapse_ops, self.monitored_index, eta)


def _check(model: OpenSystemModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.shape[-2:] != model.H.shape:
        raise DimensionMismatch(f"operator shape {x.shape} does not match model dim {model.dim}")
    return x


def generator(model: OpenSystemModel, x: np.ndarray) -> np.ndarray:
    """Heisenberg-picture generator L(X) = -i[X, H] + sum_k L_k^+ X L_k - {L_k^+ L_k, X}/2."""
    x = _check(model, x)
    out = -1j * (x @ model.H - model.H @ x)
    for c in model.collapse_ops:
        cd = c.conj().T
        cdc = cd @ c
        out = out + cd @ x @ c - 0.5 * (cdc @ x + x @ cdc)
    return out


def adjoint_generator(model: OpenSystemModel, rho: np.ndarray) -> np.ndarray:
    """Schrodinger-picture generator L*(rho) = sum_k L_k rho L_k^+ + K rho + rho K^+.

    Here ``K = -iH - sum_k L_k^+ L_k / 2``. Accepts stacks of states.
    """
    rho = _check(model, rho)
    k = -1j * model.H
    for c in model.collapse_ops:
        k = k - 0.5 * c.conj().T @ c
    out = k @ rho + rho @ k.conj().T
    for c in model.collapse_ops:
        out = out + c @ rho @ c.conj().T
    return out


def measurement_coefficient(model: OpenSystemModel, rho: np.ndarray, *, subtract_mean: bool = True):
    """Return ``(B, lambda)`` with ``B = L rho + rho L^+ - lambda rho``.

    ``lambda = tr(rho (L + L^+))``. With ``subtract_mean=False`` the
    ``lambda rho`` term is omitted from ``B``.
    """
    rho = _check(model, rho)
    L = model.L
    a = L @ rho + rho @ dag(L)
    lam = np.trace(a, axis1=-2, axis2=-1).real
    if subtract_mean:
        a = a - lam[..., None, None] * rho
    return a, lam
