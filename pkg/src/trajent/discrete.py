"""Repeated-interaction model with a qubit probe and exact record enumeration.

Operators on system (x) probe are stored as ``np.kron(system_op, probe_op)``.
The probe basis follows the block convention ``|1> = (1, 0)``,
``|0> = (0, 1)``, with probe state ``|0><0|`` by default and outcomes
``y = +-1`` of the measurement ``M_+- = |+-><+-|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .config import DEFAULT
from .entropy import entropy_from_eigenvalues, mutual_information, von_neumann_entropy
from .errors import BranchLimitExceeded, ProbeNotFaithful
from .lindblad import OpenSystemModel, adjoint_generator
from .opalg import dag, expm_antihermitian, hermitian_eig, partial_trace, trace

KET1 = np.array([1.0, 0.0], dtype=complex)
KET0 = np.array([0.0, 1.0], dtype=complex)
PROBE_GROUND = np.outer(KET0, KET0.conj())
RAISE = np.outer(KET1, KET0.conj())  # |1><0|
M_PLUS = 0.5 * np.array([[1, 1], [1, 1]], dtype=complex)
M_MINUS = 0.5 * np.array([[1, -1], [-1, 1]], dtype=complex)
MEASUREMENT = {1: M_PLUS, -1: M_MINUS}
MODES = ("exact", "first_order")


def one_step_unitary(H, L, tau: float, mode: str = "exact") -> np.ndarray:
    """exp{-i tau H (x) I + sqrt(tau) (L (x) |1><0| - L^+ (x) |0><1|)} or its first-order blocks.

    ``first_order`` returns ``(I + tau K) (x) I + sqrt(tau) L (x) |1><0| -
    sqrt(tau) L^+ (x) |0><1|`` with ``K = -L^+L/2 - iH``.
    """
    H = np.asarray(H, dtype=complex)
    L = np.asarray(L, dtype=complex)
    d = H.shape[0]
    eye2 = np.eye(2)
    coupling = math.sqrt(tau) * (np.kron(L, RAISE) - np.kron(dag(L), dag(RAISE)))
    if mode == "exact":
        return expm_antihermitian(-1j * tau * np.kron(H, eye2) + coupling)
    if mode == "first_order":
        k = -0.5 * dag(L) @ L - 1j * H
        return np.kron(np.eye(d) + tau * k, eye2) + coupling
    raise ValueError(f"mode must be one of {MODES}")


def probe_input_deviation(H, L, tau: float) -> float:
    """max |(V_exact - V_first)(I (x) |0>)|, the part that acts on a ground-state probe."""
    d = np.asarray(H).shape[0]
    diff = one_step_unitary(H, L, tau, "exact") - one_step_unitary(H, L, tau, "first_order")
    embed = np.kron(np.eye(d), KET0[:, None])
    return float(np.abs(diff @ embed).max())


@dataclass(frozen=True)
class ProbeModel:
    """System coupled to a fresh qubit probe every ``tau``.

    In ``first_order`` mode the conditional maps are the leading-order
    expansions ``M_+- rho = rho/2 +- sqrt(tau)(L rho + rho L^+)/2 + tau L*(rho)/2``,
    which requires the ground-state probe.
    """

    H: np.ndarray
    L: np.ndarray
    tau: float
    probe_state: np.ndarray = None
    mode: str = "exact"

    def __post_init__(self):
        H = np.asarray(self.H, dtype=complex)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "L", np.asarray(self.L, dtype=complex))
        sigma = PROBE_GROUND if self.probe_state is None else np.asarray(self.probe_state, complex)
        object.__setattr__(self, "probe_state", sigma)
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.mode == "first_order" and not np.allclose(sigma, PROBE_GROUND, atol=1e-12):
            raise ValueError("first_order expansions assume the probe starts in |0><0|")

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @cached_property
    def V(self) -> np.ndarray:
        return one_step_unitary(self.H, self.L, self.tau, self.mode)

    @cached_property
    def V_exact(self) -> np.ndarray:
        return one_step_unitary(self.H, self.L, self.tau, "exact")

    @cached_property
    def lindblad(self) -> OpenSystemModel:
        return OpenSystemModel(self.H, (self.L,), 0, 1.0)

    @cached_property
    def kraus(self) -> dict:
        """Kraus operators of each conditional map in ``exact`` mode."""
        d = self.dim
        sd = hermitian_eig(self.probe_state)
        w, vecs = sd.eigenvalues, sd.eigenvectors
        out = {}
        for y, m in MEASUREMENT.items():
            mv = (np.kron(np.eye(d), m) @ self.V).reshape(d, 2, d, 2)
            ops = []
            for s, e in zip(w, vecs.T):
                if s <= 1e-15:
                    continue
                col = np.einsum("iajb,b->aij", mv, e) * math.sqrt(s)
                ops.extend(col)
            out[y] = np.array(ops)
        return out

    def apply(self, rho: np.ndarray, y: int) -> np.ndarray:
        """Unnormalised conditional map ``M_y rho`` (works on stacks)."""
        rho = np.asarray(rho, dtype=complex)
        if self.mode == "exact":
            k = self.kraus[y]
            return np.einsum("kij,...jl,kml->...im", k, rho, k.conj())
        a = self.L @ rho + rho @ dag(self.L)
        return 0.5 * rho + 0.5 * y * math.sqrt(self.tau) * a \
            + 0.5 * self.tau * adjoint_generator(self.lindblad, rho)

    def channel(self, rho: np.ndarray) -> np.ndarray:
        """Unconditional map, the sum of both conditional maps."""
        return self.apply(rho, 1) + self.apply(rho, -1)


def conditional_map(rho, probe: ProbeModel, y: int):
    """Return ``(M_y rho, p(y))``."""
    out = probe.apply(rho, y)
    return out, float(np.trace(out).real)


def unconditional_map(rho, probe: ProbeModel, n: int = 1) -> np.ndarray:
    out = np.asarray(rho, dtype=complex)
    for _ in range(n):
        out = probe.channel(out)
    return out


def joint_state(rho, probe: ProbeModel) -> np.ndarray:
    """V (rho (x) sigma) V^+ on system (x) probe, always with the exact unitary."""
    v = probe.V_exact
    return v @ np.kron(rho, probe.probe_state) @ dag(v)


def choi_matrix(probe: ProbeModel) -> np.ndarray:
    d = probe.dim
    blocks = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = 1.0
            blocks += np.kron(e, probe.channel(e))
    return blocks


# -- branch enumeration -----------------------------------------------------

@dataclass
class MeasurementBranch:
    record: tuple
    unnormalized_state: np.ndarray
    probability: float
    filtered_state: np.ndarray
    excluded: bool = False


def branch_arrays(rho0, probe: ProbeModel, n: int, *,
                  max_depth: int = DEFAULT.max_branch_depth):
    """All ``2**n`` records with their unnormalised states.

    Returns ``(records, states, probabilities)``; ``records[i, j]`` is
    ``y_{j+1}`` of branch ``i`` and the first outcome is the most
    significant bit of ``i`` (``+1`` before ``-1``).
    """
    if n > max_depth:
        raise BranchLimitExceeded(f"n={n} exceeds the branch limit {max_depth}")
    states = np.asarray(rho0, dtype=complex)[None]
    records = np.zeros((1, 0), dtype=int)
    for _ in range(n):
        states = np.stack([probe.apply(states, 1), probe.apply(states, -1)], axis=1)
        states = states.reshape((-1,) + states.shape[2:])
        nrec = records.shape[0]
        records = np.concatenate([
            np.repeat(records, 2, axis=0),
            np.tile(np.array([[1], [-1]]), (nrec, 1)),
        ], axis=1)
    probs = trace(states).real
    return records, states, probs


def _normalize(states, probs, rho0, floor):
    ok = probs > floor
    safe = np.where(ok, probs, 1.0)
    filtered = states / safe[:, None, None]
    filtered = np.where(ok[:, None, None], filtered, np.asarray(rho0, complex)[None])
    return filtered, ok


def enumerate_branches(rho0, probe: ProbeModel, n: int, *,
                       prob_floor: float = DEFAULT.prob_floor) -> list[MeasurementBranch]:
    records, states, probs = branch_arrays(rho0, probe, n)
    filtered, ok = _normalize(states, probs, rho0, prob_floor)
    return [MeasurementBranch(tuple(int(y) for y in records[i]), states[i], float(probs[i]),
                              filtered[i], not ok[i]) for i in range(len(probs))]


def record_string(record) -> str:
    return "".join("+" if y > 0 else "-" for y in record) or "."


# -- Holevo information -----------------------------------------------------

@dataclass
class HolevoInformation:
    """Holevo information of the first ``m`` outcomes about the state at step ``n``."""

    n: int
    m: int
    unconditional_entropy: float
    average_conditional_entropy: float
    via_entropy: float
    via_divergence: float
    excluded_weight: float

    @property
    def value(self) -> float:
        return self.via_entropy


def _conditioned(rho0, probe, n, m, prob_floor):
    _, states, probs = branch_arrays(rho0, probe, m)
    states = unconditional_map(states, probe, n - m) if n > m else states
    filtered, ok = _normalize(states, probs, rho0, prob_floor)
    return filtered[ok], probs[ok], float(probs[~ok].sum())


def average_conditional_entropy(rho0, probe: ProbeModel, n: int, m: int, *,
                                prob_floor: float = DEFAULT.prob_floor) -> float:
    filtered, probs, _ = _conditioned(rho0, probe, n, m, prob_floor)
    ent = entropy_from_eigenvalues(hermitian_eig(filtered).eigenvalues)
    return math.fsum(probs * ent)


def holevo_info(rho0, probe: ProbeModel, n: int, m: int, *,
                prob_floor: float = DEFAULT.prob_floor) -> HolevoInformation:
    """``S_n - Sbar_{n|m}`` and ``sum_y p(y) D(rho_{n|m}(y) || rho_n)``."""
    if not 0 <= m <= n:
        raise ValueError("need 0 <= m <= n")
    rho_n = unconditional_map(rho0, probe, n)
    filtered, probs, excluded = _conditioned(rho0, probe, n, m, prob_floor)
    ent = entropy_from_eigenvalues(hermitian_eig(filtered).eigenvalues)
    s_bar = math.fsum(probs * ent)
    s_n = von_neumann_entropy(rho_n)
    sd = hermitian_eig(rho_n)
    w = sd.eigenvalues
    support = w > DEFAULT.zero_eigenvalue
    # weights of each conditioned state on the eigenvectors of rho_n
    weights = np.einsum("ai,bij,ja->ba", dag(sd.eigenvectors), filtered, sd.eigenvectors).real
    if np.any(weights[:, ~support] > 1e-10):
        via_div = math.inf
    else:
        logw = np.log(np.where(support, w, 1.0))
        cross = (weights * np.where(support, logw, 0.0)).sum(axis=1)
        via_div = math.fsum(probs * (-ent - cross))
    return HolevoInformation(n, m, s_n, s_bar, s_n - s_bar, via_div, excluded)


@dataclass
class GainLoss:
    gain: float
    loss: float
    delta_h: float
    gain_from_entropies: float


def gain_loss(rho0, probe: ProbeModel, n: int) -> GainLoss:
    """Split ``H_n - H_{n-1}`` into the gain of the n-th outcome and the channel loss."""
    if n < 1:
        raise ValueError("n must be >= 1")
    h_nn = holevo_info(rho0, probe, n, n)
    h_nm = holevo_info(rho0, probe, n, n - 1)
    h_mm = holevo_info(rho0, probe, n - 1, n - 1)
    gain = h_nn.value - h_nm.value
    loss = h_mm.value - h_nm.value
    return GainLoss(gain, loss, h_nn.value - h_mm.value,
                    h_nm.average_conditional_entropy - h_nn.average_conditional_entropy)


# -- entropy inequalities ---------------------------------------------------

@dataclass
class InequalityReport:
    delta_s: float
    probe_entropy_after: float
    mutual_info: float
    lhs1: float
    lhs2: float | None


def entropy_inequalities(rho_prev, probe: ProbeModel, *, second: bool = True,
                         floor: float = DEFAULT.faithful_floor) -> InequalityReport:
    """Entropy balance of one system-probe collision.

    ``lhs1 = dS + S(F sigma) - S(sigma)`` and ``lhs2 = dS + tr((sigma - F sigma) ln sigma)``
    where ``F sigma`` is the probe marginal after the interaction. The second
    needs a faithful probe state; with ``second=False`` it is skipped.
    """
    d = probe.dim
    joint = joint_state(rho_prev, probe)
    rho_next = partial_trace(joint, (d, 2), 0)
    f_sigma = partial_trace(joint, (d, 2), 1)
    sigma = probe.probe_state
    ds = von_neumann_entropy(rho_next) - von_neumann_entropy(rho_prev)
    s_f = von_neumann_entropy(f_sigma)
    lhs1 = ds + s_f - von_neumann_entropy(sigma)
    lhs2 = None
    if second:
        sd = hermitian_eig(sigma)
        if sd.eigenvalues.min() < floor:
            raise ProbeNotFaithful("second entropy inequality needs a faithful probe state")
        log_sigma = sd.apply(np.log)
        lhs2 = ds + float(np.trace((sigma - f_sigma) @ log_sigma).real)
    return InequalityReport(ds, s_f, mutual_information(joint, (d, 2)), lhs1, lhs2)


# -- continuum limit --------------------------------------------------------

def innovation(y: int, lam: float, tau: float) -> float:
    """Innovation increment for the per-step outcome ``y * sqrt(tau)``."""
    return y * math.sqrt(tau) - lam * tau


def filter_update_residual(rho, probe: ProbeModel, y: int) -> float:
    """Max-norm gap between the exact filtered update and its diffusive expansion.

    The expansion is ``rho + L*(rho) tau + (L rho + rho L^+ - lambda rho) dI``.
    """
    rho = np.asarray(rho, dtype=complex)
    out, p = conditional_map(rho, probe, y)
    L = probe.L
    a = L @ rho + rho @ dag(L)
    lam = float(np.trace(a).real)
    pred = rho + adjoint_generator(probe.lindblad, rho) * probe.tau \
        + (a - lam * rho) * innovation(y, lam, probe.tau)
    return float(np.abs(out / p - pred).max())


def innovation_second_moment(rho, probe: ProbeModel) -> float:
    """Branch average of (dI)^2 for one step from ``rho``."""
    rho = np.asarray(rho, dtype=complex)
    L = probe.L
    lam = float(np.trace(L @ rho + rho @ dag(L)).real)
    total = 0.0
    for y in (1, -1):
        _, p = conditional_map(rho, probe, y)
        total += p * innovation(y, lam, probe.tau) ** 2
    return total


def ordering_identity_gap(rho0, probe: ProbeModel, y1: int, y2: int) -> tuple[float, float]:
    """Compare ``V2 M1 V1`` with ``M1 V2 V1`` on system (x) probe1 (x) probe2.

    Returns the max-norm gap between the two operators and between the
    unnormalised system states obtained after the second measurement.
    """
    d = probe.dim
    v = probe.V
    # V on (system, probe1) and on (system, probe2)
    v1 = np.kron(v, np.eye(2))
    swap = np.zeros((4, 4))
    for a in range(2):
        for b in range(2):
            swap[2 * b + a, 2 * a + b] = 1.0
    p = np.kron(np.eye(d), swap)
    v2 = p @ v1 @ p.T
    m1 = np.kron(np.kron(np.eye(d), MEASUREMENT[y1]), np.eye(2))
    m2 = np.kron(np.eye(d * 2), MEASUREMENT[y2])
    interleaved = v2 @ m1 @ v1
    commuted = m1 @ v2 @ v1
    start = np.kron(np.asarray(rho0, complex), np.kron(probe.probe_state, probe.probe_state))

    def reduce(op):
        op = m2 @ op
        return partial_trace(op @ start @ dag(op), (d, 2, 2), 0)

    return (float(np.abs(interleaved - commuted).max()),
            float(np.abs(reduce(interleaved) - reduce(commuted)).max()))
