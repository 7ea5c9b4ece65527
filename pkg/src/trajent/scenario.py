"""Scenario files: TOML with complex matrices written as [re, im] pairs."""

from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .discrete import MODES, ProbeModel
from .errors import ConfigError
from .lindblad import OpenSystemModel
from .opalg import validate_density
from .paycha import SigmaVariant
from .trajectory import SCHEMES, TrajectoryConfig


@dataclass
class DiscreteSpec:
    tau: float
    n_steps: int
    probe_state: np.ndarray | None = None
    mode: str = "exact"


@dataclass
class AdjudicationSpec:
    n_trajectories: int
    t_final: float


@dataclass
class Scenario:
    name: str
    model: OpenSystemModel
    initial_state: np.ndarray
    trajectory: TrajectoryConfig
    discrete: DiscreteSpec | None
    sigma_variants: list = field(default_factory=lambda: list(SigmaVariant))
    k_max: int = 40
    output_dir: Path = Path("out")
    adjudication: AdjudicationSpec | None = None
    source: Path | None = None
    sha256: str = ""

    def probe(self) -> ProbeModel:
        d = self.discrete
        return ProbeModel(self.model.H, self.model.L, d.tau, d.probe_state, d.mode)


def bundled_scenarios() -> list[str]:
    root = resources.files("trajent") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def resolve(ref: str | Path) -> tuple[bytes, Path]:
    """Read a scenario by path, or by the name of a bundled scenario."""
    path = Path(ref)
    if path.is_file():
        try:
            return path.read_bytes(), path
        except OSError as exc:
            raise ConfigError(f"cannot read scenario file {path}: {exc}") from exc
    name = str(ref)
    if name in bundled_scenarios():
        res = resources.files("trajent") / "scenarios" / f"{name}.toml"
        return res.read_bytes(), Path(f"<bundled>/{name}.toml")
    raise ConfigError(f"scenario file not found: {path}")


def _get(table: dict, key: str, where: str, kind=None, default=...):
    if key not in table:
        if default is ...:
            raise ConfigError(f"missing field {where}.{key}" if where else f"missing field {key}")
        return default
    val = table[key]
    if kind is not None:
        name = f"{where}.{key}" if where else key
        try:
            if kind is int and (isinstance(val, bool) or not isinstance(val, int)):
                raise TypeError
            if kind is float and isinstance(val, bool):
                raise TypeError
            val = kind(val)
        except (TypeError, ValueError):
            raise ConfigError(f"field {name} must be {kind.__name__}, got {val!r}") from None
    return val


def parse_matrix(value, where: str, dim: int) -> np.ndarray:
    """``dim x dim`` complex matrix from nested [re, im] pairs."""
    if not isinstance(value, list) or len(value) != dim:
        raise ConfigError(f"field {where} must have {dim} rows")
    out = np.zeros((dim, dim), dtype=complex)
    for i, row in enumerate(value):
        if not isinstance(row, list) or len(row) != dim:
            raise ConfigError(f"field {where}[{i}] must have {dim} entries")
        for j, entry in enumerate(row):
            ok = (isinstance(entry, list) and len(entry) == 2
                  and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in entry))
            if not ok:
                raise ConfigError(f"field {where}[{i}][{j}] must be an [re, im] pair")
            out[i, j] = complex(entry[0], entry[1])
    return out


def _density(value, where: str, dim: int) -> np.ndarray:
    m = parse_matrix(value, where, dim)
    try:
        return validate_density(m, 1e-10)
    except ValueError as exc:
        raise ConfigError(f"field {where}: {exc}") from None


def parse_scenario(data: dict, *, source: Path | None = None, raw: bytes = b"") -> Scenario:
    name = _get(data, "name", "", str)
    mt = _get(data, "model", "", dict)
    dim = _get(mt, "dim", "model", int)
    if dim < 1:
        raise ConfigError("field model.dim must be positive")
    H = parse_matrix(_get(mt, "H", "model"), "model.H", dim)
    ops_raw = _get(mt, "collapse_ops", "model", list, [])
    ops = tuple(parse_matrix(c, f"model.collapse_ops[{k}]", dim) for k, c in enumerate(ops_raw))
    try:
        model = OpenSystemModel(H, ops, _get(mt, "monitored_index", "model", int, 0),
                                _get(mt, "eta", "model", float, 1.0))
    except ValueError as exc:
        raise ConfigError(f"field model: {exc}") from None

    st = _get(data, "initial_state", "", dict)
    rho0 = _density(_get(st, "rho", "initial_state"), "initial_state.rho", dim)

    tt = _get(data, "trajectory", "", dict)
    scheme = _get(tt, "scheme", "trajectory", str, "euler")
    if scheme not in SCHEMES:
        raise ConfigError(f"field trajectory.scheme must be one of {SCHEMES}")
    try:
        traj = TrajectoryConfig(
            _get(tt, "dt", "trajectory", float), _get(tt, "t_final", "trajectory", float),
            _get(tt, "seed", "trajectory", int, 0),
            _get(tt, "n_trajectories", "trajectory", int, 1),
            _get(tt, "record_every", "trajectory", int, 1), scheme)
    except ValueError as exc:
        raise ConfigError(f"field trajectory: {exc}") from None

    disc = None
    if "discrete" in data:
        dt_ = _get(data, "discrete", "", dict)
        probe = dt_.get("probe_state")
        probe = None if probe is None else _density(probe, "discrete.probe_state", 2)
        mode = _get(dt_, "mode", "discrete", str, "exact")
        if mode not in MODES:
            raise ConfigError(f"field discrete.mode must be one of {MODES}")
        disc = DiscreteSpec(_get(dt_, "tau", "discrete", float),
                            _get(dt_, "n_steps", "discrete", int), probe, mode)
        if disc.tau <= 0:
            raise ConfigError("field discrete.tau must be positive")
        if not 0 <= disc.n_steps <= 16:
            raise ConfigError("field discrete.n_steps must be in [0, 16]")

    sg = _get(data, "sigma", "", dict, {})
    try:
        variants = [SigmaVariant.parse(v) for v in _get(sg, "variants", "sigma", list,
                                                        ["paper", "lambda"])]
    except ValueError as exc:
        raise ConfigError(f"field sigma.variants: {exc}") from None
    k_max = _get(sg, "k_max", "sigma", int, 40)

    adj = None
    if "adjudication" in data:
        at = _get(data, "adjudication", "", dict)
        adj = AdjudicationSpec(_get(at, "n_trajectories", "adjudication", int),
                               _get(at, "t_final", "adjudication", float, traj.t_final))

    return Scenario(name, model, rho0, traj, disc, variants, k_max,
                    Path(_get(data, "output_dir", "", str, f"out/{name}")), adj, source,
                    hashlib.sha256(raw).hexdigest())


def load_scenario(ref: str | Path) -> Scenario:
    raw, path = resolve(ref)
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return parse_scenario(data, source=path, raw=raw)
