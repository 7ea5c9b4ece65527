"""Command-line front end.

Exit codes: 0 success, 1 failed verification properties, 2 configuration
or usage errors, 3 numerical failures, 4 I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import platform
import sys
import tempfile
import warnings
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .discrete import (branch_arrays, entropy_inequalities, gain_loss, holevo_info,
                       record_string, unconditional_map)
from .entropy import von_neumann_entropy
from .errors import ConfigError, NumericalError
from .opalg import hermitian_eig
from .paycha import (SigmaVariant, TruncationWarning, martingale_coefficient, sigma_regrouped,
                     sigma_series_from_coefficient, sigma_spectral_oracle)
from .scenario import Scenario, load_scenario
from .trajectory import adjudicate_variants, simulate
from .verify import SUITES, run_suites

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3, 4

TRAJECTORY_COLUMNS = ("t", "trajectory_id", "S", "lambda", "dI", "dS_actual", "dS_pred_paper",
                      "dS_pred_lambda", "sigma_paper", "sigma_lambda", "drift_lindblad",
                      "martingale_coeff")
INNOVATION_CONVENTION = "dI_n = y_n - lambda_{n-1} tau with per-step outcome y_n = +-sqrt(tau)"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer, str)):
        return str(x)
    return f"{float(x):.17g}"


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(x) for x in row])
    return buf.getvalue()


def write_outputs(out_dir: Path, files: dict[str, str]) -> None:
    """Write every file through a temporary sibling and an atomic rename."""
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out_dir)
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            os.replace(tmp, out_dir / name)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


# -- experiments ------------------------------------------------------------

def run_trajectories(sc: Scenario, variants) -> tuple[dict, dict]:
    run = simulate(sc.trajectory, sc.model, sc.initial_state)
    s = run.series
    rows = []
    for i in range(run.n_trajectories):
        for j, t in enumerate(run.times):
            rows.append((t, i, s["S"][i, j], s["lam"][i, j], s["dI"][i, j], s["dS_actual"][i, j],
                         s["dS_pred_paper"][i, j], s["dS_pred_lambda"][i, j],
                         s["sigma_paper"][i, j], s["sigma_lambda"][i, j],
                         s["drift_lindblad"][i, j], s["martingale_coeff"][i, j]))
    summary = {"residuals": run.residual_summary()}
    if sc.adjudication is not None:
        verdicts = adjudicate_variants(sc.model, sc.initial_state,
                                       t_final=sc.adjudication.t_final, dt=sc.trajectory.dt,
                                       n_trajectories=sc.adjudication.n_trajectories,
                                       seed=sc.trajectory.seed, scheme=sc.trajectory.scheme)
        keep = {v.value for v in variants}
        summary["adjudication"] = [asdict(v) | {"passes": v.passes}
                                   for v in verdicts if v.variant in keep]
        summary["passing_variants"] = [v.variant for v in verdicts
                                       if v.passes and v.variant in keep]
    return {"trajectories.csv": csv_text(TRAJECTORY_COLUMNS, rows)}, summary


def run_discrete(sc: Scenario) -> tuple[dict, dict]:
    if sc.discrete is None:
        raise ConfigError("missing table discrete")
    probe = sc.probe()
    rho0 = sc.initial_state
    n_steps = sc.discrete.n_steps
    records, states, probs = branch_arrays(rho0, probe, n_steps)
    ok = probs > 1e-14
    ents = np.full(len(probs), np.nan)
    if ok.any():
        ents[ok] = von_neumann_entropy(states[ok] / probs[ok, None, None])
    branches = csv_text(("record", "probability", "entropy"),
                        ((record_string(r), p, e) for r, p, e in zip(records, probs, ents)))
    faithful_probe = hermitian_eig(probe.probe_state).eigenvalues.min() > 1e-10
    rows = []
    rho_prev = rho0
    for n in range(n_steps + 1):
        h_nn = holevo_info(rho0, probe, n, n)
        row = [n, h_nn.unconditional_entropy, h_nn.average_conditional_entropy,
               h_nn.via_entropy, h_nn.via_divergence]
        if n >= 1:
            h_nm = holevo_info(rho0, probe, n, n - 1)
            g = gain_loss(rho0, probe, n)
            ineq = entropy_inequalities(rho_prev, probe, second=faithful_probe)
            row += [h_nm.average_conditional_entropy, h_nm.via_entropy, g.gain, g.loss,
                    g.delta_h, ineq.lhs1, ineq.lhs2 if ineq.lhs2 is not None else np.nan]
            rho_prev = unconditional_map(rho_prev, probe)
        else:
            row += [np.nan] * 7
        rows.append(row)
    header = ("n", "S_n", "Sbar_n_n", "H_n_n", "H_n_n_divergence", "Sbar_n_nm1", "H_n_nm1",
              "G_n", "L_n", "delta_H_n", "inequality1_slack", "inequality2_slack")
    summary = {"tau": sc.discrete.tau, "n_steps": n_steps, "mode": sc.discrete.mode,
               "innovation_convention": INNOVATION_CONVENTION,
               "inequality2": "evaluated" if faithful_probe else "skipped: probe state not faithful"}
    return {"discrete_branches.csv": branches, "discrete_summary.csv": csv_text(header, rows)}, summary


def run_sigma(sc: Scenario, variants) -> tuple[dict, dict]:
    rho = sc.initial_state
    L = sc.model.L
    eta = sc.model.eta
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        for v in variants:
            b = martingale_coefficient(rho, L, v)
            est = sigma_series_from_coefficient(rho, b, eta, k_max=sc.k_max, variant=v)
            oracle = sigma_spectral_oracle(rho, b, eta)
            regrouped = (sigma_regrouped(rho, L, eta, k_max=sc.k_max).value
                         if v is SigmaVariant.PAPER else np.nan)
            rows.append((v.value, sc.k_max, est.value, regrouped, oracle, est.value - oracle,
                         est.converged, est.diverged, est.shells[-1]))
    header = ("variant", "k_max", "series", "regrouped", "spectral_oracle", "series_minus_oracle",
              "converged", "diverged", "last_shell")
    summary = {r[0]: {"series": r[2], "oracle": r[4], "converged": bool(r[6]),
                      "diverged": bool(r[7])} for r in rows}
    return {"sigma_report.csv": csv_text(header, rows)}, summary


def manifest(sc: Scenario, command: str, sections: dict, files) -> str:
    data = {
        "scenario": sc.name,
        "source": str(sc.source),
        "config_sha256": sc.sha256,
        "command": command,
        "seed": sc.trajectory.seed,
        "dt": sc.trajectory.dt,
        "versions": {"trajent": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "files": sorted(files),
        **sections,
    }
    return json.dumps(data, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(f"cannot serialise {type(x).__name__}")


# -- argument handling ------------------------------------------------------

def _variants(choice: str):
    if choice == "both":
        return list(SigmaVariant)
    return [SigmaVariant.parse(choice)]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trajent",
                                description="Entropy production along quantum trajectories.")
    p.add_argument("--version", action="version", version=f"trajent {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("scenario", help="scenario TOML path or bundled scenario name")
    common.add_argument("--seed", type=int, help="override trajectory.seed")
    common.add_argument("--dt", type=float, help="override trajectory.dt")
    common.add_argument("--out", type=Path, help="override output_dir")
    common.add_argument("--variant", choices=("paper", "lambda", "both"), default="both")
    for name, text in (("simulate", "integrate conditioned trajectories"),
                       ("discrete", "enumerate repeated-interaction records"),
                       ("sigma", "evaluate the entropy production term at the initial state"),
                       ("run", "all of the above")):
        sub.add_parser(name, parents=[common], help=text)
    v = sub.add_parser("verify", help="run the property suites")
    v.add_argument("selector", nargs="?", default="all")
    return p


def _apply_overrides(sc: Scenario, args) -> Scenario:
    changes = {}
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        changes["seed"] = args.seed
    if args.dt is not None:
        changes["dt"] = args.dt
    if changes:
        try:
            sc.trajectory = replace(sc.trajectory, **changes)
        except ValueError as exc:
            raise ConfigError(f"invalid override: {exc}") from None
    if args.out is not None:
        sc.output_dir = args.out
    return sc


def _verify(selector: str, out) -> int:
    if selector != "all" and selector not in SUITES:
        print(f"unknown selector {selector!r}; choose from: all, {', '.join(SUITES)}",
              file=sys.stderr)
        build_parser().print_usage(sys.stderr)
        return EXIT_CONFIG
    results = run_suites(selector)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.suite}.{r.name} [{r.seconds:.3f}s] {r.detail}",
              file=out)
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} properties passed", file=out)
    return EXIT_VERIFY if failed else EXIT_OK


def _execute(args) -> int:
    sc = _apply_overrides(load_scenario(args.scenario), args)
    variants = _variants(args.variant)
    files, sections = {}, {}
    cmd = args.command
    if cmd in ("simulate", "run"):
        f, s = run_trajectories(sc, variants)
        files |= f
        sections["trajectory"] = s
    if cmd in ("discrete", "run"):
        f, s = run_discrete(sc)
        files |= f
        sections["discrete"] = s
    if cmd in ("sigma", "run"):
        f, s = run_sigma(sc, variants)
        files |= f
        sections["sigma"] = s
    files["manifest.json"] = manifest(sc, cmd, sections, files)
    write_outputs(Path(sc.output_dir), files)
    for name in sorted(files):
        print(Path(sc.output_dir) / name)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        if args.command == "verify":
            return _verify(args.selector, sys.stdout)
        return _execute(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
