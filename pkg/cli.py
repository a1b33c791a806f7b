"""
cli.py
Command-line entry point: one subcommand per process.

    python cli.py solve --p 3 --M 1 --c 8
    python cli.py limit --p 3 --M 1 --c-list 8 16 32 64
    python cli.py spectrum --p 3 --M 1 --c 8
    python cli.py evolve --p 3 --M 1 --c 8 --T 10 --dt 1e-3
    python cli.py stability --p 3 --M 1 --c 8 --delta 1e-3 --T 50
    python cli.py verify --case 3 1 8
    python cli.py constants --p 3

Configuration precedence: built-in defaults < JSON file (--config) < flags.
RELSOL_OUT (environment or .env) replaces the default output directory;
an explicit --out still wins. Every run writes manifest.json to its output
directory with all resolved values.

Exit codes: 0 pass, 1 check failure, 2 usage error, 3 solver or integrator error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import scipy
from dotenv import load_dotenv

from evolution import BlowUpError, IntegratorConfig, conserved_report, evolve, stability_experiment, standing_wave_phase
from functionals import (DEFAULT_CONSTANTS_PATH, ConstantsError, ModelParams, ParameterError,
                         get_constants, thresholds)
from groundstate import (SolveOptions, SolverError, default_grid, nonrel_limit_study,
                         save_ground_state, solve)
from linops import EigenError, Constraints, coercivity_ratio, linearize, min_eig_constrained
from spectral import Grid, GridError, save_field, write_json
from verify import DEFAULT_CASES, VerifyConfig, run_verify

LOGGER = logging.getLogger(__name__)

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str = "solve"
    p: float = 3.0
    M: float = 1.0
    c: float = 8.0
    L: Optional[float] = None           # None until resolved by default_grid
    N: int = 4096
    method: str = "petviashvili"
    tol_residual: float = 1e-10
    max_outer: int = 60
    max_inner: int = 2000
    gamma: Optional[float] = None
    tau: float = 10.0
    dt: float = 1e-2
    T: float = 10.0
    sample_stride: int = 10
    snapshot_every: int = 0
    amplitude: float = 1.0
    delta: float = 1e-3
    c_list: List[float] = field(default_factory=lambda: [8.0, 16.0, 32.0, 64.0])
    cases: List[List[float]] = field(default_factory=lambda: [list(case) for case in DEFAULT_CASES])
    checks: Optional[List[str]] = None
    workers: int = 4
    save_vector: bool = False
    constants: Optional[str] = None
    out: str = "runs"
    seed: int = 0x5EED
    strict: bool = False
    log_level: str = "INFO"
    admissible: Optional[bool] = None

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.p, self.c, self.M)

    @property
    def grid(self) -> Grid:
        return Grid(self.L, self.N)

    def solve_options(self) -> SolveOptions:
        return SolveOptions(tol_residual=self.tol_residual, max_outer=self.max_outer,
                            max_inner=self.max_inner, gamma=self.gamma, tau=self.tau)

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(dt=self.dt, T=self.T, sample_stride=self.sample_stride,
                                snapshot_every=self.snapshot_every)

    def verify_config(self) -> VerifyConfig:
        return VerifyConfig(cases=[tuple(float(v) for v in case) for case in self.cases],
                            n_points=self.N, length=self.L,
                            workers=self.workers, seed=self.seed,
                            checks=None if self.checks is None else list(self.checks),
                            constants_path=self.constants, delta=self.delta)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
        cfg = cls(**data)
        cfg.c_list = [float(v) for v in cfg.c_list]
        cfg.cases = [[float(v) for v in case] for case in cfg.cases]
        for name in ("p", "M", "c", "tol_residual", "tau", "dt", "T", "amplitude", "delta"):
            setattr(cfg, name, float(getattr(cfg, name)))
        if cfg.L is not None:
            cfg.L = float(cfg.L)
        return cfg


# -----------------------------
# Argument parsing
# -----------------------------
class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")


def _add_model(sp: argparse.ArgumentParser, with_c: bool = True):
    sp.add_argument("--p", type=_float)
    sp.add_argument("--M", type=_float)
    if with_c:
        sp.add_argument("--c", type=_float, help="speed of light; 'inf' for the non-relativistic problem")
    sp.add_argument("--L", type=_float, help="box length (default: decay-gated, see default_grid)")
    sp.add_argument("--N", type=int)


def _add_solver(sp: argparse.ArgumentParser):
    sp.add_argument("--method", choices=["petviashvili", "gradient_flow"])
    sp.add_argument("--tol-residual", type=_float)
    sp.add_argument("--max-outer", type=int)
    sp.add_argument("--max-inner", type=int)
    sp.add_argument("--gamma", type=_float)
    sp.add_argument("--tau", type=_float)


def _add_integrator(sp: argparse.ArgumentParser):
    sp.add_argument("--dt", type=_float)
    sp.add_argument("--T", type=_float)
    sp.add_argument("--sample-stride", type=int)
    sp.add_argument("--snapshot-every", type=int)


def build_parser() -> argparse.ArgumentParser:
    # every flag defaults to SUPPRESS so only flags actually given reach the namespace
    common = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON file with RunConfig keys")
    common.add_argument("--out", help="output directory (overrides RELSOL_OUT)")
    common.add_argument("--seed", type=int)
    common.add_argument("--strict", action="store_true", help="refuse runs below the full existence threshold")
    common.add_argument("--constants", help="constants cache path")
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = _Parser(prog="relsol", description="Pseudo-relativistic NLS ground states, checks and dynamics")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    sp = sub.add_parser("solve", parents=[common], argument_default=argparse.SUPPRESS,
                        help="ground state at (p, M, c)")
    _add_model(sp)
    _add_solver(sp)

    sp = sub.add_parser("limit", parents=[common], argument_default=argparse.SUPPRESS,
                        help="non-relativistic limit table over c")
    _add_model(sp, with_c=False)
    _add_solver(sp)
    sp.add_argument("--c-list", type=_float, nargs="+")

    sp = sub.add_parser("spectrum", parents=[common], argument_default=argparse.SUPPRESS,
                        help="constrained spectrum of the linearized operator")
    _add_model(sp)
    _add_solver(sp)
    sp.add_argument("--save-vector", action="store_true")

    sp = sub.add_parser("evolve", parents=[common], argument_default=argparse.SUPPRESS,
                        help="evolve amplitude * Q_c with the Strang integrator")
    _add_model(sp)
    _add_solver(sp)
    _add_integrator(sp)
    sp.add_argument("--amplitude", type=_float)

    sp = sub.add_parser("stability", parents=[common], argument_default=argparse.SUPPRESS,
                        help="orbital stability run from Q_c + delta w")
    _add_model(sp)
    _add_solver(sp)
    _add_integrator(sp)
    sp.add_argument("--delta", type=_float)

    sp = sub.add_parser("verify", parents=[common], argument_default=argparse.SUPPRESS,
                        help="run the acceptance checks")
    sp.add_argument("--case", dest="cases", type=_float, nargs=3, action="append", metavar=("P", "M", "C"))
    sp.add_argument("--N", type=int)
    sp.add_argument("--checks", nargs="*")
    sp.add_argument("--workers", type=int)
    sp.add_argument("--delta", type=_float)

    sp = sub.add_parser("constants", parents=[common], argument_default=argparse.SUPPRESS,
                        help="compute and cache the sharp constants of p")
    sp.add_argument("--p", type=_float)
    return parser


def _check_admissible(cfg: RunConfig, c: float, p: Optional[float] = None, M: Optional[float] = None,
                      hard_floor: bool = True) -> bool:
    """
    Below the admissibility floor is a usage error; below the full threshold warns (or fails
    with --strict). With hard_floor=False the floor is only a warning too.
    """
    p = cfg.p if p is None else p
    M = cfg.M if M is None else M
    if math.isinf(c):
        return True
    params = ModelParams(p, c, M)
    try:
        consts = get_constants(p, cfg.constants or DEFAULT_CONSTANTS_PATH)
        th = thresholds(params, consts)
    except ConstantsError as e:
        raise UsageError(str(e))
    e = f"({p:g}-1)/(5-{p:g})"
    if c < th.c_floor:
        msg = (f"c={c:g} is below the admissibility floor c >= (alpha^(4/(p+3)) M)^{e} = {th.c_floor:.6g}; "
               f"the existence statement needs c >= max{{(alpha M)^{e}, (alpha^(4/(p+3)) M)^{e}}} "
               f"= {th.c_existence:.6g} (alpha={consts.alpha:.6g}, p={p:g}, M={M:g})")
        if hard_floor or cfg.strict:
            raise UsageError(msg)
        LOGGER.warning(msg)
        return False
    if c < th.c_required:
        msg = (f"c={c:g} is below the full threshold {th.c_required:.6g} "
               f"(max{{(alpha M)^{e}, (alpha^(4/(p+3)) M)^{e}}}"
               f"{', (M/(p-3))^' + e if th.c_ground_state else ''}); results are not covered by it")
        if cfg.strict:
            raise UsageError(msg)
        LOGGER.warning(msg)
        return False
    return True


def parse_config(argv: Optional[Sequence[str]] = None, config_file: Optional[str] = None) -> RunConfig:
    """Defaults < JSON file < flags; validates p and the admissibility of c, resolves the grid."""
    ns = vars(build_parser().parse_args(list(argv) if argv is not None else None))
    command = ns.pop("command")
    path = ns.pop("config", None) or config_file
    merged: Dict[str, Any] = {}
    if path:
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config file {path}: {e}")
        if not isinstance(data, dict):
            raise UsageError(f"config file {path} must hold a JSON object")
        merged.update({k.replace("-", "_"): v for k, v in data.items()})
    if "out" not in ns and "out" not in merged and os.getenv("RELSOL_OUT"):
        merged["out"] = os.environ["RELSOL_OUT"]
    if "log_level" not in ns and "log_level" not in merged and os.getenv("RELSOL_LOG_LEVEL"):
        merged["log_level"] = os.environ["RELSOL_LOG_LEVEL"]
    merged.update(ns)
    merged["command"] = command
    cfg = RunConfig.from_dict(merged)

    if command == "verify":
        for case in cfg.cases:
            if len(case) != 3:
                raise UsageError(f"verify case must be (p, M, c), got {case}")
            if not (3.0 <= case[0] < 5.0):
                raise UsageError(f"p must lie in [3, 5), got {case[0]:g}")
            try:
                ModelParams(case[0], case[2], case[1])
            except ParameterError as e:
                raise UsageError(str(e))
        # acceptance cases may sit below the floor on purpose; --strict refuses them
        cfg.admissible = all([_check_admissible(cfg, c, p=p, M=M, hard_floor=False) for p, M, c in cfg.cases])
        return cfg
    if not (3.0 <= cfg.p < 5.0):
        raise UsageError(f"p must lie in [3, 5), got {cfg.p:g}")
    if command == "constants":
        return cfg
    try:
        cfg.params
        if command == "limit":
            for c in cfg.c_list:
                ModelParams(cfg.p, c, cfg.M)
    except ParameterError as e:
        raise UsageError(str(e))
    if command == "limit":
        cfg.admissible = all([_check_admissible(cfg, c) for c in cfg.c_list])
    else:
        cfg.admissible = _check_admissible(cfg, cfg.c)
    if cfg.L is None:
        cfg.L = default_grid(cfg.p, cfg.M, cfg.N).length
    try:
        cfg.grid
    except GridError as e:
        raise UsageError(str(e))
    return cfg


# -----------------------------
# Commands
# -----------------------------
def write_manifest(cfg: RunConfig):
    os.makedirs(cfg.out, exist_ok=True)
    write_json(os.path.join(cfg.out, "manifest.json"),
               {"schema_version": 1, "config": cfg.to_dict(),
                "versions": {"numpy": np.__version__, "scipy": scipy.__version__, "pandas": pd.__version__}})


def _ground_state(cfg: RunConfig):
    return solve(cfg.params, cfg.grid, cfg.solve_options(), cfg.method)


def cmd_solve(cfg: RunConfig) -> int:
    gs = _ground_state(cfg)
    save_ground_state(os.path.join(cfg.out, "groundstate"), gs)
    LOGGER.info("solve: mu=%.15g energy=%.15g residual=%.2e", gs.mu, gs.energy, gs.el_residual)
    return EXIT_OK


def cmd_limit(cfg: RunConfig) -> int:
    table = nonrel_limit_study(cfg.p, cfg.M, cfg.c_list, cfg.grid, cfg.solve_options(), cfg.method)
    table.to_csv(os.path.join(cfg.out, "limit.csv"), index=False, float_format="%.17g")
    write_json(os.path.join(cfg.out, "limit.json"),
               {"schema_version": 1, "p": cfg.p, "M": cfg.M, "mu_inf": table.attrs["mu_inf"],
                "mu_rate": table.attrs["mu_rate"], "rows": table.to_dict(orient="records")})
    return EXIT_OK


def cmd_spectrum(cfg: RunConfig) -> int:
    gs = _ground_state(cfg)
    op = linearize(gs)
    constraints = Constraints(even=True, orthogonal_to_q=True)
    eig = min_eig_constrained(op, constraints, seed=cfg.seed)
    ratio = coercivity_ratio(op, constraints=constraints, seed=cfg.seed)
    write_json(os.path.join(cfg.out, "spectrum.json"),
               {"schema_version": 1, "p": cfg.p, "c": cfg.c, "M": cfg.M, "mu": gs.mu,
                "lambda_min": eig.lambda_min, "coercivity_ratio": ratio.lambda_min,
                "iterations": eig.iterations, "stationarity_residual": eig.residual,
                "constraints": constraints.describe()})
    if cfg.save_vector:
        save_field(os.path.join(cfg.out, "eigenvector"), eig.vector,
                   {"p": cfg.p, "c": cfg.c, "M": cfg.M, "kind": "eigenvector"})
    return EXIT_OK


def cmd_evolve(cfg: RunConfig) -> int:
    gs = _ground_state(cfg)
    snapshots = os.path.join(cfg.out, "snapshots") if cfg.snapshot_every else None
    traj = evolve(cfg.amplitude * gs.Q, cfg.params, cfg.integrator(), gs=gs,
                  jsonl_path=os.path.join(cfg.out, "evolve.jsonl"), snapshot_dir=snapshots)
    rep = conserved_report(traj)
    write_json(os.path.join(cfg.out, "evolve.json"),
               {"schema_version": 1, "mass_drift": rep.mass_drift, "energy_drift": rep.energy_drift,
                "samples": rep.n_samples, "phase_slope": standing_wave_phase(traj), "mu": gs.mu,
                "blew_up": traj.blew_up, "message": traj.message})
    if traj.blew_up:
        LOGGER.error("evolve: %s", traj.message)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_stability(cfg: RunConfig) -> int:
    gs = _ground_state(cfg)
    consts = get_constants(cfg.p, cfg.constants or DEFAULT_CONSTANTS_PATH)
    rep = stability_experiment(gs, cfg.delta, cfg.integrator(), seed=cfg.seed, consts=consts,
                               jsonl_path=os.path.join(cfg.out, "stability.jsonl"))
    write_json(os.path.join(cfg.out, "stability.json"),
               {"schema_version": 1, "delta": rep.delta, "seed": rep.seed, "sup_distance": rep.sup_distance,
                "blew_up": rep.blew_up, "gwp": asdict(rep.gwp) if rep.gwp else None})
    return EXIT_SOLVER if rep.blew_up else EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    report = run_verify(cfg.verify_config())
    report.write(os.path.join(cfg.out, "verify.json"))
    for chk in report.failures():
        LOGGER.error("verify: %s failed (measured %.6g, bound %.6g)%s", chk.name, chk.measured, chk.bound,
                     f": {chk.error}" if chk.error else "")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_constants(cfg: RunConfig) -> int:
    consts = get_constants(cfg.p, cfg.constants or DEFAULT_CONSTANTS_PATH)
    write_json(os.path.join(cfg.out, "constants.json"), dict(schema_version=1, **consts.to_dict()))
    LOGGER.info("constants p=%g: C1=%.15g Chalf=%.15g CGN=%.15g alpha=%.15g",
                consts.p, consts.C1, consts.Chalf, consts.CGN, consts.alpha)
    return EXIT_OK


RUNNERS = {"solve": cmd_solve, "limit": cmd_limit, "spectrum": cmd_spectrum, "evolve": cmd_evolve,
           "stability": cmd_stability, "verify": cmd_verify, "constants": cmd_constants}


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    logging.basicConfig(level=os.getenv("RELSOL_LOG_LEVEL", "INFO").upper(),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(argv)
    except UsageError as e:
        print(f"relsol: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    logging.getLogger().setLevel(cfg.log_level.upper())
    write_manifest(cfg)
    try:
        return RUNNERS[cfg.command](cfg)
    except (SolverError, EigenError, BlowUpError) as e:
        LOGGER.error("%s failed: %s: %s", cfg.command, type(e).__name__, e)
        return EXIT_SOLVER
    except AssertionError as e:
        LOGGER.error("%s: check failed: %s", cfg.command, e)
        return EXIT_CHECK_FAILED
    except (ParameterError, GridError, ValueError) as e:
        LOGGER.error("%s: %s", cfg.command, e)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
