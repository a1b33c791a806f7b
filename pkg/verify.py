"""
verify.py
Acceptance checks for the whole suite: every check measures one mathematical
statement on computed objects and reports {anchor, measured, bound, margin, passed}.

run_verify solves the ground states of each configured (p, M, c) once, then fans the
independent checks out to a thread pool; the report keeps a fixed check order so
identical configs give identical reports. Checks that sweep c on their own (limit rate,
H^2 bound, uniqueness, coercivity uniformity) run once, at the first case.
"""

from __future__ import annotations

import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from evolution import IntegratorConfig, conserved_report, evolve, stability_experiment
from functionals import (Constants, ModelParams, energy_c, energy_inf, energy_lower_bound_chain,
                         get_constants, gn_modified_rhs, lp_norm_power, mu_inf_closed_form,
                         mu_inf_of_mass, negative_energy_separation, nonrel_min_energy, thresholds)
from groundstate import (GroundState, default_grid, ground_state_property_chain,
                         h2_diagnostics, mu_inf_by_inversion, nonrel_limit_study, nonrel_pohozaev_residuals,
                         pohozaev_relativistic_residual, soliton_inf, solve_gradient_flow,
                         solve_petviashvili, uniqueness_probe)
from linops import coercivity_ratio, linearize, min_eig_constrained
from spectral import Field, Grid, dumps_json, low_pass, sobolev_norm, symbol_bounds_check, write_json

LOGGER = logging.getLogger(__name__)


@dataclass
class CheckResult:
    name: str
    anchor: str
    measured: float
    bound: float
    margin: float
    passed: bool
    error: Optional[str] = None
    case: Optional[List[float]] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class VerifyReport:
    checks: List[CheckResult] = field(default_factory=list)
    generated_at: str = ""

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def flags(self) -> List[str]:
        return [] if self.checks else ["no checks run"]

    def failures(self) -> List[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> Dict[str, Any]:
        return {"schema_version": 1, "passed": self.passed, "flags": self.flags,
                "checks": [c.to_dict() for c in self.checks],
                "meta": {"generated_at": self.generated_at}}

    def body_json(self) -> str:
        """Report without the timestamp field."""
        d = self.to_dict()
        d.pop("meta")
        return dumps_json(d)

    def write(self, path: str):
        write_json(path, self.to_dict())


# acceptance cases; sweep checks run once, at the first case's (p, M)
DEFAULT_CASES: List[Tuple[float, float, float]] = [(3.0, 1.0, 8.0), (3.0, 1.0, 16.0), (3.0, 1.0, 64.0),
                                                   (4.0, 1.0, 16.0)]


@dataclass
class VerifyConfig:
    cases: List[Tuple[float, float, float]] = field(default_factory=lambda: list(DEFAULT_CASES))
    n_points: int = 4096
    length: Optional[float] = None
    workers: int = 4
    seed: int = 0
    checks: Optional[List[str]] = None            # None = every check, [] = none
    constants_path: Optional[str] = None
    gn_fields: int = 1000
    standing_dt: float = 1e-3
    conservation_T: float = 10.0
    conservation_dt: float = 1e-3
    stability_T: float = 50.0
    stability_dt: float = 1e-2
    delta: float = 1e-3
    limit_c_list: List[float] = field(default_factory=lambda: [8.0, 16.0, 32.0, 64.0])
    uniformity_c_list: List[float] = field(default_factory=lambda: [16.0, 64.0, 256.0])
    uniformity_points: int = 1024
    uniqueness_c: float = 16.0
    uniqueness_seeds: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    alpha_scale: float = 1.0                      # fault injection: scales the stored alpha


# what each check measures, reported with every result
ANCHORS: Dict[str, str] = {
    "constants_consistency": "sharp Gagliardo-Nirenberg constants and alpha",
    "gn_modified": "modified Gagliardo-Nirenberg inequality",
    "symbol_bounds": "two-sided bounds of the pseudo-relativistic symbol",
    "mu_inf_formula": "multiplier of the non-relativistic ground state",
    "nonrel_min_energy": "non-relativistic minimum energy",
    "nonrel_pohozaev": "Pohozaev identities of the sech soliton",
    "threshold_ordering": "refined radius below kinetic radius above the threshold",
    "el_residual": "Euler-Lagrange equation of the ground state",
    "pohozaev_relativistic": "relativistic Pohozaev identity",
    "refined_radius": "refined kinetic constraint",
    "mu_lower_bound": "multiplier bounded below by the non-relativistic energy",
    "energy_ordering": "Q_inf admissible: J_c <= E_c(Q_inf) <= J_inf < 0",
    "solver_agreement": "uniqueness of the ground state",
    "uniqueness": "uniqueness of the ground state from seeded initializations",
    "negative_energy_separation": "separation of the negative-energy set and energy lower bounds",
    "ground_state_chain": "energy minimizer is a ground state",
    "kinetic_gap": "kinetic energy comparison with the Schrodinger limit",
    "nonrel_limit_rate": "non-relativistic limit: Q_c -> Q_inf and |mu_c - mu_inf| ~ c^-2",
    "h2_uniform_bound": "H^2 bound of Q_c uniform in c",
    "coercivity_min_eig": "coercivity of the linearized operator on even ⊥Q",
    "coercivity_ratio": "coercivity in the H^{1/2} norm",
    "coercivity_uniformity": "coercivity constant uniform in c",
    "standing_wave": "standing wave e^{i mu t} Q solves the evolution",
    "conservation": "mass and energy conservation",
    "orbital_stability": "orbital stability and the global kinetic bound",
}


def _result(name: str, measured: float, bound: float, mode: str = "le", extra_ok: bool = True) -> CheckResult:
    if mode == "le":
        margin = bound - measured
    else:
        margin = measured - bound
    ok = bool(margin >= 0 and extra_ok and math.isfinite(measured))
    return CheckResult(name, ANCHORS[name], float(measured), float(bound), float(margin), ok)


# -----------------------------
# Random band-limited test fields
# -----------------------------
def random_band_limited_fields(grid: Grid, count: int, seed: int = 0) -> List[Field]:
    """Localized complex fields with spectrum inside |xi| <= xi_max/3."""
    rng = np.random.default_rng(seed)
    cut = low_pass(grid.xi_max / 3.0).on(grid)
    out = []
    for _ in range(count):
        width = rng.uniform(1.0, 0.08 * grid.length)
        kappa = rng.uniform(0.2, grid.xi_max / 6.0)
        coeff = (rng.standard_normal(grid.n_points) + 1j * rng.standard_normal(grid.n_points))
        coeff *= np.exp(-0.5 * (grid.xi / kappa) ** 2)
        raw = np.exp(-0.5 * (grid.x / width) ** 2) * np.fft.ifft(coeff)
        vals = np.fft.ifft(cut * np.fft.fft(raw))
        vals *= rng.uniform(0.1, 3.0) / math.sqrt(grid.spacing * float(np.sum(np.abs(vals) ** 2)))
        out.append(Field(grid, vals))
    return out


# -----------------------------
# Checks
# -----------------------------
class _Case:
    """Shared, read-only inputs of one (p, M, c) case; ground states solved up front."""

    def __init__(self, params: ModelParams, grid: Grid, consts: Constants, cfg: VerifyConfig,
                 with_flow: bool = True):
        self.params, self.grid, self.consts, self.cfg = params, grid, consts, cfg
        self.mu_inf = mu_inf_closed_form(params.p, params.M)
        self.q_inf = soliton_inf(params.p, self.mu_inf, grid)
        self.gs = solve_petviashvili(params, grid)
        self.gs_flow: Optional[GroundState] = None
        self.flow_error: Optional[str] = None
        self._limit: Optional[pd.DataFrame] = None
        self._limit_lock = threading.Lock()
        if with_flow:
            try:
                self.gs_flow = solve_gradient_flow(params, grid)
            except Exception as e:   # reported by the agreement check
                self.flow_error = f"{type(e).__name__}: {e}"

    def limit_table(self) -> pd.DataFrame:
        """nonrel_limit_study over cfg.limit_c_list, solved once and shared by the sweep checks."""
        with self._limit_lock:
            if self._limit is None:
                self._limit = nonrel_limit_study(self.params.p, self.params.M, self.cfg.limit_c_list, self.grid)
            return self._limit


def _check_constants(case: _Case) -> CheckResult:
    err = case.consts.consistency_error()
    return _result("constants_consistency", err, 1e-12)


def _check_gn(case: _Case) -> CheckResult:
    p, M = case.params.p, case.params.M
    cgn_from_alpha = (p + 1.0) * case.consts.alpha / 4.0
    consts = replace(case.consts, CGN=cgn_from_alpha)
    grid = Grid(64.0, 512)
    worst = 0.0
    for u in random_band_limited_fields(grid, case.cfg.gn_fields, case.cfg.seed):
        lhs = lp_norm_power(u, p + 1.0)
        for c in (1.0, 8.0, 64.0):
            prm = ModelParams(p, c, M)
            for delta in (0.25, 0.5, 1.0):
                worst = max(worst, lhs / gn_modified_rhs(u, delta, prm, consts))
    consistent = case.consts.consistency_error() <= 1e-12
    return _result("gn_modified", worst, 1.0, extra_ok=consistent)


def _check_symbol_bounds(case: _Case) -> CheckResult:
    c = case.params.c
    viol = 0
    for cc in sorted({1.0, c, 4.0 * c}):
        xi = np.linspace(-60.0 * cc, 60.0 * cc, 24001)
        for delta in (0.25, 0.5, 1.0):
            rep = symbol_bounds_check(cc, delta, xi)
            viol += len(rep.violations)
    return _result("symbol_bounds", viol, 0.0)


def _check_mu_inf(case: _Case) -> CheckResult:
    p, M = case.params.p, case.params.M
    a = mu_inf_of_mass(p, M, case.consts)
    b = mu_inf_by_inversion(p, M, case.grid)
    return _result("mu_inf_formula", abs(a - b) / b, 1e-9)


def _check_energy_inf(case: _Case) -> CheckResult:
    p, M = case.params.p, case.params.M
    target = nonrel_min_energy(p, M, case.consts)
    e = energy_inf(case.q_inf.Q, p)
    return _result("nonrel_min_energy", abs(e - target) / abs(target), 1e-9)


def _check_nonrel_pohozaev(case: _Case) -> CheckResult:
    r = max(nonrel_pohozaev_residuals(case.q_inf.Q, case.mu_inf, case.params.p))
    return _result("nonrel_pohozaev", r, 1e-9)


def _check_thresholds(case: _Case) -> CheckResult:
    p, M = case.params.p, case.params.M
    th = thresholds(case.params, case.consts)
    at_floor = thresholds(ModelParams(p, th.c_floor, M), case.consts)
    gap = abs(at_floor.refined_radius - at_floor.kinetic_radius) / at_floor.kinetic_radius
    ordered = th.refined_radius <= th.kinetic_radius if case.params.c >= th.c_floor else True
    return _result("threshold_ordering", gap, 1e-12, extra_ok=ordered)


def _check_el(case: _Case) -> CheckResult:
    return _result("el_residual", case.gs.el_residual, 1e-10)


def _check_pohozaev(case: _Case) -> CheckResult:
    return _result("pohozaev_relativistic", pohozaev_relativistic_residual(case.gs), 1e-8)


def _check_refined_radius(case: _Case) -> CheckResult:
    th = thresholds(case.params, case.consts)
    return _result("refined_radius", case.gs.kinetic_norm, th.refined_radius)


def _check_mu_lower(case: _Case) -> CheckResult:
    p, M = case.params.p, case.params.M
    bound = -(p + 1.0) * nonrel_min_energy(p, M, case.consts) / M
    return _result("mu_lower_bound", case.gs.mu, bound, mode="ge")


def _check_energy_ordering(case: _Case) -> CheckResult:
    p, M = case.params.p, case.params.M
    e_c = case.gs.energy
    e_qinf = energy_c(case.q_inf.Q, case.params)
    j_inf = nonrel_min_energy(p, M, case.consts)
    tol = 1e-12
    ok = e_c <= e_qinf + tol and e_qinf <= j_inf + tol and j_inf < 0
    return _result("energy_ordering", e_c - j_inf, 0.0, extra_ok=ok)


def _check_solver_agreement(case: _Case) -> CheckResult:
    if case.gs_flow is None:
        r = _result("solver_agreement", math.inf, 1e-7)
        r.error = case.flow_error
        return r
    d = sobolev_norm(case.gs.Q - case.gs_flow.Q, 0.5)
    de = abs(case.gs.energy - case.gs_flow.energy) / abs(case.gs.energy)
    return _result("solver_agreement", d, 1e-7, extra_ok=de <= 1e-9)


def _check_uniqueness(case: _Case) -> CheckResult:
    params = ModelParams(case.params.p, case.cfg.uniqueness_c, case.params.M)
    rep = uniqueness_probe(params, case.grid, seeds=case.cfg.uniqueness_seeds)
    return _result("uniqueness", rep.max_pairwise, 1e-7, extra_ok=len(rep.seeds) >= 2)


def _check_separation(case: _Case) -> CheckResult:
    rng = np.random.default_rng(case.cfg.seed)
    fields = [case.gs.Q, case.q_inf.Q]
    x = case.grid.x
    for _ in range(8):
        bump = np.exp(-0.5 * (x / rng.uniform(2.0, 6.0)) ** 2) * rng.uniform(-0.3, 0.3)
        u = case.q_inf.Q.values + bump
        u *= math.sqrt(case.params.M / (case.grid.spacing * float(np.dot(u, u))))
        fields.append(Field(case.grid, u))
    bad = 0
    for u in fields:
        sep = negative_energy_separation(u, case.params, case.consts)
        chain = energy_lower_bound_chain(u, case.params, case.consts)
        bad += (not sep.holds) + (not chain.ok)
    return _result("negative_energy_separation", bad, 0.0)


def _check_property_chain(case: _Case) -> CheckResult:
    chain = ground_state_property_chain(case.gs, case.consts)
    measured = chain.identity_residual if chain.applicable else 0.0
    return _result("ground_state_chain", measured, 1e-8, extra_ok=chain.holds)


def _check_kinetic_gap(case: _Case) -> CheckResult:
    d = h2_diagnostics(case.gs)
    return _result("kinetic_gap", d.kinetic_gap, d.gap_bound)


def _check_limit_rate(case: _Case) -> CheckResult:
    table = case.limit_table()
    monotone = bool(table["h1_error"].is_monotonic_decreasing)
    return _result("nonrel_limit_rate", abs(table.attrs["mu_rate"] + 2.0), 0.3, extra_ok=monotone)


def _check_h2_bound(case: _Case) -> CheckResult:
    # sup over the sweep relative to the limit profile
    table = case.limit_table()
    ratio = float(table["h2_norm"].max()) / sobolev_norm(case.q_inf.Q, 2.0)
    return _result("h2_uniform_bound", ratio, 1.5, extra_ok=bool(table["gap_ok"].all()))


def _check_coercivity(case: _Case) -> CheckResult:
    eig = min_eig_constrained(linearize(case.gs), seed=case.cfg.seed)
    return _result("coercivity_min_eig", eig.lambda_min, 1e-3 * case.gs.mu, mode="ge")


def _check_coercivity_ratio(case: _Case) -> CheckResult:
    eig = coercivity_ratio(linearize(case.gs), seed=case.cfg.seed)
    return _result("coercivity_ratio", eig.lambda_min, 0.0, mode="ge")


def _check_coercivity_uniformity(case: _Case) -> CheckResult:
    p, M = case.params.p, case.params.M
    grid = Grid(case.grid.length, min(case.grid.n_points, case.cfg.uniformity_points))
    ratios = []
    for c in case.cfg.uniformity_c_list:
        gs = solve_petviashvili(ModelParams(p, c, M), grid)
        ratios.append(coercivity_ratio(linearize(gs), seed=case.cfg.seed).lambda_min)
    spread = max(ratios) / min(ratios) - 1.0 if min(ratios) > 0 else math.inf
    return _result("coercivity_uniformity", spread, 0.25)


def _check_standing_wave(case: _Case) -> CheckResult:
    gs = case.gs
    cfg = IntegratorConfig(dt=case.cfg.standing_dt, T=1.0, sample_stride=10 ** 9)
    err = evolve(gs.Q, case.params, cfg, gs=gs).samples[-1].mod_distance
    return _result("standing_wave", err, 1e-8)


def _check_conservation(case: _Case) -> CheckResult:
    cfg = IntegratorConfig(dt=case.cfg.conservation_dt, T=case.cfg.conservation_T, sample_stride=100)
    rep = conserved_report(evolve(case.gs.Q, case.params, cfg))
    return _result("conservation", rep.mass_drift, 1e-11, extra_ok=rep.energy_drift <= 1e-8)


def _check_stability(case: _Case) -> CheckResult:
    cfg = IntegratorConfig(dt=case.cfg.stability_dt, T=case.cfg.stability_T, sample_stride=10)
    rep = stability_experiment(case.gs, case.cfg.delta, cfg, consts=case.consts)
    gwp_ok = rep.gwp is not None and rep.gwp.status == "ok"
    return _result("orbital_stability", rep.sup_distance, 1e-2, extra_ok=gwp_ok and not rep.blew_up)


CHECKS: List[Tuple[str, Callable[[_Case], CheckResult]]] = [
    ("constants_consistency", _check_constants),
    ("gn_modified", _check_gn),
    ("symbol_bounds", _check_symbol_bounds),
    ("mu_inf_formula", _check_mu_inf),
    ("nonrel_min_energy", _check_energy_inf),
    ("nonrel_pohozaev", _check_nonrel_pohozaev),
    ("threshold_ordering", _check_thresholds),
    ("el_residual", _check_el),
    ("pohozaev_relativistic", _check_pohozaev),
    ("refined_radius", _check_refined_radius),
    ("mu_lower_bound", _check_mu_lower),
    ("energy_ordering", _check_energy_ordering),
    ("solver_agreement", _check_solver_agreement),
    ("uniqueness", _check_uniqueness),
    ("negative_energy_separation", _check_separation),
    ("ground_state_chain", _check_property_chain),
    ("kinetic_gap", _check_kinetic_gap),
    ("nonrel_limit_rate", _check_limit_rate),
    ("h2_uniform_bound", _check_h2_bound),
    ("coercivity_min_eig", _check_coercivity),
    ("coercivity_ratio", _check_coercivity_ratio),
    ("coercivity_uniformity", _check_coercivity_uniformity),
    ("standing_wave", _check_standing_wave),
    ("conservation", _check_conservation),
    ("orbital_stability", _check_stability),
]

# checks that sweep c themselves; run at the first case only
SWEEP_CHECKS = frozenset({"uniqueness", "nonrel_limit_rate", "h2_uniform_bound", "coercivity_uniformity"})


def _selected(cfg: VerifyConfig) -> List[Tuple[str, Callable[[_Case], CheckResult]]]:
    if cfg.checks is None:
        return list(CHECKS)
    names = {n for n, _ in CHECKS}
    unknown = [n for n in cfg.checks if n not in names]
    if unknown:
        raise ValueError(f"unknown checks: {unknown}")
    return [(n, fn) for n, fn in CHECKS if n in cfg.checks]


def _run_one(name: str, fn: Callable[[_Case], CheckResult], case: _Case) -> CheckResult:
    try:
        res = fn(case)
    except Exception as e:
        LOGGER.error("check %s errored at %s: %s", name, case.params.to_dict(), e)
        res = CheckResult(name, ANCHORS.get(name, ""), math.nan, math.nan, math.nan, False,
                          f"{type(e).__name__}: {e}")
    res.case = [case.params.p, case.params.M, case.params.c]
    return res


def run_verify(cfg: VerifyConfig) -> VerifyReport:
    selected = _selected(cfg)
    report = VerifyReport(generated_at=time.strftime("%Y-%m-%dT%H:%M:%S%z"))
    if not selected or not cfg.cases:
        LOGGER.warning("verify: no checks run")
        return report
    for i, (p, M, c) in enumerate(cfg.cases):
        checks = selected if i == 0 else [(n, fn) for n, fn in selected if n not in SWEEP_CHECKS]
        if not checks:
            continue
        params = ModelParams(float(p), float(c), float(M))
        consts = get_constants(params.p, cfg.constants_path) if cfg.constants_path else get_constants(params.p)
        if cfg.alpha_scale != 1.0:
            consts = replace(consts, alpha=consts.alpha * cfg.alpha_scale)
        grid = Grid(cfg.length, cfg.n_points) if cfg.length else default_grid(params.p, params.M, cfg.n_points)
        try:
            case = _Case(params, grid, consts, cfg, with_flow=any(n == "solver_agreement" for n, _ in checks))
        except Exception as e:
            LOGGER.error("verify: ground state at %s failed: %s", params.to_dict(), e)
            for name, _ in checks:
                report.checks.append(CheckResult(name, ANCHORS.get(name, ""), math.nan, math.nan, math.nan, False,
                                                 f"ground state solve failed: {type(e).__name__}: {e}",
                                                 [params.p, params.M, params.c]))
            continue
        with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as pool:
            futures = [pool.submit(_run_one, name, fn, case) for name, fn in checks]
            results = [f.result() for f in futures]
        for r in results:
            LOGGER.info("%-28s %s measured=%.6g bound=%.6g", r.name, "PASS" if r.passed else "FAIL",
                        r.measured, r.bound)
        report.checks.extend(results)
    return report


if __name__ == "__main__":
    rep = run_verify(VerifyConfig(checks=["constants_consistency", "symbol_bounds", "nonrel_pohozaev",
                                          "el_residual", "pohozaev_relativistic"]))
    for chk in rep.checks:
        print(f"{chk.name:28s} {'PASS' if chk.passed else 'FAIL'}  measured={chk.measured:.3e} bound={chk.bound:.3e}")
    print("aggregate:", "PASS" if rep.passed else "FAIL")
