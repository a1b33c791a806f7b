"""
groundstate.py
Ground states of H_c Q - Q^p = -mu Q at prescribed mass M.

 - soliton_inf: the explicit sech-profile soliton of the c = inf problem
 - solve_petviashvili: fixed-mu Petviashvili loop + brentq on mu for the mass
 - solve_gradient_flow: normalized semi-implicit gradient flow on the mass sphere
 - scaling_transport, equivalent_unit_problem: the c <-> 1 change of variables
 - nonrel_limit_study: Q_c -> Q_inf, mu_c -> mu_inf as c grows
 - Pohozaev residuals, ground-state property chain, H^2 diagnostics, uniqueness probe
 - save_ground_state / load_ground_state
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from functionals import (Constants, ModelParams, ParameterError, energy, energy_c,
                         energy_inf, kinetic_c, kinetic_inf, lp_norm_power, mass,
                         mu_inf_closed_form, thresholds)
from spectral import (Field, Grid, GridError, hc_symbol, hc_symbol_gap, load_field,
                      save_field, sobolev_norm, symbol_energy, symmetrize, write_json)

LOGGER = logging.getLogger(__name__)

DECAY_GATE = 1e-13


class SolverError(RuntimeError):
    """Base class for ground-state solver failures."""


class ConvergenceError(SolverError):
    def __init__(self, message: str, trace: Optional[List[float]] = None):
        super().__init__(message)
        self.trace = list(trace or [])


class BracketError(SolverError):
    """Mass matching failed; the message advises the gradient-flow solver."""


class ConstraintViolation(SolverError):
    """Iterate left the kinetic ball ||sqrt(H_c) u|| <= c^{(p+3)/(2(p-1))}."""


class GridTooSmallError(GridError):
    pass


class ScalingError(ValueError):
    pass


# -----------------------------
# Options and result types
# -----------------------------
@dataclass
class SolveOptions:
    tol_residual: float = 1e-10
    tol_step: float = 1e-12
    max_outer: int = 60
    max_inner: int = 2000
    gamma: Optional[float] = None
    init: Optional[Field] = None
    mu_bracket: Optional[Tuple[float, float]] = None
    symmetrize_every: int = 50
    tau: float = 10.0
    max_flow_steps: int = 20000
    log_every: int = 100

    def resolved_gamma(self, p: float) -> float:
        if self.tol_residual <= 0 or self.tol_step <= 0:
            raise ParameterError("solver tolerances must be positive")
        gamma = p / (p - 1.0) if self.gamma is None else self.gamma
        if not (1.0 < gamma < p):
            raise ParameterError(f"gamma must lie in (1, p={p}), got {gamma}")
        return gamma

    def to_dict(self) -> Dict[str, Any]:
        return {"tol_residual": self.tol_residual, "tol_step": self.tol_step,
                "max_outer": self.max_outer, "max_inner": self.max_inner, "gamma": self.gamma,
                "init": "closed_form_inf" if self.init is None else "supplied",
                "mu_bracket": list(self.mu_bracket) if self.mu_bracket else None,
                "symmetrize_every": self.symmetrize_every, "tau": self.tau,
                "max_flow_steps": self.max_flow_steps}


@dataclass(frozen=True, eq=False)
class GroundState:
    Q: Field
    mu: float
    params: ModelParams
    el_residual: float
    pohozaev_residual: float
    method: str
    iterations: int = 0
    trace: Dict[str, List[float]] = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return self.Q.grid

    @property
    def energy(self) -> float:
        return energy(self.Q, self.params)

    @property
    def kinetic_norm(self) -> float:
        return math.sqrt(kinetic_inf(self.Q) if self.params.nonrelativistic else kinetic_c(self.Q, self.params.c))

    def record(self) -> Dict[str, Any]:
        return {"p": self.params.p, "c": self.params.c, "M": self.params.M, "mu": self.mu,
                "energy": self.energy, "mass": mass(self.Q), "kinetic_norm": self.kinetic_norm,
                "residuals": {"el": self.el_residual, "pohozaev": self.pohozaev_residual},
                "method": self.method, "iterations": self.iterations, "grid": self.grid.to_dict()}


def kinetic_symbol(grid: Grid, c: float) -> np.ndarray:
    return hc_symbol(grid.xi, c)


def _nonlinear(q: np.ndarray, p: float) -> np.ndarray:
    return np.abs(q) ** (p - 1.0) * q


def el_residual(q: Field, mu: float, p: float, symbol: np.ndarray) -> float:
    """||K Q - |Q|^{p-1} Q + mu Q|| / ||Q|| for the kinetic symbol K."""
    kq = np.fft.ifft(symbol * np.fft.fft(q.values))
    if q.is_real:
        kq = kq.real
    r = kq - _nonlinear(q.values, p) + mu * q.values
    return float(np.linalg.norm(r) / np.linalg.norm(q.values))


def _finalize(values: np.ndarray, grid: Grid) -> Field:
    vals = 0.5 * (values + np.roll(values[::-1], 1))
    return Field(grid, np.maximum(vals, 0.0), real_nonneg=True)


# -----------------------------
# Closed-form non-relativistic soliton
# -----------------------------
def soliton_profile(p: float, mu: float, x: np.ndarray) -> np.ndarray:
    amp = ((p + 1.0) * mu / 2.0) ** (1.0 / (p - 1.0))
    arg = (p - 1.0) * math.sqrt(mu) * np.asarray(x) / 2.0
    return amp / np.cosh(arg) ** (2.0 / (p - 1.0))


def nonrel_pohozaev_residuals(q: Field, mu: float, p: float) -> Tuple[float, float]:
    """Relative residuals of ||Q'||^2 = (p-1)/(p+3) mu M and ||Q||^{p+1} = 2(p+1)/(p+3) mu M."""
    m = mass(q)
    kin_target = (p - 1.0) / (p + 3.0) * mu * m
    pot_target = 2.0 * (p + 1.0) / (p + 3.0) * mu * m
    return (abs(kinetic_inf(q) - kin_target) / kin_target,
            abs(lp_norm_power(q, p + 1.0) - pot_target) / pot_target)


def soliton_inf(p: float, mu: float, grid: Grid) -> GroundState:
    if not mu > 0:
        raise ParameterError(f"mu must be positive, got {mu}")
    vals = soliton_profile(p, mu, grid.x)
    if vals[0] > DECAY_GATE * vals.max():
        raise GridTooSmallError(
            f"Q_inf boundary value {vals[0] / vals.max():.3e} of max exceeds {DECAY_GATE:g}; enlarge L={grid.length:g}")
    q = Field(grid, vals, real_nonneg=True)
    params = ModelParams(p, math.inf, mass(q))
    res = el_residual(q, mu, p, grid.xi ** 2)
    return GroundState(q, mu, params, res, max(nonrel_pohozaev_residuals(q, mu, p)), "closed_form_inf")


def default_grid(p: float, M: float, n_points: int = 4096) -> Grid:
    """N points on the smallest L (multiple of 16, >= 80) where Q_inf(p, M) passes the decay gate."""
    mu = mu_inf_closed_form(p, M)
    need = 2.0 * (math.log(1.0 / DECAY_GATE) + 2.0 / (p - 1.0) * math.log(2.0)) / math.sqrt(mu)
    length = max(80.0, 16.0 * math.ceil(need / 16.0))
    while True:
        grid = Grid(length, n_points)
        vals = soliton_profile(p, mu, grid.x)
        if vals[0] <= DECAY_GATE * vals.max():
            return grid
        length += 16.0


def mu_inf_by_inversion(p: float, M: float, grid: Grid) -> float:
    """mu_inf from brentq on the quadrature mass of the sampled soliton."""
    guess = mu_inf_closed_form(p, M)
    h = grid.spacing

    def f(mu):
        return h * float(np.sum(soliton_profile(p, mu, grid.x) ** 2)) - M

    return brentq(f, 0.25 * guess, 4.0 * guess, xtol=1e-16, rtol=4 * np.finfo(float).eps)


# -----------------------------
# Petviashvili
# -----------------------------
def solve_fixed_mu(symbol: np.ndarray, mu: float, p: float, grid: Grid, init: Field,
                   opts: SolveOptions) -> Tuple[Field, List[float], int]:
    """
    Q <- s^gamma (K + mu)^{-1} |Q|^{p-1} Q with s = <(K+mu)Q, Q> / <|Q|^{p-1}Q, Q>.
    Returns (Q, s trace, iterations); stops on relative step < tol_step.
    """
    gamma = opts.resolved_gamma(p)
    if init.grid != grid:
        raise GridError("init field lives on another grid")
    denom = symbol + mu
    if np.any(denom <= 0):
        raise ParameterError(f"K + mu not positive at mu={mu}")
    q = np.real(init.values).astype(float)
    trace: List[float] = []
    for n in range(opts.max_inner):
        qp = _nonlinear(q, p)
        q_hat = np.fft.fft(q)
        lhs = float(np.sum(denom * np.abs(q_hat) ** 2)) / grid.n_points
        rhs = float(np.dot(qp, q))
        if not (rhs > 0 and math.isfinite(lhs)):
            raise ConvergenceError(f"Petviashvili quotient degenerate at mu={mu} (iteration {n})", trace)
        s = lhs / rhs
        q_new = s ** gamma * np.fft.ifft(np.fft.fft(qp) / denom).real
        if opts.symmetrize_every and (n + 1) % opts.symmetrize_every == 0:
            q_new = 0.5 * (q_new + np.roll(q_new[::-1], 1))
        step = float(np.linalg.norm(q_new - q) / np.linalg.norm(q))
        q = q_new
        trace.append(s)
        if not math.isfinite(step):
            raise ConvergenceError(f"Petviashvili diverged at mu={mu} (iteration {n})", trace)
        if n % opts.log_every == 0:
            LOGGER.debug("petviashvili mu=%.12g it=%d s=%.15f step=%.3e", mu, n, s, step)
        if step < opts.tol_step:
            return Field(grid, q), trace, n + 1
    raise ConvergenceError(
        f"Petviashvili did not converge in {opts.max_inner} iterations at mu={mu}; last s={trace[-1]:.15g}", trace)


def _initial_field(p: float, mu: float, grid: Grid, opts: SolveOptions) -> Field:
    if opts.init is not None:
        return opts.init
    return Field(grid, soliton_profile(p, mu, grid.x))


def solve_petviashvili(params: ModelParams, grid: Grid, opts: Optional[SolveOptions] = None) -> GroundState:
    opts = opts or SolveOptions()
    p, M = params.p, params.M
    symbol = kinetic_symbol(grid, params.c)
    solved: Dict[float, Tuple[Field, int]] = {}
    total = [0]

    def mass_at(mu: float) -> float:
        if mu not in solved:
            if len(solved) >= opts.max_outer:
                raise ConvergenceError(f"mass matching exceeded max_outer={opts.max_outer} evaluations")
            q, _, iters = solve_fixed_mu(symbol, mu, p, grid, _initial_field(p, mu, grid, opts), opts)
            solved[mu] = (q, iters)
            total[0] += iters
        return mass(solved[mu][0])

    mu_ref = mu_inf_closed_form(p, M)
    lo, hi = opts.mu_bracket or (0.5 * mu_ref, 2.0 * mu_ref)
    for _ in range(20):
        if mass_at(lo) < M:
            break
        lo *= 0.5
    for _ in range(20):
        if mass_at(hi) > M:
            break
        hi *= 2.0
    m_lo, m_hi = mass_at(lo), mass_at(hi)
    mid = math.sqrt(lo * hi)
    m_mid = mass_at(mid)
    if not (m_lo < M < m_hi and m_lo < m_mid < m_hi):
        raise BracketError(
            f"mass is not monotone across mu in [{lo:.6g}, {hi:.6g}] (masses {m_lo:.6g}, {m_mid:.6g}, {m_hi:.6g}); "
            f"use solve_gradient_flow instead")

    mu_star = brentq(lambda mu: mass_at(mu) - M, lo, hi, xtol=1e-15 * mu_ref,
                     rtol=4 * np.finfo(float).eps, maxiter=opts.max_outer)
    q_raw, _ = solved[mu_star] if mu_star in solved else (None, 0)
    if q_raw is None:
        mass_at(mu_star)
        q_raw = solved[mu_star][0]
    q = _finalize(q_raw.values, grid)
    res = el_residual(q, mu_star, p, symbol)
    if res > opts.tol_residual:
        raise ConvergenceError(f"Petviashvili EL residual {res:.3e} above tol {opts.tol_residual:.1e}")
    gs = GroundState(q, mu_star, params, res, 0.0, "petviashvili", total[0])
    gs = replace(gs, pohozaev_residual=pohozaev_residual(gs))
    LOGGER.info("petviashvili p=%g c=%g M=%g: mu=%.15g residual=%.2e after %d iterations (%d mu values)",
                p, params.c, M, mu_star, res, total[0], len(solved))
    return gs


# -----------------------------
# Normalized gradient flow
# -----------------------------
def _implicit_step(symbol: np.ndarray, mu_n: float, tau: float) -> Tuple[np.ndarray, float]:
    """Denominator 1 + tau (symbol + mu_n) of the implicit step, with tau halved until it is positive."""
    floor = float(np.min(symbol)) + mu_n
    while 1.0 + tau * floor <= 0.0:
        tau *= 0.5
        if tau < 1e-10:
            raise SolverError(f"gradient flow: no positive implicit step for mu_n={mu_n:.6g}")
    return 1.0 + tau * (symbol + mu_n), tau


def solve_gradient_flow(params: ModelParams, grid: Grid, opts: Optional[SolveOptions] = None) -> GroundState:
    """
    u* = (I + tau (H_c + mu_n))^{-1} (u_n + tau |u_n|^{p-1} u_n),  u_{n+1} = sqrt(M) u* / ||u*||
    with mu_n = (||u_n||_{p+1}^{p+1} - ||sqrt(H_c) u_n||^2) / M, so fixed points solve the
    Euler-Lagrange equation at mass M exactly. tau is halved when the energy rises, when the step
    is not finite, or while the implicit denominator fails to be positive.
    """
    opts = opts or SolveOptions()
    p, M, c = params.p, params.M, params.c
    symbol = kinetic_symbol(grid, c)
    kin_radius = math.inf if params.nonrelativistic else c ** ((p + 3.0) / (2.0 * (p - 1.0)))
    h = grid.spacing

    def normalize(v: np.ndarray) -> np.ndarray:
        return v * math.sqrt(M / (h * float(np.dot(v, v))))

    init = _initial_field(p, mu_inf_closed_form(p, M), grid, opts)
    u = normalize(np.real(init.values).astype(float))
    E = energy(Field(grid, u), params)
    tau = opts.tau
    energies, kinetics = [E], []
    res = math.inf
    for n in range(opts.max_flow_steps):
        field_u = Field(grid, u)
        kin = symbol_energy(field_u, symbol)
        mu_n = (lp_norm_power(field_u, p + 1.0) - kin) / M
        denom, tau = _implicit_step(symbol, mu_n, tau)
        rhs = u + tau * _nonlinear(u, p)
        u_star = np.fft.ifft(np.fft.fft(rhs) / denom).real
        u_new = normalize(u_star)
        if opts.symmetrize_every and (n + 1) % opts.symmetrize_every == 0:
            u_new = normalize(0.5 * (u_new + np.roll(u_new[::-1], 1)))
        E_new = energy(Field(grid, u_new), params)
        if not (math.isfinite(E_new) and np.all(np.isfinite(u_new))) or E_new > E + 1e-12:
            tau *= 0.5
            LOGGER.debug("gradient flow: step rejected (E_new=%.6g, E=%.6g), tau -> %.3e", E_new, E, tau)
            if tau < 1e-10:
                raise SolverError(f"gradient flow stagnated: tau underflow at step {n}, residual {res:.3e}")
            continue
        u, E = u_new, E_new
        kin_norm = math.sqrt(max(symbol_energy(Field(grid, u), symbol), 0.0))
        if kin_norm > kin_radius:
            raise ConstraintViolation(
                f"gradient flow left the kinetic ball: {kin_norm:.6g} > {kin_radius:.6g} at step {n}")
        energies.append(E)
        kinetics.append(kin_norm)
        q_n = Field(grid, u)
        mu = (lp_norm_power(q_n, p + 1.0) - kin_norm ** 2) / M
        res = el_residual(q_n, mu, p, symbol)
        if n % opts.log_every == 0:
            LOGGER.debug("gradient flow step=%d E=%.15g mu=%.12g residual=%.3e tau=%.3g", n, E, mu, res, tau)
        if res <= opts.tol_residual:
            q = _finalize(u, grid)
            mu = (lp_norm_power(q, p + 1.0) - symbol_energy(q, symbol)) / mass(q)
            gs = GroundState(q, mu, params, el_residual(q, mu, p, symbol), 0.0, "gradient_flow", n + 1,
                             {"energy": energies, "kinetic_norm": kinetics})
            gs = replace(gs, pohozaev_residual=pohozaev_residual(gs))
            LOGGER.info("gradient flow p=%g c=%g M=%g: mu=%.15g residual=%.2e after %d steps",
                        p, c, M, mu, gs.el_residual, n + 1)
            return gs
    raise SolverError(f"gradient flow stagnated above tol: residual {res:.3e} after {opts.max_flow_steps} steps")


def solve(params: ModelParams, grid: Grid, opts: Optional[SolveOptions] = None,
          method: str = "petviashvili") -> GroundState:
    if method == "petviashvili":
        return solve_petviashvili(params, grid, opts)
    if method == "gradient_flow":
        return solve_gradient_flow(params, grid, opts)
    raise ParameterError(f"unknown method {method!r}")


# -----------------------------
# Pohozaev identities
# -----------------------------
def _pohozaev_terms(gs: GroundState) -> Dict[str, float]:
    q, p, c = gs.Q, gs.params.p, gs.params.c
    xi = q.grid.xi
    sigma = hc_symbol(xi, c)
    S = np.sqrt(c * c * xi * xi + 0.25 * c ** 4)
    return {"K": symbol_energy(q, sigma),
            "P": lp_norm_power(q, p + 1.0),
            "m": mass(q),
            "W": symbol_energy(q, sigma / np.sqrt(0.25 + (xi / c) ** 2)),
            "V": symbol_energy(q, c * c * xi * xi / S)}


def pohozaev_relativistic_residual(gs: GroundState) -> float:
    """|K/2 - (p-1)/(2(p+1)) P + W/4| relative to the largest of the three terms."""
    if gs.params.nonrelativistic:
        raise ParameterError("relativistic Pohozaev identity needs finite c")
    t = _pohozaev_terms(gs)
    p = gs.params.p
    a, b, w = 0.5 * t["K"], (p - 1.0) / (2.0 * (p + 1.0)) * t["P"], 0.25 * t["W"]
    return abs(a - b + w) / max(a, b, w)


def pohozaev_split_residuals(gs: GroundState) -> Dict[str, float]:
    """
    nehari:   K + mu m - P = 0
    dilation: -K/2 - mu m/2 + P/(p+1) + (c^2/2) <xi^2/S Q, Q> = 0
    """
    t = _pohozaev_terms(gs)
    p, mu = gs.params.p, gs.mu
    neh = [t["K"], mu * t["m"], -t["P"]]
    dil = [-0.5 * t["K"], -0.5 * mu * t["m"], t["P"] / (p + 1.0), 0.5 * t["V"]]
    return {"nehari": abs(sum(neh)) / max(abs(v) for v in neh),
            "dilation": abs(sum(dil)) / max(abs(v) for v in dil)}


def pohozaev_residual(gs: GroundState) -> float:
    if gs.params.nonrelativistic:
        return max(nonrel_pohozaev_residuals(gs.Q, gs.mu, gs.params.p))
    return pohozaev_relativistic_residual(gs)


# -----------------------------
# Ground-state diagnostics
# -----------------------------
@dataclass
class PropertyChain:
    applicable: bool
    energy: float
    lower_bound: Optional[float]
    identity_residual: Optional[float]
    kinetic_bound: Optional[float]
    kinetic_radius: Optional[float]
    holds: bool


def ground_state_property_chain(gs: GroundState, consts: Constants) -> PropertyChain:
    """
    p > 3: 0 > E >= (p-3)/(2(p-1)) K - c^2 M/(2(p-1)), via the exact rearrangement
    E = (p-3)/(2(p-1)) K - c^2 M/(2(p-1)) + c^4/(4(p-1)) <S^{-1} Q, Q>,
    and the implied ||sqrt(H_c) Q|| <= sqrt(M/(p-3)) c <= c^{(p+3)/(2(p-1))}.
    """
    p, c, M = gs.params.p, gs.params.c, gs.params.M
    E = energy_c(gs.Q, gs.params)
    if p <= 3.0:
        return PropertyChain(False, E, None, None, None, None, True)
    xi = gs.grid.xi
    K = kinetic_c(gs.Q, c)
    m = mass(gs.Q)
    Z = symbol_energy(gs.Q, 1.0 / np.sqrt(c * c * xi * xi + 0.25 * c ** 4))
    rearranged = (p - 3.0) / (2.0 * (p - 1.0)) * K - c * c * m / (2.0 * (p - 1.0)) + c ** 4 * Z / (4.0 * (p - 1.0))
    ident = abs(rearranged - E) / max(abs(E), 1e-300)
    lower = (p - 3.0) / (2.0 * (p - 1.0)) * K - c * c * M / (2.0 * (p - 1.0))
    kin_bound = math.sqrt(M / (p - 3.0)) * c
    kin_radius = thresholds(gs.params, consts).kinetic_radius
    holds = E < 0 and E >= lower and math.sqrt(K) <= kin_bound
    if c >= (M / (p - 3.0)) ** ((p - 1.0) / (5.0 - p)):
        holds = holds and kin_bound <= kin_radius * (1 + 1e-12)
    return PropertyChain(True, E, lower, ident, kin_bound, kin_radius, holds)


@dataclass
class H2Diagnostics:
    h2_norm: float
    h2_seminorm_sq: float
    kinetic_gap: float
    gap_bound: float

    @property
    def gap_ok(self) -> bool:
        return self.kinetic_gap <= self.gap_bound * (1 + 1e-12)


def h2_diagnostics(gs: GroundState) -> H2Diagnostics:
    q, c = gs.Q, gs.params.c
    xi = q.grid.xi
    semi = symbol_energy(q, xi ** 4)
    gap = symbol_energy(q, hc_symbol_gap(xi, c))
    bound = 0.0 if math.isinf(c) else semi / c ** 2
    return H2Diagnostics(sobolev_norm(q, 2.0), semi, gap, bound)


# -----------------------------
# Scaling
# -----------------------------
@dataclass(frozen=True)
class UnitProblem:
    params: ModelParams
    scale: float
    kinetic_radius: float = 1.0


def equivalent_unit_problem(params: ModelParams) -> UnitProblem:
    """u(x) = c^{2/(p-1)} v(cx) maps the c = 1 problem at mass c^{-(5-p)/(p-1)} M onto (p, c, M)."""
    if params.nonrelativistic:
        raise ParameterError("no unit problem for c = inf")
    p, c = params.p, params.c
    return UnitProblem(ModelParams(p, 1.0, c ** (-(5.0 - p) / (p - 1.0)) * params.M), c)


def scaling_transport(v: Field, c_target: float, p: float, target_grid: Optional[Grid] = None,
                      tail_tol: float = 1e-10) -> Field:
    """
    u(x) = c^{2/(p-1)} v(cx). The default target grid Grid(L/c, N) maps nodes onto nodes;
    any other grid is filled by spectral interpolation of v.
    """
    if not np.all(np.isfinite(v.values)):
        raise ScalingError("field to transport has non-finite samples")
    if not c_target > 0:
        raise ScalingError(f"c_target must be positive, got {c_target}")
    src = v.grid
    amp = c_target ** (2.0 / (p - 1.0))
    if target_grid is None:
        target_grid = Grid(src.length / c_target, src.n_points)
        return Field(target_grid, amp * v.values)

    v_hat = np.fft.fft(v.values)
    power = np.abs(v_hat) ** 2
    tail = float(np.sum(power[np.abs(src.xi) * c_target > target_grid.xi_max]) / max(np.sum(power), 1e-300))
    if tail > tail_tol:
        raise ScalingError(f"resampling would alias: spectral tail {tail:.3e} > {tail_tol:.1e}")
    y = c_target * target_grid.x
    inside = np.abs(y) <= 0.5 * src.length
    coeff = v_hat.copy()
    k = np.fft.fftfreq(src.n_points, d=1.0 / src.n_points)
    out = np.zeros(target_grid.n_points, dtype=complex)
    offset = y[inside] + 0.5 * src.length
    nyq = src.n_points // 2
    for start in range(0, offset.size, 512):
        chunk = offset[start:start + 512]
        phase = np.exp(2j * np.pi * np.outer(chunk, k) / src.length)
        phase[:, nyq] = np.cos(2.0 * np.pi * chunk * k[nyq] / src.length)
        out[np.nonzero(inside)[0][start:start + 512]] = phase @ coeff / src.n_points
    vals = amp * (out.real if v.is_real else out)
    return Field(target_grid, vals)


# -----------------------------
# Non-relativistic limit
# -----------------------------
def nonrel_limit_study(p: float, M: float, c_list: Sequence[float], grid: Optional[Grid] = None,
                       opts: Optional[SolveOptions] = None, method: str = "petviashvili") -> pd.DataFrame:
    """
    One row per c: ||Q_c - Q_inf||_{H^1}, |mu_c - mu_inf|, the kinetic gap
    ||Q_c'||^2 - ||sqrt(H_c) Q_c||^2 with its c^{-2} ||Q_c||_{H^2dot}^2 bound, ||Q_c||_{H^2},
    and the log-log slope of |mu_c - mu_inf| against c.
    """
    grid = grid or default_grid(p, M)
    mu_inf = mu_inf_closed_form(p, M)
    q_inf = soliton_inf(p, mu_inf, grid).Q
    rows = []
    for c in c_list:
        gs = solve(ModelParams(p, float(c), M), grid, opts, method)
        diag = h2_diagnostics(gs)
        rows.append({"c": float(c),
                     "h1_error": sobolev_norm(gs.Q - q_inf, 1.0),
                     "mu": gs.mu,
                     "mu_error": abs(gs.mu - mu_inf),
                     "kinetic_gap": diag.kinetic_gap,
                     "gap_bound": diag.gap_bound,
                     "h2_norm": diag.h2_norm,
                     "el_residual": gs.el_residual})
    table = pd.DataFrame(rows)
    rate = math.nan
    if len(table) >= 2 and (table["mu_error"] > 0).all():
        rate = float(np.polyfit(np.log(table["c"]), np.log(table["mu_error"]), 1)[0])
    table["mu_rate"] = rate
    table["gap_ok"] = table["kinetic_gap"] <= table["gap_bound"] * (1 + 1e-12)
    table.attrs["mu_inf"] = mu_inf
    table.attrs["mu_rate"] = rate
    if not table["gap_ok"].all():
        bad = table.loc[~table["gap_ok"], "c"].tolist()
        raise AssertionError(f"kinetic gap exceeds c^-2 ||Q_c||_H2dot^2 at c = {bad}")
    LOGGER.info("limit study p=%g M=%g over c=%s: mu rate %.4f", p, M, list(c_list), rate)
    return table


# -----------------------------
# Uniqueness probe
# -----------------------------
@dataclass
class UniquenessReport:
    seeds: List[int]
    distances: List[float]          # H^{1/2} distance of each solve to the first, after alignment
    max_pairwise: float
    mus: List[float]


def uniqueness_probe(params: ModelParams, grid: Grid, seeds: Sequence[int] = (0, 1, 2, 3, 4),
                     opts: Optional[SolveOptions] = None, method: str = "petviashvili") -> UniquenessReport:
    """Solve from seeded random even bumps, align each by modulation and compare in H^{1/2}."""
    from evolution import align_to_orbit, modulation_distance

    base = opts or SolveOptions()
    states = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        width = rng.uniform(2.0, 8.0)
        x = grid.x
        bump = np.exp(-0.5 * (x / width) ** 2) * (1.0 + 0.2 * rng.uniform(-1, 1) * np.cos(x / width))
        bump *= math.sqrt(params.M / (grid.spacing * float(np.dot(bump, bump))))
        init = symmetrize(Field(grid, np.abs(bump)))
        states.append(solve(params, grid, replace(base, init=init), method))
    ref = states[0]
    aligned = []
    for gs in states:
        res = modulation_distance(gs.Q, ref)
        aligned.append(align_to_orbit(gs.Q, res))
    dists = [sobolev_norm(a - ref.Q, 0.5) for a in aligned]
    pairwise = max((sobolev_norm(a - b, 0.5) for i, a in enumerate(aligned) for b in aligned[i + 1:]), default=0.0)
    return UniquenessReport(list(seeds), dists, pairwise, [gs.mu for gs in states])


# -----------------------------
# Persistence
# -----------------------------
def save_ground_state(base: str, gs: GroundState):
    save_field(base, gs.Q, {"p": gs.params.p, "c": gs.params.c, "M": gs.params.M, "kind": gs.method})
    write_json(base + ".record.json", dict(schema_version=1, **gs.record()))


def load_ground_state(base: str) -> GroundState:
    q, meta = load_field(base)
    with open(base + ".record.json", "r", encoding="utf-8") as f:
        rec = json.load(f)
    params = ModelParams(float(rec["p"]), float(rec["c"]), float(rec["M"]))
    q = Field(q.grid, np.maximum(np.real(q.values), 0.0), real_nonneg=True)
    return GroundState(q, float(rec["mu"]), params, float(rec["residuals"]["el"]),
                       float(rec["residuals"]["pohozaev"]), rec["method"], int(rec.get("iterations", 0)))


if __name__ == "__main__":
    p, M = 3.0, 1.0
    grid = default_grid(p, M)
    q_inf = soliton_inf(p, mu_inf_closed_form(p, M), grid)
    print(f"grid L={grid.length:g} N={grid.n_points}; Q_inf mass={mass(q_inf.Q):.12f} "
          f"E_inf={energy_inf(q_inf.Q, p):.12f} residual={q_inf.el_residual:.2e}")
    gs = solve_petviashvili(ModelParams(p, 8.0, M), grid)
    print(f"c=8: mu={gs.mu:.12f} E={gs.energy:.12f} residual={gs.el_residual:.2e} "
          f"pohozaev={gs.pohozaev_residual:.2e}")
