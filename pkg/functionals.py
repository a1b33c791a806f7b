"""
functionals.py
Mass, kinetic and energy functionals of the pseudo-relativistic NLS, the
modified Gagliardo-Nirenberg right-hand side, sharp GN constants, the
admissibility thresholds in c and the a-priori energy bounds built on them.

Constants for a given p are computed once (closed form for the H^1 constant,
a half-wave ground-state solve for the H^{1/2} constant) and cached in memory
and in a JSON file keyed by p.
"""

from __future__ import annotations

import json
import logging
import math
import os
import threading
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.special import gamma as gamma_fn

from spectral import (Field, Grid, hc_symbol, high_pass, inner, low_pass,
                      symbol_energy, write_json)

LOGGER = logging.getLogger(__name__)

DEFAULT_CONSTANTS_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "constants_cache.json")
HALF_WAVE_GRID = (8192.0, 131072)


class ParameterError(ValueError):
    """p, M, c or delta outside the admissible range."""


class ConstantsError(RuntimeError):
    """Constants record is inconsistent or could not be computed."""


# -----------------------------
# Parameters and constants
# -----------------------------
@dataclass(frozen=True)
class ModelParams:
    """(p, c, M) with 3 <= p < 5, M > 0 and c > 0 (c = inf is the Schrodinger limit)."""
    p: float
    c: float
    M: float

    def __post_init__(self):
        if not (3.0 <= self.p < 5.0):
            raise ParameterError(f"p must lie in [3, 5), got {self.p}")
        if not (self.M > 0 and math.isfinite(self.M)):
            raise ParameterError(f"mass M must be positive and finite, got {self.M}")
        if not self.c > 0:
            raise ParameterError(f"c must be positive, got {self.c}")

    @property
    def nonrelativistic(self) -> bool:
        return math.isinf(self.c)

    def to_dict(self) -> Dict[str, float]:
        return {"p": self.p, "c": self.c, "M": self.M}


@dataclass(frozen=True)
class Constants:
    """C_GN = 2^{(3p-1)/2} max(C1, Chalf); alpha = 4 C_GN / (p + 1)."""
    p: float
    C1: float
    Chalf: float
    CGN: float
    alpha: float
    provenance: Dict[str, str] = field(default_factory=dict, compare=False)

    @classmethod
    def assemble(cls, p: float, C1: float, Chalf: float, provenance: Optional[Dict[str, str]] = None) -> "Constants":
        cgn = 2.0 ** ((3.0 * p - 1.0) / 2.0) * max(C1, Chalf)
        return cls(p, C1, Chalf, cgn, 4.0 * cgn / (p + 1.0), dict(provenance or {}))

    def consistency_error(self) -> float:
        """Relative mismatch of CGN and alpha against their defining formulas."""
        cgn = 2.0 ** ((3.0 * self.p - 1.0) / 2.0) * max(self.C1, self.Chalf)
        alpha = 4.0 * cgn / (self.p + 1.0)
        return max(abs(self.CGN - cgn) / cgn, abs(self.alpha - alpha) / alpha)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "Constants":
        return cls(float(d["p"]), float(d["C1"]), float(d["Chalf"]), float(d["CGN"]),
                   float(d["alpha"]), dict(d.get("provenance", {})))


# -----------------------------
# Basic functionals
# -----------------------------
def mass(u: Field) -> float:
    return inner(u, u).real


def lp_norm_power(u: Field, q: float) -> float:
    """||u||_q^q = h * sum |u_j|^q."""
    return float(u.grid.spacing * np.sum(np.abs(u.values) ** q))


def kinetic_c(u: Field, c: float) -> float:
    """||sqrt(H_c) u||_2^2."""
    return symbol_energy(u, hc_symbol(u.grid.xi, c))


def kinetic_inf(u: Field) -> float:
    """||u'||_2^2."""
    return symbol_energy(u, u.grid.xi ** 2)


def energy_c(u: Field, params: ModelParams) -> float:
    if params.nonrelativistic:
        raise ParameterError("energy_c needs finite c; use energy_inf")
    return 0.5 * kinetic_c(u, params.c) - lp_norm_power(u, params.p + 1.0) / (params.p + 1.0)


def energy_inf(u: Field, p: float) -> float:
    return 0.5 * kinetic_inf(u) - lp_norm_power(u, p + 1.0) / (p + 1.0)


def energy(u: Field, params: ModelParams) -> float:
    return energy_inf(u, params.p) if params.nonrelativistic else energy_c(u, params)


def functional_I(u: Field, mu: float, params: ModelParams) -> float:
    """I(u) = E(u) + (mu/2) ||u||^2."""
    return energy(u, params) + 0.5 * mu * mass(u)


def gn_modified_terms(u: Field, delta: float, params: ModelParams, consts: Constants) -> Tuple[float, float]:
    """
    The two summands of the modified GN bound for ||u||_{p+1}^{p+1}:
      C_GN ||u||^{(p+3)/2} ||sqrt(H_c) P_{<=c delta} u||^{(p-1)/2}
      C_GN (c delta)^{-(p-1)/2} ||u||^2 ||sqrt(H_c) P_{>c delta} u||^{p-1}
    """
    if not (0.0 < delta <= 1.0):
        raise ParameterError(f"delta must lie in (0, 1], got {delta}")
    if params.nonrelativistic:
        raise ParameterError("modified GN bound needs finite c")
    p, c = params.p, params.c
    xi = u.grid.xi
    sigma = hc_symbol(xi, c)
    cut = c * delta
    k_low = symbol_energy(u, sigma * low_pass(cut).symbol(xi))
    k_high = symbol_energy(u, sigma * high_pass(cut).symbol(xi))
    m = mass(u)
    low = consts.CGN * m ** ((p + 3.0) / 4.0) * max(k_low, 0.0) ** ((p - 1.0) / 4.0)
    high = consts.CGN * cut ** (-(p - 1.0) / 2.0) * m * max(k_high, 0.0) ** ((p - 1.0) / 2.0)
    return low, high


def gn_modified_rhs(u: Field, delta: float, params: ModelParams, consts: Constants) -> float:
    low, high = gn_modified_terms(u, delta, params, consts)
    return low + high


def gn_quotient(u: Field, s: float, p: float) -> float:
    """
    ||u||_{p+1}^{p+1} / (||u||^a ||(-d^2)^{s/2} u||^b) with the scaling exponents
    b = (p-1)/(2s), a = (p+1) - b. s = 1 and s = 1/2 give the two sharp quotients.
    """
    b = (p - 1.0) / (2.0 * s)
    a = (p + 1.0) - b
    top = lp_norm_power(u, p + 1.0)
    l2 = math.sqrt(mass(u))
    dot = math.sqrt(symbol_energy(u, np.abs(u.grid.xi) ** (2.0 * s)))
    if l2 == 0.0 or dot == 0.0:
        raise ParameterError("GN quotient undefined for fields with zero norm or zero seminorm")
    return top / (l2 ** a * dot ** b)


# -----------------------------
# Sharp constants
# -----------------------------
def soliton_mass_coefficient(p: float) -> float:
    """K_p with mass(Q_inf(mu)) = K_p mu^{(5-p)/(2(p-1))}."""
    a = 2.0 / (p - 1.0)
    integral = math.sqrt(math.pi) * gamma_fn(a) / gamma_fn(a + 0.5)   # int sech^{2a}
    return ((p + 1.0) / 2.0) ** a * 2.0 / (p - 1.0) * integral


def mu_inf_closed_form(p: float, M: float) -> float:
    """mu_inf(M) from the explicit mass of the sech-profile soliton."""
    return (M / soliton_mass_coefficient(p)) ** (2.0 * (p - 1.0) / (5.0 - p))


def sharp_c1(p: float, M: float, mu_inf: float) -> float:
    """C_{1,p+1} from the ground state of mass M and multiplier mu_inf."""
    return (2.0 * (p + 1.0) / ((p + 3.0) ** ((5.0 - p) / 4.0) * (p - 1.0) ** ((p - 1.0) / 4.0))
            * mu_inf ** ((5.0 - p) / 4.0) / M ** ((p - 1.0) / 2.0))


def mu_inf_of_mass(p: float, M: float, consts: Constants) -> float:
    base = (p - 1.0) ** ((p - 1.0) / 4.0) * consts.C1 / (2.0 * (p + 1.0))
    return (p + 3.0) * base ** (4.0 / (5.0 - p)) * M ** (2.0 * (p - 1.0) / (5.0 - p))


def nonrel_min_energy(p: float, M: float, consts: Constants) -> float:
    base = (p - 1.0) ** ((p - 1.0) / 4.0) * consts.C1 / (2.0 * (p + 1.0))
    return -(5.0 - p) / 2.0 * base ** (4.0 / (5.0 - p)) * M ** ((p + 3.0) / (5.0 - p))


def nonrel_kinetic(p: float, M: float, consts: Constants) -> float:
    """||Q_inf'||^2 at mass M."""
    base = (p - 1.0) * consts.C1 / (2.0 * (p + 1.0))
    return base ** (4.0 / (5.0 - p)) * M ** ((p + 3.0) / (5.0 - p))


_C_HALF_CACHE: Dict[float, float] = {}
_C_HALF_LOCK = threading.Lock()


def sharp_c_half(p: float, grid: Optional[Grid] = None, opts=None, use_cache: bool = True) -> float:
    """
    C_{1/2,p+1} as the GN quotient of the half-wave ground state |D|Q + Q = Q^p.
    The profile decays like x^{-2}, hence the large default box.
    """
    if not (3.0 <= p < 5.0):
        raise ParameterError(f"p must lie in [3, 5), got {p}")
    default_grid = grid is None
    if use_cache and default_grid:
        with _C_HALF_LOCK:
            if p in _C_HALF_CACHE:
                return _C_HALF_CACHE[p]
    from groundstate import SolveOptions, solve_fixed_mu

    g = grid or Grid(*HALF_WAVE_GRID)
    opts = opts or SolveOptions(tol_residual=1e-11, max_inner=5000)
    init = g.field(1.0 / (1.0 + g.x ** 2))
    q, _, iters = solve_fixed_mu(np.abs(g.xi), 1.0, p, g, init, opts)
    value = gn_quotient(q, 0.5, p)
    LOGGER.info("C_half(p=%g) = %.15g on L=%g N=%d after %d iterations", p, value, g.length, g.n_points, iters)
    if use_cache and default_grid:
        with _C_HALF_LOCK:
            _C_HALF_CACHE[p] = value
    return value


def compute_constants(p: float) -> Constants:
    M = 1.0
    c1 = sharp_c1(p, M, mu_inf_closed_form(p, M))
    chalf = sharp_c_half(p)
    return Constants.assemble(p, c1, chalf, {
        "C1": "closed form from the sech soliton",
        "Chalf": f"half-wave ground state on L={HALF_WAVE_GRID[0]:g} N={HALF_WAVE_GRID[1]}",
    })


def _key(p: float) -> str:
    return format(float(p), ".17g")


def load_constants(path: str = DEFAULT_CONSTANTS_PATH) -> Dict[str, Constants]:
    if not os.path.exists(path):
        return {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        LOGGER.warning("ignoring unreadable constants cache %s: %s", path, e)
        return {}
    out = {}
    for k, v in raw.get("constants", {}).items():
        consts = Constants.from_dict(v)
        if consts.consistency_error() > 1e-12:
            raise ConstantsError(f"cached constants for p={k} in {path} are inconsistent")
        out[k] = consts
    return out


def save_constants(table: Dict[str, Constants], path: str = DEFAULT_CONSTANTS_PATH):
    write_json(path, {"schema_version": 1,
                      "constants": {k: v.to_dict() for k, v in sorted(table.items())}})


def get_constants(p: float, path: Optional[str] = DEFAULT_CONSTANTS_PATH) -> Constants:
    """Constants for p, from the JSON cache when present, computed and stored otherwise."""
    if not (3.0 <= p < 5.0):
        raise ParameterError(f"p must lie in [3, 5), got {p}")
    table = load_constants(path) if path else {}
    key = _key(p)
    if key in table:
        return table[key]
    consts = compute_constants(p)
    if path:
        table[key] = consts
        try:
            save_constants(table, path)
        except OSError as e:
            LOGGER.warning("could not write constants cache %s: %s", path, e)
    return consts


# -----------------------------
# Thresholds and a-priori bounds
# -----------------------------
@dataclass
class Thresholds:
    c_floor: float                   # (alpha^{4/(p+3)} M)^{(p-1)/(5-p)}
    c_existence: float               # max of c_floor and (alpha M)^{(p-1)/(5-p)}
    c_ground_state: Optional[float]  # (M/(p-3))^{(p-1)/(5-p)}, p > 3 only
    kinetic_radius: float            # c^{(p+3)/(2(p-1))}
    refined_radius: float            # alpha^{2/(5-p)} M^{(p+3)/(2(5-p))}

    @property
    def c_required(self) -> float:
        return max(self.c_existence, self.c_ground_state or 0.0)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def thresholds(params: ModelParams, consts: Constants) -> Thresholds:
    p, M, c, alpha = params.p, params.M, params.c, consts.alpha
    e = (p - 1.0) / (5.0 - p)
    floor = (alpha ** (4.0 / (p + 3.0)) * M) ** e
    existence = max((alpha * M) ** e, floor)
    gs = (M / (p - 3.0)) ** e if p > 3.0 else None
    kin = math.inf if params.nonrelativistic else c ** ((p + 3.0) / (2.0 * (p - 1.0)))
    refined = alpha ** (2.0 / (5.0 - p)) * M ** ((p + 3.0) / (2.0 * (5.0 - p)))
    if c >= floor and refined > kin * (1.0 + 1e-12):
        raise ConstantsError(f"refined radius {refined} exceeds kinetic radius {kin} at c={c} >= {floor}")
    return Thresholds(floor, existence, gs, kin, refined)


def admissible(params: ModelParams, consts: Constants) -> bool:
    """c at or above every threshold the existence and ground-state statements use."""
    return params.c >= thresholds(params, consts).c_required


@dataclass
class LowerBoundChain:
    energy: float
    kinetic_norm: float
    bound_gn: float
    bound_small_kinetic: Optional[float]
    bound_factored: Optional[float]
    ok: bool


def energy_lower_bound_chain(u: Field, params: ModelParams, consts: Constants, tol: float = 1e-12) -> LowerBoundChain:
    """
    E_c(u) >= 1/2 K^2 - alpha/4 (m^{(p+3)/4} K^{(p-1)/2} + c^{-(p-1)/2} m K^{p-1})
           >= (K <= kinetic radius) 1/2 K^2 - alpha/4 (m^{(p+3)/4} K^{(p-1)/2} + m c^{-(5-p)/(p-1)} K^2)
           >= (c >= (alpha M)^{(p-1)/(5-p)}) 1/4 K^{(p-1)/2} (K^{(5-p)/2} - alpha m^{(p+3)/4})
    with K = ||sqrt(H_c) u|| and m = ||u||^2. Bounds that do not apply are None.
    """
    p, c, alpha = params.p, params.c, consts.alpha
    E = energy_c(u, params)
    K = math.sqrt(max(kinetic_c(u, c), 0.0))
    m = mass(u)
    th = thresholds(params, consts)
    b1 = 0.5 * K ** 2 - 0.25 * alpha * (m ** ((p + 3.0) / 4.0) * K ** ((p - 1.0) / 2.0)
                                        + c ** (-(p - 1.0) / 2.0) * m * K ** (p - 1.0))
    b2 = None
    if K <= th.kinetic_radius:
        b2 = 0.5 * K ** 2 - 0.25 * alpha * (m ** ((p + 3.0) / 4.0) * K ** ((p - 1.0) / 2.0)
                                            + m * c ** (-(5.0 - p) / (p - 1.0)) * K ** 2)
    b3 = None
    if b2 is not None and c >= (alpha * params.M) ** ((p - 1.0) / (5.0 - p)) and m <= params.M * (1 + 1e-12):
        b3 = 0.25 * K ** ((p - 1.0) / 2.0) * (K ** ((5.0 - p) / 2.0) - alpha * m ** ((p + 3.0) / 4.0))
    scale = max(1.0, abs(E), abs(b1))
    ok = E >= b1 - tol * scale
    if b2 is not None:
        ok = ok and b1 >= b2 - tol * scale
    if b3 is not None:
        ok = ok and b2 >= b3 - tol * scale
    return LowerBoundChain(E, K, b1, b2, b3, ok)


@dataclass
class SeparationResult:
    applicable: bool
    kinetic_norm: float
    kinetic_radius: float
    refined_radius: float
    holds: bool


def negative_energy_separation(u: Field, params: ModelParams, consts: Constants, mass_rtol: float = 1e-8) -> SeparationResult:
    """At mass M with E_c(u) < 0: ||sqrt(H_c) u|| is either > kinetic radius or <= refined radius."""
    th = thresholds(params, consts)
    K = math.sqrt(max(kinetic_c(u, params.c), 0.0))
    applicable = abs(mass(u) - params.M) <= mass_rtol * params.M and energy_c(u, params) < 0.0
    holds = (K > th.kinetic_radius or K <= th.refined_radius) if applicable else True
    return SeparationResult(applicable, K, th.kinetic_radius, th.refined_radius, holds)


if __name__ == "__main__":
    p, M = 3.0, 1.0
    mu = mu_inf_closed_form(p, M)
    print(f"mu_inf(M=1) = {mu}  (expect 1/16)")
    print(f"C_1,4 = {sharp_c1(p, M, mu)}  (expect 1/sqrt(3) = {1 / math.sqrt(3)})")
    consts = Constants.assemble(p, sharp_c1(p, M, mu), 0.0)
    print(f"J_inf = {nonrel_min_energy(p, M, consts)}  (expect -1/96)")
