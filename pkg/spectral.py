"""
spectral.py
Periodic pseudospectral substrate for the pseudo-relativistic NLS suite.

 - Grid / Field value types (uniform samples of [-L/2, L/2) and the discrete frequencies)
 - discrete inner product <u, v> = h * sum u_j conj(v_j)
 - Fourier multipliers: H_c, sqrt(H_c), 1 + H_c, d/dx, |d/dx|^s, sharp low/high-pass cut-offs
 - symbol bounds report for H_c
 - field snapshots (binary + JSON sidecar) and the JSON writer shared by every report

Transform convention: forward FFT unnormalized, inverse carries 1/N. Every
physical quantity goes through `inner`, which carries the quadrature weight h.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

LOGGER = logging.getLogger(__name__)


class GridError(ValueError):
    """Invalid grid, or fields living on different grids."""


class MultiplierError(ValueError):
    """Multiplier symbol not finite on the frequency set."""


class SymbolBoundViolation(AssertionError):
    """Raised by SymbolBoundsReport.raise_for_violations."""


# -----------------------------
# Grid and Field
# -----------------------------
@dataclass(frozen=True)
class Grid:
    """
    Uniform periodic grid on [-L/2, L/2):
      x_j = -L/2 + j*h, j = 0..N-1, h = L/N
      xi_k = 2*pi*k/L, k in [-N/2, N/2)  (stored in FFT order)
    The grid centre x = 0 sits at index N/2.
    """
    length: float
    n_points: int

    def __post_init__(self):
        if not (self.length > 0 and math.isfinite(self.length)):
            raise GridError(f"grid length must be positive and finite, got {self.length}")
        if self.n_points <= 0 or self.n_points % 2:
            raise GridError(f"n_points must be a positive even integer, got {self.n_points}")

    @property
    def spacing(self) -> float:
        return self.length / self.n_points

    @property
    def center(self) -> int:
        return self.n_points // 2

    @cached_property
    def x(self) -> np.ndarray:
        return -0.5 * self.length + self.spacing * np.arange(self.n_points)

    @cached_property
    def xi(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.spacing)

    @property
    def xi_max(self) -> float:
        return np.pi / self.spacing

    def field(self, values: Any, real_nonneg: bool = False) -> "Field":
        return Field(self, np.asarray(values), real_nonneg=real_nonneg)

    def zeros(self, dtype=float) -> "Field":
        return Field(self, np.zeros(self.n_points, dtype=dtype))

    def to_dict(self) -> Dict[str, Any]:
        return {"L": float(self.length), "N": int(self.n_points)}


@dataclass(frozen=True, eq=False)
class Field:
    """
    Grid function with value semantics. Values are stored read-only;
    real-valued fields stay float64, everything else is complex128.
    `real_nonneg` marks ground-state profiles (imaginary part 0, samples >= 0).
    """
    grid: Grid
    values: np.ndarray
    real_nonneg: bool = False

    # numpy scalars defer to __rmul__
    __array_ufunc__ = None

    def __post_init__(self):
        vals = np.array(self.values, copy=True)
        if vals.shape != (self.grid.n_points,):
            raise GridError(f"expected {self.grid.n_points} samples, got shape {vals.shape}")
        if np.iscomplexobj(vals):
            vals = vals.astype(np.complex128)
        else:
            vals = vals.astype(np.float64)
        if self.real_nonneg:
            if np.iscomplexobj(vals) or np.any(vals < 0):
                raise ValueError("field flagged real_nonneg has complex or negative samples")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.values)

    def with_values(self, values: np.ndarray, real_nonneg: bool = False) -> "Field":
        return Field(self.grid, values, real_nonneg=real_nonneg)

    def _check(self, other: "Field"):
        if self.grid != other.grid:
            raise GridError(f"grid mismatch: {self.grid} vs {other.grid}")

    def __add__(self, other: "Field") -> "Field":
        self._check(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        self._check(other)
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar: complex) -> "Field":
        return self.with_values(scalar * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return self.with_values(-self.values)

    def conj(self) -> "Field":
        return self.with_values(np.conj(self.values))


# -----------------------------
# Transforms and the discrete inner product
# -----------------------------
def forward(u: Field) -> np.ndarray:
    return np.fft.fft(u.values)


def inverse(coeffs: np.ndarray, grid: Grid, real: bool = False) -> Field:
    vals = np.fft.ifft(coeffs)
    return Field(grid, vals.real if real else vals)


def inner(u: Field, v: Field) -> complex:
    """<u, v> = h * sum_j u_j conj(v_j); linear in u, conjugate-linear in v."""
    if u.grid != v.grid:
        raise GridError(f"grid mismatch: {u.grid} vs {v.grid}")
    return complex(u.grid.spacing * np.vdot(v.values, u.values))


def norm(u: Field) -> float:
    return math.sqrt(max(inner(u, u).real, 0.0))


def symbol_energy(u: Field, symbol: np.ndarray) -> float:
    """Parseval sum (h/N) * sum_k symbol_k |u_hat_k|^2, i.e. <sigma(D) u, u>."""
    g = u.grid
    return float(g.spacing / g.n_points * np.sum(symbol * np.abs(np.fft.fft(u.values)) ** 2))


# -----------------------------
# Symbols
# -----------------------------
def hc_symbol(xi, c: float, m: float = 0.5):
    """
    sigma_{m,c}(xi) = sqrt(m^2 c^4 + c^2 xi^2) - m c^2, evaluated in the
    rationalized form c^2 xi^2 / (sqrt(m^2 c^4 + c^2 xi^2) + m c^2).
    m = 1/2 is the operator H_c. c = inf returns the limit symbol xi^2 / (2m).
    """
    arr = np.asarray(xi, dtype=float)
    if math.isinf(c):
        out = arr * arr / (2.0 * m)
    else:
        c2 = c * c
        mc2 = m * c2
        out = c2 * arr * arr / (np.sqrt(c2 * arr * arr + mc2 * mc2) + mc2)
    return float(out) if out.ndim == 0 else out


def hc_symbol_gap(xi, c: float):
    """xi^2 - sigma_c(xi) = xi^4 / (sqrt(c^2 xi^2 + c^4/4) + c^2/2 + xi^2), never by subtraction."""
    arr = np.asarray(xi, dtype=float)
    if math.isinf(c):
        out = np.zeros_like(arr)
    else:
        c2 = c * c
        x2 = arr * arr
        out = x2 * x2 / (np.sqrt(c2 * x2 + 0.25 * c2 * c2) + 0.5 * c2 + x2)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class MultiplierSpec:
    """
    Fourier multiplier u -> F^{-1}[symbol(xi) * F u].
    `odd` symbols (derivatives) get the Nyquist mode zeroed.
    """
    tag: str
    symbol: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    odd: bool = False

    def on(self, grid: Grid) -> np.ndarray:
        vals = np.asarray(self.symbol(grid.xi))
        if vals.shape == ():
            vals = np.full(grid.n_points, vals)
        if self.odd:
            vals = np.array(vals, dtype=complex)
            vals[grid.n_points // 2] = 0.0
        return vals


def hc(c: float, m: float = 0.5) -> MultiplierSpec:
    return MultiplierSpec(f"Hc(c={c:g})", lambda xi: hc_symbol(xi, c, m))


def sqrt_hc(c: float) -> MultiplierSpec:
    return MultiplierSpec(f"sqrtHc(c={c:g})", lambda xi: np.sqrt(hc_symbol(xi, c)))


def weight_1_plus_hc(c: float) -> MultiplierSpec:
    return MultiplierSpec(f"1+Hc(c={c:g})", lambda xi: 1.0 + hc_symbol(xi, c))


def dx() -> MultiplierSpec:
    return MultiplierSpec("dx", lambda xi: 1j * xi, odd=True)


def abs_dx(s: float) -> MultiplierSpec:
    return MultiplierSpec(f"|dx|^{s:g}", lambda xi: np.abs(xi) ** s)


def low_pass(cutoff: float) -> MultiplierSpec:
    return MultiplierSpec(f"low_pass({cutoff:g})", lambda xi: (np.abs(xi) <= cutoff).astype(float))


def high_pass(cutoff: float) -> MultiplierSpec:
    return MultiplierSpec(f"high_pass({cutoff:g})", lambda xi: (np.abs(xi) > cutoff).astype(float))


def apply_multiplier(u: Field, m: MultiplierSpec) -> Field:
    sym = m.on(u.grid)
    if not np.all(np.isfinite(sym)):
        bad = u.grid.xi[~np.isfinite(sym)]
        raise MultiplierError(f"symbol {m.tag} not finite at xi = {bad[:5]}")
    out = np.fft.ifft(sym * np.fft.fft(u.values))
    # every built-in symbol satisfies sigma(-xi) = conj(sigma(xi))
    return Field(u.grid, out.real if u.is_real else out)


# -----------------------------
# Norms
# -----------------------------
def sobolev_norm(u: Field, s: float) -> float:
    """||u||_{H^s} with weight (1 + xi^2)^s."""
    return math.sqrt(symbol_energy(u, (1.0 + u.grid.xi ** 2) ** s))


def hc_norm(u: Field, c: float) -> float:
    """||sqrt(H_c) u||_2."""
    return math.sqrt(max(symbol_energy(u, hc_symbol(u.grid.xi, c)), 0.0))


def weighted_norm(u: Field, c: float) -> float:
    """||sqrt(1 + H_c) u||_2, the norm of the orbital stability statement."""
    return math.sqrt(symbol_energy(u, 1.0 + hc_symbol(u.grid.xi, c)))


# -----------------------------
# Symmetry helpers
# -----------------------------
def reflect(u: Field) -> Field:
    """u(x) -> u(-x) about the grid centre."""
    return u.with_values(np.roll(u.values[::-1], 1))


def symmetrize(u: Field) -> Field:
    """Even part (u(x) + u(-x)) / 2."""
    return u.with_values(0.5 * (u.values + np.roll(u.values[::-1], 1)))


def shift(u: Field, a: float) -> Field:
    """Exact spectral translation u(x) -> u(x - a)."""
    g = u.grid
    phase = np.exp(-1j * g.xi * a)
    phase[g.n_points // 2] = math.cos(g.xi[g.n_points // 2] * a)
    out = np.fft.ifft(phase * np.fft.fft(u.values))
    return Field(g, out.real if u.is_real else out)


# -----------------------------
# Symbol bounds for H_c
# -----------------------------
@dataclass
class SymbolBoundsReport:
    c: float
    delta: float
    n_samples: int
    worst_low_margin: float        # sigma - xi^2/2 on |xi| <= c*delta
    worst_high_margin: float       # sigma - (c*delta/2)|xi| on |xi| >= c*delta
    worst_upper_margin: float      # xi^2 - sigma everywhere
    worst_limit_margin: float      # xi^4/c^2 - |sigma - xi^2| everywhere
    violations: List[Dict[str, float]]

    @property
    def passed(self) -> bool:
        return not self.violations

    def raise_for_violations(self):
        if self.violations:
            first = self.violations[0]
            raise SymbolBoundViolation(
                f"{len(self.violations)} symbol bound violations, first: bound={first['bound']} "
                f"xi={first['xi']!r} c={self.c!r} delta={self.delta!r}")


def symbol_bounds_check(c: float, delta: float, xi_samples: Iterable[float]) -> SymbolBoundsReport:
    """
    Lower bounds sigma_c >= xi^2/2 (|xi| <= c delta) and sigma_c >= (c delta/2)|xi|
    (|xi| >= c delta), upper bound sigma_c <= xi^2, and |sigma_c - xi^2| <= xi^4/c^2.
    Returns the worst margin of each; violations name xi, c and delta.
    """
    if not (0.0 < delta <= 1.0):
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    xi = np.asarray(list(xi_samples), dtype=float)
    sigma = hc_symbol(xi, c)
    sigma = np.atleast_1d(sigma)
    ax = np.abs(xi)
    cut = c * delta
    violations: List[Dict[str, float]] = []

    def _scan(name: str, mask: np.ndarray, margin: np.ndarray, scale: np.ndarray) -> float:
        if not np.any(mask):
            return float("inf")
        m = margin[mask]
        tol = 1e-14 * np.maximum(1.0, scale[mask])
        for idx in np.nonzero(m < -tol)[0]:
            violations.append({"bound": name, "xi": float(xi[mask][idx]), "c": c,
                               "delta": delta, "margin": float(m[idx])})
        return float(np.min(m))

    low = _scan("low", ax <= cut, sigma - 0.5 * xi ** 2, xi ** 2)
    high = _scan("high", ax >= cut, sigma - 0.5 * cut * ax, cut * ax)
    upper = _scan("upper", np.ones_like(ax, dtype=bool), np.atleast_1d(hc_symbol_gap(xi, c)), xi ** 2)
    limit = _scan("limit", np.ones_like(ax, dtype=bool),
                  xi ** 4 / c ** 2 - np.atleast_1d(hc_symbol_gap(xi, c)), xi ** 4 / c ** 2)
    if violations:
        LOGGER.warning("symbol bounds: %d violations at c=%g delta=%g", len(violations), c, delta)
    return SymbolBoundsReport(c, delta, int(xi.size), low, high, upper, limit, violations)


# -----------------------------
# JSON writing and field snapshots
# -----------------------------
def _jsonable(obj: Any) -> Any:
    """numpy scalars and arrays to builtins; non-finite floats become the strings "nan", "inf", "-inf"."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def dumps_json(obj: Any) -> str:
    """Compact JSON, keys in insertion order. Floats use repr, which round-trips exactly."""
    return json.dumps(_jsonable(obj), allow_nan=False)


def write_json(path: str, obj: Any):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_jsonable(obj), f, indent=2, allow_nan=False)
        f.write("\n")


def save_field(base: str, u: Field, meta: Dict[str, Any]):
    """
    Snapshot: <base>.bin holds little-endian float64 interleaved (re, im);
    <base>.json holds {L, N, p, c, M, kind}.
    """
    os.makedirs(os.path.dirname(os.path.abspath(base)), exist_ok=True)
    np.asarray(u.values, dtype="<c16").tofile(base + ".bin")
    sidecar = {"L": u.grid.length, "N": u.grid.n_points}
    for key in ("p", "c", "M", "kind"):
        sidecar[key] = meta.get(key)
    write_json(base + ".json", sidecar)


def load_field(base: str) -> Tuple[Field, Dict[str, Any]]:
    with open(base + ".json", "r", encoding="utf-8") as f:
        meta = json.load(f)
    grid = Grid(float(meta["L"]), int(meta["N"]))
    vals = np.fromfile(base + ".bin", dtype="<c16")
    if vals.size != grid.n_points:
        raise GridError(f"snapshot {base} holds {vals.size} samples, sidecar says {grid.n_points}")
    if np.all(vals.imag == 0):
        return Field(grid, vals.real.copy()), meta
    return Field(grid, vals), meta


# -----------------------------
# Quick demo
# -----------------------------
if __name__ == "__main__":
    g = Grid(40.0, 1024)
    gauss = g.field(np.exp(-g.x ** 2))
    print("<g, g> =", inner(gauss, gauss).real, " sqrt(pi/2) =", math.sqrt(math.pi / 2))
    print("sigma_2(sqrt 3) =", hc_symbol(math.sqrt(3.0), 2.0))
    rep = symbol_bounds_check(4.0, 0.5, np.linspace(-40, 40, 2001))
    print("symbol bounds pass:", rep.passed, " worst margins:",
          rep.worst_low_margin, rep.worst_high_margin, rep.worst_upper_margin)
