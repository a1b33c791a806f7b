"""
evolution.py
Strang-split time integration of  i u_t = H_c u - |u|^{p-1} u,  conservation
monitoring, the modulation distance to the ground-state orbit, the orbital
stability experiment and the kinetic-bound (global well-posedness) monitor.
"""

from __future__ import annotations

import cmath
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Any, Dict, List, Optional

import numpy as np

from functionals import Constants, ModelParams, energy_c, mass, thresholds
from groundstate import GroundState
from spectral import (Field, Grid, GridError, dumps_json, hc_norm, hc_symbol, save_field,
                      shift, weighted_norm)

LOGGER = logging.getLogger(__name__)

BLOWUP_FACTOR = 1e6
PERTURBATION_SEED = 0x5EED
PERTURBATION_MODES = 32


class BlowUpError(RuntimeError):
    def __init__(self, message: str, last_state: "EvolutionState"):
        super().__init__(message)
        self.last_state = last_state


class ModulationError(ValueError):
    """Correlation with the ground state has no usable peak."""


@dataclass(frozen=True)
class EvolutionState:
    t: float
    u: Field


@dataclass
class IntegratorConfig:
    dt: float = 1e-2
    T: float = 1.0
    sample_stride: int = 10
    scheme: str = "strang"
    snapshot_every: int = 0

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError(f"T must be positive, got {self.T}")
        if self.sample_stride < 1:
            raise ValueError("sample_stride must be >= 1")
        if self.scheme != "strang":
            raise ValueError(f"unsupported scheme {self.scheme!r}")

    def steps(self) -> List[float]:
        """Full steps of size dt, then one short step so that the steps sum to T."""
        n = int(math.floor(self.T / self.dt + 1e-9))
        out = [self.dt] * n
        rest = self.T - n * self.dt
        if rest > 1e-12 * self.T:
            out.append(rest)
        return out


# -----------------------------
# Strang step
# -----------------------------
@lru_cache(maxsize=32)
def _half_step_phase(length: float, n_points: int, c: float, dt: float) -> np.ndarray:
    grid = Grid(length, n_points)
    return np.exp(-0.5j * dt * hc_symbol(grid.xi, c))


def linear_half_step(u: Field, c: float, dt: float) -> Field:
    """u -> exp(-i (dt/2) H_c) u; an exact isometry of the discrete L^2 norm."""
    phase = _half_step_phase(u.grid.length, u.grid.n_points, c, dt)
    return Field(u.grid, np.fft.ifft(phase * np.fft.fft(u.values)))


def nonlinear_step(u: Field, p: float, dt: float) -> Field:
    """u -> u exp(i dt |u|^{p-1}); |u| unchanged pointwise."""
    vals = u.values
    return Field(u.grid, vals * np.exp(1j * dt * np.abs(vals) ** (p - 1.0)))


def step_strang(state: EvolutionState, params: ModelParams, dt: float) -> EvolutionState:
    if params.nonrelativistic:
        raise ValueError("step_strang needs finite c")
    u = linear_half_step(state.u, params.c, dt)
    u = nonlinear_step(u, params.p, dt)
    u = linear_half_step(u, params.c, dt)
    if not np.all(np.isfinite(u.values)):
        raise BlowUpError(f"non-finite samples at t={state.t + dt:.6g}", state)
    return EvolutionState(state.t + dt, u)


# -----------------------------
# Modulation distance
# -----------------------------
@dataclass
class ModulationResult:
    distance: float
    x1: float
    theta1: float


def _wrap_phase(theta: float) -> float:
    return float(math.atan2(math.sin(theta), math.cos(theta)))


def modulation_distance(u: Field, gs: GroundState, newton_steps: int = 8) -> ModulationResult:
    """
    inf over (x1, theta1) of ||sqrt(1 + H_c)(e^{-i theta1} u(. + x1) - Q)||, returned with the orbit
    coordinates (u ~ e^{i theta1} Q(. - x1)). The weighted correlation <u, Q(. - a)>_W is computed for
    all grid shifts with one FFT, refined by a parabola through the peak and polished by Newton steps
    on |corr(a)|^2; the distance itself is evaluated directly at the optimum.
    """
    if u.grid != gs.grid:
        raise GridError("modulation_distance: field and ground state live on different grids")
    g = u.grid
    n, h = g.n_points, g.spacing
    wsym = 1.0 + hc_symbol(g.xi, gs.params.c)
    u_hat = np.fft.fft(u.values)
    q_hat = np.fft.fft(gs.Q.values)
    cross = u_hat * np.conj(wsym * q_hat)
    corr = h * np.fft.ifft(cross)
    mag = np.abs(corr)
    m = int(np.argmax(mag))
    peak = float(mag[m])
    if not (peak > 0.0 and math.isfinite(peak)) or (peak - float(mag.min())) <= 1e-12 * peak:
        raise ModulationError(f"flat or empty correlation (peak {peak:.3e})")

    y0, ym, yp = peak, float(mag[(m - 1) % n]), float(mag[(m + 1) % n])
    denom = ym - 2.0 * y0 + yp
    offset = 0.5 * (ym - yp) / denom if denom < 0 else 0.0
    a = ((m if m < n // 2 else m - n) + offset) * h

    xi = g.xi.copy()
    cross_c = cross.copy()
    cross_c[n // 2] = 0.0

    def corr_at(a_val: float, order: int = 0) -> complex:
        e = np.exp(1j * xi * a_val)
        return complex(h / n * np.sum((1j * xi) ** order * cross_c * e))

    for _ in range(newton_steps):
        c0, c1, c2 = corr_at(a), corr_at(a, 1), corr_at(a, 2)
        f1 = 2.0 * (np.conj(c0) * c1).real
        f2 = 2.0 * (abs(c1) ** 2 + (np.conj(c0) * c2).real)
        if f2 >= 0:
            break
        step = -f1 / f2
        a += step
        if abs(step) < 1e-15 * g.length:
            break

    theta = _wrap_phase(float(np.angle(corr_at(a))))
    x1 = float((a + 0.5 * g.length) % g.length - 0.5 * g.length)
    diff = np.exp(-1j * theta) * shift(u, -x1).values - gs.Q.values
    dist = math.sqrt(h / n * float(np.sum(wsym * np.abs(np.fft.fft(diff)) ** 2)))
    return ModulationResult(dist, x1, theta)


def align_to_orbit(u: Field, res: ModulationResult) -> Field:
    """e^{-i theta1} u(. + x1): u moved back onto the reference profile."""
    return cmath.exp(-1j * res.theta1) * shift(u, -res.x1)


# -----------------------------
# Trajectories
# -----------------------------
@dataclass
class TrajectorySample:
    t: float
    mass: float
    energy: float
    kinetic_norm: float
    mod_distance: Optional[float] = None
    x1: Optional[float] = None
    theta1: Optional[float] = None
    overlap_phase: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class Trajectory:
    params: ModelParams
    config: IntegratorConfig
    samples: List[TrajectorySample]
    final: EvolutionState
    blew_up: bool = False
    message: str = ""


def _sample(state: EvolutionState, params: ModelParams, gs: Optional[GroundState]) -> TrajectorySample:
    u = state.u
    s = TrajectorySample(state.t, mass(u), energy_c(u, params), hc_norm(u, params.c))
    if gs is not None:
        mod = modulation_distance(u, gs)
        s.mod_distance, s.x1, s.theta1 = mod.distance, mod.x1, mod.theta1
        s.overlap_phase = float(np.angle(np.vdot(gs.Q.values, u.values)))
    return s


def evolve(u0: Field, params: ModelParams, cfg: IntegratorConfig, gs: Optional[GroundState] = None,
           jsonl_path: Optional[str] = None, snapshot_dir: Optional[str] = None) -> Trajectory:
    """Advance u0 to T; samples every `sample_stride` steps and at T. Blow-up truncates and flags the run."""
    state = EvolutionState(0.0, u0.with_values(np.asarray(u0.values, dtype=complex)))
    amp0 = float(np.max(np.abs(u0.values)))
    limit = BLOWUP_FACTOR * amp0 if amp0 > 0 else math.inf
    samples = [_sample(state, params, gs)]
    sink = open(jsonl_path, "w", encoding="utf-8") if jsonl_path else None
    if sink:
        sink.write(dumps_json(samples[0].to_dict()) + "\n")
    steps = cfg.steps()
    blew_up, message = False, ""
    try:
        for i, dt in enumerate(steps, start=1):
            state = step_strang(state, params, dt)
            if float(np.max(np.abs(state.u.values))) > limit:
                raise BlowUpError(f"amplitude above {BLOWUP_FACTOR:g} x initial at t={state.t:.6g}", state)
            if i % cfg.sample_stride == 0 or i == len(steps):
                s = _sample(state, params, gs)
                samples.append(s)
                if sink:
                    sink.write(dumps_json(s.to_dict()) + "\n")
            if snapshot_dir and cfg.snapshot_every and i % cfg.snapshot_every == 0:
                save_field(os.path.join(snapshot_dir, f"u_{i:07d}"), state.u,
                           {"p": params.p, "c": params.c, "M": params.M, "kind": f"t={state.t:.17g}"})
    except BlowUpError as e:
        blew_up, message = True, str(e)
        state = e.last_state
        LOGGER.warning("evolution truncated: %s", e)
    finally:
        if sink:
            sink.close()
    LOGGER.info("evolved to t=%.6g in %d steps (%d samples)%s", state.t, len(steps), len(samples),
                " [blow-up]" if blew_up else "")
    return Trajectory(params, cfg, samples, state, blew_up, message)


@dataclass
class ConservationReport:
    mass_drift: float
    energy_drift: float
    n_samples: int


def conserved_report(trajectory: Trajectory) -> ConservationReport:
    if not trajectory.samples:
        raise ValueError("empty trajectory")
    m0 = trajectory.samples[0].mass
    e0 = trajectory.samples[0].energy
    md = max(abs(s.mass - m0) for s in trajectory.samples) / m0 if m0 else 0.0
    ed = max(abs(s.energy - e0) for s in trajectory.samples) / abs(e0) if e0 else 0.0
    return ConservationReport(md, ed, len(trajectory.samples))


def standing_wave_phase(trajectory: Trajectory) -> float:
    """Slope of the unwrapped arg<u(t), Q> against t; mu_c for the standing wave."""
    pts = [(s.t, s.overlap_phase) for s in trajectory.samples if s.overlap_phase is not None]
    if len(pts) < 2:
        raise ValueError("standing_wave_phase needs a trajectory sampled against a ground state")
    t, ph = np.array(pts).T
    return float(np.polyfit(t, np.unwrap(ph), 1)[0])


# -----------------------------
# Stability experiment and kinetic-bound monitor
# -----------------------------
def even_perturbation(grid: Grid, c: float, seed: int = PERTURBATION_SEED,
                      n_modes: int = PERTURBATION_MODES) -> Field:
    """sum_{k < n_modes} (a_k + i b_k) cos(2 pi k x / L), normalized in the sqrt(1 + H_c) norm."""
    rng = np.random.default_rng(seed)
    coeff = rng.standard_normal(n_modes) + 1j * rng.standard_normal(n_modes)
    k = np.arange(n_modes)
    w = np.cos(2.0 * np.pi * np.outer(grid.x, k) / grid.length) @ coeff
    w = Field(grid, w)
    return (1.0 / weighted_norm(w, c)) * w


@dataclass
class GWPReport:
    status: str                 # ok | violated | hypotheses unmet
    refined_radius: float
    max_kinetic_norm: float
    worst_margin: float
    violations: int
    detail: str = ""


def gwp_monitor(trajectory: Trajectory, params: ModelParams, consts: Constants,
                mass_rtol: float = 1e-8) -> GWPReport:
    th = thresholds(params, consts)
    s0 = trajectory.samples[0]
    unmet = []
    if not s0.energy < 0:
        unmet.append(f"initial energy {s0.energy:.6g} >= 0")
    if abs(s0.mass - params.M) > mass_rtol * params.M:
        unmet.append(f"initial mass {s0.mass:.12g} != M={params.M:g}")
    if s0.kinetic_norm > th.kinetic_radius:
        unmet.append(f"initial kinetic norm {s0.kinetic_norm:.6g} > {th.kinetic_radius:.6g}")
    kmax = max(s.kinetic_norm for s in trajectory.samples)
    if unmet:
        return GWPReport("hypotheses unmet", th.refined_radius, kmax, math.nan, 0, "; ".join(unmet))
    violations = sum(1 for s in trajectory.samples if s.kinetic_norm > th.refined_radius)
    return GWPReport("ok" if violations == 0 else "violated", th.refined_radius, kmax,
                     th.refined_radius - kmax, violations)


@dataclass
class StabilityReport:
    delta: float
    seed: int
    times: List[float]
    distances: List[float]
    sup_distance: float
    blew_up: bool
    gwp: Optional[GWPReport]
    trajectory: Trajectory = field(repr=False)


def stability_experiment(gs: GroundState, delta: float, cfg: IntegratorConfig,
                         seed: int = PERTURBATION_SEED, consts: Optional[Constants] = None,
                         jsonl_path: Optional[str] = None) -> StabilityReport:
    """Evolve (Q + delta w) rescaled to mass M and track the modulation distance to the orbit of Q."""
    if delta < 0:
        raise ValueError(f"perturbation scale must be nonnegative, got {delta}")
    params = gs.params
    u0 = gs.Q.with_values(np.asarray(gs.Q.values, dtype=complex))
    if delta > 0:
        u0 = u0 + delta * even_perturbation(gs.grid, params.c, seed)
    u0 = math.sqrt(params.M / mass(u0)) * u0
    traj = evolve(u0, params, cfg, gs=gs, jsonl_path=jsonl_path)
    dists = [s.mod_distance for s in traj.samples]
    report = StabilityReport(delta, seed, [s.t for s in traj.samples], dists, max(dists), traj.blew_up,
                             gwp_monitor(traj, params, consts) if consts is not None else None, traj)
    LOGGER.info("stability delta=%g: sup distance %.3e over T=%g%s", delta, report.sup_distance, cfg.T,
                " [blow-up]" if traj.blew_up else "")
    return report


if __name__ == "__main__":
    from groundstate import default_grid, solve_petviashvili

    params = ModelParams(3.0, 8.0, 1.0)
    gs = solve_petviashvili(params, default_grid(3.0, 1.0))
    traj = evolve(gs.Q, params, IntegratorConfig(dt=1e-2, T=10.0, sample_stride=100), gs=gs)
    rep = conserved_report(traj)
    print(f"mass drift {rep.mass_drift:.2e}  energy drift {rep.energy_drift:.2e}  "
          f"phase slope {standing_wave_phase(traj):.10f} vs mu {gs.mu:.10f}")
