"""
linops.py
Linearized operators L = K - p Q^{p-1} + mu about a ground state (K = -d^2 for L_inf,
K = H_c for L_c) and the smallest eigenvalue of L on {even} ∩ {⊥ Q}.

The constrained minimum sits at the bottom of a spectrum reaching up to xi_max^2,
so the Lanczos iteration runs on the shift-inverted operator (L - s)^{-1}; every
inner solve is a preconditioned CG on the projected operator.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, cg

from groundstate import GroundState
from spectral import Field, GridError, MultiplierSpec, hc_symbol, weight_1_plus_hc

LOGGER = logging.getLogger(__name__)


class EigenError(RuntimeError):
    def __init__(self, message: str, ritz_history: Optional[List[float]] = None):
        super().__init__(message)
        self.ritz_history = list(ritz_history or [])


@dataclass(frozen=True)
class Constraints:
    even: bool = True
    orthogonal_to_q: bool = True

    def describe(self) -> str:
        parts = (["even"] if self.even else []) + (["orthogonal-to-Q"] if self.orthogonal_to_q else [])
        return "+".join(parts) or "none"


@dataclass(frozen=True, eq=False)
class LinearizedOperator:
    base: GroundState
    kind: str
    kinetic: np.ndarray = field(repr=False)
    potential: np.ndarray = field(repr=False)

    @property
    def grid(self):
        return self.base.grid

    @property
    def mu(self) -> float:
        return self.base.mu


def linearize(gs: GroundState, kind: Optional[str] = None) -> LinearizedOperator:
    """L_inf uses the symbol xi^2, L_c the symbol of H_c; default follows gs.params.c."""
    kind = kind or ("L_inf" if gs.params.nonrelativistic else "L_c")
    xi = gs.grid.xi
    if kind == "L_inf":
        kinetic = xi ** 2
    elif kind == "L_c":
        if gs.params.nonrelativistic:
            raise ValueError("L_c needs a ground state with finite c")
        kinetic = hc_symbol(xi, gs.params.c)
    else:
        raise ValueError(f"unknown linearization kind {kind!r}")
    p = gs.params.p
    potential = p * np.abs(gs.Q.values) ** (p - 1.0)
    return LinearizedOperator(gs, kind, kinetic, potential)


def _apply(op: LinearizedOperator, v: np.ndarray) -> np.ndarray:
    kv = np.fft.ifft(op.kinetic * np.fft.fft(v))
    if not np.iscomplexobj(v):
        kv = kv.real
    return kv - op.potential * v + op.mu * v


def apply_linearized(op: LinearizedOperator, v: Field) -> Field:
    if v.grid != op.grid:
        raise GridError(f"field grid {v.grid} differs from operator grid {op.grid}")
    return Field(v.grid, _apply(op, v.values))


# -----------------------------
# Projection onto the constrained subspace
# -----------------------------
class Projector:
    """Orthogonal projector onto {even} ∩ {⊥ q} (either part optional)."""

    def __init__(self, q: np.ndarray, constraints: Constraints):
        self.constraints = constraints
        self.q = None
        if constraints.orthogonal_to_q:
            self.q = q / np.linalg.norm(q)

    def __call__(self, v: np.ndarray) -> np.ndarray:
        if self.constraints.even:
            v = 0.5 * (v + np.roll(v[::-1], 1))
        if self.q is not None:
            v = v - np.dot(self.q, v) * self.q
        return v

    def violation(self, v: np.ndarray) -> float:
        return float(np.linalg.norm(v - self(v)) / np.linalg.norm(v))


@dataclass
class EigResult:
    lambda_min: float
    vector: Field
    iterations: int
    constraints: Constraints
    ritz_history: List[float] = field(default_factory=list)
    weight: Optional[str] = None
    residual: float = math.nan


# -----------------------------
# Shift-inverted Lanczos
# -----------------------------
def _lanczos_top(apply_t: Callable[[np.ndarray], np.ndarray], project: Callable[[np.ndarray], np.ndarray],
                 n: int, seed: int, max_iter: int, tol: float) -> Tuple[float, np.ndarray, int, List[float]]:
    """Largest eigenpair of the symmetric operator T on range(project); full reorthogonalization."""
    rng = np.random.default_rng(seed)
    v = project(rng.standard_normal(n))
    V = np.zeros((max_iter + 1, n))
    V[0] = v / np.linalg.norm(v)
    alphas: List[float] = []
    betas: List[float] = []
    history: List[float] = []
    for k in range(max_iter):
        w = project(apply_t(V[k]))
        alphas.append(float(np.dot(w, V[k])))
        Vk = V[:k + 1]
        w = w - Vk.T @ (Vk @ w)
        w = w - Vk.T @ (Vk @ w)
        b = float(np.linalg.norm(w))
        if k == 0:
            theta, s = alphas[0], np.ones(1)
        else:
            theta_all, s_all = scipy.linalg.eigh_tridiagonal(np.array(alphas), np.array(betas))
            theta, s = float(theta_all[-1]), s_all[:, -1]
        history.append(theta)
        if b * abs(s[-1]) <= tol * abs(theta) or b < 1e-14 * abs(theta):
            y = Vk.T @ s
            return theta, y / np.linalg.norm(y), k + 1, history
        betas.append(b)
        V[k + 1] = w / b
        if k % 50 == 49:
            LOGGER.debug("lanczos it=%d theta=%.15g residual=%.3e", k + 1, theta, b * abs(s[-1]))
    raise EigenError(f"Lanczos did not converge in {max_iter} iterations", history)


def _shift_invert(apply_a: Callable[[np.ndarray], np.ndarray], precond: Callable[[np.ndarray], np.ndarray],
                  project: Projector, n: int, cg_tol: float, cg_maxiter: int) -> Callable[[np.ndarray], np.ndarray]:
    """x -> (P A P + (I - P))^{-1} x by preconditioned CG; A must be SPD on range(P)."""

    def full(x):
        px = project(x)
        return project(apply_a(px)) + (x - px)

    def prec(x):
        px = project(x)
        return project(precond(px)) + (x - px)

    a_op = LinearOperator((n, n), matvec=full, dtype=float)
    m_op = LinearOperator((n, n), matvec=prec, dtype=float)

    def solve(b):
        x, info = cg(a_op, b, rtol=cg_tol, atol=0.0, maxiter=cg_maxiter, M=m_op)
        if info != 0:
            raise EigenError(f"inner CG solve failed (info={info})")
        return x

    return solve


def min_eig_constrained(op: LinearizedOperator, constraints: Constraints = Constraints(), seed: int = 0,
                        max_iter: int = 600, tol: float = 1e-11, cg_tol: float = 1e-13) -> EigResult:
    """
    Smallest eigenvalue of L on the constrained subspace. The shift
    s = mu - p max Q^{p-1} - 0.1 (1 + mu) makes L - s SPD; Lanczos finds the top of
    (L - s)^{-1}, CG solves are preconditioned by (K + mu - s)^{-1}. lambda_min is
    the Rayleigh quotient of the returned eigenvector.
    """
    n = op.grid.n_points
    project = Projector(op.base.Q.values, constraints)
    shift = op.mu - float(op.potential.max()) - 0.1 * (1.0 + op.mu)
    prec_symbol = 1.0 / (op.kinetic + op.mu - shift)

    def apply_a(v):
        return _apply(op, v) - shift * v

    def precond(v):
        return np.fft.ifft(prec_symbol * np.fft.fft(v)).real

    inv = _shift_invert(apply_a, precond, project, n, cg_tol, 10 * n)
    theta, y, iters, history = _lanczos_top(inv, project, n, seed, max_iter, tol)
    y = project(y)
    y /= np.linalg.norm(y)
    ly = _apply(op, y)
    lam = float(np.dot(ly, y))
    LOGGER.info("min_eig_constrained %s (%s): lambda=%.12g (Lanczos %.12g) after %d iterations",
                op.kind, constraints.describe(), lam, shift + 1.0 / theta, iters)
    res = EigResult(lam, Field(op.grid, y), iters, constraints, [shift + 1.0 / t for t in history])
    res.residual = stationarity_residual(op, res)
    return res


def coercivity_ratio(op: LinearizedOperator, weight: Optional[MultiplierSpec] = None,
                     constraints: Constraints = Constraints(), seed: int = 0, max_iter: int = 600,
                     tol: float = 1e-11, cg_tol: float = 1e-13) -> EigResult:
    """
    inf <L v, v> / <W v, v> over the constrained subspace, W = 1 + H_c by default.
    Solved as the standard problem for C = W^{-1/2} L W^{-1/2} on {even} ∩ {⊥ W^{-1/2} Q}.
    """
    if weight is None:
        weight = weight_1_plus_hc(op.base.params.c)
    wsym = np.real(weight.on(op.grid))
    if np.any(wsym <= 0):
        raise ValueError(f"weight {weight.tag} is not positive")
    w_half_inv = 1.0 / np.sqrt(wsym)
    n = op.grid.n_points

    def w_pow(v, sym):
        return np.fft.ifft(sym * np.fft.fft(v)).real

    q_w = w_pow(op.base.Q.values, w_half_inv)
    project = Projector(q_w, constraints)
    shift = -float(op.potential.max()) - 0.1

    def apply_a(v):
        return w_pow(_apply(op, w_pow(v, w_half_inv)), w_half_inv) - shift * v

    prec_symbol = wsym / (op.kinetic + op.mu - shift * wsym)

    def precond(v):
        return w_pow(v, prec_symbol)

    inv = _shift_invert(apply_a, precond, project, n, cg_tol, 10 * n)
    theta, y, iters, history = _lanczos_top(inv, project, n, seed, max_iter, tol)
    v = w_pow(project(y), w_half_inv)
    ratio = float(np.dot(_apply(op, v), v) / np.dot(w_pow(v, wsym), v))
    v /= np.linalg.norm(v)
    LOGGER.info("coercivity_ratio %s weight=%s: %.12g after %d iterations", op.kind, weight.tag, ratio, iters)
    return EigResult(ratio, Field(op.grid, v), iters, constraints, [shift + 1.0 / t for t in history], weight.tag)


def stationarity_residual(op: LinearizedOperator, eig: EigResult, weight: Optional[MultiplierSpec] = None) -> float:
    """||L v - lambda W v - lt Q|| / ||L v|| with the best lt; W = I unless a weight is given."""
    v = eig.vector.values
    q = op.base.Q.values
    lv = _apply(op, v)
    wv = v if weight is None else np.fft.ifft(np.real(weight.on(op.grid)) * np.fft.fft(v)).real
    r = lv - eig.lambda_min * wv
    r = r - np.dot(r, q) / np.dot(q, q) * q
    return float(np.linalg.norm(r) / max(np.linalg.norm(lv), 1e-300))


# -----------------------------
# Dense oracle (desk-scale N)
# -----------------------------
def dense_matrix(op: LinearizedOperator) -> np.ndarray:
    n = op.grid.n_points
    eye = np.eye(n)
    kin = np.fft.ifft(op.kinetic[:, None] * np.fft.fft(eye, axis=0), axis=0).real
    mat = kin + np.diag(op.mu - op.potential)
    return 0.5 * (mat + mat.T)


def _dense_multiplier(sym: np.ndarray) -> np.ndarray:
    n = sym.size
    mat = np.fft.ifft(sym[:, None] * np.fft.fft(np.eye(n), axis=0), axis=0).real
    return 0.5 * (mat + mat.T)


def dense_constrained_eigs(op: LinearizedOperator, weight: Optional[MultiplierSpec] = None,
                           constraints: Constraints = Constraints()) -> np.ndarray:
    """Ascending eigenvalues of L (or the pencil (L, W)) on an orthonormal basis of the constrained subspace."""
    n = op.grid.n_points
    project = Projector(op.base.Q.values, constraints)
    P = np.array([project(e) for e in np.eye(n)]).T
    evals, evecs = np.linalg.eigh(0.5 * (P + P.T))
    U = evecs[:, evals > 0.5]
    A = U.T @ dense_matrix(op) @ U
    A = 0.5 * (A + A.T)
    if weight is None:
        return scipy.linalg.eigh(A, eigvals_only=True)
    B = U.T @ _dense_multiplier(np.real(weight.on(op.grid))) @ U
    return scipy.linalg.eigh(A, 0.5 * (B + B.T), eigvals_only=True)


if __name__ == "__main__":
    from functionals import mu_inf_closed_form
    from groundstate import soliton_inf
    from spectral import Grid

    grid = Grid(256.0, 512)
    gs = soliton_inf(3.0, mu_inf_closed_form(3.0, 1.0), grid)
    op = linearize(gs)
    res = min_eig_constrained(op)
    dense = dense_constrained_eigs(op)
    print(f"L_inf even ⊥Q: lanczos {res.lambda_min:.12f}  dense {dense[0]:.12f}  ({res.iterations} iterations)")
