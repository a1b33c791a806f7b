import numpy as np
import pytest

from functionals import ModelParams, mu_inf_closed_form
from groundstate import soliton_inf, solve_petviashvili
from linops import (Constraints, EigenError, Projector, apply_linearized, coercivity_ratio,
                    dense_constrained_eigs, dense_matrix, linearize, min_eig_constrained,
                    stationarity_residual)
from spectral import Field, Grid, GridError, apply_multiplier, dx, inner, norm, reflect, weight_1_plus_hc

SMALL = Grid(256.0, 512)


@pytest.fixture(scope="module")
def op_inf():
    return linearize(soliton_inf(3.0, mu_inf_closed_form(3.0, 1.0), SMALL))


@pytest.fixture(scope="module")
def op_c():
    return linearize(solve_petviashvili(ModelParams(3.0, 8.0, 1.0), SMALL))


def random_field(grid, seed):
    return Field(grid, np.random.default_rng(seed).standard_normal(grid.n_points))


def test_kind_follows_params(op_inf, op_c):
    assert op_inf.kind == "L_inf"
    assert op_c.kind == "L_c"
    with pytest.raises(ValueError):
        linearize(op_inf.base, "L_c")
    with pytest.raises(ValueError):
        linearize(op_c.base, "L_2")


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_self_adjoint(op_c, seed):
    v, w = random_field(SMALL, seed), random_field(SMALL, seed + 100)
    lhs = inner(apply_linearized(op_c, v), w)
    rhs = inner(v, apply_linearized(op_c, w))
    assert abs(lhs - rhs) <= 1e-11 * norm(v) * norm(w)


def test_preserves_parity(op_c):
    v = random_field(SMALL, 7)
    even = 0.5 * (v + reflect(v))
    odd = 0.5 * (v - reflect(v))
    le, lo = apply_linearized(op_c, even), apply_linearized(op_c, odd)
    np.testing.assert_allclose(reflect(le).values, le.values, atol=1e-12)
    np.testing.assert_allclose(reflect(lo).values, -lo.values, atol=1e-12)


def test_grid_mismatch(op_c):
    with pytest.raises(GridError):
        apply_linearized(op_c, Grid(10.0, 16).zeros())


def test_translation_mode_is_in_the_kernel(q_inf):
    op = linearize(q_inf)
    mode = apply_multiplier(q_inf.Q, dx())
    assert norm(apply_linearized(op, mode)) <= 1e-8


def test_quadratic_form_on_soliton(q_inf):
    op = linearize(q_inf)
    p, mu, M = 3.0, 1.0 / 16.0, 1.0
    value = inner(apply_linearized(op, q_inf.Q), q_inf.Q).real
    assert value == pytest.approx(-2.0 * (p * p - 1.0) / (p + 3.0) * mu * M, abs=1e-8)


def test_plane_wave_sees_symbol_plus_potential(op_c):
    xi = SMALL.xi[200]
    wave = Field(SMALL, np.exp(1j * xi * SMALL.x))
    out = apply_linearized(op_c, wave)
    expected = (op_c.kinetic[200] + op_c.mu - op_c.potential) * wave.values
    np.testing.assert_allclose(out.values, expected, atol=1e-11)


def test_min_eig_constrained_positive_and_matches_dense(op_inf):
    res = min_eig_constrained(op_inf)
    dense = dense_constrained_eigs(op_inf)
    assert res.lambda_min > 0.0
    assert res.lambda_min == pytest.approx(dense[0], abs=1e-8)
    assert Projector(op_inf.base.Q.values, res.constraints).violation(res.vector.values) <= 1e-10
    v = res.vector.values
    rayleigh = float(np.dot(dense_matrix(op_inf) @ v, v) / np.dot(v, v))
    assert rayleigh == pytest.approx(res.lambda_min, abs=1e-9)


def test_negative_direction_without_orthogonality(op_inf):
    even_only = Constraints(even=True, orthogonal_to_q=False)
    res = min_eig_constrained(op_inf, even_only)
    assert res.lambda_min < 0.0
    assert dense_constrained_eigs(op_inf, constraints=even_only)[0] < 0.0


def test_min_eig_relativistic(op_c):
    res = min_eig_constrained(op_c, seed=3)
    assert res.lambda_min >= 1e-3 * op_c.mu
    assert stationarity_residual(op_c, res) <= 1e-8
    again = min_eig_constrained(op_c, seed=3)
    assert again.lambda_min == res.lambda_min
    assert again.iterations == res.iterations


def test_coercivity_ratio_matches_dense(op_c):
    weight = weight_1_plus_hc(8.0)
    res = coercivity_ratio(op_c, weight)
    dense = dense_constrained_eigs(op_c, weight)
    assert res.lambda_min > 0.0
    assert res.lambda_min == pytest.approx(dense[0], abs=1e-6)
    assert res.weight == weight.tag


def test_non_convergence_keeps_ritz_history(op_c):
    with pytest.raises(EigenError) as info:
        min_eig_constrained(op_c, max_iter=2, tol=0.0)
    assert len(info.value.ritz_history) == 2


@pytest.mark.slow
@pytest.mark.parametrize("p, c", [(3.0, 64.0), (4.0, 16.0)])
def test_coercivity_positive_elsewhere(p, c):
    from groundstate import default_grid

    gs = solve_petviashvili(ModelParams(p, c, 1.0), default_grid(p, 1.0, 1024))
    assert coercivity_ratio(linearize(gs)).lambda_min > 0.0


@pytest.mark.slow
def test_relativistic_eigenvalue_approaches_limit(op_inf):
    lam_inf = min_eig_constrained(op_inf).lambda_min
    lam = {c: min_eig_constrained(linearize(solve_petviashvili(ModelParams(3.0, c, 1.0), SMALL))).lambda_min
           for c in (64.0, 128.0)}
    assert abs(lam[64.0] - lam_inf) <= 8.0 * abs(lam[128.0] - lam_inf)
    assert abs(lam[128.0] - lam_inf) < abs(lam[64.0] - lam_inf)


@pytest.mark.slow
def test_coercivity_uniform_in_c():
    ratios = []
    for c in (16.0, 64.0, 256.0):
        gs = solve_petviashvili(ModelParams(3.0, c, 1.0), SMALL)
        ratios.append(coercivity_ratio(linearize(gs)).lambda_min)
    assert max(ratios) <= 1.25 * min(ratios)
