import math

import numpy as np
import pytest

from functionals import ModelParams, ParameterError, energy_c, kinetic_c, mass, mu_inf_closed_form
from groundstate import (ConvergenceError, SolverError, _implicit_step, GridTooSmallError, ScalingError, SolveOptions, default_grid,
                         equivalent_unit_problem, ground_state_property_chain, h2_diagnostics,
                         load_ground_state, mu_inf_by_inversion, nonrel_limit_study, nonrel_pohozaev_residuals,
                         pohozaev_relativistic_residual, pohozaev_split_residuals, save_ground_state,
                         scaling_transport, soliton_inf, soliton_profile, solve, solve_fixed_mu,
                         solve_petviashvili, uniqueness_probe)
from spectral import Grid, reflect, sobolev_norm


def test_soliton_peak_and_mass(grid):
    mu = 1.0 / 16.0
    assert soliton_profile(3.0, mu, np.array([0.0]))[0] == pytest.approx(math.sqrt(2.0) / 4.0, rel=1e-15)
    gs = soliton_inf(3.0, mu, grid)
    assert gs.Q.values[grid.center] == pytest.approx(math.sqrt(2.0) / 4.0, rel=1e-15)
    assert abs(mass(gs.Q) - 1.0) <= 1e-10
    assert gs.el_residual <= 1e-10


def test_default_grid_meets_decay_gate():
    assert default_grid(3.0, 1.0) == Grid(256.0, 4096)
    with pytest.raises(GridTooSmallError):
        soliton_inf(3.0, 1.0 / 16.0, Grid(80.0, 4096))


def test_mu_inf_by_inversion(grid):
    assert abs(mu_inf_by_inversion(3.0, 1.0, grid) - 1.0 / 16.0) <= 1e-10
    assert mu_inf_closed_form(3.0, 1.0) == pytest.approx(0.0625, rel=1e-14)


@pytest.mark.parametrize("p", [3.0, 3.5, 4.0, 4.5])
def test_nonrel_pohozaev_identities(p):
    mu = mu_inf_closed_form(p, 1.0)
    q = soliton_inf(p, mu, default_grid(p, 1.0)).Q
    kin, pot = nonrel_pohozaev_residuals(q, mu, p)
    assert kin <= 1e-9
    assert pot <= 1e-9


def test_solve_options_validation():
    with pytest.raises(ParameterError):
        SolveOptions(gamma=3.5).resolved_gamma(3.0)
    with pytest.raises(ParameterError):
        SolveOptions(tol_step=0.0).resolved_gamma(3.0)
    assert SolveOptions().resolved_gamma(3.0) == 1.5


def test_fixed_mu_iteration_reports_its_trace(grid):
    init = soliton_inf(3.0, 1.0 / 16.0, grid).Q
    with pytest.raises(ConvergenceError) as info:
        solve_fixed_mu(grid.xi ** 2, 0.1, 3.0, grid, init, SolveOptions(max_inner=3))
    assert len(info.value.trace) == 3


def test_unknown_method(grid, params):
    with pytest.raises(ParameterError):
        solve(params, grid, method="newton")


def test_ground_state_residuals(gs):
    assert gs.el_residual <= 1e-10
    assert gs.pohozaev_residual <= 1e-8
    assert pohozaev_relativistic_residual(gs) == gs.pohozaev_residual
    split = pohozaev_split_residuals(gs)
    assert split["nehari"] <= 1e-8
    assert split["dilation"] <= 1e-8
    assert abs(mass(gs.Q) - 1.0) <= 1e-9


def test_ground_state_shape(gs):
    q = gs.Q.values
    assert gs.Q.real_nonneg
    assert int(np.argmax(q)) == gs.grid.center
    np.testing.assert_array_equal(reflect(gs.Q).values, q)


def test_ground_state_minimizes_energy(gs, q_inf, consts):
    assert gs.energy < 0.0
    assert gs.energy <= energy_c(q_inf.Q, gs.params) + 1e-10
    # refined radius alpha^{2/(5-p)} M^{...} is alpha itself at p = 3, M = 1
    assert math.sqrt(kinetic_c(gs.Q, gs.params.c)) <= consts.alpha


def test_h2_diagnostics(gs):
    diag = h2_diagnostics(gs)
    assert diag.gap_ok
    assert 0.0 < diag.kinetic_gap <= diag.gap_bound
    assert diag.h2_norm > 0.0


def test_property_chain_not_applicable_at_cubic(gs, consts):
    chain = ground_state_property_chain(gs, consts)
    assert not chain.applicable
    assert chain.holds


@pytest.mark.slow
def test_property_chain_above_cubic():
    from functionals import get_constants

    params = ModelParams(4.0, 16.0, 1.0)
    gs = solve_petviashvili(params, default_grid(4.0, 1.0))
    chain = ground_state_property_chain(gs, get_constants(4.0))
    assert chain.applicable
    assert chain.identity_residual <= 1e-8
    assert chain.holds


def test_equivalent_unit_problem():
    unit = equivalent_unit_problem(ModelParams(3.0, 4.0, 1.0))
    assert unit.params.c == 1.0
    assert unit.params.M == pytest.approx(0.25)
    assert unit.scale == 4.0
    with pytest.raises(ParameterError):
        equivalent_unit_problem(ModelParams(3.0, math.inf, 1.0))


def test_scaling_transport(q_inf):
    v = q_inf.Q
    same = scaling_transport(v, 1.0, 3.0)
    assert same.grid == v.grid
    np.testing.assert_array_equal(same.values, v.values)
    u = scaling_transport(v, 4.0, 3.0)
    assert mass(u) == pytest.approx(4.0 * mass(v), rel=1e-13)


def test_scaling_transport_onto_another_grid(q_inf):
    target = Grid(64.0, 2048)
    u = scaling_transport(q_inf.Q, 2.0, 3.0, target_grid=target)
    expected = 2.0 * soliton_profile(3.0, 1.0 / 16.0, 2.0 * target.x)
    np.testing.assert_allclose(u.values, expected, atol=1e-10)


def test_scaling_transport_refuses_to_alias(q_inf):
    with pytest.raises(ScalingError):
        scaling_transport(q_inf.Q, 2.0, 3.0, target_grid=Grid(64.0, 16))
    with pytest.raises(ScalingError):
        scaling_transport(q_inf.Q, -1.0, 3.0)


def test_ground_state_persistence(tmp_path, gs):
    base = str(tmp_path / "gs")
    save_ground_state(base, gs)
    loaded = load_ground_state(base)
    np.testing.assert_array_equal(loaded.Q.values, gs.Q.values)
    assert loaded.mu == gs.mu
    assert loaded.params == gs.params
    assert loaded.method == "petviashvili"
    assert loaded.el_residual == gs.el_residual


@pytest.mark.slow
def test_solvers_agree(gs, gs_flow):
    from evolution import align_to_orbit, modulation_distance

    assert gs_flow.el_residual <= 1e-10
    energies = gs_flow.trace["energy"]
    assert all(b <= a + 1e-12 for a, b in zip(energies, energies[1:]))
    aligned = align_to_orbit(gs_flow.Q, modulation_distance(gs_flow.Q, gs))
    assert sobolev_norm(aligned - gs.Q, 0.5) <= 1e-7
    assert gs_flow.mu == pytest.approx(gs.mu, rel=1e-8)


@pytest.mark.slow
def test_large_c_matches_closed_form(grid, q_inf):
    gs = solve_petviashvili(ModelParams(3.0, 1e6, 1.0), grid)
    assert sobolev_norm(gs.Q - q_inf.Q, 1.0) <= 1e-6
    assert gs.mu == pytest.approx(q_inf.mu, rel=1e-6)


@pytest.mark.slow
def test_nonrelativistic_limit_rate(grid):
    table = nonrel_limit_study(3.0, 1.0, [8.0, 16.0, 32.0, 64.0], grid)
    assert list(table["c"]) == [8.0, 16.0, 32.0, 64.0]
    assert table["gap_ok"].all()
    assert table["h1_error"].is_monotonic_decreasing
    assert abs(table.attrs["mu_rate"] + 2.0) <= 0.3
    q_inf = soliton_inf(3.0, mu_inf_closed_form(3.0, 1.0), grid)
    assert table["h2_norm"].max() <= 1.5 * sobolev_norm(q_inf.Q, 2.0)


@pytest.mark.slow
def test_uniqueness_across_seeds(grid, params):
    rep = uniqueness_probe(params, grid, seeds=(0, 1, 2))
    assert rep.max_pairwise <= 1e-7
    assert max(rep.mus) - min(rep.mus) <= 1e-9


@pytest.mark.slow
def test_uniqueness_at_c16(grid):
    rep = uniqueness_probe(ModelParams(3.0, 16.0, 1.0), grid, seeds=(0, 1, 2, 3, 4))
    assert len(rep.distances) == 5
    assert rep.max_pairwise <= 1e-7


@pytest.mark.slow
@pytest.mark.parametrize("c", [16.0, 64.0])
def test_ground_state_energy_below_soliton(grid, q_inf, c):
    params = ModelParams(3.0, c, 1.0)
    gs = solve_petviashvili(params, grid)
    assert gs.energy < 0.0
    assert gs.energy <= energy_c(q_inf.Q, params) + 1e-10


def test_scaling_identities(q_inf):
    v = q_inf.Q
    u = scaling_transport(v, 4.0, 3.0)
    # (p+3)/(p-1) = 3 at p = 3
    assert kinetic_c(u, 4.0) == pytest.approx(4.0 ** 3 * kinetic_c(v, 1.0), rel=1e-12)
    assert energy_c(u, ModelParams(3.0, 4.0, 1.0)) == pytest.approx(
        4.0 ** 3 * energy_c(v, ModelParams(3.0, 1.0, 1.0)), rel=1e-12)


def test_implicit_step_keeps_denominator_positive(grid):
    symbol = grid.xi ** 2
    denom, tau = _implicit_step(symbol, -0.5, 10.0)
    assert tau < 2.0
    assert denom.min() > 0.0
    np.testing.assert_allclose(denom, 1.0 + tau * (symbol - 0.5))
    denom, tau = _implicit_step(symbol, 0.1, 10.0)
    assert tau == 10.0
    with pytest.raises(SolverError):
        _implicit_step(symbol, -1e12, 1.0)


@pytest.mark.slow
def test_gradient_flow_survives_a_large_step(grid):
    params = ModelParams(3.0, 8.0, 1.0)
    gs = solve(params, grid, SolveOptions(tau=1e3, max_flow_steps=20000), method="gradient_flow")
    assert np.all(np.isfinite(gs.Q.values))
    assert gs.el_residual <= 1e-10
