import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spectral import (Field, Grid, GridError, MultiplierError, MultiplierSpec, SymbolBoundViolation,
                      apply_multiplier, hc, hc_symbol, hc_symbol_gap, high_pass, inner, load_field, low_pass,
                      norm, reflect, save_field, shift, sqrt_hc, symbol_bounds_check, symbol_energy,
                      symmetrize, write_json)


def gaussian(grid, width=1.0):
    return Field(grid, np.exp(-(grid.x / width) ** 2))


def test_grid_layout():
    g = Grid(4.0, 4)
    assert g.spacing == 1.0
    np.testing.assert_array_equal(g.x, [-2.0, -1.0, 0.0, 1.0])
    assert g.x[g.center] == 0.0
    assert g.xi_max == pytest.approx(math.pi)


@pytest.mark.parametrize("length, n", [(0.0, 8), (-1.0, 8), (math.inf, 8), (1.0, 7), (1.0, 0)])
def test_grid_rejects_bad_shape(length, n):
    with pytest.raises(GridError):
        Grid(length, n)


def test_field_is_read_only_and_checked():
    g = Grid(4.0, 4)
    u = Field(g, [1.0, 2.0, 3.0, 4.0])
    with pytest.raises(ValueError):
        u.values[0] = 0.0
    with pytest.raises(GridError):
        Field(g, [1.0, 2.0])
    with pytest.raises(ValueError):
        Field(g, [1.0, -1.0, 0.0, 0.0], real_nonneg=True)
    with pytest.raises(GridError):
        u + Field(Grid(8.0, 4), np.ones(4))


def test_numpy_scalar_times_field_stays_a_field():
    g = Grid(4.0, 4)
    u = Field(g, np.ones(4))
    v = np.float64(2.0) * u
    assert isinstance(v, Field)
    np.testing.assert_array_equal(v.values, 2.0)


def test_inner_of_zero_is_zero():
    g = Grid(40.0, 1024)
    assert inner(g.zeros(), gaussian(g)) == 0


def test_inner_of_unit_samples():
    g = Grid(4.0, 4)
    u = Field(g, np.ones(4))
    assert inner(u, u) == pytest.approx(4.0)


def test_inner_gaussian_quadrature():
    g = Grid(40.0, 1024)
    u = gaussian(g)
    assert abs(inner(u, u).real - math.sqrt(math.pi / 2.0)) <= 1e-12


def test_inner_conjugate_linear_in_second_slot():
    g = Grid(40.0, 256)
    u = gaussian(g)
    v = Field(g, np.exp(1j * g.x) * u.values)
    assert inner(u, 1j * v) == pytest.approx(-1j * inner(u, v))


def test_hc_symbol_values():
    assert hc_symbol(0.0, 3.0) == 0.0
    assert hc_symbol(math.sqrt(3.0), 2.0) == pytest.approx(2.0, rel=1e-15)
    assert hc_symbol(2.0, math.inf) == 4.0


def test_hc_symbol_with_particle_mass():
    # sqrt(m^2 c^4 + c^2 xi^2) - m c^2 at m = 1, c = 1, xi = sqrt(3): 2 - 1
    assert hc_symbol(math.sqrt(3.0), 1.0, m=1.0) == pytest.approx(1.0, rel=1e-15)


def test_hc_symbol_rationalized_at_small_xi():
    # naive sqrt(c^2 xi^2 + c^4/4) - c^2/2 loses every digit here
    xi, c = 1e-9, 1e4
    assert hc_symbol(xi, c) == pytest.approx(xi ** 2, rel=1e-12)


@given(st.floats(-1e4, 1e4), st.floats(0.1, 1e3))
def test_symbol_bounded_by_laplacian(xi, c):
    sigma = hc_symbol(xi, c)
    gap = hc_symbol_gap(xi, c)
    assert 0.0 <= sigma <= xi * xi * (1 + 1e-15)
    assert gap >= 0.0
    assert gap == pytest.approx(xi * xi - sigma, rel=1e-9, abs=1e-12 * max(1.0, xi * xi))


def test_low_plus_high_pass_is_identity():
    g = Grid(40.0, 512)
    u = Field(g, np.exp(-g.x ** 2) * (1.0 + 0.3 * np.sin(3 * g.x)))
    total = apply_multiplier(u, low_pass(4.0)) + apply_multiplier(u, high_pass(4.0))
    np.testing.assert_allclose(total.values, u.values, atol=1e-15)


def test_hc_is_self_adjoint():
    g = Grid(40.0, 512)
    rng = np.random.default_rng(7)
    env = np.exp(-(g.x / 6.0) ** 2)
    u = Field(g, env * (rng.standard_normal(g.n_points) + 1j * rng.standard_normal(g.n_points)))
    v = Field(g, env * (rng.standard_normal(g.n_points) + 1j * rng.standard_normal(g.n_points)))
    op = hc(8.0)
    lhs = inner(apply_multiplier(u, op), v)
    rhs = inner(u, apply_multiplier(v, op))
    assert abs(lhs - rhs) <= 1e-12 * norm(apply_multiplier(u, op)) * norm(v)


def test_band_projections_are_orthogonal_idempotents():
    g = Grid(40.0, 512)
    u = Field(g, np.exp(-g.x ** 2) * (1.0 + 0.3 * np.sin(3 * g.x)))
    low = apply_multiplier(u, low_pass(4.0))
    high = apply_multiplier(u, high_pass(4.0))
    np.testing.assert_allclose(apply_multiplier(low, low_pass(4.0)).values, low.values, atol=1e-14)
    np.testing.assert_allclose(apply_multiplier(high, high_pass(4.0)).values, high.values, atol=1e-14)
    assert not np.any(np.abs(apply_multiplier(low, high_pass(4.0)).values) > 1e-14)
    assert abs(inner(low, high)) <= 1e-14


def test_plane_wave_is_eigenfunction_of_hc():
    g = Grid(20.0, 256)
    xi1 = 2.0 * math.pi / g.length
    u = Field(g, np.exp(1j * xi1 * g.x))
    out = apply_multiplier(u, hc(5.0))
    np.testing.assert_allclose(out.values, hc_symbol(xi1, 5.0) * u.values, atol=1e-13)


def test_sqrt_hc_parseval():
    g = Grid(40.0, 1024)
    u = gaussian(g)
    lhs = norm(apply_multiplier(u, sqrt_hc(4.0))) ** 2
    rhs = symbol_energy(u, hc_symbol(g.xi, 4.0))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_non_finite_symbol_is_rejected():
    g = Grid(10.0, 64)
    bad = MultiplierSpec("bad", lambda xi: np.where(xi == 0, np.inf, 1.0))
    with pytest.raises(MultiplierError):
        apply_multiplier(gaussian(g), bad)


def test_reflect_symmetrize_shift():
    g = Grid(30.0, 256)
    u = Field(g, np.exp(-(g.x - 1.0) ** 2))
    np.testing.assert_allclose(reflect(reflect(u)).values, u.values)
    even = symmetrize(u)
    np.testing.assert_allclose(reflect(even).values, even.values, atol=1e-15)
    np.testing.assert_allclose(shift(u, 5 * g.spacing).values, np.roll(u.values, 5), atol=1e-13)
    back = shift(shift(u, 0.37), -0.37)
    np.testing.assert_allclose(back.values, u.values, atol=1e-13)


def test_symbol_bounds_at_origin():
    rep = symbol_bounds_check(3.0, 0.5, [0.0])
    assert rep.passed
    assert rep.worst_low_margin == 0.0
    assert rep.worst_upper_margin == 0.0
    assert rep.worst_limit_margin == 0.0


def test_symbol_bounds_hand_value():
    rep = symbol_bounds_check(2.0, 1.0, [math.sqrt(3.0)])
    assert rep.passed
    assert rep.worst_low_margin == pytest.approx(0.5, rel=1e-14)
    assert rep.worst_upper_margin == pytest.approx(1.0, rel=1e-14)


@pytest.mark.parametrize("c", [1.0, 4.0, 16.0])
@pytest.mark.parametrize("delta", [0.25, 0.5, 1.0])
def test_symbol_bounds_dense_sweep(c, delta):
    rep = symbol_bounds_check(c, delta, np.linspace(-10 * c, 10 * c, 20001))
    assert rep.violations == []
    rep.raise_for_violations()


def test_symbol_bounds_report_names_the_violation():
    rep = symbol_bounds_check(1.0, 1.0, [1.0])
    rep.violations.append({"bound": "low", "xi": 1.0, "c": 1.0, "delta": 1.0, "margin": -1.0})
    with pytest.raises(SymbolBoundViolation, match="xi=1.0"):
        rep.raise_for_violations()


@pytest.mark.parametrize("delta", [0.0, 1.5])
def test_symbol_bounds_delta_range(delta):
    with pytest.raises(ValueError):
        symbol_bounds_check(1.0, delta, [0.0])


def test_write_json_round_trips_floats(tmp_path):
    path = tmp_path / "out.json"
    third = np.float64(1.0) / 3.0
    write_json(str(path), {"schema_version": 1, "x": 0.1, "third": third, "n": np.int64(4), "ok": np.bool_(True),
                           "bad": math.nan, "rows": [1.5, None], "arr": np.array([math.pi, -math.inf])})
    data = json.loads(path.read_text(encoding="utf-8"))
    assert data["x"] == 0.1
    assert data["third"] == third
    assert data["n"] == 4
    assert data["ok"] is True
    assert data["arr"] == [math.pi, "-inf"]
    assert data["bad"] == "nan"
    assert data["rows"] == [1.5, None]


def test_field_snapshot(tmp_path):
    g = Grid(12.0, 64)
    u = Field(g, np.exp(-g.x ** 2) * np.exp(0.5j * g.x))
    base = str(tmp_path / "snap")
    save_field(base, u, {"p": 3.0, "c": 8.0, "M": 1.0, "kind": "test"})
    assert (tmp_path / "snap.bin").stat().st_size == 16 * g.n_points
    v, meta = load_field(base)
    assert v.grid == g
    np.testing.assert_array_equal(v.values, u.values)
    assert meta["kind"] == "test"
