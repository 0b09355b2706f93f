import math

import numpy as np
import pytest

from vorwave.continuation import SolverConfig, solve_at_amplitude
from vorwave.reconstruction import (
    SingularMapError,
    StripHarmonic,
    ValidityError,
    bernoulli_residual,
    cauchy_riemann_residual,
    conformal_map,
    find_stagnation,
    harmonic_extension,
    laplacian_residual,
    periodicity_defect,
    reconstruct,
    refinement_study,
    stream_function,
    surface_geometry,
    surface_validity,
)
from vorwave.residual import PhysicalParams, WaveState, dispersion_lambdas, laminar_flow
from vorwave.spectral import PeriodicFunction

SHEAR = PhysicalParams(2.0, 1.0, 1.0, 1.0)
UNIT = PhysicalParams(0.0, 1.0, 1.0, 1.0)
N = 64


@pytest.fixture(scope="module")
def waves():
    cfg = SolverConfig(n_modes=N)
    out = {}
    for name, p in (("shear", SHEAR), ("unit", UNIT)):
        for side, lam in zip(("plus", "minus"), dispersion_lambdas(1, p)):
            out[name, side] = solve_at_amplitude(p, lam, 0.01, cfg).state
    return out


def test_harmonic_extension_examples():
    c = PeriodicFunction.constant(3.0, 16)
    ext = harmonic_extension(c, 0.5, 10)
    assert np.allclose(ext.values, 3.0 * (ext.y[:, None] + 0.5) / 0.5, atol=1e-14)
    cos = PeriodicFunction.from_callable(np.cos, 16)
    ext = harmonic_extension(cos, 1.0, 8)
    assert np.max(np.abs(ext.values[0])) == 0.0
    assert np.array_equal(ext.values[-1], cos.values)
    # interior rows agree with the closed form sinh(y+1)/sinh(1) cos x
    expect = np.sinh(ext.y[:, None] + 1.0) / math.sinh(1.0) * np.cos(ext.x)[None, :]
    assert np.allclose(ext.values, expect, atol=1e-14)


def test_harmonic_extension_deep_strip_is_finite():
    w = PeriodicFunction.from_callable(lambda x: np.cos(60 * x), 64)
    ext = harmonic_extension(w, 40.0, 16)
    assert np.all(np.isfinite(ext.values))


def test_harmonic_extension_rejects_tiny_grid():
    with pytest.raises(ValueError):
        harmonic_extension(PeriodicFunction.zeros(8), 1.0, 1)


def test_strip_harmonic_point_values_match_grid():
    w = PeriodicFunction.from_coefficients(0.4, [0.3, -0.1, 0.05], [0.0, 0.2], n_modes=16)
    harm = StripHarmonic(w, 0.8)
    y = np.linspace(-0.8, 0.0, 5)
    grid = harm.on_grid(y)
    pts = harm.at(w.x[3], y)
    for key in ("W", "Z", "W_x", "W_y"):
        assert np.allclose(pts[key], grid[key][:, 3], atol=1e-13)
    # top trace of the conjugate matches its boundary definition
    from vorwave.operators import hilbert_strip

    top = grid["Z"][-1] - 0.4 / 0.8 * w.x
    assert np.allclose(top, hilbert_strip(w.centered(), 0.8).values, atol=1e-13)


def test_trivial_conformal_map():
    p = PhysicalParams(0.5, 1.0, 2.0, 0.7)
    st = WaveState.trivial(p, 0.3, 16)
    f = conformal_map(st, 0.25, 12)
    X, Y = np.meshgrid(f.x, f.y)
    assert np.allclose(f.U, 0.25 + X / p.k, atol=1e-14)
    assert np.allclose(f.V, p.h * (Y + p.depth) / p.depth, atol=1e-14)


def test_boundary_rows(waves):
    st = waves["shear", "minus"]
    f = reconstruct(st)
    assert np.max(np.abs(f.V[0])) <= 1e-12
    assert np.max(np.abs(f.V[-1] - st.v.values)) <= 1e-12
    assert np.max(np.abs(f.zeta[0])) <= 1e-12
    top = st.m + 0.5 * SHEAR.gamma * (st.v * st.v).values
    assert np.max(np.abs(f.zeta[-1] - top)) <= 1e-12
    for arr in (f.U, f.V, f.zeta, f.psi, *f.velocity):
        assert np.all(np.isfinite(arr))


def test_trivial_stream_function_and_velocity():
    lam = dispersion_lambdas(1, SHEAR)[1]
    st = WaveState.trivial(SHEAR, lam, 16)
    f = reconstruct(st, 0.0, 16)
    flow = laminar_flow(lam, SHEAR)
    assert np.max(np.abs(f.psi - flow.stream_function(f.V))) <= 1e-10
    u, w = f.velocity
    assert np.max(np.abs(u - flow.horizontal_velocity(f.V))) <= 1e-12
    assert np.max(np.abs(w)) <= 1e-12


def test_uniform_irrotational_flow():
    st = WaveState.trivial(UNIT, 0.6, 16)
    u, w = reconstruct(st, 0.0, 8).velocity
    assert np.allclose(u, st.m / UNIT.h, atol=1e-13) and np.max(np.abs(w)) <= 1e-13


@pytest.mark.parametrize("key", [("shear", "plus"), ("shear", "minus"), ("unit", "plus")])
def test_physical_checks(waves, key):
    st = waves[key]
    f = reconstruct(st)
    assert np.max(np.abs(f.psi[-1])) <= 1e-10
    assert np.max(np.abs(f.psi[0] + st.m)) <= 1e-10
    assert bernoulli_residual(st, f) <= 1e-8 * max(1.0, st.Q)
    assert periodicity_defect(f) <= 1e-10
    assert cauchy_riemann_residual(f) < 1e-4
    assert laplacian_residual(f) < 1e-3


def test_refinement_orders(waves):
    for key in (("shear", "plus"), ("shear", "minus"), ("unit", "minus")):
        study = refinement_study(waves[key])
        assert all(o >= 2.0 for o in study.laplacian_orders())
        assert all(o >= 2.0 for o in study.cauchy_riemann_orders())


def test_refinement_rejects_non_nested(waves):
    with pytest.raises(ValueError):
        refinement_study(waves["shear", "plus"], (32, 48))


def test_surface_geometry_trivial():
    st = WaveState.trivial(SHEAR, 0.5, 16)
    sc = surface_geometry(st, 0.1)
    assert np.allclose(sc.u_prime.values, 1.0) and np.allclose(sc.v_prime.values, 0.0)
    assert np.allclose(sc.theta0.values, 0.0) and np.allclose(sc.Y, SHEAR.h)
    assert np.allclose(sc.X, 0.1 + sc.x, atol=1e-14)


def test_surface_geometry_checks(waves):
    for st in waves.values():
        sc = surface_geometry(st)
        assert sc.checks["compatibility"] <= 1e-8
        assert sc.checks["speed_formula"] <= 1e-8
        assert sc.checks["commutator_identity"] <= 1e-10
        assert sc.injective and np.all(sc.Y > 0)
        assert np.all(np.diff(sc.X) > 0)


def test_validity_rejections():
    deep = PeriodicFunction.from_callable(lambda x: 1.5 * np.cos(x), 16)
    st = WaveState(SHEAR, 0.5, 0.0, deep)
    assert not surface_validity(st)["os"]
    with pytest.raises(ValidityError) as info:
        conformal_map(st)
    assert info.value.condition == "pos"


def test_surface_bernoulli_rejection():
    # Q - 2gv <= 0 somewhere on the surface
    w = PeriodicFunction.from_callable(lambda x: 0.1 * np.cos(x), 16)
    st = WaveState(UNIT, 0.0, -2.0 + 0.1, w)
    with pytest.raises(ValidityError) as info:
        surface_geometry(st)
    assert info.value.condition == "sm"


def test_overhanging_profile_is_detected():
    # a large-amplitude second harmonic folds the curve back on itself
    w = PeriodicFunction.from_coefficients(0.0, [0.0, 0.0, 0.0, 0.0, 0.0, 0.5], n_modes=32)
    st = WaveState(PhysicalParams(0.0, 1.0, 1.0, 3.0), 0.5, 0.0, w)
    flags = surface_validity(st)
    assert not flags["gra"]
    assert flags["injective"] is False
    with pytest.raises(ValidityError) as info:
        conformal_map(st)
    assert info.value.condition == "m2"


def test_singular_map_error():
    lam = 0.3
    st = WaveState.trivial(SHEAR, lam, 8)
    f = conformal_map(st, 0.0, 4)
    zeroed = dict(f.derivatives, V_x=np.zeros_like(f.V), V_y=np.zeros_like(f.V))
    from dataclasses import replace

    with pytest.raises(SingularMapError):
        stream_function(st, replace(f, derivatives=zeroed))


def test_laminar_stagnation_line():
    lam = dispersion_lambdas(1, SHEAR)[1]
    rep = find_stagnation(reconstruct(WaveState.trivial(SHEAR, lam, 16)))
    assert rep.points == [] and rep.has_critical_layer
    assert abs(rep.laminar_line_y - laminar_flow(lam, SHEAR).stagnation_y) <= 1e-8


def test_irrotational_flow_has_no_stagnation(waves):
    rep = find_stagnation(reconstruct(WaveState.trivial(UNIT, 0.8, 16)))
    assert rep.points == [] and not rep.has_critical_layer and rep.laminar_line_y is None
    rep = find_stagnation(reconstruct(waves["unit", "plus"]))
    assert rep.points == [] and not rep.has_critical_layer


def test_cats_eye(waves):
    f = reconstruct(waves["shear", "minus"])
    rep = find_stagnation(f)
    assert rep.has_critical_layer
    assert len(rep.points) >= 2
    types = [p["type"] for p in rep.points]
    assert set(types) == {"center", "saddle"}
    for pt in rep.points:
        u, w = f.flow.velocity(pt["x"], pt["y"])
        assert math.hypot(u[0], w[0]) <= 1e-9 * rep.velocity_scale
        assert 0.0 < pt["Y"] < SHEAR.h
    # crest-trough symmetry puts them on the lines x = 0 and x = pi
    xs = sorted(abs(p["x"]) for p in rep.points)
    assert xs[0] == pytest.approx(0.0, abs=1e-8) and xs[-1] == pytest.approx(math.pi, abs=1e-8)


def test_no_stagnation_on_plus_branch(waves):
    rep = find_stagnation(reconstruct(waves["shear", "plus"]))
    assert rep.points == [] and not rep.has_critical_layer


def test_find_stagnation_needs_velocity():
    f = conformal_map(WaveState.trivial(SHEAR, 0.3, 8), 0.0, 4)
    with pytest.raises(ValueError):
        find_stagnation(f)
