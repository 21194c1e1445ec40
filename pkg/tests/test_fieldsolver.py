import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trapstack.core import species_lookup
from trapstack.fieldsolver import (AntiConfiningError, ConvergenceWarning, Electrode, ElectrodeStack,
                                   GeometryError, axial_profile, curvature_to_frequency,
                                   expansion, frequency_to_curvature, relax_potential,
                                   solve_potential)

TAU = 2 * math.pi
volts9 = st.lists(st.floats(-50, 50, allow_nan=False), min_size=9, max_size=9)


def test_geometry_errors():
    with pytest.raises(GeometryError):
        ElectrodeStack(1e-3, (Electrode(0, 2e-3), Electrode(1e-3, 3e-3)), 0.0, 1e-2)
    with pytest.raises(GeometryError):
        ElectrodeStack(1e-3, (Electrode(0, 2e-3),), -1.0, 1e-2)
    with pytest.raises(GeometryError):
        ElectrodeStack(1e-3, (Electrode(0, 2e-2),), 0.0, 1e-2)
    with pytest.raises(ValueError):
        solve_potential(ElectrodeStack.uniform(), modes=16)


def test_constant_stack_is_constant():
    # long domain, wall continued at 1 V to the end planes: bulk interior is 1 V
    stack = ElectrodeStack.uniform(voltages=np.ones(9), margin=20e-3, end_treatment="extend")
    sol = solve_potential(stack, modes=4000)
    z = np.linspace(-1e-3, 1e-3, 41)
    for rho in (0.0, 200e-6, 350e-6):
        assert np.max(np.abs(sol.potential(rho, z) - 1.0)) < 1e-6
    prof = axial_profile(sol, np.linspace(-1e-3, 1e-3, 401))
    assert prof.stationary == ()
    assert abs(expansion(sol, 0.0)[2]) < 1e-6 * 1.0 / stack.inner_radius**2


def test_wall_reproduced_away_from_edges():
    stack = ElectrodeStack.uniform(voltages=np.arange(9) - 4.0)
    sol = solve_potential(stack, modes=3000)
    mids = np.array([0.5 * (e.z_lo + e.z_hi) for e in stack.electrodes])
    assert np.allclose(sol.wall_series(mids), stack.voltages, atol=1e-3)


def test_mirror_symmetry():
    v = np.array([3.0, -1.0, 2.0, 5.0, -4.0, 5.0, 2.0, -1.0, 3.0])
    sol = solve_potential(ElectrodeStack.uniform(voltages=v))
    z = np.linspace(0, 1.5e-3, 31)
    for rho in (0.0, 300e-6):
        assert np.allclose(sol.potential(rho, z), sol.potential(rho, -z), atol=1e-10)
    prof = axial_profile(sol)
    zs = sorted(p.z0 for p in prof.stationary)
    assert len(zs) >= 3
    assert np.allclose(zs, sorted(-np.array(zs)), atol=1e-9)


@settings(max_examples=25)
@given(volts9, volts9)
def test_superposition(u, v):
    stack = ElectrodeStack.uniform()
    su = solve_potential(stack.with_voltages(u), modes=200)
    sv = solve_potential(stack.with_voltages(v), modes=200)
    suv = solve_potential(stack.with_voltages(np.add(u, v)), modes=200)
    z = np.linspace(-1e-3, 1e-3, 17)
    scale = max(1.0, np.max(np.abs(u)) + np.max(np.abs(v)))
    lhs = suv.potential(150e-6, z)
    rhs = su.potential(150e-6, z) + sv.potential(150e-6, z)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale


@settings(max_examples=25)
@given(volts9)
def test_maximum_principle(v):
    sol = solve_potential(ElectrodeStack.uniform(voltages=v))
    # the tail bound is an on-axis bound; stay at half the bore radius
    rho, z = np.meshgrid(np.linspace(0, 200e-6, 9), np.linspace(-2e-3, 2e-3, 41))
    phi = sol.potential(rho, z)
    lo, hi = min(0.0, min(v)), max(0.0, max(v))
    slack = 1e-6 * max(1.0, max(abs(x) for x in v))
    assert phi.min() >= lo - slack
    assert phi.max() <= hi + slack


def test_mode_doubling_within_truncation_estimate():
    stack = ElectrodeStack.uniform(voltages=[1, -2, 3, 0, 4, 0, -1, 2, 1])
    with pytest.warns(ConvergenceWarning):
        sol = solve_potential(stack, modes=64)
    sol2 = solve_potential(stack, modes=128)
    z = np.linspace(-2e-3, 2e-3, 201)
    assert np.max(np.abs(sol.axial(z) - sol2.axial(z))) <= sol.truncation


def test_convergence_warning():
    stack = ElectrodeStack.uniform(voltages=np.ones(9))
    with pytest.warns(ConvergenceWarning):
        solve_potential(stack, modes=32, tol=1e-15)


def test_expansion_reproduces_samples():
    stack = ElectrodeStack.uniform(voltages=[0, 0, 0, 5, -3, 5, 0, 0, 0])
    sol = solve_potential(stack)
    c = expansion(sol, 20e-6)
    d = np.linspace(-10e-6, 10e-6, 11)
    poly = sum(ck * d**k for k, ck in enumerate(c))
    assert np.max(np.abs(poly - sol.axial(20e-6 + d))) < 1e-6


def test_analytic_derivative_matches_finite_difference():
    sol = solve_potential(ElectrodeStack.uniform(voltages=[0, 1, 0, 2, 0, -1, 3, 0, 0]))
    z, h = 100e-6, 1e-7
    fd = (sol.axial(z + h) - sol.axial(z - h)) / (2 * h)
    assert float(sol.axial(z, 1)) == pytest.approx(float(fd), rel=1e-6)


def test_field_is_negative_gradient():
    sol = solve_potential(ElectrodeStack.uniform(voltages=[0, 1, 0, 2, 0, -1, 3, 0, 0]))
    rho, z, h = 120e-6, 50e-6, 1e-8
    e_rho, e_z = sol.field(rho, z)
    assert float(e_rho) == pytest.approx(-float(sol.potential(rho + h, z) - sol.potential(rho - h, z)) / (2 * h), rel=1e-5)
    assert float(e_z) == pytest.approx(-float(sol.potential(rho, z + h) - sol.potential(rho, z - h)) / (2 * h), rel=1e-5)


def test_curvature_to_frequency_examples():
    p, be = species_lookup("proton"), species_lookup("Be9_ion")
    c2 = frequency_to_curvature(TAU * 4e6, p)
    assert c2 == pytest.approx(3.297e6, rel=1e-3)
    assert curvature_to_frequency(3.297e6, p) / TAU == pytest.approx(4.0e6, rel=1e-3)
    ratio = be.mass / p.mass
    assert ratio == pytest.approx(8.9466, rel=1e-4)
    assert curvature_to_frequency(c2, be) / TAU == pytest.approx(4e6 / math.sqrt(ratio), rel=1e-12)
    assert curvature_to_frequency(c2, be) / TAU == pytest.approx(1.337e6, rel=1e-3)
    with pytest.raises(AntiConfiningError):
        curvature_to_frequency(-c2, p)
    with pytest.raises(AntiConfiningError):
        curvature_to_frequency(c2, species_lookup("antiproton"))


def test_relaxation_oracle_single_electrode():
    v = np.zeros(9)
    v[4] = 1.0
    stack = ElectrodeStack.uniform(voltages=v)
    z, phi = relax_potential(stack, h=2e-6)
    series = solve_potential(stack).axial(z)
    err = np.max(np.abs(series - phi)) / np.max(np.abs(series))
    assert err <= 1e-3
