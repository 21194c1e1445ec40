import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trapstack.core import CONSTANTS, species_lookup
from trapstack.exchange import (CoupledPair, RegimeError, StrongCouplingWarning,
                                beam_splitter_fock, detuned_transfer, detuning_sweep,
                                exchange_rate, quantum_swap_model, simulate_swap,
                                swap_time_conventions, sweep_csv)
from trapstack.modes import ResolutionError

TAU = 2 * math.pi
P, BE, PBAR = (species_lookup(n) for n in ("proton", "Be9_ion", "antiproton"))
W = TAU * 4e6


@pytest.fixture(scope="module")
def pair(config):
    return CoupledPair.from_config(config)


def test_reference_values(pair, config):
    # oracle: 2 k e^2 / d^3 and |kappa| / (sqrt(m_a m_b) w)
    k = 2 * CONSTANTS.coulomb_constant * CONSTANTS.elementary_charge**2 / (300e-6) ** 3
    assert pair.kappa == pytest.approx(k, rel=1e-12)
    assert pair.kappa == pytest.approx(1.7089e-17, rel=1e-4)
    res = exchange_rate(pair)
    assert res.delta_omega == pytest.approx(k / (math.sqrt(P.mass * BE.mass) * W), rel=1e-12)
    assert res.delta_omega == pytest.approx(135.91, rel=1e-4)
    assert res.t_swap == pytest.approx(23.11e-3, rel=1e-3)
    assert res.contrast == 1.0
    conv = swap_time_conventions(pair, config.section("exchange")["quoted_swap_time"])
    assert conv["single_mass"]["t_swap_s"] == pytest.approx(3.864e-3, rel=1e-3)
    assert conv["quoted"]["matches_single_mass_10pct"]
    assert not conv["quoted"]["matches_geometric_mean_10pct"]


@given(st.floats(20e-6, 5e-3))
def test_kappa_cubic_scaling(d):
    a = CoupledPair(P, BE, d, W, W)
    b = CoupledPair(P, BE, 2 * d, W, W)
    assert b.kappa == pytest.approx(a.kappa / 8, rel=1e-12)


@given(st.floats(1.0, 20.0))
def test_equal_species_limit(mass_ratio):
    # the geometric-mean rate reduces to kappa / (m w) for identical masses
    same = CoupledPair(P, P, 300e-6, W, W)
    assert same.resonant_splitting() == pytest.approx(same.kappa / (P.mass * W), rel=1e-12)
    heavy = replace(P, name="heavy", mass=P.mass * mass_ratio)
    pr = CoupledPair(P, heavy, 300e-6, W, W)
    assert pr.resonant_splitting() == pytest.approx(pr.kappa / (math.sqrt(P.mass * heavy.mass) * W), rel=1e-12)
    assert pr.resonant_splitting() == pytest.approx(same.resonant_splitting() / math.sqrt(mass_ratio), rel=1e-12)


def test_opposite_sign_coupling_has_same_rate(pair):
    anti = CoupledPair(PBAR, BE, pair.d, W, W)
    assert anti.kappa == pytest.approx(-pair.kappa)
    assert exchange_rate(anti).t_swap == pytest.approx(exchange_rate(pair).t_swap, rel=1e-12)
    tr = simulate_swap(anti, duration=1.2 * exchange_rate(anti).t_swap)
    assert tr.contrast() > 0.999


def test_numerical_swap_matches_analytic(pair):
    res = exchange_rate(pair)
    tr = simulate_swap(pair)
    assert tr.first_transfer_time() == pytest.approx(res.t_swap, rel=1e-3)
    assert tr.contrast() == pytest.approx(1.0, abs=1e-4)
    e = tr.total_energy
    assert np.max(np.abs(e / e[0] - 1)) < 1e-6


def test_uncoupled_energies_constant():
    far = CoupledPair(P, BE, 1.0, W, W)
    tr = simulate_swap(far, (1e-23, 2e-23), duration=1e-4)
    assert np.allclose(tr.energy_a, 1e-23, rtol=1e-8)
    assert np.allclose(tr.energy_b, 2e-23, rtol=1e-8)


def test_half_contrast_at_detuning_equal_to_splitting(pair):
    dw0 = pair.resonant_splitting()
    p = pair.with_frequencies(W + dw0 / 2, W - dw0 / 2)
    r = detuned_transfer(p)
    assert r.contrast == pytest.approx(0.5, rel=1e-9)
    assert r.effective_rate == pytest.approx(math.sqrt(2) * dw0, rel=1e-9)
    assert exchange_rate(p).contrast == pytest.approx(0.5, rel=1e-9)


def test_detuning_sweep_against_lorentzian(pair):
    dw0 = pair.resonant_splitting()
    deltas = np.array([0.0, 0.5, 1.0, 2.0]) * dw0
    analytic, numeric = detuning_sweep(pair, deltas, samples=8000)
    assert np.allclose(analytic, 1 / (1 + (deltas / dw0) ** 2), rtol=1e-9)
    assert np.allclose(numeric, analytic, atol=2e-3)
    csv = sweep_csv(deltas, numeric)
    assert csv.splitlines()[0] == "delta_Hz,contrast"
    assert len(csv.splitlines()) == 5


def test_normal_mode_splitting_from_spectrum(pair):
    res = exchange_rate(pair)
    tr = simulate_swap(pair, duration=40 * res.t_swap, samples=40000)
    assert tr.normal_mode_splitting() == pytest.approx(res.delta_omega, rel=1e-2)


def test_resolution_error(pair):
    with pytest.raises(ResolutionError):
        simulate_swap(pair, dt=1.0 / W)


def test_strong_coupling_warning():
    with pytest.warns(StrongCouplingWarning):
        exchange_rate(CoupledPair(P, BE, 10e-6, W, W))


def test_quantum_model(pair):
    t_swap = exchange_rate(pair).t_swap
    na, nb = quantum_swap_model(pair, 1.0, 0.0, t_swap)
    assert na == pytest.approx(0.0, abs=1e-12) and nb == pytest.approx(1.0)
    na, nb = quantum_swap_model(pair, 1.0, 0.0, t_swap / 2)
    assert na == pytest.approx(0.5) and nb == pytest.approx(0.5)
    t = np.linspace(0, 2 * t_swap, 17)
    na, nb = quantum_swap_model(pair, 7.0, 3.0, t)
    assert np.allclose(na + nb, 10.0)
    with pytest.raises(RegimeError):
        quantum_swap_model(CoupledPair(P, BE, 5e-6, W, W), 1, 0, 0.0)


def test_quantum_and_classical_transfer_agree(pair):
    # a coherent state follows the classical amplitude: mean numbers track energies
    tr = simulate_swap(pair, duration=exchange_rate(pair).t_swap)
    idx = [len(tr.t) // 4, len(tr.t) // 2, 3 * len(tr.t) // 4]
    frac = tr.energy_b[idx] / (tr.energy_a[idx] + tr.energy_b[idx])
    na, nb = quantum_swap_model(pair, 1.0, 0.0, tr.t[idx])
    assert np.allclose(frac, nb, atol=1e-3)


@settings(max_examples=30)
@given(st.integers(0, 6), st.integers(0, 6), st.floats(0, math.pi))
def test_beam_splitter_fock(n_a, n_b, theta):
    P_ = beam_splitter_fock(n_a, n_b, theta)
    assert P_.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(P_ >= -1e-15)
    ma = np.arange(P_.shape[0])
    mean_a = float((P_.sum(axis=1) * ma).sum())
    c2, s2 = math.cos(theta) ** 2, math.sin(theta) ** 2
    assert mean_a == pytest.approx(n_a * c2 + n_b * s2, abs=1e-10)


def test_beam_splitter_swap_and_hong_ou_mandel():
    assert beam_splitter_fock(2, 0, math.pi / 2)[0, 2] == pytest.approx(1.0)
    hom = beam_splitter_fock(1, 1, math.pi / 4)
    assert hom[1, 1] == pytest.approx(0.0, abs=1e-15)
    assert hom[2, 0] == pytest.approx(0.5) and hom[0, 2] == pytest.approx(0.5)


def test_anharmonic_fraction(pair):
    assert pair.anharmonic_fraction(1e-6) == pytest.approx(1e-6 / 300e-6)
    with pytest.raises(ValueError):
        CoupledPair(P, BE, 0.0, W, W)
