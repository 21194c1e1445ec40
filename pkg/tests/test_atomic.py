import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trapstack.atomic import (FineLevel, UnknownStateError, clebsch_gordan, cycling_and_repump,
                              find_state, ground_splitting, hamiltonian, high_field_character,
                              level_energies, level_fan_csv, levels_csv, spin_flip_frequency,
                              zero_field_energy)
from trapstack.core import CONSTANTS, species_lookup

fields = st.floats(0.0, 8.0)


@pytest.fixture(scope="module")
def S(config):
    return FineLevel.from_config(config, "S12")


@pytest.fixture(scope="module")
def P32(config):
    return FineLevel.from_config(config, "P32")


def test_unknown_level_and_state(config, S):
    with pytest.raises(UnknownStateError):
        FineLevel.from_config(config, "D52")
    with pytest.raises(UnknownStateError):
        find_state(level_energies(S, 1.0), 1.5, 0.5)
    with pytest.raises(ValueError):
        level_energies(S, -1.0)
    with pytest.raises(ValueError):
        FineLevel("x", 0.7, 1.0)


@settings(max_examples=30)
@given(fields)
def test_traceless_and_block_diagonal(S, B):
    H, labels = hamiltonian(S, B)
    assert np.allclose(H, H.T)
    assert abs(np.trace(H)) < 1e-6 * np.max(np.abs(H))
    states = level_energies(S, B)
    assert len(states) == S.dimension == 8
    assert abs(sum(s.energy for s in states)) < 1e-6 * np.max(np.abs(H))
    mf = np.array([a + b for a, b in labels])
    assert np.all(H[~np.isclose(mf[:, None], mf[None, :])] == 0)
    assert sorted((s.m_J, s.m_I) for s in states) == sorted(labels)


@settings(max_examples=20)
@given(fields)
def test_no_hyperfine_gives_linear_ladder(S, B):
    bare = FineLevel("bare", S.J, S.g_J, 0.0, S.I, S.g_I)
    c = CONSTANTS
    for s in level_energies(bare, B):
        expect = (S.g_J * c.bohr_magneton * s.m_J - S.g_I * c.nuclear_magneton * s.m_I) * B / c.planck
        assert s.energy == pytest.approx(expect, rel=1e-12, abs=1e-6)
        assert s.purity == pytest.approx(1.0)


def test_zero_field_closed_form(S):
    states = level_energies(S, 0.0)
    e = np.array([s.energy for s in states])
    e2, e1 = zero_field_energy(S, 2), zero_field_energy(S, 1)
    assert np.allclose(e[:5], e2, atol=1e-3) and np.allclose(e[5:], e1, atol=1e-3)
    assert e2 == pytest.approx(-468.757e6, rel=1e-6)
    assert e1 == pytest.approx(781.261e6, rel=1e-6)
    with pytest.raises(ValueError):
        zero_field_energy(S, 3)


def test_zero_field_states_are_clebsch_gordan_mixtures(S):
    # in the m_F = +1 block the upper (F=1) state has weights <mJ mI | 1 1>^2
    states = [s for s in level_energies(S, 0.0) if abs(s.m_F - 1) < 1e-9]
    upper = max(states, key=lambda s: s.energy)
    for (mj, mi), w in zip(upper.basis, upper.weights):
        assert w == pytest.approx(clebsch_gordan(S.J, mj, S.I, mi, 1, 1) ** 2, abs=1e-9)
    assert clebsch_gordan(1.5, 1.5, 0.5, -0.5, 2, 1) ** 2 == pytest.approx(0.25)


@settings(max_examples=40)
@given(st.sampled_from([0.5, 1, 1.5, 2]), st.sampled_from([0.5, 1, 1.5]), st.data())
def test_clebsch_gordan_orthonormal(j1, j2, data):
    m1 = data.draw(st.sampled_from(list(np.arange(-j1, j1 + 1))))
    m2 = data.draw(st.sampled_from(list(np.arange(-j2, j2 + 1))))
    Js = np.arange(abs(j1 - j2), j1 + j2 + 1)
    total = sum(clebsch_gordan(j1, m1, j2, m2, J, m1 + m2) ** 2 for J in Js)
    assert total == pytest.approx(1.0, abs=1e-12)
    assert clebsch_gordan(j1, m1, j2, m2, j1 + j2, m1 + m2 + 1) == 0.0


def test_zero_field_no_hyperfine_degenerate(S):
    flat = FineLevel("flat", S.J, S.g_J, 0.0, S.I, S.g_I)
    assert all(s.energy == 0 for s in level_energies(flat, 0.0))


@given(fields)
def test_stretched_states_are_pure(S, B):
    states = level_energies(S, B)
    for mj, mi in ((0.5, 1.5), (-0.5, -1.5)):
        assert find_state(states, mj, mi).purity == pytest.approx(1.0, abs=1e-12)


def test_high_field_labels_and_slope(S):
    states = level_energies(S, 5.0)
    assert min(high_field_character(s) for s in states) > 0.9999
    c = CONSTANTS
    for mj, mi in ((0.5, 0.5), (-0.5, -1.5)):
        e5 = find_state(level_energies(S, 5.0), mj, mi).energy
        e6 = find_state(level_energies(S, 6.0), mj, mi).energy
        slope = (S.g_J * c.bohr_magneton * mj - S.g_I * c.nuclear_magneton * mi) / c.planck
        assert (e6 - e5) == pytest.approx(slope, rel=1e-4)


def test_ground_splitting_and_transitions(config, S, P32):
    split = ground_splitting(S, 5.0)
    assert abs(split) == pytest.approx(139.1853e9, rel=1e-6)
    ref = CONSTANTS.speed_of_light / config.section("atomic")["reference_wavelength"]
    cr = cycling_and_repump(S, P32, 5.0, ref)
    p = level_energies(P32, 5.0)
    p_split = find_state(p, 1.5, 1.5).energy - find_state(p, 0.5, 1.5).energy
    assert cr["difference_Hz"] == pytest.approx(p_split - split, rel=1e-12)
    assert cr["difference_Hz"] == pytest.approx(-45.82e9, rel=1e-3)
    assert cr["cycling_Hz"] == pytest.approx(ref, rel=1e-3)


def test_proton_spin_flip():
    assert spin_flip_frequency(species_lookup("proton"), 5.0) == pytest.approx(212.887e6, rel=1e-5)


def test_quadrupole_term_is_optional(P32):
    withq = FineLevel("q", P32.J, P32.g_J, P32.hyperfine_A, P32.I, P32.g_I, hyperfine_B=-0.1e6)
    e0 = [s.energy for s in level_energies(withq, 0.1)]
    e1 = [s.energy for s in level_energies(withq, 0.1, quadrupole=True)]
    assert e0 == [s.energy for s in level_energies(P32, 0.1)]
    assert not np.allclose(e0, e1)
    assert sum(e1) == pytest.approx(0.0, abs=1e-3)


def test_csv_outputs(S):
    csv = levels_csv(level_energies(S, 5.0))
    lines = csv.splitlines()
    assert lines[0] == "index,energy_Hz,mJ,mI,purity"
    assert len(lines) == 9
    fan = level_fan_csv(S, [0.0, 1.0, 2.0]).splitlines()
    assert fan[0].startswith("B_T,E_mJ+0.5_mI+1.5_Hz")
    assert len(fan) == 4 and len(fan[1].split(",")) == 9
