import math

import pytest
import scipy.constants as sc

from trapstack.config import ConfigError, dump_config, load_config, parse_config, parse_quantity
from trapstack.core import (BUILTIN_SPECIES, CONSTANTS, MagneticField, ParticleSpecies,
                            PhysConstants, UnknownSpeciesError, species_lookup)


def test_constants_match_codata():
    assert CONSTANTS.elementary_charge == sc.e
    assert CONSTANTS.planck == sc.h
    assert CONSTANTS.boltzmann == sc.k
    assert CONSTANTS.vacuum_permittivity == sc.epsilon_0
    assert CONSTANTS.reduced_planck == pytest.approx(CONSTANTS.planck / (2 * math.pi), rel=1e-15)


def test_constants_must_be_positive():
    with pytest.raises(ValueError):
        PhysConstants(planck=-1.0)


def test_proton_and_antiproton():
    p = species_lookup("proton")
    pbar = species_lookup("antiproton")
    assert p.charge == 1.602176634e-19
    assert pbar.charge == -p.charge
    assert pbar.mass == p.mass


def test_be_ion_mass():
    # 9.0121831 u minus one electron mass, by hand
    expected = 9.0121831 * 1.66053906892e-27 - 9.1093837139e-31
    assert species_lookup("Be9_ion").mass == pytest.approx(expected, rel=1e-9)
    assert species_lookup("Be9_ion").mass == pytest.approx(1.4964e-26, rel=1e-4)


def test_unknown_species():
    with pytest.raises(UnknownSpeciesError):
        species_lookup("muonium")


def test_species_validation():
    with pytest.raises(ValueError):
        ParticleSpecies("x", 1e-19, -1.0)
    with pytest.raises(ValueError):
        ParticleSpecies("x", 0.0, 1.0)
    with pytest.raises(ValueError):
        MagneticField(0.0)


def test_minimal_file():
    c = parse_config("[field]\nB0 = 5 T\n")
    assert c.field.B0 == 5.0


def test_negative_mass_names_key():
    text = "[field]\nB0 = 5 T\n[species.x]\ncharge = 1 e\nmass = -1 kg\n"
    with pytest.raises(ConfigError, match="mass"):
        parse_config(text)


def test_optional_g_factor_absent():
    c = parse_config("[field]\nB0 = 5 T\n[species.x]\ncharge = 1 e\nmass = 2 u\n")
    assert c.species["x"].g_factor is None
    assert c.species["x"].magnetic_moment is None


@pytest.mark.parametrize("text,match", [
    ("[field]\nB0 = 5\n", "missing unit"),
    ("[field]\nB0 = 5 m\n", "length"),
    ("[field]\nB0 = 5 T\nfoo = 1\n", "unknown key"),
    ("[bogus]\nx = 1\n", "unknown section"),
    ("[geometry]\ninner_radius = 1 mm\n", "field"),
    ("[field]\nB0 = five T\n", "cannot parse"),
    ("[field]\nB0 = 5 T\n[well.a]\nposition = 0 um\nspecies = nope\nfrequency = 1 MHz\n", "unknown species"),
])
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_units():
    assert parse_quantity("400 um", "length") == pytest.approx(400e-6, rel=1e-15)
    assert parse_quantity("4 MHz", "frequency") == 4e6
    assert parse_quantity("45 deg", "angle") == pytest.approx(math.pi / 4)


def test_round_trip(config):
    again = parse_config(dump_config(config))
    assert again == config


def test_defaults_and_lookup(config):
    assert config.field.B0 == 5.0
    assert config.section("exchange")["separation"] == pytest.approx(300e-6)
    assert set(config.prefixed("well")) == {"p", "be"}
    # sections absent from the file fall back to schema defaults
    c = parse_config("[field]\nB0 = 1 T\n")
    assert c.section("readout")["threshold"] == 4


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "none.ini")
