"""Physical constants, particle species and the magnetic field record.

Everything in the package works in SI units. Values come from
``scipy.constants`` (CODATA) and are frozen into :data:`CONSTANTS` at import.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import scipy.constants as sc

# 9Be atomic mass (AME 2020), in unified atomic mass units
BE9_ATOMIC_MASS_U = 9.0121831


class TrapstackError(Exception):
    """Base class for errors raised by this package."""


class UnknownSpeciesError(TrapstackError, KeyError):
    pass


@dataclass(frozen=True)
class PhysConstants:
    elementary_charge: float = sc.e
    vacuum_permittivity: float = sc.epsilon_0
    planck: float = sc.h
    reduced_planck: float = sc.hbar
    boltzmann: float = sc.k
    bohr_magneton: float = sc.physical_constants["Bohr magneton"][0]
    nuclear_magneton: float = sc.physical_constants["nuclear magneton"][0]
    atomic_mass_unit: float = sc.physical_constants["atomic mass constant"][0]
    speed_of_light: float = sc.c
    electron_mass: float = sc.m_e
    proton_mass: float = sc.m_p
    proton_g_factor: float = sc.physical_constants["proton g factor"][0]

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value > 0:
                raise ValueError(f"constant {name} must be positive, got {value}")

    @property
    def coulomb_constant(self) -> float:
        return 1.0 / (4.0 * math.pi * self.vacuum_permittivity)


CONSTANTS = PhysConstants()


@dataclass(frozen=True)
class ParticleSpecies:
    """A trapped charged particle.

    ``g_factor`` and ``magnetic_moment`` are optional; when only the g-factor
    is given the moment is taken as ``g * mu_N / 2`` (spin-1/2 nucleon
    convention), see :meth:`spin_moment`.
    """

    name: str
    charge: float
    mass: float
    g_factor: Optional[float] = None
    magnetic_moment: Optional[float] = None

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"species {self.name!r}: mass must be > 0")
        if self.charge == 0 or not math.isfinite(self.charge):
            raise ValueError(f"species {self.name!r}: charge must be nonzero")

    @property
    def charge_to_mass(self) -> float:
        return self.charge / self.mass

    def spin_moment(self, constants: PhysConstants = CONSTANTS) -> float:
        """Magnitude of the spin magnetic moment in J/T."""
        if self.magnetic_moment is not None:
            return abs(self.magnetic_moment)
        if self.g_factor is not None:
            return abs(self.g_factor) * constants.nuclear_magneton / 2.0
        raise TrapstackError(f"species {self.name!r} has no magnetic moment or g-factor")


@dataclass(frozen=True)
class MagneticField:
    B0: float

    def __post_init__(self):
        if not self.B0 > 0:
            raise ValueError("B0 must be > 0")


def _builtin_species(constants: PhysConstants = CONSTANTS) -> dict[str, ParticleSpecies]:
    e = constants.elementary_charge
    mp = constants.proton_mass
    gp = constants.proton_g_factor
    mu_p = gp * constants.nuclear_magneton / 2.0
    be_mass = BE9_ATOMIC_MASS_U * constants.atomic_mass_unit - constants.electron_mass
    return {
        "proton": ParticleSpecies("proton", e, mp, gp, mu_p),
        "antiproton": ParticleSpecies("antiproton", -e, mp, -gp, -mu_p),
        "Be9_ion": ParticleSpecies("Be9_ion", e, be_mass),
    }


BUILTIN_SPECIES = _builtin_species()


def species_lookup(name: str, config=None) -> ParticleSpecies:
    """Return the species called ``name`` from ``config`` or the built-in table."""
    table = BUILTIN_SPECIES if config is None else config.species
    try:
        return table[name]
    except KeyError:
        known = ", ".join(sorted(table))
        raise UnknownSpeciesError(f"unknown species {name!r} (known: {known})") from None
