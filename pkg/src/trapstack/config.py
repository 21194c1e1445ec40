"""Sectioned key/value configuration with explicit units.

The file format is INI (``configparser``) where every dimensioned value
carries a unit suffix, e.g.::

    [field]
    B0 = 5 T

    [geometry]
    inner_radius = 400 um

Values are converted to SI on load. Unknown sections or keys are rejected,
and every error names the offending ``section.key``. ``docs/config.md``
documents the full schema.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field as dc_field
from decimal import Decimal, InvalidOperation
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Any, Mapping

from .core import (
    BUILTIN_SPECIES,
    CONSTANTS,
    MagneticField,
    ParticleSpecies,
    PhysConstants,
    TrapstackError,
)


class ConfigError(TrapstackError):
    """Raised for malformed or invalid configuration files."""

    def __init__(self, message, key=None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


# unit -> (dimension, SI factor as a decimal string)
UNITS: dict[str, tuple[str, str]] = {
    "m": ("length", "1"), "mm": ("length", "1e-3"), "um": ("length", "1e-6"),
    "µm": ("length", "1e-6"), "nm": ("length", "1e-9"),
    "V": ("voltage", "1"), "mV": ("voltage", "1e-3"), "kV": ("voltage", "1e3"),
    "Hz": ("frequency", "1"), "kHz": ("frequency", "1e3"), "MHz": ("frequency", "1e6"),
    "GHz": ("frequency", "1e9"), "THz": ("frequency", "1e12"),
    "1/s": ("rate", "1"), "1/ms": ("rate", "1e3"), "1/us": ("rate", "1e6"),
    "s": ("time", "1"), "ms": ("time", "1e-3"), "us": ("time", "1e-6"),
    "µs": ("time", "1e-6"), "ns": ("time", "1e-9"),
    "kg": ("mass", "1"), "u": ("mass", repr(CONSTANTS.atomic_mass_unit)),
    "C": ("charge", "1"), "e": ("charge", repr(CONSTANTS.elementary_charge)),
    "T": ("field", "1"), "mT": ("field", "1e-3"), "G": ("field", "1e-4"),
    "T/m": ("gradient", "1"),
    "W": ("power", "1"), "mW": ("power", "1e-3"), "uW": ("power", "1e-6"),
    "K": ("temperature", "1"), "mK": ("temperature", "1e-3"), "uK": ("temperature", "1e-6"),
    "J/T": ("moment", "1"),
    "J": ("energy", "1"), "eV": ("energy", repr(CONSTANTS.elementary_charge)),
    "rad": ("angle", "1"), "deg": ("angle", repr(math.pi / 180)),
}

SI_UNIT = {
    "length": "m", "voltage": "V", "frequency": "Hz", "rate": "1/s", "time": "s",
    "mass": "kg", "charge": "C", "field": "T", "gradient": "T/m", "power": "W",
    "temperature": "K", "moment": "J/T", "energy": "J", "angle": "rad",
}


@dataclass(frozen=True)
class Key:
    kind: str  # a dimension name, or number/int/bool/text
    required: bool = False
    default: Any = None
    many: bool = False
    check: Any = None  # callable(value) -> error message or None


def _positive(v):
    return None if v > 0 else "must be > 0"


def _nonneg(v):
    return None if v >= 0 else "must be >= 0"


def _probability(v):
    return None if 0.0 <= v <= 1.0 else "must lie in [0, 1]"


def _nonzero(v):
    return None if v != 0 else "must be nonzero"


SCHEMA: dict[str, dict[str, Key]] = {
    "field": {"B0": Key("field", required=True, check=_positive)},
    "species.*": {
        "charge": Key("charge", required=True, check=_nonzero),
        "mass": Key("mass", required=True, check=_positive),
        "g_factor": Key("number"),
        "magnetic_moment": Key("moment"),
    },
    "geometry": {
        "inner_radius": Key("length", default=400e-6, check=_positive),
        "electrode_count": Key("int", default=9, check=_positive),
        "electrode_thickness": Key("length", default=200e-6, check=_positive),
        "gap_width": Key("length", default=50e-6, check=_nonneg),
        "end_margin": Key("length", default=1e-3, check=_nonneg),
        "end_treatment": Key("text", default="grounded",
                             check=lambda v: None if v in ("grounded", "extend")
                             else "must be 'grounded' or 'extend'"),
        "modes": Key("int", check=lambda v: None if v >= 32 else "must be >= 32"),
    },
    "voltages": {"values": Key("voltage", many=True)},
    "design": {
        "voltage_bound": Key("voltage", default=50.0, check=_positive),
        "c3_weight": Key("number", default=0.0, check=_nonneg),
        "c4_weight": Key("number", default=0.0, check=_nonneg),
        "float_center": Key("bool", default=False),
    },
    "well.*": {
        "position": Key("length", required=True),
        "species": Key("text", required=True),
        "frequency": Key("frequency", required=True, check=_positive),
    },
    "modes": {
        "species": Key("text", default="Be9_ion"),
        "axial_frequency": Key("frequency", default=4e6, check=_positive),
    },
    "exchange": {
        "species_a": Key("text", default="proton"),
        "species_b": Key("text", default="Be9_ion"),
        "separation": Key("length", default=300e-6, check=_positive),
        "axial_frequency": Key("frequency", default=4e6, check=_positive),
        "quoted_swap_time": Key("time", default=3.7e-3, check=_positive),
    },
    "atomic": {
        "reference_wavelength": Key("length", default=313.132e-9, check=_positive),
        "linewidth": Key("frequency", default=19.4e6, check=_positive),
        "quadrupole": Key("bool", default=False),
    },
    "level.*": {
        "J": Key("number", required=True, check=_positive),
        "g_J": Key("number", required=True),
        "hyperfine_A": Key("frequency", default=0.0),
        "hyperfine_B": Key("frequency", default=0.0),
        "I": Key("number", default=1.5, check=_nonneg),
        "g_I": Key("number", default=0.0),
    },
    "laser": {
        "sfg_pump": Key("length", default=1050e-9, check=_positive),
        "sfg_signal": Key("length", default=1550e-9, check=_positive),
        "sfg_pump_power": Key("power", default=10.0, check=_nonneg),
        "sfg_signal_power": Key("power", default=10.0, check=_nonneg),
        "sfg_efficiency": Key("number", default=0.4, check=_probability),
        "shg_uv_efficiency": Key("number", default=0.3, check=_probability),
        "pi_source": Key("length", default=940e-9, check=_positive),
        "pi_power": Key("power", default=1.5, check=_nonneg),
        "pi_shg1_efficiency": Key("number", default=0.34, check=_probability),
        "pi_shg2_efficiency": Key("number", default=0.05, check=_probability),
        "ablation_wavelength": Key("length", default=1064e-9, check=_positive),
        "be_resonance_wavelength": Key("length", default=234.9329e-9, check=_positive),
        "be_ionization_energy": Key("energy", default=9.3226990 * CONSTANTS.elementary_charge,
                                    check=_positive),
    },
    "comb": {
        "repetition_rate": Key("frequency", default=120e6, check=_positive),
        "bandwidth": Key("frequency", default=300e9, check=_positive),
        "tooth_rabi_frequency": Key("frequency", default=1e6, check=_nonneg),
        "single_photon_detuning": Key("frequency", default=2e12, check=_positive),
        "target_splitting": Key("frequency", check=_positive),
    },
    "cooling": {
        "axial_frequency": Key("frequency", default=1e6, check=_positive),
        "detuning": Key("number", default=-0.5),  # units of the linewidth Gamma
        "saturation": Key("number", default=0.5, check=_nonneg),
        "beam_angle": Key("angle", default=math.pi / 4),
        "duration": Key("time", default=1e-3, check=_positive),
        "dt": Key("time", default=2e-9, check=_positive),
        "seeds": Key("int", default=10, check=_positive),
        "initial_temperature": Key("temperature", default=10e-3, check=_nonneg),
        "axialization_rate": Key("rate", default=0.0, check=_nonneg),
        "emission": Key("bool", default=True),
    },
    "readout": {
        "bright_mean": Key("number", default=10.0, check=_positive),
        "dark_mean": Key("number", default=1.0, check=_nonneg),
        "threshold": Key("int", default=4, check=_nonneg),
        "duration": Key("time", default=200e-6, check=_nonneg),
    },
    "protocol": {
        "stages": Key("text", many=True, default=(
            "recool", "spin_to_motion", "shuttle", "motional_swap",
            "sideband_map", "fluorescence_readout")),
        "trials": Key("int", default=10000, check=_positive),
        "swap_contrast": Key("number", default=1.0, check=_probability),
        "spin_gradient": Key("gradient", default=0.0, check=_nonneg),
        "carrier_rabi_frequency": Key("frequency", default=0.0, check=_nonneg),
    },
    "stage.*": {
        "kind": Key("text"),
        "duration": Key("time", check=_nonneg),
        "flip_prob": Key("number", default=0.0, check=_probability),
        "heating_quanta": Key("number", default=0.0, check=_nonneg),
        "failure_prob": Key("number", default=0.0, check=_probability),
    },
}


def _schema_for(section: str) -> dict[str, Key] | None:
    if section in SCHEMA:
        return SCHEMA[section]
    prefix, _, name = section.partition(".")
    if name and f"{prefix}.*" in SCHEMA:
        return SCHEMA[f"{prefix}.*"]
    return None


def parse_quantity(text: str, kind: str, key: str = None):
    """Parse ``"400 um"`` style text into an SI float for dimension ``kind``."""
    text = text.strip()
    if kind == "text":
        return text
    if kind == "bool":
        low = text.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"expected a boolean, got {text!r}", key)
    number, _, unit = text.partition(" ")
    unit = unit.strip()
    try:
        value = Decimal(number)
    except InvalidOperation:
        raise ConfigError(f"cannot parse number {number!r}", key) from None
    if kind == "int":
        if unit or value != value.to_integral_value():
            raise ConfigError(f"expected an integer, got {text!r}", key)
        return int(value)
    if kind == "number":
        if unit and unit != "1":
            raise ConfigError(f"expected a dimensionless number, got unit {unit!r}", key)
        out = float(value)
    else:
        if not unit:
            raise ConfigError(f"missing unit (expected a {kind}, e.g. {SI_UNIT[kind]!r})", key)
        if unit not in UNITS:
            raise ConfigError(f"unknown unit {unit!r}", key)
        dim, factor = UNITS[unit]
        if dim != kind:
            raise ConfigError(f"unit {unit!r} is a {dim}, expected a {kind}", key)
        out = float(value * Decimal(factor))
    if not math.isfinite(out):
        raise ConfigError("value must be finite", key)
    return out


def _format_quantity(value, kind: str) -> str:
    if kind in ("text",):
        return str(value)
    if kind == "bool":
        return "true" if value else "false"
    if kind == "int":
        return str(int(value))
    if kind == "number":
        return repr(float(value))
    return f"{float(value)!r} {SI_UNIT[kind]}"


@dataclass(frozen=True)
class Config:
    """Validated configuration, all quantities in SI units.

    ``sections`` maps section name to a read-only mapping of key to value.
    Defaults from the schema are filled in for every known fixed section.
    """

    field: MagneticField
    species: Mapping[str, ParticleSpecies]
    sections: Mapping[str, Mapping[str, Any]]
    constants: PhysConstants = CONSTANTS
    source: str | None = dc_field(default=None, compare=False)

    def section(self, name: str) -> Mapping[str, Any]:
        if name in self.sections:
            return self.sections[name]
        schema = _schema_for(name)
        if schema is None:
            raise ConfigError("unknown section", name)
        return MappingProxyType({k: spec.default for k, spec in schema.items()})

    def get(self, section: str, key: str, default=None):
        value = self.section(section).get(key)
        return default if value is None else value

    def prefixed(self, prefix: str) -> dict[str, Mapping[str, Any]]:
        """All sections named ``prefix.<name>``, keyed by ``<name>``, in file order."""
        out = {}
        for name, body in self.sections.items():
            head, _, tail = name.partition(".")
            if head == prefix and tail:
                out[tail] = body
        return out


def _validate_section(section: str, items: Mapping[str, str]) -> dict[str, Any]:
    schema = _schema_for(section)
    if schema is None:
        raise ConfigError("unknown section", section)
    out: dict[str, Any] = {}
    for key, raw in items.items():
        path = f"{section}.{key}"
        if key not in schema:
            raise ConfigError("unknown key", path)
        spec = schema[key]
        if spec.many:
            parts = [p for p in (s.strip() for s in raw.split(",")) if p]
            if spec.kind != "text" and parts:
                # a single trailing unit applies to the whole list: "1, 2, 3 V"
                unit = parts[-1].partition(" ")[2]
                parts = [p if " " in p else f"{p} {unit}" for p in parts[:-1]] + [parts[-1]]
            value = tuple(parse_quantity(p, spec.kind, path) for p in parts)
            if spec.check:
                for v in value:
                    msg = spec.check(v)
                    if msg:
                        raise ConfigError(msg, path)
        else:
            value = parse_quantity(raw, spec.kind, path)
            if spec.check:
                msg = spec.check(value)
                if msg:
                    raise ConfigError(msg, path)
        out[key] = value
    for key, spec in schema.items():
        if key not in out:
            if spec.required:
                raise ConfigError("missing required key", f"{section}.{key}")
            out[key] = spec.default
    return out


def parse_config(text: str, source: str | None = None) -> Config:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                       comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source or "<string>")
    except configparser.Error as exc:
        raise ConfigError(f"parse error: {exc}") from exc

    sections: dict[str, dict[str, Any]] = {}
    for name in parser.sections():
        sections[name] = _validate_section(name, dict(parser.items(name, raw=True)))

    if "field" not in sections:
        raise ConfigError("missing required section", "field")
    field_ = MagneticField(sections["field"]["B0"])

    species = dict(BUILTIN_SPECIES)
    for name, body in list(sections.items()):
        head, _, tail = name.partition(".")
        if head == "species":
            species[tail] = ParticleSpecies(tail, body["charge"], body["mass"],
                                            body["g_factor"], body["magnetic_moment"])

    for name, body in sections.items():
        head, _, tail = name.partition(".")
        if head == "well" and body["species"] not in species:
            raise ConfigError(f"unknown species {body['species']!r}", f"{name}.species")
    for key in ("species_a", "species_b"):
        if "exchange" in sections and sections["exchange"][key] not in species:
            raise ConfigError("unknown species", f"exchange.{key}")

    frozen = {k: MappingProxyType(v) for k, v in sections.items()}
    return Config(field_, MappingProxyType(species), MappingProxyType(frozen), CONSTANTS, source)


def load_config(path=None) -> Config:
    """Load and validate a configuration file.

    With ``path=None`` the bundled demonstrator configuration is returned.
    """
    if path is None:
        text = resources.files("trapstack.data").joinpath("demonstrator.ini").read_text(encoding="utf-8")
        return parse_config(text, "trapstack:data/demonstrator.ini")
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"), str(path))


def dump_config(config: Config) -> str:
    """Serialize ``config`` back to the text format (SI units throughout)."""
    lines = []
    emitted_species = set()
    for name, body in config.sections.items():
        schema = _schema_for(name)
        lines.append(f"[{name}]")
        for key, value in body.items():
            if value is None:
                continue
            spec = schema[key]
            if spec.many:
                lines.append(f"{key} = " + ", ".join(_format_quantity(v, spec.kind) for v in value))
            else:
                lines.append(f"{key} = {_format_quantity(value, spec.kind)}")
        lines.append("")
        if name.startswith("species."):
            emitted_species.add(name.partition(".")[2])
    for name, sp in config.species.items():
        if name in emitted_species or BUILTIN_SPECIES.get(name) == sp:
            continue
        lines.append(f"[species.{name}]")
        lines.append(f"charge = {sp.charge!r} C")
        lines.append(f"mass = {sp.mass!r} kg")
        if sp.g_factor is not None:
            lines.append(f"g_factor = {sp.g_factor!r}")
        if sp.magnetic_moment is not None:
            lines.append(f"magnetic_moment = {sp.magnetic_moment!r} J/T")
        lines.append("")
    return "\n".join(lines)
