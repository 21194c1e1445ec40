"""Frequency bookkeeping for nonlinear laser chains and comb-driven Raman pairs.

Light is tracked by its vacuum frequency so that sum-frequency and harmonic
generation are plain additions; wavelengths are derived as ``c / f``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import CONSTANTS, TrapstackError

C = CONSTANTS.speed_of_light


class RegimeError(TrapstackError, ValueError):
    pass


@dataclass(frozen=True)
class LightField:
    frequency: float                 # Hz
    power: float | None = None       # W
    bandwidth: float | None = None   # Hz

    def __post_init__(self):
        if not self.frequency > 0:
            raise ValueError("frequency must be > 0")
        if self.power is not None and self.power < 0:
            raise ValueError("power must be >= 0")

    @classmethod
    def from_wavelength(cls, wavelength: float, power=None, bandwidth=None) -> "LightField":
        if not wavelength > 0:
            raise ValueError("wavelength must be > 0")
        return cls(C / wavelength, power, bandwidth)

    @property
    def wavelength(self) -> float:
        return C / self.frequency

    @property
    def photon_energy(self) -> float:
        return CONSTANTS.planck * self.frequency


def sfg(a: LightField, b: LightField, efficiency: float | None = None) -> LightField:
    """Sum-frequency mixing; output power is ``efficiency * (P_a + P_b)`` when known."""
    power = None
    if efficiency is not None and a.power is not None and b.power is not None:
        power = efficiency * (a.power + b.power)
    return LightField(a.frequency + b.frequency, power)


def shg(a: LightField, efficiency: float | None = None) -> LightField:
    """Second-harmonic generation; output power is ``efficiency * P``."""
    power = efficiency * a.power if efficiency is not None and a.power is not None else None
    return LightField(2 * a.frequency, power)


@dataclass(frozen=True)
class ChainStage:
    name: str
    inputs: tuple        # input wavelengths (m)
    output: LightField
    efficiency: float

    def as_dict(self) -> dict:
        return {"stage": self.name, "lambda_in_nm": [x * 1e9 for x in self.inputs],
                "lambda_out_nm": self.output.wavelength * 1e9,
                "frequency_out_Hz": self.output.frequency,
                "power_out_W": self.output.power, "efficiency": self.efficiency}


def laser_chain(config) -> list[ChainStage]:
    """Cooling/detection chain (SFG then SHG) and photoionization chain (two SHG stages)."""
    L = config.section("laser")
    pump = LightField.from_wavelength(L["sfg_pump"], L["sfg_pump_power"])
    signal = LightField.from_wavelength(L["sfg_signal"], L["sfg_signal_power"])
    red = sfg(pump, signal, L["sfg_efficiency"])
    uv = shg(red, L["shg_uv_efficiency"])
    ir = LightField.from_wavelength(L["pi_source"], L["pi_power"])
    blue = shg(ir, L["pi_shg1_efficiency"])
    deep = shg(blue, L["pi_shg2_efficiency"])
    return [
        ChainStage("sfg", (pump.wavelength, signal.wavelength), red, L["sfg_efficiency"]),
        ChainStage("shg_cooling", (red.wavelength,), uv, L["shg_uv_efficiency"]),
        ChainStage("shg_pi_1", (ir.wavelength,), blue, L["pi_shg1_efficiency"]),
        ChainStage("shg_pi_2", (blue.wavelength,), deep, L["pi_shg2_efficiency"]),
    ]


def photoionization_check(wavelength: float, ionization_energy: float,
                          resonance_wavelength: float | None = None) -> dict:
    """Two-photon ionization energy budget for light at ``wavelength``."""
    e1 = CONSTANTS.planck * C / wavelength
    out = {"photon_energy_eV": e1 / CONSTANTS.elementary_charge,
           "two_photon_energy_eV": 2 * e1 / CONSTANTS.elementary_charge,
           "ionization_energy_eV": ionization_energy / CONSTANTS.elementary_charge,
           "excess_eV": (2 * e1 - ionization_energy) / CONSTANTS.elementary_charge,
           "ionizes": bool(2 * e1 > ionization_energy)}
    if resonance_wavelength is not None:
        out["resonance_detuning_Hz"] = C / wavelength - C / resonance_wavelength
    return out


# --------------------------------------------------------------------------- comb Raman pairs


@dataclass(frozen=True)
class CombSpec:
    """Mode-locked comb with a Gaussian spectral envelope.

    ``sigma`` is the rms width (Hz) of the intensity envelope, so tooth field
    amplitudes fall as ``exp(-x^2 / (4 sigma^2))`` at offset ``x`` from the
    envelope centre. ``omega0`` is the single-tooth Rabi rate (rad/s) at the
    centre; ``offset`` places the tooth grid relative to the centre.
    """

    f_rep: float
    sigma: float
    omega0: float
    center: float = 0.0
    offset: float = 0.0

    def __post_init__(self):
        if not self.f_rep > 0:
            raise ValueError("f_rep must be > 0")
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if self.omega0 < 0:
            raise ValueError("omega0 must be >= 0")

    @classmethod
    def from_config(cls, config) -> "CombSpec":
        c = config.section("comb")
        return cls(c["repetition_rate"], c["bandwidth"], 2 * math.pi * c["tooth_rabi_frequency"])

    def teeth(self, extra: int = 0):
        """Tooth offsets from the envelope centre (Hz) and their Rabi rates (rad/s)."""
        m = int(math.ceil(10 * self.sigma / self.f_rep)) + abs(extra)
        x = np.arange(-m, m + 1) * self.f_rep + self.offset
        return x, self.omega0 * np.exp(-x**2 / (4 * self.sigma**2))

    def total_power_figure(self) -> float:
        """``sum_n Omega_n^2``, proportional to the total optical power."""
        return float(np.sum(self.teeth()[1] ** 2))

    def with_bandwidth(self, sigma: float, keep_power: bool = True) -> "CombSpec":
        """Same comb with envelope width ``sigma``; optionally rescale ``omega0``
        so the total power is unchanged."""
        new = replace(self, sigma=sigma)
        if keep_power and self.omega0 > 0:
            new = replace(new, omega0=self.omega0 * math.sqrt(
                self.total_power_figure() / new.total_power_figure()))
        return new


def comb_pair(comb: CombSpec, splitting: float) -> tuple[int, float]:
    """Tooth separation ``N = round(splitting / f_rep)`` and residual ``splitting - N f_rep``."""
    if not splitting > 0:
        raise ValueError("splitting must be > 0")
    n = int(round(splitting / comb.f_rep))
    return n, splitting - n * comb.f_rep


@dataclass(frozen=True)
class RamanRate:
    omega_eff: float          # rad/s
    scatter_figure: float     # sum Omega_n^2 / (4 Delta_e^2): excited-state fraction
    scattering_rate: float | None
    model: str = "simplified: far-detuned comb-pair sum, Gaussian envelope, no interference between pairs"

    def as_dict(self) -> dict:
        return {"omega_eff_rad_s": self.omega_eff, "scatter_figure": self.scatter_figure,
                "scattering_rate_1_s": self.scattering_rate, "model": self.model}


def comb_raman_rate(comb: CombSpec, N: int, detuning: float, linewidth: float | None = None) -> RamanRate:
    """Two-photon Rabi rate from all tooth pairs ``(n, n + N)``.

    ``Omega_eff = sum_n Omega_n Omega_{n+N} / (2 Delta_e)`` with the
    single-photon detuning ``Delta_e`` given in Hz. ``linewidth`` (rad/s)
    converts the scattering figure into a photon-scattering rate.
    """
    if detuning < 5 * comb.sigma:
        raise RegimeError(f"single-photon detuning {detuning:.3g} Hz is below 5x the envelope "
                          f"bandwidth {comb.sigma:.3g} Hz")
    x, om = comb.teeth(N)
    N = abs(int(N))
    pairs = om[:-N] * om[N:] if N else om * om
    d = 2 * math.pi * detuning
    omega_eff = float(np.sum(pairs)) / (2 * d)
    figure = float(np.sum(om**2)) / (4 * d * d)
    rate = linewidth * figure if linewidth is not None else None
    return RamanRate(omega_eff, figure, rate)
