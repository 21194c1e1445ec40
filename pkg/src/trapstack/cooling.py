"""Semiclassical Doppler cooling of a single ion in a Penning trap.

The ion is a classical point particle whose motion is carried by the three
slow complex mode amplitudes (cyclotron, magnetron, axial), so free motion
between photon events is propagated exactly. Each time step the two-level
scattering rate

    R = (Gamma/2) s / (1 + s + (2 (delta - k.v) / Gamma)^2)

sets the probability ``1 - exp(-R dt)`` of one absorption/emission cycle. An
event kicks the ion by ``hbar k`` along the beam plus ``hbar k`` in a random
direction for the spontaneous emission. An optional axialization drive
coherently rotates magnetron amplitude into cyclotron amplitude.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.linalg import expm

from .core import CONSTANTS, ParticleSpecies, TrapstackError
from .modes import eigenfrequencies, radial_roots


class GeometryError(TrapstackError, ValueError):
    pass


class StepBudgetError(TrapstackError, ValueError):
    pass


@dataclass(frozen=True)
class CoolingBeam:
    detuning: float          # rad/s, laser minus atomic resonance
    saturation: float
    direction: tuple         # unit 3-vector
    wavelength: float        # m

    def __post_init__(self):
        if self.saturation < 0:
            raise ValueError("saturation must be >= 0")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be > 0")
        n = float(np.linalg.norm(self.direction))
        if abs(n - 1) > 1e-9:
            raise ValueError("beam direction must be a unit vector")

    @classmethod
    def at_angle(cls, detuning, saturation, angle, wavelength) -> "CoolingBeam":
        """Beam in the x-z plane at ``angle`` (rad) to the trap axis."""
        return cls(detuning, saturation, (math.sin(angle), 0.0, math.cos(angle)), wavelength)

    @property
    def wavevector(self) -> np.ndarray:
        return 2 * math.pi / self.wavelength * np.asarray(self.direction, float)


def scattering_rate(beam: CoolingBeam, velocity, linewidth: float):
    """Photon scattering rate (1/s) for an ion moving with ``velocity``."""
    if not linewidth > 0:
        raise ValueError("linewidth must be > 0")
    kv = np.asarray(velocity, float) @ beam.wavevector
    x = 2 * (beam.detuning - kv) / linewidth
    return 0.5 * linewidth * beam.saturation / (1 + beam.saturation + x * x)


def mean_force(beam: CoolingBeam, velocity, linewidth: float):
    """Mean radiation-pressure force ``hbar k R`` (N)."""
    return CONSTANTS.reduced_planck * beam.wavevector * scattering_rate(beam, velocity, linewidth)


def doppler_limit(linewidth: float) -> float:
    """``T_D = hbar Gamma / (2 k_B)`` (K)."""
    if not linewidth > 0:
        raise ValueError("linewidth must be > 0")
    return CONSTANTS.reduced_planck * linewidth / (2 * CONSTANTS.boltzmann)


def axial_equilibrium_theory(beam: CoolingBeam, linewidth: float, emission: bool = True) -> float:
    """Low-velocity steady-state axial temperature (K) for a single beam.

    Balances the axial momentum diffusion from absorption (``cos^2 theta``)
    and isotropic emission (``1/3``) against the linear friction coefficient.
    """
    c2 = beam.direction[2] ** 2
    if abs(beam.direction[2]) < 1e-12:
        raise GeometryError("beam has no axial component")
    G, s, d = linewidth, beam.saturation, beam.detuning
    den = 1 + s + (2 * d / G) ** 2
    rate = 0.5 * G * s / den
    slope = 0.5 * G * s * (-8 * d / G**2) / den**2      # dR/d(delta)
    if slope <= 0:
        return math.inf
    xi = 1 / 3 if emission else 0.0
    return CONSTANTS.reduced_planck * rate * (c2 + xi) / (2 * c2 * slope) / CONSTANTS.boltzmann


@njit(cache=True)
def _cool_kernel(state, r1, r2, wz, t0, dt, kvec, det, sat, gamma, recoil, emission, g_ax,
                 u_evt, u_cos, u_phi, u_pick, every, out):
    """Advance ``state = [a_plus, a_minus, a_z]`` (slow amplitudes) by len(u_evt) steps.

    Records ``|a_plus|^2, |a_minus|^2, |a_z|^2, events`` every ``every`` steps
    into ``out`` and returns the number of photon events.
    """
    ap, am, az = state[0], state[1], state[2]
    nb = kvec.shape[0]
    ca, sa = math.cos(g_ax * dt), math.sin(g_ax * dt)
    k_rec = 0
    events = 0
    since = 0
    for n in range(u_evt.shape[0]):
        t = t0 + n * dt
        ep = cmath.exp(-1j * r1 * t)
        em = cmath.exp(-1j * r2 * t)
        ez = cmath.exp(-1j * wz * t)
        w = -1j * r1 * ap * ep - 1j * r2 * am * em
        vx, vy = w.real, w.imag
        vz = wz * (az * ez).imag
        rate = 0.0
        for b in range(nb):
            kv = kvec[b, 0] * vx + kvec[b, 1] * vy + kvec[b, 2] * vz
            x = 2.0 * (det[b] - kv) / gamma
            rate += 0.5 * gamma * sat[b] / (1.0 + sat[b] + x * x)
        if u_evt[n] < -math.expm1(-rate * dt):
            # choose the beam in proportion to its rate (single beam: always 0)
            pick = 0
            if nb > 1:
                target = u_pick[n] * rate
                acc = 0.0
                for b in range(nb):
                    kv = kvec[b, 0] * vx + kvec[b, 1] * vy + kvec[b, 2] * vz
                    x = 2.0 * (det[b] - kv) / gamma
                    acc += 0.5 * gamma * sat[b] / (1.0 + sat[b] + x * x)
                    if acc >= target:
                        pick = b
                        break
            knorm = math.sqrt(kvec[pick, 0] ** 2 + kvec[pick, 1] ** 2 + kvec[pick, 2] ** 2)
            dvx = recoil * kvec[pick, 0] / knorm
            dvy = recoil * kvec[pick, 1] / knorm
            dvz = recoil * kvec[pick, 2] / knorm
            if emission:
                ct = 2.0 * u_cos[n] - 1.0
                st = math.sqrt(max(0.0, 1.0 - ct * ct))
                ph = 2.0 * math.pi * u_phi[n]
                dvx += recoil * st * math.cos(ph)
                dvy += recoil * st * math.sin(ph)
                dvz += recoil * ct
            dw = dvx + 1j * dvy
            ap += 1j * dw / (r1 - r2) / ep
            am += 1j * dw / (r2 - r1) / em
            az += 1j * dvz / wz / ez
            events += 1
            since += 1
        if g_ax != 0.0:
            ap, am = ca * ap - 1j * sa * am, ca * am - 1j * sa * ap
        if (n + 1) % every == 0:
            out[k_rec, 0] = abs(ap) ** 2
            out[k_rec, 1] = abs(am) ** 2
            out[k_rec, 2] = abs(az) ** 2
            out[k_rec, 3] = since
            since = 0
            k_rec += 1
    state[0], state[1], state[2] = ap, am, az
    return events


@dataclass(frozen=True, eq=False)
class CoolingResult:
    t: np.ndarray                 # s
    E_axial: np.ndarray           # J, mean over seeds
    E_cyclotron: np.ndarray
    E_magnetron: np.ndarray       # J, negative
    scattering_rate: np.ndarray   # 1/s, mean over seeds
    T_axial: np.ndarray           # K, mean over seeds
    equilibrium: dict             # K: mean and standard error per mode over the second half
    photons: int
    seeds: int
    duration: float
    per_seed_axial: np.ndarray    # K, late-time mean per seed

    def to_csv(self) -> str:
        lines = ["t_s,E_axial_J,E_cyclotron_J,E_magnetron_J,T_axial_K"]
        for row in zip(self.t, self.E_axial, self.E_cyclotron, self.E_magnetron, self.T_axial):
            lines.append(",".join(repr(float(x)) for x in row))
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {"equilibrium_K": self.equilibrium, "photons": self.photons, "seeds": self.seeds,
                "duration_s": self.duration,
                "mean_scattering_rate_1_s": float(np.mean(self.scattering_rate))}


def _thermal_amplitudes(rng, species, modes, r1, r2, temperature):
    """Slow amplitudes drawn from a thermal state at ``temperature``."""
    kT = CONSTANTS.boltzmann * temperature
    m, wz = species.mass, modes.omega_z
    scale_p = 0.5 * m * (modes.omega_plus**2 - wz**2 / 2)
    scale_m = 0.5 * m * abs(modes.omega_minus**2 - wz**2 / 2)
    e = rng.exponential(kT, 3) if kT > 0 else np.zeros(3)
    ph = rng.uniform(0, 2 * math.pi, 3)
    return np.array([math.sqrt(e[0] / scale_p) * cmath.exp(1j * ph[0]),
                     math.sqrt(e[1] / scale_m) * cmath.exp(1j * ph[1]),
                     math.sqrt(e[2] / (0.5 * m * wz * wz)) * cmath.exp(1j * ph[2])])


def simulate_doppler(species: ParticleSpecies, B0: float, omega_z: float, beams,
                     linewidth: float, duration: float, dt: float = 2e-9, seeds=10,
                     seed: int = 0, initial_temperature: float = 10e-3,
                     axialization_rate: float = 0.0, emission: bool = True,
                     record_every: int = 100, chunk: int = 1 << 16,
                     max_steps: int = 50_000_000) -> CoolingResult:
    """Monte Carlo Doppler cooling, averaged over independent seeds.

    ``seeds`` is a count (streams spawned from ``seed``) or an explicit
    sequence of ``numpy.random.SeedSequence`` objects.
    """
    beams = list(beams)
    if not beams or all(abs(b.direction[2]) < 1e-12 for b in beams):
        raise GeometryError("no beam overlaps the axial motion")
    modes = eigenfrequencies(species, B0, omega_z)
    if dt * max(modes.omega_plus, linewidth) > 0.5:
        raise StepBudgetError(f"dt = {dt:.3g} s does not resolve the cyclotron motion and linewidth")
    steps = int(round(duration / dt))
    if isinstance(seeds, int):
        streams = np.random.SeedSequence(seed).spawn(seeds)
    else:
        streams = list(seeds)
    if steps * len(streams) > max_steps:
        raise StepBudgetError(f"{steps * len(streams)} steps exceed the budget of {max_steps}")
    record_every = max(1, min(record_every, steps))
    n_rec = steps // record_every
    r1, r2 = radial_roots(species, B0, omega_z)
    kvec = np.array([b.wavevector for b in beams])
    det = np.array([b.detuning for b in beams], float)
    sat = np.array([b.saturation for b in beams], float)
    recoil = CONSTANTS.reduced_planck * float(np.linalg.norm(kvec[0])) / species.mass
    m, wz = species.mass, omega_z
    cp = 0.5 * m * (modes.omega_plus**2 - wz**2 / 2)
    cm = 0.5 * m * (modes.omega_minus**2 - wz**2 / 2)
    cz = 0.5 * m * wz**2

    records = np.zeros((len(streams), n_rec, 4))
    photons = 0
    chunk = max(record_every, chunk - chunk % record_every)
    for i, ss in enumerate(streams):
        rng = np.random.Generator(np.random.PCG64(ss))
        state = _thermal_amplitudes(rng, species, modes, r1, r2, initial_temperature)
        done, rec = 0, 0
        while done < steps:
            n = min(chunk, steps - done)
            u = rng.random((4, n))
            buf = np.zeros((n // record_every, 4))
            photons += _cool_kernel(state, r1, r2, wz, done * dt, dt, kvec, det, sat, linewidth,
                                    recoil, emission, axialization_rate, u[0], u[1], u[2], u[3],
                                    record_every, buf)
            take = min(buf.shape[0], n_rec - rec)
            records[i, rec:rec + take] = buf[:take]
            rec += take
            done += n

    t = dt * record_every * np.arange(1, n_rec + 1)
    e_ax = cz * records[:, :, 2]
    e_cy = cp * records[:, :, 0]
    e_mg = cm * records[:, :, 1]
    kB = CONSTANTS.boltzmann
    late = slice(n_rec // 2, None)
    equilibrium = {}
    for name, e in (("axial", e_ax), ("cyclotron", e_cy), ("magnetron", np.abs(e_mg))):
        per_seed = e[:, late].mean(axis=1) / kB
        err = per_seed.std(ddof=1) / math.sqrt(per_seed.size) if per_seed.size > 1 else math.nan
        equilibrium[name] = {"mean_K": float(per_seed.mean()), "stderr_K": float(err)}
    rate = records[:, :, 3].mean(axis=0) / (dt * record_every)
    return CoolingResult(t, e_ax.mean(0), e_cy.mean(0), e_mg.mean(0), rate, e_ax.mean(0) / kB,
                         equilibrium, int(photons), len(streams), steps * dt,
                         e_ax[:, late].mean(axis=1) / kB)


def simulate_from_config(config, species: ParticleSpecies, seed: int = 0, **overrides) -> CoolingResult:
    c = dict(config.section("cooling"))
    c.update(overrides)
    at = config.section("atomic")
    gamma = 2 * math.pi * at["linewidth"]
    beam = CoolingBeam.at_angle(c["detuning"] * gamma, c["saturation"], c["beam_angle"],
                                at["reference_wavelength"])
    return simulate_doppler(species, config.field.B0, 2 * math.pi * c["axial_frequency"], [beam],
                            gamma, c["duration"], c["dt"], c["seeds"], seed,
                            c["initial_temperature"], c["axialization_rate"], c["emission"])


@dataclass(frozen=True)
class AxializationResult:
    r_plus: float
    r_minus: float
    elapsed: float


def axialize(r_plus: float, r_minus: float, drive: float, duration: float,
             cyclotron_damping: float = 0.0, r_plus_eq: float = 0.0) -> AxializationResult:
    """Rate-equation model of magnetron-to-cyclotron conversion.

    Squared radii obey

        d(r_-^2)/dt = -drive (r_-^2 - r_+^2)
        d(r_+^2)/dt =  drive (r_-^2 - r_+^2) - damping (r_+^2 - r_eq^2)

    and are propagated exactly with a matrix exponential.
    """
    if drive < 0 or cyclotron_damping < 0 or duration < 0:
        raise ValueError("drive, damping and duration must be >= 0")
    if drive == 0 and cyclotron_damping == 0:
        return AxializationResult(r_plus, r_minus, duration)
    g, c = drive, cyclotron_damping
    A = np.array([[-g - c, g, c * r_plus_eq**2],
                  [g, -g, 0.0],
                  [0.0, 0.0, 0.0]])
    x = expm(A * duration) @ np.array([r_plus**2, r_minus**2, 1.0])
    return AxializationResult(math.sqrt(max(x[0], 0.0)), math.sqrt(max(x[1], 0.0)), duration)
