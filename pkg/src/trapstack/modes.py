"""Single-particle Penning-trap modes and a trajectory integrator.

Radial motion is written in complex form ``u = x + i y``. In an ideal
quadrupole ``phi = C2 (z^2 - rho^2 / 2)`` it is a superposition
``u = A1 exp(-i r1 t) + A2 exp(-i r2 t)`` where ``r1, r2`` are the roots of
``r^2 - wc r + wz^2 / 2 = 0`` with the signed cyclotron frequency
``wc = q B / m``. Their magnitudes are the modified-cyclotron and magnetron
frequencies.

Mode energies follow the usual convention

    E_z = m wz^2 A_z^2 / 2,   E_pm = m (w_pm^2 - wz^2 / 2) r_pm^2 / 2,

so the magnetron energy is negative (the mode sits on a potential hill).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from numba import njit

from .core import ParticleSpecies, TrapstackError
from .fieldsolver import PotentialSolution


class InstabilityError(TrapstackError, ValueError):
    pass


class ResolutionError(TrapstackError, ValueError):
    pass


class LeftDomainError(TrapstackError):
    pass


class InsufficientSpanError(TrapstackError, ValueError):
    pass


@dataclass(frozen=True)
class ModeSet:
    omega_plus: float
    omega_minus: float
    omega_z: float
    omega_c: float

    @property
    def frequencies(self) -> dict:
        """Mode frequencies in Hz."""
        tau = 2 * math.pi
        return {"f_plus": self.omega_plus / tau, "f_minus": self.omega_minus / tau,
                "f_z": self.omega_z / tau, "f_c": self.omega_c / tau}


def eigenfrequencies(species: ParticleSpecies, B0: float, omega_z: float) -> ModeSet:
    """Penning-trap eigenfrequencies for ``species`` in field ``B0`` with axial ``omega_z``."""
    if not B0 > 0:
        raise ValueError("B0 must be > 0")
    if not omega_z > 0:
        raise ValueError("omega_z must be > 0")
    wc = abs(species.charge) * B0 / species.mass
    disc = wc * wc / 4 - omega_z * omega_z / 2
    if disc < 0:
        raise InstabilityError(
            f"radial confinement lost: wc^2 = {wc * wc:.4g} < 2 wz^2 = {2 * omega_z**2:.4g}")
    root = math.sqrt(disc)
    w_plus = wc / 2 + root
    # product form avoids cancellation when wz << wc
    w_minus = omega_z * omega_z / (2 * w_plus)
    return ModeSet(w_plus, w_minus, omega_z, wc)


@dataclass(frozen=True)
class IdealQuadrupole:
    """``phi = C2 (z^2 - rho^2/2)`` parameterised by the axial frequency it gives."""

    omega_z: float

    def curvature(self, species: ParticleSpecies) -> float:
        return species.mass * self.omega_z**2 / (2 * species.charge)


@dataclass(frozen=True)
class TrajectoryState:
    position: np.ndarray
    velocity: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.position, float)
        v = np.asarray(self.velocity, float)
        if p.shape != (3,) or v.shape != (3,):
            raise ValueError("position and velocity must be 3-vectors")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(v)) and math.isfinite(self.time)):
            raise ValueError("state components must be finite")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "velocity", v)


@dataclass(frozen=True, eq=False)
class Trajectory:
    t: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    species: ParticleSpecies
    B0: float
    potential: Union[IdealQuadrupole, PotentialSolution]
    half_step_speed: np.ndarray  # |v| at half steps, sampled with the same stride

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def to_csv(self, path):
        data = np.column_stack([self.t, self.position, self.velocity])
        np.savetxt(path, data, delimiter=",", fmt="%.17g", comments="",
                   header="t_s,x_m,y_m,z_m,vx_m_s,vy_m_s,vz_m_s")


@njit(cache=True)
def _push_quadrupole(x0, v0, wz2, wc, dt, steps, stride):
    n_out = steps // stride + 1
    pos = np.empty((n_out, 3))
    vel = np.empty((n_out, 3))
    speed = np.empty(n_out)
    x, y, z = x0[0], x0[1], x0[2]
    c_half, s_half = math.cos(wc * dt / 2), math.sin(wc * dt / 2)
    c_full, s_full = math.cos(wc * dt), math.sin(wc * dt)
    h = 0.5 * dt
    # v at t = -dt/2 from the synchronised initial velocity
    ax, ay, az = 0.5 * wz2 * x, 0.5 * wz2 * y, -wz2 * z
    ux, uy = v0[0] * c_half - v0[1] * s_half, v0[0] * s_half + v0[1] * c_half
    vx, vy, vz = ux - ax * h, uy - ay * h, v0[2] - az * h
    k = 0
    for n in range(steps + 1):
        ax, ay, az = 0.5 * wz2 * x, 0.5 * wz2 * y, -wz2 * z
        mx, my, mz = vx + ax * h, vy + ay * h, vz + az * h
        if n % stride == 0:
            pos[k, 0], pos[k, 1], pos[k, 2] = x, y, z
            vel[k, 0] = mx * c_half + my * s_half
            vel[k, 1] = -mx * s_half + my * c_half
            vel[k, 2] = mz
            speed[k] = math.sqrt(vx * vx + vy * vy + vz * vz)
            k += 1
        if n == steps:
            break
        rx = mx * c_full + my * s_full
        ry = -mx * s_full + my * c_full
        vx, vy, vz = rx + ax * h, ry + ay * h, mz + az * h
        x += vx * dt
        y += vy * dt
        z += vz * dt
    return pos, vel, speed


def _push_solution(sol, qm, x0, v0, wc, dt, steps, stride):
    a, half_l = sol.radius, sol.domain_length / 2
    c_half, s_half = math.cos(wc * dt / 2), math.sin(wc * dt / 2)
    c_full, s_full = math.cos(wc * dt), math.sin(wc * dt)
    h = 0.5 * dt

    def accel(p):
        rho = math.hypot(p[0], p[1])
        if rho >= a or abs(p[2]) >= half_l:
            raise LeftDomainError(f"particle left the domain at {p}")
        e_rho, e_z = sol.field(rho, p[2])
        e_rho, e_z = float(e_rho), float(e_z)
        if rho > 0:
            return np.array([qm * e_rho * p[0] / rho, qm * e_rho * p[1] / rho, qm * e_z])
        return np.array([0.0, 0.0, qm * e_z])

    def rot(v, c, s):
        return np.array([v[0] * c + v[1] * s, -v[0] * s + v[1] * c, v[2]])

    n_out = steps // stride + 1
    pos = np.empty((n_out, 3))
    vel = np.empty((n_out, 3))
    speed = np.empty(n_out)
    x = np.array(x0, float)
    acc = accel(x)
    v = rot(np.array(v0, float), c_half, -s_half) - acc * h
    k = 0
    for n in range(steps + 1):
        acc = accel(x)
        m = v + acc * h
        if n % stride == 0:
            pos[k] = x
            vel[k] = rot(m, c_half, s_half)
            speed[k] = math.sqrt(v @ v)
            k += 1
        if n == steps:
            break
        v = rot(m, c_full, s_full) + acc * h
        x = x + v * dt
    return pos, vel, speed


def integrate_trajectory(species: ParticleSpecies, B0: float,
                         potential: Union[IdealQuadrupole, PotentialSolution],
                         initial: TrajectoryState, dt: float, steps: int,
                         stride: int = 1) -> Trajectory:
    """Integrate the Lorentz-force motion with an exact magnetic rotation per step.

    Kick-rotate-kick leapfrog: half electric kick, velocity rotation by the
    exact cyclotron angle ``q B dt / m`` about z, half kick, drift. Returned
    velocities are synchronised with the positions. ``stride`` keeps every
    ``stride``-th step.
    """
    wc = species.charge * B0 / species.mass
    if isinstance(potential, IdealQuadrupole):
        w_fast = max(eigenfrequencies(species, B0, potential.omega_z).omega_plus, potential.omega_z)
    else:
        c2 = float(potential.axial(initial.position[2], 2)) / 2
        wz2 = max(2 * species.charge * c2 / species.mass, 0.0)
        w_fast = max(abs(wc), math.sqrt(wz2))
    if dt * w_fast >= 0.2:
        raise ResolutionError(f"dt * omega_max = {dt * w_fast:.3g} must be < 0.2")
    if steps < 1 or stride < 1:
        raise ValueError("steps and stride must be >= 1")

    if isinstance(potential, IdealQuadrupole):
        pos, vel, speed = _push_quadrupole(initial.position, initial.velocity,
                                           potential.omega_z**2, wc, dt, steps, stride)
    else:
        pos, vel, speed = _push_solution(potential, species.charge / species.mass,
                                         initial.position, initial.velocity, wc, dt, steps, stride)
    if not np.all(np.isfinite(pos)):
        raise LeftDomainError("trajectory diverged")
    t = initial.time + dt * stride * np.arange(pos.shape[0])
    return Trajectory(t, pos, vel, species, B0, potential, speed)


# --------------------------------------------------------------------------- spectra


def spectrum(signal, dt: float, pad: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Hann-windowed one-sided amplitude spectrum ``(f_Hz, amplitude)``."""
    x = np.asarray(signal, float)
    x = x - x.mean()
    w = np.hanning(x.size)
    n = pad * x.size
    amp = np.abs(np.fft.rfft(x * w, n)) * 2 / w.sum()
    return np.fft.rfftfreq(n, dt), amp


def spectral_peaks(signal, dt: float, count: int = 1, pad: int = 4, min_rel: float = 1e-4):
    """Frequencies (Hz) of the ``count`` strongest local maxima, refined by
    parabolic interpolation of the log amplitude. Sorted by frequency."""
    f, amp = spectrum(signal, dt, pad)
    a = amp[1:-1]
    local = np.nonzero((a > amp[:-2]) & (a >= amp[2:]) & (a > min_rel * amp.max()))[0] + 1
    best = local[np.argsort(amp[local])[::-1][:count]]
    df = f[1] - f[0]
    out = []
    for i in best:
        la, lb, lc = np.log(amp[i - 1:i + 2])
        denom = la - 2 * lb + lc
        shift = 0.5 * (la - lc) / denom if denom != 0 else 0.0
        out.append(f[i] + shift * df)
    return sorted(out)


def spectrum_csv(signal, dt: float, path):
    f, amp = spectrum(signal, dt)
    np.savetxt(path, np.column_stack([f, amp]), delimiter=",", fmt="%.17g", comments="",
               header="f_Hz,amplitude")


# --------------------------------------------------------------------------- mode projection


def radial_roots(species: ParticleSpecies, B0: float, omega_z: float) -> tuple[float, float]:
    """Signed roots ``(r_cyclotron, r_magnetron)`` of ``r^2 - wc r + wz^2/2 = 0``."""
    ms = eigenfrequencies(species, B0, omega_z)
    sign = 1.0 if species.charge > 0 else -1.0
    return sign * ms.omega_plus, sign * ms.omega_minus


def project_modes(position, velocity, species: ParticleSpecies, B0: float, omega_z: float):
    """Complex mode amplitudes ``(A_plus, A_minus, alpha_z)`` at each sample.

    ``alpha_z = z + i v_z / wz``; ``|A_pm|`` are the cyclotron and magnetron radii.
    """
    p = np.atleast_2d(position)
    v = np.atleast_2d(velocity)
    r1, r2 = radial_roots(species, B0, omega_z)
    u = p[:, 0] + 1j * p[:, 1]
    w = v[:, 0] + 1j * v[:, 1]
    a_plus = 1j * (w + 1j * r2 * u) / (r1 - r2)
    a_minus = 1j * (w + 1j * r1 * u) / (r2 - r1)
    alpha = p[:, 2] + 1j * v[:, 2] / omega_z
    return a_plus, a_minus, alpha


def amplitude_energies(species: ParticleSpecies, modes: ModeSet, r_plus, r_minus, a_z):
    m, wz2 = species.mass, modes.omega_z**2
    e_plus = 0.5 * m * (modes.omega_plus**2 - wz2 / 2) * np.abs(r_plus) ** 2
    e_minus = 0.5 * m * (modes.omega_minus**2 - wz2 / 2) * np.abs(r_minus) ** 2
    e_z = 0.5 * m * wz2 * np.abs(a_z) ** 2
    return e_plus, e_minus, e_z


@dataclass(frozen=True)
class ModeEnergies:
    r_plus: float
    r_minus: float
    axial_amplitude: float
    E_plus: float
    E_minus: float  # negative: magnetron motion lowers the energy
    E_z: float

    @property
    def total(self) -> float:
        return self.E_plus + self.E_minus + self.E_z


def mode_energies(traj: Trajectory, omega_z: float | None = None) -> ModeEnergies:
    """Project a trajectory onto the three analytic eigenmodes.

    Amplitudes are averaged over the samples, which must span at least ten
    periods of the slowest mode.
    """
    if omega_z is None:
        if not isinstance(traj.potential, IdealQuadrupole):
            raise ValueError("omega_z is required for a solved potential")
        omega_z = traj.potential.omega_z
    ms = eigenfrequencies(traj.species, traj.B0, omega_z)
    span = traj.t[-1] - traj.t[0]
    slowest = min(ms.omega_minus, ms.omega_z) / (2 * math.pi)
    if span * slowest < 10:
        raise InsufficientSpanError(
            f"trajectory spans {span * slowest:.3g} slowest-mode periods; need >= 10")
    a_plus, a_minus, alpha = project_modes(traj.position, traj.velocity, traj.species,
                                           traj.B0, omega_z)
    r_plus = float(np.mean(np.abs(a_plus)))
    r_minus = float(np.mean(np.abs(a_minus)))
    a_z = float(np.mean(np.abs(alpha)))
    e_plus, e_minus, e_z = amplitude_energies(traj.species, ms, r_plus, r_minus, a_z)
    return ModeEnergies(r_plus, r_minus, a_z, float(e_plus), float(e_minus), float(e_z))


def mechanical_energy(species: ParticleSpecies, omega_z: float, position, velocity):
    """Kinetic plus quadrupole potential energy, ``m v^2/2 + q phi``."""
    p = np.atleast_2d(position)
    v = np.atleast_2d(velocity)
    m, wz2 = species.mass, omega_z**2
    rho2 = p[:, 0] ** 2 + p[:, 1] ** 2
    return 0.5 * m * np.sum(v * v, axis=1) + 0.5 * m * wz2 * (p[:, 2] ** 2 - rho2 / 2)
