"""Electrostatics of a stack of coaxial cylindrical ring electrodes.

The interior of a cylinder of radius ``a`` and length ``L`` (end planes at
``z = -L/2`` and ``z = +L/2`` grounded) is solved as a Fourier-Bessel series

    phi(rho, z) = sum_n b_n I0(k_n rho) / I0(k_n a) sin(k_n (z + L/2)),
    k_n = n pi / L,

where ``b_n`` are the sine coefficients of the wall potential. The wall
potential is piecewise linear: constant on each electrode, linearly
interpolated across the insulating gaps. Because ``1/I0(k a)`` decays
exponentially, on-axis values and all their z-derivatives converge fast and
are available in closed form.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from numba import njit
from scipy.optimize import brentq
from scipy.special import i0e, i1e

from .core import ParticleSpecies, TrapstackError


class GeometryError(TrapstackError, ValueError):
    pass


class AntiConfiningError(TrapstackError, ValueError):
    """The curvature confines the opposite charge sign."""


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Electrode:
    z_lo: float
    z_hi: float
    voltage: float = 0.0


@dataclass(frozen=True)
class ElectrodeStack:
    """Ordered ring electrodes on the wall of a grounded-end cylinder.

    ``end_treatment`` decides the wall beyond the outermost electrodes:
    ``"grounded"`` ramps to 0 V over one ``gap_width`` and stays grounded,
    ``"extend"`` continues the outermost electrode voltage up to the end plane.
    """

    inner_radius: float
    electrodes: tuple[Electrode, ...]
    gap_width: float
    domain_length: float
    end_treatment: str = "grounded"

    def __post_init__(self):
        if not self.inner_radius > 0:
            raise GeometryError("inner_radius must be > 0")
        if self.gap_width < 0:
            raise GeometryError("gap_width must be >= 0")
        if not self.electrodes:
            raise GeometryError("stack has no electrodes")
        if self.end_treatment not in ("grounded", "extend"):
            raise GeometryError(f"unknown end_treatment {self.end_treatment!r}")
        half = self.domain_length / 2
        prev_hi = -math.inf
        for i, el in enumerate(self.electrodes):
            if not el.z_hi > el.z_lo:
                raise GeometryError(f"electrode {i} has non-positive extent")
            if el.z_lo < prev_hi:
                raise GeometryError(f"electrode {i} overlaps electrode {i - 1}")
            prev_hi = el.z_hi
        if self.electrodes[0].z_lo < -half or self.electrodes[-1].z_hi > half:
            raise GeometryError("electrodes extend beyond the solution domain")

    @classmethod
    def uniform(cls, count=9, thickness=200e-6, gap=50e-6, radius=400e-6,
                margin=1e-3, voltages=None, end_treatment="grounded"):
        """Identical electrodes centred on ``z = 0`` with ``margin`` of wall at each end."""
        pitch = thickness + gap
        length = count * thickness + (count - 1) * gap
        z0 = -length / 2
        volts = np.zeros(count) if voltages is None else np.asarray(voltages, float)
        if volts.shape != (count,):
            raise GeometryError(f"expected {count} voltages, got {volts.shape}")
        els = tuple(Electrode(z0 + i * pitch, z0 + i * pitch + thickness, float(v))
                    for i, v in enumerate(volts))
        return cls(radius, els, gap, length + 2 * margin, end_treatment)

    @classmethod
    def from_config(cls, config, voltages=None):
        g = config.section("geometry")
        if voltages is None:
            voltages = config.get("voltages", "values")
        return cls.uniform(g["electrode_count"], g["electrode_thickness"], g["gap_width"],
                           g["inner_radius"], g["end_margin"], voltages, g["end_treatment"])

    @property
    def voltages(self) -> np.ndarray:
        return np.array([el.voltage for el in self.electrodes])

    def with_voltages(self, voltages) -> "ElectrodeStack":
        volts = np.asarray(voltages, float)
        if volts.shape != (len(self.electrodes),):
            raise GeometryError("voltage vector length does not match electrode count")
        els = tuple(replace(el, voltage=float(v)) for el, v in zip(self.electrodes, volts))
        return replace(self, electrodes=els)

    def wall_breakpoints(self) -> tuple[np.ndarray, np.ndarray]:
        """Knots ``(z, V)`` of the piecewise-linear wall potential, end plane to end plane."""
        half = self.domain_length / 2
        zs, vs = [], []
        first, last = self.electrodes[0], self.electrodes[-1]
        if self.end_treatment == "grounded":
            zs += [-half, max(-half, first.z_lo - self.gap_width)]
            vs += [0.0, 0.0]
        else:
            zs.append(-half)
            vs.append(first.voltage)
        for el in self.electrodes:
            zs += [el.z_lo, el.z_hi]
            vs += [el.voltage, el.voltage]
        if self.end_treatment == "grounded":
            zs += [min(half, last.z_hi + self.gap_width), half]
            vs += [0.0, 0.0]
        else:
            zs.append(half)
            vs.append(last.voltage)
        return np.array(zs), np.array(vs)

    def wall_potential(self, z) -> np.ndarray:
        zs, vs = self.wall_breakpoints()
        return np.interp(z, zs, vs)


def _sine_coefficients(zs, vs, length, k):
    """Sine-series coefficients of a piecewise-linear function on [0, L]."""
    s = zs + length / 2
    b = np.zeros_like(k)
    for s0, s1, v0, v1 in zip(s[:-1], s[1:], vs[:-1], vs[1:]):
        if s1 <= s0:
            continue
        m = (v1 - v0) / (s1 - s0)
        alpha = v0 - m * s0
        # integral of (alpha + m s) sin(k s) ds
        def prim(x):
            return -(alpha + m * x) * np.cos(k * x) / k + m * np.sin(k * x) / k**2
        b += prim(s1) - prim(s0)
    return 2.0 / length * b


def _inv_i0(x):
    return np.exp(-x) / i0e(x)


def default_mode_count(stack: ElectrodeStack, rel_tol=1e-13) -> int:
    """Smallest mode count whose on-axis tail bound is below ``rel_tol`` (min 32)."""
    a, L = stack.inner_radius, stack.domain_length
    n = np.arange(1, 200_000)
    tail = 2.0 * np.cumsum(_inv_i0(n[::-1] * math.pi * a / L))[::-1]
    ok = np.nonzero(tail < rel_tol)[0]
    return max(32, int(n[ok[0]]) if ok.size else int(n[-1]))


@dataclass(frozen=True, eq=False)
class PotentialSolution:
    stack: ElectrodeStack
    k: np.ndarray
    coefficients: np.ndarray
    truncation: float

    @property
    def mode_count(self) -> int:
        return self.k.size

    @property
    def radius(self) -> float:
        return self.stack.inner_radius

    @property
    def domain_length(self) -> float:
        return self.stack.domain_length

    def _phase(self, z):
        return np.multiply.outer(np.asarray(z, float) + self.domain_length / 2, self.k)

    def axial(self, z, derivative: int = 0) -> np.ndarray:
        """``d^j phi(0, z) / dz^j`` evaluated analytically from the series."""
        w = self.coefficients * _inv_i0(self.k * self.radius) * self.k**derivative
        return np.sin(self._phase(z) + derivative * math.pi / 2) @ w

    def potential(self, rho, z) -> np.ndarray:
        rho, z = np.broadcast_arrays(np.asarray(rho, float), np.asarray(z, float))
        if np.any(rho > self.radius):
            raise ValueError("rho outside the electrode radius")
        kr = np.multiply.outer(rho, self.k)
        ratio = i0e(kr) / i0e(self.k * self.radius) * np.exp(kr - self.k * self.radius)
        return np.sum(ratio * self.coefficients * np.sin(self._phase(z)), axis=-1)

    def field(self, rho, z) -> tuple[np.ndarray, np.ndarray]:
        """Electric field components ``(E_rho, E_z)`` in V/m."""
        rho, z = np.broadcast_arrays(np.asarray(rho, float), np.asarray(z, float))
        kr = np.multiply.outer(rho, self.k)
        scale = np.exp(kr - self.k * self.radius) / i0e(self.k * self.radius)
        ph = self._phase(z)
        bk = self.coefficients * self.k
        e_rho = -np.sum(bk * i1e(kr) * scale * np.sin(ph), axis=-1)
        e_z = -np.sum(bk * i0e(kr) * scale * np.cos(ph), axis=-1)
        return e_rho, e_z

    def wall_series(self, z) -> np.ndarray:
        """The truncated series evaluated on the wall (approximates the boundary values)."""
        return np.sin(self._phase(z)) @ self.coefficients


def solve_potential(stack: ElectrodeStack, modes: int | None = None,
                    tol: float = 1e-9) -> PotentialSolution:
    """Fourier-Bessel solution of Laplace's equation for ``stack``.

    ``modes`` defaults to :func:`default_mode_count`. A
    :class:`ConvergenceWarning` is issued if the bound on the neglected
    on-axis tail exceeds ``tol`` times the largest electrode voltage.
    """
    if modes is None:
        modes = default_mode_count(stack)
    if modes < 32:
        raise ValueError("modes must be >= 32")
    a, L = stack.inner_radius, stack.domain_length
    k = np.arange(1, modes + 1) * math.pi / L
    zs, vs = stack.wall_breakpoints()
    b = _sine_coefficients(zs, vs, L, k)
    vmax = float(np.max(np.abs(vs)))
    n_tail = np.arange(modes + 1, modes + 20_000)
    tail = 2.0 * vmax * float(np.sum(_inv_i0(n_tail * math.pi * a / L)))
    if vmax > 0 and tail > tol * vmax:
        warnings.warn(f"series tail bound {tail:.3g} V exceeds tolerance; raise the mode count",
                      ConvergenceWarning, stacklevel=2)
    return PotentialSolution(stack, k, b, tail)


# --------------------------------------------------------------------------- axial profile


@dataclass(frozen=True)
class StationaryPoint:
    z0: float
    coefficients: tuple[float, float, float, float, float]  # C0..C4 in V/m^k

    @property
    def curvature(self) -> float:
        return self.coefficients[2]

    @property
    def kind(self) -> str:
        return "min" if self.curvature > 0 else "max"

    def as_dict(self) -> dict:
        return {"z0_m": self.z0, "kind": self.kind,
                **{f"C{i}": c for i, c in enumerate(self.coefficients)}}


@dataclass(frozen=True, eq=False)
class AxialPotential:
    z: np.ndarray
    phi: np.ndarray
    stationary: tuple[StationaryPoint, ...] = field(default_factory=tuple)

    def minima(self):
        return [p for p in self.stationary if p.kind == "min"]

    def maxima(self):
        return [p for p in self.stationary if p.kind == "max"]

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.z, self.phi]), delimiter=",",
                   header="z_m,phi_V", comments="", fmt="%.17g")

    def report(self) -> str:
        return json.dumps([p.as_dict() for p in self.stationary], indent=2)


def expansion(sol: PotentialSolution, z0: float) -> tuple[float, ...]:
    """Taylor coefficients ``C0..C4`` of ``phi(0, z0 + d) = sum C_k d^k``."""
    return tuple(float(sol.axial(z0, j)) / math.factorial(j) for j in range(5))


def axial_profile(sol: PotentialSolution, z_grid=None, curvature_tol: float = 1e-9,
                  xtol: float = 1e-12) -> AxialPotential:
    """Sample ``phi(0, z)`` and locate interior stationary points.

    Sign changes of the analytic derivative on ``z_grid`` bracket each
    stationary point, which is then refined to ``xtol`` metres. Points whose
    curvature is below ``curvature_tol * Vmax / a^2`` are discarded as flat.
    """
    a, L = sol.radius, sol.domain_length
    if z_grid is None:
        z_grid = np.linspace(-L / 2, L / 2, int(round(L / (a / 50))) + 1)
    z_grid = np.asarray(z_grid, float)
    if z_grid.min() < -L / 2 - 1e-15 or z_grid.max() > L / 2 + 1e-15:
        raise ValueError("z_grid extends outside the solution domain")
    phi = sol.axial(z_grid)
    dphi = sol.axial(z_grid, 1)
    vmax = float(np.max(np.abs(sol.stack.wall_breakpoints()[1]))) or 1.0
    c2_floor = curvature_tol * vmax / a**2

    roots = []
    for i in range(len(z_grid) - 1):
        d0, d1 = dphi[i], dphi[i + 1]
        if d0 == 0.0:
            roots.append(z_grid[i])
        elif d0 * d1 < 0:
            f = lambda z: float(sol.axial(z, 1))
            lo, hi = z_grid[i], z_grid[i + 1]
            if f(lo) * f(hi) < 0:
                roots.append(brentq(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps))
            else:   # sign change at rounding level: derivative is flat here
                roots.append(lo if abs(d0) < abs(d1) else hi)
    if dphi[-1] == 0.0:
        roots.append(z_grid[-1])

    points = []
    for z0 in roots:
        if abs(z0) >= L / 2:
            continue
        coeffs = expansion(sol, z0)
        if abs(coeffs[2]) < c2_floor:
            continue
        points.append(StationaryPoint(float(z0), coeffs))
    return AxialPotential(z_grid, phi, tuple(points))


def curvature_to_frequency(c2: float, species: ParticleSpecies) -> float:
    """Axial angular frequency ``sqrt(2 q C2 / m)`` for ``phi ~ C2 d^2``."""
    if species.charge * c2 <= 0:
        raise AntiConfiningError(
            f"C2 = {c2:.4g} V/m^2 does not confine {species.name} (charge sign {np.sign(species.charge):+.0f})")
    return math.sqrt(2.0 * species.charge * c2 / species.mass)


def frequency_to_curvature(omega: float, species: ParticleSpecies) -> float:
    return species.mass * omega**2 / (2.0 * species.charge)


# --------------------------------------------------------------------------- relaxation oracle


@njit(cache=True)
def _sor(phi, fixed, omega, tol, max_iter):
    nr, nz = phi.shape
    for it in range(max_iter):
        delta = 0.0
        for colour in range(2):
            for i in range(nr):
                for j in range(1, nz - 1):
                    if (i + j) % 2 != colour or fixed[i, j]:
                        continue
                    if i == 0:
                        gs = (4.0 * phi[1, j] + phi[0, j + 1] + phi[0, j - 1]) / 6.0
                    else:
                        c = 0.5 / i
                        gs = 0.25 * ((1.0 + c) * phi[i + 1, j] + (1.0 - c) * phi[i - 1, j]
                                     + phi[i, j + 1] + phi[i, j - 1])
                    d = omega * (gs - phi[i, j])
                    phi[i, j] += d
                    if abs(d) > delta:
                        delta = abs(d)
        if delta < tol:
            return it + 1
    return max_iter


def _relax_on_grid(stack, h, guess=None, tol=1e-10, max_iter=200_000):
    a, L = stack.inner_radius, stack.domain_length
    nr, nz = int(round(a / h)), int(round(L / h))
    if abs(nr * h - a) > 1e-9 * a or abs(nz * h - L) > 1e-9 * L:
        raise GeometryError("grid spacing must divide both the radius and the domain length")
    z = np.linspace(-L / 2, L / 2, nz + 1)
    phi = np.zeros((nr + 1, nz + 1)) if guess is None else guess
    fixed = np.zeros_like(phi, dtype=np.bool_)
    phi[nr, :] = stack.wall_potential(z)
    phi[:, 0] = phi[:, -1] = 0.0
    fixed[nr, :] = fixed[:, 0] = fixed[:, -1] = True
    lam = (2.404825557695773 / a) ** 2 + (math.pi / L) ** 2
    rho_j = 1.0 - h * h * lam / 4.0
    omega = 2.0 / (1.0 + math.sqrt(max(1.0 - rho_j**2, 1e-12)))
    vmax = max(float(np.max(np.abs(phi))), 1e-300)
    # the update norm underestimates the error by ~1/(1 - spectral radius)
    sweeps = _sor(phi, fixed, omega, tol * vmax * (2.0 - omega), max_iter)
    return z, phi, sweeps


def relax_potential(stack: ElectrodeStack, h: float = 2e-6, levels: int = 3,
                    tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Independent finite-difference solution by red-black SOR on an (rho, z) grid.

    Coarse grids ``h * 2**(levels-1), ..., h`` are solved in turn, each
    prolongated as the starting guess of the next. Returns the axis samples
    ``(z, phi(0, z))``.
    """
    guess = None
    for lev in range(levels - 1, -1, -1):
        hl = h * 2**lev
        z, phi, _ = _relax_on_grid(stack, hl, guess, tol)
        if lev:
            nr, nz = phi.shape
            fine = np.zeros((2 * nr - 1, 2 * nz - 1))
            fine[::2, ::2] = phi
            fine[1::2, ::2] = 0.5 * (phi[:-1] + phi[1:])
            fine[:, 1::2] = 0.5 * (fine[:, :-1:2] + fine[:, 2::2])
            guess = fine
    return z, phi[0].copy()
