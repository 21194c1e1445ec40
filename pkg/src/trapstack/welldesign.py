"""Electrode voltages for prescribed single- and multi-well axial potentials.

The map from electrode voltages to the on-axis Taylor coefficients at fixed
positions is exactly linear, so each design is a linear solve:

* hard rows: ``C1(z_i) = 0`` and ``C2(z_i) = m_i w_i^2 / (2 q_i)``;
* soft rows: ``C3(z_i)``, ``C4(z_i)`` pulled towards zero with user weights;
* ties broken by the minimum-norm voltage vector.

When the unconstrained optimum violates the voltage bounds a bounded
least-squares solve is used instead. An optional outer golden-section search
shifts the whole well pattern along the axis to minimise the objective.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import lsq_linear, minimize_scalar

from .core import ParticleSpecies, TrapstackError, species_lookup
from .fieldsolver import (
    ElectrodeStack,
    PotentialSolution,
    axial_profile,
    curvature_to_frequency,
    default_mode_count,
    frequency_to_curvature,
    solve_potential,
)


class InfeasibleDesignError(TrapstackError):
    pass


class DegenerateGeometryError(TrapstackError, ValueError):
    pass


class InconsistentReportError(TrapstackError):
    pass


@dataclass(frozen=True)
class Well:
    position: float
    species: ParticleSpecies
    omega: float

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("target omega must be > 0")

    @property
    def target_curvature(self) -> float:
        return frequency_to_curvature(self.omega, self.species)


@dataclass(frozen=True)
class WellSpec:
    wells: tuple[Well, ...]
    c3_weight: float = 0.0
    c4_weight: float = 0.0
    float_center: bool = False

    def __post_init__(self):
        pos = [w.position for w in self.wells]
        if len(set(pos)) != len(pos):
            raise ValueError("well positions must be distinct")

    @classmethod
    def from_config(cls, config) -> "WellSpec":
        wells = tuple(
            Well(body["position"], species_lookup(body["species"], config),
                 2 * math.pi * body["frequency"])
            for body in config.prefixed("well").values())
        d = config.section("design")
        return cls(wells, d["c3_weight"], d["c4_weight"], d["float_center"])


@dataclass(frozen=True, eq=False)
class WellSolution:
    stack: ElectrodeStack
    spec: WellSpec
    voltages: np.ndarray
    positions: np.ndarray
    omegas: np.ndarray
    c1_residual: np.ndarray
    c3: np.ndarray
    c4: np.ndarray
    curvatures: np.ndarray
    objective: float
    offset: float = 0.0

    @property
    def solved_stack(self) -> ElectrodeStack:
        return self.stack.with_voltages(self.voltages)

    def voltages_csv(self) -> str:
        lines = ["electrode,voltage_V"]
        lines += [f"{i},{v!r}" for i, v in enumerate(self.voltages)]
        return "\n".join(lines) + "\n"


class StackBasis:
    """Per-electrode unit-voltage series, combined linearly for any voltage vector."""

    def __init__(self, stack: ElectrodeStack, modes: int | None = None):
        self.stack = stack
        self.modes = modes or default_mode_count(stack)
        n = len(stack.electrodes)
        sols = [solve_potential(stack.with_voltages(np.eye(n)[j]), self.modes) for j in range(n)]
        self.k = sols[0].k
        self.matrix = np.column_stack([s.coefficients for s in sols])
        self._unit = sols

    def solution(self, voltages) -> PotentialSolution:
        v = np.asarray(voltages, float)
        tail = max(s.truncation for s in self._unit) * float(np.sum(np.abs(v)))
        return PotentialSolution(self.stack.with_voltages(v), self.k, self.matrix @ v, tail)

    def taylor_rows(self, z: float) -> np.ndarray:
        """Rows ``C_k(z)`` for k = 0..4, one column per electrode."""
        return np.array([[float(s.axial(z, j)) / math.factorial(j) for s in self._unit]
                         for j in range(5)])


def _rows(basis, spec, offset):
    a = basis.stack.inner_radius
    hard, target, soft = [], [], []
    for w in spec.wells:
        t = basis.taylor_rows(w.position + offset)
        c2 = w.target_curvature
        scale = abs(c2)
        hard += [t[1] / (scale * a), t[2] / scale]
        target += [0.0, c2 / scale]
        if spec.c3_weight:
            soft.append(spec.c3_weight * t[3] * a / scale)
        if spec.c4_weight:
            soft.append(spec.c4_weight * t[4] * a * a / scale)
    return np.array(hard), np.array(target), np.array(soft).reshape(-1, hard[0].size)


def _solve_linear(hard, target, soft, bound, ridge=1e-12):
    vp = np.linalg.pinv(hard) @ target
    if soft.size:
        ns = null_space(hard)
        if ns.size:
            lhs = np.vstack([soft @ ns, math.sqrt(ridge) * ns])
            rhs = -np.concatenate([soft @ vp, math.sqrt(ridge) * vp])
            y = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
            vp = vp + ns @ y
    if np.max(np.abs(vp)) <= bound:
        return vp
    w_hard = 1e4
    lhs = np.vstack([w_hard * hard, soft, math.sqrt(ridge) * np.eye(hard.shape[1])])
    rhs = np.concatenate([w_hard * target, np.zeros(soft.shape[0] + hard.shape[1])])
    res = lsq_linear(lhs, rhs, bounds=(-bound, bound), method="bvls", tol=1e-14)
    return res.x


def _objective(hard, target, soft, v):
    return float(np.sum((hard @ v - target) ** 2) + (np.sum((soft @ v) ** 2) if soft.size else 0.0))


def _locate(profile, well, tol):
    """Stationary point that confines ``well.species`` nearest the requested position."""
    q = well.species.charge
    cands = [p for p in profile.stationary if q * p.curvature > 0]
    if not cands:
        return None
    best = min(cands, key=lambda p: abs(p.z0 - well.position))
    return best if abs(best.z0 - well.position) <= tol else None


def design_wells(stack: ElectrodeStack, spec: WellSpec, bound: float = 50.0,
                 modes: int | None = None, residual_tol: float = 1e-6,
                 basis: StackBasis | None = None) -> WellSolution:
    """Find electrode voltages realising ``spec`` within ``+-bound`` volts."""
    n_el = len(stack.electrodes)
    if 2 * len(spec.wells) > n_el:
        raise DegenerateGeometryError(
            f"{2 * len(spec.wells)} constraints exceed {n_el} voltage degrees of freedom")
    lo, hi = stack.electrodes[0].z_lo, stack.electrodes[-1].z_hi
    for w in spec.wells:
        if not lo < w.position < hi:
            raise DegenerateGeometryError(f"well at {w.position:.6g} m lies outside the stack")
    if not (math.isfinite(bound) and bound > 0):
        raise ValueError("voltage bound must be finite and positive")
    basis = basis or StackBasis(stack, modes)

    def solve_at(offset):
        hard, target, soft = _rows(basis, spec, offset)
        v = _solve_linear(hard, target, soft, bound)
        return v, _objective(hard, target, soft, v) + 1e-12 * float(v @ v) / bound**2

    offset = 0.0
    if spec.float_center:
        pitch = stack.electrodes[1].z_lo - stack.electrodes[0].z_lo if n_el > 1 else stack.inner_radius
        span = min(pitch / 2, min(w.position - lo for w in spec.wells),
                   min(hi - w.position for w in spec.wells))
        res = minimize_scalar(lambda d: solve_at(d)[1], bounds=(-span, span), method="bounded",
                              options={"xatol": 1e-9})
        offset = float(res.x)
    v, _ = solve_at(offset)

    hard, target, soft = _rows(basis, spec, offset)
    hard_res = hard @ v - target
    if np.max(np.abs(hard_res)) > residual_tol:
        raise InfeasibleDesignError(
            f"best design within +-{bound:g} V leaves relative residual {np.max(np.abs(hard_res)):.3g}")

    sol = basis.solution(v)
    profile = axial_profile(sol)
    positions, omegas, c1, c3, c4, c2 = [], [], [], [], [], []
    for w in spec.wells:
        target_z = w.position + offset
        p = _locate(profile, Well(target_z, w.species, w.omega), tol=stack.inner_radius / 10)
        if p is None:
            raise InfeasibleDesignError(f"no confining well for {w.species.name} near {target_z:.6g} m")
        positions.append(p.z0)
        omegas.append(curvature_to_frequency(p.curvature, w.species))
        c1.append(float(sol.axial(target_z, 1)))
        c2.append(p.coefficients[2])
        c3.append(p.coefficients[3])
        c4.append(p.coefficients[4])
    return WellSolution(stack, spec, v, np.array(positions), np.array(omegas), np.array(c1),
                        np.array(c3), np.array(c4), np.array(c2), _objective(hard, target, soft, v),
                        offset)


def _barrier(profile, z0, q, lo, hi):
    """Depth (eV) of the well at ``z0`` for charge ``q``: lowest barrier on either side."""
    z, u = profile.z, q * profile.phi
    u0 = q * float(np.interp(z0, z, profile.phi))
    left = u[(z >= lo) & (z <= z0)]
    right = u[(z >= z0) & (z <= hi)]
    sides = [float(s.max()) for s in (left, right) if s.size]
    return (min(sides) - u0) / abs(q) if sides else 0.0


def well_report(solution: WellSolution, sol: PotentialSolution | None = None,
                pos_tol: float = 1e-9, freq_rtol: float = 1e-6) -> dict:
    """Recompute the wells from the voltages alone and summarise them.

    Raises :class:`InconsistentReportError` if the recomputed minima or
    frequencies disagree with the solution record.
    """
    if sol is None:
        sol = solve_potential(solution.solved_stack)
    L = sol.domain_length
    profile = axial_profile(sol, np.linspace(-L / 2, L / 2, 20001))
    wells = []
    zs = []
    for i, w in enumerate(solution.spec.wells):
        p = _locate(profile, Well(solution.positions[i], w.species, w.omega), tol=sol.radius / 10)
        if p is None:
            raise InconsistentReportError(f"well {i} ({w.species.name}) not found on recomputation")
        omega = curvature_to_frequency(p.curvature, w.species)
        if abs(p.z0 - solution.positions[i]) > pos_tol or \
                abs(omega / solution.omegas[i] - 1) > freq_rtol:
            raise InconsistentReportError(f"well {i} moved on recomputation")
        zs.append(p.z0)
        wells.append({"species": w.species.name, "z0_m": p.z0, "omega_rad_s": omega,
                      "f_Hz": omega / (2 * math.pi), "C2_V_m2": p.coefficients[2],
                      "C3_V_m3": p.coefficients[3], "C4_V_m4": p.coefficients[4],
                      "kind": p.kind})
    order = np.argsort(zs)
    bounds = [-L / 2] + [zs[j] for j in order] + [L / 2]
    for rank, j in enumerate(order):
        q = solution.spec.wells[j].species.charge
        wells[j]["depth_eV"] = _barrier(profile, zs[j], q, bounds[rank], bounds[rank + 2])
    sorted_z = sorted(zs)
    seps = [b - a for a, b in zip(sorted_z[:-1], sorted_z[1:])]
    return {"voltages_V": [float(v) for v in solution.voltages], "wells": wells,
            "separations_m": seps, "separation_m": seps[0] if len(seps) == 1 else None,
            "objective": solution.objective}


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2)
