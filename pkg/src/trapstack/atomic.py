"""Hyperfine-Zeeman structure of a fine-structure level in a magnetic field.

Energies are in Hz throughout. For a level with electronic angular momentum
``J`` and nuclear spin ``I`` the Hamiltonian in the product basis
``|m_J, m_I>`` is

    H/h = A I.J + B_Q Q(I, J) + (g_J mu_B m_J - g_I mu_N m_I) B / h

with ``g_I`` the nuclear g-factor referenced to the nuclear magneton
(``mu_I = g_I I mu_N``). ``H`` conserves ``m_F = m_J + m_I`` and is
diagonalised block by block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import CONSTANTS, ParticleSpecies, TrapstackError


class UnknownStateError(TrapstackError, KeyError):
    pass


@dataclass(frozen=True)
class FineLevel:
    label: str
    J: float
    g_J: float
    hyperfine_A: float = 0.0     # Hz
    I: float = 1.5
    g_I: float = 0.0
    hyperfine_B: float = 0.0     # Hz, electric quadrupole constant

    def __post_init__(self):
        for name in ("J", "I"):
            v = getattr(self, name)
            if v < 0 or abs(2 * v - round(2 * v)) > 1e-12:
                raise ValueError(f"{name} must be a non-negative half-integer")
        if self.J == 0:
            raise ValueError("J must be > 0")

    @property
    def dimension(self) -> int:
        return int(round((2 * self.J + 1) * (2 * self.I + 1)))

    @classmethod
    def from_config(cls, config, label: str) -> "FineLevel":
        levels = config.prefixed("level")
        if label not in levels:
            raise UnknownStateError(f"level {label!r} not configured (have {', '.join(levels)})")
        b = levels[label]
        return cls(label, b["J"], b["g_J"], b["hyperfine_A"], b["I"], b["g_I"], b["hyperfine_B"])


@dataclass(frozen=True)
class ZeemanState:
    level: str
    energy: float               # Hz relative to the level centroid
    m_J: float
    m_I: float
    basis: tuple                # ((m_J, m_I), ...) for the weights below
    weights: tuple              # |<m_J, m_I | state>|^2, summing to 1

    @property
    def m_F(self) -> float:
        return self.m_J + self.m_I

    @property
    def purity(self) -> float:
        return high_field_character(self)


def _projections(j):
    n = int(round(2 * j + 1))
    return j - np.arange(n)


def _ladder(j):
    """Raising operator ``J+`` in the basis ``m = j, j-1, ..., -j``."""
    m = _projections(j)
    n = m.size
    out = np.zeros((n, n))
    for i in range(1, n):
        out[i - 1, i] = math.sqrt(j * (j + 1) - m[i] * (m[i] + 1))
    return out


def hamiltonian(level: FineLevel, B: float, quadrupole: bool = False):
    """Full Hamiltonian (Hz) and the product-basis labels ``(m_J, m_I)``."""
    J, I = level.J, level.I
    mj, mi = _projections(J), _projections(I)
    jz, iz = np.diag(mj), np.diag(mi)
    jp, ip = _ladder(J), _ladder(I)
    ej, ei = np.eye(mj.size), np.eye(mi.size)
    IJ = np.kron(jz, iz) + 0.5 * (np.kron(jp, ip.T) + np.kron(jp.T, ip))
    c = CONSTANTS
    zj = level.g_J * c.bohr_magneton * B / c.planck
    zi = level.g_I * c.nuclear_magneton * B / c.planck
    H = level.hyperfine_A * IJ + zj * np.kron(jz, ei) - zi * np.kron(ej, iz)
    if quadrupole and level.hyperfine_B and J >= 1 and I >= 1:
        norm = 2 * I * (2 * I - 1) * J * (2 * J - 1)
        eye = np.eye(H.shape[0])
        H = H + level.hyperfine_B * (3 * IJ @ IJ + 1.5 * IJ - I * (I + 1) * J * (J + 1) * eye) / norm
    labels = [(a, b) for a in mj for b in mi]
    return H, labels


def level_energies(level: FineLevel, B: float, quadrupole: bool = False) -> list[ZeemanState]:
    """Eigenstates of ``level`` at field ``B`` (T), sorted by energy.

    Each state is labelled by the product state it overlaps most, with the
    assignment made one-to-one inside each ``m_F`` block.
    """
    if B < 0:
        raise ValueError("B must be >= 0")
    H, labels = hamiltonian(level, B, quadrupole)
    mf = np.array([a + b for a, b in labels])
    states = []
    for f in np.unique(mf):
        idx = np.nonzero(np.isclose(mf, f))[0]
        vals, vecs = np.linalg.eigh(H[np.ix_(idx, idx)])
        w = np.abs(vecs) ** 2                      # w[basis, eigen]
        rows, cols = linear_sum_assignment(-w)
        for b, e in zip(rows, cols):
            weights = w[:, e] / w[:, e].sum()
            states.append(ZeemanState(level.label, float(vals[e]), float(labels[idx[b]][0]),
                                      float(labels[idx[b]][1]),
                                      tuple(labels[i] for i in idx), tuple(float(x) for x in weights)))
    states.sort(key=lambda s: s.energy)
    return states


def high_field_character(state: ZeemanState) -> float:
    """Weight of the labelling product state in ``state``."""
    return state.weights[state.basis.index((state.m_J, state.m_I))]


def find_state(states, m_J: float, m_I: float) -> ZeemanState:
    for s in states:
        if abs(s.m_J - m_J) < 1e-9 and abs(s.m_I - m_I) < 1e-9:
            return s
    raise UnknownStateError(f"no state with m_J={m_J:+g}, m_I={m_I:+g}")


def transition_frequency(lower: ZeemanState, upper: ZeemanState, reference: float) -> float:
    """Absolute frequency (Hz) of ``lower -> upper`` given the centroid-to-centroid
    ``reference`` frequency."""
    return reference + upper.energy - lower.energy


def zero_field_energy(level: FineLevel, F: float) -> float:
    """Closed-form hyperfine energy ``(A/2)[F(F+1) - I(I+1) - J(J+1)]`` (Hz)."""
    I, J = level.I, level.J
    if not abs(I - J) - 1e-9 <= F <= I + J + 1e-9:
        raise ValueError("F outside |I-J| .. I+J")
    return 0.5 * level.hyperfine_A * (F * (F + 1) - I * (I + 1) - J * (J + 1))


def clebsch_gordan(j1, m1, j2, m2, J, M) -> float:
    """``<j1 m1; j2 m2 | J M>`` from the Racah formula, evaluated in exact rationals."""
    if abs(m1 + m2 - M) > 1e-9 or not abs(j1 - j2) <= J <= j1 + j2:
        return 0.0
    if max(abs(m1) - j1, abs(m2) - j2, abs(M) - J) > 1e-9:
        return 0.0
    j1, m1, j2, m2, J, M = (Fraction(x).limit_denominator(2) for x in (j1, m1, j2, m2, J, M))
    f = math.factorial

    def fi(x):
        return f(int(x))

    pre = Fraction((2 * J + 1) * fi(J + j1 - j2) * fi(J - j1 + j2) * fi(j1 + j2 - J), fi(j1 + j2 + J + 1))
    pre *= fi(J + M) * fi(J - M) * fi(j1 - m1) * fi(j1 + m1) * fi(j2 - m2) * fi(j2 + m2)
    total = Fraction(0)
    for k in range(0, int(j1 + j2 - J) + 1):
        args = [j1 + j2 - J - k, j1 - m1 - k, j2 + m2 - k, J - j2 + m1 + k, J - j1 - m2 + k]
        if min(args) < 0:
            continue
        den = f(k)
        for a in args:
            den *= fi(a)
        total += Fraction((-1) ** k, den)
    return float(total) * math.sqrt(float(pre))


def cycling_and_repump(lower: FineLevel, upper: FineLevel, B: float, reference: float,
                       quadrupole: bool = False) -> dict:
    """Cycling ``|S,+1/2,+3/2> -> |P,+3/2,+3/2>`` and repump
    ``|S,-1/2,+3/2> -> |P,+1/2,+3/2>`` frequencies (Hz)."""
    s = level_energies(lower, B, quadrupole)
    p = level_energies(upper, B, quadrupole)
    mi = lower.I
    cyc = transition_frequency(find_state(s, 0.5, mi), find_state(p, 1.5, mi), reference)
    rep = transition_frequency(find_state(s, -0.5, mi), find_state(p, 0.5, mi), reference)
    return {"cycling_Hz": cyc, "repump_Hz": rep, "difference_Hz": cyc - rep}


def ground_splitting(level: FineLevel, B: float, m_I: float | None = None) -> float:
    """``E(+1/2, m_I) - E(-1/2, m_I)`` (Hz); ``m_I`` defaults to the stretched value."""
    states = level_energies(level, B)
    m_I = level.I if m_I is None else m_I
    return find_state(states, 0.5, m_I).energy - find_state(states, -0.5, m_I).energy


def spin_flip_frequency(species: ParticleSpecies, B: float) -> float:
    """Spin-flip (Larmor) frequency ``2 |mu| B / h`` of a spin-1/2 particle (Hz)."""
    return 2 * species.spin_moment() * B / CONSTANTS.planck


def levels_csv(states) -> str:
    lines = ["index,energy_Hz,mJ,mI,purity"]
    lines += [f"{i},{s.energy!r},{s.m_J:g},{s.m_I:g},{s.purity!r}" for i, s in enumerate(states)]
    return "\n".join(lines) + "\n"


def level_fan_csv(level: FineLevel, fields, quadrupole: bool = False) -> str:
    """Energies of every ``(m_J, m_I)`` state against field, one row per field value."""
    fields = np.atleast_1d(fields)
    rows = []
    labels = None
    for B in fields:
        states = sorted(level_energies(level, float(B), quadrupole), key=lambda s: (-s.m_J, -s.m_I))
        if labels is None:
            labels = [f"E_mJ{s.m_J:+g}_mI{s.m_I:+g}_Hz" for s in states]
        rows.append(f"{float(B)!r}," + ",".join(repr(s.energy) for s in states))
    return "B_T," + ",".join(labels) + "\n" + "\n".join(rows) + "\n"
