"""Stage-level Monte Carlo of quantum-logic spin detection.

A trial carries the true spin (0 = down, 1 = up), the motional quanta of
the spectroscopy particle (``n_p``) and of the logic ion (``n_be``), the
logic ion's internal state (``bright``) and a ``lost`` flag. Stages act as
follows; every stage may also flip the spin of the mapped information with
``flip_prob``, add Poisson-distributed heating quanta to the mode currently
holding the information, and lose the trial with ``failure_prob``:

``recool``                both modes reset to the ground state
``probe``, ``shuttle``    no action beyond the error channels
``spin_to_motion``        ``n_p += spin``
``motional_swap``         beam-splitter exchange of ``n_p`` and ``n_be`` with
                          transfer probability ``swap_contrast`` per quantum
``sideband_map``          ``bright = n_be >= 1``
``fluorescence_readout``  photons ~ Poisson(bright or dark mean), inferred spin
                          ``= photons >= threshold``

A lost trial reads out a fair coin for ``bright``. The same rules are
propagated exactly on the joint probability distribution by
:func:`analytic_fidelity`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import poisson

from .core import CONSTANTS, ParticleSpecies, TrapstackError
from .exchange import beam_splitter_fock

KINDS = ("probe", "shuttle", "spin_to_motion", "motional_swap", "sideband_map",
         "fluorescence_readout", "recool")


class SequenceError(TrapstackError, ValueError):
    pass


@dataclass(frozen=True)
class StageModel:
    name: str
    kind: str | None = None
    duration: float | None = None     # s; None: derived (swap time, readout window)
    flip_prob: float = 0.0
    heating_quanta: float = 0.0
    failure_prob: float = 0.0

    def __post_init__(self):
        if self.kind is None:
            object.__setattr__(self, "kind", self.name)
        if self.kind not in KINDS:
            raise SequenceError(f"stage {self.name!r}: unknown kind {self.kind!r}")
        for p in ("flip_prob", "failure_prob"):
            if not 0 <= getattr(self, p) <= 1:
                raise SequenceError(f"stage {self.name!r}: {p} must lie in [0, 1]")
        if self.heating_quanta < 0:
            raise SequenceError(f"stage {self.name!r}: heating_quanta must be >= 0")
        if self.duration is not None and self.duration < 0:
            raise SequenceError(f"stage {self.name!r}: duration must be >= 0")


@dataclass(frozen=True)
class ReadoutModel:
    bright_mean: float
    dark_mean: float
    threshold: int
    duration: float = 0.0

    def __post_init__(self):
        if not self.bright_mean > self.dark_mean >= 0:
            raise ValueError("need bright_mean > dark_mean >= 0")
        if self.threshold < 0:
            raise ValueError("threshold must be >= 0")

    @classmethod
    def from_config(cls, config) -> "ReadoutModel":
        r = config.section("readout")
        return cls(r["bright_mean"], r["dark_mean"], r["threshold"], r["duration"])

    def errors(self, threshold: int | None = None) -> tuple[float, float]:
        """Exact ``(eps_bright, eps_dark)``: bright read as dark and dark read as bright."""
        t = self.threshold if threshold is None else threshold
        eps_b = float(poisson.cdf(t - 1, self.bright_mean)) if t > 0 else 0.0
        eps_d = float(poisson.sf(t - 1, self.dark_mean)) if t > 0 else 1.0
        return eps_b, eps_d


def _rng(seed) -> np.random.Generator:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.Generator(np.random.PCG64(ss))


def optimal_threshold(readout: ReadoutModel, max_threshold: int | None = None) -> int:
    """Threshold minimising ``(eps_b + eps_d) / 2`` by exact Poisson sums."""
    top = max_threshold or int(readout.bright_mean + 10 * math.sqrt(readout.bright_mean) + 10)
    errs = [sum(readout.errors(t)) for t in range(top + 1)]
    return int(np.argmin(errs))


def readout_statistics(readout: ReadoutModel, trials: int, seed: int = 0,
                       max_threshold: int | None = None) -> dict:
    """Monte Carlo misclassification rates and a threshold scan on the same counts."""
    rng = _rng(seed)
    bright = rng.poisson(readout.bright_mean, trials)
    dark = rng.poisson(readout.dark_mean, trials)
    eps_b = float(np.mean(bright < readout.threshold))
    eps_d = float(np.mean(dark >= readout.threshold))
    top = max_threshold or int(readout.bright_mean + 10 * math.sqrt(readout.bright_mean) + 10)
    scan = [float(np.mean(bright < t) + np.mean(dark >= t)) / 2 for t in range(top + 1)]
    exact_b, exact_d = readout.errors()
    return {"eps_bright": eps_b, "eps_dark": eps_d, "exact_bright": exact_b, "exact_dark": exact_d,
            "sigma_bright": math.sqrt(exact_b * (1 - exact_b) / trials),
            "sigma_dark": math.sqrt(exact_d * (1 - exact_d) / trials),
            "mc_best_threshold": int(np.argmin(scan)),
            "exact_best_threshold": optimal_threshold(readout, top)}


def ground_state_size(species: ParticleSpecies, omega_z: float) -> float:
    """``z0 = sqrt(hbar / (2 m omega_z))`` (m)."""
    return math.sqrt(CONSTANTS.reduced_planck / (2 * species.mass * omega_z))


def spin_motion_sideband_rate(species: ParticleSpecies, gradient: float, omega_z: float,
                              carrier_rabi: float) -> float:
    """Spin-motion sideband Rabi rate (rad/s) in a static field gradient.

    Simplified model: the effective Lamb-Dicke factor ``mu B' z0 / (hbar omega_z)``
    multiplies the carrier Rabi rate, i.e.
    ``Omega_sb = (mu B' z0 / hbar) * (Omega_carrier / omega_z)``.
    """
    if gradient < 0 or not omega_z > 0:
        raise ValueError("need gradient >= 0 and omega_z > 0")
    z0 = ground_state_size(species, omega_z)
    return species.spin_moment() * gradient * z0 / CONSTANTS.reduced_planck * carrier_rabi / omega_z


def validate_sequence(stages) -> None:
    stages = list(stages)
    if not stages:
        raise SequenceError("empty stage list")
    reads = [i for i, s in enumerate(stages) if s.kind == "fluorescence_readout"]
    if reads != [len(stages) - 1]:
        raise SequenceError("the sequence must end with exactly one fluorescence_readout stage")


def stages_from_config(config) -> list[StageModel]:
    bodies = config.prefixed("stage")
    out = []
    for name in config.section("protocol")["stages"]:
        b = bodies.get(name, {})
        out.append(StageModel(name, b.get("kind") or name, b.get("duration"),
                              b.get("flip_prob", 0.0) or 0.0, b.get("heating_quanta", 0.0) or 0.0,
                              b.get("failure_prob", 0.0) or 0.0))
    return out


def timing_budget(stages, t_swap: float | None = None, readout: ReadoutModel | None = None) -> dict:
    """Per-stage and total durations (s).

    A ``motional_swap`` stage without its own duration takes ``t_swap``; a
    readout stage without one takes ``readout.duration``.
    """
    parts = []
    for s in stages:
        d = s.duration
        if d is None and s.kind == "motional_swap":
            d = t_swap
        if d is None and s.kind == "fluorescence_readout" and readout is not None:
            d = readout.duration
        parts.append((s.name, float(d or 0.0)))
    return {"stages": [{"name": n, "duration_s": d} for n, d in parts],
            "total_s": float(sum(d for _, d in parts))}


# --------------------------------------------------------------------------- Monte Carlo


@dataclass(frozen=True, eq=False)
class ProtocolOutcome:
    true_spin: int
    inferred_spin: int | None
    photons: int | None
    log: tuple
    total_time: float


@dataclass(frozen=True, eq=False)
class FidelityEstimate:
    fidelity: float
    stderr: float
    analytic: float
    trials: int
    true_spin: np.ndarray = field(repr=False)
    photons: np.ndarray = field(repr=False)
    inferred: np.ndarray = field(repr=False)

    def trials_csv(self) -> str:
        lines = ["trial,true_spin,photons,inferred"]
        lines += [f"{i},{int(s)},{int(p)},{int(q)}"
                  for i, (s, p, q) in enumerate(zip(self.true_spin, self.photons, self.inferred))]
        return "\n".join(lines) + "\n"


_BS_CACHE: dict = {}


def _bs(a, b, theta):
    key = (a, b, theta)
    if key not in _BS_CACHE:
        _BS_CACHE[key] = beam_splitter_fock(a, b, theta)
    return _BS_CACHE[key]


def _swap_angle(contrast):
    return math.asin(math.sqrt(contrast))


def _simulate(stages, readout, spins, rng, swap_contrast=1.0, keep_log=False):
    n = spins.size
    bit = spins.astype(np.int64).copy()      # information bit as it propagates
    n_p = np.zeros(n, np.int64)
    n_be = np.zeros(n, np.int64)
    bright = np.zeros(n, bool)
    lost = np.zeros(n, bool)
    carrier_be = False
    photons = np.zeros(n, np.int64)
    inferred = np.zeros(n, np.int64)
    theta = _swap_angle(swap_contrast)
    log = []
    for s in stages:
        u_flip, u_fail = rng.random(n), rng.random(n)
        heat = rng.poisson(s.heating_quanta, n) if s.heating_quanta > 0 else np.zeros(n, np.int64)
        k = s.kind
        if k == "recool":
            n_p[:] = 0
            n_be[:] = 0
        elif k == "spin_to_motion":
            n_p += bit
        elif k == "motional_swap":
            u_bs = rng.random(n)
            new_p, new_be = n_p.copy(), n_be.copy()
            for a, b in set(zip(n_p.tolist(), n_be.tolist())):
                sel = (n_p == a) & (n_be == b)
                dist = _bs(a, b, theta)
                cdf = np.cumsum(dist.ravel())
                idx = np.minimum(np.searchsorted(cdf, u_bs[sel] * cdf[-1], side="right"), cdf.size - 1)
                ma, mb = np.unravel_index(idx, dist.shape)
                new_p[sel], new_be[sel] = ma, mb
            n_p, n_be = new_p, new_be
            carrier_be = True
        elif k == "sideband_map":
            bright = n_be >= 1
        elif k == "fluorescence_readout":
            lost |= u_fail < s.failure_prob
            coin = rng.random(n) < 0.5
            b = np.where(lost, coin, bright)
            lam = np.where(b, readout.bright_mean, readout.dark_mean)
            photons = rng.poisson(lam)
            inferred = (photons >= readout.threshold).astype(np.int64)
        # error channels, in a fixed order
        flip = u_flip < s.flip_prob
        if k in ("probe", "shuttle", "recool"):
            bit ^= flip
        elif k == "spin_to_motion":
            n_p += np.where(flip, 1 - 2 * bit, 0)
        elif k == "sideband_map":
            bright = bright ^ flip
        if k != "fluorescence_readout":
            if carrier_be:
                n_be += heat
            else:
                n_p += heat
        lost |= u_fail < s.failure_prob
        if keep_log:
            log.append({"stage": s.name, "kind": k, "bit": bit.copy(), "n_p": n_p.copy(),
                        "n_be": n_be.copy(), "bright": bright.copy(), "lost": lost.copy()})
    return photons, inferred, log


def run_sequence(stages, readout: ReadoutModel, true_spin: int, seed: int = 0,
                 swap_contrast: float = 1.0, t_swap: float | None = None) -> ProtocolOutcome:
    """One detection sequence with a full per-stage log."""
    stages = list(stages)
    validate_sequence(stages)
    if true_spin not in (0, 1):
        raise ValueError("true_spin must be 0 (down) or 1 (up)")
    rng = _rng(seed)
    photons, inferred, log = _simulate(stages, readout, np.array([true_spin]), rng,
                                       swap_contrast, keep_log=True)
    entries = tuple({key: (v[0].item() if isinstance(v, np.ndarray) else v)
                     for key, v in e.items()} for e in log)
    total = timing_budget(stages, t_swap, readout)["total_s"]
    return ProtocolOutcome(true_spin, int(inferred[0]), int(photons[0]), entries, total)


def fidelity_estimate(stages, readout: ReadoutModel, trials: int, seed: int = 0,
                      swap_contrast: float = 1.0) -> FidelityEstimate:
    """Correct-inference rate over ``trials`` sequences with alternating true spins."""
    if trials < 100:
        raise ValueError("trials must be >= 100")
    stages = list(stages)
    validate_sequence(stages)
    rng = _rng(seed)
    spins = np.arange(trials) % 2
    photons, inferred, _ = _simulate(stages, readout, spins, rng, swap_contrast)
    correct = inferred == spins
    f = float(correct.mean())
    analytic = analytic_fidelity(stages, readout, swap_contrast)
    err = math.sqrt(max(analytic * (1 - analytic), 0.0) / trials)
    return FidelityEstimate(f, err, analytic, trials, spins, photons, inferred)


# --------------------------------------------------------------------------- exact propagation


def _poisson_kernel(mean, nmax):
    return poisson.pmf(np.arange(nmax + 1), mean) if mean > 0 else np.eye(1, nmax + 1)[0]


def _add_quanta(P, axis, pk):
    """Convolve axis ``axis`` of ``P`` with the distribution ``pk`` (truncated)."""
    out = np.zeros_like(P)
    nmax = P.shape[axis] - 1
    for q, w in enumerate(pk):
        if w == 0:
            continue
        src = [slice(None)] * P.ndim
        dst = [slice(None)] * P.ndim
        src[axis] = slice(0, nmax + 1 - q)
        dst[axis] = slice(q, nmax + 1)
        out[tuple(dst)] += w * P[tuple(src)]
    return out


def analytic_fidelity(stages, readout: ReadoutModel, swap_contrast: float = 1.0,
                      nmax: int = 24) -> float:
    """Exact success probability from the stage rules, averaged over both spins.

    The joint distribution over ``(bit, n_p, n_be, bright, lost)`` is
    propagated stage by stage, with motional occupations truncated at ``nmax``.
    """
    stages = list(stages)
    validate_sequence(stages)
    theta = _swap_angle(swap_contrast)
    eps_b, eps_d = readout.errors()
    total = 0.0
    for spin in (0, 1):
        P = np.zeros((2, nmax + 1, nmax + 1, 2, 2))
        P[spin, 0, 0, 0, 0] = 1.0
        carrier_be = False
        for s in stages:
            k = s.kind
            if k == "recool":
                P2 = P.sum(axis=(1, 2))
                P = np.zeros_like(P)
                P[:, 0, 0] = P2
            elif k == "spin_to_motion":
                P2 = np.zeros_like(P)
                P2[0] = P[0]
                P2[1, 1:] = P[1, :-1]
                P = P2
            elif k == "motional_swap":
                P2 = np.zeros_like(P)
                for a in range(nmax + 1):
                    for b in range(nmax + 1 - a):
                        w = P[:, a, b]
                        if not w.any():
                            continue
                        d = _bs(a, b, theta)
                        for ma in range(d.shape[0]):
                            for mb in range(d.shape[1]):
                                if d[ma, mb] > 0 and ma <= nmax and mb <= nmax:
                                    P2[:, ma, mb] += d[ma, mb] * w
                P = P2
                carrier_be = True
            elif k == "sideband_map":
                P2 = np.zeros_like(P)
                m = P.sum(axis=3)                        # drop previous brightness
                P2[:, :, 0, 0] = m[:, :, 0]
                P2[:, :, 1:, 1] = m[:, :, 1:]
                P = P2
            if k == "fluorescence_readout":
                break
            fp = s.flip_prob
            if fp:
                if k in ("probe", "shuttle", "recool"):
                    P = (1 - fp) * P + fp * P[::-1]
                elif k == "spin_to_motion":
                    P2 = (1 - fp) * P
                    P2[0, 1:] += fp * P[0, :-1]          # bit 0 mapped as 1
                    P2[1, :-1] += fp * P[1, 1:]          # bit 1 mapped as 0
                    P = P2
                elif k == "sideband_map":
                    P = (1 - fp) * P + fp * P[:, :, :, ::-1]
            if s.heating_quanta:
                P = _add_quanta(P, 2 if carrier_be else 1, _poisson_kernel(s.heating_quanta, nmax))
            if s.failure_prob:
                P2 = P.copy()
                P2[..., 0] = (1 - s.failure_prob) * P[..., 0]
                P2[..., 1] = P[..., 1] + s.failure_prob * P[..., 0]
                P = P2
        # readout of the final state: includes the readout stage's own failure channel
        last = stages[-1]
        p_lost = P[..., 1].sum() + last.failure_prob * P[..., 0].sum()
        p_ok = (1 - last.failure_prob) * P[..., 0]
        p_bright = p_ok[:, :, :, 1].sum() + 0.5 * p_lost
        p_dark = p_ok[:, :, :, 0].sum() + 0.5 * p_lost
        p_up = p_bright * (1 - eps_b) + p_dark * eps_d
        total += p_up if spin == 1 else 1 - p_up
    return total / 2
