"""Command-line driver: ``trapstack <subcommand> [options]``.

Every run writes its machine-readable outputs (CSV with a units header row,
JSON summaries) plus ``manifest.json`` into ``--out`` and prints a short
human summary. ``trapstack reproduce <manifest>`` re-runs a recorded
invocation and checks that every output is byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .core import TrapstackError, species_lookup
from .config import ConfigError, load_config

SUBCOMMANDS = ("solve-potential", "design-well", "modes", "exchange", "levels", "laser-chain",
               "comb", "cool", "protocol")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _rows_csv(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(repr(float(x)) if not isinstance(x, str) else x for x in r) for r in rows]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------- handlers
# Each handler maps (config, params, seed) to ({filename: text}, summary lines, seed tree).


def _design(config, bound=None):
    from .fieldsolver import ElectrodeStack
    from .welldesign import WellSpec, design_wells
    stack = ElectrodeStack.from_config(config, voltages=np.zeros(config.section("geometry")["electrode_count"]))
    spec = WellSpec.from_config(config)
    if not spec.wells:
        raise ConfigError("no [well.*] sections configured", "well")
    bound = bound if bound is not None else config.section("design")["voltage_bound"]
    return design_wells(stack, spec, bound=bound)


def run_solve_potential(config, p, seed):
    from .fieldsolver import ElectrodeStack, axial_profile, solve_potential
    volts = p.get("voltages")
    if volts is not None:
        volts = [float(v) for v in volts.split(",")]
    elif config.get("voltages", "values") is not None:
        volts = list(config.get("voltages", "values"))
    if volts is None:
        volts = list(_design(config).voltages)
        source = "designed from [well.*]"
    else:
        source = "given"
    stack = ElectrodeStack.from_config(config, voltages=volts)
    sol = solve_potential(stack, p.get("modes"))
    L = sol.domain_length
    prof = axial_profile(sol, np.linspace(-L / 2, L / 2, p.get("points") or 4001))
    csv = _rows_csv(["z_m", "phi_V"], zip(prof.z, prof.phi))
    summary = {"voltages_V": [float(v) for v in volts], "voltage_source": source,
               "modes": sol.mode_count, "truncation_bound_V": sol.truncation,
               "stationary_points": [s.as_dict() for s in prof.stationary]}
    lines = [f"{len(prof.minima())} minima, {len(prof.maxima())} maxima on axis"]
    lines += [f"  {s.kind} at z = {s.z0 * 1e6:+.3f} um, C2 = {s.curvature:.6g} V/m^2" for s in prof.stationary]
    return {"axial_potential.csv": csv, "stationary.json": _json(summary)}, lines, None


def run_design_well(config, p, seed):
    from .welldesign import well_report
    sol = _design(config, p.get("bound"))
    rep = well_report(sol)
    lines = ["voltages (V): " + ", ".join(f"{v:+.4f}" for v in sol.voltages)]
    for w in rep["wells"]:
        lines.append(f"  {w['species']}: z0 = {w['z0_m'] * 1e6:+.4f} um, f_z = {w['f_Hz'] / 1e6:.6f} MHz, "
                     f"depth = {w['depth_eV']:.4g} eV")
    if rep["separation_m"] is not None:
        lines.append(f"separation = {rep['separation_m'] * 1e6:.4f} um")
    return {"voltages.csv": sol.voltages_csv(), "report.json": _json(rep)}, lines, None


def run_modes(config, p, seed):
    from .modes import (IdealQuadrupole, TrajectoryState, eigenfrequencies, integrate_trajectory,
                        spectral_peaks)
    m = config.section("modes")
    sp = species_lookup(p.get("species") or m["species"], config)
    B = p.get("B") or config.field.B0
    fz = p.get("fz") or m["axial_frequency"]
    ms = eigenfrequencies(sp, B, 2 * math.pi * fz)
    f = ms.frequencies
    out = {"species": sp.name, "B_T": B, **{k + "_Hz": v for k, v in f.items()},
           "invariance_residual": (ms.omega_c**2 - ms.omega_plus**2 - ms.omega_minus**2
                                   - ms.omega_z**2) / ms.omega_c**2}
    files = {}
    if p.get("simulate"):
        dt = 0.03 / ms.omega_plus
        steps = int(p.get("periods", 200) * 2 * math.pi / ms.omega_minus / dt)
        init = TrajectoryState([1e-6, 0.0, 1e-6], [0.0, 0.0, 0.0])
        tr = integrate_trajectory(sp, B, IdealQuadrupole(ms.omega_z), init, dt, steps)
        fr = spectral_peaks(tr.position[:, 0], dt, 2)
        fzn = spectral_peaks(tr.position[:, 2], dt, 1)[0]
        out["numeric"] = {"f_minus_Hz": fr[0], "f_plus_Hz": fr[1], "f_z_Hz": fzn, "dt_s": dt,
                          "steps": steps}
        stride = max(1, steps // 20000)
        files["trajectory.csv"] = _rows_csv(
            ["t_s", "x_m", "y_m", "z_m", "vx_m_s", "vy_m_s", "vz_m_s"],
            np.column_stack([tr.t, tr.position, tr.velocity])[::stride])
    files["modes.json"] = _json(out)
    lines = [f"{sp.name} at B = {B:g} T, f_z = {fz / 1e6:g} MHz:",
             f"  f_plus = {f['f_plus'] / 1e6:.6f} MHz, f_minus = {f['f_minus'] / 1e6:.6f} MHz, "
             f"f_c = {f['f_c'] / 1e6:.6f} MHz"]
    if "numeric" in out:
        n = out["numeric"]
        lines.append(f"  integrated + FFT: f_plus = {n['f_plus_Hz'] / 1e6:.6f} MHz, "
                     f"f_minus = {n['f_minus_Hz'] / 1e6:.6f} MHz, f_z = {n['f_z_Hz'] / 1e6:.6f} MHz")
    return files, lines, None


def run_exchange(config, p, seed):
    from .exchange import (CoupledPair, detuning_sweep, exchange_rate, simulate_swap, sweep_csv,
                           swap_time_conventions)
    pair = CoupledPair.from_config(config)
    if p.get("d"):
        pair = CoupledPair(pair.species_a, pair.species_b, p["d"], pair.omega_a, pair.omega_b)
    res = exchange_rate(pair)
    quoted = config.section("exchange")["quoted_swap_time"]
    out = {"species_a": pair.species_a.name, "species_b": pair.species_b.name, "d_m": pair.d,
           "omega_rad_s": pair.omega, **res.as_dict(),
           "coupling_parameter": pair.coupling_parameter,
           "conventions": swap_time_conventions(pair, quoted)}
    files = {}
    if p.get("numeric"):
        tr = simulate_swap(pair)
        long = simulate_swap(pair, duration=10 * 2 * math.pi / res.delta_omega, samples=4000)
        out["numeric"] = {"first_transfer_time_s": tr.first_transfer_time(),
                          "contrast": tr.contrast(),
                          "fft_splitting_rad_s": long.normal_mode_splitting()}
    if p.get("sweep"):
        deltas = res.delta_omega * np.linspace(0, 5, p["sweep"])
        analytic, numeric = detuning_sweep(pair, deltas)
        files["sweep.csv"] = sweep_csv(deltas, numeric)
        out["sweep_analytic_contrast"] = analytic.tolist()
    files["exchange.json"] = _json(out)
    conv = out["conventions"]
    lines = [f"kappa = {res.kappa:.4g} N/m, d_omega = {res.delta_omega:.4g} rad/s, "
             f"Omega_ex = {res.omega_ex:.4g} rad/s",
             f"t_swap = {res.t_swap * 1e3:.4g} ms  [{res.convention}]",
             f"t_swap = {conv['single_mass']['t_swap_s'] * 1e3:.4g} ms  "
             f"[{conv['single_mass']['convention']}]"]
    if "quoted" in conv:
        lines.append(f"quoted {quoted * 1e3:g} ms: {conv['quoted']['note']}; within 10% of the "
                     f"single-mass value: {conv['quoted']['matches_single_mass_10pct']}")
    return files, lines, None


def run_levels(config, p, seed):
    from .atomic import (FineLevel, cycling_and_repump, ground_splitting, level_energies,
                         level_fan_csv, levels_csv, spin_flip_frequency)
    label = p.get("level") or "S12"
    B = config.field.B0 if p.get("B") is None else p["B"]
    quad = config.section("atomic")["quadrupole"]
    level = FineLevel.from_config(config, label)
    states = level_energies(level, B, quad)
    files = {"levels.csv": levels_csv(states)}
    out = {"level": label, "B_T": B, "states": len(states)}
    lines = [f"{label} at B = {B:g} T: {len(states)} states"]
    if abs(level.J - 0.5) < 1e-12 and B > 0:
        split = ground_splitting(level, B)
        out["splitting_mJ_pm_half_mI_max_Hz"] = split
        lines.append(f"  m_J = +1/2 vs -1/2 splitting at m_I = {level.I:+g}: {split / 1e9:.4f} GHz")
    levels = config.prefixed("level")
    if label == "S12" and "P32" in levels:
        ref = config.constants.speed_of_light / config.section("atomic")["reference_wavelength"]
        cr = cycling_and_repump(level, FineLevel.from_config(config, "P32"), B, ref, quad)
        out.update(cr)
        lines.append(f"  cycling - repump = {cr['difference_Hz'] / 1e9:.4f} GHz")
    pf = spin_flip_frequency(species_lookup("proton", config), B)
    out["proton_spin_flip_Hz"] = pf
    out["proton_spin_flip_wavelength_m"] = config.constants.speed_of_light / pf
    if p.get("fan"):
        files["fan.csv"] = level_fan_csv(level, np.linspace(0, p["fan"], 101), quad)
    files["levels.json"] = _json(out)
    return files, lines, None


def run_laser_chain(config, p, seed):
    from .photonics import laser_chain, photoionization_check
    chain = laser_chain(config)
    L = config.section("laser")
    pi = photoionization_check(chain[-1].output.wavelength, L["be_ionization_energy"],
                               L["be_resonance_wavelength"])
    stages = [s.as_dict() for s in chain]
    out = {"stages": stages, "photoionization": pi, "ablation_wavelength_m": L["ablation_wavelength"]}
    rows = [(s["stage"], ";".join(f"{x!r}" for x in s["lambda_in_nm"]), s["lambda_out_nm"],
             s["power_out_W"]) for s in stages]
    csv = "stage,lambda_in_nm,lambda_out_nm,power_out_W\n" + "".join(
        f"{a},{b},{c!r},{d!r}\n" for a, b, c, d in rows)
    lines = [f"  {s['stage']:12s} {' + '.join(f'{x:.2f}' for x in s['lambda_in_nm'])} nm -> "
             f"{s['lambda_out_nm']:.2f} nm, {s['power_out_W'] * 1e3:.4g} mW" for s in stages]
    lines.append(f"  2 x {pi['photon_energy_eV']:.4f} eV vs ionization {pi['ionization_energy_eV']:.4f} eV: "
                 f"{'ionizes' if pi['ionizes'] else 'below threshold'}")
    return {"chain.csv": csv, "chain.json": _json(out)}, lines, None


def run_comb(config, p, seed):
    from .atomic import FineLevel, ground_splitting
    from .photonics import CombSpec, comb_pair, comb_raman_rate
    comb = CombSpec.from_config(config)
    c = config.section("comb")
    target = p.get("splitting") or c["target_splitting"]
    if target is None:
        target = abs(ground_splitting(FineLevel.from_config(config, "S12"), config.field.B0))
    N, delta = comb_pair(comb, target)
    gamma = 2 * math.pi * config.section("atomic")["linewidth"]
    rate = comb_raman_rate(comb, N, p.get("detuning") or c["single_photon_detuning"], gamma)
    out = {"target_splitting_Hz": target, "N": N, "residual_detuning_Hz": delta, **rate.as_dict()}
    lines = [f"N = {N}, residual detuning = {delta / 1e6:+.4f} MHz",
             f"Omega_eff = {rate.omega_eff:.4g} rad/s, scattering rate = {rate.scattering_rate:.4g} 1/s"]
    return {"comb.json": _json(out)}, lines, None


def run_cool(config, p, seed):
    from .cooling import doppler_limit, simulate_from_config
    over = {k: p[k] for k in ("detuning", "saturation", "duration", "seeds") if p.get(k) is not None}
    sp = species_lookup(p.get("species") or "Be9_ion", config)
    res = simulate_from_config(config, sp, seed=seed, **over)
    gamma = 2 * math.pi * config.section("atomic")["linewidth"]
    summary = res.summary()
    summary["doppler_limit_K"] = doppler_limit(gamma)
    ax = res.equilibrium["axial"]
    lines = [f"axial equilibrium {ax['mean_K'] * 1e3:.4g} +- {ax['stderr_K'] * 1e3:.2g} mK "
             f"(T_D = {summary['doppler_limit_K'] * 1e3:.4g} mK), {res.photons} photons"]
    tree = (f"SeedSequence({seed}).spawn({res.seeds}); one PCG64 stream per seed: thermal "
            "start (3 exponentials, 3 phases) then 4 uniform arrays per 65536-step chunk")
    return {"cooling.csv": res.to_csv(), "cooling.json": _json(summary)}, lines, tree


def run_protocol(config, p, seed):
    from .exchange import CoupledPair, exchange_rate
    from .protocol import (ReadoutModel, fidelity_estimate, readout_statistics, stages_from_config,
                           timing_budget)
    stages = stages_from_config(config)
    ro = ReadoutModel.from_config(config)
    pr = config.section("protocol")
    trials = p.get("trials") or pr["trials"]
    root = np.random.SeedSequence(seed)
    s_trials, s_readout = root.spawn(2)
    est = fidelity_estimate(stages, ro, trials, s_trials, pr["swap_contrast"])
    t_swap = exchange_rate(CoupledPair.from_config(config)).t_swap
    budget = timing_budget(stages, t_swap, ro)
    rs = readout_statistics(ro, trials, s_readout)
    out = {"fidelity": est.fidelity, "sigma": est.stderr, "analytic_fidelity": est.analytic,
           "trials": trials, "timing_budget": budget, "readout": rs,
           "stages": [s.name for s in stages]}
    lines = [f"fidelity {est.fidelity:.4f} +- {est.stderr:.4f} (closed form {est.analytic:.4f}), "
             f"{trials} trials",
             f"sequence duration {budget['total_s'] * 1e3:.4g} ms"]
    tree = (f"SeedSequence({seed}).spawn(2): [0] PCG64 for the trials, draws in stage order; "
            "[1] PCG64 for the readout statistics")
    return {"trials.csv": est.trials_csv(), "protocol.json": _json(out)}, lines, tree


HANDLERS = {
    "solve-potential": run_solve_potential, "design-well": run_design_well, "modes": run_modes,
    "exchange": run_exchange, "levels": run_levels, "laser-chain": run_laser_chain,
    "comb": run_comb, "cool": run_cool, "protocol": run_protocol,
}


# --------------------------------------------------------------------------- driver


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trapstack", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="subcommand")
    sub.required = True

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="configuration file (default: bundled demonstrator)")
        sp.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
        sp.add_argument("--out", default=None, help="output directory (default: trapstack-out/<subcommand>)")
        return sp

    sp = add("solve-potential", "on-axis potential of the electrode stack")
    sp.add_argument("--voltages", help="comma-separated electrode voltages (V)")
    sp.add_argument("--modes", type=int)
    sp.add_argument("--points", type=int)
    sp = add("design-well", "electrode voltages for the configured wells")
    sp.add_argument("--bound", type=float, help="voltage bound (V)")
    sp = add("modes", "Penning-trap eigenfrequencies")
    sp.add_argument("--species")
    sp.add_argument("--B", type=float, help="magnetic field (T)")
    sp.add_argument("--fz", type=float, help="axial frequency (Hz)")
    sp.add_argument("--simulate", action="store_true", help="also integrate and FFT a trajectory")
    sp.add_argument("--periods", type=float, default=200)
    sp = add("exchange", "Coulomb exchange between neighbouring wells")
    sp.add_argument("--d", type=float, help="well separation (m)")
    sp.add_argument("--numeric", action="store_true", help="also integrate the coupled pair")
    sp.add_argument("--sweep", type=int, help="number of detuning points in [0, 5 d_omega]")
    sp = add("levels", "hyperfine-Zeeman levels")
    sp.add_argument("--level", default="S12")
    sp.add_argument("--B", type=float, help="magnetic field (T)")
    sp.add_argument("--fan", type=float, help="also write energies for B in [0, FAN] T")
    add("laser-chain", "SFG/SHG wavelength and power bookkeeping")
    sp = add("comb", "comb tooth pair and Raman rate")
    sp.add_argument("--splitting", type=float, help="target splitting (Hz)")
    sp.add_argument("--detuning", type=float, help="single-photon detuning (Hz)")
    sp = add("cool", "Doppler cooling Monte Carlo")
    sp.add_argument("--species")
    sp.add_argument("--detuning", type=float, help="detuning in units of the linewidth")
    sp.add_argument("--saturation", type=float)
    sp.add_argument("--duration", type=float, help="s")
    sp.add_argument("--seeds", type=int)
    sp = add("protocol", "quantum-logic detection Monte Carlo")
    sp.add_argument("--trials", type=int)
    rp = sub.add_parser("reproduce", help="re-run a recorded invocation")
    rp.add_argument("manifest")
    rp.add_argument("--out", default=None, help="write into this directory instead of the recorded one")
    return parser


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def execute(command: str, params: dict, config_path, seed: int, out_dir: Path) -> dict:
    """Run one subcommand, write its outputs and manifest, and return the manifest."""
    config = load_config(config_path)
    files, lines, tree = HANDLERS[command](config, params, seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out_dir / name).write_text(text, encoding="utf-8")
    manifest = {
        "subcommand": command,
        "params": params,
        "config": None if config_path is None else str(Path(config_path).resolve()),
        "seed": seed,
        "out": str(out_dir.resolve()),
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "seed_tree": tree or "deterministic (no random numbers drawn)",
        "outputs": {name: _sha256(text) for name, text in files.items()},
    }
    (out_dir / "manifest.json").write_text(_json(manifest), encoding="utf-8")
    for line in lines:
        print(line)
    print(f"wrote {', '.join(files)} and manifest.json to {out_dir}")
    return manifest


def reproduce(manifest_path, out=None) -> int:
    path = Path(manifest_path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    rec = json.loads(path.read_text(encoding="utf-8"))
    if rec.get("version") != __version__:
        warnings.warn(f"manifest written by version {rec.get('version')}, running {__version__}",
                      stacklevel=2)
    cfg = rec.get("config")
    if cfg is not None and not Path(cfg).is_file():
        raise FileNotFoundError(f"config file recorded in the manifest is missing: {cfg}")
    out_dir = Path(out) if out else Path(rec["out"])
    new = execute(rec["subcommand"], rec["params"], cfg, rec["seed"], out_dir)
    bad = [n for n, h in rec["outputs"].items() if new["outputs"].get(n) != h]
    if bad:
        print("outputs differ from the recorded run: " + ", ".join(bad), file=sys.stderr)
        return 1
    print("all outputs byte-identical to the recorded run")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "reproduce":
            return reproduce(args.manifest, args.out)
        params = {k: v for k, v in vars(args).items() if k not in ("command", "config", "seed", "out")}
        out_dir = Path(args.out or Path("trapstack-out") / args.command)
        execute(args.command, params, args.config, args.seed, out_dir)
    except (TrapstackError, FileNotFoundError, ValueError) as exc:
        print(f"trapstack {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
