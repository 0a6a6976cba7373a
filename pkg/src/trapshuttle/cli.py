"""Command-line surface: design, verify, map, magic, quantum.

One YAML config drives every subcommand; unknown keys fail hard and the
fully resolved tree (defaults applied) is echoed into the output
directory together with the tool version, seed, and input hashes, which
is enough to reproduce any output byte for byte.  The tool renders no
plots: it emits plotter-ready CSV columns and JSON reports.

Exit codes: 0 success, 1 usage error, 2 infeasible design, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from trapshuttle import __version__
from trapshuttle.dynamics import (
    IntegrationError,
    ParticleState,
    PhysicalConstants,
    integrate,
    residual_energy,
)
from trapshuttle.ensemble import (
    PacketSweep,
    SamplingError,
    find_magic_times,
)
from trapshuttle.perturb import energy_map, optimal_u
from trapshuttle.quantum import (
    ConvergenceError,
    PropagationError,
    default_grid,
    eigenbasis,
    ground_state,
    propagate,
    transient_excitation,
)
from trapshuttle.sweep import (
    CheckpointMismatchError,
    CorruptCheckpointError,
    SweepJob,
    run as run_sweep,
)
from trapshuttle.trajectory import make_reference
from trapshuttle.traps import (
    Harmonic,
    HarmonicCubic,
    HarmonicQuartic,
    InfeasiblePlanError,
    PowerLaw,
    TransportPlan,
    Tweezers,
    UnsupportedFamilyError,
    design_plan,
    harmonic_frequency,
    one_point_plan,
)

SCHEMA_VERSION = 1

# (dotted key, default, meaning with units).  This table is the whole
# config surface: validation, defaults and --help all derive from it.
CONFIG_KEYS = [
    ("schema_version", SCHEMA_VERSION, "config schema version; must be 1"),
    ("trap.family", "harmonic",
     "power_law | harmonic | cubic | quartic | tweezers"),
    ("trap.omega0", 1.0,
     "trap angular frequency [rad/s]; 1.0 = dimensionless trap units"),
    ("trap.xi", None,
     "anharmonic length of the cubic/quartic families [same unit as d]"),
    ("trap.eta", None,
     "power_law stiffness [length^(2-2n)/s^2]; for tweezers the "
     "acceleration scale 2 U0/(m x_r) [length/s^2]"),
    ("trap.n", 1, "power_law exponent, potential ~ x^(2n) [-]"),
    ("trap.x_r", None, "tweezers Rayleigh length [same unit as d]"),
    ("transport.d", 20.2,
     "transport distance [length; a0 units when omega0 = 1]"),
    ("transport.u", 8.0,
     "dimensionless duration u = omega0 t_f [-]; used when t_f is null"),
    ("transport.t_f", None, "transport duration [s]; overrides transport.u"),
    ("transport.order", 5, "reference interpolant order: 5 | 7 | 9"),
    ("transport.protocol", "reference",
     "reference (trap-matched inversion) | one_point (harmonic design)"),
    ("constants.m", 1.0, "particle mass [kg]; 1.0 = per-mass trap units"),
    ("constants.hbar", 1.0, "reduced Planck constant [J s]; 1.0 = trap units"),
    ("verify.tol", 1e-10, "integrator accuracy target, relative [-]"),
    ("verify.t_f_error", 0.0,
     "fractional timing error applied when executing the plan [-]"),
    ("verify.fig1", False,
     "also emit the |x(t)/d - 1| series for orders 5, 7, 9"),
    ("verify.n_samples", 1001, "rows in emitted time series [-]"),
    ("map.family", "cubic", "cubic | quartic"),
    ("map.xi_over_d_min", 0.1, "lower edge of the log-spaced xi/d axis [-]"),
    ("map.xi_over_d_max", 1000.0, "upper edge of the xi/d axis [-]"),
    ("map.n_xi", 81, "points on the xi/d axis [-]"),
    ("map.u_min", 0.2, "lower edge of the linear u axis [-]"),
    ("map.u_max", 21.6, "upper edge of the u axis [-]"),
    ("map.n_u", 121, "points on the u axis [-]"),
    ("map.mode", "perturbative", "perturbative | exact residual model"),
    ("map.d_over_a0", 20.2,
     "distance in oscillator lengths; sets the (d/a0)^2 prefactor [-]"),
    ("map.min_decades", 2.0,
     "minimum depth below flanking maxima for reported minima [decades]"),
    ("magic.kind", "cubic", "cubic | quartic"),
    ("magic.xi_over_d", [31.622776601683793],
     "list of anharmonic lengths over distance [-]"),
    ("magic.u_min", 4.0, "scan start [-]"),
    ("magic.u_max", 14.0, "scan end [-]"),
    ("magic.n_u", 501, "scan points; one xi row shares random numbers [-]"),
    ("magic.n_particles", 20000, "ensemble size per cell [-]"),
    ("magic.width_over_d", 0.01, "thermal position width sigma_x / d [-]"),
    ("magic.min_decades", 1.0, "minimum dip depth [decades]"),
    ("magic.order", 5, "reference interpolant order for the scan"),
    ("quantum.preset", "fig4",
     "fig4 (quartic trap, one_point protocol) | custom (use trap/transport)"),
    ("quantum.n_grid", 4096, "spatial FFT grid points, power of two [-]"),
    ("quantum.steps_per_period", 2000, "time steps per trap period [-]"),
    ("quantum.factors", [0.75, 1.0, 1.25],
     "duration multipliers applied to the base u [-]"),
    ("quantum.n_states", 96, "eigenbasis size for excitation counting [-]"),
    ("quantum.count_states", True,
     "also count transiently populated eigenstates"),
    ("quantum.lxi", -0.8, "fig4 preset: log10(xi/d) of the quartic trap [-]"),
    ("quantum.u_star", 13.335, "fig4 preset: base dimensionless duration [-]"),
    ("ensemble.seed", 42, "base RNG seed; rows derive substreams from it"),
    ("sweep.threads", 1, "worker processes for row sweeps [-]"),
    ("sweep.checkpoint", True,
     "keep the append-only checkpoint next to the outputs"),
    ("output.dir", "out", "output directory [path]"),
]

_NUMERICAL_ERRORS = (IntegrationError, PropagationError, ConvergenceError,
                     SamplingError, CorruptCheckpointError,
                     CheckpointMismatchError)


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------- config

def _defaults() -> dict:
    tree: dict = {}
    for key, default, _ in CONFIG_KEYS:
        node = tree
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = list(default) if isinstance(default, list) \
            else default
    return tree


def _coerce(key: str, default, value):
    """Check a user value against the default's type; None-able floats
    accept null, ints must not arrive as bools."""
    if value is None:
        if default is None or key == "transport.t_f":
            return None
        raise UsageError(f"{key} must not be null")
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise UsageError(f"{key} must be true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise UsageError(f"{key} must be an integer")
        return value
    if isinstance(default, float) or default is None:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise UsageError(f"{key} must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise UsageError(f"{key} must be a string")
        return value
    if isinstance(default, list):
        if not isinstance(value, list) or not value or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool)
                for v in value):
            raise UsageError(f"{key} must be a non-empty list of numbers")
        return [float(v) for v in value]
    raise UsageError(f"{key}: unsupported value {value!r}")


def resolve_config(user: dict) -> dict:
    """Defaults overlaid with the user tree; unknown keys are errors."""
    cfg = _defaults()
    known = {key for key, _, _ in CONFIG_KEYS}
    defaults_by_key = {key: d for key, d, _ in CONFIG_KEYS}
    if user is None:
        user = {}
    if not isinstance(user, dict):
        raise UsageError("config root must be a mapping")
    for top, sub in user.items():
        if top == "provenance":
            continue  # written by the tool; ignored on input
        if top in known:  # top-level scalar (schema_version)
            cfg[top] = _coerce(top, defaults_by_key[top], sub)
            continue
        if not isinstance(cfg.get(top), dict):
            raise UsageError(f"unknown config key: {top}")
        if not isinstance(sub, dict):
            raise UsageError(f"{top} must be a mapping")
        for leaf, value in sub.items():
            key = f"{top}.{leaf}"
            if key not in known:
                raise UsageError(f"unknown config key: {key}")
            cfg[top][leaf] = _coerce(key, defaults_by_key[key], value)
    if cfg["schema_version"] != SCHEMA_VERSION:
        raise UsageError(
            f"schema_version {cfg['schema_version']} unsupported; "
            f"this tool reads version {SCHEMA_VERSION}")
    return cfg


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def load_config(args) -> tuple[dict, dict]:
    """Resolved config plus the input-hash record for provenance."""
    hashes = {}
    user = {}
    if args.config is not None:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        hashes["config"] = _sha256(path)
        user = yaml.safe_load(path.read_text())
    cfg = resolve_config(user)
    if args.out is not None:
        cfg["output"]["dir"] = str(args.out)
    if args.seed is not None:
        cfg["ensemble"]["seed"] = int(args.seed)
    if args.threads is not None:
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        cfg["sweep"]["threads"] = int(args.threads)
    plan_path = getattr(args, "plan", None)
    if plan_path is not None:
        plan_path = Path(plan_path)
        if not plan_path.is_file():
            raise UsageError(f"plan file not found: {plan_path}")
        hashes["plan"] = _sha256(plan_path)
    return cfg, hashes


def echo_config(cfg: dict, outdir: Path, command: str, hashes: dict):
    doc = dict(cfg)
    doc["provenance"] = {
        "command": command,
        "input_sha256": hashes,
        "seed": cfg["ensemble"]["seed"],
        "version": __version__,
    }
    with open(outdir / "resolved_config.yaml", "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=True, default_flow_style=False)


# ------------------------------------------------------------- builders

def build_trap(cfg: dict):
    t = cfg["trap"]
    fam = t["family"]

    def need(key):
        if t[key] is None:
            raise UsageError(f"trap.{key} is required for family {fam}")
        return t[key]

    if fam == "harmonic":
        return Harmonic(omega0=t["omega0"])
    if fam == "cubic":
        return HarmonicCubic(omega0=t["omega0"], xi=need("xi"))
    if fam == "quartic":
        return HarmonicQuartic(omega0=t["omega0"], xi=need("xi"))
    if fam == "power_law":
        return PowerLaw(n=t["n"], eta=need("eta"))
    if fam == "tweezers":
        return Tweezers(eta=need("eta"), x_r=need("x_r"))
    raise UsageError(f"unknown trap.family: {fam}")


def resolve_t_f(cfg: dict, trap) -> float:
    tr = cfg["transport"]
    if tr["t_f"] is not None:
        return float(tr["t_f"])
    try:
        return tr["u"] / harmonic_frequency(trap)
    except UnsupportedFamilyError as exc:
        raise UsageError(f"transport.t_f is required: {exc}") from exc


def _u_or_none(trap, t_f: float):
    """omega0 t_f, or None for families without a bottom frequency."""
    try:
        return harmonic_frequency(trap) * t_f
    except UnsupportedFamilyError:
        return None


def build_plan(cfg: dict, trap) -> TransportPlan:
    tr = cfg["transport"]
    t_f = resolve_t_f(cfg, trap)
    if tr["protocol"] == "one_point":
        return one_point_plan(trap, tr["d"], t_f)
    if tr["protocol"] != "reference":
        raise UsageError(f"unknown transport.protocol: {tr['protocol']}")
    return design_plan(trap, make_reference(tr["d"], t_f, tr["order"]))


def _write_json(path: Path, payload: dict):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True, default=float)
        fh.write("\n")


def _print_bounds(report: dict):
    for key, value in sorted(report.items()):
        print(f"  {key} = {value}")


# ------------------------------------------------------------- commands

def cmd_design(cfg: dict, outdir: Path) -> int:
    trap = build_trap(cfg)
    plan = build_plan(cfg, trap)
    tr = cfg["transport"]
    plan.to_csv(outdir / "plan.csv")
    u_val = _u_or_none(trap, plan.t_f)
    report = {
        "d": tr["d"],
        "t_f": plan.t_f,
        "u": u_val,
        "order": tr["order"],
        "protocol": tr["protocol"],
        "family": cfg["trap"]["family"],
        "feasible": bool(plan.existence_ok),
        "bound_report": plan.bound_report,
    }
    if plan.existence_ok:
        report["x0_start"] = float(plan.x0(0.0))
        report["x0_end"] = float(plan.x0(plan.t_f))
        report["x0_end_minus_d"] = report["x0_end"] - plan.d
    _write_json(outdir / "design_report.json", report)
    label = (f"u = {u_val:.6g}" if u_val is not None
             else f"t_f = {plan.t_f:.6g}")
    if not plan.existence_ok:
        print(f"design: INFEASIBLE for {cfg['trap']['family']} "
              f"({label}); bound report:")
        _print_bounds(plan.bound_report)
        return 2
    print(f"design: {cfg['trap']['family']} d = {tr['d']:g} "
          f"{label} order = {tr['order']} -> plan.csv; "
          f"x0(t_f) - d = {report['x0_end_minus_d']:.3e}")
    if plan.bound_report:
        _print_bounds(plan.bound_report)
    return 0


def _load_plan_csv(path: Path, trap, cfg: dict) -> TransportPlan:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if rows.shape[0] < 4:
        raise UsageError(f"plan file {path} has too few samples")
    if rows.shape[1] >= 3 and not np.all(rows[:, 2] > 0):
        raise UsageError(f"plan file {path} records an infeasible design")
    t, x0 = rows[:, 0], rows[:, 1]
    ref = make_reference(cfg["transport"]["d"], float(t[-1]),
                         cfg["transport"]["order"])
    return TransportPlan.from_samples(trap, ref, np.column_stack([t, x0]))


def cmd_verify(cfg: dict, outdir: Path, plan_path: Path | None = None) -> int:
    trap = build_trap(cfg)
    v = cfg["verify"]
    if plan_path is not None:
        plan = _load_plan_csv(Path(plan_path), trap, cfg)
    else:
        plan = build_plan(cfg, trap)
    if not plan.existence_ok:
        print("verify: design infeasible; bound report:")
        _print_bounds(plan.bound_report)
        return 2

    d, t_f = plan.d, plan.t_f
    eps = v["t_f_error"]
    t_exec = t_f * (1.0 + eps)
    if eps == 0.0:
        x0_exec = plan
    else:
        # time-stretched execution of the designed bottom path
        def x0_exec(t):
            s = np.asarray(t, dtype=float) / (1.0 + eps)
            return plan.x0(np.minimum(s, t_f))

    traj = integrate(trap, x0_exec, ParticleState(x=0.0, v=0.0, t=0.0),
                     t_exec, tol=v["tol"], n_samples=v["n_samples"])
    traj.to_csv(outdir / "trajectory.csv")
    fin = traj.final
    de = residual_energy(trap, x0_exec, fin)
    c = cfg["constants"]
    try:
        w0 = harmonic_frequency(trap)
        de_hw = c["m"] * de / (c["hbar"] * w0)
    except UnsupportedFamilyError:
        de_hw = None
    x_err = abs(fin.x / d - 1.0)
    report = {
        "x_final_over_d_minus_1": fin.x / d - 1.0,
        "v_final": fin.v,
        "t_f_design": t_f,
        "t_f_executed": t_exec,
        "t_f_error": eps,
        "residual_energy_per_mass": de,
        "residual_energy_over_hbar_omega0": de_hw,
        "round_trip_ok": bool(x_err < 1e-8),
    }
    _write_json(outdir / "verify_report.json", report)
    de_label = (f"{de_hw:.6e} hbar omega0" if de_hw is not None
                else f"{de:.6e} per unit mass")
    print(f"verify: |x(t_f)/d - 1| = {x_err:.3e}, v(t_f) = {fin.v:.3e}, "
          f"dE = {de_label}")

    if v["fig1"]:
        _write_fig1(cfg, trap, outdir)

    if eps != 0.0:
        print(f"warning: executed duration differs from the design by "
              f"{eps:+.2%}; residual energy {de_label}",
              file=sys.stderr)
        return 0
    if not report["round_trip_ok"]:
        print(f"error: round-trip error {x_err:.3e} above 1e-8 for a "
              "feasible design", file=sys.stderr)
        return 3
    return 0


def _write_fig1(cfg: dict, trap, outdir: Path):
    """|x(t)/d - 1| time series, one column per interpolant order."""
    tr = cfg["transport"]
    v = cfg["verify"]
    t_f = resolve_t_f(cfg, trap)
    d = tr["d"]
    orders = (5, 7, 9)
    cols = {}
    for order in orders:
        plan = design_plan(trap, make_reference(d, t_f, order))
        if not plan.existence_ok:
            cols[order] = np.full(v["n_samples"], np.nan)
            continue
        traj = integrate(trap, plan, ParticleState(x=0.0, v=0.0, t=0.0),
                         t_f, tol=v["tol"], n_samples=v["n_samples"])
        cols[order] = np.abs(traj.x / d - 1.0)
    ts = np.linspace(0.0, 1.0, v["n_samples"])
    with open(outdir / "fig1.csv", "w", newline="\n") as fh:
        fh.write("t_over_tf," +
                 ",".join(f"abs_err_order{o}" for o in orders) + "\n")
        for i, s in enumerate(ts):
            fh.write("%.17g," % s +
                     ",".join("%.17g" % cols[o][i] for o in orders) + "\n")
    print(f"verify: fig1 series ({len(orders)} orders, "
          f"{v['n_samples']} samples) -> fig1.csv")


def cmd_map(cfg: dict, outdir: Path) -> int:
    m = cfg["map"]
    emap = energy_map(m["family"],
                      xi_range=(m["xi_over_d_min"], m["xi_over_d_max"]),
                      u_range=(m["u_min"], m["u_max"]),
                      n_xi=m["n_xi"], n_u=m["n_u"], mode=m["mode"],
                      d_over_a0=m["d_over_a0"])
    emap.to_csv(outdir / "map.csv")
    emap.sidecar(outdir / "map_meta.json")
    xi_mid = float(np.sqrt(m["xi_over_d_min"] * m["xi_over_d_max"]))
    minima = optimal_u(m["family"], xi_over_d=xi_mid,
                       u_range=(m["u_min"], m["u_max"]), mode=m["mode"],
                       d_over_a0=m["d_over_a0"],
                       min_decades=m["min_decades"])
    with open(outdir / "minima.csv", "w", newline="\n") as fh:
        fh.write("kind,xi_over_d,u0,dE_over_hw\n")
        for u0, de in minima:
            fh.write(f"{m['family']},{xi_mid:.17g},{u0:.17g},{de:.17g}\n")
    us = ", ".join(f"{u0:.4f}" for u0, _ in minima) or "none"
    print(f"map: {m['family']} {m['n_xi']}x{m['n_u']} grid -> map.csv; "
          f"robust minima at u = {us} -> minima.csv")
    return 0


def cmd_magic(cfg: dict, outdir: Path) -> int:
    mg = cfg["magic"]
    seed = cfg["ensemble"]["seed"]
    xis = [float(x) for x in mg["xi_over_d"]]
    us = np.linspace(mg["u_min"], mg["u_max"], mg["n_u"])
    job = SweepJob(
        task="packet.row",
        axes={"xi_over_d": xis},
        params={"kind": mg["kind"], "u_min": mg["u_min"],
                "u_max": mg["u_max"], "n_u": mg["n_u"],
                "n_particles": mg["n_particles"],
                "width_over_d": mg["width_over_d"],
                "order": mg["order"]},
        seed=seed,
        threads=cfg["sweep"]["threads"],
        checkpoint=(outdir / "magic.ckpt"
                    if cfg["sweep"]["checkpoint"] else None),
        seed_policy="major",
    )
    res = run_sweep(job)
    values = res.values  # (n_xi, n_u)
    sweep = PacketSweep(kind=mg["kind"], xi_over_d=np.array(xis), u=us,
                        values=values, feasible=np.isfinite(values),
                        n_particles=mg["n_particles"], seed=seed)
    sweep.to_csv(outdir / "magic_sweep.csv")
    with open(outdir / "magic.csv", "w", newline="\n") as fh:
        fh.write("log10_xi_over_d,u0,log10_rel_energy_err\n")
        for i, xi in enumerate(xis):
            pairs = find_magic_times(us, values[i], mg["min_decades"])
            for u0, depth in pairs:
                fh.write(f"{np.log10(xi):.17g},{u0:.17g},{depth:.17g}\n")
            found = ", ".join(f"{u0:.4f}" for u0, _ in pairs) or "none"
            print(f"magic: {mg['kind']} xi/d = {xi:g}: u = {found}")
    print(f"magic: sweep ({len(xis)} x {mg['n_u']} cells, seed {seed}) "
          "-> magic_sweep.csv, magic.csv")
    return 0


def cmd_quantum(cfg: dict, outdir: Path) -> int:
    q = cfg["quantum"]
    tr = cfg["transport"]
    cc = cfg["constants"]
    consts = PhysicalConstants(m=cc["m"], hbar=cc["hbar"],
                               k_B=1.380649e-23)
    d = tr["d"]
    if q["preset"] == "fig4":
        trap = HarmonicQuartic(omega0=cfg["trap"]["omega0"],
                               xi=10.0 ** q["lxi"] * d)
        base_u = q["u_star"]
        protocol = "one_point"
    elif q["preset"] == "custom":
        trap = build_trap(cfg)
        base_u = harmonic_frequency(trap) * resolve_t_f(cfg, trap)
        protocol = tr["protocol"]
    else:
        raise UsageError(f"unknown quantum.preset: {q['preset']}")

    w0 = harmonic_frequency(trap)
    a0 = consts.a0(w0)
    grid = default_grid(d, a0, q["n_grid"])
    gs = ground_state(trap, grid, constants=consts)
    dt = 2.0 * np.pi / (w0 * q["steps_per_period"])
    basis = (eigenbasis(trap, grid, q["n_states"], constants=consts)
             if q["count_states"] else None)

    runs = []
    for factor in q["factors"]:
        u_run = factor * base_u
        t_f = u_run / w0
        if protocol == "one_point":
            plan = one_point_plan(trap, d, t_f)
        else:
            plan = design_plan(trap, make_reference(d, t_f, tr["order"]))
            if not plan.existence_ok:
                print(f"quantum: INFEASIBLE design at u = {u_run:.6g}")
                _print_bounds(plan.bound_report)
                return 2
        res = propagate(gs, trap, plan, dt=dt)
        name = f"energy_u{u_run:.5g}.csv"
        res.to_csv(outdir / name)
        entry = {
            "factor": factor,
            "u": u_run,
            "t_f": t_f,
            "file": name,
            "final_excess": float(res.energy_ratio[-1] - 1.0),
        }
        if q["count_states"]:
            exc = transient_excitation(res, trap, n_states=q["n_states"],
                                       basis=basis)
            entry["max_populated"] = exc.max_populated
        runs.append(entry)
        extra = (f", max populated states = {entry['max_populated']}"
                 if q["count_states"] else "")
        print(f"quantum: u = {u_run:.6g} -> {name}; "
              f"E_f/E_i - 1 = {entry['final_excess']:.3e}{extra}")

    best = min(runs, key=lambda r: abs(r["final_excess"]))
    summary = {
        "preset": q["preset"],
        "protocol": protocol,
        "d": d,
        "base_u": base_u,
        "grid": {"x_min": grid.x_min, "x_max": grid.x_max, "n": grid.n},
        "steps_per_period": q["steps_per_period"],
        "ground_state_energy": gs.energy(trap),
        "runs": runs,
        "min_final_excess_u": best["u"],
    }
    _write_json(outdir / "quantum_summary.json", summary)
    print(f"quantum: minimum final excess at u = {best['u']:.6g} "
          "-> quantum_summary.json")
    return 0


# ----------------------------------------------------------------- main

def _config_key_epilog() -> str:
    lines = ["config keys (YAML, two-level; defaults in parentheses):"]
    for key, default, doc in CONFIG_KEYS:
        lines.append(f"  {key} ({default!r})")
        lines.append(f"      {doc}")
    return "\n".join(lines)


_SUBCOMMANDS = {
    "design": "reverse-engineer the trap path and report feasibility",
    "verify": "integrate one particle through a plan and report errors",
    "map": "perturbative residual-energy map over (xi/d, u)",
    "magic": "thermal-packet scan for magic transport times",
    "quantum": "wave-packet transport runs with energy histories",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trapshuttle",
        description="Trap-bottom trajectory design and verification "
                    "for fast atom transport.",
        epilog="exit codes: 0 success, 1 usage error, 2 infeasible "
               "design, 3 numerical failure",
    )
    parser.add_argument("--version", action="version",
                        version=f"trapshuttle {__version__}")
    sub = parser.add_subparsers(dest="command")
    for name, help_text in _SUBCOMMANDS.items():
        sp = sub.add_parser(
            name, help=help_text, description=help_text,
            epilog=_config_key_epilog(),
            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.add_argument("--config", default=None, metavar="PATH",
                        help="YAML config file (defaults apply if omitted)")
        sp.add_argument("--out", default=None, metavar="DIR",
                        help="output directory (overrides output.dir)")
        sp.add_argument("--seed", type=int, default=None, metavar="N",
                        help="RNG seed (overrides ensemble.seed)")
        sp.add_argument("--threads", type=int, default=None, metavar="N",
                        help="worker processes (overrides sweep.threads)")
        if name == "verify":
            sp.add_argument("--plan", default=None, metavar="PATH",
                            help="plan CSV from the design subcommand "
                                 "(default: design in-process)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage, 0 on --help
        return 0 if exc.code == 0 else 1
    if args.command is None:
        parser.print_help()
        return 1
    try:
        cfg, hashes = load_config(args)
        outdir = Path(cfg["output"]["dir"])
        outdir.mkdir(parents=True, exist_ok=True)
        echo_config(cfg, outdir, args.command, hashes)
        if args.command == "design":
            return cmd_design(cfg, outdir)
        if args.command == "verify":
            return cmd_verify(cfg, outdir, plan_path=args.plan)
        if args.command == "map":
            return cmd_map(cfg, outdir)
        if args.command == "magic":
            return cmd_magic(cfg, outdir)
        return cmd_quantum(cfg, outdir)
    except (UsageError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return 1
    except InfeasiblePlanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
