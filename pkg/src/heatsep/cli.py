"""Command-line front end.

Every subcommand prints its primary result (JSON or CSV) to stdout.  With
``--out-dir`` the result is written to fixed file names in that directory
together with ``manifest.json``; ``--plot`` additionally renders PNG figures
there.  ``heatsep replay DIR/manifest.json`` re-runs a recorded command.

Exit codes: 0 computed (an infeasible design is still a result), 2 invalid
input, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import configparser
import io
import json
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .lmi import max_h
from .modal import ModalSystem, PlantParams, build_modal_system
from .residue_gain import METHODS, residue_gain
from .sim import SimConfig, lyapunov_trace, simulate_closed_loop
from .synthesis import gamma_curve, sigma_table, stability_constant, synthesize

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_IO = 3

GAMMA_DIGITS = 12
MATRIX_DIGITS = 15
CSV_DIGITS = 9


class InputError(ValueError):
    pass


# (name, type, default, help); default None means required
OPTIONS = {
    "gamma": [
        ("q", float, None, "reaction coefficient"),
        ("sigma", float, 0.0, "Lipschitz constant of the nonlinearity"),
        ("N", int, None, "number of designed modes"),
        ("method", str, "harmonic", "gain bound: harmonic | sobolev"),
    ],
    "synthesize": [
        ("q", float, None, "reaction coefficient"),
        ("sigma", float, 0.0, "Lipschitz constant"),
        ("N", int, None, "number of designed modes"),
        ("alpha", float, 0.0, "target decay rate (folded into q)"),
        ("method", str, "harmonic", "gain bound: harmonic | sobolev"),
    ],
    "sigma-table": [
        ("q", float, None, "reaction coefficient"),
        ("N_max", int, None, "largest mode count"),
        ("N_min", int, 1, "smallest mode count"),
        ("tol", float, 1e-3, "bisection resolution in sigma"),
        ("method", str, "harmonic", "gain bound: harmonic | sobolev"),
    ],
    "gamma-curve": [
        ("q", float, None, "reaction coefficient"),
        ("sigma", float, 0.0, "Lipschitz constant"),
        ("N_min", int, None, "first mode count"),
        ("N_max", int, None, "last mode count"),
    ],
    "simulate": [
        ("q", float, None, "reaction coefficient"),
        ("sigma", float, 0.0, "Lipschitz constant"),
        ("N", int, None, "number of designed modes"),
        ("method", str, "harmonic", "gain bound: harmonic | sobolev"),
        ("h", float, 0.0, "sampling period (0 = continuous input)"),
        ("T", float, 20.0, "horizon"),
        ("dt", float, 1e-4, "RK4 step"),
        ("M", int, 64, "plant modes"),
        ("P", int, 512, "quadrature points (even)"),
        ("snapshots", str, "", "comma-separated snapshot times"),
        ("lyapunov", bool, False, "add the Lyapunov value column V"),
    ],
    "max-h": [
        ("q", float, None, "reaction coefficient used for the gains"),
        ("q_lmi", float, None, "reduced reaction coefficient inside the LMI (< q)"),
        ("sigma", float, 0.0, "Lipschitz constant"),
        ("N", int, None, "number of designed modes"),
        ("tol", float, 1e-3, "bisection resolution in h"),
        ("h_hi", float, 0.5, "upper end of the search bracket"),
        ("budget", int, 20000, "subgradient iterations per probe"),
    ],
}

OUTPUT_NAMES = {
    "gamma": "gamma.json",
    "synthesize": "synthesis.json",
    "sigma-table": "sigma_table.csv",
    "gamma-curve": "gamma_curve.csv",
    "simulate": "trace.csv",
    "max-h": "max_h.json",
}


# ---------------------------------------------------------------- formatting

def _sig(x, digits):
    if x is None:
        return None
    x = float(x)
    if not math.isfinite(x):
        return None
    return float(f"{x:.{digits}g}")


def _mat(M, digits=MATRIX_DIGITS):
    if M is None:
        return None
    A = np.atleast_2d(np.asarray(M, dtype=float))
    return [[_sig(v, digits) for v in row] for row in A]


def _vec(v, digits=MATRIX_DIGITS):
    if v is None:
        return None
    return [_sig(x, digits) for x in np.asarray(v, dtype=float).ravel()]


def to_json(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(str(v) if isinstance(v, (int, np.integer)) else f"{float(v):.{CSV_DIGITS}g}"
                           for v in row) + "\n")
    return buf.getvalue()


# ---------------------------------------------------------------- commands

def _check_method(method):
    if method not in METHODS:
        raise InputError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")


def run_gamma(p):
    _check_method(p["method"])
    g = residue_gain(p["q"], p["sigma"], p["N"], p["method"])
    out = {"gamma": _sig(g.gamma, GAMMA_DIGITS), "mu_rule": g.mu_rule, "method": g.method}
    return {OUTPUT_NAMES["gamma"]: to_json(out)}, []


def run_synthesize(p):
    _check_method(p["method"])
    params = PlantParams(p["q"], p["sigma"], p["alpha"])
    rep = synthesize(params, p["N"], p["method"])
    r = rep.result
    M_const = None
    if r.feasible:
        try:
            M_const = _sig(stability_constant(r.X, r.Y, r.gamma), MATRIX_DIGITS)
        except ValueError:
            M_const = None
    out = {
        "q": p["q"], "sigma": p["sigma"], "N": p["N"], "alpha": p["alpha"], "method": p["method"],
        "feasible": bool(r.feasible),
        "reason": r.reason,
        "gamma": _sig(r.gamma, GAMMA_DIGITS),
        "rho_xz": _sig(r.rho_xz, MATRIX_DIGITS),
        "K": _vec(r.K),
        "L": _vec(r.L),
        "X": _mat(r.X),
        "Z": _mat(r.Z),
        "M_constant": M_const,
    }
    return {OUTPUT_NAMES["synthesize"]: to_json(out)}, []


def run_sigma_table(p, plot_dir=None):
    _check_method(p["method"])
    if p["N_max"] < p["N_min"]:
        raise InputError("N_max must be >= N_min")
    rows = sigma_table(p["q"], p["N_max"], p["tol"], p["method"], p["N_min"])
    files = {OUTPUT_NAMES["sigma-table"]: to_csv(["N", "sigma_max", "gamma"], rows)}
    figs = []
    if plot_dir is not None:
        from .plotting import plot_sigma_table
        N, s, g = (np.array(c) for c in zip(*rows)) if rows else ([], [], [])
        figs.append(plot_sigma_table(N, s, g, plot_dir / "sigma_table.png").name)
    return files, figs


def run_gamma_curve(p, plot_dir=None):
    if p["N_max"] < p["N_min"]:
        raise InputError("N_max must be >= N_min")
    rows = gamma_curve(p["q"], p["sigma"], range(p["N_min"], p["N_max"] + 1))
    rows = [(N, gh, gs, gs / gh) for N, gh, gs in rows]
    files = {OUTPUT_NAMES["gamma-curve"]: to_csv(
        ["N", "gamma_harmonic", "gamma_sobolev", "ratio"], rows)}
    figs = []
    if plot_dir is not None:
        from .plotting import plot_gamma_curve
        N, gh, gs, _ = (np.array(c) for c in zip(*rows))
        figs.append(plot_gamma_curve(N, gh, gs, plot_dir / "gamma_curve.png").name)
    return files, figs


def _parse_times(text):
    text = (text or "").strip()
    if not text:
        return ()
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise InputError(f"bad snapshot list {text!r}") from exc


def run_simulate(p, plot_dir=None):
    _check_method(p["method"])
    params = PlantParams(p["q"], p["sigma"])
    rep = synthesize(params, p["N"], p["method"])
    if not rep.feasible:
        raise InputError(f"design infeasible at q={p['q']}, sigma={p['sigma']}, N={p['N']} "
                         f"({rep.reason}); nothing to simulate")
    r = rep.result
    cfg = SimConfig(M=p["M"], dt=p["dt"], T=p["T"], h=p["h"], P=p["P"],
                    snapshot_times=_parse_times(p["snapshots"]))
    tr = simulate_closed_loop(build_modal_system(params, p["N"]), r, cfg)
    header = ["t", "state_norm", "err_norm", "u", "y", "zeta"]
    cols = [tr.t, tr.state_norm, tr.err_norm, tr.u, tr.y, tr.zeta]
    if p["lyapunov"]:
        header.append("V")
        cols.append(lyapunov_trace(tr, r.X, r.Y, r.gamma))
    files = {OUTPUT_NAMES["simulate"]: to_csv(header, zip(*cols))}
    snaps = {k: v for k, v in tr.snapshots.items() if k != "x"}
    if snaps:
        x = tr.snapshots["x"]
        rows = [(xi, ts, vi) for ts in sorted(snaps) for xi, vi in zip(x, snaps[ts])]
        files["snapshots.csv"] = to_csv(["x", "t", "value"], rows)
    figs = []
    if plot_dir is not None:
        from .plotting import plot_control, plot_norms, plot_snapshots
        figs.append(plot_norms(tr.t, tr.state_norm, tr.err_norm, plot_dir / "norms.png").name)
        figs.append(plot_control(tr.t, tr.u, plot_dir / "control.png", held=p["h"] > 0).name)
        if snaps:
            figs.append(plot_snapshots(tr.snapshots["x"], snaps, plot_dir / "snapshots.png").name)
    return files, figs


def run_max_h(p):
    notes = []
    if p["q_lmi"] >= p["q"]:
        msg = (f"q_lmi={p['q_lmi']:g} is not below q={p['q']:g}; the small-h guarantee "
               "needs a strictly reduced reaction coefficient inside the LMI")
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    params = PlantParams(p["q"], p["sigma"])
    rep = synthesize(params, p["N"])
    out = {"q": p["q"], "q_lmi": p["q_lmi"], "sigma": p["sigma"], "N": p["N"], "tol": p["tol"]}
    if not rep.feasible:
        notes.append(f"continuous-time design infeasible ({rep.reason})")
        out.update(h_star=0.0, certificate=None, probes=0, warnings=notes)
        return {OUTPUT_NAMES["max-h"]: to_json(out)}, []
    r = rep.result
    sys_lmi = ModalSystem.from_reaction(p["q_lmi"], p["N"])
    bound = max_h(sys_lmi, r.K, r.L, r.X, r.Y, r.gamma, p["sigma"], p["h_hi"], p["tol"], p["budget"])
    if bound.message:
        notes.append(bound.message)
    cert = bound.certificate
    out["h_star"] = _sig(bound.h, MATRIX_DIGITS)
    out["certificate"] = None if cert is None else {
        "h": _sig(cert.h, MATRIX_DIGITS),
        "lambda_max": _sig(cert.lambda_max, MATRIX_DIGITS),
        "stage": cert.stage,
        "iterations": cert.iterations,
        "min_eigenvalues": {k: _sig(v, MATRIX_DIGITS) for k, v in cert.min_eigenvalues().items()},
        "P_z": _mat(cert.Pz),
        "P_e": _mat(cert.Pe),
        "W_z": _mat(cert.Wz),
        "W_e": _mat(cert.We),
    }
    out["probes"] = bound.probes
    out["warnings"] = notes
    return {OUTPUT_NAMES["max-h"]: to_json(out)}, []


RUNNERS = {
    "gamma": (run_gamma, False),
    "synthesize": (run_synthesize, False),
    "sigma-table": (run_sigma_table, True),
    "gamma-curve": (run_gamma_curve, True),
    "simulate": (run_simulate, True),
    "max-h": (run_max_h, False),
}


# ---------------------------------------------------------------- plumbing

def _config_help() -> str:
    lines = ["config file keys (INI, one section per command; [DEFAULT] applies to all):"]
    for cmd, opts in OPTIONS.items():
        lines.append(f"  [{cmd}] " + ", ".join(name.replace("_", "-") for name, *_ in opts))
    lines.append("flags override config values.  HEATSEP_MAX_WORKERS caps table parallelism.")
    return "\n".join(lines)


def _add_options(sp, cmd):
    for name, typ, default, help_ in OPTIONS[cmd]:
        flag = "--" + name.replace("_", "-")
        shown = "required" if default is None else f"default {default!r}"
        if typ is bool:
            sp.add_argument(flag, dest=name, action="store_true", default=None, help=help_)
        else:
            sp.add_argument(flag, dest=name, type=typ, default=None, help=f"{help_} ({shown})")
    sp.add_argument("--config", type=Path, help="INI config file")
    sp.add_argument("--out-dir", type=Path, help="write outputs and manifest.json here")
    sp.add_argument("--plot", action="store_true", help="render PNG figures into --out-dir")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="heatsep",
        description="Residue-gain design, Riccati synthesis, sampled-data bounds and "
                    "closed-loop simulation for boundary control of a semilinear heat equation.",
        epilog=_config_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for cmd in ("gamma", "synthesize", "simulate", "max-h"):
        _add_options(sub.add_parser(cmd, epilog=_config_help(),
                                    formatter_class=argparse.RawDescriptionHelpFormatter), cmd)
    tables = sub.add_parser("tables", help="sigma-table or gamma-curve CSV")
    tsub = tables.add_subparsers(dest="kind", required=True)
    for kind in ("sigma-table", "gamma-curve"):
        _add_options(tsub.add_parser(kind), kind)
    rp = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    rp.add_argument("manifest", type=Path)
    rp.add_argument("--out-dir", type=Path, help="defaults to the manifest's directory")
    rp.add_argument("--plot", action="store_true")
    return ap


def _coerce(typ, raw, name):
    try:
        if typ is bool:
            if isinstance(raw, bool):
                return raw
            return configparser.ConfigParser.BOOLEAN_STATES[str(raw).strip().lower()]
        return typ(raw)
    except (KeyError, ValueError, TypeError) as exc:
        raise InputError(f"bad value {raw!r} for {name}") from exc


def load_config(path: Path | None, section: str) -> dict:
    if path is None:
        return {}
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise InputError(f"cannot parse config {path}: {exc}") from exc
    items = dict(cp.defaults())
    if cp.has_section(section):
        items.update(cp.items(section))
    return {k.replace("-", "_"): v for k, v in items.items()}


def resolve(cmd: str, flags: dict, config: dict) -> dict:
    known = {name for name, *_ in OPTIONS[cmd]}
    unknown = sorted(set(config) - known)
    if unknown:
        raise InputError(f"unknown config keys for {cmd}: {', '.join(unknown)}")
    params = {}
    for name, typ, default, _ in OPTIONS[cmd]:
        if flags.get(name) is not None:
            val = flags[name]
        elif name in config:
            val = config[name]
        elif default is not None:
            val = default
        else:
            raise InputError(f"missing required parameter --{name.replace('_', '-')}")
        params[name] = _coerce(typ, val, name)
    return params


def execute(cmd: str, params: dict, out_dir: Path | None, plot: bool) -> str:
    """Run ``cmd`` and write its outputs; returns the primary output text."""
    runner, can_plot = RUNNERS[cmd]
    if plot and out_dir is None:
        raise InputError("--plot needs --out-dir")
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    if can_plot:
        files, figs = runner(params, plot_dir=out_dir if plot else None)
    else:
        files, figs = runner(params)
    elapsed = time.perf_counter() - t0
    primary = files[OUTPUT_NAMES[cmd]]
    if out_dir is not None:
        for name, text in files.items():
            with open(out_dir / name, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        manifest = {
            "command": cmd,
            "params": params,
            "version": __version__,
            "duration_s": round(elapsed, 3),
            "outputs": sorted(list(files) + list(figs)),
        }
        with open(out_dir / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(to_json(manifest))
    return primary


def replay(manifest_path: Path, out_dir: Path | None, plot: bool) -> str:
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"manifest {manifest_path} is not valid JSON") from exc
    cmd = manifest.get("command")
    if cmd not in RUNNERS:
        raise InputError(f"manifest names unknown command {cmd!r}")
    params = resolve(cmd, manifest.get("params", {}), {})
    plot = plot or any(name.endswith(".png") for name in manifest.get("outputs", []))
    return execute(cmd, params, out_dir or manifest_path.parent, plot)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "replay":
            text = replay(args.manifest, args.out_dir, args.plot)
        else:
            cmd = args.kind if args.command == "tables" else args.command
            flags = {name: getattr(args, name) for name, *_ in OPTIONS[cmd]}
            params = resolve(cmd, flags, load_config(args.config, cmd))
            text = execute(cmd, params, args.out_dir, args.plot)
    except OSError as exc:
        print(f"heatsep: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # includes ModeCountError, StabilityGuardError and InputError
        print(f"heatsep: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
