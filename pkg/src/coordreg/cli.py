"""Command-line front end.

Subcommands ``check``, ``synthesize``, ``certify`` and ``simulate`` take a
scenario given either as a JSON file or as a preset name (``example1``,
``example2``, ``example3``). Flags override scenario values: ``--gains``
is applied first, then the scalar flags.

Exit codes: 0 success, 1 failed check or tolerance (or a design/simulation
error), 2 malformed input.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CoordRegError, DimensionError, InvariantError, SchemaError
from .scenario import (
    GAIN_KEYS,
    PRESETS,
    Scenario,
    dump_scenario,
    load_scenario,
    load_scenario_file,
    preset_document,
    validate_assumptions,
)
from .sim import BACKEND, SimTrace, assemble_closed_loop, convergence_metrics, integrate
from .synthesis import synthesize

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "NaN"
        if math.isinf(v):
            return "UNBOUNDED" if v > 0 else "-UNBOUNDED"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _dump_json(doc, path: str | None) -> None:
    text = json.dumps(_jsonable(doc), indent=2) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        try:
            Path(path).write_text(text, encoding="utf-8", newline="\n")
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _read_gains(path: str) -> dict:
    """Gain overrides from a ``gains`` section or from ``synthesize`` output."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: gains document must be a JSON object")
    if "agents" in doc:
        out = {k: doc[k] for k in ("epsilon", "theta", "alpha") if k in doc}
        for key in ("F", "K_a", "K_s"):
            vals = [a.get(key) for a in doc["agents"]]
            if any(v is not None for v in vals):
                out[key] = vals
        return out
    unknown = set(doc) - GAIN_KEYS
    if unknown:
        raise SchemaError(f"{path}: unknown gain keys {sorted(unknown)}")
    return doc


def load_input(args) -> Scenario:
    """Resolve the scenario argument and apply command-line overrides."""
    src = args.scenario
    if src in PRESETS:
        doc = preset_document(src)
    else:
        path = Path(src)
        if not path.exists():
            raise SchemaError(f"{src}: no such file and not a preset ({', '.join(sorted(PRESETS))})")
        doc = dump_scenario(load_scenario_file(path))
    gains = dict(doc.get("gains") or {})
    if getattr(args, "gains", None):
        gains.update(_read_gains(args.gains))
    for key in ("epsilon", "theta", "alpha"):
        val = getattr(args, key, None)
        if val is not None:
            gains[key] = val
    doc["gains"] = gains
    if getattr(args, "mode", None):
        doc["mode"] = args.mode
        if args.mode != "CASE1" and "K_a" in gains:
            gains.pop("K_a")
        if args.mode != "CASE2" and "K_s" in gains:
            gains.pop("K_s")
    sim = dict(doc.get("sim") or {})
    for key in ("h", "horizon"):
        val = getattr(args, key, None)
        if val is not None:
            sim[key] = val
    if getattr(args, "stride", None) is not None:
        sim["record_stride"] = args.stride
    doc["sim"] = sim
    return load_scenario(doc)


def trace_header(trace: SimTrace) -> list:
    n, pe = trace.e.shape[1], trace.e.shape[2]
    cols = ["t", "sigma"]
    cols += [f"e{i}_{k}" for i in range(1, n + 1) for k in range(1, pe + 1)]
    cols += [f"obs_err_{i}" for i in range(1, trace.obs_err.shape[1] + 1)]
    return cols


def write_trace_csv(trace: SimTrace, path) -> None:
    """Write the trace as CSV with shortest round-trip decimals and LF endings."""
    lines = [",".join(trace_header(trace))]
    n_rows = len(trace)
    flat_e = trace.e.reshape(n_rows, trace.e.shape[1] * trace.e.shape[2])
    for r in range(n_rows):
        row = [repr(float(trace.times[r])), str(int(trace.sigma[r]))]
        row += [repr(float(v)) for v in flat_e[r]]
        row += [repr(float(v)) for v in trace.obs_err[r]]
        lines.append(",".join(row))
    text = "\n".join(lines) + "\n"
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write trace to {path}: {exc.strerror or exc}") from exc


def write_gnuplot(csv_path, script_path, n_err: int) -> None:
    cols = ", ".join(f"'{csv_path}' using 1:{3 + k} with lines title columnhead({3 + k})" for k in range(n_err))
    script = (
        "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        "set xlabel 't'\n"
        "set ylabel 'tracking error'\n"
        f"plot {cols}\n"
    )
    Path(script_path).write_text(script, encoding="utf-8", newline="\n")


def cmd_check(args) -> int:
    rep = validate_assumptions(load_input(args))
    print(rep.render())
    return EXIT_OK if rep.ok else EXIT_FAIL


def cmd_synthesize(args) -> int:
    design = synthesize(load_input(args))
    _dump_json(design.gains_document(), args.output)
    if args.output not in (None, "-"):
        print(f"gains written to {args.output}")
    return EXIT_OK


def render_certification(rep) -> str:
    kappa = "UNBOUNDED" if math.isinf(rep.kappa_achieved) else f"{rep.kappa_achieved:.6g}"
    lines = [
        f"lambda_max(P)   = {rep.P_spectrum[1]:.6g}",
        f"lambda_min(P)   = {rep.P_spectrum[0]:.6g}",
        f"lambda_c        = {rep.lambda_c:.6g}",
        f"lambda_d        = {rep.lambda_d:.6g}",
        f"a               = {rep.a:.6g}",
        f"kappa_star      = {rep.kappa_star:.6g}",
        f"kappa_achieved  = {kappa}",
        f"tau_d           = {rep.tau_d:.6g}",
        f"eps_star        = {rep.eps_star:.6g}",
        f"c_star          = {rep.c_star:.6g}",
        f"||L_eps|| bound = {rep.norm_bound_Leps:.6g}",
    ]
    if rep.Leps_norm is not None:
        lines.append(f"||L_eps||       = {rep.Leps_norm:.6g}")
    if not rep.kappa_ok:
        lines.append(
            f"WARN kappa_achieved={kappa} < kappa_star={rep.kappa_star:.6g}: "
            "the sufficient condition does not certify this schedule (it is conservative)"
        )
    return "\n".join(lines)


def cmd_certify(args) -> int:
    design = synthesize(load_input(args))
    print(render_certification(design.certification))
    if args.output:
        _dump_json(design.certification.to_dict(), args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = load_input(args)
    design = synthesize(sc)
    system = assemble_closed_loop(sc, design, observer=args.observer)
    trace = integrate(system, sc.schedule, sc.sim, backend=args.backend)
    out = args.output or "trace.csv"
    write_trace_csv(trace, out)
    if args.gnuplot:
        write_gnuplot(out, args.gnuplot, trace.e.shape[1] * trace.e.shape[2])
    rep = convergence_metrics(trace, [args.tol])
    final = float(trace.error_norms[-1])
    settle = rep.settling_time[float(args.tol)]
    print(f"samples={len(trace)} dim={system.dim} backend={args.backend or BACKEND}")
    print(f"final max_i ||e_i|| = {final:.6g}")
    print(f"settling time (tol {args.tol:g}) = {'NOT_SETTLED' if math.isinf(settle) else f'{settle:.6g}'}")
    print(f"trace written to {out}")
    ok = final < args.tol
    print(("PASS" if ok else "FAIL") + f" final error {'<' if ok else '>='} {args.tol:g}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_preset(args) -> int:
    _dump_json(preset_document(args.name), args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coordreg", description="Coordinated output regulation over switching graphs.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, sim=False):
        sp.add_argument("scenario", help="scenario JSON file or preset name")
        sp.add_argument("--mode", choices=["UNIFIED", "CASE1", "CASE2"])
        sp.add_argument("--epsilon", type=float)
        sp.add_argument("--theta", type=float)
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--gains", help="JSON gain overrides (a gains section or synthesize output)")
        sp.add_argument("-o", "--output")
        if sim:
            sp.add_argument("--h", type=float)
            sp.add_argument("--horizon", type=float)
            sp.add_argument("--stride", type=int, help="record every N steps")
            sp.add_argument("--tol", type=float, default=1e-2)
            sp.add_argument("--observer", choices=["designed", "ideal"], default="designed")
            sp.add_argument("--backend", choices=["cython", "python"])
            sp.add_argument("--gnuplot", help="also write a gnuplot script plotting the trace")

    common(sub.add_parser("check", help="validate structural assumptions"))
    common(sub.add_parser("synthesize", help="compute gains and write them as JSON"))
    common(sub.add_parser("certify", help="print the dwell-time/high-gain certificate"))
    common(sub.add_parser("simulate", help="simulate and write a CSV trace"), sim=True)
    sp = sub.add_parser("preset", help="export a built-in scenario as JSON")
    sp.add_argument("name", choices=sorted(PRESETS))
    sp.add_argument("-o", "--output")
    return p


HANDLERS = {
    "check": cmd_check,
    "synthesize": cmd_synthesize,
    "certify": cmd_certify,
    "simulate": cmd_simulate,
    "preset": cmd_preset,
}


def run_command(argv=None) -> int:
    """Parse ``argv`` and dispatch; returns the process exit code."""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT
    try:
        return HANDLERS[args.command](args)
    except (SchemaError, InvariantError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CoordRegError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
