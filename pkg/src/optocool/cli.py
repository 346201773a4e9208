"""Command line entry point.

Subcommands read an optional config file, apply ``--set path=value``
overrides, and write CSV or JSON to ``--out`` (stdout by default).

Exit codes: 0 success, 2 validation error, 3 instability with ``--strict``,
4 numerical failure.
"""

import argparse
from dataclasses import replace
import json
import logging
import sys

import numpy as np

from . import __version__
from .config import (effective_from_section, effective_values, parse_override, parse_value,
                     physical_from_section, read_config, solver_from_section,
                     sweep_from_config)
from .darkmode import DEFAULT_THRESHOLD, hybrid_params, pairwise_dark_scan
from .dynamics import cooling_point
from .meanfield import MeanFieldDivergenceError, solve_meanfield, sweep_meanfield
from .model import ValidationError, effective_from_physical
from .numkernel import NumericalError
from .sweep import (PRESETS, SweepResult, emit, fig2_physical, grid, preset,
                    run_sweep, set_path)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_UNSTABLE = 3
EXIT_NUMERICAL = 4

log = logging.getLogger("optocool")


class _Unstable(Exception):
    pass


def _common(p, fmt_default="csv"):
    p.add_argument("--config", help="parameter file ([physical]/[effective]/[sweep])")
    p.add_argument("--preset", help="figure preset id (see 'preset list')")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="PATH=VALUE", help="override a parameter; repeatable")
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default=fmt_default)
    p.add_argument("--strict", action="store_true",
                   help="exit with code 3 if any unstable point is met")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="optocool",
        description="Steady-state cooling of degenerate mechanical modes "
                    "with optical and Duffing nonlinearities.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    mf = sub.add_parser("meanfield", help="classical steady state (SI inputs)")
    _common(mf)
    mf.add_argument("--powers", metavar="LO,HI,N",
                    help="sweep P1 = P2 = P on a linear grid (W)")
    mf.add_argument("--n-th", type=float, default=0.0,
                    help="bath occupation echoed into the effective parameters")
    mf.add_argument("--zero-phase", action="store_true",
                    help="evaluate Lambda_j with the mechanical phase set to zero")

    cool = sub.add_parser("cool", help="steady state of one effective parameter point")
    _common(cool, "json")
    cool.add_argument("--darkmode", action="store_true",
                      help="attach the pairwise dark-mode diagnostic record")

    sw = sub.add_parser("sweep", help="1D/2D parameter sweep")
    _common(sw)
    sw.add_argument("--grid", type=int, help="points per axis")
    sw.add_argument("--jobs", type=int, default=1, help="worker processes")
    sw.add_argument("--outputs", help="comma list from n,n_cavity,stable,xi")
    sw.add_argument("--timestamps", action="store_true",
                    help="record wall-clock start/finish in the metadata")

    dm = sub.add_parser("darkmode", help="hybrid-mode coefficients and dark pairs")
    _common(dm, "json")
    dm.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)

    pr = sub.add_parser("preset", help="list or show figure presets")
    pr.add_argument("action", choices=("list", "show"))
    pr.add_argument("figure_id", nargs="?")
    return ap


def _overrides(args, level="effective"):
    return dict(parse_override(s, level) for s in args.overrides)


def _effective(args, need_resolved=True):
    cp = read_config(args.config) if args.config else None
    if args.preset:
        spec = preset(args.preset)
        if cp is not None:
            spec = spec.resolve(effective_values(cp))
        spec = spec.resolve(_overrides(args))
        if need_resolved and spec.required:
            spec.validate()
        return spec.base
    if cp is None:
        raise ValidationError("config", "need --config or --preset")
    base = effective_from_section(cp)
    for path, value in _overrides(args).items():
        base = set_path(base, path, value)
    return base


def _write(text, args):
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dumps(obj):
    return json.dumps(obj, indent=1, default=lambda o: o.tolist()
                      if isinstance(o, np.ndarray) else float(o)) + "\n"


def cmd_meanfield(args):
    if args.preset and args.preset != "fig2":
        raise ValidationError("preset", "meanfield only supports the fig2 preset")
    cp = read_config(args.config) if args.config else None
    base = fig2_physical() if (args.preset or cp is None) else None
    p = physical_from_section(cp, base) if cp is not None else base
    for path, value in _overrides(args, "physical").items():
        p = set_path(p, path, value)
    cfg = solver_from_section(cp) if cp is not None else None

    if args.powers:
        lo, hi, n = parse_value(args.powers)
        rows = sweep_meanfield(p, grid(lo, hi, int(n)), cfg)
        N = p.n_modes
        cols = (["P_watt", "abs_alpha1", "abs_alpha2"]
                + [f"abs_beta_{j + 1}" for j in range(N)]
                + [f"phase_beta_{j + 1}" for j in range(N)] + ["converged"])
        out = []
        for r in rows:
            s = r.state
            rec = {"P_watt": r.P, "abs_alpha1": abs(s.alpha1), "abs_alpha2": abs(s.alpha2)}
            for j in range(N):
                rec[f"abs_beta_{j + 1}"] = float(abs(s.beta[j]))
                rec[f"phase_beta_{j + 1}"] = float(np.angle(s.beta[j]))
            rec["converged"] = r.converged
            out.append(rec)
        res = SweepResult(cols, out, {"preset": "fig2" if args.preset else None,
                                      "version": __version__})
        _write(emit(res, args.format), args)
        return EXIT_OK if all(r.converged for r in rows) else EXIT_NUMERICAL

    st = solve_meanfield(p, cfg)
    rec = {
        "alpha1": [st.alpha1.real, st.alpha1.imag],
        "alpha2": [st.alpha2.real, st.alpha2.imag],
        "abs_alpha1": abs(st.alpha1),
        "abs_alpha2": abs(st.alpha2),
        "abs_beta": np.abs(st.beta).tolist(),
        "phase_beta": np.angle(st.beta).tolist(),
        "residual_norm": st.residual_norm,
        "iterations": st.iterations,
        "converged": st.converged,
    }
    if st.converged:
        rec["effective"] = effective_from_physical(
            p, st, n_th=args.n_th, zero_phase=args.zero_phase).to_dict()
    if args.format == "csv":
        cols = ["abs_alpha1", "abs_alpha2", "residual_norm", "iterations", "converged"]
        text = ",".join(cols) + "\n" + ",".join(
            format(rec[c], ".17g") if isinstance(rec[c], float) else str(rec[c]).lower()
            for c in cols) + "\n"
        _write(text, args)
    else:
        _write(_dumps(rec), args)
    return EXIT_OK if st.converged else EXIT_NUMERICAL


def _dark_record(p, threshold=DEFAULT_THRESHOLD):
    rec = {"threshold": threshold, "pairs": []}
    if p.n_modes < 2:
        rec["dark_pairs"] = []
        return rec
    for j in range(p.n_modes):
        for k in range(j + 1, p.n_modes):
            if p.G1[j] == 0 and p.G1[k] == 0:
                continue
            h = hybrid_params(p.omega[j], p.omega[k], p.Lambda[j], p.Lambda[k],
                              p.G1[j], p.G1[k], threshold)
            rec["pairs"].append({"modes": [j + 1, k + 1], **h.to_dict()})
    rec["dark_pairs"] = [list(x) for x in pairwise_dark_scan(p, threshold)]
    return rec


def cmd_cool(args):
    p = _effective(args)
    r = cooling_point(p)
    rec = r.to_record(p)
    if args.darkmode:
        rec["darkmode"] = _dark_record(p)
    if args.format == "json":
        _write(_dumps(rec), args)
    else:
        res = SweepResult(
            ["stable", "max_re_eigenvalue"] + [f"n_{j + 1}" for j in range(p.n_modes)]
            + ["n_cavity", "residual"],
            [{"stable": r.stable, "max_re_eigenvalue": r.max_re_eigenvalue,
              **{f"n_{j + 1}": None if r.n is None else float(r.n[j])
                 for j in range(p.n_modes)},
              "n_cavity": r.n_cavity, "residual": r.lyapunov_residual}])
        _write(emit(res, "csv"), args)
    if not r.stable and args.strict:
        raise _Unstable(f"unstable point, max Re(lambda) = {r.max_re_eigenvalue:.3e}")
    return EXIT_OK


def cmd_sweep(args):
    if args.config:
        cp = read_config(args.config)
        if args.preset:
            cp.read_dict({"sweep": {"preset": args.preset}})
        spec = sweep_from_config(cp, args.grid)
    elif args.preset:
        spec = preset(args.preset, args.grid)
    else:
        raise ValidationError("config", "need --config or --preset")
    spec = spec.resolve(_overrides(args))
    if args.outputs:
        spec = replace(spec, outputs=tuple(o.strip() for o in args.outputs.split(",")))
    res = run_sweep(spec, jobs=args.jobs, progress=args.verbose,
                    timestamps=args.timestamps)
    _write(emit(res, args.format), args)
    if any(r.get("error") for r in res.rows):
        return EXIT_NUMERICAL
    if args.strict and res.metadata["n_unstable"]:
        raise _Unstable(f"{res.metadata['n_unstable']} unstable grid points")
    return EXIT_OK


def cmd_darkmode(args):
    p = _effective(args)
    rec = _dark_record(p, args.threshold)
    if args.format == "json":
        _write(_dumps(rec), args)
    else:
        cols = ["mode_j", "mode_k", "omega_1w", "omega_2w", "omega_1L", "omega_2L",
                "G_plus", "xi_w", "xi_L", "dark"]
        rows = [{"mode_j": x["modes"][0], "mode_k": x["modes"][1],
                 **{c: x[c] for c in cols[2:]}} for x in rec["pairs"]]
        _write(emit(SweepResult(cols, rows), "csv"), args)
    return EXIT_OK


def cmd_preset(args):
    if args.action == "list":
        for pid, desc in PRESETS.items():
            print(f"{pid}\t{desc}")
        return EXIT_OK
    if not args.figure_id:
        raise ValidationError("figure_id", "preset show needs a figure id")
    if args.figure_id == "fig2":
        p = fig2_physical()
        print(_dumps({"preset": "fig2", "physical": {
            k: (list(v) if isinstance(v, tuple) else v) for k, v in p.__dict__.items()}}),
            end="")
        return EXIT_OK
    spec = preset(args.figure_id)
    print(_dumps({
        "preset": spec.preset_id,
        "base": spec.base.to_dict(),
        "axis1": {"path": spec.axis1.path, "relative_to": spec.axis1.relative_to,
                  "range": [spec.axis1.values[0], spec.axis1.values[-1]],
                  "points": spec.axis1.values.size},
        "axis2": None if spec.axis2 is None else {
            "path": spec.axis2.path, "range": [spec.axis2.values[0], spec.axis2.values[-1]],
            "points": spec.axis2.values.size},
        "required": list(spec.required),
        "notes": spec.notes,
    }), end="")
    return EXIT_OK


COMMANDS = {"meanfield": cmd_meanfield, "cool": cmd_cool, "sweep": cmd_sweep,
            "darkmode": cmd_darkmode, "preset": cmd_preset}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except _Unstable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except (ValidationError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, MeanFieldDivergenceError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
