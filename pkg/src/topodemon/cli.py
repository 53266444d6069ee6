"""Command-line front end.

Each experiment subcommand builds an ExperimentSpec from the kind's
defaults, then an optional JSON config (keys are ExperimentSpec field
names), then command-line flags, later sources winning.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .decoder import build_decoding_graph, mwpm_decode
from .errors import CapacityError, ParameterError
from .experiments import DEFAULT_SPECS, ExperimentSpec, run_experiment
from .geometry import build_geometry
from .noise import NoiseParams, sample_history, shot_rng
from .thermo import (
    CALIBRATED_EPSILON_M,
    CALIBRATION_N_MAX,
    CALIBRATION_P,
    DEFAULT_DELTA_E,
    ThermoParams,
    calibrate_infrastructure,
)

OUT_ENV = "TOPODEMON_OUT"
DEFAULT_SEED = 2024

EXPERIMENT_COMMANDS = {
    "suppression": "suppression",
    "threshold": "threshold_scan",
    "phasecut": "phasecut",
    "horizon": "horizon",
    "temporal": "temporal",
    "info": "info_fraction",
    "phasediagram": "phase_diagram",
}

FLAG_FIELDS = {
    "n": "n_list", "l": "l_list", "p": "p_list", "r": "rounds", "shots": "shots", "seed": "master_seed",
    "delta_e": "delta_e", "epsilon_m": "epsilon_m", "r0": "r0", "f": "f_list", "alpha": "alpha",
    "max_rounds": "max_rounds", "bootstrap": "bootstrap", "engine": "engine",
}

EPILOG = (
    f"Physics defaults: delta_e = {DEFAULT_DELTA_E} J, shots = 8000 per point, R_0 = 1 (R = N unless --r), "
    f"epsilon_m = {CALIBRATED_EPSILON_M:.6g} J calibrated so that N_max = {CALIBRATION_N_MAX:g} "
    f"at L = 7, p = {CALIBRATION_P}, P_succ = 1 (see the 'calibrate' subcommand). "
    f"Output directory defaults to ${OUT_ENV} or ./results."
)


def _list(kind):
    def parse(text):
        try:
            values = [kind(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected comma-separated {kind.__name__} values, got {text!r}")
        if not values:
            raise argparse.ArgumentTypeError("empty list")
        return values

    return parse


def _fmt(values) -> str:
    if isinstance(values, (tuple, list)):
        if len(values) > 6:
            return f"{len(values)} values from {values[0]:g} to {values[-1]:g}"
        return ",".join(f"{v:g}" for v in values)
    return str(values)


def _common(parser):
    parser.add_argument("--seed", type=int, default=None, help=f"64-bit master seed (default: {DEFAULT_SEED})")
    parser.add_argument("--threads", type=int, default=1, help="worker threads, 0 = all cores; never changes outputs")
    parser.add_argument("--out", default=None, help=f"output directory (default: ${OUT_ENV} or ./results)")
    parser.add_argument("--config", default=None, help="JSON file with ExperimentSpec fields; flags override it")


def _experiment_parser(sub, name, kind):
    d = ExperimentSpec.__dataclass_fields__
    spec_defaults = DEFAULT_SPECS[kind]
    p = sub.add_parser(name, help=f"run the {kind} sweep", epilog=EPILOG)
    _common(p)
    rounds = spec_defaults.get("rounds")
    p.add_argument("--n", type=_list(int), help=f"separations N (default: {_fmt(spec_defaults['n_list'])})")
    p.add_argument("--l", type=_list(int), help=f"code distances L (default: {_fmt(spec_defaults['l_list'])})")
    p.add_argument("--p", type=_list(float), help=f"physical error rates (default: {_fmt(spec_defaults['p_list'])})")
    p.add_argument("--r", type=int, help=f"fixed rounds R (default: {rounds if rounds else 'R = r0 * N'})")
    p.add_argument("--shots", type=int, help=f"shots per point (default: {d['shots'].default})")
    p.add_argument("--delta-e", type=float, help=f"battery gap in J (default: {DEFAULT_DELTA_E})")
    p.add_argument("--epsilon-m", type=float,
                   help=f"measurement cost per stabilizer per round in J (default: {CALIBRATED_EPSILON_M:.6g}, calibrated)")
    p.add_argument("--r0", type=float, help="rounds per unit separation (default: 1)")
    p.add_argument("--f", type=_list(float), help="information fractions (default: 51 values from 0 to 1)")
    p.add_argument("--alpha", type=float, help=f"percolation exponent (default: {d['alpha'].default})")
    p.add_argument("--max-rounds", type=int, help="temporal sweep length (default: 80)")
    p.add_argument("--bootstrap", type=int, help="bootstrap replicates for the threshold error (default: 200)")
    p.add_argument("--engine", choices=("pymatching", "exact"), help="matching engine (default: pymatching)")
    p.set_defaults(kind=kind)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="topodemon", description="Surface-code demon simulator.", epilog=EPILOG)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, kind in EXPERIMENT_COMMANDS.items():
        _experiment_parser(sub, name, kind)

    shot = sub.add_parser("shot", help="sample and decode one seeded shot, printing the trace", epilog=EPILOG)
    _common(shot)
    shot.add_argument("--n", type=int, default=20, help="separation N (default: 20)")
    shot.add_argument("--l", type=int, default=3, help="code distance L (default: 3)")
    shot.add_argument("--p", type=float, default=0.01, help="physical error rate (default: 0.01)")
    shot.add_argument("--r", type=int, default=None, help="rounds (default: N)")
    shot.add_argument("--shot-index", type=int, default=0, help="shot index within the seed's stream (default: 0)")
    shot.add_argument("--history", action="store_true", help="also print the syndrome history dump")

    geo = sub.add_parser("geometry-dump", help="print edges and stabilizer supports as JSON")
    geo.add_argument("--n", type=int, default=3, help="separation N (default: 3)")
    geo.add_argument("--l", type=int, default=3, help="code distance L (default: 3)")
    geo.add_argument("--out", default=None, help="write to this file instead of stdout")

    cal = sub.add_parser("calibrate", help="epsilon_m * R_0 that places the horizon at a target N_max", epilog=EPILOG)
    cal.add_argument("--target-nmax", type=float, default=CALIBRATION_N_MAX,
                     help=f"target horizon (default: {CALIBRATION_N_MAX:g})")
    cal.add_argument("--p-succ", type=float, default=1.0, help="decoding success at the horizon (default: 1)")
    cal.add_argument("--p", type=float, default=CALIBRATION_P, help=f"error rate setting k_B T (default: {CALIBRATION_P})")
    cal.add_argument("--l", type=int, default=7, help="code distance L (default: 7)")
    cal.add_argument("--delta-e", type=float, default=DEFAULT_DELTA_E, help=f"battery gap (default: {DEFAULT_DELTA_E})")
    return parser


def _load_config(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParameterError("config", f"cannot read {path}: {exc}")
    if not isinstance(data, dict):
        raise ParameterError("config", "top level must be an object")
    known = set(ExperimentSpec.__dataclass_fields__) - {"kind"}
    for key in data:
        if key not in known:
            raise ParameterError(key, "unknown config field")
    return data


def spec_from_args(args) -> ExperimentSpec:
    values = {**DEFAULT_SPECS[args.kind], "master_seed": DEFAULT_SEED}
    if args.config:
        values.update(_load_config(args.config))
    for flag, fname in FLAG_FIELDS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[fname] = v
    for key in ("n_list", "l_list", "p_list", "f_list"):
        if key in values:
            values[key] = tuple(values[key])
    return ExperimentSpec(kind=args.kind, **values)


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or "results")


def _report(result, paths) -> None:
    for path in paths:
        print(f"wrote {path}")
    for name, fit in result.fits.items():
        parts = []
        for k, v in fit.parameters.items():
            se = fit.stderr.get(k)
            text = "none" if v is None else f"{v:.6g}"
            if se is not None and se == se:
                text += f" +/- {se:.2g}"
            parts.append(f"{k}={text}")
        print(f"{name}: " + ", ".join(parts))


def _run_experiment(args) -> int:
    spec = spec_from_args(args)
    out = _out_dir(args)
    result = run_experiment(spec, threads=args.threads, out_dir=out, stem=args.command)
    paths = [out / f"{args.command}.json", out / f"{args.command}.csv"]
    paths += [out / f"{args.command}_{t}.csv" for t in result.tables]
    _report(result, paths)
    return 0


def _run_shot(args) -> int:
    seed = DEFAULT_SEED if args.seed is None else args.seed
    geom = build_geometry(args.n, args.l)
    noise = NoiseParams(args.p)
    rounds = args.r if args.r is not None else args.n
    if rounds < 1:
        raise ParameterError("r", f"must be >= 1, got {rounds}")
    history, truth = sample_history(geom, noise, rounds, shot_rng(seed, args.shot_index))
    graph = build_decoding_graph(geom, noise, history)
    m = mwpm_decode(graph)
    print(f"shot n={args.n} l={args.l} p={args.p:g} r={rounds} seed={seed} index={args.shot_index}")
    print(f"defects {graph.n_defects}: " + " ".join(f"{c}@{r}" for c, r in graph.defect_nodes))
    for i, j in m.pairs:
        a, b = graph.defect_nodes[i], graph.defect_nodes[j]
        print(f"pair {a[0]}@{a[1]} - {b[0]}@{b[1]}")
    for i in m.boundary:
        a = graph.defect_nodes[i]
        print(f"boundary {a[0]}@{a[1]} -> {graph.boundary_side[i]}")
    print(f"total_weight {m.total_weight:.9g}")
    print(f"inferred_flip {m.inferred_logical_flip} true_flip {truth.true_logical_flip} "
          f"success {int(m.inferred_logical_flip == truth.true_logical_flip)}")
    if args.history:
        sys.stdout.write(history.dump(geom, noise, seed))
    return 0


def _run_geometry_dump(args) -> int:
    text = json.dumps(build_geometry(args.n, args.l).to_dict(), sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _run_calibrate(args) -> int:
    params = ThermoParams(delta_e=args.delta_e, distance=args.l)
    value = calibrate_infrastructure(args.target_nmax, args.p_succ, params, p=args.p)
    print(f"epsilon_m*R_0 = {value:.5g}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command in EXPERIMENT_COMMANDS:
            return _run_experiment(args)
        if args.command == "shot":
            return _run_shot(args)
        if args.command == "geometry-dump":
            return _run_geometry_dump(args)
        return _run_calibrate(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def parse_and_dispatch(argv) -> int:
    try:
        return main(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
