"""Command-line entry point: ``campusepi <subcommand>``.

Exit codes: 0 success, 1 I/O or data error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import __version__
from .analysis import analyze_records
from .fileio import atomic_write, digest, read_kv
from .epidemic import EpidemicParams, SimConfig, run_simulation
from .network import ParseError, network_stats, read_enrollments, to_csv
from .sweep import (
    GRID_ORDER,
    MODES,
    ParameterGrid,
    build_grid,
    format_value,
    parse_phi,
    read_records,
    records_to_csv,
    reduce_network,
    run_sweep,
    subsample,
)
from .synthgen import PRESETS, GenerationError, SynthConfig, generate, preset


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def write_manifest(path: Path, command: str, seed, config: dict, inputs, outputs) -> None:
    manifest = {
        "tool": "campusepi",
        "version": __version__,
        "command": command,
        "seed": seed,
        "config": config,
        "inputs": {str(p): digest(p) for p in inputs},
        "outputs": sorted(str(p) for p in outputs),
    }
    atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _load_net(path):
    try:
        return read_enrollments(path)
    except (OSError, ParseError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read network {path}: {exc}") from None


def _phi_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(parse_phi(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"bad phi list {text!r}") from None


def cmd_generate(args) -> int:
    if args.config:
        try:
            cfg = SynthConfig.from_kv(read_kv(args.config))
        except (GenerationError, ValueError, OSError) as exc:
            raise UsageError(str(exc)) from None
        if args.seed is not None:
            cfg = SynthConfig(**{**cfg.__dict__, "seed": args.seed})
    else:
        name = args.preset or "sfu-like"
        if name not in PRESETS:
            raise UsageError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
        cfg = preset(name, args.seed or 0)
    try:
        net = generate(cfg)
    except GenerationError as exc:
        raise UsageError(f"infeasible config: {exc}") from None
    out = Path(args.output)
    atomic_write(out, to_csv(net))
    inputs = [args.config] if args.config else []
    write_manifest(
        out.with_suffix(out.suffix + ".manifest.json"), "generate", cfg.seed,
        {"preset": args.preset, **cfg.to_kv()}, inputs, [out],
    )
    return 0


def cmd_stats(args) -> int:
    net = _load_net(args.network)
    text = network_stats(net).to_json() + "\n"
    if args.output:
        atomic_write(Path(args.output), text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_reduce(args) -> int:
    net = _load_net(args.network)
    phi = parse_phi(args.phi)
    if args.mode == "thin" and math.isinf(phi):
        raise UsageError("thin mode requires a finite --phi")
    reduced = reduce_network(net, phi, args.mode, args.seed)
    out = Path(args.output)
    atomic_write(out, to_csv(reduced))
    stats_path = out.with_suffix(out.suffix + ".stats.json")
    atomic_write(stats_path, network_stats(reduced).to_json() + "\n")
    write_manifest(
        out.with_suffix(out.suffix + ".manifest.json"), "reduce", args.seed,
        {"phi": format_value(phi), "mode": args.mode}, [args.network], [out, stats_path],
    )
    return 0


def _params_from_args(args) -> EpidemicParams:
    base = EpidemicParams.central().__dict__.copy()
    for name in base:
        v = getattr(args, name, None)
        if v is not None:
            base[name] = v
    return EpidemicParams(**base)


def cmd_simulate(args) -> int:
    net = _load_net(args.network)
    phi = parse_phi(args.phi)
    reduced = reduce_network(net, phi, args.mode, args.seed)
    if len(reduced) == 0:
        raise DataError("reduced network is empty")
    try:
        params = _params_from_args(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cfg = SimConfig(args.days, args.n_initial, args.seed)
    traj = run_simulation(reduced, params, cfg)
    out = Path(args.output)
    atomic_write(out, traj.to_csv())
    write_manifest(
        out.with_suffix(out.suffix + ".manifest.json"), "simulate", args.seed,
        {**params.__dict__, "phi": format_value(phi), "mode": args.mode,
         "n_days": args.days, "n_initial": args.n_initial},
        [args.network], [out],
    )
    return 0


def cmd_sweep(args) -> int:
    grid = ParameterGrid()
    if args.grid:
        try:
            grid = ParameterGrid.from_kv(read_kv(args.grid))
        except (ValueError, OSError) as exc:
            raise UsageError(f"bad grid config: {exc}") from None
    if args.phi:
        grid = grid.replace(phi=_phi_list(args.phi))
    if args.mode == "thin" and any(math.isinf(p) for p in grid.phi):
        raise UsageError("thin mode excludes phi = inf; pass --phi 20,50,100")
    net = _load_net(args.network)
    combos = build_grid(grid)
    if args.subsample_grid:
        combos = subsample(combos, args.subsample_grid, args.seed)
    sim = SimConfig(args.days, args.n_initial, 0)
    result = run_sweep(
        net, combos, args.reps, args.seed, args.mode, sim, jobs=args.jobs,
        keep_trajectories=args.keep_trajectories, progress=not args.quiet,
    )
    out = Path(args.output)
    outputs = [out]
    atomic_write(out, records_to_csv(result.records))
    stats = {format_value(phi): json.loads(s.to_json()) for phi, s in result.stats.items()}
    stats_path = out.with_suffix(".stats.json")
    atomic_write(stats_path, json.dumps(stats, indent=2) + "\n")
    outputs.append(stats_path)
    if args.keep_trajectories:
        tdir = out.with_suffix(".trajectories")
        for (ci, rep), traj in result.trajectories.items():
            p = tdir / f"combo{ci:05d}_rep{rep:03d}.csv"
            atomic_write(p, traj.to_csv())
            outputs.append(p)
    write_manifest(
        out.with_suffix(".manifest.json"), "sweep", args.seed,
        {"grid": grid.to_kv(), "reps": args.reps, "mode": args.mode,
         "subsample_grid": args.subsample_grid, "n_days": args.days,
         "n_initial": args.n_initial, "n_combinations": len(combos)},
        [args.network] + ([args.grid] if args.grid else []), outputs,
    )
    return 0


def cmd_analyze(args) -> int:
    try:
        with open(args.sweep, newline="", encoding="utf-8") as fh:
            records = list(read_records(fh))
    except KeyError as exc:
        raise DataError(f"sweep CSV is missing column {exc.args[0]!r}") from None
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read sweep CSV: {exc}") from None
    if not records:
        raise DataError("sweep CSV has no records")
    outdir = Path(args.output)
    files = analyze_records(
        records, args.response, outdir, folds=args.folds, seed=args.seed,
        outlier_sd=args.outlier_sd, remove_outliers=args.remove_outliers,
    )
    write_manifest(
        outdir / f"{args.response}.manifest.json", "analyze", args.seed,
        {"response": args.response, "folds": args.folds, "outlier_sd": args.outlier_sd,
         "remove_outliers": args.remove_outliers},
        [args.sweep], files,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="campusepi", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic enrollment CSV")
    g.add_argument("--preset", help=f"one of {', '.join(PRESETS)}")
    g.add_argument("--config", help="flat key = value SynthConfig file")
    g.add_argument("--seed", type=int)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("stats", help="print NetworkStats JSON")
    s.add_argument("network")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_stats)

    r = sub.add_parser("reduce", help="threshold or thin, then keep the largest component")
    r.add_argument("network")
    r.add_argument("--phi", default="inf")
    r.add_argument("--mode", choices=MODES, default="threshold")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("-o", "--output", required=True)
    r.set_defaults(func=cmd_reduce)

    m = sub.add_parser("simulate", help="one run, written as a trajectory CSV")
    m.add_argument("network")
    m.add_argument("--phi", default="inf")
    m.add_argument("--mode", choices=MODES, default="threshold")
    for name in GRID_ORDER[:-1]:
        m.add_argument(f"--{name}", type=float)
    m.add_argument("--days", type=int, default=90)
    m.add_argument("--n-initial", type=int, default=10)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("-o", "--output", required=True)
    m.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="replicated runs over the parameter grid")
    w.add_argument("network")
    w.add_argument("--grid", help="flat key = comma,separated,values file")
    w.add_argument("--phi", help="override the phi list, e.g. 20,50,100,inf")
    w.add_argument("--reps", type=int, default=50)
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--mode", choices=MODES, default="threshold")
    w.add_argument("--subsample-grid", type=int, default=0, metavar="N")
    w.add_argument("--days", type=int, default=90)
    w.add_argument("--n-initial", type=int, default=10)
    w.add_argument("--jobs", type=int, default=1)
    w.add_argument("--keep-trajectories", action="store_true")
    w.add_argument("--quiet", action="store_true")
    w.add_argument("-o", "--output", required=True)
    w.set_defaults(func=cmd_sweep)

    a = sub.add_parser("analyze", help="per-phi regression trees over a sweep CSV")
    a.add_argument("sweep")
    a.add_argument("--response", choices=("cii", "peak"), default="cii")
    a.add_argument("--folds", type=int, default=10)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--outlier-sd", type=float, default=4.0)
    a.add_argument("--remove-outliers", action="store_true")
    a.add_argument("-o", "--output", required=True, help="output directory")
    a.set_defaults(func=cmd_analyze)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"campusepi: error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"campusepi: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
