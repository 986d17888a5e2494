"""Full-grid sweep at reduced replication, then importance ranks per phi.

Usage: python scripts/importance_full_grid.py [--sweep existing.csv] [--reps 1] [--jobs 1]
Writes the sweep CSV (unless given) and prints CII and peak importances of
the 10-split and CV-min trees for every phi.
"""

import argparse

from campusepi.analysis import IMPORTANCE_COLUMNS, datasets_by_phi, fit_phi_model
from campusepi.cart import variable_importance
from campusepi.network import drop_degenerate
from campusepi.sweep import ParameterGrid, read_records, run_sweep, write_records
from campusepi.synthgen import generate, preset


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sweep", help="reuse an existing sweep CSV")
    ap.add_argument("--preset", default="desk")
    ap.add_argument("--net-seed", type=int, default=7)
    ap.add_argument("--reps", type=int, default=1)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("-o", "--output", default="full_grid.csv")
    args = ap.parse_args()

    if args.sweep:
        with open(args.sweep) as fh:
            records = list(read_records(fh))
    else:
        base = drop_degenerate(generate(preset(args.preset, args.net_seed)))
        records = run_sweep(base, ParameterGrid(), args.reps, args.seed, jobs=args.jobs, progress=True).records
        with open(args.output, "w", newline="") as fh:
            write_records(records, fh)

    print("response phi     tree    " + " ".join(f"{c:>8}" for c in IMPORTANCE_COLUMNS))
    for response in ("cii", "peak"):
        data, _, _ = datasets_by_phi(records, response)
        for phi, ds in data.items():
            model = fit_phi_model(ds)
            for label in ("10", "cv_min"):
                imp = variable_importance(model.trees[label])
                row = " ".join(f"{imp.get(c, 0.0):8.3f}" for c in IMPORTANCE_COLUMNS)
                print(f"{response:8s} {phi!s:8s} {label:7s} {row}")


if __name__ == "__main__":
    main()
