"""Mean CII by class-size threshold, thresholded vs randomly thinned networks.

Usage: python scripts/threshold_vs_thinning.py [--preset sfu-like] [--reps 30] [--jobs 1]
"""

import argparse
import math

import numpy as np
from scipy import stats

from campusepi.epidemic import EpidemicParams
from campusepi.network import drop_degenerate
from campusepi.sweep import PARAM_NAMES, ParameterGrid, run_sweep
from campusepi.synthgen import generate, preset


def ci(x, seed):
    res = stats.bootstrap((x,), np.mean, n_resamples=10_000, method="percentile", random_state=seed)
    return res.confidence_interval.low, res.confidence_interval.high


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--preset", default="sfu-like")
    ap.add_argument("--net-seed", type=int, default=7)
    ap.add_argument("--reps", type=int, default=30)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    base = drop_degenerate(generate(preset(args.preset, args.net_seed)))
    c = EpidemicParams.central()
    point = {n: (getattr(c, n),) for n in PARAM_NAMES}
    phis = (20, 50, 100, math.inf)
    out = {}
    for mode, ph in (("threshold", phis), ("thin", phis[:3])):
        res = run_sweep(base, ParameterGrid(**point, phi=ph), args.reps, args.seed, mode=mode, jobs=args.jobs)
        for phi in ph:
            out[mode, phi] = np.array([r.cii for r in res.records if r.phi == phi])
        for phi, st in res.stats.items():
            print(f"{mode:9s} phi={phi:<5} students={st.n_students_lcc} enrollments={st.n_enrollments}")

    print(f"\n{'phi':>5} {'mode':>9} {'mean CII':>9}  95% CI")
    for (mode, phi), x in sorted(out.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        lo, hi = ci(x, 0)
        print(f"{phi:>5} {mode:>9} {x.mean():9.4f}  [{lo:.4f}, {hi:.4f}]")


if __name__ == "__main__":
    main()
