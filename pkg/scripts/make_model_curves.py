#!/usr/bin/env python3
"""Export the model asymmetry curves on a fine dt grid.

Writes a plot-ready delimited file with columns dt, A_QM, A_SD, PS_min,
PS_max. Equivalent to `flavourasym curves` but convenient for notebook use.
"""

import argparse

import numpy as np

from flavourasym.models import ModelParams, curve_rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dm", type=float, default=0.507)
    ap.add_argument("--tau", type=float, default=1.53)
    ap.add_argument("--step", type=float, default=0.05)
    ap.add_argument("--max", type=float, default=20.0)
    ap.add_argument("--out", default="model_curves.csv")
    args = ap.parse_args()

    p = ModelParams(dm=args.dm, tau=args.tau)
    grid = np.arange(0.0, args.max + 0.5 * args.step, args.step)
    rows = curve_rows(grid, p)
    with open(args.out, "w") as f:
        f.write("dt,A_QM,A_SD,PS_min,PS_max\n")
        for r in rows:
            f.write(",".join("%.9g" % v for v in r) + "\n")
    print(f"wrote {len(rows)} rows to {args.out}")


if __name__ == "__main__":
    main()
