"""Print peak-age percentiles and the mean over a generation-rate sweep for both tandems.

    python3 scripts/percentile_sweep.py --percentiles 0.95,0.99,0.999
"""

import argparse

import numpy as np

from tandem_paoi import TandemParams, mean, paoi_distribution, quantile


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mu1", type=float, default=1.0)
    ap.add_argument("--mu2", type=float, default=1.25, help="second rate; the deterministic server uses D = 1/mu2")
    ap.add_argument("--percentiles", default="0.95,0.99,0.999")
    args = ap.parse_args()
    qs = [float(x) for x in args.percentiles.split(",")]
    cap = min(args.mu1, args.mu2)
    lams = np.round(np.arange(0.05, 0.951, 0.05) * cap, 6)
    for kind in ("md1", "mm1"):
        print(f"\n{kind}: lambda " + " ".join(f"{'p%g' % (100 * q):>9}" for q in qs) + "      mean")
        best = None
        for lam in lams:
            p = TandemParams.md1(lam, args.mu1, 1 / args.mu2) if kind == "md1" else TandemParams.mm1(lam, args.mu1, args.mu2)
            dist = paoi_distribution(p)
            vals = [quantile(dist, q) for q in qs]
            print(f"     {lam:6.3f} " + " ".join(f"{v:9.4f}" for v in vals) + f" {mean(dist):9.4f}")
            if best is None or vals[len(vals) // 2] < best[1]:
                best = (lam, vals[len(vals) // 2])
        print(f"  lowest p{100 * qs[len(qs) // 2]:g} at lambda = {best[0]:g}")


if __name__ == "__main__":
    main()
