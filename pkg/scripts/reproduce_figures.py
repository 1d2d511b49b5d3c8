"""Write the data files behind every figure into one directory.

    python3 scripts/reproduce_figures.py --out figures --packets 1000000
"""

import argparse
import sys

from tandem_paoi.cli import FIGURES, main as cli_main


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="figures")
    ap.add_argument("--packets", type=int, default=1_001_000, help="packets per simulated curve, warm-up included")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--figures", default=",".join(FIGURES))
    args = ap.parse_args()
    for fig in args.figures.split(","):
        code = cli_main(["--mode", "reproduce", "--figure", fig, "--packets", str(args.packets),
                         "--seed", str(args.seed), "--out", f"{args.out}/{fig}"])
        if code:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
