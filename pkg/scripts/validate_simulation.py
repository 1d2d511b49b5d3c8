"""Compare analytic peak-age CDFs with a seeded simulation for both tandems.

    python3 scripts/validate_simulation.py --packets 1000000 --seed 1
"""

import argparse

from tandem_paoi import (
    CASES,
    SimConfig,
    TandemParams,
    case_probabilities,
    cdf_from_density,
    collect_paoi,
    empirical_from_arrays,
    ks_distance,
    mean,
    paoi_distribution,
)
from tandem_paoi.numerics import binomial_z, dkw_bound


def validate(params: TandemParams, packets: int, warmup: int, seed: int) -> None:
    delta, codes = collect_paoi(SimConfig(params, packets + warmup, warmup, seed))
    emp = empirical_from_arrays(delta, codes)
    dist = paoi_distribution(params)
    ks = ks_distance(lambda x: cdf_from_density(dist, x), emp.overall)
    print(f"{params.kind}: n={emp.n}  KS={ks:.5f}  (99% DKW radius {dkw_bound(emp.n):.5f})")
    for c, p in zip(CASES, case_probabilities(params)):
        dc = paoi_distribution(params, c)
        sub = emp.by_case[c]
        ks_c = ks_distance(lambda x: cdf_from_density(dc, x), sub)
        z = binomial_z(emp.counts[c], emp.n, p)
        print(f"  case {c.value}: p={p:.6f} freq={emp.counts[c] / emp.n:.6f} z={z:+.2f} KS={ks_c:.5f}")
    m = mean(dist)
    print(f"  mean analytic={m:.5f} simulated={emp.overall.mean():.5f} rel.err={abs(emp.overall.mean() / m - 1):.2e}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--packets", type=int, default=1_000_000, help="post-warm-up packets")
    ap.add_argument("--warmup", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--lam", type=float, default=0.5)
    ap.add_argument("--mu1", type=float, default=1.0)
    ap.add_argument("--mu2", type=float, default=1.25)
    ap.add_argument("--d", type=float, default=0.8)
    args = ap.parse_args()
    validate(TandemParams.md1(args.lam, args.mu1, args.d), args.packets, args.warmup, args.seed)
    validate(TandemParams.mm1(args.lam, args.mu1, args.mu2), args.packets, args.warmup, args.seed + 1)


if __name__ == "__main__":
    main()
