#!/usr/bin/env python3
"""Empirical saturation index of the Xi towers on random thresholded oracles."""
import argparse
from collections import Counter

from sci_koopman.xi import instance_generators, run_xi_tower


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=100)
    ap.add_argument("--m", type=int, default=2)
    ap.add_argument("--T-max", type=int, default=6)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    last_flip = Counter()
    wrong = 0
    for i in range(args.count):
        T = i % (args.T_max + 1)
        A = instance_generators({"kind": "threshold_random", "m": args.m, "T": T, "seed": args.seed + i})
        value, tr = run_xi_tower(A, args.m, [list(range(1, T + 5))] * args.m)
        wrong += value != A.ground_truth
        flips = tr.flips.get(1, [])
        last_flip[(T, max(flips) if flips else 0)] += 1
    print(f"{args.count} instances, {wrong} disagreements with ground truth")
    print("T  last outer flip  count")
    for (T, f), c in sorted(last_flip.items()):
        print(f"{T}  {f:>15}  {c:>5}")


if __name__ == "__main__":
    main()
