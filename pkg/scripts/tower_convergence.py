#!/usr/bin/env python3
"""Track the pseudospectrum tower on a few gadgets as the grid refines.

Prints, per gadget and grid index, the size of Gamma and its Hausdorff
distance to the predicted spectrum of the same dictionary section.
"""
import argparse

from sci_koopman.dynamics import FiniteTree, build_tree_map, identity_map, silver_tree, translation_map
from sci_koopman.koopman import assemble_section, cycle_decomposition, exact_cycle_spectrum
from sci_koopman.spectral_sets import hausdorff_distance
from sci_koopman.tower import Schedule, run_pseudospectrum_tower

GADGETS = {
    "identity": (identity_map(), 4),
    "tau_0": (translation_map(0), 3),
    "tau_2": (translation_map(2), 4),
    "odometer_full3": (build_tree_map(FiniteTree.full(3), "odometer"), 5),
    "odometer_silver": (build_tree_map(silver_tree({1, 3}, "01101", 5), "odometer"), 6),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps", type=float, default=0.15)
    ap.add_argument("--n2", type=int, nargs="+", default=[12, 16, 24, 32])
    args = ap.parse_args()
    print(f"{'gadget':>16} {'n2':>4} {'|Gamma|':>8} {'d_H(pred)':>10}")
    for name, (F, d) in GADGETS.items():
        sec = assemble_section(F, d, max(d, F.info_depth(d)))
        pred = exact_cycle_spectrum(cycle_decomposition(sec).distinct_lengths())
        for n2 in args.n2:
            sch = Schedule(n2=[n2], n1_rule="one_index", dict_depth_cap=d, K=1)
            out, _ = run_pseudospectrum_tower(F, args.eps, 2, sch)
            print(f"{name:>16} {n2:>4} {len(out):>8} {hausdorff_distance(out, pred):>10.4f}")


if __name__ == "__main__":
    main()
