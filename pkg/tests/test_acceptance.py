"""Acceptance criteria 1-11, each at its stated tolerance and time budget.

Every test records one PASS/FAIL line; the lines are printed in the pytest
terminal summary, or directly when this file is run as a script.
"""
import cmath
import itertools
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from sci_koopman.dynamics import (
    FiniteTree,
    build_tree_map,
    check_measure_preservation,
    compose,
    identity_map,
    modulus_probe,
    perturbation_sup,
    silver_tree,
    single_toggle_map,
    star_counts,
    translation_map,
)
from sci_koopman.koopman import (
    assemble_section,
    block_union_spectrum,
    cycle_decomposition,
    exact_cycle_spectrum,
    lower_norms,
    predicted_spectrum_tree,
    verify_character_eigenpair,
)
from sci_koopman.spectral_sets import (
    SpectralSet,
    circle_grid,
    dyadic_root_approximant,
    hausdorff_distance,
    roots_of_unity,
)
from sci_koopman.tower import (
    Schedule,
    consistency_check,
    gamma_set,
    residual_field,
    run_pseudospectrum_tower,
    spectral_grid,
)
from sci_koopman.xi import instance_generators, run_xi_tower, xi_exact, xi_tower_cell

RESULTS: dict[int, str] = {}


class Criterion:
    def __init__(self, number, title, budget):
        self.number, self.title, self.budget = number, title, budget

    def __enter__(self):
        self.t0 = time.perf_counter()
        self.detail = ""
        return self

    def __exit__(self, exc_type, exc, tb):
        dt = time.perf_counter() - self.t0
        ok = exc_type is None and dt < self.budget
        why = self.detail if exc_type is None else f"{exc_type.__name__}: {exc}"
        if exc_type is None and dt >= self.budget:
            why += f" (over budget {self.budget}s)"
        RESULTS[self.number] = f"[{'PASS' if ok else 'FAIL'}] {self.number:>2}. {self.title}: {why} ({dt:.2f}s)"
        if exc_type is None and not ok:
            raise AssertionError(RESULTS[self.number])
        return False


def test_01_cycle_spectra():
    with Criterion(1, "cycle spectra of tau_0", 30) as c:
        eps = 0.05
        worst = []
        for d in (1, 2, 3):
            sch = Schedule(n2=[24, 32, 40, 48], n1_rule="one_index", dict_depth_cap=d)
            out, trace = run_pseudospectrum_tower(translation_map(0), eps, 2, sch)
            n2 = sch.n2[-1]
            bound = math.sqrt(2) / n2 + eps + 2 / n2
            dh = hausdorff_distance(out, roots_of_unity(2 ** d))
            assert dh <= bound, (d, dh, bound)
            assert trace.stable
            worst.append(dh / bound)
        c.detail = f"max d_H/bound = {max(worst):.3f}"


def test_02_full_circle_vs_trivial_gap():
    with Criterion(2, "full-circle vs trivial spectrum gap", 5) as c:
        one = SpectralSet.of(1.0)
        circle = circle_grid(64)
        gap = hausdorff_distance(one, circle)
        assert 2 - 0.01 <= gap <= 2
        ident = exact_cycle_spectrum(cycle_decomposition(assemble_section(identity_map(), 8, 8)).distinct_lengths())
        assert hausdorff_distance(ident, one) == 0
        for n, r in itertools.product(range(1, 4), range(1, 4)):
            d = n + r + 7  # U_n carries 2^7-cycles at this depth
            sec = assemble_section(single_toggle_map(n, r), d, d)
            parts = [roots_of_unity(L) for L in cycle_decomposition(sec).distinct_lengths()]
            pred = block_union_spectrum(parts)
            assert hausdorff_distance(pred, circle) < 1e-12, (n, r)
            assert hausdorff_distance(pred, ident) >= 2 - 0.01
        c.detail = f"d_H({{1}}, circle_grid(64)) = {gap:.6f}"


def test_03_perturbation_smallness():
    with Criterion(3, "perturbation smallness of F^(n)", 60) as c:
        slack = []
        for n, r in itertools.product(range(1, 5), range(1, 9)):
            D = 2 * r + 4
            sup = perturbation_sup(single_toggle_map(n, r), D, cap=D)
            bound = Fraction(1, 2 ** (r + 1))
            assert sup <= bound, (n, r, sup)
            slack.append(sup / bound)
        c.detail = f"32 (n, r) pairs, max sup/bound = {max(slack)}"


def test_04_character_eigenpairs():
    with Criterion(4, "character eigenpairs of tau_r", 10) as c:
        worst, count = 0.0, 0
        for m in range(1, 9):
            for r in range(m):
                for k in range(2 ** m):
                    worst = max(worst, verify_character_eigenpair(r, m, k))
                    count += 1
        assert worst <= 1e-12
        c.detail = f"{count} eigenpairs, max deviation {worst:.1e}"


def test_05_measure_preservation():
    with Criterion(5, "exact measure preservation", 60) as c:
        maps = [translation_map(r) for r in range(5)]
        maps += [single_toggle_map(n, r) for n in (1, 2, 4) for r in (1, 3)]
        trees = [FiniteTree.full(5), silver_tree({1, 2}, "0110100110", 10), silver_tree({0, 3, 5}, "111000", 6),
                 FiniteTree.branch("0101"), FiniteTree.from_words(["000", "101", "11"], 4)]
        maps += [build_tree_map(S, v) for S in trees for v in ("dump", "odometer")]
        for F in maps:
            for D in (1, 4, 10):
                rep = check_measure_preservation(F, D)
                assert rep.max_deviation == 0, (F.descriptor, D)
        c.detail = f"{len(maps)} maps at depths 1, 4, 10: deviation exactly 0"


def test_06_silver_star_counts():
    with Criterion(6, "Silver star-count mechanism", 10) as c:
        rng = np.random.default_rng(2024)
        theta = math.sqrt(2) - 1
        z0 = cmath.exp(2j * math.pi * theta)
        checked = 0
        for _ in range(20):
            M = int(rng.integers(1, 11))
            A = {int(a) for a in np.flatnonzero(rng.random(M) < 0.4)}
            x = "".join(rng.choice(["0", "1"], M))
            S = silver_tree(A, x, M)
            k = star_counts(S)
            for m in range(1, M + 1):
                assert k[m - 1] >= len([i for i in range(m) if i not in A])
            P = predicted_spectrum_tree(S, "odometer")
            assert roots_of_unity(2 ** k[-1]).issubset(P, 1e-9)
            for r in range(k[-1] + 1):
                lam, err = dyadic_root_approximant(z0, r)
                assert err <= 2 * math.pi * 2.0 ** -r
                assert P.contains(lam, 1e-9)
                checked += 1
        c.detail = f"20 trees, {checked} approximants inside the predicted set"


def _gadget_grid_samples():
    full = FiniteTree.full(3)
    return [
        (identity_map(), 3, 6),
        (translation_map(0), 3, 8),
        (translation_map(2), 4, 6),
        (single_toggle_map(1, 1), 4, 6),
        (single_toggle_map(2, 2), 5, 5),
        (build_tree_map(full, "odometer"), 4, 6),
        (build_tree_map(full, "dump"), 3, 6),
        (build_tree_map(silver_tree({1}, "0100", 4), "dump"), 4, 5),
        (compose(translation_map(1), single_toggle_map(1, 2)), 4, 7),
        (compose(build_tree_map(full, "dump"), translation_map(0)), 3, 6),
    ]


def test_07_residual_field_properties():
    with Criterion(7, "residual field Lipschitz and monotone", 60) as c:
        worst_lip, worst_mono = 0.0, 0.0
        for F, d, n in _gadget_grid_samples():
            g = spectral_grid(n, cap=2.5)
            n1 = max(d + 1, F.info_depth(d + 1))
            coarse = residual_field(F, d, n1, 2, g, method="svd")
            fine = residual_field(F, d + 1, n1, 2, g, method="svd")
            P, v = g.points, coarse.values
            D = np.abs(P[:, None] - P[None, :])
            near = (D > 0) & (D <= g.mesh + 1e-12)
            worst_lip = max(worst_lip, float((np.abs(v[:, None] - v[None, :]) - D)[near].max()))
            worst_mono = max(worst_mono, float((fine.values - coarse.values).max()))
        assert worst_lip <= 1e-9 and worst_mono <= 1e-9
        c.detail = f"10 samples, max Lipschitz excess {worst_lip:.1e}, max refinement increase {worst_mono:.1e}"


def test_08_one_index_collapse():
    with Criterion(8, "one-index collapse", 60) as c:
        gadgets = [identity_map(), translation_map(0), translation_map(3), single_toggle_map(1, 1),
                   single_toggle_map(3, 2), build_tree_map(FiniteTree.full(4), "odometer"),
                   build_tree_map(silver_tree({0, 2}, "1011", 4), "odometer")]
        cases = 0
        for F in gadgets:
            assert modulus_probe(F, 10).lipschitz
            for n2 in range(1, 7):
                g = spectral_grid(n2, cap=2.5)
                for eps in (0.3, 0.6, 1.1):
                    one = gamma_set(residual_field(F, n2, n2, 2, g), eps, n2)
                    for n1 in range(n2 + 1, n2 + 5):
                        two = gamma_set(residual_field(F, n2, n1, 2, g), eps, n2)
                        assert np.array_equal(np.sort_complex(one.points), np.sort_complex(two.points))
                        cases += 1
        c.detail = f"{cases} (gadget, n2, eps, n1) cases identical"


def test_09_xi_oracle_equivalence():
    with Criterion(9, "Xi_m oracle equivalence", 30) as c:
        specs = []
        for m, T, seed in itertools.product((1, 2, 3), range(7), range(10)):
            specs.append({"kind": "threshold_random", "m": m, "T": T, "seed": 1000 * m + 10 * T + seed})
        specs += [{"kind": "constant", "m": m, "b": b} for m in (1, 2, 3) for b in (0, 1)]
        specs += [{"kind": "witness_at", "m": 3, "coordinates": [a, 1, b]} for a in (1, 4) for b in (2, 6)]
        agree = 0
        for spec in specs:
            A = instance_generators(spec)
            T, m = A.threshold, A.m
            exact = xi_exact(A)
            value, tr = run_xi_tower(A, m, [list(range(1, T + 4))] * m)
            assert tr.stable and value == exact, spec
            # saturation: the cell equals the truth from N_r = T+1 on, and no level flips later
            for extra in itertools.product((0, 1), repeat=m):
                assert xi_tower_cell(A, m, [T + 1 + e for e in extra]) == exact
            assert all(idx <= T + 1 for flips in tr.flips.values() for idx in flips)
            agree += 1
        assert len(specs) >= 200
        c.detail = f"{agree}/{len(specs)} thresholded instances agree, all saturate at T+1"


def test_10_consistency_axiom():
    with Criterion(10, "consistency axiom replay", 30) as c:
        rng = np.random.default_rng(7)

        def gamma_alg(n2, n1, eps):
            g = spectral_grid(n2, cap=2.2)
            return lambda oracle: gamma_set(residual_field(oracle, n2, n1, 2, g), eps, n2)

        triples = [(gamma_alg(2, 2, 0.7), identity_map(), identity_map()),
                   (gamma_alg(3, 3, 0.5), translation_map(1), compose(translation_map(1), identity_map()))]
        while len(triples) < 50:
            n2 = int(rng.integers(2, 4))
            n1 = int(rng.integers(2 * n2 - 2, 2 * n2 + 1))
            n1 = max(n1, n2)
            M = n1 + 3
            A = {int(a) for a in np.flatnonzero(rng.random(n1 + 1) < 0.5)}
            x = "".join(rng.choice(["0", "1"], M))
            S = silver_tree(A, x, M)
            S2 = silver_tree(A | {n1 + 1, n1 + 2}, x[: n1 + 1] + ("1" if x[n1 + 1] == "0" else "0") + x[n1 + 2:], M)
            assert S.agrees_with(S2, n1 + 1) and S != S2
            version = ("odometer", "dump")[len(triples) % 2]
            triples.append((gamma_alg(n2, n1, 0.6), build_tree_map(S, version), build_tree_map(S2, version)))
        passed = 0
        for alg, F, G in triples:
            rep = consistency_check(alg, F, G)
            assert rep.applicable and rep.passed
            passed += 1
        c.detail = f"{passed}/50 triples replayed with identical output"


def test_11_svd_vs_cycle_exact():
    with Criterion(11, "SVD vs closed-form cycle lower norms", 30) as c:
        rng = np.random.default_rng(11)
        maps = [identity_map()] + [translation_map(r) for r in range(6)]
        maps += [single_toggle_map(n, r) for n in (1, 2, 3) for r in (1, 2, 3)]
        maps += [build_tree_map(S, "odometer") for S in (FiniteTree.full(3), silver_tree({1}, "010", 3))]
        maps += [build_tree_map(FiniteTree.full(1), "dump")]
        worst, sections = 0.0, 0
        for F in maps:
            for n2 in range(1, 7):
                sec = assemble_section(F, n2, max(n2, F.info_depth(n2)))
                if not sec.is_permutation:
                    continue
                z = 2 * np.sqrt(rng.random(100)) * np.exp(2j * np.pi * rng.random(100))
                diff = np.abs(lower_norms(sec, z, 2, "svd") - lower_norms(sec, z, 2, "cycle_exact"))
                worst = max(worst, float(diff.max()))
                sections += 1
        assert worst <= 1e-10
        c.detail = f"{sections} permutation sections x 100 z, max |svd - cycle| = {worst:.1e}"


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_"):
            try:
                fn()
            except AssertionError:
                pass
    for k in sorted(RESULTS):
        print(RESULTS[k])
