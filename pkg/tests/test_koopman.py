import cmath
import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import assume, given, strategies as st

from sci_koopman.cantor import CantorPoint, code_to_word, quadrature, riemann_norm
from sci_koopman.dynamics import (
    FiniteTree,
    build_tree_map,
    constant_map,
    identity_map,
    silver_tree,
    single_toggle_map,
    translation_map,
)
from sci_koopman.koopman import (
    PointOracle,
    ResolutionError,
    SectionNotApplicable,
    assemble_section,
    block_union_spectrum,
    cycle_decomposition,
    cycle_lower_norm,
    exact_cycle_spectrum,
    lower_norm,
    lower_norms,
    predicted_spectrum_tree,
    residual_values,
    verify_character_eigenpair,
)
from sci_koopman.spectral_sets import SpectralSet, circle_grid, hausdorff_distance, roots_of_unity

zs = st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False)


def dense_lower_norm_p2(sec, z):
    """Generalised Hermitian eigenproblem on the uncompressed node matrix."""
    n = sec.size
    A = np.zeros((sec.action.size, n), complex)
    A[np.arange(sec.action.size), sec.action] += 1
    A[np.arange(sec.action.size), sec.cyl] -= z
    W = np.diag(sec.weights)
    G = A.conj().T @ W @ A
    B = np.diag(sec.cylinder_weights())
    lam = scipy.linalg.eigh(G, B, eigvals_only=True)
    return math.sqrt(max(lam[0], 0.0))


def perm_matrix(perm):
    n = len(perm)
    P = np.zeros((n, n))
    P[np.arange(n), perm] = 1  # (K g)[c] = g[perm[c]]
    return P


def resolvent_lower_norm(perm, z, p):
    T = perm_matrix(perm) - z * np.eye(len(perm))
    try:
        inv = np.linalg.inv(T)
    except np.linalg.LinAlgError:
        return 0.0
    return 1.0 / np.linalg.norm(inv, 1 if p == 1 else np.inf)


# --- assembly ----------------------------------------------------------------

def test_identity_section():
    sec = assemble_section(identity_map(), 2, 2)
    assert sec.is_permutation and list(sec.perm) == [0, 1, 2, 3]


def test_translation_four_cycle():
    sec = assemble_section(translation_map(0), 2, 2)
    assert list(sec.perm) == [1, 2, 3, 0]
    cyc = cycle_decomposition(sec)
    assert cyc.cycles == [(4, ["00", "10", "01", "11"])]


def test_resolution_error():
    F = build_tree_map(FiniteTree.full(3), "dump")
    with pytest.raises(ResolutionError) as e:
        assemble_section(F, 3, 3)
    assert e.value.required == 4
    assemble_section(F, 3, 4)


def test_query_log_is_the_node_set():
    oracle = PointOracle(translation_map(1))
    assemble_section(oracle, 3, 5)
    q = quadrature(5)
    assert oracle.queried_points() == [x for x, _ in q.nodes]
    assert oracle.query_count() == 32


@pytest.mark.parametrize("F", [translation_map(2), single_toggle_map(2, 1),
                               build_tree_map(silver_tree({0}, "1010", 4), "dump")])
def test_exact_assembly_matches_vectorised(F):
    n2 = 4
    n1 = max(n2, F.info_depth(n2))
    a = assemble_section(F, n2, n1)
    b = assemble_section(F, n2, n1, exact=True)
    assert np.array_equal(a.action, b.action)


def test_section_csv_rows():
    rows = assemble_section(translation_map(0), 1, 2).to_csv_rows()
    assert rows == [("00", "1", 1, 2), ("10", "0", 1, 2), ("01", "1", 1, 2), ("11", "0", 1, 2)]


def test_constant_map_section_is_not_permutation():
    sec = assemble_section(constant_map(CantorPoint("", "0")), 2, 2)
    assert not sec.is_permutation
    with pytest.raises(SectionNotApplicable):
        cycle_decomposition(sec)
    with pytest.raises(SectionNotApplicable):
        lower_norm(sec, 0.5, 2, "cycle_exact")


# --- residuals -----------------------------------------------------------------

def test_residual_examples():
    sec = assemble_section(identity_map(), 2, 3)
    assert np.all(residual_values(sec, np.ones(4), 1) == 0)
    sec = assemble_section(translation_map(0), 2, 3)
    g = np.eye(4)[1]
    assert np.array_equal(residual_values(sec, g, 0), g[sec.action])
    with pytest.raises(ValueError):
        residual_values(sec, np.ones(3), 0)


@pytest.mark.parametrize("r,m,k", [(0, 3, 1), (1, 4, 3), (2, 5, 3)])
def test_residual_on_characters(r, m, k):
    sec = assemble_section(translation_map(r), m, m)
    chi = np.exp(2j * np.pi * k * np.arange(2 ** m) / 2 ** m)
    mu = cmath.exp(2j * math.pi * k * 2 ** r / 2 ** m)
    z = 0.3 - 0.2j
    assert np.allclose(residual_values(sec, chi, z), (mu - z) * chi[sec.cyl], atol=1e-12)


# --- lower norms -------------------------------------------------------------------

def test_lower_norm_examples():
    for p in (1, 2, np.inf):
        assert lower_norm(assemble_section(identity_map(), 2, 2), 1, p) == pytest.approx(0, abs=1e-12)
    sec = assemble_section(translation_map(0), 2, 2)
    assert lower_norm(sec, 0, 2, "svd") == pytest.approx(1)
    assert lower_norm(sec, 0, 2, "cycle_exact") == pytest.approx(1)
    assert lower_norm(sec, 1j, 2, "svd") == pytest.approx(0, abs=1e-12)
    assert lower_norm(sec, 1j, 2, "cycle_exact") == pytest.approx(0, abs=1e-12)


SECTIONS = [
    ("identity", assemble_section(identity_map(), 3, 3)),
    ("tau0", assemble_section(translation_map(0), 3, 4)),
    ("toggle", assemble_section(single_toggle_map(1, 1), 4, 4)),
    ("dump", assemble_section(build_tree_map(FiniteTree.full(2), "dump"), 3, 4)),
    ("constant", assemble_section(constant_map(CantorPoint("1", "0")), 2, 3)),
]


@pytest.mark.parametrize("name,sec", SECTIONS, ids=[n for n, _ in SECTIONS])
@given(z=zs)
def test_svd_matches_dense_eigen_oracle(name, sec, z):
    assert lower_norm(sec, z, 2, "svd") == pytest.approx(dense_lower_norm_p2(sec, z), abs=1e-9)


@pytest.mark.parametrize("L", [1, 2, 3, 4, 5, 8])
@pytest.mark.parametrize("p", [1, np.inf])
@given(z=zs)
def test_cycle_closed_form_matches_resolvent(L, p, z):
    # the explicit inverse is unreliable next to the spectrum
    assume(abs(1 - z ** L) > 1e-6)
    perm = np.roll(np.arange(L), -1)
    assert cycle_lower_norm([L], z, p)[()] == pytest.approx(resolvent_lower_norm(perm, z, p), rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("p", [1, np.inf])
def test_cycle_closed_form_on_mixed_sections(p):
    sec = assemble_section(single_toggle_map(2, 1), 4, 4)
    rng = np.random.default_rng(3)
    for z in rng.normal(size=20) + 1j * rng.normal(size=20):
        assert lower_norm(sec, z, p) == pytest.approx(resolvent_lower_norm(sec.perm, z, p), rel=1e-9, abs=1e-12)


def test_cycle_closed_form_extreme_moduli():
    for z in (1e-8, 1e8, 1e-300, 1e300 * 1j, 1 + 1e-15):
        for p in (1, np.inf):
            v = cycle_lower_norm([4], z, p)[()]
            assert np.isfinite(v) and v >= 0
    assert cycle_lower_norm([4], 1e8, 1)[()] == pytest.approx(1e8 - 1, rel=1e-6)


@pytest.mark.parametrize("p", [1, np.inf])
def test_heuristic_is_upper_bound_and_beats_sampling(p):
    rng = np.random.default_rng(0)
    for name, sec in SECTIONS:
        if sec.size > 8:
            continue
        for z in (0.4 + 0.1j, -0.7, 1.3j):
            h = lower_norm(sec, z, p, "heuristic")
            c, a, w = sec.compressed()
            wc = sec.cylinder_weights()
            g = rng.normal(size=(4000, sec.size)) + 1j * rng.normal(size=(4000, sec.size))
            res = g[:, a] - z * g[:, c]
            if p == 1:
                ratio = (np.abs(res) @ w) / (np.abs(g) @ wc)
            else:
                ratio = np.abs(res).max(1) / np.abs(g).max(1)
            assert h <= ratio.min() * (1 + 1e-6) + 1e-9
            if sec.is_permutation:
                assert h >= lower_norm(sec, z, p, "cycle_exact") - 1e-7


@pytest.mark.parametrize("name,sec", SECTIONS, ids=[n for n, _ in SECTIONS])
@given(z=zs, w=zs)
def test_lower_norm_is_1_lipschitz_in_z(name, sec, z, w):
    a, b = lower_norms(sec, [z, w], 2)
    assert abs(a - b) <= abs(z - w) + 1e-9


@pytest.mark.parametrize("name,sec", SECTIONS[:4], ids=[n for n, _ in SECTIONS[:4]])
@given(z=zs)
def test_range_bound(name, sec, z):
    # measure-preserving sections have norm 1
    if abs(z) >= 1:
        assert lower_norm(sec, z, 2) >= abs(z) - 1 - 1e-9


@pytest.mark.parametrize("F", [translation_map(1), single_toggle_map(2, 1),
                               build_tree_map(FiniteTree.full(3), "dump"), constant_map(CantorPoint("", "01"))])
def test_refined_dictionary_is_monotone(F):
    z = np.array([0.9, 0.5j, -1.1 + 0.2j, 0.7 - 0.7j])
    n1 = max(6, F.info_depth(6))
    prev = None
    for n2 in range(1, 7):
        h = lower_norms(assemble_section(F, n2, n1), z, 2, "svd")
        if prev is not None:
            assert np.all(h <= prev + 1e-9)
        prev = h


def test_composition_stability_in_l1():
    rng = np.random.default_rng(5)
    for F in (translation_map(1), single_toggle_map(2, 2), build_tree_map(FiniteTree.full(3), "odometer")):
        sec = assemble_section(F, 5, 5)
        f, g = rng.normal(size=32), rng.normal(size=32)
        q = quadrature(5)
        assert riemann_norm((f - g)[sec.action], q, 1) == pytest.approx(riemann_norm((f - g)[sec.cyl], q, 1), abs=1e-14)


# --- cycles and predictions -----------------------------------------------------

def test_cycle_decomposition_examples():
    assert cycle_decomposition(assemble_section(identity_map(), 3, 3)).lengths == [1] * 8
    assert cycle_decomposition(assemble_section(translation_map(0), 3, 3)).lengths == [8]


@pytest.mark.parametrize("m", [1, 2, 3])
def test_full_tree_odometer_block_cycles(m):
    F = build_tree_map(FiniteTree.full(3), "odometer")
    cyc = cycle_decomposition(assemble_section(F, 2 * m, 2 * m))
    head = "1" * (m - 1) + "0"
    block = [L for L, words in cyc.cycles if words[0].startswith(head)]
    assert block and all(L == 2 ** m for L in block)


def test_exact_cycle_spectrum():
    assert list(exact_cycle_spectrum([1])) == [1]
    assert hausdorff_distance(exact_cycle_spectrum([4]), SpectralSet.of(1, 1j, -1, -1j)) < 1e-12
    assert len(exact_cycle_spectrum([2, 3])) == 4  # 1 is shared
    assert len(exact_cycle_spectrum([2, 3, 6])) == 6


def test_block_union_spectrum():
    one = SpectralSet.of(1)
    assert hausdorff_distance(block_union_spectrum([one]), one) == 0
    U = block_union_spectrum([one, circle_grid(16)])
    assert hausdorff_distance(U, circle_grid(16)) < 1e-12
    assert len(block_union_spectrum([U, U])) == len(U)


def test_predicted_spectrum_examples():
    assert list(predicted_spectrum_tree(FiniteTree.branch("0101"))) == [1]
    for M in range(1, 7):
        P = predicted_spectrum_tree(FiniteTree.full(M))
        assert hausdorff_distance(P, roots_of_unity(2 ** M)) < 1e-12


@given(st.integers(1, 5).flatmap(lambda M: st.tuples(st.sets(st.integers(0, M - 1)),
                                                     st.text("01", min_size=M, max_size=M), st.just(M))),
       st.sampled_from(["odometer", "dump"]))
def test_prediction_matches_deep_section(params, version):
    S = silver_tree(*params)
    F = build_tree_map(S, version)
    n2 = 2 * S.max_depth
    sec = assemble_section(F, n2, max(n2, F.info_depth(n2)))
    spec = exact_cycle_spectrum(cycle_decomposition(sec).distinct_lengths())
    assert hausdorff_distance(spec, predicted_spectrum_tree(S, version)) < 1e-9


def test_prediction_contains_dyadic_approximants():
    theta = math.sqrt(2) - 1
    z0 = cmath.exp(2j * math.pi * theta)
    S = silver_tree({0, 2}, "1010101010", 10)
    P = predicted_spectrum_tree(S)
    from sci_koopman.dynamics import star_counts
    from sci_koopman.spectral_sets import dyadic_root_approximant
    for r in range(max(star_counts(S)) + 1):
        lam, err = dyadic_root_approximant(z0, r)
        assert P.contains(lam, 1e-9) and err <= 2 * math.pi * 2 ** -r


def test_character_eigenpairs():
    assert verify_character_eigenpair(0, 3, 0) == 0
    assert verify_character_eigenpair(0, 3, 1) < 1e-12
    assert verify_character_eigenpair(2, 5, 3) < 1e-12
    with pytest.raises(ValueError):
        verify_character_eigenpair(3, 3, 1)
