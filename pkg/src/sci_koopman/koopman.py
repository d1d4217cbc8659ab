"""Finite sections of Koopman operators in the cylinder dictionary.

The dictionary V_n2 is the span of the indicators of the 2^n2 depth-n2
cylinders, indexed by 2-adic code.  A coefficient vector ``g`` therefore
stands for the step function g[c] on cylinder c, and (K_F g)(x) = g[cyl(F x)].
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .cantor import CantorPoint, QuadratureScheme, code_to_word, quadrature, word_to_code
from .dynamics import FiniteTree, SymbolicMap, block_permutations, star_counts
from .spectral_sets import SpectralSet, roots_of_unity

log = logging.getLogger(__name__)

__all__ = [
    "CycleDecomposition",
    "FiniteSection",
    "PointOracle",
    "ResolutionError",
    "SectionNotApplicable",
    "assemble_section",
    "block_union_spectrum",
    "cycle_decomposition",
    "cycle_lower_norm",
    "exact_cycle_spectrum",
    "lower_norm",
    "lower_norms",
    "predicted_spectrum_tree",
    "residual_values",
    "verify_character_eigenpair",
]

INF = float("inf")


class ResolutionError(ValueError):
    def __init__(self, required: int, given: int):
        super().__init__(f"quadrature depth {given} too small; need n1 >= {required}")
        self.required = required


class SectionNotApplicable(ValueError):
    pass


def _norm_p(p) -> float:
    if p in (1, 2):
        return float(p)
    if p in (INF, "inf", np.inf):
        return INF
    raise ValueError(f"unsupported p={p!r}; use 1, 2 or inf")


class PointOracle:
    """Point-evaluation access to a map, with a log of every queried point.

    Node queries are recorded compactly as ``(depth, codes)``: the points
    ``code_to_word(c, depth) + 000...``.
    """

    def __init__(self, F: SymbolicMap):
        self.map = F
        self.point_log: list[CantorPoint] = []
        self.node_log: list[tuple[int, np.ndarray]] = []

    @property
    def info_depth(self):
        return self.map.info_depth

    def evaluate(self, x: CantorPoint) -> CantorPoint:
        self.point_log.append(x)
        return self.map.apply(x)

    def evaluate_nodes(self, depth: int, codes: np.ndarray, k: int) -> np.ndarray:
        """First k bits of F at the node points of the given depth."""
        L = self.map.info_depth(k)
        if L > depth:
            raise ResolutionError(L, depth)
        codes = np.asarray(codes, np.int64)
        self.node_log.append((depth, codes.copy()))
        return self.map.prefix_image(codes & ((1 << L) - 1), k)

    def queried_points(self) -> list[CantorPoint]:
        pts = list(self.point_log)
        for depth, codes in self.node_log:
            pts.extend(CantorPoint(code_to_word(int(c), depth), "0") for c in codes)
        return pts

    def query_count(self) -> int:
        return len(self.point_log) + sum(len(c) for _, c in self.node_log)


@dataclass(eq=False)
class FiniteSection:
    dict_depth: int
    quad_depth: int
    action: np.ndarray  # node -> cylinder code of F(x_P)
    cyl: np.ndarray  # node -> cylinder code of x_P
    weights: np.ndarray
    perm: np.ndarray | None  # cylinder permutation when the section is one
    query_count: int = 0
    _pairs: tuple | None = field(default=None, repr=False)

    @property
    def is_permutation(self) -> bool:
        return self.perm is not None

    @property
    def size(self) -> int:
        return 1 << self.dict_depth

    def compressed(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Distinct (cyl, action) pairs with their summed weights."""
        if self._pairs is None:
            key = self.cyl * self.size + self.action
            uniq, inv = np.unique(key, return_inverse=True)
            w = np.bincount(inv, weights=self.weights)
            self._pairs = (uniq // self.size, uniq % self.size, w)
        return self._pairs

    def cylinder_weights(self) -> np.ndarray:
        return np.bincount(self.cyl, weights=self.weights, minlength=self.size)

    def to_csv_rows(self) -> list[tuple[str, str, int, int]]:
        """(node_word, image_cylinder_word, weight numerator, weight exponent)."""
        return [
            (code_to_word(i, self.quad_depth), code_to_word(int(a), self.dict_depth), 1, self.quad_depth)
            for i, a in enumerate(self.action)
        ]


def _induced_permutation(cyl: np.ndarray, action: np.ndarray, size: int) -> np.ndarray | None:
    perm = np.full(size, -1, dtype=np.int64)
    perm[cyl] = action
    if (perm < 0).any() or not np.array_equal(perm[cyl], action):
        return None
    if not np.array_equal(np.sort(perm), np.arange(size)):
        return None
    return perm


def assemble_section(F: SymbolicMap | PointOracle, n2: int, n1: int, exact: bool = False) -> FiniteSection:
    """Section of K_F on V_n2 sampled at the depth-n1 quadrature nodes.

    ``exact=True`` evaluates every node through ``F.apply`` instead of the
    vectorised prefix evaluator (slow; used to cross-check the two).
    """
    oracle = F if isinstance(F, PointOracle) else PointOracle(F)
    required = max(n2, oracle.info_depth(n2))
    if n1 < required:
        raise ResolutionError(required, n1)
    scheme: QuadratureScheme = quadrature(n1)
    codes = scheme.codes
    if exact:
        action = np.array([word_to_code(oracle.evaluate(scheme.point(int(c))).head(n2)) for c in codes],
                          dtype=np.int64)
    else:
        action = oracle.evaluate_nodes(n1, codes, n2)
    cyl = codes & ((1 << n2) - 1)
    perm = _induced_permutation(cyl, action, 1 << n2)
    return FiniteSection(n2, n1, action, cyl, scheme.weights, perm, oracle.query_count())


def residual_values(sec: FiniteSection, g: Sequence[complex], z: complex) -> np.ndarray:
    """Node samples of (K_F - z I) g."""
    g = np.asarray(g, dtype=complex)
    if g.shape != (sec.size,):
        raise ValueError(f"expected {sec.size} coefficients, got shape {g.shape}")
    return g[sec.action] - z * g[sec.cyl]


@dataclass
class CycleDecomposition:
    dict_depth: int
    cycles: list[tuple[int, list[str]]]

    @property
    def lengths(self) -> list[int]:
        return [L for L, _ in self.cycles]

    def distinct_lengths(self) -> list[int]:
        return sorted(set(self.lengths))


def _cycles_of(perm: np.ndarray) -> list[list[int]]:
    seen = np.zeros(perm.size, bool)
    cycles = []
    for start in range(perm.size):
        if seen[start]:
            continue
        cyc, c = [], start
        while not seen[c]:
            seen[c] = True
            cyc.append(c)
            c = int(perm[c])
        cycles.append(cyc)
    return cycles


def cycle_decomposition(sec: FiniteSection) -> CycleDecomposition:
    if not sec.is_permutation:
        raise SectionNotApplicable("section does not permute the dictionary cylinders")
    n = sec.dict_depth
    cycles = [(len(c), [code_to_word(i, n) for i in c]) for c in _cycles_of(sec.perm)]
    return CycleDecomposition(n, cycles)


# ---------------------------------------------------------------------------
# lower norms


def cycle_lower_norm(lengths: Sequence[int], z, p=2) -> np.ndarray:
    """Lower norm of (P - z I) for a permutation with the given cycle lengths.

    p = 2: P is unitary, so the answer is the distance from z to the union of
    the L-th roots of unity.  p = 1 or inf: on one L-cycle the resolvent row
    (and column) contains z^0..z^(L-1) once each, so the lower norm is
    1/||(P - z)^-1|| = |1 - z^L| / sum_j |z|^j.  A direct sum takes the
    minimum over its blocks.
    """
    p = _norm_p(p)
    z = np.asarray(z, dtype=complex)
    best = np.full(z.shape, INF)
    for L in sorted(set(int(L) for L in lengths)):
        if p == 2:
            j = np.round(np.angle(z) * L / (2 * np.pi))
            val = np.abs(np.exp(2j * np.pi * j / L) - z)
        else:
            val = _cycle_ratio(z, L)
        best = np.minimum(best, val)
    return best


def _cycle_ratio(z: np.ndarray, L: int) -> np.ndarray:
    r = np.abs(z)
    out = np.empty(z.shape)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
        small = r <= 1.0
        zs, rs = z[small], r[small]
        lr = np.log(rs)
        num = np.abs(1.0 - zs ** L)
        # sum_{j<L} r^j = expm1(L log r) / expm1(log r), with limit L at r = 1
        geo = np.where(np.abs(lr) < 1e-300, float(L), np.expm1(L * lr) / np.expm1(lr))
        geo = np.where(rs == 0, 1.0, geo)
        out[small] = num / geo
        zb, rb = z[~small], r[~small]
        lb = np.log(rb)
        w = np.exp(-L * np.log(zb))  # z^-L, underflows gracefully
        # (|z| - 1) |1 - z^L| / (|z|^L - 1) = (|z| - 1) |1 - w| / (1 - |w|)
        out[~small] = np.expm1(lb) * np.abs(1.0 - w) / (-np.expm1(-L * lb))
    return out


def _svd_lower_norms(sec: FiniteSection, zs: np.ndarray, chunk: int = 256) -> np.ndarray:
    c, a, w = sec.compressed()
    rows = np.arange(c.size)
    n = sec.size
    colscale = 1.0 / np.sqrt(sec.cylinder_weights())
    Ea = np.zeros((c.size, n))
    Ea[rows, a] = 1.0
    Ec = np.zeros((c.size, n))
    Ec[rows, c] = 1.0
    sw = np.sqrt(w)[:, None]
    Ea *= sw * colscale
    Ec *= sw * colscale
    out = np.empty(zs.size)
    for s in range(0, zs.size, chunk):
        zz = zs[s:s + chunk]
        R = Ea[None, :, :] - zz[:, None, None] * Ec[None, :, :]
        out[s:s + chunk] = np.linalg.svd(R, compute_uv=False)[:, -1]
    return out


def _rs_norm(v: np.ndarray, w: np.ndarray, p: float) -> float:
    a = np.abs(v)
    if p == 1:
        return float(w @ a)
    if p == 2:
        return float(np.sqrt(w @ (a * a)))
    return float(a.max())


def _heuristic_lower_norm(sec: FiniteSection, z: complex, p: float, starts: int = 4,
                          iters: int = 8, seed: int = 0) -> tuple[float, np.ndarray]:
    """Upper bound on inf ||(K - z)g||_p / ||g||_p via convex linearisation.

    Each step fixes a phase vector s with Re<s, g> <= ||g|| and solves the
    convex program  min ||(K - z) g||  s.t.  Re<s, g>_w = 1,  then updates s
    to the phases of the minimiser.  The returned value is the exact ratio of
    the best vector found, hence a certified upper bound on the infimum.
    """
    import cvxpy as cp

    c, a, w = sec.compressed()
    n = sec.size
    wc = sec.cylinder_weights()
    A = np.zeros((c.size, n), complex)
    A[np.arange(c.size), a] += 1.0
    A[np.arange(c.size), c] -= z
    rng = np.random.default_rng(seed)

    def ratio(g):
        return _rs_norm(A @ g, w, p) / _rs_norm(g, wc, p)

    g2 = np.linalg.svd(np.sqrt(w)[:, None] * A / np.sqrt(wc))[2][-1].conj()
    inits = [g2]
    if p == INF:
        inits += [np.eye(n)[k] for k in range(n)]
    else:
        inits += [np.exp(2j * np.pi * rng.random(n)) for _ in range(starts)]
    best, best_g = ratio(g2), g2
    g = cp.Variable(n, complex=True)
    s_par = cp.Parameter(n, complex=True)
    res = A @ g
    obj = cp.sum(cp.multiply(w, cp.abs(res))) if p == 1 else cp.max(cp.abs(res))
    if p == INF:
        cons = [cp.real(cp.sum(cp.multiply(cp.conj(s_par), g))) == 1, cp.abs(g) <= 1]
    else:
        cons = [cp.real(cp.sum(cp.multiply(cp.multiply(wc, cp.conj(s_par)), g))) == 1]
    prob = cp.Problem(cp.Minimize(obj), cons)
    for g0 in inits:
        s = np.exp(1j * np.angle(g0)) if p == 1 else g0 / max(np.abs(g0).max(), 1e-300)
        if p == INF:
            # pin the coordinate where |g0| is maximal to 1
            k = int(np.argmax(np.abs(g0)))
            s = np.zeros(n, complex)
            s[k] = np.exp(1j * np.angle(g0[k]))
        prev = INF
        for _ in range(iters):
            s_par.value = s
            try:
                prob.solve(solver=cp.CLARABEL, warm_start=False)
            except cp.error.SolverError:
                break
            if g.value is None:
                break
            gv = np.asarray(g.value)
            val = ratio(gv)
            if val < best:
                best, best_g = val, gv
            if p == INF or val > prev - 1e-12:
                break
            prev = val
            s = np.exp(1j * np.angle(gv))
    return best, best_g


def lower_norms(sec: FiniteSection, zs, p=2, method: str = "auto") -> np.ndarray:
    """Vectorised :func:`lower_norm` over many shifts."""
    p = _norm_p(p)
    zs = np.atleast_1d(np.asarray(zs, dtype=complex))
    if method == "auto":
        if sec.is_permutation:
            method = "cycle_exact"
        else:
            method = "svd" if p == 2 else "heuristic"
    if method == "cycle_exact":
        if not sec.is_permutation:
            raise SectionNotApplicable("cycle_exact needs a permutation section")
        lengths = {len(c) for c in _cycles_of(sec.perm)}
        return cycle_lower_norm(sorted(lengths), zs, p)
    if method == "svd":
        if p != 2:
            raise SectionNotApplicable("svd is exact only for p=2")
        return _svd_lower_norms(sec, zs)
    if method == "heuristic":
        if p == 2:
            return _svd_lower_norms(sec, zs)
        return np.array([_heuristic_lower_norm(sec, complex(z), p)[0] for z in zs])
    raise ValueError(f"unknown method {method!r}")


def lower_norm(sec: FiniteSection, z: complex, p=2, method: str = "auto") -> float:
    """inf of the RS norm of (K_F - zI)g over RS-unit g in V_n2."""
    return float(lower_norms(sec, [z], p, method)[0])


# ---------------------------------------------------------------------------
# closed-form predictions


def exact_cycle_spectrum(lengths: Sequence[int]) -> SpectralSet:
    if not lengths:
        raise ValueError("need at least one cycle length")
    return roots_of_unity(int(lengths[0])).union(*(roots_of_unity(int(L)) for L in lengths[1:]))


def block_union_spectrum(parts: Sequence[SpectralSet]) -> SpectralSet:
    if not parts:
        raise ValueError("need at least one part")
    return parts[0].union(*parts[1:])


def _cycle_lengths_of_table(perm: dict[str, str]) -> set[int]:
    words = sorted(perm)
    idx = {w: i for i, w in enumerate(words)}
    arr = np.array([idx[perm[w]] for w in words], dtype=np.int64)
    return {len(c) for c in _cycles_of(arr)}


def predicted_spectrum_tree(S: FiniteTree, version: str = "odometer", r_max: int | None = None) -> SpectralSet:
    """Spectrum of K_{F_S} for the finite truncation S (blocks past max_depth are identity).

    Odometer version: the union of U_{2^k_m} with {1}.  Dump version: the
    cycle lengths of every block permutation are read off directly, which
    gives {1} and U_{2^k_m}, plus -1 whenever a dump 2-cycle exists.
    ``r_max`` caps root orders at 2^r_max; the resolution then records the
    chord gap of the coarser roots.
    """
    lengths = {1}
    if version == "odometer":
        lengths |= {1 << k for k in star_counts(S)}
    elif version == "dump":
        for perm in block_permutations(S, "dump"):
            lengths |= _cycle_lengths_of_table(perm)
    else:
        raise ValueError(f"unknown tree-map version {version!r}")
    resolution = 0.0
    if r_max is not None:
        cap = 1 << r_max
        if any(L > cap and L % cap == 0 for L in lengths):
            resolution = 2 * math.sin(math.pi / cap)
        lengths = {min(L, cap) if L % cap == 0 else L for L in lengths}
    parts = [roots_of_unity(L) for L in sorted(lengths)]
    out = block_union_spectrum(parts)
    return SpectralSet(out.points, resolution)


def verify_character_eigenpair(r: int, m: int, k: int) -> float:
    """max_P |(K chi)(P) - mu chi(P)| for chi_{m,k} under tau_r, mu = exp(2 pi i k 2^r / 2^m)."""
    from .dynamics import translation_map

    if m <= r:
        raise ValueError("need m >= r + 1")
    sec = assemble_section(translation_map(r), m, m)
    mod = 1 << m
    phase = (k * sec.cyl) % mod  # exact integer phases
    chi = np.exp(2j * np.pi * phase / mod)
    chi_at_image = np.exp(2j * np.pi * ((k * sec.action) % mod) / mod)
    mu = np.exp(2j * np.pi * ((k << r) % mod) / mod)
    return float(np.max(np.abs(chi_at_image - mu * chi)))
