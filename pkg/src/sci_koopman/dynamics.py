"""Continuous self-maps of Cantor space given by finite information.

A :class:`SymbolicMap` carries two evaluators that must agree:

* ``apply`` maps an eventually periodic :class:`CantorPoint` to its exact image;
* ``prefix_image`` maps an array of input words (2-adic codes of length
  ``info_depth(k)``) to the codes of the first ``k`` output bits.

The second one is what the exhaustive checks and the finite sections use.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping

import numpy as np

from .cantor import (
    X_INFINITY,
    CantorPoint,
    add_2adic,
    check_word,
    code_to_word,
    word_to_code,
)

__all__ = [
    "FiniteTree",
    "SymbolicMap",
    "build_tree_map",
    "check_measure_preservation",
    "compose",
    "constant_map",
    "dump_involution",
    "dyadic_odometer",
    "estimate_density",
    "exhaustive_depth_cap",
    "identity_map",
    "map_from_descriptor",
    "modulus_probe",
    "perturbation_sup",
    "sigma",
    "silver_tree",
    "single_toggle_map",
    "star_counts",
    "star_priority_witness",
    "translation_map",
]

STAR = "*"
MAX_ENUMERATION_BITS = 26


def exhaustive_depth_cap() -> int:
    return int(os.environ.get("SCI_EXHAUSTIVE_DEPTH", "16"))


def _mask(k: int) -> int:
    return (1 << k) - 1


@dataclass(frozen=True, eq=False)
class SymbolicMap:
    apply: Callable[[CantorPoint], CantorPoint]
    info_depth: Callable[[int], int]
    prefix_image: Callable[[np.ndarray, int], np.ndarray]
    descriptor: dict = field(default_factory=dict)

    def __call__(self, x: CantorPoint) -> CantorPoint:
        return self.apply(x)

    @property
    def kind(self) -> str:
        return self.descriptor.get("kind", "?")

    def image_words(self, words: Iterable[str], k: int) -> list[str]:
        """First ``k`` output bits for each input word (len >= info_depth(k))."""
        L = self.info_depth(k)
        codes = np.array([word_to_code(w[:L]) for w in words], dtype=np.int64)
        return [code_to_word(int(c), k) for c in self.prefix_image(codes, k)]


def identity_map() -> SymbolicMap:
    return SymbolicMap(
        apply=lambda x: x,
        info_depth=lambda k: k,
        prefix_image=lambda w, k: np.asarray(w, np.int64) & _mask(k),
        descriptor={"kind": "identity"},
    )


def constant_map(point: CantorPoint) -> SymbolicMap:
    def prefix_image(w, k):
        return np.full(np.shape(w), word_to_code(point.head(k)), dtype=np.int64)

    return SymbolicMap(lambda x: point, lambda k: 0, prefix_image,
                       {"kind": "constant", "point": str(point)})


def translation_map(r: int) -> SymbolicMap:
    """tau_r: 2-adic addition of 2^r."""
    if r < 0:
        raise ValueError("r must be >= 0")
    step = 1 << r

    def prefix_image(w, k):
        return (np.asarray(w, np.int64) + step) & _mask(k)

    return SymbolicMap(
        apply=lambda x: add_2adic(x, step),
        info_depth=lambda k: k,
        prefix_image=prefix_image,
        descriptor={"kind": "translation", "r": r},
    )


def single_toggle_map(n: int, r: int) -> SymbolicMap:
    """Identity off U_n; on U_n = 1^(n-1)0 t acts as t -> t + 2^r."""
    if n < 1 or r < 1:
        raise ValueError("need n >= 1 and r >= 1")
    head = "1" * (n - 1) + "0"
    step = 1 << r
    pattern = _mask(n - 1)

    def apply(x: CantorPoint) -> CantorPoint:
        if x.head(n) != head:
            return x
        return CantorPoint.concat(head, add_2adic(x.tail(n), step))

    def prefix_image(w, k):
        w = np.asarray(w, np.int64)
        if k <= n:
            return w & _mask(k)
        inside = (w & _mask(n)) == pattern
        moved = (w & _mask(n)) | ((((w >> n) + step) & _mask(k - n)) << n)
        return np.where(inside, moved, w) & _mask(k)

    return SymbolicMap(apply, lambda k: k, prefix_image,
                       {"kind": "single_toggle", "n": n, "r": r})


def compose(*maps: SymbolicMap) -> SymbolicMap:
    """compose(F, G, H) = F o G o H."""
    if not maps:
        return identity_map()
    maps = tuple(maps)

    def apply(x):
        for F in reversed(maps):
            x = F.apply(x)
        return x

    def info_depth(k):
        for F in maps:
            k = F.info_depth(k)
        return k

    def prefix_image(w, k):
        depths = [k]
        for F in maps[:-1]:
            depths.append(F.info_depth(depths[-1]))
        for F, d in zip(reversed(maps), reversed(depths)):
            w = F.prefix_image(w, d)
        return w

    return SymbolicMap(apply, info_depth, prefix_image,
                       {"kind": "composite", "parts": [F.descriptor for F in maps]})


# ---------------------------------------------------------------------------
# trees and templates


@dataclass(frozen=True)
class FiniteTree:
    """Levels ``S cap 2^m`` for m = 0..max_depth of a downward closed binary tree."""

    max_depth: int
    levels: tuple[frozenset[str], ...]

    def __post_init__(self) -> None:
        levels = tuple(frozenset(check_word(w) for w in lvl) for lvl in self.levels)
        object.__setattr__(self, "levels", levels)
        if len(levels) != self.max_depth + 1:
            raise ValueError(f"expected {self.max_depth + 1} levels, got {len(levels)}")
        if levels[0] != frozenset({""}):
            raise ValueError("the root (empty word) must be present")
        for m in range(1, self.max_depth + 1):
            for w in levels[m]:
                if len(w) != m:
                    raise ValueError(f"word {w!r} listed at level {m}")
                if w[:-1] not in levels[m - 1]:
                    raise ValueError(f"tree is not downward closed: {w!r} without {w[:-1]!r}")

    @classmethod
    def from_words(cls, words: Iterable[str], max_depth: int | None = None) -> "FiniteTree":
        """Downward closure of a set of words."""
        words = list(words)
        M = max((len(w) for w in words), default=0) if max_depth is None else max_depth
        levels = [set() for _ in range(M + 1)]
        for w in words:
            for m in range(min(len(w), M) + 1):
                levels[m].add(w[:m])
        levels[0].add("")
        return cls(M, tuple(frozenset(s) for s in levels))

    @classmethod
    def full(cls, M: int) -> "FiniteTree":
        return cls(M, tuple(frozenset(code_to_word(c, m) for c in range(1 << m)) for m in range(M + 1)))

    @classmethod
    def branch(cls, word: str) -> "FiniteTree":
        return cls.from_words([word])

    def truncate(self, M: int) -> "FiniteTree":
        if M > self.max_depth:
            raise ValueError("cannot truncate above max_depth")
        return FiniteTree(M, self.levels[: M + 1])

    def agrees_with(self, other: "FiniteTree", M: int) -> bool:
        return self.levels[: M + 1] == other.levels[: M + 1]

    def to_json(self) -> dict:
        return {
            "max_depth": self.max_depth,
            "levels": {str(m): sorted(lvl) for m, lvl in enumerate(self.levels)},
        }

    @classmethod
    def from_json(cls, obj: Mapping | str) -> "FiniteTree":
        if isinstance(obj, str):
            obj = json.loads(obj)
        M = int(obj["max_depth"])
        raw = obj["levels"]
        levels = [frozenset(raw.get(str(m), raw.get(m, []))) for m in range(M + 1)]
        if not levels[0]:
            levels[0] = frozenset({""})
        return cls(M, tuple(levels))


def sigma(u: str) -> list[str]:
    """Sigma(u): all binary words matching the template ``u`` off its stars."""
    check_word(u, "01*")
    out = [""]
    for s in u:
        out = [w + b for w in out for b in ("01" if s == STAR else s)]
    return out


def _template_fits(u: str, level: frozenset[str]) -> bool:
    if len(level) < (1 << u.count(STAR)):
        return False
    return all(w in level for w in sigma(u))


def _witness_sequence(S: FiniteTree) -> list[str | None]:
    seq: list[str | None] = [""]
    for m in range(1, S.max_depth + 1):
        prev = seq[-1]
        nxt = None
        if prev is not None:
            for s in (STAR, "0", "1"):  # priority * < 0 < 1
                if _template_fits(prev + s, S.levels[m]):
                    nxt = prev + s
                    break
        seq.append(nxt)
    return seq


def star_priority_witness(S: FiniteTree, m: int) -> str | None:
    """u_m(S), or None for the bottom element."""
    if not 0 <= m <= S.max_depth:
        raise ValueError(f"m={m} outside 0..{S.max_depth}")
    return _witness_sequence(S)[m]


def star_counts(S: FiniteTree) -> list[int]:
    """k_1..k_M; a bottom witness counts as 0."""
    return [0 if u is None else u.count(STAR) for u in _witness_sequence(S)[1:]]


def silver_tree(A: Iterable[int], x_bits: str, M: int) -> FiniteTree:
    """Depth-M truncation of S_{A,x}; coordinates are 0-based."""
    A = frozenset(A)
    check_word(x_bits)
    if any(a < 0 or a >= M for a in A):
        raise ValueError("A must be a subset of {0, ..., M-1}")
    if len(x_bits) < M:
        raise ValueError("x_bits must have length >= M")
    u = "".join(x_bits[i] if i in A else STAR for i in range(M))
    return FiniteTree(M, tuple(frozenset(sigma(u[:m])) for m in range(M + 1)))


def dump_involution(m: int, P: Iterable[str]) -> dict[str, str]:
    """pi_{m,P}: identity on P, lexicographic pairing of the complement."""
    P = frozenset(P)
    words = sorted(code_to_word(c, m) for c in range(1 << m))
    if not P <= set(words):
        raise ValueError("P must consist of words of length m")
    perm = {w: w for w in P}
    rest = [w for w in words if w not in P]
    for a, b in zip(rest[0::2], rest[1::2]):
        perm[a], perm[b] = b, a
    if len(rest) % 2:
        perm[rest[-1]] = rest[-1]
    return perm


def dyadic_odometer(m: int, u: str) -> dict[str, str]:
    """od_{m,u}: add 1 (LSB first) on the star coordinates of ``u``."""
    check_word(u, "01*")
    if len(u) != m:
        raise ValueError("template length must equal m")
    stars = [i for i, s in enumerate(u) if s == STAR]
    perm = {}
    for c in range(1 << m):
        tau = code_to_word(c, m)
        out = list(tau)
        carry = 1 if stars else 0
        for i in stars:
            bit = int(tau[i])
            out[i] = str(bit ^ carry)
            carry = bit & carry
        perm[tau] = "".join(out)
    return perm


def _cyclic_successor(P: Iterable[str]) -> dict[str, str]:
    order = sorted(P)
    return {a: b for a, b in zip(order, order[1:] + order[:1])}


def block_permutations(S: FiniteTree, version: str) -> list[dict[str, str]]:
    """The permutation of 2^m applied to the block of each Y_m, m = 1..M."""
    if version not in ("dump", "odometer"):
        raise ValueError(f"unknown tree-map version {version!r}")
    witnesses = _witness_sequence(S)
    perms = []
    for m in range(1, S.max_depth + 1):
        u = witnesses[m]
        if version == "odometer":
            perms.append(dyadic_odometer(m, u if u is not None else "0" * m))
            continue
        P = sigma(u) if u is not None else []
        perm = dump_involution(m, P)
        if P:
            perm.update(_cyclic_successor(P))
        perms.append(perm)
    return perms


def build_tree_map(S: FiniteTree, version: str = "odometer") -> SymbolicMap:
    """F_S for a finite tree; blocks Y_m with m > S.max_depth are left alone."""
    if not isinstance(S, FiniteTree):
        raise TypeError("S must be a FiniteTree")
    perms = block_permutations(S, version)
    M = S.max_depth
    tables = [None] + [
        np.array([word_to_code(perm[code_to_word(c, m)]) for c in range(1 << m)], dtype=np.int64)
        for m, perm in enumerate(perms, start=1)
    ]

    def apply(x: CantorPoint) -> CantorPoint:
        m = x.first_zero()
        if m is None or m > M:
            return x
        head = x.head(2 * m)
        return CantorPoint.concat(head[:m] + perms[m - 1][head[m:]], x.tail(2 * m))

    if version == "odometer":
        # prefix preserving: bit j of the block only reads block bits <= j
        def info_depth(k):
            return k
    else:
        def info_depth(k):
            return max(k, 2 * min(k - 1, M)) if k > 0 else 0

    def prefix_image(w, k):
        w = np.asarray(w, np.int64)
        out = w.copy()
        for m in range(1, min(M, k - 1) + 1):
            inside = (w & _mask(m)) == _mask(m - 1)
            if not inside.any():
                continue
            block = (w >> m) & _mask(m)
            moved = (w & ~(_mask(m) << m)) | (tables[m][block] << m)
            out = np.where(inside, moved, out)
        return out & _mask(k)

    return SymbolicMap(apply, info_depth, prefix_image,
                       {"kind": f"tree_{version}", "tree": S.to_json()})


def map_from_descriptor(desc: Mapping) -> SymbolicMap:
    kind = desc.get("kind")
    if kind == "identity":
        return identity_map()
    if kind == "translation":
        return translation_map(int(desc["r"]))
    if kind == "single_toggle":
        return single_toggle_map(int(desc["n"]), int(desc["r"]))
    if kind in ("tree_dump", "tree_odometer"):
        return build_tree_map(FiniteTree.from_json(desc["tree"]), kind.split("_", 1)[1])
    if kind == "constant":
        return constant_map(CantorPoint.parse(desc["point"]))
    if kind == "composite":
        return compose(*(map_from_descriptor(d) for d in desc["parts"]))
    raise ValueError(f"unknown map descriptor kind {kind!r}")


# ---------------------------------------------------------------------------
# exhaustive diagnostics


def _enumerate_images(F: SymbolicMap, D: int, cap: int | None) -> tuple[int, np.ndarray]:
    cap = exhaustive_depth_cap() if cap is None else cap
    if D > cap:
        raise ValueError(f"depth {D} exceeds the exhaustive bound {cap} (SCI_EXHAUSTIVE_DEPTH)")
    L = F.info_depth(D)
    if L > MAX_ENUMERATION_BITS:
        raise ValueError(f"info depth {L} too large for exhaustive enumeration")
    words = np.arange(1 << L, dtype=np.int64)
    return L, F.prefix_image(words, D)


@dataclass
class MeasureReport:
    depth: int
    max_deviation: Fraction
    worst_cylinder: str


def check_measure_preservation(F: SymbolicMap, D: int, cap: int | None = None) -> MeasureReport:
    """max over depth-D cylinders C of |w(F^-1 C) - w(C)|, computed exactly."""
    L, images = _enumerate_images(F, D, cap)
    counts = np.bincount(images, minlength=1 << D)
    # w(F^-1 C) = count / 2^L, w(C) = 2^(L-D) / 2^L
    dev = np.abs(counts - (1 << (L - D)) if L >= D else counts * (1 << (D - L)) - 1)
    worst = int(np.argmax(dev))
    denom = 1 << max(L, D)
    return MeasureReport(D, Fraction(int(dev[worst]), denom), code_to_word(worst, D))


@dataclass
class DensityReport:
    depth: int
    counts: np.ndarray
    info_depth: int
    sup_by_depth: list[Fraction]
    unbounded_suspect: bool

    def ratio(self, word: str) -> Fraction:
        return Fraction(int(self.counts[word_to_code(word)]) << self.depth, 1 << self.info_depth)

    def ratios(self) -> dict[str, Fraction]:
        return {code_to_word(c, self.depth): self.ratio(code_to_word(c, self.depth))
                for c in range(1 << self.depth)}

    @property
    def sup(self) -> Fraction:
        return self.sup_by_depth[-1]


def estimate_density(F: SymbolicMap, D: int, cap: int | None = None) -> DensityReport:
    """Cylinder ratios w(F^-1 C)/w(C) at depth D (exact), plus their sup at depths 1..D.

    A sup that keeps growing with the depth is flagged: it is the finite
    signature of a density that is not essentially bounded.
    """
    L, images = _enumerate_images(F, D, cap)
    counts = np.bincount(images, minlength=1 << D)
    sups = []
    for d in range(1, D + 1):
        cd = np.bincount(images & _mask(d), minlength=1 << d)
        sups.append(Fraction(int(cd.max()) << d, 1 << L))
    growing = len(sups) >= 2 and sups[-1] > sups[-2] and sups[-1] > 1
    return DensityReport(D, counts, L, sups, growing)


@dataclass
class ModulusReport:
    depth: int
    # level l -> sup d(Fx, Fy) over pairs with d(x, y) <= 2^-l
    table: dict[int, Fraction]
    resolved: dict[int, bool]

    @property
    def lipschitz(self) -> bool:
        return all(v <= Fraction(1, 1 << l) for l, v in self.table.items())


def modulus_probe(F: SymbolicMap, D: int, cap: int | None = None) -> ModulusReport:
    """Exhaustive modulus of continuity at resolution D.

    For each level l <= D, reports the largest output distance among inputs
    agreeing on their first l-1 bits.  When all D output bits agree the entry
    is the bound 2^-(D+1) and ``resolved[l]`` is False.
    """
    L, images = _enumerate_images(F, D, cap)
    words = np.arange(images.size, dtype=np.int64)
    table, resolved = {}, {}
    for l in range(1, D + 1):
        rep = images[words & _mask(l - 1)]
        diff = int(np.bitwise_or.reduce(images ^ rep))
        if diff:
            N = (diff & -diff).bit_length()
            table[l], resolved[l] = Fraction(1, 1 << N), True
        else:
            table[l], resolved[l] = Fraction(1, 1 << (D + 1)), False
    return ModulusReport(D, table, resolved)


def perturbation_sup(F: SymbolicMap, D: int, cap: int | None = None) -> Fraction:
    """sup_x d(F x, x) resolved at depth D (needs info_depth(D) == D).

    Cylinders whose first D bits are unchanged contribute the bound 2^-(D+1).
    """
    L, images = _enumerate_images(F, D, cap)
    if L != D:
        raise ValueError("perturbation_sup needs a prefix-preserving map (info_depth(D) == D)")
    diff = images ^ np.arange(1 << D, dtype=np.int64)
    nz = diff[diff != 0]
    if nz.size == 0:
        return Fraction(1, 1 << (D + 1))
    low = int(np.min(nz & -nz))
    return Fraction(1, 1 << low.bit_length())
