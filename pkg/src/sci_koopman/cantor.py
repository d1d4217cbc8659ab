"""Exact arithmetic on points, words and cylinders of the Cantor space {0,1}^N.

Words are plain ``str`` objects over ``"01"``.  Bit positions are 1-based,
matching the usual convention x = (x_1, x_2, ...).  Whenever a word of length
``n`` has to be packed into an integer we use the 2-adic (LSB-first) code
``sum_j x_j 2^(j-1)``; the quadrature nodes and every dictionary index in
:mod:`sci_koopman.koopman` are ordered by this code.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from math import gcd
from typing import Sequence

import numpy as np

__all__ = [
    "CantorPoint",
    "DyadicCylinder",
    "QuadratureScheme",
    "X_INFINITY",
    "add_2adic",
    "bit_at",
    "check_word",
    "clopen_block",
    "code_to_word",
    "cylinder_measure",
    "first_difference",
    "quadrature",
    "riemann_norm",
    "truncate_2adic",
    "ultrametric_distance",
    "word_to_code",
]


def check_word(word: str, alphabet: str = "01") -> str:
    if not isinstance(word, str):
        raise TypeError(f"word must be a str, got {type(word).__name__}")
    bad = set(word) - set(alphabet)
    if bad:
        raise ValueError(f"word {word!r} has symbols outside {alphabet!r}")
    return word


def word_to_code(word: str) -> int:
    """2-adic code of a finite word (first bit is the least significant)."""
    return int(word[::-1], 2) if word else 0


def code_to_word(code: int, n: int) -> str:
    if n == 0:
        return ""
    if not 0 <= code < (1 << n):
        raise ValueError(f"code {code} does not fit in {n} bits")
    return format(code, f"0{n}b")[::-1]


def _primitive_root(period: str) -> str:
    n = len(period)
    for d in range(1, n + 1):
        if n % d == 0 and period[:d] * (n // d) == period:
            return period[:d]
    return period  # unreachable


@dataclass(frozen=True)
class CantorPoint:
    """Eventually periodic point ``prefix period period period ...``.

    The representation is canonicalised on construction (primitive period,
    shortest prefix), so ``==`` coincides with equality of the bit streams.
    """

    prefix: str
    period: str

    def __post_init__(self) -> None:
        prefix = check_word(self.prefix)
        period = check_word(self.period)
        if not period:
            raise ValueError("period must be nonempty")
        period = _primitive_root(period)
        while prefix and prefix[-1] == period[-1]:
            prefix = prefix[:-1]
            period = period[-1] + period[:-1]
        object.__setattr__(self, "prefix", prefix)
        object.__setattr__(self, "period", period)

    @classmethod
    def parse(cls, text: str) -> "CantorPoint":
        """Parse the ``"prefix|period"`` serialisation, e.g. ``"10|01"``."""
        if text.count("|") != 1:
            raise ValueError(f"expected 'prefix|period', got {text!r}")
        prefix, period = text.split("|")
        return cls(prefix, period)

    @classmethod
    def from_word(cls, word: str, tail: str = "0") -> "CantorPoint":
        return cls(word, tail)

    @classmethod
    def concat(cls, word: str, point: "CantorPoint") -> "CantorPoint":
        return cls(word + point.prefix, point.period)

    def __str__(self) -> str:
        return f"{self.prefix}|{self.period}"

    def bit(self, i: int) -> int:
        if i < 1:
            raise IndexError("bit positions start at 1")
        k = len(self.prefix)
        if i <= k:
            return int(self.prefix[i - 1])
        return int(self.period[(i - k - 1) % len(self.period)])

    def head(self, n: int) -> str:
        """The first ``n`` bits as a word."""
        k = len(self.prefix)
        if n <= k:
            return self.prefix[:n]
        reps = (n - k) // len(self.period) + 1
        return (self.prefix + self.period * reps)[:n]

    def tail(self, n: int) -> "CantorPoint":
        """The point obtained by dropping the first ``n`` bits."""
        k = len(self.prefix)
        if n <= k:
            return CantorPoint(self.prefix[n:], self.period)
        s = (n - k) % len(self.period)
        return CantorPoint("", self.period[s:] + self.period[:s])

    def first_zero(self) -> int | None:
        """Index of the first 0 bit, or None for x_inf = 111..."""
        if "0" in self.prefix:
            return self.prefix.index("0") + 1
        if "0" not in self.period:
            return None
        return len(self.prefix) + self.period.index("0") + 1

    def to_2adic(self) -> Fraction:
        """The 2-adic integer sum_j x_j 2^(j-1) as a rational with odd denominator."""
        k, L = len(self.prefix), len(self.period)
        return word_to_code(self.prefix) + Fraction(word_to_code(self.period) << k, 1 - (1 << L))

    @classmethod
    def from_2adic(cls, q: Fraction | int) -> "CantorPoint":
        """Inverse of :meth:`to_2adic` for rationals with odd denominator."""
        q = Fraction(q)
        a, b = q.numerator, q.denominator
        if b % 2 == 0:
            raise ValueError(f"{q} is not a 2-adic integer")
        digits: list[str] = []
        seen: dict[int, int] = {}
        while a not in seen:
            seen[a] = len(digits)
            d = a % 2
            digits.append("01"[d])
            a = (a - d * b) // 2
        start = seen[a]
        return cls("".join(digits[:start]), "".join(digits[start:]))


X_INFINITY = CantorPoint("", "1")


def bit_at(x: CantorPoint, i: int) -> int:
    return x.bit(i)


def first_difference(x: CantorPoint, y: CantorPoint) -> int | None:
    """Smallest index j with x_j != y_j, or None when x == y."""
    if x == y:
        return None
    Lx, Ly = len(x.period), len(y.period)
    n = max(len(x.prefix), len(y.prefix)) + Lx * Ly // gcd(Lx, Ly)
    hx, hy = x.head(n), y.head(n)
    for j, (a, b) in enumerate(zip(hx, hy), start=1):
        if a != b:
            return j
    raise AssertionError("canonical forms differ but streams agree")  # pragma: no cover


def ultrametric_distance(x: CantorPoint, y: CantorPoint) -> Fraction:
    N = first_difference(x, y)
    return Fraction(0) if N is None else Fraction(1, 1 << N)


@dataclass(frozen=True)
class DyadicCylinder:
    word: str

    def __post_init__(self) -> None:
        check_word(self.word)

    @property
    def measure(self) -> Fraction:
        return Fraction(1, 1 << len(self.word))

    def diameter_bound(self) -> Fraction:
        # points of the cylinder agree on len(word) bits
        return Fraction(1, 1 << (len(self.word) + 1))

    def contains(self, x: CantorPoint) -> bool:
        return x.head(len(self.word)) == self.word

    def __str__(self) -> str:
        return self.word


def cylinder_measure(c: DyadicCylinder | str) -> Fraction:
    if isinstance(c, str):
        c = DyadicCylinder(c)
    return c.measure


def clopen_block(n: int) -> DyadicCylinder:
    """U_n: first zero at position n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return DyadicCylinder("1" * (n - 1) + "0")


def truncate_2adic(x: CantorPoint, m: int) -> int:
    if m < 0:
        raise ValueError("m must be >= 0")
    return word_to_code(x.head(m))


def add_2adic(x: CantorPoint, t: int) -> CantorPoint:
    """The point with 2-adic value iota(x) + t (negative t subtracts)."""
    return CantorPoint.from_2adic(x.to_2adic() + t)


@dataclass(frozen=True)
class QuadratureScheme:
    """Dyadic Riemann-sum rule of depth ``n``.

    Node ``k`` is the word with 2-adic code ``k`` followed by an all-zeros
    tail; every node carries the weight ``2^-n``.  Nothing here depends on a
    dynamical map.
    """

    depth: int

    def __post_init__(self) -> None:
        if self.depth < 0:
            raise ValueError("depth must be >= 0")

    def __len__(self) -> int:
        return 1 << self.depth

    @property
    def weight(self) -> Fraction:
        return Fraction(1, 1 << self.depth)

    @cached_property
    def codes(self) -> np.ndarray:
        codes = np.arange(1 << self.depth, dtype=np.int64)
        codes.flags.writeable = False
        return codes

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.full(1 << self.depth, 2.0 ** -self.depth)
        w.flags.writeable = False
        return w

    def word(self, k: int) -> str:
        return code_to_word(k, self.depth)

    def point(self, k: int) -> CantorPoint:
        return CantorPoint(self.word(k), "0")

    @cached_property
    def nodes(self) -> tuple[tuple[CantorPoint, Fraction], ...]:
        w = self.weight
        return tuple((self.point(k), w) for k in range(len(self)))

    def integrate(self, values: Sequence[complex]) -> complex:
        values = np.asarray(values)
        if values.shape != (len(self),):
            raise ValueError(f"expected {len(self)} node values, got shape {values.shape}")
        return complex(np.sum(values) * 2.0 ** -self.depth)


@lru_cache(maxsize=None)
def quadrature(n: int) -> QuadratureScheme:
    return QuadratureScheme(n)


def riemann_norm(values, scheme: QuadratureScheme | np.ndarray, p) -> float:
    """Weighted Riemann-sum norm of node samples; ``p`` is 1, 2 or inf.

    ``scheme`` may be a :class:`QuadratureScheme` or an explicit weight array.
    """
    weights = scheme.weights if isinstance(scheme, QuadratureScheme) else np.asarray(scheme, float)
    a = np.abs(np.asarray(values, dtype=complex))
    if a.shape != weights.shape:
        raise ValueError(f"malformed sampling: {a.shape[0] if a.ndim else 0} values for {weights.shape[0]} nodes")
    if p == 1:
        return float(np.dot(weights, a))
    if p == 2:
        return float(np.sqrt(np.dot(weights, a * a)))
    if p in (np.inf, "inf", float("inf")):
        return float(a.max())
    raise ValueError(f"unsupported p={p!r}; use 1, 2 or inf")
