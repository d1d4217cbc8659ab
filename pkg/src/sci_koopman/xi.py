"""Alternating-quantifier decision problems on {0,1}-matrices.

Quantified variables range over n >= 1 (the bounded towers use 1..N).
Matrix positions (i, j) range over N x N including 0; a position whose
decoded tuple has a 0 coordinate is off the quantifier support.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from itertools import product
from typing import Any, Callable, Sequence

import numpy as np

__all__ = [
    "MatrixOracle",
    "TupleCodec",
    "XiTrace",
    "embed_universal",
    "encode_tuple",
    "instance_generators",
    "quantifier_value",
    "run_xi_tower",
    "xi_exact",
    "xi_tower_cell",
]


def cantor_pair(a: int, b: int) -> int:
    s = a + b
    return s * (s + 1) // 2 + b


def cantor_unpair(n: int) -> tuple[int, int]:
    w = (math.isqrt(8 * n + 1) - 1) // 2
    b = n - w * (w + 1) // 2
    return w - b, b


@dataclass(frozen=True)
class TupleCodec:
    """Pairing <.,.> with its nested m-ary extension and iota: N -> N^2.

    Defaults: Cantor pairing, and iota = inverse Cantor pairing.  Both are
    pluggable as long as they stay bijective.
    """

    pair: Callable[[int, int], int] = cantor_pair
    unpair: Callable[[int], tuple[int, int]] = cantor_unpair
    iota: Callable[[int], tuple[int, int]] = cantor_unpair
    iota_inv: Callable[[int, int], int] = cantor_pair
    name: str = "cantor"

    def nest(self, ns: Sequence[int]) -> int:
        if not ns:
            raise ValueError("need m >= 1")
        code = ns[0]
        for n in ns[1:]:
            code = self.pair(code, n)
        return code

    def unnest(self, code: int, m: int) -> tuple[int, ...]:
        out = []
        for _ in range(m - 1):
            code, last = self.unpair(code)
            out.append(last)
        out.append(code)
        return tuple(reversed(out))

    def encode(self, ns: Sequence[int]) -> tuple[int, int]:
        return self.iota(self.nest(ns))

    def decode(self, i: int, j: int, m: int) -> tuple[int, ...]:
        return self.unnest(self.iota_inv(i, j), m)


DEFAULT_CODEC = TupleCodec()


def encode_tuple(codec: TupleCodec, *ns: int) -> tuple[int, int]:
    """iota_m(n_1, ..., n_m)."""
    return codec.encode(ns)


class MatrixOracle:
    """Lazily queried {0,1}-matrix with an append-only query log.

    ``kind`` is one of ``thresholded``, ``embedded``, ``explicit`` or
    ``adversarial``; ``threshold`` is the clamp T when entries are known to
    be constant beyond T+1 in each quantifier coordinate.
    """

    def __init__(self, entry: Callable[[int, int], int], m: int, kind: str,
                 threshold: int | None = None, codec: TupleCodec = DEFAULT_CODEC,
                 ground_truth: int | None = None, info: dict | None = None):
        self._entry = entry
        self.m = m
        self.kind = kind
        self.threshold = threshold
        self.codec = codec
        self.ground_truth = ground_truth
        self.info = info or {}
        self.query_log: list[tuple[int, int]] = []
        self._memo: dict[tuple[int, int], int] = {}
        self._decoded: dict[tuple[int, int], tuple[int, ...]] = {}
        self._lock = threading.Lock()

    def __call__(self, i: int, j: int) -> int:
        with self._lock:
            self.query_log.append((i, j))
            if (i, j) not in self._memo:
                v = int(self._entry(i, j))
                if v not in (0, 1):
                    raise ValueError(f"entry ({i},{j}) = {v} is not a bit")
                self._memo[(i, j)] = v
            return self._memo[(i, j)]

    def peek(self, i: int, j: int) -> int:
        """Entry without logging (ground-truth computations only)."""
        return int(self._entry(i, j))

    def atom(self, ns: Sequence[int], log: bool = True) -> int:
        ns = tuple(ns)
        i, j = self.codec.encode(ns)
        prev = self._decoded.setdefault((i, j), ns)
        if prev != ns:
            raise AssertionError(f"codec collision: {prev} and {ns} both map to {(i, j)}")
        return self(i, j) if log else self.peek(i, j)

    def box(self, N: Sequence[int], log: bool = True) -> np.ndarray:
        """Entries at all tuples 1 <= n_r <= N_r, as an m-dimensional array."""
        if len(N) != self.m:
            raise ValueError(f"need {self.m} bounds")
        arr = np.empty(tuple(N), dtype=np.int8)
        for idx in product(*(range(n) for n in N)):
            arr[idx] = self.atom([k + 1 for k in idx], log)
        return arr


def _reduce_alternating(arr: np.ndarray) -> int:
    # innermost quantifier first; level r (1-based) is max when r is odd
    for r in range(arr.ndim, 0, -1):
        arr = arr.max(axis=-1) if r % 2 == 1 else arr.min(axis=-1)
    return int(arr)


def quantifier_value(table: np.ndarray) -> int:
    """exists n1 forall n2 ... over a finite table (index 0 is n = 1)."""
    return _reduce_alternating(np.asarray(table))


def xi_exact(A: MatrixOracle, m: int | None = None) -> int:
    """Xi_m(A) for an oracle with a known clamp T, by brute force over {1..T+1}^m."""
    m = A.m if m is None else m
    if A.threshold is None:
        raise ValueError(f"Xi_{m} is not decidable on a {A.kind} oracle without a known threshold")
    return quantifier_value(A.box([A.threshold + 1] * m, log=False))


def xi_tower_cell(A: MatrixOracle, m: int, N: Sequence[int]) -> int:
    """Bounded-quantifier approximation: alternating max/min over 1..N_r."""
    if len(N) != m or any(n < 1 for n in N):
        raise ValueError("need m bounds N_r >= 1")
    return quantifier_value(A.box(N))


@dataclass
class XiTrace:
    value: int
    stable: bool
    # (level, index, value, flipped) rows, one per evaluated index on each level
    rows: list[tuple[int, int, int, bool]] = field(default_factory=list)
    flips: dict[int, list[int]] = field(default_factory=dict)


def run_xi_tower(A: MatrixOracle, m: int, schedule: Sequence[Sequence[int]], K: int = 3) -> tuple[int, XiTrace]:
    """Nested sweep lim_{N1} lim_{N2} ... of the tower cells.

    Each level takes the value of its last index as the empirical limit and
    is flagged stable when its last K values agree.  The trace rows record
    the outermost sweep fully and the inner sweeps at the outer indices
    where they were run.
    """
    if len(schedule) != m:
        raise ValueError(f"schedule must give {m} index lists")
    for lst in schedule:
        if not lst or list(lst) != sorted(set(lst)) or lst[0] < 1:
            raise ValueError("each schedule level must be a strictly increasing list of indices >= 1")
    Nmax = [lst[-1] for lst in schedule]
    full = A.box(Nmax)
    trace = XiTrace(0, True)
    flags = []

    def level(r: int, outer: tuple[int, ...]) -> int:
        vals = []
        for N in schedule[r]:
            bounds = outer + (N,)
            if r == m - 1:
                v = quantifier_value(full[tuple(slice(0, b) for b in bounds)])
            else:
                v = level(r + 1, bounds)
            flipped = bool(vals) and v != vals[-1]
            if flipped:
                trace.flips.setdefault(r + 1, []).append(N)
            trace.rows.append((r + 1, N, v, flipped))
            vals.append(v)
        flags.append(len(vals) >= K and len(set(vals[-K:])) == 1)
        return vals[-1]

    trace.value = level(0, ())
    trace.stable = all(flags)
    return trace.value, trace


def embed_universal(x: Callable[[tuple[int, ...]], int], m: int, codec: TupleCodec = DEFAULT_CODEC,
                    threshold: int | None = None) -> MatrixOracle:
    """Psi_m(x): entry at iota_m(n) is x(n), zero on every other entry."""

    def entry(i, j):
        ns = codec.decode(i, j, m)
        if min(ns) < 1:
            return 0
        return int(x(ns))

    return MatrixOracle(entry, m, "embedded", threshold, codec)


def thresholded(base: Callable[[tuple[int, ...]], int], m: int, T: int,
                codec: TupleCodec = DEFAULT_CODEC, **info: Any) -> MatrixOracle:
    """Oracle whose atom at n is base(min(n_1, T+1), ..., min(n_m, T+1))."""

    def entry(i, j):
        ns = codec.decode(i, j, m)
        if min(ns) < 1:
            return 0
        return int(base(tuple(min(n, T + 1) for n in ns)))

    A = MatrixOracle(entry, m, "thresholded", T, codec, info=info)
    A.ground_truth = xi_exact(A)
    return A


def instance_generators(spec: dict, codec: TupleCodec = DEFAULT_CODEC) -> MatrixOracle:
    """Test-corpus oracles with ground truth attached where it is defined.

    Specs: ``{"kind": "constant", "m", "b"}``, ``{"kind": "witness_at", "m",
    "coordinates"}``, ``{"kind": "threshold_random", "m", "T", "seed"}``,
    ``{"kind": "delayed", "m", "flip_index"}``, and ``{"kind": "thresholded",
    "m", "T", "base": "table" | "seed"}`` with a ``table`` or ``seed`` key.
    """
    kind = spec.get("kind")
    m = int(spec.get("m", 1))
    if kind == "constant":
        b = int(spec["b"])
        return thresholded(lambda ns: b, m, 0, codec, spec=spec)
    if kind == "witness_at":
        c = tuple(int(v) for v in spec["coordinates"])
        if len(c) != m or min(c) < 1:
            raise ValueError("witness coordinates must be m indices >= 1")
        # a 1 exactly when every existential coordinate hits its planted value;
        # universal coordinates are unconstrained
        ex = range(0, m, 2)
        return thresholded(lambda ns: int(all(ns[r] == c[r] for r in ex)), m, max(c[r] for r in ex),
                           codec, spec=spec)
    if kind == "threshold_random":
        T = int(spec["T"])
        table = np.random.default_rng(int(spec.get("seed", 0))).integers(0, 2, size=(T + 1,) * m)
        return thresholded(lambda ns: int(table[tuple(n - 1 for n in ns)]), m, T, codec, spec=spec)
    if kind == "thresholded":
        T = int(spec["T"])
        if spec.get("base", "table") == "seed":
            table = np.random.default_rng(int(spec.get("seed", 0))).integers(0, 2, size=(T + 1,) * m)
        else:
            table = np.asarray(spec["table"], dtype=int)
        if table.shape != (T + 1,) * m:
            raise ValueError(f"table must have shape {(T + 1,) * m}")
        return thresholded(lambda ns: int(table[tuple(n - 1 for n in ns)]), m, T, codec, spec=spec)
    if kind == "delayed":
        f = int(spec["flip_index"])
        if f < 1:
            raise ValueError("flip_index must be >= 1")
        A = thresholded(lambda ns: int(ns[0] == f), m, f, codec, spec=spec)
        A.kind = "adversarial"
        return A
    raise ValueError(f"unknown oracle spec {kind!r}")
