"""Finite stand-ins for compact subsets of the complex plane."""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "DEDUP_TOL",
    "SpectralSet",
    "circle_grid",
    "decreasing_limit_diagnostic",
    "directed_distance",
    "dyadic_root_approximant",
    "hausdorff_distance",
    "roots_of_unity",
]

DEDUP_TOL = 1e-12


def _as_xy(points: np.ndarray) -> np.ndarray:
    return np.column_stack([points.real, points.imag])


def _dedup(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=complex).ravel()
    if points.size <= 1:
        return points
    order = np.lexsort((points.imag, points.real))
    points = points[order]
    pairs = cKDTree(_as_xy(points)).query_pairs(DEDUP_TOL, output_type="ndarray")
    if len(pairs):
        drop = np.zeros(points.size, bool)
        # keep the earlier point of each close pair
        for i, j in sorted(map(tuple, pairs)):
            if not drop[i]:
                drop[j] = True
        points = points[~drop]
    return points


@dataclass(frozen=True, eq=False)
class SpectralSet:
    """Nonempty finite point cloud plus a resolution radius.

    The cloud stands for any compact set within Hausdorff distance
    ``resolution`` of it.
    """

    points: np.ndarray
    resolution: float = 0.0
    _tree: cKDTree = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        pts = _dedup(self.points)
        if pts.size == 0:
            raise ValueError("a SpectralSet must be nonempty")
        if self.resolution < 0:
            raise ValueError("resolution must be >= 0")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "resolution", float(self.resolution))
        object.__setattr__(self, "_tree", cKDTree(_as_xy(pts)))

    @classmethod
    def of(cls, *points: complex, resolution: float = 0.0) -> "SpectralSet":
        return cls(np.array(points, dtype=complex), resolution)

    def __len__(self) -> int:
        return self.points.size

    def __iter__(self):
        return iter(self.points.tolist())

    def __repr__(self) -> str:
        return f"SpectralSet({len(self)} points, resolution={self.resolution:g})"

    def distance_to(self, z) -> np.ndarray:
        """Distance from each query point to the nearest point of the set."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        d, _ = self._tree.query(_as_xy(z))
        return d

    def contains(self, z: complex, tol: float = DEDUP_TOL) -> bool:
        return bool(self.distance_to(z)[0] <= tol)

    def issubset(self, other: "SpectralSet", tol: float = DEDUP_TOL) -> bool:
        return directed_distance(self, other) <= tol

    def union(self, *others: "SpectralSet") -> "SpectralSet":
        pts = np.concatenate([self.points, *(o.points for o in others)])
        res = max([self.resolution, *(o.resolution for o in others)])
        return SpectralSet(pts, res)

    def to_json(self) -> dict:
        return {
            "points": [[float(z.real), float(z.imag)] for z in self.points],
            "resolution": self.resolution,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SpectralSet":
        pts = np.array([complex(re, im) for re, im in obj["points"]])
        return cls(pts, obj.get("resolution", 0.0))


def directed_distance(A: SpectralSet, B: SpectralSet) -> float:
    """sup over a in A of dist(a, B)."""
    return float(B.distance_to(A.points).max())


def hausdorff_distance(A: SpectralSet, B: SpectralSet) -> float:
    # resolutions are deliberately ignored; callers add them as slack
    return max(directed_distance(A, B), directed_distance(B, A))


def roots_of_unity(L: int) -> SpectralSet:
    if L < 1:
        raise ValueError("L must be >= 1")
    j = np.arange(L)
    return SpectralSet(np.exp(2j * np.pi * j / L), 0.0)


def circle_grid(n: int) -> SpectralSet:
    """2n equally spaced points on the unit circle."""
    if n < 1:
        raise ValueError("n must be >= 1")
    j = np.arange(2 * n)
    return SpectralSet(np.exp(1j * np.pi * j / n), 2 * math.sin(math.pi / (2 * n)))


def dyadic_root_approximant(z0: complex, r: int) -> tuple[complex, float]:
    """Nearest-below 2^r-th root of unity to the unit complex number ``z0``.

    With z0 = exp(2 pi i theta), theta in [0, 1), returns
    lambda_r = exp(2 pi i floor(2^r theta) / 2^r) and |lambda_r - z0|.
    """
    if abs(abs(z0) - 1.0) > 1e-9:
        raise ValueError(f"z0={z0} is not on the unit circle")
    if r < 0:
        raise ValueError("r must be >= 0")
    theta = (cmath.phase(z0) / (2 * math.pi)) % 1.0
    p = math.floor(theta * (1 << r)) % (1 << r)
    lam = cmath.exp(2j * math.pi * p / (1 << r))
    return lam, abs(lam - z0)


@dataclass
class DecreasingLimitReport:
    distances_to_last: list[float]
    nesting_excess: list[float]
    nested: bool
    monotone: bool


def decreasing_limit_diagnostic(sets: list[SpectralSet], slack: float | None = None) -> DecreasingLimitReport:
    """Check approximate nestedness of a sequence and distances to its last term.

    ``nesting_excess[m]`` is the directed distance from set m+1 into set m;
    nestedness holds when each excess is within ``slack`` (default: the larger
    resolution of the two sets).
    """
    if len(sets) < 2:
        raise ValueError("need at least two sets")
    last = sets[-1]
    dist = [hausdorff_distance(S, last) for S in sets]
    excess = [directed_distance(b, a) for a, b in zip(sets, sets[1:])]
    slacks = [
        (max(a.resolution, b.resolution) if slack is None else slack) + DEDUP_TOL
        for a, b in zip(sets, sets[1:])
    ]
    nested = all(e <= s for e, s in zip(excess, slacks))
    monotone = all(b <= a + DEDUP_TOL for a, b in zip(dist, dist[1:]))
    return DecreasingLimitReport(dist, excess, nested, monotone)
