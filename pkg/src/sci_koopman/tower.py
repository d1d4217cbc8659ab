"""Tower algorithms for epsilon-approximate point pseudospectra and sigma_ap.

Index conventions follow the nested limits: ``n2`` is the outer index
(spectral grid resolution and, by default, the dictionary depth), ``n1``
the inner quadrature depth, and ``m`` the extra limit eps_m = 1/m.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .cantor import CantorPoint
from .dynamics import SymbolicMap, check_measure_preservation, estimate_density, modulus_probe
from .koopman import PointOracle, assemble_section, lower_norms
from .spectral_sets import SpectralSet, decreasing_limit_diagnostic, hausdorff_distance

log = logging.getLogger(__name__)

__all__ = [
    "ConsistencyReport",
    "ConsistencyViolation",
    "PLACEHOLDER",
    "ResidualField",
    "Schedule",
    "SpectralGrid",
    "TowerTrace",
    "UncertifiedModulus",
    "consistency_check",
    "gamma_set",
    "one_index_schedule",
    "operator_norm_estimate",
    "residual_field",
    "run_pseudospectrum_tower",
    "run_sigma_ap_tower",
    "spectral_grid",
]

TIE_GUARD = 1e-12
PLACEHOLDER = SpectralSet.of(0.0)


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    n: int
    points: np.ndarray
    radius: float

    @property
    def mesh(self) -> float:
        return math.sqrt(2) / self.n

    def __len__(self) -> int:
        return self.points.size


def spectral_grid(n: int, cap: float | None = None) -> SpectralGrid:
    """G_n = {(k + i l)/n : |(k + i l)/n| <= n}, optionally cut to |z| <= cap."""
    if n < 1:
        raise ValueError("n must be >= 1")
    R = float(n) if cap is None else min(float(n), float(cap))
    K = int(math.floor(R * n))
    k = np.arange(-K, K + 1)
    kk, ll = np.meshgrid(k, k, indexing="ij")
    inside = kk * kk + ll * ll <= (R * n) ** 2 + 1e-9
    pts = (kk[inside] + 1j * ll[inside]) / n
    pts.flags.writeable = False
    return SpectralGrid(n, pts, R)


@dataclass(eq=False)
class ResidualField:
    grid: SpectralGrid
    values: np.ndarray
    n2: int
    n1: int
    p: Any
    method: str
    query_count: int = 0

    def value_at(self, z: complex) -> float:
        i = int(np.argmin(np.abs(self.grid.points - z)))
        if abs(self.grid.points[i] - z) > 1e-12:
            raise KeyError(f"{z} is not a grid point")
        return float(self.values[i])


def residual_field(F: SymbolicMap | PointOracle, n2: int, n1: int, p, grid: SpectralGrid,
                   method: str = "auto", threads: int = 1) -> ResidualField:
    """h_{n2,n1}(z, F) at every point of ``grid``."""
    sec = assemble_section(F, n2, n1)
    zs = grid.points
    if threads > 1 and zs.size > threads:
        chunks = np.array_split(zs, threads)
        with ThreadPoolExecutor(threads) as ex:
            vals = np.concatenate(list(ex.map(lambda c: lower_norms(sec, c, p, method), chunks)))
    else:
        vals = lower_norms(sec, zs, p, method)
    return ResidualField(grid, vals, n2, n1, p, method, sec.query_count)


def gamma_mask(field: ResidualField, eps: float, n2: int) -> np.ndarray | None:
    thr = eps - 1.0 / n2
    if thr <= 0:
        return None
    mask = field.values < thr - TIE_GUARD
    band = np.abs(field.values - thr) <= TIE_GUARD
    if band.any():
        log.info("gamma: %d grid values inside the tie band at threshold %.3g excluded", band.sum(), thr)
    return mask


def gamma_set(field: ResidualField, eps: float, n2: int) -> SpectralSet:
    """Grid points with h < eps - 1/n2; the placeholder {0} when that is empty or undefined."""
    mask = gamma_mask(field, eps, n2)
    if mask is None or not mask.any():
        return PLACEHOLDER
    return SpectralSet(field.grid.points[mask], field.grid.mesh)


class UncertifiedModulus(ValueError):
    pass


def one_index_schedule(n2: int, lipschitz_certified: bool) -> int:
    """Inner resolution that collapses the n1 limit for 1-Lipschitz maps.

    Cylinder-dictionary integrands g and g o F are constant on depth-n2
    cylinders when F is prefix preserving, so the depth-n2 Riemann sums are
    already exact.
    """
    if not lipschitz_certified:
        raise UncertifiedModulus("one-index schedule needs a certified 1-Lipschitz map; use the two-index tower")
    return n2


def certify_lipschitz(F: SymbolicMap, depth: int) -> bool:
    return modulus_probe(F, depth).lipschitz


def operator_norm_estimate(F: SymbolicMap, p, depth: int = 8) -> float:
    """1 for measure-preserving maps (and always on L-inf); else sup density^(1/p)."""
    if p in (float("inf"), "inf", np.inf):
        return 1.0
    if check_measure_preservation(F, depth).max_deviation == 0:
        return 1.0
    return float(estimate_density(F, depth).sup) ** (1.0 / float(p))


@dataclass
class Schedule:
    n2: list[int]
    n1_rule: str = "sweep"  # or "one_index"
    n1_extra: int = 4
    dict_depth_cap: int | None = 10
    grid_cap: float | None = None
    K: int = 3
    tol: float = 1e-9
    method: str = "auto"
    certify_depth: int = 12
    threads: int = 1

    def __post_init__(self) -> None:
        if not self.n2:
            raise ValueError("schedule needs at least one n2")
        if list(self.n2) != sorted(set(self.n2)):
            raise ValueError("n2 indices must be strictly increasing")
        if self.n1_rule not in ("sweep", "one_index"):
            raise ValueError(f"unknown n1 rule {self.n1_rule!r}")

    def dict_depth(self, n2: int) -> int:
        return n2 if self.dict_depth_cap is None else min(n2, self.dict_depth_cap)

    @classmethod
    def from_config(cls, cfg: dict) -> "Schedule":
        stab = cfg.get("stab", {})
        return cls(
            n2=list(cfg["n2"]),
            n1_rule=cfg.get("n1_rule", "sweep"),
            n1_extra=int(cfg.get("n1_extra", 4)),
            dict_depth_cap=cfg.get("dict_depth_cap", 10),
            grid_cap=cfg.get("grid_cap"),
            K=int(stab.get("K", 3)),
            tol=float(stab.get("tol", 1e-9)),
            method=cfg.get("method", "auto"),
        )


@dataclass
class Stage:
    index: tuple
    output: SpectralSet
    queries: int = 0


@dataclass
class TowerTrace:
    stages: list[Stage] = field(default_factory=list)
    stabilization: dict[str, bool] = field(default_factory=dict)
    notes: dict[str, Any] = field(default_factory=dict)

    def record(self, index: tuple, output: SpectralSet, queries: int = 0) -> None:
        if self.stages and len(self.stages[-1].index) == len(index):
            if index <= self.stages[-1].index:
                raise ValueError(f"trace indices must increase: {index} after {self.stages[-1].index}")
        self.stages.append(Stage(index, output, queries))

    @property
    def stable(self) -> bool:
        return all(self.stabilization.values())

    def to_json(self) -> list[dict]:
        return [
            {"index": list(s.index), "n_points": len(s.output), "queries": s.queries,
             "points": [[float(z.real), float(z.imag)] for z in s.output.points]}
            for s in self.stages
        ]


def _window_stable(dists: list[float], bounds: list[float], K: int) -> bool:
    if len(dists) < K:
        return False
    return all(d <= b for d, b in zip(dists[-K:], bounds[-K:]))


def run_pseudospectrum_tower(F: SymbolicMap, eps: float, p, schedule: Schedule,
                             trace: TowerTrace | None = None, tag: tuple = ()) -> tuple[SpectralSet, TowerTrace]:
    """Empirical nested limit lim_n2 lim_n1 Gamma_{n2,n1}(F).

    Inner limit: Gamma is recomputed for n1 = n1_min, n1_min+1, ... until K
    consecutive Hausdorff differences are <= tol (or n1_extra steps are
    used).  Outer limit: differences between consecutive n2 stages are
    compared with tol + mesh(n2) + mesh(n2') + 1/n2, the resolution at
    which the grids can agree.  Stability flags are diagnostics only.
    """
    trace = TowerTrace() if trace is None else trace
    R = schedule.grid_cap
    if R is None:
        R = operator_norm_estimate(F, p) + eps + 1.0
    one_index = schedule.n1_rule == "one_index"
    if one_index:
        d_max = schedule.dict_depth(max(schedule.n2))
        certified = certify_lipschitz(F, min(max(d_max, 1), schedule.certify_depth))
        trace.notes["lipschitz_certified"] = certified
    outer: list[tuple[int, SpectralSet]] = []
    inner_flags = []
    for n2 in schedule.n2:
        d = schedule.dict_depth(n2)
        grid = spectral_grid(n2, R)
        base = max(d, F.info_depth(d))
        if one_index:
            n1s = [max(one_index_schedule(d, certified), base)]
        else:
            n1s = list(range(base, base + schedule.n1_extra + 1))
        prev, dists = None, []
        out = PLACEHOLDER
        for n1 in n1s:
            field_ = residual_field(F, d, n1, p, grid, schedule.method, schedule.threads)
            out = gamma_set(field_, eps, n2)
            trace.record(tag + (n2, n1), out, field_.query_count)
            if prev is not None:
                dists.append(hausdorff_distance(prev, out))
                if _window_stable(dists, [schedule.tol] * len(dists), schedule.K):
                    break
            prev = out
        inner_flags.append(one_index or _window_stable(dists, [schedule.tol] * len(dists), schedule.K))
        outer.append((n2, out))
    od, ob = [], []
    for (a, A), (b, B) in zip(outer, outer[1:]):
        od.append(hausdorff_distance(A, B))
        ob.append(schedule.tol + math.sqrt(2) / a + math.sqrt(2) / b + 1.0 / a)
    key = "/".join(map(str, tag)) if tag else "eps"
    trace.stabilization[f"inner[{key}]"] = all(inner_flags)
    trace.stabilization[f"outer[{key}]"] = _window_stable(od, ob, schedule.K)
    trace.notes.setdefault("outer_distances", {})[key] = od
    return outer[-1][1], trace


def run_sigma_ap_tower(F: SymbolicMap, p, schedule: Schedule, m_max: int) -> tuple[SpectralSet, TowerTrace]:
    """Third limit: A_m = pseudospectrum tower output at eps_m = 1/m."""
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    trace = TowerTrace()
    sets = []
    for m in range(1, m_max + 1):
        A_m, _ = run_pseudospectrum_tower(F, 1.0 / m, p, schedule, trace, tag=(m,))
        sets.append(A_m)
    trace.notes["A_m"] = sets
    if len(sets) >= 2:
        mesh = math.sqrt(2) / max(schedule.n2)
        diag = decreasing_limit_diagnostic(sets, slack=mesh)
        trace.notes["distance_to_last"] = diag.distances_to_last
        trace.notes["nested"] = diag.nested
        trace.notes["monotone"] = diag.monotone
    return sets[-1], trace


# ---------------------------------------------------------------------------
# consistency axiom harness


class ConsistencyViolation(AssertionError):
    pass


@dataclass
class ConsistencyReport:
    passed: bool
    applicable: bool
    queries: int
    witness: list[CantorPoint] = field(default_factory=list)


def _outputs_equal(a, b) -> bool:
    if isinstance(a, SpectralSet) and isinstance(b, SpectralSet):
        return a.points.shape == b.points.shape and np.array_equal(a.points, b.points)
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return np.array_equal(a, b)
    return a == b


def consistency_check(algorithm: Callable[[PointOracle], Any], F: SymbolicMap, G: SymbolicMap,
                      max_witnesses: int = 5) -> ConsistencyReport:
    """Replay ``algorithm`` on F, then on G if G agrees with F at every queried point.

    When the queried values agree the outputs must be identical; otherwise
    :class:`ConsistencyViolation` is raised.  When they do not agree the
    report lists distinguishing query points and ``applicable`` is False.
    """
    oF = PointOracle(F)
    out_F = algorithm(oF)
    witness = []
    for x in oF.queried_points():
        if F.apply(x) != G.apply(x):
            witness.append(x)
            if len(witness) >= max_witnesses:
                break
    if witness:
        return ConsistencyReport(True, False, oF.query_count(), witness)
    oG = PointOracle(G)
    out_G = algorithm(oG)
    if not _outputs_equal(out_F, out_G):
        raise ConsistencyViolation("outputs differ although every queried value agrees")
    return ConsistencyReport(True, True, oF.query_count())
