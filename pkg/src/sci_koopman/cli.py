"""``sci`` command line: batch experiments with JSON/CSV/SVG artifacts.

Exit codes: 0 stabilised and every invariant held, 1 invalid config,
2 unstabilised tower or failed invariant.
"""
from __future__ import annotations

import argparse
import cmath
import json
import logging
import math
import sys
from fractions import Fraction
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .dynamics import (
    FiniteTree,
    build_tree_map,
    check_measure_preservation,
    estimate_density,
    exhaustive_depth_cap,
    map_from_descriptor,
    modulus_probe,
    perturbation_sup,
    silver_tree,
    star_counts,
)
from .koopman import (
    assemble_section,
    cycle_decomposition,
    exact_cycle_spectrum,
    predicted_spectrum_tree,
    verify_character_eigenpair,
)
from .report import config_hash, svg_scatter, write_csv, write_json
from .spectral_sets import (
    SpectralSet,
    circle_grid,
    directed_distance,
    dyadic_root_approximant,
    hausdorff_distance,
    roots_of_unity,
)
from .tower import (
    Schedule,
    operator_norm_estimate,
    residual_field,
    run_pseudospectrum_tower,
    run_sigma_ap_tower,
    spectral_grid,
)
from .xi import instance_generators, run_xi_tower

log = logging.getLogger("sci")

EXIT_OK, EXIT_CONFIG, EXIT_UNSTABLE = 0, 1, 2


class ConfigError(ValueError):
    pass


_INT_LIST = {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1}
_P = {"oneOf": [{"enum": [1, 2]}, {"enum": ["inf"]}]}
_MAP = {"type": "object", "required": ["kind"], "properties": {"kind": {"type": "string"}}}
_STAB = {
    "type": "object",
    "properties": {"K": {"type": "integer", "minimum": 1}, "tol": {"type": "number", "minimum": 0}},
    "additionalProperties": False,
}
_SCHEDULE_PROPS = {
    "n2": _INT_LIST,
    "n1_rule": {"enum": ["sweep", "one_index"]},
    "n1_extra": {"type": "integer", "minimum": 0},
    "dict_depth_cap": {"type": ["integer", "null"], "minimum": 1},
    "grid_cap": {"type": ["number", "null"], "exclusiveMinimum": 0},
    "method": {"enum": ["auto", "svd", "cycle_exact", "heuristic"]},
    "stab": _STAB,
}
_COMMON = {"name": {"type": "string"}, "task": {"type": "string"}, "output_dir": {"type": "string"}}

SCHEMAS = {
    "pseudospectrum": {
        "type": "object",
        "required": ["map", "epsilon", "n2"],
        "properties": {**_COMMON, **_SCHEDULE_PROPS, "map": _MAP, "p": _P,
                       "epsilon": {"type": "number", "exclusiveMinimum": 0}},
        "additionalProperties": False,
    },
    "sigma_ap": {
        "type": "object",
        "required": ["map", "m_max", "n2"],
        "properties": {**_COMMON, **_SCHEDULE_PROPS, "map": _MAP, "p": _P,
                       "m_max": {"type": "integer", "minimum": 1}},
        "additionalProperties": False,
    },
    "gadget_check": {
        "type": "object",
        "required": ["map"],
        "properties": {**_COMMON, "map": _MAP,
                       "depth": {"type": "integer", "minimum": 1},
                       "character_m_max": {"type": "integer", "minimum": 1, "maximum": 16},
                       "invariants": {"type": "array", "items": {"enum": [
                           "measure_preserving", "perturbation_bound", "lipschitz", "character_eigenpairs"]}}},
        "additionalProperties": False,
    },
    "xi_tower": {
        "type": "object",
        "required": ["instances"],
        "properties": {**_COMMON,
                       "instances": {"type": "array", "minItems": 1, "items": {
                           "type": "object", "required": ["kind"],
                           "properties": {"kind": {"type": "string"}, "m": {"type": "integer", "minimum": 1},
                                          "count": {"type": "integer", "minimum": 1},
                                          "T_max": {"type": "integer", "minimum": 0}}}},
                       "N_max": {"type": "integer", "minimum": 1, "maximum": 64},
                       "K": {"type": "integer", "minimum": 1}},
        "additionalProperties": False,
    },
    "reduction_demo": {
        "type": "object",
        "required": ["tree", "n2", "epsilon"],
        "properties": {**_COMMON, **_SCHEDULE_PROPS,
                       "tree": {"type": "object"},
                       "version": {"enum": ["odometer", "dump"]},
                       "p": _P,
                       "epsilon": {"type": "number", "exclusiveMinimum": 0},
                       "z0_theta": {"type": ["number", "string"]},
                       "r_max": {"type": "integer", "minimum": 0, "maximum": 30}},
        "additionalProperties": False,
    },
}

COMMAND_TASKS = {
    "spectrum": ("pseudospectrum", "sigma_ap"),
    "gadget": ("gadget_check",),
    "xi": ("xi_tower",),
    "reduction": ("reduction_demo",),
}


def _p(cfg):
    p = cfg.get("p", 2)
    return float("inf") if p == "inf" else p


def _p_label(p):
    return "inf" if p == float("inf") else p


def load_config(path: str | Path, command: str) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    tasks = COMMAND_TASKS[command]
    task = cfg.get("task", tasks[0])
    if task not in tasks:
        raise ConfigError(f"task {task!r} does not belong to 'sci {command}' (expected one of {tasks})")
    try:
        jsonschema.validate(cfg, SCHEMAS[task])
    except jsonschema.ValidationError as e:
        where = "/".join(map(str, e.absolute_path)) or "<root>"
        raise ConfigError(f"schema error at {where}: {e.message}") from e
    cfg = dict(cfg, task=task)
    # semantic checks that the schema cannot express
    try:
        if "map" in cfg:
            map_from_descriptor(cfg["map"])
        if "n2" in cfg:
            Schedule.from_config(cfg)
        if task == "reduction_demo":
            _tree_from_config(cfg["tree"])
        if task == "xi_tower":
            for spec in cfg["instances"]:
                for s in _expand_instances(spec, 0):
                    instance_generators(s)
                    break
    except (ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"invalid parameters: {e}") from e
    return cfg


def _schedule(cfg: dict, threads: int) -> Schedule:
    sch = Schedule.from_config(cfg)
    sch.threads = threads
    return sch


# ---------------------------------------------------------------------------
# spectrum


def cmd_spectrum(cfg: dict, out: Path, threads: int, seed: int) -> int:
    chash = config_hash(cfg)
    F = map_from_descriptor(cfg["map"])
    p = _p(cfg)
    sch = _schedule(cfg, threads)
    if cfg["task"] == "pseudospectrum":
        final, trace = run_pseudospectrum_tower(F, float(cfg["epsilon"]), p, sch)
        extra = {"epsilon": cfg["epsilon"]}
    else:
        final, trace = run_sigma_ap_tower(F, p, sch, int(cfg["m_max"]))
        extra = {"m_max": cfg["m_max"], "nested": trace.notes.get("nested"),
                 "monotone": trace.notes.get("monotone"),
                 "distance_to_last": trace.notes.get("distance_to_last")}
    n2, n1 = trace.stages[-1].index[-2:]
    eps = float(cfg["epsilon"]) if "epsilon" in cfg else 1.0 / int(cfg["m_max"])
    R = sch.grid_cap if sch.grid_cap is not None else operator_norm_estimate(F, p) + eps + 1.0
    grid = spectral_grid(n2, R)
    field_ = residual_field(F, sch.dict_depth(n2), n1, p, grid, sch.method, threads)
    payload = {
        "name": cfg.get("name", ""),
        "task": cfg["task"],
        "p": _p_label(p),
        "final_set": [[float(z.real), float(z.imag)] for z in final.points],
        "mesh": math.sqrt(2) / n2,
        "stabilized": trace.stable,
        "stabilization": trace.stabilization,
        "outer_distances": trace.notes.get("outer_distances"),
        "d_H_circle_grid_64": hausdorff_distance(final, circle_grid(64)),
        "d_H_one": hausdorff_distance(final, SpectralSet.of(1.0)),
        "trace": trace.to_json(),
        **extra,
    }
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "result.json", payload, chash)
    write_csv(out / "residual.csv", ["re", "im", "h"],
              ((z.real, z.imag, h) for z, h in zip(field_.grid.points, field_.values)), chash)
    svg_scatter(out / "spectrum.svg", {"tower": final}, chash, cfg.get("name", ""))
    return EXIT_OK if trace.stable else EXIT_UNSTABLE


# ---------------------------------------------------------------------------
# gadget


def _frac(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def cmd_gadget(cfg: dict, out: Path, threads: int, seed: int) -> int:
    chash = config_hash(cfg)
    desc = cfg["map"]
    F = map_from_descriptor(desc)
    cap = exhaustive_depth_cap()
    D = min(int(cfg.get("depth", 10)), cap)
    while D > 1 and F.info_depth(D) > 22:
        D -= 1
    kind = desc["kind"]
    report: dict = {"name": cfg.get("name", ""), "map": desc, "depth": D}
    checks: dict[str, bool] = {}

    mp = check_measure_preservation(F, D, cap)
    report["measure"] = {"max_deviation": _frac(mp.max_deviation), "worst_cylinder": mp.worst_cylinder}
    checks["measure_preserving"] = mp.max_deviation == 0

    md = modulus_probe(F, D, cap)
    report["modulus"] = {str(l): _frac(v) for l, v in md.table.items()}
    checks["lipschitz"] = md.lipschitz

    dens = estimate_density(F, D, cap)
    report["density"] = {"sup_by_depth": [_frac(s) for s in dens.sup_by_depth],
                         "unbounded_suspect": dens.unbounded_suspect}

    if kind in ("translation", "single_toggle"):
        r = int(desc["r"])
        Dp = min(2 * r + 4, cap)
        sup = perturbation_sup(F, Dp, cap)
        bound = Fraction(1, 1 << (r + 1))
        report["perturbation"] = {"depth": Dp, "sup": _frac(sup), "bound": _frac(bound),
                                  "bound_holds": sup <= bound}
        checks["perturbation_bound"] = sup <= bound
    if kind == "translation":
        r = int(desc["r"])
        m_max = int(cfg.get("character_m_max", min(r + 4, 10)))
        worst = 0.0
        for m in range(r + 1, m_max + 1):
            for k in range(1 << m):
                worst = max(worst, verify_character_eigenpair(r, m, k))
        report["characters"] = {"m_range": [r + 1, m_max], "max_deviation": worst}
        checks["character_eigenpairs"] = worst <= 1e-12
    if kind.startswith("tree_"):
        S = FiniteTree.from_json(desc["tree"])
        report["star_counts"] = star_counts(S)

    default = ["measure_preserving", "perturbation_bound", "character_eigenpairs"]
    required = cfg.get("invariants", default)
    failed = [name for name in required if name in checks and not checks[name]]
    report["checks"] = checks
    report["failed_invariants"] = failed
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "gadget.json", report, chash)
    for name in failed:
        print(f"invariant failed: {name}", file=sys.stderr)
    return EXIT_UNSTABLE if failed else EXIT_OK


# ---------------------------------------------------------------------------
# xi


def _expand_instances(spec: dict, seed: int) -> list[dict]:
    """A spec with ``count`` expands into that many seeded instances."""
    spec = dict(spec)
    count = spec.pop("count", None)
    T_max = spec.pop("T_max", None)
    if count is None:
        if spec.get("kind") in ("threshold_random",) or spec.get("base") == "seed":
            spec.setdefault("seed", seed)
        return [spec]
    rng = np.random.default_rng(int(spec.pop("seed", seed)))
    out = []
    for _ in range(int(count)):
        s = dict(spec, seed=int(rng.integers(2**31)))
        if T_max is not None:
            s["T"] = int(rng.integers(0, T_max + 1))
        out.append(s)
    return out


def cmd_xi(cfg: dict, out: Path, threads: int, seed: int) -> int:
    chash = config_hash(cfg)
    N_max = int(cfg.get("N_max", 10))
    K = int(cfg.get("K", 3))
    table_rows, trace_rows, results = [], [], []
    ok = True
    idx = 0
    for spec in cfg["instances"]:
        for s in _expand_instances(spec, seed):
            A = instance_generators(s)
            sched = [list(range(1, N_max + 1))] * A.m
            value, tr = run_xi_tower(A, A.m, sched, K)
            truth = A.ground_truth
            agree = None if truth is None else value == truth
            ok &= tr.stable and agree is not False
            results.append({"instance": idx, "spec": s, "value": value, "exact": truth,
                            "agree": agree, "stable": tr.stable,
                            "flips": {str(k): v for k, v in tr.flips.items()}})
            table_rows.append((idx, s["kind"], A.m, A.threshold, value, truth, agree, tr.stable))
            trace_rows.extend((idx, lvl, n, v, int(f)) for lvl, n, v, f in tr.rows)
            idx += 1
    decided = [r for r in results if r["agree"] is not None]
    summary = {"instances": len(results), "with_ground_truth": len(decided),
               "agreement": (sum(r["agree"] for r in decided) / len(decided)) if decided else None,
               "all_stable": all(r["stable"] for r in results)}
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "xi.json", {"name": cfg.get("name", ""), "N_max": N_max, "K": K,
                                 "summary": summary, "results": results}, chash)
    write_csv(out / "agreement.csv", ["instance", "kind", "m", "T", "tower", "exact", "agree", "stable"],
              table_rows, chash)
    write_csv(out / "trace.csv", ["instance", "level", "index", "value", "flipped"], trace_rows, chash)
    return EXIT_OK if ok else EXIT_UNSTABLE


# ---------------------------------------------------------------------------
# reduction


def _tree_from_config(tcfg: dict) -> tuple[FiniteTree, int | None]:
    """Returns the tree and, for Silver trees, |M minus A|."""
    if "levels" in tcfg:
        return FiniteTree.from_json(tcfg), None
    if "branch" in tcfg:
        return FiniteTree.branch(tcfg["branch"]), None
    M = int(tcfg["M"])
    A = [int(a) for a in tcfg["A"]]
    x = tcfg.get("x", "0" * M)
    return silver_tree(A, x, M), M - len(set(A))


def _theta(v) -> float:
    if isinstance(v, str):
        if v == "sqrt2-1":
            return math.sqrt(2) - 1
        return float(v)
    return float(v)


def cmd_reduction(cfg: dict, out: Path, threads: int, seed: int) -> int:
    chash = config_hash(cfg)
    S, free = _tree_from_config(cfg["tree"])
    version = cfg.get("version", "odometer")
    F = build_tree_map(S, version)
    p = _p(cfg)
    eps = float(cfg["epsilon"])
    sch = _schedule(cfg, threads)
    predicted = predicted_spectrum_tree(S, version)
    final, trace = run_pseudospectrum_tower(F, eps, p, sch)
    n2, n1 = trace.stages[-1].index[-2:]
    d = sch.dict_depth(n2)
    sec = assemble_section(F, d, max(d, F.info_depth(d)))
    section_spec = None
    cycles = None
    if sec.is_permutation:
        cyc = cycle_decomposition(sec)
        cycles = {str(L): cyc.lengths.count(L) for L in cyc.distinct_lengths()}
        section_spec = exact_cycle_spectrum(cyc.distinct_lengths())
    mesh = math.sqrt(2) / n2
    checks: dict[str, bool] = {}
    report: dict = {"name": cfg.get("name", ""), "version": version, "tree": S.to_json(),
                    "star_counts": star_counts(S), "predicted": predicted.to_json(),
                    "tower_set": final.to_json(), "mesh": mesh, "stabilized": trace.stable,
                    "section_cycle_histogram": cycles}
    if section_spec is not None:
        checks["section_within_prediction"] = directed_distance(section_spec, predicted) <= 1e-9
        dh = hausdorff_distance(final, section_spec)
        report["d_H_tower_section"] = dh
        checks["tower_matches_section"] = dh <= eps + mesh + 1e-9
    if free is not None:
        U = roots_of_unity(1 << free)
        checks["contains_U_2^free"] = U.issubset(predicted, 1e-9)
        report["free_coordinates"] = free
    rows = []
    if "z0_theta" in cfg:
        z0 = cmath.exp(2j * math.pi * _theta(cfg["z0_theta"]))
        r_max = int(cfg.get("r_max", 8))
        ok = True
        for r in range(r_max + 1):
            lam, err = dyadic_root_approximant(z0, r)
            bound = 2 * math.pi * 2.0 ** -r
            inside = predicted.contains(lam, 1e-9)
            ok &= err <= bound
            rows.append((r, lam.real, lam.imag, err, bound, int(inside)))
        checks["approximant_bound"] = ok
        report["z0"] = [z0.real, z0.imag]
    report["checks"] = checks
    failed = [k for k, v in checks.items() if not v]
    report["failed_invariants"] = failed
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "reduction.json", report, chash)
    if rows:
        write_csv(out / "approximants.csv", ["r", "re", "im", "error", "bound", "in_predicted"], rows, chash)
    svg_scatter(out / "reduction.svg", {"predicted": predicted, "tower": final}, chash, cfg.get("name", ""))
    for name in failed:
        print(f"invariant failed: {name}", file=sys.stderr)
    return EXIT_OK if trace.stable and not failed else EXIT_UNSTABLE


COMMANDS = {"spectrum": cmd_spectrum, "gadget": cmd_gadget, "xi": cmd_xi, "reduction": cmd_reduction}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sci", description="Koopman spectra on Cantor space: tower experiments.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="experiment config (JSON)")
    ap.add_argument("--out", default=None, help="output directory (default: config output_dir or ./out/<name>)")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.command)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 1:
        print("config error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or cfg.get("output_dir") or Path("out") / (cfg.get("name") or args.command))
    code = COMMANDS[args.command](cfg, out, args.threads, args.seed)
    print(f"{args.command}: wrote {out} (exit {code})")
    return code


if __name__ == "__main__":
    sys.exit(main())
