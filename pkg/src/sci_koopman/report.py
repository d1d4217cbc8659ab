"""Deterministic artifact writers: JSON, CSV with a provenance header, SVG scatter."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy

from . import __version__
from .spectral_sets import SpectralSet


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def versions() -> dict[str, str]:
    return {"sci_koopman": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def _default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, SpectralSet):
        return o.to_json()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def write_json(path: Path, payload: dict, chash: str) -> None:
    body = {"config_hash": chash, "versions": versions(), **payload}
    path.write_text(json.dumps(body, indent=2, sort_keys=True, default=_default) + "\n")


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence], chash: str) -> None:
    buf = io.StringIO()
    buf.write(f"# config_hash={chash} sci_koopman={__version__}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    path.write_text(buf.getvalue())


def svg_scatter(path: Path, sets: dict[str, SpectralSet], chash: str, title: str = "",
                size: int = 480) -> None:
    """Point scatter of one or more spectral sets over a unit-circle guide."""
    colors = ["#1f5fa8", "#c0392b", "#27864a", "#8e44ad", "#d68910"]
    pts = np.concatenate([s.points for s in sets.values()]) if sets else np.zeros(1, complex)
    R = max(1.25, float(np.abs(pts).max()) * 1.1)
    half = size / 2
    scale = (half - 20) / R

    def xy(z):
        return half + z.real * scale, half - z.imag * scale

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size + 24}" '
        f'viewBox="0 0 {size} {size + 24}">',
        f"<!-- config_hash={chash} sci_koopman={__version__} -->",
        f'<rect width="{size}" height="{size + 24}" fill="white"/>',
        f'<line x1="0" y1="{half}" x2="{size}" y2="{half}" stroke="#bbb" stroke-width="0.5"/>',
        f'<line x1="{half}" y1="0" x2="{half}" y2="{size}" stroke="#bbb" stroke-width="0.5"/>',
        f'<circle cx="{half}" cy="{half}" r="{scale:.4f}" fill="none" stroke="#888" '
        f'stroke-dasharray="4 3"/>',
    ]
    r_dot = max(1.2, min(3.0, 600 / max(len(pts), 1)))
    for (name, s), color in zip(sets.items(), colors * 4):
        for z in s.points:
            x, y = xy(z)
            out.append(f'<circle cx="{x:.3f}" cy="{y:.3f}" r="{r_dot:.2f}" fill="{color}" fill-opacity="0.7"/>')
    legend = "  ".join(f"{name} ({len(s)})" for name, s in sets.items())
    label = f"{title}  {legend}".strip()
    out.append(f'<text x="6" y="{size + 17}" font-family="monospace" font-size="11">{_escape(label)}</text>')
    out.append("</svg>")
    path.write_text("\n".join(out) + "\n")


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def finite(x: float) -> float | None:
    return None if x is None or not math.isfinite(x) else float(x)
