"""Artifact output: CSV, JSON sidecars, run manifests, native SVG plots.

Conventions:
- CSV line 1 is ``# schema-version: 1``, line 2 holds column headers,
  and complex columns are split into ``name.re`` / ``name.im``.
- Every table gets a JSON sidecar ``<stem>.meta.json`` carrying the
  series metadata, so a table round-trips losslessly.
- All files are written atomically (tmp file + rename) so a crashed run
  never leaves a half-written artifact under its final name.
- Floats are printed with repr precision: identical data produces
  byte-identical files.
- SVG plots are rendered by a small built-in line renderer (linear or
  log axes) with no third-party dependencies.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
import time
from dataclasses import asdict, is_dataclass

import numpy as np

from .meanfield import TimeSeries

SCHEMA_VERSION = 1

__all__ = [
    "SCHEMA_VERSION",
    "atomic_write_text",
    "write_timeseries_csv",
    "read_timeseries_csv",
    "write_table_csv",
    "read_table_csv",
    "write_json",
    "render_svg",
    "Manifest",
]


# ---------------------------------------------------------------------------
# atomic primitives


def atomic_write_text(path, text):
    """Write text to path via a temp file + rename (atomic on POSIX)."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    f = float(v)
    if math.isnan(f):
        return "nan"
    if math.isinf(f):
        return "inf" if f > 0 else "-inf"
    return repr(f)


class _JsonEncoder(json.JSONEncoder):
    def default(self, o):
        if isinstance(o, (np.integer,)):
            return int(o)
        if isinstance(o, (np.floating,)):
            return float(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, complex):
            return {"re": o.real, "im": o.imag}
        if is_dataclass(o) and not isinstance(o, type):
            return asdict(o)
        return super().default(o)

    def iterencode(self, o, _one_shot=False):
        # json rejects inf/nan under allow_nan=False; map them to strings
        def sanitize(x):
            if isinstance(x, float):
                if math.isinf(x):
                    return "inf" if x > 0 else "-inf"
                if math.isnan(x):
                    return "nan"
            return x

        def walk(node):
            if isinstance(node, dict):
                return {k: walk(v) for k, v in node.items()}
            if isinstance(node, (list, tuple)):
                return [walk(v) for v in node]
            return sanitize(node)

        return super().iterencode(walk(o), _one_shot)


def write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, cls=_JsonEncoder,
                                       sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# tables


def _split_complex(columns):
    """Expand complex-valued columns into .re/.im pairs."""
    out = {}
    for name, values in columns.items():
        arr = np.asarray(values)
        if np.iscomplexobj(arr):
            out[f"{name}.re"] = arr.real
            out[f"{name}.im"] = arr.imag
        else:
            out[name] = arr
    return out


def write_table_csv(path, columns, meta=None):
    """Write named columns (equal length) as schema-versioned CSV."""
    cols = _split_complex(columns)
    names = list(cols)
    arrays = [np.asarray(cols[n], dtype=float) for n in names]
    n_rows = len(arrays[0])
    for name, arr in zip(names, arrays):
        if len(arr) != n_rows:
            raise ValueError(f"column {name!r} length mismatch")
    lines = [f"# schema-version: {SCHEMA_VERSION}", ",".join(names)]
    for i in range(n_rows):
        lines.append(",".join(_fmt(arr[i]) for arr in arrays))
    atomic_write_text(path, "\n".join(lines) + "\n")
    if meta is not None:
        write_json(_meta_path(path), meta)


def _meta_path(path):
    stem, _ = os.path.splitext(path)
    return stem + ".meta.json"


def read_table_csv(path):
    """Read a schema-versioned CSV; returns (columns dict, meta dict)."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# schema-version:"):
            raise ValueError(f"{path}: missing schema-version header")
        version = int(header.split(":", 1)[1])
        if version > SCHEMA_VERSION:
            raise ValueError(f"{path}: unsupported schema version {version}")
        names = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = {}
    raw = {n: np.array([float(r[k]) for r in rows])
           for k, n in enumerate(names)}
    merged = set()
    for name in list(raw):
        if name.endswith(".re"):
            base = name[:-3]
            imag = raw.get(base + ".im")
            if imag is not None:
                data[base] = raw[name] + 1j * imag
                merged.update((name, base + ".im"))
    for name, arr in raw.items():
        if name not in merged:
            data[name] = arr
    meta = {}
    mp = _meta_path(path)
    if os.path.exists(mp):
        with open(mp) as fh:
            meta = json.load(fh)
    return data, meta


def write_timeseries_csv(path, series):
    """Write a TimeSeries as CSV + metadata sidecar."""
    columns = {"t": series.t}
    columns.update(series.data)
    write_table_csv(path, columns, meta=series.meta)


def read_timeseries_csv(path):
    data, meta = read_table_csv(path)
    t = data.pop("t")
    return TimeSeries(t=t, data=data, meta=meta)


# ---------------------------------------------------------------------------
# run manifest


class Manifest:
    """Per-run provenance: config, versions, wall time, artifact list.

    Every artifact is regenerable from the manifest alone: it embeds the
    full canonical config text plus the subcommand that produced it.
    """

    def __init__(self, command, config_text, config_hash):
        self.command = command
        self.config_text = config_text
        self.config_hash = config_hash
        self.artifacts = []
        self.flags = {}
        self.partial = True
        self._t0 = time.monotonic()

    def add(self, path):
        self.artifacts.append(os.path.basename(path))
        return path

    def finish(self, path, partial=False, **flags):
        import scipy

        from . import __version__

        self.partial = partial
        self.flags.update(flags)
        write_json(path, {
            "command": self.command,
            "config_hash": self.config_hash,
            "config_text": self.config_text,
            "versions": {
                "opendicke": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "wall_time_s": round(time.monotonic() - self._t0, 3),
            "artifacts": sorted(self.artifacts),
            "partial": partial,
            "flags": self.flags,
        })


# ---------------------------------------------------------------------------
# native SVG renderer


def _nice_ticks(lo, hi, n=5):
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo, hi]
    span = hi - lo
    step = 10 ** math.floor(math.log10(span / n))
    for mult in (1, 2, 2.5, 5, 10):
        if span / (step * mult) <= n:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    ticks = []
    v = first
    while v <= hi + 1e-9 * span:
        ticks.append(0.0 if abs(v) < 1e-12 * span else v)
        v += step
    return ticks


def _log_ticks(lo, hi):
    lo_e = math.floor(math.log10(lo))
    hi_e = math.ceil(math.log10(hi))
    return [10.0 ** e for e in range(lo_e, hi_e + 1)]

_PALETTE = ("#1f6fb4", "#d1494e", "#3a9e4f", "#8b5cb4", "#c78a2d",
            "#3eaeae", "#7f7f7f", "#b4589e")


def _fmt_tick(v):
    if v == 0:
        return "0"
    a = abs(v)
    if 1e-3 <= a < 1e4:
        s = f"{v:.6g}"
    else:
        s = f"{v:.2e}"
    return s


def render_svg(path, curves, xlabel="", ylabel="", title="",
               xlog=False, ylog=False, width=640, height=440):
    """Render labelled line plots as a standalone SVG file.

    curves: list of (label, x array, y array).  Log axes drop
    non-positive points.  Writes atomically.
    """
    ml, mr, mt, mb = 64, 16, 28, 46
    pw, ph = width - ml - mr, height - mt - mb

    pts = []
    for _, xs, ys in curves:
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        keep = np.isfinite(xs) & np.isfinite(ys)
        if xlog:
            keep &= xs > 0
        if ylog:
            keep &= ys > 0
        pts.append((xs[keep], ys[keep]))
    xs_all = np.concatenate([p[0] for p in pts]) if pts else np.array([0.0])
    ys_all = np.concatenate([p[1] for p in pts]) if pts else np.array([0.0])
    if len(xs_all) == 0:
        xs_all = np.array([1.0])
    if len(ys_all) == 0:
        ys_all = np.array([1.0])

    def limits(arr, log):
        lo, hi = float(arr.min()), float(arr.max())
        if log:
            return lo / 1.3, hi * 1.3
        pad = 0.05 * (hi - lo) if hi > lo else max(abs(hi), 1.0) * 0.1
        return lo - pad, hi + pad

    x_lo, x_hi = limits(xs_all, xlog)
    y_lo, y_hi = limits(ys_all, ylog)

    def to_px(x, y):
        if xlog:
            fx = (math.log10(x) - math.log10(x_lo)) / (
                math.log10(x_hi) - math.log10(x_lo))
        else:
            fx = (x - x_lo) / (x_hi - x_lo)
        if ylog:
            fy = (math.log10(y) - math.log10(y_lo)) / (
                math.log10(y_hi) - math.log10(y_lo))
        else:
            fy = (y - y_lo) / (y_hi - y_lo)
        return ml + fx * pw, mt + (1.0 - fy) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" '
        'stroke="#333" stroke-width="1"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width / 2:.1f}" y="{mt - 10}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13">{title}</text>')

    x_ticks = _log_ticks(x_lo, x_hi) if xlog else _nice_ticks(x_lo, x_hi)
    y_ticks = _log_ticks(y_lo, y_hi) if ylog else _nice_ticks(y_lo, y_hi)
    for v in x_ticks:
        if not (x_lo <= v <= x_hi):
            continue
        px, _ = to_px(v, y_hi if not ylog else y_hi)
        parts.append(f'<line x1="{px:.1f}" y1="{mt + ph}" x2="{px:.1f}" '
                     f'y2="{mt + ph + 4}" stroke="#333"/>')
        parts.append(f'<text x="{px:.1f}" y="{mt + ph + 17}" '
                     'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="10">{_fmt_tick(v)}</text>')
    for v in y_ticks:
        if not (y_lo <= v <= y_hi):
            continue
        _, py = to_px(x_hi if not xlog else x_hi, v)
        parts.append(f'<line x1="{ml - 4}" y1="{py:.1f}" x2="{ml}" '
                     f'y2="{py:.1f}" stroke="#333"/>')
        parts.append(f'<text x="{ml - 7}" y="{py + 3:.1f}" '
                     'text-anchor="end" font-family="sans-serif" '
                     f'font-size="10">{_fmt_tick(v)}</text>')
    if xlabel:
        parts.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 8}" '
                     'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="12">{xlabel}</text>')
    if ylabel:
        parts.append(f'<text x="16" y="{mt + ph / 2:.1f}" '
                     'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="12" transform="rotate(-90 16 '
                     f'{mt + ph / 2:.1f})">{ylabel}</text>')

    for k, ((label, _, _), (xs, ys)) in enumerate(zip(curves, pts)):
        color = _PALETTE[k % len(_PALETTE)]
        if len(xs):
            path_d = " ".join(
                f"{'M' if i == 0 else 'L'}{px:.2f},{py:.2f}"
                for i, (px, py) in enumerate(to_px(x, y)
                                             for x, y in zip(xs, ys)))
            parts.append(f'<path d="{path_d}" fill="none" stroke="{color}" '
                         'stroke-width="1.5"/>')
        if label:
            ly = mt + 14 + 14 * k
            parts.append(f'<line x1="{ml + pw - 110}" y1="{ly - 4}" '
                         f'x2="{ml + pw - 90}" y2="{ly - 4}" '
                         f'stroke="{color}" stroke-width="1.5"/>')
            parts.append(f'<text x="{ml + pw - 85}" y="{ly}" '
                         'font-family="sans-serif" font-size="10">'
                         f'{label}</text>')
    parts.append("</svg>")
    atomic_write_text(path, "\n".join(parts) + "\n")
