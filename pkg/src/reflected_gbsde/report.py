"""CSV and SVG emitters with atomic writes."""
from __future__ import annotations

import csv
import io
import math
import os
import tempfile

__all__ = ["fmt", "csv_text", "write_atomic", "loglog_svg"]


def fmt(value) -> str:
    """Deterministic text for a CSV cell (shortest round-trip for floats)."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    try:
        import numpy as np

        if isinstance(value, np.floating):
            return repr(float(value))
        if isinstance(value, np.integer):
            return str(int(value))
        if isinstance(value, np.bool_):
            return "true" if value else "false"
    except ImportError:  # pragma: no cover
        pass
    return str(value)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_atomic(path, text: str) -> None:
    """Write ``text`` to a temporary file next to ``path`` and rename it."""
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _ticks(lo, hi):
    return list(range(math.floor(lo), math.ceil(hi) + 1))


def loglog_svg(series: dict, title: str, xlabel: str, ylabel: str, width: int = 640, height: int = 420) -> str:
    """Log-log polyline plot; ``series`` maps a label to ``(xs, ys)``.

    Nonpositive points are dropped (they have no logarithm).
    """
    palette = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")
    clean = {}
    for label, (xs, ys) in series.items():
        pts = [(math.log10(x), math.log10(y)) for x, y in zip(xs, ys) if x > 0 and y > 0]
        if pts:
            clean[label] = pts
    left, right, top, bottom = 70, 20, 40, 50
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" '
        f'font-size="14">{title}</text>',
    ]
    if not clean:
        parts.append(
            f'<text x="{width / 2:.1f}" y="{height / 2:.1f}" text-anchor="middle" '
            'font-family="sans-serif" font-size="12">no positive data</text></svg>'
        )
        return "\n".join(parts) + "\n"
    allx = [p[0] for pts in clean.values() for p in pts]
    ally = [p[1] for pts in clean.values() for p in pts]
    x0, x1 = min(allx), max(allx)
    y0, y1 = min(ally), max(ally)
    if x1 - x0 < 1e-12:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 - y0 < 1e-12:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = width - left - right, height - top - bottom

    def sx(v):
        return left + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return top + (y1 - v) / (y1 - y0) * ph

    parts.append(
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>'
    )
    for t in _ticks(x0, x1):
        if x0 - 1e-9 <= t <= x1 + 1e-9:
            parts.append(
                f'<text x="{sx(t):.1f}" y="{top + ph + 16}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="10">1e{t}</text>'
            )
    for t in _ticks(y0, y1):
        if y0 - 1e-9 <= t <= y1 + 1e-9:
            parts.append(
                f'<text x="{left - 6}" y="{sy(t) + 3:.1f}" text-anchor="end" '
                f'font-family="sans-serif" font-size="10">1e{t}</text>'
            )
    parts.append(
        f'<text x="{left + pw / 2:.1f}" y="{height - 10}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="12" transform="rotate(-90 16 {top + ph / 2:.1f})">{ylabel}</text>'
    )
    for i, (label, pts) in enumerate(clean.items()):
        colour = palette[i % len(palette)]
        coords = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in pts)
        parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{coords}"/>')
        parts.append(
            f'<text x="{left + 8}" y="{top + 14 + 14 * i}" font-family="sans-serif" '
            f'font-size="11" fill="{colour}">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
