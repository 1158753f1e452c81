"""CSV tables, JSON summaries and a minimal log-log SVG plotter."""

from __future__ import annotations

import json
import math
import subprocess
from importlib import metadata
from pathlib import Path
from xml.sax.saxutils import escape


def version_string() -> str:
    """``git describe``-style string, falling back to the installed package version."""
    try:
        base = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        base = "0.0.0"
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{base}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return base


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def csv_text(header, rows) -> str:
    """Rows may be sequences or dicts keyed by the header."""
    lines = [",".join(header)]
    for r in rows:
        vals = [r.get(h) for h in header] if isinstance(r, dict) else list(r)
        lines.append(",".join(_cell(v) for v in vals))
    return "\n".join(lines) + "\n"


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(header, rows))
    return path


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if hasattr(x, "item") and not isinstance(x, (str, bytes)):
        return _jsonable(x.item())
    return x


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj, config: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"version": version_string(), "result": obj}
    if config is not None:
        doc["config"] = config
    path.write_text(json_text(doc))
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


# -- SVG -------------------------------------------------------------------
W, H, PAD = 480, 360, 56


def loglog_svg(xs, ys, title: str = "", xlabel: str = "x", ylabel: str = "y", slope: float | None = None) -> str:
    """Markers at ``(xs, ys)`` on log axes, plus a least-squares line when ``slope`` is given."""
    pts = [(x, y) for x, y in zip(xs, ys) if x > 0 and y > 0 and math.isfinite(x) and math.isfinite(y)]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<line class="axis" x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="black"/>',
        f'<line class="axis" x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{H - PAD}" stroke="black"/>',
        f'<text x="{W / 2}" y="{PAD / 2}" text-anchor="middle">{escape(title)}</text>',
        f'<text x="{W / 2}" y="{H - 12}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="14" y="{H / 2}" transform="rotate(-90 14 {H / 2})" text-anchor="middle">{escape(ylabel)}</text>',
    ]
    if pts:
        lx = [math.log10(p[0]) for p in pts]
        ly = [math.log10(p[1]) for p in pts]
        x0, x1 = min(lx), max(lx)
        y0, y1 = min(ly), max(ly)
        x1 = x1 if x1 > x0 else x0 + 1
        y1 = y1 if y1 > y0 else y0 + 1

        def sx(v):
            return PAD + (v - x0) / (x1 - x0) * (W - 2 * PAD)

        def sy(v):
            return H - PAD - (v - y0) / (y1 - y0) * (H - 2 * PAD)

        poly = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(lx, ly))
        parts.append(f'<polyline points="{poly}" fill="none" stroke="steelblue"/>')
        for a, b in zip(lx, ly):
            parts.append(f'<circle class="marker" cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="4" fill="steelblue"/>')
        parts.append(f'<text x="{PAD}" y="{H - PAD + 16}" font-size="10">{10 ** x0:.3g}</text>')
        parts.append(f'<text x="{W - PAD}" y="{H - PAD + 16}" font-size="10" text-anchor="end">{10 ** x1:.3g}</text>')
        parts.append(f'<text x="{PAD - 4}" y="{H - PAD}" font-size="10" text-anchor="end">{10 ** y0:.3g}</text>')
        parts.append(f'<text x="{PAD - 4}" y="{PAD + 4}" font-size="10" text-anchor="end">{10 ** y1:.3g}</text>')
        if slope is not None and len(pts) >= 2:
            mx, my = sum(lx) / len(lx), sum(ly) / len(ly)
            a, b = (x0, my + slope * (x0 - mx)), (x1, my + slope * (x1 - mx))
            parts.append(
                f'<line class="fit" x1="{sx(a[0]):.2f}" y1="{sy(a[1]):.2f}" x2="{sx(b[0]):.2f}" y2="{sy(b[1]):.2f}" '
                'stroke="firebrick" stroke-dasharray="4 3"/>'
            )
            parts.append(f'<text class="fit-label" x="{W - PAD}" y="{PAD + 16}" text-anchor="end">slope {slope:.3f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(path, *args, **kwargs) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(loglog_svg(*args, **kwargs))
    return path
