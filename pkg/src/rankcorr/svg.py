"""Minimal SVG line charts (log-x axis, a few series per panel)."""

import math
from xml.sax.saxutils import escape

__all__ = ["line_chart", "panels"]

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_W, _H = 560, 260
_M = dict(left=64, right=16, top=28, bottom=40)


def _fmt(v):
    return f"{v:.4g}"


def _ticks(lo, hi, count=5):
    if hi <= lo:
        return [lo]
    step = (hi - lo) / (count - 1)
    return [lo + i * step for i in range(count)]


def _panel(x, series, title, ylabel, logx, y0):
    """SVG fragment for one panel whose top edge is at ``y0``."""
    xs = [math.log10(v) if logx else v for v in x]
    ys = [v for ys in series.values() for v in ys if v == v]
    if not xs or not ys:
        raise ValueError("nothing to plot")
    xlo, xhi = min(xs), max(xs)
    ylo, yhi = min(ys), max(ys)
    if xhi == xlo:
        xlo, xhi = xlo - 1, xhi + 1
    if yhi == ylo:
        ylo, yhi = ylo - 1, yhi + 1
    pw = _W - _M["left"] - _M["right"]
    ph = _H - _M["top"] - _M["bottom"]

    def px(v):
        return _M["left"] + (v - xlo) / (xhi - xlo) * pw

    def py(v):
        return y0 + _M["top"] + (1 - (v - ylo) / (yhi - ylo)) * ph

    out = [
        f'<text x="{_W / 2:.1f}" y="{y0 + 18:.1f}" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<rect x="{_M["left"]}" y="{y0 + _M["top"]}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for t in _ticks(xlo, xhi):
        label = _fmt(10**t) if logx else _fmt(t)
        out.append(
            f'<text x="{px(t):.1f}" y="{y0 + _H - _M["bottom"] + 14:.1f}" text-anchor="middle" font-size="10">{label}</text>'
        )
    for t in _ticks(ylo, yhi):
        out.append(f'<text x="{_M["left"] - 6}" y="{py(t) + 3:.1f}" text-anchor="end" font-size="10">{_fmt(t)}</text>')
        out.append(
            f'<line x1="{_M["left"]}" x2="{_M["left"] + pw}" y1="{py(t):.1f}" y2="{py(t):.1f}" stroke="#ddd"/>'
        )
    out.append(
        f'<text x="{_W / 2:.1f}" y="{y0 + _H - 6:.1f}" text-anchor="middle" font-size="11">'
        f'{"rho (log scale)" if logx else "rho"}</text>'
    )
    out.append(
        f'<text x="14" y="{y0 + _H / 2:.1f}" font-size="11" transform="rotate(-90 14 {y0 + _H / 2:.1f})" '
        f'text-anchor="middle">{escape(ylabel)}</text>'
    )
    for i, (name, yv) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs, yv) if b == b)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.6" points="{pts}"/>')
        ly = y0 + _M["top"] + 14 + 14 * i
        out.append(f'<text x="{_M["left"] + pw - 6}" y="{ly:.1f}" text-anchor="end" font-size="11" fill="{color}">{escape(name)}</text>')
    return out


def panels(path, x, specs, logx=True):
    """Stack several panels sharing ``x``.

    ``specs`` is a list of ``(title, ylabel, {name: values})``.
    """
    body = []
    for i, (title, ylabel, series) in enumerate(specs):
        body += _panel(x, series, title, ylabel, logx, i * _H)
    height = _H * len(specs)
    doc = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{height}" viewBox="0 0 {_W} {height}" font-family="sans-serif">',
        f'<rect width="{_W}" height="{height}" fill="white"/>',
        *body,
        "</svg>",
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(doc) + "\n")
    return path


def line_chart(path, x, series, title="", ylabel="", logx=True):
    """Single-panel chart of ``{name: values}`` against ``x``."""
    return panels(path, x, [(title, ylabel, series)], logx)
