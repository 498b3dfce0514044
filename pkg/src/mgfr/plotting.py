"""Dependency-free SVG rendering of sweep loss curves (median line and IQR band)."""
import math
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

WIDTH, HEIGHT = 720, 480
LEFT, RIGHT, TOP, BOTTOM = 80, 150, 30, 60


def _ticks(lo, hi, log):
    if log:
        a, b = math.floor(lo), math.ceil(hi)
        return [float(k) for k in range(a, b + 1)]
    if hi == lo:
        return [lo]
    step = 10 ** math.floor(math.log10((hi - lo) / 4))
    for mult in (1, 2, 5, 10):
        if (hi - lo) / (step * mult) <= 6:
            step *= mult
            break
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12 * abs(hi):
        out.append(v)
        v += step
    return out


def render_sweep_svg(result, log_axes=False, title="In-sample loss vs sample size"):
    """SVG text with one labeled series per estimator.

    Each series draws the median loss per ``n`` and a band between the 25th and
    75th percentiles. With ``log_axes`` both axes are log10-scaled; nonpositive
    values are then dropped.
    """
    series = []
    for e in result.estimators:
        pts = []
        for n in result.n_grid:
            a = result.aggregate(e, n)
            if a.completed == 0:
                continue
            if log_axes and not (a.q25 > 0 and a.median > 0):
                continue
            pts.append((n, a.q25, a.median, a.q75))
        series.append((e, pts))

    tx = (lambda v: math.log10(v)) if log_axes else (lambda v: float(v))
    xs = [tx(p[0]) for _, pts in series for p in pts]
    ys = [tx(v) for _, pts in series for p in pts for v in p[1:]]
    if not xs:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(v):
        return LEFT + (tx(v) - x0) / (x1 - x0) * pw

    def py(v):
        return TOP + ph - (tx(v) - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<title>{escape(title)}</title>',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{LEFT}" y="{TOP - 10}" font-size="14">{escape(title)}</text>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for t in _ticks(x0, x1, log_axes):
        xv = LEFT + (t - x0) / (x1 - x0) * pw
        label = f"{10 ** t:g}" if log_axes else f"{t:g}"
        out.append(f'<line x1="{xv:.2f}" y1="{TOP + ph}" x2="{xv:.2f}" y2="{TOP + ph + 5}" stroke="#444"/>')
        out.append(f'<text x="{xv:.2f}" y="{TOP + ph + 18}" text-anchor="middle">{label}</text>')
    for t in _ticks(y0, y1, log_axes):
        yv = TOP + ph - (t - y0) / (y1 - y0) * ph
        label = f"{10 ** t:.3g}" if log_axes else f"{t:.3g}"
        out.append(f'<line x1="{LEFT - 5}" y1="{yv:.2f}" x2="{LEFT}" y2="{yv:.2f}" stroke="#444"/>')
        out.append(f'<text x="{LEFT - 8}" y="{yv + 4:.2f}" text-anchor="end">{label}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.2f}" y="{HEIGHT - 15}" text-anchor="middle">n</text>')
    out.append(f'<text x="20" y="{TOP + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 20 {TOP + ph / 2:.2f})">loss</text>')

    for k, (name, pts) in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        label = escape(name)
        out.append(f'<g class="series" data-estimator="{label}">')
        if pts:
            upper = " ".join(f"{px(n):.2f},{py(q75):.2f}" for n, _, _, q75 in pts)
            lower = " ".join(f"{px(n):.2f},{py(q25):.2f}" for n, q25, _, _ in reversed(pts))
            out.append(f'<polygon class="iqr" points="{upper} {lower}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
            line = " ".join(f"{px(n):.2f},{py(med):.2f}" for n, _, med, _ in pts)
            out.append(f'<polyline class="median" points="{line}" fill="none" stroke="{color}" stroke-width="2"/>')
            for n, _, med, _ in pts:
                out.append(f'<circle cx="{px(n):.2f}" cy="{py(med):.2f}" r="3" fill="{color}"/>')
        ly = TOP + 20 + 20 * k
        lx = WIDTH - RIGHT + 15
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 25}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text class="legend" x="{lx + 32}" y="{ly + 4}">{label}</text>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
