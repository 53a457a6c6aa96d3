"""Minimal write-only SVG charts for reports.

Hand-rolled SVG keeps the output deterministic and dependency-free; these
are quick-look plots (curves, coefficient paths, score-distribution
boxes), not a plotting library.
"""

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")

_W, _H = 480, 360
_MARGIN = 48


def _scale(values, lo, hi, out_lo, out_hi):
    span = hi - lo if hi > lo else 1.0
    return [out_lo + (v - lo) / span * (out_hi - out_lo) for v in values]


def _frame(title, xlabel, ylabel, xlo, xhi, ylo, yhi):
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{_W - 2 * _MARGIN}" '
        f'height="{_H - 2 * _MARGIN}" fill="none" stroke="black"/>',
        f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{_W / 2}" y="{_H - 10}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="14" y="{_H / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {_H / 2})">{ylabel}</text>',
        f'<text x="{_MARGIN}" y="{_H - _MARGIN + 16}" font-size="10">{xlo:.3g}</text>',
        f'<text x="{_W - _MARGIN}" y="{_H - _MARGIN + 16}" text-anchor="end" '
        f'font-size="10">{xhi:.3g}</text>',
        f'<text x="{_MARGIN - 4}" y="{_H - _MARGIN}" text-anchor="end" '
        f'font-size="10">{ylo:.3g}</text>',
        f'<text x="{_MARGIN - 4}" y="{_MARGIN + 10}" text-anchor="end" '
        f'font-size="10">{yhi:.3g}</text>',
    ]
    return parts


def line_chart(path, series, title="", xlabel="", ylabel=""):
    """Polyline chart; ``series`` is a list of (name, xs, ys) triples."""
    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys]
    if not xs_all:
        raise ValueError("nothing to plot")
    xlo, xhi = min(xs_all), max(xs_all)
    ylo, yhi = min(ys_all), max(ys_all)
    parts = _frame(title, xlabel, ylabel, xlo, xhi, ylo, yhi)
    for i, (name, xs, ys) in enumerate(series):
        px = _scale(xs, xlo, xhi, _MARGIN, _W - _MARGIN)
        py = _scale(ys, ylo, yhi, _H - _MARGIN, _MARGIN)
        points = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(px, py))
        color = _PALETTE[i % len(_PALETTE)]
        parts.append(f'<polyline points="{points}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        parts.append(f'<text x="{_W - _MARGIN - 4}" y="{_MARGIN + 14 + 13 * i}" '
                     f'text-anchor="end" font-size="11" fill="{color}">{name}</text>')
    parts.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(parts) + "\n")


def box_summary(path, groups, title="", ylabel="score"):
    """Box plots of quantile summaries.

    ``groups`` maps a name to a dict with min/p25/median/p75/max keys (the
    quantile-summary layout).
    """
    if not groups:
        raise ValueError("nothing to plot")
    parts = _frame(title, "", ylabel, 0, len(groups), 0.0, 1.0)
    slot = (_W - 2 * _MARGIN) / len(groups)

    def y_of(v):
        return _H - _MARGIN - v * (_H - 2 * _MARGIN)

    for i, (name, stats) in enumerate(groups.items()):
        cx = _MARGIN + slot * (i + 0.5)
        color = _PALETTE[i % len(_PALETTE)]
        half = min(28.0, slot * 0.3)
        parts.append(f'<line x1="{cx:.2f}" y1="{y_of(stats["min"]):.2f}" '
                     f'x2="{cx:.2f}" y2="{y_of(stats["max"]):.2f}" stroke="{color}"/>')
        top, bottom = y_of(stats["p75"]), y_of(stats["p25"])
        parts.append(f'<rect x="{cx - half:.2f}" y="{top:.2f}" width="{2 * half:.2f}" '
                     f'height="{max(bottom - top, 0.5):.2f}" fill="{color}" '
                     f'fill-opacity="0.35" stroke="{color}"/>')
        mid = y_of(stats["median"])
        parts.append(f'<line x1="{cx - half:.2f}" y1="{mid:.2f}" x2="{cx + half:.2f}" '
                     f'y2="{mid:.2f}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{cx:.2f}" y="{_H - _MARGIN + 16}" text-anchor="middle" '
                     f'font-size="10">{name}</text>')
    parts.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(parts) + "\n")
