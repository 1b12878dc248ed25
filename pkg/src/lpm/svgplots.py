"""Minimal SVG emission for curves, bar charts and PMF heat strips.

Hand-rolled so reports stay diff-able and the package needs no plotting
dependency.
"""

from __future__ import annotations

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f"]

WIDTH = 640
HEIGHT = 400
MARGIN = 60


def _header(width=WIDTH, height=HEIGHT):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">\n'
            f'<rect width="{width}" height="{height}" fill="white"/>\n')


def _text(x, y, s, size=12, anchor="middle"):
    return (f'<text x="{x:.1f}" y="{y:.1f}" font-size="{size}" '
            f'font-family="sans-serif" text-anchor="{anchor}">{s}</text>\n')


def _axes(title, xlabel, ylabel):
    out = _text(WIDTH / 2, 24, title, size=14)
    out += _text(WIDTH / 2, HEIGHT - 12, xlabel)
    out += (f'<text x="16" y="{HEIGHT / 2}" font-size="12" '
            f'font-family="sans-serif" text-anchor="middle" '
            f'transform="rotate(-90 16 {HEIGHT / 2})">{ylabel}</text>\n')
    out += (f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" '
            f'y2="{HEIGHT - MARGIN}" stroke="black"/>\n'
            f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" '
            f'y2="{HEIGHT - MARGIN}" stroke="black"/>\n')
    return out


def selection_curve_svg(curve) -> str:
    """Chi2/dof against component count, with the chosen count marked."""
    ks = [p.n_components for p in curve.points]
    ys = [p.chi2_per_dof for p in curve.points]
    y_max = max(max(ys) * 1.1, 1.5)
    x_span = max(max(ks) - min(ks), 1)

    def sx(k):
        return MARGIN + (k - min(ks)) / x_span * (WIDTH - 2 * MARGIN)

    def sy(y):
        return HEIGHT - MARGIN - y / y_max * (HEIGHT - 2 * MARGIN)

    out = _header()
    out += _axes(f"Model selection ({curve.phase} phase)",
                 "number of components", "chi-squared per dof")
    out += (f'<line x1="{MARGIN}" y1="{sy(1.0):.1f}" x2="{WIDTH - MARGIN}" '
            f'y2="{sy(1.0):.1f}" stroke="#999" stroke-dasharray="4 4"/>\n')
    pts = " ".join(f"{sx(k):.1f},{sy(y):.1f}" for k, y in zip(ks, ys))
    out += f'<polyline points="{pts}" fill="none" stroke="{_PALETTE[0]}" stroke-width="2"/>\n'
    for p in curve.points:
        color = "#d62728" if p.degenerate else _PALETTE[0]
        out += (f'<circle cx="{sx(p.n_components):.1f}" '
                f'cy="{sy(p.chi2_per_dof):.1f}" r="4" fill="{color}"/>\n')
        out += _text(sx(p.n_components), HEIGHT - MARGIN + 16, str(p.n_components))
    if curve.chosen in ks:
        y = ys[ks.index(curve.chosen)]
        out += (f'<path d="M {sx(curve.chosen):.1f} {sy(y) - 30:.1f} '
                f'l -6 -12 l 12 0 z" fill="black"/>\n')
        out += _text(sx(curve.chosen), sy(y) - 46, f"chosen K={curve.chosen}")
    for frac in (0.0, 0.5, 1.0):
        yv = frac * y_max
        out += _text(MARGIN - 8, sy(yv) + 4, f"{yv:.2f}", anchor="end")
    return out + "</svg>\n"


def effect_bar_svg(results, title) -> str:
    """Per-tumor treatment volume with +/- 1 standard deviation error bars."""
    n = len(results)
    vals = [r.q_treatment_total for r in results]
    errs = [r.sigma_treatment for r in results]
    top = max(v + e for v, e in zip(vals, errs)) if n else 1.0
    top = max(top * 1.15, 1.0)
    slot = (WIDTH - 2 * MARGIN) / max(n, 1)

    def sy(v):
        return HEIGHT - MARGIN - v / top * (HEIGHT - 2 * MARGIN)

    out = _header()
    out += _axes(title, "tumor", "treatment volume (voxels)")
    for i, r in enumerate(results):
        x = MARGIN + i * slot + 0.15 * slot
        w = 0.7 * slot
        y = sy(vals[i])
        out += (f'<rect x="{x:.1f}" y="{y:.1f}" width="{w:.1f}" '
                f'height="{HEIGHT - MARGIN - y:.1f}" fill="{_PALETTE[0]}"/>\n')
        cx = x + w / 2
        out += (f'<line x1="{cx:.1f}" y1="{sy(vals[i] + errs[i]):.1f}" '
                f'x2="{cx:.1f}" y2="{sy(max(vals[i] - errs[i], 0)):.1f}" '
                f'stroke="black"/>\n')
        out += _text(cx, HEIGHT - MARGIN + 16, r.tumor_id, size=10)
    out += _text(MARGIN - 8, sy(top) + 4, f"{top:.0f}", anchor="end")
    out += _text(MARGIN - 8, sy(0) + 4, "0", anchor="end")
    return out + "</svg>\n"


def pmf_heatstrip_svg(model) -> str:
    """One row of heat strips per component, a strip per timepoint."""
    n_bins = model.binning.n_adc_bins
    strip_h = 26
    gap = 14
    height = MARGIN + len(model.components) * 2 * (strip_h + 4) + gap * len(model.components) + MARGIN
    out = _header(WIDTH, height)
    out += _text(WIDTH / 2, 24, "Component PMFs (top: baseline, bottom: follow-up)", size=14)
    cell_w = (WIDTH - 2 * MARGIN) / n_bins
    y = MARGIN
    for ci, comp in enumerate(model.components):
        peak = comp.probs.max()
        color = _PALETTE[ci % len(_PALETTE)]
        out += _text(MARGIN - 8, y + strip_h, f"{comp.phase} {ci}", size=10, anchor="end")
        for t in range(2):
            for b in range(n_bins):
                alpha = comp.probs[b, t] / peak if peak > 0 else 0.0
                out += (f'<rect x="{MARGIN + b * cell_w:.1f}" y="{y:.1f}" '
                        f'width="{cell_w:.1f}" height="{strip_h}" fill="{color}" '
                        f'fill-opacity="{alpha:.3f}" stroke="none"/>\n')
            y += strip_h + 4
        y += gap
    lo = model.binning.adc_min
    hi = model.binning.adc_max
    out += _text(MARGIN, y + 6, f"{lo:g}", anchor="start", size=10)
    out += _text(WIDTH - MARGIN, y + 6, f"{hi:g} mm^2/s", anchor="end", size=10)
    return out + "</svg>\n"
