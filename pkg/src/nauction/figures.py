"""Self-contained SVG charts for the privacy/revenue trade-off sweeps.

One chart per sweep: noise level on the x axis, a privacy series (recovery
rate or MAE) on the left y axis, revenue on the right y axis, with reference
lines for the item-wise second-price baseline revenue and (for recovery) the
random-guess rate. The output is a pure function of the numbers, so figures
can be regenerated offline from the sweep CSV.
"""

from __future__ import annotations

import numpy as np

__all__ = ["sweep_figure", "write_figure", "RANDOM_GUESS_RATE"]

# chance that an independent U[0,1] guess lands within +/-0.02 of the truth
RANDOM_GUESS_RATE = 3.96

_W, _H = 720, 440
_ML, _MR, _MT, _MB = 70, 70, 48, 56
_PLOT_W = _W - _ML - _MR
_PLOT_H = _H - _MT - _MB

_LEFT_COLOR = "#1f77b4"
_RIGHT_COLOR = "#ff7f0e"
_REF_COLOR = "#777777"


def _scale(values, lo, hi, out_lo, out_hi):
    values = np.asarray(values, dtype=float)
    span = hi - lo if hi > lo else 1.0
    return out_lo + (values - lo) / span * (out_hi - out_lo)


def _ticks(lo, hi, count=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10 ** np.floor(np.log10(raw))
    step = min(s for s in (1 * mag, 2 * mag, 5 * mag, 10 * mag) if s >= raw)
    start = np.ceil(lo / step) * step
    return np.arange(start, hi + step / 2, step)


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def _polyline(xs, ys, color, dashed=False) -> str:
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    dash = ' stroke-dasharray="6,4"' if dashed else ""
    return f'<polyline fill="none" stroke="{color}" stroke-width="2"{dash} points="{pts}"/>'


def sweep_figure(
    sigmas,
    left_values,
    revenues,
    left_label: str,
    myerson_revenue: float | None = None,
    random_guess: float | None = None,
    title: str = "",
) -> str:
    """Render one two-axis sweep chart and return the SVG text."""
    sigmas = np.asarray(sigmas, dtype=float)
    left_values = np.asarray(left_values, dtype=float)
    revenues = np.asarray(revenues, dtype=float)
    if not (len(sigmas) == len(left_values) == len(revenues)):
        raise ValueError("series lengths must match the sigma grid")

    x_lo, x_hi = float(sigmas.min()), float(sigmas.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    l_lo = 0.0
    l_hi = max(float(left_values.max()), random_guess or 0.0) * 1.12 or 1.0
    r_candidates = [revenues.min(), revenues.max()]
    if myerson_revenue is not None:
        r_candidates.append(myerson_revenue)
    r_lo = min(r_candidates) * 0.98
    r_hi = max(r_candidates) * 1.02

    def xpix(v):
        return _scale(v, x_lo, x_hi, _ML, _ML + _PLOT_W)

    def lpix(v):
        return _scale(v, l_lo, l_hi, _MT + _PLOT_H, _MT)

    def rpix(v):
        return _scale(v, r_lo, r_hi, _MT + _PLOT_H, _MT)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="24" text-anchor="middle" font-size="15">{title}</text>',
    ]

    # axes and ticks
    ax_y = _MT + _PLOT_H
    parts.append(
        f'<line x1="{_ML}" y1="{ax_y}" x2="{_ML + _PLOT_W}" y2="{ax_y}" stroke="black"/>'
    )
    parts.append(f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{ax_y}" stroke="black"/>')
    parts.append(
        f'<line x1="{_ML + _PLOT_W}" y1="{_MT}" x2="{_ML + _PLOT_W}" y2="{ax_y}" stroke="black"/>'
    )
    for tx in _ticks(x_lo, x_hi):
        px = float(xpix(tx))
        parts.append(f'<line x1="{px}" y1="{ax_y}" x2="{px}" y2="{ax_y + 5}" stroke="black"/>')
        parts.append(f'<text x="{px}" y="{ax_y + 20}" text-anchor="middle">{_fmt(tx)}</text>')
    for tl in _ticks(l_lo, l_hi):
        py = float(lpix(tl))
        parts.append(f'<line x1="{_ML - 5}" y1="{py}" x2="{_ML}" y2="{py}" stroke="black"/>')
        parts.append(
            f'<text x="{_ML - 9}" y="{py + 4}" text-anchor="end" fill="{_LEFT_COLOR}">{_fmt(tl)}</text>'
        )
    for tr in _ticks(r_lo, r_hi):
        py = float(rpix(tr))
        parts.append(
            f'<line x1="{_ML + _PLOT_W}" y1="{py}" x2="{_ML + _PLOT_W + 5}" y2="{py}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{_ML + _PLOT_W + 9}" y="{py + 4}" text-anchor="start" fill="{_RIGHT_COLOR}">{_fmt(tr)}</text>'
        )

    # axis titles
    parts.append(
        f'<text x="{_ML + _PLOT_W / 2}" y="{_H - 14}" text-anchor="middle">noise standard deviation</text>'
    )
    parts.append(
        f'<text x="18" y="{_MT + _PLOT_H / 2}" text-anchor="middle" fill="{_LEFT_COLOR}" '
        f'transform="rotate(-90 18 {_MT + _PLOT_H / 2})">{left_label}</text>'
    )
    parts.append(
        f'<text x="{_W - 16}" y="{_MT + _PLOT_H / 2}" text-anchor="middle" fill="{_RIGHT_COLOR}" '
        f'transform="rotate(90 {_W - 16} {_MT + _PLOT_H / 2})">revenue</text>'
    )

    # reference lines
    if myerson_revenue is not None:
        py = float(rpix(myerson_revenue))
        parts.append(_polyline([_ML, _ML + _PLOT_W], [py, py], _REF_COLOR, dashed=True))
        parts.append(
            f'<text x="{_ML + 6}" y="{py - 5}" fill="{_REF_COLOR}">Myerson revenue {_fmt(myerson_revenue)}</text>'
        )
    if random_guess is not None:
        py = float(lpix(random_guess))
        parts.append(_polyline([_ML, _ML + _PLOT_W], [py, py], _REF_COLOR, dashed=True))
        parts.append(
            f'<text x="{_ML + 6}" y="{py - 5}" fill="{_REF_COLOR}">random guess {_fmt(random_guess)}</text>'
        )

    # data series with point markers
    xs = xpix(sigmas)
    ly = lpix(left_values)
    ry = rpix(revenues)
    parts.append(_polyline(xs, ly, _LEFT_COLOR))
    parts.append(_polyline(xs, ry, _RIGHT_COLOR))
    for x, y in zip(xs, ly):
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{_LEFT_COLOR}"/>')
    for x, y in zip(xs, ry):
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{_RIGHT_COLOR}"/>')

    parts.append("</svg>")
    return "\n".join(parts)


def write_figure(path, svg_text: str) -> None:
    with open(path, "w") as f:
        f.write(svg_text)
