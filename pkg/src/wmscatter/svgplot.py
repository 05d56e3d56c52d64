"""Minimal hand-emitted SVG figures: the measured (K, E) ribbon with the
conventional and fitted recoil parabolas overlaid.  No plotting dependency."""

from __future__ import annotations

import math

import numpy as np

from . import constants as C

WIDTH, HEIGHT = 640, 480
MARGIN = 56


class _Axes:
    def __init__(self, k_range, e_range):
        self.k0, self.k1 = k_range
        self.e0, self.e1 = e_range

    def x(self, k):
        return MARGIN + (k - self.k0) / (self.k1 - self.k0) * (WIDTH - 2 * MARGIN)

    def y(self, e):
        return HEIGHT - MARGIN - (e - self.e0) / (self.e1 - self.e0) * (HEIGHT - 2 * MARGIN)


def _parabola_path(ax, mass, e_rot=0.0, n=120):
    ks = np.linspace(max(ax.k0, 1e-6), ax.k1, n)
    pts = []
    for k in ks:
        e = e_rot + C.ATOM_E_COEF * k**2 / mass
        if ax.e0 <= e <= ax.e1:
            pts.append(f"{ax.x(k):.2f},{ax.y(e):.2f}")
    return " ".join(pts)


def _ticks(lo, hi, n=6):
    step = (hi - lo) / (n - 1)
    mag = 10 ** math.floor(math.log10(step)) if step > 0 else 1.0
    step = round(step / mag) * mag or mag
    start = math.ceil(lo / step) * step
    vals = []
    v = start
    while v <= hi + 1e-12:
        vals.append(v)
        v += step
    return vals


def ribbon_svg(points, m_conventional=None, m_fitted=None, e_rot_fitted=0.0,
               centroids=None, title="S(K,E) ribbon"):
    """SVG document for (K, E, intensity) scatter data with parabola overlays.

    points: iterable of (K, E, intensity); centroids: optional (K, E) pairs
    drawn as filled circles.
    """
    pts = [(k, e, i) for k, e, i in points if np.isfinite(e)]
    if not pts:
        raise ValueError("no finite points to plot")
    ks = [p[0] for p in pts]
    es = [p[1] for p in pts]
    imax = max(p[2] for p in pts) or 1.0
    kpad = 0.05 * (max(ks) - min(ks) or 1.0)
    epad = 0.05 * (max(es) - min(es) or 1.0)
    ax = _Axes((min(ks) - kpad, max(ks) + kpad), (min(es) - epad, max(es) + epad))
    el = ['<?xml version="1.0" encoding="UTF-8"?>',
          f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
          f'viewBox="0 0 {WIDTH} {HEIGHT}">',
          f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
          f'<text x="{WIDTH / 2:.0f}" y="24" text-anchor="middle" '
          f'font-family="sans-serif" font-size="15">{title}</text>']
    # axes frame and ticks
    el.append(f'<rect x="{MARGIN}" y="{MARGIN}" width="{WIDTH - 2 * MARGIN}" '
              f'height="{HEIGHT - 2 * MARGIN}" fill="none" stroke="black"/>')
    for kv in _ticks(ax.k0, ax.k1):
        x = ax.x(kv)
        el.append(f'<line x1="{x:.1f}" y1="{HEIGHT - MARGIN}" x2="{x:.1f}" '
                  f'y2="{HEIGHT - MARGIN + 5}" stroke="black"/>')
        el.append(f'<text x="{x:.1f}" y="{HEIGHT - MARGIN + 18}" text-anchor="middle" '
                  f'font-family="sans-serif" font-size="11">{kv:.3g}</text>')
    for ev in _ticks(ax.e0, ax.e1):
        y = ax.y(ev)
        el.append(f'<line x1="{MARGIN - 5}" y1="{y:.1f}" x2="{MARGIN}" '
                  f'y2="{y:.1f}" stroke="black"/>')
        el.append(f'<text x="{MARGIN - 8}" y="{y + 4:.1f}" text-anchor="end" '
                  f'font-family="sans-serif" font-size="11">{ev:.3g}</text>')
    el.append(f'<text x="{WIDTH / 2:.0f}" y="{HEIGHT - 12}" text-anchor="middle" '
              f'font-family="sans-serif" font-size="13">K (1/&#8491;)</text>')
    el.append(f'<text x="16" y="{HEIGHT / 2:.0f}" text-anchor="middle" '
              f'font-family="sans-serif" font-size="13" '
              f'transform="rotate(-90 16 {HEIGHT / 2:.0f})">E (meV)</text>')
    # intensity ribbon
    for k, e, inten in pts:
        a = max(min(inten / imax, 1.0), 0.0)
        if a <= 0:
            continue
        el.append(f'<circle cx="{ax.x(k):.2f}" cy="{ax.y(e):.2f}" r="2.4" '
                  f'fill="steelblue" fill-opacity="{a:.3f}"/>')
    if m_conventional:
        el.append(f'<polyline points="{_parabola_path(ax, m_conventional)}" '
                  'fill="none" stroke="crimson" stroke-width="1.6" '
                  'stroke-dasharray="6 4"/>')
        el.append(f'<text x="{WIDTH - MARGIN - 4}" y="{MARGIN + 16}" text-anchor="end" '
                  f'font-family="sans-serif" font-size="12" fill="crimson">'
                  f'conventional M = {m_conventional:.4g}</text>')
    if m_fitted:
        el.append(f'<polyline points="{_parabola_path(ax, m_fitted, e_rot_fitted)}" '
                  'fill="none" stroke="crimson" stroke-width="1.8"/>')
        el.append(f'<text x="{WIDTH - MARGIN - 4}" y="{MARGIN + 32}" text-anchor="end" '
                  f'font-family="sans-serif" font-size="12" fill="crimson">'
                  f'fitted M = {m_fitted:.4g}</text>')
    if centroids:
        for k, e in centroids:
            el.append(f'<circle cx="{ax.x(k):.2f}" cy="{ax.y(e):.2f}" r="3.5" '
                      'fill="none" stroke="black" stroke-width="1.2"/>')
    el.append("</svg>")
    return "\n".join(el) + "\n"
