"""The CHL process in time: Poisson arrivals, coupled statistics, and cluster pictures.

Particle counts come from the marked-configuration chain; Poisson times are
drawn from a sibling stream of the same seed, with rate 2 pi N on the
unrescaled cylinder.  Pictures are drawn from the backward composition,
which at a fixed number of particles has the same law as the forward cluster:
each new slit is planted on the boundary and every existing point is pushed
through its slit map.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._io import atomic_write_text
from .geometry import TWO_PI, ParameterError, SlitParams
from .marked import DEFAULT_CAP, DEFAULT_ETA, RunRecord, track_run
from .seeding import POSITIONS, TIMES, stream

SPINE_SAMPLES = 16


@dataclass(frozen=True)
class ParticleEvent:
    index: int
    position: float
    time: float


@dataclass
class Spine:
    color: int
    base: complex
    samples: np.ndarray


def arrival_times(p: SlitParams, count: int, seed=None) -> np.ndarray:
    """First ``count`` arrival times, E[t_k] = k / (2 pi N)."""
    gaps = stream(seed, TIMES).exponential(1.0 / (TWO_PI * p.n_width), count)
    return np.cumsum(gaps)


def sample_event_stream(p: SlitParams, count: int, seed=None) -> list[ParticleEvent]:
    if count < 1:
        raise ParameterError(f"count must be at least 1, got {count!r}")
    xs = stream(seed, POSITIONS).uniform(0.0, TWO_PI, count)
    ts = arrival_times(p, count, seed)
    return [ParticleEvent(j + 1, float(x), float(t)) for j, (x, t) in enumerate(zip(xs, ts))]


def forward_map_array(z: np.ndarray, x: float, p: SlitParams) -> np.ndarray:
    """Vectorized :func:`chlsim.geometry.forward_map` for points with Im z >= 0."""
    d = p.delta
    local_re = np.mod(z.real - x + math.pi, TWO_PI) - math.pi
    local_re = np.where(local_re == -math.pi, math.pi, local_re)
    zeta = np.exp(1j * (local_re + 1j * z.imag))
    root = np.sqrt((1.0 - zeta) ** 2 + 4.0 * d * d * zeta)
    num = 4.0 * (1.0 - d * d) * zeta
    c0 = num / (1.0 + zeta + root) ** 2
    c1 = num / (1.0 + zeta - root) ** 2
    m0, m1 = np.abs(c0), np.abs(c1)
    side = np.where(local_re >= 0.0, 1.0, -1.0)
    same = np.abs(m0 - m1) <= 1e-12
    pick0 = np.where(same, np.angle(c0) * side >= 0.0, m0 < m1)
    image = np.where(pick0, c0, c1)
    w = -1j * np.log(image)
    return (z.real - local_re + w.real) + 1j * np.maximum(w.imag, 0.0)


def _roots(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def grow_spines(p: SlitParams, xs, samples: int = SPINE_SAMPLES) -> list[Spine]:
    """Backward-composition picture of the particles at positions ``xs``.

    A tree is a maximal set of slits connected through attachments.  When a
    new slit is planted at ``x``, every existing tree rooted inside the arc
    that the new slit map folds onto the slit, (x - a_delta, x + a_delta),
    now sits on top of it and joins its tree.
    """
    xs = np.asarray(xs, dtype=float)
    n = xs.shape[0]
    pts = np.empty(n * samples, dtype=complex)
    column = 1j * p.slit_height * np.linspace(0.0, 1.0, samples)
    parent = list(range(n))
    roots = []  # (spine index, base angle) of current tree roots
    for j, x in enumerate(xs):
        k = j * samples
        if k:
            pts[:k] = forward_map_array(pts[:k], x, p)
        pts[k:k + samples] = x + column
        keep = []
        for idx, base in roots:
            off = (base - x + math.pi) % TWO_PI - math.pi
            if abs(off) < p.a_delta:
                parent[_roots(parent, idx)] = j
            else:
                keep.append((idx, base))
        # surviving roots move along the boundary with the map
        moved = forward_map_array(np.array([b for _, b in keep], dtype=complex), x, p).real \
            if keep else []
        roots = [(idx, float(b)) for (idx, _), b in zip(keep, moved)]
        roots.append((j, float(x)))
    labels = {}
    spines = []
    for j in range(n):
        r = _roots(parent, j)
        color = labels.setdefault(r, len(labels) + 1)
        seg = pts[j * samples:(j + 1) * samples].copy()
        spines.append(Spine(color, complex(seg[0]), seg))
    return spines


def simulate(p: SlitParams, eta: float = DEFAULT_ETA, seed=None, render: bool = False,
             cap: int = DEFAULT_CAP, render_limit: int = 1000,
             samples: int = SPINE_SAMPLES) -> RunRecord:
    """Certified run with Poisson times attached, and optionally a picture.

    The picture covers the first ``min(steps, render_limit)`` particles.
    """
    rec = track_run(p, eta, seed, cap)
    need = max(rec.t_r, rec.t_tree, 1)
    ts = arrival_times(p, need, seed)
    rec.upsilon = float(ts[rec.t_r - 1])
    rec.omega = float(ts[rec.t_tree - 1]) if rec.t_tree >= 1 else 0.0
    if render:
        count = min(rec.steps, render_limit)
        xs = stream(seed, POSITIONS).uniform(0.0, TWO_PI, count)
        rec.spines = grow_spines(p, xs, samples)
    return rec


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
            "#e377c2", "#17becf", "#bcbd22", "#7f7f7f")


def render_svg(record: RunRecord, out_path, width: int = 800) -> str:
    """Write the spines of ``record`` as an SVG strip [0, 2pi) x [0, top]."""
    spines = record.spines or []
    top = max([float(s.samples.imag.max()) for s in spines] + [1.0])
    height = max(int(round(width * top / TWO_PI)), 40)
    sx = width / TWO_PI
    sy = (height - 10) / top

    def px(z, shift):
        return f"{(z.real + shift) * sx:.3f},{height - 5 - z.imag * sy:.3f}"

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="0" y1="{height - 5}" x2="{width}" y2="{height - 5}" '
        'stroke="black" stroke-width="1"/>',
    ]
    for spine in spines:
        shift = -math.floor(spine.base.real / TWO_PI) * TWO_PI
        pts = " ".join(px(z, shift) for z in spine.samples)
        color = _PALETTE[(spine.color - 1) % len(_PALETTE)]
        lines.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     'stroke-width="1"/>')
    lines.append("</svg>")
    text = "\n".join(lines) + "\n"
    atomic_write_text(out_path, text)
    return text
