"""Marked configurations: colored tilings of the torus that follow CHL trees.

Color ``c >= 1`` is the harmonic-measure arc of the c-th tree, color 0 is the
region whose preimages have not been hit yet.  Each particle maps every arc
through the broadened inverse at its position; a particle landing in color 0
founds a new tree.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .chain import BLOCK
from .geometry import TWO_PI, ParameterError, SlitParams, TorusInterval, wrap
from .seeding import POSITIONS, stream

DEFAULT_ETA = 1e-3
DEFAULT_CAP = 10**8

HIT = "hit_color"
NEW = "new_color"


@dataclass(frozen=True)
class MarkedConfiguration:
    """Breakpoints ``pos`` (ascending, within one turn) and arc labels ``lab``.

    Arc ``i`` runs from ``pos[i]`` to ``pos[i+1]`` (cyclically) and carries
    label ``lab[i]``.  No breakpoints means the whole torus is color 0.
    """

    pos: np.ndarray
    lab: np.ndarray
    next_color: int = 1
    steps: int = 0

    @property
    def n(self) -> int:
        return int(self.pos.shape[0])

    def arcs(self) -> list[tuple[TorusInterval, int]]:
        if self.n == 0:
            return [(TorusInterval.full(), 0)]
        out = []
        for i in range(self.n):
            length = K.arc_length(self.pos, self.n, i)
            out.append((TorusInterval(self.pos[i], min(length, TWO_PI)), int(self.lab[i])))
        return out

    @property
    def colored(self) -> list[tuple[TorusInterval, int]]:
        return sorted(((iv, c) for iv, c in self.arcs() if c != 0), key=lambda t: t[1])

    @property
    def zero_set(self) -> list[TorusInterval]:
        return [iv for iv, c in self.arcs() if c == 0]

    def masses(self) -> np.ndarray:
        """Length per label; index 0 is the zero mass."""
        out = np.zeros(self.next_color)
        K.label_masses(self.pos, self.lab, self.n, out, self.next_color)
        return out

    def label_at(self, x: float) -> int:
        if self.n == 0:
            return 0
        k, _ = K.locate(self.pos, self.n, wrap(x))
        return int(self.lab[k])


@dataclass(frozen=True)
class UpdateEvent:
    kind: str
    color: int
    position: float
    step_index: int


@dataclass(frozen=True)
class DominationCertificate:
    color: int
    residual: float
    step_index: int


@dataclass(frozen=True)
class TreeCertificate:
    residual: float
    step_index: int


def new_config() -> MarkedConfiguration:
    return MarkedConfiguration(np.empty(0), np.empty(0, dtype=np.int64))


def apply_particle(m: MarkedConfiguration, x: float, p: SlitParams):
    """Push ``m`` through the broadened inverse at ``x``; returns (config, event)."""
    x = wrap(x)
    out_pos = np.empty(m.n + 2)
    out_lab = np.empty(m.n + 2, dtype=np.int64)
    n, label, created = K.config_step(m.pos, m.lab, m.n, x, p.delta, p.a_delta,
                                      m.next_color, out_pos, out_lab)
    step = m.steps + 1
    nxt = m.next_color + 1 if created else m.next_color
    event = UpdateEvent(NEW if created else HIT, int(label), x, step)
    return MarkedConfiguration(out_pos[:n].copy(), out_lab[:n].copy(), nxt, step), event


def zero_mass(m: MarkedConfiguration) -> float:
    return K.zero_mass(m.pos, m.lab, m.n)


def num_colors(m: MarkedConfiguration) -> int:
    return m.next_color - 1


def color_length(m: MarkedConfiguration, c: int) -> float:
    """Length of color ``c``; colors never created have length 0."""
    if not 1 <= c < m.next_color:
        return 0.0
    return float(m.masses()[c])


def _check_eta(eta):
    if not 0.0 < eta < 1.0:
        raise ParameterError(f"eta must lie in (0, 1), got {eta!r}")


def domination_residual(length: float, p: SlitParams) -> float:
    """Bound on the chance that any future particle misses an arc of this length.

    A particle misses with probability (2pi - length)/2pi and every miss
    shrinks the complement of the arc by at least sqrt(1 - delta^2) <= 1 - delta^2/2,
    so the expected number of future misses is at most (2pi - length)/(pi delta^2).
    """
    return max(TWO_PI - length, 0.0) / (math.pi * p.delta ** 2)


def certify_domination(m: MarkedConfiguration, c: int, eta: float, p: SlitParams):
    _check_eta(eta)
    residual = domination_residual(color_length(m, c), p)
    if residual <= eta:
        return DominationCertificate(c, residual, m.steps)
    return None


def certify_tree_completion(m: MarkedConfiguration, eta: float, p: SlitParams):
    _check_eta(eta)
    residual = zero_mass(m) / (math.pi * p.delta ** 2)
    if residual <= eta:
        return TreeCertificate(residual, m.steps)
    return None


# ---------------------------------------------------------------------------
# full runs


@dataclass
class RunRecord:
    """Outcome of one marked-configuration run, in particle counts.

    ``t_r`` is the last step whose growing color was not the dominant one
    (1 if the dominant color is the only one that ever grew); ``t_tree`` is
    the step that created the last color.  ``upsilon`` and ``omega`` are the
    matching Poisson times when the run was driven through the process layer.
    """

    t_r: int
    t_tree: int
    n_trees: int
    dominant: int
    hits: np.ndarray
    steps: int
    certified: bool
    domination_residual: float
    tree_residual: float
    upsilon: float | None = None
    omega: float | None = None
    spines: list = field(default_factory=list)
    params: SlitParams | None = None

    @property
    def residual(self) -> float:
        return max(self.domination_residual, self.tree_residual)

    @property
    def status(self) -> str:
        return "certified" if self.certified else "cap"


class _Runner:
    """Buffers for the compiled configuration kernel, grown on demand."""

    def __init__(self, pos, lab, next_color, capacity=64):
        n = pos.shape[0]
        cap = max(capacity, 2 * n + 8)
        colors = max(capacity, 2 * next_color + 8)
        self.pos = np.zeros(cap)
        self.lab = np.zeros(cap, dtype=np.int64)
        self.pos[:n] = pos
        self.lab[:n] = lab
        self.spos = np.zeros(cap)
        self.slab = np.zeros(cap, dtype=np.int64)
        self.hits = np.zeros(colors, dtype=np.int64)
        self.last = np.zeros(colors, dtype=np.int64)
        self.masses = np.zeros(colors)
        self.state = np.array([n, next_color, 0, 0, K.RUNNING, 0], dtype=np.int64)

    def _grow(self):
        n, next_color = int(self.state[0]), int(self.state[1])
        if n + 2 > self.pos.shape[0]:
            size = 2 * self.pos.shape[0]
            for name in ("pos", "lab", "spos", "slab"):
                old = getattr(self, name)
                new = np.zeros(size, dtype=old.dtype)
                new[:old.shape[0]] = old
                setattr(self, name, new)
        if next_color >= self.hits.shape[0] - 1:
            size = 2 * self.hits.shape[0]
            for name in ("hits", "last", "masses"):
                old = getattr(self, name)
                new = np.zeros(size, dtype=old.dtype)
                new[:old.shape[0]] = old
                setattr(self, name, new)

    def run(self, rng, p, threshold, need_domination, cap):
        # short runs are common at large delta, so blocks start small; the
        # generator yields the same sequence whatever the block sizes
        size = 1024
        while self.state[2] < cap:
            xs = rng.uniform(0.0, TWO_PI, size)
            size = min(2 * size, BLOCK)
            offset = 0
            while offset < xs.shape[0]:
                before = int(self.state[2])
                status = K.run_config_block(
                    self.pos, self.lab, self.spos, self.slab, self.state, self.hits,
                    self.last, self.masses, xs[offset:], p.delta, p.a_delta,
                    threshold, need_domination, cap)
                offset += int(self.state[2]) - before
                if status == K.CERTIFIED:
                    return True
                if status == K.NEED_CAPACITY:
                    self._grow()
                    continue
                if self.state[2] >= cap:
                    return False
        return False

    def config(self) -> MarkedConfiguration:
        n = int(self.state[0])
        return MarkedConfiguration(self.pos[:n].copy(), self.lab[:n].copy(),
                                   int(self.state[1]), int(self.state[2]))


def _check_cap(cap):
    if cap < 1:
        raise ParameterError(f"cap must be at least 1, got {cap!r}")
    return int(cap)


def track_run(p: SlitParams, eta: float = DEFAULT_ETA, seed=None, cap: int = DEFAULT_CAP):
    """Run from the empty configuration until domination and completion are certified."""
    _check_eta(eta)
    cap = _check_cap(cap)
    runner = _Runner(np.empty(0), np.empty(0, dtype=np.int64), 1)
    threshold = eta * math.pi * p.delta ** 2
    certified = runner.run(stream(seed, POSITIONS), p, threshold, True, cap)
    m = runner.config()
    colors = m.next_color
    masses = m.masses()
    if certified:
        dominant = int(runner.state[5])
    else:
        dominant = int(np.argmax(masses[1:]) + 1) if colors > 1 else 0
    last = runner.last[:colors].copy()
    last[dominant] = 0
    t_r = int(last.max()) if colors > 1 else 0
    return RunRecord(
        t_r=max(t_r, 1),
        t_tree=int(runner.state[3]),
        n_trees=colors - 1,
        dominant=dominant,
        hits=runner.hits[:colors].copy(),
        steps=m.steps,
        certified=certified,
        domination_residual=domination_residual(masses[dominant] if dominant else 0.0, p),
        tree_residual=masses[0] / (math.pi * p.delta ** 2),
        params=p,
    )


@dataclass(frozen=True)
class DegreeSample:
    value: int
    certified: bool
    residual: float
    steps: int


def track_degree(p: SlitParams, eta: float = DEFAULT_ETA, seed=None, cap: int = DEFAULT_CAP,
                 width: float = 1.0) -> DegreeSample:
    """Number of particles that ever attach directly to one tracked particle.

    The particle's exposed boundary starts as an arc of ``width * 2 a_delta``.
    Each later particle landing in it attaches to the particle and excises its
    own slit arc, which is exactly how color 0 behaves, so the tracked arc is
    run as the zero set against an ambient color and every new color counts
    one attachment.
    """
    _check_eta(eta)
    cap = _check_cap(cap)
    span = 2.0 * p.a_delta * width
    if not 0.0 < span < TWO_PI:
        raise ParameterError(f"tracked arc length must lie in (0, 2pi), got {span!r}")
    pos = np.array([0.0, span])
    lab = np.array([0, 1], dtype=np.int64)
    runner = _Runner(pos, lab, 2)
    threshold = eta * math.pi * p.delta ** 2
    certified = runner.run(stream(seed, POSITIONS), p, threshold, False, cap)
    m = runner.config()
    return DegreeSample(m.next_color - 2, certified, zero_mass(m) / (math.pi * p.delta ** 2),
                        m.steps)


def zero_mass_path(p: SlitParams, steps: int, seed=None) -> np.ndarray:
    """Zero mass after each of the first ``steps`` particles (index 0 is 2pi)."""
    xs = stream(seed, POSITIONS).uniform(0.0, TWO_PI, steps)
    size = 2 * steps + 4
    pos, spos = np.zeros(size), np.zeros(size)
    lab, slab = np.zeros(size, dtype=np.int64), np.zeros(size, dtype=np.int64)
    out = np.empty(steps + 1)
    out[0] = TWO_PI
    K.zero_mass_path(pos, lab, spos, slab, xs, p.delta, p.a_delta, out[1:])
    return out


# ---------------------------------------------------------------------------
# Steps 1-4 replay


@dataclass(frozen=True)
class ReplayRecord:
    """Bookkeeping of the probe-interval procedure bounding the domination time.

    ``hat`` holds the probe-session lengths, ``tilde`` the waiting times until
    a particle escaped the dominant color; ``bound = 1 + sum(hat) + sum(tilde)``.
    """

    hat: tuple
    tilde: tuple
    bound: int
    t_r: int
    dominant: int
    certified: bool


def replay_steps(p: SlitParams, eta: float = DEFAULT_ETA, seed=None, cap: int = DEFAULT_CAP):
    """Replay the probe procedure on the same particle stream as :func:`track_run`.

    A probe arc of length delta is planted at the start of the largest color
    and followed until it drops below delta^3 or exceeds 2pi - delta^3.  After
    a large exit the dominant color is watched until a particle escapes it,
    which restarts probing; the escape waits are counted in the bound.  The
    replay stops once the watched color carries a domination certificate.
    """
    _check_eta(eta)
    cap = _check_cap(cap)
    d = p.delta
    lo, hi = d ** 3, TWO_PI - d ** 3
    rng = stream(seed, POSITIONS)
    buf = rng.uniform(0.0, TWO_PI, BLOCK)
    used = 0
    m = new_config()
    last_other = {}
    hat, tilde = [], []

    def advance():
        nonlocal m, buf, used
        if used == buf.shape[0]:
            buf = rng.uniform(0.0, TWO_PI, BLOCK)
            used = 0
        x = float(buf[used])
        used += 1
        m, ev = apply_particle(m, x, p)
        last_other[ev.color] = ev.step_index
        return x, ev

    _, ev = advance()  # the first particle always founds color 1
    certified = False
    dominant = 1
    while m.steps < cap:
        session = 0
        while True:
            # the most recently grown color is at least 2 a_delta > delta long
            k = ev.color
            start = float(m.pos[np.nonzero(m.lab == k)[0][0]])
            a, length = start, d
            while lo <= length <= hi and m.steps < cap:
                x, ev = advance()
                a, length, _ = K.interval_step(a, length, x, d)
                session += 1
            if length > hi or m.steps >= cap:
                break
        hat.append(session)
        dominant = k
        wait = 0
        escaped = False
        while m.steps < cap:
            if certify_domination(m, dominant, eta, p) is not None:
                certified = True
                break
            _, ev = advance()
            wait += 1
            if ev.color != dominant:
                escaped = True
                break
        if not escaped:
            break
        tilde.append(wait)
    bound = 1 + sum(hat) + sum(tilde)
    others = [s for c, s in last_other.items() if c != dominant]
    t_r = max(others) if others else 1
    return ReplayRecord(tuple(hat), tuple(tilde), bound, t_r, dominant, certified)
