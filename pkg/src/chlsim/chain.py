"""The interval chain: one torus arc pushed through i.i.d. broadened inverses.

Its length is a bounded martingale absorbed at 0 and 2pi.  Besides the
simulators there are quadrature oracles for the one-step moments
``E[L]`` and ``E[L^2]`` of the length change.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate, optimize

from . import _kernels as K
from .geometry import TWO_PI, ParameterError, SlitParams, TorusInterval, interval_inverse

DEFAULT_CAP = 10**10
BLOCK = 1 << 16


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested accuracy."""

    def __init__(self, message, value, abserr):
        super().__init__(f"{message}: estimate {value!r}, error bound {abserr!r}")
        self.value = value
        self.abserr = abserr


@dataclass(frozen=True)
class ChainState:
    interval: TorusInterval
    step_count: int
    rng: np.random.Generator


@dataclass(frozen=True)
class HittingRecord:
    steps: int
    exited_low: bool
    final_length: float
    outcome: str = "exit"  # "exit" or "cap"

    @property
    def capped(self) -> bool:
        return self.outcome == "cap"


def new_chain(i0: TorusInterval, seed=None) -> ChainState:
    return ChainState(i0, 0, np.random.default_rng(seed))


def step_chain(s: ChainState, p: SlitParams) -> tuple[ChainState, float]:
    """One transition.  The generator inside ``s`` is advanced in place."""
    x = float(s.rng.uniform(0.0, TWO_PI))
    return replace(s, interval=interval_inverse(s.interval, x, p), step_count=s.step_count + 1), x


def _blocks(rng, cap):
    done = 0
    while done < cap:
        size = int(min(BLOCK, cap - done))
        done += size
        yield rng.uniform(0.0, TWO_PI, size)


def run_until_exit(i0: TorusInterval, low: float, high: float, p: SlitParams, seed=None,
                   cap: int = DEFAULT_CAP) -> HittingRecord:
    """Steps until the length leaves [low, high] (strict inequalities)."""
    if not 0.0 < low <= i0.length <= high < TWO_PI:
        raise ParameterError(
            f"need 0 < low <= length <= high < 2pi, got low={low!r}, "
            f"length={i0.length!r}, high={high!r}")
    rng = np.random.default_rng(seed)
    start, length, steps = i0.start, i0.length, 0
    for xs in _blocks(rng, cap):
        start, length, used, status = K.chain_exit_block(start, length, xs, low, high, p.delta)
        steps += used
        if status != K.RUNNING:
            return HittingRecord(steps, status == K.EXIT_LOW, length)
    return HittingRecord(steps, length < low, length, "cap")


def sigma_star(i0: TorusInterval, p: SlitParams, seed=None, cap: int = DEFAULT_CAP) -> HittingRecord:
    """Steps until the length first grows or drops to delta^3.

    ``exited_low`` is true when the run ended by shrinking, i.e. the lengths
    decreased monotonically all the way down.
    """
    d = p.delta
    if i0.length > d / 10.0:
        raise ParameterError(f"sigma_star needs length <= delta/10 = {d / 10!r}, got {i0.length!r}")
    floor = d ** 3
    if i0.length <= floor:
        return HittingRecord(0, True, i0.length)
    rng = np.random.default_rng(seed)
    start, length, steps = i0.start, i0.length, 0
    for xs in _blocks(rng, cap):
        start, length, used, status = K.sigma_star_block(start, length, xs, floor, d)
        steps += used
        if status != K.RUNNING:
            return HittingRecord(steps, status == K.EXIT_LOW, length)
    return HittingRecord(steps, False, length, "cap")


# ---------------------------------------------------------------------------
# quadrature oracles


def _breakpoints(lo, hi, anchors, scales):
    """Interior points at the given distances from each anchor, clipped to (lo, hi)."""
    pts = set()
    for anchor in anchors:
        for s in scales:
            for q in (anchor - s, anchor + s):
                if lo < q < hi:
                    pts.add(q)
    return sorted(pts)


def _quad(f, lo, hi, points, epsabs, epsrel):
    return integrate.quad(f, lo, hi, points=points or None, epsabs=epsabs,
                          epsrel=epsrel, limit=1000)


def _integrate_switch(a, p, f, epsabs, epsrel):
    d = p.delta
    scales = (d, 10.0 * d, math.sqrt(d))
    total = 0.0
    err = 0.0
    # L is smooth except near x = 0 and x = a, where it varies on the scale delta
    for lo, hi in ((0.0, a), (a, TWO_PI)):
        pts = _breakpoints(lo, hi, (0.0, a, TWO_PI), scales)
        v, e = _quad(f, lo, hi, pts, epsabs, epsrel)
        total += v
        err += e
    return total / TWO_PI, err / TWO_PI


def drift_quadrature(a: float, p: SlitParams, tol: float = 1e-10) -> float:
    """One-step mean length change of an arc of length ``a``; zero for a martingale.

    Raises QuadratureError if the error bound exceeds ``tol``.
    """
    if not 0.0 < a < TWO_PI:
        raise ParameterError(f"arc length must lie in (0, 2pi), got {a!r}")
    if tol <= 0.0:
        raise ParameterError("tol must be positive")
    d = p.delta
    value, err = _integrate_switch(a, p, lambda x: K.switch_length(a, x, d),
                                   tol * 1e-2, 0.0)
    if err > tol:
        raise QuadratureError("drift quadrature did not converge", value, err)
    return value


def second_moment_quadrature(a: float, p: SlitParams, tol: float = 1e-8) -> float:
    """One-step second moment E[L^2] for an arc of length ``a``.

    ``tol`` is relative to the result.
    """
    if not 0.0 < a < TWO_PI:
        raise ParameterError(f"arc length must lie in (0, 2pi), got {a!r}")
    if tol <= 0.0:
        raise ParameterError("tol must be positive")
    d = p.delta
    value, err = _integrate_switch(a, p, lambda x: K.switch_length(a, x, d) ** 2,
                                   0.0, tol * 1e-2)
    if err > tol * abs(value):
        raise QuadratureError("second-moment quadrature did not converge", value, err)
    return value


def l_squared_integral(p: SlitParams, tol: float = 1e-8) -> float:
    """Integral of l(x)^2 over the torus.  ``tol`` is relative to the result."""
    if tol <= 0.0:
        raise ParameterError("tol must be positive")
    d = p.delta
    pts = _breakpoints(0.0, math.pi, (0.0,), (d, 10.0 * d, math.sqrt(d)))
    # l is odd about pi, so l^2 is symmetric
    value, err = _quad(lambda x: K.shift(x, d) ** 2, 0.0, math.pi, pts, 0.0, tol * 1e-2)
    value, err = 2.0 * value, 2.0 * err
    if err > tol * abs(value):
        raise QuadratureError("l^2 quadrature did not converge", value, err)
    return value


def halving_measure(a: float, p: SlitParams, grid: int = 4096) -> float:
    """Probability that one step shrinks an arc of length ``a`` below a/2.

    The shrinking set lies in two windows of width O(delta) flanking the arc;
    sign changes are bracketed on a grid refined there and polished with brentq.
    """
    d = p.delta
    if not 0.0 < a <= d / 10.0:
        raise ParameterError(f"halving_measure needs 0 < a <= delta/10, got {a!r}")
    reach = min(50.0 * d, 0.5 * (TWO_PI - a))
    xs = np.unique(np.concatenate([
        np.linspace(a, TWO_PI, grid, endpoint=False),
        np.linspace(a, a + reach, grid),
        np.linspace(TWO_PI - reach, TWO_PI, grid, endpoint=False),
    ]))
    vals = np.empty_like(xs)
    K.switch_lengths(a, xs, d, vals)
    g = vals + 0.5 * a  # new length - a/2
    inside = g < 0.0
    measure = 0.0
    f = lambda x: K.switch_length(a, x, d) + 0.5 * a
    left = None
    if inside[0]:
        left = xs[0]
    for k in range(1, xs.size):
        if inside[k] == inside[k - 1]:
            continue
        root = optimize.brentq(f, xs[k - 1], xs[k], xtol=1e-15)
        if inside[k]:
            left = root
        else:
            measure += root - left
            left = None
    if left is not None:
        measure += TWO_PI - left
    return measure / TWO_PI


def halving_measure_grid(a: float, p: SlitParams, n: int = 10**6) -> float:
    """Midpoint-grid estimate of :func:`halving_measure`."""
    xs = (np.arange(n) + 0.5) * (TWO_PI / n)
    vals = np.empty(n)
    K.switch_lengths(a, xs, p.delta, vals)
    return float(np.count_nonzero(vals + 0.5 * a < 0.0)) / n
