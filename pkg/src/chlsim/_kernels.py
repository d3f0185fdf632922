"""Compiled inner loops.

Every kernel here is a pure function of its arguments (plus the buffers it is
handed), so replicates can run on separate threads with the GIL released.

Angles live on the unit torus [0, 2*pi).  The boundary map of the slit at ``x``
is evaluated in the *local coordinate* ``u = (theta - x) mod 2*pi`` through
:func:`phi`, which is extended to the closed interval [0, 2*pi] by its one-sided
limits ``phi(0) = a_delta`` and ``phi(2*pi) = 2*pi - a_delta``.  Those limits are
exactly the endpoints of the slit-base arc, which is what the half-open
membership convention needs.
"""
import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi

# run statuses shared with the Python wrappers
RUNNING = 0
EXIT_LOW = 1
EXIT_HIGH = 2
CERTIFIED = 3
NEED_CAPACITY = 4


@njit(cache=True, nogil=True)
def phi(u, delta):
    """Inverse boundary map in local coordinates, u in [0, 2*pi]."""
    h = 0.5 * u
    s = math.sin(h)
    c = math.cos(h)
    rho = math.sqrt(1.0 - delta * delta)
    y = math.sqrt(delta * delta + rho * rho * s * s)
    return 2.0 * math.atan2(y, rho * c)


@njit(cache=True, nogil=True)
def shift(u, delta):
    """phi(u) - u without cancellation; odd about pi."""
    h = 0.5 * u
    s = math.sin(h)
    c = math.cos(h)
    rho = math.sqrt(1.0 - delta * delta)
    y = math.sqrt(delta * delta + rho * rho * s * s)
    num = c * delta * delta / (y + rho * s)
    den = rho * c * c + y * s
    return 2.0 * math.atan2(num, den)


@njit(cache=True, nogil=True)
def dphi(u, delta):
    h = 0.5 * u
    s = abs(math.sin(h))
    c = math.cos(h)
    rho = math.sqrt(1.0 - delta * delta)
    return rho * s / math.sqrt(s * s + delta * delta * c * c)


@njit(cache=True, nogil=True)
def wrap(theta):
    w = theta % TWO_PI
    if w >= TWO_PI:
        w = 0.0
    return w


@njit(cache=True, nogil=True)
def switch_length(a, w, delta):
    """Length change of [0, a) under the slit at w (w in [0, 2*pi))."""
    if w < a:
        return shift(a - w, delta) + shift(w, delta)
    # right endpoint sits at local coordinate 2*pi - w + a; the left at 2*pi - w
    return shift(w, delta) - shift(w - a, delta)


@njit(cache=True, nogil=True)
def interval_step(start, length, x, delta):
    """Broadened inverse of [start, start + length) under the slit at x.

    Returns (new_start, new_length, hit).
    """
    if length >= TWO_PI:
        return start, TWO_PI, True
    if length <= 0.0:
        return start, 0.0, False
    w = wrap(x - start)
    if w < length:
        left = phi(TWO_PI - w, delta)
        right = phi(length - w, delta)
        new_length = right + TWO_PI - left
        if new_length > TWO_PI:
            new_length = TWO_PI
        return wrap(x + left), new_length, True
    u = TWO_PI - w
    lo = phi(u, delta)
    hi = phi(u + length, delta)
    new_length = hi - lo
    if new_length < 0.0:
        new_length = 0.0
    return wrap(x + lo), new_length, False


# ---------------------------------------------------------------------------
# single-interval chain


@njit(cache=True, nogil=True)
def chain_exit_block(start, length, xs, low, high, delta):
    """Advance until length < low or length > high, or xs is exhausted."""
    used = 0
    status = RUNNING
    for i in range(xs.shape[0]):
        start, length, _ = interval_step(start, length, xs[i], delta)
        used += 1
        if length < low:
            status = EXIT_LOW
            break
        if length > high:
            status = EXIT_HIGH
            break
    return start, length, used, status


@njit(cache=True, nogil=True)
def sigma_star_block(start, length, xs, floor, delta):
    """Advance until the length grows or drops to floor (inclusive)."""
    used = 0
    status = RUNNING
    for i in range(xs.shape[0]):
        start, new_length, _ = interval_step(start, length, xs[i], delta)
        used += 1
        grew = new_length > length
        length = new_length
        if length <= floor:
            status = EXIT_LOW
            break
        if grew:
            status = EXIT_HIGH
            break
    return start, length, used, status


@njit(cache=True, nogil=True)
def chain_lengths(start, length, xs, delta, out):
    for i in range(xs.shape[0]):
        start, length, _ = interval_step(start, length, xs[i], delta)
        out[i] = length
    return start, length


# ---------------------------------------------------------------------------
# marked configurations
#
# A configuration is a cyclic partition of the torus stored as ``n`` ascending
# breakpoints pos[0] <= ... <= pos[n-1] < pos[0] + 2*pi, where arc i runs from
# pos[i] to pos[i+1] (pos[n] := pos[0] + 2*pi) and carries label lab[i]
# (0 = no tree, c >= 1 = color c).  n == 0 encodes the all-zero torus.
# Mapping the breakpoints through one monotone circle map keeps the tiling
# exact up to rounding of the individual breakpoints.


@njit(cache=True, nogil=True)
def locate(pos, n, x):
    """Index of the arc containing x (half-open) and x unwrapped beside pos[0]."""
    base = pos[0]
    xp = base + wrap(x - base)
    lo = 0
    hi = n - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if pos[mid] <= xp:
            lo = mid
        else:
            hi = mid - 1
    return lo, xp


@njit(cache=True, nogil=True)
def config_step(pos, lab, n, x, delta, a_delta, next_color, out_pos, out_lab):
    """Apply the broadened inverse slit map at x to a configuration.

    Writes the image into out_pos/out_lab (capacity >= n + 2) and returns
    (n_out, label, created): the label of the arc that received x (the new
    color when x fell in the zero set) and whether a color was created.
    """
    if n == 0:
        out_pos[0] = wrap(x - a_delta)
        out_lab[0] = next_color
        out_pos[1] = out_pos[0] + 2.0 * a_delta
        out_lab[1] = 0
        return 2, next_color, True

    k, xp = locate(pos, n, x)
    hit = lab[k]
    created = hit == 0
    offset = 2 if created else 0
    floor = a_delta
    ceil = TWO_PI - a_delta
    for r in range(n):
        j = k + 1 + r
        if j >= n:
            j -= n
        u = pos[j] - xp
        if j <= k:
            u += TWO_PI
        v = phi(u, delta)
        if v < floor:
            v = floor
        if v > ceil:
            v = ceil
        floor = v
        out_pos[offset + r] = xp + v
        out_lab[offset + r] = lab[j]
    n_out = n
    label = hit
    if created:
        out_pos[0] = xp - a_delta
        out_lab[0] = next_color
        out_pos[1] = xp + a_delta
        out_lab[1] = 0
        n_out = n + 2
        label = next_color
    turns = math.floor(out_pos[0] / TWO_PI)
    if turns != 0.0:
        for i in range(n_out):
            out_pos[i] -= turns * TWO_PI
    return n_out, label, created


@njit(cache=True, nogil=True)
def arc_length(pos, n, i):
    if i + 1 < n:
        return pos[i + 1] - pos[i]
    return pos[0] + TWO_PI - pos[n - 1]


@njit(cache=True, nogil=True)
def label_masses(pos, lab, n, out, labels):
    """out[c] = total length carrying label c < labels; out[0] is the zero mass."""
    out[:labels] = 0.0
    if n == 0:
        out[0] = TWO_PI
        return
    for i in range(n):
        out[lab[i]] += arc_length(pos, n, i)


@njit(cache=True, nogil=True)
def zero_mass(pos, lab, n):
    if n == 0:
        return TWO_PI
    total = 0.0
    for i in range(n):
        if lab[i] == 0:
            total += arc_length(pos, n, i)
    return total


@njit(cache=True, nogil=True)
def run_config_block(pos, lab, scratch_pos, scratch_lab, state, hits, last_grow,
                     masses, xs, delta, a_delta, threshold, need_domination, cap):
    """Advance a marked configuration over a block of uniform positions.

    ``state`` is an int64 vector: [n, next_color, steps, last_new_step,
    status, dominant].  Stops when the certificates hold (zero mass and, if
    requested, the complement of the largest color both <= threshold), when
    the step cap is reached, or when the color buffers are about to overflow.
    """
    n = state[0]
    next_color = state[1]
    steps = state[2]
    max_colors = hits.shape[0] - 1
    status = RUNNING
    for i in range(xs.shape[0]):
        if next_color >= max_colors or n + 2 > pos.shape[0]:
            status = NEED_CAPACITY
            break
        if steps >= cap:
            break
        n_out, label, created = config_step(pos, lab, n, xs[i], delta, a_delta,
                                            next_color, scratch_pos, scratch_lab)
        for q in range(n_out):
            pos[q] = scratch_pos[q]
            lab[q] = scratch_lab[q]
        n = n_out
        steps += 1
        last_grow[label] = steps
        if created:
            next_color += 1
            state[3] = steps
        else:
            hits[label] += 1
        label_masses(pos, lab, n, masses, next_color)
        if masses[0] > threshold:
            continue
        if need_domination:
            best = 1
            for c in range(2, next_color):
                if masses[c] > masses[best]:
                    best = c
            if TWO_PI - masses[best] > threshold:
                continue
            state[5] = best
        status = CERTIFIED
        break
    state[0] = n
    state[1] = next_color
    state[2] = steps
    state[4] = status
    return status


@njit(cache=True, nogil=True)
def zero_mass_path(pos, lab, scratch_pos, scratch_lab, xs, delta, a_delta, out):
    """Zero mass after each of len(xs) updates, starting from the empty torus."""
    n = 0
    next_color = 1
    for i in range(xs.shape[0]):
        n, label, created = config_step(pos, lab, n, xs[i], delta, a_delta,
                                        next_color, scratch_pos, scratch_lab)
        for q in range(n):
            pos[q] = scratch_pos[q]
            lab[q] = scratch_lab[q]
        if created:
            next_color += 1
        out[i] = zero_mass(pos, lab, n)
    return n


@njit(cache=True, nogil=True)
def partition_trials(xs, cuts, delta, out_err, out_seam):
    """Map every piece of random partitions through one broadened inverse.

    cuts has shape (trials, k): sorted cut points of a k-piece partition of the
    torus.  Each piece is mapped on its own.  out_err[t] is |total image length
    - 2*pi|; out_seam[t] is the largest signed overlap between consecutive
    images (negative values are gaps).
    """
    k = cuts.shape[1]
    starts = np.empty(k)
    lengths = np.empty(k)
    for t in range(xs.shape[0]):
        total = 0.0
        for i in range(k):
            a = cuts[t, i]
            b = cuts[t, i + 1] if i + 1 < k else cuts[t, 0] + TWO_PI
            starts[i], lengths[i], _ = interval_step(a, b - a, xs[t], delta)
            total += lengths[i]
        worst = -math.inf
        for i in range(k):
            j = i + 1 if i + 1 < k else 0
            end = starts[i] + lengths[i]
            gap = wrap(starts[j] - end)
            if gap > math.pi:
                gap -= TWO_PI
            if -gap > worst:
                worst = -gap
        out_err[t] = abs(total - TWO_PI)
        out_seam[t] = worst


@njit(cache=True, nogil=True)
def switch_lengths(a, xs, delta, out):
    for i in range(xs.shape[0]):
        out[i] = switch_length(a, wrap(xs[i]), delta)
