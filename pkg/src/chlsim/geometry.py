"""Slit geometry on the unit torus.

All angles are radians on ``T = R / 2piZ``.  The rescaled slit map attaches a
vertical segment of height ``2 artanh(delta)`` above a boundary point ``x``;
its boundary inverse is

    theta' = 2 arctan(sgn(tan(theta/2)) * sqrt((tan(theta/2)^2 + delta^2) / (1 - delta^2)))

which is evaluated here in a rearranged atan2 form that is finite at
``theta = pi`` and continuous up to the slit base on both sides.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

from . import _kernels as K

TWO_PI = K.TWO_PI


class ParameterError(ValueError):
    """A numeric argument is outside the domain of the model."""


class _SlitBase:
    """Marker for the set-valued image of the slit base itself."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "SLIT_BASE"

    def __bool__(self):
        return False


SLIT_BASE = _SlitBase()


@dataclass(frozen=True)
class SlitParams:
    lambda_: float
    n_width: float
    delta: float
    a_delta: float
    slit_height: float

    @property
    def contraction(self) -> float:
        """Uniform Lipschitz bound sqrt(1 - delta^2) of the boundary inverse."""
        return math.sqrt(1.0 - self.delta * self.delta)

    def as_dict(self) -> dict:
        return {
            "lambda": self.lambda_,
            "n_width": self.n_width,
            "delta": self.delta,
            "a_delta": self.a_delta,
            "slit_height": self.slit_height,
        }


def _positive(name, value):
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ParameterError(f"{name} must be a real number, got {value!r}") from None
    if not math.isfinite(value) or value <= 0.0:
        raise ParameterError(f"{name} must be positive and finite, got {value!r}")
    return value


def _from_delta(lambda_, n_width, delta):
    if not 0.0 < delta < 1.0:
        raise ParameterError(f"delta must lie in (0, 1), got {delta!r}")
    a_delta = 2.0 * math.asin(delta)
    height = math.log1p(delta) - math.log1p(-delta)
    return SlitParams(lambda_, n_width, delta, a_delta, height)


def make_params(lambda_: float, n_width: float) -> SlitParams:
    """Geometry for a slit of length ``lambda_`` on a cylinder of width parameter ``n_width``."""
    lambda_ = _positive("lambda", lambda_)
    n_width = _positive("n_width", n_width)
    # 1 - 2/(1 + e^r) == tanh(r/2); tanh avoids the cancellation for small r
    delta = math.tanh(0.5 * lambda_ / n_width)
    if delta >= 1.0:
        raise ParameterError(f"lambda/n_width = {lambda_ / n_width!r} saturates delta at 1")
    if delta <= 0.0:
        raise ParameterError(f"lambda/n_width = {lambda_ / n_width!r} underflows delta")
    return _from_delta(lambda_, n_width, delta)


def make_params_from_delta(delta: float) -> SlitParams:
    """Geometry with n_width = 1 and lambda chosen so that the rescaled parameter is ``delta``."""
    delta = _positive("delta", delta)
    if delta >= 1.0:
        raise ParameterError(f"delta must lie in (0, 1), got {delta!r}")
    return _from_delta(2.0 * math.atanh(delta), 1.0, delta)


def wrap(theta: float) -> float:
    """Reduce an angle into [0, 2pi)."""
    return K.wrap(float(theta))


def signed(theta: float) -> float:
    """Representative of an angle in (-pi, pi]."""
    w = wrap(theta)
    return w - TWO_PI if w > math.pi else w


def inverse_boundary(theta: float, p: SlitParams):
    """Preimage of the boundary point ``theta`` under the slit map at 0.

    Returns an angle in [0, 2pi), or ``SLIT_BASE`` when ``theta`` is the slit
    base, whose preimage is the arc [-a_delta, a_delta].
    """
    u = wrap(theta)
    if u == 0.0:
        return SLIT_BASE
    return wrap(K.phi(u, p.delta))


def inverse_derivative(theta: float, p: SlitParams) -> float:
    u = wrap(theta)
    if u == 0.0:
        raise ParameterError("the boundary inverse is not differentiable at the slit base")
    return K.dphi(u, p.delta)


def point_shift(theta: float, p: SlitParams):
    """Signed displacement l(theta) = inverse_boundary(theta) - theta, odd about 0."""
    u = wrap(theta)
    if u == 0.0:
        return SLIT_BASE
    return K.shift(u, p.delta)


@dataclass(frozen=True)
class TorusInterval:
    """Half-open arc [start, start + length) of the unit torus."""

    start: float
    length: float

    def __post_init__(self):
        if not (0.0 <= self.length <= TWO_PI) or math.isnan(self.length):
            raise ParameterError(f"interval length must lie in [0, 2pi], got {self.length!r}")
        object.__setattr__(self, "start", wrap(self.start))

    @classmethod
    def full(cls) -> "TorusInterval":
        return cls(0.0, TWO_PI)

    @property
    def end(self) -> float:
        return wrap(self.start + self.length)

    def contains(self, x: float) -> bool:
        if self.length >= TWO_PI:
            return True
        return wrap(x - self.start) < self.length


def interval_inverse(i: TorusInterval, x: float, p: SlitParams) -> TorusInterval:
    """Broadened preimage of ``i`` under the slit map at ``x``."""
    start, length, _ = K.interval_step(i.start, i.length, wrap(x), p.delta)
    return TorusInterval(start, min(length, TWO_PI))


def interval_shift(a: float, x: float, p: SlitParams) -> float:
    """Length change of the arc [0, a) under the slit map at ``x``.

    At ``x = 0`` or ``x = a`` the half-open convention decides: the left
    endpoint belongs to the arc, the right one does not.
    """
    if not 0.0 < a < TWO_PI:
        raise ParameterError(f"arc length must lie in (0, 2pi), got {a!r}")
    return K.switch_length(a, wrap(x), p.delta)


def forward_map(z: complex, x: float, p: SlitParams) -> complex:
    """Image of ``z`` (Im z >= 0) under the slit map attaching a slit above ``x``.

    Computed on the disk coordinate ``zeta = exp(i(z - x))``, where the slit
    map is the radial-slit map of the unit disk.  Far above the boundary it
    behaves like ``z + i log(1/(1 - delta^2))``.  Within about 1e-8 of the
    slit base the two square-root branches nearly coincide and accuracy
    degrades to roughly sqrt(machine epsilon).
    """
    z = complex(z)
    if z.imag < 0.0:
        raise ParameterError(f"forward_map needs Im(z) >= 0, got {z!r}")
    d = p.delta
    local = complex(signed(z.real - x), z.imag)
    zeta = cmath.exp(1j * local)
    root = cmath.sqrt((1.0 - zeta) ** 2 + 4.0 * d * d * zeta)
    num = 4.0 * (1.0 - d * d) * zeta
    cands = (num / (1.0 + zeta + root) ** 2, num / (1.0 + zeta - root) ** 2)
    mods = (abs(cands[0]), abs(cands[1]))
    if abs(mods[0] - mods[1]) > 1e-12:
        image = cands[0] if mods[0] < mods[1] else cands[1]
    else:
        # both on the unit circle: the real locus off the slit base keeps its side
        side = math.copysign(1.0, local.real)
        image = cands[0] if cmath.phase(cands[0]) * side >= 0.0 else cands[1]
    w = -1j * cmath.log(image)
    out = complex(z.real - local.real + w.real, max(w.imag, 0.0))
    return out
