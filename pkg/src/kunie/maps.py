"""Two-dimensional chaotic maps: the sine-cosine pi hyperchaotic map and
three reference maps used for comparison.

Each map comes in two flavours: a scalar ``step_*`` built on :mod:`math`
(used by the cipher, where bit-for-bit reproducibility matters) and a
vectorised numpy form with an analytic Jacobian (used by the dynamical
analysis, where many parameter cells are iterated at once).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Tuple

import numpy as np

PI = math.pi
LN_PI = math.log(PI)

# pi ** (v*v) overflows a double once v*v > ~619.  The exponent is reduced
# modulo this period, which leaves the map untouched for |v| < 22.6.
EXPONENT_PERIOD = 512.0

PARAM_LIMIT = 25.0

State = Tuple[float, float]


class MapId(str, Enum):
    SCPHM = "scphm"
    TM = "tm"
    SSCDB = "sscdb"
    CROSS2DHM = "cross2dhm"


PARAM_NAMES = {
    MapId.SCPHM: ("a", "b"),
    MapId.TM: ("omega", "r"),
    MapId.SSCDB: ("mu", "eta"),
    MapId.CROSS2DHM: ("alpha", "beta"),
}


class ChaosOverflowError(ArithmeticError):
    """A map term left the range of double precision."""


class SingularStateError(ArithmeticError):
    """A reference map was evaluated at a state where it divides by zero."""


@dataclass(frozen=True)
class MapParams:
    a: float
    b: float

    def validate_scphm(self) -> "MapParams":
        for name, v in (("a", self.a), ("b", self.b)):
            if not (0.0 < v < PARAM_LIMIT):
                raise ValueError(f"parameter {name}={v!r} outside (0, {PARAM_LIMIT:g})")
        return self


def pow_signed(v: float, p: float = PI) -> float:
    """Odd extension of ``v ** p`` to negative ``v``."""
    return math.copysign(abs(v) ** p, v)


def pi_power(t: float) -> float:
    """``pi ** t`` with ``t`` reduced modulo :data:`EXPONENT_PERIOD`."""
    return PI ** math.fmod(t, EXPONENT_PERIOD)


def _as_id(map_id) -> MapId:
    return map_id if isinstance(map_id, MapId) else MapId(str(map_id).lower())


def _term(name: str, fn, arg: float, state: State) -> float:
    try:
        val = fn(arg)
    except (OverflowError, ValueError) as exc:
        raise ChaosOverflowError(f"term {name} overflowed at state {state!r}") from exc
    if not math.isfinite(val):
        raise ChaosOverflowError(f"term {name} overflowed at state {state!r}")
    return val


def step_scphm(state: State, params: MapParams) -> State:
    x, y = state
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ChaosOverflowError(f"non-finite state {state!r}")
    gy = _term("pi**(y*y)", pi_power, y * y, state)
    gx = _term("pi**(x*x)", pi_power, x * x, state)
    px = _term("x**pi", pow_signed, x, state)
    py = _term("y**pi", pow_signed, y, state)
    return params.a * math.sin(gy - px), params.b * math.cos(gx - py)


def step_reference(state: State, params: MapParams, map_id) -> State:
    """One iteration of a comparison map (2D-TM, 2D-SSCDB or Cross-2DHM)."""
    x, y = state
    p, q = params.a, params.b
    mid = _as_id(map_id)
    if mid is MapId.TM:
        return math.sin(p * x) - q * math.sin(p * y), math.cos(p * x)
    if mid is MapId.SSCDB:
        if x + y == 0.0:
            raise SingularStateError(f"x + y == 0 at state ({x!r}, {y!r})")
        return math.sin(p * x * (1.0 - y) + 1.0), math.sin(q / (x + y) + 1.0)
    if mid is MapId.CROSS2DHM:
        s = math.sin(y)
        if s == 0.0:
            raise SingularStateError(f"sin(y) == 0 at state ({x!r}, {y!r})")
        return math.sin(p / s), q * math.sin(PI * (x + y))
    raise ValueError(f"{mid.value} is not a reference map; use step_scphm")


def step(state: State, params: MapParams, map_id=MapId.SCPHM) -> State:
    if _as_id(map_id) is MapId.SCPHM:
        return step_scphm(state, params)
    return step_reference(state, params, map_id)


# -- vectorised forms -------------------------------------------------------

def _vpow_signed(v):
    return np.sign(v) * np.abs(v) ** PI


def _vdpow_signed(v):
    # d/dv sign(v)|v|^pi = pi |v|^(pi-1), zero at the origin
    return PI * np.abs(v) ** (PI - 1.0)


def _scphm_vec(x, y, a, b):
    u = PI ** np.fmod(y * y, EXPONENT_PERIOD) - _vpow_signed(x)
    v = PI ** np.fmod(x * x, EXPONENT_PERIOD) - _vpow_signed(y)
    return a * np.sin(u), b * np.cos(v)


def _scphm_jac(x, y, a, b):
    py = PI ** np.fmod(y * y, EXPONENT_PERIOD)
    px = PI ** np.fmod(x * x, EXPONENT_PERIOD)
    u = py - _vpow_signed(x)
    v = px - _vpow_signed(y)
    cu = a * np.cos(u)
    sv = b * np.sin(v)
    return (
        -cu * _vdpow_signed(x),
        cu * LN_PI * py * 2.0 * y,
        -sv * LN_PI * px * 2.0 * x,
        sv * _vdpow_signed(y),
    )


def _tm_vec(x, y, w, r):
    return np.sin(w * x) - r * np.sin(w * y), np.cos(w * x)


def _tm_jac(x, y, w, r):
    return w * np.cos(w * x), -r * w * np.cos(w * y), -w * np.sin(w * x), np.zeros_like(x * w)


def _sscdb_vec(x, y, mu, eta):
    return np.sin(mu * x * (1.0 - y) + 1.0), np.sin(eta / (x + y) + 1.0)


def _sscdb_jac(x, y, mu, eta):
    c1 = np.cos(mu * x * (1.0 - y) + 1.0)
    s = x + y
    c2 = np.cos(eta / s + 1.0) * (-eta / (s * s))
    return c1 * mu * (1.0 - y), -c1 * mu * x, c2, c2


def _cross_vec(x, y, alpha, beta):
    return np.sin(alpha / np.sin(y)), beta * np.sin(PI * (x + y))


def _cross_jac(x, y, alpha, beta):
    sy = np.sin(y)
    dxdy = np.cos(alpha / sy) * (-alpha * np.cos(y) / (sy * sy))
    c = beta * PI * np.cos(PI * (x + y))
    return np.zeros_like(x * alpha), dxdy, c, c


@dataclass(frozen=True)
class DynamicalMap:
    """A 2D map with its Jacobian, both acting elementwise on arrays.

    ``step(x, y, p, q)`` returns the next ``(x, y)``; ``jacobian`` returns the
    four partials ``(dx'/dx, dx'/dy, dy'/dx, dy'/dy)``.
    """

    name: str
    step: Callable
    jacobian: Callable
    param_names: Tuple[str, str] = ("p", "q")


VECTOR_MAPS = {
    MapId.SCPHM: DynamicalMap("scphm", _scphm_vec, _scphm_jac, PARAM_NAMES[MapId.SCPHM]),
    MapId.TM: DynamicalMap("tm", _tm_vec, _tm_jac, PARAM_NAMES[MapId.TM]),
    MapId.SSCDB: DynamicalMap("sscdb", _sscdb_vec, _sscdb_jac, PARAM_NAMES[MapId.SSCDB]),
    MapId.CROSS2DHM: DynamicalMap("cross2dhm", _cross_vec, _cross_jac, PARAM_NAMES[MapId.CROSS2DHM]),
}


def get_map(map_id) -> DynamicalMap:
    if isinstance(map_id, DynamicalMap):
        return map_id
    return VECTOR_MAPS[_as_id(map_id)]
