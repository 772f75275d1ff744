import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kunie import maps
from kunie.maps import (ChaosOverflowError, MapId, MapParams, SingularStateError, get_map,
                        pow_signed, step, step_reference, step_scphm)

mpmath.mp.prec = 300


def _rd(v):
    return float(v)


def _emulated_step(x, y, a, b):
    """One map step in multiprecision, rounding every intermediate to double."""
    def spow(v):
        return math.copysign(_rd(abs(mpmath.mpf(v)) ** mpmath.mpf(math.pi)), v)

    gy = _rd(mpmath.mpf(math.pi) ** mpmath.mpf(math.fmod(y * y, 512.0)))
    gx = _rd(mpmath.mpf(math.pi) ** mpmath.mpf(math.fmod(x * x, 512.0)))
    return (a * _rd(mpmath.sin(mpmath.mpf(gy - spow(x)))),
            b * _rd(mpmath.cos(mpmath.mpf(gx - spow(y)))))


def test_pow_signed_is_odd():
    assert pow_signed(2.0) == pytest.approx(2.0 ** math.pi)
    assert pow_signed(-2.0) == -pow_signed(2.0)
    assert pow_signed(0.0) == 0.0


def test_pi_power_reduces_exponent():
    assert maps.pi_power(3.0) == pytest.approx(math.pi ** 3)
    assert maps.pi_power(maps.EXPONENT_PERIOD + 3.0) == maps.pi_power(3.0)


def test_step_matches_formula_at_small_state():
    x, y = step_scphm((0.1, 0.1), MapParams(25.0, 25.0))
    mpmath.mp.prec = 200
    pi = mpmath.pi
    ex = 25 * mpmath.sin(pi ** mpmath.mpf("0.01") - mpmath.mpf("0.1") ** pi)
    ey = 25 * mpmath.cos(pi ** mpmath.mpf("0.01") - mpmath.mpf("0.1") ** pi)
    assert x == pytest.approx(float(ex), rel=1e-14)
    assert y == pytest.approx(float(ey), rel=1e-14)


def test_first_steps_match_rounded_multiprecision():
    x, y = 0.1, 0.2
    for _ in range(50):
        expected = _emulated_step(x, y, 20.0, 21.0)
        x, y = step_scphm((x, y), MapParams(20.0, 21.0))
        assert (x, y) == expected


def test_resynchronised_steps_mostly_bit_exact():
    # libm pow/sin are not always correctly rounded; a rare 1-ulp slip is allowed
    rng = np.random.default_rng(0)
    exact = 0
    trials = 300
    for _ in range(trials):
        x, y = rng.uniform(-25, 25, 2)
        a, b = rng.uniform(0.5, 24.5, 2)
        exact += step_scphm((x, y), MapParams(a, b)) == _emulated_step(x, y, a, b)
    assert exact >= 0.97 * trials


def test_params_validated():
    with pytest.raises(ValueError, match="outside"):
        MapParams(25.0, 1.0).validate_scphm()
    with pytest.raises(ValueError):
        MapParams(0.0, 1.0).validate_scphm()


def test_non_finite_state_raises_overflow():
    with pytest.raises(ChaosOverflowError):
        step_scphm((math.inf, 0.0), MapParams(1.0, 1.0))


def test_overflow_names_the_term():
    with pytest.raises(ChaosOverflowError, match=r"x\*\*pi"):
        step_scphm((1e120, 0.5), MapParams(1.0, 1.0))


def test_reference_maps_singular_states():
    with pytest.raises(SingularStateError):
        step_reference((0.5, -0.5), MapParams(1.0, 1.0), MapId.SSCDB)
    with pytest.raises(SingularStateError):
        step_reference((0.5, 0.0), MapParams(1.0, 1.0), MapId.CROSS2DHM)


def test_reference_tm_formula():
    x, y = step((0.3, 0.7), MapParams(2.0, 0.5), "tm")
    assert x == pytest.approx(math.sin(0.6) - 0.5 * math.sin(1.4))
    assert y == pytest.approx(math.cos(0.6))


@pytest.mark.parametrize("mid", list(MapId))
def test_vector_form_agrees_with_scalar(mid):
    rng = np.random.default_rng(1)
    fmap = get_map(mid)
    for _ in range(50):
        x, y = rng.uniform(-3, 3, 2)
        p, q = rng.uniform(0.5, 5, 2)
        vx, vy = fmap.step(np.array([x]), np.array([y]), p, q)
        sx, sy = step((x, y), MapParams(p, q), mid)
        assert vx[0] == pytest.approx(sx, rel=1e-12, abs=1e-12)
        assert vy[0] == pytest.approx(sy, rel=1e-12, abs=1e-12)


def _mp_map(mid, x, y, p, q):
    pi = mpmath.pi
    if mid is MapId.SCPHM:
        sp = lambda v: mpmath.sign(v) * abs(v) ** pi  # noqa: E731
        return p * mpmath.sin(pi ** (y * y) - sp(x)), q * mpmath.cos(pi ** (x * x) - sp(y))
    if mid is MapId.TM:
        return mpmath.sin(p * x) - q * mpmath.sin(p * y), mpmath.cos(p * x)
    if mid is MapId.SSCDB:
        return mpmath.sin(p * x * (1 - y) + 1), mpmath.sin(q / (x + y) + 1)
    return mpmath.sin(p / mpmath.sin(y)), q * mpmath.sin(pi * (x + y))


coords = st.floats(0.05, 3.0)


@settings(max_examples=100, deadline=None)
@given(mid=st.sampled_from(list(MapId)), x=coords, y=coords, sx=st.booleans(), sy=st.booleans(),
       p=st.floats(0.5, 5.0), q=st.floats(0.5, 5.0))
def test_jacobian_matches_central_differences(mid, x, y, sx, sy, p, q):
    x = -x if sx else x
    y = -y if sy else y
    if mid is MapId.SSCDB and abs(x + y) < 0.1:
        return
    mpmath.mp.prec = 200
    h = mpmath.mpf("1e-20")
    X, Y, P, Q = (mpmath.mpf(v) for v in (x, y, p, q))
    fd = []
    for out in range(2):
        fd.append((_mp_map(mid, X + h, Y, P, Q)[out] - _mp_map(mid, X - h, Y, P, Q)[out]) / (2 * h))
        fd.append((_mp_map(mid, X, Y + h, P, Q)[out] - _mp_map(mid, X, Y - h, P, Q)[out]) / (2 * h))
    jac = get_map(mid).jacobian(np.array([x]), np.array([y]), p, q)
    for got, want in zip(jac, fd):
        got = float(np.asarray(got).ravel()[0])
        want = float(want)
        assert abs(got - want) <= 1e-5 * max(abs(want), 1e-8)


def test_closed_form_states():
    assert step_scphm((0.0, 0.0), MapParams(24.999, 24.999)) == pytest.approx(
        (24.999 * math.sin(1.0), 24.999 * math.cos(1.0)), rel=1e-15)
    x, y = step_scphm((1.0, 0.0), MapParams(1.0, 1.0))
    assert x == pytest.approx(0.0, abs=1e-15) and y == pytest.approx(-1.0, rel=1e-15)


def test_reference_closed_forms():
    assert step((0.0, 0.0), MapParams(1.0, 1.0), "tm") == (0.0, 1.0)
    assert step((1.0, 0.0), MapParams(1.0, 1.0), "sscdb") == pytest.approx((math.sin(2), math.sin(2)))


def test_cross_map_golden():
    mpmath.mp.prec = 200
    X, Y = mpmath.mpf(0.3), mpmath.mpf(0.4)
    want = _mp_map(MapId.CROSS2DHM, X, Y, mpmath.mpf(3), mpmath.mpf(3))
    got = step((0.3, 0.4), MapParams(3.0, 3.0), MapId.CROSS2DHM)
    assert got[0] == pytest.approx(float(want[0]), rel=1e-13)
    assert got[1] == pytest.approx(float(want[1]), rel=1e-13)


@settings(max_examples=100)
@given(x=st.floats(-25, 25), y=st.floats(-25, 25), a=st.floats(0.01, 24.99), b=st.floats(0.01, 24.99))
def test_orbit_stays_in_the_parameter_box(x, y, a, b):
    nx, ny = step_scphm((x, y), MapParams(a, b))
    assert abs(nx) <= a and abs(ny) <= b
