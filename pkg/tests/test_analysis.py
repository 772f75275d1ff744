import io
import math

import numpy as np
import pytest

from kunie.analysis import (DegenerateTangentError, LyapunovPair, benettin, bifurcation_scan, cell_centres,
                            lyapunov_grid, lyapunov_pair, occupancy, write_bifurcation_csv,
                            write_lyapunov_csv)
from kunie.maps import ChaosOverflowError, DynamicalMap, MapParams


def _logistic_step(x, y, p, q):
    return 4.0 * x * (1.0 - x), 0.5 * y


def _logistic_jac(x, y, p, q):
    z = np.zeros_like(x)
    return 4.0 - 8.0 * x, z, z, np.full_like(x, 0.5)


LOGISTIC = DynamicalMap("logistic", _logistic_step, _logistic_jac)
IDENTITY = DynamicalMap("identity", lambda x, y, p, q: (x, y),
                        lambda x, y, p, q: (np.ones_like(x), np.zeros_like(x), np.zeros_like(x), np.ones_like(x)))
AFFINE = DynamicalMap("affine", lambda x, y, p, q: (p * x, q * y),
                      lambda x, y, p, q: (p + 0 * x, 0 * x, 0 * x, q + 0 * x))
COLLAPSE = DynamicalMap("collapse", lambda x, y, p, q: (0 * x, 0 * y),
                        lambda x, y, p, q: (0 * x, 0 * x, 0 * x, 0 * x))
BLOWUP = DynamicalMap("blowup", lambda x, y, p, q: (x * 1e200, y), AFFINE.jacobian)


def test_logistic_map_gives_ln2():
    pair = lyapunov_pair(LOGISTIC, (1.0, 1.0), n_iter=100_000, seed=(0.1, 0.2))
    assert pair.le1 == pytest.approx(math.log(2), abs=0.01)
    assert pair.le2 == pytest.approx(math.log(0.5), abs=1e-9)


def test_identity_map_gives_zero():
    pair = lyapunov_pair(IDENTITY, (1.0, 1.0), n_iter=1000)
    assert pair.le1 == pytest.approx(0.0, abs=1e-12) and pair.le2 == pytest.approx(0.0, abs=1e-12)


def test_linear_map_exponents():
    pair = lyapunov_pair(AFFINE, (0.5, 0.25), n_iter=2000)
    assert pair.le1 == pytest.approx(math.log(0.5), abs=1e-3)
    assert pair.le2 == pytest.approx(math.log(0.25), abs=1e-3)


def test_failure_modes():
    with pytest.raises(DegenerateTangentError):
        lyapunov_pair(COLLAPSE, (1.0, 1.0), n_iter=1000)
    with pytest.raises(ChaosOverflowError):
        lyapunov_pair(BLOWUP, (1.0, 1.0), n_iter=1000, transient=10)
    with pytest.raises(ValueError):
        lyapunov_pair("scphm", (1.0, 1.0), n_iter=999)


def test_pair_ordering_enforced():
    with pytest.raises(ValueError):
        LyapunovPair(1.0, 2.0)


def test_scphm_exponents_stable_under_doubling():
    a = lyapunov_pair("scphm", MapParams(12.5, 12.5), n_iter=5000)
    b = lyapunov_pair("scphm", MapParams(12.5, 12.5), n_iter=10000)
    assert a.le1 >= a.le2 > 0
    assert b.le1 == pytest.approx(a.le1, rel=0.02)
    assert b.le2 == pytest.approx(a.le2, rel=0.02)


def test_scphm_exponents_insensitive_to_transient():
    les = [lyapunov_pair("scphm", (12.5, 12.5), n_iter=20000, transient=t) for t in (1000, 2000, 4000)]
    for p in les[1:]:
        assert p.le1 == pytest.approx(les[0].le1, rel=0.01)
        assert p.le2 == pytest.approx(les[0].le2, rel=0.01)


def test_batched_cells_equal_single_cells():
    p = np.array([0.3, 0.5, 0.9])
    hi, lo, st = benettin(LOGISTIC, p, p / 2, 1000)
    assert not st.any()
    for i in range(3):
        pair = lyapunov_pair(LOGISTIC, (p[i], p[i] / 2), n_iter=1000)
        assert (pair.le1, pair.le2) == (hi[i], lo[i])


def test_grid_shape_order_and_workers():
    g1 = lyapunov_grid("tm", (0.0, 4.0), (0.0, 2.0), resolution=(3, 2), n_iter=1000, workers=1)
    g2 = lyapunov_grid("tm", (0.0, 4.0), (0.0, 2.0), resolution=(3, 2), n_iter=1000, workers=3)
    assert g1.shape == (3, 2)
    np.testing.assert_array_equal(g1.a_values, [2 / 3, 2.0, 10 / 3])
    np.testing.assert_array_equal(g1.le1, g2.le1)
    np.testing.assert_array_equal(g1.le2, g2.le2)
    ok = ~np.isnan(g1.le1)
    assert np.all(g1.le1[ok] >= g1.le2[ok])
    first = g1.pair(0, 0)
    assert first == lyapunov_pair("tm", (g1.a_values[0], g1.b_values[0]), n_iter=1000)


def test_grid_rejects_tiny_resolution():
    with pytest.raises(ValueError):
        lyapunov_grid("tm", resolution=1)


def test_cell_centres_avoid_endpoints():
    c = cell_centres(0.0, 25.0, 50)
    assert c[0] == 0.25 and c[-1] == 24.75


def test_lyapunov_csv():
    g = lyapunov_grid("scphm", (1.0, 24.0), (1.0, 24.0), resolution=2, n_iter=1000)
    buf = io.StringIO()
    write_lyapunov_csv(buf, g)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "a,b,le1,le2" and len(lines) == 5
    assert [float(v) for v in lines[1].split(",")[:2]] == [g.a_values[0], g.b_values[0]]


def test_bifurcation_scan_shape_and_range():
    samples = bifurcation_scan("scphm", ("b", 25.0), ("a", 0.01, 24.99, 5), transient=100, keep=50)
    assert len(samples) == 5
    assert samples[0].param_value == 0.01 and samples[-1].param_value == 24.99
    for s in samples:
        assert s.retained_states.shape == (50, 2) and s.gaps == 0
        assert np.all(np.abs(s.retained_states[:, 0]) <= s.param_value)
        assert np.all(np.abs(s.retained_states[:, 1]) <= 25.0)


def test_bifurcation_fills_the_range_for_large_a():
    samples = bifurcation_scan("scphm", ("b", 25.0), ("a", 21.0, 24.99, 4), transient=1000, keep=2000)
    for s in samples:
        assert occupancy(s.retained_states[:, 0], -s.param_value, s.param_value) >= 0.9


def test_bifurcation_overflow_becomes_gap():
    samples = bifurcation_scan(BLOWUP, ("q", 1.0), ("p", 1.0, 2.0, 2), transient=0, keep=5, seed=(1.0, 1.0))
    # 1e200 is still finite; the next state is not
    assert samples[0].gaps == 4 and np.isnan(samples[0].retained_states[1:]).all()


def test_bifurcation_csv_and_validation():
    samples = bifurcation_scan("tm", ("r", 0.5), ("omega", 1.0, 2.0, 2), transient=0, keep=3)
    buf = io.StringIO()
    write_bifurcation_csv(buf, samples)
    assert buf.getvalue().splitlines()[0] == "param,x,y"
    assert len(buf.getvalue().splitlines()) == 7
    with pytest.raises(ValueError):
        bifurcation_scan("tm", ("b", 0.5), ("a", 1.0, 2.0, 2))
    with pytest.raises(ValueError):
        bifurcation_scan("tm", ("r", 0.5), ("omega", 1.0, 2.0, 1))


def test_occupancy():
    assert occupancy(np.linspace(0, 1, 1000), 0.0, 1.0, bins=10) == 1.0
    assert occupancy([0.05, np.nan], 0.0, 1.0, bins=10) == 0.1


def test_minimal_and_degenerate_sweeps():
    two = bifurcation_scan("scphm", ("b", 25.0), ("a", 3.0, 3.0, 2), transient=10, keep=1)
    assert len(two) == 2 and two[0].retained_states.shape == (1, 2)
    np.testing.assert_array_equal(two[0].retained_states, two[1].retained_states)


def test_affine_contraction_rate():
    pair = lyapunov_pair(AFFINE, (0.3, 0.3), n_iter=1000)
    assert pair.le1 == pytest.approx(math.log(0.3), abs=1e-3)
