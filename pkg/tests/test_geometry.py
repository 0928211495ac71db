import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from expwave import presets
from expwave.geometry import (
    BlowupCurve,
    GeometryError,
    NoBlowupDetected,
    cone_distance_bounds,
    dist_to_gamma,
    distances_to_gamma,
    estimate_T,
    lemma_co_violation,
    lipschitz_certificate,
    noncharacteristic_test,
)
from expwave.solver import zero_source
from expwave.verify import make_run


def _curve(fn, lo=-1.0, hi=1.0, n=201, h=1e-3):
    xs = np.linspace(lo, hi, n)
    return BlowupCurve.from_samples(xs, fn(xs), h)


def test_estimate_T_on_ode(small_ode_run):
    T, method = estimate_T(small_ode_run.outcome, 0.0, return_method=True)
    assert method == "sqrt_extrapolation"
    assert T == pytest.approx(1.0, abs=2e-4)


def test_no_blowup_on_free_wave():
    run = make_run(presets.constant(0.0, 0.0, window=(-1, 1), h=0.01), 0.01, (-1, 1), 1.5,
                   source=zero_source)
    assert run.curve is None
    with pytest.raises(NoBlowupDetected):
        estimate_T(run.outcome, 0.0)


def test_lipschitz_certificate():
    assert lipschitz_certificate(_curve(lambda x: 1 + 0.5 * x)) == pytest.approx(-0.5 * 0.01)
    steep = _curve(lambda x: 1 + 1.5 * x)
    assert steep.lipschitz_defect == pytest.approx(0.005)
    assert not steep.accepted
    with pytest.raises(GeometryError):
        lipschitz_certificate(BlowupCurve(xs=np.array([0.0]), Ts=np.array([1.0]),
                                          lipschitz_defect=0.0, method="threshold", h=1e-3))


@pytest.mark.parametrize("kappa", [0.0, 0.2, 0.45, 0.8])
def test_noncharacteristic_slope_of_a_line(kappa):
    res = noncharacteristic_test(_curve(lambda x: 1 + kappa * x), 0.0)
    expected = max(0.05, math.ceil(round(kappa / 0.05, 9)) * 0.05)
    assert res.delta_min == pytest.approx(expected)
    assert res.is_noncharacteristic


def test_characteristic_point():
    res = noncharacteristic_test(_curve(lambda x: 1 - np.abs(x)), 0.0)
    assert res.delta_min == 1.0
    assert not res.is_noncharacteristic


def test_noncharacteristic_needs_coverage():
    with pytest.raises(GeometryError):
        noncharacteristic_test(_curve(lambda x: np.ones_like(x)), 0.99)


def test_distance_to_flat_curve():
    c = _curve(lambda x: np.ones_like(x))
    d = distances_to_gamma(c, np.array([0.0, 0.3]), np.array([0.25, 0.9]))
    np.testing.assert_allclose(d, [0.75, 0.1])
    assert dist_to_gamma(c, (0.0, 0.5)) == pytest.approx(0.5)
    with pytest.raises(GeometryError):
        dist_to_gamma(c, (0.0, 1.5))


def test_distance_to_tilted_line():
    k = 0.5
    c = _curve(lambda x: 1 + k * x, lo=-2, hi=2, n=401)
    px, pt = np.array([0.0, 0.2]), np.array([0.0, 0.6])
    exact = (1 + k * px - pt) / math.sqrt(1 + k * k)
    np.testing.assert_allclose(distances_to_gamma(c, px, pt), exact, rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(slopes=st.lists(st.floats(-1, 1), min_size=4, max_size=12),
       px=st.floats(-0.5, 0.5), frac=st.floats(0, 1))
def test_distance_sandwich_for_lipschitz_curves(slopes, px, frac):
    # any 1-Lipschitz curve: (T(x)-t)/√2 <= d((x,t), Γ) <= T(x) - t
    xs = np.linspace(-2.0, 2.0, len(slopes) + 1)
    Ts = 3.0 + np.concatenate(([0.0], np.cumsum(np.array(slopes) * np.diff(xs))))
    c = BlowupCurve.from_samples(xs, Ts, 1e-3)
    pt = frac * float(c.T_at(px)) * 0.5
    assert lemma_co_violation(c, np.array([px]), np.array([pt]))[0] <= 1e-12


def test_cone_distance_bounds_on_line():
    rep = cone_distance_bounds(_curve(lambda x: 1 + 0.5 * x, lo=-2, hi=2, n=801), 0.0, 0.5, 0.1)
    assert rep.passed
    assert rep.coercivity_C <= rep.coercivity_bound
    assert rep.ratio_c <= rep.ratio_bound


def test_estimate_T_on_tilted(tilted_run):
    assert estimate_T(tilted_run.outcome, 0.4) == pytest.approx(1.2, abs=5e-3)


def test_flat_curve_certificate_is_minus_spacing():
    c = _curve(lambda x: np.ones_like(x))
    assert lipschitz_certificate(c) == pytest.approx(-0.01)
    assert c.accepted


def test_distance_examples():
    flat = _curve(lambda x: np.ones_like(x))
    assert dist_to_gamma(flat, (0.0, 0.4)) == pytest.approx(0.6)
    tilted = _curve(lambda x: 1 + 0.5 * x, lo=-2, hi=2, n=401)
    d = dist_to_gamma(tilted, (0.0, 0.0))
    assert d == pytest.approx(1 / math.sqrt(1.25), rel=1e-12)
    assert 1 / math.sqrt(2) <= d <= 1.0
    assert dist_to_gamma(tilted, (0.3, 1.15)) == pytest.approx(0.0, abs=1e-12)


def test_cone_distance_bounds_closed_form():
    k = 0.5
    line = _curve(lambda x: 1 + k * x, lo=-2, hi=2, n=801)
    rep = cone_distance_bounds(line, 0.0, 0.5, 0.25)
    dist = lambda x, t: (1 + k * x - t) / math.sqrt(1 + k * k)  # noqa: E731
    sep = math.sqrt(2) * 0.25
    C = max((dist(0, 0.5) + sep) / dist(z, 0.25) for z in (0.25, -0.25))
    assert rep.coercivity_C == pytest.approx(C, rel=1e-12)
    assert rep.passed and rep.coercivity_C <= 4.0
    flat = cone_distance_bounds(_curve(lambda x: np.ones_like(x)), 0.0, 0.5, 0.25)
    assert flat.ratio_c == pytest.approx(1.0, abs=1e-12)
    # as tau -> t the cone points reach the apex and C -> 1
    near = cone_distance_bounds(line, 0.0, 0.5, 0.5 - 1e-9)
    assert near.coercivity_C == pytest.approx(1.0, abs=1e-6)
