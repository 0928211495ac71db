import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from expwave import presets
from expwave.picard import (
    PicardConfig,
    PicardError,
    cone_solve,
    contraction_bound,
    local_T,
    picard_solve,
    radius,
    smooth_cutoff,
)
from expwave.solver import exp_source, solve
from expwave.wavefield import Grid

# [DERIVED] log of the largest admissible T for norms 0.5, 1, 2, from a
# bracketing root finder applied to T(1+T) = R e^{-C* R}/(2√2 C0) with C0 = 4, C* = √2
LOG_LOCAL_T = {0.5: -6.703513686380725, 1.0: -11.660379715471999, 2.0: -22.280843412455916}


def test_config_validation():
    with pytest.raises(ValueError):
        PicardConfig(tol=0.0)
    with pytest.raises(ValueError):
        PicardConfig(max_iter=0)


def test_radius_and_contraction_formulas():
    cfg = PicardConfig()
    assert radius(0.5, 1.0, cfg) == pytest.approx(2 * 4 * 1.5)
    assert contraction_bound(0.5, 1.0, cfg) == pytest.approx(4 * 0.5 * 1.5 * math.exp(math.sqrt(2) * 12))


@pytest.mark.parametrize("norm", sorted(LOG_LOCAL_T))
def test_local_T_matches_root_finder(norm):
    assert math.log(local_T(norm)) == pytest.approx(LOG_LOCAL_T[norm], abs=1e-9)


def test_local_T_edge_cases():
    assert local_T(0.0) == 1.0
    with pytest.raises(ValueError):
        local_T(-1.0)
    with pytest.raises(ValueError):
        local_T(float("inf"))


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0.1, 3.0), b=st.floats(0.1, 3.0))
def test_local_T_nonincreasing_in_norm(a, b):
    lo, hi = sorted((a, b))
    assert local_T(hi) <= local_T(lo) * (1 + 1e-9)


def _grid(T, h, half=None):
    half = T + 0.05 if half is None else half
    return Grid.from_window(-half, half, h, T)


def test_small_data_converges_fast():
    data = presets.constant(-3.0, 0.1, window=(-1, 1), h=4e-3)
    res = picard_solve(data, _grid(0.2, 4e-3), T_local=0.2)
    assert res.iterations <= 6
    assert res.contraction_estimate < 1e-3
    assert res.halvings == 0
    assert res.summary()["T_local"] == pytest.approx(0.2)


def test_agrees_with_leapfrog_second_order():
    diffs = []
    for h in (4e-3, 2e-3):
        data = presets.perturbed_ode(window=(-1, 1), h=h)
        grid = _grid(0.2, h)
        res = picard_solve(data, grid, T_local=0.2)
        ref = solve(data, exp_source, grid, t_end=res.T_local)
        n = res.field.levels.shape[0]
        m = res.field.valid_mask & ref.field.valid_mask[:n]
        diffs.append(np.max(np.abs(res.field.levels - ref.field.levels[:n])[m]))
    assert math.log2(diffs[0] / diffs[1]) > 1.8


def test_velocity_matches_ode():
    data = presets.ode(window=(-1, 1), h=2e-3)
    res = picard_solve(data, _grid(0.2, 2e-3), T_local=0.2)
    st_ = res.state_at(50)
    t = 50 * 2e-3
    np.testing.assert_allclose(st_.v, 2.0 / (1.0 - t), rtol=1e-4)


def test_halving_on_non_contraction():
    h = 1e-2
    data = presets.ode(window=(-1, 1), h=h)
    # past the blow-up time the iterates overflow, so T is halved to 0.75 (snapped to the grid)
    res = picard_solve(data, _grid(1.5, h), T_local=1.5)
    assert res.halvings == 1
    assert res.T_local == pytest.approx(0.75, abs=h)
    with pytest.raises(PicardError):
        picard_solve(data, _grid(1.5, h), T_local=1.5, max_halvings=0)


def test_narrow_grid_rejected():
    data = presets.ode(window=(-1, 1), h=4e-3)
    with pytest.raises(PicardError):
        picard_solve(data, _grid(0.2, 4e-3, half=0.1), T_local=0.2)


def test_smooth_cutoff():
    x = np.linspace(-3, 3, 601)
    chi = smooth_cutoff(x, 0.0, 1.0, 2.0)
    assert np.all(chi[np.abs(x) <= 1] == 1.0)
    assert np.all(chi[np.abs(x) >= 2] == 0.0)
    assert np.all(np.diff(chi[x >= 0]) <= 0)


@settings(max_examples=8, deadline=None)
@given(x0=st.floats(-0.3, 0.3), t0=st.floats(0.05, 0.3))
def test_cone_solve_is_bit_exact(x0, t0):
    data = presets.random_band_limited(seed=2, window=(-1, 1), h=5e-3)
    res = cone_solve(data, (x0, t0), h=5e-3)
    assert res.max_abs_diff == 0.0
    assert res.field.valid_mask.any()


def test_cone_solve_rejects_outside_apex():
    data = presets.ode(window=(-1, 1))
    with pytest.raises(PicardError, match="outside computed domain"):
        cone_solve(data, (0.9, 0.5), h=5e-3)
    with pytest.raises(PicardError):
        cone_solve(data, (0.0, 0.0), h=5e-3)


def test_zero_data_first_iterate_and_fixed_point():
    diffs = []
    for h in (4e-3, 2e-3):
        data = presets.constant(0.0, 0.0, window=(-1, 1), h=h)
        grid = _grid(0.2, h)
        res = picard_solve(data, grid, T_local=0.2)
        # the first iterate adds the Duhamel term of the constant source e^0 = 1, i.e. t²/2
        assert res.differences[0] == pytest.approx(0.5 * res.T_local**2, rel=1e-12)
        ref = solve(data, exp_source, grid, t_end=res.T_local)
        n = res.field.levels.shape[0]
        m = res.field.valid_mask & ref.field.valid_mask[:n]
        diffs.append(np.max(np.abs(res.field.levels - ref.field.levels[:n])[m]))
        assert diffs[-1] <= 10 * h * h
    assert diffs[1] < 1e-12 or math.log2(diffs[0] / diffs[1]) > 1.8


def test_small_shifted_ode_data_converges():
    h = 4e-3
    data = presets.constant(math.log(2) - 10, 0.0, window=(-1.5, 1.5), h=h)
    res = picard_solve(data, _grid(1.0, h), T_local=1.0)
    assert res.halvings == 0
    assert res.iterations <= 8
    assert res.contraction_estimate < 0.5


def test_cone_solve_independent_of_cutoff_width():
    h = 5e-3
    data = presets.perturbed_ode(window=(-1, 1), h=h)
    a = cone_solve(data, (0.1, 0.25), h=h, pad_factor=1.0)
    b = cone_solve(data, (0.1, 0.25), h=h, pad_factor=2.5)
    n = min(a.field.levels.shape[0], b.field.levels.shape[0])
    ta = dict(zip(np.round(a.field.x / h).astype(int), range(a.field.grid.nx)))
    cols = [(ta[k], j) for j, k in enumerate(np.round(b.field.x / h).astype(int)) if k in ta]
    ia, ib = np.array(cols).T
    ma = a.field.valid_mask[:n][:, ia]
    assert np.array_equal(ma, b.field.valid_mask[:n][:, ib])
    diff = np.abs(a.field.levels[:n][:, ia] - b.field.levels[:n][:, ib])[ma]
    assert ma.sum() > 100 and diff.max() < 1e-14
