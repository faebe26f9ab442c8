"""Reflected diffusion simulation: reflection map, schemes, estimates."""

import math

import numpy as np
import pytest

from psslab.hjb import ModePolicy
from psslab.wcp import (
    SamplePath1D,
    _draw_noise,
    _mode_coeff_arrays,
    discounted_tail_bound,
    estimate_wcp_cost,
    simulate_wcp,
    skorokhod_map,
)


def test_reflection_map_worked_example():
    psi = np.array([0.0, 1.0, -1.0, 0.5, -2.0])
    phi, eta = skorokhod_map(psi)
    assert phi.tolist() == [0.0, 1.0, 0.0, 1.5, 0.0]
    assert eta.tolist() == [0.0, 0.0, 1.0, 1.0, 2.0]


def test_reflection_map_minimality():
    rng = np.random.default_rng(11)
    for _ in range(5):
        psi = np.cumsum(rng.standard_normal(300) * 0.3)
        phi, eta = skorokhod_map(psi)
        assert np.all(phi >= 0.0)
        assert np.all(np.diff(eta) >= 0.0)
        # The pushing process moves only while the path sits at zero.
        grows = np.flatnonzero(np.diff(eta) > 0.0) + 1
        assert np.all(phi[grows] == 0.0)


def test_single_path_layout_and_policy_trace():
    pol = ModePolicy(thresholds=(0.5,), modes=(0, 1))
    coef = ((-0.05, 0.3), (-0.15, 0.45))
    path = simulate_wcp(pol, coef, 0.0, 1e-2, 1.0, seed=3)
    assert len(path.times) == 101
    assert len(path.values) == 101
    assert len(path.local_time) == 101
    assert len(path.mode_trace) == 100
    assert path.times[0] == 0.0 and path.times[-1] == pytest.approx(1.0)
    assert np.all(path.values >= 0.0)
    assert path.local_time[0] == 0.0 and np.all(np.diff(path.local_time) >= 0.0)
    assert np.array_equal(path.mode_trace, pol.mode_of(path.values[:-1]))


def test_plain_scheme_equals_reflected_free_path():
    # With the bridge correction off, the discrete path is exactly the
    # reflection map applied to the discrete free path.
    coef = ((-0.2, 0.5),)
    step, n = 1e-2, 400
    path = simulate_wcp(
        ModePolicy.constant(0), coef, 1.0, step, n * step, seed=9, path_id=4, bridge=False
    )
    b_arr, s_arr = _mode_coeff_arrays(coef)
    normals, _ = _draw_noise(9, 4, n, bridge=False)
    psi = np.empty(n + 1)
    psi[0] = 1.0
    for k in range(n):
        psi[k + 1] = psi[k] + (b_arr[0] * step + s_arr[0] * math.sqrt(step) * normals[k])
    phi, eta = skorokhod_map(psi)
    assert np.array_equal(path.values, phi)
    assert np.array_equal(path.local_time, eta)


def test_reflected_brownian_motion_mean():
    # Driftless unit-variance reflection from zero: E Z_1 = sqrt(2/pi).
    vals = np.array(
        [
            simulate_wcp(
                ModePolicy.constant(0), ((0.0, 1.0),), 0.0, 1e-3, 1.0, seed=5, path_id=p
            ).values[-1]
            for p in range(400)
        ]
    )
    target = math.sqrt(2.0 / math.pi)
    se = np.std(vals, ddof=1) / math.sqrt(len(vals))
    assert abs(np.mean(vals) - target) <= 3.0 * se


def test_paths_are_reproducible_and_distinct():
    pol = ModePolicy.constant(0)
    coef = ((0.0, 2.0),)
    a = simulate_wcp(pol, coef, 0.0, 1e-2, 0.5, seed=7, path_id=2)
    b = simulate_wcp(pol, coef, 0.0, 1e-2, 0.5, seed=7, path_id=2)
    c = simulate_wcp(pol, coef, 0.0, 1e-2, 0.5, seed=7, path_id=3)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.local_time, b.local_time)
    assert not np.array_equal(a.values, c.values)


def test_cost_estimate_matches_closed_form_value():
    est = estimate_wcp_cost(
        ModePolicy.constant(0), ((0.0, 2.0),), gamma=1.0, n_paths=3000, seed=0
    )
    assert est.n_paths == 3000
    assert abs(est.mean - 1.0) <= max(1.5 * est.half_width_95, 0.02)
    assert est.truncation_bound <= 1e-3


def test_cost_estimate_independent_of_batch_layout():
    kw = dict(gamma=1.0, step=5e-3, horizon=2.0, n_paths=300, seed=12)
    a = estimate_wcp_cost(ModePolicy.constant(0), ((0.1, 0.8),), **kw, batch=128)
    b = estimate_wcp_cost(ModePolicy.constant(0), ((0.1, 0.8),), **kw, batch=512)
    assert a.mean == b.mean
    assert a.half_width_95 == b.half_width_95


def test_tail_bound_decreases_with_horizon():
    coef = ((-0.1, 0.4), (0.2, 1.0))
    bounds = [discounted_tail_bound(coef, 1.0, 0.5, t) for t in (5.0, 10.0, 20.0)]
    assert bounds[0] > bounds[1] > bounds[2] > 0.0


def test_input_validation():
    pol = ModePolicy.constant(0)
    coef = ((0.0, 1.0),)
    with pytest.raises(ValueError):
        simulate_wcp(pol, coef, -1.0, 1e-2, 1.0, seed=0)
    with pytest.raises(ValueError):
        simulate_wcp(pol, coef, 0.0, 0.0, 1.0, seed=0)
    with pytest.raises(ValueError):
        simulate_wcp(pol, coef, 0.0, 1e-2, 1e-3, seed=0)
    with pytest.raises(ValueError):
        estimate_wcp_cost(pol, coef, gamma=1.0, n_paths=1)
    with pytest.raises(ValueError):
        estimate_wcp_cost(pol, coef, gamma=0.0)


def test_path_container_rejects_bad_series():
    t = np.array([0.0, 1.0])
    with pytest.raises(ValueError):
        SamplePath1D(
            times=t,
            values=np.array([0.0, -1.0]),
            local_time=np.array([0.0, 0.0]),
            mode_trace=np.array([0]),
        )
    with pytest.raises(ValueError):
        SamplePath1D(
            times=t,
            values=np.array([0.0, 1.0]),
            local_time=np.array([0.5, 0.0]),
            mode_trace=np.array([0]),
        )
