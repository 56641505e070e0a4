import math

import numpy as np
import pytest

import ppd


def test_codec_endpoints_and_round_trip():
    assert ppd.encode_depth(1.0) == 0
    assert ppd.encode_depth(20.0) == 255
    assert ppd.quantization_step(1.0) == pytest.approx(0.010, abs=5e-4)
    depth = np.linspace(1.0, 20.0, 64, dtype=np.float32).reshape(8, 8)
    back = ppd.decode_map(ppd.encode_map(depth))
    steps = np.array([ppd.quantization_step(float(d)) for d in depth.ravel()]).reshape(8, 8)
    assert np.all(np.abs(back - depth) <= steps)


def test_bandwidth_rows_round_to_table():
    rows = ppd.bandwidth()
    assert [round(rows[k][1]) for k in ("rgb", "depth", "total")] == [22, 29, 51]


def test_gev_quantile_inverts_cdf_and_fit_recovers():
    p = ppd.GevParams(xi=0.1, mu=0.0745, sigma=0.008)
    for prob in (0.05, 0.5, 0.95, 0.999):
        assert ppd.gev_cdf(ppd.gev_quantile(prob, p), p) == pytest.approx(prob, abs=1e-9)
    f = ppd.fit_gev(ppd.gev_sample(p, 5000, seed=3))
    assert f.mu == pytest.approx(p.mu, rel=0.15)
    assert f.sigma == pytest.approx(p.sigma, rel=0.15)
    assert abs(f.xi - p.xi) <= 0.1


def test_hold_and_apply_and_watchdog():
    r = ppd.hold_and_apply([0.03] * 500)
    assert r["on_time_rate"] == 1.0
    assert ppd.watchdog_trips(0.0, 0.25, 0.5)
    assert not ppd.watchdog_trips(0.0, 0.1, 0.15)


def test_straight_line_forecast():
    x, z, psi = ppd.integrate([(0.0, 0.4)], v0=4.0)
    assert (x, psi) == (0.0, 0.0)
    assert z == pytest.approx(1.6, abs=1e-12)


def test_projection_identity_and_warp():
    rgb, depth, fov_h, fov_v = ppd.render_track("r7_80", 5.0, width=96, height=54)
    assert rgb.shape == (54, 96, 3) and depth.shape == (54, 96)
    same = ppd.project_frame(rgb, depth, fov_h=fov_h, fov_v=fov_v)
    assert same["passthrough"]
    assert np.array_equal(same["image"], rgb)
    moved = ppd.project_frame(rgb, depth, dz=1.0, dpsi=math.radians(5), fov_h=fov_h, fov_v=fov_v)
    assert not moved["passthrough"]
    assert 0.5 < moved["valid"].mean() < 1.0


def test_bad_input_raises_value_error():
    with pytest.raises(ValueError):
        ppd.project_frame(np.zeros((4, 4), np.uint8), np.ones((4, 4), np.float32))
    with pytest.raises(ppd.InvalidInput):
        ppd.encode_depth(-1.0)


def test_short_experiment_report():
    rep = ppd.run_experiment(track="lane_change", mode="teleop_pp", seed=2)
    lap = rep["laps"][0]
    assert lap["completed"]
    assert 0.0 < lap["epsilon"] < 0.5
