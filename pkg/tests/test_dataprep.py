import math

import numpy as np
import pytest

from asvid.dataprep import (
    EARTH_RADIUS_M,
    GeoReference,
    PrepareConfig,
    PwmMapConfig,
    RawLogBundle,
    SavGolConfig,
    body_velocities_from_pose,
    build_prepared_dataset,
    denormalize_pwm,
    geodetic_to_ned,
    lever_arm_correct,
    ned_to_geodetic,
    normalize_pwm,
    resample_causal,
    savitzky_golay,
)
from asvid.errors import DataError

REF = GeoReference(lat0=37.4, lon0=-6.0)


class TestGeodetic:
    def test_origin_maps_to_origin(self):
        assert geodetic_to_ned(REF.lat0, REF.lon0, REF) == (0.0, 0.0)

    def test_one_degree_north_arc_length(self):
        x, y = geodetic_to_ned(REF.lat0 + 1.0, REF.lon0, REF)
        assert x == pytest.approx(EARTH_RADIUS_M * math.pi / 180.0, rel=1e-12)
        assert x == pytest.approx(111194.9266, abs=1e-3)
        assert y == 0.0

    def test_lon_offset_at_equator_matches_lat_offset(self):
        eq = GeoReference(lat0=0.0, lon0=0.0)
        x, _ = geodetic_to_ned(1.0, 0.0, eq)
        _, y = geodetic_to_ned(0.0, 1.0, eq)
        assert x == pytest.approx(y, rel=1e-12)

    def test_invalid_latitude(self):
        with pytest.raises(ValueError):
            geodetic_to_ned(91.0, 0.0, REF)

    def test_round_trip(self, rng):
        x = rng.uniform(-500, 500, size=50)
        y = rng.uniform(-500, 500, size=50)
        lat, lon = ned_to_geodetic(x, y, REF)
        x2, y2 = geodetic_to_ned(lat, lon, REF)
        assert np.allclose(x, x2, atol=1e-9)
        assert np.allclose(y, y2, atol=1e-9)


class TestLeverArm:
    def test_zero_offset(self):
        assert lever_arm_correct(3.0, 4.0, 1.2, (0.0, 0.0)) == (3.0, 4.0)

    def test_aligned_frames(self):
        x, y = lever_arm_correct(3.0, 4.0, 0.0, (1.0, 0.0))
        assert (x, y) == (2.0, 4.0)

    def test_quarter_turn(self):
        x, y = lever_arm_correct(3.0, 4.0, math.pi / 2, (1.0, 0.0))
        assert x == pytest.approx(3.0, abs=1e-12)
        assert y == pytest.approx(3.0, abs=1e-12)


class TestResampleCausal:
    def test_constant_stream(self):
        t = np.arange(0, 2, 0.02)
        vals, valid = resample_causal(t, np.full_like(t, 3.5), np.arange(0.2, 1.8, 0.2), 3, 4)
        assert np.all(valid)
        assert np.allclose(vals, 3.5, atol=1e-10)

    def test_linear_ramp_exact(self):
        t = np.arange(0, 4, 0.02)
        y = 2.0 * t - 1.0
        grid = np.arange(0.4, 3.6, 0.2)
        vals, valid = resample_causal(t, y, grid, 3, 4)
        assert np.all(valid)
        assert np.allclose(vals, 2.0 * grid - 1.0, atol=1e-9)

    def test_degree8_reproduces_ramp(self):
        t = np.arange(0, 4, 0.02)
        y = -0.7 * t + 0.3
        grid = np.arange(1.0, 3.6, 0.2)
        vals, valid = resample_causal(t, y, grid, 8, 15)
        assert np.all(valid)
        assert np.allclose(vals, -0.7 * grid + 0.3, atol=1e-9)

    def test_slow_sine_error_bound(self):
        t = np.arange(0, 30, 0.02)
        y = np.sin(2 * math.pi * 0.1 * t)
        grid = np.arange(1.0, 29.0, 0.2)
        vals, valid = resample_causal(t, y, grid, 3, 4)
        assert np.all(valid)
        assert np.max(np.abs(vals - np.sin(2 * math.pi * 0.1 * grid))) < 1e-4

    def test_warm_up_marked_invalid(self):
        t = np.arange(0, 1, 0.1)
        y = t.copy()
        grid = np.array([0.05, 0.15, 0.25, 0.35, 0.95])
        vals, valid = resample_causal(t, y, grid, 3, 4)
        # grid points with fewer than 4 prior samples are invalid
        assert list(valid) == [False, False, False, True, True]
        assert np.all(np.isnan(vals[~valid]))

    def test_causality_by_perturbation(self):
        t = np.arange(0, 10, 0.1)
        y = np.sin(t)
        grid = np.arange(1.0, 9.0, 0.2)
        base, _ = resample_causal(t, y, grid, 3, 4)
        y2 = y.copy()
        j = np.searchsorted(t, 5.0)
        y2[j] += 100.0
        pert, _ = resample_causal(t, y2, grid, 3, 4)
        before = grid < t[j] - 1e-12
        assert np.array_equal(base[before], pert[before])
        assert not np.array_equal(base[~before], pert[~before])

    def test_window_validation(self):
        with pytest.raises(ValueError):
            resample_causal(np.arange(5.0), np.arange(5.0), np.arange(3.0), 3, 3)


class TestSavitzkyGolay:
    @pytest.mark.parametrize("causal", [False, True])
    def test_constant_unchanged(self, causal):
        y = np.full(50, 2.5)
        out = savitzky_golay(y, SavGolConfig(11, 3), causal=causal)
        assert np.allclose(out, 2.5, atol=1e-12)

    @pytest.mark.parametrize("causal", [False, True])
    def test_linear_reproduced(self, causal):
        y = 0.7 * np.arange(80.0) - 3.0
        out = savitzky_golay(y, SavGolConfig(11, 3), causal=causal)
        assert np.max(np.abs(out - y)) < 1e-12 * max(1.0, np.max(np.abs(y)))

    @pytest.mark.parametrize("causal", [False, True])
    def test_cubic_reproduced(self, causal):
        x = np.linspace(-1, 1, 60)
        y = 2 * x**3 - x**2 + 0.5 * x - 1
        out = savitzky_golay(y, SavGolConfig(11, 3), causal=causal)
        assert np.max(np.abs(out - y)) < 1e-12

    @pytest.mark.parametrize("causal", [False, True])
    def test_noise_reduction_on_quadratic(self, causal, rng):
        x = np.linspace(0, 1, 400)
        clean = 2.0 * x**2 - x + 0.3
        noise = rng.normal(0, 0.05, size=x.size)
        out = savitzky_golay(clean + noise, SavGolConfig(11, 2), causal=causal)
        rms_in = np.sqrt(np.mean(noise**2))
        rms_out = np.sqrt(np.mean((out - clean) ** 2))
        assert rms_out < rms_in

    def test_too_short_signal(self):
        with pytest.raises(ValueError):
            savitzky_golay(np.zeros(5), SavGolConfig(11, 3))

    def test_causal_never_looks_ahead(self):
        y = np.sin(np.arange(100.0) / 7.0)
        base = savitzky_golay(y, SavGolConfig(11, 3), causal=True)
        y2 = y.copy()
        y2[60] += 10.0
        pert = savitzky_golay(y2, SavGolConfig(11, 3), causal=True)
        assert np.array_equal(base[:60], pert[:60])
        assert not np.array_equal(base[60:], pert[60:])

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SavGolConfig(10, 3)
        with pytest.raises(ValueError):
            SavGolConfig(11, 11)


class TestBodyVelocities:
    def test_due_north_track(self):
        h = 0.2
        t = h * np.arange(20)
        x = 1.0 * t  # 1 m/s north
        y = np.zeros_like(t)
        psi = np.zeros_like(t)
        u, v, r = body_velocities_from_pose(t, x, y, psi, h, savgol=None)
        assert np.allclose(u, 1.0, atol=1e-12)
        assert np.allclose(v, 0.0, atol=1e-12)
        assert np.allclose(r, 0.0, atol=1e-12)

    def test_north_track_heading_east(self):
        # moving north while pointing east: pure negative sway
        h = 0.2
        t = h * np.arange(20)
        x = 1.0 * t
        y = np.zeros_like(t)
        psi = np.full_like(t, math.pi / 2)
        u, v, r = body_velocities_from_pose(t, x, y, psi, h, savgol=None)
        assert np.allclose(u, 0.0, atol=1e-12)
        assert np.allclose(v, -1.0, atol=1e-12)
        assert np.allclose(r, 0.0, atol=1e-12)

    def test_constant_heading_zero_yaw_rate(self, rng):
        h = 0.2
        t = h * np.arange(30)
        x = np.cumsum(rng.uniform(0, 0.3, size=30))
        y = np.cumsum(rng.uniform(-0.1, 0.1, size=30))
        psi = np.full_like(t, 0.7)
        _, _, r = body_velocities_from_pose(t, x, y, psi, h, savgol=None)
        assert np.allclose(r, 0.0, atol=1e-14)

    def test_needs_two_samples(self):
        with pytest.raises(DataError):
            body_velocities_from_pose(
                np.array([0.0]), np.array([0.0]), np.array([0.0]), np.array([0.0]), 0.2
            )


class TestNormalizePwm:
    def test_anchor_points(self):
        cfg = PwmMapConfig()
        delta, flags = normalize_pwm(np.array([1500.0, 1900.0, 1100.0, 1300.0]), cfg)
        assert np.array_equal(delta, [0.0, 1.0, -1.0, -0.5])
        assert not np.any(flags)

    def test_monotone(self):
        cfg = PwmMapConfig()
        pwm = np.linspace(1100, 1900, 200)
        delta, _ = normalize_pwm(pwm, cfg)
        assert np.all(np.diff(delta) >= 0)

    def test_out_of_bounds_flagged_and_clamped(self):
        cfg = PwmMapConfig()
        delta, flags = normalize_pwm(np.array([1905.0, 1925.0, 1075.0]), cfg)
        # 1905 is out by 1.25% (not flagged); 1925 and 1075 are out by >5%
        assert list(flags) == [False, True, True]
        assert np.array_equal(delta, [1.0, 1.0, -1.0])

    def test_denormalize_inverse(self, rng):
        cfg = PwmMapConfig()
        delta = rng.uniform(-1, 1, size=100)
        back, _ = normalize_pwm(denormalize_pwm(delta, cfg), cfg)
        assert np.allclose(back, delta, atol=1e-12)


def synthetic_logs(duration=60.0, gap_at=None, gap_len=1.0):
    """Simple smooth raw logs: gentle curved track with known streams."""
    ref = REF
    t_g = np.arange(0.0, duration, 0.2)
    t_h = np.arange(0.0, duration, 0.02)
    t_p = np.arange(0.0, duration, 0.1)
    if gap_at is not None:
        keep = (t_g < gap_at) | (t_g >= gap_at + gap_len)
        t_g = t_g[keep]

    def track(ts):
        x = 1.2 * ts + 5.0 * np.sin(0.02 * ts)
        y = 0.8 * ts - 3.0 * np.cos(0.015 * ts) + 3.0
        return x, y

    xg, yg = track(t_g)
    lat, lon = ned_to_geodetic(xg, yg, ref)
    psi = 0.3 * np.sin(0.01 * t_h)
    pwm_l = 1600 + 100 * np.sin(0.05 * t_p)
    pwm_r = 1650 + 80 * np.cos(0.04 * t_p)
    return RawLogBundle(
        gnss_t=t_g, lat=lat, lon=lon, heading_t=t_h, psi=psi,
        pwm_t=t_p, pwm_l=pwm_l, pwm_r=pwm_r,
    )


class TestBuildPreparedDataset:
    def test_uniform_grid(self):
        ds = build_prepared_dataset(synthetic_logs(), REF)
        for seg in ds.segments:
            assert np.allclose(np.diff(seg.t), ds.h, atol=1e-9)

    def test_gap_splits_segments(self):
        ds = build_prepared_dataset(synthetic_logs(gap_at=30.0, gap_len=1.5), REF)
        assert len(ds.segments) == 2

    def test_summary_counts(self):
        ds = build_prepared_dataset(synthetic_logs(), REF)
        summary = ds.summary()
        assert summary["points"] == ds.n_samples
        assert summary["minutes"] == pytest.approx(ds.n_samples * 0.2 / 60.0)

    def test_empty_data_rejected(self):
        raw = synthetic_logs()
        raw.gnss_t = raw.gnss_t[:1]
        raw.lat = raw.lat[:1]
        raw.lon = raw.lon[:1]
        with pytest.raises(DataError):
            build_prepared_dataset(raw, REF)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PrepareConfig(h=0.0)
        with pytest.raises(ValueError):
            PrepareConfig(heading_window=5)  # degree 8 needs >= 9 samples
