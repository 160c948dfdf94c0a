import math
from dataclasses import replace

import numpy as np
import pytest

from asvid.dataprep import GeoReference
from asvid.model import ThrustDynamicParams, ThrustStaticParams
from asvid.oracle import (
    DiscreteGenConfig,
    SigmaSurge,
    SigmaSwayYaw,
    assemble_matrices,
    default_ground_truth,
    emit_sensor_logs,
    generate_discrete,
    known_params_to_X,
    merge_datasets,
    prbs_frames,
    sigma_coeffs,
    sigma_quasi_quadratic,
    simulate_continuous,
    smooth_excitation,
    trajectory_to_dataset,
    zoh_excitation,
)
from asvid.regressors import build_systems

REF = GeoReference(lat0=37.4, lon0=-6.0, antenna_offset=(0.3, 0.1))


def zero_sigma():
    return (
        SigmaSurge(0.0, 0.0, 0.0, 0.0, 0.0),
        SigmaSwayYaw(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
        SigmaSwayYaw(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    )


class TestMatrices:
    def test_coriolis_vanishes_at_rest(self, gt_static):
        _, c, _ = assemble_matrices(gt_static, [0.0, 0.0, 0.0])
        assert np.array_equal(c, np.zeros((3, 3)))

    def test_damping_at_rest_keeps_linear_terms(self, gt_static):
        _, _, d = assemble_matrices(gt_static, [0.0, 0.0, 0.0])
        gt = gt_static
        expected = np.array(
            [
                [-gt.x_u, 0.0, 0.0],
                [0.0, -gt.y_v, -gt.y_r],
                [0.0, -gt.n_v, -gt.n_r],
            ]
        )
        assert np.allclose(d, expected, atol=1e-15)

    def test_mass_matrix_symmetry(self, gt_static):
        m, _, _ = assemble_matrices(gt_static, [0.3, -0.1, 0.2])
        assert np.array_equal(m, m.T)
        assert m[1, 2] == gt_static.m * gt_static.x_g - gt_static.y_rdot

    def test_coriolis_transfers_no_power(self, gt_static, rng):
        for _ in range(1000):
            nu = rng.uniform(-2, 2, size=3)
            _, c, _ = assemble_matrices(gt_static, nu)
            assert abs(nu @ c @ nu) < 1e-12

    def test_singular_inertia_rejected(self, gt_static):
        with pytest.raises(ValueError):
            replace(gt_static, x_udot=gt_static.m)


class TestSigma:
    def test_quasi_quadratic_matches_matrices(self, gt_static, rng):
        # the lumped coefficients reproduce M^-1(-C nu - D nu + tau_w) exactly
        m = gt_static.mass_matrix()
        tau_w = m @ np.asarray(gt_static.bias)
        for _ in range(300):
            nu = rng.uniform(-1.5, 1.5, size=3)
            _, c, d = assemble_matrices(gt_static, nu)
            direct = np.linalg.solve(m, -(c + d) @ nu + tau_w)
            assert np.allclose(sigma_quasi_quadratic(gt_static, nu), direct, atol=1e-13)

    def test_override_used(self, gt_static):
        gt = replace(gt_static, sigma_override=zero_sigma())
        assert np.array_equal(sigma_quasi_quadratic(gt, [0.4, -0.2, 0.1]), np.zeros(3))


class TestKnownParams:
    def test_surge_thrust_entries(self):
        # a_f=1, b_f=1, inverse surge inertia 0.1, h=0.2, no disturbances
        gt = default_ground_truth()
        gt = replace(
            gt,
            m=10.0,
            x_udot=0.0,
            thrust=ThrustStaticParams(a_f=1.0, b_f=1.0, a_r=1.0, b_r=1.0),
            bias=(0.0, 0.0, 0.0),
            sigma_override=zero_sigma(),
        )
        x = known_params_to_X(gt, "static")
        assert np.allclose(x["u"], [0, 0, 0, 0, 0, 0.04, 0.04], atol=1e-15)

    def test_zero_thrust_coefficients(self, gt_static):
        gt = replace(gt_static, thrust=ThrustStaticParams(0.0, 0.0, 0.0, 0.0))
        x = known_params_to_X(gt, "static")
        assert np.all(x["u"][5:] == 0.0)
        assert np.all(x["v"][9:] == 0.0)
        assert np.all(x["r"][9:] == 0.0)

    def test_identical_forward_reverse_curves_cancel_asymmetric_terms(self, gt_static):
        gt = replace(gt_static, thrust=ThrustStaticParams(a_f=3.0, b_f=5.0, a_r=3.0, b_r=5.0))
        x = known_params_to_X(gt, "static")
        for axis in ("v", "r"):
            assert x[axis][9] == 0.0
            assert x[axis][11] == 0.0
            assert x[axis][10] != 0.0

    def test_full_fossen_mode_rejected(self, gt_static):
        with pytest.raises(ValueError):
            known_params_to_X(gt_static, "static", disturbance_mode="full-fossen")

    def test_dynamic_needs_dynamic_thrust(self, gt_static):
        with pytest.raises(ValueError):
            known_params_to_X(gt_static, "dynamic")

    def test_pole_pair_relations(self, gt_dynamic):
        x = known_params_to_X(gt_dynamic, "dynamic")
        alpha = gt_dynamic.dynamic_thrust.alpha
        for vec, pair_idx in ((x["u"], 4), (x["v"], 7), (x["r"], 8)):
            r = vec[0] - alpha
            assert vec[pair_idx] == pytest.approx(-alpha * (1.0 + r), rel=1e-12)


class TestPrbs:
    def test_shape_and_range(self):
        frames = prbs_frames(500, seed=0)
        assert frames.shape == (500, 2)
        left = frames[:, 0] + frames[:, 1] / 2
        right = frames[:, 0] - frames[:, 1] / 2
        assert np.all(np.abs(left) <= 1.0) and np.all(np.abs(right) <= 1.0)

    def test_deterministic(self):
        assert np.array_equal(prbs_frames(200, seed=3), prbs_frames(200, seed=3))

    def test_holds_levels(self):
        frames = prbs_frames(100, seed=1, hold=5)
        for start in range(0, 100, 5):
            block = frames[start : start + 5]
            assert np.all(block == block[0])


class TestGenerateDiscrete:
    def test_zero_everything_stays_zero(self, gt_static):
        gt = replace(
            gt_static,
            thrust=ThrustStaticParams(0.0, 0.0, 0.0, 0.0),
            bias=(0.0, 0.0, 0.0),
        )
        cfg = DiscreteGenConfig(steps=50, kind="static", schedule=np.zeros((50, 2)))
        ds = generate_discrete(gt, cfg)
        seg = ds.segments[0]
        assert np.all(seg.u == 0.0) and np.all(seg.v == 0.0) and np.all(seg.r == 0.0)

    def test_modes_agree_for_physical_sigma(self, gt_static):
        cfg_q = DiscreteGenConfig(steps=400, kind="static", seed=7)
        cfg_f = DiscreteGenConfig(steps=400, kind="static", seed=7, disturbance_mode="full-fossen")
        ds_q = generate_discrete(gt_static, cfg_q)
        ds_f = generate_discrete(gt_static, cfg_f)
        assert np.allclose(ds_q.segments[0].u, ds_f.segments[0].u, atol=1e-12)
        assert np.allclose(ds_q.segments[0].v, ds_f.segments[0].v, atol=1e-12)
        assert np.allclose(ds_q.segments[0].r, ds_f.segments[0].r, atol=1e-12)

    def test_noise_scaling_of_parameter_error(self, gt_static):
        from asvid.estimator import identify_static

        x = known_params_to_X(gt_static, "static")

        def max_err(noise):
            cfg = DiscreteGenConfig(
                steps=4000, kind="static", seed=11, noise_std=(noise,) * 3, n_segments=2
            )
            model = identify_static(generate_discrete(gt_static, cfg))
            return max(
                float(np.max(np.abs(model.vector(a) - x[a]))) for a in ("u", "v", "r")
            )

        e_small, e_large = max_err(1e-5), max_err(1e-4)
        assert 3.0 < e_large / e_small < 30.0  # error scales about linearly with noise

    def test_segment_count_and_grid(self, ds_static):
        assert len(ds_static.segments) == 4
        for seg in ds_static.segments:
            assert np.allclose(np.diff(seg.t), ds_static.h, atol=1e-12)

    def test_divergence_guard(self, gt_static):
        unstable = replace(gt_static, x_u=60.0, x_uu=8.0, sigma_override=None)
        cfg = DiscreteGenConfig(steps=3000, kind="static", schedule=np.column_stack(
            [np.full(3000, 0.8), np.zeros(3000)]))
        with pytest.raises(RuntimeError, match="diverged at step"):
            generate_discrete(unstable, cfg)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            DiscreteGenConfig(steps=2)
        with pytest.raises(ValueError):
            DiscreteGenConfig(steps=100, kind="both")
        with pytest.raises(ValueError):
            DiscreteGenConfig(steps=100, noise_std=(-1.0, 0.0, 0.0))
        with pytest.raises(ValueError):
            DiscreteGenConfig(steps=100, kind="static", g0_scale=0.1)

    def test_merge_datasets(self, gt_static):
        cfg = DiscreteGenConfig(steps=100, kind="static", seed=0, n_segments=2)
        merged = merge_datasets([generate_discrete(gt_static, cfg)] * 2)
        assert [seg.segment_id for seg in merged.segments] == [0, 1, 2, 3]


class TestContinuousSimulator:
    def test_equilibrium_stays_at_rest(self, gt_static):
        gt = replace(
            gt_static, thrust=ThrustStaticParams(0.0, 0.0, 0.0, 0.0), bias=(0.0, 0.0, 0.0)
        )
        traj = simulate_continuous(gt, lambda t: (0.0, 0.0), duration=10.0)
        assert np.max(np.abs(traj.nu)) == 0.0
        assert np.max(np.abs(traj.eta)) == 0.0

    def test_equal_thrusts_run_straight(self, gt_static):
        gt = replace(gt_static, bias=(0.0, 0.0, 0.0))
        traj = simulate_continuous(gt, lambda t: (0.6, 0.6), duration=30.0)
        assert np.max(np.abs(traj.nu[:, 1])) < 1e-12  # no sway
        assert np.max(np.abs(traj.nu[:, 2])) < 1e-12  # no turn
        assert np.max(np.abs(traj.eta[:, 1])) < 1e-9  # straight north track
        assert traj.nu[-1, 0] > 0.5

    def test_unforced_motion_dissipates_energy(self, gt_static):
        gt = replace(gt_static, thrust=ThrustStaticParams(0.0, 0.0, 0.0, 0.0), bias=(0.0, 0.0, 0.0))
        traj = simulate_continuous(gt, lambda t: (0.0, 0.0), duration=20.0,
                                   nu0=(0.8, 0.2, -0.5))
        m = gt.mass_matrix()
        energy = np.einsum("ij,nj,ni->n", m, traj.nu, traj.nu)
        assert np.all(np.diff(energy) <= 1e-12)
        assert energy[-1] < 0.01 * energy[0]

    def test_divergence_reports_step(self, gt_static):
        unstable = replace(gt_static, x_u=80.0, x_uu=10.0)
        with pytest.raises(RuntimeError, match="diverged at step"):
            simulate_continuous(unstable, lambda t: (0.9, 0.9), duration=60.0)

    def test_dt_must_divide_h(self, gt_static):
        with pytest.raises(ValueError):
            simulate_continuous(gt_static, lambda t: (0.0, 0.0), duration=1.0, dt=0.03)

    def test_dynamic_thrust_reaches_static_steady_state(self, gt_dynamic, gt_static):
        # beta = 1 - alpha gives unit DC gain: same terminal speed as static
        exc = lambda t: (0.5, 0.5)
        traj_d = simulate_continuous(gt_dynamic, exc, duration=120.0)
        traj_s = simulate_continuous(gt_static, exc, duration=120.0)
        assert traj_d.nu[-1, 0] == pytest.approx(traj_s.nu[-1, 0], rel=1e-3)

    def test_one_step_euler_gap_shrinks_quadratically(self, gt_static):
        # the discrete class model is the Euler step of the continuous one:
        # halving the sampling period quarters the per-step mismatch.
        # Symmetric thrust curves keep the class torque exact, so the
        # discretization gap is the only error source.
        exc = smooth_excitation()
        symmetric = ThrustStaticParams(a_f=8.0, b_f=12.0, a_r=8.0, b_r=12.0)

        def mean_gap(h):
            gt = replace(gt_static, h=h, thrust=symmetric)
            traj = simulate_continuous(gt, exc, duration=60.0, dt=h / 40.0)
            x = known_params_to_X(gt, "static")
            systems = build_systems(trajectory_to_dataset(traj), "static")
            gaps = [
                np.mean(np.abs(systems[axis].a @ x[axis] - systems[axis].b))
                for axis in ("u", "v", "r")
            ]
            return float(np.mean(gaps))

        ratio = mean_gap(0.2) / mean_gap(0.1)
        assert 2.5 < ratio < 6.0


@pytest.fixture(scope="module")
def traj(gt_static):
    return simulate_continuous(gt_static, smooth_excitation(), duration=60.0)


class TestEmitSensorLogs:

    def test_rates(self, traj):
        bundle = emit_sensor_logs(traj, REF)
        per_second_gnss = bundle.gnss_t.size / traj.t[-1]
        per_second_heading = bundle.heading_t.size / traj.t[-1]
        assert per_second_heading / per_second_gnss == pytest.approx(10.0, rel=0.02)
        assert np.allclose(np.diff(bundle.gnss_t), 0.2, atol=1e-9)
        assert np.allclose(np.diff(bundle.heading_t), 0.02, atol=1e-9)
        assert np.allclose(np.diff(bundle.pwm_t), 0.1, atol=1e-9)

    def test_monotonic_timestamps(self, traj):
        bundle = emit_sensor_logs(traj, REF)
        for t in (bundle.gnss_t, bundle.heading_t, bundle.pwm_t):
            assert np.all(np.diff(t) > 0)

    def test_stationary_vessel_constant_streams(self, gt_static):
        gt = replace(
            gt_static, thrust=ThrustStaticParams(0.0, 0.0, 0.0, 0.0), bias=(0.0, 0.0, 0.0)
        )
        traj = simulate_continuous(gt, lambda t: (0.0, 0.0), duration=10.0)
        bundle = emit_sensor_logs(traj, REF)
        assert np.all(bundle.lat == bundle.lat[0])
        assert np.all(bundle.lon == bundle.lon[0])
        assert np.all(bundle.psi == bundle.psi[0])

    def test_heading_emitted_wrapped(self, gt_static):
        exc = smooth_excitation(diff_amp=0.25, diff_freq=0.02)
        traj = simulate_continuous(gt_static, exc, duration=120.0)
        assert np.max(np.abs(traj.eta[:, 2])) > math.pi  # the true heading winds up
        bundle = emit_sensor_logs(traj, REF)
        assert np.max(np.abs(bundle.psi)) <= math.pi

    def test_noise_is_seeded(self, traj):
        from asvid.oracle import SensorNoise

        b1 = emit_sensor_logs(traj, REF, noise=SensorNoise(pos_m=0.02, seed=5))
        b2 = emit_sensor_logs(traj, REF, noise=SensorNoise(pos_m=0.02, seed=5))
        assert np.array_equal(b1.lat, b2.lat)


class TestZohExcitation:
    def test_holds_within_interval(self):
        frames = np.array([[0.2, 0.0], [0.4, 0.2]])
        exc = zoh_excitation(frames, h=0.2)
        assert exc(0.0) == exc(0.19)
        assert exc(0.2) == pytest.approx((0.5, 0.3))
