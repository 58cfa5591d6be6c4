import mpmath
import numpy as np
import pytest

from thinfilm.errors import (
    HorizonTooLong,
    NoBlowupSignal,
    NoCheckpoint,
    SmallDataViolation,
    StiffnessFailure,
)
from thinfilm.flows import SHEAR, FlowSpec
from thinfilm.model import ModelParams, energy
from thinfilm.semigroup import apply_semigroup
from thinfilm.solvers import (
    COLUMNS,
    PicardConfig,
    SmallDataConfig,
    StepperConfig,
    Trajectory,
    blowup_detect,
    energy_identity_residual,
    horizon_bound,
    integrate,
    picard_solve,
    small_data_gradient_check,
    sobolev_norm_of_time_slice,
)
from thinfilm.solvers.etd import advective_wavenumber, phi_functions
from thinfilm.spectral import Grid, SpectralField, l2_norm, random_smooth, white_noise

LINEAR = ModelParams(nonlinear=False)
mpmath.mp.dps = 60


def phi_oracle(z, k):
    z = mpmath.mpf(z)
    if z == 0:
        return 1 / mpmath.factorial(k)
    partial = sum(z**j / mpmath.factorial(j) for j in range(k))
    return (mpmath.exp(z) - partial) / z**k


def test_phi_functions_against_mpmath():
    z = np.concatenate([-np.geomspace(1e-12, 1e6, 60), [0.0, -0.999999, -1.0, -1.000001]])
    phis = phi_functions(z, 3)
    for k, vals in enumerate(phis, start=1):
        want = np.array([float(phi_oracle(x, k)) for x in z])
        np.testing.assert_allclose(vals, want, rtol=1e-13, atol=0)


def test_config_validation():
    with pytest.raises(ValueError):
        StepperConfig(scheme="RK4")
    with pytest.raises(ValueError):
        StepperConfig(dt_min=0)
    with pytest.raises(ValueError):
        StepperConfig(blowup_threshold=1.0)
    with pytest.raises(ValueError):
        PicardConfig(T=2.0)
    with pytest.raises(ValueError):
        SmallDataConfig(varrho=0)


class TestIntegrate:
    def test_linear_is_semigroup(self):
        f = white_noise(Grid(32), 3, mean_zero=False)
        times = np.linspace(1e-3, 1e-2, 10)
        traj = integrate(f, LINEAR, None, StepperConfig(), 1e-2, output_times=times, checkpoint_stride=1)
        for t in times:
            u = traj.checkpoints[t]
            ref = apply_semigroup(t, f)
            assert l2_norm(u - ref) <= 1e-10 * l2_norm(ref)

    def test_columns(self):
        traj = integrate(white_noise(Grid(16), 0), LINEAR, horizon=1e-4, output_interval=2.5e-5)
        np.testing.assert_allclose(traj.t, [0, 2.5e-5, 5e-5, 7.5e-5, 1e-4], rtol=1e-14)
        assert all(len(r) == len(COLUMNS) for r in traj.rows)

    def test_schemes_agree_to_second_order(self):
        u0 = random_smooth(Grid(32), 2) * 20.0
        diffs = []
        for dt in (4e-6, 2e-6, 1e-6):
            out = {}
            for scheme in ("ETDRK2", "ETDRK4"):
                cfg = StepperConfig(scheme=scheme, dt_init=dt, dt_max=dt, adaptive=False)
                out[scheme] = integrate(u0, ModelParams(), None, cfg, 2e-4).final
            diffs.append(l2_norm(out["ETDRK2"] - out["ETDRK4"]))
        ratios = diffs[0] / diffs[1], diffs[1] / diffs[2]
        assert ratios == pytest.approx((4, 4), rel=0.15)

    def test_mean_conserved(self):
        g = Grid(32)
        u0 = random_smooth(g, 5) * 30.0 + SpectralField.from_physical(g, np.full((32, 32), 0.7))
        flow = FlowSpec(SHEAR, base_amplitude=50.0, half_period=1e-3)
        traj = integrate(u0, ModelParams(), flow, StepperConfig(), 5e-3, output_interval=5e-4)
        assert np.abs(traj.column("mean") - 0.7).max() <= 1e-10 * l2_norm(u0)

    def test_regularized_energy_monotone(self):
        u0 = random_smooth(Grid(32), 6) * 40.0
        params = ModelParams(rho=0.05)
        traj = integrate(u0, params, None, StepperConfig(dt_max=1e-5), 2e-3, output_interval=1e-4)
        E = traj.column("energy")
        assert E[0] == pytest.approx(energy(u0, params).value)
        assert np.all(np.diff(E) <= 1e-9 * abs(E[0]))

    def test_threshold_detection(self):
        g = Grid(32)
        u0 = SpectralField.from_function(g, lambda x, y: 600 * (np.cos(2 * np.pi * x) + np.cos(2 * np.pi * y)))
        traj = integrate(u0, ModelParams(), None, StepperConfig(blowup_threshold=10.0), 1.0)
        assert traj.detected and traj.reason == "threshold"
        assert traj.l2[-1] >= 10 * traj.l2[0]

    def test_stiffness_failure_carries_trajectory(self):
        g = Grid(32)
        u0 = SpectralField.from_function(g, lambda x, y: 600 * (np.cos(2 * np.pi * x) + np.cos(2 * np.pi * y)))
        cfg = StepperConfig(dt_min=1e-5, cfl_safety=1.0)
        with pytest.raises(StiffnessFailure) as info:
            integrate(u0, ModelParams(), None, cfg, 1.0)
        assert isinstance(info.value.trajectory, Trajectory)

    def test_decay_floor(self):
        traj = integrate(white_noise(Grid(16), 1), LINEAR, None, StepperConfig(decay_floor=1e-3), 10.0)
        assert traj.reason == "decayed" and traj.t[-1] < 10.0

    def test_advective_wavenumber(self):
        g = Grid(64)
        assert advective_wavenumber(g, 1.0) == g.scale
        assert advective_wavenumber(g, 1e30) == pytest.approx(g.scale * 64 / 3)
        assert advective_wavenumber(g, 1e6) == pytest.approx(100.0)

    def test_horizon(self):
        with pytest.raises(ValueError):
            integrate(white_noise(Grid(16), 0), LINEAR, horizon=0.0)


class TestTimeSlices:
    def test_initial_and_monotone(self):
        f = white_noise(Grid(16), 2)
        times = np.geomspace(1e-5, 1e-3, 6)
        traj = integrate(f, LINEAR, None, StepperConfig(), 1e-3, output_times=times, checkpoint_stride=1)
        assert sobolev_norm_of_time_slice(traj, 0.0) == pytest.approx(l2_norm(f))
        vals = [sobolev_norm_of_time_slice(traj, t) for t in times]
        assert np.all(np.diff(vals) < 0)
        assert sobolev_norm_of_time_slice(traj, times[2], "Hs", s=1.0) > vals[2]
        with pytest.raises(NoCheckpoint):
            sobolev_norm_of_time_slice(traj, 0.123)


class TestEnergyAudit:
    def test_zero_datum(self):
        traj = integrate(SpectralField.zeros(Grid(16)), ModelParams(), None, StepperConfig(), 1e-3,
                         output_interval=1e-4)
        audit = energy_identity_residual(traj)
        assert not audit.residual.any()

    def test_linear_run(self):
        # trapezoid error ~ (2 lambda dt)^2 / 12 with lambda = 16 pi^4 for |k| = 1
        u0 = SpectralField.from_function(Grid(16), lambda x, y: np.cos(2 * np.pi * x) + np.sin(2 * np.pi * y))
        cfg = StepperConfig(dt_init=1e-7, dt_max=1e-7, adaptive=False)
        traj = integrate(u0, LINEAR, None, cfg, 1e-4, record_every_step=True)
        audit = energy_identity_residual(traj)
        assert np.abs(audit.residual).max() <= 1e-6

    def test_refinement(self):
        u0 = SpectralField.from_function(Grid(32), lambda x, y: 100 * (np.cos(2 * np.pi * x) + np.cos(2 * np.pi * y)))
        res = []
        for dt in (8e-6, 4e-6):
            cfg = StepperConfig(dt_init=dt, dt_max=dt, adaptive=False)
            traj = integrate(u0, ModelParams(), None, cfg, 1e-3, record_every_step=True)
            res.append(abs(energy_identity_residual(traj).residual[-1]))
        assert res[0] / res[1] >= 2

    def test_rejects_regularized(self):
        traj = integrate(white_noise(Grid(16), 0), ModelParams(rho=0.1), horizon=1e-4)
        with pytest.raises(ValueError):
            energy_identity_residual(traj)


def synthetic(t, l2, p=2.5):
    grid = Grid(16)
    params = ModelParams(p=p)
    traj = Trajectory(grid, params)
    for ti, li in zip(t, l2):
        traj.rows.append((ti, li, 0.0, 0.0, 0.0, -1.0, 0.0))
    traj.detected = True
    traj.reason = "threshold"
    return traj


class TestBlowupDetect:
    def test_manufactured_power_law(self):
        t = 0.8 - np.geomspace(0.8, 1e-6, 400)
        rep = blowup_detect(synthetic(t, (0.8 - t) ** -0.5))
        assert rep.fitted_T_max == pytest.approx(0.8, abs=1e-3)
        assert rep.fitted_rate_gamma == pytest.approx(0.5, abs=1e-2)
        assert rep.scaled_liminf_proxy > 0
        assert rep.rate_exponent == 0.5

    def test_decaying_trajectory(self):
        t = np.linspace(0, 1, 50)
        with pytest.raises(NoBlowupSignal):
            blowup_detect(synthetic(t, np.exp(-t)))


class TestSmallData:
    def test_zero(self):
        table = small_data_gradient_check(SpectralField.zeros(Grid(16)), ModelParams(), SmallDataConfig())
        assert not table.values.any()

    def test_violation(self):
        u0 = white_noise(Grid(16), 0) * 10.0
        with pytest.raises(SmallDataViolation):
            small_data_gradient_check(u0, ModelParams(), SmallDataConfig(delta_star=1e-2, varrho=1e-3))

    def test_bounded(self):
        cfg = SmallDataConfig(delta_star=1e-2, varrho=1e-3)
        u0 = random_smooth(Grid(32), 4) * (0.5 * cfg.delta_star * cfg.varrho**-0.5)
        table = small_data_gradient_check(u0, ModelParams(), cfg)
        assert np.isfinite(table.constant) and table.constant < 10


class TestPicard:
    def test_horizon_bound(self):
        assert horizon_bound(0.0, 2.5) == 1.0
        assert horizon_bound(1.0, 2.5) == pytest.approx((4 * 2**0.5 + 1) ** -4)
        with pytest.raises(HorizonTooLong):
            picard_solve(white_noise(Grid(16), 0), ModelParams(), cfg=PicardConfig(T=1e-3))

    def test_zero_datum(self):
        res = picard_solve(SpectralField.zeros(Grid(16)), ModelParams(), cfg=PicardConfig(T=1e-3))
        assert res.sweeps == 1 and res.final_defect == 0
        assert not res.at(5e-4).coeffs.any()

    def test_linear_single_sweep(self):
        f = white_noise(Grid(16), 1) * 1e-2
        res = picard_solve(f, LINEAR, cfg=PicardConfig(T=1e-3))
        assert res.sweeps == 1
        for t in (0.0, 3e-4, 1e-3):
            ref = apply_semigroup(t, f)
            assert l2_norm(res.at(t) - ref) <= 1e-12 * l2_norm(f)

    def test_small_nonlinear_against_stepper(self):
        g = Grid(16)
        u0 = random_smooth(g, 3) * 1e-2
        res = picard_solve(u0, ModelParams(), cfg=PicardConfig(T=1e-3))
        assert res.contraction_ratio < 1
        cfg = StepperConfig(scheme="ETDRK2", dt_init=1e-6, dt_max=1e-6, adaptive=False)
        ref = integrate(u0, ModelParams(), None, cfg, 1e-3).final
        assert l2_norm(res.at(1e-3) - ref) <= 1e-4
