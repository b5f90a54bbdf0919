import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bqlab.evolution import (
    TrajectoryRecord,
    heat_band_decay_check,
    heat_step,
    lorentz_duhamel_check,
    lorentz_duhamel_sweep,
    losing_estimate_check,
    losing_weights,
    shear_flow,
    stokes_regularity_check,
    stokes_regularity_sweep,
    stokes_solve,
    transport_besov_growth_check,
    transport_lp_conservation_check,
    transport_solve,
    transport_step,
)
from bqlab.exceptions import PreconditionError, SmallnessError, StepSizeError
from bqlab.littlewood_paley import weak_lp_quasinorm
from bqlab.spectral import (
    TorusGrid,
    divergence_residual,
    from_function,
    gradient,
    random_field,
    zeros,
)


@pytest.fixture(scope="module")
def grid():
    return TorusGrid(2, 64)


def _rel(a, b):
    return (a - b).l2_norm() / b.l2_norm()


class TestHeat:
    def test_identity(self, grid):
        f = random_field(grid, np.random.default_rng(0), kmax=10)
        assert np.array_equal(heat_step(f, 0.0).coeffs, f.coeffs)

    def test_single_mode(self, grid):
        f = from_function(grid, lambda x, y: np.cos(2 * x))
        assert _rel(heat_step(f, 0.25), math.exp(-1.0) * f) <= 1e-14

    def test_negative(self, grid):
        with pytest.raises(ValueError):
            heat_step(zeros(grid), -1.0)

    def test_band_decay_p2(self):
        rep = heat_band_decay_check(samples_per_band=3)
        assert rep.passed
        assert rep.details["c"] >= 0.5 and rep.fitted_C <= 1.01

    def test_band_decay_pinf(self):
        rep = heat_band_decay_check(p=math.inf, samples_per_band=3, n=64)
        assert rep.passed and math.isfinite(rep.fitted_C)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), a=st.floats(0, 0.5), b=st.floats(0, 0.5))
def test_heat_semigroup(seed, a, b):
    g = TorusGrid(2, 32)
    f = random_field(g, np.random.default_rng(seed), kmax=10)
    two = heat_step(heat_step(f, a), b)
    one = heat_step(f, a + b)
    assert (two - one).l2_norm() <= 1e-14 * f.l2_norm()


class TestStokes:
    def test_free_decay(self, grid):
        u0 = random_field(grid, np.random.default_rng(1), 2, kmax=8, solenoidal=True)
        traj = stokes_solve(u0, None, 0.3, 1.0, 0.1)
        assert _rel(traj.final, heat_step(u0, 0.3)) <= 1e-13

    def test_gradient_force(self, grid):
        u0 = random_field(grid, np.random.default_rng(2), 2, kmax=8, solenoidal=True)
        f = gradient(random_field(grid, np.random.default_rng(3), kmax=8))
        traj = stokes_solve(u0, f, 0.5, 1.0, 0.1)
        assert _rel(traj.final, heat_step(u0, 0.5)) <= 1e-13
        assert (traj.extras["pressure_grad"][-1] - f).l2_norm() <= 1e-13 * f.l2_norm()

    def test_single_mode_relaxation(self, grid):
        # steady divergence-free force at |k|^2 = 5: u = (1 - e^{-nu t 5}) / (5 nu) f
        f = from_function(grid, lambda x, y: [np.cos(x + 2 * y), -0.5 * np.cos(x + 2 * y)])
        nu, T = 0.7, 1.3
        traj = stokes_solve(zeros(grid, 2), f, nu, T, 0.13)
        exact = (1 - math.exp(-nu * T * 5)) / (5 * nu) * f
        assert _rel(traj.final, exact) <= 1e-8

    def test_linear_in_time_force(self, grid):
        # f(t) = t F for a mode with nu |k|^2 = a: u(t) = (t/a - (1 - e^{-a t})/a^2) F
        F = from_function(grid, lambda x, y: [np.sin(3 * y), 0 * y])
        nu, T, dt = 0.2, 1.0, 0.25
        traj = stokes_solve(zeros(grid, 2), lambda t: t * F, nu, T, dt)
        a = nu * 9
        exact = (T / a - (1 - math.exp(-a * T)) / a**2) * F
        assert _rel(traj.final, exact) <= 1e-12

    def test_divergence_free_output(self, grid):
        rng = np.random.default_rng(4)
        u0 = random_field(grid, rng, 2, kmax=10, solenoidal=True)
        f = random_field(grid, rng, 2, kmax=10)
        traj = stokes_solve(u0, f, 1.0, 0.5, 0.05)
        assert max(divergence_residual(u) for u in traj.fields) <= 1e-12

    def test_rejects_compressible(self, grid):
        u0 = random_field(grid, np.random.default_rng(5), 2, kmax=6)
        with pytest.raises(PreconditionError):
            stokes_solve(u0, None, 1.0, 1.0, 0.1)

    def test_force_sequence_length(self, grid):
        with pytest.raises(ValueError):
            stokes_solve(zeros(grid, 2), [zeros(grid, 2)] * 3, 1.0, 1.0, 0.1)

    def test_regularity_zero_data(self, grid):
        rep = stokes_regularity_check(zeros(grid, 2), None, 1.0, 1.0, nsteps=10)
        assert rep.lhs == [0.0, 0.0, 0.0] and rep.fitted_C == 0.0

    def test_regularity_single_band_near_one(self, grid):
        # f = 0 and u0 in one band: for rho = inf the tilde norm is the initial norm
        u0 = from_function(grid, lambda x, y: [np.cos(12 * y), 0 * y])
        rep = stokes_regularity_check(u0, None, 1.0, 1.0, rho_list=(math.inf,), nsteps=20)
        assert rep.fitted_C == pytest.approx(1.0, rel=1e-12)

    def test_regularity_nu_independent(self):
        rep = stokes_regularity_sweep(samples=2, n=32, nsteps=100)
        assert rep.passed, rep.details


class TestTransport:
    def test_zero_velocity(self, grid):
        th = random_field(grid, np.random.default_rng(6), kmax=10)
        out = transport_step(th, zeros(grid, 2), None, 0.01)
        assert np.array_equal(out.coeffs, th.coeffs)

    def test_translation(self, grid):
        c = (0.5, -0.25)
        u = from_function(grid, lambda x, y: [c[0] + 0 * x, c[1] + 0 * y])
        th0 = from_function(grid, lambda x, y: np.cos(x + 2 * y) + np.sin(3 * x))
        traj = transport_solve(th0, u, 1.0, 0.01)
        exact = from_function(grid, lambda x, y: np.cos((x - c[0]) + 2 * (y - c[1])) + np.sin(3 * (x - c[0])))
        assert _rel(traj.final, exact) <= 1e-8

    def test_solid_body_l2(self, grid):
        u = from_function(grid, lambda x, y: [-np.sin(y), np.sin(x)])
        th = random_field(grid, np.random.default_rng(7), kmax=6, slope=1.0)
        traj = transport_solve(th, u, 1.0, 0.01, save_every=10)
        rep = transport_lp_conservation_check(traj, (2.0,), {2.0: 1e-6})
        assert rep.passed

    def test_mean_exact(self, grid):
        u = shear_flow(grid)
        th = random_field(grid, np.random.default_rng(8), kmax=6, mean_zero=False)
        out = transport_solve(th, u, 0.5, 0.01).final
        assert out.mean() == th.mean()

    def test_rejects_compressible(self, grid):
        u = from_function(grid, lambda x, y: [np.sin(x), 0 * y])
        with pytest.raises(PreconditionError):
            transport_step(zeros(grid), u, None, 0.01)

    def test_cfl(self, grid):
        with pytest.raises(StepSizeError) as exc:
            transport_step(zeros(grid), shear_flow(grid, 10.0), None, 0.1)
        assert 0 < exc.value.suggested_dt < 0.1

    def test_unknown_method(self, grid):
        with pytest.raises(ValueError):
            transport_step(zeros(grid), zeros(grid, 2), None, 0.1, method="euler")

    def test_l2_drift_order(self, grid):
        u = shear_flow(grid)
        th = from_function(grid, lambda x, y: np.cos(x) + 0.5 * np.sin(2 * x + y))
        drifts = []
        for dt in (0.04, 0.02):
            tr = transport_solve(th, u, 2.0, dt, save_every=int(round(2.0 / dt)))
            drifts.append(transport_lp_conservation_check(tr, (2.0,), weak=False).details["2.0"]["drift"])
        assert math.log2(drifts[0] / drifts[1]) >= 3.5

    def test_semi_lagrangian_max_principle(self, grid):
        u = shear_flow(grid)
        th = random_field(grid, np.random.default_rng(9), kmax=5, slope=1.0)
        traj = transport_solve(th, u, 1.0, 0.01, method="semi_lagrangian", save_every=20)
        rep = transport_lp_conservation_check(traj, (math.inf,), {math.inf: 1e-3})
        assert rep.passed

    def test_conservation_zero_velocity(self, grid):
        th = random_field(grid, np.random.default_rng(10), kmax=6)
        traj = transport_solve(th, zeros(grid, 2), 0.1, 0.05)
        rep = transport_lp_conservation_check(traj, (1.0, 2.0, math.inf))
        assert all(d["drift"] == 0.0 for d in rep.details.values())

    def test_vishik_contrast(self):
        g = TorusGrid(2, 128)
        u = shear_flow(g)
        th0 = from_function(g, lambda x, y: np.cos(x))
        traj = transport_solve(th0, u, 20.0, 0.02, save_every=25)
        rep = transport_besov_growth_check(traj, u)
        assert rep.passed, rep.details
        assert rep.details["slope_s0_ratio"] < 0 < rep.details["slope_s1_norm"]

    def test_vishik_no_motion(self, grid):
        th = random_field(grid, np.random.default_rng(11), kmax=6)
        traj = transport_solve(th, zeros(grid, 2), 1.0, 0.1)
        rep = transport_besov_growth_check(traj, zeros(grid, 2), window=(0.2, 1.0), require_growth=False)
        assert np.allclose(rep.lhs, 1.0, rtol=1e-14)


class TestTrajectory:
    def test_nonuniform(self, grid):
        with pytest.raises(ValueError):
            TrajectoryRecord(np.array([0.0, 0.1, 0.3]), [zeros(grid)] * 3, 0.1, 0.3)

    def test_start(self, grid):
        with pytest.raises(ValueError):
            TrajectoryRecord(np.array([0.1]), [zeros(grid)], 0.1, 0.1)


class TestLosing:
    def test_zero_velocity(self, grid):
        rho0 = random_field(grid, np.random.default_rng(12), kmax=20)
        traj = transport_solve(rho0, zeros(grid, 2), 0.5, 0.05, kappa=0.1)
        rep = losing_estimate_check(traj, zeros(grid, 2), nu=0.0)
        assert max(rep.details["eps_T"]) == 0.0
        assert rep.fitted_C == pytest.approx(1.0, rel=1e-12)

    def test_shear_stable_under_refinement(self, grid):
        u = shear_flow(grid, 0.1)
        rho0 = random_field(grid, np.random.default_rng(13), kmax=20)
        cs = []
        for dt in (0.02, 0.01):
            traj = transport_solve(rho0, u, 1.0, dt, save_every=int(round(0.1 / dt)))
            rep = losing_estimate_check(traj, u)
            assert rep.passed and rep.details["slope_violation"] <= 0
            cs.append(rep.fitted_C)
        assert abs(cs[1] / cs[0] - 1) <= 0.25

    def test_smallness_error(self, grid):
        u = shear_flow(grid, 1.0)
        with pytest.raises(SmallnessError, match="smaller T"):
            losing_weights([u] * 11, np.linspace(0, 1, 11), c_small=0.5)

    def test_inadmissible_s(self, grid):
        with pytest.raises(ValueError):
            losing_weights([zeros(grid, 2)] * 2, [0, 1], s=-2.5)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), s=st.sampled_from([-1.5, -0.5, 0.5]))
def test_losing_weights_invariants(seed, s):
    g = TorusGrid(2, 32)
    rng = np.random.default_rng(seed)
    us = [random_field(g, rng, 2, kmax=8, slope=1.0, solenoidal=True) * 0.1 for _ in range(5)]
    lw = losing_weights(us, np.linspace(0, 0.4, 5), s)
    assert lw.monotone()
    assert lw.eps[0, 0] == 0.0
    assert lw.slope_violation() <= 1e-12


class TestLorentzDuhamel:
    def test_zero(self):
        g = TorusGrid(3, 16)
        rep = lorentz_duhamel_check(zeros(g), 1.0, "buoyancy", t=1.0)
        assert rep.lhs == [0.0]

    def test_dimension(self, grid):
        with pytest.raises(ValueError):
            lorentz_duhamel_check(zeros(grid), 1.0, "buoyancy", t=1.0)

    def test_single_mode_saturation(self):
        # theta = cos x1: P(theta e3) = theta e3, response (1 - e^{-nu t}) cos(x1) e3
        g = TorusGrid(3, 16)
        th = from_function(g, lambda x, y, z: np.cos(x))
        e3 = from_function(g, lambda x, y, z: [0 * x, 0 * x, np.cos(x)])
        for t in (1.0, 5.0, 20.0):
            rep = lorentz_duhamel_check(th, 0.5, "buoyancy", t=t)
            assert rep.lhs[0] == pytest.approx((1 - math.exp(-0.5 * t)) * weak_lp_quasinorm(e3, 3), rel=1e-10)

    def test_sweeps_flat(self):
        for variant in ("buoyancy", "convection"):
            rep = lorentz_duhamel_sweep(variant, n=16)
            assert rep.passed, rep.details
