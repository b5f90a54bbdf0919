"""Verification suites: a registry of seeded checks grouped into five suites."""

from __future__ import annotations

import json
import math
import os
import time
import traceback
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import boussinesq as bq
from . import evolution as ev
from . import littlewood_paley as lp
from . import paraproduct as pp
from .config import resolve_tolerances
from .exceptions import ConfigurationError
from .reports import EstimateReport, relative_spread
from .spectral import TorusGrid, from_function, random_field, transform_forward, zeros

KAPPAS = (0.01, 0.1)
PARTITION_ENV = "BQLAB_PARTITION_PERTURBATION"


@dataclass
class Context:
    seed: int
    tol: dict
    partition: lp.DyadicPartition
    cache: dict = field(default_factory=dict)

    def memo(self, key, fn):
        if key not in self.cache:
            self.cache[key] = fn()
        return self.cache[key]


@dataclass(frozen=True)
class CheckSpec:
    check_id: str
    suite: str
    run: Callable[[Context], EstimateReport]
    checkers: tuple
    mandatory: bool = True
    description: str = ""


@dataclass
class SuiteResult:
    suite: str
    seed: int
    entries: list  # (check_id, mandatory, EstimateReport, seconds)
    runtime: float

    @property
    def passed(self) -> bool:
        return all(rep.passed for _, mandatory, rep, _ in self.entries if mandatory)

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "seed": self.seed,
            "pass": self.passed,
            "runtime_s": self.runtime,
            "checks": [
                {"check_id": cid, "mandatory": m, "seconds": sec, "report": rep.to_dict()}
                for cid, m, rep, sec in self.entries
            ],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def summary_lines(self):
        for cid, m, rep, sec in self.entries:
            tag = "PASS" if rep.passed else "FAIL"
            opt = "" if m else " (informational)"
            yield f"{tag} {cid}{opt}: C={rep.fitted_C:.4g} [{sec:.1f}s]"


def _report(check_id, passed, lhs=(), rhs=(), C=math.nan, **details):
    lhs, rhs = list(lhs), list(rhs)
    return EstimateReport(check_id, lhs, rhs, C, len(lhs), bool(passed), details)


def _data2d(grid, seed, amp_theta=1.0, amp_u=1.0, kmax=8):
    rng = np.random.default_rng([seed, 2])
    th = random_field(grid, rng, kmax=kmax, slope=1.0)
    u = random_field(grid, rng, 2, kmax=kmax, slope=1.0, solenoidal=True)
    return th * (amp_theta / np.abs(th.samples()).max()), u * (amp_u / np.abs(u.samples()).max())


def _white(grid, seed, k):
    return transform_forward(np.random.default_rng([seed, k]).standard_normal(grid.shape), grid)


# ---------------------------------------------------------------- harmonic


def _partition(ctx):
    g = TorusGrid(2, 256)
    r = max(lp.partition_residual(g, ctx.partition), lp.partition_residual(g, ctx.partition, homogeneous=True))
    return _report("partition_of_unity", r <= ctx.tol["partition_residual"], [r], [ctx.tol["partition_residual"]], r,
                   residual=r, tolerance=ctx.tol["partition_residual"])


def _reconstruction(ctx):
    g = TorusGrid(2, 256)
    r = lp.reconstruction_residual(_white(g, ctx.seed, 0), ctx.partition)
    return _report("lp_reconstruction", r <= ctx.tol["reconstruction_residual"], [r], [1.0], r, residual=r)


def _orthogonality(ctx):
    g = TorusGrid(2, 256)
    r = lp.almost_orthogonality_residual(_white(g, ctx.seed, 1), ctx.partition)
    return _report("almost_orthogonality", r == 0.0, [r], [0.0], r, residual=r, rule="exact zero")


def _bony(ctx):
    g = TorusGrid(2, 256)
    f, h = _white(g, ctx.seed, 2), _white(g, ctx.seed, 3)
    r = pp.bony_residual(f, h, ctx.partition)
    loc = pp.localization_residual(f, h, ctx.partition)
    return _report("bony_reconstruction", r <= ctx.tol["bony_residual"], [r], [1.0], r, residual=r,
                   localization_residual=loc)


def _bernstein(ctx):
    return lp.bernstein_check(2, math.inf, grids=(64, 128, 256), seed=ctx.seed,
                              tolerance=ctx.tol["bernstein_spread"], partition=ctx.partition)


def _lorentz(ctx):
    return lp.lorentz_embedding_check(4 / 3, 2, n=256, seed=ctx.seed, partition=ctx.partition)


def _law(law_id):
    def run(ctx):
        return pp.product_law_check(law_id, seed=ctx.seed, tolerance=ctx.tol["product_law_spread"],
                                    partition=ctx.partition)

    return run


# ---------------------------------------------------------------- semigroup


def _heat(p):
    def run(ctx):
        return ev.heat_band_decay_check(p=p, seed=ctx.seed, tolerance=ctx.tol["heat_tolerance"], partition=ctx.partition)

    return run


def _stokes_mode(ctx):
    g = TorusGrid(2, 128)
    errs = {}
    f = from_function(g, lambda x, y: [np.cos(x + 2 * y), -0.5 * np.cos(x + 2 * y)])
    for nu in (0.1, 1.0, 10.0):
        T = 1.0
        traj = ev.stokes_solve(zeros(g, 2), f, nu, T, 0.01)
        exact = (1 - math.exp(-nu * T * 5)) / (5 * nu) * f
        errs[f"steady_mode(nu={nu})"] = (traj.final - exact).l2_norm() / exact.l2_norm()
    u0 = random_field(g, np.random.default_rng([ctx.seed, 5]), 2, kmax=10, solenoidal=True)
    traj = ev.stokes_solve(u0, None, 0.5, 1.0, 0.01)
    errs["free_decay"] = (traj.final - ev.heat_step(u0, 0.5)).l2_norm() / u0.l2_norm()
    worst = max(errs.values())
    return _report("stokes_closed_form", worst <= ctx.tol["stokes_mode_error"], list(errs.values()),
                   [ctx.tol["stokes_mode_error"]] * len(errs), worst, errors=errs)


def _stokes_nu(ctx):
    return ev.stokes_regularity_sweep(seed=ctx.seed, tolerance=ctx.tol["stokes_nu_spread"])


# ---------------------------------------------------------------- transport


def _shear_theta(g, seed):
    return random_field(g, np.random.default_rng([seed, 11]), kmax=8, slope=1.0)


def _transport_l2(ctx):
    g = TorusGrid(2, 128)
    traj = ev.transport_solve(_shear_theta(g, ctx.seed), ev.shear_flow(g), 1.0, 1e-3, save_every=50)
    tol = ctx.tol["transport_l2_drift"]
    return ev.transport_lp_conservation_check(traj, (2.0,), {2.0: tol})


def _transport_order(ctx):
    g = TorusGrid(2, 128)
    th = from_function(g, lambda x, y: np.cos(x) + 0.5 * np.sin(2 * x + y))
    drifts = []
    for dt in (0.02, 0.01):
        traj = ev.transport_solve(th, ev.shear_flow(g), 2.0, dt, save_every=int(round(2.0 / dt)))
        drifts.append(ev.transport_lp_conservation_check(traj, (2.0,), weak=False).details["2.0"]["drift"])
    order = math.log2(drifts[0] / drifts[1]) if drifts[1] > 0 else math.inf
    return _report("transport_l2_order", order >= ctx.tol["energy_order"], drifts, [0.02, 0.01], order,
                   observed_order=order, minimum=ctx.tol["energy_order"])


def _transport_linf(ctx):
    g = TorusGrid(2, 128)
    traj = ev.transport_solve(_shear_theta(g, ctx.seed), ev.shear_flow(g), 1.0, 1e-3, method="semi_lagrangian",
                              save_every=50)
    return ev.transport_lp_conservation_check(traj, (math.inf,), {math.inf: ctx.tol["transport_linf_growth"]})


def _vishik_run(kappa):
    g = TorusGrid(2, 128)
    u = ev.shear_flow(g)
    th0 = from_function(g, lambda x, y: np.cos(x))
    return ev.transport_solve(th0, u, 20.0, 0.02, kappa=kappa, save_every=25), u


def _vishik(ctx, kappa=0.0):
    traj, u = ctx.memo(("vishik_traj", kappa), lambda: _vishik_run(kappa))
    return ev.transport_besov_growth_check(traj, u, flat_slope=ctx.tol["vishik_flat_slope"],
                                           growth_slope=ctx.tol["vishik_growth_slope"],
                                           require_growth=kappa == 0.0, partition=ctx.partition)


def _losing(ctx, kappa=0.0):
    g = TorusGrid(2, 64)
    u = ev.shear_flow(g, 0.1)
    rho0 = random_field(g, np.random.default_rng([ctx.seed, 13]), kmax=20)
    reps = []
    for dt in (0.02, 0.01):
        traj = ev.transport_solve(rho0, u, 1.0, dt, kappa=kappa, save_every=int(round(0.1 / dt)))
        reps.append(ev.losing_estimate_check(traj, u, nu=kappa, c_small=ctx.tol["losing_smallness"],
                                             partition=ctx.partition))
    cs = [r.fitted_C for r in reps]
    spread = relative_spread(cs)
    ok = all(r.passed for r in reps) and spread <= ctx.tol["losing_dt_spread"]
    return _report("losing_estimate", ok, [r.lhs[0] for r in reps], [r.rhs[0] for r in reps], cs[-1],
                   dt_constants=cs, spread=spread, slope_violation=max(r.details["slope_violation"] for r in reps),
                   C_weight=reps[-1].details["C_weight"], kappa=kappa)


def _transport_balance(ctx, kappa):
    g = TorusGrid(2, 128)
    traj = ev.transport_solve(_shear_theta(g, ctx.seed), ev.shear_flow(g), 1.0, 1e-3, kappa=kappa, save_every=10)
    return ev.transport_diffusion_balance_check(traj, kappa, ctx.tol["transport_l2_drift"])


def _kappa_compare(check_id, ctx, base, variant, names):
    """Combine sub-reports at kappa > 0 and compare their constants with kappa = 0."""
    devs = {}
    for name in names:
        c0, c1 = base[name].fitted_C, variant[name].fitted_C
        devs[name] = abs(c1 / c0 - 1) if c0 > 0 else (0.0 if c1 == 0 else math.inf)
    sub_ok = {k: r.passed for k, r in variant.items()}
    ok = all(sub_ok.values()) and max(devs.values()) <= ctx.tol["kappa_spread"]
    return _report(check_id, ok, [variant[n].fitted_C for n in names], [base[n].fitted_C for n in names],
                   max(devs.values()), deviations=devs, sub_checks=sub_ok,
                   sub_details={k: r.details for k, r in variant.items()})


def _transport_kappa(kappa):
    def run(ctx):
        base = {
            "l2": ctx.memo(("t_l2", 0.0), lambda: _transport_l2(ctx)),
            "vishik": ctx.memo(("vishik", 0.0), lambda: _vishik(ctx)),
            "losing": ctx.memo(("losing", 0.0), lambda: _losing(ctx)),
        }
        variant = {
            "l2": _transport_balance(ctx, kappa),
            "vishik": _vishik(ctx, kappa),
            "losing": _losing(ctx, kappa),
        }
        return _kappa_compare(f"transport_kappa={kappa}", ctx, base, variant, ("l2", "vishik", "losing"))

    return run


# ---------------------------------------------------------------- boussinesq


def _taylor_green(ctx):
    g = TorusGrid(2, 128)
    nu = 0.01
    u0 = bq.taylor_green(g)
    traj = bq.boussinesq_solve(bq.make_state(zeros(g), u0, bq.PhysicsParams(nu)), 1.0, 1e-3, save_every=1000,
                               track_gradient=False)
    err = (traj.final.u - math.exp(-2 * nu) * u0).l2_norm()
    return _report("taylor_green", err <= ctx.tol["taylor_green_error"], [err], [ctx.tol["taylor_green_error"]], err,
                   error=err)


def _generic_params(kappa):
    return bq.PhysicsParams(nu=0.05, kappa=kappa)


def _energy_identity(ctx, kappa=0.0):
    g = TorusGrid(2, 128)
    th, u = _data2d(g, ctx.seed)
    p = _generic_params(kappa)
    traj = bq.boussinesq_solve(bq.make_state(th, u, p), 5.0, 1e-3, save_every=1000, track_gradient=False)
    _, rep = bq.energy_report(traj)
    res = rep.details["identity_residual"]
    coarse = []
    for dt in (0.02, 0.01):
        tr = bq.boussinesq_solve(bq.make_state(th, u, p), 1.0, dt, save_every=int(round(1 / dt)), track_gradient=False)
        coarse.append(bq.energy_report(tr)[1].details["identity_residual"])
    order = math.log2(coarse[0] / coarse[1]) if coarse[1] > 0 else math.inf
    ok = res <= ctx.tol["energy_residual"] and order >= ctx.tol["energy_order"]
    return _report("energy_identity", ok, [res], [ctx.tol["energy_residual"]], res, residual=res,
                   observed_order=order, coarse_residuals=coarse, theta_lp_drift=rep.details["theta_lp_drift"],
                   kappa=kappa)


def _envelope(ctx, kappa=0.0):
    g = TorusGrid(2, 128)
    th, u = _data2d(g, ctx.seed)
    traj = bq.boussinesq_solve(bq.make_state(th, u, _generic_params(kappa)), 10.0, 0.01, save_every=100,
                               track_gradient=False)
    _, rep = bq.energy_report(traj, 2.0, residual_tol=math.inf, C_max=ctx.tol["envelope_C_max"])
    return rep


def _friedrichs(ctx, kappa=0.0):
    g = TorusGrid(2, 128)
    th, u = _data2d(g, ctx.seed)
    p = _generic_params(kappa)
    ref = bq.boussinesq_solve(bq.make_state(th, u, p), 0.5, 0.005, save_every=100, track_gradient=False).final
    gaps, proj, drift = [], 0.0, 0.0
    for n, r in [(10, 0.2), (21, 0.1), (42, 0.02)]:
        traj = bq.friedrichs_solve(th, u, n, r, p, 0.5, 0.005, save_every=100, track_gradient=False)
        gaps.append((traj.final.u - ref.u).l2_norm())
        proj = max(proj, float(np.max(traj.diagnostics["projector_residual"])))
        l2 = traj.diagnostics["theta_l2"]
        if kappa == 0:
            drift = max(drift, float(np.max(np.abs(l2 / l2[0] - 1))))
        else:
            drift = max(drift, float(np.max(np.diff(l2) / l2[0])))
    mono = gaps[0] > gaps[1] > gaps[2]
    ok = proj <= ctx.tol["projector_residual"] and mono and drift <= 1e-8
    return _report("friedrichs", ok, gaps, [0.0] * 3, proj, projector_residual=proj, gaps=gaps,
                   theta_l2_drift=drift, kappa=kappa)


def _picard(ctx, kappa=0.0):
    g = TorusGrid(2, 128)
    th, u = _data2d(g, ctx.seed)
    th, u = th * (1e-2 / th.l2_norm()), u * (1e-2 / u.l2_norm())
    p = bq.PhysicsParams(nu=1.0, kappa=kappa)
    traj, led = bq.picard_solve(th, u, p, 0.5, 0.01, ratio_limit=ctx.tol["picard_ratio"])
    ratios = led.ratios()[1:]
    ref = bq.boussinesq_solve(bq.make_state(th, u, p), traj.T, 0.01, save_every=int(round(traj.T / 0.01)),
                              track_gradient=False).final
    gap = (ref.u - traj.final.u).l2_norm()
    worst = max(ratios) if ratios else 0.0
    ok = worst <= ctx.tol["picard_ratio"] and gap <= 1e-4 and led.residual <= 10 * 1e-10
    return _report("picard", ok, led.dU, led.U, worst, ratios=led.ratios(), gap_to_production=gap,
                   residual=led.residual, halvings=led.halvings, T=traj.T, kappa=kappa)


def _uniqueness(ctx, kappa=0.0):
    g = TorusGrid(2, 128)
    th, u = _data2d(g, ctx.seed)
    return bq.uniqueness_probe(th, u, [0.0, 1e-2, 1e-3, 1e-4], bq.PhysicsParams(0.1, kappa), 1.0, 0.005,
                               save_every=20, seed=ctx.seed, tolerance=ctx.tol["uniqueness_spread"])


def _smoothing(ctx):
    return bq.smoothing_grid_check(
        lambda g: _data2d(g, ctx.seed)[0],
        lambda g: _data2d(g, ctx.seed)[1],
        lambda g: bq.PhysicsParams(0.1),
        1.0, 0.005, grids=(128, 256), save_every=20, tolerance=ctx.tol["smoothing_spread"],
    )


def _blowup(ctx):
    g = TorusGrid(2, 64)
    th, u = _data2d(g, ctx.seed)
    traj = bq.boussinesq_solve(bq.make_state(th, u, bq.PhysicsParams(0.05)), 20.0, 0.01, save_every=200)
    mon = bq.blowup_monitor(traj)
    integ = mon["grad_integral"]
    ok = bool(np.all(np.isfinite(integ)) and np.all(np.isfinite(mon["theta_besov"])))
    return _report("continuation_norms", ok, [float(integ[-1])], [1.0], float(integ[-1]),
                   grad_integral_final=float(integ[-1]), theta_besov_max=float(np.max(mon["theta_besov"])))


def _bq_kappa(kappa):
    def run(ctx):
        base = {
            "energy": ctx.memo(("energy", 0.0), lambda: _energy_identity(ctx)),
            "envelope": ctx.memo(("envelope", 0.0), lambda: _envelope(ctx)),
            "uniqueness": ctx.memo(("uniqueness", 0.0), lambda: _uniqueness(ctx)),
        }
        variant = {
            "energy": _energy_identity(ctx, kappa),
            "envelope": _envelope(ctx, kappa),
            "uniqueness": _uniqueness(ctx, kappa),
            "friedrichs": _friedrichs(ctx, kappa),
            "picard": _picard(ctx, kappa),
        }
        return _kappa_compare(f"boussinesq_kappa={kappa}", ctx, base, variant, ("envelope", "uniqueness"))

    return run


# ---------------------------------------------------------------- small data 3D


def _smallness(ctx):
    g = TorusGrid(3, 64)
    rng = np.random.default_rng([ctx.seed, 17])
    u0 = random_field(g, rng, 3, kmax=4, slope=1.0, solenoidal=True)
    # small enough that the buoyancy-driven velocity, not u0, attains the sup over t
    u0 = u0 * (0.002 / np.abs(u0.samples()).max())
    th0 = ev.gaussian_bump(g, 0.3) * 0.2
    return bq.smallness_scaling_check(th0, u0, bq.PhysicsParams(1.0), 20.0, 0.1, save_every=10,
                                      tolerance=ctx.tol["smallness_spread"])


def _duhamel(variant):
    def run(ctx):
        return ev.lorentz_duhamel_sweep(variant, n=64, seed=ctx.seed, tolerance=ctx.tol["duhamel_spread"])

    return run


# ---------------------------------------------------------------- registry


def _registry():
    specs = [
        CheckSpec("harmonic.partition_of_unity", "harmonic", _partition, ("partition_residual",)),
        CheckSpec("harmonic.lp_reconstruction", "harmonic", _reconstruction, ("reconstruction_residual",)),
        CheckSpec("harmonic.almost_orthogonality", "harmonic", _orthogonality, ("almost_orthogonality_residual",)),
        CheckSpec("harmonic.bony_reconstruction", "harmonic", _bony, ("bony_residual", "localization_residual")),
        CheckSpec("harmonic.bernstein", "harmonic", _bernstein, ("bernstein_check",)),
        CheckSpec("harmonic.lorentz_embedding", "harmonic", _lorentz, ("lorentz_embedding_check",)),
    ]
    specs += [
        CheckSpec(f"harmonic.product_law.{law}", "harmonic", _law(law), ("product_law_check",))
        for law in sorted(pp.PRODUCT_LAWS)
    ]
    specs += [
        CheckSpec("semigroup.heat_decay_p2", "semigroup", _heat(2.0), ("heat_band_decay_check",)),
        CheckSpec("semigroup.heat_decay_pinf", "semigroup", _heat(math.inf), ("heat_band_decay_check",)),
        CheckSpec("semigroup.stokes_closed_form", "semigroup", _stokes_mode, ("stokes_solve",)),
        CheckSpec("semigroup.stokes_regularity", "semigroup", _stokes_nu,
                  ("stokes_regularity_check", "stokes_regularity_sweep")),
        CheckSpec("transport.l2_conservation", "transport", lambda c: c.memo(("t_l2", 0.0), lambda: _transport_l2(c)),
                  ("transport_lp_conservation_check",)),
        CheckSpec("transport.l2_order", "transport", _transport_order, ("transport_lp_conservation_check",)),
        CheckSpec("transport.linf_semi_lagrangian", "transport", _transport_linf, ("transport_lp_conservation_check",)),
        CheckSpec("transport.vishik", "transport", lambda c: c.memo(("vishik", 0.0), lambda: _vishik(c)),
                  ("transport_besov_growth_check",)),
        CheckSpec("transport.losing_estimate", "transport", lambda c: c.memo(("losing", 0.0), lambda: _losing(c)),
                  ("losing_estimate_check",)),
    ]
    specs += [
        CheckSpec(f"transport.kappa={k}", "transport", _transport_kappa(k),
                  ("transport_diffusion_balance_check", "transport_besov_growth_check", "losing_estimate_check"))
        for k in KAPPAS
    ]
    specs += [
        CheckSpec("boussinesq.taylor_green", "boussinesq", _taylor_green, ("boussinesq_solve",)),
        CheckSpec("boussinesq.energy_identity", "boussinesq",
                  lambda c: c.memo(("energy", 0.0), lambda: _energy_identity(c)), ("energy_report",)),
        CheckSpec("boussinesq.energy_envelope", "boussinesq", lambda c: c.memo(("envelope", 0.0), lambda: _envelope(c)),
                  ("energy_report",)),
        CheckSpec("boussinesq.friedrichs", "boussinesq", _friedrichs, ("friedrichs_solve",)),
        CheckSpec("boussinesq.picard", "boussinesq", _picard, ("picard_solve",)),
        CheckSpec("boussinesq.uniqueness", "boussinesq",
                  lambda c: c.memo(("uniqueness", 0.0), lambda: _uniqueness(c)), ("uniqueness_probe",)),
        CheckSpec("boussinesq.smoothing", "boussinesq", _smoothing, ("smoothing_grid_check",)),
        CheckSpec("boussinesq.continuation_norms", "boussinesq", _blowup, ("blowup_monitor",)),
    ]
    specs += [
        CheckSpec(f"boussinesq.kappa={k}", "boussinesq", _bq_kappa(k),
                  ("energy_report", "uniqueness_probe", "friedrichs_solve", "picard_solve"))
        for k in KAPPAS
    ]
    specs += [
        CheckSpec("smalldata3d.smallness", "smalldata3d", _smallness, ("smallness_monitor", "smallness_scaling_check")),
        CheckSpec("smalldata3d.duhamel_buoyancy", "smalldata3d", _duhamel("buoyancy"),
                  ("lorentz_duhamel_check", "lorentz_duhamel_sweep")),
        CheckSpec("smalldata3d.duhamel_convection", "smalldata3d", _duhamel("convection"),
                  ("lorentz_duhamel_check", "lorentz_duhamel_sweep")),
    ]
    return specs


REGISTRY = _registry()
SUITES = ("harmonic", "semigroup", "transport", "boussinesq", "smalldata3d")


def suite_checks(name: str) -> list:
    if name not in SUITES:
        raise ConfigurationError(f"unknown suite {name!r} (known: {', '.join(SUITES)})")
    return [c for c in REGISTRY if c.suite == name]


def default_partition() -> lp.DyadicPartition:
    """The frozen partition, or a perturbed one when the fault-injection variable is set."""
    raw = os.environ.get(PARTITION_ENV)
    if not raw:
        return lp.DEFAULT_PARTITION
    try:
        return lp.DyadicPartition(perturbation=float(raw))
    except ValueError as exc:
        raise ConfigurationError(f"{PARTITION_ENV}={raw!r}: {exc}") from exc


def run_suite(
    name: str,
    seed: int = 0,
    tolerances: dict | None = None,
    partition: lp.DyadicPartition | None = None,
    only=None,
    progress=None,
) -> SuiteResult:
    """Run the checks of a suite; ``only`` restricts to a set of check ids."""
    checks = suite_checks(name)
    if only is not None:
        only = set(only)
        unknown = only - {c.check_id for c in checks}
        if unknown:
            raise ConfigurationError(f"unknown check(s) {sorted(unknown)} in suite {name}")
        checks = [c for c in checks if c.check_id in only]
    ctx = Context(seed, resolve_tolerances(tolerances), partition or default_partition())
    start = time.perf_counter()
    entries = []
    for spec in checks:
        t0 = time.perf_counter()
        try:
            rep = spec.run(ctx)
        except ConfigurationError:
            raise
        except Exception as exc:  # a crashing check is a failing check
            rep = _report(spec.check_id, False, error=f"{type(exc).__name__}: {exc}",
                          traceback=traceback.format_exc(limit=3))
        sec = time.perf_counter() - t0
        entries.append((spec.check_id, spec.mandatory, rep, sec))
        if progress:
            progress(spec.check_id, rep, sec)
    return SuiteResult(name, seed, entries, time.perf_counter() - start)
