"""Scenario files (TOML) and the tolerance defaults table.

Grammar (every table optional unless noted)::

    name = "taylor_green"          # required
    seed = 0
    output = "runs/taylor_green"   # default: runs/<name>
    diagnostics = ["energy", "blowup"]   # energy | blowup | smallness | theta_lp

    [grid]      dim = 2, n = 128                       # required; n a power of two >= 16
    [time]      T = 1.0, dt = 1e-3, save_every = 100   # required T and dt
    [physics]   nu = 0.01, kappa = 0.0, p = 2.0        # p: exponent for the theta L^p ledger
    [scheme]    kind = "production"                    # production | friedrichs | picard
                friedrichs_n = 21, mollifier_r = 0.05
    [initial.theta] / [initial.u] / [sources.theta] / [sources.force]
                recipe = "zero" | "random" | "mode" | "bump" | "taylor_green" | "shear"
                amplitude = 1.0, kmax = 8, slope = 1.0, seed_offset = 0,
                wavevector = [2, 1], width = 0.3
    [tolerances]  any key of DEFAULT_TOLERANCES
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError
from .spectral import SpectralField, TorusGrid, from_function, leray_project, random_field, zeros

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


DEFAULT_TOLERANCES = {
    # harmonic
    "partition_residual": 1e-12,
    "reconstruction_residual": 1e-12,
    "bony_residual": 1e-11,
    "bernstein_spread": 0.2,
    "product_law_spread": 0.2,
    # semigroup
    "heat_tolerance": 0.01,
    "stokes_mode_error": 1e-8,
    "stokes_nu_spread": 0.3,
    # transport
    "transport_l2_drift": 1e-6,
    "transport_linf_growth": 1e-3,
    "vishik_flat_slope": 0.05,
    "vishik_growth_slope": 0.5,
    "losing_dt_spread": 0.25,
    "losing_smallness": 0.5,
    # boussinesq
    "taylor_green_error": 1e-8,
    "energy_residual": 1e-6,
    "energy_order": 3.5,
    "envelope_C_max": 10.0,
    "projector_residual": 1e-12,
    "picard_ratio": 0.6,
    "uniqueness_spread": 0.2,
    "smoothing_spread": 0.1,
    # small data 3D
    "smallness_spread": 0.2,
    "smallness_threshold": 0.1,
    "duhamel_spread": 0.2,
    # diffusivity robustness
    "kappa_spread": 0.3,
}

TOLERANCE_DOCS = {
    "partition_residual": "max |chi + sum phi_q - 1| over lattice modes",
    "reconstruction_residual": "relative L2 error of sum_q Delta_q f",
    "bony_residual": "relative L2 error of T_f g + T_g f + R(f, g)",
    "bernstein_spread": "relative spread of the Bernstein constant across grids",
    "product_law_spread": "relative spread of product-law constants across grids",
    "heat_tolerance": "p=2 heat decay: C <= 1 + tol and c >= (3/4)^2 (1 - tol)",
    "stokes_mode_error": "relative error of the steady single-mode Stokes relaxation",
    "stokes_nu_spread": "relative spread of the Stokes smoothing constant over nu",
    "transport_l2_drift": "relative L2 drift, spectral transport",
    "transport_linf_growth": "max-norm growth, semi-Lagrangian transport",
    "vishik_flat_slope": "upper bound on the log-log slope of the s=0 ratio",
    "vishik_growth_slope": "lower bound on the log-log slope of the s=1 norm",
    "losing_dt_spread": "relative change of the losing-estimate constant under dt halving",
    "losing_smallness": "smallness constant c for the velocity in the losing estimate",
    "taylor_green_error": "L2 error against the exact Taylor-Green decay",
    "energy_residual": "relative residual of the kinetic energy identity",
    "energy_order": "minimum observed order of the energy residual under dt halving",
    "envelope_C_max": "maximum fitted constant in the global energy bound",
    "projector_residual": "Friedrichs projector invariance residual",
    "picard_ratio": "maximum contraction ratio beyond the first iterate",
    "uniqueness_spread": "relative spread of dU(T)/eps over eps",
    "smoothing_spread": "relative spread of the L~1 H^2 norm across grids",
    "smallness_spread": "relative spread of the small-data constant over data scalings",
    "smallness_threshold": "informational threshold for (||u0|| + ||theta0||/nu)/nu",
    "duhamel_spread": "relative spread of the Lorentz-Duhamel constant over t and nu",
    "kappa_spread": "relative deviation of constants at kappa > 0 from kappa = 0",
}


def resolve_tolerances(overrides=None) -> dict:
    tol = dict(DEFAULT_TOLERANCES)
    for key, val in (overrides or {}).items():
        if key not in tol:
            raise ConfigurationError(f"key 'tolerances.{key}': unknown tolerance (known: {', '.join(sorted(tol))})")
        if not isinstance(val, (int, float)) or isinstance(val, bool) or not math.isfinite(val) or val < 0:
            raise ConfigurationError(f"key 'tolerances.{key}': expected a nonnegative number, got {val!r}")
        tol[key] = float(val)
    return tol


RECIPES = ("zero", "random", "mode", "bump", "taylor_green", "shear")
SCHEMES = ("production", "friedrichs", "picard")
DIAGNOSTICS = ("energy", "blowup", "smallness", "theta_lp")


@dataclass
class Scenario:
    name: str
    grid: TorusGrid
    T: float
    dt: float
    save_every: int
    nu: float
    kappa: float
    p: float
    scheme: str
    friedrichs_n: int | None
    mollifier_r: float | None
    initial: dict
    sources: dict
    diagnostics: list
    seed: int
    output: Path
    tolerances: dict
    raw: dict = field(default_factory=dict)


def _get(table, key, kind, where, default=None, required=False):
    if key not in table:
        if required:
            raise ConfigurationError(f"key '{where}{key}': missing")
        return default
    val = table[key]
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, kind) or isinstance(val, bool) and kind is not bool:
        raise ConfigurationError(f"key '{where}{key}': expected {kind.__name__}, got {type(val).__name__}")
    return val


def _recipe(table, where):
    recipe = _get(table, "recipe", str, where, "zero")
    if recipe not in RECIPES:
        raise ConfigurationError(f"key '{where}recipe': unknown recipe {recipe!r} (known: {', '.join(RECIPES)})")
    out = {"recipe": recipe}
    out["amplitude"] = _get(table, "amplitude", float, where, 1.0)
    out["kmax"] = _get(table, "kmax", int, where, 8)
    out["slope"] = _get(table, "slope", float, where, 1.0)
    out["seed_offset"] = _get(table, "seed_offset", int, where, 0)
    out["width"] = _get(table, "width", float, where, 0.3)
    wv = table.get("wavevector")
    if wv is not None and (not isinstance(wv, list) or not all(isinstance(x, int) for x in wv)):
        raise ConfigurationError(f"key '{where}wavevector': expected a list of integers")
    out["wavevector"] = wv
    unknown = set(table) - {"recipe", "amplitude", "kmax", "slope", "seed_offset", "width", "wavevector"}
    if unknown:
        raise ConfigurationError(f"key '{where}{sorted(unknown)[0]}': unknown key")
    return out


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{source}: {exc}") from exc
    known = {"name", "seed", "output", "diagnostics", "grid", "time", "physics", "scheme", "initial", "sources", "tolerances"}
    for key in raw:
        if key not in known:
            raise ConfigurationError(f"key '{key}': unknown top-level key")
    name = _get(raw, "name", str, "", required=True)
    seed = _get(raw, "seed", int, "", 0)
    gt = _get(raw, "grid", dict, "", required=True)
    dim = _get(gt, "dim", int, "grid.", 2)
    n = _get(gt, "n", int, "grid.", required=True)
    try:
        grid = TorusGrid(dim, n)
    except (ValueError, ConfigurationError) as exc:
        raise ConfigurationError(f"key 'grid.n': {exc}") from exc
    tt = _get(raw, "time", dict, "", required=True)
    T = _get(tt, "T", float, "time.", required=True)
    dt = _get(tt, "dt", float, "time.", required=True)
    if not (T > 0 and dt > 0):
        raise ConfigurationError("key 'time.T'/'time.dt': must be positive")
    nsteps = round(T / dt)
    if abs(nsteps * dt - T) > 1e-9 * T:
        raise ConfigurationError("key 'time.dt': T must be a whole number of steps")
    save_every = _get(tt, "save_every", int, "time.", max(1, nsteps // 10))
    if save_every < 1 or nsteps % save_every:
        raise ConfigurationError("key 'time.save_every': must divide the number of steps")
    pt = _get(raw, "physics", dict, "", {})
    nu = _get(pt, "nu", float, "physics.", 1.0)
    kappa = _get(pt, "kappa", float, "physics.", 0.0)
    p = _get(pt, "p", float, "physics.", 2.0)
    if nu <= 0 or kappa < 0 or p < 1:
        raise ConfigurationError("key 'physics': need nu > 0, kappa >= 0, p >= 1")
    st = _get(raw, "scheme", dict, "", {})
    scheme = _get(st, "kind", str, "scheme.", "production")
    if scheme not in SCHEMES:
        raise ConfigurationError(f"key 'scheme.kind': unknown scheme {scheme!r} (known: {', '.join(SCHEMES)})")
    fn = _get(st, "friedrichs_n", int, "scheme.", grid.n // 3)
    fr = _get(st, "mollifier_r", float, "scheme.", 0.05)
    if scheme == "friedrichs" and not 1 <= fn <= grid.n // 3:
        raise ConfigurationError(f"key 'scheme.friedrichs_n': must lie in 1..{grid.n // 3}")
    it = _get(raw, "initial", dict, "", {})
    initial = {k: _recipe(_get(it, k, dict, "initial.", {}), f"initial.{k}.") for k in ("theta", "u")}
    srcs = _get(raw, "sources", dict, "", {})
    sources = {k: _recipe(srcs[k], f"sources.{k}.") for k in ("theta", "force") if k in srcs}
    diags = _get(raw, "diagnostics", list, "", ["energy", "blowup"])
    for d in diags:
        if d not in DIAGNOSTICS:
            raise ConfigurationError(f"key 'diagnostics': unknown diagnostic {d!r} (known: {', '.join(DIAGNOSTICS)})")
    if "smallness" in diags and dim != 3:
        raise ConfigurationError("key 'diagnostics': smallness needs grid.dim = 3")
    output = Path(_get(raw, "output", str, "", f"runs/{name}"))
    return Scenario(
        name=name, grid=grid, T=T, dt=dt, save_every=save_every, nu=nu, kappa=kappa, p=p,
        scheme=scheme, friedrichs_n=fn, mollifier_r=fr, initial=initial, sources=sources,
        diagnostics=list(diags), seed=seed, output=output,
        tolerances=resolve_tolerances(_get(raw, "tolerances", dict, "", {})), raw=raw,
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return parse_scenario(text, str(path))


def build_field(grid: TorusGrid, spec: dict, kind: str, seed: int) -> SpectralField:
    """Realise a recipe as a scalar ('theta') or vector ('u', 'force') field."""
    comps = 1 if kind == "theta" else grid.dim
    recipe, amp = spec["recipe"], spec["amplitude"]
    if recipe == "zero":
        return zeros(grid, comps)
    if recipe == "random":
        rng = np.random.default_rng([seed, spec["seed_offset"], 0 if kind == "theta" else 1])
        f = random_field(grid, rng, comps, kmax=spec["kmax"], slope=spec["slope"], solenoidal=kind == "u")
        peak = float(np.max(np.abs(f.samples())))
        return f * (amp / peak) if peak > 0 else f
    if recipe == "mode":
        k = spec["wavevector"] or [1] + [0] * (grid.dim - 1)
        if len(k) != grid.dim:
            raise ConfigurationError(f"wavevector {k} does not match grid dimension {grid.dim}")

        def phase(*x):
            return sum(ki * xi for ki, xi in zip(k, x))

        if comps == 1:
            return from_function(grid, lambda *x: amp * np.cos(phase(*x)))
        vec = from_function(grid, lambda *x: [amp * np.cos(phase(*x)) * (i == grid.dim - 1) for i in range(grid.dim)])
        return leray_project(vec) if kind == "u" else vec
    if recipe == "bump":
        from .evolution import gaussian_bump

        if comps != 1:
            raise ConfigurationError("recipe 'bump' is scalar only")
        return gaussian_bump(grid, spec["width"]) * amp
    if recipe == "taylor_green":
        from .boussinesq import taylor_green

        if comps == 1:
            raise ConfigurationError("recipe 'taylor_green' is a velocity recipe")
        return taylor_green(grid, amp)
    if recipe == "shear":
        from .evolution import shear_flow

        if comps == 1:
            raise ConfigurationError("recipe 'shear' is a velocity recipe")
        return shear_flow(grid, amp)
    raise ConfigurationError(f"unknown recipe {recipe!r}")
