"""Dyadic partition of unity, frequency blocks and Besov/Lorentz norms on the torus.

The radial low-pass profile is

    chi(r) = g(1 - t) / (g(1 - t) + g(t)),   t = (r - 3/4) / (4/3 - 3/4),
    g(x) = exp(-1/x) for x > 0, else 0,

which equals 1 for r <= 3/4, 0 for r >= 4/3 (exactly, in floating point) and is
smooth and decreasing in between. The ring profile is phi(r) = chi(r/2) - chi(r).

Nonhomogeneous blocks: Delta_{-1} = chi(D), Delta_q = phi(2^{-q} D) for q >= 0.
Homogeneous blocks on the torus: nonzero lattice modes have |k| >= 1, so only
q >= -1 contribute, and the homogeneous Delta_{-1} equals chi(D) with the mean removed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .reports import EstimateReport, fit_constant, relative_spread
from .spectral import (
    SpectralField,
    TorusGrid,
    embed_box,
    transform_forward,
    transform_inverse,
)

R_IN = 0.75
R_OUT = 4.0 / 3.0


def _smooth_step_kernel(x):
    out = np.zeros_like(x, dtype=float)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def chi_profile(r) -> np.ndarray:
    """Radial low-pass profile: 1 on [0, 3/4], 0 on [4/3, inf)."""
    r = np.asarray(r, dtype=float)
    t = (r - R_IN) / (R_OUT - R_IN)
    a = _smooth_step_kernel(1.0 - t)
    b = _smooth_step_kernel(t)
    return a / (a + b)


def phi_profile(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return chi_profile(0.5 * r) - chi_profile(r)


@dataclass(frozen=True)
class DyadicPartition:
    """The pair (chi, phi) realised on the lattice.

    ``perturbation`` scales the ring profile by ``1 + perturbation``; it exists
    only as a fault-injection hook and breaks the partition of unity when nonzero.
    """

    perturbation: float = 0.0

    def chi(self, r):
        return chi_profile(r)

    def phi(self, r):
        return (1.0 + self.perturbation) * phi_profile(r)

    def q_max(self, grid: TorusGrid) -> int:
        """Smallest q such that bands -1..q cover every lattice mode."""
        q = 0
        while R_IN * 2.0 ** (q + 1) < grid.lattice_radius:
            q += 1
        return q

    def band_range(self, grid: TorusGrid) -> range:
        return range(-1, self.q_max(grid) + 1)

    @lru_cache(maxsize=256)
    def block_symbol(self, grid: TorusGrid, q: int, homogeneous: bool = False) -> np.ndarray:
        """Symbol of Delta_q (nonhomogeneous) or of the homogeneous block."""
        k = grid.kabs
        if homogeneous:
            if q < -1:
                sym = np.zeros(grid.spectral_shape)
            else:
                sym = self.phi(k * 2.0 ** (-q))
            sym = sym.copy()
            sym.flat[0] = 0.0
        elif q < -1:
            sym = np.zeros(grid.spectral_shape)
        elif q == -1:
            sym = self.chi(k)
        else:
            sym = self.phi(k * 2.0 ** (-q))
        sym.setflags(write=False)
        return sym

    @lru_cache(maxsize=256)
    def low_symbol(self, grid: TorusGrid, q: int, homogeneous: bool = False) -> np.ndarray:
        """Symbol of S_q (nonhomogeneous: zero for q < 0) or of the homogeneous S_q."""
        if q < 0 and not homogeneous:
            sym = np.zeros(grid.spectral_shape)
        else:
            sym = self.chi(grid.kabs * 2.0 ** (-q))
        sym.setflags(write=False)
        return sym


DEFAULT_PARTITION = DyadicPartition()


def delta_q(
    f: SpectralField, q: int, partition: DyadicPartition = DEFAULT_PARTITION, homogeneous: bool = False
) -> SpectralField:
    return SpectralField(f.grid, f.coeffs * partition.block_symbol(f.grid, q, homogeneous))


def s_q(
    f: SpectralField, q: int, partition: DyadicPartition = DEFAULT_PARTITION, homogeneous: bool = False
) -> SpectralField:
    return SpectralField(f.grid, f.coeffs * partition.low_symbol(f.grid, q, homogeneous))


@dataclass(frozen=True)
class BandDecomposition:
    low: SpectralField
    blocks: dict

    def reconstruct(self) -> SpectralField:
        total = self.low
        for q in sorted(self.blocks):
            total = total + self.blocks[q]
        return total


def band_decomposition(f: SpectralField, partition: DyadicPartition = DEFAULT_PARTITION) -> BandDecomposition:
    """Nonhomogeneous split f = S_0 f + sum_{q>=0} Delta_q f."""
    qmax = partition.q_max(f.grid)
    return BandDecomposition(
        low=delta_q(f, -1, partition),
        blocks={q: delta_q(f, q, partition) for q in range(qmax + 1)},
    )


def partition_residual(grid: TorusGrid, partition: DyadicPartition = DEFAULT_PARTITION, homogeneous=False) -> float:
    """max over lattice k != 0 of |1 - sum of block symbols|."""
    total = np.zeros(grid.spectral_shape)
    for q in partition.band_range(grid):
        total = total + partition.block_symbol(grid, q, homogeneous)
    res = np.abs(1.0 - total)
    res.flat[0] = 0.0
    return float(np.max(res))


def reconstruction_residual(f: SpectralField, partition: DyadicPartition = DEFAULT_PARTITION) -> float:
    norm = f.l2_norm()
    err = (band_decomposition(f, partition).reconstruct() - f).l2_norm()
    return err / norm if norm > 0 else err


# ---------------------------------------------------------------- norms


def lp_norm_samples(values: np.ndarray, p: float, cell: float) -> float:
    """Grid L^p norm of samples shaped ``(components, *grid)``; vectors by Euclidean magnitude."""
    mag = np.abs(values[0]) if values.shape[0] == 1 else np.sqrt(np.sum(values**2, axis=0))
    if math.isinf(p):
        return float(np.max(mag))
    if p == 1:
        return float(cell * np.sum(mag))
    if p == 2:
        return float(np.sqrt(cell * np.sum(mag * mag)))
    m = float(np.max(mag))
    if m == 0:
        return 0.0
    return float(m * (cell * np.sum((mag / m) ** p)) ** (1.0 / p))


def lp_norm(f: SpectralField, p: float) -> float:
    _check_exponent(p, "p")
    if p == 2:
        return f.l2_norm()
    return lp_norm_samples(transform_inverse(f), p, f.grid.cell_measure)


def _check_exponent(x, name):
    if not (x >= 1):
        raise ValueError(f"{name} must lie in [1, inf], got {x}")


@dataclass(frozen=True)
class BesovSpec:
    """Besov index triple (s, p, r) with homogeneity flag and optional time exponent."""

    s: float
    p: float
    r: float
    homogeneous: bool = True
    rho: float | None = None

    def __post_init__(self):
        _check_exponent(self.p, "p")
        _check_exponent(self.r, "r")
        if self.rho is not None:
            _check_exponent(self.rho, "rho")

    def warn_if_non_banach(self, dim: int):
        if self.homogeneous and self.r > 1 and self.s >= dim / self.p:
            warnings.warn(
                f"homogeneous B^{self.s}_{{{self.p},{self.r}}} with s >= N/p and r > 1 is not a Banach space",
                stacklevel=3,
            )


def band_lp_norms(
    f: SpectralField, p: float, homogeneous: bool = True, partition: DyadicPartition = DEFAULT_PARTITION
) -> dict:
    """Map q -> ||Delta_q f||_{L^p} over the grid's band range."""
    out = {}
    for q in partition.band_range(f.grid):
        out[q] = lp_norm(delta_q(f, q, partition, homogeneous), p)
    return out


def _lr(values, r) -> float:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return 0.0
    if math.isinf(r):
        return float(np.max(v))
    m = float(np.max(v))
    if m == 0:
        return 0.0
    return float(m * np.sum((v / m) ** r) ** (1.0 / r))


def besov_weights(spec: BesovSpec, qs) -> np.ndarray:
    qs = np.asarray(list(qs), dtype=float)
    w = 2.0 ** (qs * spec.s)
    if not spec.homogeneous:
        w[qs == -1] = 1.0
    return w


def besov_norm(f: SpectralField, spec: BesovSpec, partition: DyadicPartition = DEFAULT_PARTITION) -> float:
    """l^r over bands of 2^{qs} ||Delta_q f||_{L^p}; the nonhomogeneous low block has weight 1."""
    spec.warn_if_non_banach(f.grid.dim)
    norms = band_lp_norms(f, spec.p, spec.homogeneous, partition)
    return _lr(besov_weights(spec, norms.keys()) * np.array(list(norms.values())), spec.r)


def _time_norm(values: np.ndarray, times: np.ndarray, rho: float) -> np.ndarray:
    """L^rho in time (trapezoid) along axis 0."""
    if math.isinf(rho):
        return np.max(values, axis=0)
    if rho == 1:
        return np.trapezoid(values, times, axis=0)
    return np.trapezoid(values**rho, times, axis=0) ** (1.0 / rho)


def band_history(
    fields, p: float, homogeneous: bool = True, partition: DyadicPartition = DEFAULT_PARTITION
) -> tuple:
    """Band norms over a trajectory: returns ``(qs, array[time, band])``."""
    fields = list(fields)
    if not fields:
        raise ValueError("empty trajectory")
    qs = list(partition.band_range(fields[0].grid))
    table = np.array([[v for v in band_lp_norms(f, p, homogeneous, partition).values()] for f in fields])
    return qs, table


def tilde_norm(
    fields, times, spec: BesovSpec, partition: DyadicPartition = DEFAULT_PARTITION, history=None
) -> float:
    """Time-then-band norm ||2^{qs} ||Delta_q u||_{L^rho_T L^p}||_{l^r}.

    ``history`` may pass a precomputed ``band_history`` result to avoid recomputation.
    """
    if spec.rho is None:
        raise ValueError("tilde_norm requires spec.rho")
    times = np.asarray(times, dtype=float)
    qs, table = history if history is not None else band_history(fields, spec.p, spec.homogeneous, partition)
    if len(times) != table.shape[0]:
        raise ValueError("times and fields differ in length")
    per_band = _time_norm(table, times, spec.rho)
    return _lr(besov_weights(spec, qs) * per_band, spec.r)


def time_besov_norm(
    fields, times, spec: BesovSpec, partition: DyadicPartition = DEFAULT_PARTITION, history=None
) -> float:
    """Plain L^rho_T(B^s_{p,r}) norm: Besov norm first, then time."""
    if spec.rho is None:
        raise ValueError("time_besov_norm requires spec.rho")
    times = np.asarray(times, dtype=float)
    qs, table = history if history is not None else band_history(fields, spec.p, spec.homogeneous, partition)
    w = besov_weights(spec, qs)
    per_time = np.array([_lr(w * row, spec.r) for row in table])
    return float(_time_norm(per_time, times, spec.rho))


def weak_lp_quasinorm(f: SpectralField, p: float) -> float:
    """sup_lambda lambda |{|f| > lambda}|^{1/p}, attained at sample values."""
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return weak_lp_samples(transform_inverse(f), p, f.grid.cell_measure)


def weak_lp_samples(values: np.ndarray, p: float, cell: float) -> float:
    mag = np.abs(values[0]) if values.shape[0] == 1 else np.sqrt(np.sum(values**2, axis=0))
    v = np.sort(mag.ravel())
    if v[-1] == 0:
        return 0.0
    # cells with |f| >= v_i, i.e. the measure of {|f| > lambda} as lambda rises to v_i
    count = v.size - np.searchsorted(v, v, side="left")
    return float(np.max(v * (count * cell) ** (1.0 / p)))


# ---------------------------------------------------------------- random band fields


def band_field(
    grid: TorusGrid, rng: np.random.Generator, q: int, components: int = 1,
    partition: DyadicPartition = DEFAULT_PARTITION,
) -> SpectralField:
    """Random real field with spectrum in the ring of Delta_q (q >= 0).

    Coefficients are drawn on a box that covers the ring, independent of the
    grid size, so the same seed yields the same function on any grid that
    resolves the ring.
    """
    kmax = int(math.floor(R_OUT * 2.0 ** (q + 1)))
    d = grid.dim
    shape = (components,) + (2 * kmax + 1,) * d
    raw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    flipped = raw[(slice(None),) + (slice(None, None, -1),) * d]
    box = 0.5 * (raw + np.conj(flipped))
    f = embed_box(grid, box)
    return delta_q(f, q, partition)


def band_resolvable(grid: TorusGrid, q: int) -> bool:
    """True when the ring of Delta_q sits strictly inside the stored lattice."""
    return 2 * math.floor(R_OUT * 2.0 ** (q + 1)) < grid.n


# ---------------------------------------------------------------- checks


def bernstein_check(
    p1: float,
    p2: float,
    sample_count: int = 200,
    grids=(64, 128, 256),
    dim: int = 2,
    seed: int = 0,
    tolerance: float = 0.2,
    partition: DyadicPartition = DEFAULT_PARTITION,
) -> EstimateReport:
    """Fit C in ||Delta_q u||_{p2} <= C 2^{qN(1/p1 - 1/p2)} ||Delta_q u||_{p1}.

    Each grid is swept over all resolvable bands; ``sample_count`` random band
    fields are spread over the bands of the coarsest grid. The verdict requires finite C with relative spread
    across grids within ``tolerance``.
    """
    _check_exponent(p1, "p1")
    _check_exponent(p2, "p2")
    if p1 > p2:
        raise ValueError(f"Bernstein check needs p1 <= p2, got {p1} > {p2}")
    gap = (1.0 / p1) - (0.0 if math.isinf(p2) else 1.0 / p2)
    per_grid = {}
    lhs_all, rhs_all = [], []

    def bands(grid):
        return [q for q in range(partition.q_max(grid) + 1) if band_resolvable(grid, q)]

    # same per-band count on every grid so shared bands see identical samples
    per_band = max(1, math.ceil(sample_count / len(bands(TorusGrid(dim, min(grids))))))
    for n in grids:
        grid = TorusGrid(dim, n)
        qs = bands(grid)
        lhs, rhs = [], []
        for q in qs:
            for i in range(per_band):
                f = band_field(grid, np.random.default_rng([seed, q, i]), q, partition=partition)
                v = transform_inverse(f)
                lhs.append(lp_norm_samples(v, p2, grid.cell_measure))
                rhs.append(2.0 ** (q * dim * gap) * lp_norm_samples(v, p1, grid.cell_measure))
        per_grid[n] = fit_constant(lhs, rhs)
        lhs_all += lhs
        rhs_all += rhs
    consts = [per_grid[n] for n in grids]
    spread = relative_spread(consts)
    return EstimateReport(
        inequality_id=f"bernstein(p1={p1},p2={p2})",
        lhs=lhs_all,
        rhs=rhs_all,
        fitted_C=max(consts),
        samples=len(lhs_all),
        passed=bool(all(math.isfinite(c) for c in consts) and spread <= tolerance),
        details={"per_grid_C": per_grid, "spread": spread, "tolerance": tolerance},
    )


def smoothed_indicator(grid: TorusGrid, radius: float, center=None) -> SpectralField:
    """chi(|x - c| / R) with periodic distance: a smoothed ball indicator."""
    center = np.full(grid.dim, np.pi) if center is None else np.asarray(center, dtype=float)
    d2 = np.zeros(grid.shape)
    for x, c in zip(grid.coordinates, center):
        dx = np.abs(x - c)
        dx = np.minimum(dx, 2 * np.pi - dx)
        d2 += dx * dx
    return transform_forward(chi_profile(np.sqrt(d2) / radius), grid)


def lorentz_embedding_check(
    p: float,
    q_int: float,
    n: int = 256,
    dim: int = 2,
    sample_count: int = 40,
    seed: int = 0,
    radii=(1.0, 0.5, 0.25, 0.125),
    partition: DyadicPartition = DEFAULT_PARTITION,
) -> EstimateReport:
    """Fit C in ||f||_{B^{N/q - N/p}_{q,inf}} <= C ||f||_{L^{p,inf}} (homogeneous).

    The family mixes smoothed ball indicators of shrinking radius with random
    trigonometric fields. Passing requires a finite constant.
    """
    if not (1 < p < q_int):
        raise ValueError(f"Lorentz embedding needs 1 < p < q, got p={p}, q={q_int}")
    grid = TorusGrid(dim, n)
    spec = BesovSpec(dim / q_int - dim / p, q_int, math.inf, homogeneous=True)
    fams, lhs, rhs = [], [], []
    for R in radii:
        f = smoothed_indicator(grid, R)
        lhs.append(besov_norm(f, spec, partition))
        rhs.append(weak_lp_quasinorm(f, p))
        fams.append(f"ball(R={R})")
    rng = np.random.default_rng(seed)
    from .spectral import random_field

    for i in range(max(0, sample_count - len(radii))):
        f = random_field(grid, rng, kmax=int(rng.integers(2, 24)), slope=float(rng.uniform(0, 2)))
        lhs.append(besov_norm(f, spec, partition))
        rhs.append(weak_lp_quasinorm(f, p))
        fams.append("random")
    C = fit_constant(lhs, rhs)
    ball_ratios = [lhs[i] / rhs[i] for i in range(len(radii))]
    return EstimateReport(
        inequality_id=f"weak_lp_besov_embedding(p={p},q={q_int})",
        lhs=lhs,
        rhs=rhs,
        fitted_C=C,
        samples=len(lhs),
        passed=bool(math.isfinite(C)),
        details={"ball_ratios": ball_ratios, "radii": list(radii), "family": fams, "n": n},
    )


def almost_orthogonality_residual(f: SpectralField, partition: DyadicPartition = DEFAULT_PARTITION) -> float:
    """max ||Delta_k Delta_q f|| over |k - q| >= 2 (should vanish identically)."""
    worst = 0.0
    qs = list(partition.band_range(f.grid))
    for q in qs:
        dq = delta_q(f, q, partition)
        for k in qs:
            if abs(k - q) >= 2:
                worst = max(worst, float(np.max(np.abs(delta_q(dq, k, partition).coeffs))))
    return worst
