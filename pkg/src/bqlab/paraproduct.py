"""Bony decomposition fg = T_f g + T_g f + R(f, g) and product-law verifiers.

T_f g = sum_q S_{q-1} f Delta_q g and R(f, g) = sum_q Delta_q f (Delta_{q-1} + Delta_q + Delta_{q+1}) g,
with q running over the grid's band range and every product dealiased.
The nonhomogeneous blocks are the default; ``homogeneous=True`` uses the
dotted blocks and is meant for mean-zero fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .littlewood_paley import (
    DEFAULT_PARTITION,
    BesovSpec,
    DyadicPartition,
    besov_norm,
    delta_q,
    lp_norm,
    s_q,
)
from .reports import EstimateReport, fit_constant, relative_spread
from .spectral import (
    SpectralField,
    TorusGrid,
    dealias,
    dealiased_product,
    random_field,
    transform_forward,
    transform_inverse,
)


@dataclass(frozen=True)
class BonyTerms:
    t_fg: SpectralField
    t_gf: SpectralField
    remainder: SpectralField

    def total(self) -> SpectralField:
        return self.t_fg + self.t_gf + self.remainder


def _check(f, g):
    if f.grid != g.grid:
        raise ValueError(f"grid mismatch: {f.grid} vs {g.grid}")
    if f.components != 1 or g.components != 1:
        raise ValueError("Bony decomposition is implemented for scalar fields")


def _blocks(f, partition, homogeneous):
    qs = list(partition.band_range(f.grid))
    return qs, {q: transform_inverse(delta_q(f, q, partition, homogeneous)) for q in qs}


def paraproduct_summands(f: SpectralField, g: SpectralField, partition=DEFAULT_PARTITION, homogeneous=False):
    """Yield ``(q, S_{q-1} f * Delta_q g)`` as dealiased fields."""
    _check(f, g)
    f, g = dealias(f), dealias(g)
    for q in partition.band_range(f.grid):
        yield q, dealiased_product(s_q(f, q - 1, partition, homogeneous), delta_q(g, q, partition, homogeneous))


def _paraproduct_physical(fd, gblocks, qs, partition, homogeneous):
    out = np.zeros(fd.grid.shape)
    for q in qs:
        low = s_q(fd, q - 1, partition, homogeneous)
        if not np.any(low.coeffs):
            continue
        out += transform_inverse(low)[0] * gblocks[q][0]
    return out


def paraproduct(f: SpectralField, g: SpectralField, partition=DEFAULT_PARTITION, homogeneous=False) -> SpectralField:
    """T_f g."""
    _check(f, g)
    fd, gd = dealias(f), dealias(g)
    qs, gb = _blocks(gd, partition, homogeneous)
    return dealias(transform_forward(_paraproduct_physical(fd, gb, qs, partition, homogeneous), f.grid))


def _remainder_physical(fblocks, gblocks, qs, shape):
    out = np.zeros(shape)
    zero = np.zeros((1,) + shape)
    for q in qs:
        tilde = gblocks.get(q - 1, zero) + gblocks[q] + gblocks.get(q + 1, zero)
        out += fblocks[q][0] * tilde[0]
    return out


def remainder(f: SpectralField, g: SpectralField, partition=DEFAULT_PARTITION, homogeneous=False) -> SpectralField:
    """R(f, g)."""
    _check(f, g)
    qs, fb = _blocks(dealias(f), partition, homogeneous)
    _, gb = _blocks(dealias(g), partition, homogeneous)
    return dealias(transform_forward(_remainder_physical(fb, gb, qs, f.grid.shape), f.grid))


def bony_decomposition(f: SpectralField, g: SpectralField, partition=DEFAULT_PARTITION, homogeneous=False) -> BonyTerms:
    _check(f, g)
    fd, gd = dealias(f), dealias(g)
    qs, fb = _blocks(fd, partition, homogeneous)
    _, gb = _blocks(gd, partition, homogeneous)
    grid = f.grid

    def spec(arr):
        return dealias(transform_forward(arr, grid))

    return BonyTerms(
        t_fg=spec(_paraproduct_physical(fd, gb, qs, partition, homogeneous)),
        t_gf=spec(_paraproduct_physical(gd, fb, qs, partition, homogeneous)),
        remainder=spec(_remainder_physical(fb, gb, qs, grid.shape)),
    )


def bony_residual(f: SpectralField, g: SpectralField, partition=DEFAULT_PARTITION) -> float:
    """Relative L2 gap between T_f g + T_g f + R(f, g) and the dealiased product."""
    exact = dealiased_product(f, g)
    err = (bony_decomposition(f, g, partition).total() - exact).l2_norm()
    norm = exact.l2_norm()
    return err / norm if norm > 0 else err


def localization_residual(f: SpectralField, g: SpectralField, partition=DEFAULT_PARTITION, gap: int = 5) -> float:
    """Largest coefficient of Delta_k (S_{q-1} f Delta_q g) over |k - q| >= gap."""
    worst = 0.0
    qs = list(partition.band_range(f.grid))
    for q, term in paraproduct_summands(f, g, partition):
        for k in qs:
            if abs(k - q) >= gap:
                worst = max(worst, float(np.max(np.abs(delta_q(term, k, partition).coeffs))))
    return worst


# ---------------------------------------------------------------- product laws


@dataclass(frozen=True)
class ProductLaw:
    """||op(f, g)||_target <= C ||f||_first ||g||_second."""

    law_id: str
    operator: str  # "paraproduct", "remainder" or "product"
    first: object  # BesovSpec or the string "Linf"
    second: BesovSpec
    target: BesovSpec
    description: str


def _h(s):
    return BesovSpec(s, 2, 2)


PRODUCT_LAWS = {
    law.law_id: law
    for law in [
        ProductLaw("paraproduct_linf", "paraproduct", "Linf", _h(0.5), _h(0.5),
                   "T: L^inf x B^t_{p,r} -> B^t_{p,r}, t=1/2, p=r=2"),
        ProductLaw("paraproduct_negative", "paraproduct", BesovSpec(-0.5, math.inf, math.inf), _h(0.5), _h(0.0),
                   "T: B^{-s}_{inf,inf} x B^t_{2,2} -> B^{t-s}_{2,2}, s=t=1/2"),
        ProductLaw("remainder_positive", "remainder", BesovSpec(0.25, 4, 2), BesovSpec(0.25, 4, 2), BesovSpec(0.5, 2, 1),
                   "R: B^s_{4,2} x B^t_{4,2} -> B^{s+t}_{2,1}, s=t=1/4"),
        ProductLaw("remainder_zero", "remainder", BesovSpec(0.25, 4, 2), BesovSpec(-0.25, 4, 2), BesovSpec(0.0, 2, math.inf),
                   "R: B^s_{4,2} x B^{-s}_{4,2} -> B^0_{2,inf}, s=1/4"),
        ProductLaw("product_besov", "product", BesovSpec(0.5, 2, 1), BesovSpec(0.5, 2, 1), BesovSpec(0.0, 2, 1),
                   "uv: B^s_{N,1} x B^t_{N,1} -> B^{s+t-1}_{N,1}, N=2, s=t=1/2"),
        ProductLaw("product_sobolev", "product", _h(0.5), _h(0.5), BesovSpec(0.0, 2, 1),
                   "uv: H^s x H^t -> B^{s+t-N/2}_{2,1}, N=2, s=t=1/2"),
    ]
}


def _apply(law: ProductLaw, f, g, partition):
    if law.operator == "paraproduct":
        return paraproduct(f, g, partition, homogeneous=True)
    if law.operator == "remainder":
        return remainder(f, g, partition, homogeneous=True)
    return dealiased_product(f, g)


def _norm(f, spec, partition):
    if spec == "Linf":
        return lp_norm(f, math.inf)
    return besov_norm(f, spec, partition)


def _law_family(grid: TorusGrid, seed: int, i: int):
    """Pair of random mean-zero trig fields with random slopes and bandwidths <= 10."""
    rng = np.random.default_rng([seed, i])
    f = random_field(grid, rng, kmax=int(rng.integers(1, 11)), slope=float(rng.uniform(0.0, 3.0)))
    g = random_field(grid, rng, kmax=int(rng.integers(1, 11)), slope=float(rng.uniform(0.0, 3.0)))
    return f, g


def product_law_check(
    law_id: str,
    sample_count: int = 200,
    grids=(64, 128),
    seed: int = 0,
    tolerance: float = 0.2,
    partition: DyadicPartition = DEFAULT_PARTITION,
) -> EstimateReport:
    """Fit the smallest C of a product law over random fields, on each grid."""
    if law_id not in PRODUCT_LAWS:
        raise ValueError(f"unknown product law {law_id!r}; known: {sorted(PRODUCT_LAWS)}")
    law = PRODUCT_LAWS[law_id]
    per_grid = {}
    lhs_all, rhs_all = [], []
    for n in grids:
        grid = TorusGrid(2, n)
        lhs, rhs = [], []
        for i in range(sample_count):
            f, g = _law_family(grid, seed, i)
            lhs.append(_norm(_apply(law, f, g, partition), law.target, partition))
            rhs.append(_norm(f, law.first, partition) * _norm(g, law.second, partition))
        per_grid[n] = fit_constant(lhs, rhs)
        lhs_all += lhs
        rhs_all += rhs
    consts = [per_grid[n] for n in grids]
    finite = all(math.isfinite(c) for c in consts)
    spread = relative_spread(consts) if all(c > 0 for c in consts) else 0.0
    return EstimateReport(
        inequality_id=f"product_law:{law_id}",
        lhs=lhs_all,
        rhs=rhs_all,
        fitted_C=max(consts),
        samples=len(lhs_all),
        passed=bool(finite and spread <= tolerance),
        details={"law": law.description, "per_grid_C": per_grid, "spread": spread, "tolerance": tolerance},
    )
