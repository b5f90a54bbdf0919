import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bqlab.littlewood_paley import delta_q
from bqlab.paraproduct import (
    PRODUCT_LAWS,
    bony_decomposition,
    bony_residual,
    localization_residual,
    paraproduct,
    paraproduct_summands,
    product_law_check,
    remainder,
)
from bqlab.spectral import TorusGrid, dealiased_product, from_function, random_field, transform_forward, zeros


@pytest.fixture(scope="module")
def grid():
    return TorusGrid(2, 64)


def _rand(grid, seed):
    return transform_forward(np.random.default_rng(seed).standard_normal(grid.shape), grid)


class TestBony:
    @pytest.mark.parametrize("n", [64, 128, 256])
    def test_reconstruction(self, n):
        g = TorusGrid(2, n)
        assert bony_residual(_rand(g, 0), _rand(g, 1)) <= 1e-11

    def test_constant_factor(self, grid):
        c = transform_forward(np.full(grid.shape, 2.5), grid)
        g = random_field(grid, np.random.default_rng(2), kmax=15)
        terms = bony_decomposition(c, g)
        assert (terms.total() - 2.5 * g).l2_norm() <= 1e-12 * g.l2_norm()

    def test_low_high_is_pure_paraproduct(self, grid):
        # f has |k| = 1 (low block), g has |k| = 22, alone in band 4
        f = from_function(grid, lambda x, y: np.cos(x))
        g = from_function(grid, lambda x, y: np.cos(22 * y))
        assert (delta_q(g, 4) - g).l2_norm() < 1e-13 * g.l2_norm()
        terms = bony_decomposition(f, g)
        assert (terms.t_fg - dealiased_product(f, g)).l2_norm() <= 1e-13
        assert terms.remainder.l2_norm() <= 1e-13
        assert terms.t_gf.l2_norm() <= 1e-13

    def test_disjoint_bands_no_remainder(self, grid):
        f = from_function(grid, lambda x, y: np.sin(3 * x))
        g = from_function(grid, lambda x, y: np.cos(12 * y))
        assert remainder(f, g).l2_norm() <= 1e-13

    def test_remainder_symmetry(self, grid):
        f, g = _rand(grid, 3), _rand(grid, 4)
        a, b = remainder(f, g), remainder(g, f)
        assert (a - b).l2_norm() <= 1e-13 * a.l2_norm()

    def test_single_band_identity(self, grid):
        f = delta_q(_rand(grid, 5), 3)
        t = bony_decomposition(f, f)
        expected = dealiased_product(f, f) - t.t_fg - t.t_gf
        assert (t.remainder - expected).l2_norm() <= 1e-12 * t.remainder.l2_norm()

    def test_localization(self, grid):
        f, g = _rand(grid, 6), _rand(grid, 7)
        scale = dealiased_product(f, g).l2_norm()
        assert localization_residual(f, g) <= 1e-15 * scale

    def test_summands_sum_to_paraproduct(self, grid):
        f, g = _rand(grid, 8), _rand(grid, 9)
        total = zeros(grid)
        for _, term in paraproduct_summands(f, g):
            total = total + term
        assert (total - paraproduct(f, g)).l2_norm() <= 1e-13 * total.l2_norm()

    def test_grid_mismatch(self):
        with pytest.raises(ValueError):
            paraproduct(zeros(TorusGrid(2, 16)), zeros(TorusGrid(2, 32)))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_bony_identity_property(seed):
    g = TorusGrid(2, 32)
    rng = np.random.default_rng(seed)
    f = random_field(g, rng, kmax=10, slope=float(rng.uniform(0, 2)), mean_zero=False)
    h = random_field(g, rng, kmax=10, slope=float(rng.uniform(0, 2)), mean_zero=False)
    assert bony_residual(f, h) <= 1e-11


class TestLaws:
    def test_unknown(self):
        with pytest.raises(ValueError, match="unknown product law"):
            product_law_check("nope")

    def test_zero_inputs(self, grid):
        z = zeros(grid)
        assert paraproduct(z, z).l2_norm() == 0 and remainder(z, z).l2_norm() == 0

    @pytest.mark.parametrize("law_id", sorted(PRODUCT_LAWS))
    def test_fit(self, law_id):
        rep = product_law_check(law_id, sample_count=12, grids=(32, 64))
        assert rep.passed
        assert math.isfinite(rep.fitted_C) and rep.fitted_C > 0
        assert rep.to_dict()["inequality_id"] == f"product_law:{law_id}"
