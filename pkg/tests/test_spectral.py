import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bqlab.exceptions import ConfigurationError
from bqlab.spectral import (
    TorusGrid,
    SpectralField,
    advective_term,
    dealias,
    dealiased_product,
    divergence,
    divergence_residual,
    embed_box,
    friedrichs_truncate,
    from_function,
    gradient,
    hermitian_residual,
    laplacian,
    leray_project,
    refined_samples,
    load_field,
    mollifier_symbol,
    mollify,
    random_field,
    save_field,
    transform_forward,
    transform_inverse,
    zeros,
)


@pytest.fixture
def grid():
    return TorusGrid(2, 32)


class TestGrid:
    @pytest.mark.parametrize("n", [15, 24, 100, 8])
    def test_rejects_bad_size(self, n):
        with pytest.raises(ConfigurationError, match="power of two"):
            TorusGrid(2, n)

    def test_rejects_dim(self):
        with pytest.raises(ConfigurationError):
            TorusGrid(4, 16)

    def test_constant_quadrature_exact(self, grid):
        total = grid.cell_measure * np.ones(grid.shape).sum()
        assert total == pytest.approx((2 * np.pi) ** 2, rel=1e-15)

    def test_lattice(self, grid):
        # the Nyquist index is stored once; its sign is immaterial for every symbol used
        k1 = np.abs(grid.wavenumbers[0].ravel())
        assert sorted(set(k1)) == list(range(17))
        assert grid.wavenumbers[1].ravel().max() == 16


class TestTransforms:
    def test_constant(self, grid):
        f = transform_forward(np.ones(grid.shape), grid)
        nz = np.argwhere(np.abs(f.coeffs) > 1e-14)
        assert nz.tolist() == [[0, 0, 0]]
        assert f.coeffs[0, 0, 0] == pytest.approx(1.0)

    def test_cosine(self, grid):
        x1, _ = grid.coordinates
        f = transform_forward(np.cos(x1), grid)
        full = f.full_coeffs()[0]
        assert full[1, 0] == pytest.approx(0.5)
        assert full[-1, 0] == pytest.approx(0.5)
        full[1, 0] = full[-1, 0] = 0
        assert np.max(np.abs(full)) < 1e-15

    def test_round_trip(self, grid):
        a = np.random.default_rng(0).standard_normal((2,) + grid.shape)
        back = transform_inverse(transform_forward(a, grid))
        assert np.linalg.norm(back - a) / np.linalg.norm(a) < 1e-12

    def test_parseval(self, grid):
        a = np.random.default_rng(1).standard_normal(grid.shape)
        f = transform_forward(a, grid)
        grid_l2 = np.sqrt(grid.cell_measure * np.sum(a**2))
        assert f.l2_norm() == pytest.approx(grid_l2, rel=1e-12)

    def test_hermitian(self):
        g = TorusGrid(3, 16)
        a = np.random.default_rng(2).standard_normal(g.shape)
        assert hermitian_residual(transform_forward(a, g)) < 1e-15

    def test_immutable(self, grid):
        f = zeros(grid)
        with pytest.raises(ValueError):
            f.coeffs[0, 0, 0] = 1.0

    def test_grid_inference(self):
        f = transform_forward(np.zeros((2, 16, 16)))
        assert f.grid == TorusGrid(2, 16) and f.components == 2
        f = transform_forward(np.zeros((16, 16, 16)))
        assert f.grid == TorusGrid(3, 16) and f.components == 1


class TestLeray:
    def test_gradient_annihilated(self, grid):
        phi = random_field(grid, np.random.default_rng(3), kmax=6)
        assert leray_project(gradient(phi)).l2_norm() < 1e-13 * gradient(phi).l2_norm()

    def test_shear_unchanged(self, grid):
        u = from_function(grid, lambda x, y: (np.sin(y), 0 * x))
        assert np.max(np.abs(leray_project(u).coeffs - u.coeffs)) < 1e-16

    def test_idempotent_self_adjoint(self, grid):
        rng = np.random.default_rng(4)
        u = random_field(grid, rng, components=2, kmax=10)
        v = random_field(grid, rng, components=2, kmax=10)
        pu = leray_project(u)
        assert (leray_project(pu) - pu).l2_norm() <= 1e-12 * u.l2_norm()
        lhs, rhs = pu.inner(v), u.inner(leray_project(v))
        assert abs(lhs - rhs) <= 1e-12 * u.l2_norm() * v.l2_norm()
        assert divergence_residual(pu) < 1e-12

    def test_nyquist_modes_divergence_free(self):
        g = TorusGrid(2, 16)
        a = np.random.default_rng(5).standard_normal((2,) + g.shape)
        u = leray_project(transform_forward(a, g))
        assert divergence(u).l2_norm() < 1e-12 * u.l2_norm()


class TestMollifier:
    def test_constant_unchanged(self, grid):
        f = transform_forward(np.full(grid.shape, 3.0), grid)
        for r in (0.1, 1.0, 5.0):
            assert np.allclose(mollify(f, r).coeffs, f.coeffs, atol=0)

    def test_small_radius_limit(self, grid):
        assert np.max(np.abs(mollifier_symbol(grid, 1e-9) - 1)) < 1e-14

    def test_rejects_nonpositive(self, grid):
        with pytest.raises(ValueError):
            mollify(zeros(grid), 0.0)

    def test_kernel_quadrature(self):
        # Fourier transform of r^{-2} chi(y/r) at k0, by direct quadrature on a box
        g = TorusGrid(2, 16)
        r, k0 = 1.0, np.array([1.0, 2.0])
        y = np.linspace(-12, 12, 1201)
        h = y[1] - y[0]
        Y1, Y2 = np.meshgrid(y, y, indexing="ij")
        kern = np.exp(-(Y1**2 + Y2**2) / (2 * r * r)) / (2 * np.pi * r * r)
        quad = np.sum(kern * np.cos(k0[0] * Y1 + k0[1] * Y2)) * h * h
        assert quad == pytest.approx(0.0820849986238988, rel=1e-10)
        symbol = mollifier_symbol(g, r)
        assert symbol[1, 2] == pytest.approx(quad, rel=1e-10)

    def test_l2_contraction(self, grid):
        f = random_field(grid, np.random.default_rng(6), kmax=10)
        assert mollify(f, 0.3).l2_norm() <= f.l2_norm()


class TestFriedrichs:
    def test_unit_shell(self, grid):
        f = random_field(grid, np.random.default_rng(7), kmax=5)
        out = friedrichs_truncate(f, 1)
        keep = np.abs(out.coeffs[0]) > 0
        assert np.all(np.isclose(grid.kabs[keep], 1.0))

    def test_idempotent(self, grid):
        f = random_field(grid, np.random.default_rng(8), kmax=12)
        once = friedrichs_truncate(f, 5)
        assert np.array_equal(friedrichs_truncate(once, 5).coeffs, once.coeffs)

    def test_identity_beyond_lattice_radius(self, grid):
        a = np.random.default_rng(9).standard_normal(grid.shape)
        a -= a.mean()
        f = transform_forward(a, grid)
        out = friedrichs_truncate(f, int(np.ceil(grid.n * np.sqrt(2))))
        assert np.array_equal(out.coeffs[:, 1:], f.coeffs[:, 1:])
        assert np.max(np.abs(out.coeffs - f.coeffs)) < 1e-16


def _direct_product(fc, gc, n):
    """Convolution of full-lattice coefficient arrays, no aliasing."""
    ks = np.fft.fftfreq(n, 1.0 / n).astype(int)
    out = np.zeros((n, n), dtype=complex)
    for i1, a1 in enumerate(ks):
        for i2, a2 in enumerate(ks):
            if fc[i1, i2] == 0:
                continue
            for j1, b1 in enumerate(ks):
                for j2, b2 in enumerate(ks):
                    c1, c2 = a1 + b1, a2 + b2
                    if -n // 2 < c1 <= n // 2 and -n // 2 < c2 <= n // 2:
                        out[c1 % n, c2 % n] += fc[i1, i2] * gc[j1, j2]
    return out


class TestProducts:
    def test_cosine_square(self, grid):
        f = from_function(grid, lambda x, y: np.cos(x))
        p = dealiased_product(f, f).full_coeffs()[0]
        assert p[0, 0] == pytest.approx(0.5)
        assert p[2, 0] == pytest.approx(0.25)
        assert p[-2, 0] == pytest.approx(0.25)

    def test_direct_convolution_oracle(self):
        g = TorusGrid(2, 16)
        rng = np.random.default_rng(10)
        f = dealias(transform_forward(rng.standard_normal(g.shape), g))
        h = dealias(transform_forward(rng.standard_normal(g.shape), g))
        direct = _direct_product(f.full_coeffs()[0], h.full_coeffs()[0], g.n)
        got = dealiased_product(f, h).full_coeffs()[0]
        k = np.fft.fftfreq(16, 1 / 16)
        m = (np.abs(k)[:, None] <= 5) & (np.abs(k)[None, :] <= 5)
        assert np.max(np.abs(got[m] - direct[m])) < 1e-14
        assert np.all(got[~m] == 0)

    def test_mask_after_product(self, grid):
        rng = np.random.default_rng(11)
        f = transform_forward(rng.standard_normal(grid.shape), grid)
        p = dealiased_product(f, f)
        assert np.all(p.coeffs[0][~grid.dealias_mask] == 0)

    def test_constant_advection_symbol(self, grid):
        c = np.array([0.7, -1.3])
        u = from_function(grid, lambda x, y: (np.full_like(x, c[0]), np.full_like(x, c[1])))
        v = random_field(grid, np.random.default_rng(12), kmax=8)
        expected = sum(c[i] * gradient(v).coeffs[i] for i in range(2))
        got = advective_term(u, v).coeffs[0]
        assert np.max(np.abs(got - expected)) < 1e-14

    def test_grid_mismatch(self):
        with pytest.raises(ValueError, match="grid mismatch"):
            dealiased_product(zeros(TorusGrid(2, 16)), zeros(TorusGrid(2, 32)))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), dim=st.sampled_from([2, 3]))
def test_skew_symmetry(seed, dim):
    g = TorusGrid(dim, 16)
    rng = np.random.default_rng(seed)
    u = random_field(g, rng, components=dim, kmax=5, solenoidal=True)
    v = random_field(g, rng, components=1, kmax=5)
    val = advective_term(u, v).inner(v)
    scale = max(u.l2_norm() * v.l2_norm() ** 2, 1e-300)
    assert abs(val) <= 1e-12 * scale


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_parseval_property(seed):
    g = TorusGrid(2, 16)
    a = np.random.default_rng(seed).standard_normal((2,) + g.shape)
    f = transform_forward(a, g)
    assert f.l2_norm() ** 2 == pytest.approx(g.cell_measure * np.sum(a**2), rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.sampled_from([16, 32, 64]))
def test_random_field_grid_independent(seed, n):
    ref = random_field(TorusGrid(2, 16), np.random.default_rng(seed), kmax=5)
    f = random_field(TorusGrid(2, n), np.random.default_rng(seed), kmax=5)
    x = np.array([0.3, 1.9])
    val = lambda h: sum(  # noqa: E731
        h.full_coeffs()[0][i, j] * np.exp(1j * (a * x[0] + b * x[1]))
        for i, a in enumerate(np.fft.fftfreq(h.grid.n, 1 / h.grid.n))
        for j, b in enumerate(np.fft.fftfreq(h.grid.n, 1 / h.grid.n))
        if abs(a) <= 5 and abs(b) <= 5
    )
    assert abs(val(ref) - val(f)) < 1e-12


def test_laplacian_of_mode(grid):
    f = from_function(grid, lambda x, y: np.sin(2 * x + y))
    assert np.allclose(laplacian(f).coeffs, -5 * f.coeffs, atol=1e-13)


def test_embed_box_rejects_wide(grid):
    with pytest.raises(ValueError):
        embed_box(grid, np.zeros((1, 33, 33)))


def test_dump_round_trip(tmp_path):
    g = TorusGrid(3, 16)
    f = random_field(g, np.random.default_rng(13), components=3, kmax=4)
    path = tmp_path / "u.bqf"
    save_field(path, f, time=1.25)
    raw = path.read_bytes()
    assert raw[:6] == b"BQFLD1"
    assert len(raw) == 6 + 20 + 3 * 16**3 * 8
    back, t = load_field(path)
    assert t == 1.25 and back.components == 3
    assert np.max(np.abs(back.coeffs - f.coeffs)) < 1e-6 * np.max(np.abs(f.coeffs))


def test_field_arithmetic(grid):
    f = random_field(grid, np.random.default_rng(14), kmax=4)
    assert (2 * f - f - f).l2_norm() == 0
    assert isinstance(-f, SpectralField)
    with pytest.raises(TypeError):
        f * f


def test_refined_samples_interpolate_and_find_true_sup():
    g = TorusGrid(2, 32)
    f = from_function(g, lambda x, y: np.cos(3 * x + 0.5) * np.sin(2 * y + 0.3))
    fine = refined_samples(f, 4)
    assert fine.shape == (1, 128, 128)
    assert np.max(np.abs(fine[:, ::4, ::4] - f.samples())) < 1e-13
    x = np.arange(128) * 2 * np.pi / 128
    exact = np.cos(3 * x[:, None] + 0.5) * np.sin(2 * x[None, :] + 0.3)
    assert np.max(np.abs(fine[0] - exact)) < 1e-13
    assert np.abs(fine).max() >= np.abs(f.samples()).max()
