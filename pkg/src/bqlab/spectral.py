"""Periodic grids, spectral fields and Fourier-multiplier operators on the torus.

Fields live on ``[0, 2*pi)^dim`` and are stored as half-spectrum Fourier
coefficients (the layout of :func:`scipy.fft.rfftn`) normalised so that a
coefficient equals the true Fourier coefficient ``(2 pi)^{-dim} int f e^{-ik.x}``.
Real-valuedness (Hermitian symmetry) is then built into the storage.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .exceptions import ConfigurationError

TWO_PI = 2.0 * np.pi
MAGIC = b"BQFLD1"
_HEADER = struct.Struct("<IIId")


def fft_workers() -> int:
    """Worker count for the FFT backend, read from ``BQLAB_THREADS``."""
    raw = os.environ.get("BQLAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid with ``n`` points per axis on the ``dim``-torus of period 2*pi."""

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ConfigurationError(f"dim must be 2 or 3, got {self.dim}")
        n = self.n
        if not isinstance(n, (int, np.integer)) or n < 16 or n & (n - 1):
            raise ConfigurationError(f"n_per_axis must be a power of two >= 16, got {n}")

    period = TWO_PI

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def spectral_shape(self) -> tuple:
        return (self.n,) * (self.dim - 1) + (self.n // 2 + 1,)

    @property
    def cell_measure(self) -> float:
        return (TWO_PI / self.n) ** self.dim

    @property
    def volume(self) -> float:
        return TWO_PI**self.dim

    @property
    def lattice_radius(self) -> float:
        """Largest Euclidean |k| on the stored lattice."""
        return 0.5 * self.n * np.sqrt(self.dim)

    @cached_property
    def wavenumbers(self) -> tuple:
        """Integer wavenumbers per axis, broadcastable against ``spectral_shape``."""
        n, d = self.n, self.dim
        out = []
        for ax in range(d):
            if ax < d - 1:
                k = np.fft.fftfreq(n, 1.0 / n)
            else:
                k = np.arange(n // 2 + 1, dtype=float)
            shape = [1] * d
            shape[ax] = k.size
            out.append(k.reshape(shape))
        return tuple(out)

    @cached_property
    def wavenumbers_odd(self) -> tuple:
        """Wavenumbers with the Nyquist entries zeroed, used for odd-order symbols."""
        half = self.n // 2
        return tuple(np.where(np.abs(k) == half, 0.0, k) for k in self.wavenumbers)

    @cached_property
    def k2(self) -> np.ndarray:
        return sum(k**2 for k in self.wavenumbers) * np.ones(self.spectral_shape)

    @cached_property
    def kabs(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        cut = self.n // 3
        mask = np.ones(self.spectral_shape, dtype=bool)
        for k in self.wavenumbers:
            mask &= np.abs(k) <= cut
        return mask

    @cached_property
    def parseval_weights(self) -> np.ndarray:
        """Multiplicity of each stored mode in the full lattice."""
        w = np.full(self.n // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return np.broadcast_to(w, self.spectral_shape)

    @cached_property
    def coordinates(self) -> tuple:
        x = np.arange(self.n) * (TWO_PI / self.n)
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Immutable real field on a :class:`TorusGrid` held as Fourier coefficients.

    ``coeffs`` has shape ``(components, *grid.spectral_shape)``.
    """

    grid: TorusGrid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.complex128)
        if c.ndim == self.grid.dim:
            c = c[None]
        if c.shape[1:] != self.grid.spectral_shape:
            raise ValueError(
                f"coefficient shape {c.shape[1:]} does not match grid {self.grid.spectral_shape}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def components(self) -> int:
        return self.coeffs.shape[0]

    @property
    def is_vector(self) -> bool:
        return self.components == self.grid.dim

    def component(self, i: int) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs[i : i + 1])

    def with_coeffs(self, coeffs) -> "SpectralField":
        return SpectralField(self.grid, coeffs)

    def samples(self) -> np.ndarray:
        """Physical-space values, shape ``(components, *grid.shape)``."""
        return transform_inverse(self)

    def mean(self) -> np.ndarray:
        return self.coeffs[(slice(None),) + (0,) * self.grid.dim].real.copy()

    def l2_norm(self) -> float:
        return float(np.sqrt(max(self.inner(self), 0.0)))

    def inner(self, other: "SpectralField") -> float:
        """L2 inner product computed from coefficients (Parseval)."""
        _check_same_grid(self, other)
        w = self.grid.parseval_weights
        s = np.sum(w * (self.coeffs * np.conj(other.coeffs)).real)
        return float(self.grid.volume * s)

    def full_coeffs(self) -> np.ndarray:
        """Coefficients on the whole lattice, FFT index order on every axis."""
        n, d = self.grid.n, self.grid.dim
        half = self.coeffs
        full = np.empty((self.components,) + self.grid.shape, dtype=np.complex128)
        full[..., : n // 2 + 1] = half
        # mirror k -> -k: reverse and roll every leading axis, then conjugate
        mirrored = half
        for ax in range(1, d):
            mirrored = np.roll(np.flip(mirrored, axis=ax), 1, axis=ax)
        tail = np.conj(mirrored[..., 1 : n // 2][..., ::-1])
        full[..., n // 2 + 1 :] = tail
        return full

    def __add__(self, other):
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __neg__(self):
        return SpectralField(self.grid, -self.coeffs)

    def __mul__(self, scalar):
        if isinstance(scalar, SpectralField):
            raise TypeError("use dealiased_product for field products")
        return SpectralField(self.grid, self.coeffs * float(scalar))

    __rmul__ = __mul__


def _check_same_grid(f: SpectralField, g: SpectralField):
    if f.grid != g.grid:
        raise ValueError(f"grid mismatch: {f.grid} vs {g.grid}")


def zeros(grid: TorusGrid, components: int = 1) -> SpectralField:
    return SpectralField(grid, np.zeros((components,) + grid.spectral_shape, dtype=complex))


def transform_forward(samples, grid: TorusGrid | None = None) -> SpectralField:
    """Real samples (``grid.shape`` or ``(c, *grid.shape)``) to a SpectralField."""
    a = np.asarray(samples, dtype=float)
    if grid is None:
        dim = a.ndim if a.ndim in (2, 3) and len(set(a.shape)) == 1 else a.ndim - 1
        grid = TorusGrid(dim, a.shape[-1])
    if a.ndim == grid.dim:
        a = a[None]
    if a.shape[1:] != grid.shape:
        raise ConfigurationError(f"samples of shape {a.shape[1:]} do not match grid {grid.shape}")
    axes = tuple(range(1, grid.dim + 1))
    c = sfft.rfftn(a, axes=axes, workers=fft_workers()) / grid.n**grid.dim
    return SpectralField(grid, c)


def transform_inverse(f: SpectralField) -> np.ndarray:
    g = f.grid
    axes = tuple(range(1, g.dim + 1))
    return sfft.irfftn(f.coeffs * g.n**g.dim, s=g.shape, axes=axes, workers=fft_workers())


def refined_samples(f: SpectralField, factor: int = 4) -> np.ndarray:
    """Values of the trigonometric interpolant on a grid ``factor`` times finer.

    Used for sup norms, which grid maxima underestimate by O((k h)^2). The
    Nyquist modes are dropped.
    """
    g = f.grid
    m = g.n * factor
    axes = tuple(range(1, g.dim + 1))
    full = f.full_coeffs()
    nyq = g.n // 2
    for ax in axes:
        idx = [slice(None)] * full.ndim
        idx[ax] = nyq
        full[tuple(idx)] = 0.0
    centred = np.fft.fftshift(full, axes=axes)
    pad = [(0, 0)] + [((m - g.n) // 2, (m - g.n) // 2)] * g.dim
    big = np.fft.ifftshift(np.pad(centred, pad), axes=axes)
    return sfft.ifftn(big, axes=axes, workers=fft_workers()).real * m**g.dim


def from_function(grid: TorusGrid, func) -> SpectralField:
    """Sample ``func(*coords)`` (scalar or sequence of components) on the grid."""
    vals = func(*grid.coordinates)
    if isinstance(vals, (list, tuple)):
        vals = np.stack([np.broadcast_to(v, grid.shape) for v in vals])
    return transform_forward(np.broadcast_to(vals, vals.shape), grid)


def apply_multiplier(f: SpectralField, symbol) -> SpectralField:
    return SpectralField(f.grid, f.coeffs * symbol)


def gradient(f: SpectralField) -> SpectralField:
    if f.components != 1:
        raise ValueError("gradient expects a scalar field")
    ks = f.grid.wavenumbers_odd
    return SpectralField(f.grid, np.stack([1j * k * f.coeffs[0] for k in ks]))


def divergence(u: SpectralField) -> SpectralField:
    if not u.is_vector:
        raise ValueError("divergence expects a vector field")
    ks = u.grid.wavenumbers_odd
    return SpectralField(u.grid, sum(1j * k * u.coeffs[i] for i, k in enumerate(ks))[None])


def laplacian(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, -f.grid.k2 * f.coeffs)


def divergence_residual(u: SpectralField) -> float:
    """max_k |k . u_hat(k)| relative to the L2 norm of ``u``."""
    ks = u.grid.wavenumbers_odd
    kdotu = sum(k * u.coeffs[i] for i, k in enumerate(ks))
    norm = u.l2_norm()
    return float(np.max(np.abs(kdotu))) / norm if norm > 0 else 0.0


def leray_project(u: SpectralField) -> SpectralField:
    """Orthogonal projection onto divergence-free fields, ``I - k k^T/|k|^2`` per mode."""
    if not u.is_vector:
        raise ValueError("leray_project expects a vector field")
    ks = u.grid.wavenumbers_odd
    k2 = sum(k**2 for k in ks) * np.ones(u.grid.spectral_shape)
    inv = np.divide(1.0, k2, out=np.zeros_like(k2), where=k2 > 0)
    kdotu = sum(k * u.coeffs[i] for i, k in enumerate(ks)) * inv
    return SpectralField(u.grid, np.stack([u.coeffs[i] - k * kdotu for i, k in enumerate(ks)]))


def mollifier_symbol(grid: TorusGrid, r: float) -> np.ndarray:
    """Fourier symbol of I_r for the Gaussian kernel (2 pi)^{-N/2} exp(-|x|^2/2)."""
    if not r > 0:
        raise ValueError(f"mollifier radius must be positive, got {r}")
    return np.exp(-0.5 * r * r * grid.k2)


def mollify(f: SpectralField, r: float) -> SpectralField:
    return apply_multiplier(f, mollifier_symbol(f.grid, r))


def friedrichs_mask(grid: TorusGrid, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError(f"truncation index must be >= 1, got {n}")
    k = grid.kabs
    return (k >= 1.0 / n) & (k <= n)


def friedrichs_truncate(f: SpectralField, n: int) -> SpectralField:
    """J_n: keep modes with 1/n <= |k| <= n."""
    return SpectralField(f.grid, np.where(friedrichs_mask(f.grid, n), f.coeffs, 0.0))


def dealias(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, np.where(f.grid.dealias_mask, f.coeffs, 0.0))


def _physical(f: SpectralField) -> np.ndarray:
    return transform_inverse(dealias(f))


def dealiased_product(f: SpectralField, g: SpectralField) -> SpectralField:
    """Pointwise product under the 2/3 rule.

    A scalar times a vector multiplies every component; two fields with equal
    component counts multiply componentwise.
    """
    _check_same_grid(f, g)
    if f.components != g.components and 1 not in (f.components, g.components):
        raise ValueError("incompatible component counts")
    out = transform_forward(_physical(f) * _physical(g), f.grid)
    return dealias(out)


def advective_term(u: SpectralField, v: SpectralField) -> SpectralField:
    """(u . grad) v for scalar or vector ``v``, dealiased."""
    _check_same_grid(u, v)
    if not u.is_vector:
        raise ValueError("advecting field must be a vector field")
    up = _physical(u)
    ks = u.grid.wavenumbers_odd
    vd = dealias(v)
    out = np.zeros((v.components,) + u.grid.shape)
    for j, k in enumerate(ks):
        dv = transform_inverse(SpectralField(u.grid, 1j * k * vd.coeffs))
        out += up[j] * dv
    return dealias(transform_forward(out, u.grid))


def divergence_form(theta: SpectralField, u: SpectralField) -> SpectralField:
    """div(theta u), dealiased."""
    return divergence(dealiased_product(theta, u))


def tensor_divergence(u: SpectralField, v: SpectralField) -> SpectralField:
    """div(u (x) v): component i is sum_j d_j (u_j v_i), dealiased."""
    _check_same_grid(u, v)
    g = u.grid
    up, vp = _physical(u), _physical(v)
    ks = g.wavenumbers_odd
    comps = []
    for i in range(v.components):
        prods = transform_forward(up * vp[i], g)
        comps.append(sum(1j * k * prods.coeffs[j] for j, k in enumerate(ks)))
    return dealias(SpectralField(g, np.stack(comps)))


def embed_box(grid: TorusGrid, box: np.ndarray) -> SpectralField:
    """Place coefficients given on the box ``|k_i| <= K`` (centred index order) on the grid.

    The box must already be Hermitian symmetric.
    """
    box = np.asarray(box)
    K = (box.shape[-1] - 1) // 2
    if 2 * K >= grid.n:
        raise ValueError(f"box half-width {K} too large for n={grid.n}")
    ks = np.arange(-K, K + 1)
    lead = [ks % grid.n] * (grid.dim - 1)
    out = np.zeros((box.shape[0],) + grid.spectral_shape, dtype=complex)
    idx = np.ix_(np.arange(box.shape[0]), *lead, np.arange(K + 1))
    out[idx] = box[..., K:]
    return SpectralField(grid, out)


def random_field(
    grid: TorusGrid,
    rng: np.random.Generator,
    components: int = 1,
    kmax: int = 8,
    slope: float = 0.0,
    solenoidal: bool = False,
    mean_zero: bool = True,
) -> SpectralField:
    """Random real trigonometric polynomial with modes ``|k_i| <= kmax``.

    Amplitudes decay like ``(1+|k|^2)^{-slope/2}``. The draw depends only on the
    generator state and ``kmax``, never on ``grid.n``, so the same field is
    produced on every grid that resolves it.
    """
    d = grid.dim
    shape = (components,) + (2 * kmax + 1,) * d
    raw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    ks = np.meshgrid(*([np.arange(-kmax, kmax + 1)] * d), indexing="ij")
    k2 = sum(k**2 for k in ks)
    raw *= (1.0 + k2) ** (-0.5 * slope)
    flipped = raw[(slice(None),) + (slice(None, None, -1),) * d]
    box = 0.5 * (raw + np.conj(flipped))
    if mean_zero:
        box[(slice(None),) + (kmax,) * d] = 0.0
    f = embed_box(grid, box)
    if solenoidal:
        f = leray_project(f)
    return f


def hermitian_residual(f: SpectralField) -> float:
    """Largest violation of c(-k) = conj c(k) on the full lattice."""
    full = f.full_coeffs()
    mirrored = full
    for ax in range(1, f.grid.dim + 1):
        mirrored = np.roll(np.flip(mirrored, axis=ax), 1, axis=ax)
    return float(np.max(np.abs(full - np.conj(mirrored))))


def save_field(path, f: SpectralField, time: float = 0.0) -> None:
    """Write the binary dump: magic, ``<IIId`` header, complex64 full-lattice payload."""
    full = f.full_coeffs().astype("<c8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(f.grid.dim, f.grid.n, f.components, float(time)))
        fh.write(full.tobytes(order="C"))


def load_field(path) -> tuple:
    """Read a binary dump, returning ``(field, time)``."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ConfigurationError(f"{path}: bad magic {magic!r}")
        dim, n, comps, time = _HEADER.unpack(fh.read(_HEADER.size))
        payload = np.frombuffer(fh.read(), dtype="<c8")
    grid = TorusGrid(dim, n)
    full = payload.reshape((comps,) + grid.shape).astype(np.complex128)
    return SpectralField(grid, full[..., : n // 2 + 1]), time
