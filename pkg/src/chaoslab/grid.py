"""Uniform periodic grids on the unit torus and spectral calculus on them.

All fields live on collocation nodes ``x_j = j/n`` (per axis) of the
``dim``-dimensional unit torus.  The Fourier convention used throughout
the package is

    coef(xi) = (1/n^dim) * sum_x f(x) exp(-2*pi*i xi.x),
    f(x)     = sum_xi coef(xi) exp(+2*pi*i xi.x),

so ``coef(0)`` is the mean of the field, which for a probability
density on the unit torus equals its total mass.  Derivatives multiply
by ``2*pi*i*xi`` and the periodic convolution of two fields is the
pointwise product of their coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: refuse to build grids (or grid-shaped temporaries) larger than this
MAX_ELEMENTS = 2**31

#: densities are floored at this fraction of their mean before any log
FLOOR_REL = 1e-13


@dataclass(frozen=True)
class TorusGrid:
    """A ``dim``-dimensional uniform grid with ``n`` nodes per axis."""

    dim: int
    n: int

    @property
    def spacing(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    def nodes(self) -> np.ndarray:
        """Node coordinates along one axis."""
        return np.arange(self.n) / self.n

    def mesh(self) -> tuple:
        """Coordinate arrays broadcastable over the full grid."""
        return tuple(
            self.nodes().reshape((1,) * a + (self.n,) + (1,) * (self.dim - a - 1))
            for a in range(self.dim)
        )


def make_grid(dim: int, n: int) -> TorusGrid:
    """Build a torus grid, guarding dimensions, node counts and memory.

    Parameters
    ----------
    dim : number of axes (>= 1)
    n   : nodes per axis (>= 2)
    """
    if dim < 1:
        raise ValueError(f"grid dimension must be >= 1, got {dim}")
    if n < 2:
        raise ValueError(f"grid needs at least 2 nodes per axis, got {n}")
    if n**dim > MAX_ELEMENTS:
        raise ValueError(
            f"grid with {n}^{dim} nodes exceeds the element cap {MAX_ELEMENTS}"
        )
    return TorusGrid(dim, n)


@dataclass
class DensityField:
    """A (usually normalized) nonnegative field sampled on a grid."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    @property
    def mass(self) -> float:
        return float(self.values.mean())

    def normalized(self) -> "DensityField":
        m = self.mass
        if m <= 0:
            raise ValueError("cannot normalize a field with nonpositive mass")
        return DensityField(self.grid, self.values / m)

    def floored(self, rel: float = FLOOR_REL) -> np.ndarray:
        """Values clipped from below at ``rel`` times the mean (log-safe)."""
        return floor_density(self.values, rel)


@dataclass
class VectorField:
    """d real component arrays over a d-dimensional grid."""

    grid: TorusGrid
    values: np.ndarray  # shape (d, n, ..., n)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        want = (self.grid.dim,) + self.grid.shape
        if self.values.shape != want:
            raise ValueError(f"vector field shape {self.values.shape}, want {want}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("vector field has non-finite entries")

    def sup_norm(self) -> float:
        """Largest Euclidean length over nodes."""
        return float(np.sqrt((self.values**2).sum(axis=0).max()))


@dataclass
class MatrixField:
    """d x d real component arrays over a d-dimensional grid."""

    grid: TorusGrid
    values: np.ndarray  # shape (d, d, n, ..., n)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        want = (self.grid.dim, self.grid.dim) + self.grid.shape
        if self.values.shape != want:
            raise ValueError(f"matrix field shape {self.values.shape}, want {want}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("matrix field has non-finite entries")

    def sup_norm(self) -> float:
        """Largest Frobenius norm over nodes."""
        return float(np.sqrt((self.values**2).sum(axis=(0, 1)).max()))

    def frobenius_squared(self) -> np.ndarray:
        """Pointwise squared Frobenius norm, a scalar field."""
        return (self.values**2).sum(axis=(0, 1))


def floor_density(values: np.ndarray, rel: float = FLOOR_REL) -> np.ndarray:
    """Clip a density from below at ``rel * mean`` before taking logs."""
    mean = float(np.mean(values))
    if mean <= 0:
        raise ValueError("density has nonpositive mean")
    return np.maximum(values, rel * mean)


# ----------------------------------------------------------------------
# spectral helpers
# ----------------------------------------------------------------------

def freqs(n: int) -> np.ndarray:
    """Integer frequencies in numpy FFT layout: 0, 1, ..., -2, -1."""
    return np.fft.fftfreq(n, d=1.0 / n).astype(np.int64)


def spectrum(values: np.ndarray) -> np.ndarray:
    """Normalized Fourier coefficients (coef(0) = mean)."""
    return np.fft.fftn(values) / values.size


def from_spectrum(coef: np.ndarray) -> np.ndarray:
    """Invert :func:`spectrum`, returning the real part."""
    return np.fft.ifftn(coef * coef.size).real


def axis_derivative(values: np.ndarray, axis: int) -> np.ndarray:
    """Spectral partial derivative along one axis of a real field."""
    n = values.shape[axis]
    k = np.fft.rfftfreq(n, d=1.0 / n).copy()
    if n % 2 == 0:
        # the unpaired Nyquist mode has no well-defined real derivative
        k[-1] = 0.0
    shape = [1] * values.ndim
    shape[axis] = k.size
    mult = (2j * np.pi) * k.reshape(shape)
    spec = np.fft.rfft(values, axis=axis)
    return np.fft.irfft(spec * mult, n=n, axis=axis)


def gradient(values: np.ndarray) -> np.ndarray:
    """All spectral partials, stacked along a leading axis."""
    return np.stack([axis_derivative(values, a) for a in range(values.ndim)])


def laplacian(values: np.ndarray) -> np.ndarray:
    """Spectral Laplacian of a real field."""
    coef = spectrum(values)
    ksq = np.zeros(values.shape)
    for a in range(values.ndim):
        f = freqs(values.shape[a]).astype(float)
        shape = [1] * values.ndim
        shape[a] = f.size
        ksq = ksq + (f.reshape(shape)) ** 2
    return from_spectrum(coef * (-4.0 * np.pi**2) * ksq)


def convolve(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Periodic convolution ``(f * g)(x) = int f(x-y) g(y) dy``.

    Computed spectrally; with the normalized coefficient convention the
    integral convolution is exactly the product of coefficients.  ``f``
    may carry leading component axes (a vector or matrix field), which
    are convolved with ``g`` one at a time.
    """
    extra = f.ndim - g.ndim
    if extra < 0 or f.shape[extra:] != g.shape:
        raise ValueError("convolve needs fields sharing one grid shape")
    if extra == 0:
        return from_spectrum(spectrum(f) * spectrum(g))
    lead = f.shape[:extra]
    flat = f.reshape((-1,) + g.shape)
    ghat = spectrum(g)
    out = np.stack([from_spectrum(spectrum(c) * ghat) for c in flat])
    return out.reshape(lead + g.shape)


def integrate(values: np.ndarray) -> float:
    """Integral over the unit torus (= mean of node values)."""
    return float(values.mean())


def band_mask(shape, cutoff: int) -> np.ndarray:
    """True on modes with every |xi_a| <= cutoff (Nyquist plane excluded)."""
    mask = np.ones(shape, dtype=bool)
    for a, n in enumerate(shape):
        f = freqs(n)
        keep = (np.abs(f) <= cutoff) & (f != -(n // 2))
        sl = [np.newaxis] * len(shape)
        sl[a] = slice(None)
        mask &= keep[tuple(sl)]
    return mask


def mode_square(shape) -> np.ndarray:
    """|xi|^2 on the full coefficient box."""
    out = np.zeros(shape)
    for a, n in enumerate(shape):
        f = freqs(n).astype(float)
        sl = [1] * len(shape)
        sl[a] = n
        out = out + f.reshape(sl) ** 2
    return out


# ----------------------------------------------------------------------
# product-space plumbing
# ----------------------------------------------------------------------

def tensorize(values: np.ndarray, k: int) -> np.ndarray:
    """k-fold product density m(x1)...m(xk) on the k-fold product grid."""
    if k < 1:
        raise ValueError("tensorize needs k >= 1")
    if values.size**k > MAX_ELEMENTS:
        raise ValueError("tensorized field would exceed the element cap")
    out = values
    for _ in range(k - 1):
        out = np.multiply.outer(out, values)
    return out


def marginalize(joint: np.ndarray, level: int, d: int = 1) -> np.ndarray:
    """First ``level``-particle marginal of a joint density on ``T^{kd}``.

    Each particle occupies ``d`` consecutive axes; the trailing
    ``k - level`` particles are integrated out.  Integration over a
    torus axis is the mean over its nodes, so the marginal of a
    normalized density is normalized by construction.
    """
    if joint.ndim % d != 0:
        raise ValueError("joint axis count is not a multiple of the base dimension")
    k = joint.ndim // d
    if not 0 < level <= k:
        raise ValueError(f"marginal level {level} out of range 1..{k}")
    if level == k:
        return joint
    return joint.mean(axis=tuple(range(level * d, joint.ndim)))


def transposition_residual(joint: np.ndarray, a: int, b: int) -> float:
    """Max deviation of a joint field under swapping two axes (blocks of 1)."""
    return float(np.max(np.abs(joint - np.swapaxes(joint, a, b))))


def exchangeability_residual(joint: np.ndarray, d: int = 1) -> float:
    """Max deviation under sampled particle transpositions.

    Particles are contiguous blocks of ``d`` axes; adjacent-block swaps
    generate the full symmetric group, so checking them bounds the
    distance to exact exchangeability up to a combinatorial factor.
    """
    nax = joint.ndim
    if nax % d != 0:
        raise ValueError("axis count is not a multiple of the base dimension")
    k = nax // d
    worst = 0.0
    for p in range(k - 1):
        perm = list(range(nax))
        for c in range(d):
            perm[p * d + c], perm[(p + 1) * d + c] = perm[(p + 1) * d + c], perm[p * d + c]
        worst = max(worst, float(np.max(np.abs(joint - joint.transpose(perm)))))
    return worst
