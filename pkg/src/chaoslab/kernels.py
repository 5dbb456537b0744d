"""Interaction kernels and their gradient-matrix decompositions.

A kernel is stored as K = div(V) + K2 where V is a matrix field (the
"singular" part enters through its divergence, (div V)_a = sum_b d_b V_{ba})
and K2 is a bounded vector field.  The periodized vortex kernel is
assembled directly in Fourier space; the arctan matrix potential of its
free-space form is sampled on half-offset nodes so no sample sits on a
coordinate axis.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .grid import (
    MatrixField,
    TorusGrid,
    VectorField,
    axis_derivative,
    convolve,
    freqs,
    from_spectrum,
    make_grid,
    spectrum,
)
from .snapshots import read_snapshot, write_snapshot


@dataclass
class KernelSpec:
    """An interaction force together with its structural decomposition.

    ``k1_spectrum`` holds the authoritative Fourier coefficients of the
    divergence part when the kernel was built spectrally; otherwise the
    divergence of ``singular_part`` defines it.
    """

    d: int
    grid: TorusGrid
    singular_part: Optional[MatrixField] = None
    bounded_part: Optional[VectorField] = None
    provenance: str = "explicit_grid"
    k1_spectrum: Optional[np.ndarray] = None  # (d, n, ..., n) complex
    epsilon: float = 0.0  # mollification width, 0 = none

    def __post_init__(self):
        if self.singular_part is None and self.bounded_part is None:
            raise ValueError("kernel needs at least one of V, K2")
        if self.grid.dim != self.d:
            raise ValueError("kernel grid dimension disagrees with d")

    def k1_values(self) -> np.ndarray:
        """The divergence part K1 on the grid, shape (d, n, ..., n)."""
        if self.k1_spectrum is not None:
            return np.stack([from_spectrum(c) for c in self.k1_spectrum])
        if self.singular_part is None:
            return np.zeros((self.d,) + self.grid.shape)
        return divergence_of_matrix(self.singular_part.values)

    def k2_values(self) -> np.ndarray:
        if self.bounded_part is None:
            return np.zeros((self.d,) + self.grid.shape)
        return self.bounded_part.values

    def force_values(self) -> np.ndarray:
        return self.k1_values() + self.k2_values()

    def force_spectrum(self) -> np.ndarray:
        """Fourier coefficients of K, shape (d, n, ..., n) complex."""
        return np.stack([spectrum(c) for c in self.force_values()])

    def sup_v(self) -> float:
        return 0.0 if self.singular_part is None else self.singular_part.sup_norm()

    def sup_k2(self) -> float:
        return 0.0 if self.bounded_part is None else self.bounded_part.sup_norm()


def divergence_of_matrix(v: np.ndarray) -> np.ndarray:
    """(div V)_a = sum_b d_b V_{ba} for component array (d, d, grid...)."""
    d = v.shape[0]
    out = np.zeros((d,) + v.shape[2:])
    for a in range(d):
        for b in range(d):
            out[a] += axis_derivative(v[b, a], axis=b)
    return out


def divergence_of_vector(k: np.ndarray) -> np.ndarray:
    d = k.shape[0]
    out = np.zeros(k.shape[1:])
    for a in range(d):
        out += axis_derivative(k[a], axis=a)
    return out


# ----------------------------------------------------------------------
# constructors
# ----------------------------------------------------------------------

def biot_savart(grid: TorusGrid, mode_cutoff: Optional[int] = None) -> KernelSpec:
    """Periodized 2D vortex kernel, assembled as a truncated Fourier series.

    The stream function is the zero-mean Green function of the torus
    Laplacian, so coef_K(xi) = i (xi_2, -xi_1) / (2 pi |xi|^2) and the
    matrix potential coef_V[b, a](xi) = xi_b (xi_2, -xi_1)_a / (4 pi^2 |xi|^4)
    satisfies div V = K exactly mode by mode.  The Nyquist plane is
    always dropped so that K(-x) = -K(x) holds at the nodes.
    """
    if grid.dim != 2:
        raise ValueError("the vortex kernel lives on a 2D grid")
    n = grid.n
    if n % 2 != 0:
        raise ValueError("even n required (Nyquist asymmetry on odd grids)")
    if mode_cutoff is None:
        mode_cutoff = n // 2
    if mode_cutoff > n // 2:
        raise ValueError(f"mode_cutoff {mode_cutoff} exceeds n/2 = {n // 2}")

    f = freqs(n).astype(float)
    x1 = f[:, None]
    x2 = f[None, :]
    sq = x1**2 + x2**2
    mask = (sq > 0) & (np.abs(x1) <= mode_cutoff) & (np.abs(x2) <= mode_cutoff)
    # drop the unpaired -n/2 plane to keep the kernel exactly odd
    mask &= (x1 != -n // 2) & (x2 != -n // 2)
    inv = np.where(mask, 1.0 / np.where(sq > 0, sq, 1.0), 0.0)

    x1g, x2g = np.broadcast_arrays(x1 * np.ones_like(x2), x2 * np.ones_like(x1))
    perp = np.stack([x2g, -x1g])  # (2, n, n)
    khat = 1j * perp * inv / (2.0 * np.pi)
    vhat = np.einsum("bij,aij->baij", np.stack([x1g, x2g]),
                     perp) * (inv**2) / (4.0 * np.pi**2)

    v_vals = np.stack([np.stack([from_spectrum(vhat[b, a]) for a in range(2)])
                       for b in range(2)])
    return KernelSpec(
        d=2,
        grid=grid,
        singular_part=MatrixField(grid, v_vals),
        bounded_part=None,
        provenance="biot_savart",
        k1_spectrum=khat,
    )


def free_space_vortex(points: np.ndarray) -> np.ndarray:
    """Free-space vortex force (1/2pi) (-x2, x1)/|x|^2 at points (..., 2)."""
    x1 = points[..., 0]
    x2 = points[..., 1]
    sq = x1**2 + x2**2
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.stack([-x2 / sq, x1 / sq], axis=-1) / (2.0 * np.pi)
    return np.where(np.isfinite(out), out, 0.0)


def v_matrix_values(x1, x2) -> np.ndarray:
    """The diagonal arctan matrix potential of the free-space vortex force.

    V(x) = (1/2pi) diag(arctan(x2/x1), -arctan(x1/x2)); away from the
    coordinate axes div V equals the free-space force.  (The signs here
    are fixed so that div V = +K, with (div V)_a = sum_b d_b V_{ba}.)
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = np.arctan(x2 / x1) / (2.0 * np.pi)
        d2 = -np.arctan(x1 / x2) / (2.0 * np.pi)
    d1 = np.where(np.isfinite(d1), d1, np.sign(x2) * 0.25)
    d2 = np.where(np.isfinite(d2), d2, -np.sign(x1) * 0.25)
    zero = np.zeros(np.broadcast(x1, x2).shape)
    return np.stack([np.stack([d1, zero]), np.stack([zero, d2])])


def v_matrix(grid: TorusGrid) -> MatrixField:
    """Sample the arctan potential on half-offset nodes of a 2D grid.

    The sample points x + h/2 avoid the singular coordinate axes; the
    fundamental domain is centered at the origin (coordinates wrapped to
    [-1/2, 1/2)), which fixes the arctan branch away from the cut.
    """
    if grid.dim != 2:
        raise ValueError("the arctan potential lives on a 2D grid")
    h = grid.spacing
    x = grid.nodes() + 0.5 * h
    x = (x + 0.5) % 1.0 - 0.5
    return MatrixField(grid, v_matrix_values(x[:, None], x[None, :]))


def bounded_kernel(grid: TorusGrid, values: np.ndarray,
                   provenance: str = "explicit_grid") -> KernelSpec:
    """Kernel with only a bounded part K2 (V absent)."""
    values = np.asarray(values, dtype=float)
    if values.shape == grid.shape:
        values = values[None]
    return KernelSpec(d=grid.dim, grid=grid,
                      bounded_part=VectorField(grid, values),
                      provenance=provenance)


def gradient_kernel(grid: TorusGrid, potential: np.ndarray) -> KernelSpec:
    """d=1 kernel K = v' stored through its scalar potential v.

    The 1x1 matrix field V = [v] gives K1 = dv/dx; useful for the
    transport checks where bounds on V itself enter.
    """
    if grid.dim != 1:
        raise ValueError("gradient_kernel is a 1D constructor")
    v = np.asarray(potential, dtype=float)
    return KernelSpec(d=1, grid=grid,
                      singular_part=MatrixField(grid, v[None, None]),
                      provenance="fourier_series")


# ----------------------------------------------------------------------
# transforms and checks
# ----------------------------------------------------------------------

def mollify(spec: KernelSpec, eps: float) -> KernelSpec:
    """Gaussian Fourier-multiplier mollification of every kernel part.

    Each mode xi is damped by exp(-eps^2 |2 pi xi|^2 / 2), which is the
    symbol of convolution with a near-Gaussian bump of width eps.
    """
    if not 0.0 < eps < 0.5:
        raise ValueError(f"mollification width must lie in (0, 1/2), got {eps}")

    def damp(field: np.ndarray) -> np.ndarray:
        coef = spectrum(field)
        sq = np.zeros(field.shape)
        for a in range(field.ndim):
            f = freqs(field.shape[a]).astype(float)
            shape = [1] * field.ndim
            shape[a] = f.size
            sq = sq + f.reshape(shape) ** 2
        return from_spectrum(coef * np.exp(-0.5 * eps**2 * 4.0 * np.pi**2 * sq))

    sing = spec.singular_part
    if sing is not None:
        d = spec.d
        vals = np.stack([np.stack([damp(sing.values[b, a]) for a in range(d)])
                         for b in range(d)])
        sing = MatrixField(spec.grid, vals)
    bnd = spec.bounded_part
    if bnd is not None:
        bnd = VectorField(spec.grid, np.stack([damp(c) for c in bnd.values]))
    khat = spec.k1_spectrum
    if khat is not None:
        sq = np.zeros(spec.grid.shape)
        for a in range(spec.grid.dim):
            f = freqs(spec.grid.n).astype(float)
            shape = [1] * spec.grid.dim
            shape[a] = f.size
            sq = sq + f.reshape(shape) ** 2
        khat = khat * np.exp(-0.5 * eps**2 * 4.0 * np.pi**2 * sq)
    return replace(spec, singular_part=sing, bounded_part=bnd,
                   k1_spectrum=khat, epsilon=eps)


def check_decomposition(spec: KernelSpec) -> dict:
    """Residuals of the structural identities K1 = div V and div K1 = 0.

    Returns max |div V - K1| (vacuously zero when V defines K1) and
    max |div K1|; ``ok`` requires both below 1e-8 times the force scale.
    """
    k1 = spec.k1_values()
    scale = max(float(np.max(np.abs(k1))), 1.0)
    if spec.singular_part is not None and spec.k1_spectrum is not None:
        split = float(np.max(np.abs(divergence_of_matrix(spec.singular_part.values) - k1)))
    else:
        split = 0.0
    divfree = float(np.max(np.abs(divergence_of_vector(k1))))
    return {
        "max_split_residual": split,
        "max_divergence": divfree,
        "scale": scale,
        "ok": split <= 1e-8 * scale and divfree <= 1e-8 * scale,
    }


def mv_constant(v: MatrixField, states, times) -> float:
    """sup over listed times and nodes of (|V|_F^2 convolved with m_t).

    ``states`` are density arrays aligned with ``times``; the supremum
    of the smoothed squared matrix norm is the constant controlling the
    quadratic transport estimates.
    """
    times = list(times)
    states = list(states)
    if not times or len(states) != len(times):
        raise ValueError("need a nonempty time list matching the states")
    vsq = v.frobenius_squared()
    best = -np.inf
    for m in states:
        best = max(best, float(convolve(vsq, np.asarray(m, dtype=float)).max()))
    return best


# ----------------------------------------------------------------------
# serialization (one PCHL file per component)
# ----------------------------------------------------------------------

def save_kernel(spec: KernelSpec, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = [f"d {spec.d}", f"n {spec.grid.n}", f"provenance {spec.provenance}",
            f"epsilon {spec.epsilon!r}"]
    if spec.singular_part is not None:
        for b in range(spec.d):
            for a in range(spec.d):
                write_snapshot(directory / f"v_{b}{a}.pchl",
                               spec.singular_part.values[b, a])
        meta.append("singular 1")
    if spec.bounded_part is not None:
        for a in range(spec.d):
            write_snapshot(directory / f"k2_{a}.pchl", spec.bounded_part.values[a])
        meta.append("bounded 1")
    (directory / "kernel.txt").write_text("\n".join(meta) + "\n")


def load_kernel(directory) -> KernelSpec:
    directory = Path(directory)
    meta = dict(line.split(None, 1)
                for line in (directory / "kernel.txt").read_text().splitlines())
    d = int(meta["d"])
    grid = make_grid(d, int(meta["n"]))
    sing = None
    if "singular" in meta:
        vals = np.stack([np.stack([read_snapshot(directory / f"v_{b}{a}.pchl")
                                   for a in range(d)]) for b in range(d)])
        sing = MatrixField(grid, vals)
    bnd = None
    if "bounded" in meta:
        bnd = VectorField(grid, np.stack([read_snapshot(directory / f"k2_{a}.pchl")
                                          for a in range(d)]))
    return KernelSpec(d=d, grid=grid, singular_part=sing, bounded_part=bnd,
                      provenance=meta["provenance"], epsilon=float(meta["epsilon"]))
