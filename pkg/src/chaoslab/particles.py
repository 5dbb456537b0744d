"""Euler-Maruyama simulation of the interacting particle system.

Positions live on the unit torus; each particle feels the mean of the
kernel over the other N-1 particles plus sqrt(2) Brownian noise.  Pair
forces are evaluated directly (O(N^2)): bilinear interpolation of the
kernel grid away from collisions and, for the vortex kernel, an exact
blob-regularized free-space form K'(y) (1 - exp(-|y|^2/(2 delta^2)))
inside radius delta (that factor is exactly the Gaussian mollification
of a point vortex, so the near field matches the mollified grid kernel).

Randomness: replica r draws from a counter-based Philox stream keyed by
(seed, r), so replicas are independent, order-insensitive, and the whole
run is reproducible bit-for-bit from (seed, dt, schedule).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .backend import njit, numba_enabled
from .kernels import KernelSpec


@dataclass
class SimConfig:
    kernel: KernelSpec
    dt: float
    T: float
    delta: Optional[float] = None  # blob radius; None = 2 grid spacings
    seed: int = 0
    sampler: Optional[Callable] = None  # (rng, N) -> (N, d) in [0,1)

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.delta is None:
            self.delta = 2.0 * self.kernel.grid.spacing
        if not 0.0 <= self.delta < 0.25:
            raise ValueError("blob radius must lie in [0, 0.25)")


@dataclass
class ParticleState:
    N: int
    d: int
    R: int
    positions: np.ndarray  # (R, N, d) in [0, 1)
    time: float
    seed: int


@dataclass
class ParticleTrajectory:
    config: SimConfig
    N: int
    R: int
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)  # ParticleState snapshots
    displacement: Optional[np.ndarray] = None  # (R, N, d) unwrapped total

    def final(self) -> ParticleState:
        return self.states[-1]


# ----------------------------------------------------------------------
# pair forces
# ----------------------------------------------------------------------

def _forces_numpy(pos: np.ndarray, kvals: np.ndarray, delta: float,
                  vortex_near: bool) -> np.ndarray:
    """Vectorized O(N^2) pair forces for one replica, any d in {1, 2}."""
    N, d = pos.shape
    n = kvals.shape[1]
    diff = pos[:, None, :] - pos[None, :, :]
    diff = (diff + 0.5) % 1.0 - 0.5  # wrap to [-1/2, 1/2)
    # bilinear interpolation of each kernel component at diff mod 1
    g = (diff % 1.0) * n
    i0 = np.floor(g).astype(np.int64) % n
    frac = g - np.floor(g)
    i1 = (i0 + 1) % n
    if d == 1:
        f = frac[..., 0]
        vals = kvals[:, i0[..., 0]] * (1 - f) + kvals[:, i1[..., 0]] * f
        forces = vals  # (1, N, N)
    elif d == 2:
        fx, fy = frac[..., 0], frac[..., 1]
        v00 = kvals[:, i0[..., 0], i0[..., 1]]
        v10 = kvals[:, i1[..., 0], i0[..., 1]]
        v01 = kvals[:, i0[..., 0], i1[..., 1]]
        v11 = kvals[:, i1[..., 0], i1[..., 1]]
        forces = (v00 * (1 - fx) * (1 - fy) + v10 * fx * (1 - fy)
                  + v01 * (1 - fx) * fy + v11 * fx * fy)
    else:
        raise ValueError("particle forces support d in {1, 2}")
    if vortex_near and delta > 0 and d == 2:
        rsq = (diff**2).sum(-1)
        near = rsq < delta * delta
        if near.any():
            x1, x2 = diff[..., 0], diff[..., 1]
            with np.errstate(divide="ignore", invalid="ignore"):
                damp = -np.expm1(-rsq / (2.0 * delta * delta)) / rsq
            damp = np.where(rsq > 0, damp, 1.0 / (2.0 * delta * delta))
            fs = np.stack([-x2 * damp, x1 * damp]) / (2.0 * np.pi)
            forces = np.where(near[None], fs, forces)
    out = np.moveaxis(forces, 0, -1)  # (N, N, d)
    idx = np.arange(N)
    out[idx, idx] = 0.0
    return out.sum(axis=1) / (N - 1)


if numba_enabled():
    @njit(cache=True)
    def _forces_jit_1d(pos, kv, out):  # pragma: no cover - compiled
        N = pos.shape[0]
        n = kv.shape[1]
        for i in range(N):
            acc = 0.0
            for j in range(N):
                if j == i:
                    continue
                y = pos[i, 0] - pos[j, 0]
                y = y - np.floor(y)
                g = y * n
                i0 = int(g) % n
                f = g - int(g)
                acc += kv[0, i0] * (1 - f) + kv[0, (i0 + 1) % n] * f
            out[i, 0] = acc / (N - 1)

    @njit(cache=True)
    def _forces_jit_2d(pos, kv, delta, vortex_near, out):  # pragma: no cover
        N = pos.shape[0]
        n = kv.shape[1]
        inv2pi = 1.0 / (2.0 * np.pi)
        for i in range(N):
            a0 = 0.0
            a1 = 0.0
            for j in range(N):
                if j == i:
                    continue
                y0 = pos[i, 0] - pos[j, 0]
                y1 = pos[i, 1] - pos[j, 1]
                y0 -= np.floor(y0 + 0.5)
                y1 -= np.floor(y1 + 0.5)
                rsq = y0 * y0 + y1 * y1
                if vortex_near and delta > 0 and rsq < delta * delta:
                    if rsq > 0:
                        damp = -np.expm1(-rsq / (2 * delta * delta)) / rsq
                    else:
                        damp = 1.0 / (2 * delta * delta)
                    a0 += -y1 * damp * inv2pi
                    a1 += y0 * damp * inv2pi
                else:
                    g0 = (y0 - np.floor(y0)) * n
                    g1 = (y1 - np.floor(y1)) * n
                    p0 = int(g0) % n
                    p1 = int(g1) % n
                    f0 = g0 - int(g0)
                    f1 = g1 - int(g1)
                    q0 = (p0 + 1) % n
                    q1 = (p1 + 1) % n
                    for c in range(2):
                        v = (kv[c, p0, p1] * (1 - f0) * (1 - f1)
                             + kv[c, q0, p1] * f0 * (1 - f1)
                             + kv[c, p0, q1] * (1 - f0) * f1
                             + kv[c, q0, q1] * f0 * f1)
                        if c == 0:
                            a0 += v
                        else:
                            a1 += v
            out[i, 0] = a0 / (N - 1)
            out[i, 1] = a1 / (N - 1)


def pair_forces(pos: np.ndarray, kvals: np.ndarray, delta: float,
                vortex_near: bool) -> np.ndarray:
    d = pos.shape[1]
    if numba_enabled():
        out = np.empty_like(pos)
        if d == 1:
            _forces_jit_1d(pos, kvals, out)
        elif d == 2:
            _forces_jit_2d(pos, kvals, delta, vortex_near, out)
        else:
            return _forces_numpy(pos, kvals, delta, vortex_near)
        return out
    return _forces_numpy(pos, kvals, delta, vortex_near)


# ----------------------------------------------------------------------
# simulation
# ----------------------------------------------------------------------

def replica_rng(seed: int, replica: int) -> np.random.Generator:
    """Philox stream keyed by (seed, replica): documented substream scheme."""
    key = np.array([seed, replica], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def simulate(config: SimConfig, N: int, R: int, store_every: int = 0,
             track_displacement: bool = False) -> ParticleTrajectory:
    """Run R independent replicas of the N-particle system to time T.

    ``store_every = 0`` stores only the initial and final states.  With
    ``track_displacement`` the unwrapped increments are accumulated so
    the lifted Brownian variance is observable.
    """
    if N < 2:
        raise ValueError("need at least two particles")
    kernel = config.kernel
    d = kernel.grid.dim
    kvals = kernel.force_values()
    zero_kernel = not np.any(kvals)
    vortex_near = kernel.provenance == "biot_savart"
    steps = int(round(config.T / config.dt))
    if abs(steps * config.dt - config.T) > 1e-9 * max(1.0, config.T):
        raise ValueError("T must be an integer number of steps")

    sampler = config.sampler or (lambda rng, count: rng.random((count, d)))
    positions = np.empty((R, N, d))
    rngs = []
    for r in range(R):
        rng = replica_rng(config.seed, r)
        positions[r] = np.asarray(sampler(rng, N), dtype=float) % 1.0
        rngs.append(rng)

    disp = np.zeros((R, N, d)) if track_displacement else None
    traj = ParticleTrajectory(config=config, N=N, R=R)

    def snap(t):
        traj.times.append(t)
        traj.states.append(ParticleState(N=N, d=d, R=R,
                                         positions=positions.copy(),
                                         time=t, seed=config.seed))

    snap(0.0)
    sig = np.sqrt(2.0 * config.dt)
    for s in range(1, steps + 1):
        for r in range(R):
            if zero_kernel:
                move = sig * rngs[r].standard_normal((N, d))
            else:
                drift = pair_forces(positions[r], kvals, config.delta,
                                    vortex_near)
                move = drift * config.dt + sig * rngs[r].standard_normal((N, d))
            if disp is not None:
                disp[r] += move
            positions[r] = (positions[r] + move) % 1.0
        if not np.all(np.isfinite(positions)):
            raise RuntimeError(f"NaN positions at t={s * config.dt:.6g}")
        if (store_every and s % store_every == 0) or s == steps:
            snap(s * config.dt)
    traj.displacement = disp
    return traj


# ----------------------------------------------------------------------
# estimators
# ----------------------------------------------------------------------

def empirical_marginal(state: ParticleState, bins: int) -> np.ndarray:
    """Normalized histogram density over all replicas and particles."""
    if bins > 256:
        raise ValueError("at most 256 bins per axis")
    pts = state.positions.reshape(-1, state.d)
    idx = np.floor(pts * bins).astype(np.int64) % bins
    lin = idx[:, 0]
    for c in range(1, state.d):
        lin = lin * bins + idx[:, c]
    flat = np.bincount(lin, minlength=bins**state.d)
    dens = flat.reshape((bins,) * state.d).astype(float)
    return dens * (bins**state.d) / pts.shape[0]


def weak_error(state: ParticleState, pde_values: np.ndarray,
               bins: int) -> dict:
    """L1 distance between the particle histogram and the binned PDE state.

    The PDE field is block-averaged onto the histogram bins (its grid
    must be a multiple of ``bins`` per axis); the report carries the
    multinomial noise floor sqrt(bins^d / samples).
    """
    hist = empirical_marginal(state, bins)
    n = pde_values.shape[0]
    if n % bins != 0:
        raise ValueError("PDE grid must be divisible by the bin count")
    block = n // bins
    coarse = pde_values.copy()
    for a in range(state.d):
        sh = coarse.shape[:a] + (bins, block) + coarse.shape[a + 1:]
        coarse = coarse.reshape(sh).mean(axis=a + 1)
    samples = state.positions.shape[0] * state.positions.shape[1]
    l1 = float(np.mean(np.abs(hist - coarse)))
    return {
        "l1": l1,
        "noise_floor": float(np.sqrt(bins**state.d / samples)),
        "bins": bins,
    }
