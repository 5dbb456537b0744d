"""Joint N-particle Fokker-Planck solver and its consistency checks.

Two interchangeable backends integrate the joint equation

    d/dt m = sum_i Lap_i m - (1/(N-1)) sum_{i != j} div_i(m K(x_i - x_j))

with the same integrating-factor midpoint scheme as the mean-field
solver, truncated to the alias-free band |k_a| <= n//3 per axis:

* ``sector``  (d=1): evolves Fourier coefficients on sorted mode
  multisets, which enforces exchangeability exactly and shrinks the
  state by ~N!; transport is a precomputed gather matrix.
* ``dense``   (any d): evolves the full coefficient box; transport is
  assembled per step from pairwise kernel difference fields.

Both are exact Galerkin discretizations of the same band, so they agree
to time-stepping error.  On top of the trajectories this module checks
the marginal (BBGKY) equations and the evolution identity for the
entropy/chi-square of marginals against a moving tensorized reference.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._sector import SectorEngine, build_engine, sector_size
from .divergences import chi_square, relative_entropy
from .grid import (
    MAX_ELEMENTS,
    axis_derivative,
    band_mask,
    exchangeability_residual,
    floor_density,
    freqs,
    from_spectrum,
    laplacian,
    marginalize,
    mode_square,
    spectrum,
    tensorize,
)
from .kernels import KernelSpec
from .meanfield import BLOWUP_LIMIT, FlowTrajectory


def masked_force_spectrum(kernel: KernelSpec) -> np.ndarray:
    """Kernel coefficients truncated to the solver band (n//3 per axis)."""
    mask = band_mask(kernel.grid.shape, kernel.grid.n // 3)
    return kernel.force_spectrum() * mask


def _pair_difference_field(vals: np.ndarray, i: int, j: int, k: int,
                           d: int) -> np.ndarray:
    """Broadcastable array of f(x_i - x_j) over the k-particle grid.

    ``vals`` is a scalar field on T^d; the result has extent n on the
    axes of particles i and j and extent 1 elsewhere.
    """
    n = vals.shape[0]
    diff = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    idxs = []
    for c in range(d):
        sh = [1] * (2 * d)
        sh[c] = n
        sh[d + c] = n
        idxs.append(diff.reshape(sh))
    pair = vals[tuple(idxs)]  # axes: (x_i block, x_j block)
    if j < i:
        perm = tuple(range(d, 2 * d)) + tuple(range(d))
        pair = pair.transpose(perm)
        lo, hi = j, i
    else:
        lo, hi = i, j
    sh = [1] * (k * d)
    for c in range(d):
        sh[lo * d + c] = n
        sh[hi * d + c] = n
    return pair.reshape(sh)


@dataclass
class JointTrajectory:
    """Stored joint states of one Liouville solve (either backend)."""

    N: int
    d: int
    kernel: KernelSpec
    dt: float
    backend: str
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    mass_residuals: list = field(default_factory=list)
    exch_residuals: list = field(default_factory=list)
    engine: Optional[SectorEngine] = None
    _gmaps: dict = field(default_factory=dict)

    @property
    def coupling(self) -> float:
        return 1.0 / (self.N - 1)

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        if abs(self.times[i] - t) > 1e-9 + 1e-6 * max(1.0, abs(t)):
            raise KeyError(f"time {t} not stored (nearest {self.times[i]})")
        return i

    def marginal(self, i: int, level: int) -> np.ndarray:
        """Level-``level`` marginal density values at stored index i."""
        if not 1 <= level <= self.N:
            raise ValueError(f"marginal level {level} outside 1..{self.N}")
        if self.backend == "sector":
            gmap = self._gmaps.get(level)
            if gmap is None:
                gmap = self.engine.grid_map(level)
                self._gmaps[level] = gmap
            return self.engine.values(self.states[i], level, gmap)
        return marginalize(self.states[i], level, self.d)

    def joint(self, i: int) -> np.ndarray:
        return self.marginal(i, self.N)

    def exchangeability(self, i: int) -> float:
        if self.backend == "sector":
            return 0.0  # symmetric representation: exact by construction
        return exchangeability_residual(self.states[i], self.d)


def _validate_initial(m0: np.ndarray, grid_shape) -> np.ndarray:
    m0 = np.asarray(m0, dtype=float)
    if m0.shape != grid_shape:
        raise ValueError("initial datum does not live on the kernel grid")
    if m0.min() < 0:
        raise ValueError("initial datum must be nonnegative")
    if abs(m0.mean() - 1.0) > 1e-8:
        raise ValueError("initial datum must be normalized (mean 1)")
    return m0


def solve_liouville(kernel: KernelSpec, m0: np.ndarray, N: int, T: float,
                    dt: float, store_every: int = 1,
                    method: str = "auto") -> JointTrajectory:
    """Integrate the joint flow from the chaotic datum m0 tensorized N times."""
    if N < 2:
        raise ValueError("need at least two particles")
    grid = kernel.grid
    d = grid.dim
    m0 = _validate_initial(m0, grid.shape)
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be an integer number of steps")
    if method == "auto":
        method = "sector" if d == 1 else "dense"
    if method == "sector" and d != 1:
        raise ValueError("the sector backend is one-dimensional")
    if method == "sector":
        return _solve_sector(kernel, m0, N, steps, dt, store_every)
    return _solve_dense(kernel, m0, N, steps, dt, store_every)


def _solve_sector(kernel, m0, N, steps, dt, store_every) -> JointTrajectory:
    n = kernel.grid.n
    B = n // 3
    if B < 1:
        raise ValueError("grid too coarse for the sector band")
    if sector_size(N, 2 * B + 1) > 8_000_000:
        raise ValueError("sector exceeds the memory envelope; reduce N or n")

    khat = kernel.force_spectrum()[0]
    scale = max(float(np.abs(khat).max()), 1e-300)
    modes = {}
    for q in range(-B, B + 1):
        if q == 0:
            continue
        c = complex(khat[q % n])
        if abs(c) > 1e-14 * scale:
            modes[q] = c
    engine = build_engine(N, B, n, modes)

    mhat = spectrum(m0)
    band = np.arange(-B, B + 1) % n
    state = engine.tensorize_coefficients(mhat[band])
    mass = state[engine.mass_slot].real
    state = state / mass

    traj = JointTrajectory(N=N, d=1, kernel=kernel, dt=dt, backend="sector",
                           engine=engine)
    traj.times.append(0.0)
    traj.states.append(state.copy())
    traj.mass_residuals.append(0.0)
    traj.exch_residuals.append(0.0)

    half = engine.heat_factor(dt / 2.0)
    for s in range(1, steps + 1):
        k1 = engine.transport(state)
        v = half * (state + (0.5 * dt) * k1)
        k2 = engine.transport(v)
        state = half * (half * state + dt * k2)
        mass = state[engine.mass_slot].real
        residual = abs(mass - 1.0)
        state = state / mass
        amp = float(np.abs(state).sum())
        if not np.isfinite(amp) or amp > BLOWUP_LIMIT:
            raise RuntimeError(f"blow-up at t={s * dt:.6g}: coefficient mass {amp:.3g}")
        if s % store_every == 0 or s == steps:
            traj.times.append(s * dt)
            traj.states.append(state.copy())
            traj.mass_residuals.append(float(residual))
            traj.exch_residuals.append(0.0)
    return traj


def _solve_dense(kernel, m0, N, steps, dt, store_every) -> JointTrajectory:
    grid = kernel.grid
    d, n = grid.dim, grid.n
    if n ** (N * d) > MAX_ELEMENTS:
        raise ValueError("joint grid exceeds the element cap")
    shape = (n,) * (N * d)
    mask = band_mask(shape, n // 3)
    khat_d = masked_force_spectrum(kernel)
    kvals = np.stack([from_spectrum(kh) for kh in khat_d])

    pair_views = {}
    for i in range(N):
        for j in range(N):
            if i != j:
                pair_views[i, j] = [
                    _pair_difference_field(kvals[a], i, j, N, d)
                    for a in range(d)
                ]

    fmult = []
    for ax in range(N * d):
        f = freqs(n).astype(float)
        sh = [1] * (N * d)
        sh[ax] = n
        fmult.append((2j * np.pi) * f.reshape(sh))

    half = np.exp(-4.0 * np.pi**2 * mode_square(shape) * (dt / 2.0))
    coupling = 1.0 / (N - 1)

    def transport(state_hat):
        m = from_spectrum(state_hat)
        out = np.zeros(shape, dtype=complex)
        for i in range(N):
            for a in range(d):
                u = np.zeros(shape)
                for j in range(N):
                    if j != i:
                        u = u + pair_views[i, j][a]
                F = m * u * coupling
                out -= fmult[i * d + a] * (np.fft.fftn(F) / F.size)
        return out * mask

    joint0 = tensorize(m0, N)
    state_hat = spectrum(joint0) * mask
    zero = (0,) * (N * d)

    traj = JointTrajectory(N=N, d=d, kernel=kernel, dt=dt, backend="dense")
    traj.times.append(0.0)
    traj.states.append(from_spectrum(state_hat))
    traj.mass_residuals.append(0.0)
    traj.exch_residuals.append(exchangeability_residual(traj.states[0], d))

    for s in range(1, steps + 1):
        k1 = transport(state_hat)
        v = half * (state_hat + (0.5 * dt) * k1)
        k2 = transport(v)
        state_hat = half * (half * state_hat + dt * k2)
        residual = abs(state_hat[zero] - 1.0)
        state_hat[zero] = 1.0
        amp = float(np.abs(state_hat).sum())
        if not np.isfinite(amp) or amp > BLOWUP_LIMIT:
            raise RuntimeError(f"blow-up at t={s * dt:.6g}: coefficient mass {amp:.3g}")
        if s % store_every == 0 or s == steps:
            vals = from_spectrum(state_hat)
            traj.times.append(s * dt)
            traj.states.append(vals)
            traj.mass_residuals.append(float(residual))
            traj.exch_residuals.append(exchangeability_residual(vals, d))
    return traj


# ----------------------------------------------------------------------
# marginal-equation residual
# ----------------------------------------------------------------------

def _outer_fields(m_kp1: np.ndarray, khat_d: np.ndarray, i: int,
                  d: int) -> np.ndarray:
    """O_{i,a}(x) = int K_a(x_i - y) m^{k+1}(x, y) dy, shape (d, T^{kd}).

    Contracting the last particle against the kernel is a mode-by-mode
    shift: coef_O(lam) = sum_q khat(q) coef_m(lam - q e_i, q).
    """
    n = m_kp1.shape[0]
    kd = m_kp1.ndim - d
    mhat = spectrum(m_kp1)
    out_hat = np.zeros((khat_d.shape[0],) + m_kp1.shape[:kd], dtype=complex)
    for q_idx in np.ndindex(*(n,) * d):
        coefs = khat_d[(slice(None),) + q_idx]
        if not np.any(coefs):
            continue
        slab = mhat[(Ellipsis,) + q_idx]
        for c in range(d):
            if q_idx[c]:
                slab = np.roll(slab, q_idx[c], axis=i * d + c)
        for a in range(khat_d.shape[0]):
            if coefs[a]:
                out_hat[a] = out_hat[a] + coefs[a] * slab
    return np.stack([from_spectrum(oh) for oh in out_hat])


def _bbgky_rhs(m_k: np.ndarray, m_kp1: np.ndarray, kernel: KernelSpec,
               N: int, d: int) -> np.ndarray:
    k = m_k.ndim // d
    khat_d = masked_force_spectrum(kernel)
    kvals = np.stack([from_spectrum(kh) for kh in khat_d])
    rhs = laplacian(m_k)
    coupling = 1.0 / (N - 1)
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            for a in range(d):
                W = _pair_difference_field(kvals[a], i, j, k, d)
                rhs = rhs - coupling * axis_derivative(m_k * W, i * d + a)
    outer_coef = (N - k) / (N - 1)
    for i in range(k):
        O = _outer_fields(m_kp1, khat_d, i, d)
        for a in range(d):
            rhs = rhs - outer_coef * axis_derivative(O[a], i * d + a)
    return rhs


_STENCIL = (1.0, -8.0, 0.0, 8.0, -1.0)  # 4th-order first derivative / 12h


def _time_derivative(samples, delta):
    """4th-order central derivative from 5 equispaced samples."""
    acc = None
    for w, s in zip(_STENCIL, samples):
        term = w * np.asarray(s, dtype=float)
        acc = term if acc is None else acc + term
    return acc / (12.0 * delta)


def _stencil_window(traj, t):
    i = traj.index_of(t)
    if i < 2 or i + 2 >= len(traj.times):
        raise ValueError("need two stored neighbors on each side of t")
    ts = traj.times[i - 2:i + 3]
    deltas = np.diff(ts)
    if np.max(np.abs(deltas - deltas[0])) > 1e-9 * max(deltas[0], 1e-12):
        raise ValueError("stored times around t are not equispaced")
    return i, float(deltas[0])


def bbgky_residual(traj: JointTrajectory, k: int, t: float,
                   kp1_override: Optional[np.ndarray] = None) -> float:
    """L1 norm of (d/dt m^{N,k} - marginal-equation right side) at time t.

    The time derivative uses a 4th-order central stencil on stored
    marginals, so the residual isolates spatial/coupling errors down to
    O(delta^4).  k = N is rejected: the full joint satisfies the
    Liouville equation, not a marginal one.
    """
    if not 1 <= k < traj.N:
        raise ValueError("bbgky level must satisfy 1 <= k < N")
    i, delta = _stencil_window(traj, t)
    margs = [traj.marginal(i + o, k) for o in (-2, -1, 0, 1, 2)]
    dmdt = _time_derivative(margs, delta)
    m_kp1 = traj.marginal(i, k + 1) if kp1_override is None else kp1_override
    rhs = _bbgky_rhs(margs[2], m_kp1, traj.kernel, traj.N, traj.d)
    return float(np.mean(np.abs(dmdt - rhs)))


# ----------------------------------------------------------------------
# evolution identity for D_p of marginals vs the moving reference
# ----------------------------------------------------------------------

def evolution_identity_check(traj: JointTrajectory, mf: FlowTrajectory,
                             k: int, p: int, t: float) -> dict:
    """Residual of (1/p) dD_p^k/dt = -E_p + A1 + A2 + B1 + B2 at time t.

    D_1 is relative entropy and D_2 the chi-square distance of the
    k-marginal from the tensorized mean-field state; E_p, the inner (A)
    and outer (B) interaction terms (split by kernel part: 1 = matrix
    divergence, 2 = bounded) are evaluated by grid quadrature at t, the
    left side by the 4th-order stencil across stored times.
    """
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    if not 1 <= k < traj.N:
        raise ValueError("identity level must satisfy 1 <= k < N")
    d = traj.d
    i, delta = _stencil_window(traj, t)

    div = relative_entropy if p == 1 else chi_square
    D_samples = []
    for o in (-2, -1, 0, 1, 2):
        tt = traj.times[i + o]
        D_samples.append(div(traj.marginal(i + o, k),
                             tensorize(mf.state_at(tt), k)))
    lhs = float(_time_derivative(D_samples, delta)) / p

    m_t = mf.state_at(t)
    m_k = traj.marginal(i, k)
    m_kp1 = traj.marginal(i, k + 1)
    ref = tensorize(m_t, k)
    ref_f = floor_density(ref)
    h = m_k / ref_f
    h_f = floor_density(h)

    grads = [axis_derivative(h, ax) for ax in range(k * d)]
    gsq = np.zeros(h.shape)
    for g in grads:
        gsq += g * g
    E_p = float(np.mean(h_f ** (p - 2) * gsq * ref))

    # kernel parts on the solver band
    grid_mask = band_mask(traj.kernel.grid.shape, traj.kernel.grid.n // 3)
    parts = []
    for vals in (traj.kernel.k1_values(), traj.kernel.k2_values()):
        parts.append(np.stack([from_spectrum(spectrum(c) * grid_mask)
                               for c in vals]))
    mhat_t = spectrum(m_t)
    hp = h_f ** (p - 1)

    def conv_at_block(part_vals, c, block):
        """(K_c * m_t)(x_block) broadcast over the k-particle grid."""
        smooth = from_spectrum(spectrum(part_vals[c]) * mhat_t)
        sh = [1] * (k * d)
        for cc in range(d):
            sh[block * d + cc] = traj.kernel.grid.n
        return smooth.reshape(sh)

    terms = {}
    for label, vals in (("1", parts[0]), ("2", parts[1])):
        khat_part = np.stack([spectrum(c) for c in vals])
        a_int = np.zeros(h.shape)
        for ip in range(k):
            for jp in range(k):
                if ip == jp:
                    continue
                for c in range(d):
                    W = _pair_difference_field(vals[c], ip, jp, k, d)
                    a_int = a_int + grads[ip * d + c] * (
                        W - conv_at_block(vals, c, ip))
        terms["A" + label] = traj.coupling * float(np.mean(hp * a_int * ref))

        b_int = np.zeros(h.shape)
        for ip in range(k):
            O = _outer_fields(m_kp1, khat_part, ip, d)
            for c in range(d):
                b_int = b_int + grads[ip * d + c] * (
                    O[c] / floor_density(m_k) - conv_at_block(vals, c, ip))
        terms["B" + label] = ((traj.N - k) / (traj.N - 1)) * float(
            np.mean(hp * b_int * ref))

    rhs = -E_p + terms["A1"] + terms["A2"] + terms["B1"] + terms["B2"]
    residual = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)
    return {"lhs": lhs, "rhs": rhs, "residual": residual, "E": E_p, **terms}
