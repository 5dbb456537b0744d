"""Symmetric-sector spectral engine for joint densities of exchangeable particles.

A joint density of N exchangeable particles on the 1D torus has Fourier
coefficients invariant under permutations of the mode multi-index, so
it is determined by its values on sorted multi-indices.  Working on
that sector shrinks the state by roughly N! and keeps exchangeability
exact by construction.

Modes are kept in the band |k| <= B.  Multisets are ranked through the
combinatorial number system: with u_i = k_i + B sorted ascending and
w_i = u_i + i, the rank is sum_i C(w_i, i+1), a bijection onto
0..C(M+N-1, N)-1 for M = 2B+1 values.

The pairwise transport generator acts by mode shifts:

    (T c)(k) = -(2 pi i/(N-1)) sum_{i != j} k_i sum_q khat(q) c(k - q e_i + q e_j)

with shifts leaving the band truncated to zero (Galerkin).  It is
materialized once as a gather table (idx, wgt) and applied either by a
compiled flat loop or by a vectorized numpy fallback.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backend import njit, numba_enabled


def binomial_table(rows: int, cols: int) -> np.ndarray:
    t = np.zeros((rows, cols), dtype=np.int64)
    t[:, 0] = 1
    for i in range(1, rows):
        for j in range(1, cols):
            t[i, j] = t[i - 1, j - 1] + t[i - 1, j]
    return t


def sector_size(N: int, M: int) -> int:
    from math import comb

    return comb(M + N - 1, N)


def rank_rows(u: np.ndarray, binom: np.ndarray) -> np.ndarray:
    """Ranks of sorted-ascending value rows u (entries in 0..M-1)."""
    N = u.shape[1]
    w = u + np.arange(N, dtype=u.dtype)
    return binom[w, np.arange(1, N + 1)].sum(axis=1)


def enumerate_sector(N: int, B: int) -> tuple:
    """(keys, binom): keys[r] is the r-th sorted mode tuple, rank order."""
    from itertools import combinations_with_replacement

    M = 2 * B + 1
    R = sector_size(N, M)
    binom = binomial_table(M + N + 1, N + 2)
    keys = np.empty((R, N), dtype=np.int64)
    for combo in combinations_with_replacement(range(M), N):
        u = np.asarray(combo, dtype=np.int64)
        r = int(rank_rows(u[None, :], binom)[0])
        keys[r] = u - B
    return keys, binom


if numba_enabled():
    @njit(cache=True)
    def _gather_matvec(idx, wgt, x, out):  # pragma: no cover - compiled
        R, S = idx.shape
        for r in range(R):
            acc = 0j
            for s in range(S):
                acc += wgt[r, s] * x[idx[r, s]]
            out[r] = acc
else:
    def _gather_matvec(idx, wgt, x, out):
        out[:] = 0
        for s in range(idx.shape[1]):
            out += wgt[:, s] * x[idx[:, s]]


@dataclass
class SectorEngine:
    """Precomputed tables for one (N, B, kernel) combination."""

    N: int
    B: int
    n: int  # physical grid resolution for reconstruction
    keys: np.ndarray       # (R, N) sorted mode tuples
    binom: np.ndarray
    idx: np.ndarray        # (R, S) gather indices
    wgt: np.ndarray        # (R, S) complex weights
    ksq: np.ndarray        # (R,) sum of squared modes
    mass_slot: int

    def transport(self, state: np.ndarray) -> np.ndarray:
        out = np.empty_like(state)
        _gather_matvec(self.idx, self.wgt, state, out)
        return out

    def heat_factor(self, tau: float) -> np.ndarray:
        return np.exp(-4.0 * np.pi**2 * tau * self.ksq)

    def tensorize_coefficients(self, mhat_band: np.ndarray) -> np.ndarray:
        """Sector state of a product density from band coefficients.

        ``mhat_band[u]`` holds the coefficient of mode u - B.
        """
        return np.prod(mhat_band[self.keys + self.B], axis=1)

    def lookup(self, modes: np.ndarray) -> np.ndarray:
        """Sector slots of arbitrary mode rows (padded/sorted internally)."""
        if modes.shape[1] < self.N:
            pad = np.zeros((modes.shape[0], self.N - modes.shape[1]),
                           dtype=np.int64)
            modes = np.concatenate([modes, pad], axis=1)
        u = np.sort(modes, axis=1) + self.B
        return rank_rows(u, self.binom)

    def grid_map(self, j: int) -> np.ndarray:
        """Gather map from the sector to the full j-particle coefficient box."""
        M = 2 * self.B + 1
        mesh = np.indices((M,) * j).reshape(j, -1).T.astype(np.int64) - self.B
        return self.lookup(mesh)

    def coefficient_box(self, state: np.ndarray, j: int,
                        gmap: np.ndarray = None) -> np.ndarray:
        """Dense (M,)*j coefficient array of the j-particle marginal."""
        if gmap is None:
            gmap = self.grid_map(j)
        M = 2 * self.B + 1
        return state[gmap].reshape((M,) * j)

    def values(self, state: np.ndarray, j: int,
               gmap: np.ndarray = None) -> np.ndarray:
        """j-particle marginal sampled on the (n,)*j grid."""
        box = self.coefficient_box(state, j, gmap)
        full = np.zeros((self.n,) * j, dtype=complex)
        pos = (np.arange(-self.B, self.B + 1)) % self.n
        full[np.ix_(*([pos] * j))] = box
        return np.fft.ifftn(full * full.size).real


def build_engine(N: int, B: int, n: int, mode_coefs: dict) -> SectorEngine:
    """Assemble the gather tables for kernel modes {q: khat(q)}, q != 0."""
    if N < 2:
        raise ValueError("the sector engine needs N >= 2")
    keys, binom = enumerate_sector(N, B)
    R = keys.shape[0]
    qs = sorted(q for q in mode_coefs if q != 0)
    S = max(1, N * (N - 1) * len(qs))
    idx = np.zeros((R, S), dtype=np.int64)
    wgt = np.zeros((R, S), dtype=np.complex128)
    col = 0
    scale = -2j * np.pi / (N - 1)
    for q in qs:
        cq = complex(mode_coefs[q])
        for i in range(N):
            for j in range(N):
                if i == j:
                    continue
                shifted = keys.copy()
                shifted[:, i] -= q
                shifted[:, j] += q
                valid = (np.abs(shifted) <= B).all(axis=1)
                u = np.sort(shifted, axis=1) + B
                np.clip(u, 0, 2 * B, out=u)
                ranks = rank_rows(u, binom)
                idx[:, col] = np.where(valid, ranks, 0)
                wgt[:, col] = np.where(valid, scale * cq * keys[:, i], 0.0)
                col += 1
    ksq = (keys.astype(float) ** 2).sum(axis=1)
    mass_slot = int(rank_rows(np.full((1, N), B, dtype=np.int64), binom)[0])
    return SectorEngine(N=N, B=B, n=n, keys=keys, binom=binom,
                        idx=idx, wgt=wgt, ksq=ksq, mass_slot=mass_slot)
