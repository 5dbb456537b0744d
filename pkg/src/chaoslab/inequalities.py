"""Functional inequalities: concentration of pair sums, transport bounds
for divergence-form kernels, and the inner-interaction lemmas.

Everything here is quadrature on periodic grids (d = 1 for the exact
tensor paths) or Monte Carlo with a delta-method confidence interval on
the log-moment.  Hypothesis failures (centering, gamma too large, bad
normalization) raise :class:`HypothesisError` and are never reported as
bound failures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .backend import njit, numba_enabled
from .divergences import (chi_square, dirichlet_energy, fisher_information,
                          relative_entropy)
from .grid import (FLOOR_REL, TorusGrid, axis_derivative,
                   exchangeability_residual, floor_density, gradient,
                   integrate)
from .kernels import divergence_of_matrix, MatrixField

Z_99 = 2.5758293035489004  # two-sided 99% normal quantile


class HypothesisError(ValueError):
    """An assumption of the inequality is not met; nothing is asserted."""


class InequalityViolation(RuntimeError):
    """A verified inequality failed beyond tolerance."""


def c_jw() -> float:
    """The pair-sum concentration constant 1600^2 + 36 e^4."""
    return 1600.0**2 + 36.0 * math.exp(4.0)


# ----------------------------------------------------------------------
# pair-sum machinery
# ----------------------------------------------------------------------

def _check_admissible(phi: np.ndarray, m: np.ndarray, tol: float = 1e-10):
    """Centering against m in both slots and zero diagonal."""
    n = m.size
    if phi.shape != (n, n):
        raise ValueError(f"phi must be ({n}, {n}) on the same grid as m")
    w = m / n
    row = phi @ w
    col = w @ phi
    diag = np.diag(phi)
    worst = max(float(np.max(np.abs(row))), float(np.max(np.abs(col))),
                float(np.max(np.abs(diag))))
    if worst > tol:
        raise HypothesisError(
            f"phi not admissible: centering/diagonal residual {worst:.3e}")


def _pair_sum_grid(phi: np.ndarray, k: int) -> np.ndarray:
    """sum_{i,j in [k]} phi(x^i, x^j) on the full (n,)^k tensor grid."""
    n = phi.shape[0]
    if k == 1:
        return np.zeros(n)  # phi vanishes on the diagonal
    if k == 2:
        return phi + phi.T
    if k == 3:
        s = (phi + phi.T)
        return (s[:, :, None] + s[:, None, :] + s[None, :, :])
    raise ValueError("tensor quadrature only for k <= 3")


if numba_enabled():

    @njit(cache=True)
    def _pair_sums_mc(idx, phi, out):  # pragma: no cover - jit
        S, k = idx.shape
        for s in range(S):
            acc = 0.0
            for i in range(k):
                a = idx[s, i]
                for j in range(k):
                    acc += phi[a, idx[s, j]]
            out[s] = acc

    def _pair_sums(idx: np.ndarray, phi: np.ndarray) -> np.ndarray:
        out = np.empty(idx.shape[0])
        _pair_sums_mc(idx, phi, out)
        return out

else:

    def _pair_sums(idx: np.ndarray, phi: np.ndarray) -> np.ndarray:
        S, k = idx.shape
        out = np.empty(S)
        chunk = max(1, 2**22 // (k * k))
        for lo in range(0, S, chunk):
            part = idx[lo:lo + chunk]
            vals = phi[part[:, :, None], part[:, None, :]]
            out[lo:lo + chunk] = vals.sum(axis=(1, 2))
        return out


def _sample_indices(m: np.ndarray, samples: int, k: int,
                    rng: np.random.Generator) -> np.ndarray:
    """iid draws of k-tuples of grid cells with weights m/n."""
    w = m / m.sum()
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    u = rng.random((samples, k))
    return np.searchsorted(cdf, u).astype(np.int64)


def _tensor_weights(m: np.ndarray) -> np.ndarray:
    return m / m.size


@dataclass
class ConcentrationReport:
    sup_phi: float
    gamma: float
    scale: str              # "k" or "N"
    k: int
    N: Optional[int]
    log_moment: float
    bound: float
    method: str             # "quadrature" | "monte-carlo"
    ci: Optional[tuple] = None       # 99% CI on the log-moment
    moment_rows: list = field(default_factory=list)
    hypothesis: dict = field(default_factory=dict)
    passed: bool = True


def exp_moment_check(phi: np.ndarray, m: np.ndarray, k: int,
                     scale: str = "k", N: Optional[int] = None,
                     samples: int = 1_000_000,
                     seed: int = 0) -> ConcentrationReport:
    """Verify the exponential pair-sum moment bound.

    scale "k": log int exp((1/k) sum_{i,j} phi(x^i,x^j)) dm^k <= 6 gamma,
    requires gamma = C_JW sup|phi|^2 <= 1/2.
    scale "N": the same moment at weight 1/N bounded by
    6 C_JW sup|phi|^2 k^2/N^2 (needs k <= N).

    k <= 3 integrates exactly on the tensor grid (d = 1); larger k uses
    Monte Carlo with a 99% delta-method interval on the log, and the
    bound is asserted against the upper end of the interval.
    """
    phi = np.asarray(phi, dtype=float)
    m = np.asarray(m, dtype=float)
    _check_admissible(phi, m)
    sup = float(np.max(np.abs(phi)))
    gamma = c_jw() * sup**2
    if gamma > 0.5:
        raise HypothesisError(f"gamma = {gamma:.4g} > 1/2: hypothesis not met")
    if scale == "k":
        weight = 1.0 / k
        bound = 6.0 * gamma
    elif scale == "N":
        if N is None or N < k:
            raise ValueError("scale 'N' needs N >= k")
        weight = 1.0 / N
        bound = 6.0 * c_jw() * sup**2 * k**2 / N**2
    else:
        raise ValueError("scale must be 'k' or 'N'")
    hypo = {"centering": True, "gamma": gamma, "gamma_ok": True}

    if k <= 3:
        S = _pair_sum_grid(phi, k)
        w = _tensor_weights(m)
        val = np.exp(weight * S)
        for _ in range(k):
            val = np.tensordot(val, w, axes=([0], [0]))
        log_moment = float(np.log(val))
        report = ConcentrationReport(sup_phi=sup, gamma=gamma, scale=scale,
                                     k=k, N=N, log_moment=log_moment,
                                     bound=bound, method="quadrature",
                                     hypothesis=hypo,
                                     passed=log_moment <= bound + 1e-12)
        return report

    rng = np.random.default_rng(seed)
    idx = _sample_indices(m, samples, k, rng)
    sums = _pair_sums(idx, phi)
    vals = np.exp(weight * sums)
    mean = float(vals.mean())
    sem = float(vals.std(ddof=1)) / math.sqrt(samples)
    lo, hi = mean - Z_99 * sem, mean + Z_99 * sem
    if lo <= 0:
        raise RuntimeError("Monte Carlo interval touches zero; more samples "
                           "needed")
    log_moment = math.log(mean)
    ci = (math.log(lo), math.log(hi))
    return ConcentrationReport(sup_phi=sup, gamma=gamma, scale=scale, k=k,
                               N=N, log_moment=log_moment, bound=bound,
                               method="monte-carlo", ci=ci, hypothesis=hypo,
                               passed=ci[1] <= bound)


def moment_table(phi: np.ndarray, m: np.ndarray, k: int, r_max: int,
                 samples: int = 1_000_000, seed: int = 0) -> list:
    """Rows (r, lhs, rhs, branch, pass) of the even-moment estimates.

    lhs = (1/(2r)!) E |(1/k) sum phi|^{2r}; rhs is (6 e^2 sup)^{2r} when
    4r > k and (1600 sup)^{2r} when 4r <= k.  Exact quadrature for
    k <= 3, Monte Carlo (pass judged at the 99% upper end) otherwise.
    """
    if r_max > 6:
        raise ValueError("r_max > 6: factorial scale exceeds the precision "
                         "guard")
    phi = np.asarray(phi, dtype=float)
    m = np.asarray(m, dtype=float)
    _check_admissible(phi, m)
    sup = float(np.max(np.abs(phi)))
    if k <= 3:
        S = _pair_sum_grid(phi, k) / k
        w = _tensor_weights(m)
    else:
        rng = np.random.default_rng(seed)
        idx = _sample_indices(m, samples, k, rng)
        S = _pair_sums(idx, phi) / k
    rows = []
    for r in range(1, r_max + 1):
        power = np.abs(S) ** (2 * r)
        if k <= 3:
            val = power
            for _ in range(k):
                val = np.tensordot(val, w, axes=([0], [0]))
            lhs = float(val) / math.factorial(2 * r)
            upper = lhs
        else:
            mean = float(power.mean())
            sem = float(power.std(ddof=1)) / math.sqrt(power.size)
            lhs = mean / math.factorial(2 * r)
            upper = (mean + Z_99 * sem) / math.factorial(2 * r)
        if 4 * r > k:
            branch, rhs = "4r>k", (6.0 * math.e**2 * sup) ** (2 * r)
        else:
            branch, rhs = "4r<=k", (1600.0 * sup) ** (2 * r)
        rows.append((r, lhs, rhs, branch, upper <= rhs))
    return rows


def random_admissible_phi(n: int, m: np.ndarray,
                          rng: np.random.Generator, modes: int = 2,
                          target_sup: float = 1e-4,
                          tol: float = 1e-13) -> np.ndarray:
    """Random smooth two-point function with exact-to-tolerance centering
    against m in both slots and zero diagonal.

    A finite Fourier draw (difference modes plus separable modes) is
    alternately double-centered and stripped of its diagonal through a
    band-limited bump interpolant until both residuals sit below tol;
    the result is rescaled to the requested sup norm, which preserves
    the linear constraints exactly.
    """
    x = np.arange(n) / n
    phi = np.zeros((n, n))
    for f in range(1, modes + 1):
        a, b = rng.normal(size=2)
        phi += a * np.sin(2 * np.pi * f * (x[:, None] - x[None, :]))
        phi += b * np.cos(2 * np.pi * f * (x[:, None] + x[None, :]))
        c, d_ = rng.normal(size=2)
        phi += c * np.sin(2 * np.pi * f * x)[:, None] \
            * np.cos(2 * np.pi * f * x)[None, :]
        phi += d_ * np.cos(2 * np.pi * f * x)[:, None] \
            * np.sin(2 * np.pi * f * x)[None, :]
    # band-limited bump kappa with kappa(0) = 1 for the diagonal strip
    B = max(2, 2 * modes)
    u = x[:, None] - x[None, :]
    kappa = np.ones_like(u)
    for f in range(1, B + 1):
        kappa = kappa + 2.0 * np.cos(2 * np.pi * f * u)
    kappa /= (2 * B + 1)
    w = m / m.sum()
    for _ in range(500):
        row = phi @ w
        col = w @ phi
        g = float(w @ phi @ w)
        phi = phi - row[:, None] - col[None, :] + g
        diag = np.diag(phi).copy()
        phi = phi - diag[:, None] * kappa
        res = max(float(np.max(np.abs(phi @ w))),
                  float(np.max(np.abs(w @ phi))),
                  float(np.max(np.abs(np.diag(phi)))))
        if res < tol:
            break
    else:
        raise RuntimeError("admissibility projection did not converge")
    sup = float(np.max(np.abs(phi)))
    if sup == 0:
        return phi
    return phi * (target_sup / sup)


# ----------------------------------------------------------------------
# transport bound
# ----------------------------------------------------------------------

def _sup_grad_log(m: np.ndarray) -> float:
    g = gradient(np.log(floor_density(np.asarray(m, dtype=float))))
    return float(np.sqrt((g**2).sum(axis=0)).max())


def transport_gap(v, k2, m1, m2, mode: str = "entropy"):
    """(lhs, rhs) of the divergence-form transport inequality.

    lhs = |<div V, m1 - m2>| (Euclidean norm over components); rhs is
    sup|V| (sqrt I + sup|grad log m2| sqrt(2H)) in entropy mode and
    ||V||_{L2(m2)} (sqrt E + sup|grad log m2| sqrt D) in l2 mode.  The
    bounded remainder k2 plays no role in this display and is ignored.
    """
    if not isinstance(v, MatrixField):
        raise TypeError("v must be a MatrixField")
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    if m1.shape != v.grid.shape or m2.shape != v.grid.shape:
        raise ValueError("densities must live on the kernel's grid")
    kvals = divergence_of_matrix(v.values)
    diff = m1 - m2
    lhs = float(np.sqrt(sum(integrate(kvals[a] * diff) ** 2
                            for a in range(v.grid.dim))))
    slog = _sup_grad_log(m2)
    if mode == "entropy":
        rhs = v.sup_norm() * (
            math.sqrt(max(fisher_information(m1, m2), 0.0))
            + slog * math.sqrt(max(2.0 * relative_entropy(m1, m2), 0.0)))
    elif mode == "l2":
        l2norm = math.sqrt(max(integrate(v.frobenius_squared() * m2), 0.0))
        rhs = l2norm * (
            math.sqrt(max(dirichlet_energy(m1, m2), 0.0))
            + slog * math.sqrt(max(chi_square(m1, m2), 0.0)))
    else:
        raise ValueError("mode must be 'entropy' or 'l2'")
    if lhs > rhs + 1e-8:
        raise InequalityViolation(
            f"transport bound violated: lhs {lhs:.6g} > rhs {rhs:.6g}")
    return lhs, rhs


# ----------------------------------------------------------------------
# inner-interaction lemmas (d = 1 quadrature)
# ----------------------------------------------------------------------

def _weighted_mean(f: np.ndarray, w: np.ndarray) -> float:
    val = f
    for _ in range(f.ndim):
        val = np.tensordot(val, w, axes=([0], [0]))
    return float(val)


def _validate_h(h: np.ndarray, w: np.ndarray, k: int):
    if h.ndim != k:
        raise ValueError(f"h must be a rank-{k} grid function")
    if float(h.min()) < -1e-12:
        raise HypothesisError("h must be nonnegative")
    mass = _weighted_mean(h, w)
    if abs(mass - 1.0) > 1e-8:
        raise HypothesisError(f"h m^k must be a probability: mass {mass:.8f}")


def inner_lemma_check(p: int, h: np.ndarray, m: np.ndarray, U: np.ndarray,
                      eps: float) -> dict:
    """Both sides of the inner-interaction bound at level i = 1 (d = 1).

    a = sum_{j != 1} int h^{p-1} d_1 h (U(x^1,x^j) - <U(x^1,.), m>) dm^k.
    p = 1 returns the crude (k-1)^2 bound and the finer
    (k-1) + (k-1)(k-2) sqrt(2 H(m^3|m^3-product)) variant; p = 2 the
    chi-square bound with its terms reported separately.
    """
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    h = np.asarray(h, dtype=float)
    m = np.asarray(m, dtype=float)
    U = np.asarray(U, dtype=float)
    if U.ndim == 3 and U.shape[0] == 1:
        U = U[0]
    k = h.ndim
    if k < 2:
        raise ValueError("need at least two coordinates")
    n = m.size
    if U.shape != (n, n):
        raise ValueError("U must be an (n, n) two-point function")
    w = m / n
    _validate_h(h, w, k)
    exch = exchangeability_residual(h, d=1)
    if exch > 1e-9 * max(float(np.max(np.abs(h))), 1.0):
        raise HypothesisError(f"h not exchangeable: residual {exch:.3e}")
    supU = float(np.max(np.abs(U)))
    grad = axis_derivative(h, 0)
    Ubar = U @ w  # <U(x, .), m>

    hp = np.ones_like(h) if p == 1 else h
    lhs = 0.0
    for j in range(1, k):
        shape = [1] * k
        shape[0] = n
        shape[j] = n
        Uj = U.reshape(shape)
        centered = Uj - Ubar.reshape([n] + [1] * (k - 1))
        lhs += _weighted_mean(hp * grad * centered, w)

    floor = floor_density(h, FLOOR_REL)
    if p == 1:
        quad = _weighted_mean(grad**2 / floor, w)
        crude = eps * quad + supU**2 * (k - 1) ** 2 / eps
        if k >= 3:
            h3 = h
            for _ in range(k - 3):
                h3 = np.tensordot(h3, w, axes=([3], [0]))
            hl = np.where(h3 > 0, h3 * np.log(np.maximum(h3, 1e-300)), 0.0)
            H3 = max(_weighted_mean(hl, w), 0.0)
        else:
            H3 = 0.0
        fine = eps * quad + supU**2 / eps * (
            (k - 1) + (k - 1) * (k - 2) * math.sqrt(2.0 * H3))
        bounds = {"crude": crude, "fine": fine}
    else:
        quad = _weighted_mean(grad**2, w)
        D = _weighted_mean((h - 1.0) ** 2, w)
        terms = {"gradient": eps * quad,
                 "chi_square": 2.0 * (k - 1) ** 2 * supU**2 * D / eps,
                 "constant": 2.0 * (k - 1) * supU**2 / eps}
        bounds = {"p2": sum(terms.values()), "terms": terms}
    best = bounds["p2"] if p == 2 else min(bounds.values())
    if lhs > best + 1e-8:
        raise InequalityViolation(
            f"inner-interaction bound violated: lhs {lhs:.6g} > {best:.6g}")
    return {"lhs": lhs, "bounds": bounds, "p": p, "k": k,
            "passed": lhs <= best + 1e-8}


def inner_lemma_ibp(p: int, h: np.ndarray, m: np.ndarray, phi: np.ndarray,
                    N: Optional[int] = None) -> dict:
    """Pair-sum version: sum_{i,j} int h^p phi(x^i,x^j) dm^k against
    sup|phi| [sqrt(2 C_JW) N (D_p + 3k^2/N^2) + k^2 D_p 1_{p=2}].

    N is the free particle-count parameter (defaults to k, must be
    >= k); phi must be admissible for m.
    """
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    h = np.asarray(h, dtype=float)
    m = np.asarray(m, dtype=float)
    phi = np.asarray(phi, dtype=float)
    k = h.ndim
    if N is None:
        N = k
    if N < k:
        raise ValueError("N must be at least k")
    _check_admissible(phi, m)
    w = m / m.size
    _validate_h(h, w, k)
    S = _pair_sum_grid(phi, k)
    lhs = _weighted_mean(h**p * S, w)
    if p == 1:
        hl = np.where(h > 0, h * np.log(np.maximum(h, 1e-300)), 0.0)
        Dp = max(_weighted_mean(hl, w), 0.0)
    else:
        Dp = _weighted_mean((h - 1.0) ** 2, w)
    sup = float(np.max(np.abs(phi)))
    rhs = sup * (math.sqrt(2.0 * c_jw()) * N * (Dp + 3.0 * k**2 / N**2)
                 + (k**2 * Dp if p == 2 else 0.0))
    if lhs > rhs + 1e-8:
        raise InequalityViolation(
            f"pair-sum bound violated: lhs {lhs:.6g} > rhs {rhs:.6g}")
    return {"lhs": lhs, "rhs": rhs, "Dp": Dp, "p": p, "k": k, "N": N,
            "passed": lhs <= rhs + 1e-8}
