"""Divergence functionals between grid densities and their level ladder.

Four functionals compare a density m1 against a reference m2:

    entropy   H = int log(m1/m2) dm1
    chi^2     D = int (m1/m2 - 1)^2 dm2
    fisher    I = int |grad log(m1/m2)|^2 dm1
    dirichlet E = int |grad (m1/m2)|^2 dm2

On a joint k-particle density the "ladder" evaluates all four between
each leading marginal and the tensorized reference.  The towering
identities relate conditional divergences at level k to ladder
differences/ratios at level k+1; they hold exactly for exchangeable
joints and are verified here by direct conditional-density quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import (
    FLOOR_REL,
    exchangeability_residual,
    floor_density,
    gradient,
    marginalize,
    tensorize,
)


def _check_same_shape(m1: np.ndarray, m2: np.ndarray):
    if m1.shape != m2.shape:
        raise ValueError(f"density shapes differ: {m1.shape} vs {m2.shape}")


def relative_entropy(m1: np.ndarray, m2: np.ndarray) -> float:
    """H(m1|m2) = int log(m1/m2) dm1, Riemann quadrature with floors."""
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    _check_same_shape(m1, m2)
    ratio = floor_density(m1) / floor_density(m2)
    return float(np.mean(m1 * np.log(ratio)))


def chi_square(m1: np.ndarray, m2: np.ndarray) -> float:
    """D(m1|m2) = int (m1/m2 - 1)^2 dm2."""
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    _check_same_shape(m1, m2)
    return float(np.mean((m1 - m2) ** 2 / floor_density(m2)))


def fisher_information(m1: np.ndarray, m2: np.ndarray) -> float:
    """I(m1|m2) = int |grad log(m1/m2)|^2 dm1 (spectral gradient)."""
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    _check_same_shape(m1, m2)
    logratio = np.log(floor_density(m1)) - np.log(floor_density(m2))
    g = gradient(logratio)
    return float(np.mean((g**2).sum(axis=0) * m1))


def dirichlet_energy(m1: np.ndarray, m2: np.ndarray) -> float:
    """E(m1|m2) = int |grad (m1/m2)|^2 dm2 (spectral gradient)."""
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    _check_same_shape(m1, m2)
    ratio = m1 / floor_density(m2)
    g = gradient(ratio)
    return float(np.mean((g**2).sum(axis=0) * m2))


@dataclass
class DivergenceLadder:
    """Per-level divergences of a joint density against a tensorized reference."""

    t: float
    levels: list = field(default_factory=list)  # k values
    H: list = field(default_factory=list)
    I: list = field(default_factory=list)
    D: list = field(default_factory=list)
    E: list = field(default_factory=list)

    def rows(self):
        for j, k in enumerate(self.levels):
            yield (self.t, k, self.H[j], self.I[j], self.D[j], self.E[j])


def divergence_ladder(joint: np.ndarray, m: np.ndarray, d: int = 1,
                      t: float = 0.0,
                      exch_tol: float = 1e-9) -> DivergenceLadder:
    """Evaluate H, I, D, E for every leading marginal of a joint density.

    The joint must be exchangeable: adjacent particle transpositions are
    sampled and any residual beyond ``exch_tol`` (relative to the sup of
    the joint) is an error, since the ladder is meaningless otherwise.
    """
    joint = np.asarray(joint, dtype=float)
    m = np.asarray(m, dtype=float)
    k_max = joint.ndim // d
    scale = max(float(np.max(np.abs(joint))), 1.0)
    res = exchangeability_residual(joint, d)
    if res > exch_tol * scale:
        raise ValueError(f"joint is not exchangeable: transposition residual {res:.3e}")
    ladder = DivergenceLadder(t=t)
    ref = None
    for k in range(1, k_max + 1):
        marg = marginalize(joint, k, d)
        ref = tensorize(m, k) if ref is None else np.multiply.outer(ref, m)
        ladder.levels.append(k)
        ladder.H.append(max(relative_entropy(marg, ref), 0.0))
        ladder.I.append(max(fisher_information(marg, ref), 0.0))
        ladder.D.append(max(chi_square(marg, ref), 0.0))
        ladder.E.append(max(dirichlet_energy(marg, ref), 0.0))
    return ladder


@dataclass
class TowerReport:
    """Both sides of the four towering identities plus their residuals."""

    entropy_lhs: float
    entropy_rhs: float
    fisher_lhs: float
    fisher_rhs: float
    chisq_lhs: float
    chisq_rhs: float
    dirichlet_lhs: float
    dirichlet_rhs: float
    excluded_mass: float

    def residuals(self) -> dict:
        return {
            "entropy": abs(self.entropy_lhs - self.entropy_rhs),
            "fisher": abs(self.fisher_lhs - self.fisher_rhs),
            "chisq": abs(self.chisq_lhs - self.chisq_rhs),
            "dirichlet": abs(self.dirichlet_lhs - self.dirichlet_rhs),
        }

    def residual_pair(self) -> tuple:
        """(entropic, quadratic) worst residuals."""
        r = self.residuals()
        return (max(r["entropy"], r["fisher"]), max(r["chisq"], r["dirichlet"]))

    def scale(self) -> float:
        vals = [self.entropy_rhs, self.fisher_rhs, self.chisq_rhs,
                self.dirichlet_rhs]
        return max(1.0, *(abs(v) for v in vals))

    def ok(self, tol: float = 1e-6) -> bool:
        pair = self.residual_pair()
        return max(pair) <= tol * self.scale()


def _axis_gradient_sq(f: np.ndarray, axes) -> np.ndarray:
    """Squared Euclidean norm of the gradient along the listed axes."""
    from .grid import axis_derivative

    out = np.zeros(f.shape)
    for a in axes:
        g = axis_derivative(f, a)
        out += g * g
    return out


def towering_check(joint: np.ndarray, m: np.ndarray, d: int = 1) -> TowerReport:
    """Verify the conditional towering identities on a (k+1)-level joint.

    The left sides integrate divergences of the conditional density of
    the last particle given the first k; the right sides come from the
    plain ladder at levels k and k+1.  Exchangeability of the joint is
    what makes the gradient versions carry the 1/(k+1) factor.
    """
    joint = np.asarray(joint, dtype=float)
    m = np.asarray(m, dtype=float)
    kp1 = joint.ndim // d
    if kp1 < 2:
        raise ValueError("towering needs a joint with at least two particles")
    k = kp1 - 1

    marg = marginalize(joint, k, d)
    floor = FLOOR_REL * float(np.mean(marg))
    bad = marg < floor
    excluded = float(np.mean(np.where(bad, marg, 0.0)))
    if excluded > 1e-8:
        raise ValueError(f"conditional undefined on mass {excluded:.3e} > 1e-8")

    star_axes = tuple(range(k * d, kp1 * d))
    margx = marg.reshape(marg.shape + (1,) * d)
    cond = joint / np.where(margx < floor, floor, margx)

    # reference quantities for the right-hand sides
    ref_k = tensorize(m, k)
    ref_kp1 = np.multiply.outer(ref_k, m)
    H_k = relative_entropy(marg, ref_k)
    H_kp1 = relative_entropy(joint, ref_kp1)
    I_kp1 = fisher_information(joint, ref_kp1)
    D_k = chi_square(marg, ref_k)
    D_kp1 = chi_square(joint, ref_kp1)
    E_kp1 = dirichlet_energy(joint, ref_kp1)

    m_b = m.reshape((1,) * (k * d) + m.shape)  # broadcast over leading block
    mf_b = floor_density(m).reshape((1,) * (k * d) + m.shape)

    # entropy: int H(cond | m) dmarg  =  H^{k+1} - H^k
    logratio = np.log(floor_density(cond)) - np.log(mf_b)
    h_cond = (cond * logratio).mean(axis=star_axes)  # conditional entropies
    entropy_lhs = float(np.mean(marg * h_cond))

    # fisher: int I(cond | m) dmarg  =  I^{k+1} / (k+1)
    gsq = _axis_gradient_sq(logratio, star_axes)
    i_cond = (gsq * cond).mean(axis=star_axes)
    fisher_lhs = float(np.mean(marg * i_cond))

    # chi^2: int (h^k)^2 D(cond | m) dm^(x)k  =  D^{k+1} - D^k
    hk = marg / floor_density(ref_k)
    d_cond = (((cond - m_b) ** 2) / mf_b).mean(axis=star_axes)
    chisq_lhs = float(np.mean(hk**2 * d_cond * ref_k))

    # dirichlet: int (h^k)^2 E(cond | m) dm^(x)k  =  E^{k+1} / (k+1)
    ratio = cond / mf_b
    gsq_r = _axis_gradient_sq(ratio, star_axes)
    e_cond = (gsq_r * m_b).mean(axis=star_axes)
    dirichlet_lhs = float(np.mean(hk**2 * e_cond * ref_k))

    return TowerReport(
        entropy_lhs=entropy_lhs, entropy_rhs=H_kp1 - H_k,
        fisher_lhs=fisher_lhs, fisher_rhs=I_kp1 / (k + 1),
        chisq_lhs=chisq_lhs, chisq_rhs=D_kp1 - D_k,
        dirichlet_lhs=dirichlet_lhs, dirichlet_rhs=E_kp1 / (k + 1),
        excluded_mass=excluded,
    )
