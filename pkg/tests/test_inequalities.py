"""Tests for the functional-inequality checkers: pair-sum concentration,
even-moment tables, the divergence-form transport bound, and the
inner-interaction lemmas.

Oracles: closed-form constants, hand-integrable trigonometric examples
(the transport example has lhs = pi/2 exactly), and an independent
Monte Carlo estimate cross-checking the tensor quadrature.
"""

import math
from itertools import permutations

import numpy as np
import pytest

from chaoslab.grid import MatrixField, TorusGrid
from chaoslab.inequalities import (
    HypothesisError,
    c_jw,
    exp_moment_check,
    inner_lemma_check,
    inner_lemma_ibp,
    moment_table,
    random_admissible_phi,
    transport_gap,
)

N_GRID = 64
X = np.arange(N_GRID) / N_GRID
UNIFORM = np.ones(N_GRID)


@pytest.fixture(scope="module")
def weighted_setting():
    """A tilted base measure with a matching random admissible phi."""
    m = 1.0 + 0.3 * np.sin(2 * np.pi * X)
    phi = random_admissible_phi(N_GRID, m, np.random.default_rng(42))
    return m, phi


class TestConstant:
    def test_closed_form(self):
        assert c_jw() == 1600.0**2 + 36.0 * math.exp(4.0)
        assert c_jw() == pytest.approx(2561965.53, abs=5e-3)
        assert c_jw() > 1600.0**2


class TestAdmissibleGenerator:
    def test_constraints_hold_exactly(self, weighted_setting):
        m, phi = weighted_setting
        w = m / N_GRID
        assert np.max(np.abs(phi @ w)) < 1e-13
        assert np.max(np.abs(w @ phi)) < 1e-13
        assert np.max(np.abs(np.diag(phi))) < 1e-13
        assert np.max(np.abs(phi)) == pytest.approx(1e-4, rel=1e-12)

    def test_draws_vary(self):
        rng = np.random.default_rng(0)
        a = random_admissible_phi(32, np.ones(32), rng)
        b = random_admissible_phi(32, np.ones(32), rng)
        assert np.max(np.abs(a - b)) > 1e-6


class TestExpMoment:
    def test_zero_phi(self):
        rep = exp_moment_check(np.zeros((N_GRID, N_GRID)), UNIFORM, 2)
        assert rep.log_moment == 0.0
        assert rep.bound == 0.0
        assert rep.passed

    def test_antisymmetric_pair_sum_vanishes(self):
        # phi(x,y) = eps sin(2pi(x-y)) is odd under swapping arguments,
        # so the pair sum is identically zero and the log-moment exact 0
        phi = 1e-4 * np.sin(2 * np.pi * (X[:, None] - X[None, :]))
        rep = exp_moment_check(phi, UNIFORM, 2)
        assert rep.method == "quadrature"
        assert rep.log_moment == 0.0
        assert rep.bound == pytest.approx(6 * c_jw() * 1e-8, rel=1e-12)
        assert rep.passed

    def test_quadrature_below_bound(self, weighted_setting):
        m, phi = weighted_setting
        rep = exp_moment_check(phi, m, 3)
        assert rep.method == "quadrature"
        assert rep.hypothesis["gamma"] == pytest.approx(c_jw() * 1e-8)
        assert 0.0 < rep.log_moment < 1e-6 * rep.bound
        assert rep.passed

    def test_quadratic_scaling(self, weighted_setting):
        m, phi = weighted_setting
        full = exp_moment_check(phi, m, 3).log_moment
        half = exp_moment_check(0.5 * phi, m, 3).log_moment
        assert half <= 0.25 * full * (1.0 + 1e-4) + 1e-14

    def test_quadrature_agrees_with_independent_mc(self, weighted_setting):
        m, phi = weighted_setting
        quad = exp_moment_check(phi, m, 3).log_moment
        samples = 200_000
        cdf = np.cumsum(m / m.sum())
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, np.random.default_rng(7).random((samples, 3)))
        sums = phi[idx[:, :, None], idx[:, None, :]].sum(axis=(1, 2))
        vals = np.exp(sums / 3.0)
        sem = vals.std(ddof=1) / math.sqrt(samples)
        lo = math.log(vals.mean() - 2.576 * sem)
        hi = math.log(vals.mean() + 2.576 * sem)
        assert lo <= quad <= hi

    def test_monte_carlo_large_k(self, weighted_setting):
        m, phi = weighted_setting
        rep = exp_moment_check(phi, m, 64, samples=200_000, seed=1)
        assert rep.method == "monte-carlo"
        assert rep.ci is not None and rep.ci[0] <= rep.log_moment <= rep.ci[1]
        assert rep.ci[1] <= rep.bound
        assert rep.passed

    def test_particle_count_scale(self, weighted_setting):
        m, phi = weighted_setting
        rep = exp_moment_check(phi, m, 2, scale="N", N=10)
        assert rep.bound == pytest.approx(6 * c_jw() * 1e-8 * 4 / 100,
                                          rel=1e-12)
        assert rep.passed

    def test_hypothesis_failures(self):
        big = np.sin(2 * np.pi * (X[:, None] - X[None, :]))
        with pytest.raises(HypothesisError, match="hypothesis not met"):
            exp_moment_check(big, UNIFORM, 2)
        uncentered = 1e-4 * np.cos(2 * np.pi * (X[:, None] - X[None, :]))
        with pytest.raises(HypothesisError, match="not admissible"):
            exp_moment_check(uncentered, UNIFORM, 2)

    def test_scale_validation(self, weighted_setting):
        m, phi = weighted_setting
        with pytest.raises(ValueError, match="N >= k"):
            exp_moment_check(phi, m, 3, scale="N", N=2)
        with pytest.raises(ValueError, match="scale"):
            exp_moment_check(phi, m, 2, scale="M")


class TestMomentTable:
    def test_zero_phi(self):
        rows = moment_table(np.zeros((N_GRID, N_GRID)), UNIFORM, 2, 2)
        assert all(lhs == 0.0 and ok for (_, lhs, _, _, ok) in rows)

    def test_small_k_branch(self, weighted_setting):
        m, phi = weighted_setting
        rows = moment_table(phi, m, 2, 3)
        assert [r for (r, *_) in rows] == [1, 2, 3]
        for r, lhs, rhs, branch, ok in rows:
            assert branch == "4r>k"
            assert rhs == pytest.approx((6 * math.e**2 * 1e-4) ** (2 * r),
                                        rel=1e-12)
            assert 0.0 <= lhs <= rhs and ok

    def test_large_k_branch(self, weighted_setting):
        m, phi = weighted_setting
        rows = moment_table(phi, m, 8, 2, samples=200_000)
        for r, lhs, rhs, branch, ok in rows:
            assert branch == "4r<=k"
            assert rhs == pytest.approx((1600.0 * 1e-4) ** (2 * r), rel=1e-12)
            assert ok

    def test_factorial_guard(self, weighted_setting):
        m, phi = weighted_setting
        with pytest.raises(ValueError, match="r_max > 6"):
            moment_table(phi, m, 2, 7)


class TestTransportGap:
    @pytest.fixture()
    def single_mode_field(self):
        grid = TorusGrid(1, N_GRID)
        return MatrixField(grid, np.sin(2 * np.pi * X).reshape(1, 1, N_GRID))

    def test_equal_densities(self, single_mode_field):
        lhs, rhs = transport_gap(single_mode_field, None, UNIFORM.copy(),
                                 UNIFORM, "entropy")
        assert lhs == 0.0 and rhs == 0.0

    def test_hand_integrated_example(self, single_mode_field):
        # div V = 2pi cos(2pi x) paired against the half-cosine bump:
        # lhs = 2pi * 1/4 = pi/2; the entropy side is sup|V| sqrt(I)
        m1 = 1.0 + 0.5 * np.cos(2 * np.pi * X)
        lhs, rhs = transport_gap(single_mode_field, None, m1, UNIFORM,
                                 "entropy")
        assert lhs == pytest.approx(math.pi / 2, abs=1e-12)
        assert rhs == pytest.approx(2.2998, abs=1e-3)
        assert lhs <= rhs

    def test_l2_mode_is_tight_for_single_mode(self, single_mode_field):
        # ||V||_{L2} sqrt(E) saturates for one Fourier mode against the
        # uniform reference: both sides equal pi/2
        m1 = 1.0 + 0.5 * np.cos(2 * np.pi * X)
        lhs, rhs = transport_gap(single_mode_field, None, m1, UNIFORM, "l2")
        assert lhs == pytest.approx(math.pi / 2, abs=1e-12)
        assert rhs == pytest.approx(lhs, rel=1e-12)

    @staticmethod
    def _random_density(rng, grid):
        vals = np.ones(grid.shape)
        xs = np.arange(grid.n) / grid.n
        for ax in range(grid.dim):
            shape = [1] * grid.dim
            shape[ax] = grid.n
            vals = vals * (
                1.0 + 0.3 * rng.uniform(-1, 1) * np.cos(2 * np.pi * xs).reshape(shape)
                + 0.3 * rng.uniform(-1, 1) * np.sin(2 * np.pi * xs).reshape(shape))
        return vals / vals.mean()

    @staticmethod
    def _random_field(rng, grid):
        d = grid.dim
        vals = np.zeros((d, d) + grid.shape)
        xs = np.arange(grid.n) / grid.n
        for a in range(d):
            for b in range(d):
                for f in (1, 2):
                    shape = [1] * d
                    shape[b] = grid.n
                    vals[a, b] += rng.normal() * np.cos(2 * np.pi * f * xs).reshape(shape)
                    vals[a, b] += rng.normal() * np.sin(2 * np.pi * f * xs).reshape(shape)
        return MatrixField(grid, vals)

    @pytest.mark.parametrize("mode", ["entropy", "l2"])
    def test_random_draws(self, mode):
        rng = np.random.default_rng(17)
        for trial in range(30):
            d = 1 if trial % 2 == 0 else 2
            grid = TorusGrid(d, 64 if d == 1 else 32)
            v = self._random_field(rng, grid)
            m1 = self._random_density(rng, grid)
            m2 = self._random_density(rng, grid)
            lhs, rhs = transport_gap(v, None, m1, m2, mode)
            assert lhs <= rhs + 1e-8

    def test_validation(self, single_mode_field):
        with pytest.raises(TypeError, match="MatrixField"):
            transport_gap(np.ones(N_GRID), None, UNIFORM, UNIFORM)
        with pytest.raises(ValueError, match="kernel's grid"):
            transport_gap(single_mode_field, None, np.ones(32), UNIFORM)
        with pytest.raises(ValueError, match="mode"):
            transport_gap(single_mode_field, None, UNIFORM, UNIFORM, "tv")


# ----------------------------------------------------------------------
# inner-interaction lemmas (k = 3, d = 1 quadrature)
# ----------------------------------------------------------------------

N_SMALL = 16
X_SMALL = np.arange(N_SMALL) / N_SMALL
M_SMALL = np.ones(N_SMALL)
U_SINGLE = np.sin(2 * np.pi * (X_SMALL[:, None] - X_SMALL[None, :]))


def _random_exchangeable_h(rng, n, m, k=3):
    """Symmetrized product of smooth positive profiles, normalized to a
    probability against m^k."""
    xs = np.arange(n) / n
    profiles = [
        1.0
        + 0.15 * rng.standard_normal() * np.cos(2 * np.pi * xs)
        + 0.15 * rng.standard_normal() * np.sin(2 * np.pi * xs)
        + 0.10 * rng.standard_normal() * np.cos(4 * np.pi * xs)
        for _ in range(k)
    ]
    h = np.zeros((n,) * k)
    for perm in permutations(range(k)):
        term = np.ones((n,) * k)
        for axis, which in enumerate(perm):
            shape = [1] * k
            shape[axis] = n
            term = term * profiles[which].reshape(shape)
        h += term
    h /= math.factorial(k)
    w = m / n
    mass = h
    for _ in range(k):
        mass = np.tensordot(mass, w, axes=([0], [0]))
    return h / float(mass)


class TestInnerLemma:
    def test_flat_h_trivial(self):
        h = np.ones((N_SMALL,) * 3)
        res1 = inner_lemma_check(1, h, M_SMALL, U_SINGLE, 1.0)
        assert res1["lhs"] == 0.0
        # sup U = 1 on this grid: crude = (k-1)^2, fine = (k-1)
        assert res1["bounds"]["crude"] == pytest.approx(4.0, rel=1e-12)
        assert res1["bounds"]["fine"] == pytest.approx(2.0, rel=1e-12)
        res2 = inner_lemma_check(2, h, M_SMALL, U_SINGLE, 1.0)
        assert res2["lhs"] == 0.0
        assert res2["bounds"]["terms"]["gradient"] == 0.0
        assert res2["bounds"]["terms"]["chi_square"] == 0.0
        assert res2["bounds"]["terms"]["constant"] == pytest.approx(4.0)

    @pytest.mark.parametrize("p", [1, 2])
    def test_random_draws_nonnegative_margin(self, p):
        rng = np.random.default_rng(5)
        for _ in range(25):
            h = _random_exchangeable_h(rng, N_SMALL, M_SMALL)
            assert h.min() > 0.0
            res = inner_lemma_check(p, h, M_SMALL, U_SINGLE, 1.0)
            assert res["passed"]
            if p == 1:
                assert res["bounds"]["fine"] - res["lhs"] >= 0.0
                assert res["bounds"]["crude"] - res["lhs"] >= 0.0
            else:
                assert res["bounds"]["p2"] == pytest.approx(
                    sum(res["bounds"]["terms"].values()), rel=1e-12)
                assert res["bounds"]["p2"] - res["lhs"] >= 0.0

    def test_epsilon_tradeoff(self):
        # shrinking the gradient weight must inflate the penalty term
        h = _random_exchangeable_h(np.random.default_rng(3), N_SMALL, M_SMALL)
        r_small = inner_lemma_check(1, h, M_SMALL, U_SINGLE, 0.1)
        r_big = inner_lemma_check(1, h, M_SMALL, U_SINGLE, 10.0)
        assert r_small["passed"] and r_big["passed"]
        assert r_small["lhs"] == pytest.approx(r_big["lhs"], rel=1e-12)

    def test_hypothesis_validation(self):
        with pytest.raises(HypothesisError, match="probability"):
            inner_lemma_check(1, 2.0 * np.ones((N_SMALL,) * 3), M_SMALL,
                              U_SINGLE, 1.0)
        with pytest.raises(HypothesisError, match="nonnegative"):
            inner_lemma_check(1, -np.ones((N_SMALL,) * 3), M_SMALL,
                              U_SINGLE, 1.0)
        lopsided = np.ones((N_SMALL,) * 3) + (
            0.5 * np.sin(2 * np.pi * X_SMALL)[:, None, None]
            * np.cos(2 * np.pi * X_SMALL)[None, :, None])
        with pytest.raises(HypothesisError, match="not exchangeable"):
            inner_lemma_check(1, lopsided, M_SMALL, U_SINGLE, 1.0)

    def test_argument_validation(self):
        h = np.ones((N_SMALL,) * 3)
        with pytest.raises(ValueError, match="p must be 1 or 2"):
            inner_lemma_check(3, h, M_SMALL, U_SINGLE, 1.0)
        with pytest.raises(ValueError, match="two-point"):
            inner_lemma_check(1, h, M_SMALL, np.zeros((8, 8)), 1.0)
        with pytest.raises(ValueError, match="at least two"):
            inner_lemma_check(1, np.ones(N_SMALL), M_SMALL, U_SINGLE, 1.0)


@pytest.fixture(scope="module")
def admissible_phi():
    return random_admissible_phi(N_SMALL, M_SMALL, np.random.default_rng(9),
                                 target_sup=1e-3)


class TestInnerLemmaPairSum:
    def test_flat_h_vanishes_by_centering(self, admissible_phi):
        res = inner_lemma_ibp(1, np.ones((N_SMALL,) * 3), M_SMALL,
                              admissible_phi)
        assert abs(res["lhs"]) < 1e-15
        assert res["Dp"] == 0.0
        # rhs reduces to sup * sqrt(2 C_JW) * N * 3 k^2/N^2 with N = k
        assert res["rhs"] == pytest.approx(
            1e-3 * math.sqrt(2 * c_jw()) * 3.0 * 3.0, rel=1e-9)

    @pytest.mark.parametrize("p", [1, 2])
    def test_random_draws(self, admissible_phi, p):
        rng = np.random.default_rng(11)
        for _ in range(25):
            h = _random_exchangeable_h(rng, N_SMALL, M_SMALL)
            res = inner_lemma_ibp(p, h, M_SMALL, admissible_phi)
            assert res["passed"]
            assert res["Dp"] >= 0.0
            assert res["rhs"] - res["lhs"] >= 0.0

    def test_free_particle_count(self, admissible_phi):
        h = _random_exchangeable_h(np.random.default_rng(2), N_SMALL, M_SMALL)
        res = inner_lemma_ibp(1, h, M_SMALL, admissible_phi, N=50)
        assert res["N"] == 50 and res["passed"]
        with pytest.raises(ValueError, match="at least k"):
            inner_lemma_ibp(1, h, M_SMALL, admissible_phi, N=2)
