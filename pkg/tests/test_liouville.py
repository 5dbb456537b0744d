"""Tests for the joint N-particle solver, BBGKY residuals, and the
divergence evolution identity.

The strongest oracle here is an independent stiff ODE integration of the
band-limited Fourier coefficient system for N=2 (scipy RK45 at rtol
1e-11), assembled by hand with explicit index arithmetic.  The sector
and dense backends must both land on it to second order in dt, and on
each other to machine precision.
"""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from chaoslab import (
    biot_savart,
    bounded_kernel,
    make_grid,
    mollify,
    solve_liouville,
    solve_mckean_vlasov,
)
from chaoslab.divergences import divergence_ladder, relative_entropy
from chaoslab.grid import tensorize
from chaoslab.liouville import bbgky_residual, evolution_identity_check


def _cosine_setup(n):
    grid = make_grid(1, n)
    x = grid.nodes()
    kern = bounded_kernel(grid, np.cos(2.0 * np.pi * x))
    m0 = 1.0 + 0.5 * np.sin(2.0 * np.pi * x)
    return grid, kern, m0


def _zero_setup(n):
    grid = make_grid(1, n)
    x = grid.nodes()
    kern = bounded_kernel(grid, np.zeros(n))
    m0 = 1.0 + 0.5 * np.sin(2.0 * np.pi * x)
    return grid, kern, m0


# shared solves (module scope: several checks read the same trajectories)


@pytest.fixture(scope="module")
def pair_runs():
    """N=3 cosine-kernel runs at two step sizes, plus matching references."""
    _, kern, m0 = _cosine_setup(32)
    out = {}
    for tag, dt in (("coarse", 1e-4), ("fine", 5e-5)):
        out[tag] = solve_liouville(kern, m0, N=3, T=0.01, dt=dt, store_every=1)
        out["mf_" + tag] = solve_mckean_vlasov(kern, m0, 0.01, dt, store_every=1)
    return out


@pytest.fixture(scope="module")
def zero_runs():
    _, kern, m0 = _zero_setup(32)
    traj = solve_liouville(kern, m0, N=3, T=0.01, dt=1e-4, store_every=1)
    mf = solve_mckean_vlasov(kern, m0, 0.01, 1e-4, store_every=1)
    return traj, mf


class TestTensorizedHeat:
    @pytest.mark.parametrize("method", ["sector", "dense"])
    def test_no_interaction_stays_tensorized(self, method):
        grid, kern, m0 = _zero_setup(24)
        x = grid.nodes()
        traj = solve_liouville(kern, m0, N=3, T=0.01, dt=1e-4,
                               store_every=100, method=method)
        amp = 0.5 * np.exp(-4.0 * np.pi**2 * 0.01)
        heat = 1.0 + amp * np.sin(2.0 * np.pi * x)
        exact = tensorize(heat, 3)
        assert np.max(np.abs(traj.joint(-1) - exact)) < 1e-6

    def test_uniform_is_stationary(self):
        grid, kern, _ = _cosine_setup(32)
        traj = solve_liouville(kern, np.ones(32), N=3, T=0.01, dt=1e-3,
                               store_every=5)
        for i in range(len(traj.times)):
            assert np.max(np.abs(traj.joint(i) - 1.0)) == 0.0

    def test_zero_kernel_ladder_stays_flat(self, zero_runs):
        # chaos is exactly propagated without interaction: every rung of
        # the divergence ladder stays at rounding level
        traj, mf = zero_runs
        for t in (0.0, 0.005, 0.01):
            i = traj.index_of(t)
            lad = divergence_ladder(traj.joint(i), mf.state_at(t), d=1)
            assert max(lad.H) < 1e-6
            assert max(lad.D) < 1e-6


class TestBackendAgreement:
    def test_sector_matches_dense_exactly(self):
        # both backends integrate the same band-limited system with the
        # same scheme, so they differ only by operation order
        _, kern, m0 = _cosine_setup(16)
        kw = dict(N=3, T=0.005, dt=1e-4, store_every=50)
        tr_s = solve_liouville(kern, m0, method="sector", **kw)
        tr_d = solve_liouville(kern, m0, method="dense", **kw)
        assert tr_s.backend == "sector" and tr_d.backend == "dense"
        for i in range(len(tr_s.times)):
            assert np.max(np.abs(tr_s.joint(i) - tr_d.joint(i))) < 1e-12
            for k in (1, 2):
                gap = np.max(np.abs(tr_s.marginal(i, k) - tr_d.marginal(i, k)))
                assert gap < 1e-12

    def test_auto_picks_sector_in_one_dim(self):
        _, kern, m0 = _cosine_setup(16)
        traj = solve_liouville(kern, m0, N=2, T=0.001, dt=1e-4)
        assert traj.backend == "sector"
        assert traj.coupling == 1.0


class TestFourierOdeOracle:
    """Independent RK45 integration of the N=2 coefficient system."""

    N_GRID = 12
    BAND = 4  # 12 // 3

    def _oracle_values(self, T):
        B, n = self.BAND, self.N_GRID
        W = 2 * B + 1

        def idx(a):
            return a + B

        y0 = np.zeros((W, W), dtype=complex)
        one_d = {0: 1.0, 1: -0.25j, -1: 0.25j}  # 1 + 0.5 sin(2 pi x)
        for a, ca in one_d.items():
            for b, cb in one_d.items():
                y0[idx(a), idx(b)] = ca * cb

        khat = {1: 0.5, -1: 0.5}  # cos(2 pi x)

        def rhs(_, y):
            m = y.reshape(W, W)
            out = np.zeros_like(m)
            for a in range(-B, B + 1):
                for b in range(-B, B + 1):
                    acc = -4.0 * np.pi**2 * (a * a + b * b) * m[idx(a), idx(b)]
                    c1 = 0.0
                    c2 = 0.0
                    for q, kq in khat.items():
                        if abs(a - q) <= B and abs(b + q) <= B:
                            c1 += kq * m[idx(a - q), idx(b + q)]
                        if abs(a + q) <= B and abs(b - q) <= B:
                            c2 += kq * m[idx(a + q), idx(b - q)]
                    acc -= 2j * np.pi * (a * c1 + b * c2)
                    out[idx(a), idx(b)] = acc
            return out.ravel()

        sol = solve_ivp(rhs, (0.0, T), y0.ravel(), rtol=1e-11, atol=1e-14)
        yf = sol.y[:, -1].reshape(W, W)
        full = np.zeros((n, n), dtype=complex)
        for a in range(-B, B + 1):
            for b in range(-B, B + 1):
                full[a % n, b % n] = yf[idx(a), idx(b)]
        return np.fft.ifftn(full * full.size).real

    def test_both_backends_match_oracle_to_second_order(self):
        _, kern, m0 = _cosine_setup(self.N_GRID)
        T = 0.05
        target = self._oracle_values(T)
        errs = {}
        for dt in (2e-4, 1e-4):
            tr_s = solve_liouville(kern, m0, N=2, T=T, dt=dt, store_every=10**9)
            tr_d = solve_liouville(kern, m0, N=2, T=T, dt=dt,
                                   store_every=10**9, method="dense")
            err_s = np.max(np.abs(tr_s.joint(-1) - target))
            err_d = np.max(np.abs(tr_d.states[-1] - target))
            assert abs(err_s - err_d) < 1e-13
            errs[dt] = err_s
        assert errs[1e-4] < 1e-7
        assert errs[2e-4] / errs[1e-4] > 3.0  # second-order step error


class TestChaosBreaking:
    def test_pair_entropy_positive_small_and_resolution_stable(self):
        # interaction generates order-1/N^2 correlations: the marginal
        # drifts measurably off the reference but only barely
        vals = {}
        for n in (48, 64):
            _, kern, m0 = _cosine_setup(n)
            traj = solve_liouville(kern, m0, N=2, T=0.1, dt=1e-4,
                                   store_every=1000)
            mf = solve_mckean_vlasov(kern, m0, 0.1, 1e-4, store_every=1000)
            vals[n] = relative_entropy(traj.marginal(-1, 1), mf.states[-1])
        assert vals[48] > 0.0
        assert vals[48] < 1e-2
        assert abs(vals[48] - vals[64]) / vals[64] < 0.05


class TestInvariantsAlongFlow:
    def test_mass_and_exchangeability(self):
        _, kern, m0 = _cosine_setup(16)
        traj = solve_liouville(kern, m0, N=3, T=0.005, dt=1e-4,
                               store_every=10, method="dense")
        assert max(traj.mass_residuals) < 1e-10
        assert max(traj.exch_residuals) < 1e-7
        for i in range(len(traj.times)):
            joint = traj.joint(i)
            assert abs(joint.mean() - 1.0) < 1e-12
            assert joint.min() > -1e-8
            assert traj.exchangeability(i) < 1e-7

    def test_two_dim_mollified_vortex_run(self):
        grid = make_grid(2, 16)
        kern = mollify(biot_savart(grid), 2.0 / 16)
        x1 = grid.mesh()[0]
        m0 = np.broadcast_to(1.0 + 0.25 * np.cos(2.0 * np.pi * x1),
                             (16, 16)).copy()
        traj = solve_liouville(kern, m0, N=2, T=0.002, dt=1e-4, store_every=10)
        assert traj.backend == "dense"
        assert max(traj.mass_residuals) < 1e-10
        assert max(traj.exch_residuals) < 1e-7

    def test_entropy_tower_nondecreasing(self, pair_runs):
        traj, mf = pair_runs["coarse"], pair_runs["mf_coarse"]
        i = traj.index_of(0.01)
        lad = divergence_ladder(traj.joint(i), mf.state_at(0.01), d=1)
        H = lad.H
        assert all(H[k + 1] >= H[k] - 1e-12 for k in range(len(H) - 1))


class TestBbgkyResidual:
    def test_zero_kernel_control(self, zero_runs):
        traj, _ = zero_runs
        assert bbgky_residual(traj, 1, 0.005) < 1e-5
        assert bbgky_residual(traj, 2, 0.005) < 1e-5

    @pytest.mark.parametrize("k", [1, 2])
    def test_residual_shrinks_with_dt(self, pair_runs, k):
        r_coarse = bbgky_residual(pair_runs["coarse"], k, 0.005)
        r_fine = bbgky_residual(pair_runs["fine"], k, 0.005)
        assert r_coarse / r_fine >= 3.0

    def test_corrupted_higher_marginal_detected(self, pair_runs):
        # replacing the (k+1)-marginal by a tensor product discards the
        # pair correlation the outer term feeds on
        traj = pair_runs["coarse"]
        i = traj.index_of(0.005)
        honest = bbgky_residual(traj, 1, 0.005)
        fake = tensorize(traj.marginal(i, 1), 2)
        corrupted = bbgky_residual(traj, 1, 0.005, kp1_override=fake)
        assert corrupted > 10.0 * honest

    def test_level_bounds(self, pair_runs):
        traj = pair_runs["coarse"]
        with pytest.raises(ValueError, match="1 <= k < N"):
            bbgky_residual(traj, 3, 0.005)
        with pytest.raises(ValueError, match="1 <= k < N"):
            bbgky_residual(traj, 0, 0.005)

    def test_needs_interior_stencil(self, pair_runs):
        traj = pair_runs["coarse"]
        with pytest.raises(ValueError, match="two stored neighbors"):
            bbgky_residual(traj, 1, 0.0)
        with pytest.raises(ValueError, match="two stored neighbors"):
            bbgky_residual(traj, 1, 0.01)


class TestEvolutionIdentity:
    def test_zero_kernel_interaction_terms_vanish(self, zero_runs):
        traj, mf = zero_runs
        rep = evolution_identity_check(traj, mf, 2, 2, 0.005)
        for term in ("A1", "A2", "B1", "B2"):
            assert rep[term] == 0.0
        # both sides sit at rounding level: the balance holds absolutely
        assert abs(rep["lhs"] - rep["rhs"]) < 1e-4
        assert abs(rep["lhs"] + rep["E"]) < 1e-4

    @pytest.mark.parametrize("k,p", [(1, 1), (1, 2), (2, 1), (2, 2)])
    def test_residual_small_and_shrinks(self, pair_runs, k, p):
        r1 = evolution_identity_check(
            pair_runs["coarse"], pair_runs["mf_coarse"], k, p, 0.005)
        r2 = evolution_identity_check(
            pair_runs["fine"], pair_runs["mf_fine"], k, p, 0.005)
        assert r1["residual"] < 5e-2
        assert r1["residual"] / r2["residual"] >= 3.0

    def test_no_matrix_part_means_no_first_terms(self, pair_runs):
        rep = evolution_identity_check(
            pair_runs["coarse"], pair_runs["mf_coarse"], 2, 2, 0.005)
        assert rep["A1"] == 0.0
        assert rep["B1"] == 0.0
        assert rep["A2"] != 0.0 or rep["B2"] != 0.0

    def test_rejects_bad_arguments(self, pair_runs):
        traj, mf = pair_runs["coarse"], pair_runs["mf_coarse"]
        with pytest.raises(ValueError, match="p must be 1 or 2"):
            evolution_identity_check(traj, mf, 1, 3, 0.005)
        with pytest.raises(ValueError, match="1 <= k < N"):
            evolution_identity_check(traj, mf, 3, 1, 0.005)


class TestValidation:
    def test_rejects_single_particle(self):
        _, kern, m0 = _cosine_setup(16)
        with pytest.raises(ValueError, match="at least two particles"):
            solve_liouville(kern, m0, N=1, T=0.001, dt=1e-4)

    def test_sector_is_one_dimensional(self):
        grid = make_grid(2, 16)
        kern = mollify(biot_savart(grid), 0.125)
        m0 = np.ones((16, 16))
        with pytest.raises(ValueError, match="one-dimensional"):
            solve_liouville(kern, m0, N=2, T=0.001, dt=1e-4, method="sector")

    def test_sector_memory_envelope(self):
        _, kern, m0 = _cosine_setup(64)
        with pytest.raises(ValueError, match="memory envelope"):
            solve_liouville(kern, m0, N=6, T=0.001, dt=1e-4, method="sector")

    def test_dense_element_cap(self):
        _, kern, m0 = _cosine_setup(32)
        with pytest.raises(ValueError, match="element cap"):
            solve_liouville(kern, m0, N=7, T=0.001, dt=1e-4, method="dense")

    def test_fractional_steps_rejected(self):
        _, kern, m0 = _cosine_setup(16)
        with pytest.raises(ValueError, match="integer number of steps"):
            solve_liouville(kern, m0, N=2, T=0.00105, dt=1e-4)

    def test_marginal_level_checked(self):
        _, kern, m0 = _cosine_setup(16)
        traj = solve_liouville(kern, m0, N=2, T=0.001, dt=1e-4)
        with pytest.raises(ValueError, match="marginal level"):
            traj.marginal(0, 3)
        with pytest.raises(KeyError, match="not stored"):
            traj.index_of(0.5)
