"""Kernel construction, decomposition, mollification, serialization."""

import numpy as np
import pytest

from chaoslab import (
    KernelSpec,
    biot_savart,
    bounded_kernel,
    check_decomposition,
    divergence_of_matrix,
    gradient_kernel,
    load_kernel,
    make_grid,
    mollify,
    mv_constant,
    save_kernel,
    v_matrix,
)
from chaoslab.grid import MatrixField, spectrum
from chaoslab.kernels import divergence_of_vector, free_space_vortex, v_matrix_values


def _periodic_vortex(x1, x2, images=6):
    """Exact periodized vortex force via the image-product stream function.

    Separating variables in -lap(psi) = delta - 1 and summing the x2-images
    in closed form gives the absolutely convergent representation

        psi = x2^2/2 - |x2|/2 + C
              - (1/4pi) sum_m log(1 - 2 q_m cos(2pi x1) + q_m^2),

    with q_m = exp(-2pi |x2 + m|).  Each image contributes a factor
    exp(-2pi) ~ 1.9e-3, so six images give full double precision.  The
    force is K = (d2 psi, -d1 psi).
    """
    x1 = (x1 + 0.5) % 1.0 - 0.5
    x2 = (x2 + 0.5) % 1.0 - 0.5
    c = np.cos(2 * np.pi * x1)
    s = np.sin(2 * np.pi * x1)
    k1 = x2 - (0.5 if x2 > 0 else (-0.5 if x2 < 0 else 0.0))
    k2 = 0.0
    for m in range(-images, images + 1):
        y = x2 + m
        q = np.exp(-2 * np.pi * abs(y))
        den = 1.0 - 2.0 * q * c + q * q
        if y != 0:
            k1 += (1.0 if y > 0 else -1.0) * q * (q - c) / den
        k2 += q * s / den
    return np.array([k1, k2])


def _negated_nodes(field):
    """field sampled at -x for a node-sampled array (components leading)."""
    out = field[:, ::-1, ::-1]
    return np.roll(out, 1, axis=(1, 2))


# ----------------------------------------------------------------------
# biot_savart
# ----------------------------------------------------------------------

class TestBiotSavart:
    def test_antisymmetric_at_nodes(self):
        spec = biot_savart(make_grid(2, 64))
        force = spec.force_values()
        assert np.max(np.abs(force + _negated_nodes(force))) < 1e-12

    def test_zero_mean(self):
        spec = biot_savart(make_grid(2, 48))
        force = spec.force_values()
        assert abs(force[0].mean()) < 1e-14
        assert abs(force[1].mean()) < 1e-14
        coef = spec.force_spectrum()
        assert abs(coef[0, 0, 0]) < 1e-14 and abs(coef[1, 0, 0]) < 1e-14

    def test_divergence_free_spectrally(self):
        spec = biot_savart(make_grid(2, 64))
        div = divergence_of_vector(spec.force_values())
        assert np.max(np.abs(div)) < 1e-10

    def test_near_field_matches_free_space(self):
        # the periodized field at distance 1/64 from the vortex equals the
        # free-space formula up to a sub-percent image correction
        target = np.array([0.0, 32.0 / np.pi])
        oracle = _periodic_vortex(1.0 / 64, 0.0)
        assert np.linalg.norm(oracle - target) / np.linalg.norm(target) < 0.05

        diag = _periodic_vortex(1.0 / 64, 1.0 / 64)
        free = free_space_vortex(np.array([1.0 / 64, 1.0 / 64]))
        assert np.linalg.norm(diag - free) / np.linalg.norm(free) < 0.05

    def test_near_field_grid_values_off_axis(self):
        # grid synthesis is faithful at near-field nodes a couple of rows
        # away from the singular row
        n = 256
        force = biot_savart(make_grid(2, n)).force_values()
        for i, j in [(4, 4), (4, 2), (6, 2)]:
            got = force[:, i, j]
            want = _periodic_vortex(i / n, j / n)
            rel = np.linalg.norm(got - want) / np.linalg.norm(want)
            assert rel < 0.05, (i, j, rel)

    def test_near_field_on_axis_half_value(self):
        # On the row through the vortex the square-truncated synthesis
        # reduces to an arctan-tapered sawtooth series whose telescoped
        # limit is half the pointwise value; the Fourier data itself is
        # exact, so only nodal values on this measure-zero row are off.
        n = 256
        force = biot_savart(make_grid(2, n)).force_values()
        ratio = force[1, 4, 0] / _periodic_vortex(4 / n, 0.0)[1]
        assert 0.45 < ratio < 0.55

    def test_free_space_formula(self):
        val = free_space_vortex(np.array([1.0 / 64, 0.0]))
        assert np.allclose(val, [0.0, 32.0 / np.pi], atol=1e-12)
        assert np.array_equal(free_space_vortex(np.zeros(2)), np.zeros(2))

    def test_split_parts_consistent(self):
        spec = biot_savart(make_grid(2, 32))
        direct = divergence_of_matrix(spec.singular_part.values)
        scale = np.max(np.abs(spec.k1_values()))
        assert np.max(np.abs(direct - spec.k1_values())) < 1e-12 * scale

    def test_odd_n_rejected(self):
        with pytest.raises(ValueError, match="even"):
            biot_savart(make_grid(2, 33))

    def test_cutoff_beyond_band_rejected(self):
        with pytest.raises(ValueError, match="cutoff"):
            biot_savart(make_grid(2, 16), mode_cutoff=9)

    def test_needs_some_part(self):
        with pytest.raises(ValueError, match="at least one"):
            KernelSpec(d=2, grid=make_grid(2, 8))


# ----------------------------------------------------------------------
# v_matrix
# ----------------------------------------------------------------------

class TestVMatrix:
    def test_diagonal_value_on_diagonal_point(self):
        vals = v_matrix_values(0.2, 0.2)
        assert abs(vals[0, 0] - 0.125) < 1e-14
        assert abs(vals[1, 1] + 0.125) < 1e-14
        assert vals[0, 1] == 0.0 and vals[1, 0] == 0.0

    def test_odd_in_x2(self):
        for x1, x2 in [(0.1, 0.03), (0.31, 0.21), (-0.2, 0.4)]:
            a = v_matrix_values(x1, x2)
            b = v_matrix_values(x1, -x2)
            assert abs(a[0, 0] + b[0, 0]) < 1e-14

    def test_entries_bounded(self):
        field = v_matrix(make_grid(2, 64))
        assert np.max(np.abs(field.values)) <= 0.25 + 1e-15
        assert np.all(np.isfinite(field.values))

    def test_divergence_recovers_free_space_force(self):
        # centred finite differences of the arctan potential away from the
        # coordinate axes reproduce the free-space force (sign convention
        # (div V)_a = sum_b d_b V_{ba} = +K'_a)
        x = np.array([0.11, 0.07])
        h = 1e-6
        div = np.zeros(2)
        # (div V)_a = d_1 V_{1a} + d_2 V_{2a}; V diagonal so only d_a V_{aa}
        for a in range(2):
            e = np.zeros(2)
            e[a] = h
            vp = v_matrix_values(*(x + e))[a, a]
            vm = v_matrix_values(*(x - e))[a, a]
            div[a] = (vp - vm) / (2 * h)
        force = free_space_vortex(x)
        assert np.linalg.norm(div - force) / np.linalg.norm(force) < 1e-6


# ----------------------------------------------------------------------
# mollify
# ----------------------------------------------------------------------

class TestMollify:
    def test_single_mode_damping(self):
        grid = make_grid(1, 64)
        spec = bounded_kernel(grid, np.sin(2 * np.pi * grid.nodes()))
        eps = 0.1
        out = mollify(spec, eps)
        factor = np.exp(-0.5 * eps**2 * (2 * np.pi) ** 2)  # ~0.8209
        want = factor * np.sin(2 * np.pi * grid.nodes())
        assert np.max(np.abs(out.k2_values()[0] - want)) < 1e-12
        assert out.epsilon == eps

    def test_zero_kernel_stays_zero(self):
        grid = make_grid(1, 32)
        out = mollify(bounded_kernel(grid, np.zeros(32)), 0.2)
        assert np.array_equal(out.k2_values(), np.zeros((1, 32)))

    def test_l2_gap_decreasing(self):
        spec = biot_savart(make_grid(2, 64))
        base = spec.force_values()

        def gap(eps):
            diff = base - mollify(spec, eps).force_values()
            return np.sqrt(np.mean(np.sum(diff**2, axis=0)))

        gaps = [gap(e) for e in (0.2, 0.1, 0.05)]
        assert gaps[0] > gaps[1] > gaps[2]

    def test_never_increases_l2_norm(self):
        rng = np.random.default_rng(7)
        grid = make_grid(1, 48)
        for _ in range(5):
            coef = np.zeros(48, dtype=complex)
            for k in (1, 2, 3, 5):
                c = rng.normal() + 1j * rng.normal()
                coef[k] = c
                coef[-k] = np.conj(c)
            vals = np.fft.ifft(coef * 48).real
            spec = bounded_kernel(grid, vals)
            for eps in (0.05, 0.2, 0.45):
                out = mollify(spec, eps)
                norm0 = np.sqrt(np.mean(spec.k2_values() ** 2))
                norm1 = np.sqrt(np.mean(out.k2_values() ** 2))
                assert norm1 <= norm0 + 1e-15

    def test_preserves_provenance_and_structure(self):
        spec = biot_savart(make_grid(2, 32))
        out = mollify(spec, 0.1)
        assert out.provenance == "biot_savart"
        assert out.singular_part is not None
        assert out.k1_spectrum is not None
        # every retained mode damped, none amplified
        assert np.all(np.abs(out.k1_spectrum) <= np.abs(spec.k1_spectrum) + 1e-15)

    @pytest.mark.parametrize("eps", [0.0, 0.5, -0.1, 0.7])
    def test_width_out_of_range(self, eps):
        spec = bounded_kernel(make_grid(1, 16), np.zeros(16))
        with pytest.raises(ValueError, match="width"):
            mollify(spec, eps)


# ----------------------------------------------------------------------
# check_decomposition
# ----------------------------------------------------------------------

class TestCheckDecomposition:
    def test_biot_savart_passes(self):
        report = check_decomposition(biot_savart(make_grid(2, 48)))
        assert report["ok"]
        assert report["max_split_residual"] <= 1e-8 * report["scale"]
        assert report["max_divergence"] <= 1e-8 * report["scale"]

    def test_bounded_only_vacuous_pass(self):
        grid = make_grid(1, 32)
        spec = bounded_kernel(grid, np.cos(2 * np.pi * grid.nodes()))
        report = check_decomposition(spec)
        assert report["ok"]
        assert report["max_split_residual"] == 0.0

    def test_corrupted_v_reports_residual(self):
        from dataclasses import replace

        spec = biot_savart(make_grid(2, 32))
        vals = spec.singular_part.values.copy()
        vals[0, 0, 3, 5] += 0.1
        bad = replace(spec, singular_part=MatrixField(spec.grid, vals))
        report = check_decomposition(bad)
        assert report["max_split_residual"] > 1e-3
        assert not report["ok"]


# ----------------------------------------------------------------------
# mv_constant
# ----------------------------------------------------------------------

class TestMvConstant:
    def test_uniform_density_gives_l2_norm(self):
        spec = biot_savart(make_grid(2, 32))
        uniform = np.ones((32, 32))
        got = mv_constant(spec.singular_part, [uniform], [0.0])
        want = float(np.mean(spec.singular_part.frobenius_squared()))
        assert abs(got - want) < 1e-14

    def test_constant_matrix(self):
        grid = make_grid(2, 16)
        vals = np.zeros((2, 2, 16, 16))
        vals[0, 0] = 2.0
        vals[1, 1] = 1.0
        v = MatrixField(grid, vals)
        m = np.broadcast_to(
            1.0 + 0.3 * np.cos(2 * np.pi * grid.mesh()[0]), (16, 16))
        assert abs(mv_constant(v, [m], [0.0]) - 5.0) < 1e-12

    def test_single_mode_against_direct_sum(self):
        n = 64
        grid = make_grid(1, n)
        x = grid.nodes()
        v = MatrixField(grid, np.sin(2 * np.pi * x)[None, None])
        m = 1.0 + 0.5 * np.cos(4 * np.pi * x)
        got = mv_constant(v, [m], [0.0])
        # direct O(n^2) quadrature of the smoothed squared norm
        vsq = np.sin(2 * np.pi * x) ** 2
        direct = max(
            np.mean(vsq[(i - np.arange(n)) % n] * m) for i in range(n)
        )
        assert abs(got - direct) < 1e-13
        # analytic: sin^2 * (1 + a cos(4 pi x)) smooths to 1/2 - (a/4) cos(4 pi x)
        assert abs(got - 0.625) < 1e-12

    def test_sup_over_times(self):
        grid = make_grid(1, 32)
        x = grid.nodes()
        v = MatrixField(grid, np.sin(2 * np.pi * x)[None, None])
        flat = np.ones(32)
        peaked = 1.0 + 0.5 * np.cos(4 * np.pi * x)
        lo = mv_constant(v, [flat], [0.0])
        hi = mv_constant(v, [flat, peaked], [0.0, 1.0])
        assert hi > lo

    def test_empty_times_rejected(self):
        grid = make_grid(1, 16)
        v = MatrixField(grid, np.zeros((1, 1, 16)))
        with pytest.raises(ValueError, match="time"):
            mv_constant(v, [], [])
        with pytest.raises(ValueError, match="time"):
            mv_constant(v, [np.ones(16)], [0.0, 1.0])


# ----------------------------------------------------------------------
# other constructors
# ----------------------------------------------------------------------

def test_gradient_kernel_differentiates_potential():
    grid = make_grid(1, 64)
    x = grid.nodes()
    spec = gradient_kernel(grid, np.sin(2 * np.pi * x))
    want = 2 * np.pi * np.cos(2 * np.pi * x)
    assert np.max(np.abs(spec.k1_values()[0] - want)) < 1e-10
    assert spec.bounded_part is None
    assert spec.provenance == "fourier_series"


def test_gradient_kernel_needs_1d():
    with pytest.raises(ValueError, match="1D"):
        gradient_kernel(make_grid(2, 16), np.zeros((16, 16)))


def test_bounded_kernel_promotes_scalar_values():
    grid = make_grid(1, 32)
    spec = bounded_kernel(grid, np.cos(2 * np.pi * grid.nodes()))
    assert spec.k2_values().shape == (1, 32)
    assert spec.sup_v() == 0.0
    assert abs(spec.sup_k2() - 1.0) < 1e-12


def test_divergence_of_matrix_index_convention():
    # (div V)_a = sum_b d_b V_{ba}: first index is the derivative axis
    n = 48
    grid = make_grid(2, n)
    xx, yy = np.broadcast_arrays(*grid.mesh())
    coords = [xx, yy]
    vals = np.stack([
        np.stack([np.sin(2 * np.pi * coords[b]) * np.cos(2 * np.pi * coords[a])
                  for a in range(2)])
        for b in range(2)
    ])
    got = divergence_of_matrix(vals)
    for a in range(2):
        want = np.zeros((n, n))
        for b in range(2):
            if b == a:
                want += 2 * np.pi * np.cos(4 * np.pi * coords[a])
            else:
                want += 2 * np.pi * np.cos(2 * np.pi * coords[b]) \
                    * np.cos(2 * np.pi * coords[a])
        assert np.max(np.abs(got[a] - want)) < 1e-10


# ----------------------------------------------------------------------
# serialization
# ----------------------------------------------------------------------

class TestSaveLoad:
    def test_biot_savart_roundtrip(self, tmp_path):
        spec = biot_savart(make_grid(2, 32))
        save_kernel(spec, tmp_path / "bs")
        back = load_kernel(tmp_path / "bs")
        assert back.d == 2 and back.grid.n == 32
        assert back.provenance == "biot_savart"
        assert np.array_equal(back.singular_part.values, spec.singular_part.values)
        scale = np.max(np.abs(spec.force_values()))
        assert np.max(np.abs(back.force_values() - spec.force_values())) \
            < 1e-10 * scale

    def test_bounded_roundtrip(self, tmp_path):
        grid = make_grid(1, 24)
        spec = bounded_kernel(grid, np.cos(2 * np.pi * grid.nodes()))
        save_kernel(spec, tmp_path / "k")
        back = load_kernel(tmp_path / "k")
        assert back.singular_part is None
        assert np.array_equal(back.k2_values(), spec.k2_values())

    def test_epsilon_survives(self, tmp_path):
        spec = mollify(biot_savart(make_grid(2, 16)), 0.125)
        save_kernel(spec, tmp_path / "m")
        assert load_kernel(tmp_path / "m").epsilon == 0.125
