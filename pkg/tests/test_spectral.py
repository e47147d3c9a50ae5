"""Lattice construction, Hermitian fields, norms, Biot-Savart, grid synthesis."""

import io

import numpy as np
import pytest

from spectral_euler.errors import FieldFormatError, LatticeError
from spectral_euler.measures import white_noise_batch
from spectral_euler.rng import RandomSource
from spectral_euler.spectral import (
    SpectralField,
    biot_savart,
    build_lattice,
    cached_lattice,
    chart_to_field,
    coeffs_to_chart,
    evaluate_on_grid,
    field_to_chart,
    grid_imaginary_residue,
    hnorm_sq,
    read_field_batch_csv,
    read_field_csv,
    sobolev_norm,
    velocity_divergence_max,
    write_field_batch_csv,
    write_field_csv,
)


def random_field(n_max, seed=0):
    lattice = cached_lattice(n_max)
    gen = RandomSource(seed).generator()
    return SpectralField(lattice, white_noise_batch(lattice, gen, 1)[0], _trusted=True)


class TestBuildLattice:
    @pytest.mark.parametrize("n,expected", [(1, 8), (2, 24), (3, 48), (4, 80)])
    def test_mode_count(self, n, expected):
        assert len(build_lattice(n).modes) == expected
        assert len(build_lattice(n).modes) == (2 * n + 1) ** 2 - 1

    def test_half_lattice_n1(self):
        # derived by enumerating and applying the rule kx>0 or (kx==0, ky>0)
        assert build_lattice(1).half == ((0, 1), (1, -1), (1, 0), (1, 1))

    def test_half_partition(self):
        lattice = build_lattice(3)
        half = set(lattice.half)
        neg = {(-kx, -ky) for kx, ky in half}
        assert half | neg == set(lattice.modes)
        assert half & neg == set()

    def test_deterministic_ordering(self):
        assert build_lattice(2).modes == build_lattice(2).modes
        assert build_lattice(2).modes == cached_lattice(2).modes

    @pytest.mark.parametrize("bad", [0, -1, -7])
    def test_rejects_nonpositive(self, bad):
        with pytest.raises(LatticeError):
            build_lattice(bad)

    def test_rejects_non_integer(self):
        with pytest.raises(LatticeError):
            build_lattice(2.5)


class TestSpectralField:
    def test_rejects_non_hermitian(self):
        lattice = build_lattice(1)
        coeffs = np.zeros(lattice.size, dtype=complex)
        coeffs[lattice.index_of((1, 0))] = 1.0 + 2.0j
        coeffs[lattice.index_of((-1, 0))] = 1.0 + 2.0j  # should be the conjugate
        with pytest.raises(FieldFormatError):
            SpectralField(lattice, coeffs)

    def test_from_dict_mirrors_conjugates(self):
        lattice = build_lattice(2)
        f = SpectralField.from_dict(lattice, {(1, 1): 0.5 + 0.25j})
        assert f[(-1, -1)] == (0.5 - 0.25j)

    def test_hermitian_exact_after_construction(self):
        f = random_field(3, seed=5)
        mirrored = np.conj(f.coeffs[f.lattice.conj_index])
        assert np.array_equal(mirrored, f.coeffs)

    def test_wrong_length_rejected(self):
        lattice = build_lattice(1)
        with pytest.raises(FieldFormatError):
            SpectralField(lattice, np.zeros(5, dtype=complex))


class TestNorms:
    def test_hnorm_zero(self):
        assert hnorm_sq(SpectralField.zero(build_lattice(2))) == 0.0

    def test_hnorm_single_pair(self):
        f = SpectralField.from_dict(build_lattice(1), {(1, 0): 1.0})
        assert hnorm_sq(f) == pytest.approx(2.0)

    def test_hnorm_complex_pair(self):
        f = SpectralField.from_dict(build_lattice(1), {(1, 0): 3 + 4j})
        assert hnorm_sq(f) == pytest.approx(50.0)

    def test_sobolev_s0_equals_hnorm(self):
        f = random_field(2, seed=1)
        assert sobolev_norm(f, 0.0) == pytest.approx(np.sqrt(hnorm_sq(f)))

    def test_sobolev_single_pair(self):
        f = SpectralField.from_dict(build_lattice(1), {(1, 1): 1.0})
        # two conjugate modes, |k|^2 = 2, s = -2: sqrt(2 * 2^-2) = sqrt(1/2)
        assert sobolev_norm(f, -2.0) == pytest.approx(np.sqrt(0.5))

    def test_sobolev_zero_field(self):
        assert sobolev_norm(SpectralField.zero(build_lattice(2)), -1.3) == 0.0


class TestRealChart:
    def test_round_trip_identity(self):
        f = random_field(3, seed=2)
        coords = field_to_chart(f)
        g = chart_to_field(f.lattice, coords)
        assert np.max(np.abs(g.coeffs - f.coeffs)) < 1e-14

    def test_isometry(self):
        f = random_field(2, seed=3)
        coords = field_to_chart(f)
        assert np.sum(coords ** 2) == pytest.approx(hnorm_sq(f), rel=1e-13)

    def test_dimension(self):
        lattice = build_lattice(2)
        assert field_to_chart(SpectralField.zero(lattice)).shape == (lattice.dimension,)
        assert lattice.dimension == lattice.size


class TestBiotSavart:
    def test_formula_single_mode(self):
        f = SpectralField.from_dict(build_lattice(1), {(1, 0): 1.0})
        u1, u2 = biot_savart(f)
        assert u1[(1, 0)] == 0.0
        assert u2[(1, 0)] == -1.0j

    def test_zero_field(self):
        u1, u2 = biot_savart(SpectralField.zero(build_lattice(2)))
        assert hnorm_sq(u1) == 0.0 and hnorm_sq(u2) == 0.0

    def test_divergence_free_exact(self):
        f = random_field(4, seed=7)
        assert velocity_divergence_max(f) == 0.0

    def test_divergence_free_naive_contraction(self):
        # contracting the stored components directly is exact only to round-off
        f = random_field(4, seed=7)
        u1, u2 = biot_savart(f)
        k = f.lattice.k_array
        div = k[:, 0] * u1.coeffs + k[:, 1] * u2.coeffs
        assert np.max(np.abs(div)) < 1e-14 * np.max(np.abs(f.coeffs))

    def test_components_hermitian(self):
        f = random_field(3, seed=8)
        for u in biot_savart(f):
            mirrored = np.conj(u.coeffs[u.lattice.conj_index])
            assert np.array_equal(mirrored, u.coeffs)


class TestGridEvaluation:
    def test_cosine(self):
        f = SpectralField.from_dict(build_lattice(1), {(1, 0): 0.5})
        g = 8
        vals = evaluate_on_grid(f, g)
        x = 2 * np.pi * np.arange(g) / g
        expected = np.cos(x)[:, None] * np.ones(g)[None, :]
        assert np.max(np.abs(vals - expected)) < 1e-14

    def test_zero_field(self):
        vals = evaluate_on_grid(SpectralField.zero(build_lattice(2)), 8)
        assert np.all(vals == 0.0)

    def test_imaginary_residue_small(self):
        f = random_field(3, seed=9)
        assert grid_imaginary_residue(f, 16) < 1e-12

    def test_rejects_undersized_grid(self):
        f = random_field(3, seed=10)
        with pytest.raises(LatticeError):
            evaluate_on_grid(f, 6)

    def test_parseval(self):
        f = random_field(4, seed=11)
        vals = evaluate_on_grid(f, 16)
        assert np.mean(vals ** 2) == pytest.approx(hnorm_sq(f), rel=1e-10)

    def test_direct_and_fft_paths_agree(self):
        # small field forced through both paths by varying the grid size
        f = random_field(2, seed=12)
        direct = evaluate_on_grid(f, 5)  # 24 * 25 = 600 terms -> direct
        fft = evaluate_on_grid(f, 25)  # 24 * 625 = 15000 terms -> FFT
        assert np.mean(direct ** 2) == pytest.approx(np.mean(fft ** 2), rel=1e-10)
        # same grid, both along the FFT path vs direct summation cross-check
        f2 = random_field(1, seed=13)
        a = evaluate_on_grid(f2, 9)  # 8 * 81 = 648 terms -> direct
        lattice = f2.lattice
        spec = np.zeros((9, 9), dtype=complex)
        k = lattice.k_array
        spec[k[:, 0] % 9, k[:, 1] % 9] = f2.coeffs
        b = np.real(np.fft.ifft2(spec) * 81)
        assert np.max(np.abs(a - b)) < 1e-10


class TestCsvRoundTrip:
    def test_single_field(self):
        f = random_field(2, seed=14)
        buf = io.StringIO()
        write_field_csv(f, buf)
        buf.seek(0)
        g = read_field_csv(buf)
        assert np.array_equal(g.coeffs, f.coeffs)
        assert g.lattice.modes == f.lattice.modes

    def test_reader_verifies_symmetry(self):
        f = random_field(1, seed=15)
        buf = io.StringIO()
        write_field_csv(f, buf)
        lines = buf.getvalue().splitlines()
        for i, line in enumerate(lines):
            if line.startswith("1,-1,"):
                parts = line.split(",")
                parts[2] = "9.9"  # break coeff(1,-1) == conj(coeff(-1,1))
                lines[i] = ",".join(parts)
        with pytest.raises(FieldFormatError):
            read_field_csv(io.StringIO("\n".join(lines) + "\n"))

    def test_batch_round_trip(self):
        lattice = cached_lattice(2)
        gen = RandomSource(16).generator()
        batch = white_noise_batch(lattice, gen, 3)
        buf = io.StringIO()
        write_field_batch_csv(lattice, batch, buf)
        buf.seek(0)
        lat2, loaded = read_field_batch_csv(buf)
        assert lat2.modes == lattice.modes
        assert np.array_equal(loaded, batch)
