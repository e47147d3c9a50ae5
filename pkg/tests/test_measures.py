"""Samplers, characteristic functional, partition function, rejection sampling."""

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import kstest

from spectral_euler.errors import MeasureParameterError, RejectionSamplingError
from spectral_euler.measures import (
    CylinderDensity,
    MeasureSpec,
    characteristic_functional,
    energy_enstrophy_batch,
    mode_variances,
    rejection_sample_batch,
    sample_cylinder_density,
    sample_energy_enstrophy,
    sample_white_noise,
    sine_tilt_density,
    truncated_partition_function,
    uniform_density,
    white_noise_batch,
)
from spectral_euler.observables import renormalized_energy_rows
from spectral_euler.rng import RandomSource, standard_complex
from spectral_euler.spectral import SpectralField, cached_lattice, coeffs_to_chart, hnorm_sq


class TestRandomSource:
    def test_determinism(self):
        a = RandomSource(123, 4).generator().standard_normal(16)
        b = RandomSource(123, 4).generator().standard_normal(16)
        assert np.array_equal(a, b)

    def test_streams_differ(self):
        a = RandomSource(123, 0).generator().standard_normal(16)
        b = RandomSource(123, 1).generator().standard_normal(16)
        assert not np.array_equal(a, b)

    def test_block_generators_reproducible(self):
        src = RandomSource(9, 2)
        a = src.block_generator(1, 17).standard_normal(8)
        b = src.block_generator(1, 17).standard_normal(8)
        c = src.block_generator(1, 18).standard_normal(8)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_standard_complex_unit_variance(self):
        gen = RandomSource(1).generator()
        z = standard_complex(gen, (200_000,))
        assert np.mean(np.abs(z) ** 2) == pytest.approx(1.0, abs=0.01)


class TestWhiteNoise:
    def test_mode_second_moment(self):
        lattice = cached_lattice(2)
        gen = RandomSource(2).generator()
        rows = white_noise_batch(lattice, gen, 100_000)
        second = np.mean(np.abs(rows) ** 2, axis=0)
        assert np.max(np.abs(second - 1.0)) < 0.02

    def test_mean_centred(self):
        lattice = cached_lattice(1)
        gen = RandomSource(3).generator()
        rows = white_noise_batch(lattice, gen, 100_000)
        mean = np.mean(rows, axis=0)
        assert np.max(np.abs(mean.real)) < 3.5 / np.sqrt(100_000 * 2)
        assert np.max(np.abs(mean.imag)) < 3.5 / np.sqrt(100_000 * 2)

    def test_expected_hnorm(self):
        lattice = cached_lattice(1)
        gen = RandomSource(4).generator()
        rows = white_noise_batch(lattice, gen, 50_000)
        hn = np.sum(np.abs(rows) ** 2, axis=1)
        se = np.std(hn, ddof=1) / np.sqrt(hn.size)
        assert abs(np.mean(hn) - 8.0) < 4 * se

    def test_hermitian(self):
        field = sample_white_noise(cached_lattice(3), RandomSource(5))
        mirrored = np.conj(field.coeffs[field.lattice.conj_index])
        assert np.array_equal(mirrored, field.coeffs)


class TestEnergyEnstrophy:
    def test_beta_zero_matches_white_noise_bitwise(self):
        lattice = cached_lattice(2)
        spec = MeasureSpec(beta=0.0, n_max=2)
        a = white_noise_batch(lattice, RandomSource(6).generator(), 8)
        b = energy_enstrophy_batch(spec, lattice, RandomSource(6).generator(), 8)
        assert np.array_equal(a, b)

    @pytest.mark.parametrize(
        "beta,mode,expected",
        [(3.0, (1, 0), 0.25), (-0.5, (1, 1), 4.0 / 3.0), (1.0, (2, 0), 4.0 / 5.0)],
    )
    def test_mode_variance_values(self, beta, mode, expected):
        assert MeasureSpec(beta=beta, n_max=2).mode_variance(mode) == pytest.approx(expected)

    def test_sampled_variances(self):
        lattice = cached_lattice(2)
        spec = MeasureSpec(beta=1.5, n_max=2)
        rows = energy_enstrophy_batch(spec, lattice, RandomSource(7).generator(), 100_000)
        target = mode_variances(spec, lattice)
        observed = np.mean(np.abs(rows) ** 2, axis=0)
        se = np.std(np.abs(rows) ** 2, axis=0, ddof=1) / np.sqrt(rows.shape[0])
        assert np.max(np.abs(observed - target) / se) < 4.0

    def test_component_variances(self):
        # Var(Re) = Var(Im) = |k|^2 / (2 (beta + |k|^2))
        lattice = cached_lattice(1)
        spec = MeasureSpec(beta=-0.5, n_max=1)
        rows = energy_enstrophy_batch(spec, lattice, RandomSource(8).generator(), 100_000)
        for mode in [(1, 0), (1, 1)]:
            idx = lattice.index_of(mode)
            target = spec.mode_variance(mode) / 2.0
            for comp in (rows[:, idx].real, rows[:, idx].imag):
                v = np.var(comp, ddof=1)
                se = np.std(comp ** 2, ddof=1) / np.sqrt(comp.size)
                assert abs(v - target) < 4 * se

    def test_beta_guard(self):
        with pytest.raises(MeasureParameterError):
            MeasureSpec(beta=-1.0, n_max=2)
        with pytest.raises(MeasureParameterError):
            MeasureSpec(beta=-1.0 + 1e-7, n_max=2)
        with pytest.raises(MeasureParameterError):
            MeasureSpec(beta=-1.5, n_max=2)

    def test_sampler_accepts_near_boundary(self):
        spec = MeasureSpec(beta=-0.999, n_max=1)
        field = sample_energy_enstrophy(spec, cached_lattice(1), RandomSource(20))
        assert np.all(np.isfinite(field.coeffs))


class TestCharacteristicFunctional:
    def test_zero_test_function(self):
        spec = MeasureSpec(beta=0.7, n_max=2)
        f = SpectralField.zero(cached_lattice(2))
        assert characteristic_functional(spec, f) == 1.0

    def test_white_noise_unit_norm(self):
        spec = MeasureSpec(beta=0.0, n_max=2)
        f = SpectralField.from_dict(cached_lattice(2), {(1, 0): complex(np.sqrt(0.5))})
        assert hnorm_sq(f) == pytest.approx(1.0)
        assert characteristic_functional(spec, f) == pytest.approx(np.exp(-0.5))

    def test_beta_zero_is_exactly_l2_gaussian(self):
        # at beta = 0 the variance weights are x/x = 1.0 exactly, so the
        # functional equals exp(-hnorm/2) bitwise for any test field
        spec = MeasureSpec(beta=0.0, n_max=3)
        lattice = cached_lattice(3)
        rows = white_noise_batch(lattice, RandomSource(30).generator(), 4)
        for row in rows:
            f = SpectralField(lattice, row, _trusted=True)
            assert characteristic_functional(spec, f) == np.exp(-0.5 * hnorm_sq(f))

    @pytest.mark.parametrize("beta", [-0.5, 0.0, 2.0])
    def test_monte_carlo_oracle(self, beta):
        lattice = cached_lattice(2)
        spec = MeasureSpec(beta=beta, n_max=2)
        f = SpectralField.from_dict(lattice, {(1, 0): 0.4 + 0.2j, (2, 1): 0.3})
        rows = energy_enstrophy_batch(spec, lattice, RandomSource(9).generator(), 100_000)
        pairing = np.real(rows @ np.conj(f.coeffs))
        mc = np.mean(np.cos(pairing))
        se = np.std(np.cos(pairing), ddof=1) / np.sqrt(rows.shape[0])
        assert abs(mc - characteristic_functional(spec, f)) < 3 * se


class TestPartitionFunction:
    def test_beta_zero(self):
        assert truncated_partition_function(0.0, 5.0) == pytest.approx(1.0)

    def test_k1_closed_form(self):
        # half modes inside the Euclidean unit ball: (1,0), (0,1)
        assert truncated_partition_function(1.0, 1.0) == pytest.approx((np.e / 2.0) ** 2)

    def test_monte_carlo_oracle(self):
        lattice = cached_lattice(1)
        gen = RandomSource(10).generator()
        rows = white_noise_batch(lattice, gen, 1_000_000)
        w = np.exp(-1.0 * renormalized_energy_rows(lattice, rows, 1.0))
        se = np.std(w, ddof=1) / np.sqrt(w.size)
        assert abs(np.mean(w) - truncated_partition_function(1.0, 1.0)) < 3 * se

    def test_rejects_bad_arguments(self):
        with pytest.raises(MeasureParameterError):
            truncated_partition_function(-1.0, 1.0)
        with pytest.raises(MeasureParameterError):
            truncated_partition_function(1.0, 0.5)


class TestRejectionSampling:
    def test_uniform_density_matches_white_noise(self):
        lattice = cached_lattice(1)
        rows, _, _ = rejection_sample_batch(
            uniform_density(), lattice, RandomSource(11).generator(), 20_000
        )
        x = np.sqrt(2.0) * rows[:, lattice.index_of((1, 0))].real
        assert kstest(x, "norm").pvalue > 0.01

    def test_tilted_mean_matches_quadrature_oracle(self):
        lattice = cached_lattice(1)
        density = sine_tilt_density(mode=(1, 0), amplitude=0.5)
        rows, _, _ = rejection_sample_batch(
            density, lattice, RandomSource(12).generator(), 200_000
        )
        x = np.sqrt(2.0) * rows[:, lattice.index_of((1, 0))].real
        observed = np.mean(np.sin(x))
        se = np.std(np.sin(x), ddof=1) / np.sqrt(x.size)

        def tilted(f):
            val, _ = quad(
                lambda t: f(t) * (1 + 0.5 * np.sin(t)) * np.exp(-t * t / 2) / np.sqrt(2 * np.pi),
                -12, 12,
            )
            return val

        target = tilted(np.sin) / tilted(lambda t: 1.0)
        assert target == pytest.approx((1 - np.exp(-2.0)) / 4.0, rel=1e-9)
        assert abs(observed - target) < 3 * se

    def test_acceptance_rate_identity(self):
        # bounded bump with bound 2: acceptance ~= INT rho d(mu) / bound
        lattice = cached_lattice(1)
        density = CylinderDensity(
            support_modes=((1, 0),),
            evaluate=lambda x: 2.0 * np.exp(-x[..., 0] ** 2),
            bound=2.0,
        )
        _, proposed, accepted = rejection_sample_batch(
            density, lattice, RandomSource(13).generator(), 50_000
        )
        target = (2.0 / np.sqrt(3.0)) / 2.0  # E[2 exp(-X^2)] / bound
        rate = accepted / proposed
        assert abs(rate - target) < 4 * np.sqrt(target * (1 - target) / proposed)

    def test_loose_bound_fails_with_diagnostic(self):
        lattice = cached_lattice(1)
        density = CylinderDensity(
            support_modes=((1, 0),),
            evaluate=lambda x: np.full(x.shape[:-1], 1e-6),
            bound=1e3,
        )
        with pytest.raises(RejectionSamplingError):
            rejection_sample_batch(
                density, lattice, RandomSource(14).generator(), 10,
                max_proposals=200_000,
            )

    def test_sample_cylinder_density_hermitian(self):
        field = sample_cylinder_density(
            sine_tilt_density(), cached_lattice(2), RandomSource(15)
        )
        mirrored = np.conj(field.coeffs[field.lattice.conj_index])
        assert np.array_equal(mirrored, field.coeffs)


class TestGibbsReweighting:
    def test_weighted_white_noise_reproduces_gibbs_variances(self):
        lattice = cached_lattice(2)
        gen = RandomSource(16).generator()
        rows = white_noise_batch(lattice, gen, 200_000)
        beta, cutoff = 1.0, 2.0
        w = np.exp(-beta * renormalized_energy_rows(lattice, rows, cutoff))
        spec = MeasureSpec(beta=beta, n_max=2)
        for mode in [(1, 0), (1, 1), (2, 0)]:
            idx = lattice.index_of(mode)
            x = np.abs(rows[:, idx]) ** 2
            r = np.sum(w * x) / np.sum(w)
            infl = w * (x - r)
            se = np.sqrt(np.mean(infl ** 2) / x.size) / np.mean(w)
            assert abs(r - spec.mode_variance(mode)) < 4 * se
