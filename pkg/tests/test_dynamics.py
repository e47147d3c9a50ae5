"""Drift algebra, cutoffs, integrators, generator, Fokker-Planck residual."""

import numpy as np
import pytest

from spectral_euler.cylinder import CylinderFunction, Polynomial, coordinate_function
from spectral_euler.dynamics import (
    CutoffSpec,
    IntegratorConfig,
    chart_divergence,
    cutoff_chart_divergence,
    divergence_check,
    drift_batch,
    em_rows,
    eval_cutoff_drift,
    eval_drift,
    eval_generator,
    eval_generator_rows,
    guard_rows,
    ou_split_rows,
    rk4_rows,
    step_deterministic,
    step_stochastic,
)
from spectral_euler.errors import OverflowGuardError
from spectral_euler.measures import white_noise_batch
from spectral_euler.rng import RandomSource
from spectral_euler.runner import RunConfig, run_ensemble
from spectral_euler.spectral import (
    SpectralField,
    cached_lattice,
    field_to_chart,
    hnorm_sq,
)


def white_field(n_max, seed):
    lattice = cached_lattice(n_max)
    gen = RandomSource(seed).generator()
    return SpectralField(lattice, white_noise_batch(lattice, gen, 1)[0], _trusted=True)


class TestDrift:
    def test_hand_computed_component(self):
        # N=2, xi_(1,0) = xi_(1,1) = 1: the (2,1) component sums the k=(1,0)
        # term (0,-1).(2,1)/1 = -1 and the k=(1,1) term (1,-1).(2,1)/2 = +1/2,
        # inner sum -1/2, leading minus gives +1/2.
        f = SpectralField.from_dict(cached_lattice(2), {(1, 0): 1.0, (1, 1): 1.0})
        res = eval_drift(f)
        assert abs(res.value[(2, 1)] - 0.5) <= 1e-12

    def test_single_pair_support_is_stationary(self):
        f = SpectralField.from_dict(cached_lattice(3), {(2, 1): 1.3 - 0.4j})
        res = eval_drift(f)
        assert hnorm_sq(res.value) == 0.0

    def test_pairing_bound(self):
        for seed in range(5):
            f = white_field(4, seed)
            res = eval_drift(f)
            norm = np.sqrt(hnorm_sq(f))
            assert abs(res.pairing_with_input) < 1e-10 * (1.0 + norm ** 3)

    def test_drift_output_hermitian_bitwise(self):
        f = white_field(3, 11)
        b = eval_drift(f).value
        mirrored = np.conj(b.coeffs[b.lattice.conj_index])
        assert np.array_equal(mirrored, b.coeffs)

    @pytest.mark.parametrize("n_max", [1, 2, 3, 4])
    def test_batch_kernel_matches_reference(self, n_max):
        lattice = cached_lattice(n_max)
        gen = RandomSource(100 + n_max).generator()
        rows = white_noise_batch(lattice, gen, 8)
        batch = drift_batch(lattice, rows)
        for i in range(rows.shape[0]):
            ref = eval_drift(SpectralField(lattice, rows[i], _trusted=True)).value.coeffs
            scale = np.max(np.abs(ref)) + 1.0
            assert np.max(np.abs(batch[i] - ref)) < 1e-12 * scale


class TestCutoff:
    def test_profile_shape(self):
        cut = CutoffSpec(radius=2.0)
        assert cut.value(1.9) == 1.0
        assert cut.value(4.1) == 0.0
        assert 0.0 < cut.value(3.0) < 1.0
        # C1: derivative vanishes at both ends and is negative in between
        assert cut.derivative(2.0) == 0.0
        assert cut.derivative(4.0) == 0.0
        assert cut.derivative(3.0) < 0.0

    def test_inside_ball_identical(self):
        f = white_field(2, 12)
        big = CutoffSpec(radius=10 * np.sqrt(hnorm_sq(f)))
        assert np.array_equal(eval_cutoff_drift(f, big).value.coeffs, eval_drift(f).value.coeffs)

    def test_outside_ball_zero(self):
        f = white_field(2, 13)
        small = CutoffSpec(radius=0.1 * np.sqrt(hnorm_sq(f)))
        assert hnorm_sq(eval_cutoff_drift(f, small).value) == 0.0

    def test_between_scalar_multiple(self):
        f = white_field(2, 14)
        r = np.sqrt(hnorm_sq(f))
        cut = CutoffSpec(radius=r / 1.5)
        chi = cut.value(r)
        assert 0.0 < chi < 1.0
        assert np.allclose(
            eval_cutoff_drift(f, cut).value.coeffs, chi * eval_drift(f).value.coeffs
        )


class TestDivergence:
    def test_zero_field(self):
        lattice = cached_lattice(2)
        f = SpectralField.zero(lattice)
        assert chart_divergence(f) == 0.0
        assert eval_drift(f).pairing_with_input == 0.0

    def test_divergence_check_report(self):
        report = divergence_check(cached_lattice(3), RandomSource(15), trials=20)
        assert report.max_abs_divergence < 1e-10 * (1.0 + report.max_norm)
        assert report.max_abs_pairing < 1e-10 * (1.0 + report.max_norm ** 3)

    def test_cutoff_divergence_free(self):
        f = white_field(2, 16)
        r = np.sqrt(hnorm_sq(f))
        cut = CutoffSpec(radius=r / 1.5)  # lands inside the transition annulus
        assert abs(cutoff_chart_divergence(f, cut)) < 1e-10 * (1.0 + r)


class TestIntegratorConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            IntegratorConfig(dt=0.0, scheme="em", alpha=1.0, t_final=1.0)
        with pytest.raises(ValueError):
            IntegratorConfig(dt=2.0, scheme="em", alpha=1.0, t_final=1.0)
        with pytest.raises(ValueError):
            IntegratorConfig(dt=0.1, scheme="leapfrog", alpha=1.0, t_final=1.0)
        with pytest.raises(ValueError):
            IntegratorConfig(dt=0.1, scheme="em", alpha=-0.5, t_final=1.0)

    def test_deterministic_requires_zero_alpha(self):
        f = white_field(1, 17)
        cfg = IntegratorConfig(dt=0.01, scheme="explicit-rk4", alpha=0.5, t_final=1.0)
        with pytest.raises(ValueError):
            step_deterministic(f, cfg)
        cfg2 = IntegratorConfig(dt=0.01, scheme="em", alpha=0.0, t_final=1.0)
        with pytest.raises(ValueError):
            step_deterministic(f, cfg2)


class TestDeterministicFlow:
    def test_single_pair_unchanged(self):
        f = SpectralField.from_dict(cached_lattice(2), {(1, 1): 0.7 + 0.1j})
        cfg = IntegratorConfig(dt=0.05, scheme="explicit-rk4", alpha=0.0, t_final=1.0)
        g = f
        for _ in range(20):
            g = step_deterministic(g, cfg)
        assert np.array_equal(g.coeffs, f.coeffs)

    def test_rk4_observed_order(self):
        # Richardson: log2(|y_dt - y_dt/2| / |y_dt/2 - y_dt/4|) ~ 4
        lattice = cached_lattice(2)
        rows = white_noise_batch(lattice, RandomSource(18).generator(), 1)
        dt = 0.05
        y1 = rk4_rows(lattice, rows, dt)
        y2 = rk4_rows(lattice, rk4_rows(lattice, rows, dt / 2), dt / 2)
        y4 = rows
        for _ in range(4):
            y4 = rk4_rows(lattice, y4, dt / 4)
        e12 = np.max(np.abs(y1 - y2))
        e24 = np.max(np.abs(y2 - y4))
        order = np.log2(e12 / e24)
        assert order >= 3.8

    def test_short_conservation(self):
        lattice = cached_lattice(3)
        rows = white_noise_batch(lattice, RandomSource(19).generator(), 1)
        s0 = np.sum(np.abs(rows) ** 2)
        e0 = np.sum(np.abs(rows) ** 2 / lattice.k_sq)
        state = rows
        for _ in range(1000):
            state = rk4_rows(lattice, state, 1e-3)
        assert abs(np.sum(np.abs(state) ** 2) - s0) / s0 < 1e-10
        assert abs(np.sum(np.abs(state) ** 2 / lattice.k_sq) - e0) / e0 < 1e-10

    def test_hermitian_preserved_bitwise(self):
        lattice = cached_lattice(3)
        state = white_noise_batch(lattice, RandomSource(20).generator(), 2)
        for _ in range(50):
            state = rk4_rows(lattice, state, 0.01)
        mirrored = np.conj(state[:, lattice.conj_index])
        assert np.array_equal(mirrored, state)


class TestStochasticSchemes:
    def test_em_reduces_to_euler_at_zero_alpha(self):
        lattice = cached_lattice(2)
        rows = white_noise_batch(lattice, RandomSource(21).generator(), 3)
        stepped = em_rows(lattice, rows, 0.01, 0.0, RandomSource(22).generator())
        expected = rows - 0.01 * drift_batch(lattice, rows)
        assert np.array_equal(stepped, expected)

    def test_ou_transition_law_from_zero(self):
        # with zero initial field the nonlinear substep is inert and one
        # ou-split step of size t is exactly the OU bridge from 0
        lattice = cached_lattice(1)
        alpha, t = 0.7, 0.9
        rows = np.zeros((50_000, lattice.size), dtype=complex)
        out = ou_split_rows(lattice, rows, t, alpha, RandomSource(23).generator())
        target = 1.0 - np.exp(-2 * alpha * t)
        sq = np.abs(out[:, lattice.half_index]) ** 2
        se = np.std(sq, axis=0, ddof=1) / np.sqrt(sq.shape[0])
        assert np.max(np.abs(np.mean(sq, axis=0) - target) / se) < 4.0

    def test_step_stochastic_requires_stochastic_scheme(self):
        f = white_field(1, 24)
        cfg = IntegratorConfig(dt=0.01, scheme="explicit-rk4", alpha=0.0, t_final=1.0)
        with pytest.raises(ValueError):
            step_stochastic(f, cfg, RandomSource(25))

    def test_second_moment_ode_small(self):
        # E|omega_t|^2 = |Lambda_N| (1 - e^{-2 alpha t}) from omega_0 = 0
        config = RunConfig(
            n_max=1, alpha=0.5, beta_init=0.0, dt=0.01, t_final=1.0, save_every=0.5,
            ensemble_size=4000, scheme="ou-split", seed=26,
            density_init={"form": "zero"},
        )
        result = run_ensemble(config)
        for t, name, mean, se, _ in result.scalar_rows:
            if name != "hnorm_sq" or t == 0.0:
                continue
            target = 8.0 * (1.0 - np.exp(-1.0 * t))
            assert abs(mean - target) < 4 * se

    def test_overflow_guard(self):
        rows = np.full((2, 8), 1e7, dtype=complex)
        with pytest.raises(OverflowGuardError):
            guard_rows(rows, step=3)


class TestGenerator:
    def test_constant_is_annihilated(self):
        psi = CylinderFunction((0,), Polynomial.constant(1, 3.3))
        f = white_field(2, 27)
        assert eval_generator(psi, f, alpha=1.0) == 0.0

    def test_pure_ou_on_coordinate(self):
        # single-pair field has zero drift, so A x_j = -alpha x_j
        lattice = cached_lattice(1)
        f = SpectralField.from_dict(lattice, {(0, 1): 0.5 + 0.25j})
        chart = field_to_chart(f)
        psi = coordinate_function(0)  # Re coordinate of half mode (0,1)
        assert eval_generator(psi, f, alpha=1.0) == pytest.approx(-chart[0])

    def test_white_noise_annihilates_generator_in_mean(self):
        # stationarity of the white-noise measure: E[A psi] = 0
        lattice = cached_lattice(2)
        rows = white_noise_batch(lattice, RandomSource(28).generator(), 100_000)
        psi = CylinderFunction((0, 4), Polynomial(2, {(2, 0): 1.0, (1, 1): 0.7, (0, 3): 0.2}))
        values = eval_generator_rows(psi, lattice, rows, alpha=0.8)
        se = np.std(values, ddof=1) / np.sqrt(values.size)
        assert abs(np.mean(values)) < 4 * se


class TestFokkerPlanckResidual:
    def test_weak_form_residual(self):
        # d/dt E[psi(omega_t)] = E[A psi(omega_t)] along the SDE ensemble,
        # finite-differenced at t = 0.5 against the generator average
        lattice = cached_lattice(2)
        mode_col = 2 * list(lattice.half).index((1, 0))
        psi = coordinate_function(mode_col)
        alpha, dt, delta = 1.0, 0.01, 0.1
        config = RunConfig(
            n_max=2, alpha=alpha, beta_init=0.0, dt=dt, t_final=0.6, save_every=delta,
            ensemble_size=30_000, scheme="ou-split", seed=29,
            density_init={"form": "sine_tilt", "mode": [1, 0], "amplitude": 0.9},
        )

        class PsiRecorder:
            def __init__(self):
                self.values = {}
                self.gen_values = {}

            def start_block(self, block_id, n_times, lattice):
                self.values[block_id] = np.zeros(n_times)
                self.gen_values[block_id] = np.zeros(n_times)

            def record(self, block_id, t_index, rows, lattice):
                from spectral_euler.spectral import coeffs_to_chart

                chart = coeffs_to_chart(rows[:, lattice.half_index])
                self.values[block_id][t_index] += np.sum(psi.value(chart))
                self.gen_values[block_id][t_index] += np.sum(
                    eval_generator_rows(psi, lattice, rows, alpha)
                )

        rec = PsiRecorder()
        result = run_ensemble(config, extra_recorders={"psi": rec})
        count = config.ensemble_size
        order = sorted(rec.values)
        mean_psi = sum(rec.values[b] for b in order) / count
        mean_gen = sum(rec.gen_values[b] for b in order) / count
        # indices: times are 0, 0.1, ..., 0.6
        i = int(np.argmin(np.abs(result.times - 0.5)))
        fd = (mean_psi[i + 1] - mean_psi[i - 1]) / (2 * delta)
        gen_mid = mean_gen[i]
        # statistical + finite-difference allowance; the mean decays like
        # m0 e^{-alpha t} so the third-derivative correction is m0 delta^2/6
        m0 = 0.9 * np.exp(-0.5)
        tol = 4 * (3.0 / np.sqrt(count)) + m0 * delta ** 2 / 6 + 0.01
        assert abs(fd - gen_mid) < tol
