"""Named diagnostic suites: the verification surface behind `check` and CI.

Each suite runs one family of theorem-level checks at desk scale and returns
a SuiteReport whose rows serialize to CSV as
``t,mode_kx,mode_ky,estimator,value,threshold,pass``.  Thresholds are fixed
here, not tuned per run: algebraic identities get round-off envelopes,
Monte Carlo estimates get z-score gates (|z| < 3 or 4 as stated), and the
histogram estimators get calibrated bias allowances.
"""

from __future__ import annotations

import numpy as np
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from scipy.integrate import quad

from .cylinder import CylinderFunction, Polynomial, coordinate_function
from .dynamics import chart_divergence, eval_drift, rk4_rows
from .errors import SpectralEulerError
from .measures import (
    MeasureSpec,
    sine_tilt_density,
    truncated_partition_function,
    white_noise_batch,
)
from .nonlinearity import (
    KernelSpec,
    chaos_statistics,
    cosine_test_function,
    eval_kernel,
    kernel_l2_distance,
    mode_test_function,
    pairing_quadrature,
    pairing_spectral,
)
from .observables import (
    calibrate_estimator_bias,
    infinitesimal_invariance_check,
    kullback_check,
    marginal_chi_squared,
    marginal_relative_entropy,
    renormalized_energy_rows,
    stationarity_test,
    wick_variance,
)
from .rng import RandomSource
from .runner import HistogramRecorder, IncrementRecorder, RunConfig, run_ensemble
from .spectral import SpectralField, cached_lattice, hnorm_sq


@dataclass(frozen=True)
class ReportRow:
    t: float
    mode: tuple[int, int] | None
    estimator: str
    value: float
    threshold: float
    passed: bool


@dataclass
class SuiteReport:
    name: str
    rows: list[ReportRow]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def failures(self) -> list[ReportRow]:
        return [r for r in self.rows if not r.passed]

    def write_csv(self, path: Path) -> None:
        with open(path, "w") as fh:
            fh.write("t,mode_kx,mode_ky,estimator,value,threshold,pass\n")
            for r in self.rows:
                kx = "" if r.mode is None else r.mode[0]
                ky = "" if r.mode is None else r.mode[1]
                fh.write(
                    f"{r.t!r},{kx},{ky},{r.estimator},{r.value!r},{r.threshold!r},"
                    f"{'pass' if r.passed else 'FAIL'}\n"
                )


# ---------------------------------------------------------------------------
# Drift algebra


def suite_drift(
    n_values: Sequence[int] = (2, 3, 4, 8),
    fields_per_n: int = 250,
    seed: int = 2024,
) -> SuiteReport:
    """Orthogonality <b, xi> = 0, zero chart divergence, and the hand value."""
    rows: list[ReportRow] = []

    # hand-computed component: N=2, xi_(1,0) = xi_(1,1) = 1 -> b(2,1) = +1/2
    lattice2 = cached_lattice(2)
    f = SpectralField.from_dict(lattice2, {(1, 0): 1.0, (1, 1): 1.0})
    b = eval_drift(f).value[(2, 1)]
    err = abs(b - 0.5)
    rows.append(ReportRow(0.0, (2, 1), "hand_drift_component_error", err, 1e-12, err <= 1e-12))

    for n in n_values:
        lattice = cached_lattice(n)
        gen = RandomSource(seed, n).generator()
        worst_pair = 0.0
        worst_div = 0.0
        for _ in range(fields_per_n):
            coeffs = white_noise_batch(lattice, gen, 1)[0]
            field = SpectralField(lattice, coeffs, _trusted=True)
            norm = np.sqrt(hnorm_sq(field))
            res = eval_drift(field)
            worst_pair = max(worst_pair, abs(res.pairing_with_input) / (1.0 + norm ** 3))
            worst_div = max(worst_div, abs(chart_divergence(field)) / (1.0 + norm))
        rows.append(
            ReportRow(0.0, None, f"max_pairing_over_bound_N={n}", worst_pair, 1e-10,
                      worst_pair <= 1e-10)
        )
        rows.append(
            ReportRow(0.0, None, f"max_divergence_over_bound_N={n}", worst_div, 1e-10,
                      worst_div <= 1e-10)
        )
    return SuiteReport("drift", rows)


# ---------------------------------------------------------------------------
# Conservation of the quadratic invariants


def suite_conservation(
    n_max: int = 4, t_final: float = 10.0, dt: float = 1e-3, seed: int = 11
) -> SuiteReport:
    lattice = cached_lattice(n_max)
    gen = RandomSource(seed).generator()
    rows_state = white_noise_batch(lattice, gen, 1)
    s0 = float(np.sum(np.abs(rows_state) ** 2))
    e0 = float(np.sum(np.abs(rows_state) ** 2 / lattice.k_sq))
    n_steps = int(round(t_final / dt))
    state = rows_state
    for _ in range(n_steps):
        state = rk4_rows(lattice, state, dt)
    s1 = float(np.sum(np.abs(state) ** 2))
    e1 = float(np.sum(np.abs(state) ** 2 / lattice.k_sq))
    ens_drift = abs(s1 - s0) / s0
    en_drift = abs(e1 - e0) / e0
    herm = float(
        np.max(np.abs(state[0, lattice.conj_index] - np.conj(state[0])))
    )
    rows = [
        ReportRow(t_final, None, "enstrophy_relative_drift", ens_drift, 1e-8, ens_drift < 1e-8),
        ReportRow(t_final, None, "energy_relative_drift", en_drift, 1e-8, en_drift < 1e-8),
        ReportRow(t_final, None, "hermitian_deviation", herm, 0.0, herm == 0.0),
    ]
    return SuiteReport("conservation", rows)


# ---------------------------------------------------------------------------
# Second-moment law of the full SDE


def suite_second_moment(
    alpha: float = 0.5,
    n_max: int = 1,
    ensemble: int = 10_000,
    times: Sequence[float] = (0.5, 1.0, 2.0),
    dt: float = 0.01,
    seed: int = 5,
) -> SuiteReport:
    """E |omega_t|^2 = |Lambda_N| (1 - exp(-2 alpha t)) starting from zero."""
    config = RunConfig(
        n_max=n_max,
        alpha=alpha,
        beta_init=0.0,
        dt=dt,
        t_final=max(times),
        save_every=min(times),
        ensemble_size=ensemble,
        scheme="ou-split",
        seed=seed,
        density_init={"form": "zero"},
    )
    lattice = cached_lattice(n_max)
    result = run_ensemble(config)
    rows: list[ReportRow] = []
    m = lattice.size
    by_name = {}
    for t, name, mean, se, _ in result.scalar_rows:
        by_name.setdefault(name, []).append((t, mean, se))
    hnorm_records = np.array([(t, mean, se) for t, mean, se in by_name["hnorm_sq"]])
    for t in times:
        idx = int(np.argmin(np.abs(hnorm_records[:, 0] - t)))
        _, mean, se = hnorm_records[idx]
        target = m * (1.0 - np.exp(-2.0 * alpha * t))
        z = abs(mean - target) / se
        rows.append(ReportRow(float(t), None, "second_moment_z", z, 4.0, z < 4.0))
    return SuiteReport("second-moment", rows)


# ---------------------------------------------------------------------------
# Stationarity / invariance of the Gaussian measures


def suite_stationarity(
    alpha: float,
    beta: float,
    n_max: int = 4,
    t_final: float = 5.0,
    dt: float = 0.01,
    save_every: float = 0.5,
    ensemble: int = 10_000,
    scheme: str | None = None,
    seed: int = 21,
) -> SuiteReport:
    """Mode variances against |k|^2/(beta+|k|^2) along the evolution.

    alpha > 0 with beta = 0 probes stationarity of white noise under the full
    SDE; alpha = 0 with beta != 0 probes invariance of the energy-enstrophy
    measure under the truncated Euler flow.
    """
    if scheme is None:
        scheme = "explicit-rk4" if alpha == 0.0 else "ou-split"
    config = RunConfig(
        n_max=n_max,
        alpha=alpha,
        beta_init=beta,
        dt=dt,
        t_final=t_final,
        save_every=save_every,
        ensemble_size=ensemble,
        scheme=scheme,
        seed=seed,
    )
    result = run_ensemble(config)
    reference = MeasureSpec(beta=beta, n_max=n_max)
    report = stationarity_test(result.variance, reference)
    rows = [
        ReportRow(r.t, r.mode, "mode_variance_z", abs(r.z_score), report.threshold,
                  abs(r.z_score) < report.threshold)
        for r in report.rows
    ]
    return SuiteReport("stationarity", rows)


# ---------------------------------------------------------------------------
# Entropy / L2 / total-variation decay envelopes


def tilted_entropy(amplitude: float) -> float:
    """H(rho_0) = E[(1 + a sin X) log(1 + a sin X)], X standard normal (quadrature)."""

    def integrand(x):
        r = 1.0 + amplitude * np.sin(x)
        return r * np.log(r) * np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)

    value, _ = quad(integrand, -12.0, 12.0, limit=200)
    return float(value)


def tilted_chi_squared(amplitude: float) -> float:
    """||rho_0 - 1||^2 = a^2 E sin^2 X = a^2 (1 - e^{-2})/2."""
    return amplitude ** 2 * (1.0 - np.exp(-2.0)) / 2.0


def suite_entropy_decay(
    alpha: float = 1.0,
    n_max: int = 2,
    ensemble: int = 100_000,
    times: Sequence[float] = (0.5, 1.0, 2.0),
    amplitude: float = 0.9,
    dt: float = 0.005,
    bins: int = 64,
    seed: int = 33,
) -> SuiteReport:
    """Theorem-level decay envelopes on the tilted mode's binned marginal.

    KL(t) <= e^{-2 alpha t} H(rho_0) + delta, chi2(t) <= e^{-2 alpha t}
    chi2(0) + delta, L1(t) <= e^{-alpha t} sqrt(2 H(rho_0)) + delta, each
    delta calibrated from reference-vs-reference runs at matched sample size.
    """
    mode = (1, 0)
    density = sine_tilt_density(mode=mode, amplitude=amplitude)
    h0 = tilted_entropy(amplitude)
    chi0 = tilted_chi_squared(amplitude)
    reference = MeasureSpec(beta=0.0, n_max=n_max)

    bias = calibrate_estimator_bias(
        reference, mode, ensemble, RandomSource(seed, 10_000), bins=bins, runs=16
    )

    hist_rec = HistogramRecorder([mode], reference, bins=bins)
    config = RunConfig(
        n_max=n_max,
        alpha=alpha,
        beta_init=0.0,
        density_init={"form": "sine_tilt", "mode": list(mode), "amplitude": amplitude},
        dt=dt,
        t_final=max(times),
        save_every=min(times),
        ensemble_size=ensemble,
        scheme="ou-split",
        seed=seed,
    )
    result = run_ensemble(config, extra_recorders={"histograms": hist_rec})
    if result.overflow:
        raise SpectralEulerError(f"entropy run blew up: {result.overflow_message}")

    rows: list[ReportRow] = []

    # t = 0 sanity anchor: the tilted mode marginal carries the full entropy
    hist0 = hist_rec.histogram(mode, 0, ensemble)
    kl0 = marginal_relative_entropy(hist0, reference)
    rows.append(
        ReportRow(0.0, mode, "kl_initial_vs_analytic", kl0, h0 + bias.kl,
                  abs(kl0 - h0) <= h0 * 0.2 + bias.kl)
    )

    for t in times:
        idx = int(np.argmin(np.abs(result.times - t)))
        hist = hist_rec.histogram(mode, idx, ensemble)
        kl = marginal_relative_entropy(hist, reference)
        chi = marginal_chi_squared(hist, reference)
        kl_env = float(np.exp(-2.0 * alpha * t) * h0)
        chi_env = float(np.exp(-2.0 * alpha * t) * chi0)
        kc = kullback_check(hist, reference, entropy_bound=kl_env, bias_allowance=bias.l1)
        rows.append(ReportRow(t, mode, "kl_envelope", kl, kl_env + bias.kl, kl <= kl_env + bias.kl))
        rows.append(
            ReportRow(t, mode, "chi2_envelope", chi, chi_env + bias.chi2, chi <= chi_env + bias.chi2)
        )
        rows.append(
            ReportRow(t, mode, "l1_envelope", kc.l1_distance, kc.threshold + bias.l1,
                      kc.l1_distance <= kc.threshold + bias.l1)
        )
        rows.append(
            ReportRow(t, mode, "pinsker_consistency", kc.l1_distance,
                      kc.pinsker_threshold + bias.l1,
                      kc.l1_distance <= kc.pinsker_threshold + bias.l1)
        )
    return SuiteReport("entropy-decay", rows)


# ---------------------------------------------------------------------------
# Gibbs machinery: partition function, Wick variance, reweighting


def suite_gibbs(
    betas: Sequence[float] = (-0.5, 1.0),
    cutoffs: Sequence[float] = (1.0, 5.0),
    samples: int = 1_000_000,
    n_max: int = 5,
    seed: int = 8,
    check_modes: Sequence[tuple[int, int]] = ((1, 0), (1, 1), (2, 1)),
) -> SuiteReport:
    lattice = cached_lattice(n_max)
    gen = RandomSource(seed).generator()
    wick_cuts = sorted(set(float(c) for c in cutoffs) | {np.sqrt(2.0)})

    mode_idx = {m: lattice.index_of(m) for m in check_modes}
    e_c = {c: np.empty(samples) for c in wick_cuts}
    mode_sq = {m: np.empty(samples) for m in check_modes}

    done = 0
    block = 50_000
    while done < samples:
        b = min(block, samples - done)
        rows_batch = white_noise_batch(lattice, gen, b)
        for c in wick_cuts:
            e_c[c][done : done + b] = renormalized_energy_rows(lattice, rows_batch, c)
        for m, idx in mode_idx.items():
            mode_sq[m][done : done + b] = np.abs(rows_batch[:, idx]) ** 2
        done += b

    rows: list[ReportRow] = []

    # Monte Carlo partition function vs the analytic product
    for beta in betas:
        for c in cutoffs:
            w = np.exp(-beta * e_c[float(c)])
            z_mc = float(np.mean(w))
            se = float(np.std(w, ddof=1) / np.sqrt(samples))
            z_exact = truncated_partition_function(beta, c)
            zscore = abs(z_mc - z_exact) / se
            rows.append(
                ReportRow(0.0, None, f"partition_z_beta={beta:g}_K={c:g}", zscore, 3.0, zscore < 3.0)
            )

    # Wick variance of 2 E_c against the closed form
    for c in wick_cuts:
        v = 2.0 * e_c[c]
        var_hat = float(np.var(v, ddof=1))
        target = wick_variance(c)
        centered = (v - np.mean(v)) ** 2
        se_var = float(np.std(centered, ddof=1) / np.sqrt(samples))
        zscore = abs(var_hat - target) / se_var
        rows.append(
            ReportRow(0.0, None, f"wick_variance_K={c:g}", zscore, 4.0, zscore < 4.0)
        )

    # Gibbs reweighting reproduces the energy-enstrophy mode variances
    for beta in betas:
        for c in cutoffs:
            w = np.exp(-beta * e_c[float(c)])
            for m in check_modes:
                if m[0] ** 2 + m[1] ** 2 > c * c:
                    continue
                x = mode_sq[m]
                r = float(np.sum(w * x) / np.sum(w))
                infl = w * (x - r)
                se = float(
                    np.sqrt(np.mean(infl ** 2) / samples) / np.mean(w)
                )
                target = float(MeasureSpec(beta=beta, n_max=n_max).mode_variance(m))
                zscore = abs(r - target) / se
                rows.append(
                    ReportRow(0.0, m, f"reweighted_var_beta={beta:g}_K={c:g}", zscore, 4.0,
                              zscore < 4.0)
                )
    return SuiteReport("gibbs", rows)


# ---------------------------------------------------------------------------
# Nonlinearity kernel and chaos


def suite_chaos(
    n_max: int = 2,
    chaos_order: int = 4,
    chaos_samples: int = 100_000,
    seed: int = 13,
) -> SuiteReport:
    rows: list[ReportRow] = []
    lattice = cached_lattice(n_max)
    gen = RandomSource(seed).generator()

    # pairing oracle equivalence at n = 4N, grid = 8N + 1
    order = 4 * n_max
    grid = 8 * n_max + 1
    phis = [("mode_2_1", mode_test_function((2, 1))), ("cos_1_0", cosine_test_function((1, 0)))]
    for label, phi in phis:
        omega = SpectralField(lattice, white_noise_batch(lattice, gen, 1)[0], _trusted=True)
        spec = KernelSpec(phi, order, grid)
        ps = pairing_spectral(omega, phi)
        pq = pairing_quadrature(omega, spec)
        err = abs(ps - pq)
        rows.append(ReportRow(0.0, None, f"pairing_oracle_gap_{label}", err, 1e-6, err < 1e-6))

    # hand value consistent with the drift expansion
    f = SpectralField.from_dict(lattice, {(1, 0): 1.0, (1, 1): 1.0})
    hand = pairing_spectral(f, mode_test_function((2, 1)))
    err = abs(hand - (-1.0))
    rows.append(ReportRow(0.0, (2, 1), "pairing_hand_value_error", err, 1e-12, err <= 1e-12))

    # kernel symmetry and zero diagonal, exactly, at random points
    spec = KernelSpec(cosine_test_function((1, 0)), 8, 33)
    pts = gen.uniform(0.0, 2.0 * np.pi, size=(64, 2, 2))
    worst_sym = 0.0
    worst_diag = 0.0
    for x, y in pts:
        worst_sym = max(worst_sym, abs(eval_kernel(spec, x, y) - eval_kernel(spec, y, x)))
        worst_diag = max(worst_diag, abs(eval_kernel(spec, x, x)))
    rows.append(ReportRow(0.0, None, "kernel_symmetry_gap", worst_sym, 0.0, worst_sym == 0.0))
    rows.append(ReportRow(0.0, None, "kernel_diagonal", worst_diag, 0.0, worst_diag == 0.0))

    # L2 Cauchy sequence: distances decreasing, tail exponent in (0.5, 1.5)
    phi = cosine_test_function((1, 0))
    orders = (2, 4, 8)
    dists = []
    for n in orders:
        g = 2 * (2 * n + phi.max_mode) + 3
        dists.append(
            kernel_l2_distance(KernelSpec(phi, n, g), KernelSpec(phi, 2 * n, g))
        )
    decreasing = all(dists[i] > dists[i + 1] for i in range(len(dists) - 1))
    rows.append(ReportRow(0.0, None, "kernel_distance_decreasing", float(decreasing), 1.0, decreasing))
    # Sharp spectral truncation leaves an uncancelled boundary shell in the
    # symmetrized kernel, so the L2 tail decays like n^(-1/2); the fitted
    # exponent approaches 0.5 from below.
    gamma = -float(np.polyfit(np.log(orders), np.log(dists), 1)[0])
    rows.append(ReportRow(0.0, None, "kernel_tail_exponent", gamma, 1.5, 0.4 < gamma < 1.5))

    # second-chaos statistics
    report = chaos_statistics(
        KernelSpec(cosine_test_function((1, 0)), chaos_order, 4 * chaos_order + 3),
        RandomSource(seed, 77),
        chaos_samples,
    )
    mean_z = abs(report.mean) / report.mean_stderr
    rows.append(ReportRow(0.0, None, "chaos_mean_z", mean_z, 4.0, mean_z < 4.0))
    ratio = report.variance_ratio
    rows.append(
        ReportRow(0.0, None, "chaos_variance_ratio", ratio, 1.05, 0.95 <= ratio <= 1.05)
    )
    finite = all(np.isfinite(report.exp_estimates))
    stable = max(report.exp_estimates) / min(report.exp_estimates) < 1.2
    rows.append(
        ReportRow(0.0, None, "exp_integrability_stable", float(finite and stable), 1.0,
                  finite and stable)
    )
    return SuiteReport("chaos", rows)


# ---------------------------------------------------------------------------
# Infinitesimal invariance of the Gibbs densities


def suite_invariance(
    betas: Sequence[float] = (-0.5, 0.0, 1.0, 3.0),
    n_max: int = 3,
    samples: int = 100_000,
    seed: int = 17,
) -> SuiteReport:
    lattice = cached_lattice(n_max)
    linear = coordinate_function(0)
    quadratic = CylinderFunction((0, 2), Polynomial(2, {(2, 0): 1.0, (1, 1): 0.5}))
    rows: list[ReportRow] = []
    for beta in betas:
        for name, phi in (("linear", linear), ("quadratic", quadratic)):
            report = infinitesimal_invariance_check(
                phi, beta, lattice, RandomSource(seed, int(10 * (beta + 2))), samples
            )
            ze = abs(report.energy_pairing.z_score)
            zg = abs(report.gibbs_pairing.z_score)
            rows.append(
                ReportRow(0.0, None, f"energy_pairing_z_beta={beta}_{name}", ze, 4.0, ze < 4.0)
            )
            rows.append(
                ReportRow(0.0, None, f"gibbs_pairing_z_beta={beta}_{name}", zg, 4.0, zg < 4.0)
            )
    return SuiteReport("invariance", rows)


# ---------------------------------------------------------------------------
# Increment moment scaling


def suite_increments(
    n_max: int = 4,
    alpha: float = 1.0,
    ensemble: int = 4000,
    modes: Sequence[tuple[int, int]] = ((1, 0), (2, 1)),
    gaps: Sequence[float] = (0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1),
    dt: float = 0.001,
    seed: int = 29,
) -> SuiteReport:
    """Log-log slope of the fourth increment moment against the time gap."""
    inc = IncrementRecorder(modes)
    config = RunConfig(
        n_max=n_max,
        alpha=alpha,
        beta_init=0.0,
        dt=dt,
        t_final=max(gaps),
        save_every=dt,
        ensemble_size=ensemble,
        scheme="ou-split",
        seed=seed,
    )
    result = run_ensemble(config, extra_recorders={"increments": inc})
    m4, _ = inc.moments(ensemble)
    times = result.times
    gap_idx = [int(np.argmin(np.abs(times - g))) for g in gaps]
    rows: list[ReportRow] = []
    log_g = np.log(np.array(gaps))
    for mi, mode in enumerate(modes):
        log_m = np.log(m4[gap_idx, mi])
        slope = float(np.polyfit(log_g, log_m, 1)[0])
        rows.append(
            ReportRow(0.0, mode, "increment_m4_loglog_slope", slope, 1.8, slope >= 1.8)
        )
    return SuiteReport("increments", rows)


SUITES = {
    "drift": suite_drift,
    "conservation": suite_conservation,
    "second-moment": suite_second_moment,
    "stationarity": suite_stationarity,
    "entropy-decay": suite_entropy_decay,
    "gibbs": suite_gibbs,
    "chaos": suite_chaos,
    "invariance": suite_invariance,
    "increments": suite_increments,
}
