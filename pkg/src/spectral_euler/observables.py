"""Energies, Gibbs reweighting and statistical convergence diagnostics.

Quadratic functionals of a vorticity field:

    enstrophy  S = 1/2 sum_k |xi_k|^2
    energy     E = 1/2 sum_k |xi_k|^2 / |k|^2

Under white noise the energy series diverges as the cutoff grows, so the
Gibbs machinery uses the Wick-centred version truncated to the Euclidean
ball |k| <= K:

    E_c(xi; K) = 1/2 sum_{|k| <= K} (|xi_k|^2 - 1) / |k|^2,

whose mean vanishes and whose variance has the closed form
Var(2 E_c) = 2 sum_{|k| <= K} |k|^{-4} (each half mode contributes an
independent Exp(1) variable).  Weighting white noise by
exp(-beta E_c)/Z(beta, K) reproduces the energy-enstrophy mode variances
|k|^2/(beta + |k|^2) on the ball, which is what the reweighting tests check.

Convergence-to-equilibrium diagnostics are computed on two-dimensional
single-mode marginals (Re xi_k, Im xi_k).  Divergences of a marginal never
exceed divergences of the joint law, so the decay envelopes proved for the
full law transfer to every marginal; binned plug-in estimators carry a
positive bias that is calibrated empirically from reference-vs-reference
runs at matched sample size and reported alongside each estimate.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import erf, sqrt

import numpy as np

from .cylinder import CylinderFunction
from .dynamics import drift_batch
from .errors import HistogramCoverageError, MeasureParameterError, OverflowGuardError
from .measures import (
    MeasureSpec,
    log_truncated_partition_function,
    white_noise_batch,
)
from .rng import RandomSource
from .spectral import ModeLattice, SpectralField, coeffs_to_chart, hnorm_sq


# ---------------------------------------------------------------------------
# Quadratic functionals


def enstrophy(f: SpectralField) -> float:
    return 0.5 * hnorm_sq(f)


def energy(f: SpectralField) -> float:
    return float(0.5 * np.sum(np.abs(f.coeffs) ** 2 / f.lattice.k_sq))


def energy_rows(lattice: ModeLattice, rows: np.ndarray) -> np.ndarray:
    return 0.5 * np.sum(np.abs(rows) ** 2 / lattice.k_sq, axis=-1)


def wick_ball_mask(lattice: ModeLattice, cutoff: float) -> np.ndarray:
    """Full-lattice boolean mask of the Euclidean ball |k| <= cutoff."""
    if cutoff < 1.0:
        raise MeasureParameterError(f"Wick cutoff must be >= 1, got {cutoff}")
    if lattice.n_max < int(np.floor(cutoff)):
        raise MeasureParameterError(
            f"lattice cutoff {lattice.n_max} cannot represent the ball |k| <= {cutoff}"
        )
    return lattice.k_sq <= cutoff * cutoff


def renormalized_energy(f: SpectralField, cutoff: float) -> float:
    """Wick-centred energy 1/2 sum_{|k|<=K} (|xi_k|^2 - 1)/|k|^2 (full-lattice sum)."""
    mask = wick_ball_mask(f.lattice, cutoff)
    ksq = f.lattice.k_sq[mask]
    return float(0.5 * np.sum((np.abs(f.coeffs[mask]) ** 2 - 1.0) / ksq))


def renormalized_energy_rows(
    lattice: ModeLattice, rows: np.ndarray, cutoff: float
) -> np.ndarray:
    mask = wick_ball_mask(lattice, cutoff)
    ksq = lattice.k_sq[mask]
    return 0.5 * np.sum((np.abs(rows[:, mask]) ** 2 - 1.0) / ksq, axis=-1)


def centred_energy_rows(lattice: ModeLattice, rows: np.ndarray) -> np.ndarray:
    """Centred truncated energy over the whole lattice (no Euclidean ball)."""
    return 0.5 * np.sum((np.abs(rows) ** 2 - 1.0) / lattice.k_sq, axis=-1)


def wick_variance(cutoff: float) -> float:
    """Analytic Var(2 E_c) = 2 sum_{0 < |k| <= K} |k|^{-4} over the full lattice ball."""
    if cutoff < 1.0:
        raise MeasureParameterError(f"Wick cutoff must be >= 1, got {cutoff}")
    r = int(np.floor(cutoff))
    total = 0.0
    for kx in range(-r, r + 1):
        for ky in range(-r, r + 1):
            if (kx, ky) == (0, 0):
                continue
            ksq = kx * kx + ky * ky
            if ksq <= cutoff * cutoff:
                total += 1.0 / float(ksq) ** 2
    return 2.0 * total


def gibbs_weight(f: SpectralField, beta: float, cutoff: float) -> float:
    """exp(-beta E_c(xi; K)) / Z(beta, K), with an overflow guard at exponent 700."""
    exponent = -beta * renormalized_energy(f, cutoff)
    if exponent > 700.0:
        raise OverflowGuardError(
            f"Gibbs exponent {exponent:.1f} exceeds 700; the weight would overflow"
        )
    return float(np.exp(exponent - log_truncated_partition_function(beta, cutoff)))


def gibbs_weight_rows(
    lattice: ModeLattice, rows: np.ndarray, beta: float, cutoff: float
) -> np.ndarray:
    exponent = -beta * renormalized_energy_rows(lattice, rows, cutoff)
    worst = float(np.max(exponent)) if exponent.size else 0.0
    if worst > 700.0:
        raise OverflowGuardError(f"Gibbs exponent {worst:.1f} exceeds 700")
    return np.exp(exponent - log_truncated_partition_function(beta, cutoff))


# ---------------------------------------------------------------------------
# Marginal histograms


@dataclass(frozen=True)
class MarginalHistogram:
    """2D histogram of one mode's (Re, Im) coefficient over an ensemble."""

    mode: tuple[int, int]
    extent: float  # bins cover [-extent, extent] in both components
    counts: np.ndarray  # (bins, bins) int64
    total: int

    @property
    def bins(self) -> int:
        return int(self.counts.shape[0])

    def boundary_fraction(self) -> float:
        ring = (
            np.sum(self.counts[0, :])
            + np.sum(self.counts[-1, :])
            + np.sum(self.counts[1:-1, 0])
            + np.sum(self.counts[1:-1, -1])
        )
        return float(ring) / float(self.total)


def reference_component_std(reference: MeasureSpec, mode: tuple[int, int]) -> float:
    """Std of Re (and Im) of the mode coefficient under the reference measure."""
    return sqrt(reference.mode_variance(mode) / 2.0)


def histogram_extent(reference: MeasureSpec, mode: tuple[int, int], n_sigmas: float = 6.0) -> float:
    return n_sigmas * reference_component_std(reference, mode)


def accumulate_mode_counts(
    values: np.ndarray, extent: float, bins: int
) -> np.ndarray:
    """Counts of complex samples on the (Re, Im) grid; outliers clamp to edge bins."""
    upper = np.nextafter(extent, -np.inf)
    re = np.clip(values.real, -extent, upper)
    im = np.clip(values.imag, -extent, upper)
    edges = np.linspace(-extent, extent, bins + 1)
    counts, _, _ = np.histogram2d(re, im, bins=(edges, edges))
    return counts.astype(np.int64)


def build_marginal_histogram(
    lattice: ModeLattice,
    rows: np.ndarray,
    mode: tuple[int, int],
    reference: MeasureSpec,
    bins: int = 64,
    n_sigmas: float = 6.0,
) -> MarginalHistogram:
    if n_sigmas < 6.0:
        raise MeasureParameterError("histogram extent must cover >= 6 reference sigmas")
    values = rows[:, lattice.index_of(mode)]
    extent = histogram_extent(reference, mode, n_sigmas)
    counts = accumulate_mode_counts(values, extent, bins)
    return MarginalHistogram(mode=mode, extent=extent, counts=counts, total=int(values.shape[0]))


def _gaussian_bin_probs(extent: float, bins: int, std: float) -> np.ndarray:
    """Exact N(0, std^2) probabilities of 1D bins; edge bins absorb the tails."""
    edges = np.linspace(-extent, extent, bins + 1)
    cdf = np.array([0.5 * (1.0 + erf(e / (std * sqrt(2.0)))) for e in edges])
    cdf[0] = 0.0
    cdf[-1] = 1.0
    return np.diff(cdf)


def reference_bin_probs(hist: MarginalHistogram, reference: MeasureSpec) -> np.ndarray:
    """Reference-measure probability of every 2D bin (product of 1D factors)."""
    std = reference_component_std(reference, hist.mode)
    p1 = _gaussian_bin_probs(hist.extent, hist.bins, std)
    return np.outer(p1, p1)


def write_histogram_csv(hist: MarginalHistogram, stream) -> None:
    """Persist a marginal histogram as a CSV grid for offline plotting."""
    stream.write(f"# mode={hist.mode[0]},{hist.mode[1]} extent={float(hist.extent)!r} "
                 f"total={hist.total}\n")
    stream.write("re_bin,im_bin,count\n")
    for i in range(hist.bins):
        for j in range(hist.bins):
            stream.write(f"{i},{j},{int(hist.counts[i, j])}\n")


def read_histogram_csv(stream) -> MarginalHistogram:
    header = stream.readline().strip()
    if not header.startswith("# mode="):
        raise ValueError(f"unexpected histogram header {header!r}")
    fields = dict(part.split("=") for part in header[2:].split(" "))
    kx, ky = fields["mode"].split(",")
    extent = float(fields["extent"])
    total = int(fields["total"])
    columns = stream.readline().strip()
    if columns != "re_bin,im_bin,count":
        raise ValueError(f"unexpected histogram columns {columns!r}")
    entries = []
    for line in stream:
        line = line.strip()
        if line:
            entries.append(tuple(int(x) for x in line.split(",")))
    bins = max(e[0] for e in entries) + 1
    counts = np.zeros((bins, bins), dtype=np.int64)
    for i, j, c in entries:
        counts[i, j] = c
    return MarginalHistogram(
        mode=(int(kx), int(ky)), extent=extent, counts=counts, total=total
    )


def _check_coverage(hist: MarginalHistogram, minimum_total: int) -> None:
    if hist.total < minimum_total:
        raise HistogramCoverageError(
            f"need at least {minimum_total} samples, histogram has {hist.total}"
        )
    frac = hist.boundary_fraction()
    if frac > 0.20:
        raise HistogramCoverageError(
            f"{frac:.1%} of histogram mass in boundary bins; extent too small"
        )


def marginal_relative_entropy(
    hist: MarginalHistogram, reference: MeasureSpec, minimum_total: int = 10_000
) -> float:
    """Binned KL divergence of the empirical marginal against the reference Gaussian.

    A lower bound (up to estimator bias) of the full-law relative entropy by
    the data-processing inequality, so decay envelopes for the full law apply.
    """
    _check_coverage(hist, minimum_total)
    q = reference_bin_probs(hist, reference)
    p = hist.counts / hist.total
    occupied = p > 0
    return float(np.sum(p[occupied] * np.log(p[occupied] / q[occupied])))


def marginal_chi_squared(
    hist: MarginalHistogram, reference: MeasureSpec, minimum_total: int = 10_000
) -> float:
    """Binned chi-squared divergence (the squared L^2(reference) distance of the density)."""
    _check_coverage(hist, minimum_total)
    q = reference_bin_probs(hist, reference)
    p = hist.counts / hist.total
    return float(np.sum((p - q) ** 2 / q))


def marginal_l1_distance(
    hist: MarginalHistogram, reference: MeasureSpec, minimum_total: int = 10_000
) -> float:
    """Binned L1 distance sum |p - q| (twice the total variation distance)."""
    _check_coverage(hist, minimum_total)
    q = reference_bin_probs(hist, reference)
    p = hist.counts / hist.total
    return float(np.sum(np.abs(p - q)))


@dataclass(frozen=True)
class KullbackReport:
    l1_distance: float
    entropy_bound: float
    kl_estimate: float
    threshold: float
    pinsker_threshold: float
    bias_allowance: float

    @property
    def passed(self) -> bool:
        return (
            self.l1_distance <= self.threshold + self.bias_allowance
            and self.l1_distance <= self.pinsker_threshold + self.bias_allowance
        )


def kullback_check(
    hist: MarginalHistogram,
    reference: MeasureSpec,
    entropy_bound: float,
    bias_allowance: float = 0.0,
    minimum_total: int = 10_000,
) -> KullbackReport:
    """L1 distance against sqrt(2 * entropy_bound), plus Pinsker self-consistency.

    For decay runs pass entropy_bound = exp(-2 alpha t) * H(rho_0); the
    threshold then equals exp(-alpha t) sqrt(2 H(rho_0)).
    """
    l1 = marginal_l1_distance(hist, reference, minimum_total)
    kl = marginal_relative_entropy(hist, reference, minimum_total)
    return KullbackReport(
        l1_distance=l1,
        entropy_bound=entropy_bound,
        kl_estimate=kl,
        threshold=sqrt(2.0 * max(entropy_bound, 0.0)),
        pinsker_threshold=sqrt(2.0 * max(kl, 0.0)),
        bias_allowance=bias_allowance,
    )


@dataclass(frozen=True)
class BiasCalibration:
    """Estimator bias allowances from reference-vs-reference runs.

    Each threshold is mean + 5 std over the calibration replicates, at the
    matched sample size and bin layout.
    """

    samples: int
    bins: int
    runs: int
    kl: float
    chi2: float
    l1: float


def calibrate_estimator_bias(
    reference: MeasureSpec,
    mode: tuple[int, int],
    samples: int,
    rng: RandomSource | np.random.Generator,
    bins: int = 64,
    n_sigmas: float = 6.0,
    runs: int = 16,
) -> BiasCalibration:
    """Run the estimators on fresh reference samples to size their bias."""
    gen = rng.generator() if isinstance(rng, RandomSource) else rng
    std = reference_component_std(reference, mode)
    extent = n_sigmas * std
    kls, chis, l1s = [], [], []
    for _ in range(runs):
        z = gen.standard_normal((samples, 2)) * std
        values = z[:, 0] + 1j * z[:, 1]
        counts = accumulate_mode_counts(values, extent, bins)
        hist = MarginalHistogram(mode=mode, extent=extent, counts=counts, total=samples)
        kls.append(marginal_relative_entropy(hist, reference, minimum_total=0))
        chis.append(marginal_chi_squared(hist, reference, minimum_total=0))
        l1s.append(marginal_l1_distance(hist, reference, minimum_total=0))
    def allowance(xs):
        xs = np.array(xs)
        return float(np.mean(xs) + 5.0 * np.std(xs, ddof=1))
    return BiasCalibration(
        samples=samples,
        bins=bins,
        runs=runs,
        kl=allowance(kls),
        chi2=allowance(chis),
        l1=allowance(l1s),
    )


# ---------------------------------------------------------------------------
# Infinitesimal invariance of the Gibbs densities


@dataclass(frozen=True)
class InvariancePair:
    name: str
    estimate: float
    stderr: float

    @property
    def z_score(self) -> float:
        return self.estimate / self.stderr if self.stderr > 0 else 0.0


@dataclass(frozen=True)
class InvarianceReport:
    beta: float
    samples: int
    energy_pairing: InvariancePair
    gibbs_pairing: InvariancePair

    @property
    def passed(self) -> bool:
        return abs(self.energy_pairing.z_score) < 4.0 and abs(self.gibbs_pairing.z_score) < 4.0


def infinitesimal_invariance_check(
    phi: CylinderFunction,
    beta: float,
    lattice: ModeLattice,
    rng: RandomSource | np.random.Generator,
    samples: int,
    block: int = 20_000,
) -> InvarianceReport:
    """Monte Carlo test of E[E_N * Bphi] = 0 and E[exp(-beta E_c) * Bphi] = 0.

    Bphi(xi) = <-b(xi), grad phi(xi)> is the transport part of the generator;
    both expectations vanish at finite N because the truncated flow conserves
    the energy and preserves the white-noise measure.  The Gibbs factor uses
    the centred truncated energy over the whole lattice.
    """
    if samples < 10_000:
        raise ValueError("need at least 1e4 samples")
    gen = rng.generator() if isinstance(rng, RandomSource) else rng
    support = np.array(phi.support, dtype=np.int64)
    vals_e = np.empty(samples)
    vals_g = np.empty(samples)
    done = 0
    while done < samples:
        b = min(block, samples - done)
        rows = white_noise_batch(lattice, gen, b)
        chart = coeffs_to_chart(rows[:, lattice.half_index])
        grad = phi.gradient(chart)
        b_rows = drift_batch(lattice, rows)
        b_chart = coeffs_to_chart(b_rows[:, lattice.half_index])
        transport = -np.sum(b_chart[:, support] * grad, axis=1)
        e_n = energy_rows(lattice, rows)
        e_c = centred_energy_rows(lattice, rows)
        vals_e[done : done + b] = e_n * transport
        vals_g[done : done + b] = np.exp(-beta * e_c) * transport
        done += b

    def pair(name, vals):
        return InvariancePair(
            name=name,
            estimate=float(np.mean(vals)),
            stderr=float(np.std(vals, ddof=1) / np.sqrt(samples)),
        )

    return InvarianceReport(
        beta=float(beta),
        samples=samples,
        energy_pairing=pair("energy_transport", vals_e),
        gibbs_pairing=pair("gibbs_transport", vals_g),
    )


# ---------------------------------------------------------------------------
# Stationarity of mode variances


@dataclass(frozen=True)
class VarianceSummary:
    """Per-mode second moments of an ensemble at the saved times."""

    times: np.ndarray  # (T,)
    modes: tuple[tuple[int, int], ...]  # half-lattice modes
    mean_sq: np.ndarray  # (T, n_modes) ensemble mean of |xi_k|^2
    stderr: np.ndarray  # (T, n_modes)
    count: int


@dataclass(frozen=True)
class StationarityRow:
    t: float
    mode: tuple[int, int]
    observed: float
    expected: float
    z_score: float


@dataclass(frozen=True)
class StationarityReport:
    rows: tuple[StationarityRow, ...]
    max_abs_z: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.max_abs_z < self.threshold


def stationarity_test(
    summary: VarianceSummary, reference: MeasureSpec, threshold: float = 4.0
) -> StationarityReport:
    """Per-mode z-scores of observed variance against |k|^2/(beta + |k|^2)."""
    rows = []
    worst = 0.0
    for ti, t in enumerate(np.asarray(summary.times)):
        for mi, mode in enumerate(summary.modes):
            expected = reference.mode_variance(mode)
            se = summary.stderr[ti, mi]
            z = (summary.mean_sq[ti, mi] - expected) / se if se > 0 else 0.0
            worst = max(worst, abs(z))
            rows.append(
                StationarityRow(
                    t=float(t),
                    mode=mode,
                    observed=float(summary.mean_sq[ti, mi]),
                    expected=float(expected),
                    z_score=float(z),
                )
            )
    return StationarityReport(rows=tuple(rows), max_abs_z=float(worst), threshold=threshold)
