"""Exact samplers and analytic functionals for the Gaussian vorticity measures.

Two families of measures on the truncated coefficient space:

* the enstrophy (white noise) measure: independent standard complex Gaussian
  coefficients, E|coeff(k)|^2 = 1 for every mode;
* the energy-enstrophy measure with parameter beta > -1: independent complex
  Gaussians with per-mode variance |k|^2 / (beta + |k|^2).  beta = 0 recovers
  white noise; near beta = -1 the |k| = 1 variances blow up, so construction
  is guarded at beta >= -1 + 1e-6.

The characteristic functional of the beta-measure evaluated at a test field f
is exp(-1/2 sum_k |k|^2 |f_k|^2 / (beta + |k|^2)), consistent with the mode
variances above under the orthonormal basis e_k = exp(i k.x).

The Wick-renormalized energy truncated to the Euclidean ball |k| <= K has an
exact partition function: each half mode contributes an independent Exp(1)
variable X = |coeff|^2, and E exp(-s (X - 1)) = e^s / (1 + s), giving

    Z(beta, K) = prod_{k in half, |k| <= K} exp(s_k) / (1 + s_k),
    s_k = beta / |k|^2.

Initial laws absolutely continuous with respect to white noise are produced
by rejection sampling of bounded cylinder densities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import MeasureParameterError, RejectionSamplingError
from .rng import RandomSource, standard_complex
from .spectral import ModeLattice, SpectralField, coeffs_to_chart, is_half_representative

BETA_FLOOR = -1.0 + 1e-6


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not np.isfinite(beta) or beta <= BETA_FLOOR:
        raise MeasureParameterError(
            f"beta must exceed -1 (guarded at beta > {BETA_FLOOR}); got {beta}"
        )
    return beta


@dataclass(frozen=True)
class MeasureSpec:
    """Parameters (beta, N) of a Gaussian measure; beta = 0 is white noise."""

    beta: float
    n_max: int

    def __post_init__(self):
        _check_beta(self.beta)
        if self.n_max < 1:
            raise MeasureParameterError(f"n_max must be >= 1, got {self.n_max}")

    def mode_variance(self, mode: tuple[int, int]) -> float:
        ksq = float(mode[0] ** 2 + mode[1] ** 2)
        return ksq / (self.beta + ksq)


def mode_variances(spec: MeasureSpec, lattice: ModeLattice) -> np.ndarray:
    """Per-mode complex variances E|coeff(k)|^2, aligned with lattice.modes."""
    return lattice.k_sq / (spec.beta + lattice.k_sq)


# ---------------------------------------------------------------------------
# Samplers


def white_noise_batch(
    lattice: ModeLattice, gen: np.random.Generator, count: int
) -> np.ndarray:
    """(count, M) white-noise coefficient rows, conjugates mirrored structurally."""
    half = standard_complex(gen, (count, len(lattice.half)))
    out = np.zeros((count, lattice.size), dtype=np.complex128)
    out[:, lattice.half_index] = half
    out[:, lattice.half_conj_index] = np.conj(half)
    return out


def sample_white_noise(lattice: ModeLattice, rng: RandomSource | np.random.Generator) -> SpectralField:
    """One draw from the enstrophy (white noise) measure on the lattice."""
    gen = rng.generator() if isinstance(rng, RandomSource) else rng
    return SpectralField(lattice, white_noise_batch(lattice, gen, 1)[0], _trusted=True)


def energy_enstrophy_batch(
    spec: MeasureSpec, lattice: ModeLattice, gen: np.random.Generator, count: int
) -> np.ndarray:
    """(count, M) rows from the energy-enstrophy measure.

    Implemented as a per-mode scaling of white-noise draws, so beta = 0
    reproduces white_noise_batch bit for bit.
    """
    scale = np.sqrt(mode_variances(spec, lattice)[lattice.half_index])
    half = standard_complex(gen, (count, len(lattice.half))) * scale
    out = np.zeros((count, lattice.size), dtype=np.complex128)
    out[:, lattice.half_index] = half
    out[:, lattice.half_conj_index] = np.conj(half)
    return out


def sample_energy_enstrophy(
    spec: MeasureSpec, lattice: ModeLattice, rng: RandomSource | np.random.Generator
) -> SpectralField:
    gen = rng.generator() if isinstance(rng, RandomSource) else rng
    return SpectralField(
        lattice, energy_enstrophy_batch(spec, lattice, gen, 1)[0], _trusted=True
    )


# ---------------------------------------------------------------------------
# Analytic functionals


def characteristic_functional(spec: MeasureSpec, f: SpectralField) -> float:
    """E exp(i <omega, f>) under the beta-measure restricted to Lambda_N.

    Returns exp(-1/2 sum_k |k|^2 |f_k|^2 / (beta + |k|^2)) over the modes of
    f that lie inside the measure's lattice.
    """
    lat = f.lattice
    inside = np.max(np.abs(lat.k_array), axis=1) <= spec.n_max
    var = lat.k_sq / (spec.beta + lat.k_sq)
    quad = np.sum(var[inside] * np.abs(f.coeffs[inside]) ** 2)
    return float(np.exp(-0.5 * quad))


def wick_ball_half_ksq(n_max: int, cutoff: float) -> np.ndarray:
    """|k|^2 values of half-lattice modes inside the Euclidean ball |k| <= cutoff."""
    if cutoff < 1.0:
        raise MeasureParameterError(f"Wick cutoff must be >= 1, got {cutoff}")
    r = int(np.floor(cutoff))
    out = []
    for kx in range(-r, r + 1):
        for ky in range(-r, r + 1):
            if (kx, ky) == (0, 0) or not is_half_representative(kx, ky):
                continue
            ksq = kx * kx + ky * ky
            if ksq <= cutoff * cutoff and max(abs(kx), abs(ky)) <= n_max:
                out.append(float(ksq))
    return np.array(sorted(out), dtype=np.float64)


def truncated_partition_function(beta: float, cutoff: float, n_max: int | None = None) -> float:
    """Exact Z(beta, K) = prod e^{s}/(1+s) over half modes with |k| <= K.

    ``n_max`` optionally restricts the product to modes representable on a
    lattice (the default, None, uses the full ball, matching the infinite
    lattice restricted to |k| <= K).
    """
    beta = _check_beta(beta)
    if cutoff < 1.0:
        raise MeasureParameterError(f"Wick cutoff must be >= 1, got {cutoff}")
    limit = int(np.floor(cutoff)) if n_max is None else n_max
    ksq = wick_ball_half_ksq(limit, cutoff)
    s = beta / ksq
    return float(np.exp(np.sum(s)) / np.prod(1.0 + s))


def log_truncated_partition_function(beta: float, cutoff: float) -> float:
    beta = _check_beta(beta)
    ksq = wick_ball_half_ksq(int(np.floor(cutoff)), cutoff)
    s = beta / ksq
    return float(np.sum(s) - np.sum(np.log1p(s)))


# ---------------------------------------------------------------------------
# Bounded cylinder densities and rejection sampling


@dataclass(frozen=True)
class CylinderDensity:
    """Bounded density rho(xi) depending on finitely many chart coordinates.

    ``support_modes`` lists half-lattice modes; ``evaluate`` receives the
    corresponding chart coordinates as an array of shape (..., 2*m) with the
    (re, im) pair of each support mode in order, and must return values in
    [0, bound].  After normalization the sampler's law is rho d(mu_N).
    """

    support_modes: tuple[tuple[int, int], ...]
    evaluate: Callable[[np.ndarray], np.ndarray]
    bound: float

    def __post_init__(self):
        if self.bound <= 0:
            raise MeasureParameterError("density bound must be positive")
        for mode in self.support_modes:
            if not is_half_representative(*mode):
                raise MeasureParameterError(
                    f"support mode {mode} is not a half-lattice representative"
                )

    def chart_columns(self, lattice: ModeLattice) -> np.ndarray:
        """Chart coordinate indices (re, im interleaved) of the support modes."""
        cols = []
        half_lookup = {m: j for j, m in enumerate(lattice.half)}
        for mode in self.support_modes:
            j = half_lookup[mode]
            cols.extend((2 * j, 2 * j + 1))
        return np.array(cols, dtype=np.int64)


def uniform_density() -> CylinderDensity:
    """The density identically 1 (sampling law = white noise)."""
    return CylinderDensity(
        support_modes=((1, 0),),
        evaluate=lambda x: np.ones(x.shape[:-1]),
        bound=1.0,
    )


def rejection_sample_batch(
    density: CylinderDensity,
    lattice: ModeLattice,
    gen: np.random.Generator,
    count: int,
    *,
    proposal_block: int = 8192,
    max_proposals: int = 1_000_000,
) -> tuple[np.ndarray, int, int]:
    """Draw ``count`` samples of rho d(mu_N) by rejection from white noise.

    Returns (coefficient rows, n_proposed, n_accepted).  Fails once the
    running acceptance rate drops below 1e-4 after max_proposals proposals,
    which indicates the stated bound is uselessly loose.
    """
    cols = density.chart_columns(lattice)
    rows = np.empty((count, lattice.size), dtype=np.complex128)
    filled = 0
    proposed = 0
    accepted = 0
    while filled < count:
        block = min(proposal_block, max(1024, count - filled))
        cand = white_noise_batch(lattice, gen, block)
        chart = coeffs_to_chart(cand[:, lattice.half_index])
        values = np.asarray(density.evaluate(chart[:, cols]), dtype=np.float64)
        if values.shape != (block,):
            raise MeasureParameterError(
                f"density returned shape {values.shape} for a block of {block}"
            )
        if np.any(values < 0) or np.any(values > density.bound):
            raise MeasureParameterError(
                "density values left [0, bound]; invariant violated"
            )
        u = gen.random(block)
        keep = u * density.bound < values
        proposed += block
        accepted += int(np.count_nonzero(keep))
        take = cand[keep][: count - filled]
        rows[filled : filled + take.shape[0]] = take
        filled += take.shape[0]
        if proposed >= max_proposals and accepted < 1e-4 * proposed:
            raise RejectionSamplingError(
                f"acceptance rate {accepted / proposed:.2e} after {proposed} proposals; "
                "density bound too loose"
            )
    return rows, proposed, accepted


def sample_cylinder_density(
    density: CylinderDensity, lattice: ModeLattice, rng: RandomSource | np.random.Generator
) -> SpectralField:
    gen = rng.generator() if isinstance(rng, RandomSource) else rng
    rows, _, _ = rejection_sample_batch(density, lattice, gen, 1)
    return SpectralField(lattice, rows[0], _trusted=True)


# Named density forms for configuration files.


def sine_tilt_density(
    mode: tuple[int, int] = (1, 0), amplitude: float = 0.9, frequency: float = 1.0
) -> CylinderDensity:
    """rho = 1 + a sin(c * x_re) on one mode; a probability density for |a| < 1."""
    if not 0 <= abs(amplitude) < 1:
        raise MeasureParameterError("amplitude must satisfy |a| < 1")

    def evaluate(x: np.ndarray) -> np.ndarray:
        return 1.0 + amplitude * np.sin(frequency * x[..., 0])

    return CylinderDensity(
        support_modes=(mode,), evaluate=evaluate, bound=1.0 + abs(amplitude)
    )


def density_from_descriptor(desc: dict) -> CylinderDensity:
    """Build a named density from a config descriptor.

    Supported forms: {"form": "uniform"} and
    {"form": "sine_tilt", "mode": [kx, ky], "amplitude": a, "frequency": c}.
    """
    form = desc.get("form")
    if form == "uniform":
        return uniform_density()
    if form == "sine_tilt":
        mode = tuple(desc.get("mode", (1, 0)))
        return sine_tilt_density(
            mode=(int(mode[0]), int(mode[1])),
            amplitude=float(desc.get("amplitude", 0.9)),
            frequency=float(desc.get("frequency", 1.0)),
        )
    raise MeasureParameterError(f"unknown density form {form!r}")
