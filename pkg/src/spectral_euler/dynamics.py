"""Galerkin drift, cutoff regularizations, time integrators and the generator.

The truncated Euler nonlinearity acts on coefficient vectors xi over Lambda_N
as the quadratic form

    b(xi)_n = - sum_k (kperp . n / |k|^2) xi_k xi_{n-k},

restricted to pairs with k, n-k and n all inside the lattice.  Algebraic
identities that the diagnostics verify numerically: <b(xi), xi> = 0 (the
quadratic form is skew in the right way), the Euclidean divergence of b in
the real chart vanishes, and the flow of dxi/dt = -b(xi) conserves both
sum |xi_k|^2 (enstrophy) and sum |xi_k|^2/|k|^2 (energy).

The full SDE  d xi + b(xi) dt = -alpha xi dt + sqrt(2 alpha) dW  is integrated
by one of three schemes:

* explicit-rk4: classical fourth-order step for the alpha = 0 flow;
* em: Euler-Maruyama;
* ou-split: an explicit nonlinear substep (one classical RK4 step of
  dxi/dt = -b(xi)) composed with the exact Ornstein-Uhlenbeck transition
  xi -> exp(-alpha dt) xi + sqrt(1 - exp(-2 alpha dt)) g.  Both substeps
  preserve the white-noise measure to high order, so stationarity tests are
  not polluted by discretization bias.

Hermitian symmetry is structural everywhere: drifts and noise are computed
on the half lattice and mirrored, and the remaining arithmetic combines
Hermitian arrays with real scalars, which is an exact symmetry operation in
IEEE arithmetic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    from numba import njit, prange

from .cylinder import CylinderFunction
from .errors import FieldFormatError, OverflowGuardError
from .measures import white_noise_batch
from .rng import RandomSource, standard_complex
from .spectral import (
    ModeLattice,
    SpectralField,
    chart_to_coeffs,
    coeffs_to_chart,
    field_to_chart,
    hnorm_sq,
)

SCHEMES = ("explicit-rk4", "em", "ou-split")

# A trajectory whose coefficient norm passes this is declared blown up.
NORM_GUARD = 1.0e6


# ---------------------------------------------------------------------------
# Drift evaluation


@dataclass(frozen=True)
class DriftTable:
    """Precomputed index arrays of the quadratic drift sum.

    Entry p contributes weight[p] * xi[k_idx[p]] * xi[j_idx[p]] to the half
    mode at position n_pos[p]; conjugate modes are filled by mirroring.
    """

    k_idx: np.ndarray
    j_idx: np.ndarray
    n_pos: np.ndarray
    weights: np.ndarray
    n_half: int


@lru_cache(maxsize=32)
def drift_table(lattice: ModeLattice) -> DriftTable:
    lookup = {m: i for i, m in enumerate(lattice.modes)}
    ks, js, ns, ws = [], [], [], []
    for pos, (nx, ny) in enumerate(lattice.half):
        for ki, (kx, ky) in enumerate(lattice.modes):
            j = (nx - kx, ny - ky)
            ji = lookup.get(j)
            if ji is None:
                continue
            # kperp . n with kperp = (k2, -k1)
            w = (ky * nx - kx * ny) / float(kx * kx + ky * ky)
            if w == 0.0:
                continue
            ks.append(ki)
            js.append(ji)
            ns.append(pos)
            ws.append(w)
    return DriftTable(
        k_idx=np.array(ks, dtype=np.int64),
        j_idx=np.array(js, dtype=np.int64),
        n_pos=np.array(ns, dtype=np.int64),
        weights=np.array(ws, dtype=np.float64),
        n_half=len(lattice.half),
    )


@njit(parallel=True, cache=True)
def _drift_half_kernel(C, k_idx, j_idx, n_pos, weights, n_half):  # pragma: no cover
    B = C.shape[0]
    out = np.zeros((B, n_half), dtype=np.complex128)
    for b in prange(B):
        row = C[b]
        acc = out[b]
        for p in range(k_idx.shape[0]):
            acc[n_pos[p]] -= weights[p] * row[k_idx[p]] * row[j_idx[p]]
    return out


def drift_batch(lattice: ModeLattice, coeff_rows: np.ndarray) -> np.ndarray:
    """Drift of every row of a (B, M) coefficient array, Hermitian by mirror."""
    table = drift_table(lattice)
    half = _drift_half_kernel(
        np.ascontiguousarray(coeff_rows),
        table.k_idx,
        table.j_idx,
        table.n_pos,
        table.weights,
        table.n_half,
    )
    out = np.zeros_like(coeff_rows)
    out[:, lattice.half_index] = half
    out[:, lattice.half_conj_index] = np.conj(half)
    return out


def _drift_half_reference(lattice: ModeLattice, coeffs: np.ndarray) -> np.ndarray:
    """Direct double sum via bincount; the correctness oracle for the kernel."""
    table = drift_table(lattice)
    prod = table.weights * (coeffs[table.k_idx] * coeffs[table.j_idx])
    half = -(
        np.bincount(table.n_pos, weights=prod.real, minlength=table.n_half)
        + 1j * np.bincount(table.n_pos, weights=prod.imag, minlength=table.n_half)
    )
    return half


@dataclass(frozen=True)
class DriftResult:
    value: SpectralField
    pairing_with_input: float


def eval_drift(f: SpectralField) -> DriftResult:
    """Reference direct-sum drift together with the pairing <b(xi), xi>."""
    half = _drift_half_reference(f.lattice, f.coeffs)
    value = SpectralField.from_half(f.lattice, half)
    pairing = float(np.real(np.sum(value.coeffs * np.conj(f.coeffs))))
    return DriftResult(value=value, pairing_with_input=pairing)


# ---------------------------------------------------------------------------
# Cutoff regularization


def _smootherstep(t: np.ndarray | float) -> np.ndarray | float:
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def _smootherstep_derivative(t: np.ndarray | float) -> np.ndarray | float:
    t = np.clip(t, 0.0, 1.0)
    return 30.0 * t * t * (t - 1.0) * (t - 1.0)


@dataclass(frozen=True)
class CutoffSpec:
    """Radial C^1 bump: 1 on |xi| <= n, 0 on |xi| >= 2n, smootherstep between."""

    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"cutoff radius must be positive, got {self.radius}")

    def value(self, r: float) -> float:
        if r <= self.radius:
            return 1.0
        if r >= 2.0 * self.radius:
            return 0.0
        return float(1.0 - _smootherstep((r - self.radius) / self.radius))

    def derivative(self, r: float) -> float:
        if r <= self.radius or r >= 2.0 * self.radius:
            return 0.0
        return float(-_smootherstep_derivative((r - self.radius) / self.radius) / self.radius)


def eval_cutoff_drift(f: SpectralField, cutoff: CutoffSpec) -> DriftResult:
    """chi(|xi|) * b(xi): equals the drift inside the ball, vanishes outside 2n."""
    base = eval_drift(f)
    chi = cutoff.value(np.sqrt(hnorm_sq(f)))
    value = SpectralField(f.lattice, chi * base.value.coeffs, _trusted=True)
    return DriftResult(value=value, pairing_with_input=chi * base.pairing_with_input)


# ---------------------------------------------------------------------------
# Divergence diagnostics


@dataclass(frozen=True)
class DivergenceReport:
    trials: int
    max_abs_divergence: float
    max_abs_pairing: float
    max_norm: float


def chart_divergence(f: SpectralField) -> float:
    """Euclidean divergence of the drift at xi, in the real chart.

    The drift is quadratic in the chart coordinates, so each diagonal
    partial is computed exactly by a unit central difference
    d_p b_p = (b_p(x + e_p) - b_p(x - e_p)) / 2 (third derivatives vanish).
    """
    lattice = f.lattice
    x = field_to_chart(f)
    dim = lattice.dimension
    charts = np.repeat(x[None, :], 2 * dim, axis=0)
    idx = np.arange(dim)
    charts[2 * idx, idx] += 1.0
    charts[2 * idx + 1, idx] -= 1.0
    rows = np.zeros((2 * dim, lattice.size), dtype=np.complex128)
    half = chart_to_coeffs(charts)
    rows[:, lattice.half_index] = half
    rows[:, lattice.half_conj_index] = np.conj(half)
    b_rows = drift_batch(lattice, rows)
    b_chart = coeffs_to_chart(b_rows[:, lattice.half_index])
    partials = 0.5 * (b_chart[2 * idx, idx] - b_chart[2 * idx + 1, idx])
    return float(np.sum(partials))


def cutoff_chart_divergence(f: SpectralField, cutoff: CutoffSpec) -> float:
    """div(chi b) = chi(|xi|) div b + chi'(|xi|) <xi, b> / |xi|, assembled exactly."""
    r = float(np.sqrt(hnorm_sq(f)))
    base = eval_drift(f)
    div_b = chart_divergence(f)
    if r == 0.0:
        return cutoff.value(0.0) * div_b
    return cutoff.value(r) * div_b + cutoff.derivative(r) * base.pairing_with_input / r


def divergence_check(
    lattice: ModeLattice,
    rng: RandomSource | np.random.Generator,
    trials: int,
    cutoff: CutoffSpec | None = None,
) -> DivergenceReport:
    """Max |div b| and max |<b, xi>| over white-noise trial points."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    gen = rng.generator() if isinstance(rng, RandomSource) else rng
    max_div = 0.0
    max_pair = 0.0
    max_norm = 0.0
    for _ in range(trials):
        coeffs = white_noise_batch(lattice, gen, 1)[0]
        f = SpectralField(lattice, coeffs, _trusted=True)
        if cutoff is None:
            res = eval_drift(f)
            div = chart_divergence(f)
        else:
            res = eval_cutoff_drift(f, cutoff)
            div = cutoff_chart_divergence(f, cutoff)
        max_div = max(max_div, abs(div))
        max_pair = max(max_pair, abs(res.pairing_with_input))
        max_norm = max(max_norm, float(np.sqrt(hnorm_sq(f))))
    return DivergenceReport(
        trials=trials,
        max_abs_divergence=max_div,
        max_abs_pairing=max_pair,
        max_norm=max_norm,
    )


# ---------------------------------------------------------------------------
# Time integration


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    scheme: str
    alpha: float
    t_final: float

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_final <= 0:
            raise ValueError("t_final must be positive")
        if self.dt > self.t_final:
            raise ValueError("dt must not exceed t_final")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


def rk4_rows(lattice: ModeLattice, rows: np.ndarray, dt: float) -> np.ndarray:
    """One classical RK4 step of d xi/dt = -b(xi) on a batch of rows."""
    k1 = -drift_batch(lattice, rows)
    k2 = -drift_batch(lattice, rows + (0.5 * dt) * k1)
    k3 = -drift_batch(lattice, rows + (0.5 * dt) * k2)
    k4 = -drift_batch(lattice, rows + dt * k3)
    return rows + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def em_rows(
    lattice: ModeLattice, rows: np.ndarray, dt: float, alpha: float, gen: np.random.Generator
) -> np.ndarray:
    """Euler-Maruyama step; noise drawn on the half lattice and mirrored."""
    b = drift_batch(lattice, rows)
    out = rows - dt * (b + alpha * rows)
    if alpha > 0:
        g = standard_complex(gen, (rows.shape[0], len(lattice.half)))
        amp = np.sqrt(2.0 * alpha * dt)
        out[:, lattice.half_index] += amp * g
        out[:, lattice.half_conj_index] += amp * np.conj(g)
    return out


def ou_split_rows(
    lattice: ModeLattice, rows: np.ndarray, dt: float, alpha: float, gen: np.random.Generator
) -> np.ndarray:
    """Explicit nonlinear RK4 substep, then the exact OU transition."""
    out = rk4_rows(lattice, rows, dt)
    if alpha > 0:
        decay = np.exp(-alpha * dt)
        amp = np.sqrt(1.0 - np.exp(-2.0 * alpha * dt))
        g = standard_complex(gen, (rows.shape[0], len(lattice.half)))
        out = decay * out
        out[:, lattice.half_index] += amp * g
        out[:, lattice.half_conj_index] += amp * np.conj(g)
    return out


def step_rows(
    lattice: ModeLattice,
    rows: np.ndarray,
    config: IntegratorConfig,
    gen: np.random.Generator | None,
) -> np.ndarray:
    if config.scheme == "explicit-rk4":
        if config.alpha != 0.0:
            raise ValueError("explicit-rk4 integrates the alpha = 0 flow; use ou-split")
        return rk4_rows(lattice, rows, config.dt)
    if gen is None and config.alpha > 0:
        raise ValueError("stochastic schemes need a random generator")
    if config.scheme == "em":
        return em_rows(lattice, rows, config.dt, config.alpha, gen)
    return ou_split_rows(lattice, rows, config.dt, config.alpha, gen)


def step_deterministic(f: SpectralField, config: IntegratorConfig) -> SpectralField:
    """One RK4 step of the truncated Euler flow (requires scheme explicit-rk4)."""
    if config.scheme != "explicit-rk4":
        raise ValueError(f"step_deterministic requires scheme 'explicit-rk4', got {config.scheme!r}")
    if config.alpha != 0.0:
        raise ValueError("explicit-rk4 rejects nonzero alpha; use the ou-split scheme")
    rows = rk4_rows(f.lattice, f.coeffs[None, :], config.dt)
    return SpectralField(f.lattice, rows[0], _trusted=True)


def step_stochastic(
    f: SpectralField, config: IntegratorConfig, rng: RandomSource | np.random.Generator
) -> SpectralField:
    """One step of the full SDE under 'em' or 'ou-split'.

    Pass a np.random.Generator when advancing a trajectory over many steps;
    a RandomSource argument is converted to a fresh one-shot generator.
    """
    if config.scheme not in ("em", "ou-split"):
        raise ValueError(f"step_stochastic requires 'em' or 'ou-split', got {config.scheme!r}")
    gen = rng.generator() if isinstance(rng, RandomSource) else rng
    rows = step_rows(f.lattice, f.coeffs[None, :], config, gen)
    return SpectralField(f.lattice, rows[0], _trusted=True)


def guard_rows(rows: np.ndarray, step: int) -> None:
    """Abort when any trajectory norm exceeds the overflow guard."""
    worst = float(np.max(np.sum(np.abs(rows) ** 2, axis=1)))
    if not np.isfinite(worst) or worst > NORM_GUARD ** 2:
        raise OverflowGuardError(
            f"trajectory norm exceeded {NORM_GUARD:.0e} at step {step} "
            f"(max |xi|^2 = {worst:.3e}); reduce dt or strengthen friction"
        )


# ---------------------------------------------------------------------------
# Generator on cylinder functions


def eval_generator(psi: CylinderFunction, f: SpectralField, alpha: float) -> float:
    """A psi(xi) = -<b(xi), grad psi(xi)> + alpha (Lap psi - <xi, grad psi>)(xi)."""
    return float(
        eval_generator_rows(psi, f.lattice, f.coeffs[None, :], alpha)[0]
    )


def eval_generator_rows(
    psi: CylinderFunction, lattice: ModeLattice, rows: np.ndarray, alpha: float
) -> np.ndarray:
    """Vectorized generator evaluation over a (B, M) coefficient batch."""
    if rows.shape[1] != lattice.size:
        raise FieldFormatError(f"rows have {rows.shape[1]} modes, lattice has {lattice.size}")
    support = np.array(psi.support, dtype=np.int64)
    if support.size and support.max() >= lattice.dimension:
        raise FieldFormatError("cylinder support exceeds the chart dimension")
    chart = coeffs_to_chart(rows[:, lattice.half_index])
    grad = psi.gradient(chart)
    out = np.zeros(rows.shape[0])
    b_rows = drift_batch(lattice, rows)
    b_chart = coeffs_to_chart(b_rows[:, lattice.half_index])
    out -= np.sum(b_chart[:, support] * grad, axis=1)
    if alpha != 0.0:
        out += alpha * (psi.laplacian(chart) - np.sum(chart[:, support] * grad, axis=1))
    return out


def transport_term_rows(
    psi: CylinderFunction, lattice: ModeLattice, rows: np.ndarray
) -> np.ndarray:
    """The Liouville part <-b(xi), grad psi(xi)> over a coefficient batch."""
    support = np.array(psi.support, dtype=np.int64)
    chart = coeffs_to_chart(rows[:, lattice.half_index])
    grad = psi.gradient(chart)
    b_rows = drift_batch(lattice, rows)
    b_chart = coeffs_to_chart(b_rows[:, lattice.half_index])
    return -np.sum(b_chart[:, support] * grad, axis=1)
