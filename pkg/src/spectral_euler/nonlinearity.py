"""Symmetrized interaction kernel and second-chaos statistics of the nonlinearity.

For a smooth test function phi the quadratic term of the vorticity equation
pairs with phi through the symmetric kernel

    H_phi(x, y) = (grad phi(x) - grad phi(y)) / 2 . K(x - y),

where K is the Biot-Savart kernel.  K explodes like |x|^{-1} at the origin,
so H_phi is regularized by truncating K to modes |k|_inf <= n.  Truncation
preserves the oddness of K, hence H^n_phi(x, x) = 0 exactly at every n and
the kernel stays symmetric; these two structural facts remove the diagonal
counterterm from every diagnostic.

Two independent evaluations of the pairing <omega x omega, H^n_phi> are
provided: an exact Fourier double sum and a tensor-product grid quadrature.
For trigonometric omega they agree to round-off once the truncation covers
the lattice and the grid resolves all product frequencies.

Under white noise the pairing lies in the second Wiener chaos: its mean
vanishes (zero diagonal trace) and its variance equals 2 ||H^n_phi||^2 in
L^2 of the product torus, which is the Monte Carlo oracle used here.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import FieldFormatError, LatticeError
from .rng import RandomSource, standard_complex
from .spectral import ModeLattice, SpectralField, cached_lattice, evaluate_on_grid


class TestFunction:
    """Real trigonometric polynomial phi given by Hermitian Fourier coefficients.

    ``c2_norm`` is the exactly computable upper bound sum (1 + |k|^2) |phi_k|
    used as the C^2 norm surrogate in moment envelopes.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: dict[tuple[int, int], complex]):
        cleaned: dict[tuple[int, int], complex] = {}
        for (kx, ky), v in coeffs.items():
            if (kx, ky) == (0, 0):
                raise FieldFormatError("test functions carry no zero mode (zero average)")
            v = complex(v)
            if v != 0:
                cleaned[(int(kx), int(ky))] = v
        for k, v in cleaned.items():
            neg = (-k[0], -k[1])
            partner = cleaned.get(neg)
            if partner is None or partner != v.conjugate():
                raise FieldFormatError(f"coefficients not Hermitian at mode {k}")
        self.coeffs = cleaned

    @property
    def c2_norm(self) -> float:
        return float(
            sum((1.0 + kx * kx + ky * ky) * abs(v) for (kx, ky), v in self.coeffs.items())
        )

    @property
    def max_mode(self) -> int:
        return max((max(abs(kx), abs(ky)) for kx, ky in self.coeffs), default=0)

    def gradient_at(self, points: np.ndarray) -> np.ndarray:
        """grad phi at points of shape (..., 2); real output of the same shape."""
        points = np.asarray(points, dtype=np.float64)
        out = np.zeros(points.shape, dtype=np.complex128)
        for (kx, ky), v in self.coeffs.items():
            phase = np.exp(1j * (kx * points[..., 0] + ky * points[..., 1]))
            out[..., 0] += 1j * kx * v * phase
            out[..., 1] += 1j * ky * v * phase
        return out.real


def cosine_test_function(mode: tuple[int, int], amplitude: float = 2.0) -> TestFunction:
    """phi = amplitude * cos(k . x)."""
    kx, ky = mode
    half = amplitude / 2.0
    return TestFunction({(kx, ky): half, (-kx, -ky): half})


def mode_test_function(mode: tuple[int, int]) -> TestFunction:
    """phi = e_k + e_{-k} (the real pairing partner of a single lattice mode)."""
    kx, ky = mode
    return TestFunction({(kx, ky): 1.0, (-kx, -ky): 1.0})


@dataclass(frozen=True)
class KernelSpec:
    """phi plus the Fourier truncation order of K and a quadrature grid size."""

    phi: TestFunction
    regularization_order: int | None
    grid_size: int

    def __post_init__(self):
        if self.regularization_order is not None and self.regularization_order < 1:
            raise ValueError("regularization order must be >= 1")
        if self.grid_size < 2:
            raise ValueError("grid_size must be >= 2")

    def require_order(self) -> int:
        if self.regularization_order is None:
            raise LatticeError(
                "the unregularized kernel diverges on the diagonal; "
                "set regularization_order"
            )
        return int(self.regularization_order)


def truncated_biot_savart_kernel(order: int, points: np.ndarray) -> np.ndarray:
    """K_n at points of shape (..., 2): sum over 0 < |k|_inf <= n of i kperp/|k|^2 e_k.

    The sum of each conjugate pair is real; K_n is odd and K_n(0) = 0 exactly
    (pairs cancel exactly in floating point).
    """
    points = np.asarray(points, dtype=np.float64)
    out = np.zeros(points.shape, dtype=np.float64)
    n = int(order)
    for kx in range(-n, n + 1):
        for ky in range(0, n + 1):
            if ky == 0 and kx <= 0:
                continue  # half lattice; the conjugate pair is folded in below
            ksq = float(kx * kx + ky * ky)
            phase = kx * points[..., 0] + ky * points[..., 1]
            # i kperp e^{i k.x} + conj = -2 kperp sin(k.x)
            s = -2.0 * np.sin(phase) / ksq
            out[..., 0] += ky * s
            out[..., 1] += -kx * s
    return out


def eval_kernel(spec: KernelSpec, x: np.ndarray, y: np.ndarray) -> float:
    """H^n_phi(x, y) = (grad phi(x) - grad phi(y))/2 . K_n(x - y)."""
    order = spec.require_order()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    gx = spec.phi.gradient_at(x)
    gy = spec.phi.gradient_at(y)
    kn = truncated_biot_savart_kernel(order, x - y)
    return float(np.sum(0.5 * (gx - gy) * kn, axis=-1))


def _grid_points(grid_size: int) -> np.ndarray:
    x = 2.0 * np.pi * np.arange(grid_size) / grid_size
    xx, yy = np.meshgrid(x, x, indexing="ij")
    return np.stack([xx.ravel(), yy.ravel()], axis=-1)


def kernel_grid_matrix(spec: KernelSpec) -> np.ndarray:
    """H^n_phi on all grid point pairs, shape (G^2, G^2)."""
    order = spec.require_order()
    g = spec.grid_size
    pts = _grid_points(g)
    grad = spec.phi.gradient_at(pts)  # (G^2, 2)
    # K_n on the difference lattice; differences of grid points live on the grid
    kx_grid = truncated_biot_savart_kernel(order, _grid_points(g)).reshape(g, g, 2)
    idx = np.arange(g)
    di = (idx[:, None] - idx[None, :]) % g
    ii = np.repeat(np.arange(g), g)
    jj = np.tile(np.arange(g), g)
    DI = di[np.ix_(ii, ii)]
    DJ = di[np.ix_(jj, jj)]
    kdx = kx_grid[DI, DJ, 0]
    kdy = kx_grid[DI, DJ, 1]
    return 0.5 * (
        (grad[:, None, 0] - grad[None, :, 0]) * kdx
        + (grad[:, None, 1] - grad[None, :, 1]) * kdy
    )


def kernel_l2_norm(spec: KernelSpec) -> float:
    """Grid estimate of ||H^n_phi|| in L^2(T^2 x T^2) (normalized Haar on both)."""
    h = kernel_grid_matrix(spec)
    return float(np.sqrt(np.mean(h * h)))


def kernel_l2_distance(spec_a: KernelSpec, spec_b: KernelSpec) -> float:
    """Grid estimate of ||H^a_phi - H^b_phi||_{L^2}; requires a shared phi."""
    if spec_a.phi.coeffs != spec_b.phi.coeffs:
        raise FieldFormatError("kernel distance requires both specs to share phi")
    g = max(spec_a.grid_size, spec_b.grid_size)
    ha = kernel_grid_matrix(KernelSpec(spec_a.phi, spec_a.regularization_order, g))
    hb = kernel_grid_matrix(KernelSpec(spec_b.phi, spec_b.regularization_order, g))
    d = ha - hb
    return float(np.sqrt(np.mean(d * d)))


# ---------------------------------------------------------------------------
# Pairings


def _pairing_matrix(
    lattice: ModeLattice, phi: TestFunction, order: int | None
) -> np.ndarray:
    """Coefficient matrix C with <omega x omega, H^n_phi> = sum C[k,l] xi_k xi_l.

    Derived from <(K_n * omega) omega, grad phi>, which equals the kernel
    pairing exactly for every truncation order because K_n stays odd.
    ``order=None`` means the untruncated K (every lattice mode passes).
    """
    modes = lattice.k_array
    m = lattice.size
    out = np.zeros((m, m), dtype=np.complex128)
    for a in range(m):
        kx, ky = int(modes[a, 0]), int(modes[a, 1])
        if order is not None and max(abs(kx), abs(ky)) > order:
            continue
        ksq = float(kx * kx + ky * ky)
        # u weight: i kperp / |k|^2
        uw = 1j * np.array([ky, -kx]) / ksq
        for b in range(m):
            mx, my = kx + int(modes[b, 0]), ky + int(modes[b, 1])
            c_phi = phi.coeffs.get((-mx, -my))
            if c_phi is None:
                continue
            out[a, b] += (uw[0] * mx + uw[1] * my) * (-1j) * c_phi
    return out


@lru_cache(maxsize=64)
def _pairing_matrix_cached(n_max: int, phi_key: tuple, order: int | None) -> np.ndarray:
    lattice = cached_lattice(n_max)
    phi = TestFunction(dict(phi_key))
    return _pairing_matrix(lattice, phi, order)


def _phi_key(phi: TestFunction) -> tuple:
    return tuple(sorted(phi.coeffs.items()))


def pairing_spectral(omega: SpectralField, phi: TestFunction) -> float:
    """<(K * omega) omega, grad phi> by exact Fourier convolution."""
    c = _pairing_matrix_cached(omega.lattice.n_max, _phi_key(phi), None)
    return float(np.real(omega.coeffs @ c @ omega.coeffs))


def pairing_spectral_regularized(omega: SpectralField, phi: TestFunction, order: int) -> float:
    """Same pairing with K truncated to |k|_inf <= order."""
    c = _pairing_matrix_cached(omega.lattice.n_max, _phi_key(phi), int(order))
    return float(np.real(omega.coeffs @ c @ omega.coeffs))


def pairing_quadrature(omega: SpectralField, spec: KernelSpec) -> float:
    """Tensor quadrature of omega(x) omega(y) H^n_phi(x, y) over the grid squared."""
    order = spec.require_order()
    g = spec.grid_size
    needed = 2 * max(omega.lattice.n_max, order) + 1
    if g < needed:
        raise LatticeError(f"grid_size must be >= 2 max(N, n) + 1 = {needed}, got {g}")
    w = evaluate_on_grid(omega, g).ravel()
    h = kernel_grid_matrix(spec)
    return float(w @ h @ w) / float(g ** 4)


# ---------------------------------------------------------------------------
# Wiener chaos statistics


@dataclass(frozen=True)
class ChaosReport:
    samples: int
    mean: float
    mean_stderr: float
    variance: float
    variance_stderr: float
    target_variance: float
    c2_norm: float
    q2_envelope_ratio: float
    exp_epsilon: float
    exp_estimates: tuple[float, ...]

    @property
    def variance_ratio(self) -> float:
        return self.variance / self.target_variance

    def rows(self) -> list[tuple[str, float, float, int]]:
        return [
            ("pairing_mean", self.mean, self.mean_stderr, self.samples),
            ("pairing_variance", self.variance, self.variance_stderr, self.samples),
            ("variance_ratio", self.variance_ratio, 0.0, self.samples),
            ("q2_envelope_ratio", self.q2_envelope_ratio, 0.0, self.samples),
            ("exp_integrability", self.exp_estimates[-1], 0.0, self.samples),
        ]


def chaos_statistics(
    spec: KernelSpec, rng: RandomSource | np.random.Generator, samples: int
) -> ChaosReport:
    """Second-chaos diagnostics of the pairing under white noise.

    Draws white noise on a lattice covering every Fourier mode of H^n_phi
    (cutoff = order + max phi mode), so the isometry variance 2||H^n||^2 is
    exact for the truncated kernel.
    """
    if samples < 1000:
        raise ValueError("need at least 1e3 samples for stable chaos statistics")
    order = spec.require_order()
    cover = order + spec.phi.max_mode
    lattice = cached_lattice(cover)
    c = _pairing_matrix_cached(cover, _phi_key(spec.phi), order)
    gen = rng.generator() if isinstance(rng, RandomSource) else rng

    values = np.empty(samples)
    block = 20_000
    done = 0
    n_half = len(lattice.half)
    while done < samples:
        b = min(block, samples - done)
        half = standard_complex(gen, (b, n_half))
        xi = np.zeros((b, lattice.size), dtype=np.complex128)
        xi[:, lattice.half_index] = half
        xi[:, lattice.half_conj_index] = np.conj(half)
        values[done : done + b] = np.real(np.einsum("sk,kl,sl->s", xi, c, xi, optimize=True))
        done += b

    mean = float(np.mean(values))
    mean_se = float(np.std(values, ddof=1) / np.sqrt(samples))
    var = float(np.var(values, ddof=1))
    centered_sq = (values - mean) ** 2
    var_se = float(np.std(centered_sq, ddof=1) / np.sqrt(samples))
    # target: exact grid L2 norm of the truncated kernel
    g_exact = 2 * (order + spec.phi.max_mode) + 1
    norm = kernel_l2_norm(KernelSpec(spec.phi, order, g_exact))
    target = 2.0 * norm ** 2
    q2_ratio = float(np.mean(values ** 2)) / (spec.phi.c2_norm ** 2)
    eps = 1.0 / (4.0 * norm)
    cuts = [samples // 4, samples // 2, samples]
    exp_estimates = tuple(float(np.mean(np.exp(eps * np.abs(values[:cut])))) for cut in cuts)
    return ChaosReport(
        samples=samples,
        mean=mean,
        mean_stderr=mean_se,
        variance=var,
        variance_stderr=var_se,
        target_variance=target,
        c2_norm=spec.phi.c2_norm,
        q2_envelope_ratio=q2_ratio,
        exp_epsilon=float(eps),
        exp_estimates=exp_estimates,
    )
