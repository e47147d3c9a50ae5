"""Polynomial cylinder functions with exact calculus on the Gaussian space.

Test functionals depend on finitely many real-chart coordinates and are
restricted to multivariate polynomials of total degree <= 4.  Within that
class every operation used by the diagnostics is exact:

* gradients and the Laplacian are computed symbolically;
* the Ornstein-Uhlenbeck generator L = Laplacian - <x, grad> maps the class
  to itself;
* the OU semigroup acts in closed form (Mehler): each coordinate evolves by
  x -> exp(-t) x + sqrt(1 - exp(-2t)) Z with Z standard normal, and Gaussian
  monomial moments reduce P_t to a polynomial-to-polynomial map.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Iterable, Mapping

import numpy as np

MAX_DEGREE = 4

Exponents = tuple[int, ...]


def _gaussian_moment(j: int) -> int:
    """E Z^j for standard normal Z: 0 for odd j, (j-1)!! for even j."""
    if j % 2 == 1:
        return 0
    out = 1
    for m in range(j - 1, 0, -2):
        out *= m
    return out


class Polynomial:
    """Sparse multivariate polynomial: {exponent tuple: coefficient}."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: Mapping[Exponents, float] | None = None):
        self.nvars = int(nvars)
        self.terms: dict[Exponents, float] = {}
        if terms:
            for exps, c in terms.items():
                if len(exps) != self.nvars:
                    raise ValueError(f"exponent tuple {exps} does not have {nvars} entries")
                if any(e < 0 for e in exps):
                    raise ValueError(f"negative exponent in {exps}")
                c = float(c)
                if c != 0.0:
                    self.terms[tuple(int(e) for e in exps)] = self.terms.get(tuple(exps), 0.0) + c
            self.terms = {e: c for e, c in self.terms.items() if c != 0.0}

    # -- construction helpers ------------------------------------------------

    @classmethod
    def constant(cls, nvars: int, value: float) -> "Polynomial":
        return cls(nvars, {tuple([0] * nvars): value})

    @classmethod
    def coordinate(cls, nvars: int, i: int) -> "Polynomial":
        exps = [0] * nvars
        exps[i] = 1
        return cls(nvars, {tuple(exps): 1.0})

    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    # -- algebra -------------------------------------------------------------

    def __add__(self, other: "Polynomial | float") -> "Polynomial":
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(self.nvars, float(other))
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0.0) + c
        return Polynomial(self.nvars, out)

    def __sub__(self, other: "Polynomial | float") -> "Polynomial":
        return self + (other * -1.0 if isinstance(other, Polynomial) else -float(other))

    def __mul__(self, other: "Polynomial | float") -> "Polynomial":
        if isinstance(other, Polynomial):
            out: dict[Exponents, float] = {}
            for e1, c1 in self.terms.items():
                for e2, c2 in other.terms.items():
                    e = tuple(a + b for a, b in zip(e1, e2))
                    out[e] = out.get(e, 0.0) + c1 * c2
            return Polynomial(self.nvars, out)
        return Polynomial(self.nvars, {e: c * float(other) for e, c in self.terms.items()})

    __rmul__ = __mul__

    # -- calculus ------------------------------------------------------------

    def differentiate(self, i: int) -> "Polynomial":
        out: dict[Exponents, float] = {}
        for e, c in self.terms.items():
            if e[i] == 0:
                continue
            new = list(e)
            new[i] -= 1
            key = tuple(new)
            out[key] = out.get(key, 0.0) + c * e[i]
        return Polynomial(self.nvars, out)

    def laplacian(self) -> "Polynomial":
        out = Polynomial(self.nvars)
        for i in range(self.nvars):
            out = out + self.differentiate(i).differentiate(i)
        return out

    def euler_term(self) -> "Polynomial":
        """sum_i x_i * d/dx_i of the polynomial (degree-preserving)."""
        out: dict[Exponents, float] = {}
        for e, c in self.terms.items():
            total = sum(e)
            if total:
                out[e] = out.get(e, 0.0) + c * total
        return Polynomial(self.nvars, out)

    def mehler(self, t: float) -> "Polynomial":
        """Exact OU semigroup action P_t via per-coordinate Gaussian moments."""
        if t < 0:
            raise ValueError(f"time must be nonnegative, got {t}")
        decay = float(np.exp(-t))
        sigma = float(np.sqrt(max(0.0, 1.0 - np.exp(-2.0 * t))))
        out: dict[Exponents, float] = {}
        for exps, coeff in self.terms.items():
            partial: dict[Exponents, float] = {tuple([0] * self.nvars): coeff}
            for i, a in enumerate(exps):
                if a == 0:
                    continue
                grown: dict[Exponents, float] = {}
                for e, c in partial.items():
                    for j in range(a + 1):
                        m = _gaussian_moment(j)
                        if m == 0:
                            continue
                        w = comb(a, j) * (decay ** (a - j)) * (sigma ** j) * m
                        new = list(e)
                        new[i] += a - j
                        key = tuple(new)
                        grown[key] = grown.get(key, 0.0) + c * w
                partial = grown
            for e, c in partial.items():
                out[e] = out.get(e, 0.0) + c
        return Polynomial(self.nvars, out)

    # -- evaluation ----------------------------------------------------------

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at points of shape (..., nvars); returns shape (...)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.nvars:
            raise ValueError(f"expected last axis {self.nvars}, got {x.shape}")
        max_deg = [0] * self.nvars
        for e in self.terms:
            for i, d in enumerate(e):
                max_deg[i] = max(max_deg[i], d)
        powers = []
        for i in range(self.nvars):
            p = [np.ones(x.shape[:-1])]
            for d in range(max_deg[i]):
                p.append(p[-1] * x[..., i])
            powers.append(p)
        out = np.zeros(x.shape[:-1])
        for e, c in self.terms.items():
            term = np.full(x.shape[:-1], c)
            for i, d in enumerate(e):
                if d:
                    term = term * powers[i][d]
            out += term
        return out

    def __repr__(self) -> str:
        return f"Polynomial(nvars={self.nvars}, terms={self.terms})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Polynomial)
            and self.nvars == other.nvars
            and self.terms == other.terms
        )


@dataclass(frozen=True)
class CylinderFunction:
    """A polynomial in a fixed subset of real-chart coordinates.

    ``support`` lists the chart coordinate indices the polynomial reads, in
    increasing order; ``polynomial`` has one variable per support entry.
    """

    support: tuple[int, ...]
    polynomial: Polynomial

    def __post_init__(self):
        if list(self.support) != sorted(set(self.support)):
            raise ValueError("support indices must be strictly increasing")
        if self.polynomial.nvars != len(self.support):
            raise ValueError("polynomial arity does not match support size")
        if self.polynomial.degree() > MAX_DEGREE:
            raise ValueError(
                f"total degree {self.polynomial.degree()} exceeds the cap {MAX_DEGREE}"
            )

    # evaluation on chart points of shape (..., dim)

    def value(self, chart: np.ndarray) -> np.ndarray:
        chart = np.asarray(chart)
        return self.polynomial.evaluate(chart[..., list(self.support)])

    def gradient(self, chart: np.ndarray) -> np.ndarray:
        """Partial derivatives on the support, shape (..., len(support)).

        Off-support partials vanish identically and are not materialized.
        """
        chart = np.asarray(chart)
        local = chart[..., list(self.support)]
        outs = [self.polynomial.differentiate(i).evaluate(local) for i in range(len(self.support))]
        return np.stack(outs, axis=-1)

    def laplacian(self, chart: np.ndarray) -> np.ndarray:
        chart = np.asarray(chart)
        return self.polynomial.laplacian().evaluate(chart[..., list(self.support)])

    def ou_generator(self) -> "CylinderFunction":
        """L psi = Laplacian(psi) - <x, grad psi>, exactly, as a cylinder function."""
        poly = self.polynomial.laplacian() - self.polynomial.euler_term()
        return CylinderFunction(self.support, poly)


def coordinate_function(dim_index: int) -> CylinderFunction:
    """The chart coordinate x_j as a cylinder function."""
    return CylinderFunction((dim_index,), Polynomial.coordinate(1, 0))


def monomial_function(support: Iterable[int], exponents: Iterable[int]) -> CylinderFunction:
    support = tuple(support)
    exponents = tuple(exponents)
    return CylinderFunction(support, Polynomial(len(support), {exponents: 1.0}))


def mehler_apply(f: CylinderFunction, t: float) -> CylinderFunction:
    """The OU semigroup applied to a cylinder function (polynomial in, polynomial out)."""
    return CylinderFunction(f.support, f.polynomial.mehler(t))
