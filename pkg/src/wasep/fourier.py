"""Orthogonal decomposition of cylinder functions over product measures.

For a profile rho, the centered products xi(D) = prod_{y in D} (eta_y -
rho(y)) and their normalized companions omega(D) = prod (eta_y -
rho(y))/chi(rho(y)) form a biorthogonal pair; every translate of a cylinder
function expands exactly as its mean plus a finite sum of coefficients
against omega over subsets of the support.  All coefficients here are exact
enumerations over the truth table, never sampled, because this module is
the oracle layer for the adjoint expansion.

Subsets of a placed support are keyed by frozensets of wrapped offsets; the
CSV dump encodes them as bitmasks over the canonical site ordering.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .lattice import Configuration, LocalFunction, PlacedLocal, Site, Torus
from .measures import DensityProfile, chi, expect_local, tilde_eval
from .profiles import Field, sample_field

SubsetKey = frozenset


def xi(profile: DensityProfile, config: Configuration, sites: Sequence[Site]) -> float:
    """prod_{y in D} (eta_y - rho(y)); empty D gives 1."""
    out = 1.0
    for s in sites:
        i = profile.torus.index(s)
        out *= float(config[i]) - profile.values[i]
    return out


def omega(profile: DensityProfile, config: Configuration, sites: Sequence[Site]) -> float:
    """prod_{y in D} (eta_y - rho(y)) / chi(rho(y)); empty D gives 1."""
    profile.require_interior("omega")
    out = 1.0
    for s in sites:
        i = profile.torus.index(s)
        out *= (float(config[i]) - profile.values[i]) / chi(profile.values[i])
    return out


def omega_site_values(profile: DensityProfile, config: Configuration) -> np.ndarray:
    """Vector over sites of (eta_x - rho(x)) / chi(rho(x))."""
    profile.require_interior("omega")
    return (config.astype(np.float64) - profile.values) / chi(profile.values)


# ---------------------------------------------------------------------------
# Coefficient tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FourierTable:
    """Exact expansion coefficients of tau_x f against the centered basis."""

    profile: DensityProfile
    base: Site
    support: tuple[Site, ...]  # wrapped offsets, canonical order
    coefficients: dict[SubsetKey, float]

    def coefficient(self, subset) -> float:
        return self.coefficients.get(frozenset(subset), 0.0)

    def by_degree(self, k: int) -> dict[SubsetKey, float]:
        return {A: v for A, v in self.coefficients.items() if len(A) == k}

    @property
    def max_degree(self) -> int:
        return len(self.support)

    def subset_bitmask(self, subset: SubsetKey) -> int:
        mask = 0
        for i, s in enumerate(self.support):
            if s in subset:
                mask |= 1 << i
        return mask

    def dump_csv(self, path) -> None:
        rows = sorted((self.subset_bitmask(A), v) for A, v in self.coefficients.items())
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["subset_bitmask", "coefficient"])
            for mask, v in rows:
                writer.writerow([mask, f"{v:.17g}"])


def fourier_coefficients(
    f: LocalFunction | PlacedLocal, profile: DensityProfile, x: Sequence[int]
) -> FourierTable:
    """All coefficients E[(tau_x f) xi(B + x)] for B inside the placed support."""
    torus = profile.torus
    placed = f if isinstance(f, PlacedLocal) else f.place(torus)
    x = torus.wrap(x)
    probs = [profile.density_at(torus.add(x, s)) for s in placed.sites]
    k = len(placed.sites)
    coeffs: dict[SubsetKey, float] = {}
    for mask in range(1 << k):
        total = 0.0
        for pattern, value in enumerate(placed.table):
            if value == 0.0:
                continue
            w = 1.0
            factor = 1.0
            for i, p in enumerate(probs):
                bit = (pattern >> i) & 1
                w *= p if bit else 1.0 - p
                if (mask >> i) & 1:
                    factor *= bit - p
            total += value * w * factor
        subset = frozenset(placed.sites[i] for i in range(k) if (mask >> i) & 1)
        coeffs[subset] = total
    return FourierTable(profile=profile, base=x, support=placed.sites, coefficients=coeffs)


def reconstruct(table: FourierTable, config: Configuration) -> float:
    """Evaluate tau_x f from its coefficients: mean + sum f(x,A) omega(A + x)."""
    torus = table.profile.torus
    out = table.coefficient(frozenset())
    for A, coeff in table.coefficients.items():
        if not A or coeff == 0.0:
            continue
        sites = [torus.add(table.base, s) for s in A]
        out += coeff * omega(table.profile, config, sites)
    return out


@dataclass(frozen=True)
class Projection:
    """Degree slice (or tail) of the expansion of tau_x f; evaluable pointwise."""

    table: FourierTable
    degrees: tuple[int, ...]

    def eval(self, config: Configuration) -> float:
        torus = self.table.profile.torus
        out = 0.0
        for A, coeff in self.table.coefficients.items():
            if len(A) not in self.degrees or coeff == 0.0:
                continue
            if A:
                sites = [torus.add(self.table.base, s) for s in A]
                out += coeff * omega(self.table.profile, config, sites)
            else:
                out += coeff
        return out


def project(f: LocalFunction, profile: DensityProfile, x: Sequence[int], q: int) -> Projection:
    """Degree-q part of tau_x f."""
    return Projection(fourier_coefficients(f, profile, x), (q,))


def project_plus(f: LocalFunction, profile: DensityProfile, x: Sequence[int], q: int) -> Projection:
    """Tail of degree >= q; q = 1 is the centered function tau_x f - E[tau_x f]."""
    table = fourier_coefficients(f, profile, x)
    return Projection(table, tuple(range(q, table.max_degree + 1)))


# ---------------------------------------------------------------------------
# Homogeneous moments and the derivative identity
# ---------------------------------------------------------------------------


def _homogeneous_moment(g: LocalFunction, theta: float, marked: tuple[Site, ...]) -> float:
    """E_theta[g * prod_{z in marked} omega_z], offsets marked must be distinct."""
    c = chi(theta)
    if c == 0.0:
        raise ValueError("homogeneous moments need theta strictly inside (0, 1)")
    for z in marked:
        if z not in g.offsets:
            return 0.0  # independent mean-zero factor
    total = 0.0
    for pattern, value in enumerate(g.table):
        if value == 0.0:
            continue
        w = 1.0
        factor = 1.0
        for i, o in enumerate(g.offsets):
            bit = (pattern >> i) & 1
            w *= theta if bit else 1.0 - theta
            if o in marked:
                factor *= (bit - theta) / c
        total += value * w * factor
    return total


def tilde_derivative_via_fourier(g: LocalFunction, theta: float) -> float:
    """Derivative of the polynomial lift via the identity gtilde'(theta) =
    sum_z E_theta[g omega_z] over the support."""
    return float(sum(_homogeneous_moment(g, theta, (z,)) for z in g.offsets))


# ---------------------------------------------------------------------------
# Expansions of expectations under slowly varying profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExpansionReport:
    """Partial sums of the small-gradient expansion and the exact remainder."""

    mode: str
    terms: tuple[float, ...]
    partial_sum: float
    exact: float
    remainder: float


def _theta_of(z: Site, n: int) -> np.ndarray:
    return np.asarray([z], dtype=np.float64) / n


def inhomogeneous_expansion(
    g: LocalFunction,
    torus: Torus,
    alpha: float,
    epsilon: float,
    v: Field,
    mode: str = "plain",
    j: int = 1,
) -> ExpansionReport:
    """Expand E[g] under the profile alpha + epsilon v(x/n) around the density
    at the origin, to second order in the local increments.

    ``plain`` returns (zeroth, first, second) for E[g]; ``gradient_j``
    returns (first, second) for E[tau_{-e_j} g - g], where the coefficients
    couple discrete gradients of v at shifted points.  The remainder is the
    exact expectation minus the partial sum and is of cubic order in
    epsilon at fixed n.
    """
    n = torus.n
    w_values = alpha + epsilon * sample_field(torus, v)
    profile = DensityProfile(torus, w_values)
    profile.require_interior("inhomogeneous expansion")

    def vat(z: Site) -> float:
        return float(np.asarray(v(_theta_of(z, n)))[0])

    origin = tuple(0 for _ in range(torus.d))
    v0 = vat(origin)
    w0 = alpha + epsilon * v0
    support = g.offsets

    if mode == "plain":
        term0 = tilde_eval(g, w0)
        term1 = epsilon * sum(
            (vat(z) - v0) * _homogeneous_moment(g, w0, (z,)) for z in support
        )
        term2 = 0.5 * epsilon**2 * sum(
            (vat(z) - v0) * (vat(zp) - v0) * _homogeneous_moment(g, w0, (z, zp))
            for z, zp in itertools.permutations(support, 2)
        )
        exact = expect_local(g.place(torus, strict=True), profile, origin)
        terms = (term0, term1, term2)
    elif mode == "gradient_j":
        e_j = tuple(1 if k == j - 1 else 0 for k in range(torus.d))

        def grad_at(z: Site) -> float:
            zm = tuple(a - b for a, b in zip(z, e_j))
            return n * (vat(z) - vat(zm))

        term1 = (-epsilon / n) * sum(grad_at(z) * _homogeneous_moment(g, w0, (z,)) for z in support)
        term2 = 0.0
        for z, zp in itertools.permutations(support, 2):
            czz = (
                grad_at(z) * grad_at(zp) / n
                - grad_at(z) * (vat(zp) - v0)
                - grad_at(zp) * (vat(z) - v0)
            )
            term2 += czz * _homogeneous_moment(g, w0, (z, zp))
        term2 *= epsilon**2 / (2.0 * n)
        shifted = g.translate(tuple(-b for b in e_j))
        exact = expect_local((shifted - g).place(torus, strict=True), profile, origin)
        terms = (term1, term2)
    else:
        raise ValueError(f"unknown expansion mode {mode!r}")

    partial = float(sum(terms))
    return ExpansionReport(mode=mode, terms=terms, partial_sum=partial, exact=exact, remainder=exact - partial)


def expansion_order_check(
    g: LocalFunction,
    torus: Torus,
    alpha: float,
    epsilon: float,
    v: Field,
    mode: str = "plain",
    j: int = 1,
) -> tuple[ExpansionReport, ExpansionReport, float]:
    """Remainders at epsilon and epsilon/2; the ratio certifies cubic order
    (approximately 8, with slack from higher terms)."""
    full = inhomogeneous_expansion(g, torus, alpha, epsilon, v, mode=mode, j=j)
    half = inhomogeneous_expansion(g, torus, alpha, epsilon / 2.0, v, mode=mode, j=j)
    ratio = abs(full.remainder) / abs(half.remainder) if half.remainder != 0.0 else float("inf")
    return full, half, ratio
