"""Explicit expansion of the adjoint generator applied to the constant 1.

For a product reference measure with site densities rho, the adjoint of the
speeded-up generator n^2 L_sym + (a_n n) L_asym applied to 1 decomposes
exactly into a degree-1 field against omega_x plus a finite family of
degree >= 2 coefficients against omega(A + x).  This module assembles that
expansion from exact expectations and coefficient tables; the brute-force
matrix adjoint in :mod:`wasep.exact` is its oracle twin.

Conventions: D_j F(x) = F(x+e_j) - F(x) is the forward difference and
grad^n_j = n D_j.  The degree-1 coefficient per direction is

    K_j(x) = n^2 { E[current over (x-e_j, x)] - E[current over (x, x+e_j)] }
             - a_n n (D_j I_j)(x - e_j),

with I_j(x) = E[tau_x c_j] * m_j rho(x)(1 - rho(x+e_j)).  For perturbed
profiles rho = alpha0 + eps v the same field is assembled in lattice-
gradient form (a_n grad^n_j instead of a_n n D_j); equality of the two
routes is asserted in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .lattice import Configuration, LocalFunction, PlacedLocal, Site, Torus
from .measures import DensityProfile, chi, expect_local_field
from .rates import RateSpec
from .scaling import ScalingPlan

SubsetKey = frozenset

PARTS = ("S", "T", "both")


def _part_flags(parts: str) -> tuple[bool, bool]:
    if parts not in PARTS:
        raise ValueError(f"parts must be one of {PARTS}")
    return parts in ("S", "both"), parts in ("T", "both")


def _shifted(torus: Torus, values: np.ndarray, offset: Site) -> np.ndarray:
    """Field x -> values[x + offset]."""
    return values[torus.shift_indices(offset)]


# ---------------------------------------------------------------------------
# Coefficient tables
# ---------------------------------------------------------------------------


def _coefficient_tables(
    placed: PlacedLocal, profile: DensityProfile
) -> dict[SubsetKey, np.ndarray]:
    """Centered-product coefficients of tau_x f for every subset of the
    placed support, as fields over the base point x."""
    torus = profile.torus
    k = len(placed.sites)
    probs = placed.site_probabilities(profile.values)  # (k, size)
    weights = []
    for pattern in range(1 << k):
        w = np.ones(torus.size)
        for i in range(k):
            w = w * (probs[i] if (pattern >> i) & 1 else 1.0 - probs[i])
        weights.append(w)
    tables: dict[SubsetKey, np.ndarray] = {}
    for mask in range(1 << k):
        total = np.zeros(torus.size)
        for pattern, value in enumerate(placed.table):
            if value == 0.0:
                continue
            term = value * weights[pattern]
            for i in range(k):
                if (mask >> i) & 1:
                    term = term * (((pattern >> i) & 1) - probs[i])
            total += term
        subset = frozenset(placed.sites[i] for i in range(k) if (mask >> i) & 1)
        tables[subset] = total
    return tables


@dataclass(frozen=True)
class AdjointCoefficients:
    """All per-direction coefficient families entering the expansion.

    Arrays are indexed [direction j - 1][site]; the two members of each
    (i)-family come from the symmetric (i = 1) and asymmetric (i = 2)
    parts of the generator.
    """

    torus: Torus
    profile: DensityProfile
    scaling: ScalingPlan
    A: np.ndarray  # (d, size)
    C: np.ndarray
    I: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    G1: np.ndarray
    G2: np.ndarray
    W1: np.ndarray  # coefficient of the {0, e_j} union term (= -(D_j rho)^2)
    W2: np.ndarray  # (= (D_j rho) C_j)
    B1: tuple[tuple[np.ndarray, ...], ...]  # per j, per decomposition pair
    B2: tuple[tuple[np.ndarray, ...], ...]
    c_tables: tuple[dict[SubsetKey, np.ndarray], ...]
    g_tables: tuple[tuple[dict[SubsetKey, np.ndarray], ...], ...]
    c_supports: tuple[tuple[Site, ...], ...]
    g_supports: tuple[tuple[tuple[Site, ...], ...], ...]


def compute_coefficients(
    spec: RateSpec, profile: DensityProfile, scaling: ScalingPlan
) -> AdjointCoefficients:
    """Assemble every coefficient family exactly for the given profile."""
    profile.require_interior("adjoint expansion")
    torus = profile.torus
    if torus.d != spec.d:
        raise ValueError("spec and profile dimensions differ")
    d, size = spec.d, torus.size
    rho = profile.values
    chi0 = chi(rho)

    A = np.zeros((d, size))
    C = np.zeros((d, size))
    I = np.zeros((d, size))
    E1 = np.zeros((d, size))
    E2 = np.zeros((d, size))
    F1 = np.zeros((d, size))
    F2 = np.zeros((d, size))
    G1 = np.zeros((d, size))
    G2 = np.zeros((d, size))
    W1 = np.zeros((d, size))
    W2 = np.zeros((d, size))
    B1: list[tuple[np.ndarray, ...]] = []
    B2: list[tuple[np.ndarray, ...]] = []
    c_tables = []
    g_tables = []
    c_supports = []
    g_supports = []

    for j in range(1, d + 1):
        e_j = torus.basis(j)
        rho_e = _shifted(torus, rho, e_j)
        chi_e = chi(rho_e)
        jm = j - 1

        A[jm] = (chi0 + chi_e) / (chi0 * chi_e)
        d_rho = rho_e - rho  # D_j rho
        d_chi = chi_e - chi0  # D_j (chi o rho)
        C[jm] = spec.drift[jm] * rho * (1.0 - rho_e)

        placed_c = spec.c[jm].place(torus)
        ec = expect_local_field(placed_c, profile)
        I[jm] = ec * C[jm]

        u1 = d_rho
        u2 = -C[jm]
        v1 = u1 * u1
        v2 = u1 * u2
        E1[jm] = 0.5 * A[jm] * v1
        E2[jm] = 0.5 * A[jm] * v2
        F1[jm] = d_chi * u1 / (2.0 * chi_e)
        F2[jm] = d_chi * u2 / (2.0 * chi_e)
        G1[jm] = d_chi * u1 / (2.0 * chi0)
        G2[jm] = d_chi * u2 / (2.0 * chi0)
        W1[jm] = -v1
        W2[jm] = -v2

        au1 = A[jm] * u1
        au2 = A[jm] * u2
        b1_row, b2_row, g_row, g_supp_row = [], [], [], []
        for pair in spec.decomposition[jm]:
            b1 = np.zeros(size)
            b2 = np.zeros(size)
            for y, w in pair.measure.items():
                minus_y = tuple(-c for c in y)
                b1 += 0.5 * w * _shifted(torus, au1, minus_y)
                b2 += -0.5 * w * _shifted(torus, A[jm] * C[jm], minus_y)
            b1_row.append(b1)
            b2_row.append(b2)
            placed_g = pair.g.place(torus)
            g_row.append(_coefficient_tables(placed_g, profile))
            g_supp_row.append(placed_g.sites)
        B1.append(tuple(b1_row))
        B2.append(tuple(b2_row))
        g_tables.append(tuple(g_row))
        g_supports.append(tuple(g_supp_row))
        c_tables.append(_coefficient_tables(placed_c, profile))
        c_supports.append(placed_c.sites)

    return AdjointCoefficients(
        torus=torus,
        profile=profile,
        scaling=scaling,
        A=A,
        C=C,
        I=I,
        E1=E1,
        E2=E2,
        F1=F1,
        F2=F2,
        G1=G1,
        G2=G2,
        W1=W1,
        W2=W2,
        B1=tuple(B1),
        B2=tuple(B2),
        c_tables=tuple(c_tables),
        g_tables=tuple(g_tables),
        c_supports=tuple(c_supports),
        g_supports=tuple(g_supports),
    )


# ---------------------------------------------------------------------------
# Degree-1 fields
# ---------------------------------------------------------------------------


def k_field_general(
    spec: RateSpec, profile: DensityProfile, scaling: ScalingPlan, parts: str = "both"
) -> np.ndarray:
    """Degree-1 coefficients K_j(x), shape (d, size), for a general profile."""
    include_sym, include_asym = _part_flags(parts)
    torus = profile.torus
    n2 = float(scaling.n) ** 2
    ann = scaling.a_n * scaling.n
    out = np.zeros((spec.d, torus.size))
    for j in range(1, spec.d + 1):
        jm = j - 1
        e_j = torus.basis(j)
        minus_e = tuple(-c for c in e_j)
        if include_sym:
            ej_current = expect_local_field(spec.current(j).place(torus), profile)
            out[jm] += n2 * (_shifted(torus, ej_current, minus_e) - ej_current)
        if include_asym:
            c_mean = expect_local_field(spec.c[jm].place(torus), profile)
            i_j = c_mean * spec.drift[jm] * profile.values * (1.0 - _shifted(torus, profile.values, e_j))
            # (D_j I)(x - e_j) = I(x) - I(x - e_j)
            out[jm] -= ann * (i_j - _shifted(torus, i_j, minus_e))
    return out


def k_field_perturbation(
    spec: RateSpec,
    torus: Torus,
    scaling: ScalingPlan,
    v: np.ndarray,
    alpha0: float = 0.5,
    parts: str = "both",
) -> np.ndarray:
    """Degree-1 coefficients for the profile alpha0 + eps v, assembled in
    lattice-gradient form: the drift term is a_n grad^n_j of the mean
    asymmetric current, evaluated one bond to the left."""
    include_sym, include_asym = _part_flags(parts)
    eps = scaling.epsilon
    w = alpha0 + eps * np.asarray(v, dtype=np.float64)
    profile = DensityProfile(torus, w)
    profile.require_interior("perturbation-form degree-1 field")
    n2 = float(scaling.n) ** 2
    out = np.zeros((spec.d, torus.size))
    for j in range(1, spec.d + 1):
        jm = j - 1
        e_j = torus.basis(j)
        minus_e = tuple(-c for c in e_j)
        if include_sym:
            ej_current = expect_local_field(spec.current(j).place(torus), profile)
            out[jm] += n2 * (_shifted(torus, ej_current, minus_e) - ej_current)
        if include_asym:
            c_mean = expect_local_field(spec.c[jm].place(torus), profile)
            i_j = c_mean * spec.drift[jm] * w * (1.0 - _shifted(torus, w, e_j))
            grad_i = scaling.n * (_shifted(torus, i_j, e_j) - i_j)  # (grad^n_j I)(x)
            out[jm] -= scaling.a_n * _shifted(torus, grad_i, minus_e)
    return out


# ---------------------------------------------------------------------------
# Full expansion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdjointExpansion:
    """L*1 as a degree-1 field plus degree >= 2 coefficient tables.

    ``h_tables[j-1]`` maps a subset A of wrapped offsets (|A| >= 2) to the
    field x -> H_j(x, A); evaluation contracts every term against the
    normalized centered products of the configuration.
    """

    torus: Torus
    profile: DensityProfile
    k: np.ndarray  # (d, size)
    h_tables: tuple[dict[SubsetKey, np.ndarray], ...]

    def degree1(self) -> np.ndarray:
        """Coefficient of omega_x, summed over directions."""
        return self.k.sum(axis=0)

    def evaluate(self, config: Configuration) -> float:
        om = (config.astype(np.float64) - self.profile.values) / chi(self.profile.values)
        total = float(self.degree1() @ om)
        for tables in self.h_tables:
            for A, coef in tables.items():
                # omega(A + x) = prod over s in A of omega at x + s
                prod = np.ones(self.torus.size)
                for s in A:
                    prod = prod * _shifted(self.torus, om, s)
                total += float(coef @ prod)
        return total

    def max_subset_radius(self) -> int:
        radius = 0
        for tables in self.h_tables:
            for A in tables:
                for s in A:
                    radius = max(radius, max(abs(c) for c in s) if s else 0)
        return radius


def _h_tables_direction(
    coeffs: AdjointCoefficients, spec: RateSpec, j: int, parts: str
) -> dict[SubsetKey, np.ndarray]:
    """H_j(x, A) for |A| >= 2, combining n^2 H^(1) and a_n n H^(2)."""
    include_sym, include_asym = _part_flags(parts)
    torus = coeffs.torus
    jm = j - 1
    e_j = torus.basis(j)
    origin = tuple(0 for _ in range(torus.d))
    n2 = float(coeffs.scaling.n) ** 2
    ann = coeffs.scaling.a_n * coeffs.scaling.n

    universe: set[Site] = {origin, e_j}
    universe.update(coeffs.c_supports[jm])
    for supp in coeffs.g_supports[jm]:
        universe.update(supp)
    universe_list = sorted(universe)

    c_tab = coeffs.c_tables[jm]
    g_tabs = coeffs.g_tables[jm]
    zeros = np.zeros(torus.size)

    def c_of(subset: SubsetKey) -> np.ndarray:
        return c_tab.get(subset, zeros)

    tables: dict[SubsetKey, np.ndarray] = {}
    m = len(universe_list)
    for mask in range(1 << m):
        if bin(mask).count("1") < 2:
            continue
        A = frozenset(universe_list[i] for i in range(m) if (mask >> i) & 1)
        h1 = np.zeros(torus.size)
        h2 = np.zeros(torus.size)
        ca = c_of(A)
        h1 += coeffs.E1[jm] * ca
        h2 += coeffs.E2[jm] * ca
        for p, g_tab in enumerate(g_tabs):
            ga = g_tab.get(A)
            if ga is not None:
                h1 += coeffs.B1[jm][p] * ga
                h2 += coeffs.B2[jm][p] * ga
        if origin in A and e_j in A:
            cu = c_of(A - {origin, e_j})
            h1 += coeffs.W1[jm] * cu
            h2 += coeffs.W2[jm] * cu
        if origin in A:
            c0 = c_of(A - {origin})
            h1 += coeffs.F1[jm] * c0
            h2 += coeffs.F2[jm] * c0
        if e_j in A:
            ce = c_of(A - {e_j})
            h1 += coeffs.G1[jm] * ce
            h2 += coeffs.G2[jm] * ce
        combined = np.zeros(torus.size)
        if include_sym:
            combined += n2 * h1
        if include_asym:
            combined += ann * h2
        if np.any(combined != 0.0):
            tables[A] = combined
    return tables


def adjoint_one(
    spec: RateSpec, profile: DensityProfile, scaling: ScalingPlan, parts: str = "both"
) -> AdjointExpansion:
    """The adjoint of the (scaled) generator applied to 1, in expanded form."""
    coeffs = compute_coefficients(spec, profile, scaling)
    k = k_field_general(spec, profile, scaling, parts=parts)
    h_tables = tuple(_h_tables_direction(coeffs, spec, j, parts) for j in range(1, spec.d + 1))
    return AdjointExpansion(torus=profile.torus, profile=profile, k=k, h_tables=h_tables)


# ---------------------------------------------------------------------------
# Time derivative of the reference log-density
# ---------------------------------------------------------------------------


def log_reference_density(profile: DensityProfile, alpha: float, config: Configuration) -> float:
    """log of d nu_profile / d nu_alpha at the configuration."""
    w = profile.values
    eta = config.astype(np.float64)
    return float(
        np.sum(eta * np.log(w / alpha) + (1.0 - eta) * np.log((1.0 - w) / (1.0 - alpha)))
    )


def psi_time_derivative_field(
    w_path: Callable[[float], np.ndarray], t: float, h: float = 1e-6, wdot: np.ndarray | None = None
) -> np.ndarray:
    """Degree-1 field of d/dt log(d nu_{w(t)} / d nu_alpha): the coefficient
    of omega_x is just the time derivative of the density at x.

    Pass ``wdot`` when the path derivative is known analytically; otherwise
    a centered stencil of width h is used.
    """
    if wdot is not None:
        return np.asarray(wdot, dtype=np.float64)
    return (np.asarray(w_path(t + h), dtype=np.float64) - np.asarray(w_path(t - h), dtype=np.float64)) / (2.0 * h)


def eval_degree1(field: np.ndarray, profile: DensityProfile, config: Configuration) -> float:
    """Contract a degree-1 coefficient field against omega_x."""
    om = (config.astype(np.float64) - profile.values) / chi(profile.values)
    return float(np.asarray(field) @ om)


# ---------------------------------------------------------------------------
# Semi-discrete right-hand side and the residual against the continuum flow
# ---------------------------------------------------------------------------


def semidiscrete_rhs(
    spec: RateSpec,
    v: np.ndarray,
    scaling: ScalingPlan,
    alpha0: float = 0.5,
    torus: Torus | None = None,
) -> np.ndarray:
    """a_n sum_j K_j for the profile alpha0 + eps v; the right-hand side of
    the lattice evolution that cancels every degree-1 term."""
    torus = torus or Torus(scaling.d, scaling.n)
    k = k_field_perturbation(spec, torus, scaling, v, alpha0=alpha0)
    return scaling.a_n * k.sum(axis=0)


def make_semidiscrete_rhs(
    spec: RateSpec, scaling: ScalingPlan, alpha0: float = 0.5, torus: Torus | None = None
) -> Callable[[np.ndarray], np.ndarray]:
    """Precompiled evaluator of the semi-discrete right-hand side.

    Placement and index tables are built once; each call gathers per-site
    marginals and contracts the truth tables, so the integrator pays no
    placement cost per step.
    """
    torus = torus or Torus(scaling.d, scaling.n)
    n2 = float(scaling.n) ** 2
    eps = scaling.epsilon
    directions = []
    for j in range(1, spec.d + 1):
        e_j = torus.basis(j)
        minus_e = tuple(-c for c in e_j)
        placed_cur = spec.current(j).place(torus)
        placed_c = spec.c[j - 1].place(torus)
        directions.append(
            (
                j,
                spec.drift[j - 1],
                [torus.shift_indices(s) for s in placed_cur.sites],
                placed_cur.table,
                [torus.shift_indices(s) for s in placed_c.sites],
                placed_c.table,
                torus.shift_indices(e_j),
                torus.shift_indices(minus_e),
            )
        )

    def expect_from(idx_list, table, w):
        out = np.zeros(torus.size)
        for pattern, value in enumerate(table):
            if value == 0.0:
                continue
            term = np.full(torus.size, value)
            for i, idx in enumerate(idx_list):
                p = w[idx]
                term = term * (p if (pattern >> i) & 1 else 1.0 - p)
            out += term
        return out

    def rhs(v: np.ndarray) -> np.ndarray:
        w = alpha0 + eps * v
        total = np.zeros(torus.size)
        for j, m_j, cur_idx, cur_tab, c_idx, c_tab, idx_e, idx_me in directions:
            ej_current = expect_from(cur_idx, cur_tab, w)
            total += n2 * (ej_current[idx_me] - ej_current)
            if m_j != 0.0:
                i_j = expect_from(c_idx, c_tab, w) * (m_j * w * (1.0 - w[idx_e]))
                grad_i = scaling.n * (i_j[idx_e] - i_j)
                total -= scaling.a_n * grad_i[idx_me]
        return scaling.a_n * total

    return rhs


@dataclass(frozen=True)
class ResidualReport:
    n: int
    t: float
    max_residual: float
    bound: float  # eps^2 + 1/n

    @property
    def ratio(self) -> float:
        return self.max_residual / self.bound


def residual_field(
    spec: RateSpec,
    scaling: ScalingPlan,
    v_lattice: np.ndarray,
    dvdt_lattice: np.ndarray,
    t: float,
    alpha0: float = 0.5,
    torus: Torus | None = None,
) -> tuple[np.ndarray, ResidualReport]:
    """Defect sum_j K_j - eps dv/dt of the continuum solution inserted into
    the lattice evolution; dv/dt must come from the continuum right-hand
    side evaluated at the same time."""
    torus = torus or Torus(scaling.d, scaling.n)
    k = k_field_perturbation(spec, torus, scaling, v_lattice, alpha0=alpha0)
    ln = k.sum(axis=0) - scaling.epsilon * np.asarray(dvdt_lattice, dtype=np.float64)
    bound = scaling.epsilon**2 + 1.0 / scaling.n
    report = ResidualReport(n=scaling.n, t=t, max_residual=float(np.max(np.abs(ln))), bound=bound)
    return ln, report
