"""Rate specifications for speed-change exclusion and transport coefficients.

A rate specification carries, per direction j, the exchange rate c_j (a
nonnegative cylinder function not depending on the origin or on e_j), the
drift component m_j, and a decomposition of the bond current
c_j(eta)[eta_0 - eta_{e_j}] as a sum over p of mean-zero signed measures
m_{j,p} applied to translates of cylinder functions g_{j,p}.

From a validated specification the module derives, as exact polynomials in
the density: the diagonal diffusivity, the mobility rho(1-rho)*ctilde_j,
the fluctuation-dissipation identity sigma/chi = D, and the critical
density where every sigma_{jj}' vanishes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import yaml
from numpy.polynomial import Polynomial

from .lattice import LocalFunction, Site, Torus
from .measures import chi, tilde_eval, tilde_poly

IDENTITY_TOL = 1e-12


@dataclass(frozen=True)
class GradientPair:
    """One (signed measure, cylinder function) term of a current decomposition."""

    measure: dict[Site, float]
    g: LocalFunction

    def measure_sum(self) -> float:
        return float(sum(self.measure.values()))

    def moment(self, k: int) -> float:
        """First moment sum_y y_k m(y) (k is 0-based coordinate index)."""
        return float(sum(y[k] * w for y, w in self.measure.items()))


@dataclass(frozen=True)
class RateSpec:
    name: str
    d: int
    c: tuple[LocalFunction, ...]
    drift: tuple[float, ...]
    decomposition: tuple[tuple[GradientPair, ...], ...]

    def __post_init__(self) -> None:
        if not (len(self.c) == len(self.drift) == len(self.decomposition) == self.d):
            raise ValueError("need one rate, drift and decomposition per direction")

    def current(self, j: int) -> LocalFunction:
        """Instantaneous bond current c_j(eta) [eta_0 - eta_{e_j}]."""
        e_j = tuple(1 if k == j - 1 else 0 for k in range(self.d))
        origin = tuple(0 for _ in range(self.d))
        return (self.c[j - 1] * (LocalFunction.occupancy(origin) - LocalFunction.occupancy(e_j))).simplify()

    def max_support_radius(self) -> int:
        radius = 0
        for j in range(1, self.d + 1):
            radius = max(radius, self.c[j - 1].support_radius)
            for pair in self.decomposition[j - 1]:
                radius = max(radius, pair.g.support_radius)
                radius = max(radius, max((abs(c) for y in pair.measure for c in y), default=0))
        return radius

    def comfortable_torus_side(self) -> int:
        """Side length below which supports wrap around the torus.

        Wrapped supports are merged exactly everywhere in this package, so
        smaller tori stay correct; this is the threshold for warnings."""
        return 2 * self.max_support_radius() + 2


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClauseResult:
    clause: str
    direction: int
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    spec_name: str
    torus_n: int
    clauses: tuple[ClauseResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses)

    def failures(self) -> list[ClauseResult]:
        return [c for c in self.clauses if not c.passed]

    def lines(self) -> list[str]:
        out = [f"rate spec {self.spec_name!r} validated on torus n={self.torus_n}:"]
        for c in self.clauses:
            status = "ok" if c.passed else "FAIL"
            suffix = f" -- {c.detail}" if c.detail else ""
            out.append(f"  [{status}] clause ({c.clause}) direction {c.direction}{suffix}")
        out.append("  => " + ("PASS" if self.passed else "FAIL"))
        return out


def _default_torus(spec: RateSpec) -> Torus:
    # wide enough that no placed support wraps onto itself
    return Torus(spec.d, max(2, 4 * spec.max_support_radius() + 4))


def validate_rate_spec(spec: RateSpec, torus: Torus | None = None) -> ValidationReport:
    """Check the structural conditions of a rate specification.

    (i)  every signed measure sums to zero exactly;
    (ii) c_j does not depend on the occupancies at 0 and e_j (after
         wrapping on the target torus);
    (iii) the current identity c_j(eta)[eta_0 - eta_{e_j}] =
         sum_p sum_y m_{j,p}(y) (tau_y g_{j,p})(eta) holds on every pattern
         of the combined support;
    (iv) c_j is nonnegative on every pattern.

    Failures carry a witness pattern. Validation is per torus because a
    support that wraps can change what the identity reads.
    """
    torus = torus or _default_torus(spec)
    clauses: list[ClauseResult] = []
    origin = tuple(0 for _ in range(spec.d))
    for j in range(1, spec.d + 1):
        e_j = torus.basis(j)
        pairs = spec.decomposition[j - 1]

        for p, pair in enumerate(pairs, start=1):
            total = pair.measure_sum()
            clauses.append(
                ClauseResult(
                    "i",
                    j,
                    total == 0.0,
                    "" if total == 0.0 else f"sum m_{{{j},{p}}} = {total:g} != 0",
                )
            )

        placed_c = spec.c[j - 1].place(torus)
        bad = [s for s in (origin, e_j) if _placed_depends_on(placed_c, s)]
        clauses.append(
            ClauseResult(
                "ii",
                j,
                not bad,
                "" if not bad else f"c_{j} depends on occupancy at {bad}",
            )
        )

        lhs = spec.current(j)
        rhs = LocalFunction.constant(spec.d, 0.0)
        for pair in pairs:
            for y, w in pair.measure.items():
                rhs = rhs + w * pair.g.translate(y)
        diff = (lhs - rhs).place(torus)
        worst = int(np.argmax(np.abs(diff.table)))
        err = abs(float(diff.table[worst]))
        witness = ""
        if err > IDENTITY_TOL:
            bits = {s: (worst >> i) & 1 for i, s in enumerate(diff.sites)}
            witness = f"identity off by {err:.3g} at pattern {bits}"
        clauses.append(ClauseResult("iii", j, err <= IDENTITY_TOL, witness))

        cmin = float(spec.c[j - 1].table.min())
        clauses.append(
            ClauseResult(
                "iv",
                j,
                cmin >= 0.0,
                "" if cmin >= 0.0 else f"c_{j} reaches {cmin:g} < 0",
            )
        )
    return ValidationReport(spec.name, torus.n, tuple(clauses))


def _placed_depends_on(placed, site: Site) -> bool:
    if site not in placed.sites:
        return False
    bit = placed.sites.index(site)
    idx = np.arange(len(placed.table))
    return bool(np.any(placed.table[idx] != placed.table[idx ^ (1 << bit)]))


# ---------------------------------------------------------------------------
# Transport coefficients
# ---------------------------------------------------------------------------


def diffusivity_polys(spec: RateSpec) -> list[list[Polynomial]]:
    """Matrix of polynomials D_{jk}(rho) = sum_p (-sum_y y_k m_{j,p}(y)) gtilde'_{j,p}(rho)."""
    out: list[list[Polynomial]] = []
    for j in range(1, spec.d + 1):
        row = []
        for k in range(1, spec.d + 1):
            poly = Polynomial([0.0])
            for pair in spec.decomposition[j - 1]:
                dp = -pair.moment(k - 1)
                if dp != 0.0:
                    poly = poly + dp * tilde_poly(pair.g).deriv()
            row.append(poly)
        out.append(row)
    return out


def diffusivity(spec: RateSpec, rho: float) -> np.ndarray:
    polys = diffusivity_polys(spec)
    return np.array([[polys[j][k](rho) for k in range(spec.d)] for j in range(spec.d)])


def mobility_polys(spec: RateSpec) -> list[Polynomial]:
    """Diagonal entries sigma_{jj}(rho) = rho (1-rho) ctilde_j(rho)."""
    chi_poly = Polynomial([0.0, 1.0, -1.0])
    return [chi_poly * tilde_poly(spec.c[j]) for j in range(spec.d)]


def mobility(spec: RateSpec, rho: float) -> np.ndarray:
    out = np.zeros((spec.d, spec.d))
    for j in range(spec.d):
        out[j, j] = chi(rho) * tilde_eval(spec.c[j], rho)
    return out


@dataclass(frozen=True)
class TransportCoefficients:
    spec_name: str
    d: int
    diffusivity: list[list[Polynomial]]
    mobility: list[Polynomial]
    alpha0: float
    sigma_dd_alpha0: np.ndarray  # diagonal of sigma'' at the critical density

    def D(self, rho: float) -> np.ndarray:
        return np.array([[p(rho) for p in row] for row in self.diffusivity])

    def sigma(self, rho: float) -> np.ndarray:
        return np.diag([p(rho) for p in self.mobility])


def compute_transport(spec: RateSpec) -> TransportCoefficients:
    alpha0 = find_alpha0(spec)
    sig = mobility_polys(spec)
    sigma_dd = np.array([p.deriv(2)(alpha0) for p in sig])
    return TransportCoefficients(
        spec_name=spec.name,
        d=spec.d,
        diffusivity=diffusivity_polys(spec),
        mobility=sig,
        alpha0=alpha0,
        sigma_dd_alpha0=sigma_dd,
    )


@dataclass(frozen=True)
class EinsteinReport:
    max_einstein_error: float
    max_offdiag: float
    worst: tuple[int, int, float]  # (j, k, rho) of the largest deviation
    passed: bool

    def lines(self) -> list[str]:
        j, k, rho = self.worst
        return [
            f"einstein relation: max |sigma/chi - D| = {self.max_einstein_error:.3e}",
            f"diagonality:       max offdiagonal |D_jk| = {self.max_offdiag:.3e}",
            f"worst entry (j={j}, k={k}) at rho = {rho:.6g}",
            "=> " + ("PASS" if self.passed else "FAIL"),
        ]


def einstein_check(spec: RateSpec, rho_grid: Sequence[float] | None = None, tol: float = 1e-10) -> EinsteinReport:
    """Assert sigma_{jj}/chi = D_{jj} and D_{jk} = 0 (j != k) on a density grid.

    The identity is checked in the division-free form ctilde_j(rho) =
    sum_p D_p(j,j) gtilde'_{j,p}(rho), valid on the open interval; the
    default grid is 101 interior points.
    """
    if rho_grid is None:
        rho_grid = np.linspace(0.0, 1.0, 103)[1:-1]
    dpolys = diffusivity_polys(spec)
    cpolys = [tilde_poly(c) for c in spec.c]
    max_err = 0.0
    max_off = 0.0
    worst = (1, 1, float(rho_grid[0]))
    for rho in rho_grid:
        for j in range(spec.d):
            err = abs(cpolys[j](rho) - dpolys[j][j](rho))
            if err > max_err:
                max_err = err
                worst = (j + 1, j + 1, float(rho))
            for k in range(spec.d):
                if k == j:
                    continue
                off = abs(dpolys[j][k](rho))
                if off > max_off:
                    max_off = off
                    worst = (j + 1, k + 1, float(rho))
    return EinsteinReport(
        max_einstein_error=max_err,
        max_offdiag=max_off,
        worst=worst,
        passed=max_err <= tol and max_off <= tol,
    )


class NoCommonCriticalDensityError(ValueError):
    pass


def _bisect(fn, lo: float, hi: float, tol: float) -> float:
    flo = fn(lo)
    fhi = fn(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0.0:
        raise NoCommonCriticalDensityError("no sign change; mobility derivative has no bracketed root")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fmid = fn(mid)
        if fmid == 0.0:
            return mid
        if flo * fmid < 0.0:
            hi = mid
        else:
            lo, flo = mid, fmid
    return 0.5 * (lo + hi)


def find_alpha0(spec: RateSpec, tol: float = 1e-12) -> float:
    """Common root in (0,1) of all sigma_{jj}'; bisection on the exact polynomial.

    Each sigma_{jj} vanishes at 0 and 1, so its derivative changes sign on
    (0,1) and bisection is safe.  If the per-direction roots do not agree to
    within tolerance, the spec has no common critical density and an error
    is raised rather than fabricating one.
    """
    sig_primes = [p.deriv() for p in mobility_polys(spec)]
    # shrink away from the endpoints; sigma'(0) = ctilde(0) may vanish only if c == 0
    roots = [_bisect(p, 1e-15, 1.0 - 1e-15, tol) for p in sig_primes]
    alpha0 = roots[0]
    for j, r in enumerate(roots[1:], start=2):
        if abs(r - alpha0) > 10.0 * tol or abs(sig_primes[j - 1](alpha0)) > 1e-9:
            raise NoCommonCriticalDensityError(
                f"no common critical density: direction 1 gives {alpha0:.12g}, direction {j} gives {r:.12g}"
            )
    return alpha0


# ---------------------------------------------------------------------------
# Preset specifications
# ---------------------------------------------------------------------------


def ssep(d: int = 1, drift: Sequence[float] | None = None) -> RateSpec:
    """Constant-rate exclusion: c_j = 1 with the one-pair decomposition g = eta_0."""
    origin = tuple(0 for _ in range(d))
    drift = tuple(float(m) for m in (drift if drift is not None else [1.0] * d))
    c = tuple(LocalFunction.constant(d, 1.0) for _ in range(d))
    decomposition = []
    for j in range(1, d + 1):
        e_j = tuple(1 if k == j - 1 else 0 for k in range(d))
        decomposition.append((GradientPair({origin: 1.0, e_j: -1.0}, LocalFunction.occupancy(origin)),))
    return RateSpec(name=f"ssep_d{d}", d=d, c=c, drift=drift, decomposition=tuple(decomposition))


def beta_environment(beta: float = 0.2, drift: float = 1.0) -> RateSpec:
    """One-dimensional model with environment-dependent rate 1 + beta(eta_{-1} + eta_{2}).

    The current factorizes as (1 + beta(eta_{-1} + eta_2))(eta_0 - eta_1),
    decomposed into the bare pair (delta_0 - delta_1, eta_0) and the pair
    (beta(delta_0 - delta_1), eta_{-1}eta_0 + eta_0 eta_1 - eta_{-1}eta_1).
    """
    eta = lambda k: LocalFunction.occupancy((k,))
    c = 1.0 + beta * (eta(-1) + eta(2))
    g2 = eta(-1) * eta(0) + eta(0) * eta(1) - eta(-1) * eta(1)
    pairs = (
        GradientPair({(0,): 1.0, (1,): -1.0}, eta(0)),
        GradientPair({(0,): beta, (1,): -beta}, g2),
    )
    return RateSpec(
        name=f"beta_env_{beta:g}",
        d=1,
        c=(c.simplify(),),
        drift=(float(drift),),
        decomposition=(pairs,),
    )


def preset(name: str, **params) -> RateSpec:
    if name == "ssep":
        return ssep(d=int(params.get("d", 1)), drift=params.get("drift"))
    if name == "beta_env":
        return beta_environment(beta=float(params.get("beta", 0.2)), drift=float(params.get("drift", 1.0)))
    raise ValueError(f"unknown preset {name!r}")


# ---------------------------------------------------------------------------
# Spec files
# ---------------------------------------------------------------------------


def _local_to_doc(f: LocalFunction) -> dict:
    return {"offsets": [list(o) for o in f.offsets], "values": [float(v) for v in f.table]}


def _local_from_doc(d: int, doc: Mapping) -> LocalFunction:
    offsets = tuple(tuple(int(c) for c in o) for o in doc["offsets"])
    table = np.asarray(doc["values"], dtype=np.float64)
    order = sorted(range(len(offsets)), key=lambda i: offsets[i])
    sorted_offsets = tuple(offsets[i] for i in order)
    if sorted_offsets != offsets:
        # re-index the truth table into sorted offset order
        new = np.empty_like(table)
        for pattern in range(len(table)):
            old = 0
            for new_bit, old_bit in enumerate(order):
                old |= ((pattern >> new_bit) & 1) << old_bit
            new[pattern] = table[old]
        table = new
    return LocalFunction(d, sorted_offsets, table)


def spec_to_doc(spec: RateSpec) -> dict:
    directions = []
    for j in range(spec.d):
        directions.append(
            {
                "c": _local_to_doc(spec.c[j]),
                "m": float(spec.drift[j]),
                "decomposition": [
                    {
                        "measure": [[list(y), float(w)] for y, w in sorted(pair.measure.items())],
                        "g": _local_to_doc(pair.g),
                    }
                    for pair in spec.decomposition[j]
                ],
            }
        )
    return {"name": spec.name, "d": spec.d, "directions": directions}


def spec_from_doc(doc: Mapping) -> RateSpec:
    d = int(doc["d"])
    cs, drifts, decomp = [], [], []
    for entry in doc["directions"]:
        cs.append(_local_from_doc(d, entry["c"]))
        drifts.append(float(entry["m"]))
        pairs = tuple(
            GradientPair(
                {tuple(int(c) for c in y): float(w) for y, w in item["measure"]},
                _local_from_doc(d, item["g"]),
            )
            for item in entry["decomposition"]
        )
        decomp.append(pairs)
    return RateSpec(name=str(doc.get("name", "custom")), d=d, c=tuple(cs), drift=tuple(drifts), decomposition=tuple(decomp))


def save_spec(spec: RateSpec, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(spec_to_doc(spec), fh, sort_keys=True)


def load_spec(path) -> RateSpec:
    with open(path) as fh:
        return spec_from_doc(yaml.safe_load(fh))
