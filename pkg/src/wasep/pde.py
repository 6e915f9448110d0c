"""Discrete calculus and solvers for the limiting density evolution.

Two flows are integrated with the same explicit fourth-order stepper:

* the continuum equation dv/dt = div[D grad v] - (1/2) div[v^2 s'' m] on a
  uniform periodic mesh, with centered second differences for the
  diffusion and a conservative centered flux for the quadratic drift;
* the lattice evolution dv/dt = a_n sum_j K_j whose right-hand side comes
  from exact expectations (see :mod:`wasep.adjoint`).

Both right-hand sides are divergence-form, so the field mean is conserved
to rounding.  The time step defaults to the parabolic heuristic
dt = 0.2 h^2 / max D; stepping with a larger dt raises CFLError with a
suggestion instead of running unstably.

Fields are flat row-major arrays; helpers reshape internally.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .lattice import Torus
from .scaling import ScalingPlan

CFL_SAFETY = 0.2


class CFLError(ValueError):
    def __init__(self, dt: float, dt_max: float):
        self.suggested_dt = dt_max
        super().__init__(f"dt = {dt:g} exceeds the stability heuristic; use dt <= {dt_max:g}")


# ---------------------------------------------------------------------------
# Discrete calculus on lattice fields
# ---------------------------------------------------------------------------


def diff_forward(field: np.ndarray, torus: Torus, j: int) -> np.ndarray:
    """(D_j F)(x) = F(x + e_j) - F(x)."""
    return field[torus.shift_indices(torus.basis(j))] - field


def grad_n(field: np.ndarray, torus: Torus, j: int) -> np.ndarray:
    """Discrete partial derivative n [F(x + e_j) - F(x)]."""
    return torus.n * diff_forward(field, torus, j)


def laplacian_n(field: np.ndarray, torus: Torus) -> np.ndarray:
    """n^2 sum_j [F(x+e_j) + F(x-e_j) - 2 F(x)]."""
    out = np.zeros_like(field, dtype=np.float64)
    for j in range(1, torus.d + 1):
        e_j = torus.basis(j)
        minus_e = tuple(-c for c in e_j)
        out += field[torus.shift_indices(e_j)] + field[torus.shift_indices(minus_e)] - 2.0 * field
    return float(torus.n) ** 2 * out


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    torus: Torus
    times: tuple[float, ...]
    fields: tuple[np.ndarray, ...]
    dt: float

    def at(self, t: float, tol: float = 1e-9) -> np.ndarray:
        for s, f in zip(self.times, self.fields):
            if abs(s - t) <= tol:
                return f
        raise KeyError(f"no snapshot at t = {t:g}; have {self.times}")

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "site", "value"])
            for t, field in zip(self.times, self.fields):
                for i, v in enumerate(field):
                    writer.writerow([f"{t:.17g}", i, f"{v:.17g}"])


def _rk4(
    rhs: Callable[[np.ndarray], np.ndarray],
    v0: np.ndarray,
    t_end: float,
    dt: float,
    snapshot_times: Sequence[float],
    torus: Torus,
) -> Trajectory:
    """Fixed-step classical Runge-Kutta, landing exactly on snapshot times."""
    snaps = sorted(set(float(t) for t in snapshot_times) | {0.0, float(t_end)})
    v = np.asarray(v0, dtype=np.float64).copy()
    t = 0.0
    fields = {0.0: v.copy()}
    for target in snaps[1:]:
        steps = max(1, math.ceil((target - t) / dt - 1e-12))
        h = (target - t) / steps
        for _ in range(steps):
            k1 = rhs(v)
            k2 = rhs(v + 0.5 * h * k1)
            k3 = rhs(v + 0.5 * h * k2)
            k4 = rhs(v + h * k3)
            v = v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = target
        fields[target] = v.copy()
    times = tuple(snaps)
    return Trajectory(torus=torus, times=times, fields=tuple(fields[t] for t in times), dt=dt)


# ---------------------------------------------------------------------------
# Continuum solver
# ---------------------------------------------------------------------------


def burgers_rhs_factory(
    torus: Torus, diffusivity: Sequence[float], sigma_dd: Sequence[float], drift: Sequence[float]
) -> Callable[[np.ndarray], np.ndarray]:
    """Semi-discretized right-hand side div[D grad v] - (1/2) div[v^2 s'' m].

    Centered second differences for the diffusion; the drift uses the flux
    form (F(x+e_j) - F(x-e_j)) / 2h with F = (1/2) s''_j m_j v^2, which
    telescopes over the periodic mesh.
    """
    h = 1.0 / torus.n
    shifts = []
    for j in range(1, torus.d + 1):
        e_j = torus.basis(j)
        shifts.append(
            (
                torus.shift_indices(e_j),
                torus.shift_indices(tuple(-c for c in e_j)),
                float(diffusivity[j - 1]),
                0.5 * float(sigma_dd[j - 1]) * float(drift[j - 1]),
            )
        )

    def rhs(v: np.ndarray) -> np.ndarray:
        out = np.zeros_like(v)
        flux_needed = any(s[3] != 0.0 for s in shifts)
        v2 = v * v if flux_needed else None
        for idx_p, idx_m, d_j, half_sm in shifts:
            out += d_j * (v[idx_p] + v[idx_m] - 2.0 * v) / (h * h)
            if half_sm != 0.0:
                flux = half_sm * v2
                out -= (flux[idx_p] - flux[idx_m]) / (2.0 * h)
        return out

    return rhs


def cfl_dt(mesh_points: int, max_diffusivity: float, safety: float = CFL_SAFETY) -> float:
    if max_diffusivity <= 0.0:
        raise ValueError("need a positive diffusivity for the parabolic CFL heuristic")
    h = 1.0 / mesh_points
    return safety * h * h / max_diffusivity


def burgers_solve(
    v0: np.ndarray,
    torus: Torus,
    diffusivity: Sequence[float],
    sigma_dd: Sequence[float],
    drift: Sequence[float],
    t_end: float,
    dt: float | None = None,
    snapshot_times: Sequence[float] = (),
) -> Trajectory:
    """Integrate the continuum equation on the mesh of the given torus."""
    dmax = max(float(x) for x in diffusivity)
    dt_max = cfl_dt(torus.n, dmax)
    if dt is None:
        dt = dt_max
    elif dt > dt_max:
        raise CFLError(dt, dt_max)
    rhs = burgers_rhs_factory(torus, diffusivity, sigma_dd, drift)
    return _rk4(rhs, v0, t_end, dt, snapshot_times, torus)


# ---------------------------------------------------------------------------
# Lattice (semi-discrete) solver
# ---------------------------------------------------------------------------


def semidiscrete_solve(
    spec,
    v0: np.ndarray,
    scaling: ScalingPlan,
    t_end: float,
    alpha0: float = 0.5,
    dt: float | None = None,
    snapshot_times: Sequence[float] = (),
    rhs: Callable[[np.ndarray], np.ndarray] | None = None,
) -> Trajectory:
    """Integrate dv/dt = a_n sum_j K_j on the lattice of the scaling plan.

    The right-hand side defaults to the exact-expectation evaluator; pass
    ``rhs`` to integrate an alternative assembly of the same equation.
    """
    from .adjoint import make_semidiscrete_rhs  # deferred: adjoint imports pde helpers
    from .rates import diffusivity_polys

    torus = Torus(scaling.d, scaling.n)
    if rhs is None:
        rhs = make_semidiscrete_rhs(spec, scaling, alpha0=alpha0, torus=torus)
    # effective diffusivity of the lattice flow, incl. the O(a_n/n) drift part
    dpolys = diffusivity_polys(spec)
    dmax = max(abs(dpolys[j][j](alpha0)) for j in range(spec.d))
    dmax_eff = dmax * (1.0 + scaling.a_n / scaling.n)
    dt_max = cfl_dt(scaling.n, dmax_eff)
    if dt is None:
        dt = dt_max
    elif dt > dt_max:
        raise CFLError(dt, dt_max)
    return _rk4(rhs, v0, t_end, dt, snapshot_times, torus)


def ssep_closed_form_rhs(torus: Torus, scaling: ScalingPlan, drift: Sequence[float]) -> Callable:
    """Closed-form lattice right-hand side for constant unit rates.

    Derived by balancing exact bond currents for c = 1 around alpha0 = 1/2:

        a_n sum_j K_j = Lap_n v
                        + sum_j m_j [ (a_n / 2n) Lap_n^(j) v
                                      + n (v(x) v(x+e_j) - v(x-e_j) v(x)) ].

    Cross-checked against the exact-expectation route and the matrix
    adjoint; the two code paths must produce identical trajectories.
    """
    n = scaling.n
    shifts = []
    for j in range(1, torus.d + 1):
        e_j = torus.basis(j)
        shifts.append(
            (
                torus.shift_indices(e_j),
                torus.shift_indices(tuple(-c for c in e_j)),
                float(drift[j - 1]),
            )
        )

    def rhs(v: np.ndarray) -> np.ndarray:
        out = np.zeros_like(v)
        for idx_p, idx_m, m_j in shifts:
            lap_j = float(n) ** 2 * (v[idx_p] + v[idx_m] - 2.0 * v)
            out += lap_j
            if m_j != 0.0:
                out += m_j * (
                    (scaling.a_n / (2.0 * n)) * lap_j + n * (v * v[idx_p] - v[idx_m] * v)
                )
        return out

    return rhs


# ---------------------------------------------------------------------------
# Mesh resampling
# ---------------------------------------------------------------------------


def downsample(field: np.ndarray, fine: Torus, coarse: Torus) -> np.ndarray:
    """Restrict a fine-mesh field to the points of a coarser mesh (d = 1, 2)."""
    if fine.n % coarse.n != 0:
        raise ValueError("fine mesh must be a multiple of the coarse mesh")
    step = fine.n // coarse.n
    nd = field.reshape(fine.shape)
    slicer = tuple(slice(None, None, step) for _ in range(fine.d))
    return nd[slicer].reshape(coarse.size).copy()
