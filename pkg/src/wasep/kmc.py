"""Event-driven continuous-time simulation of the exclusion dynamics.

The chain is sampled exactly in law: exponential waiting times at the total
rate, events chosen proportionally to per-bond rates.  Each bond carries a
single effective rate (a discordant pair can only swap one way), kept in a
binary-indexed tree so sampling and the local updates after a swap cost
O(log #bonds).  After a swap only the bonds whose rate reads one of the two
changed sites are refreshed; the dependency lists are precomputed from the
rate-function supports.

The n^2 and a_n n accelerations live inside the rates, so simulation time
is already macroscopic time.  Replica streams are independent: the kernel
runs xoshiro256++ seeded per (seed, replica) through splitmix64, and
ensembles are reproducible regardless of thread scheduling.

Rates must be nonnegative for the given (n, a_n); this is checked on every
local rate pattern at startup and a violation is a hard error rather than a
reinterpreted jump.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit, prange, uint64

from .lattice import Configuration, Torus
from .rates import RateSpec, validate_rate_spec
from .scaling import ScalingPlan

logger = logging.getLogger(__name__)

REBUILD_EVERY = 1 << 20  # periodic tree refresh keeps float drift negligible


class NegativeRateError(ValueError):
    """The drift overwhelms the symmetric part at this (n, a_n)."""


# ---------------------------------------------------------------------------
# Compiled tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelTables:
    """Flat arrays driving the jit kernel for one (spec, torus, scaling)."""

    torus: Torus
    n_bonds: int
    neighbor: np.ndarray  # (d, size) site index of x + e_j
    c_sites: np.ndarray  # (d, max_k, size) site indices feeding c_j at bond (j, x)
    c_nsites: np.ndarray  # (d,)
    c_tables: np.ndarray  # (d, 2^max_k)
    sym_coef: float  # n^2
    asym_coef: np.ndarray  # (d,) a_n n m_j
    dep_offsets: np.ndarray  # CSR offsets per site into dep_bonds
    dep_bonds: np.ndarray  # bond ids whose rate depends on a site
    tree_size: int


def build_tables(spec: RateSpec, torus: Torus, scaling: ScalingPlan) -> KernelTables:
    report = validate_rate_spec(spec, torus)
    if not report.passed:
        raise ValueError("rate spec failed validation:\n" + "\n".join(report.lines()))
    if torus.n < spec.comfortable_torus_side():
        logger.warning(
            "torus side %d below %d: rate supports wrap (handled exactly by merging)",
            torus.n,
            spec.comfortable_torus_side(),
        )
    d, size = torus.d, torus.size
    n2 = float(scaling.n) ** 2
    asym = np.array([scaling.a_n * scaling.n * m for m in spec.drift])

    # startup nonnegativity scan over every local rate pattern
    for j in range(1, d + 1):
        placed = spec.c[j - 1].place(torus)
        for pattern, c_val in enumerate(placed.table):
            forward = c_val * (n2 + asym[j - 1])
            backward = c_val * n2
            if forward < 0.0 or backward < 0.0:
                raise NegativeRateError(
                    f"direction {j}: rate pattern {pattern} gives effective rates "
                    f"({forward:g}, {backward:g}); increase n or reduce a_n|m_j|"
                )

    neighbor = np.empty((d, size), dtype=np.int64)
    placed_cs = []
    max_k = 0
    for j in range(1, d + 1):
        neighbor[j - 1] = torus.shift_indices(torus.basis(j))
        placed = spec.c[j - 1].place(torus)
        placed_cs.append(placed)
        max_k = max(max_k, len(placed.sites))

    c_sites = np.zeros((d, max(max_k, 1), size), dtype=np.int64)
    c_nsites = np.zeros(d, dtype=np.int64)
    c_tables = np.zeros((d, 1 << max_k if max_k else 1))
    dep_lists: list[list[int]] = [[] for _ in range(size)]
    for j in range(1, d + 1):
        placed = placed_cs[j - 1]
        c_nsites[j - 1] = len(placed.sites)
        c_tables[j - 1, : len(placed.table)] = placed.table
        for i, s in enumerate(placed.sites):
            c_sites[j - 1, i] = torus.shift_indices(s)
        for x_index in range(size):
            bond = (j - 1) * size + x_index
            deps = {x_index, int(neighbor[j - 1, x_index])}
            for i in range(len(placed.sites)):
                deps.add(int(c_sites[j - 1, i, x_index]))
            for s in deps:
                dep_lists[s].append(bond)

    dep_offsets = np.zeros(size + 1, dtype=np.int64)
    for s in range(size):
        dep_offsets[s + 1] = dep_offsets[s] + len(dep_lists[s])
    dep_bonds = np.concatenate([np.array(lst, dtype=np.int64) for lst in dep_lists])

    n_bonds = d * size
    tree_size = 1
    while tree_size < n_bonds:
        tree_size *= 2
    return KernelTables(
        torus=torus,
        n_bonds=n_bonds,
        neighbor=neighbor,
        c_sites=c_sites,
        c_nsites=c_nsites,
        c_tables=c_tables,
        sym_coef=n2,
        asym_coef=asym,
        dep_offsets=dep_offsets,
        dep_bonds=dep_bonds,
        tree_size=tree_size,
    )


# ---------------------------------------------------------------------------
# Jit kernel
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _splitmix64(state):
    state = uint64(state + uint64(0x9E3779B97F4A7C15))
    z = state
    z = uint64((z ^ (z >> uint64(30))) * uint64(0xBF58476D1CE4E5B9))
    z = uint64((z ^ (z >> uint64(27))) * uint64(0x94D049BB133111EB))
    return state, uint64(z ^ (z >> uint64(31)))


@njit(cache=True, inline="always")
def _rotl(x, k):
    return uint64((x << uint64(k)) | (x >> uint64(64 - k)))


@njit(cache=True, inline="always")
def _xoshiro_next(s):
    result = uint64(_rotl(uint64(s[0] + s[3]), 23) + s[0])
    t = uint64(s[1] << uint64(17))
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@njit(cache=True, inline="always")
def _uniform(s):
    # in (0, 1]: safe inside log()
    return (np.float64(_xoshiro_next(s) >> uint64(11)) + 1.0) * (2.0**-53)


@njit(cache=True)
def _seed_state(seed, replica):
    s = np.empty(4, dtype=np.uint64)
    state = uint64(uint64(seed) ^ uint64(uint64(replica + 1) * uint64(0xD2B74407B1CE6E93)))
    for i in range(4):
        state, value = _splitmix64(state)
        s[i] = value
    # xoshiro state must not be all zero
    if s[0] | s[1] | s[2] | s[3] == uint64(0):
        s[0] = uint64(0x1234567887654321)
    return s


@njit(cache=True, inline="always")
def _bond_rate(occ, bond, size, neighbor, c_sites, c_nsites, c_tables, sym_coef, asym_coef):
    j = bond // size
    x = bond - j * size
    y = neighbor[j, x]
    bx = occ[x]
    by = occ[y]
    if bx == by:
        return 0.0
    pattern = 0
    for i in range(c_nsites[j]):
        pattern |= occ[c_sites[j, i, x]] << i
    c_val = c_tables[j, pattern]
    if bx == 1:
        return c_val * (sym_coef + asym_coef[j])
    return c_val * sym_coef


@njit(cache=True)
def _tree_build(rates, tree, tree_size, n_bonds):
    for i in range(2 * tree_size):
        tree[i] = 0.0
    for b in range(n_bonds):
        tree[tree_size + b] = rates[b]
    for i in range(tree_size - 1, 0, -1):
        tree[i] = tree[2 * i] + tree[2 * i + 1]


@njit(cache=True, inline="always")
def _tree_update(tree, tree_size, b, new_value):
    i = tree_size + b
    delta = new_value - tree[i]
    while i >= 1:
        tree[i] += delta
        i //= 2


@njit(cache=True, inline="always")
def _tree_sample(tree, tree_size, target):
    i = 1
    while i < tree_size:
        left = tree[2 * i]
        if target < left:
            i = 2 * i
        else:
            target -= left
            i = 2 * i + 1
    return i - tree_size


@njit(cache=True)
def _run_replica(
    occ,
    snap_times,
    snaps,
    seed,
    replica,
    size,
    n_bonds,
    tree_size,
    neighbor,
    c_sites,
    c_nsites,
    c_tables,
    sym_coef,
    asym_coef,
    dep_offsets,
    dep_bonds,
    rebuild_every,
    event_times,
    event_bonds,
    max_events,
    debug_interval,
    debug_flags,
):
    rng = _seed_state(seed, replica)
    rates = np.empty(n_bonds)
    tree = np.empty(2 * tree_size)
    for b in range(n_bonds):
        rates[b] = _bond_rate(
            occ, b, size, neighbor, c_sites, c_nsites, c_tables, sym_coef, asym_coef
        )
    _tree_build(rates, tree, tree_size, n_bonds)

    t = 0.0
    n_events = uint64(0)
    snap_idx = 0
    n_snaps = snap_times.shape[0]
    events_since_rebuild = 0
    while snap_idx < n_snaps:
        total = tree[1]
        if total <= 0.0:
            # absorbing configuration: every remaining snapshot sees it
            while snap_idx < n_snaps:
                for s in range(size):
                    snaps[snap_idx, s] = occ[s]
                snap_idx += 1
            break
        dt = -math.log(_uniform(rng)) / total
        t_next = t + dt
        while snap_idx < n_snaps and snap_times[snap_idx] <= t_next:
            for s in range(size):
                snaps[snap_idx, s] = occ[s]
            snap_idx += 1
        if snap_idx >= n_snaps:
            break
        t = t_next

        target = _uniform(rng) * total
        if target >= total:
            target = total * (1.0 - 1e-16)
        bond = _tree_sample(tree, tree_size, target)
        if bond >= n_bonds or rates[bond] <= 0.0:
            # float slack in the tree: rebuild and skip this tick
            _tree_build(rates, tree, tree_size, n_bonds)
            continue
        j = bond // size
        x = bond - j * size
        y = neighbor[j, x]
        tmp = occ[x]
        occ[x] = occ[y]
        occ[y] = tmp
        if n_events < max_events:
            event_times[n_events] = t
            event_bonds[n_events] = bond
        n_events += uint64(1)

        for site in (x, y):
            for k in range(dep_offsets[site], dep_offsets[site + 1]):
                b = dep_bonds[k]
                new_rate = _bond_rate(
                    occ, b, size, neighbor, c_sites, c_nsites, c_tables, sym_coef, asym_coef
                )
                if new_rate != rates[b]:
                    rates[b] = new_rate
                    _tree_update(tree, tree_size, b, new_rate)

        if debug_interval > 0 and n_events % uint64(debug_interval) == uint64(0):
            # cache coherence: incrementally maintained rates must equal a
            # fresh computation at the current configuration
            for b in range(n_bonds):
                fresh = _bond_rate(
                    occ, b, size, neighbor, c_sites, c_nsites, c_tables, sym_coef, asym_coef
                )
                if fresh != rates[b]:
                    debug_flags[0] = 1

        events_since_rebuild += 1
        if events_since_rebuild >= rebuild_every:
            _tree_build(rates, tree, tree_size, n_bonds)
            events_since_rebuild = 0
    return n_events


@njit(cache=True, parallel=True)
def _run_ensemble(
    initial,  # (replicas, size) uint8
    snap_times,
    out,  # (replicas, n_snaps, size) uint8
    seed,
    size,
    n_bonds,
    tree_size,
    neighbor,
    c_sites,
    c_nsites,
    c_tables,
    sym_coef,
    asym_coef,
    dep_offsets,
    dep_bonds,
    rebuild_every,
):
    replicas = initial.shape[0]
    counts = np.zeros(replicas, dtype=np.uint64)
    no_times = np.empty(0)
    no_bonds = np.empty(0, dtype=np.int64)
    no_flags = np.zeros(1, dtype=np.uint8)
    for r in prange(replicas):
        occ = initial[r].copy()
        counts[r] = _run_replica(
            occ,
            snap_times,
            out[r],
            seed,
            r,
            size,
            n_bonds,
            tree_size,
            neighbor,
            c_sites,
            c_nsites,
            c_tables,
            sym_coef,
            asym_coef,
            dep_offsets,
            dep_bonds,
            rebuild_every,
            no_times,
            no_bonds,
            uint64(0),
            0,
            no_flags,
        )
    return counts


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------


def bond_rates(
    spec: RateSpec, config: Configuration, torus: Torus, scaling: ScalingPlan, x: Sequence[int], j: int
) -> tuple[float, float]:
    """Effective event rates (x -> x+e_j, x+e_j -> x) at the configuration.

    A (1,0) pair can only fire forward at n^2 c + a_n n m_j c, a (0,1) pair
    only backward at n^2 c; concordant pairs are frozen.
    """
    placed = spec.c[j - 1].place(torus)
    n2 = float(scaling.n) ** 2
    drift_term = scaling.a_n * scaling.n * spec.drift[j - 1]
    c_val = placed.eval(config, x)
    forward = c_val * (n2 + drift_term)
    backward = c_val * n2
    if forward < 0.0 or backward < 0.0:
        raise NegativeRateError(
            f"effective rate negative at bond ({x}, direction {j}): n + a_n m_j = "
            f"{scaling.n + scaling.a_n * spec.drift[j - 1]:g} < 0"
        )
    ix = torus.index(x)
    iy = torus.index(torus.add(x, torus.basis(j)))
    bx, by = int(config[ix]), int(config[iy])
    if bx == 1 and by == 0:
        return forward, 0.0
    if bx == 0 and by == 1:
        return 0.0, backward
    return 0.0, 0.0


@dataclass(frozen=True)
class SimResult:
    torus: Torus
    snapshot_times: tuple[float, ...]
    snapshots: np.ndarray  # (replicas, n_snaps, size) uint8
    n_events: np.ndarray  # (replicas,) uint64
    seed: int
    event_times: np.ndarray | None = None  # recorded single-replica event log
    event_bonds: np.ndarray | None = None

    @property
    def replicas(self) -> int:
        return self.snapshots.shape[0]

    def mean_occupancy(self) -> np.ndarray:
        """(n_snaps, size) ensemble-averaged occupancies."""
        return self.snapshots.mean(axis=0)

    def event_site_direction(self) -> tuple[np.ndarray, np.ndarray] | None:
        """Decode the recorded bond ids into (direction j, site index)."""
        if self.event_bonds is None:
            return None
        j = self.event_bonds // self.torus.size + 1
        x = self.event_bonds % self.torus.size
        return j, x


def simulate_ensemble(
    spec: RateSpec,
    initial: np.ndarray,
    torus: Torus,
    scaling: ScalingPlan,
    snapshot_times: Sequence[float],
    seed: int,
) -> SimResult:
    """Run one replica per row of ``initial`` with independent streams.

    ``initial`` has shape (replicas, size); replica r uses the stream keyed
    by (seed, r), so results do not depend on scheduling and a subset of
    replicas reproduces exactly.
    """
    tables = build_tables(spec, torus, scaling)
    initial = np.ascontiguousarray(initial, dtype=np.uint8)
    if initial.ndim != 2 or initial.shape[1] != torus.size:
        raise ValueError("initial must have shape (replicas, size)")
    snap_times = np.asarray(sorted(float(t) for t in snapshot_times))
    if len(snap_times) == 0:
        raise ValueError("need at least one snapshot time")
    out = np.zeros((initial.shape[0], len(snap_times), torus.size), dtype=np.uint8)
    counts = _run_ensemble(
        initial,
        snap_times,
        out,
        seed,
        torus.size,
        tables.n_bonds,
        tables.tree_size,
        tables.neighbor,
        tables.c_sites,
        tables.c_nsites,
        tables.c_tables,
        tables.sym_coef,
        tables.asym_coef,
        tables.dep_offsets,
        tables.dep_bonds,
        REBUILD_EVERY,
    )
    return SimResult(
        torus=torus,
        snapshot_times=tuple(snap_times.tolist()),
        snapshots=out,
        n_events=counts,
        seed=seed,
    )


def simulate(
    spec: RateSpec,
    initial: Configuration,
    torus: Torus,
    scaling: ScalingPlan,
    snapshot_times: Sequence[float],
    seed: int,
    replica: int = 0,
    record_events: int = 0,
    debug_cache_interval: int = 0,
) -> SimResult:
    """Single replica; pass ``record_events`` > 0 to keep the first that many
    (time, bond) pairs of the event trajectory.  A positive
    ``debug_cache_interval`` recomputes every bond rate from scratch that
    often and raises if the incremental cache ever disagrees."""
    tables = build_tables(spec, torus, scaling)
    snap_times = np.asarray(sorted(float(t) for t in snapshot_times))
    out = np.zeros((1, len(snap_times), torus.size), dtype=np.uint8)
    occ = np.ascontiguousarray(initial, dtype=np.uint8).copy()
    cap = int(record_events)
    event_times = np.empty(max(cap, 0))
    event_bonds = np.empty(max(cap, 0), dtype=np.int64)
    debug_flags = np.zeros(1, dtype=np.uint8)
    count = _run_replica(
        occ,
        snap_times,
        out[0],
        seed,
        replica,
        torus.size,
        tables.n_bonds,
        tables.tree_size,
        tables.neighbor,
        tables.c_sites,
        tables.c_nsites,
        tables.c_tables,
        tables.sym_coef,
        tables.asym_coef,
        tables.dep_offsets,
        tables.dep_bonds,
        REBUILD_EVERY,
        event_times,
        event_bonds,
        uint64(cap),
        int(debug_cache_interval),
        debug_flags,
    )
    if debug_flags[0]:
        raise RuntimeError("incremental bond-rate cache diverged from a fresh computation")
    recorded = min(int(count), cap)
    return SimResult(
        torus=torus,
        snapshot_times=tuple(snap_times.tolist()),
        snapshots=out,
        n_events=np.array([count], dtype=np.uint64),
        seed=seed,
        event_times=event_times[:recorded] if cap else None,
        event_bonds=event_bonds[:recorded] if cap else None,
    )


def rate_cache_coherent(
    spec: RateSpec, config: Configuration, torus: Torus, scaling: ScalingPlan
) -> bool:
    """Debug check: freshly computed bond rates match the kernel's rate
    function on the given configuration."""
    tables = build_tables(spec, torus, scaling)
    occ = np.ascontiguousarray(config, dtype=np.uint8)
    for j in range(1, torus.d + 1):
        for x in torus.sites():
            fwd, bwd = bond_rates(spec, occ, torus, scaling, x, j)
            bond = (j - 1) * torus.size + torus.index(x)
            kernel_rate = _bond_rate(
                occ,
                bond,
                torus.size,
                tables.neighbor,
                tables.c_sites,
                tables.c_nsites,
                tables.c_tables,
                tables.sym_coef,
                tables.asym_coef,
            )
            if abs(kernel_rate - (fwd + bwd)) > 1e-9 * max(1.0, fwd + bwd):
                return False
    return True


def throughput_estimate(n: int = 512, t_end: float = 0.001, seed: int = 0) -> tuple[float, int]:
    """Events per second for unit-rate d=1 dynamics at the given size.

    Advisory performance probe; returns (events_per_second, events).
    """
    import time

    from .rates import ssep

    torus = Torus(1, n)
    scaling = ScalingPlan(d=1, n=n, a_n=float(np.sqrt(n)))
    rng = np.random.default_rng(seed)
    initial = (rng.random((1, n)) < 0.5).astype(np.uint8)
    simulate_ensemble(ssep(1), initial, torus, scaling, [1e-9], seed)  # warm the jit
    start = time.perf_counter()
    result = simulate_ensemble(ssep(1), initial, torus, scaling, [t_end], seed)
    elapsed = time.perf_counter() - start
    events = int(result.n_events.sum())
    return events / max(elapsed, 1e-12), events
