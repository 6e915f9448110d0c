"""Discrete torus geometry, particle configurations and cylinder functions.

Sites of the d-dimensional torus of side n are d-tuples of integers taken
modulo n.  Configurations are flat numpy uint8 arrays indexed in row-major
order, so every array/file produced here is reproducible bit for bit.

A cylinder function is stored as a dense truth table over a finite set of
offsets: supports are tiny (a handful of sites), so exact expectations and
exhaustive pattern checks reduce to sums over the table.  Placing a cylinder
function on a torus wraps its offsets modulo n; offsets that collide are
merged exactly, so evaluation agrees with the function applied to the
periodic extension of the configuration even when the support wraps around.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterator, Sequence

import numpy as np

Site = tuple[int, ...]


class SupportError(ValueError):
    """Raised when a cylinder-function support cannot be used as requested."""


def _as_site(x: Sequence[int]) -> Site:
    return tuple(int(c) for c in x)


@dataclass(frozen=True)
class Torus:
    """The discrete torus (Z/nZ)^d with row-major site indexing."""

    d: int
    n: int

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        if self.n < 2:
            raise ValueError("side length must be >= 2 (bonds need distinct endpoints)")

    @property
    def size(self) -> int:
        return self.n ** self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    def basis(self, j: int) -> Site:
        """Canonical direction e_j, with j in 1..d."""
        if not 1 <= j <= self.d:
            raise ValueError(f"direction {j} outside 1..{self.d}")
        return tuple(1 if k == j - 1 else 0 for k in range(self.d))

    def wrap(self, x: Sequence[int]) -> Site:
        return tuple(int(c) % self.n for c in x)

    def add(self, x: Sequence[int], y: Sequence[int]) -> Site:
        return tuple((int(a) + int(b)) % self.n for a, b in zip(x, y))

    def index(self, x: Sequence[int]) -> int:
        idx = 0
        for c in x:
            idx = idx * self.n + (int(c) % self.n)
        return idx

    def site(self, index: int) -> Site:
        coords = []
        for _ in range(self.d):
            coords.append(index % self.n)
            index //= self.n
        return tuple(reversed(coords))

    def sites(self) -> Iterator[Site]:
        return itertools.product(range(self.n), repeat=self.d)

    def shift_indices(self, offset: Sequence[int]) -> np.ndarray:
        """Index permutation p with p[i] = index(site(i) + offset).

        For a flat field ``a``, ``a[p]`` is the field x -> a[x + offset].
        """
        return _shift_indices_cached(self.d, self.n, _as_site(offset))


@lru_cache(maxsize=4096)
def _shift_indices_cached(d: int, n: int, offset: Site) -> np.ndarray:
    coords = np.unravel_index(np.arange(n ** d), (n,) * d)
    shifted = tuple((c + o) % n for c, o in zip(coords, offset))
    out = np.ravel_multi_index(shifted, (n,) * d)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# Configurations
# ---------------------------------------------------------------------------

Configuration = np.ndarray  # flat uint8 array of length torus.size


def empty_configuration(torus: Torus) -> Configuration:
    return np.zeros(torus.size, dtype=np.uint8)


def full_configuration(torus: Torus) -> Configuration:
    return np.ones(torus.size, dtype=np.uint8)


def particle_count(config: Configuration) -> int:
    return int(config.sum())


def swap(config: Configuration, torus: Torus, x: Sequence[int], y: Sequence[int]) -> Configuration:
    """Exchange the occupation variables at sites x and y."""
    out = config.copy()
    ix, iy = torus.index(x), torus.index(y)
    out[ix], out[iy] = config[iy], config[ix]
    return out


def translate(config: Configuration, torus: Torus, x: Sequence[int]) -> Configuration:
    """Shifted configuration with value at z equal to the input at x + z."""
    return config[torus.shift_indices(x)]


def config_to_string(config: Configuration) -> str:
    return "".join("1" if b else "0" for b in config)


def config_from_string(text: str) -> Configuration:
    if set(text) - {"0", "1"}:
        raise ValueError("configuration strings contain only 0/1 characters")
    return np.frombuffer(text.encode("ascii"), dtype=np.uint8) - ord("0")


def all_configurations(torus: Torus) -> Iterator[Configuration]:
    for bits in itertools.product((0, 1), repeat=torus.size):
        yield np.array(bits, dtype=np.uint8)


# ---------------------------------------------------------------------------
# Cylinder (local) functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LocalFunction:
    """Real function of finitely many occupation variables.

    ``offsets`` is a lexicographically sorted tuple of distinct integer
    offsets; ``table`` has length 2^k and bit i of the pattern index is the
    occupancy at ``offsets[i]``.
    """

    dim: int
    offsets: tuple[Site, ...]
    table: np.ndarray

    def __post_init__(self) -> None:
        if tuple(sorted(set(self.offsets))) != self.offsets:
            raise ValueError("offsets must be sorted and distinct")
        if len(self.table) != 1 << len(self.offsets):
            raise ValueError("truth table length must be 2^(number of offsets)")
        object.__setattr__(self, "table", np.asarray(self.table, dtype=np.float64))

    # -- constructors -------------------------------------------------------

    @staticmethod
    def constant(dim: int, value: float) -> "LocalFunction":
        return LocalFunction(dim, (), np.array([float(value)]))

    @staticmethod
    def occupancy(offset: Sequence[int]) -> "LocalFunction":
        """The function eta |-> eta_offset."""
        site = _as_site(offset)
        return LocalFunction(len(site), (site,), np.array([0.0, 1.0]))

    @staticmethod
    def from_callable(
        dim: int, offsets: Sequence[Sequence[int]], fn: Callable[[dict[Site, int]], float]
    ) -> "LocalFunction":
        offs = tuple(sorted({_as_site(o) for o in offsets}))
        table = np.empty(1 << len(offs))
        for pattern in range(len(table)):
            bits = {o: (pattern >> i) & 1 for i, o in enumerate(offs)}
            table[pattern] = float(fn(bits))
        return LocalFunction(dim, offs, table)

    # -- basic queries ------------------------------------------------------

    @property
    def support_size(self) -> int:
        return len(self.offsets)

    @property
    def support_radius(self) -> int:
        """Smallest l with the support inside the centered box {-l..l}^d."""
        if not self.offsets:
            return 0
        return max(abs(c) for o in self.offsets for c in o)

    def value(self, pattern: int) -> float:
        return float(self.table[pattern])

    def depends_on(self, offset: Sequence[int]) -> bool:
        site = _as_site(offset)
        if site not in self.offsets:
            return False
        bit = self.offsets.index(site)
        idx = np.arange(len(self.table))
        return bool(np.any(self.table[idx] != self.table[idx ^ (1 << bit)]))

    def simplify(self) -> "LocalFunction":
        """Drop offsets the table does not depend on."""
        keep = [o for o in self.offsets if self.depends_on(o)]
        if len(keep) == len(self.offsets):
            return self
        return _project(self, tuple(keep))

    # -- group action -------------------------------------------------------

    def translate(self, y: Sequence[int]) -> "LocalFunction":
        """tau_y f, reading occupancies at y + offset."""
        site = _as_site(y)
        offs = tuple(tuple(a + b for a, b in zip(o, site)) for o in self.offsets)
        order = sorted(range(len(offs)), key=lambda i: offs[i])
        return _permuted(self.dim, tuple(offs[i] for i in order), order, self.table)

    # -- algebra ------------------------------------------------------------

    def _binary(self, other: "LocalFunction | float", op) -> "LocalFunction":
        if not isinstance(other, LocalFunction):
            other = LocalFunction.constant(self.dim, float(other))
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        offs = tuple(sorted(set(self.offsets) | set(other.offsets)))
        table = np.empty(1 << len(offs))
        for pattern in range(len(table)):
            bits = {o: (pattern >> i) & 1 for i, o in enumerate(offs)}
            table[pattern] = op(self._eval_bits(bits), other._eval_bits(bits))
        return LocalFunction(self.dim, offs, table)

    def _eval_bits(self, bits: dict[Site, int]) -> float:
        pattern = 0
        for i, o in enumerate(self.offsets):
            pattern |= bits[o] << i
        return float(self.table[pattern])

    def __add__(self, other):
        return self._binary(other, lambda a, b: a + b)

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        return self._binary(other, lambda a, b: a - b)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._binary(other, lambda a, b: a * b)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return LocalFunction(self.dim, self.offsets, -self.table)

    # -- placement on a torus ----------------------------------------------

    def place(self, torus: Torus, strict: bool = False) -> "PlacedLocal":
        """Wrap the support modulo n, merging offsets that collide.

        In strict mode a collision (support wider than the torus) raises
        SupportError instead.
        """
        if torus.d != self.dim:
            raise ValueError(f"function of dimension {self.dim} placed on torus of dimension {torus.d}")
        wrapped = [torus.wrap(o) for o in self.offsets]
        sites = tuple(sorted(set(wrapped)))
        if strict and len(sites) != len(wrapped):
            raise SupportError(
                f"support of width > {torus.n} does not embed injectively in the torus"
            )
        pos = {s: k for k, s in enumerate(sites)}
        src = [pos[w] for w in wrapped]
        table = np.empty(1 << len(sites))
        for q in range(len(table)):
            p = 0
            for i, s in enumerate(src):
                p |= ((q >> s) & 1) << i
            table[q] = self.table[p]
        return PlacedLocal(torus, sites, table)


def _permuted(dim: int, sorted_offsets: tuple[Site, ...], order: Sequence[int], table: np.ndarray) -> LocalFunction:
    new_table = np.empty_like(table)
    for pattern in range(len(table)):
        old = 0
        for new_bit, old_bit in enumerate(order):
            old |= ((pattern >> new_bit) & 1) << old_bit
        new_table[pattern] = table[old]
    return LocalFunction(dim, sorted_offsets, new_table)


def _project(f: LocalFunction, keep: tuple[Site, ...]) -> LocalFunction:
    table = np.empty(1 << len(keep))
    for pattern in range(len(table)):
        bits = {o: 0 for o in f.offsets}
        for i, o in enumerate(keep):
            bits[o] = (pattern >> i) & 1
        table[pattern] = f._eval_bits(bits)
    return LocalFunction(f.dim, keep, table)


@dataclass(frozen=True)
class PlacedLocal:
    """A cylinder function pinned to a torus: distinct wrapped sites + table."""

    torus: Torus
    sites: tuple[Site, ...]
    table: np.ndarray

    @property
    def support_size(self) -> int:
        return len(self.sites)

    def pattern_at(self, config: Configuration, x: Sequence[int]) -> int:
        pattern = 0
        for i, s in enumerate(self.sites):
            pattern |= int(config[self.torus.index(self.torus.add(x, s))]) << i
        return pattern

    def eval(self, config: Configuration, x: Sequence[int]) -> float:
        return float(self.table[self.pattern_at(config, x)])

    def eval_all(self, config: Configuration) -> np.ndarray:
        """Vector over base points x of (tau_x f)(eta)."""
        codes = np.zeros(self.torus.size, dtype=np.int64)
        for i, s in enumerate(self.sites):
            codes |= config[self.torus.shift_indices(s)].astype(np.int64) << i
        return self.table[codes]

    def site_probabilities(self, profile_values: np.ndarray) -> np.ndarray:
        """Matrix rho[i, x] = profile(x + sites[i]) for all base points x."""
        rows = [profile_values[self.torus.shift_indices(s)] for s in self.sites]
        if not rows:
            return np.zeros((0, self.torus.size))
        return np.stack(rows)


def eval_local(f: LocalFunction, config: Configuration, torus: Torus, x: Sequence[int], strict: bool = False) -> float:
    """(tau_x f)(eta), reading occupancies at x + offset modulo n."""
    return f.place(torus, strict=strict).eval(config, x)
