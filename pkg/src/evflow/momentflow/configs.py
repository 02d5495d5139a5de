"""Particle configurations on sites 1..N and their enumeration."""
from dataclasses import dataclass
from functools import cached_property
from math import comb

import numpy as np

from ..errors import ContractError, EnumerationCapError

STATE_CAP = 10**6


@dataclass(frozen=True)
class Configuration:
    """Occupation numbers ``eta[0..N-1]`` for sites 1..N."""

    occupations: tuple

    def __post_init__(self):
        occ = tuple(int(c) for c in self.occupations)
        if not occ:
            raise ContractError("a configuration needs at least one site")
        if any(c < 0 for c in occ):
            raise ContractError("occupation numbers must be nonnegative")
        object.__setattr__(self, "occupations", occ)

    @classmethod
    def from_positions(cls, N, positions):
        occ = [0] * N
        for x in positions:
            if not 1 <= x <= N:
                raise ContractError(f"site {x} outside 1..{N}")
            occ[x - 1] += 1
        return cls(tuple(occ))

    @classmethod
    def from_counts(cls, N, counts):
        """Build from a ``{site: count}`` mapping with 1-based sites."""
        occ = [0] * N
        for x, c in counts.items():
            if not 1 <= x <= N:
                raise ContractError(f"site {x} outside 1..{N}")
            occ[x - 1] += int(c)
        return cls(tuple(occ))

    @property
    def N(self):
        return len(self.occupations)

    @property
    def n(self):
        return sum(self.occupations)

    def __getitem__(self, site):
        return self.occupations[site - 1]

    @property
    def positions(self):
        """Sorted particle positions ``x_1 <= ... <= x_n``."""
        return tuple(x for x, c in enumerate(self.occupations, start=1) for _ in range(c))

    def sites(self):
        """Occupied sites with their counts, in increasing site order."""
        return [(x, c) for x, c in enumerate(self.occupations, start=1) if c]

    @property
    def label(self):
        """Canonical string such as ``"3:2|7:1"``."""
        return "|".join(f"{x}:{c}" for x, c in self.sites())

    def move(self, i, j):
        """Move one particle from site ``i`` to site ``j``; unchanged if ``i`` is empty."""
        N = self.N
        if not (1 <= i <= N and 1 <= j <= N):
            raise ContractError(f"sites ({i}, {j}) outside 1..{N}")
        if i == j:
            raise ContractError("move needs two distinct sites")
        if self.occupations[i - 1] == 0:
            return self
        occ = list(self.occupations)
        occ[i - 1] -= 1
        occ[j - 1] += 1
        return Configuration(tuple(occ))

    def __str__(self):
        return self.label


def config_distance(eta, xi):
    """Sum of gaps between the sorted particle positions."""
    if eta.n != xi.n:
        raise ContractError(f"particle counts differ ({eta.n} vs {xi.n})")
    return int(sum(abs(a - b) for a, b in zip(eta.positions, xi.positions)))


def space_size(N, n):
    return comb(N + n - 1, n)


class ConfigurationSpace:
    """All configurations of ``n`` particles on ``N`` sites.

    Configurations are stored as sorted position rows. Indices follow the
    colexicographic order of the strictly increasing shifted positions
    ``y_a = x_a + a - 2`` (a = 1..n), ranked by the combinatorial number
    system ``sum_a C(y_a, a)``; this gives a bijection onto ``0..M-1`` that
    does not depend on how the space was generated.
    """

    def __init__(self, N, n, cap=STATE_CAP):
        if int(N) != N or N < 1:
            raise ContractError(f"N must be a positive integer, got {N}")
        if int(n) != n or n < 1:
            raise ContractError(f"n must be a positive integer, got {n}")
        self.N, self.n = int(N), int(n)
        self.size = space_size(self.N, self.n)
        if self.size > cap:
            raise EnumerationCapError(
                f"C(N+n-1, n) = {self.size} configurations for N={N}, n={n} exceeds the cap of {cap}"
            )
        top = self.N + self.n
        self._binom = np.array([[comb(y, a) for a in range(self.n + 1)] for y in range(top + 1)], dtype=np.int64)
        self.positions = self._enumerate()

    def _enumerate(self):
        # build the ranked order directly: colex on y is lex on reversed y
        from itertools import combinations

        ys = np.array(list(combinations(range(self.N + self.n - 1), self.n)), dtype=np.int64)
        ys = ys[np.lexsort(ys.T)]
        return ys - np.arange(self.n) + 1

    def __len__(self):
        return self.size

    def rank(self, positions):
        """Indices of sorted position rows (array of shape (..., n))."""
        p = np.asarray(positions, dtype=np.int64)
        y = p - 1 + np.arange(self.n)
        return self._binom[y, np.arange(1, self.n + 1)].sum(axis=-1)

    def index(self, eta):
        if eta.N != self.N or eta.n != self.n:
            raise ContractError(f"configuration with N={eta.N}, n={eta.n} does not belong to (N={self.N}, n={self.n})")
        return int(self.rank(eta.positions))

    def config(self, idx):
        return Configuration.from_positions(self.N, self.positions[idx].tolist())

    def __iter__(self):
        for idx in range(self.size):
            yield self.config(idx)

    def counts_at(self, sites):
        """Occupation of each 1-based site in ``sites`` (shape ``(M,)`` or ``(M, k)``)."""
        sites = np.asarray(sites)
        if sites.ndim == 0:
            return np.count_nonzero(self.positions == sites, axis=1)
        return (self.positions[:, :, None] == sites[None, None, :]).sum(axis=1)

    @cached_property
    def labels(self):
        return [self.config(i).label for i in range(self.size)]

    def distances_from(self, eta):
        """``d(eta, xi)`` for every configuration ``xi``, vectorized."""
        ref = np.array(eta.positions, dtype=np.int64)
        if ref.size != self.n:
            raise ContractError("particle counts differ")
        return np.abs(self.positions - ref[None, :]).sum(axis=1)
