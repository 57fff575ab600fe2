"""Torus geometry, seasonal rate tables and site bookkeeping.

Sites live on an ``M x M`` torus with spacing ``1/L``; the interaction
neighbourhood of a site is every other site within sup-norm site distance
``L``.  Seasons are half-open intervals ``[2nD, (2n+1)D)`` (season 1) and
``[(2n+1)D, (2n+2)D)`` (season 2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

__all__ = [
    "SeasonalParams",
    "LatticeSpec",
    "Configuration",
    "season_of",
    "rates_at",
    "neighborhood_size",
    "neighbor_count",
    "neighbor_fraction",
    "box_count",
]


def season_of(t: float, D: float) -> int:
    """Season (1 or 2) containing time ``t``; boundaries open the new season."""
    if not D > 0:
        raise ValueError(f"season length must be positive, got {D}")
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    return 1 if math.fmod(t, 2.0 * D) < D else 2


def _as_table(rows, S: int, name: str) -> tuple[tuple[float, float], ...]:
    out = []
    for row in rows:
        row = tuple(float(v) for v in row)
        if len(row) != 2:
            raise ValueError(f"{name} rows need one value per season, got {row}")
        out.append(row)
    if len(out) != S:
        raise ValueError(f"{name} has {len(out)} rows for {S} species")
    return tuple(out)


@dataclass(frozen=True)
class SeasonalParams:
    """Per-species, per-season birth and death rates.

    ``beta[i][j]`` and ``delta[i][j]`` hold species ``i+1`` in season ``j+1``
    (the public accessors use 1-based species and season labels).
    ``allow_zero_death`` admits zero death rates; it exists for test modes
    and branching-walk comparisons.
    """

    S: int
    D: float
    beta: tuple
    delta: tuple
    allow_zero_death: bool = False

    def __post_init__(self):
        if int(self.S) != self.S or self.S < 1:
            raise ValueError(f"species count must be a positive integer, got {self.S}")
        if not (math.isfinite(self.D) and self.D > 0):
            raise ValueError(f"season length must be positive and finite, got {self.D}")
        object.__setattr__(self, "beta", _as_table(self.beta, self.S, "beta"))
        object.__setattr__(self, "delta", _as_table(self.delta, self.S, "delta"))
        for i in range(self.S):
            for j in range(2):
                b, d = self.beta[i][j], self.delta[i][j]
                if not (math.isfinite(b) and b >= 0):
                    raise ValueError(f"birth rate of species {i + 1} in season {j + 1} is invalid: {b}")
                if not (math.isfinite(d) and d >= 0):
                    raise ValueError(f"death rate of species {i + 1} in season {j + 1} is invalid: {d}")
                if d == 0 and not self.allow_zero_death:
                    raise ValueError(f"death rate of species {i + 1} in season {j + 1} must be positive")

    @classmethod
    def constant_death(cls, D: float, betas: Sequence[Sequence[float]], deaths: Sequence[float], **kw):
        """Base model: each species has one death rate used in both seasons."""
        return cls(S=len(betas), D=D, beta=betas, delta=[(d, d) for d in deaths], **kw)

    @property
    def beta_array(self) -> np.ndarray:
        return np.array(self.beta, dtype=np.float64)

    @property
    def delta_array(self) -> np.ndarray:
        return np.array(self.delta, dtype=np.float64)

    def b(self, i: int, j: int) -> float:
        return self.beta[i - 1][j - 1]

    def d(self, i: int, j: int) -> float:
        return self.delta[i - 1][j - 1]

    def mean_death(self, i: int) -> float:
        return 0.5 * (self.delta[i - 1][0] + self.delta[i - 1][1])

    def mean_birth(self, i: int) -> float:
        return 0.5 * (self.beta[i - 1][0] + self.beta[i - 1][1])

    def with_species(self, keep: Sequence[int]) -> "SeasonalParams":
        """Restrict to the given 1-based species labels, in that order."""
        return SeasonalParams(
            S=len(keep),
            D=self.D,
            beta=[self.beta[i - 1] for i in keep],
            delta=[self.delta[i - 1] for i in keep],
            allow_zero_death=self.allow_zero_death,
        )

    def shifted(self) -> "SeasonalParams":
        """Same model observed from time D: the two seasons swap labels."""
        return SeasonalParams(
            S=self.S,
            D=self.D,
            beta=[(b[1], b[0]) for b in self.beta],
            delta=[(d[1], d[0]) for d in self.delta],
            allow_zero_death=self.allow_zero_death,
        )


def rates_at(params: SeasonalParams, i: int, t: float) -> tuple[float, float]:
    """(birth rate, death rate) of species ``i`` at time ``t``."""
    if not 1 <= i <= params.S:
        raise IndexError(f"species {i} out of range 1..{params.S}")
    j = season_of(t, params.D)
    return params.beta[i - 1][j - 1], params.delta[i - 1][j - 1]


@dataclass(frozen=True)
class LatticeSpec:
    """Torus of ``M x M`` sites with interaction range ``L`` sites."""

    M: int
    L: int

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2:
            raise ValueError(f"torus side must be an integer >= 2, got {self.M}")
        if int(self.L) != self.L or self.L < 1:
            raise ValueError(f"interaction range must be an integer >= 1, got {self.L}")

    @property
    def window(self) -> int:
        """Side of the neighbourhood window after wraparound dedup."""
        return min(2 * self.L + 1, self.M)

    @property
    def window_offset(self) -> int:
        # offsets run over [-L, L] unless the window wraps the whole torus
        return self.L if 2 * self.L + 1 <= self.M else 0

    @property
    def n_sites(self) -> int:
        return self.M * self.M

    @property
    def physical_side(self) -> float:
        return self.M / self.L


def neighborhood_size(spec: LatticeSpec) -> int:
    return spec.window**2 - 1


def _window_axes(spec: LatticeSpec, row: int, col: int) -> tuple[np.ndarray, np.ndarray]:
    lo = spec.window_offset
    offs = np.arange(spec.window) - lo
    return (row + offs) % spec.M, (col + offs) % spec.M


def neighbor_count(grid: np.ndarray, spec: LatticeSpec, x: tuple[int, int], state: int) -> int:
    row, col = x
    rows, cols = _window_axes(spec, row, col)
    n = int(np.count_nonzero(grid[np.ix_(rows, cols)] == state))
    return n - int(grid[row, col] == state)


def neighbor_fraction(config: "Configuration", spec: LatticeSpec, x: tuple[int, int], i: int) -> Fraction:
    """Exact fraction of the neighbours of ``x`` in state ``i`` (0 = empty)."""
    return Fraction(neighbor_count(config.grid, spec, x, i), neighborhood_size(spec))


def box_count(config: "Configuration", spec: LatticeSpec, corner: tuple[int, int], side_units: float, i: int) -> int:
    """Number of state-``i`` sites in the box ``corner + [0, side_units)^2``.

    ``side_units`` is in physical units, so a unit box holds ``L*L`` sites.
    """
    n = side_units * spec.L
    n_int = int(round(n))
    if abs(n - n_int) > 1e-9 or n_int < 1:
        raise ValueError(f"box side {side_units} is not a whole number of sites at L={spec.L}")
    if n_int > spec.M:
        raise ValueError(f"box of {n_int} sites does not fit on a torus of side {spec.M}")
    r0, c0 = corner
    rows = (r0 + np.arange(n_int)) % spec.M
    cols = (c0 + np.arange(n_int)) % spec.M
    return int(np.count_nonzero(config.grid[np.ix_(rows, cols)] == i))


@dataclass
class Configuration:
    """Site states plus per-species occupied-site index.

    ``occ[i-1, :counts[i-1]]`` lists the flat indices of the sites in state
    ``i`` and ``pos[x]`` is the slot of site ``x`` within its species list,
    so insertion, removal and uniform sampling are all O(1).
    """

    M: int
    S: int
    grid: np.ndarray = field(repr=False)
    occ: np.ndarray = field(repr=False)
    pos: np.ndarray = field(repr=False)
    counts: np.ndarray

    @classmethod
    def empty(cls, M: int, S: int) -> "Configuration":
        n = M * M
        return cls(
            M=M,
            S=S,
            grid=np.zeros((M, M), dtype=np.int8),
            occ=np.zeros((S, n), dtype=np.int64),
            pos=np.full(n, -1, dtype=np.int64),
            counts=np.zeros(S, dtype=np.int64),
        )

    @classmethod
    def from_grid(cls, grid: np.ndarray, S: int) -> "Configuration":
        grid = np.asarray(grid)
        M = grid.shape[0]
        if grid.shape != (M, M):
            raise ValueError("grid must be square")
        if grid.min() < 0 or grid.max() > S:
            raise ValueError(f"grid states must lie in 0..{S}")
        cfg = cls.empty(M, S)
        cfg.grid[:] = grid
        cfg.rebuild_index()
        return cfg

    def rebuild_index(self) -> None:
        flat = self.grid.reshape(-1)
        self.pos[:] = -1
        for i in range(1, self.S + 1):
            sites = np.flatnonzero(flat == i)
            self.counts[i - 1] = sites.size
            self.occ[i - 1, : sites.size] = sites
            self.pos[sites] = np.arange(sites.size)

    def copy(self) -> "Configuration":
        return Configuration(self.M, self.S, self.grid.copy(), self.occ.copy(), self.pos.copy(), self.counts.copy())

    def state(self, x: tuple[int, int]) -> int:
        return int(self.grid[x])

    def set_state(self, x: tuple[int, int], new: int) -> None:
        if not 0 <= new <= self.S:
            raise ValueError(f"state {new} outside 0..{self.S}")
        _set_site(self.grid.reshape(-1), self.occ, self.pos, self.counts, x[0] * self.M + x[1], new)

    def sample(self, i: int, rng: np.random.Generator) -> tuple[int, int]:
        """Uniform site in state ``i``."""
        n = self.counts[i - 1]
        if n == 0:
            raise ValueError(f"no site in state {i}")
        site = int(self.occ[i - 1, rng.integers(n)])
        return divmod(site, self.M)

    def occupied(self, i: int) -> np.ndarray:
        return self.occ[i - 1, : self.counts[i - 1]].copy()

    def densities(self) -> np.ndarray:
        return self.counts / float(self.M * self.M)

    def check_consistency(self) -> None:
        """Raise AssertionError if the index and the grid disagree."""
        flat = self.grid.reshape(-1)
        for i in range(1, self.S + 1):
            n = int(self.counts[i - 1])
            listed = self.occ[i - 1, :n]
            assert np.unique(listed).size == n, f"duplicate sites in species {i} index"
            assert np.array_equal(np.sort(listed), np.flatnonzero(flat == i)), f"species {i} index out of sync"
            assert np.array_equal(self.pos[listed], np.arange(n)), f"species {i} slots out of sync"
        assert self.counts.sum() <= flat.size


def _set_site(flat, occ, pos, counts, site, new):
    # shared with the jitted kernel in simulator.py (compiled there)
    old = flat[site]
    if old == new:
        return
    if old > 0:
        k = pos[site]
        last = counts[old - 1] - 1
        moved = occ[old - 1, last]
        occ[old - 1, k] = moved
        pos[moved] = k
        counts[old - 1] = last
        pos[site] = -1
    if new > 0:
        k = counts[new - 1]
        occ[new - 1, k] = site
        pos[site] = k
        counts[new - 1] = k + 1
    flat[site] = new
