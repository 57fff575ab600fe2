"""Exact event-driven simulation of the seasonal multitype contact process.

Rather than keeping a Poisson clock per ordered site pair, every occupied
site of species ``i`` carries one clock of rate ``beta_i + delta_i``.  When
it rings the site dies with probability ``delta_i / (beta_i + delta_i)``,
otherwise it sends an offspring to a uniform neighbour, which lands only if
that neighbour is empty.  Summing over occupied neighbours gives flip rate
``beta_i * f_i(x)`` at each empty site, the same law as the arrow-and-cross
construction.  Waiting times that would cross a season boundary (or an
observation time) are discarded and redrawn from there, which is exact
because the rates are constant between boundaries.
"""
from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numba
import numpy as np

from . import lattice
from .lattice import Configuration, LatticeSpec, SeasonalParams

__all__ = [
    "EventRecord",
    "SimState",
    "Trajectory",
    "init_configuration",
    "make_rng",
    "run",
    "quasi_coexistence",
    "majority",
    "coupled_domination_check",
    "format_density_csv",
]

DEATH, BIRTH, SUPPRESSED = 0, 1, 2
KIND_NAMES = {DEATH: "death", BIRTH: "birth", SUPPRESSED: "birth-suppressed"}

STATUS_TIME, STATUS_EVENTS, STATUS_ABSORBED = 0, 1, 2

_set_site = numba.njit(cache=True)(lattice._set_site)


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator used for every run; replica k uses ``seed ^ k``."""
    return np.random.Generator(np.random.Philox(int(seed)))


@numba.njit(cache=True)
def _bookkeeping_mismatch(flat, occ, pos, counts, beta, delta, j):
    S = counts.shape[0]
    recount = np.zeros(S, dtype=np.int64)
    bad = 0
    for x in range(flat.shape[0]):
        s = flat[x]
        if s > 0:
            recount[s - 1] += 1
            if pos[x] < 0 or pos[x] >= counts[s - 1] or occ[s - 1, pos[x]] != x:
                bad += 1
    r_inc = 0.0
    r_re = 0.0
    for i in range(S):
        if recount[i] != counts[i]:
            bad += 1
        r_inc += counts[i] * (beta[i, j] + delta[i, j])
        r_re += recount[i] * (beta[i, j] + delta[i, j])
    if r_inc != r_re:
        bad += 1
    return bad


@numba.njit(cache=True)
def _advance(flat, occ, pos, counts, beta, delta, D, M, lo, w, t, k, t_stop, max_events, rng, counters, last, check):
    """Run events until ``t_stop``, ``max_events`` events, or absorption.

    ``k`` counts completed seasons so ``k & 1`` is the 0-based season label.
    Returns (t, k, events, status, bookkeeping mismatches).
    """
    S = counts.shape[0]
    nb = w * w - 1
    center = lo * w + lo
    n_ev = 0
    bad = 0
    while True:
        if n_ev >= max_events:
            return t, k, n_ev, 1, bad
        j = k & 1
        R = 0.0
        n_occ = 0
        for i in range(S):
            R += counts[i] * (beta[i, j] + delta[i, j])
            n_occ += counts[i]
        if n_occ == 0:
            return t, k, n_ev, 2, bad
        boundary = (k + 1) * D
        if R > 0.0:
            tau = rng.exponential(1.0 / R)
        else:
            tau = np.inf
        if t + tau >= boundary or t + tau >= t_stop:
            if boundary <= t_stop:
                t = boundary
                k += 1
                if t == t_stop:
                    return t, k, n_ev, 0, bad
                continue
            t = t_stop
            return t, k, n_ev, 0, bad
        t += tau

        x = rng.random() * R
        i = 0
        acc = counts[0] * (beta[0, j] + delta[0, j])
        while x >= acc and i < S - 1:
            i += 1
            acc += counts[i] * (beta[i, j] + delta[i, j])
        while counts[i] == 0 or beta[i, j] + delta[i, j] == 0.0:
            i -= 1
        site = occ[i, rng.integers(0, counts[i])]
        b = beta[i, j]
        d = delta[i, j]
        target = site
        if rng.random() * (b + d) < d:
            _set_site(flat, occ, pos, counts, site, 0)
            counters[i, 2] += 1
            kind = 0
        else:
            q = rng.integers(0, nb)
            if q >= center:
                q += 1
            dx = q % w - lo
            dy = q // w - lo
            row = site // M
            col = site % M
            target = ((row + dy) % M) * M + (col + dx) % M
            if flat[target] == 0:
                _set_site(flat, occ, pos, counts, target, i + 1)
                counters[i, 0] += 1
                kind = 1
            else:
                counters[i, 1] += 1
                kind = 2
        last[0] = t
        last[1] = site
        last[2] = target
        last[3] = kind
        last[4] = i + 1
        n_ev += 1
        if check:
            bad += _bookkeeping_mismatch(flat, occ, pos, counts, beta, delta, j)


class EventRecord(NamedTuple):
    time: float
    site: tuple
    target: tuple
    kind: str
    species: int


@dataclass
class SimState:
    """Mutable simulation state; owns its configuration and generator."""

    config: Configuration
    params: SeasonalParams
    spec: LatticeSpec
    rng: np.random.Generator
    t: float = 0.0
    counters: np.ndarray = None
    check_bookkeeping: bool = False
    bookkeeping_errors: int = 0
    events: int = 0

    def __post_init__(self):
        if self.config.M != self.spec.M or self.config.S != self.params.S:
            raise ValueError("configuration does not match the lattice size or species count")
        if self.counters is None:
            self.counters = np.zeros((self.params.S, 3), dtype=np.int64)
        self._season_count = int(math.floor(self.t / self.params.D))
        self._beta = self.params.beta_array
        self._delta = self.params.delta_array
        self._last = np.zeros(5)

    @property
    def season(self) -> int:
        return 1 + (self._season_count & 1)

    def total_rate(self) -> float:
        j = self._season_count & 1
        return float(np.sum(self.config.counts * (self._beta[:, j] + self._delta[:, j])))

    def recomputed_total_rate(self) -> float:
        j = self._season_count & 1
        recount = np.array([np.count_nonzero(self.config.grid == i) for i in range(1, self.params.S + 1)])
        return float(np.sum(recount * (self._beta[:, j] + self._delta[:, j])))

    def _advance(self, t_stop: float, max_events: int) -> int:
        cfg = self.config
        t, k, n, status, bad = _advance(
            cfg.grid.reshape(-1), cfg.occ, cfg.pos, cfg.counts, self._beta, self._delta,
            float(self.params.D), cfg.M, self.spec.window_offset, self.spec.window,
            float(self.t), int(self._season_count), float(t_stop), int(max_events),
            self.rng, self.counters, self._last, self.check_bookkeeping,
        )
        self.t, self._season_count = t, k
        self.events += n
        self.bookkeeping_errors += bad
        return status

    def advance_to(self, t_stop: float, max_events: int = 2**62) -> int:
        """Advance to ``t_stop``; returns a STATUS_* code."""
        if t_stop < self.t:
            raise ValueError(f"cannot go back in time from {self.t} to {t_stop}")
        return self._advance(t_stop, max_events)

    def step(self) -> EventRecord | None:
        """Perform the next event; ``None`` once the system is empty."""
        status = self._advance(math.inf, 1)
        if status == STATUS_ABSORBED:
            return None
        t, site, target, kind, i = self._last
        M = self.config.M
        return EventRecord(t, divmod(int(site), M), divmod(int(target), M), KIND_NAMES[int(kind)], int(i))


def init_configuration(
    spec: LatticeSpec,
    S: int,
    mode: str = "product",
    densities: Sequence[float] | None = None,
    species: int = 1,
    corner: tuple[int, int] = (0, 0),
    rng: np.random.Generator | None = None,
) -> Configuration:
    """Build an initial configuration.

    Modes: ``product`` (independent sites with the given per-species
    densities), ``full`` (every site holds ``species``), ``box`` (one unit box
    of ``species`` at ``corner``), ``point`` (a single ``species`` site at
    ``corner``).
    """
    M = spec.M
    cfg = Configuration.empty(M, S)
    if mode == "product":
        dens = np.zeros(S) if densities is None else np.asarray(densities, dtype=float)
        if dens.shape != (S,):
            raise ValueError(f"need {S} densities, got {dens.shape}")
        if np.any(dens < 0) or dens.sum() > 1.0 + 1e-12:
            raise ValueError(f"densities must be nonnegative and sum to at most 1, got {dens}")
        if dens.sum() > 0:
            if rng is None:
                raise ValueError("product initial condition needs a random generator")
            u = rng.random(M * M)
            edges = np.cumsum(dens)
            states = np.searchsorted(edges, u, side="right") + 1
            states[u >= edges[-1]] = 0
            cfg.grid[:] = states.reshape(M, M)
    elif mode in ("full", "box", "point"):
        if not 1 <= species <= S:
            raise ValueError(f"species {species} out of range 1..{S}")
        if mode == "full":
            cfg.grid[:] = species
        elif mode == "box":
            n = min(spec.L, M)
            rows = (corner[0] + np.arange(n)) % M
            cols = (corner[1] + np.arange(n)) % M
            cfg.grid[np.ix_(rows, cols)] = species
        else:
            cfg.grid[corner[0] % M, corner[1] % M] = species
    else:
        raise ValueError(f"unknown initial condition mode {mode!r}")
    cfg.rebuild_index()
    return cfg


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


def format_density_csv(times: np.ndarray, dens: np.ndarray) -> str:
    """``t,dens_1,...,dens_S,empty`` rows, 12 significant digits."""
    S = dens.shape[1]
    buf = io.StringIO()
    buf.write(",".join(["t"] + [f"dens_{i}" for i in range(1, S + 1)] + ["empty"]) + "\n")
    for t, row in zip(times, dens):
        empty = 1.0 - float(np.sum(row))
        buf.write(",".join([_fmt(t)] + [_fmt(v) for v in row] + [_fmt(max(empty, 0.0))]) + "\n")
    return buf.getvalue()


def format_snapshot(grid: np.ndarray) -> str:
    return "".join("".join(str(int(v)) for v in row) + "\n" for row in grid)


@dataclass
class Trajectory:
    times: np.ndarray
    densities: np.ndarray
    snapshots: list = field(default_factory=list)
    box_counts: np.ndarray | None = None
    counters: np.ndarray | None = None
    absorbed_at: float | None = None
    final: Configuration | None = None
    t_end: float = 0.0
    events: int = 0

    @property
    def S(self) -> int:
        return self.densities.shape[1]

    def empty_fraction(self) -> np.ndarray:
        return 1.0 - self.densities.sum(axis=1)

    def density_at(self, t: float) -> np.ndarray:
        """Densities at time ``t``; zero after absorption."""
        idx = np.searchsorted(self.times, t, side="right") - 1
        if idx < 0:
            raise ValueError(f"time {t} precedes the first sample")
        return self.densities[idx]

    def to_csv(self) -> str:
        return format_density_csv(self.times, self.densities)

    def write(self, out_dir: str, prefix: str = "") -> list[str]:
        os.makedirs(out_dir, exist_ok=True)
        paths = []
        path = os.path.join(out_dir, f"{prefix}densities.csv")
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())
        paths.append(path)
        for n, (t, grid) in enumerate(self.snapshots):
            path = os.path.join(out_dir, f"{prefix}snapshot_{n:04d}.txt")
            with open(path, "w", newline="") as fh:
                fh.write(format_snapshot(grid))
            paths.append(path)
        return paths


def _unit_box_counts(grid: np.ndarray, L: int, S: int) -> np.ndarray:
    M = grid.shape[0]
    nb = M // L
    blocks = grid.reshape(nb, L, nb, L)
    return np.stack([(blocks == i).sum(axis=(1, 3)) for i in range(1, S + 1)], axis=-1)


def run(
    params: SeasonalParams,
    spec: LatticeSpec,
    config: Configuration,
    t_end: float,
    sample_dt: float | None = None,
    snapshot_dt: float | None = None,
    seed: int = 0,
    rng: np.random.Generator | None = None,
    box_counts: bool = False,
    check_bookkeeping: bool = False,
) -> Trajectory:
    """Simulate from ``config`` (left untouched) up to ``t_end``.

    Densities are sampled every ``sample_dt`` (default ``D/20``) starting at 0,
    grid snapshots every ``snapshot_dt`` (default ``D``; pass 0 to disable).
    The run halts early if every site becomes empty.
    """
    if not t_end >= 0:
        raise ValueError(f"t_end must be nonnegative, got {t_end}")
    D = params.D
    sample_dt = D / 20 if sample_dt is None else sample_dt
    snapshot_dt = D if snapshot_dt is None else snapshot_dt
    if not sample_dt > 0:
        raise ValueError(f"sampling interval must be positive, got {sample_dt}")
    if box_counts and spec.M % spec.L:
        raise ValueError("unit-box counts need M to be a multiple of L")
    rng = make_rng(seed) if rng is None else rng
    state = SimState(config.copy(), params, spec, rng, check_bookkeeping=check_bookkeeping)

    n_samples = int(math.floor(t_end / sample_dt + 1e-9)) + 1
    sample_times = sample_dt * np.arange(n_samples)
    snap_times = np.empty(0)
    if snapshot_dt and snapshot_dt > 0:
        snap_times = snapshot_dt * np.arange(int(math.floor(t_end / snapshot_dt + 1e-9)) + 1)
    marks = np.union1d(sample_times, snap_times)
    is_sample = np.isin(marks, sample_times)
    is_snap = np.isin(marks, snap_times)

    times, dens, boxes, snaps = [], [], [], []
    absorbed_at = None
    M2 = float(spec.n_sites)
    for t_mark, smp, snp in zip(marks, is_sample, is_snap):
        status = state.advance_to(t_mark)
        if status == STATUS_ABSORBED:
            absorbed_at = state.t
            break
        if smp:
            times.append(t_mark)
            dens.append(state.config.counts / M2)
            if box_counts:
                boxes.append(_unit_box_counts(state.config.grid, spec.L, params.S))
        if snp:
            snaps.append((float(t_mark), state.config.grid.copy()))

    if absorbed_at is not None:
        # record the empty state once so the trajectory shows the extinction
        times.append(absorbed_at)
        dens.append(np.zeros(params.S))
        if box_counts:
            boxes.append(np.zeros_like(_unit_box_counts(state.config.grid, spec.L, params.S)))
    times_arr = np.array(times)
    if times_arr.size > 1 and np.any(np.diff(times_arr) <= 0):
        # absorption exactly at a sample time
        keep = np.concatenate([[True], np.diff(times_arr) > 0])
        times_arr = times_arr[keep]
        dens = [d for d, k in zip(dens, keep) if k]
        boxes = [b for b, k in zip(boxes, keep) if k] if box_counts else boxes
    return Trajectory(
        times=times_arr,
        densities=np.array(dens).reshape(len(times_arr), params.S),
        snapshots=snaps,
        box_counts=np.array(boxes) if box_counts else None,
        counters=state.counters.copy(),
        absorbed_at=absorbed_at,
        final=state.config,
        t_end=float(t_end),
        events=state.events,
    )


def quasi_coexistence(traj: Trajectory, window: tuple[float, float], threshold: float = 0.02) -> tuple[bool, ...]:
    """Per species: does its density stay >= ``threshold`` on every sample in ``window``?

    After absorption all densities count as zero.
    """
    t0, t1 = window
    if not t1 > t0:
        raise ValueError(f"empty window {window}")
    horizon = traj.t_end if traj.absorbed_at is None else max(traj.t_end, traj.absorbed_at)
    if t0 < 0 or t1 > horizon * (1 + 1e-12):
        raise ValueError(f"window {window} not inside the simulated horizon [0, {horizon}]")
    sel = (traj.times >= t0 - 1e-12) & (traj.times <= t1 + 1e-12)
    if not np.any(sel) and traj.absorbed_at is None:
        raise ValueError(f"no samples inside window {window}")
    mins = traj.densities[sel].min(axis=0) if np.any(sel) else np.zeros(traj.S)
    if traj.absorbed_at is not None and traj.absorbed_at <= t1:
        mins = np.zeros(traj.S)
    return tuple(bool(m >= threshold) for m in mins)


def majority(verdicts: Sequence[Sequence[bool]]) -> tuple[bool, ...]:
    """Per-species strict majority over replicas."""
    arr = np.asarray(verdicts, dtype=bool)
    return tuple(bool(v) for v in arr.sum(axis=0) * 2 > arr.shape[0])


def coupled_domination_check(
    params: SeasonalParams,
    spec: LatticeSpec,
    grid0: np.ndarray,
    focus: int,
    t_end: float,
    seed: int = 0,
) -> tuple[int, int]:
    """Couple a single-species run with a multi-species run through one event stream.

    Arrow-and-cross construction: each site carries, for every species, a
    birth-arrow clock (rate beta, uniform target) and a death clock (rate
    delta), drawn here by uniformisation over the whole torus.  System A
    keeps only species ``focus`` from ``grid0``; system B keeps everything.
    Both read the same marks, so the focus species in B should never occupy
    a site the focus species does not hold in A.  Returns (events applied,
    inclusion violations).
    """
    rng = make_rng(seed)
    M = spec.M
    n = M * M
    a = np.where(np.asarray(grid0).reshape(-1) == focus, focus, 0).astype(np.int8)
    b = np.asarray(grid0).reshape(-1).astype(np.int8).copy()
    beta, delta = params.beta_array, params.delta_array
    w, lo = spec.window, spec.window_offset
    nb = w * w - 1
    center = lo * w + lo
    t, k = 0.0, 0
    events = violations = 0
    while True:
        j = k & 1
        site_rate = float(np.sum(beta[:, j] + delta[:, j]))
        boundary = (k + 1) * params.D
        tau = rng.exponential(1.0 / (n * site_rate)) if site_rate > 0 else math.inf
        if t + tau >= min(boundary, t_end):
            if boundary >= t_end:
                break
            t, k = boundary, k + 1
            continue
        t += tau
        x = int(rng.integers(n))
        marks = np.concatenate([beta[:, j], delta[:, j]])
        m = int(np.searchsorted(np.cumsum(marks), rng.random() * site_rate, side="right"))
        m = min(m, marks.size - 1)
        q = int(rng.integers(nb))
        if q >= center:
            q += 1
        y = ((x // M + q // w - lo) % M) * M + (x % M + q % w - lo) % M
        if m < params.S:
            sp = m + 1
            for g in (a, b):
                if g[x] == sp and g[y] == 0:
                    g[y] = sp
        else:
            sp = m - params.S + 1
            for g in (a, b):
                if g[x] == sp:
                    g[x] = 0
        events += 1
        violations += int(np.any((b == focus) & (a != focus)))
    return events, violations
