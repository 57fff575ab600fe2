"""Periodic branching random walk on the plane, optionally killed outside a square.

Particles do not interact: each gives birth at the seasonal rate
``alpha(t)`` (offspring uniform on ``parent + [-1, 1]^2``) and dies at rate
``delta``.  With a kill square ``[-h, h]^2`` (``h = sqrt(T)``) offspring
landing outside are discarded.  Used as an independent check on the
early-time lattice dynamics and on the expected-count identity

    E[#particles in A at t] = exp(int_0^t (alpha - delta)) * P(killed walk in A at t)

where the walk jumps at rate ``alpha(t)`` with the same displacement law.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy.stats import norm

from .simulator import make_rng

__all__ = [
    "PeriodicSchedule",
    "BRWResult",
    "BatchResult",
    "IdentityReport",
    "brw_run",
    "brw_batch",
    "expected_count",
    "killed_walk_batch",
    "killed_count_identity_test",
]

DEFAULT_CAP = 10**7


@dataclass(frozen=True)
class PeriodicSchedule:
    """Birth rate ``alpha1`` on ``[2nD, (2n+1)D)`` and ``alpha2`` otherwise."""

    alpha1: float
    alpha2: float
    D: float = 1.0

    def __post_init__(self):
        if not (self.alpha1 >= 0 and self.alpha2 >= 0):
            raise ValueError("birth rates must be nonnegative")
        if not self.D > 0:
            raise ValueError("season length must be positive")

    @classmethod
    def constant(cls, b: float) -> "PeriodicSchedule":
        return cls(b, b, 1.0)

    def rate(self, t: float) -> float:
        return self.alpha1 if math.fmod(t, 2 * self.D) < self.D else self.alpha2

    def integral(self, t: float) -> float:
        """Exact integral of alpha over [0, t]."""
        periods, rem = divmod(t, 2 * self.D)
        full = periods * (self.alpha1 + self.alpha2) * self.D
        if rem <= self.D:
            return full + self.alpha1 * rem
        return full + self.alpha1 * self.D + self.alpha2 * (rem - self.D)


def expected_count(schedule: PeriodicSchedule, delta: float, t: float) -> float:
    """Mean unkilled population per initial particle at time ``t``."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    return math.exp(schedule.integral(t) - delta * t)


@numba.njit(cache=True)
def _brw_one(rng, a1, a2, D, delta, half, xs0, ys0, sample_times, cap, counts_out):
    """One replica; fills ``counts_out`` at each sample time.

    Returns (xs, ys, n, capped).
    """
    size = max(64, 2 * xs0.shape[0])
    xs = np.empty(size)
    ys = np.empty(size)
    n = xs0.shape[0]
    xs[:n] = xs0
    ys[:n] = ys0
    t = 0.0
    k = 0
    m = 0
    n_samples = sample_times.shape[0]
    while m < n_samples:
        alpha = a1 if (k & 1) == 0 else a2
        boundary = (k + 1) * D
        t_stop = sample_times[m]
        R = n * (alpha + delta)
        tau = rng.exponential(1.0 / R) if R > 0 else np.inf
        if t + tau >= boundary or t + tau >= t_stop:
            if boundary <= t_stop:
                t = boundary
                k += 1
                if t < t_stop:
                    continue
            else:
                t = t_stop
            counts_out[m] = n
            m += 1
            continue
        t += tau
        p = rng.integers(0, n)
        if rng.random() * (alpha + delta) < delta:
            n -= 1
            xs[p] = xs[n]
            ys[p] = ys[n]
        else:
            x = xs[p] + 2.0 * rng.random() - 1.0
            y = ys[p] + 2.0 * rng.random() - 1.0
            if abs(x) > half or abs(y) > half:
                continue
            if n == cap:
                for r in range(m, n_samples):
                    counts_out[r] = -1
                return xs[:n], ys[:n], n, True
            if n == xs.shape[0]:
                grow = min(2 * n, cap)
                nx = np.empty(grow)
                ny = np.empty(grow)
                nx[:n] = xs[:n]
                ny[:n] = ys[:n]
                xs = nx
                ys = ny
            xs[n] = x
            ys[n] = y
            n += 1
    return xs[:n], ys[:n], n, False


@numba.njit(cache=True)
def _brw_many(rng, a1, a2, D, delta, half, xs0, ys0, t_end, cap, box, n_rep, finals, in_box, capped):
    times = np.array([t_end])
    out = np.zeros(1, dtype=np.int64)
    for r in range(n_rep):
        xs, ys, n, cp = _brw_one(rng, a1, a2, D, delta, half, xs0, ys0, times, cap, out)
        capped[r] = cp
        finals[r] = n
        c = 0
        for q in range(n):
            if box[0] <= xs[q] < box[1] and box[2] <= ys[q] < box[3]:
                c += 1
        in_box[r] = c


@numba.njit(cache=True)
def _walks(rng, a1, a2, D, half, x0, y0, t_end, box, n_rep):
    hits = 0
    for r in range(n_rep):
        x = x0
        y = y0
        t = 0.0
        k = 0
        alive = True
        while True:
            alpha = a1 if (k & 1) == 0 else a2
            boundary = (k + 1) * D
            tau = rng.exponential(1.0 / alpha) if alpha > 0 else np.inf
            if t + tau >= boundary or t + tau >= t_end:
                if boundary < t_end:
                    t = boundary
                    k += 1
                    continue
                break
            t += tau
            x += 2.0 * rng.random() - 1.0
            y += 2.0 * rng.random() - 1.0
            if abs(x) > half or abs(y) > half:
                alive = False
                break
        if alive and box[0] <= x < box[1] and box[2] <= y < box[3]:
            hits += 1
    return hits


def _half_side(T: float | None) -> float:
    if T is None or math.isinf(T):
        return math.inf
    if not T > 0:
        raise ValueError(f"kill-square parameter must be positive, got {T}")
    return math.sqrt(T)


@dataclass
class BRWResult:
    times: np.ndarray
    counts: np.ndarray
    positions: np.ndarray
    capped: bool

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,count\n")
        for t, c in zip(self.times, self.counts):
            buf.write(f"{format(float(t), '.12g')},{int(c)}\n")
        return buf.getvalue()


def brw_run(
    schedule: PeriodicSchedule,
    delta: float,
    start,
    t_end: float,
    kill_T: float | None = None,
    sample_dt: float | None = None,
    seed: int = 0,
    rng: np.random.Generator | None = None,
    cap: int = DEFAULT_CAP,
) -> BRWResult:
    """Simulate one replica from ``start`` (sequence of (x, y) positions).

    ``kill_T=None`` means no killing.  Counts are reported every
    ``sample_dt`` (default: only at 0 and ``t_end``).  A population reaching
    ``cap`` stops the run with ``capped=True`` and counts of -1 afterwards.
    """
    if delta < 0:
        raise ValueError("death rate must be nonnegative")
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    half = _half_side(kill_T)
    start = np.asarray(start, dtype=np.float64).reshape(-1, 2)
    if np.any(np.abs(start) > half):
        raise ValueError("start positions must lie inside the kill square")
    if sample_dt is None:
        times = np.array([0.0, t_end]) if t_end > 0 else np.array([0.0])
    else:
        times = sample_dt * np.arange(int(math.floor(t_end / sample_dt + 1e-9)) + 1)
    rng = make_rng(seed) if rng is None else rng
    counts = np.zeros(times.size, dtype=np.int64)
    xs, ys, n, capped = _brw_one(
        rng, schedule.alpha1, schedule.alpha2, schedule.D, float(delta), half,
        start[:, 0].copy(), start[:, 1].copy(), times, int(cap), counts,
    )
    return BRWResult(times, counts, np.column_stack([xs, ys]), bool(capped))


@dataclass
class BatchResult:
    finals: np.ndarray
    in_box: np.ndarray
    n_capped: int

    @property
    def mean(self) -> float:
        return float(self.finals.mean())

    @property
    def stderr(self) -> float:
        return float(self.finals.std(ddof=1) / math.sqrt(self.finals.size))


def _box_bounds(corner, side) -> np.ndarray:
    return np.array([corner[0], corner[0] + side, corner[1], corner[1] + side], dtype=np.float64)


def brw_batch(
    schedule: PeriodicSchedule,
    delta: float,
    t: float,
    replicas: int,
    start=((0.0, 0.0),),
    kill_T: float | None = None,
    box=((0.0, 0.0), 1.0),
    seed: int = 0,
    cap: int = DEFAULT_CAP,
) -> BatchResult:
    """Independent replicas; final population and occupancy of ``box`` at ``t``.

    Capped replicas are dropped from the returned arrays and counted.
    """
    half = _half_side(kill_T)
    start = np.asarray(start, dtype=np.float64).reshape(-1, 2)
    rng = make_rng(seed)
    finals = np.zeros(replicas, dtype=np.int64)
    in_box = np.zeros(replicas, dtype=np.int64)
    capped = np.zeros(replicas, dtype=np.bool_)
    _brw_many(
        rng, schedule.alpha1, schedule.alpha2, schedule.D, float(delta), half,
        start[:, 0].copy(), start[:, 1].copy(), float(t), int(cap), _box_bounds(*box),
        int(replicas), finals, in_box, capped,
    )
    ok = ~capped
    return BatchResult(finals[ok], in_box[ok], int(capped.sum()))


def killed_walk_batch(
    schedule: PeriodicSchedule, T: float | None, x, box, t: float, replicas: int, seed: int = 0
) -> int:
    """How many of ``replicas`` killed walks from ``x`` sit in ``box`` at time ``t``."""
    rng = make_rng(seed)
    return int(_walks(rng, schedule.alpha1, schedule.alpha2, schedule.D, _half_side(T),
                      float(x[0]), float(x[1]), float(t), _box_bounds(*box), int(replicas)))


@dataclass
class IdentityReport:
    particles_mean: float
    particles_ci: tuple
    walk_mean: float
    walk_ci: tuple
    walk_probability: float
    prefactor: float
    replicas: int
    n_capped: int
    degenerate: bool
    passed: bool

    def to_text(self) -> str:
        rows = {
            "particles_mean": self.particles_mean,
            "particles_ci_low": self.particles_ci[0],
            "particles_ci_high": self.particles_ci[1],
            "walk_mean": self.walk_mean,
            "walk_ci_low": self.walk_ci[0],
            "walk_ci_high": self.walk_ci[1],
            "walk_probability": self.walk_probability,
            "prefactor": self.prefactor,
            "replicas": self.replicas,
            "capped": self.n_capped,
            "degenerate": "true" if self.degenerate else "false",
            "pass": "true" if self.passed else "false",
        }
        return "".join(f"{k} = {format(v, '.12g') if isinstance(v, float) else v}\n" for k, v in rows.items())


def killed_count_identity_test(
    schedule: PeriodicSchedule,
    delta: float,
    T: float | None,
    x,
    box,
    t: float,
    replicas: int,
    seed: int = 0,
    level: float = 0.99,
) -> IdentityReport:
    """Compare the two sides of the expected-count identity by independent Monte Carlo.

    ``box`` is ``(corner, side)``.  Passes when the two ``level`` confidence
    intervals overlap.  Boxes the walk never reaches are flagged degenerate.
    """
    half = _half_side(T)
    corner, side = box
    if abs(x[0]) > half or abs(x[1]) > half:
        raise ValueError("start point must lie inside the kill square")
    if min(corner) < -half or max(corner) + side > half:
        raise ValueError("target box must lie inside the kill square")
    z = float(norm.ppf(0.5 + level / 2))

    left = brw_batch(schedule, delta, t, replicas, start=(tuple(x),), kill_T=T, box=box, seed=seed)
    n_left = left.in_box.size
    lm = float(left.in_box.mean()) if n_left else 0.0
    lse = float(left.in_box.std(ddof=1) / math.sqrt(n_left)) if n_left > 1 else 0.0

    hits = killed_walk_batch(schedule, T, x, box, t, replicas, seed=seed ^ 1)
    p = hits / replicas
    pref = expected_count(schedule, delta, t)
    pse = math.sqrt(p * (1 - p) / replicas)
    rm = pref * p
    left_ci = (lm - z * lse, lm + z * lse)
    right_ci = (pref * (p - z * pse), pref * (p + z * pse))
    degenerate = hits == 0 and lm == 0.0
    overlap = left_ci[0] <= right_ci[1] and right_ci[0] <= left_ci[1]
    return IdentityReport(
        particles_mean=lm,
        particles_ci=left_ci,
        walk_mean=rm,
        walk_ci=right_ci,
        walk_probability=p,
        prefactor=pref,
        replicas=replicas,
        n_capped=left.n_capped,
        degenerate=degenerate,
        passed=bool(overlap) and not degenerate,
    )
