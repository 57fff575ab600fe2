"""Parameter sweeps combining mean-field verdicts with replicated simulations."""
from __future__ import annotations

import csv
import io
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .config import ConfigError, RunConfig
from .invasibility import corollary3_check, theorem1_check
from .meanfield import single_species_survives
from .simulator import Trajectory, init_configuration, make_rng, quasi_coexistence, run

__all__ = ["simulate_config", "parse_grid", "apply_key", "sweep_point", "run_sweep", "rows_to_csv"]

_RATE_KEYS = {"beta1": ("beta", 0), "beta2": ("beta", 1), "delta1": ("delta", 0), "delta2": ("delta", 1)}


def simulate_config(cfg: RunConfig, seed: int | None = None) -> Trajectory:
    seed = cfg.seed if seed is None else seed
    rng = make_rng(seed)
    init = init_configuration(
        cfg.spec, cfg.S, cfg.init_mode, densities=cfg.densities, species=cfg.init_species, rng=rng
    )
    return run(
        cfg.params, cfg.spec, init, cfg.horizon,
        sample_dt=cfg.sample_dt, snapshot_dt=cfg.snapshot_dt, rng=rng, box_counts=cfg.box_counts,
    )


def parse_grid(text: str) -> tuple[str, np.ndarray]:
    """``key=start:stop:num`` or ``key=v1,v2,...``."""
    if "=" not in text:
        raise ConfigError(f"grid axis {text!r} must look like key=start:stop:num")
    key, vals = (s.strip() for s in text.split("=", 1))
    try:
        if ":" in vals:
            a, b, n = vals.split(":")
            values = np.linspace(float(a), float(b), int(n))
        else:
            values = np.array([float(v) for v in vals.split(",") if v.strip()])
    except ValueError as exc:
        raise ConfigError(f"cannot parse grid values {vals!r}") from exc
    if values.size == 0:
        raise ConfigError(f"grid axis {key} has no values")
    return key, values


def apply_key(cfg: RunConfig, key: str, value: float) -> RunConfig:
    """Set ``season.D`` or ``species.N.{beta1,beta2,delta1,delta2}``."""
    if key == "season.D":
        return replace(cfg, D=float(value)).validate()
    parts = key.split(".")
    if len(parts) != 3 or parts[0] != "species" or parts[2] not in _RATE_KEYS:
        raise ConfigError(f"unsupported sweep key {key!r}")
    try:
        i = int(parts[1])
    except ValueError as exc:
        raise ConfigError(f"bad species index in {key!r}") from exc
    if not 1 <= i <= cfg.S:
        raise ConfigError(f"species {i} out of range in {key!r}")
    field_name, j = _RATE_KEYS[parts[2]]
    table = [list(r) for r in getattr(cfg, field_name)]
    table[i - 1][j] = float(value)
    return replace(cfg, **{field_name: tuple(tuple(r) for r in table)}).validate()


def _replica(cfg: RunConfig, k: int) -> tuple:
    traj = simulate_config(cfg, seed=cfg.seed ^ k)
    qc = quasi_coexistence(traj, cfg.coexistence_window, cfg.threshold)
    final = traj.densities[-1] if traj.absorbed_at is None else np.zeros(cfg.S)
    return qc, tuple(float(v) for v in final)


def sweep_point(cfg: RunConfig, replicas: int, executor=None) -> dict:
    """One output row: mean-field verdicts and simulated quasi-coexistence fractions."""
    row = {}
    params = cfg.params
    for i in range(1, cfg.S + 1):
        row[f"mf_survive_{i}"] = single_species_survives(params, i)
    if cfg.S == 2:
        rep = theorem1_check(params)
        row["theorem1_verdict"] = rep.verdict
        row["theorem1_margin_1"] = rep.pairs[0].margin
        row["theorem1_margin_2"] = rep.pairs[1].margin
        c3 = corollary3_check(params, theorem=rep)
        row["corollary3_verdict"] = c3.verdict if c3.applicable else None
    if executor is None:
        results = [_replica(cfg, k) for k in range(replicas)]
    else:
        results = list(executor.map(_replica, itertools.repeat(cfg, replicas), range(replicas)))
    qcs = np.array([r[0] for r in results], dtype=bool)
    finals = np.array([r[1] for r in results])
    row["replicas"] = replicas
    row["qc_fraction"] = float(np.all(qcs, axis=1).mean())
    for i in range(cfg.S):
        row[f"qc_fraction_{i + 1}"] = float(qcs[:, i].mean())
        row[f"surv_fraction_{i + 1}"] = float((finals[:, i] > 0).mean())
        row[f"dens_{i + 1}"] = float(finals[:, i].mean())
    return row


def run_sweep(cfg: RunConfig, axes: list[tuple[str, np.ndarray]], replicas: int, jobs: int = 1) -> list[dict]:
    if not 1 <= len(axes) <= 2:
        raise ConfigError("a sweep grid has one or two axes")
    if replicas < 1:
        raise ConfigError("replicas must be at least 1")
    keys = [k for k, _ in axes]
    points = list(itertools.product(*[v for _, v in axes]))
    configs = []
    for pt in points:
        c = cfg
        for k, v in zip(keys, pt):
            c = apply_key(c, k, v)
        configs.append(c)
    rows = []
    executor = ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else None
    try:
        for pt, c in zip(points, configs):
            row = {k: float(v) for k, v in zip(keys, pt)}
            row.update(sweep_point(c, replicas, executor))
            rows.append(row)
    finally:
        if executor is not None:
            executor.shutdown()
    return rows


def _fmt(v) -> str:
    if v is None:
        return "na"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".12g")
    return str(v)


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(v) for k, v in r.items()})
    return buf.getvalue()
