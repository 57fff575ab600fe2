"""Run configuration files: sectioned ``key = value`` text, parsed strictly.

Example::

    [lattice]
    M = 200
    L = 100

    [season]
    D = 10

    [species.1]
    beta = 3.0, 1.0
    delta = 1.0

    [init]
    mode = full
    species = 1

    [run]
    t_end = 80
    seed = 7

Sections ``species.1`` ... ``species.S`` must be numbered consecutively.
``delta`` may be one value (both seasons) or two.  Unknown sections or keys
are errors.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace

from .lattice import LatticeSpec, SeasonalParams

__all__ = ["ConfigError", "RunConfig", "BRWConfig", "load_config", "parse_config"]

DEFAULT_M = 400
DEFAULT_L = 200
DEFAULT_D = 10.0
DEFAULT_DEATH = 1.0


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BRWConfig:
    alpha: tuple = (1.0, 1.0)
    D: float = 1.0
    delta: float = 0.0
    kill_T: float | None = None
    t_end: float = 2.0
    sample_dt: float | None = None
    replicas: int = 10000
    start: tuple = (0.0, 0.0)
    box_corner: tuple = (0.0, 0.0)
    box_side: float = 1.0


@dataclass(frozen=True)
class RunConfig:
    M: int
    L: int
    D: float
    beta: tuple
    delta: tuple
    init_mode: str = "product"
    init_densities: tuple | None = None
    init_species: int = 1
    t_end: float | None = None
    sample_dt: float | None = None
    snapshot_dt: float | None = None
    seed: int = 0
    box_counts: bool = False
    window: tuple | None = None
    threshold: float = 0.02
    brw: BRWConfig = field(default_factory=BRWConfig)

    @property
    def S(self) -> int:
        return len(self.beta)

    @property
    def params(self) -> SeasonalParams:
        return SeasonalParams(S=self.S, D=self.D, beta=self.beta, delta=self.delta)

    @property
    def spec(self) -> LatticeSpec:
        return LatticeSpec(self.M, self.L)

    @property
    def horizon(self) -> float:
        return 8 * self.D if self.t_end is None else self.t_end

    @property
    def densities(self) -> tuple:
        if self.init_densities is not None:
            return self.init_densities
        return tuple(1.0 / (self.S + 1) for _ in range(self.S))

    @property
    def coexistence_window(self) -> tuple:
        """Default: periods 2 to 4, clipped to the horizon."""
        if self.window is not None:
            return self.window
        t1 = min(8 * self.D, self.horizon)
        return (min(2 * self.D, t1 / 2), t1)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=seed)

    def validate(self) -> "RunConfig":
        try:
            self.params
            self.spec
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.init_mode not in ("product", "full", "box", "point"):
            raise ConfigError(f"unknown init mode {self.init_mode!r}")
        if self.init_mode == "product":
            d = self.densities
            if len(d) != self.S:
                raise ConfigError(f"init densities need {self.S} values, got {len(d)}")
            if any(v < 0 for v in d) or sum(d) > 1 + 1e-12:
                raise ConfigError(f"init densities must be nonnegative with sum <= 1, got {d}")
        elif not 1 <= self.init_species <= self.S:
            raise ConfigError(f"init species {self.init_species} out of range")
        if not self.horizon >= 0:
            raise ConfigError("t_end must be nonnegative")
        if self.sample_dt is not None and not self.sample_dt > 0:
            raise ConfigError("sample_dt must be positive")
        if self.snapshot_dt is not None and not self.snapshot_dt >= 0:
            raise ConfigError("snapshot_dt must be nonnegative (0 disables snapshots)")
        if not 0 <= self.threshold <= 1:
            raise ConfigError("threshold must lie in [0, 1]")
        return self


_SCHEMA = {
    "lattice": {"M", "L"},
    "season": {"D"},
    "init": {"mode", "densities", "species"},
    "run": {"t_end", "sample_dt", "snapshot_dt", "seed", "box_counts"},
    "coexistence": {"window_start", "window_end", "threshold"},
    "brw": {"alpha", "D", "delta", "kill_T", "t_end", "sample_dt", "replicas", "start", "box_corner", "box_side"},
}
_SPECIES_KEYS = {"beta", "delta"}


def _floats(text: str, where: str) -> tuple:
    try:
        vals = tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"{where}: expected numbers, got {text!r}") from exc
    if not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"{where}: values must be finite")
    return vals


def _one(text: str, where: str, kind=float):
    try:
        v = kind(text)
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {text!r}") from exc
    return v


def _bool(text: str, where: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{where}: expected a boolean, got {text!r}")


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, strict=True, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc

    species = {}
    for sec in cp.sections():
        if sec.startswith("species."):
            try:
                idx = int(sec.split(".", 1)[1])
            except ValueError as exc:
                raise ConfigError(f"bad species section [{sec}]") from exc
            extra = set(cp[sec]) - _SPECIES_KEYS
            if extra:
                raise ConfigError(f"unknown keys in [{sec}]: {sorted(extra)}")
            species[idx] = cp[sec]
        elif sec not in _SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        else:
            extra = set(cp[sec]) - _SCHEMA[sec]
            if extra:
                raise ConfigError(f"unknown keys in [{sec}]: {sorted(extra)}")
    if not species:
        raise ConfigError("at least one [species.N] section is required")
    if sorted(species) != list(range(1, len(species) + 1)):
        raise ConfigError(f"species sections must be numbered 1..S, got {sorted(species)}")

    betas, deaths = [], []
    for i in range(1, len(species) + 1):
        sec = species[i]
        if "beta" not in sec:
            raise ConfigError(f"[species.{i}] needs beta")
        b = _floats(sec["beta"], f"species.{i}.beta")
        if len(b) == 1:
            b = (b[0], b[0])
        d = _floats(sec.get("delta", str(DEFAULT_DEATH)), f"species.{i}.delta")
        if len(d) == 1:
            d = (d[0], d[0])
        if len(b) != 2 or len(d) != 2:
            raise ConfigError(f"[species.{i}] rates need one or two values")
        betas.append(b)
        deaths.append(d)

    get = lambda s, k: cp[s][k] if cp.has_section(s) and k in cp[s] else None  # noqa: E731
    kw = {}
    M = get("lattice", "M")
    L = get("lattice", "L")
    D = get("season", "D")
    if get("init", "mode") is not None:
        kw["init_mode"] = get("init", "mode").strip()
    if get("init", "densities") is not None:
        kw["init_densities"] = _floats(get("init", "densities"), "init.densities")
    if get("init", "species") is not None:
        kw["init_species"] = _one(get("init", "species"), "init.species", int)
    for key in ("t_end", "sample_dt", "snapshot_dt"):
        if get("run", key) is not None:
            kw[key] = _one(get("run", key), f"run.{key}")
    if get("run", "seed") is not None:
        kw["seed"] = _one(get("run", "seed"), "run.seed", int)
    if get("run", "box_counts") is not None:
        kw["box_counts"] = _bool(get("run", "box_counts"), "run.box_counts")
    ws, we = get("coexistence", "window_start"), get("coexistence", "window_end")
    if (ws is None) != (we is None):
        raise ConfigError("coexistence window needs both window_start and window_end")
    if ws is not None:
        kw["window"] = (_one(ws, "coexistence.window_start"), _one(we, "coexistence.window_end"))
    if get("coexistence", "threshold") is not None:
        kw["threshold"] = _one(get("coexistence", "threshold"), "coexistence.threshold")
    if cp.has_section("brw"):
        kw["brw"] = _parse_brw(cp["brw"])

    cfg = RunConfig(
        M=DEFAULT_M if M is None else _one(M, "lattice.M", int),
        L=DEFAULT_L if L is None else _one(L, "lattice.L", int),
        D=DEFAULT_D if D is None else _one(D, "season.D"),
        beta=tuple(betas),
        delta=tuple(deaths),
        **kw,
    )
    return cfg.validate()


def _parse_brw(sec) -> BRWConfig:
    kw = {}
    if "alpha" in sec:
        a = _floats(sec["alpha"], "brw.alpha")
        kw["alpha"] = (a[0], a[0]) if len(a) == 1 else a
        if len(kw["alpha"]) != 2:
            raise ConfigError("brw.alpha needs one or two values")
    for key in ("D", "delta", "t_end", "box_side"):
        if key in sec:
            kw[key] = _one(sec[key], f"brw.{key}")
    for key in ("kill_T", "sample_dt"):
        if key in sec:
            v = sec[key].strip().lower()
            kw[key] = None if v in ("none", "inf", "") else _one(v, f"brw.{key}")
    if "replicas" in sec:
        kw["replicas"] = _one(sec["replicas"], "brw.replicas", int)
    for key in ("start", "box_corner"):
        if key in sec:
            v = _floats(sec[key], f"brw.{key}")
            if len(v) != 2:
                raise ConfigError(f"brw.{key} needs two coordinates")
            kw[key] = v
    cfg = BRWConfig(**kw)
    if cfg.delta < 0 or min(cfg.alpha) < 0 or cfg.D <= 0 or cfg.replicas < 1 or cfg.t_end < 0:
        raise ConfigError("invalid [brw] values")
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
