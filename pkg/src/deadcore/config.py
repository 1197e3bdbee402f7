"""Run configuration: flat ``key = value`` text with ``[section]`` headers.

Example::

    [grid]
    dim = 1
    length = 1.0
    n = 513

    [weight]
    centers = 0.25, 0.75
    amplitudes = 1, 1
    widths = 0.06, 0.06
    offset = 0.3
    # or: file = weight.csv

    [model]
    p = 2
    q = 1.5
    variant = pure-q
    mu = 1

    [ladder]
    mu = 0.5, 1, 2, 4
    # or: start = 0.5, factor = 2, count = 12
    warm = true

    [solver]
    tol_pg = 1e-8
    max_iter = 200000

    [run]
    seed = 0
    out = results
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import energy as en
from .grid import MIN_NODES, BumpWeight, GridError, GridSpec, build_grid, make_weight
from .solve import SolveOptions

SECTIONS = ("grid", "weight", "model", "ladder", "solver", "run", "barrier", "extensions")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration (CLI exit code 2)."""


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _ladder(section) -> tuple[float, ...]:
    if "mu" in section:
        return _floats(section["mu"])
    if {"start", "factor", "count"} <= set(section):
        start, factor = float(section["start"]), float(section["factor"])
        return tuple(start * factor**k for k in range(int(section["count"])))
    raise ConfigError("[ladder] needs 'mu' or start/factor/count")


@dataclass(frozen=True)
class BarrierConfig:
    center: tuple = (0.5,)
    r_in: float = 0.1
    R: float = 0.3
    K: float = 1.0
    A: float = 0.0


@dataclass(frozen=True)
class ExtensionsConfig:
    mode: str = "nehari"  # nehari | r-eq-p | subsuper
    a_plus_scale: float = 1.0
    seeds: tuple[int, ...] = (0, 1, 2)
    gate_count: int = 200


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec = GridSpec()
    weight: BumpWeight | Path = BumpWeight()
    p: float = 2.0
    q: float = 1.5
    r: float | None = None
    variant: str = "pure-q"
    mu: float = 1.0
    ladder: tuple[float, ...] = (1.0,)
    warm: bool = True
    solver: SolveOptions = SolveOptions()
    seed: int = 0
    out: Path = Path("results")
    barrier: BarrierConfig = BarrierConfig()
    extensions: ExtensionsConfig = ExtensionsConfig()
    source: Path | None = field(default=None, compare=False)

    def with_overrides(self, out: str | None = None, seed: int | None = None) -> "RunConfig":
        cfg = self
        if out is not None:
            cfg = replace(cfg, out=Path(out))
        if seed is not None:
            cfg = replace(cfg, seed=int(seed), solver=replace(cfg.solver, seed=int(seed)))
        return cfg

    def build(self):
        """Grid, ``(a, a_plus, a_minus)`` and the problem at ``self.mu``."""
        grid = build_grid(self.grid)
        a, a_plus, a_minus = make_weight(grid, self.weight)
        a_plus = self.extensions.a_plus_scale * a_plus
        model = en.Problem(grid, a_plus, a_minus, p=self.p, q=self.q, mu=self.mu, r=self.r, variant=self.variant)
        return grid, a_plus - a_minus, model


def parse_config(text: str, base: Path | None = None) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    unknown = [s for s in parser.sections() if s not in SECTIONS]
    if unknown:
        raise ConfigError(f"unknown sections: {', '.join(unknown)}")
    base = base or Path(".")
    cfg = RunConfig()
    try:
        if parser.has_section("grid"):
            s = parser["grid"]
            cfg = replace(
                cfg,
                grid=GridSpec(dim=s.getint("dim", 1), length=s.getfloat("length", 1.0), n=s.getint("n", 513)),
            )
        if parser.has_section("weight"):
            s = parser["weight"]
            if "file" in s:
                path = Path(s["file"])
                path = path if path.is_absolute() else base / path
                if not path.exists():
                    raise ConfigError(f"weight file not found: {path}")
                cfg = replace(cfg, weight=path)
            else:
                d = BumpWeight()
                centers = _floats(s["centers"]) if "centers" in s else d.centers
                if cfg.grid.dim == 2 and "centers" in s:
                    flat = centers
                    if len(flat) % 2:
                        raise ConfigError("2D centers need x, y pairs")
                    centers = tuple(zip(flat[::2], flat[1::2]))
                cfg = replace(
                    cfg,
                    weight=BumpWeight(
                        centers=centers,
                        amplitudes=_floats(s["amplitudes"]) if "amplitudes" in s else d.amplitudes,
                        widths=_floats(s["widths"]) if "widths" in s else d.widths,
                        offset=s.getfloat("offset", d.offset),
                    ),
                )
        if parser.has_section("model"):
            s = parser["model"]
            r = s.get("r")
            cfg = replace(
                cfg,
                p=s.getfloat("p", cfg.p),
                q=s.getfloat("q", cfg.q),
                r=float(r) if r not in (None, "", "none") else None,
                variant=s.get("variant", cfg.variant),
                mu=s.getfloat("mu", cfg.mu),
            )
        if parser.has_section("ladder"):
            s = parser["ladder"]
            cfg = replace(cfg, ladder=_ladder(s), warm=s.getboolean("warm", True))
        if parser.has_section("solver"):
            s = parser["solver"]
            eps = s.get("eps_reg")
            cfg = replace(
                cfg,
                solver=SolveOptions(
                    tol_pg=s.getfloat("tol_pg", 1e-8),
                    max_iter=s.getint("max_iter", 200_000),
                    eps_reg=float(eps) if eps not in (None, "", "auto") else None,
                ),
            )
        if parser.has_section("run"):
            s = parser["run"]
            seed = s.getint("seed", 0)
            cfg = replace(cfg, seed=seed, out=Path(s.get("out", "results")))
        cfg = replace(cfg, solver=replace(cfg.solver, seed=cfg.seed))
        if parser.has_section("barrier"):
            s = parser["barrier"]
            d = BarrierConfig()
            cfg = replace(
                cfg,
                barrier=BarrierConfig(
                    center=_floats(s["center"]) if "center" in s else d.center,
                    r_in=s.getfloat("r_in", d.r_in),
                    R=s.getfloat("R", d.R),
                    K=s.getfloat("K", d.K),
                    A=s.getfloat("A", d.A),
                ),
            )
        if parser.has_section("extensions"):
            s = parser["extensions"]
            d = ExtensionsConfig()
            cfg = replace(
                cfg,
                extensions=ExtensionsConfig(
                    mode=s.get("mode", d.mode),
                    a_plus_scale=s.getfloat("a_plus_scale", d.a_plus_scale),
                    seeds=tuple(int(v) for v in _floats(s["seeds"])) if "seeds" in s else d.seeds,
                    gate_count=s.getint("gate_count", d.gate_count),
                ),
            )
    except (KeyError, ValueError, GridError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if cfg.grid.dim not in (1, 2):
        raise ConfigError(f"dim must be 1 or 2, got {cfg.grid.dim}")
    if cfg.grid.n < MIN_NODES:
        raise ConfigError(f"n too small: need at least {MIN_NODES} nodes per axis, got {cfg.grid.n}")
    if not cfg.grid.length > 0:
        raise ConfigError(f"nonpositive extent {cfg.grid.length}")
    if not cfg.ladder:
        raise ConfigError("empty mu ladder")
    if any(b <= a for a, b in zip(cfg.ladder, cfg.ladder[1:])):
        raise ConfigError("mu ladder must be strictly increasing")
    if any(m < 0 for m in cfg.ladder):
        raise ConfigError("mu values must be nonnegative")
    if cfg.extensions.mode not in ("nehari", "r-eq-p", "subsuper"):
        raise ConfigError(f"unknown extensions mode {cfg.extensions.mode!r}")
    if cfg.variant not in en.VARIANTS:
        raise ConfigError(f"unknown variant {cfg.variant!r}")
    if not 1 < cfg.q < cfg.p:
        raise ConfigError(f"need 1 < q < p, got q={cfg.q}, p={cfg.p}")
    if cfg.variant == "q-plus-r" and (cfg.r is None or cfg.r < cfg.p):
        raise ConfigError("q-plus-r needs r >= p")
    if not np.isfinite(cfg.extensions.a_plus_scale) or cfg.extensions.a_plus_scale < 0:
        raise ConfigError("a_plus_scale must be a nonnegative number")


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    cfg = parse_config(path.read_text(), base=path.parent)
    return replace(cfg, source=path)
