"""Supports, dead-core certificates, multiplicity counting and the mu sweep."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage
from scipy.sparse.csgraph import connected_components

from . import energy as en
from .eigen import first_eigenvalue
from .grid import ComponentSet, Grid, GridError, closure, hausdorff
from .solve import (
    SolveOptions,
    bump_neighbourhoods,
    distinct_tolerance,
    enumerate_candidates,
    ground_state,
)

# --------------------------------------------------------------------------- supports


def support(u: NDArray, threshold: float | None = None) -> NDArray:
    """Nodes with ``u > threshold``; the default threshold is ``1e-6 ||u||_inf``."""
    u = np.asarray(u, dtype=float)
    if threshold is None:
        threshold = 1e-6 * float(np.max(np.abs(u)))
    elif not threshold > 0:
        raise ValueError("threshold must be positive")
    if not np.any(u):
        return np.zeros(u.shape, dtype=bool)
    return u > threshold


def deadcore_fraction(u: NDArray, region: NDArray, threshold: float | None = None) -> float:
    """Share of ``region`` nodes where ``u <= threshold`` (default ``1e-6 ||u||_inf``)."""
    region = np.asarray(region, dtype=bool)
    if not region.any():
        raise ValueError("empty region")
    u = np.asarray(u, dtype=float)
    if threshold is None:
        threshold = 1e-6 * float(np.max(np.abs(u)))
    return float(np.count_nonzero(u[region] <= threshold)) / float(np.count_nonzero(region))


def central_belt(grid: Grid, a: NDArray, margin: float = 0.25) -> NDArray:
    """Core of the negativity belts that separate positivity regions.

    Takes the connected parts of ``{a < 0}`` that avoid the grid boundary and
    keeps the nodes farther than ``margin`` times the part's largest depth
    from ``{a >= 0}``, so the boundary layer where bumps leak in is left out.
    """
    negative = (np.asarray(a) < 0) & grid.interior
    labels, count = ndimage.label(negative, structure=ndimage.generate_binary_structure(grid.dim, 1))
    dist = ndimage.distance_transform_edt(np.asarray(a) < 0, sampling=grid.h)
    belt = np.zeros(grid.shape, dtype=bool)
    for k in range(1, count + 1):
        part = labels == k
        if ndimage.binary_dilation(part, structure=ndimage.generate_binary_structure(grid.dim, 1))[grid.boundary].any():
            continue
        depth = float(dist[part].max())
        belt |= part & (dist > margin * depth)
    return belt


def count_distinct(fields: list[NDArray], tol_dist: float) -> int:
    """Number of classes of fields linked by sup-distance chains ``<= tol_dist``."""
    n = len(fields)
    if n == 0:
        return 0
    close = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(n):
            close[i, j] = float(np.max(np.abs(fields[i] - fields[j]))) <= tol_dist
    count, _ = connected_components(close, directed=False)
    return int(count)


# --------------------------------------------------------------------------- barrier


@dataclass(frozen=True)
class BarrierSpec:
    """``W = K (|x - x0|^2 - r_in^2)^beta`` on ``r_in < |x - x0| < R``, zero inside."""

    center: tuple
    r_in: float
    R: float
    K: float
    beta: float

    def __post_init__(self):
        if not 0 < self.r_in < self.R:
            raise ValueError("need 0 < r_in < R")
        if not self.K > 0:
            raise ValueError("K must be positive")
        if not self.beta > 1:
            raise ValueError("beta must exceed 1")

    @classmethod
    def for_exponents(cls, p: float, q: float, center, r_in: float, R: float, K: float = 1.0) -> "BarrierSpec":
        return cls(tuple(np.atleast_1d(center).tolist()), r_in, R, K, barrier_beta(p, q))

    def with_height(self, M: float) -> "BarrierSpec":
        """Same shell with ``K`` chosen so that ``W = M`` on the outer sphere."""
        return replace(self, K=M / (self.R**2 - self.r_in**2) ** self.beta)


def barrier_beta(p: float, q: float) -> float:
    if not 1 < q < p:
        raise ValueError("need 1 < q < p")
    return p / (p - q)


def _radius(grid: Grid, spec: BarrierSpec) -> NDArray:
    c = np.broadcast_to(np.asarray(spec.center, dtype=float), (grid.dim,))
    return np.sqrt(np.sum((grid.coords - c) ** 2, axis=-1))


def barrier_field(grid: Grid, spec: BarrierSpec) -> NDArray:
    """The barrier on every node (zero inside the inner ball, the formula beyond)."""
    c = np.broadcast_to(np.asarray(spec.center, dtype=float), (grid.dim,))
    lo, hi = 0.0, float(grid.spec.length)
    if np.any(c - spec.R < lo - 1e-12) or np.any(c + spec.R > hi + 1e-12):
        raise GridError("barrier shell exits the domain")
    r = _radius(grid, spec)
    s = np.maximum(r**2 - spec.r_in**2, 0.0)
    return spec.K * s**spec.beta


def shell_nodes(grid: Grid, spec: BarrierSpec) -> NDArray:
    """Shell nodes where the inequality is checked: one cell off the inner sphere excluded."""
    r = _radius(grid, spec)
    return (r > spec.r_in + grid.h * (1 + 1e-9)) & (r < spec.R - 1e-12) & grid.interior


def _plap(grid: Grid, W: NDArray, p: float) -> NDArray:
    """Discrete ``-Delta_p W`` at every node (the nodal energy gradient)."""
    return en.dirichlet_gradient(grid, W, p) / grid.cell_volume


@dataclass
class BarrierCheck:
    holds: bool
    margin: NDArray
    A0: float
    beta: float


def barrier_margin(grid: Grid, spec: BarrierSpec, A: float, model: en.Problem) -> NDArray:
    """``-Delta_p W + A W^{q-1}`` on the checked shell nodes, NaN elsewhere."""
    W = barrier_field(grid, spec)
    m = _plap(grid, W, model.p) + A * W ** (model.q - 1)
    return np.where(shell_nodes(grid, spec), m, np.nan)


def _holds(grid, spec, A, model) -> bool:
    W = barrier_field(grid, spec)
    lap = _plap(grid, W, model.p)
    nodes = shell_nodes(grid, spec)
    margin = lap[nodes] + A * W[nodes] ** (model.q - 1)
    tol = 1e-12 * float(np.max(np.abs(lap[nodes]), initial=1.0))
    return bool(np.all(margin >= -tol))


def minimal_A(grid: Grid, spec: BarrierSpec, model: en.Problem, rtol: float = 1e-10) -> float:
    """Smallest ``A`` for which the discrete inequality holds, by bisection."""
    if not shell_nodes(grid, spec).any():
        raise GridError("barrier shell contains no checkable node")
    if _holds(grid, spec, 0.0, model):
        return 0.0
    hi = 1.0
    while not _holds(grid, spec, hi, model):
        hi *= 2.0
        if hi > 1e300:
            return math.inf
    lo = hi / 2.0 if hi > 1.0 else 0.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if _holds(grid, spec, mid, model):
            hi = mid
        else:
            lo = mid
    return hi


def barrier_check(spec: BarrierSpec, A: float, model: en.Problem) -> BarrierCheck:
    """Whether ``-Delta_p W >= -A W^{q-1}`` holds on the shell, plus the minimal such A."""
    if model.variant != "pure-q":
        raise en.ModelError("barrier check concerns the pure-q problem")
    grid = model.grid
    margin = barrier_margin(grid, spec, A, model)
    return BarrierCheck(
        holds=_holds(grid, spec, A, model),
        margin=margin,
        A0=minimal_A(grid, spec, model),
        beta=spec.beta,
    )


# --------------------------------------------------------------------------- sweep

COLUMNS_HEAD = ["mu", "m", "m_prime_fd", "m_prime_formula", "lambda1", "n_distinct"]


@dataclass
class SweepRow:
    mu: float
    m: float
    m_prime_fd: float
    m_prime_formula: float
    lambda1: float
    n_distinct: int
    hausdorff: list[float]
    deadcore_fraction: float
    converged: bool = True
    ground: NDArray | None = field(default=None, repr=False)
    candidates: list = field(default_factory=list, repr=False)


@dataclass
class SweepReport:
    rows: list[SweepRow]
    n_components: int

    @property
    def columns(self) -> list[str]:
        tail = [f"hausdorff_{i + 1}" for i in range(self.n_components)]
        return COLUMNS_HEAD + tail + ["deadcore_fraction"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns + ["converged"])
        for r in self.rows:
            values = [r.mu, r.m, r.m_prime_fd, r.m_prime_formula, r.lambda1]
            line = [_fmt(v) for v in values] + [str(r.n_distinct)]
            line += [_fmt(d) for d in r.hausdorff] + [_fmt(r.deadcore_fraction), str(int(r.converged))]
            writer.writerow(line)
        return buf.getvalue()

    def transition(self) -> tuple[float | None, float | None]:
        """Last mu with a unique solution and first mu reaching ``2^n - 1`` of them."""
        full = 2**self.n_components - 1
        last_one = max((r.mu for r in self.rows if r.n_distinct == 1), default=None)
        first_full = min((r.mu for r in self.rows if r.n_distinct == full), default=None)
        return last_one, first_full


def _fmt(v: float) -> str:
    return f"{v:.12e}" if math.isfinite(v) else str(v)


def m_prime_formula(u: NDArray, model: en.Problem) -> float:
    """``(1/q) sum a_minus u^q h^d``."""
    return float(np.sum(model.a_minus * np.abs(u) ** model.q)) * model.grid.cell_volume / model.q


@dataclass(frozen=True)
class SweepOptions:
    fd_step: float = 1e-2  # relative step for the centered difference of m
    warm: bool = True
    eigen: bool = True
    belt_margin: float = 0.25


def _row(model, mu, comps, opts, sopts, init_ground, init_cands, belt, closures):
    mod = model.with_mu(mu)
    ground = ground_state(mod, opts, init=init_ground, comps=comps)
    cands = enumerate_candidates(mod, comps, opts, ground=ground, init=init_cands)
    delta = sopts.fd_step * mu
    up = ground_state(model.with_mu(mu + delta), opts, init=ground.u).energy
    down = ground_state(model.with_mu(mu - delta), opts, init=ground.u).energy
    fd = (up - down) / (2 * delta)
    valid = [c.result.u for c in cands if c.valid]
    tol = distinct_tolerance([c.result.u for c in cands])
    n_distinct = count_distinct(valid, tol) if valid else 0
    hoods = bump_neighbourhoods(mod.grid, comps)
    dh = []
    for hood, clos in zip(hoods, closures):
        bump = np.where(hood, ground.u, 0.0)
        supp = support(bump)
        dh.append(hausdorff(mod.grid, supp, clos) if supp.any() else math.nan)
    lam = first_eigenvalue(mod).lam if sopts.eigen else math.nan
    converged = ground.converged and all(c.result.converged for c in cands)
    return SweepRow(
        mu=mu,
        m=ground.energy,
        m_prime_fd=fd,
        m_prime_formula=m_prime_formula(ground.u, mod),
        lambda1=lam,
        n_distinct=n_distinct,
        hausdorff=dh,
        deadcore_fraction=deadcore_fraction(ground.u, belt) if belt.any() else math.nan,
        converged=converged,
        ground=ground.u,
        candidates=cands,
    )


def _cold_row(args):
    model, mu, comps, opts, sopts, belt, closures = args
    row = _row(model, mu, comps, opts, sopts, None, None, belt, closures)
    row.candidates = []
    return row


def sweep(
    model: en.Problem,
    ladder: list[float],
    comps: ComponentSet,
    opts: SolveOptions = SolveOptions(),
    sweep_opts: SweepOptions = SweepOptions(),
    parallel: int = 1,
) -> SweepReport:
    """Ground state, candidates, eigenvalue and support metrics at every ladder point.

    Serial runs warm-start each mu from the previous solutions when
    ``sweep_opts.warm``; ``parallel > 1`` runs rows in worker processes with
    cold starts, reproducing a serial cold-start run exactly.
    """
    ladder = [float(m) for m in ladder]
    if any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("mu ladder must be strictly increasing")
    if comps.n_components < 1:
        raise ValueError("no positivity component")
    a = model.a_plus - model.a_minus
    belt = central_belt(model.grid, a, sweep_opts.belt_margin)
    closures = [closure(w) for w in comps.omega]
    if parallel > 1:
        cold = replace(sweep_opts, warm=False)
        tasks = [(model, mu, comps, opts, cold, belt, closures) for mu in ladder]
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            rows = list(pool.map(_cold_row, tasks))
        return SweepReport(rows, comps.n_components)
    rows = []
    prev = None
    for mu in ladder:
        init_g = prev.ground if (prev is not None and sweep_opts.warm) else None
        init_c = prev.ground if (prev is not None and sweep_opts.warm) else None
        row = _row(model, mu, comps, opts, sweep_opts, init_g, init_c, belt, closures)
        rows.append(row)
        prev = row
    return SweepReport(rows, comps.n_components)


def concavity_defects(mus: list[float], m: list[float]) -> list[float]:
    """Differences of consecutive secant slopes; nonpositive for concave ``m``."""
    slopes = [(m[k + 1] - m[k]) / (mus[k + 1] - mus[k]) for k in range(len(m) - 1)]
    return [slopes[k + 1] - slopes[k] for k in range(len(slopes) - 1)]
