"""Constrained nonnegative minimization, ground states, bump enumeration.

A zero mask ``M`` selects the admissible set ``{u >= 0, u = 0 on M and on the
boundary}``; its unique minimizer is what the multiplicity analysis builds on.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy import sparse

from . import energy as en
from .fiber import optimal_scale
from .grid import ComponentSet, Grid, default_eps0, dilate, pairwise_disjoint
from .optim import BandedMetric, SparseMetric, minimize_box as _minimize_box


class SolveError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolveOptions:
    tol_pg: float = 1e-8
    max_iter: int = 200_000
    eps_reg: float | None = None  # None: 1e-8 for p < 2, 0 otherwise
    seed: int = 0
    noise: float = 0.01
    keep_history: bool = False

    def __post_init__(self):
        if not self.tol_pg > 0:
            raise ValueError("tol_pg must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    def reg_for(self, p: float) -> float:
        if self.eps_reg is not None:
            return self.eps_reg
        return 1e-8 if p < 2 else 0.0


@dataclass
class SolveResult:
    u: NDArray
    energy: float
    pg_norm: float
    res_sup: float
    valid: bool
    iterations: int
    converged: bool
    zero_mask: NDArray
    mu: float = 0.0
    history: list[float] = field(default_factory=list, repr=False)
    message: str = ""

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.u)))


# --------------------------------------------------------------------------- objective


class Objective:
    """Discrete energy of ``model`` as ``u -> (energy, nodal gradient, rounding scale)``.

    ``linear`` adds ``-sum linear * u * h^d`` (torsion-type forcing).  The
    ``metric`` method supplies the convex part of the Hessian used to
    precondition the descent direction.
    """

    _FLOOR = 1e-100
    _DELTA = 1e-4

    def __init__(self, model: en.Problem, eps_reg: float = 0.0, linear: NDArray | None = None):
        self.model = model
        self.grid = model.grid
        self.eps_reg = eps_reg
        self.linear = linear
        self.powers = [model.q] + ([] if model.r_exponent is None else [model.r_exponent])
        self.absorb = np.maximum(-model.a_mu, 0.0)

    def __call__(self, u: NDArray) -> tuple[float, NDArray, float]:
        grid, model = self.grid, self.model
        vol, p, a = grid.cell_volume, model.p, model.a_mu
        mag2 = en._sq_magnitude(en._cell_differences(grid, u))
        f_dir = float(np.sum(mag2 ** (p / 2))) * vol / p
        f, scale = f_dir, f_dir
        g = en.dirichlet_gradient(grid, u, p, self.eps_reg) / vol
        au = np.abs(u)
        sgn = np.sign(u)
        for s in self.powers:
            pot = a * au**s
            f -= float(np.sum(pot)) * vol / s
            scale += float(np.sum(np.abs(pot))) * vol / s
            g -= a * sgn * au ** (s - 1)
        if self.linear is not None:
            lin = self.linear * u
            f -= float(np.sum(lin)) * vol
            scale += float(np.sum(np.abs(lin))) * vol
            g -= self.linear
        return f, g, scale

    def change(self, u: NDArray, v: NDArray) -> float:
        """``energy(v) - energy(u)`` summed term by term.

        Each power difference is formed as ``x^s * expm1(s * log1p(dx / x))``,
        accurate relative to the change itself rather than to the energy.
        """
        grid, model = self.grid, self.model
        vol, p, a = grid.cell_volume, model.p, model.a_mu
        du = v - u
        d_old = en._cell_differences(grid, u)
        d_step = en._cell_differences(grid, du)
        mag2 = en._sq_magnitude(d_old)
        dmag2 = d_step[0] * (2 * d_old[0] + d_step[0])
        for do, ds in zip(d_old[1:], d_step[1:]):
            dmag2 = dmag2 + ds * (2 * do + ds)
        total = float(np.sum(_power_change(mag2, dmag2, p / 2))) * vol / p
        au = np.abs(u)
        dau = np.abs(v) - au
        for s in self.powers:
            total -= float(np.sum(a * _power_change(au, dau, s))) * vol / s
        if self.linear is not None:
            total -= float(np.sum(self.linear * du)) * vol
        return total

    def metric(self, u: NDArray):
        grid, p = self.grid, self.model.p
        h2 = grid.h**2
        diffs = en._cell_differences(grid, u)
        mag2 = en._sq_magnitude(diffs)
        if p == 2:
            w = np.ones_like(mag2)
        else:
            delta2 = (self._DELTA * np.sqrt(float(np.max(mag2)))) ** 2 + 1e-300
            w = (p - 1) * (mag2 + delta2) ** ((p - 2) / 2)
        w = w / h2
        au = np.maximum(np.abs(u), self._FLOOR)
        diag = np.zeros(grid.shape)
        for s in self.powers:
            diag += self.absorb * (s - 1) * au ** (s - 2)
        if grid.dim == 1:
            return BandedMetric(w, diag)
        return SparseMetric(_assemble_2d(grid.n, w, diag))


def _power_change(x: NDArray, dx: NDArray, s: float) -> NDArray:
    """``(x + dx)^s - x^s`` for ``x, x + dx >= 0`` without cancellation."""
    out = np.empty_like(x)
    pos = x > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(pos, dx / np.where(pos, x, 1.0), 0.0)
        safe = pos & (ratio > -1)
        out[safe] = x[safe] ** s * np.expm1(s * np.log1p(ratio[safe]))
    rest = ~safe
    out[rest] = np.maximum(x[rest] + dx[rest], 0.0) ** s - x[rest] ** s
    return out


def _assemble_2d(n: int, w: NDArray, diag: NDArray):
    """Weighted 5-point operator from cell weights (x-edge and y-edge per cell)."""
    idx = np.arange(n * n).reshape(n, n)
    rows, cols, vals = [], [], []
    for a_idx, b_idx in ((idx[:-1, :-1], idx[1:, :-1]), (idx[:-1, :-1], idx[:-1, 1:])):
        i, j, ww = a_idx.ravel(), b_idx.ravel(), w.ravel()
        rows += [i, j, i, j]
        cols += [i, j, j, i]
        vals += [ww, ww, -ww, -ww]
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    return sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n * n, n * n)
    )


def default_init(model: en.Problem, seed: int, noise: float = 0.01) -> NDArray:
    """``a_plus`` scaled to sup-norm one, perturbed by seeded relative noise of size ``noise``.

    The perturbation is multiplicative so the start stays inside ``{a > 0}``
    and keeps a negative-energy direction however large mu is.
    """
    rng = np.random.default_rng(seed)
    base = model.a_plus / max(float(np.max(model.a_plus)), 1e-300)
    return base * (1.0 + noise * rng.random(model.grid.shape))


def random_init(grid: Grid, seed: int) -> NDArray:
    return np.random.default_rng(seed).random(grid.shape)


def _result(model, u, fixed, box, zero_mask) -> SolveResult:
    _, res_sup = en.residual(u, model)
    converged = bool(box.converged)
    return SolveResult(
        u=u,
        energy=en.total_energy(u, model),
        pg_norm=box.pg_norm,
        res_sup=res_sup,
        valid=converged and res_sup <= model.tol_res,
        iterations=box.iterations,
        converged=converged,
        zero_mask=zero_mask,
        mu=model.mu,
        history=box.history,
        message=box.message,
    )


def _fiber_start(model, x0, fixed, lower, upper, linear) -> NDArray:
    """Move ``x0`` along its ray to the negative-energy point of the fiber.

    Starts far above the solution scale otherwise make the first projected
    step overshoot onto the trivial critical point ``u = 0``.  A direction
    with no such point is first cut down to ``{a_mu > 0}``.
    """
    x = np.array(x0, dtype=float)
    x[fixed] = 0.0
    if np.isscalar(lower) and lower == 0 and np.isscalar(upper) and np.isinf(upper):
        x = np.maximum(x, 0.0)
        t = optimal_scale(x, model, linear)
        if t is None and linear is None:
            x = np.where(model.a_mu > 0, x, 0.0)
            t = optimal_scale(x, model, linear) if np.any(x) else None
        if t is not None and np.isfinite(t) and t > 0:
            x *= t
    return x


def minimize_box(
    model: en.Problem,
    zero_mask: NDArray | None,
    opts: SolveOptions,
    init: NDArray | None,
    lower: NDArray | float = 0.0,
    upper: NDArray | float = np.inf,
    linear: NDArray | None = None,
    rescale: bool = True,
) -> SolveResult:
    grid = model.grid
    zero_mask = grid.empty_mask() if zero_mask is None else np.asarray(zero_mask, dtype=bool)
    fixed = zero_mask | grid.boundary
    x0 = default_init(model, opts.seed, opts.noise) if init is None else np.asarray(init, dtype=float)
    if rescale:
        x0 = _fiber_start(model, x0, fixed, lower, upper, linear)
    objective = Objective(model, opts.reg_for(model.p), linear)

    def run(start):
        return _minimize_box(
            objective,
            start,
            fixed,
            lower=lower,
            upper=upper,
            weight=grid.cell_volume,
            tol=opts.tol_pg,
            max_iter=opts.max_iter,
            keep_history=opts.keep_history,
        )

    box = run(x0)
    if rescale and not np.any(box.x) and _has_descent_at_zero(model, fixed, linear):
        # zero is a critical point but never the minimizer here; restart closer
        box = run(_fiber_start(model, 1e-3 * x0, fixed, lower, upper, linear))
        if not np.any(box.x):
            box.converged = False
            box.message = "collapsed onto the zero field"
    return _result(model, box.x, fixed, box, zero_mask)


def _has_descent_at_zero(model, fixed, linear) -> bool:
    free = ~fixed
    if linear is not None and np.any(linear[free] > 0):
        return True
    return bool(np.any(model.a_mu[free] > 0))


def minimize_constrained(
    model: en.Problem,
    zero_mask: NDArray | None = None,
    opts: SolveOptions = SolveOptions(),
    init: NDArray | str | None = None,
) -> SolveResult:
    """Unique nonnegative minimizer of the energy over fields vanishing on ``zero_mask``.

    ``init`` is a field, ``"random"`` (uniform noise from ``opts.seed``) or
    None for the default ``a_plus``-shaped start.
    """
    if isinstance(init, str):
        if init != "random":
            raise ValueError(f"unknown init {init!r}")
        init = random_init(model.grid, opts.seed)
    return minimize_box(model, zero_mask, opts, init)


# --------------------------------------------------------------------------- ground states


def ground_state(
    model: en.Problem,
    opts: SolveOptions = SolveOptions(),
    init: NDArray | None = None,
    comps: ComponentSet | None = None,
) -> SolveResult:
    """Global nonnegative minimizer; positivity on every omega_i checked when ``comps`` given."""
    if model.variant != "pure-q":
        raise en.ModelError("ground_state expects the pure-q variant")
    res = minimize_constrained(model, None, opts, init)
    if comps is not None:
        missing = [i for i, w in enumerate(comps.omega) if not np.all(res.u[w] > 0)]
        if missing:
            res.message = f"ground state not positive on components {missing}"
    return res


def positivity_pattern(u: NDArray, comps: ComponentSet, threshold: float | None = None) -> tuple[int, ...]:
    """Indices (0-based) of the components on which ``u`` is positive."""
    if threshold is None:
        threshold = 1e-6 * max(float(np.max(np.abs(u))), 1e-300)
    return tuple(i for i, w in enumerate(comps.omega) if np.max(u[w]) > threshold)


@dataclass
class Candidate:
    subset: tuple[int, ...]
    result: SolveResult
    pattern: tuple[int, ...]

    @property
    def pattern_ok(self) -> bool:
        return self.pattern == self.subset

    @property
    def valid(self) -> bool:
        return self.result.valid and self.pattern_ok


def nonempty_subsets(n: int):
    for size in range(1, n + 1):
        yield from itertools.combinations(range(n), size)


def enumerate_candidates(
    model: en.Problem,
    comps: ComponentSet,
    opts: SolveOptions = SolveOptions(),
    ground: SolveResult | None = None,
    init: NDArray | None = None,
) -> list[Candidate]:
    """One constrained minimizer per nonempty subset J of components.

    The minimizer for J vanishes on ``comps.exclusion(i)`` for every omega_i
    outside J (the closure of omega_i plus the rest of its region of
    ``{a >= 0}``, which catches nodes where ``a > 0`` survives discretely).  A
    supplied ``ground`` result is reused for the full subset.
    """
    if comps.n_components < 1:
        raise SolveError("no positivity component to enumerate")
    out = []
    full = tuple(range(comps.n_components))
    for subset in nonempty_subsets(comps.n_components):
        if subset == full and ground is not None:
            res = ground
        else:
            zero = np.zeros(model.grid.shape, dtype=bool)
            for i in full:
                if i not in subset:
                    zero |= comps.exclusion(i)
            start = None
            if init is not None:
                start = np.where(zero, 0.0, init)
            res = minimize_constrained(model, zero, opts, start)
        out.append(Candidate(subset, res, positivity_pattern(res.u, comps)))
    return out


# --------------------------------------------------------------------------- bumps


@dataclass
class BumpDecomposition:
    bumps: list[NDArray]
    neighbourhoods: list[NDArray]
    feasible: bool
    leftover: float
    message: str = ""


def bump_neighbourhoods(grid: Grid, comps: ComponentSet, eps0: float | None = None) -> list[NDArray]:
    eps0 = default_eps0(grid, comps) if eps0 is None else eps0
    return [dilate(grid, w, eps0) for w in comps.omega]


def bump_decompose(
    grid: Grid, u: NDArray, comps: ComponentSet, eps0: float | None = None, threshold: float | None = None
) -> BumpDecomposition:
    """Split ``u`` into ``u * chi(Omega_i)`` with ``Omega_i`` the eps0-neighbourhood of omega_i.

    Feasible when the neighbourhoods are disjoint and ``u`` has no support
    (above ``threshold``) outside their union.
    """
    hoods = bump_neighbourhoods(grid, comps, eps0)
    if not pairwise_disjoint(hoods):
        return BumpDecomposition([], hoods, False, np.inf, "neighbourhoods overlap")
    bumps = [np.where(m, u, 0.0) for m in hoods]
    union = np.zeros(grid.shape, dtype=bool)
    for m in hoods:
        union |= m
    if threshold is None:
        threshold = 1e-6 * max(float(np.max(np.abs(u))), 1e-300)
    leftover = float(np.max(np.abs(u[~union]), initial=0.0))
    feasible = leftover <= threshold
    msg = "" if feasible else f"support leaves the neighbourhoods (max {leftover:.3g})"
    return BumpDecomposition(bumps, hoods, feasible, leftover, msg)


def combine(bumps: list[NDArray], signs: list[int] | None = None) -> NDArray:
    """Signed sum of bumps with pairwise disjoint supports."""
    if signs is None:
        signs = [1] * len(bumps)
    if len(signs) != len(bumps):
        raise ValueError("one sign per bump")
    if any(s not in (1, -1) for s in signs):
        raise ValueError("signs must be +1 or -1")
    supports = [b != 0 for b in bumps]
    if not pairwise_disjoint(supports):
        raise ValueError("bumps have overlapping supports")
    out = np.zeros_like(bumps[0], dtype=float)
    for b, s in zip(bumps, signs):
        out = out + s * b
    return out


def limit_profile(model: en.Problem, comps: ComponentSet | None = None, opts: SolveOptions = SolveOptions()):
    """Nonnegative minimizer of the mu = 0 energy vanishing where ``a < 0``.

    Returns ``(result, alternative)`` where ``alternative`` is the minimizer
    vanishing off the union of the omega_i (None without ``comps``).
    """
    base = model.with_mu(0.0)
    negative = model.a_minus > 0
    res = minimize_constrained(base, negative, opts)
    alt = None
    if comps is not None and comps.n_components:
        outside = ~comps.union()
        alt = minimize_constrained(base, outside, opts)
    return res, alt


def sup_distance(u: NDArray, v: NDArray) -> float:
    return float(np.max(np.abs(u - v)))


def distinct_tolerance(fields: list[NDArray], rel: float = 1e-4) -> float:
    """Sup-distance above which two candidates count as different: ``rel * max ||u||_inf``.

    Relative rather than ``rel * (1 + max)``: solutions of the reference
    problems can be far smaller than one.
    """
    biggest = max((float(np.max(np.abs(f))) for f in fields), default=0.0)
    return rel * biggest
