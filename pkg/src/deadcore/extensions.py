"""The q + r problems: Nehari ground states, the r = p minimizer, sub/supersolutions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage

from . import energy as en
from .eigen import ball_eigenfunctions, coercivity_certificate, torsion
from .fiber import (
    FiberCoeffs,
    FiberRoots,
    fiber_coeffs,
    fiber_roots,
    fiber_value,
    has_positive_maximum,
    stationarity,
)
from .grid import ComponentSet, Grid
from .solve import (
    Objective,
    SolveOptions,
    SolveResult,
    _result,
    bump_decompose,
    combine,
    default_init,
    minimize_box,
    nonempty_subsets,
)
from .optim import minimize_box as _minimize_box

__all__ = [
    "FiberCoeffs",
    "FiberRoots",
    "fiber_roots",
    "fiber_value",
    "stationarity",
    "RefusalError",
    "GateReport",
    "smallness_gate",
    "nehari_ground_state",
    "solve_r_eq_p",
    "SubSuperResult",
    "subsuper_solve",
    "BumpSolution",
    "bump_solutions",
]


class RefusalError(RuntimeError):
    """A precondition certificate failed; the solve was not attempted."""


def _require(model: en.Problem, variant: str):
    if model.variant != variant:
        raise en.ModelError(f"expected the {variant} variant, got {model.variant}")


# --------------------------------------------------------------------------- gate


@dataclass(frozen=True)
class GateReport:
    passed: bool
    n_directions: int
    n_failed: int


def _random_directions(model: en.Problem, count: int, seed: int):
    """Nonnegative smooth random fields vanishing on the boundary, plus ``a_plus`` itself."""
    grid = model.grid
    rng = np.random.default_rng(seed)
    if np.any(model.a_plus):
        yield np.where(grid.boundary, 0.0, model.a_plus)
    for _ in range(count - 1):
        sigma = rng.uniform(1.0, 0.1 * grid.n)
        u = ndimage.gaussian_filter(rng.random(grid.shape), sigma, mode="constant")
        u = np.maximum(u, 0.0)
        u[grid.boundary] = 0.0
        yield u


def smallness_gate(model: en.Problem, count: int = 200, seed: int = 0) -> GateReport:
    """Every sampled direction must have a fiber map that becomes positive.

    This is the condition ``I(t u) > 0 for some t`` along ``count`` random
    nonnegative directions (the first one is ``a_plus``).
    """
    s = model.r_exponent
    if s is None:
        raise en.ModelError("the smallness gate concerns the q + r energies")
    failed = 0
    n = 0
    for u in _random_directions(model, count, seed):
        if not np.any(u):
            continue
        n += 1
        c = fiber_coeffs(u, model)
        if not has_positive_maximum(c, model.p, model.q, s):
            failed += 1
    return GateReport(passed=failed == 0, n_directions=n, n_failed=failed)


# --------------------------------------------------------------------------- Nehari


class _WellObjective(Objective):
    """The energy restricted to fields whose fiber has not yet crossed its ridge.

    Points past ``t_minus`` on their own ray (or with no negative branch) get
    energy ``+inf`` so a monotone line search never jumps out of the
    negative-energy well.
    """

    def _inside(self, u: NDArray) -> bool:
        if not np.any(u):
            return False
        m = self.model
        c = fiber_coeffs(u, m)
        roots = fiber_roots(c, m.p, m.q, m.r_exponent)
        if roots.t_plus is None:
            return False
        return roots.t_minus is None or roots.t_minus > 1.0

    def __call__(self, u):
        f, g, scale = super().__call__(u)
        if not self._inside(u):
            return np.inf, g, scale
        return f, g, scale

    def change(self, u, v):
        if not self._inside(v):
            return np.inf
        return super().change(u, v)


def _nehari_defect(u: NDArray, model: en.Problem) -> float:
    """``|I'(u) u| / ||grad u||_p^p``."""
    grid = model.grid
    A = en.gradient_norm_p(grid, u, model.p)
    if A == 0:
        return 0.0
    dI = float(np.sum(en.gradient(u, model) * u))
    return abs(dI) / A


def nehari_ground_state(
    model: en.Problem,
    opts: SolveOptions = SolveOptions(),
    seeds: tuple[int, ...] = (0, 1, 2),
    comps: ComponentSet | None = None,
    gate_count: int = 200,
) -> SolveResult:
    """Least-energy nonnegative critical point on the negative branch of the Nehari set.

    Each seed starts from ``t_plus(u0) u0`` and descends within the
    negative-energy well; the best run is returned (no global claim is made).
    Raises ``RefusalError`` when the smallness gate fails or a fiber loses
    its negative branch along the way.
    """
    _require(model, "q-plus-r")
    if model.r >= model.p_star:
        raise en.ModelError("the Nehari path needs r below the critical exponent")
    gate = smallness_gate(model, gate_count, opts.seed)
    if not gate.passed:
        raise RefusalError(f"smallness gate failed on {gate.n_failed}/{gate.n_directions} directions")
    grid = model.grid
    fixed = grid.boundary
    best = None
    for seed in seeds:
        u0 = np.where(fixed, 0.0, default_init(model, seed, opts.noise))
        roots = fiber_roots(fiber_coeffs(u0, model), model.p, model.q, model.r)
        if roots.t_plus is None:
            raise RefusalError("start direction has no negative-energy fiber point")
        box = _minimize_box(
            _WellObjective(model, opts.reg_for(model.p)),
            roots.t_plus * u0,
            fixed,
            weight=grid.cell_volume,
            tol=opts.tol_pg,
            max_iter=opts.max_iter,
            keep_history=opts.keep_history,
        )
        if not np.isfinite(box.f):
            raise RefusalError("fiber map lost its negative branch during descent")
        res = _result(model, box.x, fixed, box, grid.empty_mask())
        if best is None or res.energy < best.energy:
            best = res
    if comps is not None:
        missing = [i for i, w in enumerate(comps.omega) if not np.all(best.u[w] > 0)]
        if missing:
            best.message = f"not positive on components {missing}"
    return best


def nehari_energy_identity(u: NDArray, model: en.Problem) -> float:
    """``((r-p)/(pr)) ||grad u||_p^p - ((r-q)/(rq)) sum a_mu u^q h^d``."""
    p, q, r = model.p, model.q, model.r
    A = en.gradient_norm_p(model.grid, u, p)
    B = float(np.sum(model.a_mu * np.abs(u) ** q)) * model.grid.cell_volume
    return (r - p) / (p * r) * A - (r - q) / (r * q) * B


# --------------------------------------------------------------------------- r = p


def solve_r_eq_p(
    model: en.Problem,
    opts: SolveOptions = SolveOptions(),
    comps: ComponentSet | None = None,
    init: NDArray | None = None,
) -> SolveResult:
    """Global nonnegative minimizer of the r = p energy, once coercivity is certified."""
    _require(model, "p-linear")
    cert = coercivity_certificate(model)
    if not cert.holds:
        raise RefusalError(f"lambda_1(mu) = {cert.lambda1:.6g} <= 0: energy may be unbounded below")
    res = minimize_box(model, None, opts, init)
    if comps is not None:
        missing = [i for i, w in enumerate(comps.omega) if not np.all(res.u[w] > 0)]
        if missing:
            res.message = f"not positive on components {missing}"
    return res


# --------------------------------------------------------------------------- sub/super


@dataclass
class SubSuperResult:
    result: SolveResult
    eta: NDArray
    upper: NDArray
    c: float
    M: float
    inactive_res: float


def _pde_residual(u: NDArray, model: en.Problem) -> NDArray:
    """``-Delta_p u - a_mu (u^{q-1} + u^{r-1})`` at every node (zero on the boundary)."""
    return en.residual(u, model)[0]


def _is_subsolution(u, model, tol) -> bool:
    res = _pde_residual(u, model)
    return bool(np.all(res[model.grid.interior] <= tol))


def _is_supersolution(u, model, tol) -> bool:
    res = _pde_residual(u, model)
    return bool(np.all(res[model.grid.interior] >= -tol))


def _find_M(model: en.Problem, e: NDArray, tol: float) -> float | None:
    """Smallest power of two (refined by bisection) with ``M e`` a supersolution."""
    ok = [M for M in 2.0 ** np.arange(-40, 41) if _is_supersolution(M * e, model, tol)]
    if not ok:
        return None
    hi = ok[0]
    lo = hi / 2
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _is_supersolution(mid * e, model, tol):
            hi = mid
        else:
            lo = mid
    return hi


def subsuper_solve(
    model: en.Problem,
    comps: ComponentSet,
    opts: SolveOptions = SolveOptions(),
) -> SubSuperResult:
    """Minimize the q + r energy over the order interval ``[c sum phi_B, M e]``.

    ``phi_B`` are sup-normalized ball eigenfunctions inside the omega_i and
    ``e`` the torsion function.  ``M`` is the smallest value making ``M e`` a
    discrete supersolution; ``c`` the largest value (capped so that the lower
    bound stays below ``M e``) making ``c sum phi_B`` a subsolution.
    """
    if model.variant == "pure-q":
        raise en.ModelError("subsuper_solve concerns the q + r energies")
    grid = model.grid
    tol = 0.0
    e = torsion(grid, None, model.p, opts).u
    M = _find_M(model, e, tol)
    if M is None:
        raise RefusalError("no admissible M: M e is never a supersolution")
    upper = M * e
    phis = [res.phi for _, res in ball_eigenfunctions(model, comps)]
    shape = np.sum(phis, axis=0)
    support_ = shape > 0
    cap = float(np.min(upper[support_] / shape[support_]))
    if _is_subsolution(cap * shape, model, tol):
        c = cap
    else:
        lo, hi = 0.0, cap
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if _is_subsolution(mid * shape, model, tol):
                lo = mid
            else:
                hi = mid
        c = lo
    if not c > 0:
        raise RefusalError("no admissible c: c sum phi_B is never a subsolution")
    eta = c * shape
    init = np.clip(0.5 * (eta + upper), eta, upper)
    res = minimize_box(model, None, opts, init, lower=eta, upper=upper, rescale=False)
    field_ = _pde_residual(res.u, model)
    slack = 1e-12 * max(float(np.max(upper)), 1e-300)
    inactive = grid.interior & (res.u > eta + slack) & (res.u < upper - slack)
    inactive_res = float(np.max(np.abs(field_[inactive]), initial=0.0))
    return SubSuperResult(result=res, eta=eta, upper=upper, c=c, M=M, inactive_res=inactive_res)


# --------------------------------------------------------------------------- bumps


@dataclass
class BumpSolution:
    subset: tuple[int, ...]
    u: NDArray
    res_sup: float
    valid: bool


def bump_solutions(grid: Grid, u: NDArray, model: en.Problem, comps: ComponentSet) -> list[BumpSolution]:
    """Split ``u`` into bumps and check every nonempty sum of them as a solution.

    Returns an empty list when the bump neighbourhoods are not a valid split
    of ``u``.
    """
    dec = bump_decompose(grid, u, comps)
    if not dec.feasible:
        return []
    out = []
    for subset in nonempty_subsets(len(dec.bumps)):
        v = combine([dec.bumps[i] for i in subset])
        _, res_sup = en.residual(v, model)
        ok = bool(np.all(v >= 0) and np.any(v > 0) and res_sup <= model.tol_res)
        out.append(BumpSolution(subset, v, res_sup, ok))
    return out
