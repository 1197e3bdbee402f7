"""First eigenvalues of ``-Delta_p - a_mu |.|^{p-2}``, ball eigenfunctions, torsion.

The Rayleigh quotient

    R(u) = (||grad u||_p^p - sum a_mu |u|^p h^d) / sum |u|^p h^d

is minimized by preconditioned descent: the direction is ``-P^{-1} grad R``
(conjugated Polak-Ribiere style) with ``P`` the convex part of the Hessian of
the numerator, the iterate is replaced by ``|u|`` and renormalized after every
step, and a step is accepted only when it lowers ``R``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage
from scipy.optimize import brentq, minimize_scalar

from . import energy as en
from .grid import ComponentSet, Grid, GridError, neighbours_ring
from .optim import BandedMetric, SparseMetric
from .solve import SolveOptions, SolveResult, _assemble_2d, minimize_box

NORMALIZATIONS = ("p-norm", "sup-norm")


class EigenError(ValueError):
    pass


@dataclass
class EigenResult:
    lam: float
    phi: NDArray
    rayleigh_history: list[float] = field(default_factory=list, repr=False)
    iterations: int = 0
    converged: bool = False
    zero_mask: NDArray | None = None


def _pnorm_p(grid: Grid, u: NDArray, p: float) -> float:
    return float(np.sum(np.abs(u) ** p)) * grid.cell_volume


def rayleigh_quotient(u: NDArray, model: en.Problem) -> float:
    """``R(u)``; invariant under ``u -> t u`` for ``t != 0``."""
    grid, p = model.grid, model.p
    den = _pnorm_p(grid, u, p)
    if den == 0:
        raise EigenError("Rayleigh quotient of the zero field")
    num = en.gradient_norm_p(grid, u, p) - float(np.sum(model.a_mu * np.abs(u) ** p)) * grid.cell_volume
    return num / den


def _normalize(grid: Grid, u: NDArray, p: float, mode: str) -> NDArray:
    if mode == "sup-norm":
        return u / float(np.max(np.abs(u)))
    return u / _pnorm_p(grid, u, p) ** (1.0 / p)


class _Quotient:
    """Value, nodal gradient and preconditioner of the Rayleigh quotient."""

    _DELTA = 1e-4

    def __init__(self, model: en.Problem):
        self.model = model
        self.grid = model.grid

    def value(self, u: NDArray) -> float:
        return rayleigh_quotient(u, self.model)

    def grad(self, u: NDArray, lam: float) -> NDArray:
        grid, p, a = self.grid, self.model.p, self.model.a_mu
        vol = grid.cell_volume
        up = en.signed_power(u, p)
        g_num = p * en.dirichlet_gradient(grid, u, p) / vol - p * a * up
        return (g_num - lam * p * up) / _pnorm_p(grid, u, p)

    def metric(self, u: NDArray):
        grid, p = self.grid, self.model.p
        mag2 = en._sq_magnitude(en._cell_differences(grid, u))
        if p == 2:
            w = np.ones_like(mag2)
        else:
            delta2 = (self._DELTA * np.sqrt(float(np.max(mag2)))) ** 2 + 1e-300
            w = (p - 1) * (mag2 + delta2) ** ((p - 2) / 2)
        w = p * w / grid.h**2
        au = np.maximum(np.abs(u), 1e-100)
        diag = p * (p - 1) * np.maximum(-self.model.a_mu, 0.0) * au ** (p - 2)
        if grid.dim == 1:
            return BandedMetric(w, diag)
        return SparseMetric(_assemble_2d(grid.n, w, diag))


def _initial_field(grid: Grid, free: NDArray, seed: int) -> NDArray:
    """Smooth positive start: product of sines plus seeded noise on the free nodes."""
    rng = np.random.default_rng(seed)
    L = float(grid.spec.length)
    u = np.ones(grid.shape)
    for ax in range(grid.dim):
        u = u * np.sin(np.pi * grid.coords[..., ax] / L)
    u = np.abs(u) + 0.01 * rng.random(grid.shape)
    return np.where(free, u, 0.0)


def rayleigh_min(
    model: en.Problem,
    zero_mask: NDArray | None = None,
    normalization: str = "p-norm",
    tol: float = 1e-12,
    max_iter: int = 20_000,
    seed: int = 0,
    init: NDArray | None = None,
) -> EigenResult:
    """Minimize the Rayleigh quotient over nonnegative fields vanishing on ``zero_mask``.

    Stops once an accepted step lowers ``R`` by less than ``tol * (1 + |R|)``.
    """
    if normalization not in NORMALIZATIONS:
        raise EigenError(f"unknown normalization {normalization!r}")
    grid, p = model.grid, model.p
    zero_mask = grid.empty_mask() if zero_mask is None else np.asarray(zero_mask, dtype=bool)
    fixed = zero_mask | grid.boundary
    free = ~fixed
    if not free.any():
        raise EigenError("zero mask leaves no free node")
    q = _Quotient(model)
    u = _initial_field(grid, free, seed) if init is None else np.where(free, np.abs(init), 0.0)
    if not np.any(u):
        u = np.where(free, 1.0, 0.0)
    u = _normalize(grid, u, p, "p-norm")
    lam = q.value(u)
    history = [lam]

    def along(t, d):
        trial = np.abs(u + t * d)
        trial[fixed] = 0.0
        return trial

    def value_along(t, d):
        trial = along(t, d)
        return q.value(trial) if np.any(trial) else np.inf

    alpha = 1.0
    converged = False
    it = 0
    d = z_prev = g_prev = None
    for it in range(1, max_iter + 1):
        g = q.grad(u, lam)
        g[fixed] = 0.0
        z = q.metric(u).solve(g, free)
        # Polak-Ribiere+ conjugation in the preconditioned inner product
        beta = 0.0
        if d is not None:
            denom = float(np.dot(z_prev.ravel(), g_prev.ravel()))
            if denom > 0:
                beta = max(0.0, float(np.dot(z.ravel(), (g - g_prev).ravel())) / denom)
        d = -z if beta == 0.0 else -z + beta * d
        if float(np.dot(d.ravel(), g.ravel())) >= 0:
            d = -z
        z_prev, g_prev = z, g
        t, lam_t = _line_search(lambda s: value_along(s, d), lam, alpha)
        if t is None:
            converged = True
            break
        alpha = t
        drop = lam - lam_t
        u = _normalize(grid, along(t, d), p, "p-norm")
        lam = q.value(u)
        history.append(lam)
        if drop < tol * (1.0 + abs(lam)):
            converged = True
            break
    phi = _normalize(grid, u, p, normalization)
    return EigenResult(lam, phi, history, it, converged, zero_mask)


def _line_search(phi, f0: float, t0: float) -> tuple[float | None, float]:
    """Approximate minimizer of ``phi`` on ``t > 0`` with ``phi(t) < f0``, else ``(None, f0)``."""
    t = t0
    ft = phi(t)
    while not ft < f0:
        t *= 0.5
        if t < 1e-14:
            return None, f0
        ft = phi(t)
    # expand while the value keeps dropping, then refine inside the bracket
    lo = t / 2
    while t < 1e6:
        f2 = phi(2 * t)
        if not f2 < ft:
            break
        lo, t, ft = t, 2 * t, f2
    res = minimize_scalar(phi, bounds=(lo, 2 * t), method="bounded", options={"xatol": 1e-4 * t})
    if res.fun < ft:
        return float(res.x), float(res.fun)
    return t, ft


def first_eigenvalue(model: en.Problem, **kw) -> EigenResult:
    """``lambda_1(mu)`` on the whole grid."""
    return rayleigh_min(model, None, **kw)


def limit_eigenvalue(model: en.Problem, **kw) -> EigenResult:
    """``lambda_inf``: the quotient restricted to fields vanishing where ``a < 0``."""
    return rayleigh_min(model, model.a_minus > 0, **kw)


# --------------------------------------------------------------------------- balls


@dataclass(frozen=True)
class Ball:
    center: NDArray
    radius: float
    mask: NDArray


def inscribed_ball(grid: Grid, region: NDArray) -> Ball:
    """Largest node ball whose closure (ball plus one-ring) lies in ``region``."""
    region = grid.check_field(region, "region").astype(bool)
    if not region.any():
        raise GridError("empty region has no inscribed ball")
    dist = ndimage.distance_transform_edt(region, sampling=grid.h)
    k = np.unravel_index(int(np.argmax(dist)), grid.shape)
    center = grid.coords[k]
    r2 = np.sum((grid.coords - center) ** 2, axis=-1)
    # distance to the nearest node outside region is dist[k]; keep the ring inside
    radius = float(dist[k]) - grid.h
    mask = r2 <= (radius * (1 + 1e-9)) ** 2
    while mask.any() and np.any(neighbours_ring(mask) & ~region):
        radius -= grid.h
        mask = r2 <= (radius * (1 + 1e-9)) ** 2
    if not mask.any():
        mask = np.zeros(grid.shape, dtype=bool)
        mask[k] = True
        radius = 0.0
    return Ball(center=np.asarray(center), radius=radius, mask=mask)


def ball_eigenfunctions(model: en.Problem, comps: ComponentSet) -> list[tuple[Ball, EigenResult]]:
    """First Dirichlet eigenfunction of ``-Delta_p`` on the inscribed ball of each omega_i.

    Balls are taken inside ``{a > 0}`` intersected with omega_i; eigenfunctions
    are normalized to sup-norm one.
    """
    grid = model.grid
    plain = en.Problem(grid, grid.zeros(), grid.zeros(), p=model.p, q=model.q)
    out = []
    for w in comps.omega:
        ball = inscribed_ball(grid, w & (model.a_plus > 0))
        res = rayleigh_min(plain, ~ball.mask, normalization="sup-norm")
        out.append((ball, res))
    return out


# --------------------------------------------------------------------------- torsion


def torsion(grid: Grid, mask: NDArray | None, p: float, opts: SolveOptions = SolveOptions()) -> SolveResult:
    """Solution of ``-Delta_p e = 1`` on the free nodes, ``e = 0`` on ``mask`` and the boundary.

    Computed as the minimizer of ``(1/p) sum |grad e|^p h^d - sum e h^d``;
    ``res_sup`` of the result is the sup-norm of ``-Delta_p e - 1`` over free nodes.
    """
    mask = grid.empty_mask() if mask is None else np.asarray(mask, dtype=bool)
    fixed = mask | grid.boundary
    if fixed.all():
        raise GridError("torsion mask leaves no free node")
    plain = en.Problem(grid, grid.zeros(), grid.zeros(), p=p, q=0.5 * (1.0 + p))
    ones = np.where(fixed, 0.0, 1.0)
    res = minimize_box(plain, mask, opts, init=ones, linear=ones)
    field_ = en.dirichlet_gradient(grid, res.u, p) / grid.cell_volume - ones
    res.res_sup = float(np.max(np.abs(field_[~fixed]), initial=0.0))
    res.valid = res.converged and res.res_sup <= plain.tol_res
    return res


# --------------------------------------------------------------------------- coercivity


@dataclass(frozen=True)
class Certificate:
    holds: bool
    lambda1: float


def coercivity_certificate(model: en.Problem, **kw) -> Certificate:
    """Positivity of ``lambda_1(mu)``, which makes the r = p energy coercive."""
    if model.variant == "pure-q":
        raise en.ModelError("coercivity certificate concerns the r = p energy")
    if model.variant == "q-plus-r" and model.r != model.p:
        raise en.ModelError("coercivity certificate needs r = p")
    res = first_eigenvalue(model, **kw)
    return Certificate(holds=bool(res.lam > 0), lambda1=res.lam)


@dataclass(frozen=True)
class CoercivityFit:
    C: float
    sigma: float
    lambda1: float


def coercivity_constant(model: en.Problem, s_max: float = 1e6, **kw) -> CoercivityFit:
    """Empirical ``C`` with ``||grad u||_p^p - sum a_mu |u|^p h^d >= C ||grad u||_p^p``.

    The best constant is ``1 - 1/sigma`` where ``sigma`` is the smallest
    ``s > 0`` with ``lambda_1`` of ``-Delta_p - s a_mu`` equal to zero; it is
    located by root bracketing in ``s``.  When ``lambda_1(s_max)`` is still
    positive the value at ``s_max`` is reported as a lower bound.  This is a
    discrete estimate, not a certified constant.
    """
    pos, neg = np.maximum(model.a_mu, 0.0), np.maximum(-model.a_mu, 0.0)

    def lam(s: float) -> float:
        scaled = en.Problem(model.grid, s * pos, s * neg, p=model.p, q=model.q, mu=1.0)
        return first_eigenvalue(scaled, **kw).lam

    lam1 = lam(1.0)
    if lam1 <= 0:
        raise EigenError(f"lambda_1(mu) = {lam1:.6g} <= 0: no coercivity constant")
    lo, hi = 1.0, 2.0
    while lam(hi) > 0:
        lo, hi = hi, 2.0 * hi
        if hi > s_max:
            return CoercivityFit(C=1.0 - 1.0 / lo, sigma=np.inf, lambda1=lam1)
    sigma = brentq(lam, lo, hi, xtol=1e-10, rtol=1e-10)
    return CoercivityFit(C=1.0 - 1.0 / sigma, sigma=sigma, lambda1=lam1)
