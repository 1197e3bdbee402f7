"""Discrete energies of the indefinite p-Laplacian problem and their gradients.

The Dirichlet term uses one forward-difference gradient per cell,

    dirichlet(u) = (1/p) * sum_cells |grad u|^p * h^d,

and potential terms use node quadrature with weight ``h^d``.  ``gradient``
returns the exact first variation of that discrete energy (a vector indexed by
node).  ``residual`` divides it by ``h^d`` so it approximates the strong form
``-Delta_p u - a_mu (|u|^{q-2} u + ...)`` nodewise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray

from .grid import Grid, effective_weight

VARIANTS = ("pure-q", "q-plus-r", "p-linear")


class ModelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Problem:
    """One discrete energy: exponents, parameter mu, weight split and grid."""

    grid: Grid
    a_plus: NDArray
    a_minus: NDArray
    p: float = 2.0
    q: float = 1.5
    mu: float = 1.0
    r: float | None = None
    variant: str = "pure-q"
    a_mu: NDArray = field(init=False, repr=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ModelError(f"unknown variant {self.variant!r}")
        if not self.p > 1:
            raise ModelError(f"p must exceed 1, got {self.p}")
        if not 1 < self.q < self.p:
            raise ModelError(f"need 1 < q < p, got q={self.q}, p={self.p}")
        if self.mu < 0:
            raise ModelError(f"mu must be nonnegative, got {self.mu}")
        if self.variant == "q-plus-r":
            if self.r is None or self.r < self.p:
                raise ModelError(f"q-plus-r needs r >= p, got r={self.r}")
        self.grid.check_field(self.a_plus, "a_plus")
        self.grid.check_field(self.a_minus, "a_minus")
        object.__setattr__(self, "a_mu", effective_weight(self.a_plus, self.a_minus, self.mu))

    @property
    def r_exponent(self) -> float | None:
        """Exponent of the second nonlinearity, or None for the pure-q energy."""
        if self.variant == "pure-q":
            return None
        if self.variant == "p-linear":
            return self.p
        return self.r

    @property
    def p_star(self) -> float:
        n = self.grid.dim
        return n * self.p / (n - self.p) if self.p < n else math.inf

    @property
    def tol_res(self) -> float:
        return default_tol_res(self.a_plus)

    def with_mu(self, mu: float) -> "Problem":
        return replace(self, mu=mu)

    def with_weight(self, a_plus: NDArray, a_minus: NDArray) -> "Problem":
        return replace(self, a_plus=a_plus, a_minus=a_minus)


def default_tol_res(a_plus: NDArray) -> float:
    return 1e-6 * (1.0 + float(np.max(np.abs(a_plus))))


@dataclass(frozen=True)
class EnergyBreakdown:
    dirichlet: float
    term_q: float
    term_r: float | None
    total: float


# --------------------------------------------------------------------------- kernels


def _cell_differences(grid: Grid, u: NDArray) -> list[NDArray]:
    """Forward differences per cell, one array per axis, shaped like the cells."""
    h = grid.h
    if grid.dim == 1:
        return [np.diff(u) / h]
    dx = (u[1:, :-1] - u[:-1, :-1]) / h
    dy = (u[:-1, 1:] - u[:-1, :-1]) / h
    return [dx, dy]


def _sq_magnitude(diffs: list[NDArray]) -> NDArray:
    out = diffs[0] ** 2
    for d in diffs[1:]:
        out = out + d**2
    return out


def dirichlet_energy(grid: Grid, u: NDArray, p: float) -> float:
    """``(1/p) sum_cells |grad u|^p h^d``."""
    mag2 = _sq_magnitude(_cell_differences(grid, u))
    return float(np.sum(mag2 ** (p / 2))) * grid.cell_volume / p


def gradient_norm_p(grid: Grid, u: NDArray, p: float) -> float:
    """Discrete ``||grad u||_p^p``."""
    return p * dirichlet_energy(grid, u, p)


def dirichlet_gradient(grid: Grid, u: NDArray, p: float, eps_reg: float = 0.0) -> NDArray:
    """Exact derivative of ``dirichlet_energy`` with respect to every node value.

    With ``eps_reg > 0`` the factor ``|grad u|^{p-2}`` is replaced by
    ``(|grad u|^2 + eps_reg^2)^{(p-2)/2}``.
    """
    diffs = _cell_differences(grid, u)
    mag2 = _sq_magnitude(diffs)
    if eps_reg > 0:
        weight = (mag2 + eps_reg**2) ** ((p - 2) / 2)
    elif p >= 2:
        weight = mag2 ** ((p - 2) / 2)
    else:
        with np.errstate(divide="ignore"):
            weight = np.where(mag2 > 0, mag2 ** ((p - 2) / 2), 0.0)
    # d/du of (1/p)|D|^p h^d = |D|^{p-2} D . dD/du h^d, and dD/du = +-1/h
    scale = grid.cell_volume / grid.h
    g = np.zeros_like(u, dtype=float)
    if grid.dim == 1:
        flux = weight * diffs[0] * scale
        g[1:] += flux
        g[:-1] -= flux
        return g
    fx = weight * diffs[0] * scale
    fy = weight * diffs[1] * scale
    g[1:, :-1] += fx
    g[:-1, 1:] += fy
    g[:-1, :-1] -= fx + fy
    return g


def signed_power(u: NDArray, s: float) -> NDArray:
    """``|u|^{s-2} u`` evaluated safely at zero (s > 1)."""
    return np.sign(u) * np.abs(u) ** (s - 1)


def potential(grid: Grid, u: NDArray, weight: NDArray, s: float) -> float:
    """``(1/s) sum weight |u|^s h^d``."""
    return float(np.sum(weight * np.abs(u) ** s)) * grid.cell_volume / s


def potential_gradient(grid: Grid, u: NDArray, weight: NDArray, s: float) -> NDArray:
    return weight * signed_power(u, s) * grid.cell_volume


# --------------------------------------------------------------------------- public API


def _check_admissible(model: Problem, u: NDArray) -> NDArray:
    u = model.grid.check_field(u, "u").astype(float, copy=False)
    if np.any(u[model.grid.boundary] != 0):
        raise ModelError("u must vanish on boundary nodes")
    return u


def energy(u: NDArray, model: Problem) -> EnergyBreakdown:
    u = _check_admissible(model, u)
    grid = model.grid
    dirichlet = dirichlet_energy(grid, u, model.p)
    term_q = potential(grid, u, model.a_mu, model.q)
    s = model.r_exponent
    term_r = None if s is None else potential(grid, u, model.a_mu, s)
    total = dirichlet - term_q - (term_r or 0.0)
    return EnergyBreakdown(dirichlet=dirichlet, term_q=term_q, term_r=term_r, total=total)


def total_energy(u: NDArray, model: Problem) -> float:
    return energy(u, model).total


def gradient(u: NDArray, model: Problem, eps_reg: float = 0.0) -> NDArray:
    """Gradient of the discrete energy; zero on boundary nodes."""
    u = _check_admissible(model, u)
    grid = model.grid
    g = dirichlet_gradient(grid, u, model.p, eps_reg)
    g -= potential_gradient(grid, u, model.a_mu, model.q)
    s = model.r_exponent
    if s is not None:
        g -= potential_gradient(grid, u, model.a_mu, s)
    g[grid.boundary] = 0.0
    return g


def residual(u: NDArray, model: Problem) -> tuple[NDArray, float]:
    """Nodal residual of the full (unconstrained) problem and its sup-norm.

    Every non-boundary node counts, whatever zero mask produced ``u``.
    """
    field_ = gradient(u, model, eps_reg=0.0) / model.grid.cell_volume
    return field_, float(np.max(np.abs(field_[model.grid.interior]), initial=0.0))


def is_valid(u: NDArray, model: Problem, tol_res: float | None = None) -> bool:
    tol = model.tol_res if tol_res is None else tol_res
    return residual(u, model)[1] <= tol


def solution_energy_gap(u: NDArray, model: Problem) -> float:
    """Relative defect in ``I(u) = -((p-q)/(pq)) ||grad u||_p^p``.

    Genuine solutions of the pure-q problem satisfy the identity; zero is
    returned for the zero field.
    """
    if model.variant != "pure-q":
        raise ModelError("energy identity holds for the pure-q variant only")
    e = energy(u, model)
    if e.total == 0.0 and e.dirichlet == 0.0:
        return 0.0
    predicted = -((model.p - model.q) / (model.p * model.q)) * model.p * e.dirichlet
    return abs(e.total - predicted) / abs(e.total) if e.total != 0 else math.inf
