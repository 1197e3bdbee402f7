"""Fiber maps ``t -> I(t u)`` of the polynomial-type energies.

For a fixed direction ``u`` the energy along the ray is

    I(t u) = A t^p / p - B t^q / q - C t^r / r,

with ``A = ||grad u||_p^p``, ``B = sum a_mu |u|^q h^d`` and
``C = sum a_mu |u|^r h^d``.  Critical points solve
``t^{p-q} A - B - t^{r-q} C = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import energy as en


@dataclass(frozen=True)
class FiberCoeffs:
    A: float
    B: float
    C: float = 0.0

    def __post_init__(self):
        if not self.A > 0:
            raise ValueError("A must be positive (u must be nonzero)")

    def scaled(self, t0: float, p: float, q: float, r: float) -> "FiberCoeffs":
        """Coefficients of the direction ``t0 * u``."""
        return FiberCoeffs(self.A * t0**p, self.B * t0**q, self.C * t0**r)


@dataclass(frozen=True)
class FiberRoots:
    case: str  # "i", "ii" or "iii"
    t_plus: float | None = None
    t_minus: float | None = None

    @property
    def has_negative_branch(self) -> bool:
        return self.t_plus is not None


def fiber_coeffs(u, model: en.Problem) -> FiberCoeffs:
    grid = model.grid
    A = en.gradient_norm_p(grid, u, model.p)
    B = model.q * en.potential(grid, u, model.a_mu, model.q)
    s = model.r_exponent
    C = 0.0 if s is None else s * en.potential(grid, u, model.a_mu, s)
    return FiberCoeffs(A, B, C)


def fiber_value(t: float, c: FiberCoeffs, p: float, q: float, r: float) -> float:
    return c.A * t**p / p - c.B * t**q / q - c.C * t**r / r


def stationarity(t: float, c: FiberCoeffs, p: float, q: float, r: float) -> float:
    """``t^{p-q} A - B - t^{r-q} C`` (zero exactly at fiber critical points)."""
    return t ** (p - q) * c.A - c.B - t ** (r - q) * c.C


def _root(fun, lo: float, hi: float) -> float:
    return brentq(fun, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def _bracket_up(fun, t0: float) -> float:
    """Smallest ``t0 * 2^k`` where ``fun`` is positive."""
    t = t0
    for _ in range(4000):
        if fun(t) > 0:
            return t
        t *= 2.0
    raise ArithmeticError("no sign change found while bracketing")


def fiber_roots(c: FiberCoeffs, p: float, q: float, r: float) -> FiberRoots:
    """Classify the fiber by the signs of B and C and locate its critical points.

    Case i (B > 0, C > 0): ``t_plus < t_minus`` when the stationarity
    function has a positive maximum, no roots otherwise.  Case ii (B > 0,
    C <= 0): a single ``t_plus``.  Case iii (B <= 0): no negative-energy root;
    ``t_minus`` is reported when a positive-energy critical point exists.
    With ``r == p`` the two top-order terms merge into ``(A - C) t^p / p``.
    """
    if r < p:
        raise ValueError("need r >= p")
    if r == p:
        merged = c.A - c.C
        if c.B > 0:
            case = "i" if c.C > 0 else "ii"
            if merged <= 0:
                return FiberRoots(case)
            return FiberRoots(case, t_plus=(c.B / merged) ** (1.0 / (p - q)))
        return FiberRoots("iii")

    def g(t):
        return stationarity(t, c, p, q, r)

    if c.B > 0:
        if c.C <= 0:
            if c.C == 0:
                return FiberRoots("ii", t_plus=(c.B / c.A) ** (1.0 / (p - q)))
            hi = _bracket_up(g, (c.B / c.A) ** (1.0 / (p - q)) * 0.5 + 1e-300)
            return FiberRoots("ii", t_plus=_root(g, 0.0, hi))
        t_star = ((p - q) * c.A / ((r - q) * c.C)) ** (1.0 / (r - p))
        if g(t_star) <= 0:
            return FiberRoots("i")
        t_plus = _root(g, 0.0, t_star)
        hi = t_star
        while g(hi) > 0:
            hi *= 2.0
        t_minus = _root(g, t_star, hi)
        return FiberRoots("i", t_plus=t_plus, t_minus=t_minus)
    # B <= 0: g(0+) = -B >= 0
    if c.C > 0:
        t_star = ((p - q) * c.A / ((r - q) * c.C)) ** (1.0 / (r - p))
        hi = t_star
        while g(hi) > 0:
            hi *= 2.0
        return FiberRoots("iii", t_minus=_root(g, t_star if g(t_star) > 0 else 0.0, hi))
    return FiberRoots("iii")


def has_positive_maximum(c: FiberCoeffs, p: float, q: float, r: float) -> bool:
    """Whether ``t -> I(t u)`` is positive for some ``t > 0``."""
    if r == p:
        return c.A - c.C > 0 or c.B < 0
    if c.C <= 0:
        return True
    roots = fiber_roots(c, p, q, r)
    candidates = [t for t in (roots.t_plus, roots.t_minus) if t is not None]
    if roots.case == "iii" and c.B < 0:
        return True
    return any(fiber_value(t, c, p, q, r) > 0 for t in candidates)


def optimal_scale(u, model: en.Problem, linear=None) -> float | None:
    """Scale ``t`` putting ``t u`` at the negative-energy critical point of its fiber.

    Returns None when the fiber has no such point (e.g. ``B <= 0``).
    """
    grid = model.grid
    A = en.gradient_norm_p(grid, u, model.p)
    if not A > 0:
        return None
    if linear is not None:
        L = float(np.sum(linear * u)) * grid.cell_volume
        if L <= 0:
            return None
        return (L / A) ** (1.0 / (model.p - 1))
    c = fiber_coeffs(u, model)
    r = model.r_exponent if model.r_exponent is not None else model.p
    if model.r_exponent is None:
        c = FiberCoeffs(c.A, c.B, 0.0)
    roots = fiber_roots(c, model.p, model.q, r)
    if roots.t_plus is None or not math.isfinite(roots.t_plus):
        return None
    return roots.t_plus
