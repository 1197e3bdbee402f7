"""Uniform grids, sign-changing weights, positivity components and set metrics.

Fields are plain numpy arrays shaped like the grid (``(n,)`` in 1D, ``(n, n)``
in 2D with axis 0 along x).  Node masks are boolean arrays of the same shape.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage
from scipy.spatial import cKDTree

MIN_NODES = 3
_DIST_SLACK = 1e-9


class GridError(ValueError):
    """Invalid grid specification or field/grid mismatch."""


@dataclass(frozen=True)
class GridSpec:
    dim: int = 1
    length: float = 1.0
    n: int = 513

    @property
    def h(self) -> float:
        return self.length / (self.n - 1)


@dataclass(frozen=True, eq=False)
class Grid:
    """A uniform tensor grid on ``[0, L]^dim`` with ``n`` nodes per axis."""

    spec: GridSpec
    coords: NDArray  # (*shape, dim)
    boundary: NDArray  # bool mask
    shape: tuple[int, ...] = field(default=())

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def h(self) -> float:
        return self.spec.h

    @property
    def cell_volume(self) -> float:
        """Quadrature weight ``h**dim`` attached to every node and cell."""
        return self.h ** self.dim

    @property
    def interior(self) -> NDArray:
        return ~self.boundary

    @property
    def x(self) -> NDArray:
        """First coordinate of every node."""
        return self.coords[..., 0]

    def zeros(self) -> NDArray:
        return np.zeros(self.shape)

    def empty_mask(self) -> NDArray:
        return np.zeros(self.shape, dtype=bool)

    def check_field(self, values: NDArray, name: str = "field") -> NDArray:
        values = np.asarray(values)
        if values.shape != self.shape:
            raise GridError(f"{name} has shape {values.shape}, grid expects {self.shape}")
        return values

    def node_points(self, mask: NDArray) -> NDArray:
        """Coordinates of the nodes selected by ``mask`` as an ``(m, dim)`` array."""
        return self.coords[mask]


def build_grid(spec: GridSpec) -> Grid:
    if spec.dim not in (1, 2):
        raise GridError(f"dim must be 1 or 2, got {spec.dim}")
    if spec.n < MIN_NODES:
        raise GridError(f"n too small: need at least {MIN_NODES} nodes per axis, got {spec.n}")
    if not spec.length > 0:
        raise GridError(f"nonpositive extent {spec.length}")
    axis = np.linspace(0.0, spec.length, spec.n)
    shape = (spec.n,) * spec.dim
    coords = np.stack(np.meshgrid(*([axis] * spec.dim), indexing="ij"), axis=-1)
    boundary = np.zeros(shape, dtype=bool)
    for ax in range(spec.dim):
        index = [slice(None)] * spec.dim
        index[ax] = 0
        boundary[tuple(index)] = True
        index[ax] = -1
        boundary[tuple(index)] = True
    return Grid(spec=spec, coords=coords, boundary=boundary, shape=shape)


# --------------------------------------------------------------------------- weights


@dataclass(frozen=True)
class BumpWeight:
    """Sum of Gaussian bumps minus a constant offset.

    ``a(x) = sum_k A_k exp(-|x - c_k|^2 / w_k^2) - offset``
    """

    centers: tuple = (0.25, 0.75)
    amplitudes: tuple = (1.0, 1.0)
    widths: tuple = (0.06, 0.06)
    offset: float = 0.3

    def evaluate(self, grid: Grid) -> NDArray:
        if not (len(self.centers) == len(self.amplitudes) == len(self.widths)):
            raise GridError("centers, amplitudes and widths must have equal length")
        a = np.full(grid.shape, -float(self.offset))
        for c, amp, w in zip(self.centers, self.amplitudes, self.widths):
            c = np.broadcast_to(np.atleast_1d(np.asarray(c, dtype=float)), (grid.dim,))
            r2 = np.sum((grid.coords - c) ** 2, axis=-1)
            a += amp * np.exp(-r2 / w**2)
        return a


def split_sign(a: NDArray) -> tuple[NDArray, NDArray]:
    a = np.asarray(a, dtype=float)
    return np.maximum(a, 0.0), np.maximum(-a, 0.0)


def make_weight(grid: Grid, definition: BumpWeight | str | Path) -> tuple[NDArray, NDArray, NDArray]:
    """Return ``(a, a_plus, a_minus)`` from a builtin bump family or a CSV file."""
    if isinstance(definition, BumpWeight):
        a = definition.evaluate(grid)
    else:
        a = read_field(definition, grid)
    a_plus, a_minus = split_sign(a)
    return a, a_plus, a_minus


def effective_weight(a_plus: NDArray, a_minus: NDArray, mu: float) -> NDArray:
    """``a_mu = a_plus - mu * a_minus``."""
    a_plus = np.asarray(a_plus, dtype=float)
    a_minus = np.asarray(a_minus, dtype=float)
    if a_plus.shape != a_minus.shape:
        raise GridError("a_plus and a_minus live on different grids")
    return a_plus - mu * a_minus


# --------------------------------------------------------------------------- CSV


def write_field(path: str | Path, values: NDArray, grid: Grid, fmt: str = "%.17g") -> None:
    """Write a node field as CSV: header ``# grid dim n h`` then row-major values.

    1D fields are one value per line, 2D fields one x-row per line.
    """
    values = grid.check_field(values)
    rows = values.reshape(-1, 1) if grid.dim == 1 else values
    lines = [f"# grid {grid.dim} {grid.n} {grid.h!r}"]
    lines += [",".join(fmt % v for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def write_mask(path: str | Path, mask: NDArray, grid: Grid) -> None:
    write_field(path, np.asarray(mask, dtype=int), grid, fmt="%d")


def read_field(path: str | Path, grid: Grid | None = None) -> NDArray:
    path = Path(path)
    text = path.read_text().splitlines()
    if not text or not text[0].startswith("#"):
        raise GridError(f"{path}: missing '# grid dim n h' header")
    header = text[0].lstrip("#").split()
    if len(header) != 4 or header[0] != "grid":
        raise GridError(f"{path}: malformed header {text[0]!r}")
    dim, n = int(header[1]), int(header[2])
    rows = [line for line in text[1:] if line.strip()]
    values = np.array([[float(v) for v in row.split(",")] for row in rows])
    values = values.reshape((n,) * dim)
    if grid is not None:
        if dim != grid.dim or n != grid.n:
            raise GridError(f"{path}: file grid (dim={dim}, n={n}) does not match (dim={grid.dim}, n={grid.n})")
    return values


def read_mask(path: str | Path, grid: Grid | None = None) -> NDArray:
    return read_field(path, grid) != 0


# --------------------------------------------------------------------------- components


def _cross(dim: int) -> NDArray:
    return ndimage.generate_binary_structure(dim, 1)


def neighbours_ring(mask: NDArray) -> NDArray:
    """Nodes at graph distance exactly 1 from ``mask`` (4-connectivity)."""
    grown = ndimage.binary_dilation(mask, structure=_cross(mask.ndim))
    return grown & ~mask


def closure(mask: NDArray) -> NDArray:
    """Discrete closure: the mask together with its one-ring."""
    return mask | neighbours_ring(mask)


def discrete_interior(grid: Grid, region: NDArray) -> NDArray:
    """Non-boundary nodes of ``region`` whose graph neighbours all lie in ``region``."""
    eroded = ndimage.binary_erosion(region, structure=_cross(grid.dim), border_value=1)
    return eroded & grid.interior


@dataclass(eq=False)
class ComponentSet:
    """Positivity components of a weight (the omega_i) plus bookkeeping.

    ``regions[i]`` is the 4-connected component of ``{a >= 0}`` holding
    omega_i; it equals the closure of omega_i in 1D and also picks up the
    diagonal corner nodes that the erosion drops in 2D.
    """

    omega: list[NDArray]
    contains_positive: list[bool]
    surrounded: list[bool]
    zero_components: list[NDArray]
    regions: list[NDArray] = field(default_factory=list)

    @property
    def n_components(self) -> int:
        return len(self.omega)

    @property
    def holds_a1(self) -> bool:
        return self.n_components >= 1

    @property
    def holds_a2(self) -> bool:
        return self.holds_a1 and all(self.surrounded)

    def union(self) -> NDArray:
        out = np.zeros_like(self.omega[0]) if self.omega else None
        for m in self.omega:
            out = out | m
        return out

    def closures(self) -> list[NDArray]:
        return [closure(m) for m in self.omega]

    def exclusion(self, i: int) -> NDArray:
        """Nodes a field must vanish on to exclude omega_i."""
        if self.regions:
            return self.regions[i] | closure(self.omega[i])
        return closure(self.omega[i])


def detect_components(grid: Grid, a: NDArray) -> ComponentSet:
    """Connected components of the discrete interior of ``{a >= 0}``.

    Components meeting ``{a > 0}`` are returned as ``omega``; components where
    ``a == 0`` identically go to ``zero_components``.  A component is
    surrounded when the part of ``{a >= 0}`` holding it contains no other
    component, stays off the boundary and is ringed by interior nodes (where
    ``a < 0`` by construction).
    """
    a = grid.check_field(a, "weight")
    cross = _cross(grid.dim)
    inner = discrete_interior(grid, a >= 0)
    labels, count = ndimage.label(inner, structure=cross)
    outer, _ = ndimage.label(a >= 0, structure=cross)
    owners = [int(outer[labels == k][0]) for k in range(1, count + 1)]
    omega, positive, surrounded, zeros, regions = [], [], [], [], []
    for k in range(1, count + 1):
        comp = labels == k
        if not np.any(a[comp] > 0):
            zeros.append(comp)
            continue
        owner = owners[k - 1]
        region = outer == owner
        ring = neighbours_ring(region)
        ok = (
            owners.count(owner) == 1
            and not np.any(region & grid.boundary)
            and bool(np.any(ring))
            and not np.any(ring & grid.boundary)
        )
        omega.append(comp)
        positive.append(True)
        surrounded.append(ok)
        regions.append(region)
    return ComponentSet(
        omega=omega, contains_positive=positive, surrounded=surrounded, zero_components=zeros, regions=regions
    )


def min_gap(grid: Grid, masks: list[NDArray]) -> float:
    """Smallest Euclidean distance between nodes of two different masks."""
    best = np.inf
    for m1, m2 in itertools.combinations(masks, 2):
        tree = cKDTree(grid.node_points(m2))
        d, _ = tree.query(grid.node_points(m1))
        best = min(best, float(d.min()))
    return best


def default_eps0(grid: Grid, comps: ComponentSet) -> float:
    """Largest inclusive dilation radius keeping the omega_i neighbourhoods disjoint."""
    if comps.n_components < 2:
        gap = 2.0 * float(np.max(grid.coords))
        return max(grid.h, 0.25 * gap)
    gap = min_gap(grid, comps.omega)
    return max(grid.h, 0.5 * (gap - grid.h))


# --------------------------------------------------------------------------- set metrics


def dilate(grid: Grid, mask: NDArray, eps: float) -> NDArray:
    """All nodes within Euclidean distance ``eps`` of ``mask`` (inclusive)."""
    if eps < grid.h * (1 - _DIST_SLACK):
        raise GridError(f"dilation radius {eps} below grid spacing {grid.h}")
    mask = grid.check_field(mask, "mask").astype(bool)
    if not mask.any():
        return mask.copy()
    dist = ndimage.distance_transform_edt(~mask, sampling=grid.h)
    return dist <= eps * (1 + _DIST_SLACK)


def touches_boundary(grid: Grid, mask: NDArray) -> bool:
    return bool(np.any(mask & grid.boundary))


def pairwise_disjoint(masks: list[NDArray]) -> bool:
    return not any(np.any(m1 & m2) for m1, m2 in itertools.combinations(masks, 2))


def directed_hausdorff(grid: Grid, A: NDArray, B: NDArray) -> float:
    """``sup_{x in A} dist(x, B)``."""
    if not A.any() or not B.any():
        raise GridError("Hausdorff distance of an empty set")
    d, _ = cKDTree(grid.node_points(B)).query(grid.node_points(A))
    return float(d.max())


def hausdorff(grid: Grid, A: NDArray, B: NDArray) -> float:
    A = np.asarray(A, dtype=bool)
    B = np.asarray(B, dtype=bool)
    return max(directed_hausdorff(grid, A, B), directed_hausdorff(grid, B, A))
