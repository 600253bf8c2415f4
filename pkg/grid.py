# grid.py — Masked uniform grids and the discrete Dirichlet Laplacian for nodal-lab

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from config import (
    MEMBERSHIP_EPS,
    MIN_NODES_ACROSS,
    OUTPUT_DIGITS,
    log
)


class GridError(Exception):
    pass


DOMAIN_KINDS = ("square", "rectangle", "disk", "annulus", "dumbbell")

# Node-permutation symmetries of a grid
SYMMETRIES = ("x_axis", "y_axis", "diagonal", "anti_diagonal", "center")


# ==============================================================================
# DOMAINS
# ==============================================================================

@dataclass(frozen=True)
class DomainSpec:
    """
    One of the planar domains the toolkit discretizes. Lengths are
    dimensionless; only the fields belonging to `kind` are set.
    """

    kind: str
    side: float | None = None
    width: float | None = None
    height: float | None = None
    radius: float | None = None
    inner: float | None = None
    outer: float | None = None
    lobe_radius: float | None = None
    delta: float | None = None
    channel_length: float | None = None

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise ValueError(f"Unknown domain kind: {self.kind}")

        required = {
            "square": ("side",),
            "rectangle": ("width", "height"),
            "disk": ("radius",),
            "annulus": ("inner", "outer"),
            "dumbbell": ("lobe_radius", "delta", "channel_length"),
        }[self.kind]

        for name in required:
            value = getattr(self, name)
            if value is None or not math.isfinite(value) or value <= 0:
                raise ValueError(f"{self.kind}: {name} must be a positive length, got {value}")

        if self.kind == "annulus" and self.inner >= self.outer:
            raise ValueError("annulus: inner radius must be smaller than outer radius")
        if self.kind == "dumbbell" and self.delta >= 2 * self.lobe_radius:
            raise ValueError("dumbbell: channel width must be below twice the lobe radius")

    # ---------------------------------------------------------------
    # Constructors
    # ---------------------------------------------------------------

    @classmethod
    def square(cls, side: float) -> "DomainSpec":
        return cls("square", side=side)

    @classmethod
    def rectangle(cls, width: float, height: float) -> "DomainSpec":
        return cls("rectangle", width=width, height=height)

    @classmethod
    def disk(cls, radius: float) -> "DomainSpec":
        return cls("disk", radius=radius)

    @classmethod
    def annulus(cls, inner: float, outer: float) -> "DomainSpec":
        return cls("annulus", inner=inner, outer=outer)

    @classmethod
    def dumbbell(cls, lobe_radius: float, delta: float, channel_length: float) -> "DomainSpec":
        return cls("dumbbell", lobe_radius=lobe_radius, delta=delta, channel_length=channel_length)

    # ---------------------------------------------------------------
    # Geometry
    # ---------------------------------------------------------------

    @property
    def is_radial(self) -> bool:
        return self.kind in ("disk", "annulus")

    @property
    def extent(self) -> tuple[float, float]:
        """Width and height of the rectangle, or half-extents of centered shapes."""
        if self.kind == "square":
            return self.side, self.side
        if self.kind == "rectangle":
            return self.width, self.height
        if self.kind == "disk":
            return self.radius, self.radius
        if self.kind == "annulus":
            return self.outer, self.outer
        c = self.lobe_offset
        return c + self.lobe_radius, self.lobe_radius

    @property
    def lobe_offset(self) -> float:
        """Distance from the origin to each dumbbell lobe center."""
        return self.lobe_radius + 0.5 * self.channel_length

    def characteristic_lengths(self) -> tuple[float, ...]:
        if self.kind == "square":
            return (self.side,)
        if self.kind == "rectangle":
            return (self.width, self.height)
        if self.kind == "disk":
            return (2 * self.radius,)
        if self.kind == "annulus":
            return (self.outer - self.inner,)
        return (2 * self.lobe_radius, self.channel_length)

    def contains(self, X: np.ndarray, Y: np.ndarray, slack: float) -> np.ndarray:
        """Strict membership of points in the open domain, `slack` inward."""
        if self.kind in ("square", "rectangle"):
            W, H = self.extent
            return (X > slack) & (X < W - slack) & (Y > slack) & (Y < H - slack)

        R2 = X ** 2 + Y ** 2
        if self.kind == "disk":
            return R2 < (self.radius - slack) ** 2
        if self.kind == "annulus":
            return (R2 > (self.inner + slack) ** 2) & (R2 < (self.outer - slack) ** 2)

        r = self.lobe_radius - slack
        c = self.lobe_offset
        left = (X + c) ** 2 + Y ** 2 < r ** 2
        right = (X - c) ** 2 + Y ** 2 < r ** 2
        channel = (np.abs(X) < c) & (np.abs(Y) < 0.5 * self.delta - slack)
        return left | right | channel


# ==============================================================================
# MESH
# ==============================================================================

@dataclass(frozen=True, eq=False)
class Mesh:
    """
    Uniform grid over the bounding box of a domain with a boolean mask of
    interior nodes. Arrays are indexed [row j (y), column i (x)]; interior
    nodes are numbered row-major.
    """

    domain: DomainSpec
    h: float
    anchor: tuple[int, int]
    nx: int
    ny: int
    mask: np.ndarray
    index: np.ndarray
    region: str = "full"

    @property
    def M(self) -> int:
        return int(self.mask.sum())

    @property
    def origin(self) -> tuple[float, float]:
        """Coordinates of node (0, 0)."""
        return -self.anchor[0] * self.h, -self.anchor[1] * self.h

    @cached_property
    def X(self) -> np.ndarray:
        return _node_coordinates(self.nx, self.ny, self.anchor, self.h)[0]

    @cached_property
    def Y(self) -> np.ndarray:
        return _node_coordinates(self.nx, self.ny, self.anchor, self.h)[1]

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """(x, y) of the interior nodes in index order."""
        return self.X[self.mask], self.Y[self.mask]

    @property
    def center(self) -> tuple[float, float]:
        return (
            self.origin[0] + 0.5 * (self.nx - 1) * self.h,
            self.origin[1] + 0.5 * (self.ny - 1) * self.h,
        )

    def to_grid(self, values: np.ndarray, fill: float = np.nan) -> np.ndarray:
        grid = np.full((self.ny, self.nx), fill, dtype=float)
        grid[self.mask] = values
        return grid

    def same_lattice(self, other: "Mesh") -> bool:
        return (
            self.h == other.h
            and self.anchor == other.anchor
            and self.nx == other.nx
            and self.ny == other.ny
        )


def _node_coordinates(nx: int, ny: int, anchor: tuple[int, int], h: float) -> tuple[np.ndarray, np.ndarray]:
    # integer offsets times h: mirrored nodes get exactly negated coordinates
    X = (np.arange(nx)[None, :] - anchor[0]) * h + np.zeros((ny, 1))
    Y = (np.arange(ny)[:, None] - anchor[1]) * h + np.zeros((1, nx))
    return X, Y


def build_mesh(spec: DomainSpec, h: float) -> Mesh:
    """
    Builds the masked grid of `spec` with spacing h. Rectangles put their
    lower-left corner on a node; centered shapes put the origin on a node.
    """

    if not (math.isfinite(h) and h > 0):
        raise GridError(f"Grid spacing must be positive, got {h}")

    if spec.kind == "dumbbell" and spec.delta < h:
        raise GridError(
            f"Channel width {spec.delta} is narrower than the grid spacing {h}: "
            "the channel spans no interior row"
        )

    slack = MEMBERSHIP_EPS * h

    if spec.kind in ("square", "rectangle"):
        W, H = spec.extent
        nx = int(math.ceil(W / h - MEMBERSHIP_EPS)) + 1
        ny = int(math.ceil(H / h - MEMBERSHIP_EPS)) + 1
        anchor = (0, 0)
    else:
        ex, ey = spec.extent
        kx = int(math.ceil(ex / h + MEMBERSHIP_EPS)) + 1
        ky = int(math.ceil(ey / h + MEMBERSHIP_EPS)) + 1
        nx, ny = 2 * kx + 1, 2 * ky + 1
        anchor = (kx, ky)

    X, Y = _node_coordinates(nx, ny, anchor, h)
    mask = spec.contains(X, Y, slack)

    if mask[0, :].any() or mask[-1, :].any() or mask[:, 0].any() or mask[:, -1].any():
        raise GridError("Interior node on the bounding ring; grid construction is inconsistent")

    M = int(mask.sum())
    if M == 0:
        raise GridError(f"Degenerate mesh: {spec.kind} with h={h} has no interior nodes")

    for length in spec.characteristic_lengths():
        across = length / h - 1
        if across < MIN_NODES_ACROSS:
            log(f"WARNING: only {across:.1f} interior nodes across length {length:.4g} (h={h:.4g})")

    index = np.full((ny, nx), -1, dtype=np.int64)
    index[mask] = np.arange(M)

    mesh = Mesh(
        domain=spec,
        h=float(h),
        anchor=anchor,
        nx=nx,
        ny=ny,
        mask=mask,
        index=index,
    )
    log(f"Built {spec.kind} mesh: h={h:.6g}, {nx}x{ny} nodes, M={M} interior")
    return mesh


def submesh(mesh: Mesh, keep: np.ndarray | Callable[[np.ndarray, np.ndarray], np.ndarray],
            region: str = "sub") -> Mesh:
    """
    Restricts a mesh to the interior nodes where `keep` holds, on the same
    lattice, so fields embed exactly by zero extension.
    """

    if callable(keep):
        keep = keep(np.asarray(mesh.X), np.asarray(mesh.Y))
    mask = mesh.mask & np.asarray(keep, dtype=bool)

    M = int(mask.sum())
    if M == 0:
        raise GridError(f"Sub-mesh '{region}' has no interior nodes")

    index = np.full(mask.shape, -1, dtype=np.int64)
    index[mask] = np.arange(M)
    return Mesh(
        domain=mesh.domain,
        h=mesh.h,
        anchor=mesh.anchor,
        nx=mesh.nx,
        ny=mesh.ny,
        mask=mask,
        index=index,
        region=region,
    )


# ==============================================================================
# SCALAR FIELDS
# ==============================================================================

@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real values at the interior nodes of one mesh."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        if values.shape != (self.mesh.M,):
            raise GridError(f"Field has {values.size} values, mesh has {self.mesh.M} interior nodes")
        if not np.all(np.isfinite(values)):
            raise GridError("Field contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, mesh: Mesh) -> "ScalarField":
        return cls(mesh, np.zeros(mesh.M))

    @classmethod
    def from_function(cls, mesh: Mesh, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "ScalarField":
        x, y = mesh.coords
        return cls(mesh, np.broadcast_to(fn(x, y), x.shape))

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.mesh, values)

    def to_grid(self, fill: float = np.nan) -> np.ndarray:
        return self.mesh.to_grid(self.values, fill)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def _check(self, other: "ScalarField"):
        if other.mesh is not self.mesh:
            raise GridError("Fields live on different meshes")

    def __neg__(self) -> "ScalarField":
        return self.with_values(-self.values)

    def __add__(self, other: "ScalarField") -> "ScalarField":
        self._check(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        self._check(other)
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar: float) -> "ScalarField":
        return self.with_values(float(scalar) * self.values)

    __rmul__ = __mul__


def extend_by_zero(u: ScalarField, mesh: Mesh) -> ScalarField:
    """Embeds a sub-mesh field into `mesh`, zero elsewhere."""
    sub = u.mesh
    if not sub.same_lattice(mesh) or np.any(sub.mask & ~mesh.mask):
        raise GridError("Field mesh is not a sub-mesh of the target mesh")
    values = np.zeros(mesh.M)
    values[mesh.index[sub.mask]] = u.values
    return ScalarField(mesh, values)


def restrict(u: ScalarField, sub: Mesh) -> ScalarField:
    mesh = u.mesh
    if not sub.same_lattice(mesh) or np.any(sub.mask & ~mesh.mask):
        raise GridError("Target is not a sub-mesh of the field mesh")
    return ScalarField(sub, u.values[mesh.index[sub.mask]])


# ==============================================================================
# DISCRETE OPERATOR AND QUADRATURE
# ==============================================================================

@lru_cache(maxsize=32)
def neg_laplacian(mesh: Mesh) -> sp.csr_matrix:
    """
    5-point stencil of -Delta with homogeneous Dirichlet data: 4/h^2 on the
    diagonal, -1/h^2 for each interior neighbor.
    """

    rows, cols = np.nonzero(mesh.mask)
    idx = mesh.index[rows, cols]
    inv_h2 = 1.0 / mesh.h ** 2

    I = [idx]
    J = [idx]
    V = [np.full(idx.size, 4.0 * inv_h2)]

    # the bounding ring is masked off, so neighbor lookups stay in range
    for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nb = mesh.index[rows + dr, cols + dc]
        keep = nb >= 0
        I.append(idx[keep])
        J.append(nb[keep])
        V.append(np.full(int(keep.sum()), -inv_h2))

    A = sp.csr_matrix(
        (np.concatenate(V), (np.concatenate(I), np.concatenate(J))),
        shape=(mesh.M, mesh.M),
    )
    A.sum_duplicates()
    A.sort_indices()
    return A


def integrate(u: ScalarField) -> float:
    """Midpoint-type quadrature: h^2 times the sum over interior nodes."""
    return float(u.mesh.h ** 2 * np.sum(u.values))


def inner_l2(u: ScalarField, v: ScalarField) -> float:
    if u.mesh is not v.mesh:
        raise GridError("inner_l2: fields live on different meshes")
    return float(u.mesh.h ** 2 * np.dot(u.values, v.values))


def norm_l2(u: ScalarField) -> float:
    return math.sqrt(max(inner_l2(u, u), 0.0))


# ==============================================================================
# REFLECTIONS
# ==============================================================================

def _transform(sym: str) -> Callable[[np.ndarray], np.ndarray]:
    if sym == "x_axis":
        return lambda a: a[::-1, :]
    if sym == "y_axis":
        return lambda a: a[:, ::-1]
    if sym == "diagonal":
        return lambda a: a.T
    if sym == "anti_diagonal":
        return lambda a: a[::-1, ::-1].T
    if sym == "center":
        return lambda a: a[::-1, ::-1]
    raise GridError(f"Unknown grid symmetry: {sym}")


def is_symmetric(mesh: Mesh, sym: str) -> bool:
    T = _transform(sym)
    if sym in ("diagonal", "anti_diagonal") and mesh.nx != mesh.ny:
        return False
    return bool(np.array_equal(T(mesh.mask), mesh.mask))


@lru_cache(maxsize=128)
def reflection_permutation(mesh: Mesh, sym: str) -> np.ndarray:
    """perm with reflect(u).values == u.values[perm]; an involution."""
    if not is_symmetric(mesh, sym):
        raise GridError(f"Mesh ({mesh.domain.kind}, {mesh.region}) is not symmetric under {sym}")
    perm = _transform(sym)(mesh.index)[mesh.mask]
    perm.setflags(write=False)
    return perm


def reflect(u: ScalarField, sym: str) -> ScalarField:
    return u.with_values(u.values[reflection_permutation(u.mesh, sym)])


def reflection_side(mesh: Mesh, sym: str) -> np.ndarray:
    """
    +1 / 0 / -1 per interior node: positive half, fixed line, reflected half
    of a line reflection.
    """
    if sym == "center":
        raise GridError("A point reflection has no half space")
    if not is_symmetric(mesh, sym):
        raise GridError(f"Mesh is not symmetric under {sym}")

    J, I = np.nonzero(mesh.mask)
    if sym == "y_axis":
        key = 2 * I - (mesh.nx - 1)
    elif sym == "x_axis":
        key = 2 * J - (mesh.ny - 1)
    elif sym == "diagonal":
        key = I - J
    else:
        key = I + J - (mesh.nx - 1)
    return np.sign(key).astype(np.int64)


# ==============================================================================
# FIELD DUMPS
# ==============================================================================

def write_field(path: str | Path, u: ScalarField) -> Path:
    """
    Plain-text dump: header `# nx ny h x0 y0`, then ny rows of nx values,
    non-interior nodes written as nan.
    """
    mesh = u.mesh
    path = Path(path)
    fmt = f"%.{OUTPUT_DIGITS}g"
    header = " ".join([
        str(mesh.nx),
        str(mesh.ny),
        fmt % mesh.h,
        fmt % mesh.origin[0],
        fmt % mesh.origin[1],
    ])
    np.savetxt(path, u.to_grid(), fmt=fmt, header=header, comments="# ")
    return path


def read_field(path: str | Path, mesh: Mesh) -> ScalarField:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().lstrip("#").split()

    if len(header) != 5:
        raise GridError(f"{path}: malformed field header")
    nx, ny = int(header[0]), int(header[1])
    if (nx, ny) != (mesh.nx, mesh.ny) or not math.isclose(float(header[2]), mesh.h, rel_tol=1e-10):
        raise GridError(f"{path}: dump does not match the mesh lattice")

    grid = np.atleast_2d(np.loadtxt(path, comments="#"))
    return ScalarField(mesh, grid[mesh.mask])
