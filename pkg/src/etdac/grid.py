"""Uniform cell-centered meshes, grid functions, and discrete norms.

The domain (0, lx) x (0, ly) is split into nx * ny cells with centers at
((i + 1/2) hx, (j + 1/2) hy).  Cell centering makes the homogeneous-Neumann
central-difference Laplacian exactly diagonal in the cosine basis, which the
spectral module relies on.

Grid functions are stored flat with i varying fastest, so values[j*nx + i]
holds the cell (i, j).  The layout is fixed so CSV dumps and transforms are
bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Mesh2D",
    "Field",
    "max_norm",
    "l2_norm",
    "inner",
    "discrete_energy",
    "write_field_csv",
    "read_field_csv",
]


@dataclass(frozen=True)
class Mesh2D:
    """Uniform rectangular mesh of nx * ny cells on (0, lx) x (0, ly)."""

    lx: float
    ly: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"need at least 2 cells per dimension, got {self.nx}x{self.ny}")
        if not (self.lx > 0 and self.ly > 0):
            raise ValueError("domain edge lengths must be positive")

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def ncells(self) -> int:
        return self.nx * self.ny

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate arrays (x, y), each shaped (ny, nx) like a field grid."""
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.broadcast_to(x, (self.ny, self.nx)), np.broadcast_to(y[:, None], (self.ny, self.nx))


@dataclass
class Field:
    """Scalar grid function; values flat of length nx*ny, i fastest."""

    mesh: Mesh2D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(self.mesh.ncells)

    def grid(self) -> np.ndarray:
        """(ny, nx) view of the values; entry [j, i] is cell (i, j)."""
        return self.values.reshape(self.mesh.ny, self.mesh.nx)

    def copy(self) -> "Field":
        return Field(self.mesh, self.values.copy())


def from_grid(mesh: Mesh2D, grid: np.ndarray) -> Field:
    """Wrap a (ny, nx) array as a Field (flattening copies only if needed)."""
    return Field(mesh, np.ascontiguousarray(grid, dtype=np.float64).reshape(mesh.ncells))


def constant_field(mesh: Mesh2D, c: float) -> Field:
    return Field(mesh, np.full(mesh.ncells, float(c)))


def _check_same_mesh(u: Field, v: Field):
    if u.mesh != v.mesh:
        raise ValueError(f"fields live on different meshes: {u.mesh} vs {v.mesh}")


def max_norm(u: Field) -> float:
    """Discrete maximum norm, max over cells of |u|."""
    return float(np.max(np.abs(u.values)))


def inner(u: Field, v: Field) -> float:
    """Discrete L2 inner product hx*hy * sum(u*v).

    numpy's pairwise summation keeps the reduction order deterministic.
    """
    _check_same_mesh(u, v)
    return u.mesh.hx * u.mesh.hy * float(np.sum(u.values * v.values))


def l2_norm(u: Field) -> float:
    """Discrete L2 norm sqrt(inner(u, u))."""
    return float(np.sqrt(u.mesh.hx * u.mesh.hy * np.sum(u.values * u.values)))


def discrete_energy(u: Field, eps: float, potential) -> float:
    """Discrete free energy hx*hy*[ (eps^2/2) sum of squared interior
    face-difference quotients + sum of F(u) over cells ].

    Boundary faces carry zero flux, matching the Neumann Laplacian stencil
    through summation by parts, so discrete dissipation statements are
    self-consistent.  Raises the potential's domain error when F is
    undefined (logarithmic potential with |u| >= 1).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    mesh = u.mesh
    g = u.grid()
    dx = (g[:, 1:] - g[:, :-1]) / mesh.hx
    dy = (g[1:, :] - g[:-1, :]) / mesh.hy
    grad2 = np.sum(dx * dx) + np.sum(dy * dy)
    bulk = np.sum(potential.F(g))
    return mesh.hx * mesh.hy * float(0.5 * eps * eps * grad2 + bulk)


def write_field_csv(u: Field, path) -> None:
    """Field snapshot: header ``i,j,x,y,u``, one row per cell in storage order."""
    mesh = u.mesh
    xg, yg = mesh.cell_centers()
    g = u.grid()
    with open(path, "w", newline="") as fh:
        fh.write("i,j,x,y,u\n")
        for j in range(mesh.ny):
            for i in range(mesh.nx):
                fh.write(f"{i},{j},{xg[j, i]:.17g},{yg[j, i]:.17g},{g[j, i]:.17g}\n")


def read_field_csv(mesh: Mesh2D, path) -> Field:
    """Read a snapshot written by write_field_csv back onto the given mesh."""
    raw = np.genfromtxt(path, delimiter=",", names=True)
    if raw.size != mesh.ncells:
        raise ValueError(f"snapshot has {raw.size} cells, mesh needs {mesh.ncells}")
    vals = np.empty(mesh.ncells)
    idx = raw["j"].astype(int) * mesh.nx + raw["i"].astype(int)
    vals[idx] = raw["u"]
    return Field(mesh, vals)
