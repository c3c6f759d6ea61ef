"""Structured-grid finite element kernel.

Bilinear quadrilaterals (plane strain) in 2D and trilinear hexahedra in 3D
on uniform voxel grids, with per-element constitutive matrices, sparse
assembly, direct or CG solves, and compliance evaluation.

Voigt conventions: 2D (11, 22, 12), 3D (11, 22, 33, 23, 13, 12), both with
engineering shear strains.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "GridModel",
    "LinearSystem",
    "RigidModeError",
    "make_grid",
    "element_stiffness",
    "element_stiffness_batch",
    "assemble",
    "assemble_and_solve",
    "solve",
    "compliance",
    "check_voigt_stiffness",
]

_GP_1D = np.array([-1.0, 1.0]) / np.sqrt(3.0)


class RigidModeError(RuntimeError):
    """Raised when the constrained system is singular (insufficient supports)."""


def check_voigt_stiffness(C, dim, rtol=1e-10):
    """Validate a Voigt stiffness matrix: shape, symmetry, positive definiteness."""
    C = np.asarray(C, dtype=float)
    size = 3 if dim == 2 else 6
    if C.shape != (size, size):
        raise ValueError(
            f"stiffness matrix of shape {C.shape} incompatible with {dim}D grid"
        )
    asym = np.linalg.norm(C - C.T)
    if asym > rtol * max(np.linalg.norm(C), 1e-300):
        raise ValueError(f"stiffness matrix not symmetric (asymmetry {asym:.3e})")
    if np.linalg.eigvalsh(0.5 * (C + C.T)).min() <= 0.0:
        raise ValueError("stiffness matrix not positive definite")
    return C


@dataclass
class GridModel:
    """Uniform structured grid with boundary conditions.

    Nodes are ordered x-fastest, then y, then z.  Element connectivity for
    quads is counterclockwise; hexahedra list the bottom face then the top.
    """

    dimension: int
    nel: tuple
    dx: tuple
    nodes: np.ndarray
    conn: np.ndarray
    fixed_dofs: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    fixed_values: np.ndarray = field(default_factory=lambda: np.empty(0))
    f: np.ndarray = None

    def __post_init__(self):
        if self.f is None:
            self.f = np.zeros(self.n_dofs)

    @property
    def n_elements(self):
        return self.conn.shape[0]

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_dofs(self):
        return self.dimension * self.n_nodes

    @property
    def element_volume(self):
        return float(np.prod(self.dx))

    @property
    def total_volume(self):
        return self.element_volume * self.n_elements

    def element_dofs(self):
        """(n_elements, dofs_per_element) global dof indices."""
        dim = self.dimension
        dofs = (self.conn[:, :, None] * dim + np.arange(dim)).reshape(
            self.n_elements, -1
        )
        return dofs

    def element_centers(self):
        dim = self.dimension
        return self.nodes[self.conn].mean(axis=1)[:, :dim]

    def node_index(self, ijk):
        """Global node index from per-axis integer coordinates."""
        nx = self.nel[0] + 1
        if self.dimension == 2:
            i, j = ijk
            return j * nx + i
        i, j, k = ijk
        ny = self.nel[1] + 1
        return (k * ny + j) * nx + i

    def nearest_node(self, point):
        pt = np.asarray(point, dtype=float)
        d2 = np.sum((self.nodes[:, : self.dimension] - pt) ** 2, axis=1)
        return int(np.argmin(d2))

    def add_point_load(self, point, dof, value):
        """Apply a point load at the node nearest to ``point``."""
        n = self.nearest_node(point)
        self.f[self.dimension * n + dof] += value

    def fix_dof(self, node, dof, value=0.0):
        idx = self.dimension * node + dof
        self.fixed_dofs = np.append(self.fixed_dofs, idx)
        self.fixed_values = np.append(self.fixed_values, value)

    def validate(self):
        ndof = self.n_dofs
        if self.fixed_dofs.size and (
            self.fixed_dofs.min() < 0 or self.fixed_dofs.max() >= ndof
        ):
            raise ValueError("constrained dof index out of range")
        loaded = np.flatnonzero(self.f)
        clash = np.intersect1d(loaded, self.fixed_dofs)
        for idx in clash:
            pos = np.flatnonzero(self.fixed_dofs == idx)
            if np.any(self.fixed_values[pos] != 0.0):
                raise ValueError(f"dof {idx} is both loaded and fixed to nonzero value")


def make_grid(nel, lengths):
    """Build a uniform grid with ``nel`` elements per axis spanning ``lengths``."""
    nel = tuple(int(n) for n in nel)
    lengths = tuple(float(v) for v in lengths)
    dim = len(nel)
    if dim not in (2, 3) or len(lengths) != dim:
        raise ValueError("nel and lengths must both have length 2 or 3")
    dx = tuple(L / n for L, n in zip(lengths, nel))
    axes = [np.linspace(0.0, L, n + 1) for L, n in zip(lengths, nel)]
    if dim == 2:
        X, Y = np.meshgrid(axes[0], axes[1], indexing="xy")
        nodes = np.column_stack([X.ravel(), Y.ravel()])
        nx, ny = nel
        i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
        i, j = i.ravel(), j.ravel()
        n0 = j * (nx + 1) + i
        conn = np.column_stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1])
    else:
        Z, Y, X = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
        nodes = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
        nx, ny, nz = nel
        k, j, i = np.meshgrid(
            np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij"
        )
        i, j, k = i.ravel(), j.ravel(), k.ravel()
        nxy = (nx + 1) * (ny + 1)
        n0 = k * nxy + j * (nx + 1) + i
        bottom = np.column_stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1])
        conn = np.column_stack([bottom, bottom + nxy])
    return GridModel(dim, nel, dx, nodes, conn.astype(int))


def _b_matrices(dim, dx):
    """Strain-displacement matrices at full Gauss points, plus weight*detJ.

    Identical for every element on a uniform grid.
    """
    if dim == 2:
        hx, hy = dx
        corners = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)
        gps = np.array([[a, b] for b in _GP_1D for a in _GP_1D])
        Bs = np.zeros((len(gps), 3, 8))
        for g, (xi, eta) in enumerate(gps):
            # dN/dxi, dN/deta of the bilinear shape functions
            dN = np.array(
                [
                    corners[:, 0] * (1 + corners[:, 1] * eta) / 4.0,
                    corners[:, 1] * (1 + corners[:, 0] * xi) / 4.0,
                ]
            )
            dNx = dN[0] * 2.0 / hx
            dNy = dN[1] * 2.0 / hy
            B = Bs[g]
            B[0, 0::2] = dNx
            B[1, 1::2] = dNy
            B[2, 0::2] = dNy
            B[2, 1::2] = dNx
        w = np.full(len(gps), hx * hy / 4.0)
        return Bs, w
    hx, hy, hz = dx
    corners = np.array(
        [
            [-1, -1, -1],
            [1, -1, -1],
            [1, 1, -1],
            [-1, 1, -1],
            [-1, -1, 1],
            [1, -1, 1],
            [1, 1, 1],
            [-1, 1, 1],
        ],
        dtype=float,
    )
    gps = np.array([[a, b, c] for c in _GP_1D for b in _GP_1D for a in _GP_1D])
    Bs = np.zeros((len(gps), 6, 24))
    for g, (xi, eta, zeta) in enumerate(gps):
        dN = np.array(
            [
                corners[:, 0] * (1 + corners[:, 1] * eta) * (1 + corners[:, 2] * zeta),
                corners[:, 1] * (1 + corners[:, 0] * xi) * (1 + corners[:, 2] * zeta),
                corners[:, 2] * (1 + corners[:, 0] * xi) * (1 + corners[:, 1] * eta),
            ]
        ) / 8.0
        dNx = dN[0] * 2.0 / hx
        dNy = dN[1] * 2.0 / hy
        dNz = dN[2] * 2.0 / hz
        B = Bs[g]
        B[0, 0::3] = dNx
        B[1, 1::3] = dNy
        B[2, 2::3] = dNz
        B[3, 1::3] = dNz  # gamma_23 = du2/dx3 + du3/dx2
        B[3, 2::3] = dNy
        B[4, 0::3] = dNz  # gamma_13
        B[4, 2::3] = dNx
        B[5, 0::3] = dNy  # gamma_12
        B[5, 1::3] = dNx
    w = np.full(len(gps), hx * hy * hz / 8.0)
    return Bs, w


_B_CACHE = {}


def _b_cached(dim, dx):
    key = (dim, tuple(dx))
    if key not in _B_CACHE:
        _B_CACHE[key] = _b_matrices(dim, dx)
    return _B_CACHE[key]


def element_stiffness(grid, e, C):
    """Element stiffness integral B^T C B over element ``e`` (full quadrature)."""
    C = check_voigt_stiffness(C, grid.dimension)
    Bs, w = _b_cached(grid.dimension, grid.dx)
    Ke = np.einsum("gsi,st,gtj,g->ij", Bs, C, Bs, w)
    return 0.5 * (Ke + Ke.T)


def element_stiffness_batch(grid, Cs):
    """Stack of element stiffness matrices for per-element C (ne, k, k)."""
    Cs = np.asarray(Cs, dtype=float)
    Bs, w = _b_cached(grid.dimension, grid.dx)
    Ke = np.einsum("gsi,est,gtj,g->eij", Bs, Cs, Bs, w, optimize=True)
    return 0.5 * (Ke + Ke.transpose(0, 2, 1))


@dataclass
class LinearSystem:
    """Assembled sparse system with its (possibly solved) displacement vector."""

    K: sp.csr_matrix
    f: np.ndarray
    u: np.ndarray = None


def assemble(grid, Ke_all):
    """Assemble the global sparse stiffness matrix from element matrices."""
    dofs = grid.element_dofs()
    nd = dofs.shape[1]
    rows = np.repeat(dofs, nd, axis=1).ravel()
    cols = np.tile(dofs, (1, nd)).ravel()
    K = sp.coo_matrix(
        (Ke_all.ravel(), (rows, cols)), shape=(grid.n_dofs, grid.n_dofs)
    ).tocsc()
    return K


def solve(grid, K, f, method="direct", cg_tol=1e-10):
    """Solve K u = f with Dirichlet constraints applied by elimination."""
    grid.validate()
    ndof = grid.n_dofs
    fixed = grid.fixed_dofs
    free = np.setdiff1d(np.arange(ndof), fixed)
    u = np.zeros(ndof)
    u[fixed] = grid.fixed_values
    rhs = f[free] - K[np.ix_(free, fixed)] @ grid.fixed_values
    Kff = K[np.ix_(free, free)].tocsc()
    if method == "direct":
        try:
            lu = spla.splu(Kff)
        except RuntimeError as err:
            raise RigidModeError(
                f"singular stiffness matrix; check supports ({err})"
            ) from err
        u_free = lu.solve(rhs)
    elif method == "cg":
        M = sp.diags(1.0 / Kff.diagonal())
        u_free, info = spla.cg(Kff, rhs, rtol=cg_tol, atol=0.0, M=M, maxiter=20000)
        if info != 0:
            raise RigidModeError(f"CG failed to converge (info={info})")
    else:
        raise ValueError(f"unknown solver method {method!r}")
    if not np.all(np.isfinite(u_free)):
        raise RigidModeError("non-finite solution; system likely has rigid modes")
    u[free] = u_free
    fn = np.linalg.norm(f[free])
    if fn > 0.0:
        res = np.linalg.norm(Kff @ u_free - rhs) / max(np.linalg.norm(rhs), 1e-300)
        if res > 1e-8:
            raise RigidModeError(f"large solve residual {res:.3e}; rigid modes?")
    return u


def assemble_and_solve(grid, per_element_C, method="direct", cg_tol=1e-10):
    """Assemble per-element stiffness and solve the constrained system."""
    Cs = np.asarray(per_element_C, dtype=float)
    size = 3 if grid.dimension == 2 else 6
    if Cs.shape != (grid.n_elements, size, size):
        raise ValueError(
            f"expected {grid.n_elements} stiffness matrices of size {size}"
        )
    Ke_all = element_stiffness_batch(grid, Cs)
    K = assemble(grid, Ke_all)
    u = solve(grid, K, grid.f, method=method, cg_tol=cg_tol)
    return LinearSystem(K=K.tocsr(), f=grid.f.copy(), u=u)


def compliance(sys):
    """External work f^T u of a solved system."""
    if sys.u is None:
        raise ValueError("system has not been solved")
    return float(sys.f @ sys.u)
