"""Finite-difference Dirichlet solver for -div(K grad u) + q u = 0 on a cube.

The complex equation is discretized through its energy form: face-averaged
flux terms for the diagonal tensor entries, node-centered products of
centered differences for the cross terms, and trapezoid mass terms.  The
resulting complex matrix A is symmetric (not Hermitian); the linear solves
run on the equivalent real block system

    [[Re A, -Im A], [Im A, Re A]]

so the strong-ellipticity structure of the 2n x 2n real coefficient block
carries over verbatim to the discrete operator.  One LU factorization per
operator is reused across all right-hand sides.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EllipticityError, FactorizationError, MemoryBudgetError, ResidualError
from .grid import GridDomain
from .medium import OpticalMedium, split_real_imag, verify_ellipticity

MAX_POINTS_PER_AXIS = 49
SOLVE_RTOL = 1e-10


@dataclass
class ComplexField:
    """Complex nodal field; the solver works on its (Re, Im) pair."""

    grid: GridDomain
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.grid.num_points,):
            raise ValueError("field shape does not match the grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    @property
    def real_imag(self) -> np.ndarray:
        return np.concatenate([self.values.real, self.values.imag])


@dataclass
class DiscreteOperator:
    grid: GridDomain
    matrix: sp.csr_matrix          # full complex symmetric energy matrix
    interior_idx: np.ndarray       # unknown nodes
    boundary_idx: np.ndarray       # Dirichlet nodes (complement, ascending)
    include_reaction: bool
    medium_fingerprint: str
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def interior_count(self) -> int:
        return len(self.interior_idx)

    def _interior_blocks(self):
        if "blocks" not in self._cache:
            A_II = self.matrix[self.interior_idx][:, self.interior_idx].tocsc()
            A_IB = self.matrix[self.interior_idx][:, self.boundary_idx].tocsc()
            re, im = A_II.real, A_II.imag
            block = sp.bmat([[re, -im], [im, re]], format="csc")
            self._cache["blocks"] = (A_II, A_IB, block)
        return self._cache["blocks"]

    @property
    def real_block_matrix(self) -> sp.csc_matrix:
        """The real block form of the interior system, shape (2 Ni, 2 Ni)."""
        return self._interior_blocks()[2]

    def factorization(self):
        if "lu" not in self._cache:
            try:
                self._cache["lu"] = spla.splu(self.real_block_matrix)
            except RuntimeError as exc:
                raise FactorizationError(f"sparse LU failed: {exc}") from exc
        return self._cache["lu"]


def _axis_index(grid: GridDomain, axis: int) -> np.ndarray:
    return grid.multi_index()[:, axis]


def assemble(
    medium: OpticalMedium,
    grid: GridDomain | None = None,
    include_reaction: bool = True,
    interior_mask: np.ndarray | None = None,
    grid_cap: int = MAX_POINTS_PER_AXIS,
) -> DiscreteOperator:
    """Assemble the discrete operator for a sampled medium.

    ``interior_mask`` selects the unknown set; by default it is the strict
    cube interior, but any subset of it works (annulus problems pass a
    radial mask).  Raises when the medium violates its ellipticity bounds
    or the grid exceeds the configured cap.
    """
    grid = grid or medium.grid
    if grid.m_per_axis > grid_cap:
        raise MemoryBudgetError(f"m_per_axis={grid.m_per_axis} exceeds the cap {grid_cap}")
    tensor = split_real_imag(medium)
    report = verify_ellipticity(tensor, medium.apriori)
    if not report.admissible:
        raise EllipticityError(
            f"medium violates ellipticity bounds at {len(report.violations)} sample(s); "
            f"first: node {report.violations[0][0]} ({report.violations[0][1]})"
        )

    n = medium.apriori.n
    h = grid.h
    N = grid.num_points
    m = grid.m_per_axis
    strides = grid.strides
    midx = grid.multi_index()

    rows, cols, vals = [], [], []
    on_border = (midx == 0) | (midx == m - 1)

    # face-averaged flux terms for the diagonal tensor entries; the
    # transverse trapezoid fraction keeps the boundary energy functional
    # second-order and leaves every interior equation untouched (faces
    # incident to interior unknowns always carry weight one)
    for d in range(3):
        has_next = midx[:, d] < m - 1
        p = np.flatnonzero(has_next)
        q = p + strides[d]
        transverse = [e for e in range(3) if e != d]
        w_t = 0.5 ** on_border[p][:, transverse].sum(axis=1)
        coef = 0.5 * (tensor.K[p, d, d] + tensor.K[q, d, d]) * h * w_t
        rows += [p, q, p, q]
        cols += [p, q, q, p]
        vals += [coef, coef, -coef, -coef]

    # node-centered cross terms (only present for anisotropic B)
    for d in range(3):
        for e in range(d + 1, 3):
            if not np.any(tensor.K[:, d, e]):
                continue
            ok = (
                (midx[:, d] > 0)
                & (midx[:, d] < m - 1)
                & (midx[:, e] > 0)
                & (midx[:, e] < m - 1)
            )
            p = np.flatnonzero(ok)
            coef = tensor.K[p, d, e] * h * grid.trapezoid_fraction[p] / 4.0
            for s1 in (-1, 1):
                for s2 in (-1, 1):
                    sign = s1 * s2
                    rows += [p + s1 * strides[e], p + s1 * strides[d]]
                    cols += [p + s2 * strides[d], p + s2 * strides[e]]
                    vals += [sign * coef, sign * coef]

    if include_reaction:
        p = np.arange(N)
        rows.append(p)
        cols.append(p)
        vals.append(tensor.q * grid.volume_weights)

    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(N, N),
        dtype=complex,
    ).tocsr()

    if interior_mask is None:
        interior_idx = grid.interior_indices
    else:
        interior_mask = np.asarray(interior_mask, dtype=bool)
        if interior_mask.shape != (N,):
            raise ValueError("interior mask shape does not match the grid")
        if np.any(interior_mask & grid.boundary_mask):
            raise ValueError("interior mask must avoid the cube surface")
        interior_idx = np.flatnonzero(interior_mask)
    boundary_idx = np.setdiff1d(np.arange(N), interior_idx, assume_unique=True)

    return DiscreteOperator(
        grid=grid,
        matrix=A,
        interior_idx=interior_idx,
        boundary_idx=boundary_idx,
        include_reaction=include_reaction,
        medium_fingerprint=medium.fingerprint(),
    )


def _boundary_vector(op: DiscreteOperator, g) -> np.ndarray:
    g = np.asarray(g, dtype=complex)
    if g.shape == (op.grid.num_points,):
        return g[op.boundary_idx]
    if g.shape == (len(op.boundary_idx),):
        return g
    raise ValueError(
        f"boundary data must have length {op.grid.num_points} (full grid) or "
        f"{len(op.boundary_idx)} (boundary set), got {g.shape}"
    )


def solve_dirichlet(op: DiscreteOperator, g, f=None, rtol: float = SOLVE_RTOL) -> ComplexField:
    """Solve L u = f with Dirichlet data g on the complement of the unknown set.

    ``g`` is indexed by ``op.boundary_idx`` (or given as a full nodal array);
    ``f`` is an interior source given as a full nodal array or an array over
    ``op.interior_idx``.  The relative algebraic residual must reach ``rtol``
    (1e-10 by default).
    """
    A_II, A_IB, _ = op._interior_blocks()
    g_b = _boundary_vector(op, g)
    ni = op.interior_count

    rhs = -A_IB @ g_b
    if f is not None:
        f = np.asarray(f, dtype=complex)
        if f.shape == (op.grid.num_points,):
            f_int = f[op.interior_idx]
        elif f.shape == (ni,):
            f_int = f
        else:
            raise ValueError("interior source has the wrong shape")
        rhs = rhs + f_int * op.grid.volume_weights[op.interior_idx]

    values = np.zeros(op.grid.num_points, dtype=complex)
    values[op.boundary_idx] = g_b
    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm == 0.0:
        return ComplexField(op.grid, values)

    lu = op.factorization()
    x = lu.solve(np.concatenate([rhs.real, rhs.imag]))
    u = x[:ni] + 1j * x[ni:]
    residual = np.linalg.norm(A_II @ u - rhs) / rhs_norm
    if not residual <= rtol:
        raise ResidualError(
            f"solve residual {residual:.3e} exceeds {rtol:.1e} "
            f"(grid {op.grid.m_per_axis}^3)"
        )
    values[op.interior_idx] = u
    return ComplexField(op.grid, values)


def apply_operator(op: DiscreteOperator, u) -> np.ndarray:
    """Pointwise operator application over the unknown set.

    Returns (A u)[interior] / h^3, which approximates (L u)(x_i) to second
    order for smooth u; feeding a discrete solution back reproduces its
    source.  ``u`` is a full nodal array or ComplexField.
    """
    if isinstance(u, ComplexField):
        u = u.values
    u = np.asarray(u, dtype=complex)
    if u.shape != (op.grid.num_points,):
        raise ValueError("field shape does not match the grid")
    return (op.matrix @ u)[op.interior_idx] / op.grid.h**3


def schauder_ratios(op: DiscreteOperator, field: ComplexField, radii, center=(0.0, 0.0, 0.0), p=4.0):
    """Interior-regularity monitor over annuli around ``center``.

    For each radius r, returns the ratio of the discrete W^{2,p} seminorm on
    {r < |x - center| < 2r} to ||Lu||_p + r^{-2} ||u||_p on the enclosing
    annulus {r/2 < |x - center| < 4r}.  Interior elliptic regularity keeps
    this bounded; it is a diagnostic, no specific constant is asserted.
    """
    grid = op.grid
    m = grid.m_per_axis
    u = field.values
    cube = u.reshape(m, m, m)
    grads = np.gradient(cube, grid.h, edge_order=2)
    hess_sq = np.zeros(grid.num_points)
    for gcomp in grads:
        for second in np.gradient(gcomp, grid.h, edge_order=2):
            hess_sq += np.abs(second.ravel()) ** 2
    hess = np.sqrt(hess_sq)

    lu = np.zeros(grid.num_points)
    lu[op.interior_idx] = np.abs(apply_operator(op, u))
    dist = np.linalg.norm(grid.points - np.asarray(center, dtype=float), axis=1)
    w = grid.volume_weights
    interior = grid.interior_mask

    out = []
    for r in radii:
        inner = interior & (dist > r) & (dist < 2 * r)
        outer = interior & (dist > r / 2) & (dist < 4 * r)
        if not inner.any() or not outer.any():
            out.append(np.nan)
            continue
        semi = (np.sum(w[inner] * hess[inner] ** p)) ** (1.0 / p)
        source = (np.sum(w[outer] * lu[outer] ** p)) ** (1.0 / p)
        mass = (np.sum(w[outer] * np.abs(u[outer]) ** p)) ** (1.0 / p)
        out.append(semi / (source + mass / r**2 + 1e-300))
    return np.asarray(out)
