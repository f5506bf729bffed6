"""Finite element operators for the coupled bulk-surface weak form.

Piecewise-linear elements on tetrahedra (bulk) and on the induced flat
surface triangles (Laplace-Beltrami).  The weak form discretized here is,
per bulk species and test function phi,

    d/dt (u, phi)_B + (grad u, grad phi)_B
        = gamma_B (f(u, v), phi)_B + gamma_S (h1, phi)_S,

where the boundary term realizes the flux condition du/dn = gamma_S h1,
and per surface species and test function psi

    d/dt (r, psi)_S + (grad_S r, grad_S psi)_S
        = gamma_S (f(r, s) - h1, psi)_S.

Element integrals of products of linear basis functions use the exact
closed-form matrices.  The nonlinear reaction terms use the product
approximation: f is interpolated at the nodes and integrated with the
consistent mass matrix, (M f(u_nodal))_i.  This keeps the Newton Jacobian
on the mass-matrix sparsity pattern and, crucially, makes the discrete
dispersion of the linearized system match the analytical one mode by mode;
vertex quadrature (lumped reaction against a consistent mass) distorts the
reaction on rough modes by up to the lumped/consistent mass ratio and
manufactures spurious instabilities several times faster than the true
band.  The exchange terms h1, h2 are linear, so applying the consistent
boundary mass matrix to their nodal values integrates them exactly and
makes the bulk-surface transfer antisymmetric by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .kinetics import (
    ActivatorDepletedReaction,
    CouplingParams,
    LinearizedReaction,
    ModelParams,
    SteadyState,
)
from .mesh import BulkSurfaceMesh, tet_volumes, triangle_areas


class AssemblyError(ValueError):
    """Raised for degenerate elements or inconsistent inputs."""


def _scatter(nodes: np.ndarray, element_matrices: np.ndarray, n: int) -> sp.csr_matrix:
    """Accumulate per-element dense matrices into a CSR operator."""
    k = nodes.shape[1]
    rows = np.repeat(nodes, k, axis=1).ravel()
    cols = np.tile(nodes, (1, k)).ravel()
    mat = sp.coo_matrix((element_matrices.ravel(), (rows, cols)), shape=(n, n))
    mat = mat.tocsr()
    mat.sum_duplicates()
    return mat


def _symmetrize(a: sp.csr_matrix) -> sp.csr_matrix:
    return ((a + a.T) * 0.5).tocsr()


def assemble_bulk(mesh: BulkSurfaceMesh) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Consistent mass and stiffness over the bulk vertices."""
    vols = tet_volumes(mesh.vertices, mesh.tets)
    if np.any(vols <= 0.0):
        bad = np.flatnonzero(vols <= 0.0)
        raise AssemblyError(f"degenerate tetrahedra: {bad.tolist()[:10]}")
    p = mesh.vertices[mesh.tets]
    edges = p[:, 1:] - p[:, :1]                      # (T, 3, 3)
    inv = np.linalg.inv(edges)                        # rows: grad of lambda_1..3
    grads = np.empty((len(mesh.tets), 4, 3))
    grads[:, 1:] = inv
    grads[:, 0] = -inv.sum(axis=1)
    k_e = np.einsum("tik,tjk->tij", grads, grads) * vols[:, None, None]
    m_ref = (np.ones((4, 4)) + np.eye(4)) / 20.0
    m_e = m_ref[None, :, :] * vols[:, None, None]
    n = mesh.n_vertices
    mass = _symmetrize(_scatter(mesh.tets, m_e, n))
    stiff = _symmetrize(_scatter(mesh.tets, k_e, n))
    return mass, stiff


def assemble_surface(mesh: BulkSurfaceMesh) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Consistent mass and Laplace-Beltrami stiffness over surface DOFs."""
    tris = mesh.surface_tris_local()
    coords = mesh.surface_coords()
    areas = triangle_areas(mesh.vertices, mesh.surface_tris)
    if np.any(areas <= 0.0):
        bad = np.flatnonzero(areas <= 0.0)
        raise AssemblyError(f"degenerate surface triangles: {bad.tolist()[:10]}")
    p = coords[tris]
    b = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)   # (S, 3, 2)
    gram = np.einsum("tki,tkj->tij", b, b)                          # (S, 2, 2)
    grads12 = np.einsum("tki,tij->tjk", b, np.linalg.inv(gram))     # (S, 2, 3)
    grads = np.empty((len(tris), 3, 3))
    grads[:, 1:] = grads12
    grads[:, 0] = -grads12.sum(axis=1)
    k_e = np.einsum("tik,tjk->tij", grads, grads) * areas[:, None, None]
    m_ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    m_e = m_ref[None, :, :] * areas[:, None, None]
    n = mesh.n_surface_vertices
    mass = _symmetrize(_scatter(tris, m_e, n))
    stiff = _symmetrize(_scatter(tris, k_e, n))
    return mass, stiff


def trace_projector(mesh: BulkSurfaceMesh) -> sp.csr_matrix:
    """Boolean restriction of bulk nodal vectors to surface DOFs."""
    ns = mesh.n_surface_vertices
    return sp.csr_matrix(
        (np.ones(ns), (np.arange(ns), mesh.surface_vertex_ids)),
        shape=(ns, mesh.n_vertices))


@dataclass(frozen=True)
class CoupledSystemOperators:
    """All constant operators of the semi-discrete coupled system."""

    mesh: BulkSurfaceMesh
    M_bulk: sp.csr_matrix
    K_bulk: sp.csr_matrix
    M_surf: sp.csr_matrix
    K_surf: sp.csr_matrix
    M_trace: sp.csr_matrix
    mlump_bulk: np.ndarray
    mlump_surf: np.ndarray

    @property
    def n_bulk(self) -> int:
        return self.M_bulk.shape[0]

    @property
    def n_surf(self) -> int:
        return self.M_surf.shape[0]


def assemble_operators(mesh: BulkSurfaceMesh) -> CoupledSystemOperators:
    """Assemble every constant operator for a given mesh.

    The trace mass matrix equals the surface mass matrix (both live on the
    induced triangulation over surface DOFs); it is kept as its own field
    because it acts on bulk traces rather than surface unknowns.
    """
    m_bulk, k_bulk = assemble_bulk(mesh)
    m_surf, k_surf = assemble_surface(mesh)
    return CoupledSystemOperators(
        mesh=mesh, M_bulk=m_bulk, K_bulk=k_bulk,
        M_surf=m_surf, K_surf=k_surf, M_trace=m_surf.copy(),
        mlump_bulk=np.asarray(m_bulk.sum(axis=1)).ravel(),
        mlump_surf=np.asarray(m_surf.sum(axis=1)).ravel(),
    )


def apply_coupling(ops: CoupledSystemOperators, c: CouplingParams,
                   gamma_surf: float, state) -> tuple[np.ndarray, np.ndarray,
                                                      np.ndarray, np.ndarray]:
    """Boundary-exchange load vectors for the four equations.

    Returns (load_u, load_v, load_r, load_s): the bulk loads carry
    +gamma_surf * M_trace h_i injected at surface vertices, the surface
    loads the opposite sign, so the total exchanged mass cancels exactly.
    """
    u, v, r, s = state
    mesh = ops.mesh
    nb, ns = ops.n_bulk, ops.n_surf
    for name, vec, size in (("u", u, nb), ("v", v, nb), ("r", r, ns), ("s", s, ns)):
        if np.shape(vec) != (size,):
            raise AssemblyError(f"field {name} has shape {np.shape(vec)}, "
                                f"expected ({size},)")
    ids = mesh.surface_vertex_ids
    u_t = u[ids]
    v_t = v[ids]
    h1 = c.alpha1 * r - c.beta1 * u_t - c.kappa1 * v_t
    h2 = c.alpha2 * s - c.beta2 * u_t - c.kappa2 * v_t
    t1 = gamma_surf * (ops.M_trace @ h1)
    t2 = gamma_surf * (ops.M_trace @ h2)
    load_u = np.zeros(nb)
    load_v = np.zeros(nb)
    load_u[ids] = t1
    load_v[ids] = t2
    return load_u, load_v, -t1, -t2


def coupling_matrix(ops: CoupledSystemOperators, c: CouplingParams,
                    gamma_surf: float) -> sp.csr_matrix:
    """Constant Jacobian of the exchange loads over [u; v; r; s]."""
    proj = trace_projector(ops.mesh)
    a = (gamma_surf * ops.M_trace).tocsr()
    ap = (a @ proj).tocsr()
    pt_ap = (proj.T @ ap).tocsr()
    pt_a = (proj.T @ a).tocsr()

    def blk(factor, matrix):
        return (factor * matrix) if factor != 0.0 else None

    c_mat = sp.bmat([
        [blk(-c.beta1, pt_ap), blk(-c.kappa1, pt_ap), blk(c.alpha1, pt_a), None],
        [blk(-c.beta2, pt_ap), blk(-c.kappa2, pt_ap), None, blk(c.alpha2, pt_a)],
        [blk(c.beta1, ap), blk(c.kappa1, ap), blk(-c.alpha1, a), None],
        [blk(c.beta2, ap), blk(c.kappa2, ap), None, blk(-c.alpha2, a)],
    ], format="csr")
    return c_mat


def export_operators(ops: CoupledSystemOperators, directory) -> None:
    """Dump all five operators in matrix-market format for debugging."""
    import pathlib

    from scipy.io import mmwrite

    directory = pathlib.Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in ("M_bulk", "K_bulk", "M_surf", "K_surf", "M_trace"):
        mmwrite(directory / f"{name}.mtx", getattr(ops, name))


class MonolithicSystem:
    """Semi-discrete right-hand side F(w) = -K w + C w + N(w) and its
    Jacobian over the stacked unknowns w = [u; v; r; s].

    ``N`` is the product-approximation reaction term gamma * M f(w_nodal)
    (Jacobian blocks M diag(f')); ``C`` the constant exchange operator.
    Pass ``linearize_at`` to replace the reaction pair by its first-order
    expansion about a state, and ``include_kinetics=False`` /
    ``include_coupling=False`` to switch the respective terms off entirely
    (used by the patch and dissipation checks).
    """

    def __init__(self, ops: CoupledSystemOperators, params: ModelParams,
                 linearize_at: SteadyState | None = None,
                 include_kinetics: bool = True,
                 include_coupling: bool = True,
                 lumped_mass: bool = False):
        self.ops = ops
        self.params = params
        nb, ns = ops.n_bulk, ops.n_surf
        self.n_bulk = nb
        self.n_surf = ns
        self.n_dofs = 2 * nb + 2 * ns
        self.offsets = (0, nb, 2 * nb, 2 * nb + ns)

        kin = params.kinetics
        # The reaction term is integrated with the same mass operator that
        # multiplies the time derivative; mixing the two distorts the
        # discrete dispersion on rough modes.
        if lumped_mass:
            self._m_bulk_op = sp.diags(ops.mlump_bulk).tocsr()
            self._m_surf_op = sp.diags(ops.mlump_surf).tocsr()
        else:
            self._m_bulk_op = ops.M_bulk
            self._m_surf_op = ops.M_surf
        self.mass = sp.block_diag(
            [self._m_bulk_op, self._m_bulk_op, self._m_surf_op, self._m_surf_op],
            format="csr")
        d = params.diffusion
        self.stiffness = sp.block_diag(
            [ops.K_bulk, d.d_bulk * ops.K_bulk, ops.K_surf, d.d_surf * ops.K_surf],
            format="csr")
        self.mass_lumped = np.concatenate(
            [ops.mlump_bulk, ops.mlump_bulk, ops.mlump_surf, ops.mlump_surf])

        if include_coupling:
            self.coupling = coupling_matrix(ops, params.coupling, kin.gamma_surf)
        else:
            self.coupling = sp.csr_matrix((self.n_dofs, self.n_dofs))
        self.linear_part = (self.coupling - self.stiffness).tocsr()

        if include_kinetics:
            reaction = ActivatorDepletedReaction(kin.a, kin.b)
            if linearize_at is not None:
                self.bulk_reaction = LinearizedReaction(
                    reaction, linearize_at.u_star, linearize_at.v_star)
                self.surf_reaction = LinearizedReaction(
                    reaction, linearize_at.r_star, linearize_at.s_star)
            else:
                self.bulk_reaction = reaction
                self.surf_reaction = reaction
        else:
            self.bulk_reaction = None
            self.surf_reaction = None

        #: True when the reaction Jacobian does not depend on the state,
        #: which lets the time stepper cache matrix factorizations.
        self.constant_jacobian = (
            self.bulk_reaction is None
            or isinstance(self.bulk_reaction, LinearizedReaction))

    def pack(self, u, v, r, s) -> np.ndarray:
        return np.concatenate([u, v, r, s])

    def unpack(self, w: np.ndarray):
        nb, ns = self.n_bulk, self.n_surf
        return (w[:nb], w[nb:2 * nb],
                w[2 * nb:2 * nb + ns], w[2 * nb + ns:])

    def reaction_values(self, w: np.ndarray) -> np.ndarray:
        if self.bulk_reaction is None:
            return np.zeros_like(w)
        u, v, r, s = self.unpack(w)
        kin = self.params.kinetics
        fb, gb = self.bulk_reaction.values(u, v)
        fs, gs = self.surf_reaction.values(r, s)
        mb = self._m_bulk_op
        ms = self._m_surf_op
        return np.concatenate([
            kin.gamma_bulk * (mb @ np.broadcast_to(fb, u.shape)),
            kin.gamma_bulk * (mb @ np.broadcast_to(gb, u.shape)),
            kin.gamma_surf * (ms @ np.broadcast_to(fs, r.shape)),
            kin.gamma_surf * (ms @ np.broadcast_to(gs, r.shape)),
        ])

    def reaction_jacobian(self, w: np.ndarray) -> sp.csr_matrix:
        """Jacobian blocks gamma * M diag(f') of the reaction term."""
        if self.bulk_reaction is None:
            return sp.csr_matrix((self.n_dofs, self.n_dofs))
        u, v, r, s = self.unpack(w)
        kin = self.params.kinetics
        bu, bv, cu, cv = self.bulk_reaction.derivs(u, v)
        sr, ss_, tr, ts = self.surf_reaction.derivs(r, s)
        mb = kin.gamma_bulk * self._m_bulk_op
        ms = kin.gamma_surf * self._m_surf_op

        def blk(mass, vals, n):
            return mass @ sp.diags(np.broadcast_to(vals, (n,)).astype(float))

        nb, ns = self.n_bulk, self.n_surf
        return sp.bmat([
            [blk(mb, bu, nb), blk(mb, bv, nb), None, None],
            [blk(mb, cu, nb), blk(mb, cv, nb), None, None],
            [None, None, blk(ms, sr, ns), blk(ms, ss_, ns)],
            [None, None, blk(ms, tr, ns), blk(ms, ts, ns)],
        ], format="csr")

    def rhs(self, w: np.ndarray) -> np.ndarray:
        return self.linear_part @ w + self.reaction_values(w)

    def rhs_jacobian(self, w: np.ndarray) -> sp.csr_matrix:
        return (self.linear_part + self.reaction_jacobian(w)).tocsr()
