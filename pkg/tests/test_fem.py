import math

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from bsrd.fem import (
    AssemblyError,
    MonolithicSystem,
    apply_coupling,
    assemble_bulk,
    assemble_operators,
    coupling_matrix,
    export_operators,
    trace_projector,
)
from bsrd.kinetics import (
    CouplingParams,
    DiffusionParams,
    KineticParams,
    ModelParams,
    steady_state,
)
from bsrd.mesh import BulkSurfaceMesh, generate_ball_mesh, mesh_stats

TABLE_COUPLING = CouplingParams(alpha1=5.0 / 12.0, alpha2=5.0, beta1=5.0 / 12.0,
                                beta2=0.0, kappa1=0.0, kappa2=5.0)


@pytest.fixture(scope="module")
def mesh2():
    return generate_ball_mesh(2)


@pytest.fixture(scope="module")
def ops2(mesh2):
    return assemble_operators(mesh2)


def params(db=1.0, ds=20.0, gamma=500.0):
    return ModelParams(
        kinetics=KineticParams(0.1, 0.9, gamma, gamma),
        coupling=TABLE_COUPLING,
        diffusion=DiffusionParams(db, ds))


class TestOperators:
    def test_exact_symmetry(self, ops2):
        for name in ("M_bulk", "K_bulk", "M_surf", "K_surf", "M_trace"):
            mat = getattr(ops2, name)
            assert (mat != mat.T).nnz == 0

    def test_stiffness_annihilates_constants(self, ops2):
        ones_b = np.ones(ops2.n_bulk)
        ones_s = np.ones(ops2.n_surf)
        scale_b = np.abs(ops2.K_bulk).sum(axis=1).max()
        scale_s = np.abs(ops2.K_surf).sum(axis=1).max()
        assert np.max(np.abs(ops2.K_bulk @ ones_b)) <= 1e-12 * scale_b
        assert np.max(np.abs(ops2.K_surf @ ones_s)) <= 1e-12 * scale_s

    def test_mass_totals(self, mesh2, ops2):
        stats = mesh_stats(mesh2)
        assert ops2.M_bulk.sum() == pytest.approx(stats.volume, rel=1e-12)
        assert ops2.M_surf.sum() == pytest.approx(stats.area, rel=1e-12)
        assert ops2.M_trace.sum() == pytest.approx(stats.area, rel=1e-12)

    def test_masses_positive_definite(self, ops2):
        for mat in (ops2.M_bulk, ops2.M_surf):
            smallest = spla.eigsh(mat.tocsc(), k=1, which="SA",
                                  return_eigenvectors=False)[0]
            assert smallest > 0

    def test_stiffness_positive_semidefinite(self, ops2):
        for mat in (ops2.K_bulk, ops2.K_surf):
            smallest = spla.eigsh(mat.tocsc(), k=1, sigma=-1e-3, which="LM",
                                  return_eigenvectors=False)[0]
            assert smallest >= -1e-10

    def test_single_tet_stiffness_kernel(self):
        verts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                          [0.5, math.sqrt(3.0) / 2.0, 0.0],
                          [0.5, math.sqrt(3.0) / 6.0, math.sqrt(6.0) / 3.0]])
        mesh = BulkSurfaceMesh.from_tets(verts, np.array([[0, 1, 2, 3]]))
        _, stiff = assemble_bulk(mesh)
        assert np.max(np.abs(stiff @ np.ones(4))) <= 1e-14

    def test_degenerate_tet_rejected(self):
        verts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                          [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]])   # coplanar
        mesh = BulkSurfaceMesh(
            vertices=verts, tets=np.array([[0, 1, 2, 3]]),
            surface_tris=np.zeros((0, 3), dtype=np.int64),
            surface_vertex_ids=np.array([], dtype=np.int64),
            bulk_to_surface=np.full(4, -1, dtype=np.int64))
        with pytest.raises(AssemblyError, match="degenerate"):
            assemble_bulk(mesh)

    def test_beltrami_spectrum_coarse(self, ops2):
        vals = spla.eigsh(ops2.K_surf.tocsc(), k=4, M=ops2.M_surf.tocsc(),
                          sigma=0.0, which="LM", return_eigenvectors=False)
        vals = np.sort(vals)
        assert abs(vals[0]) < 1e-8
        # Coarser mesh than the acceptance level; allow a wider band.
        np.testing.assert_allclose(vals[1:4], 2.0, rtol=0.1)
        assert np.ptp(vals[1:4]) <= 0.05 * vals[1]

    def test_export_matrix_market(self, ops2, tmp_path):
        export_operators(ops2, tmp_path)
        for name in ("M_bulk", "K_bulk", "M_surf", "K_surf", "M_trace"):
            assert (tmp_path / f"{name}.mtx").exists()


class TestApplyCoupling:
    def rand_state(self, ops, rng):
        return (rng.uniform(0.5, 2.0, ops.n_bulk),
                rng.uniform(0.5, 2.0, ops.n_bulk),
                rng.uniform(0.5, 2.0, ops.n_surf),
                rng.uniform(0.5, 2.0, ops.n_surf))

    def test_zero_coupling_zero_loads(self, ops2):
        state = self.rand_state(ops2, np.random.default_rng(0))
        loads = apply_coupling(ops2, CouplingParams.zero(), 500.0, state)
        for vec in loads:
            assert np.all(vec == 0.0)

    def test_steady_state_zero_loads(self, ops2):
        state = (np.full(ops2.n_bulk, 1.0), np.full(ops2.n_bulk, 0.9),
                 np.full(ops2.n_surf, 1.0), np.full(ops2.n_surf, 0.9))
        loads = apply_coupling(ops2, TABLE_COUPLING, 500.0, state)
        for vec in loads:
            assert np.max(np.abs(vec)) <= 1e-12

    def test_constant_fields_alpha1_only(self, mesh2, ops2):
        c = CouplingParams(alpha1=1.0, alpha2=0.0, beta1=0.0, beta2=0.0,
                           kappa1=0.0, kappa2=0.0)
        gamma = 500.0
        state = (np.ones(ops2.n_bulk), np.ones(ops2.n_bulk),
                 np.ones(ops2.n_surf), np.ones(ops2.n_surf))
        lu, lv, lr, ls = apply_coupling(ops2, c, gamma, state)
        area = mesh_stats(mesh2).area
        assert lu.sum() == pytest.approx(gamma * area, rel=1e-12)
        np.testing.assert_allclose(lr, -gamma * (ops2.M_surf @ np.ones(ops2.n_surf)),
                                   rtol=1e-13)
        assert np.all(lv == 0.0) and np.all(ls == 0.0)

    def test_exchange_conservation(self, ops2):
        rng = np.random.default_rng(4)
        for _ in range(10):
            state = self.rand_state(ops2, rng)
            lu, lv, lr, ls = apply_coupling(ops2, TABLE_COUPLING, 500.0, state)
            scale = np.abs(lu).sum() + 1.0
            assert abs(lu.sum() + lr.sum()) <= 1e-12 * scale
            assert abs(lv.sum() + ls.sum()) <= 1e-12 * scale

    def test_size_mismatch_rejected(self, ops2):
        state = (np.ones(3), np.ones(ops2.n_bulk),
                 np.ones(ops2.n_surf), np.ones(ops2.n_surf))
        with pytest.raises(AssemblyError, match="field u"):
            apply_coupling(ops2, TABLE_COUPLING, 500.0, state)

    def test_matrix_matches_loads(self, ops2):
        rng = np.random.default_rng(12)
        state = self.rand_state(ops2, rng)
        loads = np.concatenate(apply_coupling(ops2, TABLE_COUPLING, 500.0, state))
        mat = coupling_matrix(ops2, TABLE_COUPLING, 500.0)
        w = np.concatenate(state)
        np.testing.assert_allclose(mat @ w, loads, atol=1e-11)


class TestMonolithicSystem:
    def test_patch_residual(self, ops2):
        system = MonolithicSystem(ops2, params(), include_kinetics=False,
                                  include_coupling=False)
        w = np.full(system.n_dofs, 3.7)
        scale = np.abs(system.stiffness).sum(axis=1).max() * 3.7
        assert np.max(np.abs(system.rhs(w))) <= 1e-12 * scale

    def test_steady_state_is_equilibrium(self, ops2):
        pm = params()
        system = MonolithicSystem(ops2, pm)
        ss = steady_state(pm.kinetics)
        w = system.pack(np.full(ops2.n_bulk, ss.u_star),
                        np.full(ops2.n_bulk, ss.v_star),
                        np.full(ops2.n_surf, ss.r_star),
                        np.full(ops2.n_surf, ss.s_star))
        scale = 500.0 * float(ops2.mlump_bulk.max())
        assert np.max(np.abs(system.rhs(w))) <= 1e-10 * scale

    def test_jacobian_matches_finite_differences(self, ops2):
        pm = params()
        system = MonolithicSystem(ops2, pm)
        rng = np.random.default_rng(5)
        w = rng.uniform(0.5, 1.5, system.n_dofs)
        jac = system.rhs_jacobian(w)
        h = 1e-6
        for _ in range(5):
            direction = rng.standard_normal(system.n_dofs)
            direction /= np.linalg.norm(direction)
            fp = system.rhs(w + h * direction)
            fm = system.rhs(w - h * direction)
            fd = (fp - fm) / (2.0 * h)
            jd = jac @ direction
            scale = np.max(np.abs(jd)) + 1.0
            assert np.max(np.abs(jd - fd)) <= 1e-5 * scale

    def test_linearized_decoupled_mode_evolution(self, ops2):
        # With coupling off, the linearized operator acts on a discrete
        # surface eigenmode exactly as the 2x2 branch matrix predicts.
        pm = params(ds=20.0)
        ss = steady_state(pm.kinetics)
        system = MonolithicSystem(ops2, pm, linearize_at=ss,
                                  include_coupling=False)
        vals, vecs = spla.eigsh(ops2.K_surf.tocsc(), k=3, M=ops2.M_surf.tocsc(),
                                sigma=110.0, which="LM")
        mu = vals[0]
        phi = vecs[:, 0]
        gamma = 500.0
        a_mode = np.array([
            [-mu + gamma * 0.8, gamma * 1.0],
            [gamma * -1.8, -20.0 * mu + gamma * -1.0]])
        e = np.linalg.eig(a_mode)
        lead = np.argmax(e.eigenvalues.real)
        lam = e.eigenvalues[lead].real
        er, es = e.eigenvectors[:, lead].real
        w = system.pack(np.full(ops2.n_bulk, ss.u_star),
                        np.full(ops2.n_bulk, ss.v_star),
                        ss.r_star + er * phi, ss.s_star + es * phi)
        rate = system.rhs(w)
        # d/dt of the seeded mode: mass-weighted projection equals lambda.
        _, _, dr, ds_ = system.unpack(rate)
        weight = np.concatenate([er * phi, es * phi])
        mass_w = np.concatenate([ops2.M_surf @ (er * phi), ops2.M_surf @ (es * phi)])
        measured = (np.concatenate([dr, ds_]) @ weight) / (mass_w @ weight)
        assert measured == pytest.approx(lam, rel=1e-8)

    def test_lumped_mass_option(self, ops2):
        system = MonolithicSystem(ops2, params(), lumped_mass=True)
        diag = system.mass.diagonal()
        assert system.mass.nnz == system.n_dofs
        assert np.all(diag > 0)
