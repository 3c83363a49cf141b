"""Two-pass assembly and the solution methods on hand-checked problems."""

import numpy as np
import pytest

from stubs import FakeModel, static_config, static_time

from fefv.assembly import (AlternateMinimization, AssemblyError,
                           GroupTolerance, LinearStatic, LocalContribution,
                           Numerics, assemble_system, build_sparsity)
from fefv.conditions import BoundaryCondition, make_value
from fefv.dofs import DofDeclaration
from fefv.meshgen import structured_rectangle, two_triangle_square
from fefv.sparse import ProfileError


class LaplaceNumerics(Numerics):
    """Unit-conductance scalar diffusion on linear triangles."""

    def __init__(self, numerics_id=1, stage=1, subsystem=1):
        super().__init__(numerics_id, stage, (subsystem,))

    def set_dof_stages(self, model, cell):
        for node in model.mesh.cells[cell].nodes:
            model.dof_store.claim(model.dof_store.node_dof(int(node), 1),
                                  self.stage, self.subsystems[0])

    def _element(self, model, cell):
        nodes = [int(n) for n in model.mesh.cells[cell].nodes]
        pts = model.mesh.coords[nodes, :2]
        det = ((pts[1, 0] - pts[0, 0]) * (pts[2, 1] - pts[0, 1])
               - (pts[1, 1] - pts[0, 1]) * (pts[2, 0] - pts[0, 0]))
        grads = np.array([
            [pts[1, 1] - pts[2, 1], pts[2, 0] - pts[1, 0]],
            [pts[2, 1] - pts[0, 1], pts[0, 0] - pts[2, 0]],
            [pts[0, 1] - pts[1, 1], pts[1, 0] - pts[0, 0]],
        ]) / det
        stiffness = 0.5 * det * grads @ grads.T
        ids = [model.dof_store.node_dof(n, 1).id for n in nodes]
        return ids, stiffness

    def static_coefficients(self, model, cell, stage, subsystem, time):
        ids, stiffness = self._element(model, cell)
        rows = [ids[a] for a in range(3) for _ in range(3)]
        cols = [ids[b] for _ in range(3) for b in range(3)]
        values = [stiffness[a, b] for a in range(3) for b in range(3)]
        return [LocalContribution(rows, cols, values)]

    def static_lhs(self, model, cell, stage, subsystem, time):
        ids, stiffness = self._element(model, cell)
        values = np.array([model.dof_store.dofs[i].value for i in ids])
        return [LocalContribution(ids, [], list(stiffness @ values))]

    def boundary_rhs(self, model, cell, stage, subsystem, condition, time):
        if condition.condition_type == "Flux":
            if subsystem is not None and subsystem not in self.subsystems:
                return ()
            nodes = [int(n) for n in model.mesh.cells[cell].nodes[:2]]
            pts = model.mesh.coords[nodes, :2]
            length = float(np.hypot(*(pts[1] - pts[0])))
            midpoint = 0.5 * (pts[0] + pts[1])
            flux = condition.evaluate((midpoint[0], midpoint[1], 0.0),
                                      time.target if time else 0.0)
            ids = [model.dof_store.node_dof(n, condition.dof_type).id
                   for n in nodes]
            half = 0.5 * flux * length
            return [LocalContribution(ids, [], [half, half])]
        return super().boundary_rhs(model, cell, stage, subsystem,
                                    condition, time)


def laplace_patch(mesh=None, workers=1):
    model = FakeModel(mesh or two_triangle_square(), workers=workers)
    model.dof_store.create_node_dofs(len(model.mesh.coords),
                                     [DofDeclaration(1, 1, 2)])
    numerics = LaplaceNumerics()
    model.assign(numerics)
    for cell in model.domain_cells:
        numerics.set_dof_stages(model, cell)
    return model


class TestLocalContribution:

    def test_matrix_form_requires_matching_lengths(self):
        with pytest.raises(AssemblyError):
            LocalContribution([0, 1], [0], [1.0, 2.0])
        with pytest.raises(AssemblyError):
            LocalContribution([0, 1], [0, 1], [1.0])

    def test_vector_form(self):
        c = LocalContribution([3, 4], [], [1.0, 2.0])
        assert not c.is_matrix


class TestBuildSparsity:

    def test_patch_pattern_has_fourteen_positions(self):
        model = laplace_patch()
        size = model.dof_store.enumerate_equations(1, 1)
        assert size == 4
        matrix = build_sparsity(model, 1, 1, size)
        # nodes 1 and 2 sit on opposite corners and share no cell
        assert matrix.nnz == 14
        store = model.dof_store
        eq = lambda n: store.node_dof(n, 1).eq_number
        with pytest.raises(ProfileError):
            matrix.entry(eq(1), eq(2))

    def test_constrained_rows_and_columns_skipped(self):
        model = laplace_patch()
        store = model.dof_store
        store.constrain(store.node_dof(0, 1), 0.0)
        store.constrain(store.node_dof(3, 1), 1.0)
        size = store.enumerate_equations(1, 1)
        assert size == 2
        matrix = build_sparsity(model, 1, 1, size)
        assert matrix.nnz == 2

    def test_slave_positions_redirect_to_master(self):
        model = laplace_patch()
        store = model.dof_store
        store.make_slave(store.node_dof(2, 1), store.node_dof(1, 1))
        size = store.enumerate_equations(1, 1)
        assert size == 3
        matrix = build_sparsity(model, 1, 1, size)
        # node 2's couplings to 0 and 3 now sit on node 1's equation,
        # filling in the previously missing 1-0 and 1-3 interactions
        assert matrix.nnz == 9

    def test_foreign_subsystem_triplet_rejected(self):
        model = laplace_patch()
        store = model.dof_store
        store.node_dof(3, 1).subsystem = 2

        class Leaky(LaplaceNumerics):
            def static_coefficients(self, model, cell, stage, subsystem, time):
                nodes = [int(n) for n in model.mesh.cells[cell].nodes]
                ids = [model.dof_store.node_dof(n, 1).id for n in nodes]
                return [LocalContribution([ids[0]], [ids[-1]], [1.0])]

        model.assign(Leaky())
        size = store.enumerate_equations(1, 1)
        assert size == 3
        with pytest.raises(AssemblyError, match="subsystem"):
            build_sparsity(model, 1, 1, size)


class TestAssembleSystem:

    def test_zero_state_zero_load_gives_zero_rhs(self):
        model = laplace_patch()
        size = model.dof_store.enumerate_equations(1, 1)
        matrix = build_sparsity(model, 1, 1, size)
        rhs = assemble_system(model, 1, 1, static_time(), matrix=matrix)
        assert np.all(rhs == 0.0)

    def test_hand_assembled_stiffness_values(self):
        model = laplace_patch()
        store = model.dof_store
        size = store.enumerate_equations(1, 1)
        matrix = build_sparsity(model, 1, 1, size)
        assemble_system(model, 1, 1, static_time(), matrix=matrix)
        eq = lambda n: store.node_dof(n, 1).eq_number
        expected = {
            (0, 0): 1.0, (1, 1): 1.0, (2, 2): 1.0, (3, 3): 1.0,
            (0, 1): -0.5, (0, 2): -0.5, (0, 3): 0.0,
            (1, 3): -0.5, (2, 3): -0.5,
        }
        for (a, b), value in expected.items():
            assert matrix.entry(eq(a), eq(b)) == value
            assert matrix.entry(eq(b), eq(a)) == value

    def test_serial_assembly_is_bitwise_repeatable(self):
        model = laplace_patch()
        store = model.dof_store
        rng = np.random.default_rng(3)
        for dof in store.dofs:
            dof.value = rng.uniform(-1, 1)
        size = store.enumerate_equations(1, 1)
        matrix = build_sparsity(model, 1, 1, size)
        rhs_one = assemble_system(model, 1, 1, static_time(), matrix=matrix)
        values_one = matrix.to_csr().data.copy()
        rhs_two = assemble_system(model, 1, 1, static_time(), matrix=matrix)
        values_two = matrix.to_csr().data.copy()
        assert np.all(values_one == values_two)
        assert np.all(rhs_one == rhs_two)

    def test_threaded_assembly_matches_serial_on_dyadic_mesh(self):
        # unit-square cells on a quarter grid: every element entry is a
        # multiple of 0.5, so accumulation is exact in any order
        results = []
        for workers in (1, 4):
            model = laplace_patch(structured_rectangle(4, 4, 1.0, 1.0),
                                  workers=workers)
            size = model.dof_store.enumerate_equations(1, 1)
            matrix = build_sparsity(model, 1, 1, size)
            assemble_system(model, 1, 1, static_time(), matrix=matrix,
                            workers=workers)
            results.append(matrix.to_csr().toarray())
        assert np.all(results[0] == results[1])

    def test_flux_condition_enters_rhs(self):
        model = laplace_patch()
        store = model.dof_store
        store.constrain(store.node_dof(2, 1), 0.0)
        store.constrain(store.node_dof(3, 1), 0.0)
        size = store.enumerate_equations(1, 1)
        matrix = build_sparsity(model, 1, 1, size)
        bc = BoundaryCondition("BottomEdge", 1, "Flux", 1, make_value(2.0))
        rhs = assemble_system(model, 1, 1, static_time(),
                              boundary_conditions=[bc], matrix=matrix)
        eq = lambda n: store.node_dof(n, 1).eq_number
        assert rhs[eq(0)] == 1.0
        assert rhs[eq(1)] == 1.0

    def test_unknown_condition_type_is_configuration_error(self):
        model = laplace_patch()
        size = model.dof_store.enumerate_equations(1, 1)
        matrix = build_sparsity(model, 1, 1, size)
        bc = BoundaryCondition("BottomEdge", 1, "Wibble", 1, make_value(1.0))
        with pytest.raises(AssemblyError, match="Wibble"):
            assemble_system(model, 1, 1, static_time(),
                            boundary_conditions=[bc], matrix=matrix)


class TestLinearStatic:

    def test_dirichlet_patch_solution_and_reactions(self):
        model = laplace_patch()
        store = model.dof_store
        store.constrain(store.node_dof(0, 1), 0.0)
        store.constrain(store.node_dof(3, 1), 1.0)
        report = LinearStatic().solve(model, 1, static_time(),
                                      static_config())
        assert report.converged
        values = [store.node_dof(n, 1).value for n in range(4)]
        assert values == [0.0, 0.5, 0.5, 1.0]
        assert store.node_dof(0, 1).residual == -0.5
        assert store.node_dof(3, 1).residual == 0.5

    def test_pure_neumann_incompatibility_is_reported(self):
        # nonzero net influx with no Dirichlet anchor has no solution;
        # the method must report the failed residual check, not success
        model = laplace_patch()
        bc = BoundaryCondition("BottomEdge", 1, "Flux", 1, make_value(2.0))
        report = LinearStatic().solve(
            model, 1, static_time(),
            static_config(boundary_conditions=[bc]))
        assert not report.converged

    def test_no_active_equations_is_trivially_converged(self):
        model = laplace_patch()
        store = model.dof_store
        for node in range(4):
            store.constrain(store.node_dof(node, 1), 0.0)
        report = LinearStatic().solve(model, 1, static_time(),
                                      static_config())
        assert report.converged


class QuadraticNumerics(Numerics):
    """Two scalar unknowns minimizing a coupled convex quadratic."""

    def __init__(self, matrix, load, numerics_id=1):
        super().__init__(numerics_id, stage=1, subsystems=(1, 2))
        self.matrix = np.asarray(matrix, dtype=float)
        self.load = np.asarray(load, dtype=float)

    def dof(self, model, which):
        return model.dof_store.numerics_dof(self.id, which)

    def _unknowns(self, model):
        return np.array([self.dof(model, 0).value, self.dof(model, 1).value])

    def energy(self, model):
        u = self._unknowns(model)
        return 0.5 * u @ self.matrix @ u - self.load @ u

    def static_coefficients(self, model, cell, stage, subsystem, time):
        which = subsystem - 1
        dof_id = self.dof(model, which).id
        return [LocalContribution([dof_id], [dof_id],
                                  [self.matrix[which, which]])]

    def static_lhs(self, model, cell, stage, subsystem, time):
        which = subsystem - 1
        residual = self.matrix[which] @ self._unknowns(model) \
            - self.load[which]
        return [LocalContribution([self.dof(model, which).id], [],
                                  [residual])]


def quadratic_model(matrix, load):
    model = FakeModel()
    model.domain_cells = [0]
    numerics = QuadraticNumerics(matrix, load)
    model.assign(numerics, cells=model.domain_cells)
    store = model.dof_store
    store.create_numerics_dofs(numerics.id, [DofDeclaration(1, 1, 2),
                                             DofDeclaration(2, 1, 2)])
    store.claim(store.numerics_dof(numerics.id, 0), 1, 1)
    store.claim(store.numerics_dof(numerics.id, 1), 1, 2)
    return model, numerics


class TestAlternateMinimization:

    def test_weakly_coupled_quadratic_in_three_sweeps(self):
        matrix = [[2.0, 0.001], [0.001, 3.0]]
        load = [1.0, 2.0]
        model, numerics = quadratic_model(matrix, load)
        method = AlternateMinimization([1, 2])
        report = method.solve(model, 1, static_time(), static_config())
        assert report.converged
        assert report.outer_iterations <= 3
        expected = np.linalg.solve(np.array(matrix), np.array(load))
        solution = numerics._unknowns(model)
        assert np.allclose(solution, expected, rtol=1e-6)

    def test_energy_monotone_under_alternation(self):
        matrix = [[2.0, 1.0], [1.0, 3.0]]
        load = [1.0, 2.0]
        model, numerics = quadratic_model(matrix, load)
        method = AlternateMinimization(
            [1, 2], energy_hook=lambda m: numerics.energy(m))
        report = method.solve(model, 1, static_time(), static_config())
        assert report.converged
        assert len(report.energies) == report.outer_iterations
        energies = np.array(report.energies)
        drops = np.diff(energies)
        assert np.all(drops <= 1e-12 * np.abs(energies[:-1]) + 1e-15)

    def test_single_subsystem_is_plain_newton(self):
        model = FakeModel()
        model.domain_cells = [0]

        class CubicNumerics(Numerics):
            def __init__(self):
                super().__init__(1, stage=1, subsystems=(1,))

            def dof(self, model):
                return model.dof_store.numerics_dof(1, 0)

            def static_coefficients(self, model, cell, stage, subsystem, time):
                u = self.dof(model).value
                return [LocalContribution([self.dof(model).id],
                                          [self.dof(model).id],
                                          [3.0 * u * u])]

            def static_lhs(self, model, cell, stage, subsystem, time):
                u = self.dof(model).value
                return [LocalContribution([self.dof(model).id], [],
                                          [u ** 3 - 8.0])]

        numerics = CubicNumerics()
        model.assign(numerics, cells=model.domain_cells)
        store = model.dof_store
        store.create_numerics_dofs(1, [DofDeclaration(1, 1, 2)])
        store.claim(store.numerics_dof(1, 0), 1, 1)
        numerics.dof(model).value = 1.0
        report = AlternateMinimization([1]).solve(
            model, 1, static_time(), static_config())
        assert report.converged
        assert numerics.dof(model).value == pytest.approx(2.0, rel=1e-9)
        assert report.iterations >= 4

    def test_outer_cap_reports_nonconvergence(self):
        matrix = [[2.0, 1.9], [1.9, 2.0]]
        load = [1.0, 1.0]
        model, _ = quadratic_model(matrix, load)
        method = AlternateMinimization([1, 2], max_outer=2)
        report = method.solve(model, 1, static_time(), static_config())
        assert not report.converged
        assert report.outer_iterations == 2
        assert "outer" in report.message

    def test_veto_hook_delays_convergence(self):
        matrix = [[2.0, 0.0], [0.0, 3.0]]
        load = [1.0, 2.0]
        model, numerics = quadratic_model(matrix, load)
        calls = {"n": 0}

        def veto(model_arg, time_arg):
            calls["n"] += 1
            return calls["n"] >= 5

        numerics.additional_convergence_check = veto
        report = AlternateMinimization([1, 2]).solve(
            model, 1, static_time(), static_config())
        assert report.converged
        assert report.outer_iterations >= 5

    def test_per_group_tolerances_are_honored(self):
        matrix = [[2.0, 0.5], [0.5, 3.0]]
        load = [1.0, 2.0]
        loose_model, _ = quadratic_model(matrix, load)
        loose = AlternateMinimization(
            [1, 2], tolerances={1: GroupTolerance(1e-2, 1e-2),
                                2: GroupTolerance(1e-2, 1e-2)})
        loose_report = loose.solve(loose_model, 1, static_time(),
                                   static_config())
        tight_model, _ = quadratic_model(matrix, load)
        tight = AlternateMinimization(
            [1, 2], tolerances={1: GroupTolerance(1e-10, 1e-10),
                                2: GroupTolerance(1e-10, 1e-10)})
        tight_report = tight.solve(tight_model, 1, static_time(),
                                   static_config())
        assert loose_report.converged and tight_report.converged
        assert loose_report.outer_iterations < tight_report.outer_iterations
