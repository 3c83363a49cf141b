"""Cell-local contributions, global two-pass assembly, solution methods.

Physics classes describe their equations one cell at a time as triplet
contributions against global DOF ids. Assembly happens in two passes: a
symbolic pass collects triplet positions into a sparsity profile, then
each solve accumulates values into that fixed profile. Two solution
methods drive the DOF updates: a single-solve linear method and an
alternating nonlinear minimization over subsystems.
"""

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dofs import UNASSIGNED
from .sparse import SolveError, SparseMatrix
from .stepper import ConvergenceReport

__all__ = [
    "AssemblyError",
    "LocalContribution",
    "Numerics",
    "build_sparsity",
    "assemble_system",
    "LinearStatic",
    "AlternateMinimization",
    "GroupTolerance",
]

ABSOLUTE_FLOOR = 1e-12


class AssemblyError(Exception):
    """Contract violation between physics, conditions and assembly."""


@dataclass
class LocalContribution:
    """Triplets against global DOF ids for one cell.

    Matrix form pairs row_dofs with col_dofs entrywise; vector form
    leaves col_dofs empty. Entries known to be identically zero are
    omitted by the producing physics.
    """

    row_dofs: list
    col_dofs: list
    values: list

    def __post_init__(self):
        if self.col_dofs and len(self.col_dofs) != len(self.row_dofs):
            raise AssemblyError(
                "matrix contribution needs matching row/col lists, got "
                "%d rows and %d cols"
                % (len(self.row_dofs), len(self.col_dofs)))
        if len(self.values) != len(self.row_dofs):
            raise AssemblyError(
                "contribution needs one value per row entry, got %d values "
                "for %d rows" % (len(self.values), len(self.row_dofs)))

    @property
    def is_matrix(self):
        return bool(self.col_dofs)


class Numerics:
    """Per-cell equation formulation.

    Subclasses override the hooks for the terms their equations contain;
    the assembly hooks default to empty contributions so static physics
    stay correct under transient drivers. Condition hooks raise for
    condition types the physics does not understand, and field output
    accessors raise for unknown quantities. Condition types listed in
    CONSTRAINT_TYPES are imposed on DOFs before a substep rather than
    assembled into the right-hand side.
    """

    CONSTRAINT_TYPES = ()

    def __init__(self, numerics_id, stage=1, subsystems=(1,)):
        self.id = numerics_id
        self.stage = stage
        self.subsystems = tuple(subsystems)

    # structural hooks -----------------------------------------------------

    def initialize(self, model):
        """Once per instance, before any cell hook; creates instance-level
        DOFs and caches whatever the formulation derives from the mesh."""
        return None

    def set_dof_stages(self, model, cell):
        return None

    def initialize_cell(self, model, cell):
        return None

    def finalize_cell(self, model, cell, time):
        return None

    def delete_cell(self, model, cell):
        return None

    def prepare_conditions(self, model, boundary_conditions,
                           field_conditions, time):
        return None

    # assembly hooks (empty by default) ------------------------------------

    def static_coefficients(self, model, cell, stage, subsystem, time):
        return ()

    def static_lhs(self, model, cell, stage, subsystem, time):
        return ()

    def transient_coefficients(self, model, cell, stage, subsystem, time):
        return ()

    def transient_lhs(self, model, cell, stage, subsystem, time):
        return ()

    def coefficient_profile(self, model, cell, stage, subsystem, time):
        """Triplet positions only; defaults to the coefficient hooks."""
        return list(self.static_coefficients(
            model, cell, stage, subsystem, time)) \
            + list(self.transient_coefficients(
                model, cell, stage, subsystem, time))

    # condition hooks -------------------------------------------------------

    def boundary_rhs(self, model, cell, stage, subsystem, condition, time):
        raise AssemblyError(
            "%s cannot apply boundary condition type %r"
            % (type(self).__name__, condition.condition_type))

    def field_rhs(self, model, cell, stage, subsystem, condition, time):
        raise AssemblyError(
            "%s cannot apply field condition type %r"
            % (type(self).__name__, condition.condition_type))

    def impose_constraint(self, model, cells, stage, condition, time):
        raise AssemblyError(
            "%s cannot impose condition type %r"
            % (type(self).__name__, condition.condition_type))

    def impose_initial_condition(self, model, cells, condition):
        raise AssemblyError(
            "%s cannot impose initial condition type %r"
            % (type(self).__name__, condition.condition_type))

    # reporting hooks --------------------------------------------------------

    def field_output(self, model, cell, name):
        raise AssemblyError(
            "%s does not provide field output %r" % (type(self).__name__,
                                                     name))

    def additional_convergence_check(self, model, time):
        return True

    def post_iteration_message(self, model, iteration):
        return None


def _check_scope(dof, stage, subsystem):
    """Reject triplets that reach outside the system being assembled."""
    if dof.stage != stage or (subsystem is not None
                              and dof.subsystem != subsystem):
        raise AssemblyError(
            "dof %d belongs to stage %d subsystem %d, not to the assembled "
            "stage %d subsystem %s"
            % (dof.id, dof.stage, dof.subsystem, stage, subsystem))


def build_sparsity(model, stage, subsystem, size, time=None):
    """Collect triplet positions from every domain cell into a profile.

    Constrained rows and columns are skipped; slave DOFs are redirected
    to their masters. Positions referring to DOFs outside the assembled
    stage or subsystem are contract violations.
    """
    store = model.dof_store
    matrix = SparseMatrix()
    matrix.initialize_profile(size, size)
    for cell in model.domain_cells:
        numerics = model.numerics_of(cell)
        if numerics is None:
            continue
        for contribution in numerics.coefficient_profile(
                model, cell, stage, subsystem, time):
            if not contribution.is_matrix:
                raise AssemblyError(
                    "sparsity profile expects matrix contributions")
            for row_id, col_id in zip(contribution.row_dofs,
                                      contribution.col_dofs):
                row = store.dofs[row_id]
                col = store.dofs[col_id]
                _check_scope(row, stage, subsystem)
                _check_scope(col, stage, subsystem)
                i = store.equation_of(row)
                j = store.equation_of(col)
                if i == UNASSIGNED or j == UNASSIGNED:
                    continue
                matrix.insert_nonzero(i, j)
    matrix.finalize_profile()
    return matrix


def _cell_contributions(model, cell, stage, subsystem, time):
    numerics = model.numerics_of(cell)
    if numerics is None:
        return (), ()
    matrix_parts = []
    vector_parts = []
    for hook in (numerics.static_coefficients,
                 numerics.transient_coefficients):
        matrix_parts.extend(hook(model, cell, stage, subsystem, time))
    for hook in (numerics.static_lhs, numerics.transient_lhs):
        vector_parts.extend(hook(model, cell, stage, subsystem, time))
    return matrix_parts, vector_parts


def assemble_system(model, stage, subsystem, time, boundary_conditions=(),
                    field_conditions=(), matrix=None, workers=1):
    """Assemble the tangent values and the right-hand side.

    Domain cells contribute coefficients into the matrix profile and
    internal forces into the residual; boundary and field conditions
    contribute external forces through the owning numerics. Returns the
    right-hand side over active equations (external minus internal).
    The raw per-DOF residual, including constrained DOFs, is written to
    each DOF's residual slot so reactions can be reported.
    """
    store = model.dof_store
    raw = np.zeros(len(store.dofs))
    raw_lock = threading.Lock()
    if matrix is not None:
        matrix.zero_values()

    def process_cell(cell):
        matrix_parts, vector_parts = _cell_contributions(
            model, cell, stage, subsystem, time)
        rows, cols, values = [], [], []
        for contribution in matrix_parts:
            for row_id, col_id, value in zip(contribution.row_dofs,
                                             contribution.col_dofs,
                                             contribution.values):
                row = store.dofs[row_id]
                col = store.dofs[col_id]
                _check_scope(row, stage, subsystem)
                _check_scope(col, stage, subsystem)
                i = store.equation_of(row)
                j = store.equation_of(col)
                if i == UNASSIGNED or j == UNASSIGNED:
                    continue
                rows.append(i)
                cols.append(j)
                values.append(value)
        local_ids, local_values = [], []
        for contribution in vector_parts:
            if contribution.is_matrix:
                raise AssemblyError(
                    "left-hand-side hooks must return vector contributions")
            for row_id, value in zip(contribution.row_dofs,
                                     contribution.values):
                _check_scope(store.dofs[row_id], stage, subsystem)
                local_ids.append(row_id)
                local_values.append(value)
        if rows and matrix is not None:
            matrix.accumulate_concurrent(rows, cols, values)
        if local_ids:
            with raw_lock:
                np.add.at(raw, local_ids, local_values)

    cells = list(model.domain_cells)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(process_cell, cells))
    else:
        for cell in cells:
            process_cell(cell)

    for condition in boundary_conditions:
        numerics = model.numerics[condition.numerics_id]
        for cell in model.cells_of_group(condition.physical_name):
            for contribution in numerics.boundary_rhs(
                    model, cell, stage, subsystem, condition, time):
                for row_id, value in zip(contribution.row_dofs,
                                         contribution.values):
                    raw[row_id] -= value
    for condition in field_conditions:
        numerics = model.numerics[condition.numerics_id]
        for cell in model.cells_of_group(condition.physical_name):
            for contribution in numerics.field_rhs(
                    model, cell, stage, subsystem, condition, time):
                for row_id, value in zip(contribution.row_dofs,
                                         contribution.values):
                    raw[row_id] -= value

    size = matrix.shape[0] if matrix is not None else None
    rhs = _fold_residual(store, stage, subsystem, raw, size)
    for dof in store.dofs:
        dof.residual = raw[dof.id]
    return rhs


def _fold_residual(store, stage, subsystem, raw, size=None):
    """Fold raw per-DOF residuals into the active-equation right-hand side.

    Slaves lump their residual onto their master's row; the sign flips
    because the solver receives external minus internal force.
    """
    if size is None:
        size = 0
        for dof in store.dofs:
            eq = store.equation_of(dof)
            if eq != UNASSIGNED and dof.stage == stage and (
                    subsystem is None or dof.subsystem == subsystem):
                size = max(size, eq + 1)
    rhs = np.zeros(size)
    for dof in store.dofs:
        if dof.stage != stage:
            continue
        if subsystem is not None and dof.subsystem != subsystem:
            continue
        eq = store.equation_of(dof)
        if eq == UNASSIGNED:
            continue
        rhs[eq] -= raw[dof.id]
    return rhs


def _group_residual_norms(store, stage, subsystem, rhs):
    """Euclidean residual norm per DOF group over active equations."""
    sums = {}
    for dof in store.dofs:
        if dof.stage != stage:
            continue
        if subsystem is not None and dof.subsystem != subsystem:
            continue
        if dof.constrained or dof.is_slave or dof.eq_number == UNASSIGNED:
            continue
        sums.setdefault(dof.group, 0.0)
        sums[dof.group] += rhs[dof.eq_number] ** 2
    return {group: value ** 0.5 for group, value in sums.items()}


def _group_value_norms(store, stage, subsystem, vector):
    sums = {}
    for dof in store.dofs:
        if dof.stage != stage:
            continue
        if subsystem is not None and dof.subsystem != subsystem:
            continue
        if dof.constrained or dof.is_slave or dof.eq_number == UNASSIGNED:
            continue
        sums.setdefault(dof.group, 0.0)
        sums[dof.group] += vector[dof.eq_number] ** 2
    return {group: value ** 0.5 for group, value in sums.items()}


class LinearStatic:
    """One assemble, one solve, one update, one residual report.

    Solves the whole stage monolithically across its subsystems. The
    report carries the infinity norms of the right-hand side and of the
    residual recomputed after the update.
    """

    RESIDUAL_RELATIVE = 1e-9

    def __init__(self, solver_name="SparseLU", workers=None):
        self.solver_name = solver_name
        self.workers = workers

    def solve(self, model, stage, time, config):
        store = model.dof_store
        workers = self.workers or model.workers
        size = store.enumerate_equations(stage, None)
        if size == 0:
            return ConvergenceReport(converged=True, iterations=0,
                                     message="no active equations")
        matrix = build_sparsity(model, stage, None, size, time)
        rhs = assemble_system(
            model, stage, None, time, config.boundary_conditions,
            config.field_conditions, matrix=matrix, workers=workers)
        session = model.solver_session(stage)
        try:
            solution = session.solve(matrix, rhs)
        except SolveError as failure:
            return ConvergenceReport(converged=False, iterations=1,
                                     message=str(failure))
        store.apply_solution_increment(stage, None, solution)
        residual = assemble_system(
            model, stage, None, time, config.boundary_conditions,
            config.field_conditions, matrix=None, workers=1)
        rhs_norm = float(np.max(np.abs(rhs))) if rhs.size else 0.0
        residual_norm = float(np.max(np.abs(residual))) if residual.size \
            else 0.0
        tolerance = max(self.RESIDUAL_RELATIVE * rhs_norm, ABSOLUTE_FLOOR)
        norms = _group_residual_norms(store, stage, None, residual)
        return ConvergenceReport(
            converged=residual_norm <= tolerance, iterations=1,
            group_norms={"rhs": rhs_norm, "residual": residual_norm,
                         **{("residual", g): v for g, v in norms.items()}})


@dataclass
class GroupTolerance:
    correction: float = 1e-6
    residual: float = 1e-6


@dataclass
class _GroupState:
    residual_reference: float = 0.0
    residual_norm: float = 0.0
    correction_norm: float = 0.0
    value_norm: float = 0.0


class AlternateMinimization:
    """Outer sweeps over subsystems, inner Newton on the active one.

    Each inner Newton step solves the active subsystem's tangent with
    every other subsystem frozen at its latest values. Convergence
    requires every DOF group's correction and residual norms to pass its
    relative tolerances (absolute floor 1e-12), plus a clean sweep in
    which no subsystem needed more than the confirming iteration, plus
    the veto hook of every numerics. Residual norms are measured against
    the peak residual seen for the group within the current substep.
    """

    def __init__(self, subsystems, tolerances=None, max_outer=200,
                 max_inner=25, solver_name="SparseLU", workers=None,
                 energy_hook=None):
        if not subsystems:
            raise AssemblyError("alternating minimization needs at least "
                                "one subsystem")
        self.subsystems = tuple(subsystems)
        self.tolerances = dict(tolerances or {})
        self.max_outer = max_outer
        self.max_inner = max_inner
        self.solver_name = solver_name
        self.workers = workers
        self.energy_hook = energy_hook

    def tolerance_for(self, group):
        return self.tolerances.get(group, GroupTolerance())

    def _residual_passes(self, groups, norms):
        return all(
            groups[g].residual_norm <= max(
                self.tolerance_for(g).residual
                * groups[g].residual_reference, ABSOLUTE_FLOOR)
            for g in norms)

    def solve(self, model, stage, time, config):
        store = model.dof_store
        workers = self.workers or model.workers
        groups = {}
        total_inner = 0
        energies = []
        for outer in range(1, self.max_outer + 1):
            moved_beyond_tolerance = False
            all_visits_resolved = True
            for subsystem in self.subsystems:
                size = store.enumerate_equations(stage, subsystem)
                if size == 0:
                    continue
                matrix = build_sparsity(model, stage, subsystem, size, time)
                session = model.solver_session((stage, subsystem))
                for inner in range(1, self.max_inner + 1):
                    rhs = assemble_system(
                        model, stage, subsystem, time,
                        config.boundary_conditions, config.field_conditions,
                        matrix=matrix, workers=workers)
                    residual_norms = _group_residual_norms(
                        store, stage, subsystem, rhs)
                    for group, norm in residual_norms.items():
                        state = groups.setdefault(group, _GroupState())
                        state.residual_norm = norm
                        state.residual_reference = max(
                            state.residual_reference, norm)
                    if self._residual_passes(groups, residual_norms):
                        if inner == 1:
                            # nothing moved during this visit
                            for group in residual_norms:
                                groups[group].correction_norm = 0.0
                        break
                    try:
                        solution = session.solve(matrix, rhs)
                    except SolveError as failure:
                        return ConvergenceReport(
                            converged=False, iterations=total_inner,
                            outer_iterations=outer, message=str(failure),
                            energies=energies)
                    store.apply_solution_increment(stage, subsystem, solution)
                    total_inner += 1
                    values = np.zeros(size)
                    for dof in store.active_dofs(stage, subsystem):
                        values[dof.eq_number] = dof.value
                    correction_norms = _group_value_norms(
                        store, stage, subsystem, solution)
                    value_norms = _group_value_norms(
                        store, stage, subsystem, values)
                    for group, norm in correction_norms.items():
                        state = groups.setdefault(group, _GroupState())
                        state.correction_norm = norm
                        state.value_norm = value_norms.get(group, 0.0)
                        tolerance = self.tolerance_for(group)
                        if norm > max(tolerance.correction * state.value_norm,
                                      ABSOLUTE_FLOOR):
                            moved_beyond_tolerance = True
                else:
                    all_visits_resolved = False
            if self.energy_hook is not None:
                energies.append(self.energy_hook(model))
            for numerics in model.numerics.values():
                numerics.post_iteration_message(model, outer)
            vetoed = not all(
                numerics.additional_convergence_check(model, time)
                for numerics in model.numerics.values())
            if (all_visits_resolved and groups
                    and not moved_beyond_tolerance and not vetoed):
                return ConvergenceReport(
                    converged=True, iterations=total_inner,
                    outer_iterations=outer,
                    group_norms=self._norm_report(groups), energies=energies)
        return ConvergenceReport(
            converged=False, iterations=total_inner,
            outer_iterations=self.max_outer,
            group_norms=self._norm_report(groups),
            message="no convergence within %d outer iterations"
                    % self.max_outer,
            energies=energies)

    @staticmethod
    def _norm_report(groups):
        report = {}
        for group, state in groups.items():
            report[("residual", group)] = state.residual_norm
            report[("correction", group)] = state.correction_norm
        return report
