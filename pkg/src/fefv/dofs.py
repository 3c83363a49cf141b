"""Degree-of-freedom bookkeeping: groups, stages, subsystems, constraints.

Every scalar unknown is a :class:`Dof` attached to a node, a cell, or a
numerics instance.  A DOF is either free (owns an equation after
enumeration), constrained to a prescribed value, or a slave tied to a
master DOF.  Constrained and slave states are mutually exclusive, and
slave chains are limited to one level: the master must be a regular DOF.

DOFs start out unclaimed; numerics instances claim the types they use and
stamp them with stage and subsystem labels.  A DOF left unclaimed (for
instance a damage unknown on a node surrounded by purely elastic cells)
is deactivated: it keeps its value but never receives an equation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

UNASSIGNED = -1


class DofError(RuntimeError):
    """Constraint bookkeeping violation or bad declaration."""


@dataclass
class Dof:
    id: int
    group: int
    primary_slot: int           # output field slot holding the value
    secondary_slot: int         # reserved companion slot
    stage: int = UNASSIGNED
    subsystem: int = UNASSIGNED
    eq_number: int = UNASSIGNED
    value: float = 0.0
    converged_value: float = 0.0
    residual: float = 0.0
    constrained: bool = False
    constraint_value: float = 0.0
    master: int | None = None

    @property
    def is_slave(self):
        return self.master is not None

    @property
    def claimed(self):
        return self.stage != UNASSIGNED


@dataclass(frozen=True)
class DofDeclaration:
    """One entry of a *DOF_PER_NODE / *DOF_PER_CELL block."""
    group: int
    primary_slot: int
    secondary_slot: int


class DofStore:
    """Owns every DOF of the model and the equation numbering."""

    def __init__(self):
        self.dofs: list[Dof] = []
        self.node_dofs: list[list[int]] = []
        self.cell_dofs: list[list[int]] = []
        self.numerics_dofs: dict[int, list[int]] = {}

    # ---- creation -----------------------------------------------------------

    def _new(self, decl):
        dof = Dof(id=len(self.dofs), group=decl.group,
                  primary_slot=decl.primary_slot,
                  secondary_slot=decl.secondary_slot)
        self.dofs.append(dof)
        return dof.id

    def create_node_dofs(self, node_count, declarations):
        self.node_dofs = [[self._new(d) for d in declarations]
                          for _ in range(node_count)]

    def create_cell_dofs(self, cell_count, declarations):
        self.cell_dofs = [[self._new(d) for d in declarations]
                          for _ in range(cell_count)]

    def create_numerics_dofs(self, numerics_id, declarations):
        self.numerics_dofs[numerics_id] = [self._new(d) for d in declarations]

    def node_dof(self, node, type_index):
        """type_index is 1-based, matching the deck declarations."""
        try:
            return self.dofs[self.node_dofs[node][type_index - 1]]
        except IndexError:
            raise DofError("node %d has no DOF type %d" % (node, type_index))

    def cell_dof(self, cell, type_index):
        try:
            return self.dofs[self.cell_dofs[cell][type_index - 1]]
        except IndexError:
            raise DofError("cell %d has no DOF type %d" % (cell, type_index))

    def numerics_dof(self, numerics_id, k):
        return self.dofs[self.numerics_dofs[numerics_id][k]]

    # ---- claiming ------------------------------------------------------------

    def claim(self, dof, stage, subsystem):
        """Stamp stage/subsystem; repeated claims must agree."""
        if dof.claimed and (dof.stage, dof.subsystem) != (stage, subsystem):
            raise DofError(
                "DOF %d claimed for stage %d subsystem %d, already stamped "
                "stage %d subsystem %d"
                % (dof.id, stage, subsystem, dof.stage, dof.subsystem))
        dof.stage = stage
        dof.subsystem = subsystem

    # ---- constraints -----------------------------------------------------------

    def constrain(self, dof, value):
        if dof.is_slave:
            raise DofError("DOF %d is a slave; cannot also constrain it" % dof.id)
        dof.constrained = True
        dof.constraint_value = float(value)
        dof.value = float(value)

    def release(self, dof):
        dof.constrained = False

    def make_slave(self, slave, master):
        if slave.constrained:
            raise DofError("DOF %d is constrained; cannot enslave it" % slave.id)
        if master.is_slave:
            raise DofError("master DOF %d is itself a slave "
                           "(one-level constraints only)" % master.id)
        if slave.id == master.id:
            raise DofError("DOF %d cannot be its own master" % slave.id)
        slave.master = master.id

    def resolve(self, dof):
        """The DOF whose equation receives this DOF's contributions."""
        return self.dofs[dof.master] if dof.is_slave else dof

    # ---- enumeration ------------------------------------------------------------

    def enumerate_equations(self, stage, subsystem=None):
        """Assign contiguous equation numbers to the active DOFs of one
        stage (optionally one subsystem).  Returns the equation count."""
        count = 0
        for dof in self.dofs:
            in_scope = (dof.stage == stage
                        and (subsystem is None or dof.subsystem == subsystem))
            if in_scope and not dof.constrained and not dof.is_slave:
                dof.eq_number = count
                count += 1
            else:
                dof.eq_number = UNASSIGNED
        return count

    def equation_of(self, dof):
        """Equation index after master redirection; UNASSIGNED if none."""
        return self.resolve(dof).eq_number

    def active_dofs(self, stage, subsystem=None):
        return [d for d in self.dofs
                if d.eq_number != UNASSIGNED and d.stage == stage
                and (subsystem is None or d.subsystem == subsystem)]

    # ---- value management ---------------------------------------------------------

    def apply_solution_increment(self, stage, subsystem, delta):
        """Add the Newton correction to every equation-owning DOF, then
        mirror master values onto slaves."""
        for dof in self.dofs:
            if (dof.eq_number != UNASSIGNED and dof.stage == stage
                    and (subsystem is None or dof.subsystem == subsystem)):
                dof.value += delta[dof.eq_number]
        self.sync_slaves()

    def sync_slaves(self):
        for dof in self.dofs:
            if dof.is_slave:
                dof.value = self.dofs[dof.master].value

    def finalize(self):
        for dof in self.dofs:
            dof.converged_value = dof.value

    def rollback(self):
        for dof in self.dofs:
            dof.value = dof.converged_value
