"""Brittle fracture by phase-field regularization on linear triangles.

A scalar damage field phi grows from 0 (intact) to 1 (fully broken) and
degrades the tensile part of the elastic energy; the crack surface
energy penalizes both phi and its gradient through a length scale that
controls how wide the diffuse crack band is. Stationarity of the total
energy gives two coupled equations: degraded momentum balance in the
displacements and a reaction-diffusion-type evolution equation in phi.
The pair is nonconvex jointly but convex in each field separately, so
the solver alternates between the two subsystems, each visit a Newton
solve with the other field frozen.

The split of the energy into degradable and protected parts lives in
the damage material (volumetric tension and deviatoric parts degrade,
volumetric compression does not). This module evaluates everything at
the element centroid: strain is constant on linear triangles anyway and
phi enters through its nodal average, so one quadrature point is the
consistent rule for every term.

Fully broken elements keep exactly zero tangent stiffness in tension;
no artificial residual stiffness is added. Once an element's committed
centroid phi exceeds the material's irreversibility threshold the
element counts as cracked and its nodal phi values are pinned to 1 in
later substeps (crack-set irreversibility).

Elastic regions that must not fracture are assigned the plain
plane-strain numerics below. Both classes can share displacement DOFs
on one mesh; phi DOFs that no fracture cell claims simply stay out of
the equation numbering, so mixed domains need no special casing.
"""

import numpy as np

from ..assembly import AssemblyError, LocalContribution, Numerics
from ..materials import MaterialError

__all__ = [
    "PhaseFieldParams",
    "CellFractureStatus",
    "regularization_length",
    "PlaneStrainElasticity",
    "PhaseFieldFracture",
]

TRI3_CODE = 2
# 1-point centroid rule on the triangle: shape values are all 1/3
CENTER_SHAPE = np.full(3, 1.0 / 3.0)


def regularization_length(young, energy_release_rate, tensile_strength):
    """Crack-band width that reproduces a given tensile strength.

    For the quadratic degradation function, a homogeneous bar under
    tension reaches its stress peak when the band width is
    27*E*Gc / (256*ft^2); choosing that width makes the phase-field
    model break at the measured strength.
    """
    if young <= 0.0 or energy_release_rate <= 0.0 or tensile_strength <= 0.0:
        raise AssemblyError(
            "regularization length needs positive modulus, toughness and "
            "strength, got E=%g, Gc=%g, ft=%g"
            % (young, energy_release_rate, tensile_strength))
    return 27.0 * young * energy_release_rate \
        / (256.0 * tensile_strength ** 2)


class PhaseFieldParams:
    """Regularization constants of one fracture formulation."""

    __slots__ = ("length", "energy_release_rate", "crack_initialization")

    def __init__(self, length, energy_release_rate,
                 crack_initialization=False):
        if length is None or length <= 0.0:
            raise AssemblyError(
                "characteristic length must be positive, got %r" % length)
        if energy_release_rate is None or energy_release_rate <= 0.0:
            raise AssemblyError(
                "critical energy release rate must be positive, got %r"
                % energy_release_rate)
        self.length = float(length)
        self.energy_release_rate = float(energy_release_rate)
        self.crack_initialization = bool(crack_initialization)


class CellFractureStatus:
    """Committed per-cell history: strain, damage state, crack flag.

    The damage member is owned by the material; committed values change
    only when a substep finalizes.
    """

    __slots__ = ("strain", "damage")

    def __init__(self, damage):
        self.strain = np.zeros(4)
        self.damage = damage

    @property
    def cracked(self):
        return self.damage is not None and self.damage.irreversible


def _triangle(pts):
    """Area, shape gradients (2x3) and strain operator (4x6) of a tri3."""
    det = ((pts[1, 0] - pts[0, 0]) * (pts[2, 1] - pts[0, 1])
           - (pts[1, 1] - pts[0, 1]) * (pts[2, 0] - pts[0, 0]))
    if det <= 0.0:
        raise AssemblyError("triangle has nonpositive area; check node "
                            "ordering")
    grads = np.array([
        [pts[1, 1] - pts[2, 1], pts[2, 1] - pts[0, 1],
         pts[0, 1] - pts[1, 1]],
        [pts[2, 0] - pts[1, 0], pts[0, 0] - pts[2, 0],
         pts[1, 0] - pts[0, 0]],
    ]) / det
    b = np.zeros((4, 6))
    for i in range(3):
        b[0, 2 * i] = grads[0, i]
        b[1, 2 * i + 1] = grads[1, i]
        b[3, 2 * i] = grads[1, i]
        b[3, 2 * i + 1] = grads[0, i]
    return 0.5 * det, grads, b


class _PlaneStrainBase(Numerics):
    """Shared plumbing of the two triangle formulations in this module."""

    def __init__(self, numerics_id, nodal_dofs, stage, subsystems,
                 body_force, cell_outputs):
        super().__init__(numerics_id, stage, subsystems)
        self.nodal_dofs = tuple(int(k) for k in nodal_dofs)
        self.body_force = (float(body_force[0]), float(body_force[1]))
        self.cell_outputs = dict(cell_outputs or {})

    def _cell_nodes(self, model, cell):
        shape = model.mesh.cells[cell]
        if shape.type_code != TRI3_CODE:
            raise AssemblyError(
                "%s runs on 3-node triangles, cell %d is %s"
                % (type(self).__name__, cell, shape.cell_type.name))
        return [int(n) for n in shape.nodes]

    def _displacement_ids(self, model, cell):
        store = model.dof_store
        ids = []
        for node in self._cell_nodes(model, cell):
            for k in self.nodal_dofs[:2]:
                ids.append(store.node_dof(node, k).id)
        return ids

    def _element(self, model, cell):
        pts = model.mesh.coords[self._cell_nodes(model, cell), :2]
        try:
            return _triangle(pts)
        except AssemblyError:
            raise AssemblyError(
                "triangle %d has nonpositive area; check node ordering"
                % cell)

    def _displacements(self, model, cell):
        store = model.dof_store
        return np.array([store.dofs[i].value
                         for i in self._displacement_ids(model, cell)])

    def _edge_traction(self, model, cell, condition, time):
        """Half-edge lumping of a constant traction component."""
        mesh = model.mesh
        shape = mesh.cells[cell]
        if shape.cell_type.dimension != 1:
            raise AssemblyError(
                "traction conditions live on edge cells, cell %d is %s"
                % (cell, shape.cell_type.name))
        nodes = [int(n) for n in shape.nodes[:2]]
        pts = mesh.coords[nodes, :2]
        length = float(np.hypot(*(pts[1] - pts[0])))
        midpoint = 0.5 * (pts[0] + pts[1])
        when = time.target if time is not None else 0.0
        value = condition.evaluate((midpoint[0], midpoint[1], 0.0), when)
        store = model.dof_store
        ids = [store.node_dof(n, condition.dof_type).id for n in nodes]
        half = 0.5 * value * length
        return (LocalContribution(ids, [], [half, half]),)

    def _constrain_nodes(self, model, cells, condition, time):
        store = model.dof_store
        mesh = model.mesh
        when = time.target if time is not None else 0.0
        for cell in cells:
            for node in (int(n) for n in mesh.cells[cell].nodes):
                x, y = mesh.coords[node, :2]
                store.constrain(store.node_dof(node, condition.dof_type),
                                condition.evaluate((x, y, 0.0), when))


class PlaneStrainElasticity(_PlaneStrainBase):
    """Small-strain momentum balance on linear triangles.

    One quadrature point per element; the constitutive answer comes from
    whichever assigned material serves plane-strain Voigt queries. Used
    on its own for elastic problems and alongside the fracture numerics
    for regions that must not crack, sharing the displacement DOFs.
    """

    DECK_NAME = "PlaneStrain_Fe_Tri3"
    FIELD_NAMES = ("s_xx", "s_yy", "s_zz", "s_xy", "ux_x", "uy_y", "g_xy")
    CONSTRAINT_TYPES = ("Displacement",)

    def __init__(self, numerics_id, nodal_dofs=(1, 2), stage=1, subsystem=1,
                 body_force=(0.0, 0.0), cell_outputs=None):
        if len(nodal_dofs) != 2:
            raise AssemblyError(
                "plane-strain momentum needs two nodal DOF indices, got %r"
                % (nodal_dofs,))
        super().__init__(numerics_id, nodal_dofs, stage, (subsystem,),
                         body_force, cell_outputs)

    def solution_stages(self):
        return (self.stage,)

    def set_dof_stages(self, model, cell):
        store = model.dof_store
        subsystem = self.subsystems[0]
        for node in self._cell_nodes(model, cell):
            for k in self.nodal_dofs:
                store.claim(store.node_dof(node, k), self.stage, subsystem)

    def _elasticity(self, model, cell):
        # The force query validates the Voigt state shape, so damage
        # materials and scalar laws are skipped rather than misbound.
        state = np.zeros(4)
        for material in model.materials_of(cell):
            try:
                material.force_from(state)
                return material.modulus_from(state)
            except MaterialError:
                continue
        raise AssemblyError(
            "no material assigned to cell %d answers a plane-strain "
            "modulus" % cell)

    def _in_scope(self, stage, subsystem):
        return stage == self.stage and (
            subsystem is None or subsystem in self.subsystems)

    def static_coefficients(self, model, cell, stage, subsystem, time):
        if not self._in_scope(stage, subsystem):
            return ()
        area, _, b = self._element(model, cell)
        ke = area * (b.T @ self._elasticity(model, cell) @ b)
        u_ids = self._displacement_ids(model, cell)
        rows, cols, values = [], [], []
        for i in range(6):
            for j in range(6):
                rows.append(u_ids[i])
                cols.append(u_ids[j])
                values.append(ke[i, j])
        return (LocalContribution(rows, cols, values),)

    def static_lhs(self, model, cell, stage, subsystem, time):
        if not self._in_scope(stage, subsystem):
            return ()
        area, _, b = self._element(model, cell)
        u = self._displacements(model, cell)
        force = area * (b.T @ (self._elasticity(model, cell) @ (b @ u)))
        fx, fy = self.body_force
        share = area / 3.0
        for i in range(3):
            force[2 * i] -= share * fx
            force[2 * i + 1] -= share * fy
        return (LocalContribution(self._displacement_ids(model, cell), [],
                                  [float(v) for v in force]),)

    def boundary_rhs(self, model, cell, stage, subsystem, condition, time):
        if condition.condition_type in self.CONSTRAINT_TYPES:
            return ()
        if condition.condition_type != "Traction":
            return super().boundary_rhs(model, cell, stage, subsystem,
                                        condition, time)
        if not self._in_scope(stage, subsystem):
            return ()
        return self._edge_traction(model, cell, condition, time)

    def impose_constraint(self, model, cells, stage, condition, time):
        if stage != self.stage:
            return
        if condition.condition_type == "Displacement":
            self._constrain_nodes(model, cells, condition, time)
            return
        super().impose_constraint(model, cells, stage, condition, time)

    def field_output(self, model, cell, name):
        if name not in self.FIELD_NAMES:
            return super().field_output(model, cell, name)
        _, _, b = self._element(model, cell)
        strain = b @ self._displacements(model, cell)
        if name in ("ux_x", "uy_y", "g_xy"):
            component = {"ux_x": 0, "uy_y": 1, "g_xy": 3}[name]
            return np.full(3, float(strain[component]))
        stress = self._elasticity(model, cell) @ strain
        component = {"s_xx": 0, "s_yy": 1, "s_zz": 2, "s_xy": 3}[name]
        return np.full(3, float(stress[component]))


class PhaseFieldFracture(_PlaneStrainBase):
    """Degraded momentum balance plus phase-field evolution on tri3.

    Displacements live in the first subsystem, phi in the second; the
    alternating solver visits them in that order. Every constitutive
    answer comes from the assigned damage material through its
    "Mechanics" and "PhaseField" query labels, evaluated at the state
    {strain, nodal-average phi}. Traction and Displacement conditions
    address the displacement DOFs; a PhaseField condition pins the phi
    DOFs of a boundary group (the essential interface variant), while
    doing nothing leaves the natural zero-flux behavior.

    The crack_initialization flag is accepted from decks and stored but
    activates nothing; no shipped problem uses it.
    """

    DECK_NAME = "PhsFieldFracture_Fe_Tri3"
    FIELD_NAMES = ("s_xx", "s_yy", "s_zz", "s_xy", "ux_x", "uy_y", "g_xy")
    CONSTRAINT_TYPES = ("Displacement", "PhaseField")

    def __init__(self, numerics_id, nodal_dofs=(1, 2, 3), stage=1,
                 subsystems=(1, 2), characteristic_length=None,
                 critical_energy_release_rate=None,
                 crack_initialization=False, body_force=(0.0, 0.0),
                 cell_outputs=None):
        if len(nodal_dofs) != 3:
            raise AssemblyError(
                "phase-field fracture needs three nodal DOF indices "
                "(u_x, u_y, phi), got %r" % (nodal_dofs,))
        if len(subsystems) != 2:
            raise AssemblyError(
                "phase-field fracture needs two subsystem numbers "
                "(mechanics, phase-field), got %r" % (subsystems,))
        super().__init__(numerics_id, nodal_dofs, stage, subsystems,
                         body_force, cell_outputs)
        self.params = PhaseFieldParams(characteristic_length,
                                       critical_energy_release_rate,
                                       crack_initialization)
        self._material = {}
        self._status = {}

    def solution_stages(self):
        return (self.stage,)

    @property
    def mechanics_subsystem(self):
        return self.subsystems[0]

    @property
    def phase_field_subsystem(self):
        return self.subsystems[1]

    # ---- structure ---------------------------------------------------------

    def initialize(self, model):
        """Bind each cell to its damage material and fresh history."""
        self._material = {}
        self._status = {}
        for cell in model.domain_cells:
            if model.numerics_of(cell) is not self:
                continue
            material = self._damage_material(model, cell)
            self._material[cell] = material
            self._status[cell] = CellFractureStatus(material.create_status())

    def set_dof_stages(self, model, cell):
        store = model.dof_store
        for node in self._cell_nodes(model, cell):
            for k in self.nodal_dofs[:2]:
                store.claim(store.node_dof(node, k), self.stage,
                            self.mechanics_subsystem)
            store.claim(store.node_dof(node, self.nodal_dofs[2]),
                        self.stage, self.phase_field_subsystem)

    def prepare_conditions(self, model, boundary_conditions,
                           field_conditions, time):
        """Pin phi to 1 on every cell whose committed state is cracked."""
        store = model.dof_store
        for cell, status in self._status.items():
            if not status.cracked:
                continue
            for node in self._cell_nodes(model, cell):
                dof = store.node_dof(node, self.nodal_dofs[2])
                if not dof.constrained:
                    store.constrain(dof, 1.0)

    def finalize_cell(self, model, cell, time):
        """Commit the converged state into the cell's fracture history."""
        status = self._status.get(cell)
        if status is None:
            return
        state = self._state(model, cell)
        status.strain = state[:4].copy()
        self._material[cell].update_status_from(state, status.damage)

    # ---- state access -------------------------------------------------------

    def _damage_material(self, model, cell):
        # Probe with a query only a damage material can answer: plain
        # elasticity would swallow a mislabeled modulus request, but it
        # chokes on the five-component {strain, phi} force state.
        probe = np.zeros(5)
        for material in model.materials_of(cell):
            try:
                material.force_from(probe, None, "PhaseField")
                material.modulus_from(probe, None, "Mechanics")
                return material
            except MaterialError:
                continue
        raise AssemblyError(
            "no material assigned to cell %d answers damage-mechanics "
            "queries on a {strain, phi} state" % cell)

    def _phi_ids(self, model, cell):
        store = model.dof_store
        return [store.node_dof(node, self.nodal_dofs[2]).id
                for node in self._cell_nodes(model, cell)]

    def _phi_values(self, model, cell):
        store = model.dof_store
        return np.array([store.dofs[i].value
                         for i in self._phi_ids(model, cell)])

    def _state(self, model, cell):
        """{strain Voigt 4, centroid phi} from the current DOF values."""
        _, _, b = self._element(model, cell)
        strain = b @ self._displacements(model, cell)
        phi = float(CENTER_SHAPE @ self._phi_values(model, cell))
        return np.concatenate([strain, [phi]])

    def _in_scope(self, stage, subsystem):
        return stage == self.stage and (
            subsystem is None or subsystem in self.subsystems)

    def _do_mechanics(self, subsystem):
        return subsystem is None or subsystem == self.mechanics_subsystem

    def _do_phase_field(self, subsystem):
        return subsystem is None or subsystem == self.phase_field_subsystem

    # ---- assembly -------------------------------------------------------------

    def static_coefficients(self, model, cell, stage, subsystem, time):
        if not self._in_scope(stage, subsystem):
            return ()
        area, grads, b = self._element(model, cell)
        material = self._material[cell]
        status = self._status[cell].damage
        state = self._state(model, cell)
        parts = []
        if self._do_mechanics(subsystem):
            modulus = material.modulus_from(state, status, "Mechanics")
            ke = area * (b.T @ modulus @ b)
            u_ids = self._displacement_ids(model, cell)
            rows, cols, values = [], [], []
            for i in range(6):
                for j in range(6):
                    rows.append(u_ids[i])
                    cols.append(u_ids[j])
                    values.append(ke[i, j])
            parts.append(LocalContribution(rows, cols, values))
        if self._do_phase_field(subsystem):
            gc = self.params.energy_release_rate
            ell = self.params.length
            reaction = material.modulus_from(state, status, "PhaseField") \
                + gc / ell
            kp = area * (reaction * np.outer(CENTER_SHAPE, CENTER_SHAPE)
                         + gc * ell * (grads.T @ grads))
            phi_ids = self._phi_ids(model, cell)
            rows, cols, values = [], [], []
            for i in range(3):
                for j in range(3):
                    rows.append(phi_ids[i])
                    cols.append(phi_ids[j])
                    values.append(kp[i, j])
            parts.append(LocalContribution(rows, cols, values))
        return tuple(parts)

    def static_lhs(self, model, cell, stage, subsystem, time):
        if not self._in_scope(stage, subsystem):
            return ()
        area, grads, b = self._element(model, cell)
        material = self._material[cell]
        status = self._status[cell].damage
        state = self._state(model, cell)
        parts = []
        if self._do_mechanics(subsystem):
            stress = material.force_from(state, status, "Mechanics")
            force = area * (b.T @ stress)
            fx, fy = self.body_force
            share = area / 3.0
            for i in range(3):
                force[2 * i] -= share * fx
                force[2 * i + 1] -= share * fy
            parts.append(LocalContribution(
                self._displacement_ids(model, cell), [],
                [float(v) for v in force]))
        if self._do_phase_field(subsystem):
            gc = self.params.energy_release_rate
            ell = self.params.length
            driving = material.force_from(state, status, "PhaseField")
            phi = state[4]
            grad_phi = grads @ self._phi_values(model, cell)
            residual = area * ((driving + gc / ell * phi) * CENTER_SHAPE
                               + gc * ell * (grads.T @ grad_phi))
            parts.append(LocalContribution(
                self._phi_ids(model, cell), [],
                [float(v) for v in residual]))
        return tuple(parts)

    # ---- conditions ------------------------------------------------------------

    def boundary_rhs(self, model, cell, stage, subsystem, condition, time):
        if condition.condition_type in self.CONSTRAINT_TYPES:
            return ()
        if condition.condition_type != "Traction":
            return super().boundary_rhs(model, cell, stage, subsystem,
                                        condition, time)
        if not self._in_scope(stage, subsystem) \
                or not self._do_mechanics(subsystem):
            return ()
        return self._edge_traction(model, cell, condition, time)

    def impose_constraint(self, model, cells, stage, condition, time):
        if stage != self.stage:
            return
        kind = condition.condition_type
        if kind == "Displacement":
            self._constrain_nodes(model, cells, condition, time)
            return
        if kind == "PhaseField":
            if condition.dof_type != self.nodal_dofs[2]:
                raise AssemblyError(
                    "PhaseField condition must address DOF index %d, got %d"
                    % (self.nodal_dofs[2], condition.dof_type))
            self._constrain_nodes(model, cells, condition, time)
            return
        super().impose_constraint(model, cells, stage, condition, time)

    # ---- reporting ------------------------------------------------------------

    def total_energy(self, model):
        """Bulk plus crack-surface energy over this formulation's cells.

        External work terms are not included; the shipped problems are
        displacement-driven, where this is the full objective that the
        alternating solver minimizes.
        """
        total = 0.0
        for cell, material in self._material.items():
            area, grads, _ = self._element(model, cell)
            state = self._state(model, cell)
            phi = state[4]
            grad_phi = grads @ self._phi_values(model, cell)
            gc = self.params.energy_release_rate
            ell = self.params.length
            surface = gc * (phi * phi / (2.0 * ell)
                            + 0.5 * ell * float(grad_phi @ grad_phi))
            bulk = material.potential_from(state)
            total += area * (bulk + surface)
        return float(total)

    def field_output(self, model, cell, name):
        if name not in self.FIELD_NAMES:
            return super().field_output(model, cell, name)
        state = self._state(model, cell)
        if name in ("ux_x", "uy_y", "g_xy"):
            component = {"ux_x": 0, "uy_y": 1, "g_xy": 3}[name]
            return np.full(3, float(state[component]))
        stress = self._material[cell].force_from(
            state, self._status[cell].damage, "Mechanics")
        component = {"s_xx": 0, "s_yy": 1, "s_zz": 2, "s_xy": 3}[name]
        return np.full(3, float(stress[component]))
