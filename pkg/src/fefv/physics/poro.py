"""Coupled skeleton elasticity and pore-pressure flow on one mesh.

Momentum balance is discretized with nodal linear triangles, fluid mass
balance with cell-centered finite volumes whose fluxes come from
two-point differences across cell faces. Both live in one stage, so
every time step is a single monolithic solve. Time integration is
backward Euler on the mass equation; the skeleton is quasi-static.

Sign conventions: normal stress positive in tension, pressure positive
in compression. The effective stress C:eps(u) minus alpha*p*I enters the
momentum rows; the mass rows carry the volumetric-strain rate, the
storage rate and the two-point fluxes. The element-local
pressure-pressure block is identically zero (fluxes live on faces, not
elements) and is never emitted, keeping the global profile as sparse as
the stencil really is.
"""

import numpy as np

from ..assembly import AssemblyError, LocalContribution, Numerics
from ..materials import MaterialError

__all__ = [
    "PoroParams",
    "FaceTransmissibility",
    "tpfa_transmissibility",
    "BiotPoroelasticity",
]

TRI3_CODE = 2
# plane-strain Voigt order {exx, eyy, ezz, gxy}; ezz stays zero
VOIGT_TRACE = np.array([1.0, 1.0, 1.0, 0.0])


class PoroParams:
    """Coupling constants of the porous medium.

    biot is the Biot-Willis coefficient, storage the inverse Biot
    modulus 1/M, body_force the saturated weight vector, source a
    volumetric fluid source rate.
    """

    __slots__ = ("biot", "storage", "body_force", "source")

    def __init__(self, biot=1.0, storage=0.0, body_force=(0.0, 0.0),
                 source=0.0):
        if not 0.0 < biot <= 1.0:
            raise AssemblyError(
                "Biot coefficient must lie in (0, 1], got %g" % biot)
        if storage < 0.0:
            raise AssemblyError("storage 1/M must be nonnegative, got %g"
                                % storage)
        self.biot = float(biot)
        self.storage = float(storage)
        self.body_force = (float(body_force[0]), float(body_force[1]))
        self.source = float(source)


class FaceTransmissibility:
    """Aggregated two-point coefficient of one face."""

    __slots__ = ("face", "value", "boundary")

    def __init__(self, face, value, boundary):
        if value < 0.0:
            raise AssemblyError(
                "transmissibility of face %d is negative (%g)"
                % (face, value))
        self.face = int(face)
        self.value = float(value)
        self.boundary = bool(boundary)


def tpfa_transmissibility(face, centroids, mobilities):
    """Two-point transmissibility of a face from its neighbor cells.

    centroids and mobilities map cell index to centroid and to k/mu.
    Interior faces take the harmonic combination of the two half
    coefficients t_i = mobility_i * L * (d_i . n) / |d_i|^2 with d_i
    from cell centroid to face midpoint; a boundary face keeps its
    single half coefficient, which is the Dirichlet-pressure weight.
    """
    halves = []
    for cell in (face.plus_cell, face.minus_cell):
        if cell is None:
            continue
        d = np.asarray(face.midpoint, dtype=float) \
            - np.asarray(centroids[cell], dtype=float)
        dist2 = float(d @ d)
        if dist2 == 0.0:
            raise AssemblyError(
                "cell %d has zero centroid-to-face distance on face %d"
                % (cell, face.index))
        halves.append(mobilities[cell] * face.length
                      * abs(float(d @ face.normal)) / dist2)
    if len(halves) == 1:
        return FaceTransmissibility(face.index, halves[0], True)
    t1, t2 = halves
    total = t1 + t2
    value = t1 * t2 / total if total > 0.0 else 0.0
    return FaceTransmissibility(face.index, value, False)


class BiotPoroelasticity(Numerics):
    """Linear triangles for displacement, one pressure unknown per cell.

    Displacement DOFs sit on nodes (two declaration indices), pressure
    on the cell. Boundary conditions: Traction and NormalFlux are
    natural terms, Displacement constrains nodal DOFs, MasterSlaveLink
    ties a boundary's DOFs to the lowest-numbered node (rigid-plate
    condition: the eliminated rows lump their loads onto the master),
    and Pressure enters through boundary half-transmissibilities cached
    when constraints are imposed.
    """

    DECK_NAME = "BiotPoroelasticity_FeFv_Tri3"
    FIELD_NAMES = ("p", "s_xx", "s_yy", "s_zz", "s_xy")
    CONSTRAINT_TYPES = ("Displacement", "Pressure", "MasterSlaveLink")

    def __init__(self, numerics_id, nodal_dofs=(1, 2), cell_dof=1, stage=1,
                 subsystem=1, biot=1.0, storage=0.0, body_force=(0.0, 0.0),
                 source=0.0, cell_outputs=None):
        super().__init__(numerics_id, stage, (subsystem,))
        if len(nodal_dofs) != 2:
            raise AssemblyError(
                "plane-strain momentum needs two nodal DOF indices, got %r"
                % (nodal_dofs,))
        self.nodal_dofs = tuple(int(k) for k in nodal_dofs)
        self.cell_dof = int(cell_dof)
        self.params = PoroParams(biot, storage, body_force, source)
        self.cell_outputs = dict(cell_outputs or {})
        self._face_T = {}
        self._pressure_faces = {}

    # ---- structure ---------------------------------------------------------

    def initialize(self, model):
        """Build the interior transmissibility cache once per model."""
        mesh = model.mesh
        mine = [cell for cell in model.domain_cells
                if model.numerics_of(cell) is self]
        centroids = {cell: mesh.cell_centroid(cell) for cell in mine}
        mobility = {cell: self._mobility(model, cell) for cell in mine}
        self._face_T = {}
        seen = set(mine)
        for cell in mine:
            for fi in mesh.cell_faces[cell]:
                face = mesh.faces[fi]
                if face.is_boundary or fi in self._face_T:
                    continue
                if face.plus_cell not in seen or face.minus_cell not in seen:
                    # formulation boundary inside the mesh: no-flow
                    continue
                self._face_T[fi] = tpfa_transmissibility(
                    face, centroids, mobility)

    def set_dof_stages(self, model, cell):
        store = model.dof_store
        subsystem = self.subsystems[0]
        for node in self._cell_nodes(model, cell):
            for k in self.nodal_dofs:
                store.claim(store.node_dof(node, k), self.stage, subsystem)
        store.claim(store.cell_dof(cell, self.cell_dof), self.stage,
                    subsystem)

    def prepare_conditions(self, model, boundary_conditions,
                           field_conditions, time):
        """Reset per-load-step caches before constraints are imposed."""
        self._pressure_faces = {}

    # ---- cell access ---------------------------------------------------------

    def _cell_nodes(self, model, cell):
        shape = model.mesh.cells[cell]
        if shape.type_code != TRI3_CODE:
            raise AssemblyError(
                "poroelasticity runs on 3-node triangles, cell %d is %s"
                % (cell, shape.cell_type.name))
        return [int(n) for n in shape.nodes]

    def _displacement_ids(self, model, cell):
        store = model.dof_store
        ids = []
        for node in self._cell_nodes(model, cell):
            for k in self.nodal_dofs:
                ids.append(store.node_dof(node, k).id)
        return ids

    def _pressure_id(self, model, cell):
        return model.dof_store.cell_dof(cell, self.cell_dof).id

    def _elasticity(self, model, cell):
        state = np.zeros(4)
        for material in model.materials_of(cell):
            try:
                return material.modulus_from(state)
            except MaterialError:
                continue
        raise AssemblyError(
            "no material assigned to cell %d answers a plane-strain "
            "modulus" % cell)

    def _mobility(self, model, cell):
        for material in model.materials_of(cell):
            try:
                return material.parameter("Conductance")
            except MaterialError:
                continue
        raise AssemblyError(
            "no material assigned to cell %d answers a conductance "
            "(mobility k/mu)" % cell)

    def _element(self, model, cell):
        """Area and the strain-displacement matrix of one triangle."""
        pts = model.mesh.coords[self._cell_nodes(model, cell), :2]
        det = ((pts[1, 0] - pts[0, 0]) * (pts[2, 1] - pts[0, 1])
               - (pts[1, 1] - pts[0, 1]) * (pts[2, 0] - pts[0, 0]))
        if det <= 0.0:
            raise AssemblyError(
                "triangle %d has nonpositive area; check node ordering"
                % cell)
        area = 0.5 * det
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
        return area, b

    def _time_increment(self, time):
        if time is None:
            return 1.0
        if time.increment <= 0.0:
            raise AssemblyError(
                "transient poroelasticity needs a positive time increment, "
                "got %g" % time.increment)
        return time.increment

    # ---- assembly -------------------------------------------------------------

    def static_coefficients(self, model, cell, stage, subsystem, time):
        if stage != self.stage or (subsystem is not None
                                   and subsystem not in self.subsystems):
            return ()
        area, b = self._element(model, cell)
        stiffness = self._elasticity(model, cell)
        ke = area * (b.T @ stiffness @ b)
        coupling = -self.params.biot * area * (b.T @ VOIGT_TRACE)
        u_ids = self._displacement_ids(model, cell)
        p_id = self._pressure_id(model, cell)
        rows, cols, values = [], [], []
        for i in range(6):
            for j in range(6):
                rows.append(u_ids[i])
                cols.append(u_ids[j])
                values.append(ke[i, j])
        for i in range(6):
            rows.append(u_ids[i])
            cols.append(p_id)
            values.append(coupling[i])
        for fi in model.mesh.cell_faces[cell]:
            entry = self._face_T.get(fi)
            if entry is None:
                continue
            face = model.mesh.faces[fi]
            neighbor = face.minus_cell if face.plus_cell == cell \
                else face.plus_cell
            rows.append(p_id)
            cols.append(p_id)
            values.append(entry.value)
            rows.append(p_id)
            cols.append(self._pressure_id(model, neighbor))
            values.append(-entry.value)
        for entry, _ in self._pressure_faces.get(cell, {}).values():
            rows.append(p_id)
            cols.append(p_id)
            values.append(entry.value)
        return (LocalContribution(rows, cols, values),)

    def transient_coefficients(self, model, cell, stage, subsystem, time):
        if stage != self.stage or (subsystem is not None
                                   and subsystem not in self.subsystems):
            return ()
        dt = self._time_increment(time)
        area, b = self._element(model, cell)
        rate = self.params.biot * area / dt
        u_ids = self._displacement_ids(model, cell)
        p_id = self._pressure_id(model, cell)
        trace_row = VOIGT_TRACE @ b
        rows = [p_id] * 6
        cols = list(u_ids)
        values = [rate * trace_row[i] for i in range(6)]
        if self.params.storage > 0.0:
            rows.append(p_id)
            cols.append(p_id)
            values.append(self.params.storage * area / dt)
        return (LocalContribution(rows, cols, values),)

    def static_lhs(self, model, cell, stage, subsystem, time):
        if stage != self.stage or (subsystem is not None
                                   and subsystem not in self.subsystems):
            return ()
        store = model.dof_store
        area, b = self._element(model, cell)
        stiffness = self._elasticity(model, cell)
        u_ids = self._displacement_ids(model, cell)
        p_id = self._pressure_id(model, cell)
        u = np.array([store.dofs[i].value for i in u_ids])
        p = store.dofs[p_id].value
        effective = stiffness @ (b @ u)
        force = area * (b.T @ (effective - self.params.biot * p
                               * VOIGT_TRACE))
        fx, fy = self.params.body_force
        share = area / 3.0
        for i in range(3):
            force[2 * i] -= share * fx
            force[2 * i + 1] -= share * fy
        flux = -self.params.source * area
        mesh = model.mesh
        for fi in mesh.cell_faces[cell]:
            entry = self._face_T.get(fi)
            if entry is None:
                continue
            face = mesh.faces[fi]
            neighbor = face.minus_cell if face.plus_cell == cell \
                else face.plus_cell
            p_n = store.dofs[self._pressure_id(model, neighbor)].value
            flux += entry.value * (p - p_n)
        when = time.target if time is not None else 0.0
        for entry, condition in self._pressure_faces.get(cell, {}).values():
            face = mesh.faces[entry.face]
            prescribed = condition.evaluate(
                (face.midpoint[0], face.midpoint[1], 0.0), when)
            flux += entry.value * (p - prescribed)
        return (LocalContribution(u_ids, [], [float(v) for v in force]),
                LocalContribution([p_id], [], [float(flux)]))

    def transient_lhs(self, model, cell, stage, subsystem, time):
        if stage != self.stage or (subsystem is not None
                                   and subsystem not in self.subsystems):
            return ()
        store = model.dof_store
        dt = self._time_increment(time)
        area, b = self._element(model, cell)
        u_ids = self._displacement_ids(model, cell)
        p_id = self._pressure_id(model, cell)
        trace_row = VOIGT_TRACE @ b
        rate = 0.0
        for i, dof_id in enumerate(u_ids):
            dof = store.dofs[dof_id]
            rate += trace_row[i] * (dof.value - dof.converged_value)
        p_dof = store.dofs[p_id]
        value = self.params.biot * area * rate / dt
        value += self.params.storage * area \
            * (p_dof.value - p_dof.converged_value) / dt
        return (LocalContribution([p_id], [], [float(value)]),)

    # ---- conditions ------------------------------------------------------------

    def boundary_rhs(self, model, cell, stage, subsystem, condition, time):
        if condition.condition_type in self.CONSTRAINT_TYPES:
            # imposed before the substep, nothing to assemble
            return ()
        if condition.condition_type not in ("Traction", "NormalFlux"):
            return super().boundary_rhs(model, cell, stage, subsystem,
                                        condition, time)
        if stage != self.stage or (subsystem is not None
                                   and subsystem not in self.subsystems):
            return ()
        mesh = model.mesh
        shape = mesh.cells[cell]
        if shape.cell_type.dimension != 1:
            raise AssemblyError(
                "natural poroelastic conditions live on edge cells, cell "
                "%d is %s" % (cell, shape.cell_type.name))
        nodes = [int(n) for n in shape.nodes[:2]]
        pts = mesh.coords[nodes, :2]
        length = float(np.hypot(*(pts[1] - pts[0])))
        midpoint = 0.5 * (pts[0] + pts[1])
        when = time.target if time is not None else 0.0
        value = condition.evaluate((midpoint[0], midpoint[1], 0.0), when)
        store = model.dof_store
        if condition.condition_type == "Traction":
            ids = [store.node_dof(n, condition.dof_type).id for n in nodes]
            half = 0.5 * value * length
            return (LocalContribution(ids, [], [half, half]),)
        face = mesh.face_of_boundary_cell(cell)
        if face is None or not face.is_boundary:
            raise AssemblyError(
                "flux condition on cell %d, which lies on no boundary face"
                % cell)
        p_id = self._pressure_id(model, face.plus_cell)
        return (LocalContribution([p_id], [], [-value * length]),)

    def impose_constraint(self, model, cells, stage, condition, time):
        if stage != self.stage:
            return
        store = model.dof_store
        mesh = model.mesh
        kind = condition.condition_type
        when = time.target if time is not None else 0.0
        if kind == "Displacement":
            for cell in cells:
                for node in (int(n) for n in mesh.cells[cell].nodes):
                    x, y = mesh.coords[node, :2]
                    store.constrain(store.node_dof(node, condition.dof_type),
                                    condition.evaluate((x, y, 0.0), when))
            return
        if kind == "MasterSlaveLink":
            nodes = sorted({int(n) for cell in cells
                            for n in mesh.cells[cell].nodes})
            if not nodes:
                raise AssemblyError(
                    "master-slave link over an empty boundary group")
            master = store.node_dof(nodes[0], condition.dof_type)
            for node in nodes[1:]:
                slave = store.node_dof(node, condition.dof_type)
                if slave.master != master.id:
                    store.make_slave(slave, master)
            return
        if kind == "Pressure":
            for cell in cells:
                face = mesh.face_of_boundary_cell(cell)
                if face is None or not face.is_boundary:
                    raise AssemblyError(
                        "pressure condition on cell %d, which lies on no "
                        "boundary face" % cell)
                owner = face.plus_cell
                centroids = {owner: mesh.cell_centroid(owner)}
                mobility = {owner: self._mobility(model, owner)}
                entry = tpfa_transmissibility(face, centroids, mobility)
                self._pressure_faces.setdefault(owner, {})[face.index] = \
                    (entry, condition)
            return
        super().impose_constraint(model, cells, stage, condition, time)

    # ---- reporting ------------------------------------------------------------

    def field_output(self, model, cell, name):
        if name not in self.FIELD_NAMES:
            return super().field_output(model, cell, name)
        store = model.dof_store
        if name == "p":
            return np.full(3, store.dofs[self._pressure_id(model, cell)]
                           .value)
        _, b = self._element(model, cell)
        u = np.array([store.dofs[i].value
                      for i in self._displacement_ids(model, cell)])
        effective = self._elasticity(model, cell) @ (b @ u)
        component = {"s_xx": 0, "s_yy": 1, "s_zz": 2, "s_xy": 3}[name]
        return np.full(3, float(effective[component]))
