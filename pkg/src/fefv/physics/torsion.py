"""Uniform torsion of prismatic shafts on curved quadratic triangles.

The cross-section warps out of plane when a shaft of arbitrary shape is
twisted. The warping field satisfies a shear-weighted Laplace problem
driven entirely through the section boundary and through interfaces
between materials of different shear stiffness. Three section constants
(an axial translation and two bending-axis rotations) ride along as
instance-level unknowns so that the computed axial displacement carries
no rigid part; they couple to the warping field through first moments,
which makes the one-shot system structurally asymmetric.

The pure warping operator has a one-dimensional nullspace: shifting the
warping by a constant and compensating through the translation constant
leaves the displacement unchanged. The one-shot form therefore carries a
scalar multiplier enforcing zero mean warping, which pins that family to
the member whose mean vanishes; the multiplier itself solves to zero
because the boundary loading has zero resultant. The alternative split
form solves the same equations as two consecutive symmetric stages:
first the constrained warping system, then a 3x3 geometric system for
the constants with the warping frozen.
"""

import numpy as np

from ..assembly import AssemblyError, LocalContribution, Numerics
from ..materials import MaterialError

__all__ = [
    "TorsionConfig",
    "WarpingTorsion",
    "torque",
    "z_displacement",
    "tri6_shape",
    "tri6_mapped",
    "line3_shape",
    "TRI_POINTS",
    "TRI_WEIGHTS",
    "LINE_POINTS",
    "LINE_WEIGHTS",
    "TRI6_REFERENCE_NODES",
]

TRI6_CODE = 9
LINE3_CODE = 8

# Three-point rule on the unit triangle, exact through quadratic
# integrands; pairs with the quadratic shape functions so that the
# weighted stiffness and all first and second area moments of straight-
# edged cells integrate exactly.
TRI_POINTS = np.array([
    (1.0 / 6.0, 1.0 / 6.0),
    (2.0 / 3.0, 1.0 / 6.0),
    (1.0 / 6.0, 2.0 / 3.0),
])
TRI_WEIGHTS = np.full(3, 1.0 / 6.0)

# Three-point Gauss rule on [-1, 1], exact through degree five: enough
# for the boundary integrand of quadratic shapes on quadratic edges.
LINE_POINTS = np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
LINE_WEIGHTS = np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])

# Parent coordinates of the six nodes: corners first, then the midside
# nodes of edges (0,1), (1,2), (2,0).
TRI6_REFERENCE_NODES = np.array([
    (0.0, 0.0), (1.0, 0.0), (0.0, 1.0),
    (0.5, 0.0), (0.5, 0.5), (0.0, 0.5),
])


def tri6_shape(xi, eta):
    """Quadratic triangle shapes and parent derivatives at one point.

    Returns (N, dN) with N of shape (6,) and dN of shape (2, 6); the
    rows of dN are the xi and eta derivatives.
    """
    lam = 1.0 - xi - eta
    n = np.array([
        lam * (2.0 * lam - 1.0),
        xi * (2.0 * xi - 1.0),
        eta * (2.0 * eta - 1.0),
        4.0 * lam * xi,
        4.0 * xi * eta,
        4.0 * eta * lam,
    ])
    dn = np.array([
        [-(4.0 * lam - 1.0), 4.0 * xi - 1.0, 0.0,
         4.0 * (lam - xi), 4.0 * eta, -4.0 * eta],
        [-(4.0 * lam - 1.0), 0.0, 4.0 * eta - 1.0,
         -4.0 * xi, 4.0 * xi, 4.0 * (lam - eta)],
    ])
    return n, dn


def tri6_mapped(coords, xi, eta):
    """Shapes, physical gradients and Jacobian determinant at one point.

    coords holds the six node positions as a (6, 2) array. Returns
    (N, B, det) where the rows of B are the x and y derivatives.
    """
    n, dn = tri6_shape(xi, eta)
    jac = dn @ coords
    det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
    if det <= 0.0:
        raise AssemblyError(
            "quadratic triangle maps with nonpositive Jacobian %g; check "
            "node ordering and midside placement" % det)
    inv = np.array([[jac[1, 1], -jac[0, 1]],
                    [-jac[1, 0], jac[0, 0]]]) / det
    return n, inv @ dn, det


def line3_shape(xi):
    """Quadratic edge shapes and derivative at one parent point.

    Node order is (end a, end b, midside) with a at xi = -1, b at +1.
    """
    n = np.array([0.5 * xi * (xi - 1.0),
                  0.5 * xi * (xi + 1.0),
                  1.0 - xi * xi])
    dn = np.array([xi - 0.5, xi + 0.5, -2.0 * xi])
    return n, dn


class TorsionConfig:
    """Frozen instance facts: twist rate, constant DOF ids, output map."""

    __slots__ = ("twist_rate", "global_dofs", "output_field_map")

    def __init__(self, twist_rate, global_dofs, output_field_map):
        global_dofs = tuple(global_dofs)
        if len(global_dofs) != 3:
            raise AssemblyError(
                "torsion carries exactly three section constants, got %d "
                "global DOFs" % len(global_dofs))
        self.twist_rate = float(twist_rate)
        self.global_dofs = global_dofs
        self.output_field_map = dict(output_field_map)


class WarpingTorsion(Numerics):
    """Warping formulation on 6-node triangles with section constants.

    One warping unknown per node, three section constants (axial
    translation and two rotations about the in-plane axes) plus one
    zero-mean multiplier as instance-level unknowns. The boundary term
    lives on quadratic edge cells and weights the chord integrand with
    the shear modulus jump across the underlying face, so exterior
    surfaces and bimaterial interfaces share one condition type.
    """

    DECK_NAME = "StVenantTorsion_Fe_Tri6"
    MONOLITHIC = "Monolithic"
    SPLIT = "SymmetricSplit"
    FIELD_NAMES = ("s_zx", "s_zy", "s_mag", "u_z")

    def __init__(self, numerics_id, nodal_dof=1, stage=1, subsystem=1,
                 twist=0.0, dof_group=1, cell_outputs=None,
                 system_form=MONOLITHIC):
        super().__init__(numerics_id, stage, (subsystem,))
        if system_form not in (self.MONOLITHIC, self.SPLIT):
            raise AssemblyError(
                "system form must be %r or %r, got %r"
                % (self.MONOLITHIC, self.SPLIT, system_form))
        self.nodal_dof = int(nodal_dof)
        self.twist = float(twist)
        self.dof_group = int(dof_group)
        self.cell_outputs = dict(cell_outputs or {})
        self.system_form = system_form
        self.config = None

    # ---- structure ---------------------------------------------------------

    @property
    def constants_stage(self):
        """Stage of the section constants: the split form defers them."""
        if self.system_form == self.SPLIT:
            return self.stage + 1
        return self.stage

    def solution_stages(self):
        """Stages to solve, in order."""
        if self.system_form == self.SPLIT:
            return (self.stage, self.stage + 1)
        return (self.stage,)

    def initialize(self, model):
        from ..dofs import DofDeclaration
        store = model.dof_store
        decl = DofDeclaration(self.dof_group, 0, 0)
        store.create_numerics_dofs(self.id, [decl] * 4)
        subsystem = self.subsystems[0]
        for k in range(3):
            store.claim(store.numerics_dof(self.id, k),
                        self.constants_stage, subsystem)
        store.claim(store.numerics_dof(self.id, 3), self.stage, subsystem)
        self.config = TorsionConfig(
            self.twist,
            tuple(store.numerics_dof(self.id, k).id for k in range(3)),
            self.cell_outputs)

    def set_dof_stages(self, model, cell):
        subsystem = self.subsystems[0]
        for node in self._cell_nodes(model, cell):
            model.dof_store.claim(
                model.dof_store.node_dof(node, self.nodal_dof),
                self.stage, subsystem)

    # ---- cell access ---------------------------------------------------------

    def _cell_nodes(self, model, cell):
        shape = model.mesh.cells[cell]
        if shape.type_code != TRI6_CODE:
            raise AssemblyError(
                "warping torsion runs on 6-node triangles, cell %d is %s"
                % (cell, shape.cell_type.name))
        return [int(n) for n in shape.nodes]

    def _warping_ids(self, model, cell):
        store = model.dof_store
        return [store.node_dof(node, self.nodal_dof).id
                for node in self._cell_nodes(model, cell)]

    def _constant_ids(self, model):
        store = model.dof_store
        return [store.numerics_dof(self.id, k).id for k in range(4)]

    def _shear_modulus(self, model, cell):
        for material in model.materials_of(cell):
            try:
                return material.parameter("ShearModulus")
            except MaterialError:
                continue
        raise AssemblyError(
            "no material assigned to cell %d answers a shear modulus" % cell)

    def _integrals(self, model, cell):
        """Weighted stiffness, shape moments and area moments of one cell.

        Returns (ke, q, qx, qy, geom) where ke is the shear-weighted
        6x6 stiffness, q/qx/qy the shape moments weighted by 1, y and
        -x, and geom the tuple (A, Sx, Sy, Ixx, Ixy, Iyy).
        """
        coords = model.mesh.coords[self._cell_nodes(model, cell), :2]
        shear = self._shear_modulus(model, cell)
        ke = np.zeros((6, 6))
        q = np.zeros(6)
        qx = np.zeros(6)
        qy = np.zeros(6)
        geom = np.zeros(6)
        for (xi, eta), w in zip(TRI_POINTS, TRI_WEIGHTS):
            n, b, det = tri6_mapped(coords, xi, eta)
            wd = w * det
            x, y = n @ coords
            ke += (wd * shear) * (b.T @ b)
            q += wd * n
            qx += (wd * y) * n
            qy += (wd * -x) * n
            geom += wd * np.array([1.0, y, x, y * y, x * y, x * x])
        return ke, q, qx, qy, geom

    # ---- assembly -------------------------------------------------------------

    def static_coefficients(self, model, cell, stage, subsystem, time):
        if subsystem is not None and subsystem not in self.subsystems:
            return ()
        if stage not in (self.stage, self.constants_stage):
            return ()
        ke, q, qx, qy, geom = self._integrals(model, cell)
        area, sx, sy, ixx, ixy, iyy = geom
        warping = self._warping_ids(model, cell)
        az, kx, ky, mult = self._constant_ids(model)
        rows, cols, values = [], [], []

        def put(r, c, v):
            rows.append(r)
            cols.append(c)
            values.append(v)

        if stage == self.stage:
            for i, ri in enumerate(warping):
                for j, cj in enumerate(warping):
                    put(ri, cj, ke[i, j])
            for i, ri in enumerate(warping):
                put(ri, mult, q[i])
                put(mult, ri, q[i])
        if stage == self.constants_stage:
            if self.system_form == self.MONOLITHIC:
                for j, cj in enumerate(warping):
                    put(az, cj, q[j])
                    put(kx, cj, qx[j])
                    put(ky, cj, qy[j])
            put(az, az, area)
            put(az, kx, sx)
            put(az, ky, -sy)
            put(kx, az, sx)
            put(kx, kx, ixx)
            put(kx, ky, -ixy)
            put(ky, az, -sy)
            put(ky, kx, -ixy)
            put(ky, ky, iyy)
        if not rows:
            return ()
        return (LocalContribution(rows, cols, values),)

    def static_lhs(self, model, cell, stage, subsystem, time):
        if subsystem is not None and subsystem not in self.subsystems:
            return ()
        if stage not in (self.stage, self.constants_stage):
            return ()
        ke, q, qx, qy, geom = self._integrals(model, cell)
        area, sx, sy, ixx, ixy, iyy = geom
        store = model.dof_store
        warping_ids = self._warping_ids(model, cell)
        omega = np.array([store.dofs[i].value for i in warping_ids])
        az, kx, ky, mult = self._constant_ids(model)
        a_z = store.dofs[az].value
        k_x = store.dofs[kx].value
        k_y = store.dofs[ky].value
        lam = store.dofs[mult].value
        parts = []
        if stage == self.stage:
            force = ke @ omega + lam * q
            parts.append(LocalContribution(
                warping_ids, [], [float(v) for v in force]))
            parts.append(LocalContribution([mult], [], [float(q @ omega)]))
        if stage == self.constants_stage:
            parts.append(LocalContribution(
                [az, kx, ky], [],
                [float(q @ omega + area * a_z + sx * k_x - sy * k_y),
                 float(qx @ omega + sx * a_z + ixx * k_x - ixy * k_y),
                 float(qy @ omega - sy * a_z - ixy * k_x + iyy * k_y)]))
        return parts

    # ---- boundary term -----------------------------------------------------------

    def boundary_rhs(self, model, cell, stage, subsystem, condition, time):
        if condition.condition_type != "TorsionBoundaryTerm":
            return super().boundary_rhs(
                model, cell, stage, subsystem, condition, time)
        if stage != self.stage:
            return ()
        if subsystem is not None and subsystem not in self.subsystems:
            return ()
        mesh = model.mesh
        shape = mesh.cells[cell]
        if shape.type_code != LINE3_CODE:
            raise AssemblyError(
                "the torsion boundary term lives on quadratic edge cells, "
                "cell %d is %s" % (cell, shape.cell_type.name))
        face = mesh.face_of_boundary_cell(cell)
        if face is None:
            raise AssemblyError(
                "boundary cell %d lies on no domain edge, so the boundary "
                "term has no adjacent section material" % cell)
        weight = self._shear_modulus(model, face.plus_cell)
        if not face.is_boundary:
            weight -= self._shear_modulus(model, face.minus_cell)
            if weight == 0.0:
                return ()

        nodes = [int(n) for n in shape.nodes]
        coords = mesh.coords[nodes, :2]
        # Orient the edge parametrization so that rotating its chord
        # tangent clockwise lands on the face normal: outward on the
        # exterior, from the stiff-signed plus side toward minus on
        # interfaces.
        chord = coords[1] - coords[0]
        rotated = np.array([chord[1], -chord[0]])
        sign = 1.0 if float(rotated @ face.normal) > 0.0 else -1.0

        force = np.zeros(3)
        for xi, w in zip(LINE_POINTS, LINE_WEIGHTS):
            n, dn = line3_shape(xi)
            x, y = n @ coords
            xp, yp = dn @ coords
            force += (w * (y * yp + x * xp)) * n
        force *= weight * sign

        store = model.dof_store
        dof_ids = [store.node_dof(node, self.nodal_dof).id for node in nodes]
        return (LocalContribution(dof_ids, [], [float(v) for v in force]),)

    # ---- reporting ------------------------------------------------------------

    def field_output(self, model, cell, name):
        if name not in self.FIELD_NAMES:
            return super().field_output(model, cell, name)
        store = model.dof_store
        coords = model.mesh.coords[self._cell_nodes(model, cell), :2]
        omega = np.array([store.dofs[i].value
                          for i in self._warping_ids(model, cell)])
        az, kx, ky, _ = self._constant_ids(model)
        a_z = store.dofs[az].value
        k_x = store.dofs[kx].value
        k_y = store.dofs[ky].value
        shear = self._shear_modulus(model, cell)
        beta = self.twist
        out = np.zeros(6)
        for k, (xi, eta) in enumerate(TRI6_REFERENCE_NODES):
            n, b, _ = tri6_mapped(coords, xi, eta)
            x, y = n @ coords
            if name == "u_z":
                out[k] = beta * (n @ omega + a_z + k_x * y - k_y * x)
                continue
            grad = b @ omega
            s_zx = shear * beta * (grad[0] - y)
            s_zy = shear * beta * (grad[1] + x)
            if name == "s_zx":
                out[k] = s_zx
            elif name == "s_zy":
                out[k] = s_zy
            else:
                out[k] = np.hypot(s_zx, s_zy)
        return out


def torque(model, numerics):
    """Twisting moment carried by the section at the configured twist."""
    total = 0.0
    for cell in model.domain_cells:
        if model.numerics_of(cell) is not numerics:
            continue
        coords = model.mesh.coords[numerics._cell_nodes(model, cell), :2]
        shear = numerics._shear_modulus(model, cell)
        store = model.dof_store
        omega = np.array([store.dofs[i].value
                          for i in numerics._warping_ids(model, cell)])
        for (xi, eta), w in zip(TRI_POINTS, TRI_WEIGHTS):
            n, b, det = tri6_mapped(coords, xi, eta)
            x, y = n @ coords
            grad = b @ omega
            total += w * det * shear * (
                x * x + y * y - (grad[0] * y - grad[1] * x))
    return numerics.twist * total


def z_displacement(model, numerics):
    """Axial displacement per unit shaft length at every warping node."""
    store = model.dof_store
    az, kx, ky = numerics.config.global_dofs
    a_z = store.dofs[az].value
    k_x = store.dofs[kx].value
    k_y = store.dofs[ky].value
    beta = numerics.twist
    values = {}
    for node in range(len(model.mesh.coords)):
        dof = store.node_dof(node, numerics.nodal_dof)
        if not dof.claimed:
            continue
        x, y = model.mesh.coords[node, :2]
        values[node] = beta * (dof.value + a_z + k_x * y - k_y * x)
    return values
