"""Mesh container with Gmsh MSH 2.2 input and derived face topology.

The reader accepts the ASCII 2.2 flavour of the format.  Cells are
classified by parametric dimension: 2D cells form the analysis domain,
1D cells describe boundary curves, 0D cells mark individual points.
Faces are derived objects: every edge of every domain cell, identified by
its unordered corner-node pair, becomes exactly one face shared by at most
two domain cells.  Faces carry the geometry the finite-volume side needs
(length, midpoint, unit normal) and a link back to the boundary cell lying
on them, when one exists.

After topology construction the mesh is frozen; coordinate and
connectivity arrays refuse writes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MeshError(RuntimeError):
    """Malformed mesh file or an inconsistent topology request."""


@dataclass(frozen=True)
class CellType:
    name: str
    dimension: int
    node_count: int
    corner_count: int


# Gmsh element type codes for the shapes this kernel supports.
CELL_TYPES = {
    1: CellType("line2", 1, 2, 2),
    2: CellType("tri3", 2, 3, 3),
    8: CellType("line3", 1, 3, 2),
    9: CellType("tri6", 2, 6, 3),
    15: CellType("point1", 0, 1, 1),
}

# Local corner pairs tracing the edges of a triangle, in parent order.
TRI_EDGES = ((0, 1), (1, 2), (2, 0))


@dataclass
class Cell:
    index: int
    type_code: int
    nodes: np.ndarray
    physical_tag: int

    @property
    def cell_type(self):
        return CELL_TYPES[self.type_code]


@dataclass
class Face:
    """Edge of one or two domain cells, keyed by its corner pair."""
    index: int
    nodes: np.ndarray          # ordered along the plus cell's edge, midside last
    plus_cell: int
    minus_cell: int | None = None
    boundary_cell: int | None = None
    length: float = 0.0
    midpoint: np.ndarray = field(default_factory=lambda: np.zeros(2))
    normal: np.ndarray = field(default_factory=lambda: np.zeros(2))

    @property
    def is_boundary(self):
        return self.minus_cell is None


class Mesh:
    def __init__(self, coords, cells, physical_names=None):
        self.coords = np.ascontiguousarray(coords, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[1] != 3:
            raise MeshError("node coordinates must form an (n, 3) array")
        self.cells = list(cells)
        self.physical_names = dict(physical_names or {})

        self.domain_cells = [c.index for c in self.cells
                             if c.cell_type.dimension == 2]
        self.boundary_cells = [c.index for c in self.cells
                               if c.cell_type.dimension == 1]
        self.point_cells = [c.index for c in self.cells
                            if c.cell_type.dimension == 0]

        self.faces: list[Face] = []
        self.cell_faces: dict[int, list[int]] = {}
        self._face_of_pair: dict[tuple[int, int], int] = {}
        self._finalized = False

    # ---- topology ----------------------------------------------------------

    def build_topology(self):
        """Derive faces from domain-cell edges and freeze the mesh."""
        if self._finalized:
            return
        for ci in self.domain_cells:
            cell = self.cells[ci]
            ct = cell.cell_type
            self.cell_faces[ci] = []
            for le, (a, b) in enumerate(TRI_EDGES):
                na, nb = int(cell.nodes[a]), int(cell.nodes[b])
                key = (na, nb) if na < nb else (nb, na)
                fi = self._face_of_pair.get(key)
                if fi is None:
                    if ct.node_count == 6:
                        nodes = np.array([na, nb, cell.nodes[3 + le]])
                    else:
                        nodes = np.array([na, nb])
                    face = Face(index=len(self.faces), nodes=nodes, plus_cell=ci)
                    self.faces.append(face)
                    self._face_of_pair[key] = face.index
                    self.cell_faces[ci].append(face.index)
                else:
                    face = self.faces[fi]
                    if face.minus_cell is not None:
                        raise MeshError("edge %s shared by more than two cells" % (key,))
                    face.minus_cell = ci
                    self.cell_faces[ci].append(fi)

        # keep the plus side on the lower cell index so orientation is
        # reproducible no matter the traversal order
        for face in self.faces:
            if face.minus_cell is not None and face.minus_cell < face.plus_cell:
                face.plus_cell, face.minus_cell = face.minus_cell, face.plus_cell

        for bi in self.boundary_cells:
            cell = self.cells[bi]
            na, nb = int(cell.nodes[0]), int(cell.nodes[1])
            key = (na, nb) if na < nb else (nb, na)
            fi = self._face_of_pair.get(key)
            if fi is not None:
                self.faces[fi].boundary_cell = bi

        self._compute_face_geometry()
        self.coords.setflags(write=False)
        for cell in self.cells:
            cell.nodes.setflags(write=False)
        self._finalized = True

    def _compute_face_geometry(self):
        for face in self.faces:
            a = self.coords[int(face.nodes[0]), :2]
            b = self.coords[int(face.nodes[1]), :2]
            tang = b - a
            face.length = float(np.hypot(*tang))
            face.midpoint = 0.5 * (a + b)
            n = np.array([tang[1], -tang[0]]) / face.length
            plus = self.cell_centroid(face.plus_cell)
            # interior: plus -> minus; boundary: away from the only cell
            if face.minus_cell is not None:
                if np.dot(n, self.cell_centroid(face.minus_cell) - plus) < 0.0:
                    n = -n
            elif np.dot(n, face.midpoint - plus) < 0.0:
                n = -n
            face.normal = n

    # ---- geometric queries ------------------------------------------------

    def cell_centroid(self, cell_index):
        cell = self.cells[cell_index]
        corners = cell.nodes[:cell.cell_type.corner_count]
        return self.coords[corners, :2].mean(axis=0)

    def cell_area(self, cell_index):
        cell = self.cells[cell_index]
        if cell.cell_type.dimension != 2:
            raise MeshError("cell %d has no area" % cell_index)
        p = self.coords[cell.nodes[:3], :2]
        return 0.5 * abs((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1])
                         - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1]))

    def outward_normal(self, face_index, cell_index):
        """Unit normal of the face pointing out of the given cell."""
        face = self.faces[face_index]
        if cell_index == face.plus_cell:
            return face.normal
        if cell_index == face.minus_cell:
            return -face.normal
        raise MeshError("cell %d not adjacent to face %d" % (cell_index, face_index))

    def face_of_boundary_cell(self, cell_index):
        """The face a 1D cell lies on, or None if it matches no domain edge."""
        cell = self.cells[cell_index]
        if cell.cell_type.dimension != 1:
            raise MeshError("cell %d is not a boundary cell" % cell_index)
        na, nb = int(cell.nodes[0]), int(cell.nodes[1])
        key = (na, nb) if na < nb else (nb, na)
        fi = self._face_of_pair.get(key)
        return None if fi is None else self.faces[fi]

    # ---- group queries ------------------------------------------------------

    def group_tag(self, name):
        for tag, (dim, gname) in self.physical_names.items():
            if gname == name:
                return tag
        raise MeshError("unknown physical group %r" % name)

    def group_names(self):
        return [gname for _, gname in self.physical_names.values()]

    def cells_of_group(self, name):
        tag = self.group_tag(name)
        return [c.index for c in self.cells if c.physical_tag == tag]

    def nodes_of_group(self, name):
        ids = set()
        for ci in self.cells_of_group(name):
            ids.update(int(n) for n in self.cells[ci].nodes)
        return sorted(ids)

    def faces_of_group(self, name):
        """Faces lying on the 1D cells of a boundary group."""
        members = set(self.cells_of_group(name))
        return [f.index for f in self.faces
                if f.boundary_cell is not None and f.boundary_cell in members]

    def group_of_cell(self, cell_index):
        tag = self.cells[cell_index].physical_tag
        entry = self.physical_names.get(tag)
        return entry[1] if entry else None

    # ---- summaries ------------------------------------------------------------

    def summary(self):
        by_type = {}
        for c in self.cells:
            by_type[c.cell_type.name] = by_type.get(c.cell_type.name, 0) + 1
        return {
            "nodes": int(self.coords.shape[0]),
            "cells": len(self.cells),
            "cells_by_type": by_type,
            "domain_cells": len(self.domain_cells),
            "boundary_cells": len(self.boundary_cells),
            "faces": len(self.faces),
            "interior_faces": sum(1 for f in self.faces if not f.is_boundary),
            "boundary_faces": sum(1 for f in self.faces if f.is_boundary),
            "groups": {name: len(self.cells_of_group(name))
                       for name in self.group_names()},
        }


# ---- MSH 2.2 reader ----------------------------------------------------------


def _tokens(lines, k, path):
    if k >= len(lines):
        raise MeshError("%s: unexpected end of file" % path)
    return lines[k].split()


def read_msh(path, build=True):
    """Parse an ASCII Gmsh 2.2 file; unknown sections are skipped whole."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh]

    coords = None
    id_map = {}
    cells = []
    physical_names = {}

    k = 0
    while k < len(lines):
        line = lines[k]
        if not line.startswith("$"):
            k += 1
            continue
        section = line[1:]
        if section == "MeshFormat":
            parts = _tokens(lines, k + 1, path)
            if not parts or not parts[0].startswith("2.2"):
                raise MeshError("%s:%d: unsupported mesh format %r"
                                % (path, k + 2, lines[k + 1]))
            k += 3
        elif section == "PhysicalNames":
            count = int(_tokens(lines, k + 1, path)[0])
            for row in range(count):
                parts = lines[k + 2 + row].split(None, 2)
                dim, tag = int(parts[0]), int(parts[1])
                physical_names[tag] = (dim, parts[2].strip().strip('"'))
            k += count + 3
        elif section == "Nodes":
            count = int(_tokens(lines, k + 1, path)[0])
            coords = np.zeros((count, 3))
            for row in range(count):
                parts = _tokens(lines, k + 2 + row, path)
                id_map[int(parts[0])] = row
                coords[row] = [float(parts[1]), float(parts[2]), float(parts[3])]
            k += count + 3
        elif section == "Elements":
            count = int(_tokens(lines, k + 1, path)[0])
            for row in range(count):
                parts = _tokens(lines, k + 2 + row, path)
                type_code = int(parts[1])
                ct = CELL_TYPES.get(type_code)
                if ct is None:
                    raise MeshError("%s:%d: unsupported element type %d"
                                    % (path, k + 3 + row, type_code))
                ntags = int(parts[2])
                phys = int(parts[3]) if ntags >= 1 else 0
                raw_nodes = parts[3 + ntags:]
                if len(raw_nodes) != ct.node_count:
                    raise MeshError("%s:%d: %s element with %d nodes"
                                    % (path, k + 3 + row, ct.name, len(raw_nodes)))
                nodes = np.array([id_map[int(n)] for n in raw_nodes])
                cells.append(Cell(index=len(cells), type_code=type_code,
                                  nodes=nodes, physical_tag=phys))
            k += count + 3
        else:
            closer = "$End" + section
            while k < len(lines) and lines[k] != closer:
                k += 1
            k += 1

    if coords is None:
        raise MeshError("%s: no $Nodes section" % path)
    mesh = Mesh(coords, cells, physical_names)
    if build:
        mesh.build_topology()
    return mesh


def write_msh(mesh, path):
    """Emit the mesh back out in the same ASCII 2.2 flavour."""
    with open(path, "w") as fh:
        fh.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
        if mesh.physical_names:
            fh.write("$PhysicalNames\n%d\n" % len(mesh.physical_names))
            for tag in sorted(mesh.physical_names):
                dim, name = mesh.physical_names[tag]
                fh.write('%d %d "%s"\n' % (dim, tag, name))
            fh.write("$EndPhysicalNames\n")
        fh.write("$Nodes\n%d\n" % mesh.coords.shape[0])
        for i, (x, y, z) in enumerate(mesh.coords):
            fh.write("%d %s %s %s\n" % (i + 1, format(x, ".17g"),
                                        format(y, ".17g"), format(z, ".17g")))
        fh.write("$EndNodes\n$Elements\n%d\n" % len(mesh.cells))
        for c in mesh.cells:
            nodes = " ".join(str(int(n) + 1) for n in c.nodes)
            fh.write("%d %d 2 %d %d %s\n" % (c.index + 1, c.type_code,
                                             c.physical_tag, c.physical_tag, nodes))
        fh.write("$EndElements\n")
