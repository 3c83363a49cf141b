"""Programmatic construction of the benchmark meshes.

Every generator returns a fully built :class:`~fefv.mesh.Mesh`.  The shipped
analysis decks reference files produced by :func:`write_msh`, so the same
geometry can be regenerated from scratch at any time.

Conventions: domain cells are emitted first and counterclockwise, boundary
cells afterwards, point cells last.  Structured rectangles use the
alternating-diagonal split so that no diagonal direction is globally
preferred.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import Delaunay

from .mesh import Cell, Mesh


def _ccw(coords, tri):
    p = coords[list(tri), :2]
    area2 = ((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1])
             - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1]))
    if area2 < 0.0:
        return (tri[0], tri[2], tri[1])
    return tri


def _edge_key(a, b):
    return (a, b) if a < b else (b, a)


def _elevate_to_quadratic(coords, triangles, segments, project=None):
    """Insert midside nodes on every triangle edge.  `project` maps boundary
    midside coordinates onto the true curve (identity when None)."""
    coords = [np.asarray(c, dtype=float) for c in coords]
    edge_mid = {}

    def midside(a, b):
        key = _edge_key(a, b)
        if key not in edge_mid:
            edge_mid[key] = len(coords)
            coords.append(0.5 * (coords[a] + coords[b]))
        return edge_mid[key]

    tri6 = []
    for t in triangles:
        tri6.append((t[0], t[1], t[2],
                     midside(t[0], t[1]), midside(t[1], t[2]),
                     midside(t[2], t[0])))
    line3 = []
    for a, b in segments:
        m = midside(a, b)
        if project is not None:
            coords[m] = project(coords[m])
        line3.append((a, b, m))
    return np.array(coords), tri6, line3


class _MeshBuilder:
    """Accumulates cells and physical groups, then emits a built Mesh."""

    def __init__(self, coords):
        self.coords = np.asarray(coords, dtype=float)
        if self.coords.shape[1] == 2:
            self.coords = np.hstack([self.coords,
                                     np.zeros((len(self.coords), 1))])
        self.cells = []
        self.names = {}      # name -> (dim, tag)

    def _tag(self, name, dim):
        if name not in self.names:
            self.names[name] = (dim, len(self.names) + 1)
        return self.names[name][1]

    def add(self, type_code, nodes, group, dim):
        tag = self._tag(group, dim)
        self.cells.append(Cell(index=len(self.cells), type_code=type_code,
                               nodes=np.asarray(nodes, dtype=np.int64),
                               physical_tag=tag))

    def mesh(self):
        physical = {tag: (dim, name)
                    for name, (dim, tag) in self.names.items()}
        m = Mesh(self.coords, self.cells, physical)
        m.build_topology()
        return m


def structured_rectangle(nx, ny, width, height, origin=(0.0, 0.0),
                         region=None, domain_name="Domain",
                         side_names=("BottomEdge", "RightEdge",
                                     "TopEdge", "LeftEdge"),
                         corner_points=None, quadratic=False,
                         project=None, interface_name=None):
    """Alternating-diagonal triangulation of an axis-aligned rectangle.

    `region` maps a cell centroid to a physical-group name (default: one
    group for the whole domain).  `corner_points` attaches named point
    cells at given coordinates, snapped to the nearest grid node.  With
    `interface_name` set, edges separating two different region groups
    are emitted as 1D cells of that group, so formulations that walk
    material interfaces can find them.
    """
    x0, y0 = origin
    xs = np.linspace(x0, x0 + width, nx + 1)
    ys = np.linspace(y0, y0 + height, ny + 1)
    nid = lambda i, j: j * (nx + 1) + i
    coords = np.array([[xs[i], ys[j]] for j in range(ny + 1)
                       for i in range(nx + 1)])

    triangles = []
    for j in range(ny):
        for i in range(nx):
            n00, n10 = nid(i, j), nid(i + 1, j)
            n01, n11 = nid(i, j + 1), nid(i + 1, j + 1)
            if (i + j) % 2 == 0:
                triangles += [(n00, n10, n11), (n00, n11, n01)]
            else:
                triangles += [(n00, n10, n01), (n10, n11, n01)]

    tri_names = []
    for t in triangles:
        centroid = coords[list(t)].mean(axis=0)
        tri_names.append(region(centroid) if region else domain_name)

    sides = [
        (side_names[0], [(nid(i, 0), nid(i + 1, 0)) for i in range(nx)]),
        (side_names[1], [(nid(nx, j), nid(nx, j + 1)) for j in range(ny)]),
        (side_names[2], [(nid(i, ny), nid(i + 1, ny)) for i in range(nx)]),
        (side_names[3], [(nid(0, j), nid(0, j + 1)) for j in range(ny)]),
    ]

    interface_segments = []
    if interface_name is not None:
        edge_groups = {}
        for t, name in zip(triangles, tri_names):
            for i, j in ((0, 1), (1, 2), (2, 0)):
                edge_groups.setdefault(_edge_key(t[i], t[j]), set()).add(name)
        interface_segments = sorted(key for key, groups in edge_groups.items()
                                    if len(groups) > 1)

    if quadratic:
        segments = [seg for _, segs in sides for seg in segs]
        segments += interface_segments
        coords, tri6, line3 = _elevate_to_quadratic(coords, triangles,
                                                    segments, project)
        builder = _MeshBuilder(coords)
        for t, name in zip(tri6, tri_names):
            builder.add(9, t, name, 2)
        k = 0
        for name, segs in sides:
            for _ in segs:
                builder.add(8, line3[k], name, 1)
                k += 1
        for _ in interface_segments:
            builder.add(8, line3[k], interface_name, 1)
            k += 1
    else:
        builder = _MeshBuilder(coords)
        for t, name in zip(triangles, tri_names):
            builder.add(2, t, name, 2)
        for name, segs in sides:
            for a, b in segs:
                builder.add(1, (a, b), name, 1)
        for a, b in interface_segments:
            builder.add(1, (a, b), interface_name, 1)

    for name, (px, py) in (corner_points or {}).items():
        d = np.hypot(builder.coords[:, 0] - px, builder.coords[:, 1] - py)
        builder.add(15, (int(np.argmin(d)),), name, 0)

    return builder.mesh()


def two_triangle_square():
    """Unit square split along one diagonal; smallest nontrivial fixture."""
    return structured_rectangle(1, 1, 1.0, 1.0,
                                corner_points={"Origin": (0.0, 0.0)})


def elliptical_section(rings, a=2.0, b=1.0, center=(0.0, 0.0),
                       domain_name="Domain", boundary_name="LateralSurface"):
    """Quadratic triangulation of a full elliptical cross-section.

    Nodes are laid out on concentric rings (ring k carries 6k points), the
    unit disk is triangulated, then mapped onto the ellipse.  Midside nodes
    of boundary edges are projected radially onto the exact ellipse so the
    boundary is curved to second order.
    """
    pts = [(0.0, 0.0)]
    for k in range(1, rings + 1):
        r = k / rings
        for m in range(6 * k):
            ang = 2.0 * np.pi * m / (6 * k)
            pts.append((r * np.cos(ang), r * np.sin(ang)))
    pts = np.array(pts)

    tri = Delaunay(pts)
    coords = np.column_stack([a * pts[:, 0] + center[0],
                              b * pts[:, 1] + center[1]])
    triangles = [_ccw(coords, tuple(int(v) for v in s)) for s in tri.simplices]

    # hull edges appear in exactly one triangle
    seen = {}
    for t in triangles:
        for i, j in ((0, 1), (1, 2), (2, 0)):
            key = _edge_key(t[i], t[j])
            seen[key] = seen.get(key, 0) + 1
    outer_start = len(pts) - 6 * rings
    segments = [key for key, count in seen.items() if count == 1]
    if any(k[0] < outer_start or k[1] < outer_start for k in segments):
        raise RuntimeError("hull edge not on the outermost ring")

    cx, cy = center

    def onto_ellipse(p):
        t = 1.0 / np.hypot((p[0] - cx) / a, (p[1] - cy) / b)
        return np.array([cx + t * (p[0] - cx), cy + t * (p[1] - cy), 0.0])

    coords3 = np.hstack([coords, np.zeros((len(coords), 1))])
    coords6, tri6, line3 = _elevate_to_quadratic(coords3, triangles,
                                                 segments, onto_ellipse)
    builder = _MeshBuilder(coords6)
    for t in tri6:
        builder.add(9, t, domain_name, 2)
    for seg in line3:
        builder.add(8, seg, boundary_name, 1)
    return builder.mesh()


def composite_section(n=20, half_width=1.0, inner=0.4, middle=0.7):
    """Square cross-section with two concentric square material bands.

    Group names follow the composite-shaft deck: the outer band is
    "LowerBlock", the middle band "InnerAngle" and the core "HollowInsert".
    Band edges align with mesh lines so interfaces are element edges.
    """
    def region(c):
        r = max(abs(c[0]), abs(c[1]))
        if r <= inner:
            return "HollowInsert"
        if r <= middle:
            return "InnerAngle"
        return "LowerBlock"

    return structured_rectangle(
        n, n, 2 * half_width, 2 * half_width,
        origin=(-half_width, -half_width), region=region,
        side_names=("LateralSurface",) * 4, quadratic=True,
        interface_name="LateralSurface")


def mandel_quarter(nx=50, ny=20, a=100.0, b=10.0):
    """Quarter domain for the plate-squeezing consolidation benchmark."""
    return structured_rectangle(nx, ny, a, b,
                                corner_points={"TopLeftCorner": (0.0, b)})


def layered_square(n=16, lower=0.25, upper=0.75):
    """Unit square with a low-permeability middle band between mesh lines."""
    def region(c):
        if c[1] < lower:
            return "BottomLayer"
        if c[1] > upper:
            return "TopLayer"
        return "MiddleLayer"

    return structured_rectangle(n, n, 1.0, 1.0, region=region)


SPECIMEN_INCLUSIONS = (((7.0, 14.0), 3.5),
                       ((17.5, 26.0), 4.0),
                       ((8.5, 38.0), 3.0))


def specimen_with_inclusions(nx=25, ny=50, width=25.0, height=50.0,
                             inclusions=SPECIMEN_INCLUSIONS):
    """Compression-test specimen: a matrix with stiff circular inclusions.

    Cells whose centroid falls inside any circle belong to "Inclusions";
    the rest form "Matrix".  Interfaces are jagged at cell resolution,
    which is acceptable at this scale.
    """
    def region(c):
        for (cx, cy), r in inclusions:
            if (c[0] - cx) ** 2 + (c[1] - cy) ** 2 < r * r:
                return "Inclusions"
        return "Matrix"

    return structured_rectangle(
        nx, ny, width, height, region=region,
        corner_points={"BottomLeftCorner": (0.0, 0.0)})
