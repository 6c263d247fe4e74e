"""Conforming triangle meshes with labelled boundaries and refinement.

Refinement follows red-green-blue rules in which the reference edge of
a triangle is its longest edge.  Triangles with three marked edges are
split into four similar children (red), triangles with only the
reference edge marked are bisected (green), and triangles with the
reference edge plus one more edge marked are split into three (blue).
"""
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
import math

import numpy as np

GAMMA_S = "GammaS"
GAMMA_T = "GammaT"
_LABELS = (GAMMA_S, GAMMA_T)


class MeshError(ValueError):
    """Raised for malformed mesh input."""


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class BoundaryMesh:
    """Closed boundary polygon.

    ``edges[i] = (a, b)`` indexes into ``nodes``; edges are oriented so
    that the domain lies to the left, hence ``(t_y, -t_x)`` is the
    outward normal.
    """

    nodes: np.ndarray
    edges: np.ndarray
    labels: np.ndarray

    @classmethod
    def polygon(cls, points, labels=None):
        """Polygon through ``points`` in counterclockwise order."""
        pts = np.asarray(points, dtype=float)
        n = len(pts)
        edges = np.stack([np.arange(n), (np.arange(n) + 1) % n], axis=1)
        if labels is None:
            labels = np.full(n, GAMMA_T)
        return cls(_readonly(pts), _readonly(edges), _readonly(np.asarray(labels)))

    @cached_property
    def starts(self):
        return self.nodes[self.edges[:, 0]]

    @cached_property
    def ends(self):
        return self.nodes[self.edges[:, 1]]

    @cached_property
    def lengths(self):
        return np.linalg.norm(self.ends - self.starts, axis=1)

    @cached_property
    def tangents(self):
        return (self.ends - self.starts) / self.lengths[:, None]

    @cached_property
    def normals(self):
        t = self.tangents
        return np.stack([t[:, 1], -t[:, 0]], axis=1)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_nodes(self):
        return len(self.nodes)

    def diameter(self):
        d = self.nodes[:, None, :] - self.nodes[None, :, :]
        return float(np.sqrt((d ** 2).sum(-1)).max())

    def scaled(self, factor):
        return BoundaryMesh(_readonly(self.nodes * factor), self.edges, self.labels)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation of a polygon.

    Attributes
    ----------
    nodes : (N, 2) float array
    triangles : (M, 3) int array, counterclockwise
    boundary_edges : (B, 2) int array
        Oriented with the domain on the left and ordered as a closed walk.
    boundary_labels : (B,) str array, entries ``GammaS`` or ``GammaT``
    generation, color : per-triangle refinement history
    shape_bound : float
        The bound ``R`` on ``h_K / rho_K`` recorded for the coarsest mesh.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_labels: np.ndarray
    generation: np.ndarray
    color: np.ndarray
    shape_bound: float = field(default=math.nan)

    # ------------------------------------------------------------------
    # construction

    @classmethod
    def from_arrays(cls, nodes, triangles, label_fn=None, generation=None,
                    color=None, shape_bound=None, labels_by_edge=None):
        """Build a mesh, extracting and ordering its boundary.

        ``label_fn(midpoint) -> label`` assigns boundary labels unless
        ``labels_by_edge`` (a dict ``frozenset({a, b}) -> label``) is given.
        """
        nodes = np.asarray(nodes, dtype=float)
        tris = np.asarray(triangles, dtype=np.int64).copy()
        p = nodes[tris]
        area2 = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                 - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
        flip = area2 < 0
        tris[flip] = tris[flip][:, [0, 2, 1]]
        if np.any(np.abs(area2) <= 0):
            raise MeshError("degenerate triangle")

        bedges = _ordered_boundary(tris)
        if labels_by_edge is not None:
            labels = [labels_by_edge[frozenset(map(int, e))] for e in bedges]
        else:
            label_fn = label_fn or (lambda m: GAMMA_T)
            mids = 0.5 * (nodes[bedges[:, 0]] + nodes[bedges[:, 1]])
            labels = [label_fn(m) for m in mids]
        labels = np.asarray(labels, dtype="<U6")
        if not set(labels) <= set(_LABELS):
            raise MeshError(f"unknown boundary label in {set(labels)}")
        m = len(tris)
        if generation is None:
            generation = np.zeros(m, dtype=np.int64)
        if color is None:
            color = np.full(m, "init", dtype="<U5")
        mesh = cls(_readonly(nodes), _readonly(tris), _readonly(bedges),
                   _readonly(labels), _readonly(np.asarray(generation)),
                   _readonly(np.asarray(color, dtype="<U5")),
                   math.nan if shape_bound is None else float(shape_bound))
        if shape_bound is None:
            object.__setattr__(mesh, "shape_bound", float(mesh.shape_ratios.max()))
        return mesh

    # ------------------------------------------------------------------
    # sizes and geometry

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @cached_property
    def corners(self):
        """(M, 3, 2) vertex coordinates per triangle."""
        return self.nodes[self.triangles]

    @cached_property
    def areas(self):
        p = self.corners
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))

    @cached_property
    def edge_lengths(self):
        """(M, 3) length of the local edge opposite each vertex."""
        p = self.corners
        return np.linalg.norm(np.roll(p, -2, axis=1) - np.roll(p, -1, axis=1), axis=2)

    @cached_property
    def diameters(self):
        return self.edge_lengths.max(axis=1)

    @cached_property
    def inradius_diameters(self):
        return 4.0 * self.areas / self.edge_lengths.sum(axis=1)

    @cached_property
    def shape_ratios(self):
        return self.diameters / self.inradius_diameters

    @cached_property
    def centroids(self):
        return self.corners.mean(axis=1)

    @cached_property
    def basis_gradients(self):
        """(M, 3, 2) constant gradients of the three hat functions."""
        p = self.corners
        # gradient of lambda_k = rot90(edge opposite k) / (2 area)
        e = np.roll(p, -2, axis=1) - np.roll(p, -1, axis=1)
        g = np.stack([-e[..., 1], e[..., 0]], axis=-1)
        return g / (2.0 * self.areas[:, None, None])

    # ------------------------------------------------------------------
    # topology

    @cached_property
    def _edge_table(self):
        t = self.triangles
        local = np.stack([np.roll(t, -1, axis=1), np.roll(t, -2, axis=1)], axis=2)
        flat = np.sort(local.reshape(-1, 2), axis=1)
        edges, inv = np.unique(flat, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        tri_edges = inv.reshape(-1, 3)
        e2t = np.full((len(edges), 2), -1, dtype=np.int64)
        owners = np.repeat(np.arange(len(t)), 3)
        order = np.argsort(inv, kind="stable")
        inv_s, own_s = inv[order], owners[order]
        first = np.ones(len(inv_s), dtype=bool)
        first[1:] = inv_s[1:] != inv_s[:-1]
        e2t[inv_s[first], 0] = own_s[first]
        e2t[inv_s[~first], 1] = own_s[~first]
        return edges, tri_edges, e2t

    @property
    def edges(self):
        """(E, 2) sorted node pairs of all edges."""
        return self._edge_table[0]

    @property
    def triangle_edges(self):
        """(M, 3) edge index of the local edge opposite each vertex."""
        return self._edge_table[1]

    @property
    def edge_triangles(self):
        """(E, 2) adjacent triangles per edge, ``-1`` where absent."""
        return self._edge_table[2]

    @cached_property
    def boundary_parent(self):
        """Triangle adjacent to each boundary edge."""
        edges, _, e2t = self._edge_table
        key = np.sort(self.boundary_edges, axis=1)
        idx = _lookup_rows(edges, key)
        return e2t[idx, 0]

    @cached_property
    def boundary_nodes(self):
        """Global node index of each boundary vertex in walk order."""
        return self.boundary_edges[:, 0].copy()

    @cached_property
    def boundary(self):
        """The boundary polygon as a :class:`BoundaryMesh`.

        Boundary node ``k`` is global node ``boundary_nodes[k]``.
        """
        nb = len(self.boundary_edges)
        local = np.stack([np.arange(nb), (np.arange(nb) + 1) % nb], axis=1)
        return BoundaryMesh(_readonly(self.nodes[self.boundary_nodes]),
                            _readonly(local), self.boundary_labels)

    @cached_property
    def friction_nodes(self):
        """Boundary-local indices of nodes interior to the closure of Gamma_s.

        These carry the jump ``v_h`` and the multiplier ``sigma_h``; nodes
        touching a Gamma_t edge are excluded.
        """
        lab = self.boundary_labels
        prev = np.roll(lab, 1)
        return np.flatnonzero((lab == GAMMA_S) & (prev == GAMMA_S))

    @cached_property
    def node_patch_area(self):
        a = np.zeros(self.n_nodes)
        np.add.at(a, self.triangles, np.repeat(self.areas[:, None], 3, axis=1))
        return a

    # ------------------------------------------------------------------

    def audit(self):
        """Check the structural invariants; returns a dict of results."""
        e2t = self.edge_triangles
        interior = e2t[:, 1] >= 0
        bkeys = np.sort(self.boundary_edges, axis=1)
        n_b = int((~interior).sum())
        walk_closed = bool(np.all(self.boundary_edges[:, 1]
                                  == np.roll(self.boundary_edges[:, 0], -1)))
        per_tri = np.bincount(self.boundary_parent, minlength=self.n_triangles)
        return {
            "conforming": bool(n_b == len(bkeys)) and walk_closed,
            "positive_areas": bool(self.areas.min() > 0),
            "boundary_closed": walk_closed,
            "max_shape_ratio": float(self.shape_ratios.max()),
            "max_boundary_edges_per_triangle": int(per_tri.max()),
        }

    def refine_uniform(self):
        return refine_uniform(self)

    def refine(self, marks):
        return refine_adaptive(self, marks)


def _lookup_rows(table, keys):
    """Index of each row of ``keys`` in the lexicographically sorted ``table``."""
    n = int(max(table.max(), keys.max())) + 1
    tcode = table[:, 0] * n + table[:, 1]
    kcode = keys[:, 0] * n + keys[:, 1]
    idx = np.searchsorted(tcode, kcode)
    if np.any(idx >= len(tcode)) or np.any(tcode[np.minimum(idx, len(tcode) - 1)] != kcode):
        raise MeshError("edge not found")
    return idx


def _ordered_boundary(tris):
    """Directed boundary edges chained into one closed counterclockwise walk."""
    directed = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    key = np.sort(directed, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    bnd = directed[counts[inv.reshape(-1)] == 1]
    succ = {int(a): int(b) for a, b in bnd}
    if len(succ) != len(bnd):
        raise MeshError("boundary is not a simple closed curve")
    start = int(bnd[:, 0].min())
    walk = [start]
    while True:
        nxt = succ[walk[-1]]
        if nxt == start:
            break
        walk.append(nxt)
        if len(walk) > len(bnd):
            raise MeshError("boundary walk does not close")
    if len(walk) != len(bnd):
        raise MeshError("boundary has more than one component")
    walk = np.asarray(walk)
    return np.stack([walk, np.roll(walk, -1)], axis=1)


# ----------------------------------------------------------------------
# builders

def build_lshape(levels=0, diagonal="bl-tr", friction=True):
    """L-shaped domain ``[-1/4, 1/4]^2`` minus ``[0, 1/4]^2``.

    The coarse mesh is the 5x5 grid with the removed quadrant cut out
    and every square split along one diagonal.  Gamma_s is the bottom
    and left side, Gamma_t the remainder; with ``friction=False`` the
    whole boundary is Gamma_t.  ``levels`` uniform refinements are
    applied.
    """
    if levels < 0:
        raise ValueError("levels must be nonnegative")
    h = 0.125
    coords = -0.25 + h * np.arange(5)
    index = {}
    nodes = []
    for j, y in enumerate(coords):
        for i, x in enumerate(coords):
            if x > 1e-12 and y > 1e-12:
                continue
            index[i, j] = len(nodes)
            nodes.append((x, y))
    tris = []
    for j in range(4):
        for i in range(4):
            if i >= 2 and j >= 2:
                continue
            bl, br = index[i, j], index[i + 1, j]
            tl, tr = index[i, j + 1], index[i + 1, j + 1]
            if diagonal == "bl-tr":
                tris += [(bl, br, tr), (bl, tr, tl)]
            elif diagonal == "tl-br":
                tris += [(bl, br, tl), (br, tr, tl)]
            else:
                raise ValueError(f"unknown diagonal {diagonal!r}")

    def label(mid):
        x, y = mid
        if friction and (abs(y + 0.25) < 1e-12 or abs(x + 0.25) < 1e-12):
            return GAMMA_S
        return GAMMA_T

    mesh = Mesh.from_arrays(nodes, tris, label)
    for _ in range(levels):
        mesh = refine_uniform(mesh)
    return mesh


def build_rectangle(x0, x1, y0, y1, nx, ny, label_fn=None):
    """Structured triangulation of a rectangle (bottom-left diagonals)."""
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.stack([X.ravel(), Y.ravel()], axis=1)
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    bl, br = idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()
    tl, tr = idx[1:, :-1].ravel(), idx[1:, 1:].ravel()
    tris = np.concatenate([np.stack([bl, br, tr], 1), np.stack([bl, tr, tl], 1)])
    return Mesh.from_arrays(nodes, tris, label_fn)


# ----------------------------------------------------------------------
# refinement

def _longest_local_edge(mesh):
    # ties resolved towards the lowest local index
    lengths = mesh.edge_lengths
    return np.argmax(lengths >= lengths.max(axis=1, keepdims=True) * (1 - 1e-12), axis=1)


def refine_uniform(mesh):
    """Red refinement of every triangle."""
    return refine_adaptive(mesh, np.arange(mesh.n_triangles))


def refine_adaptive(mesh, marks):
    """Refine the marked triangles and close the mesh conformingly.

    Marked triangles are red-refined.  A triangle with any refined edge
    also refines its longest (reference) edge; it is then bisected
    (green) if that is the only refined edge, split into three (blue)
    if one other edge is refined, and red-refined otherwise.
    """
    marks = np.asarray(sorted(set(int(m) for m in np.atleast_1d(marks))), dtype=np.int64)
    if len(marks) == 0:
        raise ValueError("empty mark set")
    if marks[0] < 0 or marks[-1] >= mesh.n_triangles:
        raise ValueError("mark index out of range")

    tri_edges = mesh.triangle_edges
    ref_local = _longest_local_edge(mesh)
    ref_edge = tri_edges[np.arange(mesh.n_triangles), ref_local]

    marked = np.zeros(len(mesh.edges), dtype=bool)
    marked[tri_edges[marks].ravel()] = True
    while True:
        need = marked[tri_edges].any(axis=1) & ~marked[ref_edge]
        if not need.any():
            break
        marked[ref_edge[need]] = True

    new_ids = np.full(len(mesh.edges), -1, dtype=np.int64)
    me = np.flatnonzero(marked)
    new_ids[me] = mesh.n_nodes + np.arange(len(me))
    e = mesh.edges[me]
    nodes = np.concatenate([mesh.nodes, 0.5 * (mesh.nodes[e[:, 0]] + mesh.nodes[e[:, 1]])])

    tris, gen, col = [], [], []
    for k in range(mesh.n_triangles):
        t = mesh.triangles[k]
        r = ref_local[k]
        # rotate so that the reference edge is (v1, v2) with apex v0
        order = [(r + i) % 3 for i in range(3)]
        v0, v1, v2 = t[order]
        te = tri_edges[k][order]
        m12, m20, m01 = new_ids[te[0]], new_ids[te[1]], new_ids[te[2]]
        g = mesh.generation[k] + 1
        if m12 < 0:
            tris.append(t)
            gen.append(mesh.generation[k])
            col.append(mesh.color[k])
        elif m01 >= 0 and m20 >= 0:
            tris += [(v0, m01, m20), (m01, v1, m12), (m20, m12, v2), (m01, m12, m20)]
            gen += [g] * 4
            col += ["red"] * 4
        elif m01 >= 0:
            tris += [(m12, v0, m01), (m12, m01, v1), (v0, m12, v2)]
            gen += [g] * 3
            col += ["blue"] * 3
        elif m20 >= 0:
            tris += [(v0, v1, m12), (m12, v2, m20), (m12, m20, v0)]
            gen += [g] * 3
            col += ["blue"] * 3
        else:
            tris += [(v0, v1, m12), (v0, m12, v2)]
            gen += [g] * 2
            col += ["green"] * 2

    labels = {}
    for (a, b), lab in zip(mesh.boundary_edges, mesh.boundary_labels):
        key = tuple(sorted((int(a), int(b))))
        eid = _lookup_rows(mesh.edges, np.array([key]))[0]
        mid = new_ids[eid]
        if mid >= 0:
            labels[frozenset((int(a), int(mid)))] = lab
            labels[frozenset((int(mid), int(b)))] = lab
        else:
            labels[frozenset((int(a), int(b)))] = lab

    return Mesh.from_arrays(nodes, np.asarray(tris, dtype=np.int64),
                            generation=np.asarray(gen), color=np.asarray(col),
                            shape_bound=mesh.shape_bound, labels_by_edge=labels)


def mark_fraction(indicators, fraction=0.1):
    """Indices of the ``ceil(fraction * n)`` largest indicators.

    Ties are broken towards the lower element index.  Returns a sorted
    integer array.
    """
    eta = np.asarray(indicators, dtype=float)
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    if np.any(eta < 0):
        raise ValueError("indicators must be nonnegative")
    n = math.ceil(fraction * len(eta) - 1e-12)
    order = np.lexsort((np.arange(len(eta)), -eta))
    return np.sort(order[:n])


# ----------------------------------------------------------------------
# text dump

def dump_mesh(mesh, path):
    """Write nodes, triangles and labelled boundary edges as plain text."""
    path = Path(path)
    lines = [f"# nodes {mesh.n_nodes}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.nodes]
    lines.append(f"# triangles {mesh.n_triangles}")
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles]
    lines.append(f"# boundary_edges {len(mesh.boundary_edges)}")
    lines += [f"{a} {b} {lab}" for (a, b), lab in zip(mesh.boundary_edges, mesh.boundary_labels)]
    path.write_text("\n".join(lines) + "\n")


def load_mesh(path):
    """Read a mesh written by :func:`dump_mesh`."""
    sections = {}
    current = None
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            current = line[1:].split()[0]
            sections[current] = []
        elif current is None:
            raise MeshError(f"{path}: data before section header")
        else:
            sections[current].append(line.split())
    try:
        nodes = np.array(sections["nodes"], dtype=float)
        tris = np.array(sections["triangles"], dtype=np.int64)
        labels = {frozenset((int(a), int(b))): lab for a, b, lab in sections["boundary_edges"]}
    except KeyError as exc:
        raise MeshError(f"{path}: missing section {exc}") from None
    return Mesh.from_arrays(nodes, tris, labels_by_edge=labels)
