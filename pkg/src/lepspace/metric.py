##############################################################################
#
# Copyright (c) 2024 lepspace contributors.
# All Rights Reserved.
#
# This software is subject to the provisions of the Zope Public License,
# Version 2.1 (ZPL).  A copy of the ZPL should accompany this distribution.
# THIS SOFTWARE IS PROVIDED "AS IS" AND ANY AND ALL EXPRESS OR IMPLIED
# WARRANTIES ARE DISCLAIMED, INCLUDING, BUT NOT LIMITED TO, THE IMPLIED
# WARRANTIES OF TITLE, MERCHANTABILITY, AGAINST INFRINGEMENT, AND FITNESS
# FOR A PARTICULAR PURPOSE.
#
##############################################################################
"""Action distance on a complex, approximated by a weighted graph.

Every branch is sampled (shared nodes along glued edges, a square grid
inside), triangulated, optionally refined with Steiner points and linked
to all neighbours within ``connectivity_order * h``.  Edge weights
integrate the gauge of the Hamiltonian along the straight segment, so
graph paths are piecewise straight connections and shortest paths bound
the action distance from above.
"""

from collections import OrderedDict
import itertools
import math

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import Delaunay, cKDTree

from .complex import (
    BranchPoint,
    boundary_distance,
    points_in_polygon,
    segments_inside_polygon,
    signed_area,
    unfold_pair,
)
from .hamiltonian import EIKONAL, LOG_T_MIN, LOG_T_MAX
from .utilities import (
    BudgetExceeded,
    FieldMismatch,
    GeometryError,
    HamiltonianError,
    StructureError,
    format_float,
    mesh_logger,
)

# midpoints per edge for the weight quadrature
QUADRATURE_POINTS = 4


class MeshParams(object):
    """Resolution of the metric graph.

    ``steiner_per_edge`` is the number of equal pieces each triangle edge
    is cut into; 1 adds no Steiner points."""

    def __init__(self, h=1.0 / 32, steiner_per_edge=1, connectivity_order=2):
        h = float(h)
        if not (h > 0 and math.isfinite(h)):
            raise ValueError("h must be positive, got %r" % (h,))
        if int(steiner_per_edge) != steiner_per_edge or steiner_per_edge < 1:
            raise ValueError("steiner_per_edge must be an integer >= 1")
        if int(connectivity_order) != connectivity_order or connectivity_order < 1:
            raise ValueError("connectivity_order must be an integer >= 1")
        self.h = h
        self.steiner_per_edge = int(steiner_per_edge)
        self.connectivity_order = int(connectivity_order)

    @property
    def radius(self):
        return self.connectivity_order * self.h * (1 + 1e-9)

    def as_dict(self):
        return {
            "h": format_float(self.h),
            "steiner_per_edge": self.steiner_per_edge,
            "connectivity_order": self.connectivity_order,
        }

    def __eq__(self, other):
        return isinstance(other, MeshParams) and self.as_dict() == other.as_dict()

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return "MeshParams(h=%s, steiner_per_edge=%d, connectivity_order=%d)" % (
            format_float(self.h),
            self.steiner_per_edge,
            self.connectivity_order,
        )


def segment_weights(H, j, a, b, points=QUADRATURE_POINTS):
    """Gauge integrated along the segments ``a[i] -> b[i]`` (branch-local),
    composite midpoint rule."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    q = b - a
    t = (np.arange(points) + 0.5) / points
    mids = (a[:, None, :] + t[None, :, None] * q[:, None, :]).reshape(-1, a.shape[1])
    if H.kind == EIKONAL:
        f = np.clip(H.weight(j, mids), 0.0, None).reshape(len(a), points)
        return np.linalg.norm(q, axis=1) * np.sqrt(f).mean(axis=1)
    qq = np.repeat(q, points, axis=0)
    g = H.gauge_many(j, mids, qq).reshape(len(a), points)
    return g.mean(axis=1)


# golden-section ratio of the batched travel time search
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def segment_actions(H, j, a, b, points=QUADRATURE_POINTS, iterations=48):
    """Action of the straight moves ``a[i] -> b[i]`` run at constant
    speed, ``min_T T * mean_s L(x(s), (b - a) / T)``.

    Works from the Lagrangian alone, never from the gauge.  The travel
    time is found by a golden-section search in ``log T`` carried out for
    all segments at once."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    q = b - a
    n = len(a)
    if not n:
        return np.zeros(0)
    t = (np.arange(points) + 0.5) / points
    mids = (a[:, None, :] + t[None, :, None] * q[:, None, :]).reshape(-1, a.shape[1])
    qq = np.repeat(q, points, axis=0)

    def action(log_t):
        T = np.exp(log_t)
        v = qq / np.repeat(T, points)[:, None]
        L = H.lagrangian_many(j, mids, v, strict=False).reshape(n, points)
        return T * L.mean(axis=1)

    lo = np.full(n, LOG_T_MIN)
    hi = np.full(n, LOG_T_MAX)
    c = hi - GOLDEN * (hi - lo)
    d = lo + GOLDEN * (hi - lo)
    fc, fd = action(c), action(d)
    for _ in range(iterations):
        left = fc < fd
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
        keep, fkeep = np.where(left, c, d), np.where(left, fc, fd)
        new = np.where(left, hi - GOLDEN * (hi - lo), lo + GOLDEN * (hi - lo))
        fnew = action(new)
        c, fc = np.where(left, new, keep), np.where(left, fnew, fkeep)
        d, fd = np.where(left, keep, new), np.where(left, fkeep, fnew)
    out = np.minimum(fc, fd)
    out[np.linalg.norm(q, axis=1) == 0] = 0.0
    return out


def _is_convex(poly):
    d = np.roll(poly, -1, axis=0) - poly
    cross = d[:, 0] * np.roll(d[:, 1], -1) - d[:, 1] * np.roll(d[:, 0], -1)
    if signed_area(poly) < 0:
        cross = -cross
    return bool(np.all(cross >= -1e-12 * float(np.max(np.abs(poly)) ** 2 + 1e-300)))


class _NodeTable(object):
    def __init__(self):
        self.keys = {}
        self.ambient = []
        self.boundary = []
        self.edge = []
        self.vertex = []
        self.facets = []

    def add(self, key, point, boundary=False, edge=-1, vertex=-1, facets=()):
        idx = self.keys.get(key)
        if idx is None:
            idx = len(self.ambient)
            self.keys[key] = idx
            self.ambient.append(np.asarray(point, dtype=float))
            self.boundary.append(bool(boundary))
            self.edge.append(int(edge))
            self.vertex.append(int(vertex))
            self.facets.append(set())
        self.facets[idx].update(facets)
        return idx

    def points(self, ids):
        return np.array([self.ambient[i] for i in ids])

    def __len__(self):
        return len(self.ambient)


class MetricGraph(object):
    """Weighted directed graph realizing discrete connections.

    Nodes on glued edges are single nodes shared by every incident branch.
    ``matrix[a, b]`` is the cost of the straight move from ``a`` to ``b``.
    """

    def __init__(
        self, complex, hamiltonian, params, table, members, triangles, matrix,
        convex,
    ):
        self.complex = complex
        self.hamiltonian = hamiltonian
        self.params = params
        self.ambient = np.array(table.ambient)
        self.boundary = np.array(table.boundary, dtype=bool)
        self.ram_edge = np.array(table.edge, dtype=int)
        self.vertex = np.array(table.vertex, dtype=int)
        self.node_facets = [frozenset(f) for f in table.facets]
        for arr in (self.ambient, self.boundary, self.ram_edge, self.vertex):
            arr.setflags(write=False)
        self.branch_nodes = [np.array(sorted(m), dtype=int) for m in members]
        self.branch_coords = [
            complex.to_local(j, self.ambient[ids]).reshape(len(ids), complex.branch_dim)
            for j, ids in enumerate(self.branch_nodes)
        ]
        self.triangles = triangles
        self.matrix = matrix
        self.convex = convex
        node_branches = [[] for _ in range(len(self.ambient))]
        for j, ids in enumerate(self.branch_nodes):
            for i in ids:
                node_branches[i].append(j)
        self.node_branches = [tuple(b) for b in node_branches]
        coo = matrix.tocoo()
        self._rows, self._cols, self._data = coo.row, coo.col, coo.data
        upper = coo.row < coo.col
        self.edge_pairs = np.column_stack([coo.row[upper], coo.col[upper]])
        self.edge_lengths = np.linalg.norm(
            self.ambient[self.edge_pairs[:, 0]] - self.ambient[self.edge_pairs[:, 1]],
            axis=1,
        )
        self._trees = {}
        self.complex_digest = complex.digest()
        self.hamiltonian_digest = hamiltonian.digest()

    def __len__(self):
        return len(self.ambient)

    @property
    def n_nodes(self):
        return len(self.ambient)

    @property
    def boundary_nodes(self):
        return np.nonzero(self.boundary)[0]

    @property
    def snap_tol(self):
        return 1e-9 * max(self.params.h, self.complex.diameter)

    def neighbors(self, i):
        row = self.matrix.indptr
        return self.matrix.indices[row[i] : row[i + 1]]

    def weight(self, a, b):
        return float(self.matrix[a, b])

    def position(self, j, ids):
        """Row of each global node id in ``branch_nodes[j]``."""
        ids = np.asarray(ids, dtype=int)
        pos = np.searchsorted(self.branch_nodes[j], ids)
        pos = np.clip(pos, 0, len(self.branch_nodes[j]) - 1)
        if not np.all(self.branch_nodes[j][pos] == ids):
            raise GeometryError("node not on branch %d" % j)
        return pos

    def local(self, j, ids):
        return self.branch_coords[j][self.position(j, ids)]

    def node_point(self, i):
        j = self.node_branches[i][0]
        return BranchPoint(j, tuple(float(c) for c in self.local(j, [i])[0]))

    def tree(self, j):
        tree = self._trees.get(j)
        if tree is None:
            tree = self._trees[j] = cKDTree(self.branch_coords[j])
        return tree

    def provenance(self):
        out = OrderedDict()
        out["complex_sha256"] = self.complex_digest
        out["hamiltonian_sha256"] = self.hamiltonian_digest
        out["hamiltonian"] = self.hamiltonian.kind
        out.update(self.params.as_dict())
        return out

    # query points

    def _containing_triangle(self, j, local):
        tris = self.triangles[j]
        if not len(tris):
            return ()
        pts = self.local(j, tris.ravel()).reshape(len(tris), 3, 2)
        a, b, c = pts[:, 0], pts[:, 1], pts[:, 2]
        v0, v1, v2 = b - a, c - a, local - a
        d00 = np.einsum("ij,ij->i", v0, v0)
        d01 = np.einsum("ij,ij->i", v0, v1)
        d11 = np.einsum("ij,ij->i", v1, v1)
        d20 = np.einsum("ij,ij->i", v2, v0)
        d21 = np.einsum("ij,ij->i", v2, v1)
        den = d00 * d11 - d01 * d01
        with np.errstate(divide="ignore", invalid="ignore"):
            v = (d11 * d20 - d01 * d21) / den
            w = (d00 * d21 - d01 * d20) / den
        inside = (v >= -1e-9) & (w >= -1e-9) & (v + w <= 1 + 1e-9)
        hit = np.nonzero(inside)[0]
        return () if not len(hit) else tuple(tris[hit[0]])

    def _branches_at(self, ambient):
        cx = self.complex
        tol = self.hamiltonian.closure_tol * cx.diameter
        out = []
        for branch in cx.branches:
            if branch.frame.residual(ambient)[0] > tol:
                continue
            local = branch.frame.to_local(ambient)
            if branch.contains(local, tol)[0]:
                out.append((branch.id, local))
        return out

    def attach(self, point):
        """Link a query point to the graph.

        Returns a node id when the point coincides with a node, otherwise
        ``(ids, to_node, from_node)``: neighbour ids with the cost of moving
        from the point to each of them and back."""
        if isinstance(point, (int, np.integer)):
            if not 0 <= point < len(self):
                raise StructureError("unknown node %r" % (point,))
            return int(point)
        cx = self.complex
        if not 0 <= point.branch < len(cx.branches):
            raise StructureError("unknown branch %r" % (point.branch,))
        coords = np.asarray(point.coords, dtype=float)
        if coords.shape != (cx.branch_dim,):
            raise GeometryError(
                "expected %d coordinates, got %r" % (cx.branch_dim, point.coords)
            )
        ambient = cx.to_ambient(point.branch, coords)
        located = self._branches_at(ambient)
        if point.branch not in [j for j, _ in located]:
            raise GeometryError("point not on complex: %r" % (point,))
        best = {}
        for j, local in located:
            dist, idx = self.tree(j).query(local)
            if dist <= self.snap_tol:
                return int(self.branch_nodes[j][idx])
            near = set(self.tree(j).query_ball_point(local, self.params.radius))
            ids = set(int(self.branch_nodes[j][k]) for k in near)
            if cx.branch_dim == 2:
                ids.update(int(i) for i in self._containing_triangle(j, local))
            if not ids:
                continue
            ids = np.array(sorted(ids), dtype=int)
            targets = self.local(j, ids)
            if cx.branch_dim == 2 and not self.convex[j]:
                inside = segments_inside_polygon(
                    cx.branches[j].local,
                    np.repeat(local[None, :], len(ids), axis=0),
                    targets,
                    cx.tol_len,
                )
                ids, targets = ids[inside], targets[inside]
            src = np.repeat(local[None, :], len(ids), axis=0)
            to_node = segment_weights(self.hamiltonian, j, src, targets)
            if self.hamiltonian.kind == EIKONAL:
                from_node = to_node
            else:
                from_node = segment_weights(self.hamiltonian, j, targets, src)
            for i, fw, bw in zip(ids, to_node, from_node):
                old = best.get(i)
                if old is None:
                    best[i] = (fw, bw)
                else:
                    best[i] = (min(old[0], fw), min(old[1], bw))
        if not best:
            raise GeometryError("point not on complex: no graph node in reach")
        ids = np.array(sorted(best), dtype=int)
        return (
            ids,
            np.array([best[i][0] for i in ids]),
            np.array([best[i][1] for i in ids]),
        )

    def _direct(self, x, y):
        """Cost of the straight move x -> y when both share a branch and
        are within the connection radius."""
        cx = self.complex
        ax = cx.ambient(x)
        ay = cx.ambient(y)
        if np.linalg.norm(ax - ay) > self.params.radius:
            return math.inf
        best = math.inf
        yb = dict(self._branches_at(ay))
        for j, lx in self._branches_at(ax):
            if j not in yb:
                continue
            ly = yb[j]
            if cx.branch_dim == 2 and not self.convex[j]:
                if not segments_inside_polygon(
                    cx.branches[j].local, lx[None, :], ly[None, :], cx.tol_len
                )[0]:
                    continue
            best = min(best, float(segment_weights(self.hamiltonian, j, lx, ly)[0]))
        return best

    def run_from(self, targets, weights):
        """Shortest distances from a virtual source joined to ``targets``."""
        n = len(self)
        rows = np.concatenate([self._rows, np.full(len(targets), n)])
        cols = np.concatenate([self._cols, np.asarray(targets, dtype=int)])
        data = np.concatenate([self._data, np.asarray(weights, dtype=float)])
        aug = csr_matrix((data, (rows, cols)), shape=(n + 1, n + 1))
        return dijkstra(aug, directed=True, indices=n)[:n]

    def __repr__(self):
        return "<MetricGraph nodes=%d edges=%d h=%s>" % (
            len(self),
            len(self.edge_pairs),
            format_float(self.params.h),
        )


class _GraphBuilder(object):
    def __init__(self, complex, H, params):
        self.complex = complex
        self.H = H
        self.params = params
        self.table = _NodeTable()
        self.chains = {}
        self.steiner = {}
        self.members = [set() for _ in complex.branches]
        self.pairs = [set() for _ in complex.branches]
        self.triangles = [np.zeros((0, 3), dtype=int) for _ in complex.branches]
        self.convex = [True] * len(complex.branches)
        self.loops = [[] for _ in complex.branches]

    def build(self):
        cx = self.complex
        self._add_vertices()
        for branch in cx.branches:
            if cx.branch_dim == 2:
                self._mesh_polygon(branch)
            else:
                self._mesh_segment(branch)
        if cx.branch_dim == 2 and self.params.steiner_per_edge > 1:
            for branch in cx.branches:
                self._refine(branch)
        matrix = self._weights()
        graph = MetricGraph(
            cx, self.H, self.params, self.table, self.members, self.triangles,
            matrix, self.convex,
        )
        mesh_logger.info(
            "metric graph: %d nodes, %d edges, h=%s, ring=%d, steiner=%d",
            len(graph),
            len(graph.edge_pairs),
            format_float(self.params.h),
            self.params.connectivity_order,
            self.params.steiner_per_edge,
        )
        return graph

    def _add_vertices(self):
        cx = self.complex
        excluded = cx.boundary_vertices
        glued = {}
        if cx.branch_dim == 1:
            for edge in cx.ram_edges:
                if edge.key not in cx.boundary:
                    glued[edge.vertex_ids[0]] = edge.id
        used = sorted({v for b in cx.branches for v in b.vertex_ids})
        for v in used:
            facets = [k for k in cx._owners if v in k]
            self.table.add(
                ("v", v), cx.vertices[v], boundary=v in excluded,
                edge=glued.get(v, -1), vertex=v, facets=facets,
            )

    def _chain(self, a, b):
        """Node ids along the facet from vertex ``a`` to vertex ``b``."""
        lo, hi = min(a, b), max(a, b)
        ids = self.chains.get((lo, hi))
        if ids is None:
            cx = self.complex
            key = frozenset((lo, hi))
            boundary = key in cx.boundary
            edge = cx.edge_for_key(key)
            eid = -1 if edge is None or boundary else edge.id
            pa, pb = cx.vertices[lo], cx.vertices[hi]
            m = max(1, int(math.ceil(np.linalg.norm(pb - pa) / self.params.h - 1e-9)))
            ids = [self.table.keys[("v", lo)]]
            for i in range(1, m):
                ids.append(
                    self.table.add(
                        ("f", lo, hi, i), pa + (i / m) * (pb - pa),
                        boundary=boundary, edge=eid, facets=[key],
                    )
                )
            ids.append(self.table.keys[("v", hi)])
            self.chains[(lo, hi)] = ids
        return ids if a == lo else ids[::-1]

    def _add_pairs(self, j, pairs):
        for u, v in pairs:
            if u != v:
                self.pairs[j].add((min(u, v), max(u, v)))

    def _mesh_polygon(self, branch):
        j = branch.id
        h = self.params.h
        loop = []
        m = len(branch.vertex_ids)
        for i, a in enumerate(branch.vertex_ids):
            loop.extend(self._chain(a, branch.vertex_ids[(i + 1) % m])[:-1])
        self.loops[j] = loop
        frame = branch.frame
        boundary_local = frame.to_local(self.table.points(loop))
        s = h / math.sqrt(2.0)
        lo = branch.local.min(axis=0)
        hi = branch.local.max(axis=0)
        ix = np.arange(math.ceil(lo[0] / s), math.floor(hi[0] / s) + 1)
        iy = np.arange(math.ceil(lo[1] / s), math.floor(hi[1] / s) + 1)
        cells = np.array(list(itertools.product(ix, iy)), dtype=int).reshape(-1, 2)
        grid = cells * s
        if len(grid):
            keep = points_in_polygon(branch.local, grid) & (
                boundary_distance(branch.local, grid) >= 0.5 * s
            )
            cells, grid = cells[keep], grid[keep]
        interior = [
            self.table.add(("i", j, int(c[0]), int(c[1])), frame.to_ambient(p))
            for c, p in zip(cells, grid)
        ]
        ids = np.array(loop + interior, dtype=int)
        coords = np.vstack([boundary_local, grid]) if len(grid) else boundary_local
        self.members[j].update(int(i) for i in ids)
        self.convex[j] = _is_convex(branch.local)

        tri = Delaunay(coords, qhull_options="QJ").simplices
        p = coords[tri]
        area = 0.5 * np.abs(
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
        )
        keep = area > 1e-10 * h * h
        keep &= points_in_polygon(branch.local, p.mean(axis=1))
        tri = tri[keep]
        self.triangles[j] = ids[tri]

        local_pairs = set()
        for a, b in ((0, 1), (1, 2), (0, 2)):
            local_pairs.update(zip(tri[:, a].tolist(), tri[:, b].tolist()))
        tree = cKDTree(coords)
        near = tree.query_pairs(self.params.radius, output_type="ndarray")
        local_pairs.update(map(tuple, near.tolist()))
        local_pairs.update((k, (k + 1) % len(loop)) for k in range(len(loop)))
        pairs = np.array(sorted(local_pairs), dtype=int).reshape(-1, 2)
        if not self.convex[j] and len(pairs):
            inside = segments_inside_polygon(
                branch.local, coords[pairs[:, 0]], coords[pairs[:, 1]],
                self.complex.tol_len,
            )
            pairs = pairs[inside]
        self._add_pairs(j, ids[pairs].tolist())
        mesh_logger.debug(
            "branch %d: %d nodes, %d triangles, %d edges",
            j, len(ids), len(tri), len(pairs),
        )

    def _mesh_segment(self, branch):
        j = branch.id
        cx = self.complex
        a, b = branch.vertex_ids
        pa, pb = cx.vertices[a], cx.vertices[b]
        m = max(1, int(math.ceil(np.linalg.norm(pb - pa) / self.params.h - 1e-9)))
        ids = [self.table.keys[("v", a)]]
        for i in range(1, m):
            ids.append(self.table.add(("s", j, i), pa + (i / m) * (pb - pa)))
        ids.append(self.table.keys[("v", b)])
        ids = np.array(ids, dtype=int)
        self.members[j].update(int(i) for i in ids)
        coords = branch.frame.to_local(self.table.points(ids))
        near = cKDTree(coords).query_pairs(self.params.radius, output_type="ndarray")
        pairs = set(map(tuple, near.tolist()))
        pairs.update((k, k + 1) for k in range(len(ids) - 1))
        self._add_pairs(j, [(ids[u], ids[v]) for u, v in pairs])

    def _steiner_points(self, u, v):
        key = (min(u, v), max(u, v))
        ids = self.steiner.get(key)
        if ids is None:
            table = self.table
            common = table.facets[u] & table.facets[v]
            boundary, eid, facets = False, -1, ()
            if common:
                fkey = sorted(common, key=sorted)[0]
                boundary = fkey in self.complex.boundary
                edge = self.complex.edge_for_key(fkey)
                eid = -1 if edge is None or boundary else edge.id
                facets = (fkey,)
            pu, pv = table.ambient[key[0]], table.ambient[key[1]]
            s = self.params.steiner_per_edge
            ids = [
                table.add(
                    ("st", key[0], key[1], i), pu + (i / s) * (pv - pu),
                    boundary=boundary, edge=eid, facets=facets,
                )
                for i in range(1, s)
            ]
            self.steiner[key] = ids
        return ids

    def _refine(self, branch):
        j = branch.id
        loop = self.loops[j]
        for k in range(len(loop)):
            u, v = loop[k], loop[(k + 1) % len(loop)]
            chain = [u] + self._steiner_points(u, v) + [v]
            self.members[j].update(chain)
            self._add_pairs(j, zip(chain[:-1], chain[1:]))
        for tri in self.triangles[j].tolist():
            closure = list(tri)
            for u, v in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[0], tri[2])):
                closure.extend(self._steiner_points(u, v))
            self.members[j].update(closure)
            self._add_pairs(j, itertools.combinations(closure, 2))

    def _weights(self):
        cx = self.complex
        n = len(self.table)
        ambient = np.array(self.table.ambient)
        rows, cols, data = [], [], []
        for branch in cx.branches:
            j = branch.id
            if not self.pairs[j]:
                continue
            pairs = np.array(sorted(self.pairs[j]), dtype=int)
            a = branch.frame.to_local(ambient[pairs[:, 0]]).reshape(len(pairs), -1)
            b = branch.frame.to_local(ambient[pairs[:, 1]]).reshape(len(pairs), -1)
            fw = segment_weights(self.H, j, a, b)
            bw = fw if self.H.kind == EIKONAL else segment_weights(self.H, j, b, a)
            rows.extend([pairs[:, 0], pairs[:, 1]])
            cols.extend([pairs[:, 1], pairs[:, 0]])
            data.extend([fw, bw])
        if not rows:
            return csr_matrix((n, n))
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        data = np.concatenate(data)
        if not np.all(np.isfinite(data)) or np.any(data < 0):
            raise HamiltonianError("non-finite or negative edge weight")
        order = np.lexsort((cols, rows))
        rows, cols, data = rows[order], cols[order], data[order]
        first = np.r_[True, (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])]
        starts = np.nonzero(first)[0]
        data = np.minimum.reduceat(data, starts)
        return csr_matrix((data, (rows[starts], cols[starts])), shape=(n, n))


def build_metric_graph(complex, H, params=None):
    """Discretize ``complex`` and weight the moves with the gauge of
    ``H``."""
    if params is None:
        params = MeshParams()
    if H.complex is not complex:
        raise StructureError("Hamiltonian family belongs to another complex")
    return _GraphBuilder(complex, H, params).build()


def distance(graph, x, y):
    """Approximate action distance ``S(x, y)`` (BranchPoints or node ids)."""
    ax = graph.attach(x)
    ay = graph.attach(y)
    if isinstance(ax, int) and isinstance(ay, int) and ax == ay:
        return 0.0
    if isinstance(ax, int):
        dist = dijkstra(graph.matrix, directed=True, indices=ax)
    else:
        dist = graph.run_from(ax[0], ax[1])
    if isinstance(ay, int):
        best = float(dist[ay])
    else:
        best = float(np.min(dist[ay[0]] + ay[2]))
    if not isinstance(x, (int, np.integer)) and not isinstance(y, (int, np.integer)):
        best = min(best, graph._direct(x, y))
    return best


def distance_field(graph, sources):
    """``min_i offset_i + S(source_i, .)`` at every node, in one run.

    ``sources`` is a sequence of ``(point, offset)`` pairs; points are
    BranchPoints or node ids."""
    from .dirichlet import SolutionField

    sources = list(sources)
    if not sources:
        raise ValueError("distance_field needs at least one source")
    offsets = np.array([float(o) for _p, o in sources])
    if not np.all(np.isfinite(offsets)):
        raise ValueError("source offsets must be finite")
    base = float(offsets.min())
    best = {}
    for (point, _o), offset in zip(sources, offsets):
        linked = graph.attach(point)
        if isinstance(linked, int):
            cand = [(linked, offset - base)]
        else:
            cand = zip(linked[0].tolist(), (linked[1] + (offset - base)).tolist())
        for i, w in cand:
            if w < best.get(i, math.inf):
                best[i] = w
    targets = np.array(sorted(best), dtype=int)
    weights = np.array([best[i] for i in targets])
    values = graph.run_from(targets, weights) + base
    return SolutionField(
        graph, values, metadata={"sources": len(sources)},
    )


# -- oracles ----------------------------------------------------------------


def unfolding_distance(complex, j, a, k, b, edge):
    """Euclidean length of the shortest path from ``a`` (branch ``j``) to
    ``b`` (branch ``k``) through ``edge`` once both branches are laid
    flat.  Unit weight."""
    unfolded = unfold_pair(complex, edge, j, k)
    pa = unfolded.apply_local(j, np.asarray(a, dtype=float))[0]
    pb = unfolded.apply_local(k, np.asarray(b, dtype=float))[0]
    if complex.branch_dim == 1:
        return float(abs(pa[0]) + abs(pb[0]))
    lo, hi = unfolded.edge_span
    span = pb[0] - pa[0]
    t = 0.0 if span == 0 else -pa[0] / span
    cross = pa[1] + t * (pb[1] - pa[1])
    if lo <= cross <= hi:
        return float(np.linalg.norm(pb - pa))
    pivot = np.array([0.0, min(max(cross, lo), hi)])
    return float(np.linalg.norm(pivot - pa) + np.linalg.norm(pb - pivot))


def _pair_costs(H, branch, p, q, convex, nodes=16):
    """Cost of every straight move p[a] -> q[b] inside ``branch``."""
    a = np.repeat(p, len(q), axis=0)
    b = np.tile(q, (len(p), 1))
    cost = np.full(len(a), math.inf)
    if branch.dim == 2 and not convex:
        inside = segments_inside_polygon(branch.local, a, b, 1e-12)
    else:
        inside = np.ones(len(a), dtype=bool)
    cost[inside] = segment_actions(H, branch.id, a[inside], b[inside], points=nodes)
    return cost.reshape(len(p), len(q))


def _interior_candidates(branch, grid):
    if branch.dim == 1:
        lo, hi = sorted((branch.local[0, 0], branch.local[1, 0]))
        return np.linspace(lo, hi, grid)[1:-1, None]
    lo = branch.local.min(axis=0)
    hi = branch.local.max(axis=0)
    g0 = np.linspace(lo[0], hi[0], grid + 2)[1:-1]
    g1 = np.linspace(lo[1], hi[1], grid + 2)[1:-1]
    pts = np.array(list(itertools.product(g0, g1)))
    return pts[branch.contains(pts, 0.0)]


def _branch_sequences(complex, start, end):
    adjacency = {b.id: [] for b in complex.branches}
    for edge in complex.ram_edges:
        if edge.key in complex.boundary:
            continue
        for inc_a in edge.incident:
            for inc_b in edge.incident:
                if inc_a.branch != inc_b.branch:
                    adjacency[inc_a.branch].append((inc_b.branch, edge))
    out = []

    def walk(path, edges):
        if path[-1] == end:
            out.append((tuple(path), tuple(edges)))
            return
        for nxt, edge in adjacency[path[-1]]:
            if nxt not in path:
                walk(path + [nxt], edges + [edge])

    walk([start], [])
    return sorted(out, key=lambda item: len(item[0]))


def brute_force_action(
    complex, H, x, y, depth=2, grid=11, edge_samples=41, budget=2000000,
):
    """Exhaustive upper bound on ``S(x, y)`` over polyline connections.

    Every simple branch sequence from ``x`` to ``y`` is tried; inside each
    crossed branch up to ``depth`` free vertices are placed on a
    ``grid x grid`` lattice, crossings are sampled at ``edge_samples``
    points per edge.  Staying put is always allowed, so the bound never
    grows with ``depth``."""
    if len(complex.branches) > 4:
        raise StructureError("brute-force search supports at most 4 branches")
    if depth < 0:
        raise ValueError("depth must be >= 0")
    convex = [b.dim == 1 or _is_convex(b.local) for b in complex.branches]
    candidates = {}
    best = math.inf
    used = 0
    xa = complex.ambient(x)
    ya = complex.ambient(y)
    for seq, edges in _branch_sequences(complex, x.branch, y.branch):
        branch = complex.branches[seq[0]]
        pts = branch.frame.to_local(xa)[None, :]
        vals = np.zeros(1)
        for t, j in enumerate(seq):
            branch = complex.branches[j]
            if j not in candidates:
                candidates[j] = _interior_candidates(branch, grid)
            for _ in range(depth):
                used += len(pts) * len(candidates[j])
                if used > budget:
                    raise BudgetExceeded(
                        "more than %d segment evaluations" % budget,
                        partial_bound=best,
                    )
                cost = _pair_costs(H, branch, pts, candidates[j], convex[j])
                moved = np.min(vals[:, None] + cost, axis=0)
                pts = np.vstack([pts, candidates[j]])
                vals = np.concatenate([vals, moved])
            if t == len(seq) - 1:
                end = branch.frame.to_local(ya)[None, :]
                cost = _pair_costs(H, branch, pts, end, convex[j])
                best = min(best, float(np.min(vals + cost[:, 0])))
                continue
            edge = edges[t]
            ends = complex.vertices[list(edge.vertex_ids)]
            if complex.branch_dim == 1:
                cross = ends[:1]
            else:
                ts = np.arange(1, edge_samples + 1) / (edge_samples + 1.0)
                cross = ends[0] + ts[:, None] * (ends[1] - ends[0])
            target = branch.frame.to_local(cross).reshape(len(cross), -1)
            used += len(pts) * len(target)
            if used > budget:
                raise BudgetExceeded(
                    "more than %d segment evaluations" % budget, partial_bound=best,
                )
            cost = _pair_costs(H, branch, pts, target, convex[j])
            vals = np.min(vals[:, None] + cost, axis=0)
            nxt = complex.branches[seq[t + 1]]
            pts = nxt.frame.to_local(cross).reshape(len(cross), -1)
    return best


def check_field_graph(field, graph):
    """Raise FieldMismatch unless ``field`` lives on ``graph``."""
    if field.graph is not graph and (
        len(field.values) != len(graph)
        or field.graph.complex_digest != graph.complex_digest
        or field.graph.params != graph.params
    ):
        raise FieldMismatch("field has %d values, graph %d nodes" % (len(field.values), len(graph)))
