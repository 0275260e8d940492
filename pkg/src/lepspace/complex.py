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
"""Polygonal ramified spaces.

A complex is a finite set of flat branches (polygons for ``branch_dim``
2, segments for ``branch_dim`` 1) living in pairwise distinct
hyperplanes of the ambient space.  Branches are glued along whole shared
facets (ramification edges); facets that are not glued belong to the
excluded boundary.  Points where branches meet without being glued along a
facet (polygon corners) must be excluded as well.

Everything here is immutable once constructed.
"""

import itertools
from collections import defaultdict, namedtuple

import numpy as np

from .utilities import GeometryError, StructureError, logger, sha256_text

RAMIFICATION = "ramification"
BOUNDARY = "boundary"

RULE_DEGENERATE = "degenerate branch"
RULE_DEGENERATE_FACET = "degenerate facet"
RULE_NON_PLANAR = "branch not planar"
RULE_NON_SIMPLE = "polygon not simple"
RULE_HYPERPLANES = "hyperplanes not pairwise distinct"
RULE_INTERSECTION = "branch closures intersect outside their boundaries"
RULE_PARTIAL_GLUE = "partial-edge gluing"
RULE_DISCONNECTED = "complex not connected"
RULE_DANGLING = "dangling ramification facet"
RULE_UNCLASSIFIED = "facet not classified"
RULE_DOUBLE = "facet classified twice"
RULE_CORNER = "corner in ramification set"

Facet = namedtuple("Facet", ["id", "vertex_ids", "kind", "edge"])
Incidence = namedtuple("Incidence", ["branch", "facet", "normal"])
Violation = namedtuple("Violation", ["rule", "elements", "detail"])
BranchPoint = namedtuple("BranchPoint", ["branch", "coords"])
Location = namedtuple("Location", ["kind", "branch", "edge", "coords"])


def facet_key(vertex_ids):
    return frozenset(int(v) for v in vertex_ids)


def key_label(key):
    return "-".join(str(v) for v in sorted(key))


# -- planar helpers ---------------------------------------------------------


def signed_area(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def segment_distances(points, starts, ends):
    """Distance of every point to every segment, shape (points, segments)."""
    points = np.atleast_2d(points)
    d = ends - starts
    len2 = np.einsum("ij,ij->i", d, d)
    rel = points[:, None, :] - starts[None, :, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.einsum("pij,ij->pi", rel, d) / len2[None, :]
    t = np.where(len2[None, :] > 0, np.clip(t, 0.0, 1.0), 0.0)
    closest = starts[None, :, :] + t[:, :, None] * d[None, :, :]
    return np.linalg.norm(points[:, None, :] - closest, axis=2)


def polygon_edges(poly):
    return poly, np.roll(poly, -1, axis=0)


def boundary_distance(poly, points):
    starts, ends = polygon_edges(poly)
    return segment_distances(points, starts, ends).min(axis=1)


def points_in_polygon(poly, points, tol=0.0):
    """Closed point-in-polygon test (crossing number plus ``tol`` band)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    starts, ends = polygon_edges(poly)
    px = points[:, 0][:, None]
    py = points[:, 1][:, None]
    ax, ay = starts[:, 0][None, :], starts[:, 1][None, :]
    bx, by = ends[:, 0][None, :], ends[:, 1][None, :]
    straddle = (ay > py) != (by > py)
    with np.errstate(invalid="ignore", divide="ignore"):
        xint = ax + (py - ay) * (bx - ax) / (by - ay)
    crossings = np.sum(straddle & (px < xint), axis=1)
    inside = (crossings % 2) == 1
    if tol > 0:
        inside |= boundary_distance(poly, points) <= tol
    return inside


def _orient(a, b, c):
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (
        b[..., 1] - a[..., 1]
    ) * (c[..., 0] - a[..., 0])


def segments_inside_polygon(poly, starts, ends, tol):
    """Whether each segment lies in the closed polygon.

    A segment is inside when its midpoint is and it does not properly
    cross any polygon edge."""
    starts = np.atleast_2d(starts)
    ends = np.atleast_2d(ends)
    mids = 0.5 * (starts + ends)
    ok = points_in_polygon(poly, mids, tol)
    pa, pb = polygon_edges(poly)
    s0 = starts[:, None, :]
    s1 = ends[:, None, :]
    e0 = pa[None, :, :]
    e1 = pb[None, :, :]
    o1 = _orient(s0, s1, e0)
    o2 = _orient(s0, s1, e1)
    o3 = _orient(e0, e1, s0)
    o4 = _orient(e0, e1, s1)
    eps = tol * max(1.0, float(np.max(np.abs(poly))))
    proper = (
        (o1 * o2 < 0)
        & (o3 * o4 < 0)
        & (np.abs(o1) > eps)
        & (np.abs(o2) > eps)
        & (np.abs(o3) > eps)
        & (np.abs(o4) > eps)
    )
    return ok & ~proper.any(axis=1)


def _segments_touch(a0, a1, b0, b1, tol):
    o1 = _orient(a0, a1, b0)
    o2 = _orient(a0, a1, b1)
    o3 = _orient(b0, b1, a0)
    o4 = _orient(b0, b1, a1)
    if o1 * o2 < 0 and o3 * o4 < 0:
        return True
    starts = np.array([a0, a0, b0, b0])
    ends = np.array([a1, a1, b1, b1])
    pts = np.array([b0, b1, a0, a1])
    dist = [
        segment_distances(pts[i], starts[i : i + 1], ends[i : i + 1])[0, 0]
        for i in range(4)
    ]
    return min(dist) <= tol


def _clip_line(poly, origin, direction, tol):
    """Parameter intervals where ``origin + t * direction`` meets ``poly``."""
    starts, ends = polygon_edges(poly)
    ts = []
    for a, b in zip(starts, ends):
        e = b - a
        det = direction[0] * (-e[1]) + direction[1] * e[0]
        rel = a - origin
        if abs(det) <= 1e-14 * max(1.0, np.linalg.norm(e)):
            # parallel: collinear edges contribute their endpoints
            if abs(_orient(a, b, origin)) <= tol * max(1.0, np.linalg.norm(e)):
                ts.append(float(np.dot(a - origin, direction)))
                ts.append(float(np.dot(b - origin, direction)))
            continue
        t = (rel[0] * (-e[1]) + rel[1] * e[0]) / det
        s = (direction[0] * rel[1] - direction[1] * rel[0]) / det
        if -1e-12 <= s <= 1 + 1e-12:
            ts.append(float(t))
    if not ts:
        return []
    ts = sorted(ts)
    merged = [ts[0]]
    for t in ts[1:]:
        if t - merged[-1] > tol:
            merged.append(t)
    intervals = []
    for lo, hi in zip(merged[:-1], merged[1:]):
        mid = origin + 0.5 * (lo + hi) * direction
        if points_in_polygon(poly, mid, tol)[0]:
            if intervals and abs(intervals[-1][1] - lo) <= tol:
                intervals[-1] = (intervals[-1][0], hi)
            else:
                intervals.append((lo, hi))
    for t in merged:
        if not any(lo - tol <= t <= hi + tol for lo, hi in intervals):
            intervals.append((t, t))
    return sorted(intervals)


def _closest_points(p0, p1, q0, q1):
    """Closest points of two segments in any dimension."""
    d1 = p1 - p0
    d2 = q1 - q0
    r = p0 - q0
    a = float(np.dot(d1, d1))
    e = float(np.dot(d2, d2))
    f = float(np.dot(d2, r))
    if a <= 0 and e <= 0:
        return p0, q0
    if a <= 0:
        return p0, q0 + np.clip(f / e, 0, 1) * d2
    c = float(np.dot(d1, r))
    if e <= 0:
        return p0 + np.clip(-c / a, 0, 1) * d1, q0
    b = float(np.dot(d1, d2))
    denom = a * e - b * b
    s = np.clip((b * f - c * e) / denom, 0, 1) if denom > 0 else 0.0
    t = (b * s + f) / e
    if t < 0:
        t = 0.0
        s = np.clip(-c / a, 0, 1)
    elif t > 1:
        t = 1.0
        s = np.clip((b - c) / a, 0, 1)
    return p0 + s * d1, q0 + t * d2


# -- frames -----------------------------------------------------------------


class Frame(object):
    """Isometric coordinates of a branch hyperplane.

    ``basis`` holds orthonormal rows spanning the branch directions.  For
    polygons the second axis is oriented so the vertex loop runs
    counter-clockwise in local coordinates."""

    def __init__(self, origin, basis):
        self.origin = origin
        self.basis = basis
        self.origin.setflags(write=False)
        self.basis.setflags(write=False)

    @property
    def dim(self):
        return self.basis.shape[0]

    def to_local(self, points):
        points = np.asarray(points, dtype=float)
        return (points - self.origin) @ self.basis.T

    def to_ambient(self, coords):
        coords = np.asarray(coords, dtype=float)
        return self.origin + coords @ self.basis

    def vector_to_ambient(self, vec):
        return np.asarray(vec, dtype=float) @ self.basis

    def vector_to_local(self, vec):
        return np.asarray(vec, dtype=float) @ self.basis.T

    def residual(self, points):
        """Distance of ``points`` to the affine span of the frame."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        rel = points - self.origin
        proj = (rel @ self.basis.T) @ self.basis
        return np.linalg.norm(rel - proj, axis=1)

    def same_flat(self, other, tol):
        if self.residual(other.origin)[0] > tol:
            return False
        rel = other.basis - (other.basis @ self.basis.T) @ self.basis
        return float(np.max(np.abs(rel))) <= 1e-9


def _frame_for(coords, branch_dim, tol):
    origin = coords[0].copy()
    rel = coords - origin
    norms = np.linalg.norm(rel, axis=1)
    far = np.nonzero(norms > tol)[0]
    d = coords.shape[1]
    if len(far) == 0:
        e1 = np.zeros(d)
        e1[0] = 1.0
    else:
        e1 = rel[far[0]] / norms[far[0]]
    if branch_dim == 1:
        return Frame(origin, e1[None, :])
    _u, _s, vt = np.linalg.svd(rel - rel.mean(axis=0), full_matrices=True)
    best = None
    for cand in vt[:2]:
        resid = cand - np.dot(cand, e1) * e1
        if best is None or np.linalg.norm(resid) > np.linalg.norm(best):
            best = resid
    if np.linalg.norm(best) <= 1e-12:
        best = vt[-1] - np.dot(vt[-1], e1) * e1
    e2 = best / np.linalg.norm(best)
    basis = np.vstack([e1, e2])
    if signed_area(rel @ basis.T) < 0:
        basis[1] = -basis[1]
    return Frame(origin, basis)


# -- elements ---------------------------------------------------------------


class Branch(object):
    """One flat branch: a polygon loop (n=2) or a segment (n=1)."""

    def __init__(self, id, vertex_ids, frame, local, facets):
        self.id = id
        self.vertex_ids = tuple(vertex_ids)
        self.frame = frame
        self.local = local
        self.local.setflags(write=False)
        self.facets = tuple(facets)

    @property
    def dim(self):
        return self.frame.dim

    @property
    def size(self):
        """Area of a polygon, length of a segment."""
        if self.dim == 1:
            return float(abs(self.local[1, 0] - self.local[0, 0]))
        return abs(signed_area(self.local))

    def facet_coords(self, facet):
        idx = [self.vertex_ids.index(v) for v in self.facets[facet].vertex_ids]
        return self.local[idx]

    def contains(self, coords, tol):
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        if self.dim == 1:
            lo = min(self.local[0, 0], self.local[1, 0])
            hi = max(self.local[0, 0], self.local[1, 0])
            return (coords[:, 0] >= lo - tol) & (coords[:, 0] <= hi + tol)
        return points_in_polygon(self.local, coords, tol)

    def __repr__(self):
        return "<Branch %d %r>" % (self.id, self.vertex_ids)


class RamEdge(object):
    """A ramification edge (segment for n=2, point for n=1)."""

    def __init__(self, id, vertex_ids, incident):
        self.id = id
        self.vertex_ids = tuple(vertex_ids)
        self.incident = tuple(incident)

    @property
    def key(self):
        return facet_key(self.vertex_ids)

    @property
    def branches(self):
        return frozenset(inc.branch for inc in self.incident)

    def incidence_for(self, branch):
        for inc in self.incident:
            if inc.branch == branch:
                return inc
        raise GeometryError(
            "branch %d is not incident to ramification edge %d" % (branch, self.id)
        )

    def __repr__(self):
        return "<RamEdge %d %r r=%d>" % (self.id, self.vertex_ids, len(self.incident))


class Chart(object):
    """Canonical identification of a neighbourhood of a point of Σ with a
    model elementary ramified space.

    For every incident branch ``j`` the isometry sends ``y`` to
    ``rotations[j] @ (y - base)``; the first model coordinate is the
    distance from the edge measured along the inward normal, the second
    (n=2) the position along the edge."""

    def __init__(self, base, edge, order, rotations):
        self.base = base
        self.edge = edge
        self.order = order
        self.rotations = rotations

    @property
    def r(self):
        return len(self.order)

    def to_model(self, branch, points):
        return (np.asarray(points, dtype=float) - self.base) @ self.rotations[
            branch
        ].T

    def from_model(self, branch, coords):
        return self.base + np.asarray(coords, dtype=float) @ self.rotations[branch]


class UnfoldedPair(object):
    """Two incident branches laid flat on opposite sides of their edge.

    Branch ``j`` lands on the negative side of the first coordinate,
    branch ``k`` on the positive side; the edge maps onto the zero set of
    the first coordinate identically for both."""

    def __init__(self, chart, j, k, complex):
        self.chart = chart
        self.j = j
        self.k = k
        self.complex = complex

    def apply(self, branch, points):
        z = np.atleast_2d(self.chart.to_model(branch, points)).copy()
        if branch == self.j:
            z[:, 0] = -z[:, 0]
        elif branch != self.k:
            raise GeometryError("branch %d is not part of this unfolding" % branch)
        return z

    def apply_local(self, branch, coords):
        frame = self.complex.branches[branch].frame
        return self.apply(branch, frame.to_ambient(np.atleast_2d(coords)))

    @property
    def edge_span(self):
        """Range of the tangential coordinate covered by the edge."""
        edge = self.complex.ram_edges[self.chart.edge]
        ends = self.complex.vertices[list(edge.vertex_ids)]
        z = self.chart.to_model(self.j, ends)
        if z.shape[1] < 2:
            return (0.0, 0.0)
        return (float(z[:, 1].min()), float(z[:, 1].max()))


class ValidationReport(object):
    def __init__(self, violations):
        self.violations = list(violations)

    @property
    def valid(self):
        return not self.violations

    @property
    def rules(self):
        return sorted(v.rule for v in self.violations)

    def __iter__(self):
        return iter(self.violations)

    def format(self):
        if self.valid:
            return "valid"
        lines = ["invalid"]
        for v in self.violations:
            lines.append("  %s: %s %s" % (v.rule, v.elements, v.detail))
        return "\n".join(lines)


# -- the complex ------------------------------------------------------------


class LEPComplex(object):
    """Branches glued along ramification edges, with an excluded boundary.

    ``glue`` is a sequence of ``(vertex_ids, incident_branches)`` pairs
    (``incident_branches`` may be None to take every branch owning the
    facet).  ``boundary`` is a collection of vertex-id tuples: facets, or
    single corner points."""

    def __init__(
        self, vertices, branches, glue=(), boundary=(), ambient_dim=None,
        branch_dim=2, tol_rel=1e-9,
    ):
        vertices = np.array(vertices, dtype=float)
        if vertices.ndim != 2 or len(vertices) == 0:
            raise StructureError("vertices must be a non-empty list of points")
        if ambient_dim is None:
            ambient_dim = vertices.shape[1]
        if vertices.shape[1] != ambient_dim:
            raise StructureError(
                "vertices have dimension %d, expected %d"
                % (vertices.shape[1], ambient_dim)
            )
        if branch_dim not in (1, 2):
            raise StructureError("branch_dim must be 1 or 2, got %r" % branch_dim)
        if branch_dim == 2 and ambient_dim != 3:
            raise StructureError("polygonal branches live in R^3")
        if branch_dim == 1 and ambient_dim not in (2, 3):
            raise StructureError("segment networks live in R^2 or R^3")
        vertices.setflags(write=False)
        self.vertices = vertices
        self.ambient_dim = ambient_dim
        self.branch_dim = branch_dim

        span = vertices.max(axis=0) - vertices.min(axis=0)
        self.diameter = float(np.linalg.norm(span)) or 1.0
        if not tol_rel > 0:
            raise ValueError("tol_rel must be positive")
        self.tol_rel = float(tol_rel)
        self.tol_planar = self.tol_rel * self.diameter
        self.tol_len = self.tol_rel * self.diameter
        self.tol_area = self.tol_len ** 2

        self._glue_spec = [
            (tuple(int(v) for v in ids), None if inc is None else tuple(inc))
            for ids, inc in glue
        ]
        self.boundary = frozenset(facet_key(ids) for ids in boundary)
        self._build_branches([tuple(int(v) for v in b) for b in branches])
        self._classify()

    # construction

    def _check_vertex(self, v, where):
        if not 0 <= v < len(self.vertices):
            raise StructureError("%s references missing vertex %d" % (where, v))

    def _build_branches(self, loops):
        need = 2 if self.branch_dim == 1 else 3
        built = []
        for j, loop in enumerate(loops):
            if len(loop) < need or (self.branch_dim == 1 and len(loop) != 2):
                raise StructureError(
                    "branch %d needs %s vertices"
                    % (j, "2" if self.branch_dim == 1 else "at least 3")
                )
            for v in loop:
                self._check_vertex(v, "branch %d" % j)
            coords = self.vertices[list(loop)]
            frame = _frame_for(coords, self.branch_dim, self.tol_len)
            local = frame.to_local(coords)
            if self.branch_dim == 1:
                facets = [(loop[0],), (loop[1],)]
            else:
                facets = [
                    (loop[i], loop[(i + 1) % len(loop)]) for i in range(len(loop))
                ]
            built.append((j, loop, frame, local, facets))
        self._raw_branches = built

    def _classify(self):
        owners = defaultdict(list)
        for j, loop, _frame, _local, facets in self._raw_branches:
            for fid, ids in enumerate(facets):
                owners[facet_key(ids)].append((j, fid))

        corner_ids = set()
        if self.branch_dim == 2:
            for _j, loop, _f, _l, _fac in self._raw_branches:
                corner_ids.update(loop)
        for key in self.boundary:
            for v in key:
                self._check_vertex(v, "boundary")
            if key not in owners and not (len(key) == 1 and key <= corner_ids):
                raise StructureError(
                    "boundary entry %s is not a facet or corner" % key_label(key)
                )

        glued = {}
        edges_spec = []
        for eid, (ids, incident) in enumerate(self._glue_spec):
            for v in ids:
                self._check_vertex(v, "glue %d" % eid)
            key = facet_key(ids)
            if key in glued:
                raise StructureError(
                    "glue %d duplicates glue %d" % (eid, glued[key])
                )
            glued[key] = eid
            have = dict(owners.get(key, ()))
            if incident is None:
                incident = tuple(sorted(have))
            for j in incident:
                if not 0 <= j < len(self._raw_branches):
                    raise StructureError("glue %d references missing branch %d" % (eid, j))
                if j not in have:
                    raise StructureError(
                        "branch %d has no facet %s (glue %d)" % (j, key_label(key), eid)
                    )
            if len(set(incident)) != len(incident):
                raise StructureError("glue %d lists a branch twice" % eid)
            edges_spec.append((eid, ids, [(j, have[j]) for j in incident]))

        branches = []
        for j, loop, frame, local, facets in self._raw_branches:
            fl = []
            for fid, ids in enumerate(facets):
                key = facet_key(ids)
                edge = glued.get(key)
                if edge is not None and j not in dict(
                    (b, f) for b, f in edges_spec[edge][2]
                ):
                    edge = None
                if edge is not None:
                    kind = RAMIFICATION
                elif key in self.boundary:
                    kind = BOUNDARY
                else:
                    kind = None
                fl.append(Facet(fid, ids, kind, edge))
            branches.append(Branch(j, loop, frame, local, fl))
        self.branches = tuple(branches)
        self._owners = {k: tuple(v) for k, v in owners.items()}

        ram_edges = []
        for eid, ids, incs in edges_spec:
            inc = []
            for j, fid in incs:
                try:
                    nu = self._normal(j, fid)
                except GeometryError:
                    nu = None
                inc.append(Incidence(j, fid, nu))
            ram_edges.append(RamEdge(eid, ids, inc))
        self.ram_edges = tuple(ram_edges)

    # geometry accessors

    def _normal(self, j, fid):
        branch = self.branches[j]
        ends = branch.facet_coords(fid)
        if self.branch_dim == 1:
            if branch.size <= self.tol_len:
                raise GeometryError("degenerate facet %d of branch %d" % (fid, j))
            sign = 1.0 if fid == 0 else -1.0
            if branch.local[1, 0] < branch.local[0, 0]:
                sign = -sign
            return np.array([sign])
        d = ends[1] - ends[0]
        length = float(np.linalg.norm(d))
        if length <= self.tol_len:
            raise GeometryError("degenerate facet %d of branch %d" % (fid, j))
        nu = np.array([-d[1], d[0]]) / length
        if signed_area(branch.local) < 0:
            nu = -nu
        return nu

    @property
    def boundary_vertices(self):
        out = set()
        for key in self.boundary:
            out.update(key)
        return frozenset(out)

    @property
    def sigma_vertices(self):
        """Vertex ids lying on glued edges but not on the boundary."""
        out = set()
        for edge in self.ram_edges:
            out.update(edge.vertex_ids)
        return frozenset(out - self.boundary_vertices)

    def facets_of(self, key):
        return self._owners.get(facet_key(key), ())

    def to_local(self, branch, points):
        return self.branches[branch].frame.to_local(points)

    def to_ambient(self, branch, coords):
        return self.branches[branch].frame.to_ambient(coords)

    def point(self, branch, ambient):
        """BranchPoint for an ambient point lying on ``branch``."""
        coords = self.to_local(branch, np.asarray(ambient, dtype=float))
        return BranchPoint(branch, tuple(float(c) for c in np.ravel(coords)))

    def ambient(self, point):
        return self.to_ambient(point.branch, np.asarray(point.coords, dtype=float))

    def edge_for_key(self, key):
        key = facet_key(key)
        for edge in self.ram_edges:
            if edge.key == key:
                return edge
        return None

    def digest(self):
        parts = [
            "%d %d" % (self.ambient_dim, self.branch_dim),
            repr([tuple(map(float, v)) for v in self.vertices]),
            repr([b.vertex_ids for b in self.branches]),
            repr([(e.vertex_ids, tuple(i.branch for i in e.incident)) for e in self.ram_edges]),
            repr(sorted(tuple(sorted(k)) for k in self.boundary)),
        ]
        return sha256_text("\n".join(parts))

    def __repr__(self):
        return "<LEPComplex n=%d d=%d branches=%d edges=%d>" % (
            self.branch_dim,
            self.ambient_dim,
            len(self.branches),
            len(self.ram_edges),
        )


# -- operations -------------------------------------------------------------


def _branch_violations(cx):
    out = []
    for b in cx.branches:
        if cx.branch_dim == 1:
            if b.size <= cx.tol_len:
                out.append(Violation(RULE_DEGENERATE, (b.id,), "zero length"))
            continue
        if len(set(b.vertex_ids)) != len(b.vertex_ids):
            out.append(Violation(RULE_NON_SIMPLE, (b.id,), "repeated vertex"))
            continue
        coords = cx.vertices[list(b.vertex_ids)]
        resid = float(np.max(b.frame.residual(coords)))
        if resid > cx.tol_planar:
            out.append(
                Violation(RULE_NON_PLANAR, (b.id,), "off-plane by %.3g" % resid)
            )
        if b.size <= cx.tol_area:
            out.append(Violation(RULE_DEGENERATE, (b.id,), "zero area"))
            continue
        for f in b.facets:
            ends = b.facet_coords(f.id)
            if np.linalg.norm(ends[1] - ends[0]) <= cx.tol_len:
                out.append(Violation(RULE_DEGENERATE_FACET, (b.id, f.id), ""))
        m = len(b.local)
        for i, k in itertools.combinations(range(m), 2):
            if k == i + 1 or (i == 0 and k == m - 1):
                continue
            if _segments_touch(
                b.local[i], b.local[(i + 1) % m], b.local[k], b.local[(k + 1) % m],
                cx.tol_len,
            ):
                out.append(Violation(RULE_NON_SIMPLE, (b.id,), "edges %d/%d" % (i, k)))
                break
    return out


def _same_flat_pairs(cx):
    pairs = set()
    for a, b in itertools.combinations(cx.branches, 2):
        if a.frame.same_flat(b.frame, cx.tol_planar):
            pairs.add((a.id, b.id))
    return pairs


def _facet_containing(cx, branch, point_local):
    b = cx.branches[branch]
    point_local = np.atleast_2d(point_local)
    best = None
    for f in b.facets:
        ends = b.facet_coords(f.id)
        if cx.branch_dim == 1:
            dist = abs(float(point_local[0, 0]) - float(ends[0, 0]))
        else:
            dist = segment_distances(point_local, ends[:1], ends[1:])[0, 0]
        if dist <= cx.tol_planar and (best is None or dist < best[0]):
            best = (dist, f)
    return None if best is None else best[1]


def _intersection_violations(cx, skip):
    out = []
    for a, b in itertools.combinations(cx.branches, 2):
        if (a.id, b.id) in skip:
            continue
        if cx.branch_dim == 1:
            out.extend(_segment_pair(cx, a, b))
        else:
            out.extend(_polygon_pair(cx, a, b))
    return out


def _segment_pair(cx, a, b):
    pa = cx.vertices[list(a.vertex_ids)]
    pb = cx.vertices[list(b.vertex_ids)]
    qa, qb = _closest_points(pa[0], pa[1], pb[0], pb[1])
    if np.linalg.norm(qa - qb) > cx.tol_len:
        return []
    end_a = [v for v, p in zip(a.vertex_ids, pa) if np.linalg.norm(p - qa) <= cx.tol_len]
    end_b = [v for v, p in zip(b.vertex_ids, pb) if np.linalg.norm(p - qb) <= cx.tol_len]
    if not end_a or not end_b:
        return [Violation(RULE_INTERSECTION, (a.id, b.id), "interior crossing")]
    if end_a[0] != end_b[0]:
        return [Violation(RULE_PARTIAL_GLUE, (a.id, b.id), "touching endpoints differ")]
    return []


def _polygon_pair(cx, a, b):
    na = np.cross(a.frame.basis[0], a.frame.basis[1])
    nb = np.cross(b.frame.basis[0], b.frame.basis[1])
    direction = np.cross(na, nb)
    norm = np.linalg.norm(direction)
    if norm <= 1e-12:
        return []
    direction = direction / norm
    system = np.vstack([na, nb, direction])
    rhs = np.array([np.dot(na, a.frame.origin), np.dot(nb, b.frame.origin), 0.0])
    p0 = np.linalg.solve(system, rhs)
    spans = []
    for br in (a, b):
        o = br.frame.to_local(p0)
        v = br.frame.vector_to_local(direction)
        spans.append(_clip_line(br.local, o, v, cx.tol_len))
    out = []
    for lo_a, hi_a in spans[0]:
        for lo_b, hi_b in spans[1]:
            lo, hi = max(lo_a, lo_b), min(hi_a, hi_b)
            if lo > hi + cx.tol_len:
                continue
            mid = p0 + 0.5 * (lo + hi) * direction
            on_boundary = all(
                boundary_distance(br.local, br.frame.to_local(mid)[None, :])[0]
                <= cx.tol_planar * 10
                for br in (a, b)
            )
            if not on_boundary:
                out.append(Violation(RULE_INTERSECTION, (a.id, b.id), "overlap"))
                continue
            if hi - lo <= cx.tol_len:
                continue
            fa = _facet_containing(cx, a.id, a.frame.to_local(mid)[None, :])
            fb = _facet_containing(cx, b.id, b.frame.to_local(mid)[None, :])
            if (
                fa is None
                or fb is None
                or facet_key(fa.vertex_ids) != facet_key(fb.vertex_ids)
            ):
                out.append(
                    Violation(RULE_PARTIAL_GLUE, (a.id, b.id), "not a shared facet")
                )
    return out


def _classification_violations(cx):
    out = []
    for edge in cx.ram_edges:
        if len(edge.incident) < 2:
            out.append(
                Violation(RULE_DANGLING, (edge.id,), "glued to one branch only")
            )
        if edge.key in cx.boundary:
            out.append(Violation(RULE_DOUBLE, (edge.id,), key_label(edge.key)))
    for b in cx.branches:
        for f in b.facets:
            if f.kind is not None:
                continue
            owners = cx.facets_of(f.vertex_ids)
            rule = RULE_DANGLING if len(owners) == 1 else RULE_UNCLASSIFIED
            out.append(Violation(rule, (b.id, f.id), key_label(f.vertex_ids)))
    return out


def _corner_violations(cx):
    if cx.branch_dim != 2:
        return []
    excluded = cx.boundary_vertices
    corners = set()
    for b in cx.branches:
        corners.update(b.vertex_ids)
    return [
        Violation(RULE_CORNER, (v,), "corner vertex not in boundary")
        for v in sorted(corners - excluded)
    ]


def _connectivity_violations(cx):
    parent = list(range(len(cx.branches)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for edge in cx.ram_edges:
        if edge.key in cx.boundary:
            continue
        ids = [inc.branch for inc in edge.incident]
        for j in ids[1:]:
            parent[find(j)] = find(ids[0])
    roots = sorted({find(i) for i in range(len(cx.branches))})
    if len(roots) <= 1:
        return []
    comps = defaultdict(list)
    for i in range(len(cx.branches)):
        comps[find(i)].append(i)
    return [
        Violation(
            RULE_DISCONNECTED, tuple(sorted(comps[r][0] for r in roots)),
            "%d components" % len(roots),
        )
    ]


def validate_complex(complex):
    """Check every axiom and return a ValidationReport.

    Violations are report entries; only structural problems (which
    cannot be constructed in the first place) raise."""
    skip = _same_flat_pairs(complex)
    violations = []
    violations.extend(_branch_violations(complex))
    violations.extend(
        Violation(RULE_HYPERPLANES, pair, "") for pair in sorted(skip)
    )
    violations.extend(_intersection_violations(complex, skip))
    violations.extend(_classification_violations(complex))
    violations.extend(_corner_violations(complex))
    violations.extend(_connectivity_violations(complex))
    report = ValidationReport(violations)
    if not report.valid:
        logger.info("complex invalid: %s", ", ".join(sorted(set(report.rules))))
    return report


def _resolve_edge(complex, edge):
    if isinstance(edge, RamEdge):
        return edge
    if isinstance(edge, (tuple, list, frozenset, set)):
        key = facet_key(edge)
        found = complex.edge_for_key(key)
        if found is not None:
            return found
        if key in complex.boundary or complex.facets_of(key):
            raise GeometryError("%s is not a ramification edge" % key_label(key))
        raise StructureError("unknown facet %s" % key_label(key))
    if not 0 <= int(edge) < len(complex.ram_edges):
        raise StructureError("unknown ramification edge %r" % (edge,))
    return complex.ram_edges[int(edge)]


def incidence(complex, edge):
    """Branch ids incident to a ramification edge (Inc_x)."""
    return _resolve_edge(complex, edge).branches


def ramification_order(complex, edge):
    return len(_resolve_edge(complex, edge).incident)


def is_simple(complex, edge):
    return ramification_order(complex, edge) == 2


def normal_vector(complex, branch, facet):
    """Inward unit normal of ``facet`` in branch-local coordinates."""
    if not 0 <= branch < len(complex.branches):
        raise StructureError("unknown branch %r" % (branch,))
    if not 0 <= facet < len(complex.branches[branch].facets):
        raise StructureError("facet %r does not belong to branch %d" % (facet, branch))
    return complex._normal(branch, facet)


def _edge_direction(complex, edge):
    a, b = complex.vertices[list(edge.vertex_ids)]
    d = b - a
    return d / np.linalg.norm(d)


def _find_sigma_edge(complex, x):
    x = np.asarray(x, dtype=float)
    for edge in complex.ram_edges:
        if edge.key in complex.boundary:
            continue
        ends = complex.vertices[list(edge.vertex_ids)]
        if complex.branch_dim == 1:
            if np.linalg.norm(x - ends[0]) <= complex.tol_planar:
                return edge
            continue
        if segment_distances(x, ends[:1], ends[1:])[0, 0] > complex.tol_planar:
            continue
        if min(np.linalg.norm(x - ends[0]), np.linalg.norm(x - ends[1])) <= complex.tol_len:
            raise GeometryError(
                "point lies within tol_len of a corner of edge %d" % edge.id
            )
        return edge
    raise GeometryError("point is not on ramification set")


def canonical_chart(complex, x):
    """Chart at a point of Σ given in ambient coordinates (or as a
    BranchPoint)."""
    if isinstance(x, BranchPoint):
        x = complex.ambient(x)
    x = np.asarray(x, dtype=float)
    edge = _find_sigma_edge(complex, x)
    order = {}
    rotations = {}
    tangent = None if complex.branch_dim == 1 else _edge_direction(complex, edge)
    for i, inc in enumerate(sorted(edge.incident, key=lambda inc: inc.branch)):
        if inc.normal is None:
            raise GeometryError("degenerate facet %d of branch %d" % (inc.facet, inc.branch))
        frame = complex.branches[inc.branch].frame
        nu = frame.vector_to_ambient(inc.normal)
        rows = [nu] if tangent is None else [nu, tangent]
        order[inc.branch] = i + 1
        rotations[inc.branch] = np.vstack(rows)
    return Chart(x, edge.id, order, rotations)


def unfold_pair(complex, edge, j, k):
    """Lay branches ``j`` and ``k`` flat in one plane across ``edge``."""
    edge = _resolve_edge(complex, edge)
    if j == k:
        raise GeometryError("cannot unfold a branch onto itself")
    incident = edge.branches
    for b in (j, k):
        if b not in incident:
            raise GeometryError(
                "branch %d is not incident to ramification edge %d" % (b, edge.id)
            )
    base = complex.vertices[edge.vertex_ids[0]]
    if complex.branch_dim == 2:
        # anchor at the midpoint so charts never sit on a corner
        base = complex.vertices[list(edge.vertex_ids)].mean(axis=0)
    chart = canonical_chart(complex, base)
    return UnfoldedPair(chart, j, k, complex)


def locate(complex, point):
    """Classify a BranchPoint as interior, ramification, boundary or
    outside."""
    j = point.branch
    if not 0 <= j < len(complex.branches):
        raise StructureError("unknown branch %r" % (j,))
    branch = complex.branches[j]
    coords = np.asarray(point.coords, dtype=float)
    if not branch.contains(coords, complex.tol_planar)[0]:
        return Location("outside", j, None, coords)
    facet = _facet_containing(complex, j, coords[None, :])
    if facet is None:
        return Location("interior", j, None, coords)
    ambient = branch.frame.to_ambient(coords)
    for v in complex.boundary_vertices:
        if np.linalg.norm(complex.vertices[v] - ambient) <= complex.tol_len:
            return Location(BOUNDARY, j, None, coords)
    if facet.kind == RAMIFICATION:
        return Location(RAMIFICATION, j, facet.edge, coords)
    return Location(BOUNDARY, j, None, coords)


# -- builders ---------------------------------------------------------------


def square(size=1.0):
    """One flat square branch, every edge excluded."""
    s = float(size)
    verts = [(0, 0, 0), (s, 0, 0), (s, s, 0), (0, s, 0)]
    return LEPComplex(
        verts, [(0, 1, 2, 3)], boundary=[(0, 1), (1, 2), (2, 3), (3, 0)],
    )


def book(r=3, angles=None, width=1.0, height=1.0):
    """``r`` rectangular pages sharing the spine from (0,0,0) to
    (0,0,height).  The first local coordinate of each page is the
    distance to the spine."""
    if angles is None:
        angles = [2 * np.pi * i / r for i in range(r)]
    verts = [(0.0, 0.0, 0.0), (0.0, 0.0, float(height))]
    branches = []
    boundary = []
    for i, theta in enumerate(angles):
        c, s = width * np.cos(theta), width * np.sin(theta)
        ob, ot = len(verts), len(verts) + 1
        verts.extend([(c, s, 0.0), (c, s, float(height))])
        branches.append((0, ob, ot, 1))
        boundary.extend([(0, ob), (ob, ot), (ot, 1)])
    return LEPComplex(verts, branches, glue=[((0, 1), None)], boundary=boundary)


def dihedral(angle=np.pi / 2):
    """Two unit squares glued along the z axis at the given angle."""
    return book(2, angles=[0.0, angle])


def cube_surface(exclude_corners=True):
    """Unit cube surface; all twelve edges glued.  Corners are excluded
    unless ``exclude_corners`` is false (which is not an LEP space)."""
    verts = [(i, j, k) for i in (0, 1) for j in (0, 1) for k in (0, 1)]
    faces = [
        (0, 2, 3, 1),
        (4, 6, 7, 5),
        (0, 4, 5, 1),
        (2, 6, 7, 3),
        (0, 4, 6, 2),
        (1, 5, 7, 3),
    ]
    edges = []
    for a in range(8):
        for bit in (1, 2, 4):
            b = a | bit
            if b != a:
                edges.append(((a, b), None))
    boundary = [(v,) for v in range(8)] if exclude_corners else []
    return LEPComplex(verts, faces, glue=edges, boundary=boundary)


def network(points, segments, boundary=None):
    """Segment network (branch_dim 1).  Vertices of degree one are
    excluded; every other vertex is glued."""
    points = np.asarray(points, dtype=float)
    degree = defaultdict(int)
    for a, b in segments:
        degree[a] += 1
        degree[b] += 1
    glue = [((v,), None) for v in sorted(degree) if degree[v] >= 2]
    if boundary is None:
        boundary = [(v,) for v in sorted(degree) if degree[v] == 1]
    return LEPComplex(
        points, [tuple(s) for s in segments], glue=glue, boundary=boundary,
        branch_dim=1,
    )


def y_network():
    arms = [0.0, 2 * np.pi / 3, 4 * np.pi / 3]
    points = [(0.0, 0.0)] + [(np.cos(t), np.sin(t)) for t in arms]
    return network(points, [(0, 1), (0, 2), (0, 3)])


def extrude_network(points, segments, height=1.0):
    """Bounded truncation of ``network × R``: every segment becomes a
    vertical rectangle, every vertex of degree >= 2 a glued vertical
    edge.  Top and bottom edges and the outer edges are excluded."""
    points = np.asarray(points, dtype=float)
    if points.shape[1] != 2:
        raise StructureError("extruded networks are drawn in the plane")
    verts = []
    for p in points:
        verts.append((p[0], p[1], 0.0))
        verts.append((p[0], p[1], float(height)))
    degree = defaultdict(int)
    for a, b in segments:
        degree[a] += 1
        degree[b] += 1
    branches = []
    boundary = []
    for a, b in segments:
        branches.append((2 * a, 2 * b, 2 * b + 1, 2 * a + 1))
        boundary.append((2 * a, 2 * b))
        boundary.append((2 * a + 1, 2 * b + 1))
    glue = []
    for v in sorted(degree):
        if degree[v] >= 2:
            glue.append(((2 * v, 2 * v + 1), None))
        else:
            boundary.append((2 * v, 2 * v + 1))
    return LEPComplex(verts, branches, glue=glue, boundary=boundary)
