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
"""Dirichlet problems solved by the representation formula

    u(x) = min { g(y) + S(y, x) : y in the excluded boundary }

evaluated on the metric graph.
"""

from collections import OrderedDict, namedtuple
import itertools
import math

import numpy as np
from scipy.optimize import minimize
from scipy.sparse.csgraph import dijkstra

from .hamiltonian import EIKONAL, branch_samples
from .metric import MeshParams, build_metric_graph, check_field_graph, distance_field
from .task import run_tasks
from .utilities import (
    FieldMismatch,
    HamiltonianError,
    HypothesisError,
    StructureError,
    format_float,
    logger,
)

PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"

# boundary pairs above which the compatibility check subsamples
MAX_PAIRS = 10000


class SolutionField(object):
    """Scalar values at every node of a metric graph.

    Nodes on glued edges are shared, so the field is single valued across
    branches.  Unreachable nodes hold ``inf``."""

    def __init__(self, graph, values, metadata=None, warnings=()):
        values = np.array(values, dtype=float)
        if values.shape != (len(graph),):
            raise FieldMismatch(
                "field has %d values, graph %d nodes" % (values.size, len(graph))
            )
        values.setflags(write=False)
        self.graph = graph
        self.values = values
        self.metadata = OrderedDict(graph.provenance())
        if metadata:
            self.metadata.update(metadata)
        self.warnings = list(warnings)

    def __len__(self):
        return len(self.values)

    @property
    def finite(self):
        return np.isfinite(self.values)

    def replace(self, values, **metadata):
        meta = OrderedDict(self.metadata)
        meta.update(metadata)
        return SolutionField(self.graph, values, meta, self.warnings)

    def scaled(self, factor):
        return self.replace(self.values * factor, scaled=format_float(factor))

    def shifted(self, constant):
        return self.replace(self.values + constant, shifted=format_float(constant))

    def evaluate(self, point):
        """Value at a BranchPoint, by the same min-plus rule as nodes."""
        linked = self.graph.attach(point)
        if isinstance(linked, int):
            return float(self.values[linked])
        ids, _to_node, from_node = linked
        return float(np.min(self.values[ids] + from_node))

    def __repr__(self):
        return "<SolutionField nodes=%d finite=%d>" % (
            len(self.values),
            int(self.finite.sum()),
        )


# -- boundary data ----------------------------------------------------------


class ConstantData(object):
    kind = "const"

    def __init__(self, value):
        self.value = float(value)

    def values(self, graph, ids):
        return np.full(len(ids), self.value)

    def spec(self):
        return "const %s" % format_float(self.value)


class VertexSamples(object):
    """Per-vertex values, linear along boundary facets."""

    kind = "samples"

    def __init__(self, samples):
        self.samples = {int(k): float(v) for k, v in samples.items()}

    def _at_vertex(self, v):
        try:
            return self.samples[v]
        except KeyError:
            raise StructureError("no boundary value for vertex %d" % v)

    def values(self, graph, ids):
        out = np.empty(len(ids))
        vertices = graph.complex.vertices
        for n, i in enumerate(ids):
            v = graph.vertex[i]
            if v >= 0:
                out[n] = self._at_vertex(v)
                continue
            facets = [k for k in graph.node_facets[i] if len(k) == 2]
            if not facets:
                raise StructureError("boundary node %d lies on no facet" % i)
            a, b = sorted(sorted(facets, key=sorted)[0])
            pa, pb = vertices[a], vertices[b]
            t = np.linalg.norm(graph.ambient[i] - pa) / np.linalg.norm(pb - pa)
            out[n] = (1 - t) * self._at_vertex(a) + t * self._at_vertex(b)
        return out

    def spec(self):
        return "samples " + " ".join(
            "%d=%s" % (k, format_float(v)) for k, v in sorted(self.samples.items())
        )


class CallableData(object):
    kind = "callable"

    def __init__(self, func):
        self.func = func

    def values(self, graph, ids):
        return np.array([float(self.func(graph.ambient[i])) for i in ids])

    def spec(self):
        return "callable %s" % getattr(self.func, "__name__", repr(self.func))


def boundary_data(g):
    if hasattr(g, "values") and hasattr(g, "spec"):
        return g
    if isinstance(g, (int, float)):
        return ConstantData(g)
    if isinstance(g, dict):
        return VertexSamples(g)
    if callable(g):
        return CallableData(g)
    raise ValueError("unsupported boundary data %r" % (g,))


# -- the problem ------------------------------------------------------------


class DirichletProblem(object):
    """``H(x, Du) = 0`` in the complex, ``u = g`` on its excluded
    boundary."""

    def __init__(
        self,
        complex,
        hamiltonian,
        g=0.0,
        params=None,
        tol_c=1e-9,
        override_h7=False,
        override_h8=False,
        n_samples=16,
        seed=0,
        threads=1,
    ):
        if hamiltonian.complex is not complex:
            raise StructureError("Hamiltonian family belongs to another complex")
        self.complex = complex
        self.hamiltonian = hamiltonian
        self.g = boundary_data(g)
        self.params = params if params is not None else MeshParams()
        self.tol_c = float(tol_c)
        self.override_h7 = bool(override_h7)
        self.override_h8 = bool(override_h8)
        self.n_samples = int(n_samples)
        self.seed = int(seed)
        self.threads = int(threads)
        self._graph = None

    @property
    def graph(self):
        if self._graph is None:
            self._graph = build_metric_graph(self.complex, self.hamiltonian, self.params)
        return self._graph

    def use_graph(self, graph):
        if graph.complex is not self.complex:
            raise FieldMismatch("graph was built for another complex")
        self._graph = graph
        return self

    def boundary_values(self, graph=None):
        graph = graph if graph is not None else self.graph
        ids = graph.boundary_nodes
        if not len(ids):
            raise StructureError("complex has no boundary nodes")
        values = self.g.values(graph, ids)
        if not np.all(np.isfinite(values)):
            raise ValueError("boundary data must be finite")
        return ids, values

    def speed(self):
        return self.hamiltonian.max_speed(self.n_samples)


HypothesisReport = namedtuple(
    "HypothesisReport", ["name", "status", "magnitude", "location", "warnings"]
)


def check_h7(problem):
    """Existence of a strict subsolution, in its ``H(x, 0) < 0`` form."""
    H = problem.hamiltonian
    cx = problem.complex
    warnings = []
    if H.kind == EIKONAL:
        worst = (math.inf, None)
        for branch in cx.branches:
            pts = branch_samples(branch, problem.n_samples)
            f = H.weight(branch.id, pts)
            i = int(np.argmin(f))
            if f[i] < worst[0]:
                worst = (float(f[i]), (branch.id, tuple(pts[i])))
        status = PASS if worst[0] > 0 else FAIL
        return HypothesisReport("H7", status, worst[0], worst[1], warnings)

    highest = (-math.inf, None)
    blocked = None
    for branch in cx.branches:
        pts = branch_samples(branch, max(2, problem.n_samples // 4))
        zero = np.zeros(branch.dim)
        for x in pts:
            h0 = H.eval(branch.id, x, zero)
            if h0 > highest[0]:
                highest = (h0, (branch.id, tuple(x)))
            if h0 >= 0 and blocked is None:
                res = minimize(
                    lambda p, x=x, j=branch.id: H.eval(j, x, p),
                    zero,
                    method="L-BFGS-B",
                    bounds=[(-8 * H.R_p, 8 * H.R_p)] * branch.dim,
                )
                if res.fun >= 0:
                    blocked = (float(res.fun), (branch.id, tuple(x)))
    if highest[0] < 0:
        return HypothesisReport("H7", PASS, highest[0], highest[1], warnings)
    if blocked is not None:
        return HypothesisReport("H7", FAIL, blocked[0], blocked[1], warnings)
    msg = "H(x, 0) = %s >= 0 at %s; strict subsolution not certified" % (
        format_float(highest[0]),
        highest[1],
    )
    logger.warning(msg)
    warnings.append(msg)
    return HypothesisReport("H7", INCONCLUSIVE, highest[0], highest[1], warnings)


def check_boundary_compat(problem, graph=None):
    """``g(x) - g(y) <= S(y, x)`` over boundary node pairs."""
    graph = graph if graph is not None else problem.graph
    ids, g = problem.boundary_values(graph)
    rng = np.random.default_rng(problem.seed)
    if len(ids) ** 2 <= MAX_PAIRS:
        rows = np.arange(len(ids))
    else:
        count = max(1, MAX_PAIRS // len(ids))
        rows = np.sort(rng.choice(len(ids), size=count, replace=False))
    dist = dijkstra(graph.matrix, directed=True, indices=ids[rows])[:, ids]
    excess = g[None, :] - g[rows][:, None] - dist
    for r, row in enumerate(rows):
        excess[r, row] = -math.inf
    excess[~np.isfinite(dist)] = -math.inf
    flat = int(np.argmax(excess))
    r, c = divmod(flat, len(ids))
    worst = float(excess[r, c])
    slack = graph.params.h * problem.speed()
    tol = problem.tol_c + slack
    location = (int(ids[rows[r]]), int(ids[c]))
    warnings = []
    if worst <= problem.tol_c:
        status = PASS
    elif worst <= tol:
        status = PASS
        msg = "boundary data compatible only within discretization slack: %s at %s" % (
            format_float(worst),
            location,
        )
        logger.warning(msg)
        warnings.append(msg)
    else:
        status = FAIL
    return HypothesisReport("H8", status, worst, location, warnings)


def _guard(problem):
    H = problem.hamiltonian
    if not H.convex:
        raise HamiltonianError("non-convex Hamiltonians are not supported")
    warnings = []
    if not H.strictly_convex:
        msg = "Hamiltonian is convex but not strictly convex; uniqueness is not guaranteed"
        logger.warning(msg)
        warnings.append(msg)
    h7 = check_h7(problem)
    warnings.extend(h7.warnings)
    if h7.status == FAIL:
        if not problem.override_h7:
            raise HypothesisError(
                "H7 fails: %s at %s" % (format_float(h7.magnitude), h7.location)
            )
        warnings.append("H7 overridden")
    h8 = check_boundary_compat(problem)
    warnings.extend(h8.warnings)
    if h8.status == FAIL:
        if not problem.override_h8:
            raise HypothesisError(
                "H8 fails: g(x) - g(y) - S(y, x) = %s at nodes %s"
                % (format_float(h8.magnitude), h8.location)
            )
        warnings.append("H8 overridden")
    return h7, h8, warnings


def _metadata(problem, h7, h8):
    meta = OrderedDict()
    meta["g"] = problem.g.spec()
    meta["seed"] = problem.seed
    meta["h7"] = h7.status
    meta["h8"] = h8.status
    meta["override_h7"] = problem.override_h7
    meta["override_h8"] = problem.override_h8
    return meta


def _report_unreachable(values, warnings):
    missing = int(np.sum(~np.isfinite(values)))
    if missing:
        msg = "%d node(s) not connected to the boundary set to inf" % missing
        logger.warning(msg)
        warnings.append(msg)


def solve_dirichlet(problem):
    """Solution by the representation formula, one multi-source run."""
    h7, h8, warnings = _guard(problem)
    graph = problem.graph
    ids, g = problem.boundary_values(graph)
    field = distance_field(graph, zip(ids.tolist(), g.tolist()))
    _report_unreachable(field.values, warnings)
    return SolutionField(graph, field.values, _metadata(problem, h7, h8), warnings)


def _chunk_minimum(matrix, sources, offsets):
    dist = dijkstra(matrix, directed=True, indices=sources)
    return np.min(dist + offsets[:, None], axis=0)


def solve_dirichlet_per_source(problem, chunk=64):
    """Same field as solve_dirichlet, reduced from independent
    single-source runs."""
    h7, h8, warnings = _guard(problem)
    graph = problem.graph
    ids, g = problem.boundary_values(graph)
    tasks = [
        (_chunk_minimum, graph.matrix, ids[i : i + chunk], g[i : i + chunk])
        for i in range(0, len(ids), chunk)
    ]
    partial = run_tasks(tasks, threads=problem.threads)
    values = np.minimum.reduce(partial)
    _report_unreachable(values, warnings)
    meta = _metadata(problem, h7, h8)
    meta["reduction"] = "per-source"
    return SolutionField(graph, values, meta, warnings)


def lower_envelope(fields):
    """Pointwise minimum of fields on one graph."""
    fields = list(fields)
    if not fields:
        raise ValueError("lower_envelope needs at least one field")
    graph = fields[0].graph
    for field in fields[1:]:
        check_field_graph(field, graph)
    values = np.minimum.reduce([f.values for f in fields])
    warnings = list(itertools.chain.from_iterable(f.warnings for f in fields))
    return SolutionField(graph, values, {"envelope": len(fields)}, warnings)


def theta_blend(field, theta, psi=0.0):
    """``theta * u + (1 - theta) * psi`` for a constant ``psi``."""
    theta = float(theta)
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    with np.errstate(invalid="ignore"):
        values = theta * field.values + (1.0 - theta) * psi
    values = np.where(np.isnan(values), psi, values)
    return field.replace(values, theta=format_float(theta), psi=format_float(psi))
