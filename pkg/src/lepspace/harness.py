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
"""Numerical viscosity checks on solution fields.

Interior sites use stencil gradients.  Sites on glued edges use one-sided
gradients in each incident branch; for a pair of branches ``(j, k)``
unfolded into one plane, a test function touching the field is smooth
across the edge, so its normal slope ``s`` (measured into ``k``) is
squeezed between the one-sided normal derivatives:

    upper test functions:  d_k u <= s <= -d_j u
    lower test functions:  -d_j u <= s <= d_k u

An empty range means no such test function exists and the condition holds
vacuously.
"""

from collections import OrderedDict, namedtuple
import math

import numpy as np
from scipy.sparse.csgraph import dijkstra
from scipy.optimize import minimize_scalar

from .metric import check_field_graph
from .task import run_tasks
from .utilities import FieldMismatch, check_logger, format_float

SUB = "sub"
SUPER = "super"
LIPSCHITZ = "lipschitz"
COMPARE = "compare"
DISTANCE_BOUND = "distance-bound"

INTERIOR = "interior"
TRANSITION = "transition"

CheckRecord = namedtuple(
    "CheckRecord", ["site", "kind", "branch", "edge", "condition", "residual", "passed"]
)


class CheckReport(object):
    """Per-site records plus a summary of the worst residual per condition
    class.  ``passed`` is None when a precondition was not met."""

    def __init__(self, mode, records, tol, warnings=(), best_effort=False, status=None):
        self.mode = mode
        self.records = list(records)
        self.tol = tol
        self.warnings = list(warnings)
        self.best_effort = best_effort
        self.status = status

    @property
    def passed(self):
        if self.status is not None:
            return None
        return all(r.passed for r in self.records)

    @property
    def summary(self):
        out = OrderedDict()
        for r in self.records:
            key = "%s/%s" % (r.condition, r.kind)
            if key not in out or r.residual > out[key]:
                out[key] = r.residual
        return out

    def failures(self):
        return [r for r in self.records if not r.passed]

    def worst(self, kind=None):
        pool = [r for r in self.records if kind is None or r.kind == kind]
        if not pool:
            return -math.inf
        return max(r.residual for r in pool)

    def format(self):
        lines = []
        for r in self.records:
            lines.append(
                "site=%d kind=%s branch=%s edge=%s condition=%s residual=%s %s"
                % (
                    r.site,
                    r.kind,
                    r.branch,
                    r.edge,
                    r.condition,
                    format_float(r.residual),
                    "pass" if r.passed else "FAIL",
                )
            )
        lines.append("# summary mode=%s tol=%s" % (self.mode, format_float(self.tol)))
        for key, value in self.summary.items():
            lines.append("# max %s = %s" % (key, format_float(value)))
        if self.best_effort:
            lines.append("# transition supersolution verdicts are best-effort")
        for w in self.warnings:
            lines.append("# warning: %s" % w)
        if self.status is not None:
            verdict = self.status
        else:
            verdict = "pass" if self.passed else "fail"
        lines.append("# verdict %s" % verdict)
        return "\n".join(lines) + "\n"


# -- gradients --------------------------------------------------------------


def _least_squares(offsets, diffs):
    """Gradient fitting ``diffs ~ offsets @ grad`` with weights 1/|offset|."""
    lengths = np.linalg.norm(offsets, axis=1)
    ok = lengths > 0
    offsets, diffs, lengths = offsets[ok], diffs[ok], lengths[ok]
    if len(offsets) < offsets.shape[1]:
        return None
    w = np.sqrt(1.0 / lengths)
    a = offsets * w[:, None]
    if np.linalg.matrix_rank(a) < offsets.shape[1]:
        return None
    return np.linalg.lstsq(a, diffs * w, rcond=None)[0]


class _Stencils(object):
    """Neighbourhoods of graph nodes restricted to one branch."""

    def __init__(self, field):
        self.field = field
        self.graph = field.graph
        self.radius = min(1.5 * self.graph.params.h, self.graph.params.radius)

    def ring(self, i, j, radius=None):
        graph = self.graph
        radius = self.radius if radius is None else radius
        nbrs = graph.neighbors(i)
        members = graph.branch_nodes[j]
        pos = np.searchsorted(members, nbrs)
        pos = np.clip(pos, 0, len(members) - 1)
        nbrs = nbrs[members[pos] == nbrs]
        if not len(nbrs):
            return nbrs
        dist = np.linalg.norm(graph.ambient[nbrs] - graph.ambient[i], axis=1)
        nbrs = nbrs[dist <= radius * (1 + 1e-9)]
        return nbrs[np.isfinite(self.field.values[nbrs])]

    def gradient(self, i, j):
        nbrs = self.ring(i, j)
        if not len(nbrs):
            return None
        graph = self.graph
        centre = graph.local(j, [i])[0]
        offsets = graph.local(j, nbrs) - centre
        diffs = self.field.values[nbrs] - self.field.values[i]
        return _least_squares(offsets, diffs)

    def steepest_descent(self, i, j):
        """Largest one-sided descent rate over all graph neighbours and
        the covector it defines."""
        graph = self.graph
        nbrs = self.ring(i, j, radius=graph.params.radius)
        if not len(nbrs):
            return None
        centre = graph.local(j, [i])[0]
        offsets = graph.local(j, nbrs) - centre
        lengths = np.linalg.norm(offsets, axis=1)
        slopes = (self.field.values[i] - self.field.values[nbrs]) / lengths
        k = int(np.argmax(slopes))
        rate = max(float(slopes[k]), 0.0)
        return -rate * offsets[k] / lengths[k]


def _resolve_tol(tol, problem, h):
    if tol is None or tol == "auto":
        return 10.0 * h * (1.0 + problem.speed())
    return float(tol)


def _excluded(graph, exclude, radius):
    """Node mask for sites near the excluded points (ids or BranchPoints)."""
    mask = np.zeros(len(graph), dtype=bool)
    for item in exclude:
        if isinstance(item, (int, np.integer)):
            centre = graph.ambient[int(item)]
        else:
            centre = graph.complex.ambient(item)
        mask |= np.linalg.norm(graph.ambient - centre, axis=1) <= radius
    return mask


def _sites(field, exclude):
    """Interior sites and edge sites of a field, in node order."""
    graph = field.graph
    cx = graph.complex
    h = graph.params.h
    skip = _excluded(graph, exclude, 2 * h) | ~field.finite | graph.boundary
    interior = []
    transition = []
    corners = cx.vertices[sorted(cx.boundary_vertices)] if cx.branch_dim == 2 else None
    for i in range(len(graph)):
        if skip[i]:
            continue
        if graph.ram_edge[i] >= 0:
            if corners is not None and len(corners):
                if np.min(np.linalg.norm(corners - graph.ambient[i], axis=1)) < 2 * h:
                    continue
            transition.append(i)
        elif len(graph.node_branches[i]) == 1:
            interior.append(i)
    return interior, transition


def _chart_directions(graph, i, j):
    """Inward normal and edge tangent at node ``i`` in branch ``j``
    local coordinates."""
    cx = graph.complex
    edge = cx.ram_edges[graph.ram_edge[i]]
    inc = edge.incidence_for(j)
    if cx.branch_dim == 1:
        return inc.normal, None
    ends = cx.vertices[list(edge.vertex_ids)]
    tangent = (ends[1] - ends[0]) / np.linalg.norm(ends[1] - ends[0])
    return inc.normal, cx.branches[j].frame.vector_to_local(tangent)


def _one_sided(stencils, i):
    """Normal derivative into each incident branch and the mean tangential
    slope at an edge node."""
    graph = stencils.graph
    edge = graph.complex.ram_edges[graph.ram_edge[i]]
    normal = {}
    tangential = []
    for inc in edge.incident:
        j = inc.branch
        grad = stencils.gradient(i, j)
        if grad is None:
            return None
        nu, tau = _chart_directions(graph, i, j)
        normal[j] = float(np.dot(grad, nu))
        if tau is not None:
            tangential.append(float(np.dot(grad, tau)))
    return normal, (float(np.mean(tangential)) if tangential else None)


def _chart_covector(graph, i, j, s, b):
    nu, tau = _chart_directions(graph, i, j)
    p = s * nu
    if tau is not None:
        p = p + b * tau
    return p


def _slopes(lo, hi, convex):
    if convex:
        return [lo, hi] if hi > lo else [lo]
    return list(np.linspace(lo, hi, 9))


def transition_residual(field, problem, i, j, k, condition=SUB):
    """Residual of the ``(j, k)`` transition condition at edge node ``i``.

    Returns -inf when no admissible test function exists."""
    stencils = _Stencils(field)
    measured = _one_sided(stencils, i)
    if measured is None:
        return -math.inf
    normal, b = measured
    return _pair_residual(field.graph, problem, i, j, k, normal, b, condition)


def _pair_residual(graph, problem, i, j, k, normal, b, condition):
    H = problem.hamiltonian
    if condition == SUB:
        lo, hi = normal[k], -normal[j]
    else:
        lo, hi = -normal[j], normal[k]
    if lo > hi:
        return -math.inf
    xj = graph.local(j, [i])[0]
    b = b if b is not None else 0.0

    def value(s):
        # the slope is measured towards k, i.e. against the inward normal of j
        return H.eval(j, xj, _chart_covector(graph, i, j, -s, b))

    slopes = _slopes(lo, hi, H.convex)
    if condition == SUB:
        # a convex H peaks at an end of the slab
        return max(value(s) for s in slopes)
    if hi > lo:
        res = minimize_scalar(
            value, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10}
        )
        slopes.append(float(res.x))
    return -min(value(s) for s in slopes)


def _interior_batch(field, problem, sites, condition, tol):
    stencils = _Stencils(field)
    graph = field.graph
    H = problem.hamiltonian
    out = []
    for i in sites:
        j = graph.node_branches[i][0]
        if condition == SUB:
            p = stencils.gradient(i, j)
            if p is None:
                continue
            residual = H.eval(j, graph.local(j, [i])[0], p)
        else:
            p = stencils.steepest_descent(i, j)
            if p is None:
                continue
            residual = -H.eval(j, graph.local(j, [i])[0], p)
        out.append(CheckRecord(i, INTERIOR, j, None, condition, residual, residual <= tol))
    return out


def _transition_batch(field, problem, sites, condition, tol):
    stencils = _Stencils(field)
    graph = field.graph
    out = []
    for i in sites:
        measured = _one_sided(stencils, i)
        if measured is None:
            continue
        normal, b = measured
        branches = sorted(normal)
        if condition == SUB:
            residual = max(
                _pair_residual(graph, problem, i, j, k, normal, b, SUB)
                for j in branches
                for k in branches
                if j != k
            )
        else:
            # for every j some k != j must satisfy the classical test
            residual = max(
                min(
                    _pair_residual(graph, problem, i, j, k, normal, b, SUPER)
                    for k in branches
                    if k != j
                )
                for j in branches
            )
        edge = int(graph.ram_edge[i])
        out.append(
            CheckRecord(i, TRANSITION, None, edge, condition, residual, residual <= tol)
        )
    return out


def _batches(sites, size=256):
    return [sites[n : n + size] for n in range(0, len(sites), size)]


def _check(field, problem, tol, exclude, condition, interior_only=False):
    graph = problem.graph
    check_field_graph(field, graph)
    tol = _resolve_tol(tol, problem, graph.params.h)
    interior, transition = _sites(field, exclude)
    tasks = [
        (_interior_batch, field, problem, batch, condition, tol)
        for batch in _batches(interior)
    ]
    if not interior_only:
        tasks.extend(
            (_transition_batch, field, problem, batch, condition, tol)
            for batch in _batches(transition)
        )
    records = [r for batch in run_tasks(tasks, problem.threads) for r in batch]
    for r in records:
        if not r.passed:
            check_logger.debug(
                "%s %s site %d residual %s", condition, r.kind, r.site,
                format_float(r.residual),
            )
    warnings = []
    if not records:
        msg = "no site could be checked"
        check_logger.warning(msg)
        warnings.append(msg)
    report = CheckReport(
        condition,
        records,
        tol,
        warnings,
        best_effort=(condition == SUPER and not interior_only and bool(transition)),
    )
    check_logger.info(
        "%s check: %d sites, worst residual %s, tol %s",
        condition,
        len(records),
        format_float(report.worst()),
        format_float(tol),
    )
    return report


def check_subsolution(field, problem, tol="auto", exclude=()):
    """Subsolution test at interior sites and every edge site."""
    return _check(field, problem, tol, exclude, SUB)


def check_supersolution(field, problem, tol="auto", exclude=(), interior_only=False):
    """Supersolution test.  At edge sites only the measured tangential
    slope is tried, so those verdicts are best-effort."""
    return _check(field, problem, tol, exclude, SUPER, interior_only)


def check_lipschitz(field, graph, C, h=None):
    """``|u(a) - u(b)| <= C * |a - b|`` over all graph edges."""
    check_field_graph(field, graph)
    h = graph.params.h if h is None else h
    a, b = graph.edge_pairs[:, 0], graph.edge_pairs[:, 1]
    ok = np.isfinite(field.values[a]) & np.isfinite(field.values[b])
    ratios = np.abs(field.values[a] - field.values[b])[ok] / graph.edge_lengths[ok]
    limit = C * (1.0 + 10.0 * h)
    records = []
    if len(ratios):
        k = int(np.argmax(ratios))
        worst = float(ratios[k])
        site = int(a[ok][k])
        records.append(
            CheckRecord(site, "edge", None, None, LIPSCHITZ, worst, worst <= limit)
        )
    return CheckReport(LIPSCHITZ, records, limit)


def compare_fields(u_sub, v_super, boundary_ordering_ok=None, tol=1e-9):
    """Comparison principle: ``u <= v`` on the boundary implies it
    everywhere."""
    if u_sub.graph is not v_super.graph:
        try:
            check_field_graph(u_sub, v_super.graph)
        except FieldMismatch:
            raise FieldMismatch("fields live on different graphs")
    graph = u_sub.graph
    gap = u_sub.values - v_super.values
    if boundary_ordering_ok is None:
        edge_gap = gap[graph.boundary]
        boundary_ordering_ok = not len(edge_gap) or float(np.max(edge_gap)) <= tol
    if not boundary_ordering_ok:
        return CheckReport(
            COMPARE, [], tol, ["u > v on the boundary"], status="precondition unmet",
        )
    with np.errstate(invalid="ignore"):
        finite = np.isfinite(gap)
    records = []
    if np.any(finite):
        k = int(np.argmax(np.where(finite, gap, -math.inf)))
        records.append(
            CheckRecord(k, "node", None, None, COMPARE, float(gap[k]), gap[k] <= tol)
        )
    return CheckReport(COMPARE, records, tol)


def check_distance_bound(field, graph, pairs=None, n_pairs=256, seed=0, tol=None):
    """``u(x) - u(y) <= S(y, x)`` on sampled node pairs."""
    check_field_graph(field, graph)
    finite = np.nonzero(field.finite)[0]
    if pairs is None:
        rng = np.random.default_rng(seed)
        sources = rng.choice(finite, size=min(len(finite), 16), replace=False)
        targets = rng.choice(finite, size=min(len(finite), n_pairs), replace=False)
        pairs = [(int(x), int(y)) for y in sources for x in targets if x != y]
    if tol is None:
        tol = 1e-9 + graph.params.h * _field_speed(field, graph)
    ys = sorted({y for _x, y in pairs})
    dist = dijkstra(graph.matrix, directed=True, indices=ys)
    row = {y: r for r, y in enumerate(ys)}
    records = []
    for x, y in pairs:
        excess = field.values[x] - field.values[y] - dist[row[y], x]
        if not np.isfinite(excess):
            continue
        records.append(
            CheckRecord(x, "pair", None, y, DISTANCE_BOUND, float(excess), excess <= tol)
        )
    return CheckReport(DISTANCE_BOUND, records, tol)


def _field_speed(field, graph):
    return graph.hamiltonian.max_speed()
