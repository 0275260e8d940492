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
"""Field export: CSV tables and OBJ meshes with a parallel scalar file.

Every file starts with the provenance header of
``utilities.provenance_header``.  Rows are written in node order and
floats with ``format_float``, so repeated exports of the same field are
byte identical.
"""

import numpy as np

from .dirichlet import SolutionField
from .utilities import FieldMismatch, format_float, logger, provenance_header

CSV_COLUMNS = ("node", "branch", "u1", "u2", "x", "y", "z", "value")

CSV = "csv"
MESH = "mesh"
FORMATS = (CSV, MESH)


def _header(field, params, inputs):
    merged = dict(field.metadata)
    if params:
        merged.update(params)
    return provenance_header(merged, inputs)


def node_table(graph):
    """``(branch, local, ambient)`` arrays for every node, padded to two
    local and three ambient coordinates.  A node shared by several
    branches is reported on the lowest one."""
    n = len(graph)
    branch = np.array([b[0] if b else -1 for b in graph.node_branches], dtype=int)
    local = np.zeros((n, 2))
    for j, ids in enumerate(graph.branch_nodes):
        own = ids[branch[ids] == j]
        if len(own):
            coords = graph.local(j, own)
            local[own, : coords.shape[1]] = coords
    ambient = np.zeros((n, 3))
    ambient[:, : graph.ambient.shape[1]] = graph.ambient
    return branch, local, ambient


def export_csv(field, params=None, inputs=()):
    graph = field.graph
    branch, local, ambient = node_table(graph)
    lines = [_header(field, params, inputs).rstrip("\n"), ",".join(CSV_COLUMNS)]
    for i in range(len(graph)):
        row = [str(i), str(branch[i])]
        row.extend(format_float(c) for c in local[i])
        row.extend(format_float(c) for c in ambient[i])
        row.append(format_float(field.values[i]))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _cells(graph):
    """Faces (surfaces) or line pieces (networks) as global node ids."""
    if graph.complex.branch_dim == 2:
        out = []
        for tris in graph.triangles:
            out.extend(tuple(int(i) for i in t) for t in tris)
        return out
    out = []
    for j, ids in enumerate(graph.branch_nodes):
        order = np.argsort(graph.branch_coords[j][:, 0], kind="mergesort")
        chain = ids[order].tolist()
        out.extend(zip(chain[:-1], chain[1:]))
    return out


def export_mesh(field, params=None, inputs=()):
    """Return ``(obj_text, scalar_text, warnings)``.

    Every node becomes an OBJ vertex (1-based, node order) and the scalar
    file holds one value per vertex.  Faces touching an ``inf`` node are
    skipped with a warning."""
    graph = field.graph
    header = _header(field, params, inputs)
    finite = field.finite
    warnings = []
    obj = [header.rstrip("\n")]
    for p in graph.ambient:
        coords = list(p) + [0.0] * (3 - len(p))
        obj.append("v " + " ".join(format_float(c) for c in coords))
    tag = "f" if graph.complex.branch_dim == 2 else "l"
    skipped = 0
    for cell in _cells(graph):
        if not all(finite[i] for i in cell):
            skipped += 1
            continue
        obj.append(tag + " " + " ".join(str(i + 1) for i in cell))
    if skipped:
        msg = "%d mesh element(s) touching inf nodes skipped" % skipped
        logger.warning(msg)
        warnings.append(msg)
    scalar = [header.rstrip("\n")]
    scalar.extend(format_float(v) for v in field.values)
    return "\n".join(obj) + "\n", "\n".join(scalar) + "\n", warnings


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        fp.write(text)


def export_field(field, format=CSV, path=None, params=None, inputs=()):
    """Write ``field`` and return the written paths (or, without ``path``,
    the texts).  ``mesh`` writes ``path`` plus ``path + '.scalar'``."""
    if format not in FORMATS:
        raise ValueError("unknown export format %r" % (format,))
    if format == CSV:
        texts = [export_csv(field, params, inputs)]
        paths = [path]
    else:
        obj, scalar, _warnings = export_mesh(field, params, inputs)
        texts = [obj, scalar]
        paths = [path, None if path is None else path + ".scalar"]
    if path is None:
        return texts
    for p, text in zip(paths, texts):
        _write(p, text)
    return paths


def read_field(text, graph):
    """SolutionField from CSV text written by ``export_csv``.

    The rows must describe exactly the nodes of ``graph``: same count,
    order and ambient positions."""
    rows = []
    header = None
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        cells = line.strip().split(",")
        if header is None:
            header = tuple(cells)
            if header != CSV_COLUMNS:
                raise FieldMismatch("line %d: unexpected columns %s" % (lineno, line))
            continue
        if len(cells) != len(CSV_COLUMNS):
            raise FieldMismatch("line %d: expected %d columns" % (lineno, len(CSV_COLUMNS)))
        try:
            rows.append((int(cells[0]),) + tuple(float(c) for c in cells[4:]))
        except ValueError:
            raise FieldMismatch("line %d: malformed row" % lineno)
    if len(rows) != len(graph):
        raise FieldMismatch("field has %d values, graph %d nodes" % (len(rows), len(graph)))
    data = np.array(rows)
    if not np.array_equal(data[:, 0], np.arange(len(graph))):
        raise FieldMismatch("node ids are not 0..%d in order" % (len(graph) - 1))
    ambient = np.zeros((len(graph), 3))
    ambient[:, : graph.ambient.shape[1]] = graph.ambient
    tol = 1e-9 * max(graph.params.h, graph.complex.diameter)
    offset = np.max(np.abs(data[:, 1:4] - ambient)) if len(rows) else 0.0
    if offset > tol:
        raise FieldMismatch(
            "node positions differ from the graph by %s" % format_float(offset)
        )
    return SolutionField(graph, data[:, 4], {"source": "csv"})
