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
"""Complex file (.lep) parser

The format is line oriented UTF-8 text: ``key = value`` lines grouped
in ``[section]`` blocks, ``#`` starts a comment::

    version = 1
    ambient_dim = 3
    branch_dim = 2

    [vertices]
    0 = 0 0 0
    1 = 1 0 0
    ...

    [branches]
    0 = 0 1 2 3

    [glue]
    0 = 0 1 : 0 1 2          # vertex ids : incident branches

    [boundary]
    facets = 1 2, 2 3        # facets, comma separated
    points = 0 1             # excluded corner vertices

    [field f]
    * = const 1              # default for every branch
    2 = poly 1 0 0, 0.5 2 0  # coef and exponents, comma separated terms
    3 = samples              # values from [samples f]

    [samples f]
    0 = 1.5

    [field g]
    * = const 0

Parsing checks structure only (syntax, ids, references); the geometric
axioms are checked by ``complex.validate_complex``.
"""

from collections import OrderedDict

from .complex import LEPComplex
from .dirichlet import ConstantData, VertexSamples
from .hamiltonian import ConstantField, PolynomialField, SampledField
from .utilities import EXIT_USAGE, LEPError, format_float, sha256_text

FORMAT_VERSION = 1

HEADER_KEYS = ("version", "ambient_dim", "branch_dim")
FIELD_NAMES = ("f", "g")


class ParsingError(LEPError):
    code = EXIT_USAGE
    reason = "Parse error"

    def __init__(self, body, line=0, column=0):
        super(ParsingError, self).__init__(body, line=line, column=column)

    def __str__(self):
        return "%s: line %d, column %d: %s" % (
            self.reason,
            self.line,
            self.column,
            self.body,
        )


def _join(values):
    return " ".join(str(v) for v in values)


class ComplexFile(object):
    """In-memory form of a .lep file."""

    def __init__(self):
        self.version = FORMAT_VERSION
        self.ambient_dim = None
        self.branch_dim = None
        self.vertices = OrderedDict()
        self.branches = OrderedDict()
        self.glue = OrderedDict()
        self.boundary_facets = []
        self.boundary_points = []
        self.fields = OrderedDict()
        self.samples = OrderedDict()
        self.text_sha256 = None

    def to_complex(self, tol_rel=1e-9):
        return LEPComplex(
            [self.vertices[k] for k in sorted(self.vertices)],
            [self.branches[k] for k in sorted(self.branches)],
            glue=[(ids, inc or None) for ids, inc in (self.glue[k] for k in sorted(self.glue))],
            boundary=list(self.boundary_facets) + [(v,) for v in self.boundary_points],
            ambient_dim=self.ambient_dim,
            branch_dim=self.branch_dim,
            tol_rel=tol_rel,
        )

    def _field(self, name):
        entries = self.fields.get(name)
        if not entries:
            return None
        return entries

    def weights(self):
        """Weight fields of ``f`` keyed by branch id (``"*"`` default), or
        None when the file has no ``[field f]``."""
        entries = self._field("f")
        if entries is None:
            return None
        out = {}
        for key, spec in entries.items():
            out[key] = field_from_spec(spec, self.samples.get("f"), weight=True)
        return out

    def boundary_data(self):
        entries = self._field("g")
        if entries is None:
            return None
        spec = entries.get("*")
        if spec is None or len(entries) > 1:
            raise ParsingError("[field g] takes a single '*' entry")
        return field_from_spec(spec, self.samples.get("g"), weight=False)

    def serialize(self):
        lines = [
            "version = %d" % self.version,
            "ambient_dim = %d" % self.ambient_dim,
            "branch_dim = %d" % self.branch_dim,
            "",
            "[vertices]",
        ]
        for k, coords in self.vertices.items():
            lines.append("%d = %s" % (k, _join(format_float(c) for c in coords)))
        lines.extend(["", "[branches]"])
        for k, loop in self.branches.items():
            lines.append("%d = %s" % (k, _join(loop)))
        if self.glue:
            lines.extend(["", "[glue]"])
            for k, (ids, incident) in self.glue.items():
                lines.append("%d = %s : %s" % (k, _join(ids), _join(incident)))
        if self.boundary_facets or self.boundary_points:
            lines.extend(["", "[boundary]"])
            if self.boundary_facets:
                lines.append(
                    "facets = %s" % ", ".join(_join(f) for f in self.boundary_facets)
                )
            if self.boundary_points:
                lines.append("points = %s" % _join(self.boundary_points))
        for name, entries in self.fields.items():
            lines.extend(["", "[field %s]" % name])
            for key, spec in entries.items():
                lines.append("%s = %s" % (key, spec))
        for name, values in self.samples.items():
            lines.extend(["", "[samples %s]" % name])
            for k, v in values.items():
                lines.append("%d = %s" % (k, format_float(v)))
        return "\n".join(lines) + "\n"


class ComplexParser(object):
    """Collects a .lep file line by line.

    The parser is stateful: ``section`` is the current ``[section]`` and
    ``lineno`` the line being read, so every error carries its location.
    """

    section = None
    lineno = 0

    def __init__(self):
        self.result = ComplexFile()
        self.seen_header = set()
        # (vertex id, line, column) of every vertex reference
        self.references = []

    def error(self, message, column=1):
        raise ParsingError(message, self.lineno, column)

    def parse(self, text):
        if isinstance(text, bytes):
            try:
                text = text.decode("utf-8")
            except UnicodeDecodeError as e:
                raise ParsingError("not UTF-8: %s" % e)
        self.result.text_sha256 = sha256_text(text)
        for self.lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].rstrip()
            if not line.strip():
                continue
            indent = len(line) - len(line.lstrip())
            line = line.strip()
            if line.startswith("["):
                self.start_section(line, indent + 1)
                continue
            if "=" not in line:
                self.error("expected 'key = value'", indent + 1)
            key, value = line.split("=", 1)
            vcol = indent + len(key) + 2 + (len(value) - len(value.lstrip()))
            self.received(key.strip(), value.strip(), indent + 1, vcol)
        self.lineno += 1
        self.finish()
        return self.result

    def start_section(self, line, column):
        if not line.endswith("]"):
            self.error("unterminated section header", column)
        name = line[1:-1].split()
        if name == ["vertices"] or name == ["branches"] or name == ["glue"]:
            self.section = name[0]
        elif name == ["boundary"]:
            self.section = "boundary"
        elif len(name) == 2 and name[0] in ("field", "samples"):
            if name[1] not in FIELD_NAMES:
                self.error("unknown field %r" % name[1], column + len(name[0]) + 2)
            table = self.result.fields if name[0] == "field" else self.result.samples
            if name[1] in table:
                self.error("duplicate section [%s]" % " ".join(name), column)
            table[name[1]] = OrderedDict()
            self.section = tuple(name)
        else:
            self.error("unknown section [%s]" % " ".join(name), column)

    def received(self, key, value, kcol, vcol):
        if self.section is None:
            self.header(key, value, kcol, vcol)
        elif self.section == "vertices":
            idx = self.index(key, kcol)
            if idx in self.result.vertices:
                self.error("duplicate vertex id %d" % idx, kcol)
            coords = tuple(self.numbers(value, vcol))
            if len(coords) != self.result.ambient_dim:
                self.error(
                    "vertex %d has %d coordinates, expected %d"
                    % (idx, len(coords), self.result.ambient_dim or 0),
                    vcol,
                )
            self.result.vertices[idx] = coords
        elif self.section == "branches":
            idx = self.index(key, kcol)
            if idx in self.result.branches:
                self.error("duplicate branch id %d" % idx, kcol)
            self.result.branches[idx] = tuple(self.vertex_refs(value, vcol))
        elif self.section == "glue":
            idx = self.index(key, kcol)
            if idx in self.result.glue:
                self.error("duplicate glue id %d" % idx, kcol)
            if ":" not in value:
                self.error("expected 'vertex ids : branch ids'", vcol)
            left, right = value.split(":", 1)
            ids = tuple(self.vertex_refs(left, vcol))
            incident = tuple(self.integers(right, vcol + len(left) + 1))
            self.result.glue[idx] = (ids, incident)
        elif self.section == "boundary":
            if key == "facets":
                col = vcol
                for item in value.split(","):
                    facet = tuple(self.vertex_refs(item, col))
                    if not facet:
                        self.error("empty facet", col)
                    self.result.boundary_facets.append(facet)
                    col += len(item) + 1
            elif key == "points":
                self.result.boundary_points.extend(self.vertex_refs(value, vcol))
            else:
                self.error("unknown boundary key %r" % key, kcol)
        elif self.section[0] == "field":
            entries = self.result.fields[self.section[1]]
            if key != "*":
                key = self.index(key, kcol)
            if key in entries:
                self.error("duplicate field entry %s" % key, kcol)
            try:
                field_from_spec(value, {}, weight=self.section[1] == "f", check=False)
            except ValueError as e:
                self.error(str(e), vcol)
            entries[key] = " ".join(value.split())
        else:
            samples = self.result.samples[self.section[1]]
            idx = self.index(key, kcol)
            if idx in samples:
                self.error("duplicate sample for vertex %d" % idx, kcol)
            numbers = self.numbers(value, vcol)
            if len(numbers) != 1:
                self.error("expected one value", vcol)
            samples[idx] = numbers[0]

    def header(self, key, value, kcol, vcol):
        if key not in HEADER_KEYS:
            self.error("unknown key %r" % key, kcol)
        if key in self.seen_header:
            self.error("duplicate key %r" % key, kcol)
        self.seen_header.add(key)
        number = self.index(value, vcol)
        if key == "version":
            if number != FORMAT_VERSION:
                self.error("unsupported version %d" % number, vcol)
        setattr(self.result, key, number)

    def index(self, token, column):
        try:
            value = int(token)
        except ValueError:
            self.error("expected an integer, got %r" % token, column)
        if value < 0:
            self.error("negative id %d" % value, column)
        return value

    def integers(self, text, column):
        out = []
        for token, col in _tokens(text, column):
            out.append(self.index(token, col))
        return out

    def vertex_refs(self, text, column):
        out = []
        for token, col in _tokens(text, column):
            v = self.index(token, col)
            self.references.append((v, self.lineno, col))
            out.append(v)
        return out

    def numbers(self, text, column):
        out = []
        for token, col in _tokens(text, column):
            try:
                out.append(float(token))
            except ValueError:
                self.error("expected a number, got %r" % token, col)
        return out

    def finish(self):
        res = self.result
        for key in ("ambient_dim", "branch_dim"):
            if getattr(res, key) is None:
                self.error("missing key %r" % key)
        if sorted(res.vertices) != list(range(len(res.vertices))):
            self.error("vertex ids must be 0..%d" % (len(res.vertices) - 1))
        if sorted(res.branches) != list(range(len(res.branches))):
            self.error("branch ids must be 0..%d" % (len(res.branches) - 1))
        if sorted(res.glue) != list(range(len(res.glue))):
            self.error("glue ids must be 0..%d" % (len(res.glue) - 1))
        for v, line, col in self.references:
            if v not in res.vertices:
                raise ParsingError("reference to missing vertex %d" % v, line, col)
        for ids, incident in res.glue.values():
            for j in incident:
                if j not in res.branches:
                    self.error("glue references missing branch %d" % j)
        for name, entries in res.fields.items():
            for key in entries:
                if key != "*" and key not in res.branches:
                    self.error("[field %s] names missing branch %d" % (name, key))
                if entries[key] == "samples" and name not in res.samples:
                    self.error("[field %s] uses samples but has no [samples %s]" % (name, name))
        for name, samples in res.samples.items():
            for v in samples:
                if v not in res.vertices:
                    self.error("[samples %s] names missing vertex %d" % (name, v))


def _tokens(text, column):
    pos = 0
    for token in text.split():
        pos = text.index(token, pos)
        yield token, column + pos
        pos += len(token)


def field_from_spec(spec, samples=None, weight=True, check=True):
    """Build a weight field (``weight``) or boundary data from a spec.

    Accepted forms: ``const 1``, ``poly 1 0 0, 0.5 2 0``, ``samples``;
    the command line spelling ``const:1`` is accepted as well."""
    spec = spec.strip()
    if ":" in spec.split()[0] if spec else False:
        kind, rest = spec.split(":", 1)
    else:
        parts = spec.split(None, 1)
        kind, rest = (parts[0], parts[1] if len(parts) > 1 else "")
    if kind == "const":
        try:
            value = float(rest)
        except ValueError:
            raise ValueError("const takes one number, got %r" % rest)
        return ConstantField(value) if weight else ConstantData(value)
    if kind == "poly":
        if not weight:
            raise ValueError("boundary data cannot be a polynomial")
        terms = []
        for term in rest.split(","):
            numbers = term.split()
            if len(numbers) < 2:
                raise ValueError("poly term needs a coefficient and exponents")
            try:
                terms.append((float(numbers[0]), [int(e) for e in numbers[1:]]))
            except ValueError:
                raise ValueError("malformed poly term %r" % term.strip())
        return PolynomialField(terms)
    if kind == "samples":
        if rest.strip():
            raise ValueError("samples takes no arguments")
        if samples is None:
            if check:
                raise ValueError("samples requested but no [samples] section")
            samples = {}
        return SampledField(samples) if weight else VertexSamples(samples)
    raise ValueError("unknown field kind %r" % kind)


def parse_complex_file(text):
    return ComplexParser().parse(text)


def parse_complex(text):
    """Structurally valid LEPComplex from .lep text."""
    return parse_complex_file(text).to_complex()


def from_complex(complex, weights=None, g=None):
    """ComplexFile describing an existing complex (e.g. from a builder)."""
    out = ComplexFile()
    out.ambient_dim = complex.ambient_dim
    out.branch_dim = complex.branch_dim
    for k, v in enumerate(complex.vertices):
        out.vertices[k] = tuple(float(c) for c in v)
    for b in complex.branches:
        out.branches[b.id] = b.vertex_ids
    for e in complex.ram_edges:
        out.glue[e.id] = (e.vertex_ids, tuple(inc.branch for inc in e.incident))
    for key in sorted(complex.boundary, key=lambda k: (len(k), sorted(k))):
        if complex.branch_dim == 2 and len(key) == 1:
            out.boundary_points.extend(key)
        else:
            out.boundary_facets.append(tuple(_facet_order(complex, key)))
    for name, field in (("f", weights), ("g", g)):
        if field is None:
            continue
        if field.kind == "samples":
            out.fields[name] = OrderedDict([("*", "samples")])
            out.samples[name] = OrderedDict(sorted(field.samples.items()))
        else:
            out.fields[name] = OrderedDict([("*", field.spec())])
    return out


def _facet_order(complex, key):
    for b in complex.branches:
        for f in b.facets:
            if frozenset(f.vertex_ids) == key:
                return f.vertex_ids
    return sorted(key)
