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
"""Command line runner.
"""

import getopt
import logging
import os
import os.path
import re
import sys

import numpy as np

from .adjustments import RunConfig
from .complex import BranchPoint, validate_complex
from .dirichlet import (
    DirichletProblem,
    solve_dirichlet,
    solve_dirichlet_per_source,
)
from .export import export_field, read_field
from .hamiltonian import HamiltonianFamily, check_compatibility
from .harness import (
    check_distance_bound,
    check_lipschitz,
    check_subsolution,
    check_supersolution,
    compare_fields,
)
from .metric import (
    MeshParams,
    brute_force_action,
    build_metric_graph,
    distance,
    unfolding_distance,
)
from .parser import ParsingError, field_from_spec, parse_complex_file
from .utilities import (
    EXIT_OK,
    EXIT_USAGE,
    EXIT_VERDICT,
    BudgetExceeded,
    LEPError,
    format_float,
    logger,
    sha256_text,
)

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")

COMMANDS = ("validate", "distance", "solve", "check", "export", "oracle")
ORACLES = ("brute", "unfold")

HELP = """\
Usage:

    {0} COMMAND [OPTS] COMPLEX

COMPLEX is a .lep file or the name of a bundled fixture (square, book3,
dihedral2, cube, cube_no_corner_exclusion, y_network, network_fig1, ...).

Commands:

    validate
        Check the geometric axioms and the structural hypotheses of the
        Hamiltonian.  Exit 1 when any rule or hypothesis fails.

    distance --from=J:U,V --to=K:U,V
        Approximate action distance between two points, given as branch id
        and branch-local coordinates.

    solve [--out=FILE] [--mesh-out=FILE]
        Solve the Dirichlet problem and write the field as CSV (stdout when
        --out is not given).

    check --u=FILE [--v=FILE] --mode=sub|super|lipschitz|compare|distance-bound
        Viscosity and property checks on a solved field.  Exit 1 unless
        every verdict passes.

    export --u=FILE --format=csv|mesh --out=FILE
        Re-export a field; ``mesh`` writes an OBJ file and FILE.scalar.

    oracle brute|unfold --from=J:U,V --to=K:U,V [--depth=INT] [--edge=ID]
        Brute-force action minimization or the two-branch unfolding
        distance.

Standard options:

    --help
        Show this information.

    --complex=PATH
        The complex file, instead of the positional argument.

    --hamiltonian=eikonal|generic
        Hamiltonian kind, default is 'eikonal'.

    --evaluator=MODULE:OBJECT
        Callable h(x_local, p) of a generic Hamiltonian.

    --[no-]convex, --[no-]strictly-convex
        Declared convexity of a generic Hamiltonian.  On by default.
        --no-convex alone also turns off --strictly-convex.

    --f=SPEC
        Weight field: 'const:1', 'poly:1 0 0, 0.5 2 0' or 'samples'.
        Default is the [field f] section of the complex, else 'const:1'.

    --g=SPEC
        Boundary data: 'const:0' or 'samples'.  Default is the [field g]
        section of the complex, else 'const:0'.

    --seed=INT
        Seed of every random sampling, default is 0.

    --[no-]quiet
        Do not configure logging.

Tuning options:

    --h=FLOAT
        Target mesh edge length, default is 0.03125.

    --ring=INT
        Connection radius in units of h, default is 2.

    --steiner=INT
        Subsegments per triangle edge, default is 1 (no Steiner points).

    --tol=FLOAT|auto
        Check tolerance, default 'auto' (10 h (1 + C)).

    --tol-c=FLOAT
        Boundary compatibility tolerance, default is 1e-9.

    --tol-planar-rel=FLOAT
        Geometric tolerance relative to the complex diameter, default 1e-9.

    --R-p=FLOAT
        Covector sampling radius, default is 16.

    --n-samples=INT
        Samples per element for hypothesis checks, default is 16.

    --threads=INT
        Worker threads for sampling and site checks, default is 1.

    --[no-]override-h7, --[no-]override-h8
        Solve although the hypothesis fails; recorded in the output header.

    --[no-]per-source
        Also solve by independent per-source runs and compare.

    --C=FLOAT
        Lipschitz constant of the 'lipschitz' check, default is the
        largest sampled speed.

"""

RUNNER_PATTERN = re.compile(
    r"""
    ^
    (?P<module>
        [a-z_][a-z0-9_]*(?:\.[a-z_][a-z0-9_]*)*
    )
    :
    (?P<object>
        [a-z_][a-z0-9_]*(?:\.[a-z_][a-z0-9_]*)*
    )
    $
    """,
    re.I | re.X,
)

POINT_PATTERN = re.compile(r"^\s*(\d+)\s*:\s*([^:]+)$")


def match(obj_name):
    matches = RUNNER_PATTERN.match(obj_name)
    if not matches:
        raise ValueError("Malformed evaluator '{0}'".format(obj_name))
    return matches.group("module"), matches.group("object")


def resolve(module_name, object_name):
    """Resolve a named object in a module."""
    segments = [str(segment) for segment in object_name.split(".")]
    obj = __import__(module_name, fromlist=segments[:1])
    for segment in segments:
        obj = getattr(obj, segment)
    return obj


def parse_point(text):
    """``"j:u,v"`` -> BranchPoint(j, (u, v))."""
    matches = POINT_PATTERN.match(text or "")
    if not matches:
        raise ValueError("Malformed point '{0}', expected J:U,V".format(text))
    try:
        coords = tuple(float(c) for c in matches.group(2).split(","))
    except ValueError:
        raise ValueError("Malformed point '{0}', expected J:U,V".format(text))
    return BranchPoint(int(matches.group(1)), coords)


def find_complex(name):
    """Path of a .lep file, falling back to the bundled fixtures."""
    candidates = [name]
    if not os.path.isabs(name):
        candidates.append(os.path.join(FIXTURES, name))
        candidates.append(os.path.join(FIXTURES, name + ".lep"))
    for path in candidates:
        if os.path.isfile(path):
            return path
    raise ValueError("No such complex '{0}'".format(name))


def show_help(stream, name, error=None):  # pragma: no cover
    if error is not None:
        print("Error: {0}\n".format(error), file=stream)
    print(HELP.format(name), file=stream)


class Session(object):
    """Everything one command needs, loaded from a RunConfig."""

    def __init__(self, config, path):
        self.config = config
        self.path = path
        with open(path, "rb") as fp:
            text = fp.read()
        self.file = parse_complex_file(text)
        self.complex = self.file.to_complex(tol_rel=config.tol_planar_rel)
        self.inputs = [("complex", self.file.text_sha256)]
        self._hamiltonian = None
        self._problem = None

    def _field(self, option, name, default):
        spec = getattr(self.config, option)
        if spec is None:
            weight = name == "f"
            loaded = self.file.weights() if weight else self.file.boundary_data()
            if loaded is not None:
                self.inputs.append((name, self.file.text_sha256))
                return loaded
            spec = default
        self.inputs.append((name, sha256_text(spec)))
        try:
            return field_from_spec(
                spec, self.file.samples.get(name), weight=(name == "f"),
            )
        except ValueError as e:
            raise ParsingError("--%s: %s" % (option, e))

    @property
    def hamiltonian(self):
        if self._hamiltonian is None:
            config = self.config
            if config.hamiltonian == "eikonal":
                weights = self._field("f", "f", "const:1")
                self._hamiltonian = HamiltonianFamily.eikonal(self.complex, weights)
            else:
                module, obj_name = match(config.evaluator)
                sys.path.append(os.getcwd())
                try:
                    evaluator = resolve(module, obj_name)
                except (ImportError, AttributeError) as e:
                    raise ValueError("Bad evaluator '{0}': {1}".format(config.evaluator, e))
                self.inputs.append(("evaluator", sha256_text(config.evaluator)))
                self._hamiltonian = HamiltonianFamily.generic(
                    self.complex,
                    evaluator,
                    convex=config.convex,
                    strictly_convex=config.strictly_convex,
                    R_p=config.R_p,
                )
        return self._hamiltonian

    @property
    def params(self):
        c = self.config
        return MeshParams(h=c.h, steiner_per_edge=c.steiner, connectivity_order=c.ring)

    @property
    def problem(self):
        if self._problem is None:
            c = self.config
            H = self.hamiltonian
            g = self._field("g", "g", "const:0")
            self._problem = DirichletProblem(
                self.complex,
                H,
                g=g,
                params=self.params,
                tol_c=c.tol_c,
                override_h7=c.override_h7,
                override_h8=c.override_h8,
                n_samples=c.n_samples,
                seed=c.seed,
                threads=c.threads,
            )
        return self._problem

    def read(self, path):
        with open(path, encoding="utf-8") as fp:
            text = fp.read()
        self.inputs.append((os.path.basename(path), sha256_text(text)))
        return read_field(text, self.problem.graph)


def cmd_validate(session, out):
    report = validate_complex(session.complex)
    print(report.format(), file=out)
    if not report.valid:
        return EXIT_VERDICT
    c = session.config
    compat = check_compatibility(
        session.hamiltonian, session.complex, n_samples=c.n_samples, seed=c.seed,
        threads=c.threads,
    )
    print(compat.format(), file=out)
    return EXIT_OK if compat.passed else EXIT_VERDICT


def cmd_distance(session, out):
    c = session.config
    x, y = parse_point(c.source), parse_point(c.target)
    graph = build_metric_graph(session.complex, session.hamiltonian, session.params)
    print(format_float(distance(graph, x, y)), file=out)
    return EXIT_OK


def cmd_solve(session, out):
    c = session.config
    problem = session.problem
    field = solve_dirichlet(problem)
    if c.per_source:
        other = solve_dirichlet_per_source(problem)
        both = field.finite & other.finite
        gap = float(np.max(np.abs(field.values[both] - other.values[both]), initial=0.0))
        if gap > 1e-12 or not np.array_equal(field.finite, other.finite):
            logger.error("per-source reduction differs by %s", format_float(gap))
            return EXIT_VERDICT
        logger.info("per-source reduction agrees within %s", format_float(gap))
    params = c.as_dict()
    texts = export_field(field, "csv", c.out, params=params, inputs=session.inputs)
    if c.out is None:
        out.write(texts[0])
    if c.mesh_out is not None:
        export_field(field, "mesh", c.mesh_out, params=params, inputs=session.inputs)
    return EXIT_OK


def cmd_check(session, out):
    c = session.config
    if c.u is None:
        raise ValueError("check needs --u")
    problem = session.problem
    field = session.read(c.u)
    if c.mode == "sub":
        report = check_subsolution(field, problem, tol=c.tol)
    elif c.mode == "super":
        report = check_supersolution(field, problem, tol=c.tol)
    elif c.mode == "lipschitz":
        C = c.C if c.C is not None else problem.speed()
        report = check_lipschitz(field, problem.graph, C)
    elif c.mode == "compare":
        if c.v is None:
            raise ValueError("compare needs --v")
        other = session.read(c.v)
        tol = c.tol_c if c.tol == "auto" else c.tol
        report = compare_fields(field, other, tol=tol)
    else:
        tol = None if c.tol == "auto" else c.tol
        report = check_distance_bound(field, problem.graph, seed=c.seed, tol=tol)
    out.write(report.format())
    return EXIT_OK if report.passed else EXIT_VERDICT


def cmd_export(session, out):
    c = session.config
    if c.u is None or c.out is None:
        raise ValueError("export needs --u and --out")
    field = session.read(c.u)
    export_field(field, c.format, c.out, params=c.as_dict(), inputs=session.inputs)
    return EXIT_OK


def cmd_oracle(session, out, kind):
    c = session.config
    x, y = parse_point(c.source), parse_point(c.target)
    if kind == "unfold":
        if c.edge is None:
            raise ValueError("unfold needs --edge")
        value = unfolding_distance(
            session.complex, x.branch, x.coords, y.branch, y.coords, int(c.edge),
        )
    else:
        try:
            value = brute_force_action(
                session.complex, session.hamiltonian, x, y, depth=c.depth,
            )
        except BudgetExceeded as e:
            print("partial %s" % format_float(e.partial_bound), file=out)
            raise
    print(format_float(value), file=out)
    return EXIT_OK


def run(argv=sys.argv, out=None, err=None):
    """Command line runner."""
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    name = os.path.basename(argv[0])

    try:
        kw, args = RunConfig.parse_args(argv[1:])
    except getopt.GetoptError as exc:
        show_help(err, name, str(exc))
        return EXIT_USAGE

    if kw.pop("help"):
        show_help(out, name)
        return EXIT_OK

    if not args or args[0] not in COMMANDS:
        show_help(err, name, "Specify one of: %s" % ", ".join(COMMANDS))
        return EXIT_USAGE
    command, args = args[0], args[1:]
    kind = None
    if command == "oracle":
        if not args or args[0] not in ORACLES:
            show_help(err, name, "Specify an oracle: %s" % ", ".join(ORACLES))
            return EXIT_USAGE
        kind, args = args[0], args[1:]
    if len(args) > 1 or (args and "complex" in kw):
        show_help(err, name, "Specify one complex only")
        return EXIT_USAGE
    if args:
        kw["complex"] = args[0]

    try:
        config = RunConfig.from_environ(**kw)
        if config.complex is None:
            raise ValueError("Specify a complex")
        path = find_complex(config.complex)
    except (ValueError, OSError) as exc:
        show_help(err, name, str(exc))
        return EXIT_USAGE

    if not config.quiet:
        logging.basicConfig()
        logging.getLogger("lepspace").setLevel(logging.INFO)

    try:
        session = Session(config, path)
        if command == "oracle":
            return cmd_oracle(session, out, kind)
        handler = globals()["cmd_" + command]
        return handler(session, out)
    except LEPError as exc:
        print(str(exc), file=err)
        return exc.code
    except ValueError as exc:
        print("Error: {0}".format(exc), file=err)
        return EXIT_USAGE
    except OSError as exc:
        print("Error: {0}".format(exc), file=err)
        return EXIT_USAGE
