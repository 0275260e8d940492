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
"""Utility functions
"""

import hashlib
import logging

logger = logging.getLogger("lepspace")
mesh_logger = logging.getLogger("lepspace.mesh")
check_logger = logging.getLogger("lepspace.check")

__version__ = "0.3.0"

# exit codes of the console script
EXIT_OK = 0
EXIT_VERDICT = 1
EXIT_USAGE = 2


def format_float(value):
    """Shortest decimal that round-trips to the same double."""
    value = float(value)
    if value != value:
        return "nan"
    if value in (float("inf"), float("-inf")):
        return "inf" if value > 0 else "-inf"
    return repr(value)


def sha256_text(text):
    if not isinstance(text, bytes):
        text = text.encode("utf-8")
    return hashlib.sha256(text).hexdigest()


def provenance_header(params, inputs=()):
    """ Return the ``#`` comment block every output file starts with.

    ``params`` is a mapping of run parameters (the seed among them) and
    ``inputs`` a sequence of ``(label, digest)`` pairs."""
    lines = ["# lepspace %s" % __version__]
    for label, digest in inputs:
        lines.append("# input %s sha256=%s" % (label, digest))
    for key in sorted(params):
        lines.append("# param %s=%s" % (key, params[key]))
    return "\n".join(lines) + "\n"


class LEPError(Exception):
    code = EXIT_VERDICT
    reason = "Error"

    def __init__(self, body, **extra):
        self.body = body
        self.__dict__.update(extra)
        super(LEPError, self).__init__(body)

    def __str__(self):
        return "%s: %s" % (self.reason, self.body)


class StructureError(LEPError):
    code = EXIT_USAGE
    reason = "Structure error"


class GeometryError(LEPError):
    code = EXIT_USAGE
    reason = "Geometry error"


class HamiltonianError(LEPError):
    code = EXIT_VERDICT
    reason = "Hamiltonian error"


class HypothesisError(LEPError):
    code = EXIT_VERDICT
    reason = "Hypothesis failure"


class BudgetExceeded(LEPError):
    """Carries the best bound found before the budget ran out as
    ``partial_bound``."""

    code = EXIT_VERDICT
    reason = "Combinatorial budget exceeded"
    partial_bound = float("inf")


class FieldMismatch(LEPError):
    code = EXIT_USAGE
    reason = "Field does not match graph"
