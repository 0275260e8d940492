##############################################################################
#
# Copyright (c) 2001, 2002 Zope Foundation and Contributors.
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
"""Adjustments are tunable run parameters.
"""
import configparser
import getopt
import os
from collections import OrderedDict

from .utilities import format_float

truthy = frozenset(("t", "true", "y", "yes", "on", "1"))

CONFIG_ENV = "LEPSPACE_CONFIG"
CONFIG_SECTION = "lepspace"

HAMILTONIANS = ("eikonal", "generic")
MODES = ("sub", "super", "lipschitz", "compare", "distance-bound")
FORMATS = ("csv", "mesh")

# command line spellings that are not valid Python names
OPTION_ALIASES = {"from": "source", "to": "target"}


def asbool(s):
    """ Return the boolean value ``True`` if the case-lowered value of string
    input ``s`` is any of ``t``, ``true``, ``y``, ``on``, or ``1``, otherwise
    return the boolean value ``False``.  If ``s`` is the value ``None``,
    return ``False``.  If ``s`` is already one of the boolean values ``True``
    or ``False``, return it."""
    if s is None:
        return False
    if isinstance(s, bool):
        return s
    s = str(s).strip()
    return s.lower() in truthy


def asfloat_positive(s):
    value = float(s)
    if not value > 0:
        raise ValueError("expected a positive number, got %r" % (s,))
    return value


def asint_positive(s):
    value = int(s)
    if value < 1:
        raise ValueError("expected a positive integer, got %r" % (s,))
    return value


def asint_nonnegative(s):
    value = int(s)
    if value < 0:
        raise ValueError("expected a non-negative integer, got %r" % (s,))
    return value


def astol(s):
    """``auto`` or a positive float."""
    if isinstance(s, str) and s.strip().lower() == "auto":
        return "auto"
    return asfloat_positive(s)


def str_iftruthy(s):
    return str(s) if s else None


def aschoice(*choices):
    def cast(s):
        s = str(s).strip()
        if s not in choices:
            raise ValueError("expected one of %s, got %r" % (", ".join(choices), s))
        return s

    cast.__name__ = "aschoice"
    return cast


class RunConfig(object):
    """This class contains tunable parameters.
    """

    _params = (
        ("complex", str_iftruthy),
        ("h", asfloat_positive),
        ("ring", asint_positive),
        ("steiner", asint_positive),
        ("hamiltonian", aschoice(*HAMILTONIANS)),
        ("evaluator", str_iftruthy),
        ("convex", asbool),
        ("strictly_convex", asbool),
        ("f", str_iftruthy),
        ("g", str_iftruthy),
        ("tol", astol),
        ("tol_c", asfloat_positive),
        ("tol_planar_rel", asfloat_positive),
        ("R_p", asfloat_positive),
        ("seed", asint_nonnegative),
        ("out", str_iftruthy),
        ("mesh_out", str_iftruthy),
        ("format", aschoice(*FORMATS)),
        ("mode", aschoice(*MODES)),
        ("override_h7", asbool),
        ("override_h8", asbool),
        ("n_samples", asint_positive),
        ("threads", asint_positive),
        ("per_source", asbool),
        ("quiet", asbool),
        ("source", str_iftruthy),
        ("target", str_iftruthy),
        ("edge", str_iftruthy),
        ("u", str_iftruthy),
        ("v", str_iftruthy),
        ("C", asfloat_positive),
        ("depth", asint_nonnegative),
    )

    _param_map = dict(_params)

    # path of the .lep file (or the name of a bundled fixture)
    complex = None

    # target edge length of the mesh
    h = 1.0 / 32

    # connection radius in units of h
    ring = 2

    # subsegments per triangle edge; 1 means no Steiner points
    steiner = 1

    # Hamiltonian kind; ``generic`` needs ``evaluator``
    hamiltonian = "eikonal"

    # ``module:object`` naming a callable h(x_local, p) for generic runs
    evaluator = None

    convex = True
    strictly_convex = True

    # weight field and boundary data specs (``const:1``, ``poly:...``,
    # ``samples``); None means take them from the complex file
    f = None
    g = None

    # viscosity check tolerance, ``auto`` is 10 h (1 + C)
    tol = "auto"

    # boundary compatibility tolerance
    tol_c = 1e-9

    # geometric tolerances relative to the complex diameter
    tol_planar_rel = 1e-9

    # radius of the covector samples of the hypothesis checks
    R_p = 16.0

    # seed of every random sampling
    seed = 0

    out = None
    mesh_out = None
    format = "csv"

    mode = "sub"

    override_h7 = False
    override_h8 = False

    n_samples = 16

    # worker threads for sampling and per-site checks
    threads = 1

    # also solve by independent per-source runs and compare
    per_source = False

    quiet = False

    # query points ``j:u,v``
    source = None
    target = None

    # ramification edge id for the unfolding oracle
    edge = None

    # field files for ``check``
    u = None
    v = None

    # Lipschitz constant; None means the largest sampled speed
    C = None

    # free vertices per crossed branch of the brute-force oracle
    depth = 2

    def __init__(self, **kw):
        for k, v in kw.items():
            k = OPTION_ALIASES.get(k, k)
            if k not in self._param_map:
                raise ValueError("Unknown adjustment %r" % k)
            setattr(self, k, self._param_map[k](v))

        if self.hamiltonian == "generic" and self.evaluator is None:
            raise ValueError("a generic Hamiltonian needs --evaluator")

        if self.hamiltonian == "eikonal" and self.evaluator is not None:
            raise ValueError("--evaluator has no meaning for eikonal runs")

        if not self.convex:
            if "strictly_convex" not in kw:
                self.strictly_convex = False
            elif self.strictly_convex:
                raise ValueError(
                    "--strictly-convex contradicts --no-convex; "
                    "pass --no-strictly-convex or drop it"
                )

    def as_dict(self):
        """Every parameter, formatted for the provenance header."""
        out = OrderedDict()
        for name, _cast in self._params:
            value = getattr(self, name)
            if isinstance(value, float):
                value = format_float(value)
            out[name] = value
        return out

    @classmethod
    def parse_args(cls, argv):
        """Pre-parse command line arguments for input into __init__.  Note that
        this does not cast values into adjustment types, it just creates a
        dictionary suitable for passing into __init__, where __init__ does the
        casting.
        """
        reverse = dict((v, k) for k, v in OPTION_ALIASES.items())
        long_opts = ["help"]
        for opt, cast in cls._params:
            opt = reverse.get(opt, opt).replace("_", "-")
            if cast is asbool:
                long_opts.append(opt)
                long_opts.append("no-" + opt)
            else:
                long_opts.append(opt + "=")

        kw = {
            "help": False,
        }

        opts, args = getopt.gnu_getopt(argv, "", long_opts)
        for opt, value in opts:
            param = opt.lstrip("-").replace("-", "_")
            param = OPTION_ALIASES.get(param, param)

            if param.startswith("no_"):
                param = param[3:]
                kw[param] = "false"
            elif param == "help":
                kw[param] = True
            elif cls._param_map[param] is asbool:
                kw[param] = "true"
            else:
                kw[param] = value

        return kw, args

    @classmethod
    def read_config(cls, path):
        """Settings of the ``[lepspace]`` section of an INI file."""
        parser = configparser.ConfigParser()
        parser.optionxform = str
        with open(path, encoding="utf-8") as fp:
            parser.read_file(fp)
        if not parser.has_section(CONFIG_SECTION):
            return {}
        return dict(parser.items(CONFIG_SECTION))

    @classmethod
    def from_environ(cls, environ=None, **kw):
        """Defaults from the file named by ``LEPSPACE_CONFIG``, overridden by
        ``kw``."""
        environ = os.environ if environ is None else environ
        settings = {}
        path = environ.get(CONFIG_ENV)
        if path:
            settings.update(cls.read_config(path))
        settings.update(kw)
        return cls(**settings)
