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
"""Per-branch Hamiltonians, their structural checks and duals.

Two kinds are supported.  The weighted eikonal kind ``|p|^2 - f(x)`` has
closed forms for everything.  The generic kind wraps a user evaluator
``h(x_local, p)`` and computes the Legendre transform and the free-time
gauge numerically.
"""

from collections import namedtuple
import itertools
import math

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .task import run_tasks
from .utilities import (
    GeometryError,
    HamiltonianError,
    StructureError,
    check_logger,
    format_float,
    sha256_text,
)

EIKONAL = "eikonal"
GENERIC = "generic"

HYPOTHESES = ("H15", "H3", "H2", "H4", "H5")
DESCRIPTIONS = {
    "H15": "continuity (sampled modulus)",
    "H3": "coercivity (growth samples)",
    "H2": "normal monotonicity on edges",
    "H4": "cross-branch equality on edges",
    "H5": "normal symmetry on edges",
}

# search window of the free-time reduction, in log T
LOG_T_MIN = math.log(1e-6)
LOG_T_MAX = math.log(1e6)


# -- weight fields ----------------------------------------------------------


class ConstantField(object):
    kind = "const"

    def __init__(self, value):
        self.value = float(value)

    def values(self, branch, coords):
        coords = np.atleast_2d(coords)
        return np.full(len(coords), self.value)

    def spec(self):
        return "const %s" % format_float(self.value)


class PolynomialField(object):
    """Sum of ``coef * x1**e1 * x2**e2`` terms in branch-local coordinates."""

    kind = "poly"

    def __init__(self, terms):
        self.terms = tuple(
            (float(coef), tuple(int(e) for e in exps)) for coef, exps in terms
        )
        for _coef, exps in self.terms:
            if any(e < 0 for e in exps):
                raise ValueError("negative exponent in polynomial field")

    def values(self, branch, coords):
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        out = np.zeros(len(coords))
        for coef, exps in self.terms:
            term = np.full(len(coords), coef)
            for i, e in enumerate(exps):
                if not e:
                    continue
                if i >= coords.shape[1]:
                    raise HamiltonianError(
                        "polynomial uses coordinate %d on a %d-dimensional branch"
                        % (i + 1, coords.shape[1])
                    )
                term = term * coords[:, i] ** e
            out += term
        return out

    def spec(self):
        return "poly " + ", ".join(
            " ".join([format_float(c)] + [str(e) for e in exps])
            for c, exps in self.terms
        )


def mean_value_weights(poly, points):
    """Mean value coordinates of ``points`` with respect to the polygon.

    Rows sum to one and reduce to linear interpolation along each polygon
    edge, so values on a shared edge only depend on its two endpoints."""
    points = np.atleast_2d(points)
    m = len(poly)
    s = poly[None, :, :] - points[:, None, :]
    r = np.linalg.norm(s, axis=2)
    s_next = np.roll(s, -1, axis=1)
    r_next = np.roll(r, -1, axis=1)
    cross = s[..., 0] * s_next[..., 1] - s[..., 1] * s_next[..., 0]
    dot = np.einsum("pmi,pmi->pm", s, s_next)
    scale = max(1.0, float(np.max(np.abs(poly))))
    eps = 1e-12 * scale
    with np.errstate(divide="ignore", invalid="ignore"):
        tan_half = cross / (r * r_next + dot)
        w = (np.roll(tan_half, 1, axis=1) + tan_half) / r
        weights = w / w.sum(axis=1, keepdims=True)
    for row in range(len(points)):
        hit = np.nonzero(r[row] <= eps)[0]
        if len(hit):
            weights[row] = 0.0
            weights[row, hit[0]] = 1.0
            continue
        on_edge = np.nonzero(
            (np.abs(cross[row]) <= eps * (r[row] + r_next[row])) & (dot[row] < 0)
        )[0]
        if len(on_edge):
            i = on_edge[0]
            t = r[row, i] / (r[row, i] + r_next[row, i])
            weights[row] = 0.0
            weights[row, i] = 1.0 - t
            weights[row, (i + 1) % m] = t
    return weights


class SampledField(object):
    """Per-vertex samples, interpolated linearly along segments and with
    mean value coordinates inside polygons.  Vertices are shared between
    branches, so the field agrees across every glued edge."""

    kind = "samples"

    def __init__(self, samples):
        self.samples = {int(k): float(v) for k, v in samples.items()}

    def _vertex_values(self, branch):
        try:
            return np.array([self.samples[v] for v in branch.vertex_ids])
        except KeyError as e:
            raise StructureError("no sample for vertex %s" % e.args[0])

    def values(self, branch, coords):
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        vals = self._vertex_values(branch)
        if branch.dim == 1:
            u0, u1 = branch.local[0, 0], branch.local[1, 0]
            t = (coords[:, 0] - u0) / (u1 - u0)
            return (1.0 - t) * vals[0] + t * vals[1]
        return mean_value_weights(branch.local, coords) @ vals

    def spec(self):
        return "samples " + " ".join(
            "%d=%s" % (k, format_float(v)) for k, v in sorted(self.samples.items())
        )


def branch_samples(branch, n):
    """Deterministic sample points of a branch closure (local coords)."""
    local = branch.local
    if branch.dim == 1:
        lo, hi = sorted((local[0, 0], local[1, 0]))
        return np.linspace(lo, hi, max(n, 2))[:, None]
    lo = local.min(axis=0)
    hi = local.max(axis=0)
    g0 = np.linspace(lo[0], hi[0], max(n, 2))
    g1 = np.linspace(lo[1], hi[1], max(n, 2))
    grid = np.array(list(itertools.product(g0, g1)))
    grid = grid[branch.contains(grid, 0.0)]
    return np.vstack([local, grid])


# -- the family -------------------------------------------------------------


class HamiltonianFamily(object):
    """``H = (H^j)`` on a complex, one Hamiltonian per branch."""

    # closure tolerance relative to the complex diameter
    closure_tol = 1e-7

    def __init__(
        self,
        complex,
        kind,
        weights=None,
        evaluators=None,
        convex=True,
        strictly_convex=True,
        R_p=16.0,
        spatially_uniform=False,
    ):
        if kind not in (EIKONAL, GENERIC):
            raise ValueError("unknown Hamiltonian kind %r" % (kind,))
        if R_p <= 0:
            raise ValueError("R_p must be positive")
        self.complex = complex
        self.kind = kind
        self.weights = weights
        self.evaluators = evaluators
        self.convex = bool(convex)
        self.strictly_convex = bool(strictly_convex) and self.convex
        self.R_p = float(R_p)
        self.spatially_uniform = bool(spatially_uniform)
        self._gauge_cache = {}

    @classmethod
    def eikonal(cls, complex, weights):
        weights = _per_branch(complex, weights, "weight field")
        family = cls(complex, EIKONAL, weights=weights)
        for branch in complex.branches:
            f = family.weight(branch.id, branch_samples(branch, 8))
            low = float(np.min(f))
            if low < -1e-12:
                raise HamiltonianError(
                    "negative weight %s on branch %d" % (format_float(low), branch.id)
                )
        return family

    @classmethod
    def generic(
        cls,
        complex,
        evaluators,
        convex=True,
        strictly_convex=True,
        R_p=16.0,
        spatially_uniform=False,
    ):
        evaluators = _per_branch(complex, evaluators, "evaluator")
        return cls(
            complex,
            GENERIC,
            evaluators=evaluators,
            convex=convex,
            strictly_convex=strictly_convex,
            R_p=R_p,
            spatially_uniform=spatially_uniform,
        )

    # helpers

    def _branch(self, j):
        if not 0 <= j < len(self.complex.branches):
            raise StructureError("unknown branch %r" % (j,))
        return self.complex.branches[j]

    def _points(self, j, x):
        branch = self._branch(j)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != branch.dim:
            raise HamiltonianError(
                "expected %d local coordinates, got %d" % (branch.dim, x.shape[1])
            )
        tol = self.closure_tol * self.complex.diameter
        if not np.all(branch.contains(x, tol)):
            raise HamiltonianError(
                "point outside the closure of branch %d" % j
            )
        return branch, x

    # evaluation

    def weight(self, j, x):
        """f^j at local points (eikonal kind)."""
        if self.kind != EIKONAL:
            raise HamiltonianError("weights are only defined for the eikonal kind")
        branch, x = self._points(j, x)
        return self.weights[j].values(branch, x)

    def eval(self, j, x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        return float(self.eval_many(j, x[None, :], p[None, :])[0])

    def eval_many(self, j, x, p):
        branch, x = self._points(j, x)
        p = np.atleast_2d(np.asarray(p, dtype=float))
        if len(x) == 1 and len(p) > 1:
            x = np.repeat(x, len(p), axis=0)
        if self.kind == EIKONAL:
            return np.einsum("ij,ij->i", p, p) - self.weights[j].values(branch, x)
        h = self.evaluators[j]
        return np.array([float(h(xi, pi)) for xi, pi in zip(x, p)])

    # duals

    def lagrangian(self, j, x, q):
        """``L^j(x, q) = sup_p p.q - H^j(x, p)``."""
        _branch, xs = self._points(j, x)
        q = np.asarray(q, dtype=float)
        if self.kind == EIKONAL:
            return float(np.dot(q, q) / 4.0 + self.weight(j, xs)[0])
        return self._legendre(j, xs[0], q, strict=True)

    def lagrangian_many(self, j, x, q, strict=True):
        branch, x = self._points(j, x)
        q = np.atleast_2d(np.asarray(q, dtype=float))
        if len(x) == 1 and len(q) > 1:
            x = np.repeat(x, len(q), axis=0)
        if self.kind == EIKONAL:
            return np.einsum("ij,ij->i", q, q) / 4.0 + self.weights[j].values(branch, x)
        return np.array(
            [self._legendre(j, xi, qi, strict=strict) for xi, qi in zip(x, q)]
        )

    def _legendre(self, j, x, q, strict):
        h = self.evaluators[j]
        n = len(q)
        bound = 8.0 * self.R_p

        def objective(p):
            return float(h(x, p)) - float(np.dot(p, q))

        grid = np.linspace(-self.R_p, self.R_p, 5)
        starts = np.vstack(
            [np.array(list(itertools.product(grid, repeat=n))), np.zeros((1, n))]
        )
        values = [objective(p) for p in starts]
        x0 = starts[int(np.argmin(values))]
        res = minimize(
            objective,
            x0,
            method="L-BFGS-B",
            bounds=[(-bound, bound)] * n,
            options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 500},
        )
        if strict and np.max(np.abs(res.x)) >= bound * (1 - 1e-6):
            raise HamiltonianError(
                "Hamiltonian not coercive at x = %s" % np.array2string(x)
            )
        return -float(res.fun)

    def gauge(self, j, x, q):
        """Free-time line element ``inf_T T * L(x, q / T)``."""
        q = np.asarray(q, dtype=float)
        return float(self.gauge_many(j, np.asarray(x, dtype=float)[None, :], q[None, :])[0])

    def gauge_many(self, j, x, q):
        branch, x = self._points(j, x)
        q = np.atleast_2d(np.asarray(q, dtype=float))
        if len(x) == 1 and len(q) > 1:
            x = np.repeat(x, len(q), axis=0)
        norms = np.linalg.norm(q, axis=1)
        if self.kind == EIKONAL:
            f = np.clip(self.weights[j].values(branch, x), 0.0, None)
            return np.sqrt(f) * norms
        out = np.zeros(len(q))
        for i, (xi, qi, ni) in enumerate(zip(x, q, norms)):
            if ni == 0:
                continue
            out[i] = ni * self._unit_gauge(j, xi, qi / ni)
        return out

    def _unit_gauge(self, j, x, direction):
        key = None
        if self.spatially_uniform:
            key = (j, tuple(np.round(direction, 12)))
            cached = self._gauge_cache.get(key)
            if cached is not None:
                return cached

        def objective(s):
            T = math.exp(s)
            return T * self._legendre(j, x, direction / T, strict=False)

        res = minimize_scalar(
            objective,
            bounds=(LOG_T_MIN, LOG_T_MAX),
            method="bounded",
            options={"xatol": 1e-10},
        )
        # only the minimizer has to keep the sup inside the p box
        self._legendre(j, x, direction / math.exp(res.x), strict=True)
        value = max(float(res.fun), 0.0)
        if key is not None:
            self._gauge_cache[key] = value
        return value

    def max_speed(self, n_samples=8):
        """Largest ``|p|`` with ``H(x, p) <= 0`` over sampled points.

        This is the Lipschitz constant C_K of subsolutions; ``max sqrt(f)``
        for the eikonal kind."""
        best = 0.0
        for branch in self.complex.branches:
            pts = branch_samples(branch, n_samples)
            if self.kind == EIKONAL:
                f = self.weights[branch.id].values(branch, pts)
                best = max(best, float(np.sqrt(max(float(np.max(f)), 0.0))))
                continue
            for x in pts:
                for w in _unit_directions(branch.dim, 16):
                    best = max(best, self._radial_root(branch.id, x, w))
        return best

    def _radial_root(self, j, x, direction):
        h = self.evaluators[j]
        if float(h(x, np.zeros_like(direction))) > 0:
            return 0.0
        lo, hi = 0.0, 8.0 * self.R_p
        if float(h(x, hi * direction)) <= 0:
            return hi
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if float(h(x, mid * direction)) <= 0:
                lo = mid
            else:
                hi = mid
        return lo

    def digest(self):
        if self.kind == EIKONAL:
            parts = [w.spec() for w in self.weights]
        else:
            parts = [
                "%s.%s" % (getattr(e, "__module__", "?"), getattr(e, "__qualname__", repr(e)))
                for e in self.evaluators
            ]
            parts.append("R_p=%s" % format_float(self.R_p))
        return sha256_text("%s\n%s" % (self.kind, "\n".join(parts)))

    def __repr__(self):
        return "<HamiltonianFamily %s branches=%d>" % (
            self.kind,
            len(self.complex.branches),
        )


def _per_branch(complex, value, what):
    count = len(complex.branches)
    if hasattr(value, "values") and not isinstance(value, dict) or callable(value):
        return (value,) * count
    if isinstance(value, dict):
        default = value.get("*")
        out = []
        for j in range(count):
            item = value.get(j, default)
            if item is None:
                raise StructureError("no %s for branch %d" % (what, j))
            out.append(item)
        return tuple(out)
    value = tuple(value)
    if len(value) != count:
        raise StructureError(
            "%d %ss given for %d branches" % (len(value), what, count)
        )
    return value


def _unit_directions(dim, count):
    if dim == 1:
        return [np.array([1.0]), np.array([-1.0])]
    angles = np.linspace(0, 2 * np.pi, count, endpoint=False)
    return [np.array([math.cos(a), math.sin(a)]) for a in angles]


# -- structural checks ------------------------------------------------------

Verdict = namedtuple("Verdict", ["hypothesis", "passed", "magnitude", "location"])


class CompatReport(object):
    def __init__(self, verdicts, tol, errors=()):
        self.verdicts = verdicts
        self.tol = tol
        self.errors = list(errors)

    @property
    def passed(self):
        return not self.errors and all(v.passed for v in self.verdicts.values())

    @property
    def failures(self):
        return [h for h in HYPOTHESES if not self.verdicts[h].passed]

    def __getitem__(self, name):
        return self.verdicts[name]

    def format(self):
        lines = []
        for name in HYPOTHESES:
            v = self.verdicts[name]
            lines.append(
                "%-4s %-4s worst=%s at %s  (%s)"
                % (
                    name,
                    "pass" if v.passed else "FAIL",
                    format_float(v.magnitude),
                    v.location,
                    DESCRIPTIONS[name],
                )
            )
        for err in self.errors:
            lines.append("sampling failure: %s" % err)
        return "\n".join(lines)


class _Worst(object):
    def __init__(self):
        self.magnitude = 0.0
        self.location = None

    def update(self, magnitude, location):
        magnitude = float(magnitude)
        if self.location is None or magnitude > self.magnitude:
            self.magnitude = magnitude
            self.location = location


def _covectors(dim, n_samples, R_p, rng):
    dirs = rng.normal(size=(n_samples, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = R_p * rng.uniform(0, 1, size=n_samples) ** (1.0 / dim)
    axes = np.vstack([np.eye(dim), -np.eye(dim)]) * (0.5 * R_p)
    return np.vstack([np.zeros((1, dim)), axes, dirs * radii[:, None]])


def _edge_sweep(H, complex, edge, covecs, n_samples):
    out = {name: _Worst() for name in ("H2", "H4", "H5")}
    scale = 0.0
    ends = complex.vertices[list(edge.vertex_ids)]
    if complex.branch_dim == 1:
        points = ends[:1]
        tangent = None
    else:
        ts = (np.arange(n_samples) + 0.5) / n_samples
        points = ends[0] + ts[:, None] * (ends[1] - ends[0])
        tangent = (ends[1] - ends[0]) / np.linalg.norm(ends[1] - ends[0])
    pn_grid = np.linspace(0.0, H.R_p, n_samples + 1)
    for x in points:
        values = {}
        for inc in edge.incident:
            frame = complex.branches[inc.branch].frame
            xl = frame.to_local(x)
            nu = inc.normal
            tau = None if tangent is None else frame.vector_to_local(tangent)
            # chart covector (p_n, p') -> branch-local covector
            local = covecs[:, :1] * nu
            flipped = -covecs[:, :1] * nu
            if tau is not None:
                local = local + covecs[:, 1:2] * tau
                flipped = flipped + covecs[:, 1:2] * tau
            h = H.eval_many(inc.branch, xl[None, :], local)
            hf = H.eval_many(inc.branch, xl[None, :], flipped)
            values[inc.branch] = h
            scale = max(scale, float(np.max(np.abs(h))))
            gap = np.abs(h - hf)
            i = int(np.argmax(gap))
            out["H5"].update(gap[i], ("edge", edge.id, "branch", inc.branch, tuple(x)))
            for pt in np.unique(covecs[:, 1:2], axis=0) if tau is not None else [None]:
                line = pn_grid[:, None] * nu
                if pt is not None:
                    line = line + pt[0] * tau
                hv = H.eval_many(inc.branch, xl[None, :], line)
                drop = np.max(np.clip(hv[:-1] - hv[1:], 0.0, None))
                out["H2"].update(drop, ("edge", edge.id, "branch", inc.branch, tuple(x)))
        branches = sorted(values)
        for j, k in itertools.combinations(branches, 2):
            gap = np.abs(values[j] - values[k])
            i = int(np.argmax(gap))
            out["H4"].update(gap[i], ("edge", edge.id, "branches", (j, k), tuple(x)))
    return out, scale


def _branch_sweep(H, complex, branch, covecs, n_samples, rng_seed):
    out = {name: _Worst() for name in ("H15", "H3")}
    scale = 0.0
    rng = np.random.default_rng(rng_seed)
    pts = branch_samples(branch, max(2, int(math.sqrt(n_samples)) + 1))
    norms = np.linalg.norm(covecs, axis=1)
    dirs = covecs[norms > 0] / norms[norms > 0][:, None]
    delta = 1e-3 * complex.diameter
    tol = H.closure_tol * complex.diameter
    for x in pts:
        h = H.eval_many(branch.id, x[None, :], covecs)
        scale = max(scale, float(np.max(np.abs(h))))
        near = H.eval_many(branch.id, x[None, :], 2 * H.R_p * dirs)
        far = H.eval_many(branch.id, x[None, :], 4 * H.R_p * dirs)
        growth = np.clip(near - far, 0.0, None)
        i = int(np.argmax(growth))
        out["H3"].update(growth[i], ("branch", branch.id, tuple(x)))
        u = rng.normal(size=branch.dim)
        u /= np.linalg.norm(u)
        for sign in (1.0, -1.0):
            y = x + sign * delta * u
            y4 = x + sign * 0.25 * delta * u
            if not (branch.contains(y, tol)[0] and branch.contains(y4, tol)[0]):
                continue
            w = np.max(np.abs(H.eval_many(branch.id, y[None, :], covecs) - h))
            w4 = np.max(np.abs(H.eval_many(branch.id, y4[None, :], covecs) - h))
            out["H15"].update(max(0.0, w4 - 0.5 * w), ("branch", branch.id, tuple(x)))
            break
    return out, scale


def _guarded(func, *args):
    try:
        return func(*args)
    except (HamiltonianError, GeometryError, ValueError, ArithmeticError) as e:
        return str(e)


def check_compatibility(H, complex, n_samples=16, seed=0, threads=1, tol=None):
    """Sample the structural hypotheses on ``complex`` and report.

    Edge hypotheses are evaluated in the canonical chart coordinates
    ``(p_n, p')`` shared by all incident branches."""
    rng = np.random.default_rng(seed)
    covecs = _covectors(complex.branch_dim, n_samples, H.R_p, rng)
    tasks = []
    for edge in complex.ram_edges:
        if edge.key in complex.boundary:
            continue
        tasks.append((_guarded, _edge_sweep, H, complex, edge, covecs, n_samples))
    for branch in complex.branches:
        tasks.append(
            (_guarded, _branch_sweep, H, complex, branch, covecs, n_samples,
             seed + branch.id + 1)
        )
    results = run_tasks(tasks, threads=threads)

    merged = {name: _Worst() for name in HYPOTHESES}
    errors = []
    scale = 0.0
    for result in results:
        if isinstance(result, str):
            errors.append(result)
            continue
        partial, part_scale = result
        scale = max(scale, part_scale)
        for name, worst in partial.items():
            if worst.location is not None:
                merged[name].update(worst.magnitude, worst.location)
    if tol is None:
        tol = 1e-8 * (1.0 + scale)
    verdicts = {}
    for name in HYPOTHESES:
        worst = merged[name]
        verdicts[name] = Verdict(name, worst.magnitude <= tol, worst.magnitude, worst.location)
        if not verdicts[name].passed:
            check_logger.info(
                "%s violated by %s at %s", name, format_float(worst.magnitude),
                worst.location,
            )
    for err in errors:
        check_logger.warning("sampling failure: %s", err)
    return CompatReport(verdicts, tol, errors)
