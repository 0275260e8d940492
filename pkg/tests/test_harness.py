import math
import unittest

import numpy as np

_cache = {}


def solved(name, h):
    from lepspace import complex as C
    from lepspace.dirichlet import DirichletProblem, solve_dirichlet
    from lepspace.hamiltonian import ConstantField, HamiltonianFamily
    from lepspace.metric import MeshParams

    key = (name, h)
    if key not in _cache:
        cx = getattr(C, name)()
        H = HamiltonianFamily.eikonal(cx, ConstantField(1.0))
        problem = DirichletProblem(cx, H, params=MeshParams(h=h))
        _cache[key] = (problem, solve_dirichlet(problem))
    return _cache[key]


# solvable fixtures; f = 1 and g = 0 in each
VALID_FIXTURES = ("square", "book3", "dihedral2", "cube", "y_network", "network_fig1")


def fixture_solved(name, h=0.125):
    from lepspace.dirichlet import DirichletProblem, solve_dirichlet
    from lepspace.hamiltonian import HamiltonianFamily
    from lepspace.metric import MeshParams
    from lepspace.parser import parse_complex_file
    from lepspace.runner import find_complex

    key = (name + ".lep", h)
    if key not in _cache:
        with open(find_complex(name), "rb") as fp:
            cf = parse_complex_file(fp.read())
        cx = cf.to_complex()
        H = HamiltonianFamily.eikonal(cx, cf.weights())
        problem = DirichletProblem(cx, H, params=MeshParams(h=h))
        _cache[key] = (problem, solve_dirichlet(problem))
    return _cache[key]


def linear_book_field(slope, h=0.25):
    """``slope * distance to the spine`` on every page of the book."""
    from lepspace.complex import book
    from lepspace.dirichlet import DirichletProblem, SolutionField
    from lepspace.hamiltonian import ConstantField, HamiltonianFamily
    from lepspace.metric import MeshParams

    cx = book(3)
    H = HamiltonianFamily.eikonal(cx, ConstantField(1.0))
    problem = DirichletProblem(cx, H, params=MeshParams(h=h))
    graph = problem.graph
    values = slope * np.hypot(graph.ambient[:, 0], graph.ambient[:, 1])
    return problem, SolutionField(graph, values, {})


def spine_node(graph):
    spine = np.nonzero(graph.ram_edge == 0)[0]
    return int(spine[np.argmin(np.abs(graph.ambient[spine, 2] - 0.5))])


class Test_check_subsolution(unittest.TestCase):
    def _callFUT(self, field, problem, **kw):
        from lepspace.harness import check_subsolution

        return check_subsolution(field, problem, **kw)

    def test_solution_passes(self):
        problem, field = solved("square", 1.0 / 16)
        report = self._callFUT(field, problem)
        self.assertTrue(report.passed)
        self.assertTrue(report.format().endswith("# verdict pass\n"))

    def test_doubled_field_fails(self):
        problem, field = solved("square", 1.0 / 16)
        report = self._callFUT(field.scaled(2.0), problem)
        self.assertFalse(report.passed)
        self.assertTrue(report.failures())
        self.assertGreater(report.worst("interior"), 2.0)

    def test_blended_field_passes(self):
        from lepspace.dirichlet import theta_blend

        problem, field = solved("square", 1.0 / 16)
        report = self._callFUT(theta_blend(field, 0.5), problem)
        self.assertTrue(report.passed)

    def test_book_with_transitions(self):
        from lepspace.harness import TRANSITION

        problem, field = solved("book", 0.125)
        report = self._callFUT(field, problem)
        self.assertTrue(report.passed, report.format())
        self.assertTrue(any(r.kind == TRANSITION for r in report.records))

    def test_explicit_tol(self):
        problem, field = solved("square", 1.0 / 16)
        report = self._callFUT(field, problem, tol=0.01)
        self.assertEqual(report.tol, 0.01)

    def test_exclude_sites(self):
        problem, field = solved("square", 1.0 / 16)
        full = self._callFUT(field, problem)
        centre = int(np.argmax(field.values))
        fewer = self._callFUT(
            field, problem, exclude=[problem.graph.node_point(centre)]
        )
        self.assertLess(len(fewer.records), len(full.records))

    def test_foreign_field(self):
        from lepspace.utilities import FieldMismatch

        problem, _field = solved("square", 1.0 / 16)
        _other_problem, other = solved("square", 0.125)
        with self.assertRaises(FieldMismatch):
            self._callFUT(other, problem)


class Test_check_supersolution(unittest.TestCase):
    def _callFUT(self, field, problem, **kw):
        from lepspace.harness import check_supersolution

        return check_supersolution(field, problem, **kw)

    def test_solution_passes(self):
        problem, field = solved("square", 1.0 / 16)
        self.assertTrue(self._callFUT(field, problem).passed)

    def test_halved_field_fails(self):
        problem, field = solved("square", 1.0 / 16)
        report = self._callFUT(field.scaled(0.5), problem, tol=0.5)
        self.assertFalse(report.passed)

    def test_best_effort_flag(self):
        problem, field = solved("book", 0.125)
        report = self._callFUT(field, problem)
        self.assertTrue(report.best_effort)
        self.assertIn("best-effort", report.format())
        interior = self._callFUT(field, problem, interior_only=True)
        self.assertFalse(interior.best_effort)


class Test_transition_residual(unittest.TestCase):
    def _callFUT(self, field, problem, i, j, k, condition):
        from lepspace.harness import transition_residual

        return transition_residual(field, problem, i, j, k, condition)

    def test_sub_valley(self):
        from lepspace.harness import SUB

        problem, field = linear_book_field(-0.5)
        i = spine_node(problem.graph)
        self.assertAlmostEqual(self._callFUT(field, problem, i, 0, 1, SUB), -0.75)

    def test_sub_steep_valley(self):
        from lepspace.harness import SUB

        problem, field = linear_book_field(-2.0)
        i = spine_node(problem.graph)
        self.assertAlmostEqual(self._callFUT(field, problem, i, 1, 2, SUB), 3.0)

    def test_sub_ridge_is_vacuous(self):
        from lepspace.harness import SUB

        problem, field = linear_book_field(2.0)
        i = spine_node(problem.graph)
        self.assertEqual(self._callFUT(field, problem, i, 0, 2, SUB), -math.inf)

    def test_super_ridge(self):
        from lepspace.harness import SUPER

        problem, field = linear_book_field(0.5)
        i = spine_node(problem.graph)
        self.assertAlmostEqual(self._callFUT(field, problem, i, 2, 0, SUPER), 1.0)

    def test_super_kink_minimum_inside_slab(self):
        from lepspace.harness import SUB, SUPER

        # |Du| = 1 on every page but slope 0 is admissible across the spine
        problem, field = linear_book_field(1.0)
        i = spine_node(problem.graph)
        self.assertAlmostEqual(self._callFUT(field, problem, i, 2, 0, SUPER), 1.0)
        self.assertEqual(self._callFUT(field, problem, i, 2, 0, SUB), -math.inf)

    def test_super_kink_fails_check(self):
        from lepspace.harness import TRANSITION, check_supersolution

        problem, field = linear_book_field(1.0)
        i = spine_node(problem.graph)
        report = check_supersolution(field, problem, tol=0.1)
        (record,) = [r for r in report.records if r.site == i]
        self.assertEqual(record.kind, TRANSITION)
        self.assertAlmostEqual(record.residual, 1.0)
        self.assertFalse(record.passed)
        self.assertFalse(report.passed)

    def test_super_valley_is_vacuous(self):
        from lepspace.harness import SUPER

        problem, field = linear_book_field(-2.0)
        i = spine_node(problem.graph)
        self.assertEqual(self._callFUT(field, problem, i, 0, 1, SUPER), -math.inf)


class TestSolverOutputs(unittest.TestCase):
    def test_subsolution_on_every_fixture(self):
        from lepspace.harness import check_subsolution

        for name in VALID_FIXTURES:
            with self.subTest(fixture=name):
                problem, field = fixture_solved(name)
                report = check_subsolution(field, problem)
                self.assertTrue(report.passed, report.format())

    def test_interior_supersolution_on_every_fixture(self):
        from lepspace.harness import check_supersolution

        for name in VALID_FIXTURES:
            with self.subTest(fixture=name):
                problem, field = fixture_solved(name)
                report = check_supersolution(field, problem, interior_only=True)
                self.assertTrue(report.passed, report.format())

    def test_blends_stay_below_and_pass(self):
        from lepspace.dirichlet import theta_blend
        from lepspace.harness import check_subsolution

        for name in VALID_FIXTURES:
            problem, field = fixture_solved(name)
            for theta in (0.25, 0.5, 0.75):
                with self.subTest(fixture=name, theta=theta):
                    blended = theta_blend(field, theta)
                    self.assertTrue(np.all(blended.values <= field.values))
                    report = check_subsolution(blended, problem)
                    self.assertTrue(report.passed, report.format())


class Test_check_lipschitz(unittest.TestCase):
    def _callFUT(self, field, graph, C):
        from lepspace.harness import check_lipschitz

        return check_lipschitz(field, graph, C)

    def test_solution(self):
        problem, field = solved("square", 1.0 / 16)
        report = self._callFUT(field, problem.graph, 1.0)
        self.assertTrue(report.passed)
        self.assertLessEqual(report.worst(), 1.0 + 1e-12)

    def test_doubled(self):
        problem, field = solved("square", 1.0 / 16)
        self.assertFalse(self._callFUT(field.scaled(2.0), problem.graph, 1.0).passed)


class Test_compare_fields(unittest.TestCase):
    def _callFUT(self, u, v, **kw):
        from lepspace.harness import compare_fields

        return compare_fields(u, v, **kw)

    def test_ordered(self):
        _problem, field = solved("square", 1.0 / 16)
        self.assertTrue(self._callFUT(field.scaled(0.5), field).passed)
        self.assertTrue(self._callFUT(field, field.shifted(0.1)).passed)

    def test_violated(self):
        _problem, field = solved("square", 1.0 / 16)
        report = self._callFUT(field, field.scaled(0.5))
        self.assertFalse(report.passed)

    def test_precondition_unmet(self):
        _problem, field = solved("square", 1.0 / 16)
        report = self._callFUT(field.shifted(0.1), field)
        self.assertEqual(report.passed, None)
        self.assertEqual(report.status, "precondition unmet")
        self.assertTrue(report.format().endswith("# verdict precondition unmet\n"))

    def test_precondition_given(self):
        _problem, field = solved("square", 1.0 / 16)
        report = self._callFUT(field.shifted(0.1), field, boundary_ordering_ok=True)
        self.assertFalse(report.passed)

    def test_different_graphs(self):
        from lepspace.utilities import FieldMismatch

        _p1, a = solved("square", 1.0 / 16)
        _p2, b = solved("square", 0.125)
        with self.assertRaises(FieldMismatch):
            self._callFUT(a, b)


class Test_check_distance_bound(unittest.TestCase):
    def _callFUT(self, field, graph, **kw):
        from lepspace.harness import check_distance_bound

        return check_distance_bound(field, graph, **kw)

    def test_solution(self):
        problem, field = solved("square", 1.0 / 16)
        report = self._callFUT(field, problem.graph, n_pairs=64)
        self.assertTrue(report.passed)
        self.assertTrue(report.records)

    def test_doubled(self):
        problem, field = solved("square", 1.0 / 16)
        report = self._callFUT(field.scaled(2.0), problem.graph, n_pairs=64)
        self.assertFalse(report.passed)

    def test_explicit_pairs(self):
        problem, field = solved("square", 1.0 / 16)
        report = self._callFUT(field, problem.graph, pairs=[(30, 0), (0, 30)])
        self.assertEqual(len(report.records), 2)


class TestCheckReport(unittest.TestCase):
    def _makeOne(self, records, **kw):
        from lepspace.harness import CheckReport

        return CheckReport("sub", records, 0.5, **kw)

    def _record(self, site, residual, kind="interior"):
        from lepspace.harness import CheckRecord

        return CheckRecord(site, kind, 0, None, "sub", residual, residual <= 0.5)

    def test_summary_keeps_worst(self):
        inst = self._makeOne([self._record(0, 0.1), self._record(1, 0.3)])
        self.assertEqual(inst.summary, {"sub/interior": 0.3})
        self.assertTrue(inst.passed)

    def test_format(self):
        inst = self._makeOne([self._record(4, 0.75)], warnings=["careful"])
        lines = inst.format().splitlines()
        self.assertEqual(
            lines[0],
            "site=4 kind=interior branch=0 edge=None condition=sub residual=0.75 FAIL",
        )
        self.assertIn("# warning: careful", lines)
        self.assertEqual(lines[-1], "# verdict fail")

    def test_worst_empty(self):
        self.assertEqual(self._makeOne([]).worst(), -math.inf)
