import math
import unittest

import numpy as np


class TestLEPComplex(unittest.TestCase):
    def _makeOne(self, *arg, **kw):
        from lepspace.complex import LEPComplex

        return LEPComplex(*arg, **kw)

    def test_square_local_coordinates(self):
        from lepspace.complex import square

        cx = square()
        local = cx.to_local(0, [[0.25, 0.75, 0.0]])
        np.testing.assert_allclose(local, [[0.25, 0.75]], atol=1e-12)
        self.assertAlmostEqual(cx.diameter, math.sqrt(2))

    def test_book_local_is_distance_to_spine(self):
        from lepspace.complex import book

        cx = book(3)
        for j, branch in enumerate(cx.branches):
            theta = 2 * math.pi * j / 3
            p = [0.4 * math.cos(theta), 0.4 * math.sin(theta), 0.7]
            np.testing.assert_allclose(cx.to_local(j, p), [0.4, 0.7], atol=1e-12)

    def test_point_and_ambient_round_trip(self):
        from lepspace.complex import book

        cx = book(3)
        pt = cx.point(1, cx.to_ambient(1, [0.2, 0.3]))
        self.assertEqual(pt.branch, 1)
        np.testing.assert_allclose(pt.coords, (0.2, 0.3), atol=1e-12)
        np.testing.assert_allclose(cx.ambient(pt), cx.to_ambient(1, [0.2, 0.3]))

    def test_vertices_immutable(self):
        from lepspace.complex import square

        cx = square()
        with self.assertRaises(ValueError):
            cx.vertices[0, 0] = 5.0

    def test_missing_vertex(self):
        from lepspace.utilities import StructureError

        with self.assertRaises(StructureError):
            self._makeOne([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 7)])

    def test_polygons_need_three_space(self):
        from lepspace.utilities import StructureError

        with self.assertRaises(StructureError):
            self._makeOne([(0, 0), (1, 0), (0, 1)], [(0, 1, 2)])

    def test_bad_branch_dim(self):
        from lepspace.utilities import StructureError

        with self.assertRaises(StructureError):
            self._makeOne([(0, 0, 0), (1, 0, 0)], [(0, 1)], branch_dim=3)

    def test_glue_to_branch_without_facet(self):
        from lepspace.utilities import StructureError

        verts = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)]
        with self.assertRaises(StructureError):
            self._makeOne(verts, [(0, 1, 2, 3)], glue=[((0, 2), (0,))])

    def test_duplicate_glue(self):
        from lepspace.utilities import StructureError

        verts = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)]
        with self.assertRaises(StructureError):
            self._makeOne(
                verts, [(0, 1, 2, 3)], glue=[((0, 1), None), ((1, 0), None)]
            )

    def test_boundary_entry_not_a_facet(self):
        from lepspace.utilities import StructureError

        verts = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)]
        with self.assertRaises(StructureError):
            self._makeOne(verts, [(0, 1, 2, 3)], boundary=[(0, 2)])

    def test_tol_rel_must_be_positive(self):
        verts = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)]
        with self.assertRaises(ValueError):
            self._makeOne(verts, [(0, 1, 2, 3)], tol_rel=0)

    def test_sigma_and_boundary_vertices(self):
        from lepspace.complex import book

        cx = book(3)
        self.assertEqual(cx.sigma_vertices, frozenset())
        self.assertEqual(cx.boundary_vertices, frozenset(range(8)))

    def test_digest_stable(self):
        from lepspace.complex import book

        self.assertEqual(book(3).digest(), book(3).digest())
        self.assertNotEqual(book(3).digest(), book(2).digest())


class Test_validate_complex(unittest.TestCase):
    def _callFUT(self, cx):
        from lepspace.complex import validate_complex

        return validate_complex(cx)

    def _fixture(self, name):
        from lepspace.parser import parse_complex_file
        from lepspace.runner import FIXTURES
        import os

        with open(os.path.join(FIXTURES, name), "rb") as fp:
            return parse_complex_file(fp.read()).to_complex()

    def test_builders_valid(self):
        from lepspace import complex as C

        for cx in (
            C.square(),
            C.book(3),
            C.dihedral(),
            C.cube_surface(),
            C.y_network(),
            C.extrude_network(
                [(0, 0), (1, 0), (-0.5, 0.8), (-0.5, -0.8)],
                [(0, 1), (0, 2), (0, 3)],
            ),
        ):
            report = self._callFUT(cx)
            self.assertTrue(report.valid, report.format())
            self.assertEqual(report.format(), "valid")

    def test_cube_corners_not_excluded(self):
        from lepspace.complex import RULE_CORNER, cube_surface

        report = self._callFUT(cube_surface(exclude_corners=False))
        self.assertFalse(report.valid)
        self.assertEqual(report.rules, [RULE_CORNER] * 8)

    def test_coplanar_glue(self):
        from lepspace.complex import RULE_HYPERPLANES

        report = self._callFUT(self._fixture("coplanar_glue.lep"))
        self.assertEqual(report.rules, [RULE_HYPERPLANES])

    def test_disconnected(self):
        from lepspace.complex import RULE_DISCONNECTED

        report = self._callFUT(self._fixture("disconnected.lep"))
        self.assertEqual(report.rules, [RULE_DISCONNECTED])

    def test_dangling_facet(self):
        from lepspace.complex import RULE_DANGLING

        report = self._callFUT(self._fixture("dangling_facet.lep"))
        self.assertEqual(report.rules, [RULE_DANGLING])
        self.assertTrue(report.format().startswith("invalid\n  "))

    def test_unclassified_facet(self):
        from lepspace.complex import LEPComplex, RULE_DANGLING

        verts = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)]
        cx = LEPComplex(verts, [(0, 1, 2, 3)], boundary=[(1, 2), (2, 3), (3, 0)])
        report = self._callFUT(cx)
        self.assertEqual(report.rules, [RULE_DANGLING])

    def test_non_planar(self):
        from lepspace.complex import LEPComplex, RULE_NON_PLANAR

        verts = [(0, 0, 0), (1, 0, 0), (1, 1, 0.2), (0, 1, 0)]
        cx = LEPComplex(
            verts, [(0, 1, 2, 3)], boundary=[(0, 1), (1, 2), (2, 3), (3, 0)]
        )
        self.assertIn(RULE_NON_PLANAR, self._callFUT(cx).rules)

    def test_bow_tie_not_simple(self):
        from lepspace.complex import LEPComplex, RULE_NON_SIMPLE

        verts = [(0, 0, 0), (3, 0, 0), (0, 1, 0), (1, 2, 0)]
        cx = LEPComplex(
            verts, [(0, 1, 2, 3)], boundary=[(0, 1), (1, 2), (2, 3), (3, 0)]
        )
        self.assertIn(RULE_NON_SIMPLE, self._callFUT(cx).rules)

    def test_crossing_branches(self):
        from lepspace.complex import LEPComplex, RULE_INTERSECTION

        verts = [
            (0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
            (0.5, -0.5, -0.5), (0.5, 1.5, -0.5), (0.5, 1.5, 0.5), (0.5, -0.5, 0.5),
        ]
        cx = LEPComplex(
            verts,
            [(0, 1, 2, 3), (4, 5, 6, 7)],
            boundary=[
                (0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6), (6, 7), (7, 4),
            ],
        )
        self.assertIn(RULE_INTERSECTION, self._callFUT(cx).rules)

    def test_crossing_segments(self):
        from lepspace.complex import network, RULE_INTERSECTION

        cx = network([(0, 0), (1, 1), (0, 1), (1, 0)], [(0, 1), (2, 3)])
        self.assertIn(RULE_INTERSECTION, self._callFUT(cx).rules)


class Test_incidence(unittest.TestCase):
    def test_book_spine(self):
        from lepspace.complex import book, incidence, is_simple, ramification_order

        cx = book(3)
        self.assertEqual(incidence(cx, 0), frozenset({0, 1, 2}))
        self.assertEqual(incidence(cx, (1, 0)), frozenset({0, 1, 2}))
        self.assertEqual(ramification_order(cx, 0), 3)
        self.assertFalse(is_simple(cx, 0))

    def test_cube_edges_simple(self):
        from lepspace.complex import cube_surface, is_simple

        cx = cube_surface()
        self.assertEqual(len(cx.ram_edges), 12)
        self.assertTrue(all(is_simple(cx, e) for e in range(12)))

    def test_y_network(self):
        from lepspace.complex import ramification_order, y_network

        cx = y_network()
        self.assertEqual(ramification_order(cx, (0,)), 3)

    def test_boundary_facet_is_not_an_edge(self):
        from lepspace.complex import incidence, square
        from lepspace.utilities import GeometryError

        with self.assertRaises(GeometryError):
            incidence(square(), (0, 1))

    def test_unknown_edge(self):
        from lepspace.complex import incidence, square
        from lepspace.utilities import StructureError

        with self.assertRaises(StructureError):
            incidence(square(), 3)


class Test_normal_vector(unittest.TestCase):
    def _callFUT(self, cx, branch, facet):
        from lepspace.complex import normal_vector

        return normal_vector(cx, branch, facet)

    def test_square_inward(self):
        from lepspace.complex import square

        cx = square()
        np.testing.assert_allclose(self._callFUT(cx, 0, 0), [0, 1], atol=1e-12)
        np.testing.assert_allclose(self._callFUT(cx, 0, 1), [-1, 0], atol=1e-12)

    def test_book_spine_normal_points_into_page(self):
        from lepspace.complex import book

        cx = book(3)
        for j in range(3):
            np.testing.assert_allclose(self._callFUT(cx, j, 3), [1, 0], atol=1e-12)

    def test_unit_length(self):
        from lepspace.complex import cube_surface

        cx = cube_surface()
        for b in cx.branches:
            for f in b.facets:
                self.assertAlmostEqual(
                    np.linalg.norm(self._callFUT(cx, b.id, f.id)), 1.0
                )

    def test_network_normals(self):
        from lepspace.complex import y_network

        cx = y_network()
        for j in range(3):
            np.testing.assert_allclose(self._callFUT(cx, j, 0), [1.0])
            np.testing.assert_allclose(self._callFUT(cx, j, 1), [-1.0])

    def test_unknown_facet(self):
        from lepspace.complex import square
        from lepspace.utilities import StructureError

        with self.assertRaises(StructureError):
            self._callFUT(square(), 0, 9)


class Test_canonical_chart(unittest.TestCase):
    def _callFUT(self, cx, x):
        from lepspace.complex import canonical_chart

        return canonical_chart(cx, x)

    def test_book_chart(self):
        from lepspace.complex import book

        cx = book(3)
        chart = self._callFUT(cx, [0.0, 0.0, 0.5])
        self.assertEqual(chart.r, 3)
        self.assertEqual(chart.order, {0: 1, 1: 2, 2: 3})
        for j in range(3):
            p = cx.to_ambient(j, [0.25, 0.75])
            np.testing.assert_allclose(chart.to_model(j, p), [0.25, 0.25], atol=1e-12)
            np.testing.assert_allclose(
                chart.from_model(j, [0.25, 0.25]), p, atol=1e-12
            )

    def test_chart_is_isometric(self):
        from lepspace.complex import dihedral

        cx = dihedral()
        chart = self._callFUT(cx, [0.0, 0.0, 0.3])
        a = cx.to_ambient(0, [0.1, 0.1])
        b = cx.to_ambient(0, [0.6, 0.9])
        za, zb = chart.to_model(0, a), chart.to_model(0, b)
        self.assertAlmostEqual(np.linalg.norm(za - zb), np.linalg.norm(a - b))

    def test_branch_point_input(self):
        from lepspace.complex import BranchPoint, book

        cx = book(3)
        chart = self._callFUT(cx, BranchPoint(2, (0.0, 0.5)))
        self.assertEqual(chart.edge, 0)

    def test_not_on_sigma(self):
        from lepspace.complex import book
        from lepspace.utilities import GeometryError

        with self.assertRaises(GeometryError):
            self._callFUT(book(3), [0.5, 0.0, 0.5])

    def test_at_corner(self):
        from lepspace.complex import book
        from lepspace.utilities import GeometryError

        with self.assertRaises(GeometryError):
            self._callFUT(book(3), [0.0, 0.0, 0.0])


class Test_unfold_pair(unittest.TestCase):
    def _callFUT(self, cx, edge, j, k):
        from lepspace.complex import unfold_pair

        return unfold_pair(cx, edge, j, k)

    def test_book_pages_straight_line(self):
        from lepspace.complex import book

        cx = book(3)
        pair = self._callFUT(cx, 0, 0, 1)
        za = pair.apply_local(0, [0.3, 0.4])
        zb = pair.apply_local(1, [0.5, 0.4])
        self.assertAlmostEqual(float(np.linalg.norm(za - zb)), 0.8)
        self.assertLess(za[0, 0], 0)
        self.assertGreater(zb[0, 0], 0)

    def test_edge_span(self):
        from lepspace.complex import book

        pair = self._callFUT(book(3), 0, 0, 2)
        lo, hi = pair.edge_span
        self.assertAlmostEqual(hi - lo, 1.0)

    def test_same_branch(self):
        from lepspace.complex import book
        from lepspace.utilities import GeometryError

        with self.assertRaises(GeometryError):
            self._callFUT(book(3), 0, 1, 1)

    def test_branch_not_incident(self):
        from lepspace.complex import cube_surface
        from lepspace.utilities import GeometryError

        with self.assertRaises(GeometryError):
            self._callFUT(cube_surface(), 0, 0, 1)

    def test_foreign_branch_apply(self):
        from lepspace.complex import book
        from lepspace.utilities import GeometryError

        pair = self._callFUT(book(3), 0, 0, 1)
        with self.assertRaises(GeometryError):
            pair.apply_local(2, [0.1, 0.1])


class Test_locate(unittest.TestCase):
    def _callFUT(self, cx, point):
        from lepspace.complex import locate

        return locate(cx, point)

    def test_kinds(self):
        from lepspace.complex import BranchPoint, book

        cx = book(3)
        self.assertEqual(self._callFUT(cx, BranchPoint(0, (0.5, 0.5))).kind, "interior")
        loc = self._callFUT(cx, BranchPoint(1, (0.0, 0.5)))
        self.assertEqual(loc.kind, "ramification")
        self.assertEqual(loc.edge, 0)
        self.assertEqual(self._callFUT(cx, BranchPoint(0, (1.0, 0.5))).kind, "boundary")
        self.assertEqual(self._callFUT(cx, BranchPoint(0, (0.0, 0.0))).kind, "boundary")
        self.assertEqual(self._callFUT(cx, BranchPoint(0, (2.0, 0.5))).kind, "outside")

    def test_unknown_branch(self):
        from lepspace.complex import BranchPoint, square
        from lepspace.utilities import StructureError

        with self.assertRaises(StructureError):
            self._callFUT(square(), BranchPoint(4, (0.5, 0.5)))
