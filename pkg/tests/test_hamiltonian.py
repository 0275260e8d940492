import unittest

import numpy as np


class TestConstantField(unittest.TestCase):
    def _makeOne(self, value):
        from lepspace.hamiltonian import ConstantField

        return ConstantField(value)

    def test_values(self):
        inst = self._makeOne(2)
        np.testing.assert_array_equal(inst.values(None, [[0.1, 0.2], [0.3, 0.4]]), [2, 2])

    def test_spec(self):
        self.assertEqual(self._makeOne(1).spec(), "const 1.0")


class TestPolynomialField(unittest.TestCase):
    def _makeOne(self, terms):
        from lepspace.hamiltonian import PolynomialField

        return PolynomialField(terms)

    def test_values(self):
        inst = self._makeOne([(1.0, (0, 0)), (2.0, (1, 0)), (3.0, (1, 2))])
        result = inst.values(None, [[0.5, 2.0]])
        np.testing.assert_allclose(result, [1.0 + 1.0 + 3.0 * 0.5 * 4.0])

    def test_negative_exponent(self):
        with self.assertRaises(ValueError):
            self._makeOne([(1.0, (-1, 0))])

    def test_second_coordinate_on_segment(self):
        from lepspace.utilities import HamiltonianError

        inst = self._makeOne([(1.0, (0, 1))])
        with self.assertRaises(HamiltonianError):
            inst.values(None, [[0.5]])

    def test_spec(self):
        inst = self._makeOne([(1.0, (0, 0)), (0.5, (1, 0))])
        self.assertEqual(inst.spec(), "poly 1.0 0 0, 0.5 1 0")


class TestSampledField(unittest.TestCase):
    def _makeOne(self, samples):
        from lepspace.hamiltonian import SampledField

        return SampledField(samples)

    def test_square_vertices_and_center(self):
        from lepspace.complex import square

        cx = square()
        inst = self._makeOne({0: 1.0, 1: 2.0, 2: 3.0, 3: 4.0})
        branch = cx.branches[0]
        np.testing.assert_allclose(inst.values(branch, branch.local), [1, 2, 3, 4])
        np.testing.assert_allclose(inst.values(branch, [[0.5, 0.5]]), [2.5])

    def test_linear_along_edge(self):
        from lepspace.complex import square

        cx = square()
        inst = self._makeOne({0: 0.0, 1: 2.0, 2: 2.0, 3: 0.0})
        np.testing.assert_allclose(
            inst.values(cx.branches[0], [[0.25, 0.0]]), [0.5], atol=1e-12
        )

    def test_segment(self):
        from lepspace.complex import y_network

        cx = y_network()
        inst = self._makeOne({0: 1.0, 1: 3.0, 2: 0.0, 3: 0.0})
        np.testing.assert_allclose(inst.values(cx.branches[0], [[0.5]]), [2.0])

    def test_missing_sample(self):
        from lepspace.complex import square
        from lepspace.utilities import StructureError

        inst = self._makeOne({0: 1.0})
        with self.assertRaises(StructureError):
            inst.values(square().branches[0], [[0.5, 0.5]])

    def test_spec(self):
        self.assertEqual(self._makeOne({1: 2, 0: 1}).spec(), "samples 0=1.0 1=2.0")


class TestHamiltonianFamilyEikonal(unittest.TestCase):
    def _makeOne(self, cx=None, weights=None):
        from lepspace.complex import book
        from lepspace.hamiltonian import ConstantField, HamiltonianFamily

        if cx is None:
            cx = book(3)
        if weights is None:
            weights = ConstantField(1.0)
        return HamiltonianFamily.eikonal(cx, weights)

    def test_eval(self):
        inst = self._makeOne()
        self.assertAlmostEqual(inst.eval(0, [0.5, 0.5], [0.6, 0.8]), 0.0)
        self.assertAlmostEqual(inst.eval(1, [0.5, 0.5], [1.0, 1.0]), 1.0)

    def test_eval_many_broadcasts_point(self):
        inst = self._makeOne()
        result = inst.eval_many(0, [[0.5, 0.5]], [[0, 0], [1, 0], [2, 0]])
        np.testing.assert_allclose(result, [-1, 0, 3])

    def test_lagrangian_closed_form(self):
        inst = self._makeOne()
        self.assertAlmostEqual(inst.lagrangian(0, [0.2, 0.2], [2.0, 0.0]), 2.0)

    def test_fenchel_young(self):
        inst = self._makeOne()
        rng = np.random.default_rng(0)
        n = 10000
        p = rng.normal(scale=3.0, size=(n, 2))
        q = rng.normal(scale=3.0, size=(n, 2))
        x = rng.uniform(0, 1, size=(n, 2))
        total = inst.lagrangian_many(0, x, q) + inst.eval_many(0, x, p)
        dots = np.einsum("ij,ij->i", p, q)
        self.assertTrue(np.all(total >= dots - 1e-12))

    def test_fenchel_young_equality(self):
        inst = self._makeOne()
        rng = np.random.default_rng(1)
        x = rng.uniform(0, 1, size=(100, 2))
        p = rng.normal(size=(100, 2))
        q = 2.0 * p
        total = inst.lagrangian_many(0, x, q) + inst.eval_many(0, x, p)
        np.testing.assert_allclose(total, np.einsum("ij,ij->i", p, q), atol=1e-12)

    def test_lagrangian_many_matches_lagrangian(self):
        from lepspace.hamiltonian import PolynomialField

        inst = self._makeOne(weights=PolynomialField([(1.0, (0, 0)), (2.0, (1, 0))]))
        x = np.array([[0.1, 0.2], [0.7, 0.9]])
        q = np.array([[1.0, -1.0], [0.0, 3.0]])
        expected = [inst.lagrangian(1, xi, qi) for xi, qi in zip(x, q)]
        np.testing.assert_allclose(inst.lagrangian_many(1, x, q), expected)

    def test_gauge_positively_homogeneous(self):
        from lepspace.hamiltonian import PolynomialField

        inst = self._makeOne(weights=PolynomialField([(1.0, (0, 0)), (3.0, (1, 1))]))
        rng = np.random.default_rng(2)
        n = 1000
        x = rng.uniform(0, 1, size=(n, 2))
        q = rng.normal(size=(n, 2))
        lam = rng.uniform(0, 10, size=n)
        np.testing.assert_allclose(
            inst.gauge_many(0, x, lam[:, None] * q),
            lam * inst.gauge_many(0, x, q),
            rtol=1e-12,
        )

    def test_gauge(self):
        from lepspace.hamiltonian import ConstantField

        inst = self._makeOne(weights=ConstantField(4.0))
        self.assertAlmostEqual(inst.gauge(2, [0.5, 0.5], [0.3, 0.4]), 1.0)

    def test_max_speed(self):
        from lepspace.hamiltonian import PolynomialField

        inst = self._makeOne(weights=PolynomialField([(1.0, (0, 0)), (3.0, (1, 0))]))
        self.assertAlmostEqual(inst.max_speed(), 2.0)

    def test_per_branch_weights(self):
        from lepspace.hamiltonian import ConstantField

        inst = self._makeOne(weights={"*": ConstantField(1.0), 2: ConstantField(9.0)})
        self.assertAlmostEqual(inst.weight(2, [[0.5, 0.5]])[0], 9.0)
        self.assertAlmostEqual(inst.weight(0, [[0.5, 0.5]])[0], 1.0)

    def test_missing_branch_weight(self):
        from lepspace.hamiltonian import ConstantField
        from lepspace.utilities import StructureError

        with self.assertRaises(StructureError):
            self._makeOne(weights={0: ConstantField(1.0)})

    def test_wrong_number_of_weights(self):
        from lepspace.hamiltonian import ConstantField
        from lepspace.utilities import StructureError

        with self.assertRaises(StructureError):
            self._makeOne(weights=[ConstantField(1.0)] * 2)

    def test_negative_weight(self):
        from lepspace.hamiltonian import ConstantField
        from lepspace.utilities import HamiltonianError

        with self.assertRaises(HamiltonianError):
            self._makeOne(weights=ConstantField(-1.0))

    def test_point_outside_branch(self):
        from lepspace.utilities import HamiltonianError

        inst = self._makeOne()
        with self.assertRaises(HamiltonianError):
            inst.eval(0, [1.5, 0.5], [0.0, 0.0])

    def test_wrong_dimension(self):
        from lepspace.utilities import HamiltonianError

        inst = self._makeOne()
        with self.assertRaises(HamiltonianError):
            inst.eval(0, [0.5], [0.0])

    def test_unknown_branch(self):
        from lepspace.utilities import StructureError

        inst = self._makeOne()
        with self.assertRaises(StructureError):
            inst.eval(7, [0.5, 0.5], [0.0, 0.0])

    def test_digest(self):
        from lepspace.hamiltonian import ConstantField

        a = self._makeOne().digest()
        self.assertEqual(a, self._makeOne().digest())
        self.assertNotEqual(a, self._makeOne(weights=ConstantField(2.0)).digest())


class TestHamiltonianFamilyGeneric(unittest.TestCase):
    def _makeOne(self, evaluators=None, **kw):
        from lepspace.complex import square
        from lepspace.hamiltonian import HamiltonianFamily

        if evaluators is None:
            evaluators = unit_eikonal
        return HamiltonianFamily.generic(square(), evaluators, **kw)

    def test_eval(self):
        inst = self._makeOne()
        self.assertAlmostEqual(inst.eval(0, [0.5, 0.5], [3.0, 4.0]), 24.0)

    def test_lagrangian_matches_closed_form(self):
        inst = self._makeOne()
        self.assertAlmostEqual(inst.lagrangian(0, [0.5, 0.5], [1.0, 0.0]), 1.25, places=6)
        self.assertAlmostEqual(inst.lagrangian(0, [0.5, 0.5], [0.0, 0.0]), 1.0, places=6)

    def test_gauge_matches_closed_form(self):
        inst = self._makeOne()
        self.assertAlmostEqual(inst.gauge(0, [0.5, 0.5], [0.6, 0.8]), 1.0, places=5)
        self.assertEqual(inst.gauge(0, [0.5, 0.5], [0.0, 0.0]), 0.0)

    def test_gauge_cached_when_uniform(self):
        inst = self._makeOne(spatially_uniform=True)
        a = inst.gauge(0, [0.2, 0.2], [1.0, 0.0])
        b = inst.gauge(0, [0.8, 0.8], [2.0, 0.0])
        self.assertEqual(len(inst._gauge_cache), 1)
        self.assertAlmostEqual(b, 2 * a)

    def test_gauge_positively_homogeneous(self):
        inst = self._makeOne(evaluators=drifting_eikonal)
        q = np.array([0.3, -0.4])
        base = inst.gauge(0, [0.5, 0.5], q)
        self.assertGreater(base, 0.0)
        for lam in (0.5, 2.0, 7.0):
            self.assertAlmostEqual(
                inst.gauge(0, [0.5, 0.5], lam * q), lam * base, places=5
            )

    def test_not_coercive(self):
        from lepspace.utilities import HamiltonianError

        inst = self._makeOne(evaluators=linear_hamiltonian)
        with self.assertRaises(HamiltonianError):
            inst.lagrangian(0, [0.5, 0.5], [2.0, 0.0])

    def test_gauge_not_coercive(self):
        from lepspace.utilities import HamiltonianError

        inst = self._makeOne(evaluators=linear_hamiltonian)
        with self.assertRaises(HamiltonianError):
            inst.gauge(0, [0.5, 0.5], [0.0, 1.0])

    def test_lagrangian_many_lenient(self):
        inst = self._makeOne(evaluators=linear_hamiltonian)
        values = inst.lagrangian_many(0, [[0.5, 0.5]], [[0.0, 1.0]], strict=False)
        self.assertGreater(values[0], 100.0)

    def test_max_speed(self):
        inst = self._makeOne()
        self.assertAlmostEqual(inst.max_speed(n_samples=2), 1.0, places=9)

    def test_no_weights(self):
        from lepspace.utilities import HamiltonianError

        inst = self._makeOne()
        with self.assertRaises(HamiltonianError):
            inst.weight(0, [[0.5, 0.5]])

    def test_strictly_convex_needs_convex(self):
        inst = self._makeOne(convex=False, strictly_convex=True)
        self.assertFalse(inst.strictly_convex)

    def test_bad_R_p(self):
        with self.assertRaises(ValueError):
            self._makeOne(R_p=0)


class Test_check_compatibility(unittest.TestCase):
    def _callFUT(self, H, cx, **kw):
        from lepspace.hamiltonian import check_compatibility

        return check_compatibility(H, cx, **kw)

    def _family(self, cx, weights):
        from lepspace.hamiltonian import HamiltonianFamily

        return HamiltonianFamily.eikonal(cx, weights)

    def test_uniform_eikonal_passes(self):
        from lepspace.complex import book
        from lepspace.hamiltonian import ConstantField

        cx = book(3)
        report = self._callFUT(self._family(cx, ConstantField(1.0)), cx)
        self.assertTrue(report.passed, report.format())
        self.assertEqual(report.failures, [])

    def test_distance_weight_passes(self):
        from lepspace.complex import book
        from lepspace.hamiltonian import PolynomialField

        cx = book(3)
        weights = PolynomialField([(1.0, (0, 0)), (1.0, (1, 0)), (0.5, (0, 1))])
        report = self._callFUT(self._family(cx, weights), cx)
        self.assertTrue(report.passed, report.format())

    def test_cross_branch_mismatch(self):
        from lepspace.complex import book
        from lepspace.hamiltonian import ConstantField

        cx = book(3)
        weights = {"*": ConstantField(1.0), 1: ConstantField(2.0)}
        report = self._callFUT(self._family(cx, weights), cx)
        self.assertFalse(report.passed)
        self.assertEqual(report.failures, ["H4"])
        self.assertAlmostEqual(report["H4"].magnitude, 1.0)
        self.assertIn("H4   FAIL worst=", report.format())

    def test_network(self):
        from lepspace.complex import y_network
        from lepspace.hamiltonian import ConstantField

        cx = y_network()
        report = self._callFUT(self._family(cx, ConstantField(1.0)), cx)
        self.assertTrue(report.passed, report.format())

    def test_generic_symmetric_passes(self):
        from lepspace.complex import dihedral
        from lepspace.hamiltonian import HamiltonianFamily

        cx = dihedral()
        H = HamiltonianFamily.generic(cx, unit_eikonal)
        report = self._callFUT(H, cx, n_samples=8)
        self.assertTrue(report.passed, report.format())

    def test_generic_asymmetric_fails_symmetry(self):
        from lepspace.complex import dihedral
        from lepspace.hamiltonian import HamiltonianFamily

        cx = dihedral()
        H = HamiltonianFamily.generic(cx, drifting_eikonal)
        report = self._callFUT(H, cx, n_samples=8)
        self.assertIn("H5", report.failures)

    def test_threads_do_not_change_result(self):
        from lepspace.complex import book
        from lepspace.hamiltonian import ConstantField

        cx = book(3)
        weights = {"*": ConstantField(1.0), 1: ConstantField(2.0)}
        H = self._family(cx, weights)
        a = self._callFUT(H, cx, seed=3)
        b = self._callFUT(H, cx, seed=3, threads=3)
        self.assertEqual(a.format(), b.format())

    def test_sampling_failure_reported(self):
        from lepspace.complex import square
        from lepspace.hamiltonian import HamiltonianFamily

        cx = square()
        H = HamiltonianFamily.generic(cx, failing_hamiltonian)
        report = self._callFUT(H, cx, n_samples=4)
        self.assertFalse(report.passed)
        self.assertIn("sampling failure", report.format())


def unit_eikonal(x, p):
    return float(np.dot(p, p)) - 1.0


def drifting_eikonal(x, p):
    return float(np.dot(p, p)) + 0.5 * float(p[0]) - 1.0


def linear_hamiltonian(x, p):
    return float(p[0]) - 1.0


def failing_hamiltonian(x, p):
    raise ArithmeticError("evaluator blew up")
