import math

from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from nonsqueeze.exceptions import DomainError, NumericError
from nonsqueeze.numerics import adaptive_simpson, bisect_increasing


class AdaptiveSimpsonTests(SimpleTestCase):
    def test_exact_for_cubics(self):
        value, error = adaptive_simpson(lambda x: x ** 3, 0.0, 1.0)
        self.assertAlmostEqual(value, 0.25, places=15)
        self.assertLess(error, 1e-14)

    def test_matches_quad(self):
        for f, a, b in ((math.sin, 0.0, math.pi), (math.exp, -1.0, 2.0), (lambda x: 1.0 / (1.0 + x * x), 0.0, 5.0)):
            with self.subTest(f=f):
                expected, _ = quad(f, a, b, epsabs=1e-14)
                value, _ = adaptive_simpson(f, a, b)
                self.assertAlmostEqual(value, expected, delta=1e-12)

    def test_orientation(self):
        forward, _ = adaptive_simpson(math.cos, 0.0, 1.0)
        backward, _ = adaptive_simpson(math.cos, 1.0, 0.0)
        self.assertEqual(backward, -forward)
        self.assertEqual(adaptive_simpson(math.cos, 2.0, 2.0), (0.0, 0.0))

    @settings(max_examples=30, deadline=None)
    @given(st.floats(min_value=0.1, max_value=0.9), st.floats(min_value=0.0, max_value=0.5))
    def test_reciprocal_ramp_integrands(self, kappa, a):
        # the same shape of integrand the stretch profile integrates
        f = lambda x: 1.0 / (1.0 - kappa * x)
        value, _ = adaptive_simpson(f, a, 1.0)
        expected = (math.log1p(-kappa * a) - math.log1p(-kappa)) / kappa
        self.assertAlmostEqual(value, expected, delta=1e-12)


class BisectionTests(SimpleTestCase):
    def test_cube_root(self):
        root = bisect_increasing(lambda x: x ** 3, 2.0, 0.0, 2.0)
        self.assertAlmostEqual(root, 2.0 ** (1.0 / 3.0), delta=1e-12)

    def test_empty_bracket(self):
        with self.assertRaises(DomainError):
            bisect_increasing(lambda x: x, 0.5, 1.0, 1.0)

    def test_step_cap(self):
        with self.assertRaises(NumericError):
            bisect_increasing(lambda x: x, 0.7, 0.0, 1.0, rel_tol=1e-15, max_steps=5)
