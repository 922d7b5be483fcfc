import math
from fractions import Fraction
from functools import lru_cache

from django.test import SimpleTestCase
from hypothesis import assume, given, settings, strategies as st
from sympy import Matrix
from sympy.matrices.normalforms import smith_normal_form

from nonsqueeze.exceptions import DomainError
from nonsqueeze.markov_affine import (
    IntAffineMap2, MarkovTriple, RationalTriangle, affine_distance, affine_length, as_rational,
    branch_sequence, build_triangle, canonical_form, chart_embedding, descent_path, enumerate_tree,
    find_fitting_triple, fit_in_strip, is_aff_equivalent, is_markov, mutate, no_fit_certificate,
    primitive_vector,
)


def brute_force_triples(max_entry):
    """Solve c^2 - 3ab c + a^2 + b^2 = 0 for every a <= b <= max_entry."""
    found = set()
    for a in range(1, max_entry + 1):
        for b in range(a, max_entry + 1):
            disc = 9 * a * a * b * b - 4 * (a * a + b * b)
            root = math.isqrt(disc)
            if root * root != disc:
                continue
            for c2 in (3 * a * b + root, 3 * a * b - root):
                if c2 % 2 == 0 and b <= c2 // 2 <= max_entry:
                    found.add((a, b, c2 // 2))
    return found


@lru_cache(maxsize=None)
def branch_number(k):
    if k < 3:
        return 1
    return 3 * branch_number(k - 1) * branch_number(k - 2) - branch_number(k - 3)


TREE = enumerate_tree(10_000)
SMALL_TRIPLES = TREE[:20]


def points():
    coordinate = st.fractions(min_value=-6, max_value=6, max_denominator=9)
    return st.tuples(coordinate, coordinate)


def unimodular_maps():
    shears = st.integers(min_value=-4, max_value=4)
    offsets = st.fractions(min_value=-5, max_value=5, max_denominator=12)
    flips = st.sampled_from([((1, 0), (0, 1)), ((0, 1), (1, 0)), ((1, 0), (0, -1))])

    def build(k1, k2, flip, tx, ty):
        return (
            IntAffineMap2(flip)
            .compose(IntAffineMap2(((1, k1), (0, 1))))
            .compose(IntAffineMap2(((1, 0), (k2, 1)), (tx, ty)))
        )
    return st.builds(build, shears, shears, flips, offsets, offsets)


class RationalParsingTests(SimpleTestCase):
    def test_accepts_exact_inputs(self):
        self.assertEqual(as_rational('29/10'), Fraction(29, 10))
        self.assertEqual(as_rational(3), Fraction(3))
        self.assertEqual(as_rational(Fraction(1, 2)), Fraction(1, 2))

    def test_refuses_floats_and_booleans(self):
        for bad in (0.5, True, 'x/2', '1/0', None):
            with self.subTest(bad=bad):
                with self.assertRaises(DomainError):
                    as_rational(bad)


class MarkovTreeTests(SimpleTestCase):
    def test_tree_up_to_ten_thousand_is_all_markov(self):
        triples = enumerate_tree(10_000)
        self.assertEqual(triples[0], MarkovTriple(1, 1, 1))
        self.assertTrue(all(is_markov(*t.entries) for t in triples))
        self.assertTrue(all(t.c <= 10_000 for t in triples))
        self.assertEqual(len(set(triples)), len(triples))
        self.assertEqual([t.c for t in triples], sorted(t.c for t in triples))

    def test_tree_matches_brute_force(self):
        tree = {t.entries for t in enumerate_tree(1000)}
        self.assertEqual(tree, brute_force_triples(1000))

    def test_branch_sequence_matches_recursion(self):
        self.assertEqual(branch_sequence(12), [branch_number(k) for k in range(13)])
        self.assertEqual(branch_sequence(6), [1, 1, 1, 2, 5, 29, 433])

    def test_consecutive_branch_entries_are_markov(self):
        m = branch_sequence(12)
        for n in range(11):
            with self.subTest(n=n):
                self.assertTrue(is_markov(m[n], m[n + 1], m[n + 2]))

    def test_rejects_non_markov(self):
        with self.assertRaises(DomainError):
            MarkovTriple(1, 2, 3)
        with self.assertRaises(DomainError):
            is_markov(0, 1, 1)
        with self.assertRaises(DomainError):
            mutate(MarkovTriple(1, 1, 2), 3)

    @settings(max_examples=60, deadline=None)
    @given(st.sampled_from(TREE), st.integers(min_value=0, max_value=2))
    def test_mutation_is_an_involution(self, triple, slot):
        entries = list(triple.entries)
        others = [entries[k] for k in range(3) if k != slot]
        replaced = 3 * others[0] * others[1] - entries[slot]
        child = mutate(triple, slot)
        self.assertTrue(is_markov(*child.entries))
        self.assertEqual(mutate(child, child.entries.index(replaced)), triple)

    def test_unique_descending_mutation(self):
        for triple in TREE:
            with self.subTest(triple=str(triple)):
                lower = {m for m in (mutate(triple, slot) for slot in range(3)) if m.c < triple.c}
                self.assertEqual(len(lower), 0 if triple.is_root() else 1)

    def test_descent_path_reaches_root(self):
        path = descent_path(MarkovTriple(5, 29, 433))
        self.assertEqual(path[0], MarkovTriple(5, 29, 433))
        self.assertTrue(path[-1].is_root())
        self.assertTrue(all(a.c > b.c for a, b in zip(path, path[1:])))


class AffineGeometryTests(SimpleTestCase):
    def test_primitive_vector(self):
        self.assertEqual(primitive_vector((Fraction(4, 3), 2)), ((2, 3), Fraction(2, 3)))
        self.assertEqual(primitive_vector((0, -5)), ((0, -1), Fraction(5)))
        with self.assertRaises(DomainError):
            primitive_vector((0, 0))

    def test_lengths_and_distances(self):
        self.assertEqual(affine_length((0, 0), (3, 6)), 3)
        self.assertEqual(affine_length((0, 0), (Fraction(1, 2), 0)), Fraction(1, 2))
        self.assertEqual(affine_distance((0, 1), ((0, 0), (1, 0))), 1)
        self.assertEqual(affine_distance((1, 2), ((0, 0), (1, 1))), 1)

    def test_maps_must_be_unimodular(self):
        with self.assertRaises(DomainError):
            IntAffineMap2(((2, 0), (0, 1)))
        reflection = IntAffineMap2(((0, 1), (1, 0)), ('1/2', 3))
        self.assertTrue(reflection.compose(reflection.inverse()).is_identity())

    @settings(max_examples=100, deadline=None)
    @given(unimodular_maps(), points(), points(), points())
    def test_lengths_and_distances_are_invariant(self, M, p, q, r):
        assume(p != q)
        self.assertEqual(affine_length(M.apply(p), M.apply(q)), affine_length(p, q))
        direction = (q[0] - p[0], q[1] - p[1])
        mp, mq = M.apply(p), M.apply(q)
        moved_direction = (mq[0] - mp[0], mq[1] - mp[1])
        self.assertEqual(affine_distance(M.apply(r), (mp, moved_direction)), affine_distance(r, (p, direction)))

    def test_degenerate_triangle(self):
        with self.assertRaises(DomainError):
            RationalTriangle((0, 0), (1, 1), (2, 2))


class MarkovTriangleTests(SimpleTestCase):
    def test_identities_for_twenty_triples(self):
        for triple in SMALL_TRIPLES:
            for alpha in (Fraction(1, 2), Fraction(1), Fraction(2), Fraction(29, 10)):
                with self.subTest(triple=str(triple), alpha=alpha):
                    tri = build_triangle(triple, alpha).realization
                    self.assertEqual(tri.area(), alpha * alpha / 2)
                    self.assertEqual(tri.affine_perimeter(), 3 * alpha)
                    expected = tuple(alpha * w / triple.product for w in triple.weights())
                    self.assertEqual(tri.affine_lengths(), expected)

    def test_area_is_half_length_times_height(self):
        for triple in SMALL_TRIPLES:
            for alpha in (Fraction(1, 2), Fraction(2), Fraction(29, 10)):
                tri = build_triangle(triple, alpha).realization
                lengths, heights = tri.affine_lengths(), tri.affine_heights()
                for i in range(3):
                    with self.subTest(triple=str(triple), alpha=alpha, edge=i):
                        self.assertEqual(tri.area(), lengths[i] * heights[i] / 2)
                        self.assertEqual(heights[i], alpha * triple.product / triple.weights()[i])

    def test_charts_are_lattice_saturating(self):
        for triple in SMALL_TRIPLES[:10]:
            for vertex in range(3):
                with self.subTest(triple=str(triple), vertex=vertex):
                    chart = chart_embedding(triple, vertex)
                    snf = smith_normal_form(Matrix(chart.A3))
                    self.assertEqual([abs(snf[0, 0]), abs(snf[1, 1])], [1, 1])

    def test_vertex_choice_gives_equivalent_triangles(self):
        triple = MarkovTriple(2, 5, 29)
        base = build_triangle(triple, 2).realization
        for vertex in (1, 2):
            other = build_triangle(triple, 2, vertex).realization
            self.assertIsNotNone(is_aff_equivalent(base, other))

    def test_root_triangle_fits_at_half(self):
        fit = fit_in_strip(build_triangle(MarkovTriple(1, 1, 1), Fraction(1, 2)).realization)
        self.assertEqual(fit.height, Fraction(1, 2))
        self.assertTrue(all(x >= 0 and 0 <= y < 1 for x, y in fit.image.vertices))

    def test_alpha_must_be_positive(self):
        with self.assertRaises(DomainError):
            build_triangle(MarkovTriple(1, 1, 1), 0)


class CanonicalFormTests(SimpleTestCase):
    @settings(max_examples=60, deadline=None)
    @given(st.sampled_from(SMALL_TRIPLES[:8]), unimodular_maps())
    def test_equivalence_finds_the_map(self, triple, M):
        tri = build_triangle(triple, Fraction(3, 2)).realization
        moved = M.apply_triangle(tri)
        self.assertEqual(canonical_form(tri)[0], canonical_form(moved)[0])
        found = is_aff_equivalent(tri, moved)
        self.assertIsNotNone(found)
        self.assertEqual(found.apply_triangle(tri).vertex_set(), moved.vertex_set())

    def test_different_sizes_are_not_equivalent(self):
        triple = MarkovTriple(1, 2, 5)
        self.assertIsNone(is_aff_equivalent(
            build_triangle(triple, 1).realization,
            build_triangle(triple, 2).realization,
        ))


class FitTests(SimpleTestCase):
    def test_boundary_height_does_not_fit(self):
        tri = build_triangle(MarkovTriple(29, 5, 2), Fraction(29, 10)).realization
        self.assertEqual(min(tri.affine_heights()), 1)
        self.assertIsNone(fit_in_strip(tri))
        smaller = fit_in_strip(build_triangle(MarkovTriple(2, 5, 29), Fraction(289, 100)).realization)
        self.assertEqual(smaller.height, Fraction(289, 100) * 290 / 841)

    @settings(max_examples=60, deadline=None)
    @given(st.sampled_from(SMALL_TRIPLES[:8]), st.sampled_from([Fraction(1, 2), Fraction(2), Fraction(29, 10)]),
           unimodular_maps())
    def test_fit_is_invariant_under_integral_affine_maps(self, triple, alpha, M):
        tri = build_triangle(triple, alpha).realization
        fit, moved = fit_in_strip(tri), fit_in_strip(M.apply_triangle(tri))
        if fit is None:
            self.assertIsNone(moved)
            return
        self.assertEqual((moved.height, moved.base_edge_index), (fit.height, fit.base_edge_index))
        self.assertTrue(all(x >= 0 and 0 <= y < 1 for x, y in moved.image.vertices))
        self.assertIsNotNone(is_aff_equivalent(fit.image, moved.image))

    def test_known_fits(self):
        cases = {
            Fraction(1, 2): ((1, 1, 1), Fraction(1, 2)),
            Fraction(2): ((1, 2, 5), Fraction(4, 5)),
            Fraction(5, 2): ((2, 5, 29), Fraction(25, 29)),
            Fraction(29, 10): ((5, 29, 433), Fraction(841, 866)),
            Fraction(299, 100): ((29, 433, 37666), Fraction(299, 100) * 433 * 29 / 37666),
        }
        for alpha, (entries, height) in cases.items():
            with self.subTest(alpha=alpha):
                result = find_fitting_triple(alpha)
                self.assertTrue(result.fits)
                self.assertEqual(result.triple.entries, entries)
                self.assertEqual(result.height, height)
                self.assertLess(result.height, 1)

    def test_no_fit_from_three(self):
        for alpha in (3, 4, '7/2'):
            with self.subTest(alpha=alpha):
                result = find_fitting_triple(alpha)
                self.assertFalse(result.fits)
                self.assertEqual(result.certificate.height_lower_bound, as_rational(alpha) / 3)
                self.assertGreaterEqual(result.certificate.height_lower_bound, 1)

    def test_certificate_needs_alpha_at_least_three(self):
        with self.assertRaises(DomainError):
            no_fit_certificate(2)

    def test_walked_heights_decrease(self):
        result = find_fitting_triple(Fraction(299, 100))
        heights = [height for _, height in result.walked]
        self.assertEqual(heights, sorted(heights, reverse=True))
        self.assertEqual(result.branch_index, len(result.walked) - 1)

    def test_rejects_nonpositive_alpha(self):
        with self.assertRaises(DomainError):
            find_fitting_triple(0)
        with self.assertRaises(DomainError):
            find_fitting_triple(0.5)

    @settings(max_examples=40, deadline=None)
    @given(st.fractions(min_value=Fraction(1, 10), max_value=Fraction(299, 100), max_denominator=100))
    def test_every_alpha_below_three_fits(self, alpha):
        result = find_fitting_triple(alpha)
        self.assertTrue(result.fits)
        self.assertLess(result.height, 1)
        self.assertTrue(all(x >= 0 and 0 <= y < 1 for x, y in result.fit.image.vertices))
