import unittest

import sympy as sp

from src.errors import ExpansionOrderError
from src.opexpand import (
    CoefficientTag, MultiIndex, OperatorSpec, OperatorTerm, apply_graded, coordinate_symbols, expand_operator,
    format_level, kolmogorov_operator, laplacian, substitution_check, swift_hohenberg_operator,
)


def words_as_tuples(expansion, grade):
    return [(w.fast_powers, w.slow_powers, w.coefficient, w.tag) for w in expansion.words(grade)]


class TestExpandOperator(unittest.TestCase):
    def setUp(self):
        self.sh = expand_operator(swift_hohenberg_operator())

    def test_swift_hohenberg_grades(self):
        self.assertEqual(words_as_tuples(self.sh, 1), [
            ((1,), (1,), -4, CoefficientTag.CONST),
            ((3,), (1,), -4, CoefficientTag.CONST),
        ])
        self.assertEqual(words_as_tuples(self.sh, 2), [
            ((0,), (2,), -2, CoefficientTag.CONST),
            ((2,), (2,), -6, CoefficientTag.CONST),
        ])
        self.assertEqual(format_level(self.sh, 1), "-4 dx dxbar - 4 dx^3 dxbar")
        self.assertEqual(format_level(self.sh, 2), "-2 dxbar^2 - 6 dx^2 dxbar^2")

    def test_grade_zero_is_the_operator(self):
        self.assertEqual(words_as_tuples(self.sh, 0), [
            ((0,), (0,), -1, CoefficientTag.CONST),
            ((2,), (0,), -2, CoefficientTag.CONST),
            ((4,), (0,), -1, CoefficientTag.CONST),
        ])

    def test_grade_count_bounded_by_order(self):
        self.assertEqual(self.sh.grades, [0, 1, 2, 3, 4])
        self.assertEqual(self.sh.words(5), ())

    def test_laplacian_two_directions(self):
        lap = expand_operator(laplacian(2))
        self.assertEqual(words_as_tuples(lap, 1), [
            ((0, 1), (0, 1), 2, CoefficientTag.CONST),
            ((1, 0), (1, 0), 2, CoefficientTag.CONST),
        ])
        self.assertEqual(words_as_tuples(lap, 2), [
            ((0, 0), (0, 2), 1, CoefficientTag.CONST),
            ((0, 0), (2, 0), 1, CoefficientTag.CONST),
        ])

    def test_binomial_coefficients_exact(self):
        for m in range(1, 9):
            spec = OperatorSpec((OperatorTerm(sp.Integer(1), MultiIndex((m,))),), 1, 1)
            expansion = expand_operator(spec)
            for q in range(m + 1):
                (word,) = expansion.words(q)
                self.assertEqual(word.coefficient, sp.binomial(m, q))
                self.assertIsInstance(word.coefficient, sp.Integer)

    def test_words_respect_source_index(self):
        expansion = expand_operator(kolmogorov_operator())
        for grade in expansion.grades:
            for word in expansion.words(grade):
                self.assertEqual(sum(word.slow_powers), grade)
                self.assertEqual(len(word.slow_powers), 1)

    def test_bounded_direction_never_desingularized(self):
        expansion = expand_operator(kolmogorov_operator())
        self.assertEqual(format_level(expansion, 1), "-sqrt(2) sin(y) dxbar + 2 dx dxbar")
        self.assertEqual(format_level(expansion, 2), "dxbar^2")

    def test_linearity(self):
        a = swift_hohenberg_operator()
        b = laplacian(1, coefficient=3)
        combined = expand_operator(a + b)
        separate_a, separate_b = expand_operator(a), expand_operator(b)
        for grade in range(5):
            totals = {}
            for word in separate_a.words(grade) + separate_b.words(grade):
                key = (word.fast_powers, word.slow_powers)
                totals[key] = totals.get(key, 0) + word.coefficient
            expected = {k: v for k, v in totals.items() if v != 0}
            got = {(w.fast_powers, w.slow_powers): w.coefficient for w in combined.words(grade)}
            self.assertEqual(got, expected)


class TestApplyGraded(unittest.TestCase):
    def setUp(self):
        (self.x,), (self.xb,) = coordinate_symbols(1, 1)
        self.A = sp.Function("A")(self.xb)
        self.sh = expand_operator(swift_hohenberg_operator())

    def test_critical_mode_annihilated(self):
        (out,) = apply_graded(self.sh, [sp.exp(sp.I * self.x)], 0, (self.x,), (self.xb,))
        self.assertEqual(sp.simplify(out), 0)

    def test_modulated_mode(self):
        psi0 = self.A * sp.exp(sp.I * self.x)
        out = apply_graded(self.sh, [psi0, 0, 0], 2, (self.x,), (self.xb,))
        self.assertEqual(sp.simplify(out[1]), 0)
        expected = 4 * sp.diff(self.A, self.xb, 2) * sp.exp(sp.I * self.x)
        self.assertEqual(sp.simplify(out[2] - expected), 0)

    def test_order_beyond_series(self):
        with self.assertRaises(ExpansionOrderError):
            apply_graded(self.sh, [self.A], 1, (self.x,), (self.xb,))


class TestSubstitutionCheck(unittest.TestCase):
    def test_swift_hohenberg_exponential(self):
        (x,), (xb,) = coordinate_symbols(1, 1)
        field = sp.exp(sp.I * x) * sp.exp(sp.I * xb)
        self.assertLessEqual(substitution_check(swift_hohenberg_operator(), field, 0.25), 1e-12)

    def test_field_without_slow_dependence(self):
        (x,), _ = coordinate_symbols(1, 1)
        self.assertEqual(substitution_check(swift_hohenberg_operator(), sp.cos(3 * x) + x ** 2, 0.5), 0.0)

    def test_laplacian_polynomial(self):
        _, (xb1, xb2) = coordinate_symbols(2, 2)
        self.assertLessEqual(substitution_check(laplacian(2), xb1 * xb2, 0.5), 1e-13)

    def test_oracle_family(self):
        (x,), (xb,) = coordinate_symbols(1, 1)
        (fx, fy), (fxb,) = coordinate_symbols(2, 1)
        (lx1, lx2), (lb1, lb2) = coordinate_symbols(2, 2)
        cases = [
            (swift_hohenberg_operator(), [
                sp.exp(sp.I * x) * sp.exp(sp.I * xb), x ** 2 * xb ** 3, sp.exp(2 * sp.I * x) * xb ** 2,
                sp.cos(x) * sp.sin(xb), sp.exp(-sp.I * x) * (1 + xb) ** 4, xb ** 5,
            ]),
            (laplacian(2), [
                lb1 * lb2, sp.exp(sp.I * (lx1 + lb2)), lx1 * lb1 ** 2, sp.cos(lb1) * sp.sin(lx2),
                lb1 ** 3 * lb2, sp.exp(sp.I * lx2) * lb1,
            ]),
            (kolmogorov_operator(), [
                sp.cos(fy) * fxb ** 2, sp.sin(fy) * sp.exp(sp.I * fx) * fxb, fxb ** 3,
                sp.exp(sp.I * (fx + fxb)) * sp.cos(2 * fy), fx * fxb, sp.sin(fxb) * sp.cos(fy),
            ]),
        ]
        for spec, fields in cases:
            for field in fields:
                for r in (0.1, 0.25, 0.5):
                    self.assertLessEqual(substitution_check(spec, field, r), 1e-11)


if __name__ == '__main__':
    unittest.main()
