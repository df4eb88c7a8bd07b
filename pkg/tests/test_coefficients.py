#!/usr/bin/env python3
"""
SplitFlow Coefficient Tests
Method definitions, palindromic expansion, nodes and the registry
"""

import sys
import tempfile
import unittest
from pathlib import Path

import mpmath

# Add project path to Python path
sys.path.insert(0, str(Path(__file__).parent.parent))

from methods.coefficients import (CoefficientError, CoefficientValue, MethodKind,  # noqa: E402
                                  SplittingMethod, consistency_residuals, expand_palindrome,
                                  format_catalog, format_decimal, negative_coefficients,
                                  nodes, symbol_sequence, working_sequences)
from methods.registry import (BUILTIN_IDS, MethodRegistry, RegistryError,  # noqa: E402
                              registry_lookup)
from solver.newton import write_solution_file  # noqa: E402


class TestCoefficientValue(unittest.TestCase):
    """Test CoefficientValue class"""

    def test_decimal_is_kept_verbatim(self):
        """The decimal string is the stored value"""
        value = CoefficientValue("0.1234567890123456789012345678901234567890")
        self.assertEqual(str(value), "0.1234567890123456789012345678901234567890")
        with mpmath.workdps(50):
            self.assertEqual(value.exact(50), mpmath.mpf("0.1234567890123456789012345678901234567890"))

    def test_working_value_is_rounded_double(self):
        """The working value is the nearest double"""
        self.assertEqual(CoefficientValue("0.1").working, 0.1)

    def test_rejects_non_numbers(self):
        """Garbage decimals are rejected"""
        with self.assertRaises(CoefficientError):
            CoefficientValue("zero point five")

    def test_format_decimal_digits(self):
        """format_decimal prints the requested significant digits"""
        with mpmath.workdps(60):
            text = format_decimal(mpmath.mpf(1) / 3, 20)
        self.assertEqual(text, "0.33333333333333333333")


class TestSplittingMethod(unittest.TestCase):
    """Test SplittingMethod class"""

    def setUp(self):
        self.leapfrog = registry_lookup("LEAPFROG")
        self.aba104 = registry_lookup("ABA104")

    def test_leapfrog_expansion(self):
        """Leapfrog expands to a1 b1 a1"""
        a, b = expand_palindrome(self.leapfrog)
        self.assertEqual([v.decimal for v in a], ["0.5", "0.5"])
        self.assertEqual([v.decimal for v in b], ["1"])
        self.assertEqual(symbol_sequence(self.leapfrog), ["a1", "b1", "a1"])

    def test_seven_stage_symbol_sequence(self):
        """Even a-expansion mirrors a4, odd b-expansion centres b4"""
        self.assertEqual(symbol_sequence(self.aba104), [
            "a1", "b1", "a2", "b2", "a3", "b3", "a4", "b4",
            "a4", "b3", "a3", "b2", "a2", "b1", "a1",
        ])
        a, b = expand_palindrome(self.aba104)
        self.assertEqual(len(a), 8)
        self.assertEqual(len(b), 7)

    def test_kernel_lengths(self):
        """Kernel sizes follow the stage count"""
        self.assertEqual(SplittingMethod.kernel_lengths(1), (1, 1))
        self.assertEqual(SplittingMethod.kernel_lengths(7), (4, 4))
        self.assertEqual(SplittingMethod.kernel_lengths(8), (5, 4))
        self.assertEqual(SplittingMethod.kernel_lengths(9), (5, 5))

    def test_consistency_of_table_digits(self):
        """ABA104 sums to one far below double precision"""
        residual_a, residual_b = consistency_residuals(self.aba104, dps=50)
        self.assertLessEqual(abs(residual_a), mpmath.mpf("1e-38"))
        self.assertLessEqual(abs(residual_b), mpmath.mpf("1e-38"))

    def test_consistency_by_hand(self):
        """2(a1+a2+a3+a4) and 2(b1+b2+b3)+b4 are one"""
        a = [v.working for v in self.aba104.a_kernel]
        b = [v.working for v in self.aba104.b_kernel]
        self.assertAlmostEqual(2 * sum(a), 1.0, places=6)
        self.assertAlmostEqual(2 * (b[0] + b[1] + b[2]) + b[3], 1.0, places=6)

    def test_nodes_end_at_one(self):
        """The last node is the full step"""
        node_vector = nodes(self.aba104, dps=50)
        self.assertEqual(len(node_vector), 8)
        self.assertLessEqual(abs(node_vector.final - 1), mpmath.mpf("1e-38"))
        self.assertAlmostEqual(float(node_vector.c[0]), self.aba104.a_kernel[0].working)

    def test_negative_coefficients(self):
        """ABA104 carries one negative a and one negative b"""
        self.assertEqual(negative_coefficients(self.aba104), (["a4"], ["b3"]))
        self.assertEqual(negative_coefficients(self.leapfrog), ([], []))

    def test_working_sequences_are_floats(self):
        """Working sequences hold native doubles"""
        a, b = working_sequences(self.aba104)
        self.assertTrue(all(isinstance(v, float) for v in a + b))

    def test_bab_layout(self):
        """BAB leapfrog is an ABA layout with a1 = 0"""
        method = SplittingMethod(id="BABLF", kind=MethodKind.BAB, order=(2, 2), stages=1,
                                 a_kernel=["0", "1"], b_kernel=["0.5"])
        self.assertEqual(method.layout_stages, 2)
        self.assertEqual(symbol_sequence(method), ["a1", "b1", "a2", "b1", "a1"])
        residual_a, residual_b = consistency_residuals(method)
        self.assertEqual(residual_a, 0)
        self.assertEqual(residual_b, 0)

    def test_bab_requires_zero_a1(self):
        """BAB with a nonzero a1 is rejected"""
        with self.assertRaises(CoefficientError):
            SplittingMethod(id="BADBAB", kind=MethodKind.BAB, order=(2, 2), stages=1,
                            a_kernel=["0.1", "0.8"], b_kernel=["0.5"])

    def test_kernel_length_mismatch(self):
        """A kernel that does not fit the stage count is rejected"""
        with self.assertRaises(CoefficientError):
            SplittingMethod(id="SHORT", kind=MethodKind.ABA, order=(4, 2), stages=3,
                            a_kernel=["0.5"], b_kernel=["0.5", "0.5"])

    def test_invalid_definitions(self):
        """Zero stages or empty orders are rejected"""
        with self.assertRaises(CoefficientError):
            SplittingMethod(id="NOSTAGE", kind="ABA", order=(2, 2), stages=0,
                            a_kernel=["0.5"], b_kernel=["1"])
        with self.assertRaises(CoefficientError):
            SplittingMethod(id="NOORDER", kind="ABA", order=(), stages=1,
                            a_kernel=["0.5"], b_kernel=["1"])

    def test_catalog_lists_coefficients(self):
        """Catalog prints one line per method plus one per coefficient"""
        text = format_catalog([self.leapfrog])
        self.assertIn("LEAPFROG ABA (2,2) 1 no", text)
        self.assertIn("  a1 = 0.5", text)
        self.assertIn("  b1 = 1", text)


class TestMethodRegistry(unittest.TestCase):
    """Test MethodRegistry class"""

    def setUp(self):
        self.registry = MethodRegistry()

    def test_builtin_ids(self):
        """All nine built-in ids resolve in a fixed order"""
        self.assertEqual(self.registry.ids(), list(BUILTIN_IDS))
        self.assertEqual(len(BUILTIN_IDS), 9)

    def test_table_methods(self):
        """Table methods carry their declared shape"""
        method = self.registry.lookup("ABAH1064")
        self.assertEqual(method.kind, MethodKind.ABAH)
        self.assertEqual(method.order, (10, 6, 4))
        self.assertEqual(method.stages, 9)
        self.assertTrue(method.cubic_condition)
        self.assertTrue(method.approximate_b)
        self.assertEqual(method.classical_order, 4)

    def test_lookup_returns_same_value(self):
        """Repeated lookups return the same immutable method"""
        self.assertIs(self.registry.lookup("ABA864"), self.registry.lookup("ABA864"))

    def test_unknown_id(self):
        """Unknown ids raise RegistryError"""
        with self.assertRaises(RegistryError):
            self.registry.lookup("ABA999")

    def test_builtins_cannot_be_replaced(self):
        """Registering over a built-in id is refused"""
        clone = SplittingMethod(id="LEAPFROG", kind=MethodKind.ABA, order=(2, 2), stages=1,
                                a_kernel=["0.5"], b_kernel=["1"])
        with self.assertRaises(RegistryError):
            self.registry.register(clone)

    def test_catalog_without_derived(self):
        """Table-only catalog skips the derived methods"""
        text = self.registry.export_catalog(include_derived=False)
        self.assertIn("ABA104 ABA (10,4) 7 no", text)
        self.assertIn("ABAH1064 ABAH (10,6,4) 9 yes", text)
        self.assertNotIn("ABA82 ", text)

    def test_import_solution(self):
        """A written solution file is registered under its id"""
        method = SplittingMethod(id="CUSTOM2", kind=MethodKind.ABA, order=(2, 2), stages=1,
                                 a_kernel=["0.5"], b_kernel=["1"])
        with tempfile.TemporaryDirectory() as temp_dir:
            path = write_solution_file(Path(temp_dir) / "custom2.txt", method)
            imported = self.registry.import_solution(str(path))

        self.assertEqual(imported.id, "CUSTOM2")
        self.assertIn("CUSTOM2", self.registry.ids())
        self.assertEqual(self.registry.lookup("CUSTOM2").b_kernel[0].decimal, "1")


if __name__ == "__main__":
    unittest.main()
