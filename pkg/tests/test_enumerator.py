import os
import tempfile
import unittest

import numpy as np

from utils.camd import (DesignSpace, build_molecule, check_c26, check_c27, check_structure, qm7_space,
                        qm9_space)
from utils.enumerator import (ConstraintLevel, brute_optimize, canonical_classes, count_classes,
                              count_feasible, count_table, enumerate_feasible, parse_structures,
                              write_structures)
from utils.errors import BudgetExceededError, DomainError, UnsupportedError
from utils.gnn import DenseLayer, GnnModel, GraphLayer, load_model, random_model
from utils.graphcore import is_isomorphic

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")
SLOW = os.getenv("MOLMIP_SLOW_TESTS") == "1"

LEVELS = (ConstraintLevel.S1, ConstraintLevel.S2, ConstraintLevel.S3)


def counts(space, threads=1):
    return tuple(count_feasible(space, level, threads=threads).count for level in LEVELS)


def sulfur_model():
    """Output is minus the number of sulfur atoms."""
    w_self = np.zeros((1, 16))
    w_self[0, 3] = 1.0
    graph = GraphLayer(w_self, np.zeros((1, 16)), np.zeros(1), "identity")
    dense = DenseLayer(np.array([[-1.0]]), np.zeros(1), "identity")
    return GnnModel((graph,), (dense,))


class TestConstraintLevel(unittest.TestCase):

    def test_parse(self):
        self.assertIs(ConstraintLevel.parse("S1"), ConstraintLevel.S1)
        self.assertIs(ConstraintLevel.parse("s1+s2"), ConstraintLevel.S2)
        self.assertIs(ConstraintLevel.parse("s3"), ConstraintLevel.S3)
        with self.assertRaises(DomainError):
            ConstraintLevel.parse("s4")

    def test_levels_are_cumulative(self):
        self.assertFalse(ConstraintLevel.S1.uses_s2)
        self.assertTrue(ConstraintLevel.S3.uses_s2)
        self.assertTrue(ConstraintLevel.S3.uses_s3)


class TestCountFeasible(unittest.TestCase):

    def test_qm7_small(self):
        self.assertEqual(counts(qm7_space(2)), (17, 10, 10))
        self.assertEqual(counts(qm7_space(3)), (112, 37, 37))

    def test_qm9_small(self):
        self.assertEqual(counts(qm9_space(2)), (15, 9, 9))
        self.assertEqual(counts(qm9_space(3)), (175, 54, 54))

    def test_qm7_four_atoms(self):
        self.assertEqual(counts(qm7_space(4)), (3323, 726, 416))

    def test_qm9_four_atoms(self):
        self.assertEqual(counts(qm9_space(4)), (4536, 1077, 631))

    def test_parallel_matches_sequential(self):
        space = qm7_space(4)
        for level in LEVELS:
            sequential = count_feasible(space, level, threads=1).count
            self.assertEqual(count_feasible(space, level, threads=2).count, sequential)

    @unittest.skipUnless(SLOW, "set MOLMIP_SLOW_TESTS=1 to run")
    def test_five_atoms(self):
        self.assertEqual(counts(qm7_space(5), threads=4), (67020, 11747, 3003))
        self.assertEqual(counts(qm9_space(5), threads=4), (117188, 21441, 5860))

    def test_budget_exhaustion_reports_partial_count(self):
        with self.assertRaises(BudgetExceededError) as ctx:
            count_feasible(qm7_space(6), ConstraintLevel.S1, threads=1, budget=1e-9)
        self.assertFalse(ctx.exception.partial.exact)
        self.assertGreaterEqual(ctx.exception.partial.count, 0)

    def test_rejects_bad_arguments(self):
        with self.assertRaises(DomainError):
            count_feasible(qm7_space(2), ConstraintLevel.S1, budget=0)
        with self.assertRaises(UnsupportedError):
            count_feasible(qm7_space(3, exact_n=False), ConstraintLevel.S1)
        with self.assertRaises(DomainError):
            count_feasible(qm7_space(3), ConstraintLevel.S1, toggles={"C5": False})

    def test_disabling_a_family_never_shrinks_the_count(self):
        space = qm7_space(4)
        base = count_feasible(space, ConstraintLevel.S3, threads=1).count
        for family in ("C22", "C23", "C24", "C25"):
            relaxed = count_feasible(space, ConstraintLevel.S3, threads=1, toggles={family: False}).count
            self.assertGreaterEqual(relaxed, base, family)


class TestEnumerateFeasible(unittest.TestCase):

    def test_every_structure_is_feasible_and_distinct(self):
        for space in (qm7_space(3), qm9_space(4)):
            for level in LEVELS:
                molecules = list(enumerate_feasible(space, level))
                self.assertEqual(len({mol.key() for mol in molecules}), len(molecules))
                for mol in molecules:
                    self.assertEqual(check_structure(space, mol), [])
                    if level.uses_s2:
                        self.assertTrue(check_c26(space, mol))
                    if level.uses_s3:
                        self.assertTrue(check_c27(space, mol))

    def test_stream_matches_count(self):
        space = qm7_space(4)
        self.assertEqual(sum(1 for _ in enumerate_feasible(space, ConstraintLevel.S2)), 726)

    def test_symmetry_breaking_keeps_every_class(self):
        for space in (qm7_space(3), qm7_space(4), qm9_space(4)):
            self.assertEqual(canonical_classes(space, ConstraintLevel.S3), canonical_classes(space, ConstraintLevel.S1))

    def test_class_counts(self):
        self.assertEqual(count_classes(qm7_space(2)), 10)
        self.assertEqual(count_classes(qm7_space(3)), 33)
        self.assertEqual(count_classes(qm7_space(4)), 329)
        self.assertEqual(count_classes(qm9_space(2)), 9)
        self.assertEqual(count_classes(qm9_space(3)), 47)

    def test_s3_count_covers_every_class(self):
        for space in (qm7_space(2), qm7_space(3), qm9_space(2), qm9_space(3)):
            self.assertGreaterEqual(count_feasible(space, ConstraintLevel.S3, threads=1).count,
                                    count_classes(space))

    def test_s3_keeps_isomorphic_end_swap(self):
        # CH3-CH=CH2 with the center first: both ends have neighbor set {0}
        space = qm7_space(3)
        first = build_molecule(space, "CCC", {(0, 1): 1, (0, 2): 2})
        swapped = build_molecule(space, "CCC", {(0, 1): 2, (0, 2): 1})
        self.assertTrue(is_isomorphic(first.to_graph(), swapped.to_graph()))
        keys = {mol.key() for mol in enumerate_feasible(space, ConstraintLevel.S3)}
        for mol in (first, swapped):
            self.assertEqual(check_structure(space, mol), [])
            self.assertTrue(check_c26(space, mol) and check_c27(space, mol))
            self.assertIn(mol.key(), keys)

    def test_write_and_read_structures(self):
        space = qm7_space(3)
        molecules = list(enumerate_feasible(space, ConstraintLevel.S3))
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "structures.txt")
            self.assertEqual(write_structures(path, molecules), 37)
            with open(path, "r") as f:
                self.assertEqual(parse_structures(f.read()), molecules)


class TestBruteOptimize(unittest.TestCase):

    def test_constant_model_keeps_first_structure(self):
        space = qm7_space(3)
        model = load_model(os.path.join(FIXTURES, "zero_model.json"))
        best, value = brute_optimize(space, model, ConstraintLevel.S3)
        self.assertAlmostEqual(value, 0.5)
        self.assertEqual(best, next(iter(enumerate_feasible(space, ConstraintLevel.S3))))

    def test_sulfur_reward(self):
        space = qm7_space(3)
        best, value = brute_optimize(space, sulfur_model(), ConstraintLevel.S3)
        self.assertAlmostEqual(value, -1.0)
        self.assertEqual(int(best.X[:, 3].sum()), 1)

    def test_optimum_is_level_independent(self):
        for seed in range(5):
            model = random_model((16, 4), (4, 3, 1), seed=seed)
            for space in (qm7_space(3), qm7_space(4)):
                _, loose = brute_optimize(space, model, ConstraintLevel.S1)
                _, tight = brute_optimize(space, model, ConstraintLevel.S3)
                self.assertAlmostEqual(loose, tight, places=9)

    def test_deterministic(self):
        space = qm7_space(4)
        model = random_model((16, 8), (8, 1), seed=3)
        first = brute_optimize(space, model, ConstraintLevel.S3)
        second = brute_optimize(space, model, ConstraintLevel.S3)
        self.assertEqual(first[0], second[0])
        self.assertEqual(first[1], second[1])

    def test_width_mismatch(self):
        model = random_model((12, 4), (4, 1))
        with self.assertRaises(DomainError):
            brute_optimize(qm7_space(3), model, ConstraintLevel.S3)

    def test_empty_feasible_set(self):
        # three atoms but the type bounds admit only two
        space = qm7_space(3)
        tight = DesignSpace(3, space.atom_types, space.covalences, (0, 0, 0, 0), (1, 1, 0, 0), 1, 1, 1)
        with self.assertRaises(DomainError):
            brute_optimize(tight, sulfur_model(), ConstraintLevel.S3)


class TestTableOne(unittest.TestCase):

    def test_small_rows(self):
        table = count_table("qm7", [2, 3], threads=1)
        self.assertEqual(list(table.columns), ["n", "s1", "s2", "s3", "removed_pct", "exact"])
        self.assertEqual(table["s1"].tolist(), [17, 112])
        self.assertEqual(table["removed_pct"].tolist(), [41, 67])
        self.assertTrue(table["exact"].all())


if __name__ == "__main__":
    unittest.main()
