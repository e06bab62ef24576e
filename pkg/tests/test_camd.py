import os
import unittest

import numpy as np

from utils.camd import (DesignSpace, MolecularGraph, build_molecule, check_c26, check_c27, check_structure,
                        design_space, format_molecule, load_molecule, molecule_summary, parse_molecule,
                        permute_molecule, qm7_space, qm9_space)
from utils.enumerator import ConstraintLevel, enumerate_feasible
from utils.errors import DomainError
from utils.graphcore import Permutation, is_isomorphic
from utils.indexing import Indexing, check_s2, check_s3

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def constraint_ids(violations):
    return [v.constraint for v in violations]


class TestDesignSpace(unittest.TestCase):

    def test_qm7_bounds(self):
        space = qm7_space(7)
        self.assertEqual(space.atom_types, ("C", "N", "O", "S"))
        self.assertEqual(space.lower_bounds[0], 4)
        self.assertEqual(space.upper_bounds[1:], (3, 2, 1))
        self.assertEqual((space.ub_double, space.ub_triple, space.ub_ring), (3, 3, 3))

    def test_qm9_bounds(self):
        space = qm9_space(9)
        self.assertEqual(space.atom_types, ("C", "N", "O", "F"))
        self.assertEqual(space.lower_bounds[0], 2)
        self.assertEqual(space.upper_bounds[1:], (5, 5, 7))
        self.assertEqual((space.ub_double, space.ub_triple, space.ub_ring), (4, 4, 6))

    def test_small_qm7_keeps_one_heteroatom(self):
        space = qm7_space(2)
        self.assertEqual(space.upper_bounds, (2, 1, 1, 1))

    def test_feature_layout(self):
        space = qm7_space(5)
        self.assertEqual(space.n_features, 16)
        self.assertEqual(list(space.neighbor_indices), [4, 5, 6, 7, 8])
        self.assertEqual(list(space.hydrogen_indices), [9, 10, 11, 12, 13])
        self.assertEqual((space.db_index, space.tb_index), (14, 15))
        self.assertEqual(space.type_index("O"), 2)

    def test_invalid_spaces(self):
        with self.assertRaises(DomainError):
            qm7_space(1)
        with self.assertRaises(DomainError):
            design_space("qm8", 4)
        with self.assertRaises(DomainError):
            DesignSpace(3, ("C",), (4,), (2,), (1,), 1, 1, 1)
        with self.assertRaises(DomainError):
            qm7_space(3).type_index("Cl")

    def test_design_space_lookup(self):
        space = design_space("QM9", 4, exact_n=False)
        self.assertEqual(space.name, "qm9")
        self.assertFalse(space.exact_n)


class TestStructure(unittest.TestCase):

    def test_ethane_fixture_is_feasible(self):
        space = qm7_space(2)
        mol = load_molecule(os.path.join(FIXTURES, "ethane.txt"))
        self.assertEqual(check_structure(space, mol), [])
        self.assertEqual(mol, build_molecule(space, "CC", {(0, 1): 1}))

    def test_wrong_hydrogen_count(self):
        space = qm7_space(2)
        mol = build_molecule(space, "CO", {(0, 1): 1})
        X = np.array(mol.X)
        X[1, list(space.hydrogen_indices)] = False
        X[1, space.hydrogen_indices[3]] = True
        bad = MolecularGraph(X, mol.A, mol.DB, mol.TB)
        self.assertEqual([str(v) for v in check_structure(space, bad)], ["C21[1]"])

    def test_too_many_double_bonds(self):
        space = qm7_space(4)
        mol = build_molecule(space, "CCCC", {(0, 1): 2, (1, 2): 2, (2, 3): 2})
        self.assertEqual(constraint_ids(check_structure(space, mol)), ["C23"])

    def test_disconnected_atom(self):
        space = qm7_space(3)
        mol = build_molecule(space, "CCC", {(0, 1): 1})
        self.assertIn("C5", constraint_ids(check_structure(space, mol)))

    def test_ring(self):
        space = qm7_space(3)
        mol = build_molecule(space, "CCC", {(0, 1): 1, (1, 2): 1, (0, 2): 1})
        self.assertEqual(check_structure(space, mol), [])
        self.assertEqual(molecule_summary(space, mol)["rings"], 1)

    def test_flag_without_bond(self):
        space = qm7_space(2)
        mol = build_molecule(space, "CC", {(0, 1): 1})
        X = np.array(mol.X)
        X[0, space.db_index] = True
        self.assertIn("C19", constraint_ids(check_structure(space, MolecularGraph(X, mol.A, mol.DB, mol.TB))))

    def test_variable_n_absent_atoms(self):
        space = qm7_space(4, exact_n=False)
        ethane = build_molecule(qm7_space(2), "CC", {(0, 1): 1})
        X = np.zeros((4, space.n_features), dtype=bool)
        X[:2] = ethane.X
        A = np.zeros((4, 4), dtype=bool)
        A[:2, :2] = True
        zeros = np.zeros((4, 4), dtype=bool)
        mol = MolecularGraph(X, A, zeros, zeros)
        self.assertEqual(check_structure(space, mol), [])

        gap = np.array(A)
        gap[3, 3] = True
        self.assertIn("C2", constraint_ids(check_structure(space, MolecularGraph(X, gap, zeros, zeros))))

    def test_exact_n_requires_every_atom(self):
        space = qm7_space(3)
        mol = build_molecule(space, "CCC", {(0, 1): 1, (1, 2): 1})
        A = np.array(mol.A)
        A[2, 2] = False
        self.assertIn("C2", constraint_ids(check_structure(space, MolecularGraph(mol.X, A, mol.DB, mol.TB))))

    def test_dimension_mismatch(self):
        mol = build_molecule(qm7_space(2), "CC", {(0, 1): 1})
        with self.assertRaises(DomainError):
            check_structure(qm7_space(3), mol)

    def test_build_rejects_overbonded_atom(self):
        with self.assertRaises(DomainError):
            build_molecule(qm7_space(2), "OO", {(0, 1): 3})


class TestSymmetryConstraints(unittest.TestCase):

    def test_c26_prefers_heteroatom_first(self):
        space = qm7_space(3)
        n_first = build_molecule(space, "NCC", {(0, 1): 1, (1, 2): 1})
        c_first = build_molecule(space, "CCN", {(0, 1): 1, (1, 2): 1})
        self.assertTrue(check_c26(space, n_first))
        self.assertFalse(check_c26(space, c_first))

    def test_c26_exempts_absent_atoms(self):
        space = qm7_space(3, exact_n=False)
        pair = build_molecule(qm7_space(2), "NC", {(0, 1): 1})
        X = np.zeros((3, space.n_features), dtype=bool)
        X[:2] = pair.X
        A = np.zeros((3, 3), dtype=bool)
        A[:2, :2] = True
        zeros = np.zeros((3, 3), dtype=bool)
        self.assertTrue(check_c26(space, MolecularGraph(X, A, zeros, zeros)))

    def test_c27(self):
        space = qm7_space(4)
        ordered = build_molecule(space, "CCCC", {(0, 1): 1, (1, 2): 1, (2, 3): 1})
        self.assertTrue(check_c27(space, ordered))
        zigzag = build_molecule(space, "CCCC", {(0, 2): 1, (2, 1): 1, (1, 3): 1})
        self.assertFalse(check_c27(space, zigzag))

    def test_rows_agree_with_graph_checks_on_every_structure(self):
        for space in (qm7_space(3), qm7_space(4), qm9_space(3), qm9_space(4)):
            identity = Indexing(tuple(range(space.n_atoms)))
            for mol in enumerate_feasible(space, ConstraintLevel.S1):
                self.assertEqual(check_c27(space, mol), check_s3(mol.to_graph(), identity))
                self.assertEqual(check_c26(space, mol), check_s2(mol.X))


class TestMoleculeHelpers(unittest.TestCase):

    def test_summary(self):
        space = qm7_space(2)
        summary = molecule_summary(space, build_molecule(space, "CC", {(0, 1): 1}))
        self.assertEqual(summary["formula"], "C2H6")
        self.assertEqual(summary["hydrogens"], 6)
        self.assertEqual((summary["double_bonds"], summary["triple_bonds"], summary["rings"]), (0, 0, 0))

    def test_summary_triple_bond(self):
        space = qm7_space(2)
        summary = molecule_summary(space, build_molecule(space, "CN", {(0, 1): 3}))
        self.assertEqual(summary["formula"], "CNH")
        self.assertEqual(summary["triple_bonds"], 1)

    def test_permutation_preserves_isomorphism_class(self):
        space = qm7_space(3)
        mol = build_molecule(space, "CNO", {(0, 1): 2, (1, 2): 1})
        moved = permute_molecule(mol, Permutation((2, 0, 1)))
        self.assertTrue(is_isomorphic(mol.to_graph(), moved.to_graph()))
        self.assertEqual(moved.bond_orders()[1, 2], 2)

    def test_format_then_parse(self):
        space = qm9_space(3)
        mol = build_molecule(space, "CCF", {(0, 1): 2, (1, 2): 1})
        self.assertEqual(parse_molecule(format_molecule(mol)), mol)

    def test_shape_validation(self):
        with self.assertRaises(DomainError):
            MolecularGraph(np.zeros((2, 16)), np.ones((3, 3)), np.zeros((2, 2)), np.zeros((2, 2)))


if __name__ == "__main__":
    unittest.main()
