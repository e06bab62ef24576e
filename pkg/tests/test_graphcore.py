import os
import random
import unittest

import numpy as np

from utils.errors import DomainError, UnsupportedError
from utils.graphcore import (Permutation, UndirectedGraph, canonical_form, connected_graphs, format_graph,
                             is_connected, is_isomorphic, load_graph, parse_graph, permute)

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


class TestUndirectedGraph(unittest.TestCase):

    def test_from_edges(self):
        g = UndirectedGraph.from_edges(3, [(0, 1), (1, 2)])
        self.assertEqual(g.n, 3)
        self.assertEqual(g.edges(), [(0, 1), (1, 2)])
        self.assertEqual(g.neighbors(1), [0, 2])
        self.assertTrue(g.adj.diagonal().all())

    def test_rejects_asymmetric(self):
        with self.assertRaises(DomainError):
            UndirectedGraph(np.array([[1, 1], [0, 1]], dtype=bool))

    def test_rejects_self_loop_edge(self):
        with self.assertRaises(DomainError):
            UndirectedGraph.from_edges(2, [(1, 1)])

    def test_arrays_are_read_only(self):
        g = UndirectedGraph.from_edges(2, [(0, 1)])
        with self.assertRaises(ValueError):
            g.adj[0, 1] = False


class TestPermute(unittest.TestCase):

    def test_permute_maps_edges(self):
        g = UndirectedGraph.from_edges(3, [(0, 1)], features=[[1, 0], [0, 1], [0, 0]])
        h = permute(g, Permutation((2, 0, 1)))
        # node u of h is node p(u) of g
        self.assertEqual(h.edges(), [(1, 2)])
        self.assertTrue(np.array_equal(h.features, [[0, 0], [1, 0], [0, 1]]))

    def test_inverse_restores(self):
        g = UndirectedGraph.from_edges(4, [(0, 1), (1, 2), (2, 3)])
        p = Permutation((3, 1, 0, 2))
        self.assertEqual(permute(permute(g, p), p.inverse()), g)

    def test_rejects_non_permutation(self):
        with self.assertRaises(DomainError):
            Permutation((0, 0, 1))

    def test_size_mismatch(self):
        g = UndirectedGraph.from_edges(3, [(0, 1)])
        with self.assertRaises(DomainError):
            permute(g, Permutation.identity(2))


class TestCanonicalForm(unittest.TestCase):

    def test_invariant_under_relabeling(self):
        rng = random.Random(3)
        g = UndirectedGraph.from_edges(6, [(0, 1), (0, 2), (1, 3), (3, 4), (4, 5), (2, 5)],
                                       features=np.eye(6, 3, dtype=bool))
        for _ in range(20):
            mapping = list(range(6))
            rng.shuffle(mapping)
            self.assertEqual(canonical_form(permute(g, Permutation(mapping))), canonical_form(g))

    def test_distinguishes_path_and_star(self):
        path = UndirectedGraph.from_edges(4, [(0, 1), (1, 2), (2, 3)])
        star = UndirectedGraph.from_edges(4, [(0, 1), (0, 2), (0, 3)])
        self.assertFalse(is_isomorphic(path, star))

    def test_features_take_part(self):
        edges = [(0, 1), (1, 2)]
        a = UndirectedGraph.from_edges(3, edges, features=[[1], [0], [0]])
        b = UndirectedGraph.from_edges(3, edges, features=[[0], [1], [0]])
        c = UndirectedGraph.from_edges(3, edges, features=[[0], [0], [1]])
        self.assertFalse(is_isomorphic(a, b))
        self.assertTrue(is_isomorphic(a, c))

    def test_edge_labels_take_part(self):
        adj = np.ones((3, 3), dtype=bool)
        single = np.ones((3, 3), dtype=np.int64)
        double = single.copy()
        double[0, 1] = double[1, 0] = 2
        self.assertFalse(is_isomorphic(UndirectedGraph(adj, None, single), UndirectedGraph(adj, None, double)))

    def test_cap(self):
        g = UndirectedGraph.from_edges(4, [(0, 1), (1, 2), (2, 3)])
        with self.assertRaises(UnsupportedError):
            canonical_form(g, cap=3)


class TestConnectivity(unittest.TestCase):

    def test_is_connected(self):
        self.assertTrue(is_connected(UndirectedGraph.from_edges(3, [(0, 1), (1, 2)])))
        self.assertFalse(is_connected(UndirectedGraph.from_edges(3, [(0, 1)])))
        self.assertTrue(is_connected(UndirectedGraph.from_edges(1, [])))

    def test_connected_graph_counts(self):
        counts = [len(connected_graphs(n)) for n in range(1, 7)]
        self.assertEqual(counts, [1, 1, 2, 6, 21, 112])

    def test_representatives_are_connected_and_distinct(self):
        graphs = connected_graphs(5)
        self.assertTrue(all(is_connected(g) for g in graphs))
        self.assertEqual(len({canonical_form(g) for g in graphs}), len(graphs))

    def test_range(self):
        with self.assertRaises(UnsupportedError):
            connected_graphs(8)


class TestGraphFormat(unittest.TestCase):

    def test_load_fixture(self):
        g = load_graph(os.path.join(FIXTURES, "example_graph.txt"))
        self.assertEqual(g.n, 6)
        self.assertEqual(g.n_features, 6)
        self.assertEqual(len(g.edges()), 10)
        self.assertEqual(g.neighbors(0), [1, 2, 3, 4, 5])

    def test_format_then_parse(self):
        g = load_graph(os.path.join(FIXTURES, "example_graph.txt"))
        self.assertEqual(parse_graph(format_graph(g)), g)

    def test_parse_errors(self):
        with self.assertRaises(DomainError):
            parse_graph("")
        with self.assertRaises(DomainError):
            parse_graph("2 0\n1 1\n1 2\n")
        with self.assertRaises(DomainError):
            parse_graph("2 0\n1 1\n")


if __name__ == "__main__":
    unittest.main()
