import itertools
import os
import random
import unittest

import numpy as np

from utils.errors import DomainError, UnsupportedError
from utils.graphcore import UndirectedGraph, connected_graphs, load_graph
from utils.indexing import (Indexing, check_s1, check_s2, check_s3, count_indexings, index_graph, relabel)
from utils.lexorder import restrict

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def example_graph():
    return load_graph(os.path.join(FIXTURES, "example_graph.txt"))


def random_connected_graph(n, rng, extra=0.3):
    edges = {(rng.randrange(v), v) for v in range(1, n)}
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < extra:
                edges.add((u, v))
    return UndirectedGraph.from_edges(n, sorted(edges))


class TestIndexing(unittest.TestCase):

    def test_from_order(self):
        idx = Indexing.from_order((2, 0, 1))
        self.assertEqual(idx.index_of, (1, 2, 0))
        self.assertEqual(idx.order, (2, 0, 1))

    def test_rejects_non_bijection(self):
        with self.assertRaises(DomainError):
            Indexing((0, 0))


class TestIndexGraph(unittest.TestCase):

    def test_example_graph(self):
        idx, trace = index_graph(example_graph())
        self.assertEqual(idx.index_of, (0, 1, 4, 2, 3, 5))
        self.assertEqual(len(trace), 5)
        self.assertEqual([record.chosen for record in trace], [1, 3, 4, 2, 5])

    def test_path(self):
        idx, _ = index_graph(UndirectedGraph.from_edges(3, [(0, 1), (1, 2)]))
        self.assertEqual(idx.index_of, (0, 1, 2))

    def test_root_gets_zero(self):
        g = example_graph()
        for root in range(g.n):
            idx, _ = index_graph(g, root)
            self.assertEqual(idx.index_of[root], 0)

    def test_cycle_output_is_s3_feasible(self):
        cycle = UndirectedGraph.from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
        for root in range(4):
            idx, _ = index_graph(cycle, root)
            self.assertTrue(check_s3(cycle, idx))

    def test_errors(self):
        with self.assertRaises(DomainError):
            index_graph(UndirectedGraph.from_edges(4, [(0, 1), (2, 3)]))
        with self.assertRaises(DomainError):
            index_graph(UndirectedGraph(np.zeros((0, 0), dtype=bool)))
        with self.assertRaises(DomainError):
            index_graph(UndirectedGraph.from_edges(2, [(0, 1)]), root=5)

    def test_trace_state(self):
        _, trace = index_graph(example_graph())
        for record in trace:
            self.assertEqual(len(record.indexed), record.s)
            self.assertEqual(set(record.temp_index), set(range(6)))
            self.assertIn(record.chosen, record.unindexed)
            for v in record.unindexed:
                self.assertGreaterEqual(record.temp_index[v], record.s)

    def test_indexed_neighbors_extend_by_restriction(self):
        rng = random.Random(11)
        for _ in range(20):
            g = random_connected_graph(7, rng)
            _, trace = index_graph(g)
            records = list(trace)
            for early in records:
                for late in records:
                    if late.s < early.s:
                        continue
                    for v in late.unindexed:
                        self.assertEqual(early.indexed_neighbors[v],
                                         restrict(late.indexed_neighbors[v], early.s))

    def test_all_small_graphs_and_roots(self):
        for n in range(1, 7):
            for g in connected_graphs(n):
                for root in range(n):
                    idx, _ = index_graph(g, root)
                    self.assertTrue(check_s3(g, idx), f"S3 fails on {g.edges()} rooted at {root}")
                    self.assertTrue(check_s1(g, idx), f"S1 fails on {g.edges()} rooted at {root}")

    def test_random_larger_graphs(self):
        rng = random.Random(5)
        for n in (7, 8):
            for _ in range(40):
                g = random_connected_graph(n, rng, extra=rng.choice((0.1, 0.3, 0.6)))
                idx, _ = index_graph(g, rng.randrange(n))
                self.assertTrue(check_s3(g, idx))
                self.assertTrue(check_s1(g, idx))

    def test_temporary_indexes_follow_final_order(self):
        for n in range(2, 7):
            for g in connected_graphs(n):
                for root in range(n):
                    idx, trace = index_graph(g, root)
                    final = idx.index_of
                    for record in trace:
                        for u in range(n):
                            for v in range(n):
                                if final[u] < final[v]:
                                    self.assertLessEqual(record.temp_index[u], record.temp_index[v])

    def test_indexed_nodes_keep_small_temporary_indexes(self):
        for n in range(2, 7):
            for g in connected_graphs(n):
                _, trace = index_graph(g)
                for record in trace:
                    for v in record.indexed:
                        self.assertLess(record.temp_index[v], record.s)
                    for v in record.unindexed:
                        self.assertGreaterEqual(record.temp_index[v], record.s)

    def test_relabel_puts_nodes_in_index_order(self):
        g = example_graph()
        idx, _ = index_graph(g)
        h = relabel(g, idx)
        self.assertTrue(check_s3(h, Indexing(tuple(range(6)))))


class TestChecks(unittest.TestCase):

    def test_s1(self):
        path = UndirectedGraph.from_edges(3, [(0, 1), (1, 2)])
        self.assertTrue(check_s1(path, Indexing((0, 1, 2))))
        two_edges = UndirectedGraph.from_edges(4, [(0, 1), (2, 3)])
        self.assertFalse(check_s1(two_edges, Indexing((0, 1, 2, 3))))
        g = example_graph()
        self.assertTrue(check_s1(g, index_graph(g)[0]))

    def test_s1_size_mismatch(self):
        with self.assertRaises(DomainError):
            check_s1(UndirectedGraph.from_edges(2, [(0, 1)]), Indexing((0, 1, 2)))

    def test_s2(self):
        same = np.ones((3, 4), dtype=bool)
        self.assertTrue(check_s2(same))
        # lexicographically smallest row first
        rows = np.array([[0, 0, 1], [0, 1, 0], [1, 0, 0]], dtype=bool)
        self.assertTrue(check_s2(rows))
        self.assertFalse(check_s2(rows[::-1]))
        smaller_later = np.array([[1, 1], [1, 1], [1, 1], [0, 1]], dtype=bool)
        self.assertFalse(check_s2(smaller_later, h_weights=[1.0, 1.0]))

    def test_s3(self):
        path = UndirectedGraph.from_edges(3, [(0, 1), (1, 2)])
        self.assertTrue(check_s3(path, Indexing((0, 1, 2))))
        self.assertFalse(check_s3(path, Indexing((1, 2, 0))))

    def test_s3_implies_s1_on_connected_graphs(self):
        for n in range(1, 6):
            for g in connected_graphs(n):
                for order in itertools.permutations(range(n)):
                    idx = Indexing.from_order(order)
                    if check_s3(g, idx):
                        self.assertTrue(check_s1(g, idx), f"{g.edges()} in order {order}")


class TestCountIndexings(unittest.TestCase):

    def test_example_graph_counts(self):
        g = example_graph()
        self.assertEqual(count_indexings(g), 720)
        self.assertEqual(count_indexings(g, ["s1"]), 396)
        self.assertEqual(count_indexings(g, ["root"]), 120)
        self.assertEqual(count_indexings(g, ["root", "s3"]), 4)

    def test_s1_count_by_direct_enumeration(self):
        g = example_graph()
        edges = {frozenset(e) for e in g.edges()}
        direct = sum(
            1 for order in itertools.permutations(range(g.n))
            if all(any(frozenset((order[i], order[j])) in edges for j in range(i)) for i in range(1, g.n))
        )
        self.assertEqual(direct, 396)
        self.assertEqual(count_indexings(g, ["s1"]), direct)

    def test_s3_passing_labelings_include_algorithm_output(self):
        g = example_graph()
        idx, _ = index_graph(g)
        self.assertTrue(check_s3(g, idx))

    def test_s2_needs_features(self):
        with self.assertRaises(DomainError):
            count_indexings(UndirectedGraph.from_edges(2, [(0, 1)]), ["s2"])

    def test_unknown_constraint(self):
        with self.assertRaises(DomainError):
            count_indexings(example_graph(), ["s4"])

    def test_cap(self):
        with self.assertRaises(UnsupportedError):
            count_indexings(example_graph(), cap=5)


if __name__ == "__main__":
    unittest.main()
