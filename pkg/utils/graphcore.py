"""
Undirected graphs with optional node features and edge labels, the
permutation action on them, and brute-force canonical forms for small graphs.
"""

import itertools
import logging
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from config import ERROR_MESSAGES, SMALL_N_CAP
from utils.errors import DomainError, UnsupportedError

logger = logging.getLogger(__name__)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class UndirectedGraph:
    """
    Graph on nodes 0..n-1.

    ``adj`` is a symmetric boolean matrix whose diagonal marks node
    existence (true for every node of an ordinary graph). ``features`` is an
    optional n x F boolean matrix and ``edge_labels`` an optional integer
    matrix distinguishing bond kinds; both take part in isomorphism.
    """
    adj: np.ndarray
    features: Optional[np.ndarray] = None
    edge_labels: Optional[np.ndarray] = None

    def __post_init__(self):
        adj = np.asarray(self.adj, dtype=bool)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise DomainError(f"Adjacency must be square, got shape {adj.shape}")
        if not np.array_equal(adj, adj.T):
            raise DomainError("Adjacency matrix is not symmetric")
        object.__setattr__(self, "adj", _frozen(adj))

        n = adj.shape[0]
        if self.features is not None:
            features = np.asarray(self.features, dtype=bool)
            if features.ndim != 2 or features.shape[0] != n:
                raise DomainError(ERROR_MESSAGES["size_mismatch"].format(expected=f"{n} feature rows", actual=features.shape))
            object.__setattr__(self, "features", _frozen(features))
        if self.edge_labels is not None:
            labels = np.asarray(self.edge_labels, dtype=np.int64)
            if labels.shape != adj.shape or not np.array_equal(labels, labels.T):
                raise DomainError("Edge labels must be a symmetric matrix shaped like the adjacency")
            object.__setattr__(self, "edge_labels", _frozen(labels))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Tuple[int, int]],
                   features: Optional[np.ndarray] = None) -> "UndirectedGraph":
        adj = np.eye(n, dtype=bool)
        for u, v in edges:
            if u == v or not (0 <= u < n and 0 <= v < n):
                raise DomainError(f"Invalid edge ({u}, {v}) for {n} nodes")
            adj[u, v] = adj[v, u] = True
        return cls(adj, features)

    @property
    def n(self) -> int:
        return self.adj.shape[0]

    @property
    def n_features(self) -> int:
        return 0 if self.features is None else self.features.shape[1]

    def neighbors(self, v: int) -> List[int]:
        return [u for u in range(self.n) if u != v and self.adj[u, v]]

    def edges(self) -> List[Tuple[int, int]]:
        return [(u, v) for u in range(self.n) for v in range(u + 1, self.n) if self.adj[u, v]]

    def __eq__(self, other):
        if not isinstance(other, UndirectedGraph):
            return NotImplemented
        return (np.array_equal(self.adj, other.adj)
                and _optional_equal(self.features, other.features)
                and _optional_equal(self.edge_labels, other.edge_labels))

    __hash__ = None


def _optional_equal(a: Optional[np.ndarray], b: Optional[np.ndarray]) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return np.array_equal(a, b)


@dataclass(frozen=True)
class Permutation:
    """Bijection on {0..n-1}; ``mapping[i]`` is the image of i."""
    mapping: Tuple[int, ...]

    def __post_init__(self):
        mapping = tuple(int(x) for x in self.mapping)
        if sorted(mapping) != list(range(len(mapping))):
            raise DomainError(f"{mapping} is not a permutation of 0..{len(mapping) - 1}")
        object.__setattr__(self, "mapping", mapping)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))

    def __len__(self) -> int:
        return len(self.mapping)

    def inverse(self) -> "Permutation":
        inv = [0] * len(self.mapping)
        for i, image in enumerate(self.mapping):
            inv[image] = i
        return Permutation(tuple(inv))


def permute(g: UndirectedGraph, p: Permutation) -> UndirectedGraph:
    """
    Relabel a graph: node u of the result is node p(u) of the input.

    Args:
        g: Graph to relabel
        p: Permutation on g's nodes

    Returns:
        Graph with adj'[u, v] = adj[p(u), p(v)] and features'[v] = features[p(v)]
    """
    if len(p) != g.n:
        raise DomainError(ERROR_MESSAGES["size_mismatch"].format(expected=g.n, actual=len(p)))
    idx = np.array(p.mapping, dtype=np.intp)
    grid = np.ix_(idx, idx)
    features = None if g.features is None else g.features[idx]
    labels = None if g.edge_labels is None else g.edge_labels[grid]
    return UndirectedGraph(g.adj[grid], features, labels)


@lru_cache(maxsize=None)
def _permutation_table(n: int) -> np.ndarray:
    table = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
    return table.reshape(-1, n)


def canonical_form(g: UndirectedGraph, cap: Optional[int] = None) -> bytes:
    """
    Isomorphism-invariant encoding of a graph with its features and edge labels.

    Every relabeling of the graph is encoded as its feature rows followed by
    its adjacency (and edge-label) rows; the lexicographically smallest
    encoding is the canonical one.

    Args:
        g: Graph to canonicalize
        cap: Largest node count accepted (defaults to SMALL_N_CAP)

    Returns:
        Byte string, equal for two graphs iff they are isomorphic
    """
    cap = SMALL_N_CAP if cap is None else cap
    n = g.n
    if n > cap:
        raise UnsupportedError(ERROR_MESSAGES["cap_exceeded"].format(n=n, cap=cap))
    header = f"{n}:{g.n_features}:{int(g.edge_labels is not None)}:".encode()
    if n == 0:
        return header

    perms = _permutation_table(n)
    rows = perms[:, :, None]
    cols = perms[:, None, :]
    blocks = []
    if g.features is not None:
        blocks.append(g.features[perms].reshape(len(perms), -1).astype(np.int64))
    blocks.append(g.adj[rows, cols].reshape(len(perms), -1).astype(np.int64))
    if g.edge_labels is not None:
        blocks.append(g.edge_labels[rows, cols].reshape(len(perms), -1))
    encoding = np.concatenate(blocks, axis=1)

    # lexsort treats its last key as primary, so feed columns back to front
    best = np.lexsort(encoding.T[::-1])[0]
    return header + encoding[best].astype(np.int16).tobytes()


def is_isomorphic(g1: UndirectedGraph, g2: UndirectedGraph, cap: Optional[int] = None) -> bool:
    if g1.n != g2.n or g1.n_features != g2.n_features:
        return False
    return canonical_form(g1, cap) == canonical_form(g2, cap)


def is_connected(g: UndirectedGraph) -> bool:
    if g.n == 0:
        return False
    seen = {0}
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for u in g.neighbors(v):
            if u not in seen:
                seen.add(u)
                queue.append(u)
    return len(seen) == g.n


@lru_cache(maxsize=None)
def _connected_graphs(n: int) -> Tuple[UndirectedGraph, ...]:
    if n == 1:
        return (UndirectedGraph.from_edges(1, []),)
    representatives = {}
    # Every connected graph has a vertex whose removal leaves it connected,
    # so extending the (n-1)-node classes by one vertex reaches every class.
    for base in _connected_graphs(n - 1):
        base_edges = base.edges()
        for mask in range(1, 2 ** (n - 1)):
            edges = base_edges + [(u, n - 1) for u in range(n - 1) if mask >> u & 1]
            g = UndirectedGraph.from_edges(n, edges)
            representatives.setdefault(canonical_form(g, cap=n), g)
    return tuple(representatives[key] for key in sorted(representatives))


def connected_graphs(n: int) -> List[UndirectedGraph]:
    """
    One representative per isomorphism class of connected graphs on n nodes.

    Args:
        n: Node count, 1..7

    Returns:
        List of graphs (1, 1, 2, 6, 21, 112, 853 of them for n = 1..7)
    """
    if not 1 <= n <= 7:
        raise UnsupportedError(f"Connected graph generation supports 1 <= n <= 7, got {n}")
    return list(_connected_graphs(n))


def _parse_rows(lines: Sequence[str], start: int, count: int, width: int, what: str) -> np.ndarray:
    rows = []
    for offset in range(count):
        line_no = start + offset
        if line_no >= len(lines):
            raise DomainError(ERROR_MESSAGES["parse_error"].format(what=what, line=line_no + 1, text="<end of input>"))
        tokens = lines[line_no].split()
        if len(tokens) != width or any(t not in ("0", "1") for t in tokens):
            raise DomainError(ERROR_MESSAGES["parse_error"].format(what=what, line=line_no + 1, text=lines[line_no]))
        rows.append([t == "1" for t in tokens])
    return np.array(rows, dtype=bool).reshape(count, width)


def parse_matrix_blocks(text: str, n_square_blocks: int, what: str) -> Tuple[int, np.ndarray, List[np.ndarray]]:
    """
    Parse the fixture layout: a header line "N F", N feature rows, then
    ``n_square_blocks`` blocks of N rows of N 0/1 tokens.

    Returns:
        (N, feature matrix, list of square matrices)
    """
    lines = [line for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#")]
    if not lines:
        raise DomainError(ERROR_MESSAGES["parse_error"].format(what=what, line=1, text="<empty>"))
    header = lines[0].split()
    if len(header) != 2 or not all(t.isdigit() for t in header):
        raise DomainError(ERROR_MESSAGES["parse_error"].format(what=what, line=1, text=lines[0]))
    n, f = int(header[0]), int(header[1])
    cursor = 1
    features = _parse_rows(lines, cursor, n, f, what) if f > 0 else np.zeros((n, 0), dtype=bool)
    cursor += n if f > 0 else 0
    blocks = []
    for _ in range(n_square_blocks):
        blocks.append(_parse_rows(lines, cursor, n, n, what))
        cursor += n
    if cursor != len(lines):
        raise DomainError(ERROR_MESSAGES["parse_error"].format(what=what, line=cursor + 1, text=lines[cursor]))
    return n, features, blocks


def format_matrix(matrix: np.ndarray) -> List[str]:
    return [" ".join("1" if x else "0" for x in row) for row in np.asarray(matrix)]


def parse_graph(text: str) -> UndirectedGraph:
    """Read a graph from the fixture format; the diagonal is always set (nodes exist)."""
    n, features, (adj,) = parse_matrix_blocks(text, 1, "graph")
    adj = adj.copy()
    np.fill_diagonal(adj, True)
    return UndirectedGraph(adj, features if features.shape[1] > 0 else None)


def load_graph(path: str) -> UndirectedGraph:
    with open(path, "r") as f:
        return parse_graph(f.read())


def format_graph(g: UndirectedGraph) -> str:
    lines = [f"{g.n} {g.n_features}"]
    if g.features is not None:
        lines += format_matrix(g.features)
    lines += format_matrix(g.adj)
    return "\n".join(lines) + "\n"
