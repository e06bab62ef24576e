"""
Symmetry-breaking indexings of undirected graphs.

``index_graph`` builds an indexing whose neighbor sets are ordered
lexicographically (S3) and in which every node reaches a smaller index (S1).
The checkers evaluate S1, S2 and S3 for arbitrary indexings, and
``count_indexings`` counts the labelings a constraint set admits.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from config import ERROR_MESSAGES, SMALL_N_CAP
from utils.errors import DomainError, UnsupportedError
from utils.graphcore import Permutation, UndirectedGraph, is_connected, permute
from utils.lexorder import Ordering, lex_compare, lex_key

logger = logging.getLogger(__name__)

CONSTRAINT_NAMES = ("s1", "s2", "s3", "root")


@dataclass(frozen=True)
class Indexing:
    """``index_of[v]`` is the index assigned to node v."""
    index_of: Tuple[int, ...]

    def __post_init__(self):
        index_of = tuple(int(i) for i in self.index_of)
        if sorted(index_of) != list(range(len(index_of))):
            raise DomainError(f"Indexing {index_of} is not a bijection onto 0..{len(index_of) - 1}")
        object.__setattr__(self, "index_of", index_of)

    @classmethod
    def from_order(cls, order: Sequence[int]) -> "Indexing":
        """Build from the node sequence (node with index 0 first)."""
        index_of = [0] * len(order)
        for i, v in enumerate(order):
            index_of[v] = i
        return cls(tuple(index_of))

    @property
    def n(self) -> int:
        return len(self.index_of)

    @property
    def order(self) -> Tuple[int, ...]:
        """Nodes listed by increasing index."""
        order = [0] * len(self.index_of)
        for v, i in enumerate(self.index_of):
            order[i] = v
        return tuple(order)


@dataclass(frozen=True)
class IterationRecord:
    """State of one iteration s of the indexing algorithm."""
    s: int
    indexed: FrozenSet[int]
    temp_index: Dict[int, int]
    indexed_neighbors: Dict[int, Tuple[int, ...]]
    ranks: Dict[int, int]
    temp_neighbors: Dict[int, Tuple[int, ...]]
    chosen: int

    @property
    def unindexed(self) -> FrozenSet[int]:
        return frozenset(self.temp_index) - self.indexed


@dataclass
class IndexingTrace:
    iterations: List[IterationRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.iterations)

    def __iter__(self):
        return iter(self.iterations)


def index_graph(g: UndirectedGraph, root: int = 0) -> Tuple[Indexing, IndexingTrace]:
    """
    Index a connected graph so that neighbor sets grow in lexicographic order.

    At each step s every unindexed node is ranked by the lexicographic order
    of its already-indexed neighbors; ranks shifted by s become temporary
    indexes, and the node whose full neighbor multiset (in temporary
    indexes) is smallest receives index s. Ties go to the smallest node id.

    Args:
        g: Connected graph
        root: Node that receives index 0

    Returns:
        Tuple containing:
            - The indexing
            - The per-iteration trace
    """
    n = g.n
    if n == 0:
        raise DomainError(ERROR_MESSAGES["empty_graph"])
    if not 0 <= root < n:
        raise DomainError(f"Root {root} is not a node of a {n}-node graph")
    if not is_connected(g):
        raise DomainError(ERROR_MESSAGES["disconnected_graph"])

    M, L = n, n - 1
    neighbors = [g.neighbors(v) for v in range(n)]
    index = {root: 0}
    trace = IndexingTrace()

    for s in range(1, n):
        unindexed = [v for v in range(n) if v not in index]
        indexed_neighbors = {
            v: tuple(sorted(index[u] for u in neighbors[v] if u in index)) for v in unindexed
        }
        keys = {v: lex_key(indexed_neighbors[v], M, L) for v in unindexed}
        ranks = {v: sum(1 for u in unindexed if keys[u] < keys[v]) for v in unindexed}

        temp_index = dict(index)
        temp_index.update({v: ranks[v] + s for v in unindexed})
        temp_neighbors = {v: tuple(sorted(temp_index[u] for u in neighbors[v])) for v in unindexed}

        chosen = min(unindexed, key=lambda v: (lex_key(temp_neighbors[v], M, L), v))
        trace.iterations.append(IterationRecord(
            s=s,
            indexed=frozenset(index),
            temp_index=temp_index,
            indexed_neighbors=indexed_neighbors,
            ranks=ranks,
            temp_neighbors=temp_neighbors,
            chosen=chosen,
        ))
        index[chosen] = s
        logger.debug(f"Iteration {s}: node {chosen} indexed")

    indexing = Indexing(tuple(index[v] for v in range(n)))
    return indexing, trace


def relabel(g: UndirectedGraph, idx: Indexing) -> UndirectedGraph:
    """The graph with node i being the node that idx assigns index i."""
    return permute(g, Permutation(idx.order))


def _indexed_neighbor_sets(g: UndirectedGraph, idx: Indexing) -> List[set]:
    order = idx.order
    return [{idx.index_of[u] for u in g.neighbors(order[i])} for i in range(g.n)]


def check_s1(g: UndirectedGraph, idx: Indexing) -> bool:
    """True iff every node with index >= 1 has a neighbor with a smaller index."""
    if idx.n != g.n:
        raise DomainError(ERROR_MESSAGES["size_mismatch"].format(expected=g.n, actual=idx.n))
    neighbor_sets = _indexed_neighbor_sets(g, idx)
    return all(any(u < v for u in neighbor_sets[v]) for v in range(1, g.n))


def c26_weights(n_features: int) -> np.ndarray:
    """Hierarchy weights 2^(F-f-1): the first feature is the most significant."""
    return np.array([2 ** (n_features - f - 1) for f in range(n_features)], dtype=np.int64)


def check_s2(features: np.ndarray, h_weights: Optional[Sequence[float]] = None) -> bool:
    """
    True iff row 0 has the minimal hierarchy value h(X_v) = sum_f w_f X_{v,f}.

    Args:
        features: N x F feature matrix, rows in index order
        h_weights: Per-feature weights (default: the 2^(F-f-1) ordering weights)
    """
    features = np.asarray(features)
    if features.shape[0] == 0:
        return True
    weights = c26_weights(features.shape[1]) if h_weights is None else np.asarray(h_weights)
    h = features.astype(weights.dtype) @ weights
    return bool(np.all(h[0] <= h[1:]))


def check_s3(g: UndirectedGraph, idx: Indexing) -> bool:
    """
    True iff consecutive indexes have lexicographically ordered neighbor sets:
    LO(N(v) minus {v+1}) <= LO(N(v+1) minus {v}) for v = 1..N-2, with M = N, L = N-1.
    """
    if idx.n != g.n:
        raise DomainError(ERROR_MESSAGES["size_mismatch"].format(expected=g.n, actual=idx.n))
    n = g.n
    neighbor_sets = _indexed_neighbor_sets(g, idx)
    for v in range(1, n - 1):
        a = neighbor_sets[v] - {v + 1}
        b = neighbor_sets[v + 1] - {v}
        if lex_compare(a, b, n, n - 1) is Ordering.GT:
            return False
    return True


def _normalize_constraints(constraints: Iterable[str]) -> FrozenSet[str]:
    names = frozenset(c.strip().lower() for c in constraints if c.strip())
    unknown = names - set(CONSTRAINT_NAMES) - {"none"}
    if unknown:
        raise DomainError(f"Unknown indexing constraint(s): {', '.join(sorted(unknown))}")
    return names - {"none"}


def count_indexings(g: UndirectedGraph, constraints: Iterable[str] = (), root: int = 0,
                    cap: Optional[int] = None) -> int:
    """
    Count the labelings of g that satisfy a set of constraints.

    Args:
        g: Graph
        constraints: Subset of {"s1", "s2", "s3", "root"}; "root" pins ``root`` to index 0
        root: Node pinned by "root"
        cap: Largest node count accepted (defaults to SMALL_N_CAP)

    Returns:
        Exact number of admissible labelings
    """
    cap = SMALL_N_CAP if cap is None else cap
    if g.n > cap:
        raise UnsupportedError(ERROR_MESSAGES["cap_exceeded"].format(n=g.n, cap=cap))
    names = _normalize_constraints(constraints)
    if "s2" in names and g.features is None:
        raise DomainError("S2 needs node features")

    n = g.n
    if "root" in names:
        others = [v for v in range(n) if v != root]
        orders = ((root,) + rest for rest in itertools.permutations(others))
    else:
        orders = itertools.permutations(range(n))

    count = 0
    for order in orders:
        idx = Indexing.from_order(order)
        if "s1" in names and not check_s1(g, idx):
            continue
        if "s2" in names and not check_s2(g.features[list(order)]):
            continue
        if "s3" in names and not check_s3(g, idx):
            continue
        count += 1
    logger.info(f"{count} labelings satisfy {sorted(names) or 'no constraints'}")
    return count
