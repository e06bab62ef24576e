"""
Exact enumeration of feasible molecular structures.

The search assigns a bond order (none, single, double, triple) to every atom
pair, column by column of the upper triangle, so that column v is complete as
soon as pair (v-1, v) is placed. Degree, valence, double/triple-bond and ring
limits prune partial assignments; S1 and the S3 prefix test prune whole
columns. At a complete bond assignment every remaining feature is fixed by
the atom types, which are enumerated last under the atom-count bounds and S2.
"""

import itertools
import logging
import math
import multiprocessing
import time
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np
import pandas as pd

from config import (BUDGET_CHECK_INTERVAL, DEFAULT_THREADS, DEFAULT_TIME_BUDGET,
                    ENUM_N_CAP, ERROR_MESSAGES, SMALL_N_CAP)
from utils.camd import (DesignSpace, MolecularGraph, design_space, feature_row,
                        format_molecule, parse_molecule)
from utils.errors import BudgetExceededError, DomainError, UnsupportedError
from utils.gnn import GnnModel, forward
from utils.graphcore import canonical_form

logger = logging.getLogger(__name__)

TOGGLE_FAMILIES = ("C22", "C23", "C24", "C25")

# Pairs fixed per worker task when the search is split across processes
SPLIT_DEPTH = 3


class ConstraintLevel(Enum):
    """Cumulative symmetry-breaking levels on top of C1-C25."""
    S1 = "s1"
    S2 = "s2"
    S3 = "s3"

    @classmethod
    def parse(cls, text: str) -> "ConstraintLevel":
        key = text.strip().lower().replace(" ", "")
        aliases = {"s1": cls.S1, "s1+s2": cls.S2, "s2": cls.S2, "s1+s2+s3": cls.S3, "s3": cls.S3}
        try:
            return aliases[key]
        except KeyError:
            raise DomainError(f"Unknown constraint level {text!r}; expected s1, s2 or s3")

    @property
    def uses_s2(self) -> bool:
        return self in (ConstraintLevel.S2, ConstraintLevel.S3)

    @property
    def uses_s3(self) -> bool:
        return self is ConstraintLevel.S3


@dataclass
class EnumerationResult:
    count: int
    exact: bool = True
    classes: Optional[int] = None
    elapsed: float = 0.0
    level: Optional[ConstraintLevel] = None


class _BudgetSignal(Exception):
    pass


def _normalize_toggles(toggles: Optional[Mapping[str, bool]]) -> Dict[str, bool]:
    enabled = {family: True for family in TOGGLE_FAMILIES}
    for family, value in (toggles or {}).items():
        key = family.upper()
        if key not in enabled:
            raise DomainError(f"Constraint family {family!r} cannot be toggled; choose from {TOGGLE_FAMILIES}")
        enabled[key] = bool(value)
    return enabled


class StructureSearch:
    """
    Backtracking search over one design space.

    Iterating ``solutions()`` yields a (bond-order matrix, atom types) pair
    per feasible structure; the matrix is the live search state and is only
    valid until the next item is requested.
    """

    def __init__(self, space: DesignSpace, level: ConstraintLevel,
                 toggles: Optional[Mapping[str, bool]] = None,
                 deadline: Optional[float] = None,
                 prefix: Sequence[int] = ()):
        if not space.exact_n:
            raise UnsupportedError("Enumeration supports exact-N design spaces only")
        if space.n_atoms > ENUM_N_CAP:
            raise UnsupportedError(ERROR_MESSAGES["cap_exceeded"].format(n=space.n_atoms, cap=ENUM_N_CAP))
        self.space = space
        self.level = level
        self.enabled = _normalize_toggles(toggles)
        self.deadline = deadline
        self.prefix = tuple(prefix)
        self.nodes = 0

        n = space.n_atoms
        self.n = n
        self.pairs = [(u, v) for v in range(1, n) for u in range(v)]
        self.column_end = {k: v for k, (u, v) in enumerate(self.pairs) if u == v - 1}
        self.weights = [2 ** (n - u - 1) for u in range(n)]

        self.profiles = []
        for t, cov in enumerate(space.covalences):
            if self.enabled["C22"] and space.upper_bounds[t] == 0:
                continue
            self.profiles.append((t, cov, cov // 2, cov // 3))
        self.max_degree = min(n - 1, space.n_neighbor_features - 1)
        self.max_hydrogens = space.n_hydrogen_features - 1
        self.max_edges = n - 1 + space.ub_ring if self.enabled["C25"] else len(self.pairs)
        self.min_edges = n - 1 + space.lb_ring if self.enabled["C25"] else 0

        self.order = [[0] * n for _ in range(n)]
        self.degree = [0] * n
        self.valence = [0] * n
        self.n_db = [0] * n
        self.n_tb = [0] * n
        self.total_db = 0
        self.total_tb = 0
        self.edges = 0

    def _tick(self) -> None:
        self.nodes += 1
        if self.deadline is not None and self.nodes % BUDGET_CHECK_INTERVAL == 0:
            if time.time() > self.deadline:
                raise _BudgetSignal()

    def _choices(self, k: int) -> Sequence[int]:
        if k < len(self.prefix):
            return (self.prefix[k],)
        choices = [1] if k == 0 else [0, 1]
        if not self.enabled["C23"] or self.total_db < self.space.ub_double:
            choices.append(2)
        if not self.enabled["C24"] or self.total_tb < self.space.ub_triple:
            choices.append(3)
        return choices

    def _apply(self, u: int, v: int, order: int, sign: int) -> None:
        self.order[u][v] = self.order[v][u] = order if sign > 0 else 0
        if order == 0:
            return
        for w in (u, v):
            self.degree[w] += sign
            self.valence[w] += sign * order
            if order == 2:
                self.n_db[w] += sign
            elif order == 3:
                self.n_tb[w] += sign
        self.edges += sign
        if order == 2:
            self.total_db += sign
        elif order == 3:
            self.total_tb += sign

    def _admissible(self, w: int) -> bool:
        if self.degree[w] > self.max_degree:
            return False
        return any(cov >= self.valence[w] and self.n_db[w] <= db_cap and self.n_tb[w] <= tb_cap
                   for _, cov, db_cap, tb_cap in self.profiles)

    def _partial_ok(self, u: int, v: int, order: int) -> bool:
        if order == 0:
            return True
        if self.edges > self.max_edges:
            return False
        if self.enabled["C23"] and self.total_db > self.space.ub_double:
            return False
        if self.enabled["C24"] and self.total_tb > self.space.ub_triple:
            return False
        return self._admissible(u) and self._admissible(v)

    def _column_weight(self, v: int, rows: Iterable[int]) -> int:
        return sum(self.weights[u] for u in rows if self.order[u][v])

    def _column_ok(self, v: int) -> bool:
        if not any(self.order[u][v] for u in range(v)):
            return False
        if self.level.uses_s3 and v >= 2:
            rows = range(v - 1)
            # rows above v-1 carry more weight than every row still open
            if self._column_weight(v - 1, rows) < self._column_weight(v, rows):
                return False
        return True

    def _c27_ok(self) -> bool:
        n = self.n
        for v in range(1, n - 1):
            rows = [u for u in range(n) if u not in (v, v + 1)]
            if self._column_weight(v, rows) < self._column_weight(v + 1, rows):
                return False
        return True

    def _leaf_ok(self) -> bool:
        if self.edges < self.min_edges:
            return False
        if self.enabled["C23"] and self.total_db < self.space.lb_double:
            return False
        if self.enabled["C24"] and self.total_tb < self.space.lb_triple:
            return False
        return not self.level.uses_s3 or self._c27_ok()

    def hierarchy_value(self, w: int, t: int, hydrogens: int) -> int:
        space = self.space
        f = space.n_features
        bits = [t, space.neighbor_indices[self.degree[w]], space.hydrogen_indices[hydrogens]]
        if self.n_db[w]:
            bits.append(space.db_index)
        if self.n_tb[w]:
            bits.append(space.tb_index)
        return sum(2 ** (f - b - 1) for b in bits)

    def _candidates(self) -> Optional[List[List[Tuple[int, int]]]]:
        candidates = []
        for w in range(self.n):
            options = []
            for t, cov, db_cap, tb_cap in self.profiles:
                hydrogens = cov - self.valence[w]
                if 0 <= hydrogens <= self.max_hydrogens and self.n_db[w] <= db_cap and self.n_tb[w] <= tb_cap:
                    options.append((t, self.hierarchy_value(w, t, hydrogens)))
            if not options:
                return None
            candidates.append(options)
        return candidates

    def _assign_types(self, candidates, w: int, counts: List[int], chosen: List[int],
                      h0: int) -> Iterator[Tuple[int, ...]]:
        if w == self.n:
            yield tuple(chosen)
            return
        space = self.space
        remaining = self.n - w - 1
        check_counts = self.enabled["C22"]
        for t, h in candidates[w]:
            if self.level.uses_s2 and w > 0 and h < h0:
                continue
            if check_counts and counts[t] >= space.upper_bounds[t]:
                continue
            counts[t] += 1
            deficit = sum(max(0, lb - c) for lb, c in zip(space.lower_bounds, counts))
            if not check_counts or deficit <= remaining:
                chosen.append(t)
                yield from self._assign_types(candidates, w + 1, counts, chosen, h if w == 0 else h0)
                chosen.pop()
            counts[t] -= 1

    def _walk(self, k: int) -> Iterator[Tuple[int, ...]]:
        self._tick()
        if k == len(self.pairs):
            if self._leaf_ok():
                candidates = self._candidates()
                if candidates is not None:
                    yield from self._assign_types(candidates, 0, [0] * self.space.n_types, [], 0)
            return
        u, v = self.pairs[k]
        for order in self._choices(k):
            self._apply(u, v, order, +1)
            if self._partial_ok(u, v, order) and (k not in self.column_end or self._column_ok(v)):
                yield from self._walk(k + 1)
            self._apply(u, v, order, -1)

    def solutions(self) -> Iterator[Tuple[List[List[int]], Tuple[int, ...]]]:
        for types in self._walk(0):
            yield self.order, types

    def molecule(self, types: Sequence[int]) -> MolecularGraph:
        """Materialize the current bond state with the given atom types."""
        space = self.space
        orders = np.array(self.order, dtype=np.int64)
        X = np.array([
            feature_row(space, t, self.degree[w], space.covalences[t] - self.valence[w],
                        self.n_db[w] > 0, self.n_tb[w] > 0)
            for w, t in enumerate(types)
        ], dtype=bool)
        return MolecularGraph(X, np.eye(self.n, dtype=bool) | (orders > 0), orders == 2, orders == 3)

    def count(self) -> int:
        total = 0
        for _ in self.solutions():
            total += 1
        return total


def _count_task(task) -> Tuple[int, bool]:
    space, level, toggles, deadline, prefix = task
    search = StructureSearch(space, level, toggles, deadline, prefix)
    count = 0
    try:
        for _ in search.solutions():
            count += 1
    except _BudgetSignal:
        return count, False
    return count, True


def _split_prefixes(space: DesignSpace) -> List[Tuple[int, ...]]:
    n_pairs = space.n_atoms * (space.n_atoms - 1) // 2
    depth = min(SPLIT_DEPTH, n_pairs)
    return [(first,) + rest for first in (1, 2, 3) for rest in itertools.product(range(4), repeat=depth - 1)]


def count_feasible(space: DesignSpace, level: ConstraintLevel, threads: Optional[int] = None,
                   budget: Optional[float] = None,
                   toggles: Optional[Mapping[str, bool]] = None) -> EnumerationResult:
    """
    Count the assignments (X, A, DB, TB) satisfying C1-C25 and a symmetry level.

    Args:
        space: Exact-N design space
        level: Constraint level
        threads: Worker processes (defaults to DEFAULT_THREADS)
        budget: Wall-time budget in seconds (defaults to DEFAULT_TIME_BUDGET)
        toggles: Optional map disabling C22, C23, C24 or C25

    Returns:
        EnumerationResult with the exact count

    Raises:
        BudgetExceededError: When the budget runs out; ``partial`` holds the count so far
    """
    threads = DEFAULT_THREADS if threads is None else max(1, threads)
    budget = DEFAULT_TIME_BUDGET if budget is None else budget
    if budget <= 0:
        raise DomainError(f"Time budget must be positive, got {budget}")
    start = time.time()
    deadline = start + budget
    logger.info(f"Counting {space.name} N={space.n_atoms} at level {level.value} with {threads} worker(s)")

    if threads == 1 or space.n_atoms < 4:
        count, exact = _count_task((space, level, toggles, deadline, ()))
    else:
        tasks = [(space, level, toggles, deadline, prefix) for prefix in _split_prefixes(space)]
        with multiprocessing.Pool(threads) as pool:
            outcomes = pool.map(_count_task, tasks)
        count = sum(c for c, _ in outcomes)
        exact = all(e for _, e in outcomes)

    result = EnumerationResult(count=count, exact=exact, elapsed=time.time() - start, level=level)
    if not exact:
        logger.warning(f"Budget exhausted after {result.elapsed:.1f}s with {count} structures counted")
        raise BudgetExceededError(ERROR_MESSAGES["budget_exceeded"].format(budget=budget, count=count),
                                  partial=result)
    logger.info(f"{count} feasible structures in {result.elapsed:.2f}s")
    return result


def enumerate_feasible(space: DesignSpace, level: ConstraintLevel,
                       toggles: Optional[Mapping[str, bool]] = None,
                       budget: Optional[float] = None) -> Iterator[MolecularGraph]:
    """
    Yield every feasible structure in search order (sequential, deterministic).

    Raises:
        BudgetExceededError: When the budget runs out mid-stream
    """
    budget = DEFAULT_TIME_BUDGET if budget is None else budget
    deadline = time.time() + budget
    search = StructureSearch(space, level, toggles, deadline)
    produced = 0
    try:
        for _, types in search.solutions():
            produced += 1
            yield search.molecule(types)
    except _BudgetSignal:
        partial = EnumerationResult(count=produced, exact=False, level=level)
        raise BudgetExceededError(ERROR_MESSAGES["budget_exceeded"].format(budget=budget, count=produced),
                                  partial=partial)


def canonical_classes(space: DesignSpace, level: ConstraintLevel = ConstraintLevel.S1,
                      budget: Optional[float] = None) -> Set[bytes]:
    """Canonical forms of the feasible structures at a level."""
    if space.n_atoms > SMALL_N_CAP:
        raise UnsupportedError(ERROR_MESSAGES["cap_exceeded"].format(n=space.n_atoms, cap=SMALL_N_CAP))
    return {canonical_form(mol.to_graph()) for mol in enumerate_feasible(space, level, budget=budget)}


def count_classes(space: DesignSpace, budget: Optional[float] = None) -> int:
    """Number of isomorphism classes among the S1-feasible structures."""
    classes = len(canonical_classes(space, ConstraintLevel.S1, budget))
    logger.info(f"{classes} isomorphism classes for {space.name} N={space.n_atoms}")
    return classes


def brute_optimize(space: DesignSpace, model: GnnModel, level: ConstraintLevel,
                   budget: Optional[float] = None) -> Tuple[MolecularGraph, float]:
    """
    Minimize a GNN over the enumerated feasible set.

    Ties keep the structure met first in search order.

    Args:
        space: Design space
        model: GnnModel whose input width equals the feature count
        level: Constraint level of the enumerated set
        budget: Wall-time budget in seconds

    Returns:
        (optimal molecule, objective value)
    """
    if model.input_width != space.n_features:
        raise DomainError(ERROR_MESSAGES["width_mismatch"].format(
            model_width=model.input_width, feature_count=space.n_features))
    best: Optional[MolecularGraph] = None
    best_value = math.inf
    for mol in enumerate_feasible(space, level, budget=budget):
        value = forward(model, mol)
        if best is None or value < best_value:
            best, best_value = mol, value
    if best is None:
        raise DomainError(ERROR_MESSAGES["empty_feasible_set"])
    logger.info(f"Brute-force optimum {best_value:.6g}")
    return best, best_value


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def count_table(dataset: str, sizes: Sequence[int], budget: Optional[float] = None,
                threads: Optional[int] = None) -> pd.DataFrame:
    """
    Feasible-structure counts per size and level.

    Columns: n, s1, s2, s3, removed_pct (share of S1 solutions removed by
    S2 and S3, in percent rounded to the nearest integer) and exact (false
    when some count in the row is partial).
    """
    rows = []
    for n in sizes:
        space = design_space(dataset, n)
        counts = {}
        exact = True
        for level in ConstraintLevel:
            try:
                counts[level.value] = count_feasible(space, level, threads=threads, budget=budget).count
            except BudgetExceededError as e:
                counts[level.value] = e.partial.count
                exact = False
        s1 = counts["s1"]
        removed = _round_half_up(100.0 * (1 - counts["s3"] / s1)) if s1 else 0
        rows.append({"n": n, **counts, "removed_pct": removed, "exact": exact})
    return pd.DataFrame(rows, columns=["n", "s1", "s2", "s3", "removed_pct", "exact"])


def write_structures(path: str, molecules) -> int:
    """Write molecules in the fixture format, one blank-line-separated block each."""
    written = 0
    with open(path, "w") as f:
        for mol in molecules:
            if written:
                f.write("\n")
            f.write(format_molecule(mol))
            written += 1
    logger.info(f"Wrote {written} structures to {path}")
    return written


def parse_structures(text: str) -> List[MolecularGraph]:
    blocks = [block for block in text.split("\n\n") if block.strip()]
    return [parse_molecule(block) for block in blocks]
