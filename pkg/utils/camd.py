"""
Molecular design space: feature layout, structural constraints C1-C25,
symmetry constraints C26-C27 and the dataset bound formulas.

Molecules are checked as plain predicates here; utils.milp states the same
constraints as rows of a mixed-integer model.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np

from config import DATASETS, ERROR_MESSAGES, N_HYDROGEN_FEATURES, N_NEIGHBOR_FEATURES
from utils.errors import DomainError
from utils.graphcore import (Permutation, UndirectedGraph, format_matrix,
                             parse_matrix_blocks)

logger = logging.getLogger(__name__)

STRUCTURE_CONSTRAINTS = tuple(f"C{i}" for i in range(1, 26))


@dataclass(frozen=True)
class DesignSpace:
    """
    Parameters of a molecular design problem with ``n_atoms`` heavy atoms.

    Features per atom: one bit per atom type, neighbor count 0..4, hydrogen
    count 0..4, then the double-bond and triple-bond flags.
    """
    n_atoms: int
    atom_types: Tuple[str, ...]
    covalences: Tuple[int, ...]
    lower_bounds: Tuple[int, ...]
    upper_bounds: Tuple[int, ...]
    ub_double: int
    ub_triple: int
    ub_ring: int
    lb_double: int = 0
    lb_triple: int = 0
    lb_ring: int = 0
    n_neighbor_features: int = N_NEIGHBOR_FEATURES
    n_hydrogen_features: int = N_HYDROGEN_FEATURES
    exact_n: bool = True
    name: str = "custom"

    def __post_init__(self):
        n, t = self.n_atoms, len(self.atom_types)
        problems = []
        if n < 2:
            problems.append(f"need at least 2 atoms, got {n}")
        if t == 0 or len(self.covalences) != t:
            problems.append("one covalence per atom type is required")
        if any(c <= 0 for c in self.covalences):
            problems.append("covalences must be positive")
        if len(self.lower_bounds) != t or len(self.upper_bounds) != t:
            problems.append("one lower and one upper bound per atom type is required")
        if any(not 0 <= lb <= ub <= n for lb, ub in zip(self.lower_bounds, self.upper_bounds)):
            problems.append("atom count bounds must satisfy 0 <= LB <= UB <= N")
        pairs = n * (n - 1) // 2
        for label, lb, ub in (("double bond", self.lb_double, self.ub_double),
                              ("triple bond", self.lb_triple, self.ub_triple),
                              ("ring", self.lb_ring, self.ub_ring)):
            if not 0 <= lb <= ub <= pairs:
                problems.append(f"{label} bounds must satisfy 0 <= LB <= UB <= N(N-1)/2")
        if problems:
            raise DomainError(ERROR_MESSAGES["invalid_space"].format(reason="; ".join(problems)))

    @property
    def n_types(self) -> int:
        return len(self.atom_types)

    @property
    def type_indices(self) -> range:
        return range(0, self.n_types)

    @property
    def neighbor_indices(self) -> range:
        start = self.n_types
        return range(start, start + self.n_neighbor_features)

    @property
    def hydrogen_indices(self) -> range:
        start = self.n_types + self.n_neighbor_features
        return range(start, start + self.n_hydrogen_features)

    @property
    def db_index(self) -> int:
        return self.n_types + self.n_neighbor_features + self.n_hydrogen_features

    @property
    def tb_index(self) -> int:
        return self.db_index + 1

    @property
    def n_features(self) -> int:
        return self.tb_index + 1

    def type_index(self, atom: Union[str, int]) -> int:
        if isinstance(atom, (int, np.integer)):
            if not 0 <= atom < self.n_types:
                raise DomainError(f"Atom type index {atom} out of range")
            return int(atom)
        try:
            return self.atom_types.index(atom)
        except ValueError:
            raise DomainError(f"Unknown atom type {atom!r}; expected one of {self.atom_types}")


def qm7_space(n: int, exact_n: bool = True) -> DesignSpace:
    """
    Design space for QM7-like molecules (C, N, O, S) with n heavy atoms.

    Args:
        n: Atom count, at least 2
        exact_n: Fix every atom to exist (variable-N mode when False)

    Returns:
        DesignSpace with the QM7 bound formulas
    """
    if n < 2:
        raise DomainError(ERROR_MESSAGES["invalid_space"].format(reason=f"need at least 2 atoms, got {n}"))
    data = DATASETS["qm7"]
    return DesignSpace(
        n_atoms=n,
        atom_types=data["atom_types"],
        covalences=data["covalences"],
        lower_bounds=(math.ceil(n / 2), 0, 0, 0),
        upper_bounds=(n, max(1, 3 * n // 7), max(1, n // 3), max(1, n // 7)),
        ub_double=n // 2,
        ub_triple=n // 2,
        ub_ring=n // 2,
        exact_n=exact_n,
        name="qm7",
    )


def qm9_space(n: int, exact_n: bool = True) -> DesignSpace:
    """
    Design space for QM9-like molecules (C, N, O, F) with n heavy atoms.

    The QM9 formulas carry no max(1, .) guard.

    Args:
        n: Atom count, at least 2
        exact_n: Fix every atom to exist (variable-N mode when False)

    Returns:
        DesignSpace with the QM9 bound formulas
    """
    if n < 2:
        raise DomainError(ERROR_MESSAGES["invalid_space"].format(reason=f"need at least 2 atoms, got {n}"))
    data = DATASETS["qm9"]
    return DesignSpace(
        n_atoms=n,
        atom_types=data["atom_types"],
        covalences=data["covalences"],
        lower_bounds=(math.ceil(n / 5), 0, 0, 0),
        upper_bounds=(n, 3 * n // 5, 4 * n // 7, 4 * n // 5),
        ub_double=n // 2,
        ub_triple=n // 2,
        ub_ring=2 * n // 3,
        exact_n=exact_n,
        name="qm9",
    )


SPACE_BUILDERS = {"qm7": qm7_space, "qm9": qm9_space}


def design_space(dataset: str, n: int, exact_n: bool = True) -> DesignSpace:
    try:
        builder = SPACE_BUILDERS[dataset.lower()]
    except KeyError:
        raise DomainError(f"Unknown dataset {dataset!r}; expected one of {sorted(SPACE_BUILDERS)}")
    return builder(n, exact_n=exact_n)


def _frozen_bool(array) -> np.ndarray:
    array = np.array(array, dtype=bool, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class MolecularGraph:
    """
    Assignment of the design variables: features X (N x F) and the bond
    matrices A (any bond, diagonal = atom exists), DB (double) and TB (triple).

    Only shapes are validated; constraint checks report everything else.
    """
    X: np.ndarray
    A: np.ndarray
    DB: np.ndarray
    TB: np.ndarray

    def __post_init__(self):
        X = _frozen_bool(self.X)
        if X.ndim != 2:
            raise DomainError(f"Feature matrix must be 2-D, got shape {X.shape}")
        n = X.shape[0]
        for label in ("A", "DB", "TB"):
            matrix = _frozen_bool(getattr(self, label))
            if matrix.shape != (n, n):
                raise DomainError(ERROR_MESSAGES["size_mismatch"].format(expected=f"{label} of shape {(n, n)}", actual=matrix.shape))
            object.__setattr__(self, label, matrix)
        object.__setattr__(self, "X", X)

    @property
    def n_atoms(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def bond_orders(self) -> np.ndarray:
        """Integer matrix: 0 no bond, 1 single, 2 double, 3 triple (diagonal 0)."""
        orders = self.A.astype(np.int64) + self.DB.astype(np.int64) + 2 * self.TB.astype(np.int64)
        np.fill_diagonal(orders, 0)
        return orders

    def to_graph(self) -> UndirectedGraph:
        """Featured graph whose edge labels carry bond orders, for isomorphism tests."""
        return UndirectedGraph(self.A, self.X, self.bond_orders())

    def key(self) -> bytes:
        return b"".join(m.tobytes() for m in (self.X, self.A, self.DB, self.TB))

    def __eq__(self, other):
        if not isinstance(other, MolecularGraph):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("X", "A", "DB", "TB"))

    __hash__ = None


@dataclass(frozen=True)
class Violation:
    constraint: str
    indices: Tuple[int, ...] = ()

    def __str__(self) -> str:
        if not self.indices:
            return self.constraint
        return f"{self.constraint}{list(self.indices)}"


def format_violations(violations: Sequence[Violation]) -> str:
    return ", ".join(str(v) for v in violations) or "none"


def feature_row(space: DesignSpace, atom_type: int, degree: int, hydrogens: int,
                has_double: bool, has_triple: bool) -> np.ndarray:
    row = np.zeros(space.n_features, dtype=bool)
    row[atom_type] = True
    row[space.neighbor_indices[degree]] = True
    row[space.hydrogen_indices[hydrogens]] = True
    row[space.db_index] = has_double
    row[space.tb_index] = has_triple
    return row


def build_molecule(space: DesignSpace, types: Sequence[Union[str, int]],
                   bonds: Mapping[Tuple[int, int], int]) -> MolecularGraph:
    """
    Build a molecule from atom types and bond orders, deriving the remaining
    features (neighbor count, implicit hydrogens, double/triple flags).

    Args:
        space: Design space
        types: Atom type per atom (symbol or type index)
        bonds: Map (u, v) -> bond order 1, 2 or 3

    Returns:
        MolecularGraph with every atom present
    """
    n = len(types)
    if n != space.n_atoms:
        raise DomainError(ERROR_MESSAGES["size_mismatch"].format(expected=space.n_atoms, actual=n))
    orders = np.zeros((n, n), dtype=np.int64)
    for (u, v), order in bonds.items():
        if u == v or not (0 <= u < n and 0 <= v < n) or order not in (1, 2, 3):
            raise DomainError(f"Invalid bond ({u}, {v}) of order {order}")
        orders[u, v] = orders[v, u] = order

    A = np.eye(n, dtype=bool) | (orders > 0)
    DB = orders == 2
    TB = orders == 3
    X = np.zeros((n, space.n_features), dtype=bool)
    for v, atom in enumerate(types):
        t = space.type_index(atom)
        degree = int((orders[v] > 0).sum())
        hydrogens = space.covalences[t] - int(orders[v].sum())
        if degree >= space.n_neighbor_features or not 0 <= hydrogens < space.n_hydrogen_features:
            raise DomainError(f"Atom {v} ({space.atom_types[t]}) cannot carry degree {degree} with {int(orders[v].sum())} bond valence")
        X[v] = feature_row(space, t, degree, hydrogens, bool(DB[v].any()), bool(TB[v].any()))
    return MolecularGraph(X, A, DB, TB)


def _check_dimensions(space: DesignSpace, mol: MolecularGraph) -> None:
    if mol.n_atoms != space.n_atoms or mol.n_features != space.n_features:
        raise DomainError(ERROR_MESSAGES["size_mismatch"].format(
            expected=(space.n_atoms, space.n_features), actual=(mol.n_atoms, mol.n_features)))


def check_structure(space: DesignSpace, mol: MolecularGraph) -> List[Violation]:
    """
    Evaluate the structural constraints C1-C25.

    In exact-N mode C2 is the fixing A[v, v] = 1 for every atom; in
    variable-N mode it is the index-monotone existence A[v, v] >= A[v+1, v+1].

    Args:
        space: Design space
        mol: Candidate molecule

    Returns:
        List of violations (empty iff every constraint holds)
    """
    _check_dimensions(space, mol)
    n = space.n_atoms
    X = mol.X.astype(np.int64)
    A = mol.A.astype(np.int64)
    DB = mol.DB.astype(np.int64)
    TB = mol.TB.astype(np.int64)
    exists = np.diag(A)
    t_idx = list(space.type_indices)
    n_idx = list(space.neighbor_indices)
    h_idx = list(space.hydrogen_indices)
    db, tb = space.db_index, space.tb_index
    cov = np.array(space.covalences, dtype=np.int64)
    report: List[Violation] = []

    def fail(cid: str, *indices: int) -> None:
        report.append(Violation(cid, tuple(int(i) for i in indices)))

    if not (A[0, 0] == 1 and A[1, 1] == 1 and A[0, 1] == 1):
        fail("C1")
    if space.exact_n:
        for v in range(n):
            if exists[v] != 1:
                fail("C2", v)
    else:
        for v in range(n - 1):
            if exists[v] < exists[v + 1]:
                fail("C2", v)
    for cid, matrix in (("C3", A), ("C7", DB), ("C9", TB)):
        for u in range(n):
            for v in range(u + 1, n):
                if matrix[u, v] != matrix[v, u]:
                    fail(cid, u, v)

    off_degree = A.sum(axis=0) - exists
    for v in range(n):
        if (n - 1) * exists[v] < off_degree[v]:
            fail("C4", v)
    for v in range(1, n):
        if exists[v] > A[:v, v].sum():
            fail("C5", v)
    for v in range(n):
        if DB[v, v] != 0:
            fail("C6", v)
        if TB[v, v] != 0:
            fail("C8", v)
    for u in range(n):
        for v in range(u + 1, n):
            if DB[u, v] + TB[u, v] > A[u, v]:
                fail("C10", u, v)

    for v in range(n):
        if X[v, t_idx].sum() != exists[v]:
            fail("C11", v)
        if X[v, n_idx].sum() != exists[v]:
            fail("C12", v)
        if X[v, h_idx].sum() != exists[v]:
            fail("C13", v)

    neighbor_count = X[:, n_idx] @ np.arange(len(n_idx))
    hydrogen_count = X[:, h_idx] @ np.arange(len(h_idx))
    for v in range(n):
        if off_degree[v] != neighbor_count[v]:
            fail("C14", v)

    for u in range(n):
        for v in range(u + 1, n):
            if 3 * DB[u, v] > X[u, db] + X[v, db] + A[u, v]:
                fail("C15", u, v)
            if 3 * TB[u, v] > X[u, tb] + X[v, tb] + A[u, v]:
                fail("C16", u, v)

    db_count = DB.sum(axis=0)
    tb_count = TB.sum(axis=0)
    db_cap = X[:, t_idx] @ (cov // 2)
    tb_cap = X[:, t_idx] @ (cov // 3)
    valence = X[:, t_idx] @ cov
    for v in range(n):
        if db_count[v] > db_cap[v]:
            fail("C17", v)
        if tb_count[v] > tb_cap[v]:
            fail("C18", v)
        if X[v, db] > db_count[v]:
            fail("C19", v)
        if X[v, tb] > tb_count[v]:
            fail("C20", v)
        if valence[v] != neighbor_count[v] + hydrogen_count[v] + db_count[v] + 2 * tb_count[v]:
            fail("C21", v)

    type_counts = X[:, t_idx].sum(axis=0)
    for i in t_idx:
        if not space.lower_bounds[i] <= type_counts[i] <= space.upper_bounds[i]:
            fail("C22", i)
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    n_double = int(DB[upper].sum())
    n_triple = int(TB[upper].sum())
    n_bonds = int(A[upper].sum())
    if not space.lb_double <= n_double <= space.ub_double:
        fail("C23")
    if not space.lb_triple <= n_triple <= space.ub_triple:
        fail("C24")
    n_existing = n if space.exact_n else int(exists.sum())
    rings = n_bonds - (n_existing - 1)
    if not space.lb_ring <= rings <= space.ub_ring:
        fail("C25")

    report.sort(key=lambda item: (int(item.constraint[1:]), item.indices))
    return report


def c26_weights(space: DesignSpace) -> np.ndarray:
    f = space.n_features
    return np.array([2 ** (f - i - 1) for i in range(f)], dtype=np.int64)


def c27_weights(space: DesignSpace) -> np.ndarray:
    n = space.n_atoms
    return np.array([2 ** (n - u - 1) for u in range(n)], dtype=np.int64)


def check_c26(space: DesignSpace, mol: MolecularGraph) -> bool:
    """
    Atom 0 carries the smallest weighted feature row, with weights 2^(F-f-1).
    In variable-N mode absent atoms are exempt through a 2^F slack term.
    """
    _check_dimensions(space, mol)
    h = mol.X.astype(np.int64) @ c26_weights(space)
    slack = np.zeros(space.n_atoms, dtype=np.int64)
    if not space.exact_n:
        slack = (2 ** space.n_features) * (1 - np.diag(mol.A).astype(np.int64))
    return bool(np.all(h[0] <= h[1:] + slack[1:]))


def check_c27(space: DesignSpace, mol: MolecularGraph) -> bool:
    """
    Consecutive atoms v, v+1 (v = 1..N-2) have non-increasing weighted
    neighbor columns sum_u 2^(N-u-1) A[u, .], skipping rows v and v+1.
    """
    _check_dimensions(space, mol)
    n = space.n_atoms
    A = mol.A.astype(np.int64)
    w = c27_weights(space)
    for v in range(1, n - 1):
        keep = np.ones(n, dtype=bool)
        keep[[v, v + 1]] = False
        if int(w[keep] @ A[keep, v]) < int(w[keep] @ A[keep, v + 1]):
            return False
    return True


def permute_molecule(mol: MolecularGraph, p: Permutation) -> MolecularGraph:
    """Relabel a molecule: atom u of the result is atom p(u) of the input."""
    if len(p) != mol.n_atoms:
        raise DomainError(ERROR_MESSAGES["size_mismatch"].format(expected=mol.n_atoms, actual=len(p)))
    idx = np.array(p.mapping, dtype=np.intp)
    grid = np.ix_(idx, idx)
    return MolecularGraph(mol.X[idx], mol.A[grid], mol.DB[grid], mol.TB[grid])


def molecule_summary(space: DesignSpace, mol: MolecularGraph) -> Dict[str, object]:
    """Atom counts per type, implicit hydrogens, special bonds and rings."""
    _check_dimensions(space, mol)
    X = mol.X.astype(np.int64)
    h_idx = list(space.hydrogen_indices)
    n = mol.n_atoms
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    exists = int(np.diag(mol.A).sum())
    counts = {atom: int(X[:, i].sum()) for i, atom in enumerate(space.atom_types)}
    formula = "".join(f"{atom}{count if count > 1 else ''}" for atom, count in counts.items() if count)
    hydrogens = int((X[:, h_idx] @ np.arange(len(h_idx))).sum())
    return {
        "formula": formula + (f"H{hydrogens if hydrogens > 1 else ''}" if hydrogens else ""),
        "atoms": counts,
        "hydrogens": hydrogens,
        "double_bonds": int(mol.DB[upper].sum()),
        "triple_bonds": int(mol.TB[upper].sum()),
        "rings": int(mol.A[upper].sum()) - (exists - 1),
    }


def parse_molecule(text: str) -> MolecularGraph:
    """Read a molecule: header "N F", N feature rows, then A, DB and TB blocks."""
    _, features, (A, DB, TB) = parse_matrix_blocks(text, 3, "molecule")
    return MolecularGraph(features, A, DB, TB)


def load_molecule(path: str) -> MolecularGraph:
    with open(path, "r") as f:
        return parse_molecule(f.read())


def format_molecule(mol: MolecularGraph) -> str:
    lines = [f"{mol.n_atoms} {mol.n_features}"]
    for matrix in (mol.X, mol.A, mol.DB, mol.TB):
        lines += format_matrix(matrix)
    return "\n".join(lines) + "\n"
