"""
Mixed-integer model of the molecular design problem.

``build`` states C1-C25 (plus C26/C27 when symmetry breaking is on) over
binary X, A, DB, TB variables and, given a GNN, encodes every layer so that
the objective variable ``y`` equals the network output. Neighbor
contributions are either bilinear products A * x or big-M linearized
copies z. ReLU units use one binary each, unless their bounds fix the sign.

The model can be written as CPLEX-style LP or free MPS, stored as a JSON
sidecar, and checked against any variable assignment.
"""

import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from config import CHECK_TOLERANCE, ERROR_MESSAGES
from utils.camd import (DesignSpace, MolecularGraph, c26_weights, c27_weights, check_c26,
                        check_c27, check_structure, format_violations, Violation)
from utils.errors import BuildError, DomainError, UnsupportedError
from utils.gnn import BoundsTensor, GnnModel, forward_trace, propagate_bounds

logger = logging.getLogger(__name__)

BINARY = "binary"
CONTINUOUS = "continuous"
SENSES = ("<=", "=", ">=")
VARIANTS = ("bilinear", "bigm")

Assignment = Dict[str, float]
Term = Tuple[str, float]
QuadTerm = Tuple[str, str, float]


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str = CONTINUOUS
    lo: float = 0.0
    hi: float = math.inf


@dataclass(frozen=True)
class Constraint:
    name: str
    terms: Tuple[Term, ...]
    sense: str
    rhs: float
    quad_terms: Tuple[QuadTerm, ...] = ()

    @property
    def family(self) -> str:
        return self.name.split("_", 1)[0]


@dataclass
class MilpModel:
    """Linear or bilinear minimization model with named variables and rows."""
    name: str = "molmip"
    variables: Dict[str, Variable] = field(default_factory=dict)
    constraints: List[Constraint] = field(default_factory=list)
    objective: List[Term] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self._row_names = {c.name for c in self.constraints}

    def add_variable(self, name: str, kind: str = CONTINUOUS, lo: float = 0.0, hi: float = math.inf) -> str:
        if name in self.variables:
            raise DomainError(ERROR_MESSAGES["duplicate_name"].format(name=name))
        if kind == BINARY:
            lo, hi = 0.0, 1.0
        self.variables[name] = Variable(name, kind, float(lo), float(hi))
        return name

    def add_constraint(self, name: str, terms: Iterable[Term], sense: str, rhs: float,
                       quad_terms: Iterable[QuadTerm] = ()) -> Constraint:
        if name in self._row_names:
            raise DomainError(ERROR_MESSAGES["duplicate_name"].format(name=name))
        if sense not in SENSES:
            raise DomainError(f"Unknown constraint sense {sense!r}")
        terms = tuple((v, float(c)) for v, c in terms if c != 0)
        quad_terms = tuple((a, b, float(c)) for a, b, c in quad_terms if c != 0)
        for var in [v for v, _ in terms] + [x for a, b, _ in quad_terms for x in (a, b)]:
            if var not in self.variables:
                raise DomainError(ERROR_MESSAGES["unknown_variable"].format(constraint=name, name=var))
        constraint = Constraint(name, terms, sense, float(rhs), quad_terms)
        self.constraints.append(constraint)
        self._row_names.add(name)
        return constraint

    def set_objective(self, terms: Iterable[Term]) -> None:
        terms = [(v, float(c)) for v, c in terms if c != 0]
        for var, _ in terms:
            if var not in self.variables:
                raise DomainError(ERROR_MESSAGES["unknown_variable"].format(constraint="objective", name=var))
        self.objective = terms

    @property
    def is_bilinear(self) -> bool:
        return any(c.quad_terms for c in self.constraints)

    def constraint(self, name: str) -> Constraint:
        for c in self.constraints:
            if c.name == name:
                return c
        raise KeyError(name)


def _a(u: int, v: int) -> str:
    return f"A_{u}_{v}"


def _edge(u: int, v: int) -> str:
    """The binary gating the message between u and v, shared by both directions."""
    return _a(min(u, v), max(u, v))


def _state(l: int, v: int, d: int) -> str:
    return f"X_{v}_{d}" if l == 0 else f"x_{l}_{v}_{d}"


def _add_camd(m: MilpModel, space: DesignSpace, symmetry: bool) -> None:
    n, F = space.n_atoms, space.n_features
    t_idx = list(space.type_indices)
    n_idx = list(space.neighbor_indices)
    h_idx = list(space.hydrogen_indices)
    db, tb = space.db_index, space.tb_index
    cov = space.covalences

    for v in range(n):
        for f in range(F):
            m.add_variable(f"X_{v}_{f}", BINARY)
    for prefix in ("A", "DB", "TB"):
        for u in range(n):
            for v in range(n):
                m.add_variable(f"{prefix}_{u}_{v}", BINARY)

    def X(v, f):
        return f"X_{v}_{f}"

    def DB(u, v):
        return f"DB_{u}_{v}"

    def TB(u, v):
        return f"TB_{u}_{v}"

    def others(v):
        return [u for u in range(n) if u != v]

    add = m.add_constraint

    add("C1_0_0", [(_a(0, 0), 1)], "=", 1)
    add("C1_1_1", [(_a(1, 1), 1)], "=", 1)
    add("C1_0_1", [(_a(0, 1), 1)], "=", 1)
    if space.exact_n:
        for v in range(n):
            add(f"C2_{v}", [(_a(v, v), 1)], "=", 1)
    else:
        for v in range(n - 1):
            add(f"C2_{v}", [(_a(v, v), 1), (_a(v + 1, v + 1), -1)], ">=", 0)
    for u in range(n):
        for v in range(u + 1, n):
            add(f"C3_{u}_{v}", [(_a(u, v), 1), (_a(v, u), -1)], "=", 0)
    for v in range(n):
        add(f"C4_{v}", [(_a(v, v), n - 1)] + [(_a(u, v), -1) for u in others(v)], ">=", 0)
    for v in range(1, n):
        add(f"C5_{v}", [(_a(u, v), 1) for u in range(v)] + [(_a(v, v), -1)], ">=", 0)
    for v in range(n):
        add(f"C6_{v}", [(DB(v, v), 1)], "=", 0)
    for u in range(n):
        for v in range(u + 1, n):
            add(f"C7_{u}_{v}", [(DB(u, v), 1), (DB(v, u), -1)], "=", 0)
    for v in range(n):
        add(f"C8_{v}", [(TB(v, v), 1)], "=", 0)
    for u in range(n):
        for v in range(u + 1, n):
            add(f"C9_{u}_{v}", [(TB(u, v), 1), (TB(v, u), -1)], "=", 0)
    for u in range(n):
        for v in range(u + 1, n):
            add(f"C10_{u}_{v}", [(DB(u, v), 1), (TB(u, v), 1), (_a(u, v), -1)], "<=", 0)
    for cid, block in (("C11", t_idx), ("C12", n_idx), ("C13", h_idx)):
        for v in range(n):
            add(f"{cid}_{v}", [(X(v, f), 1) for f in block] + [(_a(v, v), -1)], "=", 0)
    for v in range(n):
        add(f"C14_{v}", [(_a(u, v), 1) for u in others(v)] + [(X(v, f), -i) for i, f in enumerate(n_idx)], "=", 0)
    for u in range(n):
        for v in range(u + 1, n):
            add(f"C15_{u}_{v}", [(DB(u, v), 3), (X(u, db), -1), (X(v, db), -1), (_a(u, v), -1)], "<=", 0)
    for u in range(n):
        for v in range(u + 1, n):
            add(f"C16_{u}_{v}", [(TB(u, v), 3), (X(u, tb), -1), (X(v, tb), -1), (_a(u, v), -1)], "<=", 0)
    for v in range(n):
        add(f"C17_{v}", [(DB(u, v), 1) for u in others(v)] + [(X(v, i), -(cov[i] // 2)) for i in t_idx], "<=", 0)
    for v in range(n):
        add(f"C18_{v}", [(TB(u, v), 1) for u in others(v)] + [(X(v, i), -(cov[i] // 3)) for i in t_idx], "<=", 0)
    for v in range(n):
        add(f"C19_{v}", [(X(v, db), 1)] + [(DB(u, v), -1) for u in others(v)], "<=", 0)
    for v in range(n):
        add(f"C20_{v}", [(X(v, tb), 1)] + [(TB(u, v), -1) for u in others(v)], "<=", 0)
    for v in range(n):
        terms = [(X(v, i), cov[i]) for i in t_idx]
        terms += [(X(v, f), -i) for i, f in enumerate(n_idx)]
        terms += [(X(v, f), -i) for i, f in enumerate(h_idx)]
        terms += [(DB(u, v), -1) for u in others(v)] + [(TB(u, v), -2) for u in others(v)]
        add(f"C21_{v}", terms, "=", 0)
    for i in t_idx:
        count = [(X(v, i), 1) for v in range(n)]
        add(f"C22_{i}_lo", count, ">=", space.lower_bounds[i])
        add(f"C22_{i}_hi", count, "<=", space.upper_bounds[i])
    upper = [(u, v) for u in range(n) for v in range(u + 1, n)]
    for cid, prefix, lb, ub in (("C23", "DB", space.lb_double, space.ub_double),
                                ("C24", "TB", space.lb_triple, space.ub_triple)):
        count = [(f"{prefix}_{u}_{v}", 1) for u, v in upper]
        add(f"{cid}_lo", count, ">=", lb)
        add(f"{cid}_hi", count, "<=", ub)
    bonds = [(_a(u, v), 1) for u, v in upper]
    if space.exact_n:
        add("C25_lo", bonds, ">=", space.lb_ring + n - 1)
        add("C25_hi", bonds, "<=", space.ub_ring + n - 1)
    else:
        atoms = [(_a(v, v), -1) for v in range(n)]
        add("C25_lo", bonds + atoms, ">=", space.lb_ring - 1)
        add("C25_hi", bonds + atoms, "<=", space.ub_ring - 1)

    if not symmetry:
        return
    w = c26_weights(space)
    for v in range(1, n):
        terms = [(X(0, f), int(w[f])) for f in range(F)] + [(X(v, f), -int(w[f])) for f in range(F)]
        if space.exact_n:
            add(f"C26_{v}", terms, "<=", 0)
        else:
            add(f"C26_{v}", terms + [(_a(v, v), 2 ** F)], "<=", 2 ** F)
    w = c27_weights(space)
    for v in range(1, n - 1):
        rows = [u for u in range(n) if u not in (v, v + 1)]
        terms = [(_a(u, v), int(w[u])) for u in rows] + [(_a(u, v + 1), -int(w[u])) for u in rows]
        add(f"C27_{v}", terms, ">=", 0)


def _check_finite(unit: str, *values: float) -> None:
    if not all(math.isfinite(x) for x in values):
        raise BuildError(ERROR_MESSAGES["unbounded_unit"].format(unit=unit))


def _add_activation(m: MilpModel, tag: str, pre: str, post: str, binary: str,
                    activation: str, lo: float, hi: float) -> None:
    """Tie post to pre through the activation, given pre-activation bounds [lo, hi]."""
    if activation == "identity":
        m.add_variable(post, CONTINUOUS, lo, hi)
        m.add_constraint(f"act_{tag}", [(post, 1), (pre, -1)], "=", 0)
        return
    if lo >= 0:
        m.add_variable(post, CONTINUOUS, lo, hi)
        m.add_constraint(f"relu_{tag}", [(post, 1), (pre, -1)], "=", 0)
        return
    if hi <= 0:
        m.add_variable(post, CONTINUOUS, 0.0, 0.0)
        m.add_constraint(f"relu_{tag}", [(post, 1)], "=", 0)
        return
    _check_finite(pre, lo, hi)
    m.add_variable(post, CONTINUOUS, 0.0, hi)
    m.add_variable(binary, BINARY)
    m.add_constraint(f"relu_{tag}_a", [(post, 1), (pre, -1)], ">=", 0)
    m.add_constraint(f"relu_{tag}_b", [(post, 1), (pre, -1), (binary, -lo)], "<=", -lo)
    m.add_constraint(f"relu_{tag}_c", [(post, 1), (binary, -hi)], "<=", 0)


def _add_gnn(m: MilpModel, space: DesignSpace, model: GnnModel, variant: str,
             bounds: BoundsTensor) -> None:
    n = space.n_atoms
    for l, layer in enumerate(model.graph_layers, start=1):
        prev = bounds.node_post(l - 1)
        here = bounds.graph[l - 1]
        if variant == "bigm":
            for v in range(n):
                for u in range(n):
                    if u == v:
                        continue
                    for d in range(layer.in_width):
                        x, e = _state(l - 1, u, d), _edge(u, v)
                        M = max(abs(prev.lo[u, d]), abs(prev.hi[u, d]))
                        _check_finite(x, M)
                        z = m.add_variable(f"z_{l}_{u}_{v}_{d}", CONTINUOUS, -M, M)
                        tag = f"{l}_{u}_{v}_{d}"
                        m.add_constraint(f"bigm_{tag}_a", [(z, 1), (x, -1), (e, -M)], ">=", -M)
                        m.add_constraint(f"bigm_{tag}_b", [(z, 1), (x, -1), (e, M)], "<=", M)
                        m.add_constraint(f"bigm_{tag}_c", [(z, 1), (e, M)], ">=", 0)
                        m.add_constraint(f"bigm_{tag}_d", [(z, 1), (e, -M)], "<=", 0)
        for v in range(n):
            for c in range(layer.out_width):
                pre = m.add_variable(f"h_{l}_{v}_{c}", CONTINUOUS, here.pre.lo[v, c], here.pre.hi[v, c])
                terms = [(pre, 1)] + [(_state(l - 1, v, d), -layer.w_self[c, d]) for d in range(layer.in_width)]
                quad = []
                for u in range(n):
                    if u == v:
                        continue
                    for d in range(layer.in_width):
                        if variant == "bigm":
                            terms.append((f"z_{l}_{u}_{v}_{d}", -layer.w_neigh[c, d]))
                        else:
                            quad.append((_edge(u, v), _state(l - 1, u, d), -layer.w_neigh[c, d]))
                m.add_constraint(f"sage_{l}_{v}_{c}", terms, "=", layer.bias[c], quad)
                _add_activation(m, f"{l}_{v}_{c}", pre, _state(l, v, c), f"s_{l}_{v}_{c}",
                                layer.activation, here.pre.lo[v, c], here.pre.hi[v, c])

    last = len(model.graph_layers)
    scale = 1.0 / n if model.pooling == "mean" else 1.0
    for c in range(model.pooled_width):
        p = m.add_variable(f"p_{c}", CONTINUOUS, bounds.pooled.lo[c], bounds.pooled.hi[c])
        m.add_constraint(f"pool_{c}", [(p, 1)] + [(_state(last, v, c), -scale) for v in range(n)], "=", 0)

    inputs = [f"p_{c}" for c in range(model.pooled_width)]
    for k, layer in enumerate(model.dense_layers, start=1):
        here = bounds.dense[k - 1]
        outputs = []
        for c in range(layer.out_width):
            pre = m.add_variable(f"dh_{k}_{c}", CONTINUOUS, here.pre.lo[c], here.pre.hi[c])
            terms = [(pre, 1)] + [(inputs[d], -layer.w[c, d]) for d in range(layer.in_width)]
            m.add_constraint(f"dense_{k}_{c}", terms, "=", layer.bias[c])
            post = f"dx_{k}_{c}"
            _add_activation(m, f"dense{k}_{c}", pre, post, f"ds_{k}_{c}",
                            layer.activation, here.pre.lo[c], here.pre.hi[c])
            outputs.append(post)
        inputs = outputs

    final = m.variables[inputs[0]]
    y = m.add_variable("y", CONTINUOUS, final.lo, final.hi)
    m.add_constraint("out", [(y, 1), (inputs[0], -1)], "=", 0)
    m.set_objective([(y, 1)])


def build(space: DesignSpace, model: Optional[GnnModel] = None, variant: str = "bigm",
          symmetry: bool = True, bounds: Optional[BoundsTensor] = None) -> MilpModel:
    """
    Build the design model.

    Args:
        space: Design space
        model: GNN to minimize; without one the objective is empty
        variant: "bilinear" (products A * x) or "bigm" (linearized z copies)
        symmetry: Add C26 and C27
        bounds: Activation bounds (default: propagate_bounds(model, space))

    Returns:
        MilpModel
    """
    if variant not in VARIANTS:
        raise DomainError(f"Unknown variant {variant!r}; expected one of {VARIANTS}")
    m = MilpModel(name=f"{space.name}_n{space.n_atoms}_{variant}")
    m.metadata = {
        "dataset": space.name,
        "n_atoms": space.n_atoms,
        "n_features": space.n_features,
        "exact_n": space.exact_n,
        "variant": variant,
        "symmetry": symmetry,
        "gnn": model is not None,
    }
    _add_camd(m, space, symmetry)
    if model is not None:
        if model.input_width != space.n_features:
            raise DomainError(ERROR_MESSAGES["width_mismatch"].format(
                model_width=model.input_width, feature_count=space.n_features))
        bounds = propagate_bounds(model, space) if bounds is None else bounds
        _add_gnn(m, space, model, variant, bounds)
    stats = model_statistics(m)
    logger.info(f"Built {m.name}: {stats['binary_variables']} binary, "
                f"{stats['continuous_variables']} continuous variables, "
                f"{stats['linear_constraints']} linear and {stats['quadratic_constraints']} quadratic constraints")
    return m


def model_statistics(m: MilpModel) -> Dict[str, Any]:
    """Raw (pre-solve) variable and constraint counts."""
    kinds = Counter(v.kind for v in m.variables.values())
    quadratic = sum(1 for c in m.constraints if c.quad_terms)
    return {
        "binary_variables": kinds.get(BINARY, 0),
        "continuous_variables": kinds.get(CONTINUOUS, 0),
        "linear_constraints": len(m.constraints) - quadratic,
        "quadratic_constraints": quadratic,
        "quadratic_terms": sum(len(c.quad_terms) for c in m.constraints),
        "families": dict(Counter(c.family for c in m.constraints)),
    }


def embed_solution(m: MilpModel, space: DesignSpace, mol: MolecularGraph,
                   gnn_model: Optional[GnnModel] = None) -> Assignment:
    """
    Assignment of every model variable induced by a molecule.

    Args:
        m: Model built for ``space`` (and ``gnn_model`` if it has GNN rows)
        space: Design space
        mol: Molecule satisfying the model's CAMD constraints
        gnn_model: The GNN the model encodes

    Returns:
        Assignment covering every variable of m
    """
    violations = check_structure(space, mol)
    if m.metadata.get("symmetry", False):
        if not check_c26(space, mol):
            violations.append(Violation("C26"))
        if not check_c27(space, mol):
            violations.append(Violation("C27"))
    if violations:
        raise DomainError(ERROR_MESSAGES["infeasible_molecule"].format(violations=format_violations(violations)))
    if m.metadata.get("gnn", False) and gnn_model is None:
        raise DomainError("This model encodes a GNN; pass the same GNN to embed a molecule")

    n = mol.n_atoms
    values: Assignment = {}
    for v in range(n):
        for f in range(mol.n_features):
            values[f"X_{v}_{f}"] = float(mol.X[v, f])
    for prefix, matrix in (("A", mol.A), ("DB", mol.DB), ("TB", mol.TB)):
        for u in range(n):
            for v in range(n):
                values[f"{prefix}_{u}_{v}"] = float(matrix[u, v])

    if gnn_model is not None:
        trace = forward_trace(gnn_model, mol)
        states = [mol.X.astype(float)] + [post for _, post in trace.graph]
        for l, (pre, post) in enumerate(trace.graph, start=1):
            prev = states[l - 1]
            for v in range(n):
                for u in range(n):
                    if u == v:
                        continue
                    gate = float(mol.A[min(u, v), max(u, v)])
                    for d in range(prev.shape[1]):
                        values[f"z_{l}_{u}_{v}_{d}"] = gate * prev[u, d]
                for c in range(pre.shape[1]):
                    values[f"h_{l}_{v}_{c}"] = float(pre[v, c])
                    values[f"x_{l}_{v}_{c}"] = float(post[v, c])
                    values[f"s_{l}_{v}_{c}"] = 1.0 if pre[v, c] > 0 else 0.0
        for c, value in enumerate(trace.pooled):
            values[f"p_{c}"] = float(value)
        for k, (pre, post) in enumerate(trace.dense, start=1):
            for c in range(pre.shape[0]):
                values[f"dh_{k}_{c}"] = float(pre[c])
                values[f"dx_{k}_{c}"] = float(post[c])
                values[f"ds_{k}_{c}"] = 1.0 if pre[c] > 0 else 0.0
        values["y"] = trace.output

    missing = [name for name in m.variables if name not in values]
    if missing:
        raise DomainError(ERROR_MESSAGES["missing_variable"].format(names=", ".join(missing[:5])))
    return {name: values[name] for name in m.variables}


@dataclass
class AssignmentReport:
    family_residuals: Dict[str, float]
    worst_constraint: Optional[str]
    bound_violation: float
    integrality_violation: float
    objective: float
    passed: bool

    def violated_families(self, tolerance: float = CHECK_TOLERANCE) -> List[str]:
        return [family for family, r in self.family_residuals.items() if r > tolerance]


def constraint_residual(c: Constraint, a: Assignment) -> float:
    lhs = sum(coef * a[v] for v, coef in c.terms)
    lhs += sum(coef * a[x] * a[y] for x, y, coef in c.quad_terms)
    if c.sense == "<=":
        return max(0.0, lhs - c.rhs)
    if c.sense == ">=":
        return max(0.0, c.rhs - lhs)
    return abs(lhs - c.rhs)


def check_assignment(m: MilpModel, a: Assignment, tolerance: float = CHECK_TOLERANCE) -> AssignmentReport:
    """
    Evaluate every constraint, bound and integrality requirement.

    Args:
        m: Model
        a: Value per variable name
        tolerance: Largest accepted residual

    Returns:
        AssignmentReport with the worst residual per constraint family
    """
    missing = [name for name in m.variables if name not in a]
    if missing:
        raise DomainError(ERROR_MESSAGES["missing_variable"].format(names=", ".join(missing[:5])))

    residuals: Dict[str, float] = {}
    worst_name, worst = None, 0.0
    for c in m.constraints:
        r = constraint_residual(c, a)
        residuals[c.family] = max(residuals.get(c.family, 0.0), r)
        if r > worst:
            worst_name, worst = c.name, r

    bound_violation = 0.0
    integrality = 0.0
    for var in m.variables.values():
        value = a[var.name]
        bound_violation = max(bound_violation, var.lo - value, value - var.hi)
        if var.kind == BINARY:
            integrality = max(integrality, min(abs(value), abs(value - 1.0)))
    objective = sum(coef * a[v] for v, coef in m.objective)
    passed = worst <= tolerance and bound_violation <= tolerance and integrality <= tolerance
    if not passed:
        logger.info(f"Assignment rejected: worst row {worst_name} ({worst:.3g}), "
                    f"bounds {bound_violation:.3g}, integrality {integrality:.3g}")
    return AssignmentReport(residuals, worst_name, max(bound_violation, 0.0), integrality, objective, passed)


# LP, MPS and JSON interchange

TERMS_PER_LINE = 8


def _no_negative_zero(value: float) -> float:
    return 0.0 if value == 0 else value


def _format_number(value: float) -> str:
    value = _no_negative_zero(float(value))
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _signed(coef: float, body: str, first: bool) -> str:
    sign = "-" if coef < 0 else "+"
    magnitude = abs(coef)
    text = body if magnitude == 1 else f"{_format_number(magnitude)} {body}"
    if first:
        return f"- {text}" if sign == "-" else text
    return f"{sign} {text}"


def _expression_chunks(terms: Sequence[Term], quad_terms: Sequence[QuadTerm]) -> List[str]:
    chunks = [_signed(coef, name, i == 0) for i, (name, coef) in enumerate(terms)]
    if quad_terms:
        inner = [_signed(coef, f"{a} * {b}", i == 0) for i, (a, b, coef) in enumerate(quad_terms)]
        inner[0] = ("[ " if not chunks else "+ [ ") + inner[0]
        inner[-1] = inner[-1] + " ]"
        chunks += inner
    return chunks


def _wrap(head: str, chunks: List[str], tail: str = "") -> List[str]:
    if not chunks:
        chunks = ["0"]
    lines = []
    for i in range(0, len(chunks), TERMS_PER_LINE):
        piece = " ".join(chunks[i:i + TERMS_PER_LINE])
        lines.append((head if i == 0 else "   ") + piece)
    if tail:
        lines[-1] += tail
    return lines


def _format_bound(var: Variable) -> str:
    lo, hi = var.lo, var.hi
    if math.isinf(lo) and math.isinf(hi):
        return f" {var.name} free"
    if lo == hi:
        return f" {var.name} = {_format_number(lo)}"
    if math.isinf(hi):
        return f" {var.name} >= {_format_number(lo)}"
    low = "-inf" if math.isinf(lo) else _format_number(lo)
    return f" {low} <= {var.name} <= {_format_number(hi)}"


def emit_lp(m: MilpModel) -> str:
    """
    CPLEX-dialect LP text. Every variable gets an explicit bound line in
    declaration order; bilinear terms sit in bracketed quadratic sections.
    """
    lines = [f"\\ Problem name: {m.name}", "Minimize"]
    lines += _wrap(" obj: ", _expression_chunks(m.objective, ())) if m.objective else [" obj:"]
    lines.append("Subject To")
    for c in m.constraints:
        lines += _wrap(f" {c.name}: ", _expression_chunks(c.terms, c.quad_terms),
                       f" {c.sense} {_format_number(c.rhs)}")
    lines.append("Bounds")
    lines += [_format_bound(var) for var in m.variables.values()]
    binaries = [var.name for var in m.variables.values() if var.kind == BINARY]
    if binaries:
        lines.append("Binaries")
        lines += [" " + " ".join(binaries[i:i + TERMS_PER_LINE]) for i in range(0, len(binaries), TERMS_PER_LINE)]
    lines.append("End")
    return "\n".join(lines) + "\n"


_SECTION_RE = re.compile(r"^(minimize|minimum|min|subject to|such that|st|s\.t\.|bounds|binaries|binary|bin|generals|end)$", re.IGNORECASE)
_SENSE_TOKENS = {"<=": "<=", "=<": "<=", "<": "<=", ">=": ">=", "=>": ">=", ">": ">=", "=": "="}


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return token.lower() not in ("inf", "infinity", "nan") and not token.lower().startswith(("+inf", "-inf"))


def _parse_expression(tokens: Sequence[str]) -> Tuple[List[Term], List[QuadTerm]]:
    terms: List[Term] = []
    quad: List[QuadTerm] = []
    sign, coef, in_quad = 1.0, None, False
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok == "[":
            in_quad = True
        elif tok == "]":
            in_quad = False
        elif tok in ("+", "-"):
            sign = -1.0 if tok == "-" else 1.0
        elif _is_number(tok):
            coef = float(tok)
        elif in_quad and i + 2 < len(tokens) and tokens[i + 1] == "*":
            quad.append((tok, tokens[i + 2], sign * (1.0 if coef is None else coef)))
            sign, coef = 1.0, None
            i += 3
            continue
        else:
            terms.append((tok, sign * (1.0 if coef is None else coef)))
            sign, coef = 1.0, None
        i += 1
    return terms, quad


def _parse_value(token: str) -> float:
    lowered = token.lower()
    if lowered in ("inf", "+inf", "infinity", "+infinity"):
        return math.inf
    if lowered in ("-inf", "-infinity"):
        return -math.inf
    return float(token)


def parse_lp(text: str) -> MilpModel:
    """Read LP text in the dialect written by emit_lp."""
    sections: Dict[str, List[str]] = {"objective": [], "constraints": [], "bounds": [], "binaries": []}
    name = "molmip"
    current = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("\\"):
            match = re.match(r"\\\s*Problem name:\s*(\S+)", line)
            if match:
                name = match.group(1)
            continue
        keyword = _SECTION_RE.match(line)
        if keyword:
            word = keyword.group(1).lower()
            if word.startswith("min"):
                current = "objective"
            elif word in ("subject to", "such that", "st", "s.t."):
                current = "constraints"
            elif word == "bounds":
                current = "bounds"
            elif word.startswith("bin"):
                current = "binaries"
            elif word == "generals":
                raise UnsupportedError("General integer variables are not part of this model family")
            else:
                current = None
            continue
        if current is None:
            raise DomainError(ERROR_MESSAGES["parse_error"].format(what="LP", line="?", text=line))
        sections[current].append(line)

    m = MilpModel(name=name)
    declared: List[Tuple[str, float, float]] = []
    for line in sections["bounds"]:
        tokens = line.split()
        if len(tokens) == 2 and tokens[1].lower() == "free":
            declared.append((tokens[0], -math.inf, math.inf))
        elif len(tokens) == 5 and tokens[1] == "<=" and tokens[3] == "<=":
            declared.append((tokens[2], _parse_value(tokens[0]), _parse_value(tokens[4])))
        elif len(tokens) == 3 and tokens[1] in (">=", "=", "<="):
            value = _parse_value(tokens[2])
            lo, hi = {">=": (value, math.inf), "=": (value, value), "<=": (0.0, value)}[tokens[1]]
            declared.append((tokens[0], lo, hi))
        else:
            raise DomainError(ERROR_MESSAGES["parse_error"].format(what="LP bounds", line="?", text=line))
    binaries = {tok for line in sections["binaries"] for tok in line.split()}
    for var, lo, hi in declared:
        m.add_variable(var, BINARY if var in binaries else CONTINUOUS, lo, hi)

    def ensure(var: str) -> None:
        if var not in m.variables:
            m.add_variable(var, BINARY if var in binaries else CONTINUOUS)

    tokens = " ".join(sections["constraints"]).split()
    i = 0
    while i < len(tokens):
        head = tokens[i]
        if not head.endswith(":"):
            raise DomainError(ERROR_MESSAGES["parse_error"].format(what="LP constraints", line="?", text=head))
        j = i + 1
        while j < len(tokens) and tokens[j] not in _SENSE_TOKENS:
            j += 1
        if j + 1 >= len(tokens):
            raise DomainError(ERROR_MESSAGES["parse_error"].format(what="LP constraints", line="?", text=head))
        terms, quad = _parse_expression(tokens[i + 1:j])
        for var in [v for v, _ in terms] + [x for a, b, _ in quad for x in (a, b)]:
            ensure(var)
        m.add_constraint(head[:-1], terms, _SENSE_TOKENS[tokens[j]], float(tokens[j + 1]), quad)
        i = j + 2

    objective_tokens = " ".join(sections["objective"]).split()
    if objective_tokens and objective_tokens[0].endswith(":"):
        objective_tokens = objective_tokens[1:]
    terms, _ = _parse_expression(objective_tokens)
    for var, _ in terms:
        ensure(var)
    m.set_objective(terms)
    return m


def emit_mps(m: MilpModel) -> str:
    """Free-format MPS text; bilinear models are rejected."""
    if m.is_bilinear:
        raise UnsupportedError(ERROR_MESSAGES["bilinear_mps"])
    row_type = {"<=": "L", ">=": "G", "=": "E"}
    lines = [f"NAME {m.name}", "ROWS", " N obj"]
    lines += [f" {row_type[c.sense]} {c.name}" for c in m.constraints]

    columns: Dict[str, List[Tuple[str, float]]] = {name: [] for name in m.variables}
    for var, coef in m.objective:
        columns[var].append(("obj", coef))
    for c in m.constraints:
        for var, coef in c.terms:
            columns[var].append((c.name, coef))

    lines.append("COLUMNS")
    in_integer_block = False
    marker = 0
    for var in m.variables.values():
        is_binary = var.kind == BINARY
        if is_binary != in_integer_block:
            keyword = "INTORG" if is_binary else "INTEND"
            lines.append(f" MARKER{marker} 'MARKER' '{keyword}'")
            marker += 1
            in_integer_block = is_binary
        entries = columns[var.name] or [("obj", 0.0)]
        lines += [f" {var.name} {row} {_format_number(coef)}" for row, coef in entries]
    if in_integer_block:
        lines.append(f" MARKER{marker} 'MARKER' 'INTEND'")

    lines.append("RHS")
    lines += [f" RHS {c.name} {_format_number(c.rhs)}" for c in m.constraints if c.rhs != 0]

    lines.append("BOUNDS")
    for var in m.variables.values():
        if var.kind == BINARY:
            lines.append(f" BV BND {var.name}")
            continue
        lo, hi = var.lo, var.hi
        if math.isinf(lo) and math.isinf(hi):
            lines.append(f" FR BND {var.name}")
            continue
        if lo == hi:
            lines.append(f" FX BND {var.name} {_format_number(lo)}")
            continue
        if math.isinf(lo):
            lines.append(f" MI BND {var.name}")
        elif lo != 0:
            lines.append(f" LO BND {var.name} {_format_number(lo)}")
        if not math.isinf(hi):
            lines.append(f" UP BND {var.name} {_format_number(hi)}")
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"


def _bound_to_json(value: float) -> Optional[float]:
    return None if math.isinf(value) else value


def model_to_dict(m: MilpModel) -> Dict[str, Any]:
    return {
        "name": m.name,
        "metadata": m.metadata,
        "variables": [[v.name, v.kind, _bound_to_json(v.lo), _bound_to_json(v.hi)] for v in m.variables.values()],
        "constraints": [
            {"name": c.name, "terms": [list(t) for t in c.terms], "sense": c.sense, "rhs": c.rhs,
             "quad_terms": [list(q) for q in c.quad_terms]}
            for c in m.constraints
        ],
        "objective": [list(t) for t in m.objective],
    }


def model_from_dict(data: Dict[str, Any]) -> MilpModel:
    try:
        m = MilpModel(name=data["name"], metadata=dict(data.get("metadata", {})))
        for name, kind, lo, hi in data["variables"]:
            m.add_variable(name, kind, -math.inf if lo is None else lo, math.inf if hi is None else hi)
        for c in data["constraints"]:
            m.add_constraint(c["name"], [tuple(t) for t in c["terms"]], c["sense"], c["rhs"],
                             [tuple(q) for q in c.get("quad_terms", [])])
        m.set_objective([tuple(t) for t in data.get("objective", [])])
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, DomainError):
            raise
        raise DomainError(ERROR_MESSAGES["parse_error"].format(what="model sidecar", line="?", text=str(e)))
    return m


def save_meta(m: MilpModel, path: str) -> None:
    """Write the JSON sidecar that ``verify`` reads back."""
    with open(path, "w") as f:
        json.dump(model_to_dict(m), f)
        f.write("\n")


def load_meta(path: str) -> MilpModel:
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise DomainError(ERROR_MESSAGES["parse_error"].format(what="model sidecar", line=e.lineno, text=e.msg))
    return model_from_dict(data)


def parse_solution(text: str) -> Assignment:
    """Read ``name value`` lines; blank lines and lines starting with # are skipped."""
    values: Assignment = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if len(tokens) != 2:
            raise DomainError(ERROR_MESSAGES["parse_error"].format(what="solution", line=line_no, text=line))
        try:
            values[tokens[0]] = _parse_value(tokens[1])
        except ValueError:
            raise DomainError(ERROR_MESSAGES["parse_error"].format(what="solution", line=line_no, text=line))
    return values


def read_solution(path: str) -> Assignment:
    with open(path, "r") as f:
        return parse_solution(f.read())


def format_solution(a: Assignment, objective: Optional[float] = None) -> str:
    lines = [] if objective is None else [f"# Objective value = {_format_number(objective)}"]
    lines += [f"{name} {_format_number(value)}" for name, value in a.items()]
    return "\n".join(lines) + "\n"
