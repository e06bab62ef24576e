"""
molmip command-line tool.

Every subcommand prints line-delimited key=value output on stdout; logs go
to stderr. Exit codes: 0 success, 1 domain error, 2 usage error, 3 time
budget exceeded (partial results are printed with exact=false).
"""

import argparse
import logging
import sys
import time
from typing import Any, Dict, List, Optional, TextIO

import pandas as pd

from config import (DEFAULT_THREADS, DEFAULT_TIME_BUDGET, LOG_LEVEL, LOG_LEVELS,
                    RUN_LOG_PATH)
from utils.camd import design_space, load_molecule, molecule_summary
from utils.enumerator import (ConstraintLevel, brute_optimize, count_classes,
                              count_feasible, count_table, enumerate_feasible, write_structures)
from utils.errors import BudgetExceededError, DomainError
from utils.gnn import GnnModel, architecture_skeleton, forward, load_model
from utils.graphcore import UndirectedGraph, connected_graphs, load_graph
from utils.indexing import check_s1, check_s3, count_indexings, index_graph
from utils.logger import configure_logging, log_run
from utils.milp import (build, check_assignment, embed_solution, emit_lp, emit_mps, format_solution,
                        load_meta, model_statistics, read_solution, save_meta)

logger = logging.getLogger("molmip")

# Feasible-structure counts (s1, s1+s2, s1+s2+s3) per dataset and atom count
REFERENCE_COUNTS = {
    "qm7": {2: (17, 10, 10), 3: (112, 37, 37), 4: (3323, 726, 416), 5: (67020, 11747, 3003)},
    "qm9": {2: (15, 9, 9), 3: (175, 54, 54), 4: (4536, 1077, 631), 5: (117188, 21441, 5860)},
}

# Six-node example graph with node v carrying feature bit 5 - v
EXAMPLE_GRAPH_EDGES = [(0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (1, 2), (1, 3), (1, 4), (2, 5), (3, 4)]
EXAMPLE_GRAPH_COUNTS = {"none": 720, "s1": 396, "root": 120, "root,s3": 4}
EXAMPLE_GRAPH_INDEXING = (0, 1, 4, 2, 3, 5)


def example_graph() -> UndirectedGraph:
    features = [[v == 5 - f for f in range(6)] for v in range(6)]
    return UndirectedGraph.from_edges(6, EXAMPLE_GRAPH_EDGES, features)


class Output:
    """key=value writer for stdout."""

    def __init__(self, stream: TextIO):
        self.stream = stream

    def __call__(self, key: str, value: Any) -> None:
        self.stream.write(f"{key}={format_value(value)}\n")

    def text(self, block: str) -> None:
        self.stream.write(block.rstrip("\n") + "\n")


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return " ".join(format_value(v) for v in value)
    return str(value)


def _load_gnn(args) -> GnnModel:
    if args.model == "random":
        return architecture_skeleton(args.dataset or "qm7", args.seed)
    return load_model(args.model)


def cmd_count(args, out: Output) -> Dict[str, Any]:
    space = design_space(args.dataset, args.n)
    level = ConstraintLevel.parse(args.level)
    toggles = {family: False for family in args.disable}
    out("dataset", args.dataset)
    out("n", args.n)
    out("level", level.value)

    if args.table:
        table = count_table(args.dataset, range(2, args.n + 1), budget=args.budget, threads=args.threads)
        out.text(table.to_string(index=False))
        exact = bool(table["exact"].all())
        out("exact", exact)
        return {"result": int(table["s3"].iloc[-1]), "exact": exact}

    if args.emit_structures:
        count = write_structures(args.emit_structures,
                                 enumerate_feasible(space, level, toggles, budget=args.budget))
    else:
        count = count_feasible(space, level, threads=args.threads, budget=args.budget, toggles=toggles).count
    out("count", count)
    if args.classes:
        out("classes", count_classes(space, budget=args.budget))
    out("exact", True)
    return {"result": count, "exact": True}


def cmd_count_indexings(args, out: Output) -> Dict[str, Any]:
    g = load_graph(args.fixture)
    constraints = [c for c in args.constraints.split(",") if c.strip()]
    count = count_indexings(g, constraints, root=args.root)
    out("constraints", ",".join(constraints) or "none")
    out("count", count)
    return {"result": count}


def cmd_index(args, out: Output) -> Dict[str, Any]:
    g = load_graph(args.fixture)
    indexing, trace = index_graph(g, root=args.root)
    out("indexing", list(indexing.index_of))
    out("order", list(indexing.order))
    out("s1", check_s1(g, indexing))
    out("s3", check_s3(g, indexing))
    if args.trace:
        for record in trace:
            ranks = " ".join(f"{v}:{r}" for v, r in sorted(record.ranks.items()))
            out(f"iteration.{record.s}", f"chosen {record.chosen} ranks {ranks}")
    return {"result": " ".join(str(i) for i in indexing.index_of)}


def cmd_eval(args, out: Output) -> Dict[str, Any]:
    model = _load_gnn(args)
    mol = load_molecule(args.molecule)
    value = forward(model, mol)
    out("output", value)
    return {"result": value}


def cmd_brute_opt(args, out: Output) -> Dict[str, Any]:
    space = design_space(args.dataset, args.n)
    level = ConstraintLevel.parse(args.level)
    model = _load_gnn(args)
    mol, value = brute_optimize(space, model, level, budget=args.budget)
    summary = molecule_summary(space, mol)
    out("objective", value)
    out("formula", summary["formula"])
    out("double_bonds", summary["double_bonds"])
    out("triple_bonds", summary["triple_bonds"])
    out("rings", summary["rings"])
    if args.emit_structures:
        write_structures(args.emit_structures, [mol])
    return {"result": value}


def cmd_build_milp(args, out: Output) -> Dict[str, Any]:
    space = design_space(args.dataset, args.n, exact_n=not args.variable_n)
    model = _load_gnn(args) if args.model else None
    m = build(space, model, variant=args.variant, symmetry=args.symmetry == "on")
    fmt = args.format or ("mps" if args.output.lower().endswith(".mps") else "lp")
    text = emit_mps(m) if fmt == "mps" else emit_lp(m)
    with open(args.output, "w") as f:
        f.write(text)
    save_meta(m, args.output + ".meta")
    stats = model_statistics(m)
    out("output", args.output)
    for key in ("binary_variables", "continuous_variables", "linear_constraints",
                "quadratic_constraints", "quadratic_terms"):
        out(key, stats[key])
    if args.embed:
        assignment = embed_solution(m, space, load_molecule(args.embed), model)
        report = check_assignment(m, assignment)
        solution_path = args.output + ".sol"
        with open(solution_path, "w") as f:
            f.write(format_solution(assignment, report.objective))
        out("solution", solution_path)
        out("objective", report.objective)
    return {"result": len(m.constraints)}


def cmd_verify(args, out: Output) -> Dict[str, Any]:
    m = load_meta(args.model_file)
    report = check_assignment(m, read_solution(args.solution))
    out("passed", report.passed)
    out("objective", report.objective)
    out("bound_violation", report.bound_violation)
    out("integrality_violation", report.integrality_violation)
    for family in report.violated_families():
        out(f"residual.{family}", report.family_residuals[family])
    if not report.passed:
        out("worst", report.worst_constraint)
    return {"result": report.passed, "code": 0 if report.passed else 1}


def selftest_report(budget: float, threads: int, counts: bool = True) -> pd.DataFrame:
    """Golden checks; one row per check. ``counts=False`` keeps only the indexing checks."""
    rows = []

    def record(check: str, expected: Any, actual: Any) -> None:
        rows.append({"check": check, "expected": str(expected), "actual": str(actual),
                     "passed": expected == actual})

    for dataset, table in REFERENCE_COUNTS.items():
        for n, expected in table.items():
            if not counts or n > 4:
                continue
            space = design_space(dataset, n)
            actual = tuple(count_feasible(space, level, threads=threads, budget=budget).count
                           for level in ConstraintLevel)
            record(f"table {dataset} n={n}", expected, actual)

    g = example_graph()
    for constraints, expected in EXAMPLE_GRAPH_COUNTS.items():
        names = [] if constraints == "none" else constraints.split(",")
        record(f"indexings {constraints}", expected, count_indexings(g, names))
    indexing, _ = index_graph(g)
    record("indexing example graph", EXAMPLE_GRAPH_INDEXING, indexing.index_of)

    failures = 0
    for n in range(1, 6):
        for graph in connected_graphs(n):
            for root in range(n):
                idx, _ = index_graph(graph, root)
                failures += not (check_s1(graph, idx) and check_s3(graph, idx))
    record("indexings satisfy s1 and s3 (n <= 5)", 0, failures)
    return pd.DataFrame(rows, columns=["check", "expected", "actual", "passed"])


def cmd_selftest(args, out: Output) -> Dict[str, Any]:
    report = selftest_report(args.budget, args.threads)
    out.text(report.to_string(index=False))
    passed = bool(report["passed"].all())
    out("passed", passed)
    return {"result": passed, "code": 0 if passed else 1}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="molmip", description="Molecular design with symmetry-broken MILP models of GNNs")
    parser.add_argument("--log-level", default=None, choices=sorted(LOG_LEVELS), help="Log level (default from LOG_LEVEL)")
    parser.add_argument("--no-log", action="store_true", help="Do not append to the run ledger")
    parser.add_argument("--threads", type=int, default=DEFAULT_THREADS, help="Worker processes for counting")
    parser.add_argument("--budget", type=float, default=DEFAULT_TIME_BUDGET, help="Time budget in seconds")
    parser.add_argument("--seed", type=int, default=0, help="Seed for random models")
    sub = parser.add_subparsers(dest="command", required=True)

    def space_args(p, level=True):
        p.add_argument("--dataset", choices=["qm7", "qm9"], default="qm7")
        p.add_argument("--n", type=int, required=True, help="Number of heavy atoms")
        if level:
            p.add_argument("--level", default="s3", help="s1, s2 (s1+s2) or s3 (s1+s2+s3)")

    p = sub.add_parser("count", help="Count feasible structures")
    space_args(p)
    p.add_argument("--emit-structures", help="Write every structure to this file")
    p.add_argument("--classes", action="store_true", help="Also count isomorphism classes")
    p.add_argument("--table", action="store_true", help="Print counts for every size from 2 to n")
    p.add_argument("--disable", nargs="*", default=[], metavar="FAMILY",
                   help="Constraint families to switch off (C22 C23 C24 C25)")
    p.set_defaults(handler=cmd_count)

    p = sub.add_parser("count-indexings", help="Count labelings of a graph under constraints")
    p.add_argument("--fixture", required=True)
    p.add_argument("--constraints", default="", help="Comma-separated subset of s1,s2,s3,root")
    p.add_argument("--root", type=int, default=0)
    p.set_defaults(handler=cmd_count_indexings)

    p = sub.add_parser("index", help="Index a graph")
    p.add_argument("--fixture", required=True)
    p.add_argument("--root", type=int, default=0)
    p.add_argument("--trace", action="store_true")
    p.set_defaults(handler=cmd_index)

    p = sub.add_parser("eval", help="Evaluate a GNN on a molecule")
    p.add_argument("--model", required=True, help="Weight file, or 'random' for a seeded skeleton")
    p.add_argument("--molecule", required=True)
    p.add_argument("--dataset", choices=["qm7", "qm9"],
                   help="Skeleton for --model random (default qm7); not accepted with a weight file")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("brute-opt", help="Minimize a GNN by enumeration")
    space_args(p)
    p.add_argument("--model", required=True, help="Weight file, or 'random' for a seeded skeleton")
    p.add_argument("--emit-structures", help="Write the optimal structure to this file")
    p.set_defaults(handler=cmd_brute_opt)

    p = sub.add_parser("build-milp", help="Write the MILP model")
    space_args(p, level=False)
    p.add_argument("--model", help="Weight file, or 'random' for a seeded skeleton")
    p.add_argument("--variant", choices=["bilinear", "bigm"], default="bigm")
    p.add_argument("--symmetry", choices=["on", "off"], default="on")
    p.add_argument("--variable-n", action="store_true", help="Let atoms be absent (at most n atoms)")
    p.add_argument("--format", choices=["lp", "mps"], help="Output format (default from the file extension)")
    p.add_argument("--embed", help="Molecule to embed; writes <output>.sol")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(handler=cmd_build_milp)

    p = sub.add_parser("verify", help="Check a solution against a model sidecar")
    p.add_argument("--model-file", required=True, help="The .meta sidecar written by build-milp")
    p.add_argument("--solution", required=True)
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("selftest", help="Run the golden checks")
    p.set_defaults(handler=cmd_selftest)
    return parser


def run(argv: Optional[List[str]] = None, stdout: Optional[TextIO] = None) -> int:
    """
    Run one command.

    Args:
        argv: Arguments (default sys.argv[1:])
        stdout: Stream for key=value output (default sys.stdout)

    Returns:
        Exit code
    """
    stream = sys.stdout if stdout is None else stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code else 0

    configure_logging(LOG_LEVELS[args.log_level] if args.log_level else LOG_LEVEL)
    if args.budget <= 0 or args.threads < 1 or getattr(args, "n", 2) < 2:
        sys.stderr.write("molmip: error: --budget must be positive, --threads at least 1 and --n at least 2\n")
        return 2
    if args.command == "eval" and args.dataset and args.model != "random":
        sys.stderr.write("molmip: error: --dataset only applies to --model random\n")
        return 2

    out = Output(stream)
    start = time.time()
    outcome: Dict[str, Any] = {}
    code = 0
    try:
        outcome = args.handler(args, out)
        code = outcome.get("code", 0)
    except BudgetExceededError as e:
        partial = e.partial
        logger.warning(str(e))
        out("count", getattr(partial, "count", 0))
        out("exact", False)
        outcome = {"result": getattr(partial, "count", None), "exact": False}
        code = 3
    except (DomainError, OSError) as e:
        logger.debug("Command failed", exc_info=True)
        sys.stderr.write(f"molmip: error: {e}\n")
        code = 1

    if not args.no_log:
        log_run(RUN_LOG_PATH, args.command,
                dataset=getattr(args, "dataset", None), n=getattr(args, "n", None),
                level=getattr(args, "level", None), result=outcome.get("result"),
                exact=outcome.get("exact", True), elapsed=time.time() - start,
                successful=code == 0)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
