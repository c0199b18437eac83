import sys
from pathlib import Path

import pytest
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from causal_recourse.graph import CausalGraph  # noqa: E402


@st.composite
def dags(draw, max_nodes=8, min_nodes=2):
    """Random DAG: nodes V0..Vn-1 shuffled into a hidden topological order."""
    n = draw(st.integers(min_nodes, max_nodes))
    names = [f"V{i}" for i in range(n)]
    order = draw(st.permutations(names))
    edges = [(order[i], order[j]) for i in range(n) for j in range(i + 1, n) if draw(st.booleans())]
    target = draw(st.sampled_from(names))
    return CausalGraph(tuple(names), edges, target)


@st.composite
def dag_queries(draw, max_nodes=8):
    """A DAG plus disjoint non-empty a, b and possibly empty z."""
    g = draw(dags(max_nodes=max_nodes, min_nodes=2))
    labels = draw(st.lists(st.sampled_from("abzn"), min_size=len(g.nodes), max_size=len(g.nodes)))
    part = {k: {v for v, l in zip(g.nodes, labels) if l == k} for k in "abz"}
    if not part["a"]:
        part["a"] = {g.nodes[0]}
    if part["a"] == set(g.nodes):
        part["a"].discard(g.nodes[-1])
    part["b"] -= part["a"]
    part["z"] -= part["a"]
    if not part["b"]:
        rest = [v for v in g.nodes if v not in part["a"]]
        part["b"] = {rest[0]}
        part["z"].discard(rest[0])
    return g, part["a"], part["b"], part["z"]


@pytest.fixture
def chain3():
    """X1 := U1; X2 := 0.5 X1 + U2; Y := X1 + X2 + U_Y with N(0, 1) noise."""
    from causal_recourse.scm import Noise, Scm, StructuralEquation

    g = CausalGraph(("X1", "X2", "Y"), [("X1", "X2"), ("X1", "Y"), ("X2", "Y")], "Y", actionable={"X1", "X2"})
    return Scm(g, [
        StructuralEquation("X1", {}, 0.0, Noise()),
        StructuralEquation("X2", {"X1": 0.5}, 0.0, Noise()),
        StructuralEquation("Y", {"X1": 1.0, "X2": 1.0}, 0.0, Noise()),
    ], name="chain3")


# One line per acceptance criterion, echoed in the terminal summary.
ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(number: int, ok: bool, detail: str) -> str:
    line = f"ACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
