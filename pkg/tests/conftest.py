import itertools

import pytest

from ozlab.lattice import CouplingField, LatticeGraph, build_graph


def nn_graph(box):
    return build_graph(CouplingField.nearest_neighbour(len(box)), box)


def triangle(J: float = 1.0) -> LatticeGraph:
    a, b, c = (0, 0), (1, 0), (0, 1)
    edges = [(a, b), (b, c), (a, c)]
    return LatticeGraph(edges, {e: J for e in edges})


def connected_subgraphs(graph: LatticeGraph):
    out = []
    E = graph.edges
    for k in range(1, len(E) + 1):
        for sub in itertools.combinations(E, k):
            g = graph.subgraph(sub)
            if g.is_connected():
                out.append(g)
    return out


@pytest.fixture(scope="session")
def grid23():
    return nn_graph([(0, 2), (0, 1)])


@pytest.fixture(scope="session")
def grid23_subgraphs(grid23):
    return connected_subgraphs(grid23)


# acceptance report: one line per criterion, printed after the run
ACCEPTANCE: dict = {}


def record(criterion: int, ok: bool, detail: str, part: str = "") -> None:
    ACCEPTANCE.setdefault(criterion, {})[part] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[k]
        ok = all(v[0] for v in parts.values())
        detail = "; ".join((f"{p}: " if p else "") + v[1] + ("" if v[0] else " [FAIL]")
                           for p, v in sorted(parts.items()))
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
