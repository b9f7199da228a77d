import os

import hypothesis
import numpy as np
import pytest

np.seterr(all="raise", under="ignore")

hypothesis.settings.register_profile("default", deadline=None, max_examples=60)
hypothesis.settings.register_profile("fast", deadline=None, max_examples=10)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def toy_graph():
    """core={0,1}, periphery={2,3}, edges (0,1), (0,2), (1,3)."""
    from cpattn.graph import CPGraph

    adj = np.zeros((4, 4), dtype=np.uint8)
    for i, j in [(0, 1), (0, 2), (1, 3)]:
        adj[i, j] = adj[j, i] = 1
    return CPGraph(4, 2, adj)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion; echoed again in the terminal summary."""

    def record(number: int, name: str, ok: bool, detail: str = "") -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name}" + (f" -- {detail}" if detail else "")
        print(line)
        _ACCEPTANCE.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
