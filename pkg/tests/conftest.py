import pytest

from ctrld.adjudicator import resolve
from ctrld.board import GameState, builtin_map
from ctrld.orders import parse_action


@pytest.fixture(scope="session")
def standard():
    return builtin_map("standard")


@pytest.fixture(scope="session")
def mini():
    return builtin_map("mini")


def run_orders(mapdef, units, orders, centers=None, phase="S1901M"):
    """Build a position from unit tokens and resolve the given order strings."""
    state = GameState.build(mapdef, phase, units, centers or {})
    joint = {p: parse_action(orders.get(p, []), p, state) for p in units}
    return state, resolve(state, joint)


@pytest.fixture(scope="session")
def fixtures():
    from pathlib import Path

    return Path(__file__).parent / "fixtures"


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
    missing = [n for n in range(1, 10) if n not in results]
    if missing:
        terminalreporter.write_line(f"not run: {', '.join(map(str, missing))}")
