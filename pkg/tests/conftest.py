"""Collects acceptance outcomes and prints one line per criterion."""

import pytest

CRITERIA = {
    1: "distribution correctness",
    2: "score and information identities",
    3: "filter and likelihood invariants",
    4: "maximum-likelihood recovery and AIC",
    5: "bootstrap VaR",
    6: "coverage tests, sizes and MCS",
    7: "end-to-end rolling backtest",
}

_outcomes: dict[int, list[tuple[str, str, float]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n): test belongs to acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    n = marker.args[0]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _outcomes.setdefault(n, []).append((item.name, report.outcome, report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, title in CRITERIA.items():
        runs = _outcomes.get(n)
        if not runs:
            tr.write_line(f"criterion {n} ({title}): NOT RUN")
            continue
        failed = [name for name, outcome, _ in runs if outcome != "passed"]
        seconds = sum(d for *_, d in runs)
        verdict = "PASS" if not failed else "FAIL"
        extra = f"; failing: {', '.join(failed)}" if failed else ""
        tr.write_line(f"criterion {n} ({title}): {verdict} "
                      f"[{len(runs) - len(failed)}/{len(runs)} checks, {seconds:.1f}s{extra}]")
