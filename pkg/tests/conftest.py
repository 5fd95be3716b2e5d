"""Shared fixtures; collects the one-line acceptance verdicts for the summary."""

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=15, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record ``criterion N: PASS/FAIL ...`` and print it immediately."""

    def record(number: int, title: str, ok: bool, detail: str = ""):
        line = f"criterion {number:2d} [{'PASS' if ok else 'FAIL'}] {title}" + (f" ({detail})" if detail else "")
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


def random_form(chart, rng, rank=1, degrees=None, band=1, scale=1.0):
    """Band-limited random form with components in the given degrees."""
    from cwbench.forms import Form, random_trig_poly

    comps = {}
    for S in chart.subsets():
        if degrees is None or len(S) in degrees:
            comps[S] = random_trig_poly(chart, rng, band, shape=(rank, rank), scale=scale)
    return Form(chart, rank, comps)
