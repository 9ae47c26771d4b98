import numpy as np
import pytest
from hypothesis import settings

from oracles import brute_knn  # noqa: F401  (re-exported for test modules)

# numba compilation makes first calls slow
settings.register_profile("rctsne", deadline=None, max_examples=40)
settings.load_profile("rctsne")


@pytest.fixture(scope="session")
def synthetic():
    from rctsne.datagen import generate_synthetic

    return generate_synthetic(42)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, collected from user properties."""
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if rep.when != "call":
                continue
            for name, value in rep.user_properties:
                if name == "criterion":
                    lines.append((value, "PASS" if rep.passed else "FAIL"))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for value, status in sorted(lines):
        terminalreporter.write_line(f"{status}  {value}")
