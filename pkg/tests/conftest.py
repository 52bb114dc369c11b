import pytest

from nep_phaseplane import builtin_model, potential


@pytest.fixture(scope="session")
def gelfand():
    return builtin_model("gelfand")


@pytest.fixture(scope="session")
def tail_pot(gelfand):
    return potential(gelfand, "from_minus_infinity")


@pytest.fixture(scope="session")
def zero_pot(gelfand):
    return potential(gelfand, "from_zero")


ACCEPTANCE = []


@pytest.fixture
def criterion(request):
    """Record one pass/fail line per acceptance criterion; printed in the summary."""

    def report(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE.append(line)
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
