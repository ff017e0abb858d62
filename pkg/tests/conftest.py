import pytest

# criterion number -> (passed, detail); filled by the acceptance suite
CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record_criterion():
    def record(number: int, passed: bool, detail: str) -> None:
        prev = CRITERIA.get(number)
        if prev is not None:
            # a criterion checked in several tests passes only if all do
            passed = passed and prev[0]
            detail = f"{prev[1]}; {detail}"
        CRITERIA[number] = (bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
