import pytest

_ACCEPTANCE = {}


@pytest.fixture
def record():
    """Store one acceptance verdict; all of them are printed at the end of the run."""
    def _record(criterion, ok, detail):
        _ACCEPTANCE[criterion] = (bool(ok), detail)
        return bool(ok)
    return _record


def _order(key):
    head = key.split()[0]
    return (int("".join(c for c in head if c.isdigit()) or 0), key)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=_order):
        ok, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key}: {detail}")
