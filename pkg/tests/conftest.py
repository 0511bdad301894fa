import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# -- acceptance report ---------------------------------------------------------

ACCEPTANCE = pytest.StashKey[dict]()


class _Recorder:
    def __init__(self, store):
        self.store = store

    def __call__(self, number, title, checks):
        """Record one criterion; ``checks`` maps a description to a bool."""
        failed = [name for name, ok in checks.items() if not ok]
        self.store[number] = (title, not failed, failed)
        status = "PASS" if not failed else "FAIL"
        print(f"criterion {number}: {status} {title}")
        assert not failed, f"criterion {number} failed: {'; '.join(failed)}"


@pytest.fixture
def criterion(request):
    store = request.config.stash.setdefault(ACCEPTANCE, {})
    return _Recorder(store)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(ACCEPTANCE, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(store):
        title, ok, failed = store[number]
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {title}"
        if failed:
            line += "  [" + "; ".join(failed) + "]"
        terminalreporter.write_line(line)
