"""Every invariant of ``diffband verify`` as an individual test."""
import pytest

from diffband.verify import SUITES, run_suites

_cache = {}


def checks(suite):
    if suite not in _cache:
        _cache[suite] = run_suites(suite, seed=0)
    return _cache[suite]


@pytest.mark.parametrize("suite", sorted(SUITES))
def test_suite(suite):
    failed = [c.line() for c in checks(suite) if not c.passed]
    assert not failed, "\n".join(failed)
