"""Acceptance criteria A1–A13 at their stated tolerances.

Each test prints one ``A<k>: PASS|FAIL`` line. The flow runs shared by
several criteria are computed once per module. Run only this file with

    pytest tests/test_acceptance.py -v
"""

import time

import pytest

from graphflow.suites import CRITERIA, SuiteContext

RESULTS = {}


@pytest.fixture(scope="module")
def ctx():
    return SuiteContext()


@pytest.mark.slow
@pytest.mark.parametrize("cid", list(CRITERIA))
def test_criterion(cid, ctx, capsys):
    t0 = time.perf_counter()
    res = CRITERIA[cid](ctx)
    res.seconds = time.perf_counter() - t0
    RESULTS[cid] = res
    with capsys.disabled():
        print(f"\n{res.line()}  [{res.seconds:.1f}s]")
    assert res.passed, res.summary
