"""Acceptance criteria 1-12; one PASS/FAIL line per criterion is printed."""

import pytest

from boltzgap.acceptance import CRITERIA, AcceptanceContext, run_criterion

RESULTS = {}


@pytest.fixture(scope="module")
def ctx():
    return AcceptanceContext(seed=0, oracle_samples=10**6)


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(ctx, number):
    res = run_criterion(number, ctx)
    RESULTS[number] = res
    print(res.line())
    assert res.passed, res.details


if __name__ == "__main__":
    import sys

    c = AcceptanceContext()
    results = [run_criterion(n, c) for n in sorted(CRITERIA)]
    for r in results:
        print(r.line())
    sys.exit(0 if all(r.passed for r in results) else 1)
