"""Acceptance suite: one check per criterion, with its reference constants.

Run with ``pytest tests/test_acceptance.py -v -s`` or as a script
(``python3 tests/test_acceptance.py``); either way one PASS/FAIL line is
printed per criterion. The numeric targets and tolerances live in
:data:`synflow.validation.TARGETS`.
"""

import json
import sys

import pytest

from synflow.validation import run_check

SEED = 0
RUNS = 100

# criterion number -> (check name, runtime limit in seconds or None)
CRITERIA = {
    1: ("linear_target", 120),
    2: ("product_target", 300),
    3: ("triplet", 120),
    4: ("hidden_source", 120),
    5: ("suppressor", 300),
    6: ("additivity", None),
    7: ("identities", None),
    8: ("calibration", None),
    9: ("network", None),
}

_cache = {}


def evaluate(number):
    if number not in _cache:
        name, limit = CRITERIA[number]
        check = run_check(name, seed=SEED, runs=RUNS)
        in_time = limit is None or check.seconds < limit
        _cache[number] = (check, check.passed is True and in_time, limit)
    return _cache[number]


def line(number) -> str:
    check, ok, limit = evaluate(number)
    budget = f" limit={limit}s" if limit else ""
    measured = json.dumps(check.measured, sort_keys=True, default=float)
    target = json.dumps(check.target, sort_keys=True, default=float)
    return (f"CRITERION {number} [{check.name}]: {'PASS' if ok else 'FAIL'} "
            f"time={check.seconds:.1f}s{budget} measured={measured} target={target}")


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    text = line(number)
    with capsys.disabled():
        print("\n" + text)
    check, ok, limit = evaluate(number)
    assert check.passed is True, text
    if limit is not None:
        assert check.seconds < limit, text
    assert ok


if __name__ == "__main__":
    results = [line(n) for n in sorted(CRITERIA)]
    print("\n".join(results))
    sys.exit(0 if all(": PASS" in r for r in results) else 1)
