"""The acceptance criteria, one test each; a pass/fail line per criterion is
printed and collected into the terminal summary."""
import json

import pytest

from critlat.acceptance import CRITERIA, run_criterion


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, acceptance_log):
    r = run_criterion(number)
    line = f"{r.line()}  ({r.seconds:.1f} s)"
    acceptance_log.append(line)
    print(line)
    assert r.passed, json.dumps(r.detail, default=str)[:2000]
