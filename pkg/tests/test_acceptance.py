"""Acceptance battery: all eleven criteria at their pinned tolerances.

The battery runs once per session (about 13 minutes on one core).  Set
``FRACSHE_ACCEPTANCE_SCALE=quick`` for a reduced smoke run; verdicts at that
scale are not the pinned ones.
"""
import json
import os

import pytest

from fracshe.battery import CRITERIA, run_battery

SCALE = os.environ.get("FRACSHE_ACCEPTANCE_SCALE", "full")

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]


@pytest.fixture(scope="module")
def battery(tmp_path_factory):
    contracts, _ = run_battery(SCALE, workers=int(os.environ.get("FRACSHE_WORKERS", "1")))
    by_criterion = {c.criterion: c for c in contracts}
    report = tmp_path_factory.mktemp("acceptance") / "contracts.json"
    report.write_text(json.dumps([c.to_dict(with_time=True) for c in contracts], indent=2))
    return by_criterion


@pytest.mark.parametrize("criterion", sorted(CRITERIA), ids=[f"{k:02d}-{v}" for k, v in sorted(CRITERIA.items())])
def test_criterion(battery, criterion, capsys):
    c = battery[criterion]
    assert c.name == CRITERIA[criterion]
    with capsys.disabled():
        print(f"\n{c.line()} ({c.seconds:.0f} s) measured={json.dumps(c.to_dict()['measured'])}")
    assert c.passed, c.to_dict()
