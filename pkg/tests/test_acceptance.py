"""Acceptance suite: every criterion at its stated tolerance, driven
through the CLI `accept` command, one printed line per criterion.

Criteria 1 and 2 replay multi-minute fault schedules on simulated time and
take the better part of a minute of wall clock; everything else is fast.
"""

import re

import pytest
from click.testing import CliRunner

from bedwatch.cli import main

_LINE = re.compile(r"^(PASS|FAIL) criterion (\d+): (.*)$", re.MULTILINE)


def run_criterion(number: int, tmp_path) -> str:
    result = CliRunner().invoke(
        main, ["accept", "--criterion", str(number), "--workdir", str(tmp_path)]
    )
    match = _LINE.search(result.output)
    assert match, f"no PASS/FAIL line in output: {result.output!r}"
    print(match.group(0))
    assert match.group(2) == str(number)
    if match.group(1) != "PASS":
        pytest.fail(f"criterion {number} failed: {match.group(0)}")
    assert result.exit_code == 0
    return match.group(3)


@pytest.mark.parametrize("number", [3, 4, 5, 6, 7, 8, 9, 10])
def test_fast_criteria(number, tmp_path):
    run_criterion(number, tmp_path)


def test_criterion_1_zero_loss_delivery(tmp_path):
    detail = run_criterion(1, tmp_path)
    assert "set_equal=True" in detail
    assert "manifest_dupes=0" in detail


def test_criterion_2_bounded_backlog(tmp_path):
    detail = run_criterion(2, tmp_path)
