"""One test per acceptance criterion; the PASS/FAIL lines are repeated in the terminal summary."""

import pytest

from nhmech import acceptance

from conftest import ACCEPTANCE_LINES


@pytest.mark.parametrize("number", range(1, len(acceptance.CHECKS) + 1))
def test_criterion(number):
    result = acceptance.run(number)
    line = result.line()
    ACCEPTANCE_LINES[number] = line
    print(line)
    assert result.passed, line
