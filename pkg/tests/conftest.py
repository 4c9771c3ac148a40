import warnings

import pytest

from impdmp.pipeline import LearnConfig, learn
from impdmp.synthetic import pouring_demonstrations


@pytest.fixture(scope="session")
def pouring_demos():
    return pouring_demonstrations(8, seed=0)


@pytest.fixture(scope="session")
def pouring_bundle(pouring_demos):
    """Skill learned from the synthetic pouring set with default settings."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return learn(pouring_demos, LearnConfig())


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
