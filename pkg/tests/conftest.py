"""Shared fixtures and the acceptance summary printer.

Heavy artifacts (the evaluation scene and its normalized channel set) are
session scoped; random instances come from explicitly seeded generators so
every run sees identical data.
"""

import numpy as np
import pytest

from oirs_vlc.channel import ChannelSet, LambertianParams, cascade_gains, direct_channel, normalize
from oirs_vlc.geometry import build_scene, default_scene_config
from oirs_vlc.harness import random_instance


@pytest.fixture(scope="session")
def default_scene():
    return build_scene(default_scene_config())


@pytest.fixture(scope="session")
def default_channels(default_scene):
    params = LambertianParams()
    return normalize(
        ChannelSet(direct_channel(default_scene, params), cascade_gains(default_scene, params))
    )


@pytest.fixture(scope="session")
def small_scene():
    """3-element 2x2 instance, cheap enough for exhaustive comparisons."""
    return random_instance(np.random.default_rng(7), n_elements=3, n_tx=2, n_rx=2)


@pytest.fixture(scope="session")
def small_channels(small_scene):
    params = LambertianParams()
    return normalize(
        ChannelSet(direct_channel(small_scene, params), cascade_gains(small_scene, params))
    )


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion, printed after the run."""
    outcomes = {}
    for status, mark in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" not in nodeid or getattr(report, "when", "call") != "call":
                continue
            name = nodeid.split("::")[-1]
            outcomes[name] = mark
    if not outcomes:
        return
    try:
        from tests.test_acceptance import CRITERIA
    except ImportError:
        from test_acceptance import CRITERIA
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria")
    for name, description in CRITERIA.items():
        mark = outcomes.get(name)
        if mark is None:
            continue
        symbol = "✓" if mark == "PASS" else "✗"
        terminalreporter.write_line(f"  {symbol} {description}")
