import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from anisotm.finsler import EllipsoidGauge, PNormGauge, euclidean

settings.register_profile(
    "default",
    deadline=None,
    max_examples=40,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def oracles():
    return json.loads((DATA / "oracles.json").read_text())


def suite_gauges():
    """(label, gauge) pairs covering the acceptance gauges in both dimensions."""
    out = []
    for N in (2, 3):
        out += [
            (f"l2_N{N}", euclidean(N)),
            (f"l4_N{N}", PNormGauge(N, 4.0)),
            (f"l32_N{N}", PNormGauge(N, 32.0)),
        ]
    out += [
        ("ellipse_41", EllipsoidGauge(np.diag([4.0, 1.0]))),
        ("ellipsoid_1.5", EllipsoidGauge(np.diag([1.5, 1.0, 1.0]))),
    ]
    return out


def oracle_volume_key(g):
    if isinstance(g, PNormGauge):
        p = "inf" if math.isinf(g.p) else f"{g.p:g}"
        return f"pnorm_p{p}_N{g.N}"
    return None


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
