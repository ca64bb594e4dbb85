import math
from fractions import Fraction

import numpy as np
import pytest

from sonoptic.pipeline import feature_table
from sonoptic.scenes import BenchmarkConfig, make_benchmark


def raster(shape, inside, centre, angle_deg=0.0, scale=1.0):
    """Rasterise a predicate given in a rotated, scaled object frame.

    ``inside(u, v)`` is evaluated at every pixel centre, where ``u`` runs
    along the object axis (turned ``angle_deg`` up from the x-axis) and ``v``
    across it, both in object units (pixels divided by ``scale``).
    """
    rows, cols = np.mgrid[0:shape[0], 0:shape[1]].astype(float)
    x = (cols - centre[0]) / scale
    y = -(rows - centre[1]) / scale
    t = math.radians(angle_deg)
    u = x * math.cos(t) + y * math.sin(t)
    v = -x * math.sin(t) + y * math.cos(t)
    return np.asarray(inside(u, v), dtype=bool)


def ellipse(a, b):
    return lambda u, v: (u / a) ** 2 + (v / b) ** 2 <= 1.0


def random_blob(rng, shape=(64, 64), n_bumps=4):
    """Connected-ish random blob: a disc with a few harmonic radius bumps."""
    cy, cx = (shape[0] - 1) / 2 + rng.uniform(-3, 3), (shape[1] - 1) / 2 + rng.uniform(-3, 3)
    base = rng.uniform(6, 14)
    rows, cols = np.mgrid[0:shape[0], 0:shape[1]].astype(float)
    phi = np.arctan2(rows - cy, cols - cx)
    radius = np.full(shape, base)
    for _ in range(n_bumps):
        radius = radius * (1 + rng.uniform(0.05, 0.3) * np.cos(rng.integers(1, 5) * phi + rng.uniform(0, 2 * np.pi)))
    return np.hypot(rows - cy, cols - cx) <= radius


@pytest.fixture(scope="session")
def small_benchmark():
    return make_benchmark(BenchmarkConfig(n_per_class=12, seed=3))


@pytest.fixture(scope="session")
def small_table(small_benchmark):
    return feature_table(small_benchmark)


# exact sin/cos at the integer angles where they are rational
_EXACT_SIN = {0: 0, 30: Fraction(1, 2), 90: 1, 150: Fraction(1, 2)}
_EXACT_COS = {0: 1, 60: Fraction(1, 2), 90: 0, 120: Fraction(-1, 2)}


def digital_line_count(mask, theta_deg):
    """Reference orientation sum: one cell at a time, exact arithmetic where ties can occur."""
    rows, cols = np.nonzero(mask)
    n = len(rows)
    cx = Fraction(int(cols.sum()), n)
    cy = Fraction(int(rows.sum()), n)
    t = int(theta_deg)
    s = _EXACT_SIN.get(t, math.sin(math.radians(t)))
    c = _EXACT_COS.get(t, math.cos(math.radians(t)))
    exact = t in _EXACT_SIN and t in _EXACT_COS
    total = 0
    for r, k in zip(rows.tolist(), cols.tolist()):
        if exact:
            d = abs((k - cx) * s + (r - cy) * c)
        else:
            d = abs(float(k - cx) * s + float(r - cy) * c)
        total += d < Fraction(1, 2) if exact else d < 0.5
    return total


#: one "Cn PASS|FAIL ..." line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
