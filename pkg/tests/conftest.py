import numpy as np
import pytest

from distdid import PanelDataset

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_two_period(rng, n=400, shift=0.0, discrete=True):
    """Repeated cross-section with half the units treated."""
    d = (rng.random(n) < 0.5).astype(float)
    t = (np.arange(n) >= n // 2).astype(int)
    y = rng.normal(size=n) + 0.3 * d + shift * d * t
    if discrete:
        y = np.round(y * 2) / 2
    return PanelDataset.from_arrays(np.arange(n), t, d, y, design="two-period")


def make_staggered(rng, n_units=120, pre=(-3, -2, -1), post=(1, 2, 3, 4, 5), groups=(1, np.inf),
                   probs=None, covariate=False):
    """Balanced panel with absorbing treatment and no effect."""
    probs = probs or [1 / len(groups)] * len(groups)
    g = rng.choice(np.array(groups, dtype=float), size=n_units, p=probs)
    periods = list(pre) + list(post)
    ids, per, grp, y = [], [], [], []
    level = rng.normal(size=n_units)
    for j in range(n_units):
        for t in periods:
            ids.append(f"u{j}")
            per.append(t)
            grp.append(g[j])
            y.append(round(level[j] + 0.1 * t + rng.normal(), 1))
    return PanelDataset.from_arrays(ids, per, grp, y)
