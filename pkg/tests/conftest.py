import math

import numpy as np
import pytest

from growthfrag.cellsystem import CellModel
from growthfrag.levy import JumpMeasure, SnlpCharacteristics
from growthfrag.rng import RandomStream

LOG2 = math.log(2.0)
LOG4 = math.log(4.0)


def atom_chars(atoms, c=0.0, kill=0.0, sigma=0.0):
    return SnlpCharacteristics(sigma, c, JumpMeasure.from_atoms(atoms), kill)


def direct_binary_split_count(seed, eps, horizon):
    """Independent re-simulation of the binary-split system from the same streams.

    Each cell with label ``u`` draws a Poisson(1) number of jumps on a unit
    Lévy-time chunk followed by their sorted uniform positions; between jumps
    the cell grows at log-rate 1/2, and every jump halves the cell and spawns
    an equal daughter labelled by the jump ordinal.
    """
    root = RandomStream(seed)
    stack = [((), 0.0, 1.0)]
    count = 0
    while stack:
        label, birth, size = stack.pop()
        count += 1
        gen = root.split(0, *label).generator
        local_h = horizon - birth
        n_chunks = max(1, math.ceil(local_h))
        times = []
        for j in range(n_chunks):
            n = gen.poisson(1.0)
            times.extend(j + np.sort(gen.random(n)))
        prev = 0.0
        for ordinal, t in enumerate(times, start=1):
            if t > local_h:
                break
            size = size * math.exp((t - prev) / 2) / 2.0
            prev = t
            if size <= eps:
                break
            if birth + t < horizon:
                stack.append((label + (ordinal,), birth + t, size))
    return count


@pytest.fixture
def quarter():
    """One atom at -log 4: every jump keeps a quarter of the size."""
    return atom_chars([(-LOG4, 1.0)])


@pytest.fixture
def three_quarter():
    """Jump-reflected partner of ``quarter`` with the same cumulant."""
    return atom_chars([(math.log(0.75), 1.0)], c=0.5)


@pytest.fixture
def binary_split():
    return atom_chars([(-LOG2, 1.0)])


@pytest.fixture
def binary_split_model(binary_split):
    return CellModel(binary_split)


# ---------------------------------------------------------------------------
# acceptance summary: one line per criterion after the run
# ---------------------------------------------------------------------------

ACCEPTANCE_LINES: dict[str, str] = {}


def record_acceptance(criterion: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE_LINES[criterion] = f"{criterion}: {'PASS' if passed else 'FAIL'}" + (f"  ({detail})" if detail else "")


@pytest.fixture
def acceptance():
    return record_acceptance


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k.split()[0].lstrip("AC"))):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
