import math
import random

import pytest
from hypothesis import strategies as st

from streamlabel.imaging import BinaryImage
from streamlabel.labeling import CONN4, CONN8, PAPER3

MODES = {"paper3": PAPER3, "conn4": CONN4, "conn8": CONN8}


def random_corpus(n=1000, max_side=256, seed=20151):
    """Seeded images with sides in 1..max_side (log-uniform, both extremes
    included) and white density in 0.1..0.9. Yields (image, mode name)."""
    rng = random.Random(seed)
    names = list(MODES)
    for i in range(n):
        if i == 0:
            w = h = 1
        elif i == 1:
            w = h = max_side
        else:
            w = min(max_side, int(math.exp(rng.uniform(0, math.log(max_side + 1)))))
            h = min(max_side, int(math.exp(rng.uniform(0, math.log(max_side + 1)))))
            w, h = max(1, w), max(1, h)
        density = rng.uniform(0.1, 0.9)
        pix = bytes(255 if rng.random() < density else 0 for _ in range(w * h))
        yield BinaryImage(w, h, pix), names[i % 3]


@st.composite
def binary_images(draw, max_side=12):
    w = draw(st.integers(1, max_side))
    h = draw(st.integers(1, max_side))
    bits = draw(st.lists(st.booleans(), min_size=w * h, max_size=w * h))
    return BinaryImage(w, h, bytes(255 if b else 0 for b in bits))


ref_sets = st.sampled_from([PAPER3, CONN4, CONN8])


# acceptance criteria report one line each in the terminal summary
_ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(request):
    def record(number, title):
        return _Criterion(number, title)

    return record


class _Criterion:
    def __init__(self, number, title):
        self.number, self.title = number, title

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        detail = "" if exc is None else f"  ({type(exc).__name__}: {str(exc).splitlines()[0][:120] if str(exc) else ''})"
        _ACCEPTANCE_LINES.append(f"[{status}] criterion {self.number}: {self.title}{detail}")
        return False


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
