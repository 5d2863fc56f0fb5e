import numpy as np
from hypothesis import strategies as st

from degenop.verify import random_admissible_params, random_test_function

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def params_from_seed(seed, dim_x=1, **kw):
    return random_admissible_params(np.random.default_rng(seed), dim_x, **kw)


def function_from_seed(seed, dim_x=1):
    return random_test_function(np.random.default_rng(seed + 17), dim_x)


def points(seed, dim_x, n=12, lo=0.3, hi=2.5):
    rng = np.random.default_rng(seed + 31)
    return rng.normal(size=(n, dim_x)), rng.uniform(lo, hi, n)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
