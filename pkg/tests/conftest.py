import numpy as np
import pytest

from mmddp.config import SamplerConfig
from mmddp.data import make_dataset

ACCEPTANCE_RESULTS: list[str] = []


def toy_dataset(n_cbt=2, n_uc=1, group_sizes=(2,), times=(0.0, 3.0, 6.0), seed=0, attendance=None,
                y=None):
    """Small balanced panel; CBT client i attends two neighbouring modules."""
    rng = np.random.default_rng(seed)
    S = sum(group_sizes)
    module_group, module_order = {}, {}
    mid = 1
    for g, size in enumerate(group_sizes, start=1):
        for o in range(1, size + 1):
            module_group[mid], module_order[mid] = g, o
            mid += 1
    n = n_cbt + n_uc
    ids = np.arange(1, n + 1)
    treat = np.r_[np.ones(n_cbt, int), np.zeros(n_uc, int)]
    if attendance is None:
        attendance = {}
        for i in range(n_cbt):
            m = 1 + (i % S)
            attendance[i + 1] = [m] if S == 1 else [m, 1 + (m % S)]
        # make sure every module is attended
        for m in range(1, S + 1):
            if not any(m in a for a in attendance.values()):
                attendance[1] = list(attendance.get(1, [])) + [m]
    oc = np.repeat(ids, len(times))
    ot = np.tile(np.asarray(times, float), n)
    ow = np.tile(np.arange(1, len(times) + 1), n)
    if y is None:
        y = 20 + 2 * rng.standard_normal(len(oc)) - ot
    return make_dataset(ids, treat, oc, ot, ow, y, attendance, module_group, module_order)


@pytest.fixture
def small_config():
    return SamplerConfig(n_iter=50, burn_in=10, thin=2, seed=3)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
