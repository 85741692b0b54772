import numpy as np
import pytest

from netdex.generators import random_connected_graph
from netdex.graph import is_regular
from netdex.models import BlockPartition

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def random_instance(rng, n_range=(6, 10), p=0.35, kappa=2, min_block=2):
    """Non-regular connected graph plus a random block partition."""
    while True:
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        net = random_connected_graph(n, p, rng)
        if is_regular(net):
            continue
        while True:
            labels = rng.integers(1, kappa + 1, size=n)
            sizes = np.bincount(labels, minlength=kappa + 1)[1:]
            if sizes.min() >= min_block:
                return net, BlockPartition(labels)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
