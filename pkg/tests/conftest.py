import itertools
import math

import numpy as np
import pytest

from chaosrough.symtensor import SymTensor


def random_symtensor(rng, order, dim, density=0.6):
    coeffs = {}
    for idx in itertools.combinations_with_replacement(range(dim), order):
        if rng.random() < density:
            coeffs[idx] = rng.normal()
    return SymTensor(order, dim, coeffs)


def dense_symmetrize(arr):
    if arr.ndim == 0:
        return arr
    perms = list(itertools.permutations(range(arr.ndim)))
    return sum(np.transpose(arr, p) for p in perms) / len(perms)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance results, filled by test_acceptance and echoed in the terminal summary
ACCEPTANCE: dict = {}


def record_criterion(cid: int, name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {cid:2d}: {name} -- {detail}"
    ACCEPTANCE[cid] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for cid in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[cid])
