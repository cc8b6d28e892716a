import os
from pathlib import Path

import numpy as np
import pytest

from boolcons.construction import load_seed_groups
from boolcons.gp import parse_tree

DATA = Path(__file__).parent / "data"
CONCAT = "IF(v0, f0, (v1 XOR f1))"


def simplest_rows():
    rows = []
    for line in (DATA / "simplest_constructions.txt").read_text().splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        head, expr = line.split("|", 1)
        s, n, nl, ev = head.split()
        rows.append(((int(s), int(n), int(nl), ev), expr.strip()))
    return rows


def pytest_collection_modifyitems(config, items):
    if os.environ.get("BOOLCONS_LONG") == "1":
        return
    skip = pytest.mark.skip(reason="paper-scale run; set BOOLCONS_LONG=1")
    for item in items:
        if "long" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def seeds():
    return {name: load_seed_groups(DATA / name) for name in
            ("seeds_n4_train", "seeds_n4_test", "seeds_n5_train", "seeds_n5_test",
             "seeds_n6", "seeds_n7")}


@pytest.fixture(scope="session")
def concat_tree():
    return parse_tree(CONCAT)


# --- acceptance verdict lines ----------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
