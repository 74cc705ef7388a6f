import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("ctg", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("ctg")

ROOT = Path(__file__).resolve().parent.parent
DATA_CANDIDATES = ("data/fetal_health.csv", "data/CTG.csv", "data/ctg.csv")


def find_ctg_csv():
    """Path of the real CTG table, from $CTG_DATA or the repository data/ folder."""
    env = os.environ.get("CTG_DATA")
    if env and Path(env).exists():
        return Path(env)
    for rel in DATA_CANDIDATES:
        p = ROOT / rel
        if p.exists():
            return p
    return None


@pytest.fixture(scope="session")
def ctg_path():
    return find_ctg_csv()


@pytest.fixture(scope="session")
def surrogate():
    from ctgkit.synthetic import make_ctg_like

    return make_ctg_like(seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# --------------------------------------------------------------------------- acceptance log

_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance(request):
    """Callable ``record(number, ok, detail)`` collecting one verdict per criterion."""
    log = request.config.stash[_ACCEPTANCE_KEY]

    def record(number: int, ok: bool, detail: str) -> None:
        log.append((number, "PASS" if ok else "FAIL", detail))

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = sorted(config.stash.get(_ACCEPTANCE_KEY, []))
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for number, verdict, detail in log:
        terminalreporter.write_line(f"{verdict} criterion {number}: {detail}")
