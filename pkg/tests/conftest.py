import numpy as np
import pytest
from hypothesis import settings

from nps.harness import TinyModelSpec, accuracy_evaluator, finetune, make_tasks, pretrain
from nps.params import Checkpoint

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def random_checkpoint(rng, shapes=(("w", (4, 5)), ("b", (5,)), ("head", (5, 3)))):
    return Checkpoint.from_arrays([(n, rng.standard_normal(s)) for n, s in shapes])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_zoo():
    """Two easy tasks on a ~2k-parameter MLP; shared by the slower tests."""
    spec = TinyModelSpec((32, 32, 32, 4))
    tasks = make_tasks(2, base_seed=5)
    pre = pretrain(spec, make_tasks(2, base_seed=500), 600, seed=0, learning_rate=0.05)
    fts = [finetune(pre, t, 300, seed=1 + i, learning_rate=0.05) for i, t in enumerate(tasks)]
    cal = [accuracy_evaluator(t, "calibration") for t in tasks]
    return {"spec": spec, "tasks": tasks, "pre": pre, "fts": fts, "cal": cal}


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
