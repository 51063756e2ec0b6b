import sys

import numpy as np
import pytest

from kwscl.audio import synth_noise_recordings, synth_test_corpus
from kwscl.cl import CLConfig, initial_state
from kwscl.config import ExperimentConfig
from kwscl.harness import train_initial
from kwscl.pipeline import FrontEnd, process_clips


@pytest.fixture(scope="session")
def small_cfg():
    return ExperimentConfig(n_train_per_class=200, n_test_per_class=100, train_epochs=12,
                            noise_duration_s=40.0)


@pytest.fixture(scope="session")
def corpus(small_cfg):
    return (synth_test_corpus(small_cfg.n_train_per_class, small_cfg.seed),
            synth_test_corpus(small_cfg.n_test_per_class, small_cfg.seed + 1))


@pytest.fixture(scope="session")
def noises(small_cfg):
    return synth_noise_recordings(small_cfg.seed + 2, small_cfg.noise_duration_s)


@pytest.fixture(scope="session")
def bundle(small_cfg, corpus):
    """Dual model trained on the synthetic corpus, with its INT8 version and rehearsal buffer."""
    train, test = corpus
    return train_initial(train, test, small_cfg)


@pytest.fixture(scope="session")
def test_feats(corpus):
    return process_clips(corpus[1], FrontEnd())


@pytest.fixture()
def state(bundle):
    return initial_state(bundle.model, bundle.rehearsal, CLConfig(), bundle.qm)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
