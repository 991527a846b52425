import math

import numpy as np
import pytest

from uncq.classifier import Classifier, apply_temperature, train_bow
from uncq.calibration import fit_temperature
from uncq.corpus import LabelSpace, split_corpus
from uncq.synthetic import mixed_polarity_corpus


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


class LinearStub(Classifier):
    """Binary logits (0, 0.5 * #good - 0.5 * #bad); goes through the generic masked path."""

    label_space = LabelSpace(("neg", "pos"))

    def __init__(self, temperature=1.0):
        self.temperature = temperature
        self.calls = 0

    def logits_batch(self, inputs):
        self.calls += 1
        return np.array([[0.0, 0.5 * list(t).count("good") - 0.5 * list(t).count("bad")] for t in inputs]).reshape(-1, 2)


class ConstantModel(Classifier):
    label_space = LabelSpace(("a", "b", "c"))

    def logits_batch(self, inputs):
        return np.tile([0.3, 1.2, -0.4], (len(inputs), 1))


@pytest.fixture
def stub():
    return LinearStub()


@pytest.fixture
def constant():
    return ConstantModel()


@pytest.fixture(scope="session")
def synth_corpus():
    return mixed_polarity_corpus(1200, seed=3)


@pytest.fixture(scope="session")
def synth_splits(synth_corpus):
    return split_corpus(synth_corpus, (0.6, 0.2, 0.2), seed=0)


@pytest.fixture(scope="session")
def bow(synth_splits):
    return train_bow(synth_splits[0], alpha=1.0)


@pytest.fixture(scope="session")
def calibrated(bow, synth_splits):
    T = fit_temperature(bow, synth_splits[1]).temperature
    return apply_temperature(bow, T)


# acceptance criterion number -> (passed, one-line detail); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
