import numpy as np
import pytest

from dpre.correlation import BayesModel, train
from dpre.samples import AccessSample
from dpre.topology import desk_traffic


@pytest.fixture
def hand_corpus():
    """Three samples over vocab {1,2,3}; counts are easy to tally by hand."""
    return [
        AccessSample(1, (2,), 10),
        AccessSample(1, (2, 3), 20),
        AccessSample(2, (3,), 30),
    ]


@pytest.fixture
def hand_model(hand_corpus):
    return train(hand_corpus, vocab=[1, 2, 3])


def make_model(labels, vocab, cond, prior, n_samples):
    return BayesModel(labels, vocab, np.asarray(cond, float),
                      np.asarray(prior, float), n_samples)


@pytest.fixture
def desk_cfg():
    return desk_traffic(seed=7)
