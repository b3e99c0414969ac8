import numpy as np
import pytest

from gradbound.datasets import split, synth_gaussian
from gradbound.deskdata import load_desk_dataset


@pytest.fixture(scope="session")
def desk_data(tmp_path_factory):
    """Desk-scale 5120-example digit dataset, built once per session."""
    return load_desk_dataset(tmp_path_factory.mktemp("deskidx"))


@pytest.fixture(scope="session")
def desk_splits(desk_data):
    """(train, heldout) = (4096, 1024) stratified split of the desk data."""
    return split(desk_data, 4096 / 5120, seed=0)


@pytest.fixture(scope="session")
def synth2():
    """2-class Gaussian data matching the class-conditional hypothesis."""
    means = np.zeros((2, 16))
    means[0, 0] = 1.5
    means[1, 1] = 1.5
    return synth_gaussian(2, 16, means, sigma=1.0, n_per_class=512, seed=3)
