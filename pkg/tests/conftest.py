import numpy as np
import pytest

from i2drnn.datagen import CopyTaskSpec, SequenceDataset, gen_copy_task, normalize_split
from i2drnn.model import ARCH_I2DRNN, ModelConfig, init_params
from i2drnn.numerics import Rng

TINY_COPY = CopyTaskSpec(n_channels=2, s1=3, t1=2, s2=2, t2=2)


@pytest.fixture
def rng():
    return Rng(1234)


@pytest.fixture
def tiny_copy_dataset():
    """12 short two-scale sequences, normalized and split."""
    r = Rng(5)
    ds = gen_copy_task(TINY_COPY, 12, r.split("data"))
    return normalize_split(ds, r.split("norm"))


@pytest.fixture
def tiny_model(rng):
    cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=(3, 2), input_dim=2,
                      output_dim=2)
    return init_params(cfg, rng.split("init"))


def make_dataset(inputs, targets):
    """Single-sample dataset wrapper used by training tests."""
    from i2drnn.datagen import Sample
    s = Sample(same=np.asarray(inputs, dtype=np.float64),
               targets=np.asarray(targets, dtype=np.float64))
    return SequenceDataset(samples=[s], train_idx=[0], val_idx=[], test_idx=[0])
