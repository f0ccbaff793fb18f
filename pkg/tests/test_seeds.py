import numpy as np
import pytest

from adaptrd.seeds import SeedStream


def test_same_stream_reproduces_identical_draws():
    a = SeedStream(123, (4, 5)).generator().uniform(size=50)
    b = SeedStream(123, (4, 5)).generator().uniform(size=50)
    assert np.array_equal(a, b)


def test_distinct_indices_differ():
    a = SeedStream(123).child(0).generator().uniform(size=50)
    b = SeedStream(123).child(1).generator().uniform(size=50)
    assert not np.array_equal(a, b)


def test_child_streams_are_nearly_uncorrelated():
    x = SeedStream(7).child(0).generator().standard_normal(10_000)
    y = SeedStream(7).child(1).generator().standard_normal(10_000)
    assert abs(np.corrcoef(x, y)[0, 1]) < 0.05


def test_negative_index_rejected():
    with pytest.raises(ValueError):
        SeedStream(1).child(-1)
