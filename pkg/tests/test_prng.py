import numpy as np
import pytest

from puflab import prng


def test_same_key_same_stream():
    a = prng.keyed_rng(1, "x", 2).standard_normal(5)
    b = prng.keyed_rng(1, "x", 2).standard_normal(5)
    assert np.array_equal(a, b)


def test_keys_are_not_ambiguous():
    # length prefixes keep (1, 23) and (12, 3) apart
    assert prng.key_words(1, 23) != prng.key_words(12, 3)
    assert prng.derive_seed(1, "a") != prng.derive_seed(1, "b")
    assert prng.derive_seed(1, 2) != prng.derive_seed(2, 1)


def test_large_and_negative_values():
    assert 0 <= prng.derive_seed(2**64 - 1, "t") <= prng.MASK64
    with pytest.raises(ValueError):
        prng.key_words(-1)


def test_order_independence():
    first = prng.keyed_rng(9, "role", 0).random()
    prng.keyed_rng(9, "role", 1).random(1000)
    assert prng.keyed_rng(9, "role", 0).random() == first
