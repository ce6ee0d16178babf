from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chartrel.rng import CounterRNG, philox4x64, stream_key, to_unit_interval

U64 = st.integers(0, 2**64 - 1)


def numpy_block(counter, key):
    """Reference block from numpy's Philox, which increments the counter before use."""
    c = list(counter)
    # step the 256-bit counter back by one so numpy's first block is ours
    for i in range(4):
        if c[i] > 0:
            c[i] -= 1
            break
        c[i] = 2**64 - 1
    bg = np.random.Philox(key=np.array(key, dtype=np.uint64), counter=np.array(c, dtype=np.uint64))
    return bg.random_raw(4)


@settings(max_examples=200, deadline=None)
@given(st.tuples(U64, U64, U64, U64), st.tuples(U64, U64))
def test_block_matches_numpy(counter, key):
    ours = philox4x64(tuple(np.uint64(c) for c in counter), tuple(np.uint64(k) for k in key))
    np.testing.assert_array_equal(ours.reshape(4), numpy_block(counter, key))


def test_vectorised_block_matches_scalar():
    reps = np.arange(5, dtype=np.uint64)
    block = philox4x64((reps, np.uint64(3), np.uint64(0), np.uint64(0)), (np.uint64(7), np.uint64(9)))
    for r in range(5):
        np.testing.assert_array_equal(block[:, r], numpy_block((r, 3, 0, 0), (7, 9)))


def test_unit_interval_bounds():
    words = np.array([0, 2**11 - 1, 2**64 - 1], dtype=np.uint64)
    u = to_unit_interval(words)
    assert u[0] == u[1] == 2.0**-53
    assert u[2] == 1.0


def test_stream_key_is_stable():
    assert stream_key("S1A.HWFault.det") == stream_key("S1A.HWFault.det")
    assert stream_key("S1A.HWFault.det") != stream_key("S1A.HWFault.latent")
    assert 0 <= stream_key("x") < 2**64


def test_counter_rng_addressing():
    rng = CounterRNG(59813)
    grid = rng.uniforms(np.arange(4), np.array([11, 22], dtype=np.uint64))
    assert grid.shape == (4, 2)
    assert rng.uniform(2, 22) == grid[2, 1]
    assert CounterRNG(59813).uniforms([3], [11])[0, 0] == grid[3, 0]
    assert CounterRNG(59814).uniform(3, 11) != grid[3, 0]
    assert rng.uniform(0, 11, index=1) != rng.uniform(0, 11, index=0)


def test_uniforms_look_uniform():
    from scipy import stats
    u = CounterRNG(1).uniforms(np.arange(100_000), [5])[:, 0]
    assert np.all((u > 0) & (u <= 1))
    assert stats.kstest(u, "uniform").pvalue > 0.01


def test_seed_range():
    with pytest.raises(ValueError):
        CounterRNG(-1)
    with pytest.raises(ValueError):
        CounterRNG(2**64)
