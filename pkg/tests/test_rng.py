from __future__ import annotations

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from detsample import rng


def test_mix64_scalar_matches_known_finalizer():
    # splitmix64 finalizer of 0 is 0; value at 1 frozen from a direct
    # big-int evaluation of the same multiply-xorshift chain.
    assert int(rng.mix64(np.uint64(0))) == 0
    assert int(rng.mix64(np.uint64(1))) == 0x5692161D100B05E5


def test_fold_vectorizes():
    key = np.uint64(42)
    words = np.arange(8, dtype=np.uint64)
    vec = rng.fold(key, words)
    for i, w in enumerate(words):
        assert vec[i] == rng.fold(key, w)


def test_u01_range_and_determinism():
    key = rng.derive_key(7, 1, 2)
    a = rng.u01(key, np.arange(1000, dtype=np.uint64))
    b = rng.u01(key, np.arange(1000, dtype=np.uint64))
    assert np.array_equal(a, b)
    assert np.all((a >= 0.0) & (a < 1.0))
    # crude uniformity: mean near 1/2, no mass collapse
    assert abs(a.mean() - 0.5) < 0.05
    assert len(np.unique(a)) == 1000


def test_run_seeds_distinct_and_stable():
    s = rng.run_seeds(123, 64)
    assert len(np.unique(s)) == 64
    again = rng.run_seeds(123, 64)
    assert np.array_equal(s, again)
    other = rng.run_seeds(124, 64)
    assert not np.array_equal(s, other)


def test_run_seeds_prefix_stable():
    # Run r's seed must not depend on how many runs were requested.
    full = rng.run_seeds(99, 32)
    assert np.array_equal(full[:5], rng.run_seeds(99, 5))


@given(st.integers(min_value=0, max_value=2**63), st.integers(min_value=0, max_value=2**20))
def test_derive_key_deterministic(seed, word):
    a = rng.derive_key(seed, word)
    b = rng.derive_key(seed, word)
    assert a == b


def test_categorical_matches_cumsum_inverse():
    w = np.array([[0.2, 0.3, 0.5], [1.0, 0.0, 0.0], [0.0, 0.0, 2.0]])
    u = np.array([0.19 / 1.0, 0.999, 0.5])
    got = rng.categorical(w, u)
    assert got.tolist() == [0, 0, 2]


def test_categorical_boundaries():
    w = np.array([[0.5, 0.5]])
    assert rng.categorical(w, np.array([0.0]))[0] == 0
    assert rng.categorical(w, np.array([0.49999]))[0] == 0
    assert rng.categorical(w, np.array([0.50001]))[0] == 1


def test_categorical_empirical_frequencies():
    w = np.tile(np.array([0.1, 0.6, 0.3]), (20000, 1))
    key = rng.derive_key(5, rng.D_TRIAL)
    u = rng.u01(key, np.arange(20000, dtype=np.uint64))
    picks = rng.categorical(w, u)
    freq = np.bincount(picks, minlength=3) / 20000
    assert np.abs(freq - np.array([0.1, 0.6, 0.3])).max() < 0.02
