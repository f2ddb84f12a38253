"""Counter-based randomness.

Every random draw in the samplers is a pure function of (seed, coordinates),
where the coordinates name the draw's place in the run: round index, proposal
slot, position within the proposal.  Proposals inside a round can therefore be
evaluated in any order, in any chunking, by any number of workers, and the run
is reproducible bit for bit.  The mixer is the splitmix64 finalizer, applied
once per folded coordinate word.
"""
from __future__ import annotations

import numpy as np

_PHI = np.uint64(0x9E3779B97F4A7C15)
_GAMMA = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1

# Domain tags keep unrelated draw streams disjoint.
D_RUN = 0          # per-record seed derivation
D_SEQ = 1          # sequential pick at step s
D_SIZE = 2         # cardinality draw for the size-mixture route
D_BATCH_ELEM = 3   # (batch, slot, position) element draw inside a proposal
D_BATCH_ACC = 4    # (batch, slot) acceptance coin
D_BERN = 5         # (iteration, slot, element) Bernoulli proposal bit
D_BERN_ACC = 6     # (iteration, slot) acceptance coin
D_PLANAR = 7       # (subproblem hash, pick index)
D_TRIAL = 8        # test harness trial streams


def mix64(x):
    """splitmix64 finalizer, elementwise on uint64 arrays (wraps mod 2^64)."""
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = (x ^ (x >> np.uint64(30))) * _M1
        x = (x ^ (x >> np.uint64(27))) * _M2
        return x ^ (x >> np.uint64(31))


def fold(key, word):
    """Absorb one coordinate word into a key.  Both may be arrays (broadcast)."""
    key = np.asarray(key, dtype=np.uint64)
    word = np.asarray(word, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(key ^ (word * _PHI + _GAMMA))


def derive_key(seed, *words) -> np.uint64:
    """Derive a subkey from a seed and a coordinate path."""
    key = np.uint64(int(seed) & _MASK)
    for w in words:
        key = fold(key, w)
    return key


def u01(key, *words):
    """Uniform [0, 1) draw(s) at the given coordinates.

    Array coordinates broadcast, so a whole chunk of proposal slots is hashed
    in one call.
    """
    key = np.asarray(key, dtype=np.uint64)
    for w in words:
        key = fold(key, w)
    h = mix64(key)
    return (h >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def run_seeds(base_seed: int, n_runs: int) -> np.ndarray:
    """Per-record master seeds: record r replayed alone with seed[r] reproduces
    exactly the record the batch produced."""
    key = fold(np.uint64(int(base_seed) & _MASK), np.uint64(D_RUN))
    return fold(key, np.arange(n_runs, dtype=np.uint64))


def categorical(weights: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Draw indices from rows of nonnegative weights using uniforms u.

    weights: (R, n) rows; u: (R,) uniforms in [0, 1).  Returns (R,) indices.
    Zero-weight entries are never selected.
    """
    cum = np.cumsum(weights, axis=1)
    tot = cum[:, -1]
    target = u * tot
    return (cum <= target[:, None]).sum(axis=1).clip(0, weights.shape[1] - 1)
