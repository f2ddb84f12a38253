"""Ground-truth oracles and statistical instruments used by the test suite
and the report path: exhaustive distributions for small ground sets, the
down-operator, divergences, an entropic-independence spot check, and the
paired hard measure with its duplicate statistics.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadParity,
    GroundSetTooLarge,
    InvalidModel,
    MixedSizes,
    ProbabilityViolation,
    SupportMismatch,
    ZeroConditional,
)
from .models import Cardinality, DppModel, Partition
from .numerics import CLAMP_TOL

BRUTE_MAX_N = 20
SPOT_CHECK_MAX_N = 12

_MASK_CHUNK = 4096


@dataclass(frozen=True)
class ExactDistribution:
    """A distribution over element sets, kept as parallel arrays."""

    support: tuple[tuple[int, ...], ...]
    probs: np.ndarray
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if len(self.support) != len(probs):
            raise InvalidModel("support and probabilities must be parallel")
        if probs.size and probs.min() < 0.0:
            raise ProbabilityViolation("negative probability in distribution")
        if probs.size and abs(probs.sum() - 1.0) > 1e-9:
            raise ProbabilityViolation(f"probabilities sum to {probs.sum()!r}")
        index = {s: i for i, s in enumerate(self.support)}
        if len(index) != len(self.support):
            raise InvalidModel("duplicate sets in support")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "_index", index)

    def prob(self, s) -> float:
        i = self._index.get(tuple(sorted(int(v) for v in s)))
        return float(self.probs[i]) if i is not None else 0.0

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return {s: float(p) for s, p in zip(self.support, self.probs)}


def _masked_minors(entries: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """det(L_{S,S}) for each 0/1 mask row, via det(I + diag(m)(L - I))."""
    n = entries.shape[0]
    shifted = entries - np.eye(n)
    out = np.empty(masks.shape[0])
    for lo in range(0, masks.shape[0], _MASK_CHUNK):
        hi = min(lo + _MASK_CHUNK, masks.shape[0])
        mats = np.eye(n)[None, :, :] + masks[lo:hi, :, None] * shifted[None, :, :]
        out[lo:hi] = np.linalg.det(mats)
    return out


def brute_force_distribution(model: DppModel) -> ExactDistribution:
    """Exhaustive normalized masses over every admissible subset."""
    n = model.n
    if n > BRUTE_MAX_N:
        raise GroundSetTooLarge(f"refusing 2^{n} subsets (cap {BRUTE_MAX_N})")
    codes = np.arange(1 << n, dtype=np.uint64)
    bits = ((codes[:, None] >> np.arange(n, dtype=np.uint64)[None, :]) & np.uint64(1)).astype(
        np.float64
    )
    keepmask = np.ones(len(codes), dtype=bool)
    constraint = model.constraint
    if isinstance(constraint, Cardinality):
        keepmask = bits.sum(axis=1) == constraint.k
    elif isinstance(constraint, Partition):
        owner = constraint.block_of(n)
        for b, quota in enumerate(constraint.quotas):
            keepmask &= bits[:, owner == b].sum(axis=1) == quota
    bits = bits[keepmask]
    masses = _masked_minors(model.ensemble.entries, bits)
    scale = max(1.0, float(np.abs(masses).max()) if masses.size else 1.0)
    bad = masses < -CLAMP_TOL * scale
    if bad.any():
        raise ProbabilityViolation(
            f"negative subset mass {masses[bad].min()!r} in enumeration"
        )
    masses = np.clip(masses, 0.0, None)
    total = masses.sum()
    if total <= 0.0:
        raise ProbabilityViolation("no admissible subset carries mass")
    keep = masses > 0.0
    support = tuple(
        tuple(np.flatnonzero(row).tolist()) for row in bits[keep].astype(bool)
    )
    return ExactDistribution(support=support, probs=masses[keep] / total)


def empirical_distribution(samples) -> ExactDistribution:
    counts: dict[tuple[int, ...], int] = {}
    total = 0
    for s in samples:
        key = tuple(sorted(int(v) for v in s))
        counts[key] = counts.get(key, 0) + 1
        total += 1
    if total == 0:
        raise InvalidModel("no samples")
    support = tuple(sorted(counts))
    probs = np.array([counts[s] for s in support], dtype=np.float64) / total
    return ExactDistribution(support=support, probs=probs)


def downsample_distribution(dist: ExactDistribution, ell: int) -> ExactDistribution:
    """Push a k-homogeneous distribution through the uniform down operator."""
    sizes = {len(s) for s in dist.support}
    if len(sizes) != 1:
        raise MixedSizes(f"support mixes sizes {sorted(sizes)}")
    k = sizes.pop()
    ell = int(ell)
    if not 0 <= ell <= k:
        raise InvalidModel(f"cannot downsample size {k} to {ell}")
    if ell == k:
        return dist
    denom = math.comb(k, ell)
    acc: dict[tuple[int, ...], float] = {}
    for s, p in zip(dist.support, dist.probs):
        w = float(p) / denom
        for t in itertools.combinations(s, ell):
            acc[t] = acc.get(t, 0.0) + w
    support = tuple(sorted(acc))
    probs = np.array([acc[t] for t in support])
    return ExactDistribution(support=support, probs=probs / probs.sum())


def _as_prob_dict(d) -> dict[tuple[int, ...], float]:
    if isinstance(d, ExactDistribution):
        return d.as_dict()
    if isinstance(d, dict):
        return {tuple(sorted(int(v) for v in s)): float(p) for s, p in d.items()}
    raise InvalidModel(f"cannot interpret {type(d).__name__} as a distribution")


def tv_distance(a, b) -> float:
    """(1/2) sum |a_S - b_S| over the union support."""
    pa = _as_prob_dict(a)
    pb = _as_prob_dict(b)
    keys = set(pa) | set(pb)
    return 0.5 * sum(abs(pa.get(s, 0.0) - pb.get(s, 0.0)) for s in keys)


def kl_divergence(q, p) -> float:
    """Sum q_i log(q_i / p_i), with 0 log 0 = 0."""
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if q.shape != p.shape:
        raise SupportMismatch("probability vectors differ in length")
    live = q > 0.0
    if np.any(p[live] <= 0.0):
        raise SupportMismatch("q puts mass where p has none")
    return float(np.sum(q[live] * np.log(q[live] / p[live])))


def renyi_divergence(q, p, lam: float) -> float:
    """E_p[(q/p)^lam] = sum q^lam p^(1-lam); equals 1 iff q = p (lam > 1)."""
    if lam < 1.0:
        raise InvalidModel("order must be at least 1")
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if q.shape != p.shape:
        raise SupportMismatch("probability vectors differ in length")
    live = q > 0.0
    if np.any(p[live] <= 0.0):
        raise SupportMismatch("q puts mass where p has none")
    return float(np.sum(q[live] ** lam * p[live] ** (1.0 - lam)))


def statistical_tolerance(support_size: int, n_samples: int) -> float:
    """DKW-style TV allowance for an n-sample histogram."""
    return 3.0 * math.sqrt(support_size / (2.0 * n_samples))


def ei_spot_check(model: DppModel, alpha: float, trials: int, seed: int = 0) -> dict:
    """Probe KL(nu_1 || mu_1) <= KL(nu || mu) / (alpha k) over point masses
    and random test distributions; reports the worst ratio seen."""
    if model.n > SPOT_CHECK_MAX_N:
        raise GroundSetTooLarge(f"spot check capped at n={SPOT_CHECK_MAX_N}")
    dist = brute_force_distribution(model)
    sizes = {len(s) for s in dist.support}
    if len(sizes) != 1:
        raise MixedSizes("entropic-independence check needs a fixed sample size")
    k = sizes.pop()
    if k == 0:
        raise InvalidModel("degenerate size-0 support")
    mu = dist.probs
    m = len(dist.support)
    elements = sorted({i for s in dist.support for i in s})
    down = np.zeros((len(elements), m))
    pos = {e: r for r, e in enumerate(elements)}
    for col, s in enumerate(dist.support):
        for e in s:
            down[pos[e], col] = 1.0 / k
    mu1 = down @ mu

    worst = 0.0
    worst_case = None
    rng = np.random.default_rng(seed)
    probes = []
    for i in range(m):
        nu = np.zeros(m)
        nu[i] = 1.0
        probes.append(("point", nu))
    for t in range(trials):
        g = -np.log(rng.uniform(size=m))
        probes.append((f"random-{t}", g / g.sum()))
    for name, nu in probes:
        top = kl_divergence(down @ nu, mu1)
        bottom = kl_divergence(nu, mu)
        if bottom <= 0.0:
            continue
        ratio = top * alpha * k / bottom
        if ratio > worst:
            worst = ratio
            worst_case = name
    return {
        "alpha": float(alpha),
        "k": int(k),
        "trials": int(trials),
        "probes": len(probes),
        "worst_ratio": float(worst),
        "worst_case": worst_case,
        "pass": bool(worst <= 1.0 + 1e-9),
    }


@dataclass(frozen=True)
class HardPairMeasure:
    """Uniform measure over unions of k/2 element pairs (2i, 2i+1).

    Counting, marginals, and conditioning reduce to binomial coefficients, so
    this scales to sizes where determinant enumeration cannot go.
    """

    n_pairs: int
    k: int

    def __post_init__(self):
        if self.k % 2 != 0:
            raise BadParity(f"pair measure needs even size, got {self.k}")
        if not 0 <= self.k <= 2 * self.n_pairs:
            raise InvalidModel(f"size {self.k} impossible with {self.n_pairs} pairs")

    @property
    def n(self) -> int:
        return 2 * self.n_pairs

    @staticmethod
    def partner(i: int) -> int:
        return i ^ 1

    def _required_pairs(self, t) -> int:
        t = tuple(int(i) for i in t)
        if len(set(t)) != len(t):
            raise InvalidModel(f"repeated elements in {t}")
        if t and (min(t) < 0 or max(t) >= self.n):
            raise InvalidModel(f"subset {t} out of range for n={self.n}")
        return len({i // 2 for i in t})

    def count(self, t=()) -> float:
        """Number of admissible sets containing t (each has unit mass)."""
        need = self._required_pairs(t)
        half = self.k // 2
        if need > half:
            return 0.0
        return float(math.comb(self.n_pairs - need, half - need))

    def marginal(self, i: int, given=()) -> float:
        given = tuple(int(v) for v in given)
        if int(i) in given:
            raise ZeroConditional(f"element {i} is already conditioned on")
        denom = self.count(given)
        if denom <= 0.0:
            raise ZeroConditional(f"conditioning event {given} has zero mass")
        return self.count(given + (int(i),)) / denom

    def support_size(self) -> int:
        return math.comb(self.n_pairs, self.k // 2)

    def exact_distribution(self) -> ExactDistribution:
        """Explicit enumeration; only sensible for small n_pairs."""
        half = self.k // 2
        support = []
        for chosen in itertools.combinations(range(self.n_pairs), half):
            s = tuple(sorted(v for p in chosen for v in (2 * p, 2 * p + 1)))
            support.append(s)
        probs = np.full(len(support), 1.0 / len(support))
        return ExactDistribution(support=tuple(support), probs=probs)


def duplicate_probabilities(measure: HardPairMeasure, ell: int) -> np.ndarray:
    """P[an ell-subset of a drawn set covers exactly t full pairs], t = 0..ell//2.

    Closed form: C(k/2,t) C(k/2-t, ell-2t) 2^(ell-2t) / C(k,ell).
    """
    k = measure.k
    ell = int(ell)
    if not 0 <= ell <= k:
        raise InvalidModel(f"subset size {ell} outside 0..{k}")
    half = k // 2
    denom = math.comb(k, ell)
    out = np.zeros(ell // 2 + 1)
    for t in range(ell // 2 + 1):
        rest = ell - 2 * t
        if rest > half - t:
            continue
        out[t] = math.comb(half, t) * math.comb(half - t, rest) * 2**rest / denom
    if abs(out.sum() - 1.0) > 1e-9:
        raise ProbabilityViolation(f"duplicate law sums to {out.sum()!r}")
    return out


def duplicate_scaling_report(n_pairs: int, k: int, ells) -> dict:
    """Exact duplicate-count laws across subset sizes, with doubling ratios
    against the 4^t benchmark."""
    measure = HardPairMeasure(n_pairs=n_pairs, k=k)
    ells = sorted(int(v) for v in ells)
    laws = {ell: duplicate_probabilities(measure, ell) for ell in ells}
    rows = []
    for ell in ells:
        for t, p in enumerate(laws[ell]):
            rows.append(
                {
                    "ell": ell,
                    "t": t,
                    "prob": float(p),
                    "theory": float((ell**2 / k) ** t),
                }
            )
    ratios = []
    for ell in ells:
        if 2 * ell not in laws:
            continue
        small, big = laws[ell], laws[2 * ell]
        for t in range(1, len(small)):
            if small[t] <= 0.0 or t >= len(big):
                continue
            ratios.append(
                {
                    "ell": ell,
                    "t": t,
                    "ratio": float(big[t] / small[t]),
                    "target": float(4**t),
                }
            )
    return {"n_pairs": n_pairs, "k": k, "rows": rows, "ratios": ratios}
