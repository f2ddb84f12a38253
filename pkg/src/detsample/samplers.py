"""Sampling algorithms over counting oracles, metered by adaptive rounds
versus total proposal work.

The sequential chain is the k-round baseline.  The batched symmetric sampler
accepts O(sqrt(k))-sized batches through negative correlation; the
entropically independent variant proposes batches on an isotropic copy
subdivision and filters them by a likelihood-ratio threshold; the filter
loop reduces a bounded-eigenvalue DPP to a chain of near-Bernoulli one-step
samples.

Proposal fan-out is simulated: each adaptive round plans a fixed-width wave
of proposals with per-proposal derived seeds, and the first acceptance in
index order wins.  Proposals are only evaluated up to that first acceptance
(the outcome is identical to evaluating the whole wave), so proposal_work
counts evaluations while max_width records the planned wave width.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import rng
from .errors import (
    BatchRejected,
    InvalidModel,
    ProbabilityViolation,
    RoundBudgetExceeded,
)
from .models import (
    Cardinality,
    ConditionedState,
    DppModel,
    Partition,
    count,
    initial_state,
    marginal_vector_cached,
    model_digest,
    size_distribution,
)
from .numerics import (
    CLAMP_TOL,
    KIND_SYMMETRIC,
    PSD_TOL,
    EnsembleMatrix,
    schur_complement,
)

TABLE_MAX_N = 16         # count tables cover 2^n subsets below this
SIZE_CUTOFF_CONST = 10.0  # c_s in the one-step size cutoff
FILTER_ROUNDS_CONST = 4.0
RATIO_SLACK = 1e-9

STATUS_EXACT = "exact"
STATUS_APPROX = "approximate"
STATUS_FAILED = "failed"


@dataclass
class RoundMeter:
    """Counts sequential barriers, evaluated proposals, and the widest
    planned proposal wave."""

    adaptive_rounds: int = 0
    proposal_work: int = 0
    max_width: int = 0

    def note_round(self, planned_width: int, evaluated: int) -> None:
        self.adaptive_rounds += 1
        self.proposal_work += int(evaluated)
        self.max_width = max(self.max_width, int(planned_width))

    def absorb(self, other: "RoundMeter") -> None:
        self.adaptive_rounds += other.adaptive_rounds
        self.proposal_work += other.proposal_work
        self.max_width = max(self.max_width, other.max_width)


@dataclass(frozen=True)
class SamplerConfig:
    """Knobs shared by every sampler; unset beta falls back to the
    per-step theoretical subdivision default."""

    seed: int = 0
    eps: float = 0.01
    c: float = 0.1
    b: float | None = None
    max_proposals_per_round: int = 100_000
    beta: float | None = None
    max_rounds_per_batch: int = 6
    workers: int = 1

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise InvalidModel(f"eps must be in (0,1), got {self.eps}")
        if self.c <= 0.0:
            raise InvalidModel(f"depth exponent must be positive, got {self.c}")
        if self.b is not None and self.b < 1.0:
            raise InvalidModel(f"ratio exponent must be >= 1, got {self.b}")
        if self.beta is not None and not 0.0 < self.beta < 1.0:
            raise InvalidModel(f"beta must be in (0,1), got {self.beta}")
        if self.max_proposals_per_round < 1 or self.max_rounds_per_batch < 1:
            raise InvalidModel("budgets must be at least 1")
        if self.workers < 1:
            raise InvalidModel("workers must be at least 1")

    @property
    def ratio_exponent(self) -> float:
        return self.b if self.b is not None else 3.0 / self.c

    @property
    def chunk_size(self) -> int:
        # workers only widen the internal evaluation chunks; results do not
        # depend on it because every proposal has its own derived seed
        return 256 * self.workers


@dataclass(frozen=True)
class SampleResult:
    sample: tuple[int, ...]
    meter: RoundMeter
    status: str
    eps: float | None = None


def _resolve_size(model: DppModel, k: int | None) -> tuple[DppModel, int]:
    """Pin down the sample size; plain models get a cardinality constraint."""
    if model.constraint is None:
        if k is None:
            raise InvalidModel("an unconstrained model needs an explicit size")
        return DppModel(ensemble=model.ensemble, constraint=Cardinality(int(k))), int(k)
    if isinstance(model.constraint, Cardinality):
        k0 = model.constraint.k
    else:
        k0 = sum(model.constraint.quotas)
    if k is not None and int(k) != k0:
        raise InvalidModel(f"size {k} conflicts with the model's size {k0}")
    return model, k0


def _remaining_size(model: DppModel) -> int:
    if isinstance(model.constraint, Cardinality):
        return model.constraint.k
    if isinstance(model.constraint, Partition):
        return sum(model.constraint.quotas)
    raise InvalidModel("batch sampling needs a size-constrained model")


# --- count tables for small ground sets ------------------------------------


class _CountTable:
    """count(T) for every subset mask of a small model, built once from
    masked minors and a superset-sum transform."""

    __slots__ = ("n", "counts")

    def __init__(self, model: DppModel):
        from .validation import _masked_minors

        n = model.n
        codes = np.arange(1 << n, dtype=np.int64)
        bits = ((codes[:, None] >> np.arange(n)[None, :]) & 1).astype(np.float64)
        masses = _masked_minors(model.ensemble.entries, bits)
        scale = max(1.0, float(np.abs(masses).max()))
        if (masses < -CLAMP_TOL * scale).any():
            raise ProbabilityViolation("negative subset mass in count table")
        masses = np.clip(masses, 0.0, None)
        constraint = model.constraint
        if isinstance(constraint, Cardinality):
            masses[bits.sum(axis=1) != constraint.k] = 0.0
        elif isinstance(constraint, Partition):
            owner = constraint.block_of(n)
            for b, quota in enumerate(constraint.quotas):
                masses[bits[:, owner == b].sum(axis=1) != quota] = 0.0
        for b in range(n):
            half = 1 << b
            clear = np.flatnonzero((codes & half) == 0)
            masses[clear] += masses[clear + half]
        self.n = n
        self.counts = masses


_TABLE_CACHE: dict[str, _CountTable] = {}


def _table_for(model: DppModel) -> _CountTable:
    key = model_digest(model)
    hit = _TABLE_CACHE.get(key)
    if hit is None:
        if len(_TABLE_CACHE) >= 64:
            _TABLE_CACHE.clear()
        hit = _CountTable(model)
        _TABLE_CACHE[key] = hit
    return hit


def _decode_mask(mask: int, n: int) -> tuple[int, ...]:
    return tuple(i for i in range(n) if (mask >> i) & 1)


# --- sequential sampler ----------------------------------------------------


def _sequential_runs_table(model: DppModel, k: int, seeds: np.ndarray) -> list[SampleResult]:
    tab = _table_for(model)
    n = model.n
    counts = tab.counts
    bitvals = (1 << np.arange(n)).astype(np.int64)
    keys = rng.fold(np.asarray(seeds, dtype=np.uint64), np.uint64(rng.D_SEQ))
    masks = np.zeros(len(seeds), dtype=np.int64)
    for step in range(k):
        u = rng.u01(keys, np.uint64(step))
        wts = counts[masks[:, None] | bitvals[None, :]]
        wts[(masks[:, None] & bitvals[None, :]) != 0] = 0.0
        pick = rng.categorical(wts, u)
        masks |= bitvals[pick]
    results = []
    for mask in masks:
        meter = RoundMeter()
        for step in range(k):
            meter.note_round(n - step, n - step)
        results.append(
            SampleResult(sample=_decode_mask(int(mask), n), meter=meter, status=STATUS_EXACT)
        )
    return results


def _sequential_run_scalar(model: DppModel, k: int, seed: int) -> SampleResult:
    state = initial_state(model)
    meter = RoundMeter()
    key = rng.derive_key(seed, rng.D_SEQ)
    for step in range(k):
        p = marginal_vector_cached(state.residual)
        u = rng.u01(key, np.uint64(step))
        pick = int(rng.categorical(p[None, :], np.atleast_1d(u))[0])
        meter.note_round(len(p), len(p))
        state = state.extend(pick)
    return SampleResult(sample=tuple(sorted(state.chosen)), meter=meter, status=STATUS_EXACT)


def sequential_sample(model: DppModel, k: int | None = None, seed: int = 0) -> SampleResult:
    """Exact chain sampler: k single-element draws, one adaptive round each."""
    model, k = _resolve_size(model, k)
    if model.n <= TABLE_MAX_N:
        return _sequential_runs_table(model, k, np.array([seed], dtype=np.uint64))[0]
    return _sequential_run_scalar(model, k, seed)


# --- batched symmetric sampler ---------------------------------------------


def _sym_batch_width(c_const: float, config: SamplerConfig, k_top: int) -> int:
    delta_round = config.eps / (2.0 * math.sqrt(max(1, k_top)))
    width = math.ceil(c_const * math.log(1.0 / delta_round))
    return max(1, min(width, config.max_proposals_per_round))


def _sym_schedule(k_i: int) -> int:
    return math.ceil(math.sqrt(k_i))


def batch_sample_symmetric(
    state: ConditionedState,
    t: int,
    config: SamplerConfig,
    *,
    meter: RoundMeter | None = None,
    batch_index: int = 0,
    k_top: int | None = None,
) -> tuple[int, ...]:
    """One accepted batch of t distinct elements of state.residual,
    distributed exactly as a uniform t-subset of a full sample.

    Proposals draw t elements i.i.d. proportional to the current marginals,
    and a distinct tuple T is accepted with probability
    P[T <= S] / (C prod_i p_i) with C = exp(t^2/k); negative correlation
    bounds that coin by 1/C.  Returns residual indices.
    """
    residual = state.residual
    if residual.ensemble.kind != KIND_SYMMETRIC:
        raise InvalidModel("batched acceptance bound needs a symmetric model")
    k_i = _remaining_size(residual)
    if not isinstance(residual.constraint, Cardinality):
        raise InvalidModel("symmetric batches need a cardinality constraint")
    if not 1 <= t <= k_i:
        raise InvalidModel(f"batch size {t} outside 1..{k_i}")
    if meter is None:
        meter = RoundMeter()
    if k_top is None:
        k_top = k_i
    c_const = math.exp(t * t / k_i)
    width = _sym_batch_width(c_const, config, k_top)
    p = marginal_vector_cached(residual)
    z = residual.z
    falling = float(math.perm(k_i, t))
    power = float(k_i) ** t
    key_e = rng.derive_key(config.seed, rng.D_BATCH_ELEM, batch_index)
    key_a = rng.derive_key(config.seed, rng.D_BATCH_ACC, batch_index)
    for wave in range(config.max_rounds_per_batch):
        evaluated = 0
        accepted: tuple[int, ...] | None = None
        for prop in range(width):
            kk = rng.fold(rng.fold(key_e, np.uint64(wave)), np.uint64(prop))
            u_slots = rng.u01(kk, np.arange(t, dtype=np.uint64))
            draws = rng.categorical(np.broadcast_to(p, (t, len(p))), u_slots)
            evaluated += 1
            if len(set(draws.tolist())) != t:
                continue
            tup = tuple(sorted(int(v) for v in draws))
            joint = count(residual, tup) / z
            prod_p = float(np.prod(p[draws]))
            ratio_spec = joint * power / (falling * c_const * prod_p)
            if ratio_spec > 1.0 + RATIO_SLACK:
                raise ProbabilityViolation(
                    f"batch ratio {ratio_spec!r} exceeds its acceptance bound"
                )
            coin = joint / (c_const * prod_p)
            u_acc = float(rng.u01(rng.fold(key_a, np.uint64(wave)), np.uint64(prop)))
            if u_acc < coin:
                accepted = tup
                break
        meter.note_round(width, evaluated)
        if accepted is not None:
            return accepted
    raise RoundBudgetExceeded(
        f"no batch of {t} accepted within {config.max_rounds_per_batch} waves of {width}"
    )


def batched_sample(
    model: DppModel,
    k: int | None,
    config: SamplerConfig,
    batch_step,
    schedule=None,
    status: str = STATUS_EXACT,
    eps: float | None = None,
) -> SampleResult:
    """Generic batch loop: pick sizes from the schedule, draw each batch with
    batch_step, condition, repeat until the size is exhausted."""
    model, k = _resolve_size(model, k)
    if schedule is None:
        schedule = _sym_schedule
    state = initial_state(model)
    meter = RoundMeter()
    k_i = k
    batch_index = 0
    while k_i > 0:
        t = schedule(k_i)
        try:
            picked = batch_step(
                state, t, config, meter=meter, batch_index=batch_index, k_top=k
            )
        except (RoundBudgetExceeded, BatchRejected):
            return SampleResult(
                sample=tuple(sorted(state.chosen)),
                meter=meter,
                status=STATUS_FAILED,
                eps=eps,
            )
        state = state.extend_many(picked)
        k_i -= t
        batch_index += 1
    return SampleResult(
        sample=tuple(sorted(state.chosen)), meter=meter, status=status, eps=eps
    )


def _batched_sym_runs_table(
    model: DppModel, k: int, seeds: np.ndarray, config: SamplerConfig
) -> list[SampleResult]:
    """Lockstep table-driven variant of the symmetric batch loop for many
    runs on one small model."""
    tab = _table_for(model)
    n = model.n
    counts = tab.counts
    bitvals = (1 << np.arange(n)).astype(np.int64)
    n_runs = len(seeds)
    seeds_u = np.asarray(seeds, dtype=np.uint64)
    base_e = rng.fold(seeds_u, np.uint64(rng.D_BATCH_ELEM))
    base_a = rng.fold(seeds_u, np.uint64(rng.D_BATCH_ACC))
    masks = np.zeros(n_runs, dtype=np.int64)
    failed = np.zeros(n_runs, dtype=bool)
    rounds = np.zeros(n_runs, dtype=np.int64)
    work = np.zeros(n_runs, dtype=np.int64)
    maxw = np.zeros(n_runs, dtype=np.int64)
    k_i = k
    batch_index = 0
    while k_i > 0:
        t = _sym_schedule(k_i)
        c_const = math.exp(t * t / k_i)
        width = _sym_batch_width(c_const, config, k)
        falling = float(math.perm(k_i, t))
        power = float(k_i) ** t
        base_counts = counts[masks]
        wts = counts[masks[:, None] | bitvals[None, :]].copy()
        wts[(masks[:, None] & bitvals[None, :]) != 0] = 0.0
        probs = wts / base_counts[:, None]
        key_e = rng.fold(base_e, np.uint64(batch_index))
        key_a = rng.fold(base_a, np.uint64(batch_index))
        found = failed.copy()
        accept_bits = np.zeros(n_runs, dtype=np.int64)
        for wave in range(config.max_rounds_per_batch):
            entered = ~found
            if not entered.any():
                break
            ke_wave = rng.fold(key_e, np.uint64(wave))
            ka_wave = rng.fold(key_a, np.uint64(wave))
            for prop in range(width):
                need = np.flatnonzero(~found)
                if need.size == 0:
                    break
                kk = rng.fold(ke_wave[need], np.uint64(prop))
                draws = np.empty((need.size, t), dtype=np.int64)
                for slot in range(t):
                    u = rng.u01(kk, np.uint64(slot))
                    draws[:, slot] = rng.categorical(probs[need], u)
                srt = np.sort(draws, axis=1)
                distinct = (
                    np.ones(need.size, dtype=bool)
                    if t == 1
                    else (np.diff(srt, axis=1) != 0).all(axis=1)
                )
                tbits = np.bitwise_or.reduce(bitvals[draws], axis=1)
                joint = counts[masks[need] | tbits] / base_counts[need]
                prod_p = np.prod(probs[need][np.arange(need.size)[:, None], draws], axis=1)
                with np.errstate(divide="ignore", invalid="ignore"):
                    ratio_spec = np.where(
                        distinct & (prod_p > 0.0),
                        joint * power / (falling * c_const * np.maximum(prod_p, 1e-300)),
                        0.0,
                    )
                if (ratio_spec > 1.0 + RATIO_SLACK).any():
                    raise ProbabilityViolation(
                        "batch ratio exceeds its acceptance bound"
                    )
                coin = np.where(
                    prod_p > 0.0, joint / (c_const * np.maximum(prod_p, 1e-300)), 0.0
                )
                u_acc = rng.u01(ka_wave[need], np.uint64(prop))
                ok = distinct & (u_acc < coin)
                work[need] += 1
                winners = need[ok]
                accept_bits[winners] = tbits[ok]
                found[winners] = True
            rounds[entered] += 1
            maxw[entered] = np.maximum(maxw[entered], width)
            if found.all():
                break
        newly_failed = ~found
        failed |= newly_failed
        good = found & ~failed
        masks[good] |= accept_bits[good]
        k_i -= t
        batch_index += 1
    results = []
    for r in range(n_runs):
        meter = RoundMeter(
            adaptive_rounds=int(rounds[r]),
            proposal_work=int(work[r]),
            max_width=int(maxw[r]),
        )
        results.append(
            SampleResult(
                sample=_decode_mask(int(masks[r]), n),
                meter=meter,
                status=STATUS_FAILED if failed[r] else STATUS_EXACT,
            )
        )
    return results


def sample_symmetric(
    model: DppModel, config: SamplerConfig, k: int | None = None
) -> SampleResult:
    """Batched symmetric sampler: exact, O(sqrt(k)) batches of size
    ceil(sqrt(k_i))."""
    model, k = _resolve_size(model, k)
    if model.ensemble.kind != KIND_SYMMETRIC:
        raise InvalidModel("batched acceptance bound needs a symmetric model")
    if model.n <= TABLE_MAX_N:
        return _batched_sym_runs_table(
            model, k, np.array([config.seed], dtype=np.uint64), config
        )[0]
    return batched_sample(model, k, config, batch_sample_symmetric)


# --- entropically independent batches on the isotropic subdivision ---------


@dataclass(frozen=True)
class IsotropicView:
    """Copy subdivision of a size-constrained model: element i splits into
    copies[i] copies of marginal p[i]/copies[i]; counting stays on the
    original model."""

    p: np.ndarray
    copies: np.ndarray
    u_size: int
    retained: np.ndarray
    k: int
    beta: float


def isotropic_transform(model: DppModel, beta: float) -> IsotropicView:
    if not 0.0 < beta < 1.0:
        raise InvalidModel(f"beta must be in (0,1), got {beta}")
    k = _remaining_size(model)
    n = model.n
    p = marginal_vector_cached(model)
    copies = np.ceil((n / (beta * k)) * p).astype(np.int64)
    u_size = int(copies.sum())
    retained = p >= math.sqrt(beta) * k / n - 1e-12
    return IsotropicView(
        p=p, copies=copies, u_size=u_size, retained=retained, k=k, beta=beta
    )


_PAIR_CACHE: dict = {}


def _pair_ratio_table(residual: DppModel) -> np.ndarray:
    """r[i, j] = marginal(j | {i}) * k / (p_j (k-1)): the second-slot factor
    of the proposal likelihood ratio for batch size 2."""
    key = (
        residual.ensemble.entries.tobytes(),
        residual.ensemble.kind,
        residual.constraint,
    )
    hit = _PAIR_CACHE.get(key)
    if hit is not None:
        return hit
    n = residual.n
    k = _remaining_size(residual)
    p = marginal_vector_cached(residual)
    table = np.zeros((n, n))
    for i in range(n):
        base = count(residual, (i,))
        if base <= 0.0:
            continue
        for j in range(n):
            if j == i or p[j] <= 0.0:
                continue
            table[i, j] = (count(residual, (i, j)) / base) * k / (p[j] * (k - 1))
    if len(_PAIR_CACHE) >= 256:
        _PAIR_CACHE.clear()
    table.flags.writeable = False
    _PAIR_CACHE[key] = table
    return table


_CHAIN_CACHE: dict = {}


def _chain_memo(residual: DppModel) -> dict:
    """Per-residual memo of chain likelihood values, shared across calls."""
    key = (
        residual.ensemble.entries.tobytes(),
        residual.ensemble.kind,
        residual.constraint,
    )
    hit = _CHAIN_CACHE.get(key)
    if hit is None:
        if len(_CHAIN_CACHE) >= 256:
            _CHAIN_CACHE.clear()
        hit = {}
        _CHAIN_CACHE[key] = hit
    return hit


def _chain_likelihood(residual: DppModel, draws: tuple[int, ...], p: np.ndarray, k: int) -> float:
    """L(tuple) = prod_j marginal(i_j | prefix) * k / (p_{i_j} (k-j+1))."""
    value = 1.0
    prefix: tuple[int, ...] = ()
    base = residual.z
    for j, e in enumerate(draws):
        joint = count(residual, tuple(sorted(prefix + (e,))))
        cond_marg = joint / base
        denom = p[e] * (k - j)
        if denom <= 0.0:
            return 0.0
        value *= cond_marg * k / denom
        prefix = prefix + (e,)
        base = joint
        if base <= 0.0:
            return 0.0
    return value


def batch_sample_ei(
    state: ConditionedState,
    t: int,
    config: SamplerConfig,
    *,
    meter: RoundMeter | None = None,
    batch_index: int = 0,
    k_top: int | None = None,
    eps_step: float | None = None,
) -> tuple[int, ...]:
    """One t-element batch via modified rejection sampling on the isotropic
    subdivision: i.i.d. copy proposals, likelihood-ratio threshold
    |U|^B, one adaptive round of fan-out.  Returns residual indices."""
    residual = state.residual
    k_i = _remaining_size(residual)
    if not 1 <= t <= k_i:
        raise InvalidModel(f"batch size {t} outside 1..{k_i}")
    if meter is None:
        meter = RoundMeter()
    if k_top is None:
        k_top = k_i
    if eps_step is None:
        eps_step = config.eps / max(1, k_top)
    beta = config.beta if config.beta is not None else (eps_step / (32.0 * k_i)) ** 2
    iso = isotropic_transform(residual, beta)
    p = iso.p
    threshold = float(iso.u_size) ** config.ratio_exponent
    if math.isfinite(threshold):
        budget = math.ceil(threshold * math.log(1.0 / eps_step))
    else:
        budget = config.max_proposals_per_round
    budget = max(1, min(budget, config.max_proposals_per_round))
    key_e = rng.derive_key(config.seed, rng.D_BATCH_ELEM, batch_index)
    key_a = rng.derive_key(config.seed, rng.D_BATCH_ACC, batch_index)
    pair = _pair_ratio_table(residual) if t == 2 else None
    evaluated = 0
    accepted: tuple[int, ...] | None = None
    chunk = config.chunk_size
    memo = _chain_memo(residual) if t >= 3 else {}
    for lo in range(0, budget, chunk):
        hi = min(lo + chunk, budget)
        idx = np.arange(lo, hi, dtype=np.uint64)
        words = idx[:, None] * np.uint64(t) + np.arange(t, dtype=np.uint64)[None, :]
        u_e = rng.u01(key_e, words)
        draws = np.empty((len(idx), t), dtype=np.int64)
        for slot in range(t):
            draws[:, slot] = rng.categorical(
                np.broadcast_to(p, (len(idx), len(p))), u_e[:, slot]
            )
        u_acc = rng.u01(key_a, idx)
        ok_ret = iso.retained[draws].all(axis=1)
        if t == 1:
            distinct = np.ones(len(idx), dtype=bool)
            like = np.ones(len(idx))
        elif t == 2:
            distinct = draws[:, 0] != draws[:, 1]
            like = np.where(distinct, pair[draws[:, 0], draws[:, 1]], 0.0)
        else:
            srt = np.sort(draws, axis=1)
            distinct = (np.diff(srt, axis=1) != 0).all(axis=1)
            like = np.zeros(len(idx))
            for row in np.flatnonzero(distinct & ok_ret):
                tup = tuple(int(v) for v in draws[row])
                keyed = tup
                if keyed not in memo:
                    memo[keyed] = _chain_likelihood(residual, tup, p, k_i)
                like[row] = memo[keyed]
        inside = like <= threshold
        accept = ok_ret & distinct & inside & (u_acc * threshold < like)
        winners = np.flatnonzero(accept)
        if winners.size:
            w = int(winners[0])
            evaluated += w + 1
            accepted = tuple(sorted(int(v) for v in draws[w]))
            break
        evaluated += len(idx)
    meter.note_round(budget, evaluated)
    if accepted is None:
        raise BatchRejected(f"no batch of {t} accepted within {budget} proposals")
    return accepted


def _ei_schedule(c: float):
    exponent = 0.5 - c
    return lambda k_i: max(1, math.floor(k_i**exponent)) if exponent > 0 else 1


def sample_ei(
    model: DppModel, config: SamplerConfig, k: int | None = None
) -> SampleResult:
    """Approximate sampler for entropically independent models (nonsymmetric
    PSD and block-quota models): batched loop with per-step TV budget
    eps/k."""
    if model.constraint is None and k is None:
        return sample_dpp_via_cardinality(model, config, inner=sample_ei)
    model, k = _resolve_size(model, k)
    if k == 0:
        return SampleResult(
            sample=(), meter=RoundMeter(), status=STATUS_APPROX, eps=config.eps
        )
    return batched_sample(
        model,
        k,
        config,
        batch_sample_ei,
        schedule=_ei_schedule(config.c),
        status=STATUS_APPROX,
        eps=config.eps,
    )


# --- one-step Bernoulli sampler and the eigenvalue filter loop -------------


def _one_step_core(
    ensemble: np.ndarray,
    kernel: np.ndarray,
    eps: float,
    seed: int,
    config: SamplerConfig,
    meter: RoundMeter,
    lam: float | None = None,
) -> tuple[int, ...] | None:
    """Modified rejection sampling against the independent Bernoulli(K_ii)
    proposal; returns element indices or None on budget exhaustion."""
    n = kernel.shape[0]
    if n == 0:
        meter.note_round(1, 1)
        return ()
    diag = np.clip(np.diag(kernel), 0.0, 1.0 - 1e-15)
    if lam is None:
        lam = float(np.linalg.eigvalsh(0.5 * (kernel + kernel.T)).max())
    s_eff = min(int(SIZE_CUTOFF_CONST * math.sqrt(n * math.log(1.0 / eps))), n)
    cap_spec = math.exp(SIZE_CUTOFF_CONST * math.sqrt(math.log(1.0 / eps)))
    cap_inst = (1.0 - min(lam, 1.0 - 1e-12)) ** (-s_eff)
    cap = min(cap_spec, cap_inst)
    sign, logdet_imk = np.linalg.slogdet(np.eye(n) - kernel)
    if sign <= 0:
        raise InvalidModel("marginal kernel has an eigenvalue at or above one")
    log_one_minus = np.log1p(-diag)
    base_log = logdet_imk - float(log_one_minus.sum())
    with np.errstate(divide="ignore"):
        log_odds = np.where(diag > 0.0, np.log(diag) - log_one_minus, -np.inf)
    width = max(1, min(math.ceil(cap * math.log(1.0 / eps)), config.max_proposals_per_round))
    elems = np.arange(n, dtype=np.uint64)
    # acceptance sits near 1/cap, so modest chunks usually stop early; the
    # outcome is chunk-size independent because proposal seeds are global
    chunk = 64 * config.workers
    for wave in range(config.max_rounds_per_batch):
        key_p = rng.derive_key(seed, rng.D_BERN, wave)
        key_a = rng.derive_key(seed, rng.D_BERN_ACC, wave)
        evaluated = 0
        winner: tuple[int, ...] | None = None
        for lo in range(0, width, chunk):
            hi = min(lo + chunk, width)
            idx = np.arange(lo, hi, dtype=np.uint64)
            keys = rng.fold(key_p, idx)
            u = rng.u01(keys[:, None], elems[None, :])
            chosen = u < diag[None, :]
            sizes = chosen.sum(axis=1)
            log_ratio = np.full(len(idx), -np.inf)
            feasible = sizes <= s_eff
            for s in np.unique(sizes[feasible]):
                rows = np.flatnonzero(feasible & (sizes == s))
                if s == 0:
                    log_ratio[rows] = base_log
                    continue
                order = np.argsort(~chosen[rows], axis=1, kind="stable")[:, :s]
                odds = log_odds[order].sum(axis=1)
                if s == 1:
                    dets = ensemble[order[:, 0], order[:, 0]]
                elif s == 2:
                    a = ensemble[order[:, 0], order[:, 0]]
                    d = ensemble[order[:, 1], order[:, 1]]
                    b = ensemble[order[:, 0], order[:, 1]]
                    c = ensemble[order[:, 1], order[:, 0]]
                    dets = a * d - b * c
                else:
                    minors = ensemble[order[:, :, None], order[:, None, :]]
                    dets = np.linalg.det(minors)
                with np.errstate(divide="ignore", invalid="ignore"):
                    logd = np.where(dets > 0.0, np.log(np.maximum(dets, 1e-300)), -np.inf)
                log_ratio[rows] = base_log + logd - odds
            ratio = np.exp(np.minimum(log_ratio, 700.0))
            inside = ratio <= cap
            u_acc = rng.u01(key_a, idx)
            accept = feasible & inside & (u_acc * cap < ratio)
            winners = np.flatnonzero(accept)
            if winners.size:
                w = int(winners[0])
                evaluated += w + 1
                winner = tuple(int(v) for v in np.flatnonzero(chosen[w]))
                break
            evaluated += len(idx)
        meter.note_round(width, evaluated)
        if winner is not None:
            return winner
    return None


def one_step_bernoulli_sample(
    model: DppModel,
    eps: float | None = None,
    config: SamplerConfig | None = None,
) -> SampleResult:
    """Single-round approximate sampler for kernels with
    lambda_max <= 1/sqrt(n): Bernoulli proposals filtered through a bounded
    likelihood ratio, with an oversize cutoff."""
    if config is None:
        config = SamplerConfig()
    if eps is None:
        eps = config.eps
    if model.constraint is not None:
        raise InvalidModel("the one-step sampler applies to unconstrained models")
    if model.ensemble.kind != KIND_SYMMETRIC:
        raise InvalidModel("the one-step sampler needs a symmetric model")
    kernel = model.kernel.entries
    n = model.n
    lam = float(np.linalg.eigvalsh(kernel).max()) if n else 0.0
    if n and lam > 1.0 / math.sqrt(n) + PSD_TOL:
        raise InvalidModel(
            f"largest kernel eigenvalue {lam:.4f} exceeds n^-1/2 = {1.0 / math.sqrt(n):.4f}"
        )
    meter = RoundMeter()
    picked = _one_step_core(
        model.ensemble.entries, kernel, eps, config.seed, config, meter
    )
    if picked is None:
        return SampleResult(sample=(), meter=meter, status=STATUS_FAILED, eps=eps)
    return SampleResult(sample=picked, meter=meter, status=STATUS_APPROX, eps=eps)


def filtered_sample(model: DppModel, config: SamplerConfig) -> SampleResult:
    """Approximate sampler for any symmetric plain DPP: geometric filtering
    splits the sample across R rounds of eigenvalue-damped one-step draws."""
    if model.constraint is not None:
        raise InvalidModel("the filter loop applies to unconstrained models")
    if model.ensemble.kind != KIND_SYMMETRIC:
        raise InvalidModel("the filter loop needs a symmetric model")
    n = model.n
    meter = RoundMeter()
    kernel0 = model.kernel.entries
    lam0 = float(np.linalg.eigvalsh(kernel0).max()) if n else 0.0
    if lam0 <= 0.0:
        meter.note_round(1, 1)
        return SampleResult(sample=(), meter=meter, status=STATUS_APPROX, eps=config.eps)
    alpha = 1.0 / (lam0 * math.sqrt(n))
    if alpha >= 1.0 - 1e-12:
        result = one_step_bernoulli_sample(model, eps=config.eps, config=config)
        return result
    rounds = math.ceil(FILTER_ROUNDS_CONST * (1.0 / alpha) * math.log(n / config.eps))
    eps_step = config.eps / (2.0 * rounds)
    alive = list(range(n))
    ens = model.ensemble
    picked: list[int] = []
    for step in range(rounds):
        if not alive:
            break
        kern = _kernel_of_ensemble(ens.entries)
        lam_i = float(np.linalg.eigvalsh(kern).max())
        if lam_i > lam0 + 1e-8:
            raise ProbabilityViolation(
                f"filter iteration {step} raised the top eigenvalue to {lam_i!r}"
            )
        sub_seed = int(rng.derive_key(config.seed, rng.D_TRIAL, step))
        got = _one_step_core(
            _ensemble_of_kernel(alpha * kern),
            alpha * kern,
            eps_step,
            sub_seed,
            config,
            meter,
            lam=alpha * lam_i,
        )
        if got is None:
            return SampleResult(
                sample=tuple(sorted(picked)),
                meter=meter,
                status=STATUS_FAILED,
                eps=config.eps,
            )
        if got:
            picked.extend(alive[i] for i in got)
            # Scalar factors pass through the Schur complement, so condition on
            # the unscaled block first: (1-a)^|T| would otherwise sink det(L_TT)
            # under the singularity tolerance for moderate |T|.
            ens = schur_complement(ens, got)
            keep = [i for i in range(len(alive)) if i not in set(got)]
            alive = [alive[i] for i in keep]
        ens = EnsembleMatrix._trusted((1.0 - alpha) * ens.entries, ens.kind)
    return SampleResult(
        sample=tuple(sorted(picked)), meter=meter, status=STATUS_APPROX, eps=config.eps
    )


def _kernel_of_ensemble(entries: np.ndarray) -> np.ndarray:
    """K = I - (I+L)^{-1} without building model objects."""
    n = entries.shape[0]
    return np.eye(n) - np.linalg.inv(np.eye(n) + entries)


def _ensemble_of_kernel(kern: np.ndarray) -> np.ndarray:
    """L = K(I-K)^{-1}; the filter loop keeps all eigenvalues well below 1."""
    n = kern.shape[0]
    return np.linalg.solve((np.eye(n) - kern).T, kern.T).T


_SIZE_CACHE: dict[str, np.ndarray] = {}


def _size_distribution_cached(model: DppModel) -> np.ndarray:
    key = model_digest(model)
    hit = _SIZE_CACHE.get(key)
    if hit is None:
        if len(_SIZE_CACHE) >= 256:
            _SIZE_CACHE.clear()
        hit = size_distribution(model)
        hit.flags.writeable = False
        _SIZE_CACHE[key] = hit
    return hit


def sample_dpp_via_cardinality(
    model: DppModel, config: SamplerConfig, inner=None
) -> SampleResult:
    """Plain-DPP sampler: draw the size from the minor-sum law, then run a
    fixed-size sampler; exact whenever the inner sampler is exact."""
    if model.constraint is not None:
        raise InvalidModel("the size-reduction applies to unconstrained models")
    if inner is None:
        inner = (
            sample_symmetric
            if model.ensemble.kind == KIND_SYMMETRIC
            else sample_ei
        )
    sizes = _size_distribution_cached(model)
    u = rng.u01(rng.derive_key(config.seed, rng.D_SIZE), np.uint64(0))
    j = int(rng.categorical(sizes[None, :], np.atleast_1d(u))[0])
    meter = RoundMeter()
    meter.note_round(1, 1)
    if j == 0:
        return SampleResult(sample=(), meter=meter, status=STATUS_EXACT)
    sub_model = DppModel(ensemble=model.ensemble, constraint=Cardinality(j))
    sub_seed = int(rng.derive_key(config.seed, rng.D_SIZE, 1))
    result = inner(sub_model, replace(config, seed=sub_seed))
    meter.absorb(result.meter)
    return SampleResult(
        sample=result.sample, meter=meter, status=result.status, eps=result.eps
    )


# --- multi-run driver -------------------------------------------------------


def choose_sampler(model: DppModel) -> str:
    """Dispatch by applicability: symmetric fixed-size models take the exact
    batched path; symmetric plain models filter or reduce through the size
    law, whichever the eigenvalue bound favors; everything else runs the
    entropically independent sampler."""
    symmetric = model.ensemble.kind == KIND_SYMMETRIC
    if symmetric and isinstance(model.constraint, Cardinality):
        return "batched-sym"
    if symmetric and model.constraint is None:
        kern = model.kernel.entries
        lam = float(np.linalg.eigvalsh(kern).max()) if model.n else 0.0
        trace = float(np.trace(kern))
        if lam * math.sqrt(model.n) <= math.sqrt(max(trace, 1e-300)):
            return "filtered"
        return "batched-sym"
    return "ei"


def _via_cardinality_many(
    model: DppModel, seeds: np.ndarray, config: SamplerConfig, inner_name: str
) -> list[SampleResult]:
    """Grouped size-reduction: draw all sizes at once, then run each size
    group through the fixed-size path."""
    sizes = _size_distribution_cached(model)
    keys = rng.fold(np.asarray(seeds, dtype=np.uint64), np.uint64(rng.D_SIZE))
    u = rng.u01(keys, np.uint64(0))
    drawn = rng.categorical(np.broadcast_to(sizes, (len(seeds), len(sizes))), u)
    sub_seeds = rng.fold(keys, np.uint64(1))
    results: list[SampleResult | None] = [None] * len(seeds)
    for j in np.unique(drawn):
        where = np.flatnonzero(drawn == j)
        if j == 0:
            for r in where:
                meter = RoundMeter()
                meter.note_round(1, 1)
                results[r] = SampleResult(sample=(), meter=meter, status=STATUS_EXACT)
            continue
        sub_model = DppModel(ensemble=model.ensemble, constraint=Cardinality(int(j)))
        group = sample_many(
            sub_model, inner_name, len(where), config, run_seeds=sub_seeds[where]
        )
        for r, res in zip(where, group):
            meter = RoundMeter()
            meter.note_round(1, 1)
            meter.absorb(res.meter)
            results[r] = SampleResult(
                sample=res.sample, meter=meter, status=res.status, eps=res.eps
            )
    return [r for r in results if r is not None]


def sample_many(
    model: DppModel,
    sampler: str,
    n_runs: int,
    config: SamplerConfig,
    run_seeds: np.ndarray | None = None,
) -> list[SampleResult]:
    """Run a named sampler n_runs times with per-run derived seeds.

    Small models go through lockstep table cores for the exact samplers;
    everything else loops the scalar paths.  The distribution is identical
    either way, and the mode depends only on the model, so repeated
    invocations stay byte-for-byte reproducible.
    """
    if run_seeds is None:
        run_seeds = rng.run_seeds(config.seed, n_runs)
    if sampler == "auto":
        sampler = choose_sampler(model)
    if sampler == "sequential":
        if model.constraint is None:
            return _via_cardinality_many(model, run_seeds, config, "sequential")
        model2, k = _resolve_size(model, None)
        if model2.n <= TABLE_MAX_N:
            return _sequential_runs_table(model2, k, run_seeds)
        return [
            _sequential_run_scalar(model2, k, int(s)) for s in run_seeds
        ]
    if sampler == "batched-sym":
        if model.ensemble.kind != KIND_SYMMETRIC:
            raise InvalidModel("batched acceptance bound needs a symmetric model")
        if model.constraint is None:
            return _via_cardinality_many(model, run_seeds, config, "batched-sym")
        if not isinstance(model.constraint, Cardinality):
            raise InvalidModel("symmetric batches need a cardinality constraint")
        k = model.constraint.k
        if model.n <= TABLE_MAX_N:
            return _batched_sym_runs_table(model, k, run_seeds, config)
        return [
            batched_sample(
                model, k, replace(config, seed=int(s)), batch_sample_symmetric
            )
            for s in run_seeds
        ]
    if sampler == "ei":
        return [
            sample_ei(model, replace(config, seed=int(s))) for s in run_seeds
        ]
    if sampler == "filtered":
        return [
            filtered_sample(model, replace(config, seed=int(s))) for s in run_seeds
        ]
    raise InvalidModel(f"unknown sampler {sampler!r}")
