"""Sequential and batched-symmetric samplers: distribution checks against
brute-force enumeration, round accounting, determinism, and budget failures."""
from __future__ import annotations

import math

import numpy as np
import pytest

from detsample import (
    Cardinality,
    DppModel,
    EnsembleMatrix,
    InvalidModel,
    Partition,
    RoundBudgetExceeded,
    SamplerConfig,
    batch_sample_symmetric,
    brute_force_distribution,
    choose_sampler,
    empirical_distribution,
    initial_state,
    marginal_vector,
    sample_dpp_via_cardinality,
    sample_many,
    sample_symmetric,
    sequential_sample,
    statistical_tolerance,
    tv_distance,
)
from detsample.samplers import (
    STATUS_EXACT,
    STATUS_FAILED,
    _batched_sym_runs_table,
    _sequential_run_scalar,
    _sequential_runs_table,
)

from conftest import random_npsd, random_psd


def _model(entries, constraint=None):
    return DppModel(ensemble=EnsembleMatrix.from_array(entries), constraint=constraint)


def _tv_of_runs(model, results, expected=None):
    ok = [r.sample for r in results if r.status != STATUS_FAILED]
    if expected is None:
        expected = brute_force_distribution(model)
    return tv_distance(empirical_distribution(ok), expected), len(ok)


# --- sequential -------------------------------------------------------------


def test_sequential_identity_uniform():
    model = _model(np.eye(4), Cardinality(2))
    runs = sample_many(model, "sequential", 6000, SamplerConfig(seed=1))
    tv, n_ok = _tv_of_runs(model, runs)
    assert n_ok == 6000
    assert tv <= statistical_tolerance(6, 6000)
    for r in runs[:10]:
        assert r.status == STATUS_EXACT
        assert r.meter.adaptive_rounds == 2
        assert r.meter.max_width == 4
        assert r.meter.proposal_work == 4 + 3


@pytest.mark.parametrize(
    "constraint",
    [
        Cardinality(3),
        None,
        Partition(blocks=((0, 1, 2), (3, 4, 5)), quotas=(1, 2)),
        Partition(blocks=((0, 3), (1, 4), (2, 5)), quotas=(1, 1, 0)),
    ],
)
def test_sequential_matches_brute_symmetric(constraint):
    model = _model(random_psd(6, seed=10), constraint)
    if constraint is None:
        runs = sample_many(model, "sequential", 5000, SamplerConfig(seed=2))
    else:
        runs = sample_many(model, "sequential", 5000, SamplerConfig(seed=2))
    expected = brute_force_distribution(model)
    tv, n_ok = _tv_of_runs(model, runs, expected)
    assert n_ok == 5000
    assert tv <= statistical_tolerance(len(expected.support), 5000)


def test_sequential_matches_brute_nonsymmetric():
    model = _model(random_npsd(5, seed=3), Cardinality(2))
    runs = sample_many(model, "sequential", 5000, SamplerConfig(seed=4))
    expected = brute_force_distribution(model)
    tv, _ = _tv_of_runs(model, runs, expected)
    assert tv <= statistical_tolerance(len(expected.support), 5000)


def test_sequential_scalar_and_table_paths_agree():
    entries = random_psd(6, seed=11)
    model = _model(entries, Cardinality(3))
    seeds = np.arange(100, 600, dtype=np.uint64)
    table = _sequential_runs_table(model, 3, seeds)
    for s, via_table in zip(seeds, table):
        scalar = _sequential_run_scalar(model, 3, int(s))
        assert scalar.sample == via_table.sample
        assert scalar.meter == via_table.meter


def test_sequential_scalar_marginals_large_ground_set():
    # n above the table cutoff exercises the conditioned-model chain
    entries = random_psd(17, seed=5, scale=0.8)
    model = _model(entries, Cardinality(2))
    runs = sample_many(model, "sequential", 4000, SamplerConfig(seed=6))
    hits = np.zeros(17)
    for r in runs:
        assert r.status == STATUS_EXACT
        assert r.meter.adaptive_rounds == 2
        for i in r.sample:
            hits[i] += 1
    freq = hits / 4000
    p = marginal_vector(model)
    sigma = np.sqrt(p * (1 - p) / 4000)
    assert (np.abs(freq - p) <= 5 * sigma + 1e-3).all()


def test_sequential_determinism_and_seed_sensitivity():
    model = _model(random_psd(6, seed=7), Cardinality(2))
    a = sequential_sample(model, seed=42)
    b = sequential_sample(model, seed=42)
    assert a == b
    others = {sequential_sample(model, seed=s).sample for s in range(30)}
    assert len(others) > 1


def test_sequential_size_conflict():
    model = _model(np.eye(4), Cardinality(2))
    with pytest.raises(InvalidModel):
        sequential_sample(model, k=3)
    with pytest.raises(InvalidModel):
        sequential_sample(_model(np.eye(4)))


# --- batched symmetric ------------------------------------------------------


@pytest.mark.parametrize("seed,k", [(20, 2), (21, 3), (22, 4)])
def test_batched_sym_matches_brute(seed, k):
    model = _model(random_psd(7, seed=seed), Cardinality(k))
    runs = sample_many(model, "batched-sym", 5000, SamplerConfig(seed=seed, eps=1e-3))
    expected = brute_force_distribution(model)
    tv, n_ok = _tv_of_runs(model, runs, expected)
    assert n_ok == 5000, "no run should fail at this width"
    assert tv <= statistical_tolerance(len(expected.support), 5000)


def test_batched_sym_round_bound():
    model = _model(random_psd(12, seed=23), Cardinality(6))
    runs = sample_many(model, "batched-sym", 300, SamplerConfig(seed=9, eps=1e-3))
    bound = 2 * math.ceil(math.sqrt(6)) + 1
    for r in runs:
        assert r.status == STATUS_EXACT
        # batch sizes 3, 2, 1: one round per batch when every wave accepts
        assert r.meter.adaptive_rounds <= bound
        assert r.meter.proposal_work <= r.meter.adaptive_rounds * r.meter.max_width


def test_batched_sym_schedule_of_sixteen():
    # sqrt schedule splits 16 into 4 + 4 + 3 + 3 + 2: five batches
    model = _model(np.eye(16), Cardinality(16))
    runs = sample_many(model, "batched-sym", 40, SamplerConfig(seed=3, eps=1e-3))
    for r in runs:
        assert r.status == STATUS_EXACT
        assert r.sample == tuple(range(16))
        assert r.meter.adaptive_rounds == 5


def test_batched_sym_scalar_and_table_paths_agree():
    entries = random_psd(6, seed=24)
    model = _model(entries, Cardinality(3))
    config = SamplerConfig(seed=0, eps=1e-3)
    seeds = np.arange(7000, 7200, dtype=np.uint64)
    table = _batched_sym_runs_table(model, 3, seeds, config)
    from detsample.samplers import batched_sample
    from dataclasses import replace

    for s, via_table in zip(seeds, table):
        scalar = batched_sample(
            model, 3, replace(config, seed=int(s)), batch_sample_symmetric
        )
        assert scalar.sample == via_table.sample
        assert scalar.status == via_table.status
        assert scalar.meter == via_table.meter


def test_batched_sym_budget_exhaustion_fails():
    model = _model(random_psd(8, seed=25), Cardinality(4))
    config = SamplerConfig(
        seed=0, eps=1e-3, max_proposals_per_round=1, max_rounds_per_batch=1
    )
    runs = sample_many(model, "batched-sym", 200, config)
    failed = [r for r in runs if r.status == STATUS_FAILED]
    assert failed, "width-one waves must fail sometimes"
    for r in failed:
        assert len(r.sample) < 4
    succeeded = [r for r in runs if r.status == STATUS_EXACT]
    for r in succeeded:
        assert len(r.sample) == 4


def test_batch_step_raises_on_exhaustion():
    model = _model(random_psd(8, seed=26), Cardinality(4))
    config = SamplerConfig(
        seed=0, eps=1e-3, max_proposals_per_round=1, max_rounds_per_batch=1
    )
    state = initial_state(model)
    raised = 0
    for s in range(40):
        from dataclasses import replace

        try:
            batch_sample_symmetric(state, 2, replace(config, seed=s))
        except RoundBudgetExceeded:
            raised += 1
    assert 0 < raised < 40


def test_batched_sym_rejects_nonsymmetric():
    model = _model(random_npsd(5, seed=27), Cardinality(2))
    with pytest.raises(InvalidModel):
        sample_symmetric(model, SamplerConfig(seed=0))


def test_batched_sym_partition_rejected():
    model = _model(
        random_psd(4, seed=28),
        Partition(blocks=((0, 1), (2, 3)), quotas=(1, 1)),
    )
    with pytest.raises(InvalidModel):
        sample_many(model, "batched-sym", 2, SamplerConfig(seed=0))


# --- plain models through the size reduction --------------------------------


def test_via_cardinality_matches_brute():
    model = _model(random_psd(6, seed=30, scale=0.7))
    runs = sample_many(model, "batched-sym", 6000, SamplerConfig(seed=12, eps=1e-3))
    expected = brute_force_distribution(model)
    tv, n_ok = _tv_of_runs(model, runs, expected)
    assert n_ok == 6000
    assert tv <= statistical_tolerance(len(expected.support), 6000)
    assert all(r.status == STATUS_EXACT for r in runs)
    # the size draw is its own adaptive round
    assert all(r.meter.adaptive_rounds >= 1 for r in runs)


def test_via_cardinality_scalar_matches_grouped():
    model = _model(random_psd(6, seed=31, scale=0.7))
    config = SamplerConfig(seed=0, eps=1e-3)
    seeds = np.arange(900, 950, dtype=np.uint64)
    grouped = sample_many(model, "batched-sym", len(seeds), config, run_seeds=seeds)
    from dataclasses import replace

    for s, via_group in zip(seeds, grouped):
        scalar = sample_dpp_via_cardinality(model, replace(config, seed=int(s)))
        assert scalar.sample == via_group.sample
        assert scalar.meter.adaptive_rounds == via_group.meter.adaptive_rounds


def test_via_cardinality_empty_size():
    # tiny matrix: P[empty] = 1/det(I+L) is large, so empties must appear
    model = _model(0.1 * np.eye(3))
    runs = sample_many(model, "sequential", 400, SamplerConfig(seed=8))
    assert any(r.sample == () for r in runs)
    assert all(r.status == STATUS_EXACT for r in runs)


# --- dispatch and config ----------------------------------------------------


def test_choose_sampler_routes():
    sym_card = _model(random_psd(5, seed=40), Cardinality(2))
    assert choose_sampler(sym_card) == "batched-sym"
    nonsym = _model(random_npsd(5, seed=41), Cardinality(2))
    assert choose_sampler(nonsym) == "ei"
    part = _model(
        random_psd(4, seed=42), Partition(blocks=((0, 1), (2, 3)), quotas=(1, 1))
    )
    assert choose_sampler(part) == "ei"
    # flat spectrum: lambda * sqrt(n) < sqrt(trace) favors the filter loop
    flat = _model(0.25 * np.eye(9))
    assert choose_sampler(flat) == "filtered"
    # one concentrated direction flips the inequality
    spike = np.full((9, 9), 0.9) + 0.01 * np.eye(9)
    assert choose_sampler(_model(spike)) == "batched-sym"


def test_sample_many_auto_equals_explicit():
    model = _model(random_psd(6, seed=43), Cardinality(3))
    config = SamplerConfig(seed=77, eps=1e-3)
    auto = sample_many(model, "auto", 50, config)
    explicit = sample_many(model, "batched-sym", 50, config)
    assert [r.sample for r in auto] == [r.sample for r in explicit]


def test_sample_many_unknown_name():
    model = _model(np.eye(3), Cardinality(1))
    with pytest.raises(InvalidModel):
        sample_many(model, "nope", 1, SamplerConfig(seed=0))


def test_sample_many_repeatable():
    model = _model(random_psd(6, seed=44), Cardinality(2))
    config = SamplerConfig(seed=5, eps=1e-3)
    a = sample_many(model, "batched-sym", 64, config)
    b = sample_many(model, "batched-sym", 64, config)
    assert [r.sample for r in a] == [r.sample for r in b]
    shifted = sample_many(model, "batched-sym", 64, SamplerConfig(seed=6, eps=1e-3))
    assert [r.sample for r in a] != [r.sample for r in shifted]


@pytest.mark.parametrize(
    "kwargs",
    [
        {"eps": 0.0},
        {"eps": 1.0},
        {"c": 0.0},
        {"b": 0.5},
        {"beta": 1.5},
        {"max_proposals_per_round": 0},
        {"max_rounds_per_batch": 0},
        {"workers": 0},
    ],
)
def test_sampler_config_validation(kwargs):
    with pytest.raises(InvalidModel):
        SamplerConfig(**kwargs)


def test_sampler_config_ratio_exponent_default():
    assert SamplerConfig(c=0.1).ratio_exponent == pytest.approx(30.0)
    assert SamplerConfig(b=2.0).ratio_exponent == 2.0
