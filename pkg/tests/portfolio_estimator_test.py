import math

import numpy as np
import pytest

from src.portfolio_estimator import (
    PairDataset,
    SyntheticChannel,
    build_estimator_model,
    doubling_rate,
    estimator_probabilities,
    generate_pairs,
    kl_divergence,
    kl_report,
    transition_experiment,
    sample_channel,
    train_estimator,
)


def test_sample_channel_is_reproducible():
    a = sample_channel(8, seed=3)
    assert a == sample_channel(8, seed=3)
    assert a != sample_channel(8, seed=4)


def test_sample_channel_mean():
    probs = sample_channel(10_000, seed=1).as_array()
    assert abs(probs.mean() - 0.5) < 4 * math.sqrt(1 / 12 / 10_000)
    assert np.all((probs > 0) & (probs < 1))


def test_sample_channel_single_symbol():
    ch = sample_channel(1, seed=0)
    assert ch.K == 1 and 0 < ch.probs[0] < 1
    with pytest.raises(ValueError):
        sample_channel(0, seed=0)


@pytest.mark.parametrize("p, bit", [(1.0, 1), (0.0, 0)])
def test_deterministic_channels(p, bit):
    data = generate_pairs(SyntheticChannel(3, (p, p, p)), 1000, seed=2)
    assert np.all(data.bits == bit)


def test_pair_frequencies_concentrate():
    n = 100_000
    data = generate_pairs(SyntheticChannel(2, (0.3, 0.8)), n, seed=5)
    assert data.N == n
    freq = data.empirical_frequencies()
    counts = np.bincount(data.symbols, minlength=2)
    for i, p in enumerate((0.3, 0.8)):
        assert abs(freq[i] - p) < 4 * math.sqrt(p * (1 - p) / counts[i])


def test_pairs_do_not_depend_on_worker_count():
    ch = SyntheticChannel(4, (0.1, 0.4, 0.6, 0.9))
    a = generate_pairs(ch, 200_000, seed=1, workers=1)
    b = generate_pairs(ch, 200_000, seed=1, workers=4)
    assert np.array_equal(a.symbols, b.symbols) and np.array_equal(a.bits, b.bits)


def test_generate_pairs_rejects_empty():
    with pytest.raises(ValueError):
        generate_pairs(SyntheticChannel(1, (0.5,)), 0, seed=0)


def test_estimator_shape():
    model = build_estimator_model(5, init_seed=1)
    q = estimator_probabilities(model)
    assert q.shape == (5,)
    assert np.all((q > 0) & (q < 1))


def test_estimator_matches_empirical_frequencies():
    data = generate_pairs(SyntheticChannel(3, (0.2, 0.5, 0.9)), 3000, seed=11)
    q = train_estimator(data, epochs=3000, batch_size=data.N, seed=1)
    assert np.max(np.abs(q - data.empirical_frequencies())) < 0.02


def test_estimator_on_fair_channel():
    data = generate_pairs(SyntheticChannel(4, (0.5,) * 4), 4000, seed=12)
    q = train_estimator(data, epochs=2000, batch_size=data.N, seed=2)
    assert np.all((q >= 0.45) & (q <= 0.55))


def test_estimator_on_deterministic_channel():
    data = generate_pairs(SyntheticChannel(2, (0.0, 1.0)), 2000, seed=13)
    q = train_estimator(data, epochs=2000, batch_size=data.N, seed=3)
    assert q[0] < 0.05 and q[1] > 0.95


def test_estimator_rejects_missing_symbol():
    data = PairDataset(3, np.array([0, 1, 0]), np.array([1, 0, 1], dtype=np.uint8))
    with pytest.raises(ValueError):
        train_estimator(data)


def test_kl_examples():
    assert kl_divergence(0.5, 0.25) == pytest.approx(0.5 + 0.5 * math.log2(2 / 3), abs=1e-12)
    assert kl_divergence(0.5, 0.25) == pytest.approx(0.2075, abs=1e-4)
    ch = SyntheticChannel(3, (0.1, 0.5, 0.7))
    assert kl_report(ch, ch.as_array()) == 0.0
    with pytest.raises(ValueError):
        kl_report(ch, [0.5, 0.5])


def test_doubling_rate_of_uniform_bettor():
    data = generate_pairs(SyntheticChannel(2, (0.3, 0.8)), 500, seed=0)
    assert doubling_rate(np.full(2, 0.5), data) == pytest.approx(-1.0, abs=1e-12)
    assert doubling_rate(np.array([0.3, 0.8]), data) > -1.0


def test_transition_experiment_writes_csv(tmp_path):
    out = tmp_path / "transitions.csv"
    rows = transition_experiment([2, 3], seed=0, pairs_per_symbol=200, epochs=1, out=out)
    assert [(r.K, r.N) for r in rows] == [(2, 400), (3, 600)]
    assert all(r.delta_K >= 0 for r in rows)
    lines = out.read_text().splitlines()
    assert lines[0] == "K,N,delta_K,wall_seconds"
    assert len(lines) == 3


@pytest.mark.slow
def test_full_pairs_small_k():
    rows = transition_experiment([2, 10], seed=0)
    for row in rows:
        assert row.delta_K < 1e-3


def test_trained_estimator_beats_uniform_bettor_on_held_out_pairs():
    ch = sample_channel(4, seed=6)
    train_set = generate_pairs(ch, 4 * 5000, seed=6)
    held_out = generate_pairs(ch, 4 * 5000, seed=6, stream_offset=1 << 20)
    q = train_estimator(train_set, seed=6)
    assert doubling_rate(q, held_out) > doubling_rate(np.full(4, 0.5), held_out)

