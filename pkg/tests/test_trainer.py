import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import random_graph
from oracles import adam_two_steps
from scenecluster.encoder import (EncoderParams, LinearLayer, init_params, max_relative_error, numeric_gradient,
                                  params_to_dict)
from scenecluster.trainer import (
    FD_RESOLUTION,
    AdamState,
    TrainConfig,
    adam_step,
    batch_triplet_loss,
    fit,
    sample_negatives,
    split_dataset,
    train,
    triplet_batch_loss,
    triplet_loss,
    write_history,
)


def test_config_defaults():
    c = TrainConfig()
    assert (c.learning_rate, c.margin, c.epochs, c.batch_size, c.train_fraction) == (0.001, 0.5, 1400, 533, 0.75)
    assert (c.adam_beta1, c.adam_beta2, c.adam_eps) == (0.9, 0.999, 1e-8)


@pytest.mark.parametrize("kwargs", [{"train_fraction": 1.0}, {"train_fraction": 0.0}, {"batch_size": 1},
                                    {"epochs": -1}, {"margin": -0.1}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_config_unknown_key():
    with pytest.raises(ValueError, match="unknown"):
        TrainConfig.from_dict({"epoch": 3})


# ---------------------------------------------------------------- triplet loss

def test_inactive_hinge():
    loss, g0, gp, gn = triplet_loss((0, 0), (0, 0), (1, 0), 0.5)
    assert loss == 0.0
    assert not (g0.any() or gp.any() or gn.any())


def test_active_hinge_value_and_grads():
    loss, g0, gp, gn = triplet_loss((0, 0), (0.8, 0), (0.2, 0), 0.5)
    assert loss == pytest.approx(1.1, abs=1e-12)
    # d|s0-sp|/ds0 = (-1, 0), d|s0-sn|/ds0 = (-1, 0)
    assert g0 == pytest.approx([0, 0])
    assert gp == pytest.approx([1, 0])
    assert gn == pytest.approx([-1, 0])


def test_degenerate_triplet():
    loss, g0, gp, gn = triplet_loss((0.3, -0.1), (0.3, -0.1), (0.3, -0.1), 0.5)
    assert loss == pytest.approx(0.5, abs=1e-12)
    assert not (gp.any() or gn.any() or g0.any())


vec = st.tuples(st.floats(-1, 1), st.floats(-1, 1))


@given(vec, vec, vec, st.floats(0, 2))
def test_loss_nonnegative_and_zero_iff_separated(s0, sp, sn, margin):
    loss = triplet_loss(s0, sp, sn, margin)[0]
    assert loss >= 0
    dp, dn = np.hypot(*np.subtract(s0, sp)), np.hypot(*np.subtract(s0, sn))
    assert (loss == 0) == (dp - dn + margin <= 0)


@given(vec, vec, vec)
def test_vectorized_loss_matches_scalar(s0, sp, sn):
    rows = batch_triplet_loss(np.array([s0]), np.array([sp]), np.array([sn]), 0.5)
    scalar = triplet_loss(s0, sp, sn, 0.5)
    for a, b in zip(rows, scalar):
        assert np.asarray(a).ravel() == pytest.approx(np.asarray(b).ravel(), abs=1e-12)


def test_negative_margin_rejected():
    with pytest.raises(ValueError):
        triplet_loss((0, 0), (0, 0), (0, 0), -1)


# ---------------------------------------------------------------- negatives

def test_batch_of_two():
    assert sample_negatives(2, np.random.default_rng(0)).tolist() == [1, 0]


def test_batch_of_one_rejected():
    with pytest.raises(ValueError):
        sample_negatives(1, np.random.default_rng(0))


def test_negative_frequencies():
    rng = np.random.default_rng(1)
    draws = np.stack([sample_negatives(5, rng) for _ in range(20_000)])
    for i in range(5):
        col = draws[:, i]
        counts = np.bincount(col, minlength=5) / len(col)
        assert counts[i] == 0
        for j in set(range(5)) - {i}:
            assert counts[j] == pytest.approx(0.25, abs=0.02)


def test_never_self():
    rng = np.random.default_rng(2)
    for _ in range(10_000):
        n = int(rng.integers(2, 12))
        assert np.all(sample_negatives(n, rng) != np.arange(n))


def test_negatives_deterministic():
    a = sample_negatives(9, np.random.default_rng(5))
    assert np.array_equal(a, sample_negatives(9, np.random.default_rng(5)))


# ---------------------------------------------------------------- adam

def scalar_params(value):
    """Every array filled with one constant, handy for elementwise Adam checks."""
    p = init_params(0)
    layers = {k: LinearLayer(np.full_like(v.weight, value), np.full_like(v.bias, value)) for k, v in p.layers.items()}
    return EncoderParams(layers)


def test_adam_first_step_is_lr():
    p, g = scalar_params(0.3), scalar_params(-2.5)
    new, state = adam_step(p, g, AdamState.zeros(p), TrainConfig())
    for name, arr in new.arrays().items():
        assert np.all(np.abs(arr - 0.3 - 0.001) < 1e-6)
    assert state.t == 1


def test_adam_zero_gradient():
    p = init_params(3)
    new, state = adam_step(p, p.zeros_like(), AdamState.zeros(p), TrainConfig())
    assert params_to_dict(new) == params_to_dict(p)
    assert state.t == 1


def test_adam_two_steps_oracle():
    p, g = scalar_params(1.0), scalar_params(0.7)
    cfg = TrainConfig()
    p1, s1 = adam_step(p, g, AdamState.zeros(p), cfg)
    p2, s2 = adam_step(p1, g, s1, cfg)
    e1, e2 = adam_two_steps(1.0, 0.7)
    assert np.allclose(p1.mlp_out.weight, e1, rtol=0, atol=1e-15)
    assert np.allclose(p2.mlp_out.weight, e2, rtol=0, atol=1e-15)
    assert s2.t == 2


def test_adam_does_not_mutate_inputs():
    p = init_params(1)
    before = params_to_dict(p)
    adam_step(p, init_params(2), AdamState.zeros(p), TrainConfig())
    assert params_to_dict(p) == before


# ---------------------------------------------------------------- split

def test_split_floor():
    tr, va = split_dataset(range(4), 0.75, 0)
    assert (len(tr), len(va)) == (3, 1)


@given(st.lists(st.integers(), min_size=1, max_size=40), st.floats(0.01, 0.99), st.integers(0, 100))
def test_split_partition(items, frac, seed):
    tr, va = split_dataset(items, frac, seed)
    assert sorted(tr + va) == sorted(items)
    assert len(tr) == int(frac * len(items))
    assert (tr, va) == split_dataset(items, frac, seed)


def test_split_empty():
    with pytest.raises(ValueError):
        split_dataset([], 0.5, 0)


# ---------------------------------------------------------------- training

def toy_pairs(n, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        g = random_graph(rng, int(rng.integers(2, 5)), scene_id=f"a{i}")
        h = random_graph(rng, g.num_nodes, scene_id=f"p{i}")
        out.append((g, h))
    return out


def test_zero_epochs_returns_init():
    res = train(toy_pairs(8), TrainConfig(epochs=0, seed=4))
    assert params_to_dict(res.params) == params_to_dict(init_params(4))
    assert res.history == []


def test_too_few_pairs():
    with pytest.raises(ValueError):
        train(toy_pairs(1), TrainConfig(epochs=1))


def test_training_deterministic():
    cfg = TrainConfig(epochs=5, batch_size=4, seed=3)
    a, b = train(toy_pairs(12), cfg), train(toy_pairs(12), cfg)
    assert params_to_dict(a.params) == params_to_dict(b.params)
    assert a.history == b.history


def test_validation_does_not_influence_updates():
    pairs = toy_pairs(12)
    cfg = TrainConfig(epochs=4, batch_size=4, seed=7)
    with_val = fit(pairs[:9], pairs[9:], cfg)
    without = fit(pairs[:9], [], cfg)
    assert params_to_dict(with_val.params) == params_to_dict(without.params)
    assert not np.isnan(with_val.history[-1].val_triplet_acc)


def test_identical_pairs_start_at_margin():
    g = random_graph(np.random.default_rng(0), 3)
    loss, grads, _ = triplet_batch_loss(init_params(0), [g, g], [g, g], np.array([1, 0]), 0.5)
    assert loss == pytest.approx(0.5, abs=1e-12)
    assert all(not a.any() for a in grads.arrays().values())


def test_loss_decreases_over_50_steps():
    pairs = toy_pairs(2, seed=5)
    res = fit(pairs, [], TrainConfig(epochs=50, batch_size=2, seed=1))
    losses = [r.train_loss for r in res.history]
    assert len(losses) == 50
    assert losses[-1] < losses[0]


def test_batch_loss_gradient_matches_finite_differences():
    pairs = toy_pairs(4, seed=9)
    anchors, positives = [a for a, _ in pairs], [p for _, p in pairs]
    neg = np.array([2, 0, 3, 1])
    p = init_params(9)
    _, analytic, _ = triplet_batch_loss(p, anchors, positives, neg, 0.5)
    assert any(a.any() for a in analytic.arrays().values())

    def loss_fn(q):
        return triplet_batch_loss(q, anchors, positives, neg, 0.5, with_grad=False)[0]

    numeric = numeric_gradient(p.copy(), loss_fn, 1e-5)
    assert max_relative_error(analytic, numeric, FD_RESOLUTION) < 1e-4


def test_history_csv(tmp_path):
    res = fit(toy_pairs(6), toy_pairs(3, seed=1), TrainConfig(epochs=2, batch_size=3))
    path = tmp_path / "h.csv"
    write_history(res.history, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss,val_triplet_acc"
    assert len(lines) == 3
