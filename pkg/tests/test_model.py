import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from counterfact.errors import ContractError, DeserializationError, InvalidInputError
from counterfact.ingest import RatingScale, Scaler
from counterfact.model import (
    MlpModel, TrainConfig, class_from_probs, cross_entropy, forward_probs, input_gradient, load_model,
    logits, mean_loss, model_to_dict, models_equal, one_hot, predict_class, save_model, train,
)

from conftest import linear_model, random_model


def central_difference(f, x, h=1e-5):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


# forward_probs ---------------------------------------------------------------


def test_zero_weights_give_uniform_probs():
    m = linear_model(np.zeros((3, 4)), np.zeros(4))
    np.testing.assert_allclose(forward_probs(m, [1.0, -2.0, 7.0]), [0.25] * 4, rtol=0, atol=1e-15)


def test_shift_in_logits_leaves_probs_unchanged(rng):
    W = rng.normal(size=(3, 4))
    b = rng.normal(size=4)
    x = rng.normal(size=3)
    p1 = forward_probs(linear_model(W, b), x)
    p2 = forward_probs(linear_model(W, b + 17.5), x)
    np.testing.assert_allclose(p1, p2, rtol=1e-13)


def test_hand_softmax_two_by_two():
    W = np.array([[2.0, -1.0], [0.5, 3.0]])
    m = linear_model(W, np.zeros(2))
    # x = (1, 0): logits are the first row of W
    e = [math.exp(2.0), math.exp(-1.0)]
    expected = [e[0] / sum(e), e[1] / sum(e)]
    np.testing.assert_allclose(forward_probs(m, [1.0, 0.0]), expected, rtol=1e-14)


def test_dimension_mismatch_is_contract_error():
    m = linear_model(np.zeros((3, 2)), np.zeros(2))
    with pytest.raises(ContractError):
        forward_probs(m, [1.0, 2.0])


def test_non_finite_input_is_invalid():
    m = linear_model(np.zeros((2, 2)), np.zeros(2))
    with pytest.raises(InvalidInputError):
        forward_probs(m, [np.nan, 0.0])


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, 4, elements=st.floats(-50, 50)))
def test_probs_are_a_distribution(x):
    m = random_model(np.random.default_rng(0), [4, 6, 3], scale=3.0)
    p = forward_probs(m, x)
    assert abs(p.sum() - 1) < 1e-9
    assert np.all(p > 0) and np.all(p < 1)


# predict_class ----------------------------------------------------------------


def test_argmax_class():
    assert int(class_from_probs([0.1, 0.7, 0.2])) == 2


def test_argmax_tie_goes_to_better_grade():
    assert int(class_from_probs([0.5, 0.5])) == 1
    m = linear_model(np.zeros((2, 2)), np.zeros(2))
    assert predict_class(m, [3.0, 4.0]) == 1


def test_synthetic_model_puts_first_quadrant_in_class_one(synth_model):
    assert predict_class(synth_model, [1.0, 1.0, 0.0, 0.0, 0.0]) == 1


@settings(max_examples=40, deadline=None)
@given(st.floats(-30, 30))
def test_prediction_invariant_to_shared_logit_shift(c):
    rng = np.random.default_rng(1)
    W, b = rng.normal(size=(3, 5)), rng.normal(size=5)
    x = rng.normal(size=3)
    assert predict_class(linear_model(W, b), x) == predict_class(linear_model(W, b + c), x)


# cross_entropy ---------------------------------------------------------------------


def test_cross_entropy_perfect_prediction():
    p = np.array([1.5e-13, 1 - 3e-13, 1.5e-13])
    assert cross_entropy(p, one_hot(2, 3)) == pytest.approx(0.0, abs=1e-9)


def test_cross_entropy_half():
    assert cross_entropy([0.5, 0.5], [1.0, 0.0]) == pytest.approx(0.693147, abs=1e-6)


def test_cross_entropy_soft_target():
    expected = -0.5 * math.log(0.25) - 0.5 * math.log(0.75)
    assert cross_entropy([0.25, 0.75], [0.5, 0.5]) == pytest.approx(expected, rel=1e-15)


def test_cross_entropy_floors_zero_probability():
    assert cross_entropy([0.0, 1.0], [1.0, 0.0]) == pytest.approx(-math.log(1e-12))


def test_cross_entropy_length_mismatch():
    with pytest.raises(ContractError):
        cross_entropy([0.5, 0.5], [1.0, 0.0, 0.0])


# input_gradient ---------------------------------------------------------------


def test_zero_weights_zero_gradient():
    m = linear_model(np.zeros((3, 4)), np.zeros(4))
    assert np.all(input_gradient(m, [1.0, 2.0, 3.0], one_hot(2, 4)) == 0)


def test_softmax_layer_gradient_matches_analytic_form(rng):
    W = rng.normal(size=(4, 3))  # (in, out): the analytic form is W (p - t)
    b = rng.normal(size=3)
    m = linear_model(W, b)
    x = rng.normal(size=4)
    t = one_hot(3, 3)
    z = x @ W + b
    p = np.exp(z - z.max()) / np.exp(z - z.max()).sum()
    np.testing.assert_allclose(input_gradient(m, x, t), W @ (p - t), rtol=1e-12, atol=1e-15)


def test_gradient_matches_finite_differences_on_trained_model(synth_model, rng):
    for _ in range(10):
        x = rng.normal(0, 1.2, size=5)
        t = one_hot(int(rng.integers(1, 5)), 4)
        f = lambda v: cross_entropy(forward_probs(synth_model, v), t)  # noqa: E731
        g = input_gradient(synth_model, x, t)
        fd = central_difference(f, x)
        np.testing.assert_allclose(g, fd, rtol=1e-4, atol=1e-7)


@pytest.mark.parametrize("activation", ["relu", "tanh"])
def test_gradient_batch_rows_match_single_rows(activation, rng):
    m = random_model(rng, [5, 7, 4], activation)
    X = rng.normal(size=(6, 5))
    T = np.eye(4)[rng.integers(0, 4, size=6)]
    G = input_gradient(m, X, T)
    for i in range(6):
        np.testing.assert_allclose(G[i], input_gradient(m, X[i], T[i]), rtol=1e-12, atol=1e-15)


# train ----------------------------------------------------------------------------


def _toy_data(seed=0, n=200):
    r = np.random.default_rng(seed)
    X = r.normal(size=(n, 3))
    y = np.where(X[:, 0] + X[:, 1] > 0, 1, 2)
    return X, y


def test_training_is_bit_reproducible():
    X, y = _toy_data()
    cfg = TrainConfig(hidden_layer_sizes=(8,), epochs=5, seed=11)
    a, b = train(cfg, X, y), train(cfg, X, y)
    for (wa, ba), (wb, bb) in zip(a.layers, b.layers):
        assert wa.tobytes() == wb.tobytes() and ba.tobytes() == bb.tobytes()


def test_different_seed_changes_weights():
    X, y = _toy_data()
    a = train(TrainConfig(hidden_layer_sizes=(8,), epochs=2, seed=1), X, y)
    b = train(TrainConfig(hidden_layer_sizes=(8,), epochs=2, seed=2), X, y)
    assert not models_equal(a, b)


def test_training_lowers_loss():
    X, y = _toy_data()
    untrained = train(TrainConfig(hidden_layer_sizes=(8,), epochs=1, learning_rate=1e-12, seed=4), X, y)
    trained = train(TrainConfig(hidden_layer_sizes=(8,), epochs=30, seed=4), X, y)
    assert mean_loss(trained, X, y) < mean_loss(untrained, X, y)


def test_one_step_reduces_the_loss_of_its_batch():
    # one epoch, one mini-batch: a single gradient step on this data
    X = np.array([[0.3, -1.2, 0.8], [-0.5, 0.4, 0.1]])
    y = np.array([2, 1])
    still = train(TrainConfig(hidden_layer_sizes=(4,), epochs=1, batch_size=2, learning_rate=1e-300, seed=9), X, y)
    moved = train(TrainConfig(hidden_layer_sizes=(4,), epochs=1, batch_size=2, learning_rate=0.1, seed=9), X, y)
    assert mean_loss(moved, X, y) < mean_loss(still, X, y)


@pytest.mark.parametrize("labels, msg", [
    (np.array([1, 2, 5]), "1..2"),
    (np.array([0, 1, 2]), "1..2"),
])
def test_train_rejects_bad_labels(labels, msg):
    X = np.zeros((3, 2))
    with pytest.raises(InvalidInputError, match=msg.replace(".", r"\.")):
        train(TrainConfig(epochs=1), X, labels, n_classes=2)


def test_train_rejects_empty_data():
    with pytest.raises(InvalidInputError):
        train(TrainConfig(epochs=1), np.zeros((0, 2)), np.zeros(0, dtype=int))


def test_train_config_validation():
    with pytest.raises(ContractError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ContractError):
        TrainConfig(epochs=0)


# model validation and persistence ------------------------------------------------


def test_model_rejects_incompatible_layers():
    with pytest.raises(ContractError):
        MlpModel(((np.zeros((3, 4)), np.zeros(4)), (np.zeros((5, 2)), np.zeros(2))))


def test_model_rejects_non_finite_weights():
    w = np.zeros((2, 2))
    w[0, 0] = np.inf
    with pytest.raises(ContractError):
        MlpModel(((w, np.zeros(2)),))


def test_model_arrays_are_read_only(rng):
    m = random_model(rng, [3, 2])
    with pytest.raises(ValueError):
        m.layers[0][0][0, 0] = 1.0


def _full_model(rng):
    m = random_model(rng, [3, 5, 4], "relu")
    return MlpModel(m.layers, "relu", ("a", "b", "c"),
                    Scaler(rng.normal(size=3), rng.uniform(0.5, 2, size=3)),
                    RatingScale(("A", "B", "C", "D"), None))


def test_save_load_round_trip_is_exact(tmp_path, rng):
    m = _full_model(rng)
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert models_equal(m, back)
    assert back.feature_names == m.feature_names
    assert back.scaler == m.scaler
    assert back.rating_scale == m.rating_scale
    assert back.hidden_activation == "relu"


def test_round_trip_of_trained_model(tmp_path, synth_model):
    save_model(synth_model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert models_equal(synth_model, back)
    x = np.array([0.3, -0.2, 0.1, 0.0, 0.5])
    assert forward_probs(back, x).tobytes() == forward_probs(synth_model, x).tobytes()


def _doc(rng):
    return model_to_dict(_full_model(rng))


def test_truncated_weight_array_names_layer(tmp_path, rng):
    doc = _doc(rng)
    doc["layers"][1]["weights"] = doc["layers"][1]["weights"][:-3]
    (tmp_path / "m.json").write_text(json.dumps(doc))
    with pytest.raises(DeserializationError, match=r"layers\[1\]"):
        load_model(tmp_path / "m.json")


def test_width_mismatch_is_dimension_error(tmp_path):
    doc = model_to_dict(linear_model(np.ones((4, 2)), np.zeros(2)))
    doc["n_features"] = 5
    (tmp_path / "m.json").write_text(json.dumps(doc))
    with pytest.raises(DeserializationError, match="n_features|layers\\[0\\]"):
        load_model(tmp_path / "m.json")


def test_schema_version_mismatch(tmp_path, rng):
    doc = _doc(rng)
    doc["schema_version"] = 99
    (tmp_path / "m.json").write_text(json.dumps(doc))
    with pytest.raises(DeserializationError, match="schema_version"):
        load_model(tmp_path / "m.json")


def test_malformed_json(tmp_path):
    (tmp_path / "m.json").write_text("{not json")
    with pytest.raises(DeserializationError):
        load_model(tmp_path / "m.json")


def test_missing_field_is_named(tmp_path, rng):
    doc = _doc(rng)
    del doc["layers"][0]["bias"]
    (tmp_path / "m.json").write_text(json.dumps(doc))
    with pytest.raises(DeserializationError, match=r"layers\[0\].*bias"):
        load_model(tmp_path / "m.json")


def test_logits_and_probs_agree(rng):
    m = random_model(rng, [3, 4])
    x = rng.normal(size=3)
    z = logits(m, x)
    np.testing.assert_allclose(forward_probs(m, x), np.exp(z) / np.exp(z).sum(), rtol=1e-13)
