import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from nnbilevel.neural import (Layer, NeuralNet, ReluNetRegressor, SampleSet, TrainConfig,
                              TrainingDivergedError, feasibility_accuracy, forward_layers, loss_and_grads,
                              nn_evaluate, nn_forward, nn_train, parse_arch)
from oracles import numpy_forward


def random_net(rng, sizes, act="relu"):
    layers = [Layer(rng.normal(size=(b, a)), rng.normal(size=b), act if k < len(sizes) - 2 else "linear")
              for k, (a, b) in enumerate(zip(sizes, sizes[1:]))]
    n_in, n_out = sizes[0], sizes[-1]
    return NeuralNet(layers, [f"x{k}" for k in range(n_in)], [f"y{k}" for k in range(n_out)],
                     x_lo=rng.uniform(-2, 0, n_in), x_hi=rng.uniform(1, 3, n_in),
                     y_lo=rng.uniform(-1, 0, n_out), y_hi=rng.uniform(1, 4, n_out))


def line_data(n=60, seed=0):
    x = np.linspace(0, 3, n)
    return SampleSet(x[:, None], (2 * x - 1)[:, None], ["x"], ["y"]).assign_splits(seed)


def test_parse_arch():
    assert parse_arch("2x5") == (5, 5)
    assert parse_arch("16:8") == (16, 8)
    assert parse_arch("3") == (3,)
    with pytest.raises(ValueError):
        parse_arch("0x4")


def test_layer_and_net_validation():
    with pytest.raises(ValueError):
        Layer(np.ones((2, 3)), np.ones(3))
    with pytest.raises(ValueError):
        Layer(np.ones((1, 1)), np.ones(1), "tanh")
    with pytest.raises(ValueError):
        NeuralNet([Layer(np.ones((1, 1)), np.ones(1), "relu")], ["x"], ["y"])
    with pytest.raises(ValueError):
        NeuralNet([Layer(np.ones((2, 1)), np.ones(2)), Layer(np.ones((1, 3)), np.ones(1), "linear")], ["x"], ["y"])


def test_forward_matches_numpy_reference():
    rng = np.random.default_rng(0)
    for act in ("relu", "sigmoid"):
        net = random_net(rng, [3, 6, 4, 2], act)
        X = rng.uniform(-2, 3, size=(25, 3))
        folded = net.folded_layers()
        ref = numpy_forward([l.weights for l in folded], [l.biases for l in folded],
                            [l.activation for l in folded], X)
        assert np.allclose(nn_forward(net, X), ref, atol=1e-12)
        # normalise -> raw layers -> denormalise is the same map
        manual = net.denormalize_y(forward_layers(net.layers, net.normalize_x(X)))
        assert np.allclose(manual, ref, atol=1e-12)
    single = nn_forward(net, X[0])
    assert single.shape == (2,)


def test_normalisation_round_trip():
    rng = np.random.default_rng(1)
    net = random_net(rng, [2, 3, 2])
    x = rng.normal(size=(5, 2))
    assert np.allclose(net.denormalize_x(net.normalize_x(x)), x)
    y = rng.normal(size=(5, 2))
    assert np.allclose(net.denormalize_y(net.normalize_y(y)), y)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    for act in ("relu", "sigmoid"):
        layers = [Layer(rng.normal(size=(4, 2)), rng.normal(size=4), act),
                  Layer(rng.normal(size=(3, 4)), rng.normal(size=3), act),
                  Layer(rng.normal(size=(2, 3)), rng.normal(size=2), "linear")]
        X, Y = rng.normal(size=(7, 2)), rng.normal(size=(7, 2))
        w = rng.uniform(0.5, 2.0, size=7)
        for weights in (None, w):
            _, grads = loss_and_grads(layers, X, Y, weights)
            h = 1e-6
            for layer, (gW, gb) in zip(layers, grads):
                for arr, g in ((layer.weights, gW), (layer.biases, gb)):
                    for idx in np.ndindex(arr.shape):
                        old = arr[idx]
                        arr[idx] = old + h
                        lp, _ = loss_and_grads(layers, X, Y, weights)
                        arr[idx] = old - h
                        lm, _ = loss_and_grads(layers, X, Y, weights)
                        arr[idx] = old
                        assert g[idx] == pytest.approx((lp - lm) / (2 * h), abs=1e-6)


def test_training_fits_a_line_and_curves_shrink():
    data = line_data()
    net, curves = nn_train(data, TrainConfig(hidden=(3,), epochs=3000, learning_rate=0.02))
    assert len(curves["train"]) == 3000 and len(curves["validation"]) == 3000
    assert curves["train"][-1] < 1e-2 * curves["train"][0]
    assert nn_evaluate(net, data)["mse_mean"] < 1e-4


def test_training_is_deterministic():
    data = line_data()
    cfg = TrainConfig(hidden=(4,), epochs=300, seed=7)
    a, _ = nn_train(data, cfg)
    b, _ = nn_train(data, cfg)
    assert a.to_dict() == b.to_dict()


def test_restarts_never_worsen_validation():
    data = line_data(seed=3)
    one, c1 = nn_train(data, TrainConfig(hidden=(2,), epochs=400, seed=4))
    many, c3 = nn_train(data, TrainConfig(hidden=(2,), epochs=400, seed=4, restarts=3))
    assert c3["validation"][-1] <= c1["validation"][-1] + 1e-15


def test_divergence_is_reported():
    data = line_data()
    with pytest.raises(TrainingDivergedError, match="learning rate"):
        nn_train(data, TrainConfig(hidden=(4,), epochs=200, learning_rate=1e6, final_learning_rate=1e6,
                                   optimizer="momentum"))


def test_config_validation():
    for bad in ({"epochs": 0}, {"learning_rate": -1}, {"activation": "tanh"}, {"target": "x"},
                {"restarts": 0}, {"negative_weight": 0}):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_sample_set_splits_and_csv(tmp_path):
    rng = np.random.default_rng(4)
    data = SampleSet(rng.normal(size=(40, 2)), rng.normal(size=(40, 1)), ["a", "b"], ["c"],
                     np.where(rng.random(40) < 0.5, 1.0, -1.0)).assign_splits(9)
    counts = {t: int(np.sum(data.split == t)) for t in ("train", "validation", "test")}
    assert counts == {"train": 28, "validation": 6, "test": 6}
    path = tmp_path / "d.csv"
    data.to_csv(path)
    assert path.read_text().splitlines()[0] == "x_s.a,x_s.b,y_c.c,y_f,split"
    back = SampleSet.from_csv(path)
    assert np.array_equal(back.X, data.X) and np.array_equal(back.Y, data.Y)
    assert np.array_equal(back.y_f, data.y_f) and list(back.split) == list(data.split)
    with pytest.raises(ValueError):
        SampleSet(np.zeros((2, 1)), None, ["x"], [], np.array([0.5, 1.0]))
    with pytest.raises(ValueError):
        SampleSet(np.zeros((2, 1)), None, ["x"], [], split=["train", "holdout"])


def test_net_json_round_trip(tmp_path):
    net = random_net(np.random.default_rng(5), [1, 4, 2])
    net.save(tmp_path / "n.json")
    doc = json.loads((tmp_path / "n.json").read_text())
    assert set(doc["normalization"]) == {"x_lo", "x_hi", "y_lo", "y_hi"}
    back = NeuralNet.load(tmp_path / "n.json")
    x = np.linspace(-1, 2, 9)[:, None]
    assert np.array_equal(nn_forward(back, x), nn_forward(net, x))


def test_feasibility_training_and_accuracy():
    rng = np.random.default_rng(6)
    X = rng.uniform(-1, 1, size=(300, 2))
    labels = np.where(X[:, 0] + X[:, 1] <= 0.2, 1.0, -1.0)
    data = SampleSet(X, None, ["x1", "x2"], [], labels).assign_splits(0)
    net, _ = nn_train(data, TrainConfig(hidden=(6,), epochs=2000, target="feasibility"))
    assert net.output_names == ["y_f"]
    assert nn_evaluate(net, data)["accuracy"] >= 0.95
    assert feasibility_accuracy(np.array([0.0, -0.1, 2.0]), np.array([1.0, -1.0, -1.0])) == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        nn_train(SampleSet(X, X[:, :1], ["x1", "x2"], ["y"]), TrainConfig(target="feasibility"))


def test_negative_weight_shrinks_the_positive_region():
    x = np.linspace(-1, 1, 201)
    data = SampleSet(x[:, None], None, ["x"], [], np.where(x <= 0.0, 1.0, -1.0)).assign_splits(1)
    base = TrainConfig(hidden=(4,), epochs=1500, target="feasibility", seed=2)
    heavy = TrainConfig(hidden=(4,), epochs=1500, target="feasibility", seed=2, negative_weight=20.0)
    grid = np.linspace(-0.2, 0.2, 401)[:, None]
    plain_area = np.sum(nn_forward(nn_train(data, base)[0], grid) >= 0)
    heavy_area = np.sum(nn_forward(nn_train(data, heavy)[0], grid) >= 0)
    assert heavy_area <= plain_area


def test_sklearn_estimator_interface():
    x = np.linspace(0, 1, 50)[:, None]
    y = 3 * x[:, 0] + 1
    est = ReluNetRegressor(hidden_layer_sizes=(3,), epochs=1500, learning_rate=0.02)
    assert est.get_params()["hidden_layer_sizes"] == (3,)
    twin = clone(est).set_params(seed=1)
    assert twin.get_params()["seed"] == 1
    est.fit(x, y)
    assert est.predict(x).shape == (50,)
    assert est.score(x, y) > 0.99
    with pytest.raises(ValueError):
        est.fit(np.array([[np.nan]]), np.array([1.0]))
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        ReluNetRegressor().predict(x)


def test_cli_train_and_eval(tmp_path):
    data = line_data()
    data.to_csv(tmp_path / "d.csv")
    cmd = [sys.executable, "-m", "nnbilevel.cli", "nn", "train", "--data", str(tmp_path / "d.csv"),
           "--arch", "1x4", "--act", "relu", "--seed", "7", "--epochs", "500", "--out", str(tmp_path / "n.json")]
    subprocess.run(cmd, check=True, capture_output=True)
    res = subprocess.run([sys.executable, "-m", "nnbilevel.cli", "nn", "eval", "--net", str(tmp_path / "n.json"),
                          "--data", str(tmp_path / "d.csv")], check=True, capture_output=True, text=True)
    assert json.loads(res.stdout)["n"] == 9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["relu", "sigmoid"]))
def test_property_folding_preserves_the_map(seed, act):
    rng = np.random.default_rng(seed)
    sizes = [int(rng.integers(1, 4))] + [int(rng.integers(1, 6)) for _ in range(int(rng.integers(1, 3)))] + [int(rng.integers(1, 3))]
    net = random_net(rng, sizes, act)
    X = rng.uniform(-3, 3, size=(10, sizes[0]))
    ref = net.denormalize_y(forward_layers(net.layers, net.normalize_x(X)))
    assert np.allclose(forward_layers(net.folded_layers(), X), ref, atol=1e-9)
