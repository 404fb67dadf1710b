import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nnbilevel.encoding import (NeuronBounds, add_feasibility_constraint, encode_linking, encode_relu_network,
                                propagate_bounds, tighten_bounds)
from nnbilevel.lp import LinearModel, ModelError
from nnbilevel.milp import enumerate_binaries, milp_solve
from nnbilevel.neural import Layer, NeuralNet, nn_forward
from oracles import numpy_forward


def random_relu_net(rng, n_in=None, hidden=None, n_out=None):
    n_in = n_in or int(rng.integers(1, 4))
    hidden = hidden or [int(rng.integers(1, 9)) for _ in range(int(rng.integers(1, 3)))]
    n_out = n_out or int(rng.integers(1, 3))
    sizes = [n_in, *hidden, n_out]
    layers = [Layer(rng.normal(size=(b, a)), rng.normal(size=b), "relu" if k < len(sizes) - 2 else "linear")
              for k, (a, b) in enumerate(zip(sizes, sizes[1:]))]
    lo = rng.uniform(-2, 0, n_in)
    hi = lo + rng.uniform(0.5, 3, n_in)
    return NeuralNet(layers, [f"x{k}" for k in range(n_in)], [f"y{k}" for k in range(n_out)],
                     x_lo=lo, x_hi=hi, y_lo=rng.uniform(-1, 0, n_out), y_hi=rng.uniform(1, 3, n_out),
                     input_box=list(zip(lo, hi)))


def recovered_outputs(net, x, bounds=None, sense="min"):
    m = LinearModel()
    enc = encode_relu_network(m, net, bounds)
    for v, val in zip(enc.inputs, x):
        m.fix(v, float(val))
    m.set_objective({enc.outputs[0]: 1.0}, sense)
    out = milp_solve(m)
    assert out.status == "optimal"
    return np.array([out.point[y] for y in enc.outputs])


def test_encoding_reproduces_forward_pass():
    rng = np.random.default_rng(0)
    for _ in range(25):
        net = random_relu_net(rng)
        folded = net.folded_layers()
        for _ in range(4):
            x = np.array([rng.uniform(a, b) for a, b in net.input_box])
            ref = numpy_forward([l.weights for l in folded], [l.biases for l in folded],
                                [l.activation for l in folded], x)[0]
            for sense in ("min", "max"):
                assert np.allclose(recovered_outputs(net, x, sense=sense), ref, atol=1e-6)


def test_row_counts_and_tags():
    rng = np.random.default_rng(1)
    net = random_relu_net(rng, n_in=1, hidden=[5, 5], n_out=2)
    m = LinearModel()
    enc = encode_relu_network(m, net, prefix="nn1")
    assert len(enc.relu_rows) == 40 and len(enc.output_rows) == 2
    assert enc.n_neurons == 10 and len(enc.binaries) == 10
    assert len(m.constraints_tagged("nn1/relu/")) == 40
    assert len(m.constraints_tagged("nn1/out/")) == 2
    assert {m.constraints[r].tag for r in enc.relu_rows} == {f"nn1/relu/L{l}/n{j}" for l in range(2) for j in range(5)}


def test_interval_bounds_contain_sampled_preactivations():
    rng = np.random.default_rng(2)
    for _ in range(20):
        net = random_relu_net(rng)
        b = propagate_bounds(net)
        X = np.column_stack([rng.uniform(lo, hi, 500) for lo, hi in net.input_box])
        z = X
        for l, layer in enumerate(net.folded_layers()):
            a = z @ layer.weights.T + layer.biases
            assert np.all(a >= b.lower[l] - 1e-9) and np.all(a <= b.upper[l] + 1e-9)
            z = np.maximum(a, 0) if layer.activation == "relu" else a


def test_tightened_bounds_are_valid_and_no_looser():
    rng = np.random.default_rng(3)
    for _ in range(10):
        net = random_relu_net(rng, hidden=[4, 4])
        loose = propagate_bounds(net)
        tight = tighten_bounds(net)
        X = np.column_stack([rng.uniform(lo, hi, 500) for lo, hi in net.input_box])
        z = X
        for l, layer in enumerate(net.folded_layers()):
            assert np.all(tight.lower[l] >= loose.lower[l] - 1e-9)
            assert np.all(tight.upper[l] <= loose.upper[l] + 1e-9)
            a = z @ layer.weights.T + layer.biases
            assert np.all(a >= tight.lower[l] - 1e-6) and np.all(a <= tight.upper[l] + 1e-6)
            z = np.maximum(a, 0) if layer.activation == "relu" else a


def test_tight_output_bounds_are_attained():
    # a one-input net: the exact output range is found by dense evaluation
    rng = np.random.default_rng(4)
    net = random_relu_net(rng, n_in=1, hidden=[6, 6], n_out=1)
    grid = np.linspace(*net.input_box[0], 200001)[:, None]
    vals = nn_forward(net, grid)[:, 0]
    tight = tighten_bounds(net)
    assert tight.lower[-1][0] == pytest.approx(vals.min(), abs=1e-4)
    assert tight.upper[-1][0] == pytest.approx(vals.max(), abs=1e-4)


def test_stable_neurons_fix_their_binary():
    net = NeuralNet([Layer([[1.0], [-1.0]], [5.0, -5.0], "relu"), Layer([[1.0, 1.0]], [0.0], "linear")],
                    ["x"], ["y"], input_box=[(0.0, 1.0)])
    m = LinearModel()
    enc = encode_relu_network(m, net)
    (z0, e0), (z1, e1) = enc.neurons[0]
    assert (m.variables[e0].lb, m.variables[e0].ub) == (1.0, 1.0)
    assert (m.variables[e1].lb, m.variables[e1].ub) == (0.0, 0.0)


def test_encoding_errors():
    sig = NeuralNet([Layer([[1.0]], [0.0], "sigmoid"), Layer([[1.0]], [0.0], "linear")], ["x"], ["y"])
    with pytest.raises(ModelError, match="sigmoid"):
        encode_relu_network(LinearModel(), sig)
    net = random_relu_net(np.random.default_rng(5), n_in=1)
    with pytest.raises(ValueError):
        propagate_bounds(net, [(0.0, math.inf)])
    with pytest.raises(ValueError):
        propagate_bounds(net, [(1.0, 0.0)])
    with pytest.raises(ValueError):
        encode_relu_network(LinearModel(), net, inputs=["a", "b"])
    with pytest.raises(ValueError):
        NeuronBounds([np.array([1.0])], [np.array([0.0])])


@pytest.mark.parametrize("q_val", [0.0, 1.0])
def test_linking_block_is_exact(q_val):
    rng = np.random.default_rng(6)
    for _ in range(20):
        L, U = sorted(rng.uniform(-5, 8, size=2))
        y_val, x0_val = rng.uniform(L, U), rng.uniform(0, 4)
        m = LinearModel()
        y = m.add_var("y", L, U)
        q = m.add_var("q", kind="binary")
        x0 = m.add_var("x0", 0, 4)
        x1 = encode_linking(m, y, q, x0, name="lk")
        m.fix(y, y_val)
        m.fix(q, q_val)
        m.fix(x0, x0_val)
        for sense in ("min", "max"):
            m.set_objective({x1: 1.0}, sense)
            out = milp_solve(m)
            assert out.point[x1] == pytest.approx(x0_val + q_val * y_val, abs=1e-7)
    assert len(m.constraints_tagged("link/lk")) == 5


def test_linking_errors_and_existing_target():
    m = LinearModel()
    y = m.add_var("y", 0, math.inf)
    q = m.add_var("q", kind="binary")
    c = m.add_var("c", 0, 1)
    with pytest.raises(ValueError):
        encode_linking(m, y, q)
    m.variables[y].ub = 3.0
    with pytest.raises(ModelError):
        encode_linking(m, y, c)
    target = m.add_var("t", -10, 10)
    assert encode_linking(m, y, q, x_1=target) == target


def test_feasibility_constraint():
    m = LinearModel()
    yf = m.add_var("yf", -1, 1)
    row = add_feasibility_constraint(m, yf, 0.25)
    assert m.constraints[row].relation == ">=" and m.constraints[row].rhs == 0.25
    with pytest.raises(ValueError):
        add_feasibility_constraint(m, yf, -0.1)
    with pytest.raises(ModelError):
        add_feasibility_constraint(m, "missing")


def test_feasibility_cut_matches_enumeration():
    rng = np.random.default_rng(7)
    net = random_relu_net(rng, n_in=2, hidden=[4, 3], n_out=1)
    m = LinearModel()
    enc = encode_relu_network(m, net, tighten_bounds(net))
    add_feasibility_constraint(m, enc.outputs[0], 0.0)
    m.set_objective({enc.inputs[0]: 1.0, enc.inputs[1]: -0.5}, "max")
    a, b = milp_solve(m), enumerate_binaries(m)
    assert a.status == b.status
    if a.status == "optimal":
        assert a.objective == pytest.approx(b.objective, abs=1e-6)
        x = np.array([a.point[v] for v in enc.inputs])
        assert nn_forward(net, x)[0] >= -1e-6


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_property_encoding_is_exact_on_random_inputs(seed):
    rng = np.random.default_rng(seed)
    net = random_relu_net(rng)
    x = np.array([rng.uniform(a, b) for a, b in net.input_box])
    assert np.allclose(recovered_outputs(net, x), nn_forward(net, x), atol=1e-6)
