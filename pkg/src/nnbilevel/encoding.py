"""Lowering trained ReLU networks and binary products into linear rows.

A hidden neuron ``z = max(0, a)`` with pre-activation ``a`` known to lie in
``[ML, MU]`` becomes four rows and one binary ``e``::

    z >= a
    z <= a - (1 - e) * ML
    z <= e * MU
    z >= 0

The output layer is linear and contributes one equality per output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lp import LinearModel, ModelError
from .neural import Layer, NeuralNet


@dataclass
class NeuronBounds:
    """Pre-activation intervals per layer (hidden layers first, output last)."""

    lower: list[np.ndarray]
    upper: list[np.ndarray]

    def __post_init__(self):
        for lo, hi in zip(self.lower, self.upper):
            if np.any(lo > hi + 1e-12):
                raise ValueError("lower bound exceeds upper bound")

    @property
    def output_box(self) -> list[tuple[float, float]]:
        return [(float(a), float(b)) for a, b in zip(self.lower[-1], self.upper[-1])]


@dataclass
class ReluEncoding:
    inputs: list[str]
    outputs: list[str]
    neurons: list[list[tuple[str, str]]]  # per hidden layer: (z, e) handles
    relu_rows: list[int] = field(default_factory=list)
    output_rows: list[int] = field(default_factory=list)
    prefix: str = "nn"

    @property
    def binaries(self) -> list[str]:
        return [e for layer in self.neurons for _, e in layer]

    @property
    def n_neurons(self) -> int:
        return sum(len(layer) for layer in self.neurons)


@dataclass
class LinkingBlock:
    y_c: str
    q: str
    y_hat: str
    x_0: str | None
    x_1: str
    rows: list[int]


def _box_arrays(box) -> tuple[np.ndarray, np.ndarray]:
    lo = np.array([float(b[0]) for b in box])
    hi = np.array([float(b[1]) for b in box])
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("the input box must be finite")
    if np.any(lo > hi):
        raise ValueError("input box has lo > hi")
    return lo, hi


def propagate_bounds(net: NeuralNet, box=None) -> NeuronBounds:
    """Interval-arithmetic pre-activation bounds on physical-unit inputs.

    ``box`` defaults to the net's recorded input box. ReLU layers clip the
    propagated interval at zero; sigmoid layers map it monotonically.
    """
    lo, hi = _box_arrays(net.input_box if box is None else box)
    if lo.size != net.n_inputs:
        raise ValueError("box dimension does not match the net inputs")
    lowers, uppers = [], []
    for layer in net.folded_layers():
        Wp = np.maximum(layer.weights, 0.0)
        Wn = np.minimum(layer.weights, 0.0)
        a_lo = Wp @ lo + Wn @ hi + layer.biases
        a_hi = Wp @ hi + Wn @ lo + layer.biases
        lowers.append(a_lo)
        uppers.append(a_hi)
        if layer.activation == "relu":
            lo, hi = np.maximum(a_lo, 0.0), np.maximum(a_hi, 0.0)
        elif layer.activation == "sigmoid":
            lo, hi = 1.0 / (1.0 + np.exp(-a_lo)), 1.0 / (1.0 + np.exp(-a_hi))
        else:
            lo, hi = a_lo, a_hi
    return NeuronBounds(lowers, uppers)


def tighten_bounds(net: NeuralNet, box=None, bounds: NeuronBounds | None = None) -> NeuronBounds:
    """Exact pre-activation ranges by optimising each neuron over the box.

    Layer by layer, every neuron's pre-activation is minimised and maximised
    with :func:`~nnbilevel.milp.milp_solve` on the encoding of the layers
    below it (themselves already tightened). Never looser than the interval
    bounds it starts from; affordable for small nets only.
    """
    from .milp import milp_solve

    box = net.input_box if box is None else box
    bounds = bounds or propagate_bounds(net, box)
    lo_list = [b.copy() for b in bounds.lower]
    hi_list = [b.copy() for b in bounds.upper]
    layers = net.folded_layers()
    for l, layer in enumerate(layers):
        if l == 0:
            continue  # first-layer intervals are already exact
        sub = NeuralNet(layers[:l] + [Layer(np.eye(layers[l - 1].biases.size),
                                            np.zeros(layers[l - 1].biases.size), "linear")],
                        list(net.input_names), [f"h{k}" for k in range(layers[l - 1].biases.size)],
                        input_box=box)
        m = LinearModel("bounds")
        partial = NeuronBounds(lo_list[:l] + [np.maximum(lo_list[l - 1], 0.0)],
                               hi_list[:l] + [np.maximum(hi_list[l - 1], 0.0)])
        enc = encode_relu_network(m, sub, partial, prefix="b",
                                  inputs=[m.add_var(f"x{k}", a, b) for k, (a, b) in enumerate(box)])
        z = enc.outputs
        for j in range(layer.biases.size):
            coeffs = {v: float(c) for v, c in zip(z, layer.weights[j]) if c != 0.0}
            for sense in ("min", "max"):
                m.set_objective(coeffs, sense, float(layer.biases[j]))
                out = milp_solve(m)
                if out.status != "optimal":
                    continue
                if sense == "min":
                    lo_list[l][j] = max(lo_list[l][j], out.bound - 1e-9)
                else:
                    hi_list[l][j] = min(hi_list[l][j], out.bound + 1e-9)
    return NeuronBounds(lo_list, hi_list)


def encode_relu_network(model: LinearModel, net: NeuralNet, bounds: NeuronBounds | None = None,
                        prefix: str = "nn", inputs: list[str] | None = None) -> ReluEncoding:
    """Append the big-M encoding of ``net`` to ``model``.

    ``inputs`` may name existing model variables (their values must stay
    inside the box the bounds were computed on); otherwise input variables
    are created over the net's input box. Output variables get the
    final-layer interval bounds.
    """
    layers = net.folded_layers()
    for layer in layers[:-1]:
        if layer.activation != "relu":
            raise ModelError(f"cannot encode a {layer.activation!r} hidden layer; only ReLU is linear-representable")
    if bounds is None:
        bounds = propagate_bounds(net)
    if len(bounds.lower) != len(layers):
        raise ValueError("bounds do not match the network depth")

    if inputs is None:
        inputs = [model.add_var(f"{prefix}.in.{name}", lo, hi)
                  for name, (lo, hi) in zip(net.input_names, net.input_box)]
    elif len(inputs) != net.n_inputs:
        raise ValueError("wrong number of input handles")
    enc = ReluEncoding(list(inputs), [], [], prefix=prefix)

    prev = list(inputs)
    for l, layer in enumerate(layers[:-1]):
        current = []
        for j in range(layer.biases.size):
            ml, mu = float(bounds.lower[l][j]), float(bounds.upper[l][j])
            tag = f"{prefix}/relu/L{l}/n{j}"
            z = model.add_var(f"{prefix}.z{l}_{j}", 0.0, max(mu, 0.0))
            # stable neurons get their binary fixed; the rows stay identical
            e_lo, e_hi = (1.0, 1.0) if ml >= 0 else (0.0, 0.0) if mu <= 0 else (0.0, 1.0)
            e = model.add_var(f"{prefix}.e{l}_{j}", e_lo, e_hi, kind="binary")
            w = {v: -float(c) for v, c in zip(prev, layer.weights[j])}
            b = float(layer.biases[j])
            enc.relu_rows.append(model.add_constraint({z: 1.0, **w}, ">=", b, f"{tag}/ge_a", tag))
            enc.relu_rows.append(model.add_constraint(
                {z: 1.0, **_merge(w, {e: -ml})}, "<=", b - ml, f"{tag}/le_a", tag))
            enc.relu_rows.append(model.add_constraint({z: 1.0, e: -mu}, "<=", 0.0, f"{tag}/le_mu", tag))
            enc.relu_rows.append(model.add_constraint({z: 1.0}, ">=", 0.0, f"{tag}/ge_0", tag))
            current.append((z, e))
        enc.neurons.append(current)
        prev = [z for z, _ in current]

    last = layers[-1]
    for k, name in enumerate(net.output_names):
        lo, hi = float(bounds.lower[-1][k]), float(bounds.upper[-1][k])
        y = model.add_var(f"{prefix}.out.{name}", lo, hi)
        coeffs = _merge({y: 1.0}, {v: -float(c) for v, c in zip(prev, last.weights[k])})
        enc.output_rows.append(model.add_constraint(
            coeffs, "=", float(last.biases[k]), f"{prefix}/out/{name}", f"{prefix}/out/{name}"))
        enc.outputs.append(y)
    return enc


def _merge(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = out.get(k, 0.0) + v
    return out


def encode_linking(model: LinearModel, y_c: str, q: str, x_0: str | None = None,
                   name: str | None = None, x_1: str | None = None) -> str:
    """Represent ``x_1 = x_0 + y_c * q`` with ``q`` binary, without products.

    A fresh ``y_hat`` equals ``y_c`` when ``q = 1`` and ``0`` when ``q = 0``,
    enforced by the four envelope rows over the box of ``y_c``. ``x_0 = None``
    stands for zero. Pass ``x_1`` to tie an existing variable instead of
    creating one. Returns the handle of ``x_1``.
    """
    var = model.variables[y_c]
    L, U = var.lb, var.ub
    if not (math.isfinite(L) and math.isfinite(U)):
        raise ValueError(f"linking needs a finite box on {y_c!r}")
    if model.variables[q].kind != "binary":
        raise ModelError(f"{q!r} is not binary")
    name = name or f"link.{y_c}.{q}"
    tag = f"link/{name}"
    y_hat = model.add_var(f"{name}.hat", min(L, 0.0), max(U, 0.0))
    rows = [
        model.add_constraint({y_hat: 1.0, q: -U}, "<=", 0.0, f"{tag}/le_uq", tag),
        model.add_constraint({y_hat: 1.0, q: -L}, ">=", 0.0, f"{tag}/ge_lq", tag),
        model.add_constraint({y_hat: 1.0, y_c: -1.0, q: -L}, "<=", -L, f"{tag}/le_y", tag),
        model.add_constraint({y_hat: 1.0, y_c: -1.0, q: -U}, ">=", -U, f"{tag}/ge_y", tag),
    ]
    if x_1 is None:
        x0_lo = x0_hi = 0.0
        if x_0 is not None:
            x0_lo, x0_hi = model.variables[x_0].lb, model.variables[x_0].ub
        x_1 = model.add_var(f"{name}.x1", x0_lo + min(L, 0.0), x0_hi + max(U, 0.0))
    coeffs = _merge({x_1: 1.0}, {y_hat: -1.0})
    if x_0 is not None:
        coeffs = _merge(coeffs, {x_0: -1.0})
    rows.append(model.add_constraint(coeffs, "=", 0.0, f"{tag}/x1", tag))
    return x_1


def add_feasibility_constraint(model: LinearModel, y_f: str, delta: float = 1e-3) -> int:
    """Require a feasibility-net output to be at least ``delta`` (>= 0)."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if y_f not in model.variables:
        raise ModelError(f"unknown variable {y_f!r}")
    return model.add_constraint({y_f: 1.0}, ">=", float(delta), f"feas/{y_f}", "feas")
