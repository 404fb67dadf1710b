"""Feedforward networks written against numpy: inference, training, metrics.

Networks operate internally on min-max normalised inputs and outputs; the
scaling constants travel with :class:`NeuralNet` so callers always work in
physical units and the MILP encoder can fold the affine maps into the first
and last layers (:meth:`NeuralNet.folded_layers`).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

ACTIVATIONS = ("relu", "sigmoid", "linear")
SPLITS = ("train", "validation", "test")


class TrainingDivergedError(RuntimeError):
    pass


def _act(name: str, a: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(a, 0.0)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-a))
    return a


def _act_grad(name: str, a: np.ndarray, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (a > 0).astype(float)
    if name == "sigmoid":
        return z * (1.0 - z)
    return np.ones_like(a)


@dataclass
class Layer:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray  # (out,)
    activation: str = "relu"

    def __post_init__(self):
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
        self.biases = np.asarray(self.biases, dtype=float).reshape(-1)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.shape[0] != self.biases.size:
            raise ValueError("bias length does not match the weight rows")


@dataclass
class NeuralNet:
    """Layer stack plus the normalisation that maps physical units to it.

    ``x_lo``/``x_hi`` and ``y_lo``/``y_hi`` are the training-split extremes;
    ``input_box`` is the physical input domain the surrogate is trusted on.
    """

    layers: list[Layer]
    input_names: list[str]
    output_names: list[str]
    x_lo: np.ndarray = None
    x_hi: np.ndarray = None
    y_lo: np.ndarray = None
    y_hi: np.ndarray = None
    input_box: list[tuple[float, float]] = None

    def __post_init__(self):
        n_in = self.layers[0].weights.shape[1]
        n_out = self.layers[-1].weights.shape[0]
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.weights.shape[0] != nxt.weights.shape[1]:
                raise ValueError("layer dimensions do not chain")
        if self.layers[-1].activation != "linear":
            raise ValueError("the output layer must be linear")
        if len(self.input_names) != n_in or len(self.output_names) != n_out:
            raise ValueError("input/output names do not match the layer shapes")
        self.x_lo = np.zeros(n_in) if self.x_lo is None else np.asarray(self.x_lo, float)
        self.x_hi = np.ones(n_in) if self.x_hi is None else np.asarray(self.x_hi, float)
        self.y_lo = np.zeros(n_out) if self.y_lo is None else np.asarray(self.y_lo, float)
        self.y_hi = np.ones(n_out) if self.y_hi is None else np.asarray(self.y_hi, float)
        if self.input_box is None:
            self.input_box = [(float(a), float(b)) for a, b in zip(self.x_lo, self.x_hi)]
        self.input_box = [(float(a), float(b)) for a, b in self.input_box]

    @property
    def n_inputs(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.layers[-1].weights.shape[0]

    @property
    def hidden_sizes(self) -> list[int]:
        return [layer.biases.size for layer in self.layers[:-1]]

    def _x_span(self):
        return np.where(self.x_hi > self.x_lo, self.x_hi - self.x_lo, 1.0)

    def _y_span(self):
        return np.where(self.y_hi > self.y_lo, self.y_hi - self.y_lo, 1.0)

    def normalize_x(self, x):
        return (np.asarray(x, float) - self.x_lo) / self._x_span()

    def denormalize_x(self, u):
        return np.asarray(u, float) * self._x_span() + self.x_lo

    def normalize_y(self, y):
        return (np.asarray(y, float) - self.y_lo) / self._y_span()

    def denormalize_y(self, v):
        return np.asarray(v, float) * self._y_span() + self.y_lo

    def folded_layers(self) -> list[Layer]:
        """Equivalent layers acting on physical inputs and emitting physical outputs."""
        layers = [Layer(l.weights.copy(), l.biases.copy(), l.activation) for l in self.layers]
        xs = self._x_span()
        first = layers[0]
        first.biases = first.biases - first.weights @ (self.x_lo / xs)
        first.weights = first.weights / xs[None, :]
        last = layers[-1]
        ys = self._y_span()
        last.weights = last.weights * ys[:, None]
        last.biases = last.biases * ys + self.y_lo
        return layers

    # -- serialisation ------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "layers": [
                {"weights": l.weights.tolist(), "biases": l.biases.tolist(),
                 "activation": l.activation}
                for l in self.layers
            ],
            "input_names": list(self.input_names),
            "output_names": list(self.output_names),
            "input_box": [list(b) for b in self.input_box],
            "normalization": {
                "x_lo": self.x_lo.tolist(), "x_hi": self.x_hi.tolist(),
                "y_lo": self.y_lo.tolist(), "y_hi": self.y_hi.tolist(),
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NeuralNet":
        norm = d.get("normalization", {})
        return cls(
            layers=[Layer(l["weights"], l["biases"], l["activation"]) for l in d["layers"]],
            input_names=list(d["input_names"]),
            output_names=list(d["output_names"]),
            x_lo=norm.get("x_lo"), x_hi=norm.get("x_hi"),
            y_lo=norm.get("y_lo"), y_hi=norm.get("y_hi"),
            input_box=[tuple(b) for b in d["input_box"]] if d.get("input_box") else None,
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "NeuralNet":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def forward_layers(layers: list[Layer], x: np.ndarray) -> np.ndarray:
    z = x
    for layer in layers:
        z = _act(layer.activation, z @ layer.weights.T + layer.biases)
    return z


def nn_forward(net: NeuralNet, x) -> np.ndarray:
    """Evaluate ``net`` on physical inputs (a vector or a batch of rows)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != net.n_inputs:
        raise ValueError(f"expected {net.n_inputs} inputs, got {X.shape[1]}")
    out = net.denormalize_y(forward_layers(net.layers, net.normalize_x(X)))
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------

@dataclass
class SampleSet:
    """Rows of linking inputs, follower responses and feasibility labels."""

    X: np.ndarray
    Y: np.ndarray
    input_names: list[str]
    output_names: list[str]
    y_f: np.ndarray | None = None
    split: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if self.X.shape[0] == 1 and len(self.input_names) != self.X.shape[1]:
            self.X = self.X.T
        n = self.X.shape[0]
        self.Y = np.asarray(self.Y, dtype=float).reshape(n, -1) if self.Y is not None and np.size(self.Y) else np.zeros((n, 0))
        if self.y_f is not None:
            self.y_f = np.asarray(self.y_f, dtype=float).reshape(-1)
            finite = ~np.isnan(self.y_f)
            if not np.all(np.isin(self.y_f[finite], (-1.0, 1.0))):
                raise ValueError("feasibility labels must be -1 or +1")
        if self.split is None:
            self.split = np.array(["train"] * n, dtype=object)
        else:
            self.split = np.asarray(self.split, dtype=object)
            bad = set(self.split) - set(SPLITS)
            if bad:
                raise ValueError(f"unknown split tags {bad}")

    def __len__(self) -> int:
        return self.X.shape[0]

    def subset(self, tag: str) -> "SampleSet":
        m = self.split == tag
        return SampleSet(self.X[m], self.Y[m], self.input_names, self.output_names,
                         None if self.y_f is None else self.y_f[m], self.split[m])

    def assign_splits(self, seed: int = 0, ratios=(0.70, 0.15, 0.15)) -> "SampleSet":
        """Random disjoint train/validation/test tags (returns a new set)."""
        n = len(self)
        rng = np.random.default_rng(seed)
        perm = rng.permutation(n)
        n_tr = int(round(ratios[0] * n))
        n_va = int(round(ratios[1] * n))
        split = np.empty(n, dtype=object)
        split[perm[:n_tr]] = "train"
        split[perm[n_tr:n_tr + n_va]] = "validation"
        split[perm[n_tr + n_va:]] = "test"
        return SampleSet(self.X, self.Y, self.input_names, self.output_names, self.y_f, split)

    def to_csv(self, path) -> None:
        header = ([f"x_s.{n}" for n in self.input_names]
                  + [f"y_c.{n}" for n in self.output_names] + ["y_f", "split"])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(len(self)):
                yf = "" if self.y_f is None or np.isnan(self.y_f[k]) else repr(float(self.y_f[k]))
                w.writerow([repr(float(v)) for v in self.X[k]]
                           + [repr(float(v)) for v in self.Y[k]] + [yf, self.split[k]])

    @classmethod
    def from_csv(cls, path) -> "SampleSet":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        xi = [k for k, h in enumerate(header) if h.startswith("x_s.")]
        yi = [k for k, h in enumerate(header) if h.startswith("y_c.")]
        fi = header.index("y_f") if "y_f" in header else None
        si = header.index("split") if "split" in header else None
        X = np.array([[float(r[k]) for k in xi] for r in body]).reshape(len(body), len(xi))
        Y = np.array([[float(r[k]) for k in yi] for r in body]).reshape(len(body), len(yi))
        y_f = None
        if fi is not None and any(r[fi] != "" for r in body):
            y_f = np.array([float(r[fi]) if r[fi] != "" else np.nan for r in body])
        split = [r[si] for r in body] if si is not None else None
        return cls(X, Y, [header[k][4:] for k in xi], [header[k][4:] for k in yi], y_f, split)


@dataclass
class TrainConfig:
    hidden: tuple[int, ...] = (5, 5)
    activation: str = "relu"
    epochs: int = 5000
    learning_rate: float = 0.01
    final_learning_rate: float = 1e-4
    seed: int = 0
    target: str = "states"  # or "feasibility"
    momentum: float = 0.9
    optimizer: str = "adam"  # or "momentum"
    restarts: int = 1  # independent inits; the lowest validation loss wins
    # loss weight of infeasible (-1) samples when fitting feasibility labels;
    # above 1 it pulls the learned boundary into the feasible side
    negative_weight: float = 1.0

    def __post_init__(self):
        if self.negative_weight <= 0:
            raise ValueError("negative_weight must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.epochs <= 0:
            raise ValueError("epochs must be positive")
        if self.learning_rate <= 0 or self.final_learning_rate <= 0:
            raise ValueError("learning rates must be positive")
        if self.activation not in ("relu", "sigmoid"):
            raise ValueError("hidden activation must be relu or sigmoid")
        if self.target not in ("states", "feasibility"):
            raise ValueError("target must be 'states' or 'feasibility'")
        self.hidden = tuple(int(h) for h in self.hidden)

    def lr(self, epoch: int) -> float:
        """Geometric decay from ``learning_rate`` to ``final_learning_rate``."""
        frac = epoch / max(self.epochs - 1, 1)
        return self.learning_rate * (self.final_learning_rate / self.learning_rate) ** frac


def parse_arch(arch: str) -> tuple[int, ...]:
    """``"2x5"`` -> ``(5, 5)``; ``"16:8"`` -> ``(16, 8)``."""
    if "x" in arch:
        depth, width = arch.split("x")
        sizes = (int(width),) * int(depth)
    else:
        sizes = tuple(int(p) for p in arch.replace(",", ":").split(":"))
    if not sizes or min(sizes) <= 0:
        raise ValueError(f"bad architecture {arch!r}")
    return sizes


def _targets(data: SampleSet, cfg: TrainConfig) -> tuple[np.ndarray, list[str]]:
    if cfg.target == "feasibility":
        if data.y_f is None:
            raise ValueError("feasibility training needs y_f labels")
        return data.y_f.reshape(-1, 1), ["y_f"]
    return data.Y, list(data.output_names)


def loss_and_grads(layers: list[Layer], X: np.ndarray, Y: np.ndarray, weights: np.ndarray | None = None):
    """Mean squared error over all entries and its parameter gradients.

    Optional per-sample ``weights`` turn it into a weighted mean over rows.
    """
    zs, pre = [X], []
    z = X
    for layer in layers:
        a = z @ layer.weights.T + layer.biases
        z = _act(layer.activation, a)
        pre.append(a)
        zs.append(z)
    err = z - Y
    if weights is None:
        loss = float(np.mean(err ** 2))
        delta = 2.0 * err / err.size
    else:
        w = np.asarray(weights, dtype=float).reshape(-1, 1) / (np.sum(weights) * err.shape[1])
        loss = float(np.sum(w * err ** 2))
        delta = 2.0 * w * err
    grads = []
    for k in range(len(layers) - 1, -1, -1):
        layer = layers[k]
        delta = delta * _act_grad(layer.activation, pre[k], zs[k + 1])
        gW = delta.T @ zs[k]
        gb = delta.sum(axis=0)
        grads.append((gW, gb))
        delta = delta @ layer.weights
    grads.reverse()
    return loss, grads


def _init_layers(sizes: list[int], activation: str, Xn: np.ndarray, rng) -> list[Layer]:
    layers = []
    h = Xn
    for k in range(len(sizes) - 1):
        fan_in, fan_out = sizes[k], sizes[k + 1]
        lim = math.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-lim, lim, size=(fan_out, fan_in))
        hidden = k < len(sizes) - 2
        if hidden and activation == "relu":
            # place each neuron's kink on a training point so none starts dead
            rows = rng.integers(0, h.shape[0], size=fan_out)
            b = -np.einsum("ij,ij->i", W, h[rows])
        else:
            b = np.zeros(fan_out)
        layer = Layer(W, b, activation if hidden else "linear")
        layers.append(layer)
        h = _act(layer.activation, h @ W.T + b)
    return layers


def nn_train(data: SampleSet, cfg: TrainConfig) -> tuple[NeuralNet, dict]:
    """Fit a network to the train split by full-batch first-order descent.

    Returns the trained net and learning curves (per-epoch train and
    validation MSE in normalised units).
    """
    train = data.subset("train")
    if len(train) == 0:
        raise ValueError("the train split is empty")
    Y_all, out_names = _targets(data, cfg)
    Ytr = Y_all[data.split == "train"]
    if not np.all(np.isfinite(Ytr)) or not np.all(np.isfinite(train.X)):
        raise ValueError("training data must be finite")
    x_lo, x_hi = train.X.min(axis=0), train.X.max(axis=0)
    y_lo, y_hi = Ytr.min(axis=0), Ytr.max(axis=0)
    # the input box is a property of the sampled domain, not of the labels
    box = [(float(a), float(b)) for a, b in zip(data.X.min(axis=0), data.X.max(axis=0))]
    proto = NeuralNet([Layer(np.zeros((len(out_names), train.X.shape[1])), np.zeros(len(out_names)), "linear")],
                      list(data.input_names), out_names, x_lo, x_hi, y_lo, y_hi, box)
    Xn, Yn = proto.normalize_x(train.X), proto.normalize_y(Ytr)
    val_mask = data.split == "validation"
    Xv = proto.normalize_x(data.X[val_mask])
    Yv = proto.normalize_y(Y_all[val_mask])

    sizes = [train.X.shape[1], *cfg.hidden, len(out_names)]
    weights = None
    if cfg.target == "feasibility" and cfg.negative_weight != 1.0:
        weights = np.where(Ytr[:, 0] < 0, cfg.negative_weight, 1.0)
    best = None
    for k in range(cfg.restarts):
        rng = np.random.default_rng(cfg.seed if k == 0 else [cfg.seed, k])
        with np.errstate(over="ignore", invalid="ignore"):  # divergence is checked explicitly
            layers, curves = _fit_once(_init_layers(sizes, cfg.activation, Xn, rng), cfg, Xn, Yn, Xv, Yv, weights)
        score = curves["validation"][-1] if curves["validation"] else curves["train"][-1]
        if best is None or score < best[0]:
            best = (score, layers, curves)
    _, layers, curves = best
    net = NeuralNet(layers, list(data.input_names), out_names, x_lo, x_hi, y_lo, y_hi, box)
    return net, curves


def _fit_once(layers, cfg: TrainConfig, Xn, Yn, Xv, Yv, weights=None):
    params = [(l.weights, l.biases) for l in layers]
    m1 = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
    m2 = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    curves = {"train": [], "validation": []}
    for epoch in range(cfg.epochs):
        loss, grads = loss_and_grads(layers, Xn, Yn, weights)
        if not math.isfinite(loss):
            raise TrainingDivergedError(
                f"training diverged at epoch {epoch}; lower the learning rate "
                f"(currently {cfg.learning_rate})")
        curves["train"].append(loss)
        if Xv.shape[0]:
            curves["validation"].append(float(np.mean((forward_layers(layers, Xv) - Yv) ** 2)))
        lr = cfg.lr(epoch)
        for k, (layer, (gW, gb)) in enumerate(zip(layers, grads)):
            if cfg.optimizer == "adam":
                t = epoch + 1
                for p, g, i in ((layer.weights, gW, 0), (layer.biases, gb, 1)):
                    m = m1[k][i]
                    v = m2[k][i]
                    m *= b1
                    m += (1 - b1) * g
                    v *= b2
                    v += (1 - b2) * g * g
                    p -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
            else:
                for p, g, i in ((layer.weights, gW, 0), (layer.biases, gb, 1)):
                    vel = m1[k][i]
                    vel *= cfg.momentum
                    vel -= lr * g
                    p += vel
    final = float(np.mean((forward_layers(layers, Xn) - Yn) ** 2))
    if not math.isfinite(final):
        raise TrainingDivergedError(
            f"training diverged; lower the learning rate (currently {cfg.learning_rate})")
    return layers, curves


def nn_evaluate(net: NeuralNet, data: SampleSet, split: str = "test") -> dict:
    """Test-split metrics.

    ``mse`` is per output in the net's normalised units, ``mse_raw`` in
    physical units. When the net predicts feasibility (single output named
    ``y_f``) and labels exist, ``accuracy`` is the fraction of rows whose
    prediction sign (zero counting as feasible) matches the label.
    """
    part = data.subset(split)
    if len(part) == 0:
        raise ValueError(f"the {split} split is empty")
    pred = nn_forward(net, part.X).reshape(len(part), -1)
    metrics: dict = {"n": len(part)}
    if net.output_names == ["y_f"]:
        if part.y_f is None:
            raise ValueError("feasibility net evaluated on data without labels")
        target = part.y_f.reshape(-1, 1)
    else:
        target = part.Y
    err_n = net.normalize_y(pred) - net.normalize_y(target)
    metrics["mse"] = {name: float(np.mean(err_n[:, k] ** 2)) for k, name in enumerate(net.output_names)}
    metrics["mse_mean"] = float(np.mean(err_n ** 2))
    metrics["mse_raw"] = {name: float(np.mean((pred[:, k] - target[:, k]) ** 2))
                          for k, name in enumerate(net.output_names)}
    metrics["max_abs_error"] = {name: float(np.max(np.abs(pred[:, k] - target[:, k])))
                                for k, name in enumerate(net.output_names)}
    if part.y_f is not None and net.output_names == ["y_f"]:
        labels = np.where(pred[:, 0] >= 0.0, 1.0, -1.0)
        metrics["accuracy"] = float(np.mean(labels == part.y_f))
    return metrics


def feasibility_accuracy(pred: np.ndarray, labels: np.ndarray) -> float:
    signs = np.where(np.asarray(pred) >= 0.0, 1.0, -1.0)
    return float(np.mean(signs == np.asarray(labels)))


# ---------------------------------------------------------------------------
# scikit-learn facade
# ---------------------------------------------------------------------------

class ReluNetRegressor(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`nn_train` / :func:`nn_forward`.

    ``fit`` trains on every row it is given (pass ``validation_data`` to
    record a validation curve); the fitted :class:`NeuralNet` is ``net_``.
    """

    def __init__(self, hidden_layer_sizes=(5, 5), activation="relu", epochs=5000,
                 learning_rate=0.01, final_learning_rate=1e-4, seed=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.activation = activation
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.final_learning_rate = final_learning_rate
        self.seed = seed

    def fit(self, X, y, validation_data=None):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        Y = y.reshape(len(y), -1)
        split = ["train"] * len(X)
        if validation_data is not None:
            Xv, yv = check_X_y(*validation_data, multi_output=True, y_numeric=True)
            X = np.vstack([X, Xv])
            Y = np.vstack([Y, yv.reshape(len(yv), -1)])
            split += ["validation"] * len(Xv)
        data = SampleSet(X, Y, [f"x{k}" for k in range(X.shape[1])],
                         [f"y{k}" for k in range(Y.shape[1])], split=split)
        cfg = TrainConfig(tuple(self.hidden_layer_sizes), self.activation, self.epochs,
                          self.learning_rate, self.final_learning_rate, self.seed)
        self.net_, self.curves_ = nn_train(data, cfg)
        self.n_features_in_ = X.shape[1]
        self._single_output = np.ndim(y) == 1
        return self

    def predict(self, X):
        check_is_fitted(self, "net_")
        X = check_array(X)
        out = nn_forward(self.net_, X)
        return out[:, 0] if self._single_output else out
