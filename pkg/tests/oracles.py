"""Reference implementations the package is checked against.

Nothing here imports the solver code under test: LPs and MILPs go through
scipy's HiGHS bindings, networks through a plain numpy forward pass, and the
toy follower through its closed-form envelopes.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp


def model_arrays(model):
    names = list(model.variables)
    idx = {v: k for k, v in enumerate(names)}
    n = len(names)
    c = np.zeros(n)
    for v, coef in model.objective.items():
        c[idx[v]] = coef
    A = np.zeros((len(model.constraints), n))
    lo = np.full(len(model.constraints), -np.inf)
    hi = np.full(len(model.constraints), np.inf)
    for i, con in enumerate(model.constraints):
        for v, coef in con.coeffs.items():
            A[i, idx[v]] = coef
        if con.relation in ("<=", "="):
            hi[i] = con.rhs
        if con.relation in (">=", "="):
            lo[i] = con.rhs
    lb = np.array([model.variables[v].lb for v in names])
    ub = np.array([model.variables[v].ub for v in names])
    integ = np.array([model.variables[v].kind == "binary" for v in names], dtype=int)
    return names, c, A, lo, hi, lb, ub, integ


def highs_lp(model):
    """(status, objective) of the LP relaxation via scipy.optimize.linprog."""
    names, c, A, lo, hi, lb, ub, _ = model_arrays(model)
    sign = 1.0 if model.sense == "min" else -1.0
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for a, l, h in zip(A, lo, hi):
        if l == h:
            A_eq.append(a)
            b_eq.append(h)
            continue
        if np.isfinite(h):
            A_ub.append(a)
            b_ub.append(h)
        if np.isfinite(l):
            A_ub.append(-a)
            b_ub.append(-l)
    res = linprog(sign * c, A_ub=np.array(A_ub) if A_ub else None, b_ub=b_ub or None,
                  A_eq=np.array(A_eq) if A_eq else None, b_eq=b_eq or None,
                  bounds=list(zip(lb, ub)), method="highs")
    status = {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(res.status, f"other{res.status}")
    obj = sign * res.fun + model.objective_constant if res.status == 0 else math.nan
    return status, obj


def highs_milp(model):
    names, c, A, lo, hi, lb, ub, integ = model_arrays(model)
    sign = 1.0 if model.sense == "min" else -1.0
    cons = [LinearConstraint(A, lo, hi)] if A.size else []
    res = milp(sign * c, constraints=cons, integrality=integ, bounds=Bounds(lb, ub))
    if res.status != 0:
        return "infeasible" if res.status == 2 else f"other{res.status}", math.nan
    return "optimal", sign * res.fun + model.objective_constant


def numpy_forward(weights, biases, activations, X):
    """Forward pass in raw units of a net given by per-layer arrays."""
    z = np.atleast_2d(np.asarray(X, dtype=float))
    for W, b, act in zip(weights, biases, activations):
        a = z @ np.asarray(W).T + np.asarray(b)
        if act == "relu":
            z = np.maximum(a, 0.0)
        elif act == "sigmoid":
            z = 1.0 / (1.0 + np.exp(-a))
        else:
            z = a
    return z


def toy_envelope(x: float, scenario: str) -> float | None:
    """Follower optimum of the printed toy rows (plus y >= 0) at ``x``.

    The slice is ``max(0, (3 - x)/2) <= y <= min(2, (3x - 4)/2, 12 - x)``;
    the aligned follower takes the top, the adversarial one the bottom.
    """
    lower = max(0.0, (3.0 - x) / 2.0)
    upper = min(2.0, (3.0 * x - 4.0) / 2.0, 12.0 - x)
    if lower > upper + 1e-9:  # same slack as the LP feasibility tolerance
        return None
    return upper if scenario == "aligned" else lower


def random_bounded_lp(rng, LinearModel, n=None, m=None, with_eq=True):
    """A random LP with boxed variables, so it is never unbounded."""
    n = n or int(rng.integers(2, 7))
    m = m or int(rng.integers(1, 7))
    model = LinearModel("rand")
    xs = []
    for k in range(n):
        lo = float(rng.choice([0.0, -2.0, rng.uniform(-5, 0)]))
        hi = lo + float(rng.uniform(0.5, 8.0))
        xs.append(model.add_var(f"x{k}", lo, hi))
    for i in range(m):
        coeffs = {v: float(rng.integers(-5, 6)) for v in xs if rng.random() < 0.7}
        if not coeffs:
            coeffs = {xs[0]: 1.0}
        rel = rng.choice(["<=", ">=", "="] if with_eq and i == 0 else ["<=", ">="])
        model.add_constraint(coeffs, str(rel), float(rng.integers(-6, 10)), f"r{i}")
    model.set_objective({v: float(rng.integers(-5, 6)) for v in xs}, str(rng.choice(["min", "max"])))
    return model


def random_milp(rng, LinearModel, max_binaries=12):
    """Mixed model with boxed continuous variables and up to ``max_binaries`` binaries."""
    nb = int(rng.integers(1, max_binaries + 1))
    nc = int(rng.integers(1, 5))
    m = int(rng.integers(2, 8))
    model = LinearModel("rand-milp")
    bs = [model.add_var(f"b{k}", kind="binary") for k in range(nb)]
    cs = [model.add_var(f"c{k}", 0.0, float(rng.uniform(1, 6))) for k in range(nc)]
    for i in range(m):
        coeffs = {v: float(rng.integers(-6, 7)) for v in bs + cs if rng.random() < 0.5}
        if not coeffs:
            coeffs = {bs[0]: 1.0}
        model.add_constraint(coeffs, str(rng.choice(["<=", ">="])), float(rng.integers(-4, 9)), f"r{i}")
    # linking rows in the style of the encoders: continuous gated by a binary
    for k, c in enumerate(cs):
        model.add_constraint({c: 1.0, bs[k % nb]: -model.variables[c].ub}, "<=", 0.0, f"gate{k}")
    model.set_objective({v: float(rng.normal() * 3) for v in bs + cs}, str(rng.choice(["min", "max"])))
    return model
