"""Batch reactor A -> B -> C under a utility control, and its optimal control.

Dynamics (``k = beta * u**alpha``)::

    dA/dt = -u A
    dB/dt =  u A - k B
    dC/dt =  k B

The control level picks the batch time ``t_f`` and a piecewise-constant
``u`` on ``n`` equal segments to minimise ``w_t * t_f + w_q * Q`` where
``Q = V**2 * integral(u)``. Targets: ``C(t_f) = 2.5`` and ``B(t_f) >= 13``
by default (see :class:`ReactorParams.b_terminal`).

Two integrators live here. :func:`reactor_simulate` is a fixed-step RK4
used for validation; the optimiser uses the exact per-segment solution of
the linear system (:func:`terminal_state`), which the tests check against
RK4.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize

from .neural import SampleSet


class ReactorInfeasibleError(ValueError):
    pass


@dataclass(frozen=True)
class ReactorParams:
    c_a0: float = 17.0
    c_b_target: float = 13.0
    c_c_target: float = 2.5
    beta: float = 0.065
    alpha: float = 0.8
    u_min: float = 1.0
    u_max: float = 9.0
    w_time: float = 1.2
    w_utility: float = 0.5
    # "ge": B(t_f) >= target; "eq": B(t_f) = target (jointly unreachable
    # with the C target for u >= 1, kept so that can be demonstrated)
    b_terminal: str = "ge"
    tol: float = 1e-3

    def __post_init__(self):
        for name in ("c_a0", "c_b_target", "c_c_target", "beta", "alpha", "u_max",
                     "w_time", "w_utility", "tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.u_min < 0 or self.u_min > self.u_max:
            raise ValueError("need 0 <= u_min <= u_max")
        if self.b_terminal not in ("ge", "eq"):
            raise ValueError("b_terminal must be 'ge' or 'eq'")

    def rate(self, u):
        return self.beta * np.power(u, self.alpha)


@dataclass(frozen=True)
class ControlProfile:
    t_f: float
    u: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "u", tuple(float(v) for v in np.atleast_1d(self.u)))
        if not self.t_f > 0:
            raise ValueError("t_f must be positive")
        if not self.u:
            raise ValueError("profile needs at least one segment")

    @property
    def n(self) -> int:
        return len(self.u)

    @property
    def dt(self) -> float:
        return self.t_f / self.n

    def integral(self) -> float:
        return float(sum(self.u) * self.dt)

    def check(self, params: ReactorParams) -> None:
        lo, hi = params.u_min - 1e-12, params.u_max + 1e-12
        if any(v < lo or v > hi for v in self.u):
            raise ValueError(f"control values must lie in [{params.u_min}, {params.u_max}]")


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray  # (len(t), 3): A, B, C

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]


@dataclass
class OracleResult:
    V: float
    t_f: float
    Q: float
    objective: float
    profile: ControlProfile
    feasible: bool
    terminal: tuple[float, float, float] = (math.nan, math.nan, math.nan)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["profile"] = {"t_f": self.profile.t_f, "u": list(self.profile.u)}
        d["terminal"] = list(self.terminal)
        return d


# ---------------------------------------------------------------------------
# Integration
# ---------------------------------------------------------------------------

def _rhs(params: ReactorParams, u: float, y: np.ndarray) -> np.ndarray:
    k = params.beta * u ** params.alpha
    a, b = y[..., 0], y[..., 1]
    return np.stack([-u * a, u * a - k * b, k * b], axis=-1)


def reactor_simulate(params: ReactorParams, profile: ControlProfile, steps: int = 400,
                     check_bounds: bool = True) -> Trajectory:
    """Fixed-step RK4 over ``[0, t_f]``.

    ``steps`` is rounded up to a multiple of the segment count so control
    switches fall on grid points. ``check_bounds=False`` allows controls
    outside the admissible box (used to probe the dynamics).
    """
    if steps < 400:
        raise ValueError("at least 400 steps are required")
    if check_bounds:
        profile.check(params)
    per_seg = -(-steps // profile.n)
    h = profile.dt / per_seg
    y = np.array([params.c_a0, 0.0, 0.0])
    out = [y]
    for u in profile.u:
        for _ in range(per_seg):
            k1 = _rhs(params, u, y)
            k2 = _rhs(params, u, y + 0.5 * h * k1)
            k3 = _rhs(params, u, y + 0.5 * h * k2)
            k4 = _rhs(params, u, y + h * k3)
            y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            out.append(y)
    t = np.linspace(0.0, profile.t_f, per_seg * profile.n + 1)
    return Trajectory(t, np.array(out))


def _segment(params: ReactorParams, u: float, dt, a, b, total):
    """Exact state after holding ``u`` for ``dt`` (vectorised over dt/a/b)."""
    k = params.beta * u ** params.alpha
    eu, ek = np.exp(-u * dt), np.exp(-k * dt)
    a1 = a * eu
    b1 = b * ek + u * a * (eu - ek) / (k - u)
    return a1, b1, total - a1 - b1


def terminal_state(params: ReactorParams, u, t_f) -> np.ndarray:
    """Exact (A, B, C) at ``t_f`` for piecewise-constant ``u`` on equal segments."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    dt = np.asarray(t_f, dtype=float) / u.size
    a = np.full(np.shape(dt), params.c_a0)
    b = np.zeros(np.shape(dt))
    c = np.zeros(np.shape(dt))
    for v in u:
        a, b, c = _segment(params, v, dt, a, b, params.c_a0)
    return np.stack([a, b, c], axis=-1)


def time_to_target(params: ReactorParams, u) -> float:
    """The unique ``t_f`` at which C reaches its target under profile shape ``u``."""
    target = params.c_c_target
    hi = 1.0
    while terminal_state(params, u, hi)[2] < target:
        hi *= 2.0
        if hi > 1e6:
            raise ReactorInfeasibleError("C target unreachable")
    return brentq(lambda t: terminal_state(params, u, t)[2] - target, 0.0, hi,
                  xtol=1e-14, rtol=1e-14, maxiter=200)


def _residual(params: ReactorParams, state) -> float:
    """Largest terminal-constraint violation."""
    b_gap = params.c_b_target - state[1]
    if params.b_terminal == "eq":
        b_gap = abs(b_gap)
    return max(abs(state[2] - params.c_c_target), max(b_gap, 0.0))


def control_objective(params: ReactorParams, V: float, profile: ControlProfile) -> float:
    return params.w_time * profile.t_f + params.w_utility * V * V * profile.integral()


# ---------------------------------------------------------------------------
# Optimal control
# ---------------------------------------------------------------------------

def _starts(params: ReactorParams, n: int, seed: int, count: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    mid = np.full(n, 0.5 * (params.u_min + params.u_max))
    rand = rng.uniform(params.u_min, params.u_max, size=(count - 1, n))
    return np.vstack([mid, rand])


def reactor_optimize(V: float, params: ReactorParams | None = None, n: int = 4,
                     seed: int = 0, starts: int = 8) -> OracleResult:
    """Minimum-cost control for batch size ``V``.

    ``t_f`` is eliminated exactly: for a control shape, the C target fixes
    the batch time (C(t_f) is increasing in t_f). The B condition is a
    quadratic penalty whose weight grows by x10 (up to 1e8) until the
    residual is within ``params.tol``. Each weight runs bounded Nelder-Mead
    from ``starts`` seeded points; the best point wins.
    """
    params = params or ReactorParams()
    if not V > 0:
        raise ValueError("V must be positive")
    VV = V * V
    u_box = [(params.u_min, params.u_max)] * n

    def cost(u, weight):
        u = np.clip(u, params.u_min, params.u_max)
        t_f = time_to_target(params, u)
        state = terminal_state(params, u, t_f)
        gap = params.c_b_target - state[1]
        if params.b_terminal == "ge":
            gap = max(gap, 0.0)
        return params.w_time * t_f + params.w_utility * VV * t_f * float(np.mean(u)) + weight * gap * gap

    x0s = _starts(params, n, seed, starts)
    weight = 10.0
    best = None
    while True:
        cands = []
        for x0 in x0s:
            res = minimize(cost, x0, args=(weight,), method="Nelder-Mead", bounds=u_box,
                           options={"xatol": 1e-7, "fatol": 1e-10, "maxiter": 4000})
            cands.append((res.fun, tuple(np.clip(res.x, params.u_min, params.u_max))))
        cands.sort()
        best = np.array(cands[0][1])
        t_f = time_to_target(params, best)
        state = terminal_state(params, best, t_f)
        if _residual(params, state) <= params.tol or weight >= 1e8:
            break
        weight *= 10.0
        x0s = np.vstack([best, x0s[1:]])
    profile = ControlProfile(t_f, tuple(best))
    feasible = _residual(params, state) <= params.tol
    Q = VV * profile.integral()
    return OracleResult(float(V), float(t_f), float(Q), control_objective(params, V, profile),
                        profile, bool(feasible), tuple(float(s) for s in state))


def sample_reactor_dataset(mesh, params: ReactorParams | None = None, n: int = 4,
                           seed: int = 0, split_seed: int = 0) -> SampleSet:
    """One oracle solve per mesh point: V -> (t_f, Q).

    ``mesh`` is either a sequence of batch sizes or an integer count of
    equispaced points in ``(0, 7.5]``. Rows get 70/15/15 split tags.
    """
    params = params or ReactorParams()
    if isinstance(mesh, (int, np.integer)):
        mesh = np.linspace(7.5 / mesh, 7.5, int(mesh))
    mesh = np.asarray(mesh, dtype=float)
    if np.any(mesh <= 0) or np.any(mesh > 7.5 + 1e-12):
        raise ValueError("mesh points must lie in (0, 7.5]")
    rows = []
    for V in mesh:
        res = reactor_optimize(float(V), params, n=n, seed=seed)
        if not res.feasible:
            raise ReactorInfeasibleError(f"oracle infeasible at V={V}")
        rows.append((res.t_f, res.Q))
    data = SampleSet(mesh[:, None], np.array(rows), ["V"], ["t_f", "Q"])
    return data.assign_splits(split_seed) if len(mesh) >= 3 else data


def min_integral_at_time(t_f: float, params: ReactorParams | None = None, n: int = 4,
                         seed: int = 0, starts: int = 8) -> tuple[float, ControlProfile]:
    """Least ``integral(u)`` that meets the terminal targets at a fixed ``t_f``.

    Raises :class:`ReactorInfeasibleError` when ``t_f`` lies outside the
    window reachable with admissible controls.
    """
    params = params or ReactorParams()
    if not t_f > 0:
        raise ValueError("t_f must be positive")
    t_lo = time_to_target(params, [params.u_max])
    t_hi = time_to_target(params, [params.u_min])
    if t_f < t_lo - 1e-9:
        raise ReactorInfeasibleError(
            f"t_f={t_f:.4g} h is shorter than the fastest admissible batch ({t_lo:.4g} h)")
    if t_f > t_hi + 1e-9:
        raise ReactorInfeasibleError(
            f"t_f={t_f:.4g} h exceeds the slowest admissible batch ({t_hi:.4g} h)")
    u_box = [(params.u_min, params.u_max)] * n

    def penalised(u, weight):
        u = np.clip(u, params.u_min, params.u_max)
        state = terminal_state(params, u, t_f)
        gap_b = params.c_b_target - state[1]
        gap_b = abs(gap_b) if params.b_terminal == "eq" else max(gap_b, 0.0)
        gap_c = state[2] - params.c_c_target
        return t_f * float(np.mean(u)) + weight * (gap_b * gap_b + gap_c * gap_c)

    # constant control meeting the C target exactly
    const = brentq(lambda v: terminal_state(params, [v], t_f)[2] - params.c_c_target,
                   params.u_min, params.u_max, xtol=1e-14) if t_lo < t_f < t_hi else \
        (params.u_max if t_f <= t_lo else params.u_min)
    x0s = np.vstack([np.full(n, const), _starts(params, n, seed, starts)[1:]])
    weight = 10.0
    while True:
        cands = []
        for x0 in x0s:
            res = minimize(penalised, x0, args=(weight,), method="Nelder-Mead", bounds=u_box,
                           options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 4000})
            cands.append((res.fun, tuple(np.clip(res.x, params.u_min, params.u_max))))
        cands.sort()
        best = np.array(cands[0][1])
        state = terminal_state(params, best, t_f)
        if _residual(params, state) <= params.tol * 1e-2 or weight >= 1e8:
            break
        weight *= 10.0
        x0s = np.vstack([best, x0s[1:]])
    if _residual(params, state) > params.tol:
        raise ReactorInfeasibleError(f"no admissible control meets the targets at t_f={t_f:.4g}")
    profile = ControlProfile(t_f, tuple(best))
    return profile.integral(), profile


def invert_reactor(t_f_pred: float, Q_pred: float, params: ReactorParams | None = None,
                   n: int = 4) -> float:
    """Batch size actually processed given a predicted time and utility.

    ``V = sqrt(Q_pred / I*)`` with ``I*`` the least control integral that
    reaches the targets in exactly ``t_f_pred``.
    """
    if not (t_f_pred > 0 and Q_pred > 0):
        raise ValueError("t_f_pred and Q_pred must be positive")
    integral, _ = min_integral_at_time(t_f_pred, params, n=n)
    return math.sqrt(Q_pred / integral)


# ---------------------------------------------------------------------------
# Synthetic lower level with a known feasible set
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticRegion:
    """Feasible set = disk intersected with a half-plane, inside a box."""

    center: tuple[float, float] = (0.5, 0.5)
    radius: float = 0.35
    normal: tuple[float, float] = (1.0, 1.0)
    offset: float = 1.15  # normal . x <= offset
    box: tuple[tuple[float, float], tuple[float, float]] = ((0.0, 1.0), (0.0, 1.0))

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = x - np.asarray(self.center)
        in_disk = np.einsum("ij,ij->i", d, d) <= self.radius ** 2
        in_half = x @ np.asarray(self.normal) <= self.offset
        return in_disk & in_half

    def label(self, x) -> np.ndarray:
        return np.where(self.contains(x), 1.0, -1.0)


def synthetic_feasible_region(points=None, region: SyntheticRegion | None = None,
                              mesh: int = 40, split_seed: int = 0) -> SampleSet:
    """Label points (default: a regular ``mesh x mesh`` grid) by exact membership."""
    region = region or SyntheticRegion()
    if points is None:
        axes = [np.linspace(lo, hi, mesh) for lo, hi in region.box]
        g0, g1 = np.meshgrid(*axes, indexing="ij")
        points = np.column_stack([g0.ravel(), g1.ravel()])
    points = np.atleast_2d(np.asarray(points, dtype=float))
    data = SampleSet(points, np.zeros((len(points), 0)), ["x1", "x2"], [], region.label(points))
    return data.assign_splits(split_seed) if len(points) >= 3 else data
