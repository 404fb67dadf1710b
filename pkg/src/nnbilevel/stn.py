"""Continuous-time State Task Network (unit-specific events) as a MILP.

Each (task, unit) pair owns, per event ``n = 1..N``, an assignment binary
``wv``, a batch size ``V``, start/finish times ``Ts``/``Tf`` and a
processing time ``tp``. A task's duration is either a linear law in ``V``
or comes from a ReLU surrogate ``V -> (t_f, Q)`` routed through linking
blocks so idle events carry zero time and zero utility.

Material is bought once before event 1, consumed at the event a task
runs and released one event later; a closing balance ``N + 1`` lets the
last event's output reach the market.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .encoding import encode_linking, encode_relu_network, propagate_bounds, tighten_bounds
from .lp import LinearModel, ModelError
from .milp import MILPOutcome
from .neural import NeuralNet

CASE1 = {
    "name": "case1",
    "events": 5,
    "horizon": 12.0,
    "states": {
        "s1": {"buy": 60.0, "sell": 0.0, "initial": 0.0},
        "s2": {"buy": 0.0, "sell": 0.0, "initial": 0.0},
        "s3": {"buy": 0.0, "sell": 0.0, "initial": 0.0},
        "s4": {"buy": 0.0, "sell": 0.0, "initial": 0.0},
        "s5": {"buy": 0.0, "sell": 120.0, "initial": 0.0},
    },
    "tasks": {
        "mixing": {"consumes": {"s1": 1.0}, "produces": {"s2": 1.0},
                   "units": {"mixer": {"vmin": 2.0, "vmax": 5.0}},
                   "duration": {"per_volume": 1.0}},
        "reaction": {"consumes": {"s2": 1.0}, "produces": {"s3": 1.0},
                     "units": {"reactor": {"vmin": 2.0, "vmax": 5.0}},
                     "duration": {"surrogate": True}},
        "separation": {"consumes": {"s3": 1.0}, "produces": {"s4": 0.1, "s5": 0.9},
                       "units": {"separator": {"vmin": 2.0, "vmax": 5.0}},
                       "duration": {"per_volume": 1.2}},
    },
    "surrogate_box": [0.0, 7.5],
    "min_sales": {},
}


@dataclass
class StnConfig:
    name: str
    events: int
    horizon: float
    states: dict
    tasks: dict
    surrogate_box: list = field(default_factory=lambda: [0.0, 7.5])
    min_sales: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.events < 0:
            raise ValueError("events must be nonnegative")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        for s, info in self.states.items():
            for key in ("buy", "sell"):
                if key not in info:
                    raise ValueError(f"state {s!r} lacks a {key} price")
        for i, t in self.tasks.items():
            for side in ("consumes", "produces"):
                fr = t[side]
                if any(s not in self.states for s in fr):
                    raise ValueError(f"task {i!r} references an unknown state")
                if any(not 0.0 <= v <= 1.0 for v in fr.values()):
                    raise ValueError(f"task {i!r}: fractions must lie in [0, 1]")
                if abs(sum(fr.values()) - 1.0) > 1e-9:
                    raise ValueError(f"task {i!r}: {side} fractions must sum to 1")
            for j, cap in t["units"].items():
                if cap["vmin"] > cap["vmax"]:
                    raise ValueError(f"({i}, {j}): vmin > vmax")
        if self.surrogate_box[0] > self.surrogate_box[1]:
            raise ValueError("surrogate box is empty")

    @classmethod
    def case1(cls, **overrides) -> "StnConfig":
        d = json.loads(json.dumps(CASE1))
        d.update(overrides)
        return cls(**d)

    @property
    def pairs(self) -> list[tuple[str, str]]:
        return [(i, j) for i, t in self.tasks.items() for j in t["units"]]

    @property
    def units(self) -> list[str]:
        out = []
        for _, j in self.pairs:
            if j not in out:
                out.append(j)
        return out

    def tasks_of(self, unit: str) -> list[str]:
        return [i for i, j in self.pairs if j == unit]

    def surrogate_tasks(self) -> list[str]:
        return [i for i, t in self.tasks.items() if t["duration"].get("surrogate")]

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "StnConfig":
        return cls(**json.loads(Path(path).read_text()))


@dataclass
class StnHandles:
    """Variable names of the built model, keyed by index tuples (JSON-able)."""

    config: dict
    wv: dict = field(default_factory=dict)  # "i|j|n" -> name
    yv: dict = field(default_factory=dict)  # "j|n"
    V: dict = field(default_factory=dict)
    Ts: dict = field(default_factory=dict)
    Tf: dict = field(default_factory=dict)
    tp: dict = field(default_factory=dict)
    Q: dict = field(default_factory=dict)
    ST: dict = field(default_factory=dict)  # "s|n"
    sales: dict = field(default_factory=dict)  # "s|n"
    buy: dict = field(default_factory=dict)  # "s"
    surrogate_rows: dict = field(default_factory=dict)  # "i|j|n" -> relu row count

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "StnHandles":
        return cls(**d)


def _key(*parts) -> str:
    return "|".join(str(p) for p in parts)


def build_stn_model(cfg: StnConfig, states_net: NeuralNet | None = None,
                    bound_method: str = "exact") -> tuple[LinearModel, StnHandles]:
    """Assemble the scheduling MILP (maximise profit).

    ``bound_method`` picks the surrogate's neuron bounds: ``"interval"``
    propagation or ``"exact"`` per-neuron optimisation over the surrogate
    box. Both are valid; the exact ones give a much stronger relaxation.
    """
    if bound_method not in ("exact", "interval"):
        raise ValueError("bound_method must be 'exact' or 'interval'")
    if cfg.surrogate_tasks():
        if states_net is None:
            raise ModelError("a surrogate-driven task needs a states net")
        if states_net.input_names != ["V"] or states_net.output_names != ["t_f", "Q"]:
            raise ModelError("states net must map (V) -> (t_f, Q)")
    m = LinearModel(f"stn-{cfg.name}-N{cfg.events}")
    h = StnHandles(cfg.to_dict())
    N, H = cfg.events, float(cfg.horizon)
    events = range(1, N + 1)
    bound_cache: dict = {}

    def surrogate_bounds(vmax: float):
        # V never leaves [0, vmax], so bounds over the clipped box stay valid
        box = [(cfg.surrogate_box[0], min(cfg.surrogate_box[1], vmax))]
        if box[0] not in bound_cache:
            b = propagate_bounds(states_net, box)
            bound_cache[box[0]] = tighten_bounds(states_net, box, b) if bound_method == "exact" else b
        return bound_cache[box[0]]

    for i, j in cfg.pairs:
        cap = cfg.tasks[i]["units"][j]
        for n in events:
            k = _key(i, j, n)
            h.wv[k] = m.add_var(f"wv[{i},{j},{n}]", kind="binary")
            h.V[k] = m.add_var(f"V[{i},{j},{n}]", 0.0, cap["vmax"])
            h.Ts[k] = m.add_var(f"Ts[{i},{j},{n}]", 0.0, H)
            h.Tf[k] = m.add_var(f"Tf[{i},{j},{n}]", 0.0, H)
            h.tp[k] = m.add_var(f"tp[{i},{j},{n}]", 0.0, H)
    for j in cfg.units:
        for n in events:
            h.yv[_key(j, n)] = m.add_var(f"yv[{j},{n}]", kind="binary")

    # allocation
    for j in cfg.units:
        for n in events:
            coeffs = {h.wv[_key(i, j, n)]: 1.0 for i in cfg.tasks_of(j)}
            coeffs[h.yv[_key(j, n)]] = -1.0
            m.add_constraint(coeffs, "=", 0.0, f"alloc[{j},{n}]", "alloc")

    # capacity, gated by assignment
    for i, j in cfg.pairs:
        cap = cfg.tasks[i]["units"][j]
        for n in events:
            k = _key(i, j, n)
            m.add_constraint({h.V[k]: 1.0, h.wv[k]: -cap["vmin"]}, ">=", 0.0, f"capmin[{k}]", "capacity")
            m.add_constraint({h.V[k]: 1.0, h.wv[k]: -cap["vmax"]}, "<=", 0.0, f"capmax[{k}]", "capacity")

    # durations
    for i, j in cfg.pairs:
        law = cfg.tasks[i]["duration"]
        for n in events:
            k = _key(i, j, n)
            m.add_constraint({h.Tf[k]: 1.0, h.Ts[k]: -1.0, h.tp[k]: -1.0}, "=", 0.0, f"finish[{k}]", "duration")
            if law.get("surrogate"):
                prefix = f"nn[{i},{j},{n}]"
                bounds = surrogate_bounds(cfg.tasks[i]["units"][j]["vmax"])
                enc = encode_relu_network(m, states_net, bounds, prefix=prefix, inputs=[h.V[k]])
                h.surrogate_rows[k] = len(enc.relu_rows)
                t_out, q_out = enc.outputs
                encode_linking(m, t_out, h.wv[k], x_0=h.Ts[k], name=f"link_t[{k}]", x_1=h.Tf[k])
                q_max = max(m.variables[q_out].ub, 0.0)
                h.Q[k] = m.add_var(f"Q[{i},{j},{n}]", min(m.variables[q_out].lb, 0.0), q_max)
                encode_linking(m, q_out, h.wv[k], None, name=f"link_q[{k}]", x_1=h.Q[k])
            else:
                coeffs = {h.tp[k]: 1.0, h.V[k]: -float(law.get("per_volume", 0.0))}
                if law.get("fixed", 0.0):
                    coeffs[h.wv[k]] = -float(law["fixed"])
                m.add_constraint(coeffs, "=", 0.0, f"tp[{k}]", "duration")

    # material balances
    for s, info in cfg.states.items():
        h.ST[_key(s, 0)] = m.add_var(f"ST[{s},0]", 0.0)
        rhs0 = float(info.get("initial", 0.0))
        coeffs = {h.ST[_key(s, 0)]: 1.0}
        if info["buy"] > 0:
            h.buy[s] = m.add_var(f"buy[{s}]", 0.0)
            coeffs[h.buy[s]] = -1.0
        m.add_constraint(coeffs, "=", rhs0, f"balance[{s},0]", "balance")
        for n in range(1, N + 2):
            h.ST[_key(s, n)] = m.add_var(f"ST[{s},{n}]", 0.0)
            coeffs = {h.ST[_key(s, n)]: 1.0, h.ST[_key(s, n - 1)]: -1.0}
            if info["sell"] > 0 or s in cfg.min_sales:
                h.sales[_key(s, n)] = m.add_var(f"d[{s},{n}]", 0.0)
                coeffs[h.sales[_key(s, n)]] = 1.0
            for i, j in cfg.pairs:
                t = cfg.tasks[i]
                if n <= N and s in t["consumes"]:
                    coeffs[h.V[_key(i, j, n)]] = coeffs.get(h.V[_key(i, j, n)], 0.0) + t["consumes"][s]
                if n >= 2 and s in t["produces"]:
                    v = h.V[_key(i, j, n - 1)]
                    coeffs[v] = coeffs.get(v, 0.0) - t["produces"][s]
            m.add_constraint(coeffs, "=", 0.0, f"balance[{s},{n}]", "balance")
    for s, amount in cfg.min_sales.items():
        m.add_constraint({h.sales[_key(s, n)]: 1.0 for n in range(1, N + 2)}, ">=", float(amount),
                         f"demand[{s}]", "demand")

    # sequencing
    def gate(i, j, n):
        return {h.wv[_key(i, j, n)]: H, h.yv[_key(j, n)]: H}

    for n in range(1, N):
        for i, j in cfg.pairs:
            k, k1 = _key(i, j, n), _key(i, j, n + 1)
            # same unit, same or different task
            for i2 in cfg.tasks_of(j):
                k2 = _key(i2, j, n)
                coeffs = {h.Ts[k1]: 1.0, h.Tf[k2]: -1.0}
                for v, c in gate(i2, j, n).items():
                    coeffs[v] = coeffs.get(v, 0.0) - c
                m.add_constraint(coeffs, ">=", -2 * H, f"seq_unit[{i},{i2},{j},{n}]", "sequence")
            m.add_constraint({h.Ts[k1]: 1.0, h.Ts[k]: -1.0}, ">=", 0.0, f"mono_s[{k}]", "sequence")
            m.add_constraint({h.Tf[k1]: 1.0, h.Tf[k]: -1.0}, ">=", 0.0, f"mono_f[{k}]", "sequence")
            # producer on another unit feeding this task
            feeds = set(cfg.tasks[i]["consumes"])
            for i2, j2 in cfg.pairs:
                if j2 == j or not feeds & set(cfg.tasks[i2]["produces"]):
                    continue
                coeffs = {h.Ts[k1]: 1.0, h.Tf[_key(i2, j2, n)]: -1.0}
                for v, c in gate(i2, j2, n).items():
                    coeffs[v] = coeffs.get(v, 0.0) - c
                m.add_constraint(coeffs, ">=", -2 * H, f"seq_feed[{i},{i2},{n}]", "sequence")
            # cumulative busy time on the unit
            coeffs = {h.Ts[k1]: 1.0}
            for n2 in range(1, n + 1):
                for i2 in cfg.tasks_of(j):
                    coeffs[h.tp[_key(i2, j, n2)]] = coeffs.get(h.tp[_key(i2, j, n2)], 0.0) - 1.0
            m.add_constraint(coeffs, ">=", 0.0, f"busy[{i},{j},{n}]", "sequence")

    # objective
    obj: dict[str, float] = {}
    for key, name in h.sales.items():
        s = key.split("|")[0]
        if cfg.states[s]["sell"]:
            obj[name] = float(cfg.states[s]["sell"])
    for s, name in h.buy.items():
        obj[name] = -float(cfg.states[s]["buy"])
    for name in h.Q.values():
        obj[name] = obj.get(name, 0.0) - 1.0
    m.set_objective(obj, "max")
    return m, h


# ---------------------------------------------------------------------------
# Schedules
# ---------------------------------------------------------------------------

class ScheduleError(RuntimeError):
    pass


@dataclass
class Batch:
    task: str
    unit: str
    event: int
    start: float
    finish: float
    duration: float
    volume: float
    utility: float


@dataclass
class Schedule:
    horizon: float
    batches: list[Batch]
    inventory: dict  # "s|n" -> amount
    sales: dict
    purchases: dict
    objective: float
    prices: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        d = dict(d)
        d["batches"] = [Batch(**b) for b in d["batches"]]
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "Schedule":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def batches_of(self, task: str) -> list[Batch]:
        return [b for b in self.batches if b.task == task]

    @property
    def makespan(self) -> float:
        return max((b.finish for b in self.batches), default=0.0)

    def audit_objective(self) -> float:
        revenue = sum(self.prices.get(k.split("|")[0], {}).get("sell", 0.0) * v for k, v in self.sales.items())
        cost = sum(self.prices.get(s, {}).get("buy", 0.0) * v for s, v in self.purchases.items())
        return revenue - cost - sum(b.utility for b in self.batches)


def extract_schedule(outcome: MILPOutcome, handles: StnHandles, tol: float = 1e-6) -> Schedule:
    """Typed schedule from a solved model; checks the schedule invariants."""
    if outcome.status not in ("optimal", "limit-hit") or not outcome.point:
        raise ScheduleError(f"no schedule in a {outcome.status} outcome")
    x = outcome.point
    cfg = handles.config
    H = float(cfg["horizon"])
    batches = []
    per_unit_event: dict[str, int] = {}
    for k, w in handles.wv.items():
        if x[w] < 0.5:
            continue
        i, j, n = k.split("|")
        ts, tf, tp = x[handles.Ts[k]], x[handles.Tf[k]], x[handles.tp[k]]
        if abs(tf - ts - tp) > tol:
            raise ScheduleError(f"finish[{k}] violated: Tf - Ts - tp = {tf - ts - tp:.3g}")
        if tf > H + tol or ts > H + tol:
            raise ScheduleError(f"horizon violated by {k}")
        uk = _key(j, n)
        per_unit_event[uk] = per_unit_event.get(uk, 0) + 1
        if per_unit_event[uk] > 1:
            raise ScheduleError(f"alloc[{j},{n}] violated: two tasks on one unit")
        q = x[handles.Q[k]] if k in handles.Q else 0.0
        batches.append(Batch(i, j, int(n), ts, tf, tp, x[handles.V[k]], q))
    inventory = {k: x[v] for k, v in handles.ST.items()}
    for k, v in inventory.items():
        if v < -tol:
            raise ScheduleError(f"balance[{k}] violated: negative inventory {v:.3g}")
    batches.sort(key=lambda b: (b.event, b.start, b.task, b.unit))
    sched = Schedule(
        horizon=H, batches=batches, inventory=inventory,
        sales={k: x[v] for k, v in handles.sales.items()},
        purchases={s: x[v] for s, v in handles.buy.items()},
        objective=outcome.objective,
        prices={s: {"buy": info["buy"], "sell": info["sell"]} for s, info in cfg["states"].items()},
    )
    return sched


def replay_balances(schedule: Schedule, cfg: StnConfig) -> dict:
    """Recompute inventories from batches, sales and purchases."""
    N = cfg.events
    vol = {(b.task, b.unit, b.event): b.volume for b in schedule.batches}
    out = {}
    for s, info in cfg.states.items():
        level = float(info.get("initial", 0.0)) + schedule.purchases.get(s, 0.0)
        out[_key(s, 0)] = level
        for n in range(1, N + 2):
            level -= schedule.sales.get(_key(s, n), 0.0)
            for i, j in cfg.pairs:
                t = cfg.tasks[i]
                if n <= N and s in t["consumes"]:
                    level -= t["consumes"][s] * vol.get((i, j, n), 0.0)
                if s in t["produces"]:
                    level += t["produces"][s] * vol.get((i, j, n - 1), 0.0)
            out[_key(s, n)] = level
    return out


def validate_schedule(schedule: Schedule, params=None, task: str = "reaction",
                      product_yield: float | None = None, n: int = 4) -> dict:
    """Replay each surrogate-timed batch against the control oracle.

    For every batch the oracle inverts the scheduled (duration, utility)
    into the volume those settings would really process. Production is the
    product fraction of those volumes; utility is what was scheduled.
    """
    from .dynopt import ReactorInfeasibleError, ReactorParams, invert_reactor

    params = params or ReactorParams()
    rows = []
    for b in schedule.batches_of(task):
        row = {"event": b.event, "V": b.volume, "t_p": b.duration, "Q": b.utility}
        try:
            v_act = invert_reactor(b.duration, b.utility, params, n=n)
            row.update(V_actual=v_act, rel_error=abs(v_act - b.volume) / b.volume, ok=True)
        except (ReactorInfeasibleError, ValueError) as exc:
            row.update(V_actual=None, rel_error=None, ok=False, error=str(exc))
        rows.append(row)
    good = [r for r in rows if r["ok"]]
    report = {"batches": rows, "failed": len(rows) - len(good)}
    if good:
        report["avg_rel_error"] = sum(r["rel_error"] for r in good) / len(good)
    if product_yield is not None:
        sell = {s: p["sell"] for s, p in schedule.prices.items()}
        buy = {s: p["buy"] for s, p in schedule.prices.items()}
        product = max(sell, key=sell.get)
        production = product_yield * sum(r["V_actual"] if r["ok"] else r["V"] for r in rows)
        utility = sum(r["Q"] for r in rows)
        purchase = sum(buy[s] * v for s, v in schedule.purchases.items())
        report.update(production=production, utility=utility,
                      profit=sell[product] * production - purchase - utility)
    return report
