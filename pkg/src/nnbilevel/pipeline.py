"""End-to-end drivers: the two-variable bilevel toy, Case 1, and the
feasibility-cut experiment, plus run reports and run directories."""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dynopt import ReactorParams, SyntheticRegion, sample_reactor_dataset, synthetic_feasible_region
from .encoding import add_feasibility_constraint, encode_relu_network, propagate_bounds, tighten_bounds
from .lp import LinearModel, lp_solve
from .milp import SolveOptions, milp_solve
from .neural import NeuralNet, SampleSet, TrainConfig, nn_evaluate, nn_forward, nn_train
from .stn import StnConfig, build_stn_model, extract_schedule, validate_schedule

RUNS_ENV = "NNBILEVEL_RUNS"


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


# ---------------------------------------------------------------------------
# Reports and run directories
# ---------------------------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=1) + "\n"


@dataclass
class RunReport:
    """Result of one solution route.

    Wall-clock timings live in ``timings`` and are written to a separate
    file, so the report body is reproducible byte for byte.
    """

    method: str  # monolithic | hierarchical-kkt | nn-milp
    problem: str
    objective: float
    point: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def body(self) -> dict:
        d = asdict(self)
        d.pop("timings")
        return d

    def to_json(self) -> str:
        return canonical_json(self.body())

    def summary(self) -> str:
        lines = [f"{'problem':<14}{self.problem}", f"{'method':<14}{self.method}",
                 f"{'objective':<14}{self.objective:.4f}"]
        for k in sorted(self.point):
            v = self.point[k]
            if isinstance(v, (int, float)):
                lines.append(f"{k:<14}{v:.4f}")
        for k in sorted(self.metrics):
            v = self.metrics[k]
            if isinstance(v, (int, float)):
                lines.append(f"{k:<14}{v:.6g}")
        return "\n".join(lines) + "\n"


def runs_root() -> Path:
    return Path(os.environ.get(RUNS_ENV, "runs"))


def run_directory(kind: str, config: dict) -> Path:
    """Content-addressed directory for a run of ``kind`` with ``config``."""
    digest = hashlib.sha256(canonical_json(config).encode()).hexdigest()[:12]
    path = runs_root() / f"{kind}-{digest}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_report(report: RunReport, directory: Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "report.json").write_text(report.to_json())
    (directory / "timings.json").write_text(canonical_json(report.timings))
    (directory / "summary.txt").write_text(report.summary())
    return directory / "report.json"


# ---------------------------------------------------------------------------
# Toy bilevel problem
# ---------------------------------------------------------------------------

PRINTED_ROWS = (
    # a_x * x + a_y * y <= rhs
    (-1.0, -2.0, -3.0),
    (0.0, 1.0, 2.0),
    (-3.0, 2.0, -4.0),
    (1.0, 1.0, 12.0),
)


@dataclass(frozen=True)
class ToyProblem:
    """``min_x c_x x + c_y y`` with ``y`` chosen by a linear follower.

    The follower minimises ``follower_y * y``: ``-1`` when it minimises
    ``-y`` (aligned with the leader), ``+1`` when it maximises ``-y``.
    """

    scenario: str = "aligned"
    c_x: float = 1.0
    c_y: float = -4.0
    follower_y: float = -1.0
    rows: tuple = PRINTED_ROWS
    y_nonneg: bool = True
    x_box: tuple = (0.0, 15.0)

    def __post_init__(self):
        if self.follower_y not in (-1.0, 1.0):
            raise ValueError("the follower objective must be +y or -y")
        if len(self.all_rows()) > 8:
            raise ValueError("at most 8 follower rows")

    @classmethod
    def printed(cls, scenario: str = "aligned") -> "ToyProblem":
        if scenario not in ("aligned", "adversarial"):
            raise ValueError("scenario must be 'aligned' or 'adversarial'")
        return cls(scenario=scenario, follower_y=-1.0 if scenario == "aligned" else 1.0)

    def all_rows(self) -> list[tuple[float, float, float]]:
        rows = [tuple(map(float, r)) for r in self.rows]
        if self.y_nonneg:
            rows.append((0.0, -1.0, 0.0))
        return rows

    def upper(self, x: float, y: float) -> float:
        return self.c_x * x + self.c_y * y


def follower_model(p: ToyProblem, x: float) -> LinearModel:
    m = LinearModel("follower")
    m.add_var("y", -math.inf, math.inf)
    for k, (ax, ay, rhs) in enumerate(p.all_rows()):
        m.add_constraint({"y": ay}, "<=", rhs - ax * x, f"r{k}")
    m.set_objective({"y": p.follower_y}, "min")
    return m


def follower_response(p: ToyProblem, x: float) -> float | None:
    """Follower's optimal y at ``x`` (None if the slice is empty)."""
    out = lp_solve(follower_model(p, x))
    return out.point["y"] if out.status == "optimal" else None


def feasible_x_range(p: ToyProblem, tol: float = 1e-10) -> tuple[float, float]:
    """Interval of x in the box with a nonempty follower slice (by bisection)."""
    lo, hi = p.x_box
    grid = np.linspace(lo, hi, 1001)
    feas = [x for x in grid if follower_response(p, float(x)) is not None]
    if not feas:
        raise ValueError("no x in the box admits a follower response")
    a, b = float(feas[0]), float(feas[-1])

    def edge(inside: float, outside: float) -> float:
        while abs(outside - inside) > tol:
            mid = 0.5 * (inside + outside)
            if follower_response(p, mid) is not None:
                inside = mid
            else:
                outside = mid
        return inside

    left = a if a <= lo else edge(a, max(lo, a - (grid[1] - grid[0])))
    right = b if b >= hi else edge(b, min(hi, b + (grid[1] - grid[0])))
    return left, right


def sample_toy(p: ToyProblem, mesh: int = 200, split_seed: int = 0) -> SampleSet:
    """Follower optima on ``mesh`` equispaced x over the feasible range."""
    lo, hi = feasible_x_range(p)
    xs, ys = [], []
    for x in np.linspace(lo, hi, mesh):
        y = follower_response(p, float(x))
        if y is not None:
            xs.append(float(x))
            ys.append(y)
    if not xs:
        raise ValueError("every mesh point is infeasible")
    data = SampleSet(np.array(xs)[:, None], np.array(ys)[:, None], ["x"], ["y"])
    return data.assign_splits(split_seed)


def toy_monolithic(p: ToyProblem) -> RunReport:
    """Leader objective over the follower's constraints, follower objective dropped."""
    m = LinearModel("monolithic")
    m.add_var("x", max(p.x_box[0], 0.0), math.inf)
    m.add_var("y", -math.inf, math.inf)
    for k, (ax, ay, rhs) in enumerate(p.all_rows()):
        m.add_constraint({"x": ax, "y": ay}, "<=", rhs, f"r{k}")
    m.set_objective({"x": p.c_x, "y": p.c_y}, "min")
    out = lp_solve(m)
    if out.status != "optimal":
        return RunReport("monolithic", f"toy-{p.scenario}", math.nan, details={"status": out.status})
    return RunReport("monolithic", f"toy-{p.scenario}", out.objective, dict(out.point),
                     details={"status": "optimal", "variables": 2, "constraints": len(p.all_rows()) + 1})


def toy_hierarchical_kkt(p: ToyProblem) -> RunReport:
    """Optimistic bilevel optimum by enumerating follower active sets.

    For each subset S of follower rows: rows in S hold with equality and
    carry multipliers ``lam >= 0``, the rest are slack with ``lam = 0``, and
    stationarity ``follower_y + sum(lam_i * a_y_i) = 0`` must hold. Each
    subset is an LP in (x, y, lam); a candidate is kept only if ``y`` is
    follower-optimal when re-solved at its ``x``.
    """
    rows = p.all_rows()
    best = None
    tried = 0
    for size in range(len(rows) + 1):
        for S in itertools.combinations(range(len(rows)), size):
            m = LinearModel("kkt")
            m.add_var("x", max(p.x_box[0], 0.0), math.inf)
            m.add_var("y", -math.inf, math.inf)
            stat = {}
            for k, (ax, ay, rhs) in enumerate(rows):
                m.add_constraint({"x": ax, "y": ay}, "=" if k in S else "<=", rhs, f"r{k}")
                if k in S:
                    lam = m.add_var(f"lam{k}", 0.0, math.inf)
                    stat[lam] = ay
            if stat:
                m.add_constraint(stat, "=", -p.follower_y, "stationarity")
            elif p.follower_y != 0.0:
                continue
            m.set_objective({"x": p.c_x, "y": p.c_y}, "min")
            out = lp_solve(m)
            tried += 1
            if out.status != "optimal":
                continue
            x, y = out.point["x"], out.point["y"]
            y_star = follower_response(p, x)
            if y_star is None or abs(p.follower_y * (y - y_star)) > 1e-6:
                continue
            if best is None or out.objective < best[0] - 1e-12:
                best = (out.objective, x, y, S)
    if best is None:
        return RunReport("hierarchical-kkt", f"toy-{p.scenario}", math.nan,
                         details={"status": "infeasible", "active_sets": tried})
    obj, x, y, S = best
    return RunReport("hierarchical-kkt", f"toy-{p.scenario}", obj, {"x": x, "y": y},
                     details={"status": "optimal", "active_set": list(S), "active_sets": tried})


def toy_grid_oracle(p: ToyProblem, points: int = 1000) -> tuple[float, float, float]:
    """Brute force: follower LP at each grid x, leader objective minimised."""
    lo, hi = feasible_x_range(p)
    best = (math.inf, math.nan, math.nan)
    for x in np.linspace(lo, hi, points):
        y = follower_response(p, float(x))
        if y is not None and p.upper(x, y) < best[0]:
            best = (p.upper(x, y), float(x), y)
    return best


def toy_nn_milp(p: ToyProblem, net: NeuralNet, options: SolveOptions | None = None) -> RunReport:
    """Replace the follower by its surrogate ``x -> y`` and solve the MILP."""
    m = LinearModel("toy-nn-milp")
    enc = encode_relu_network(m, net, tighten_bounds(net), prefix="nn")
    x, y = enc.inputs[0], enc.outputs[0]
    m.set_objective({x: p.c_x, y: p.c_y}, "min")
    out = milp_solve(m, options)
    if out.status != "optimal":
        return RunReport("nn-milp", f"toy-{p.scenario}", math.nan, details={"status": out.status})
    xv, yv = out.point[x], out.point[y]
    y_true = follower_response(p, xv)
    details = {"status": out.status, "nodes": out.nodes,
               "binaries": len(enc.binaries), "relu_rows": len(enc.relu_rows),
               "variables": len(m.variables), "constraints": len(m.constraints)}
    metrics = {}
    if y_true is not None:
        metrics = {"y_follower": y_true, "objective_true": p.upper(xv, y_true)}
    return RunReport("nn-milp", f"toy-{p.scenario}", out.objective, {"x": xv, "y": yv},
                     metrics, details)


@dataclass
class ToyConfig:
    scenario: str = "aligned"
    mesh: int = 200
    hidden: tuple = (4,)
    epochs: int = 20000
    learning_rate: float = 0.01
    seed: int = 0
    restarts: int = 4

    def train_config(self) -> TrainConfig:
        return TrainConfig(hidden=tuple(self.hidden), epochs=self.epochs,
                           learning_rate=self.learning_rate, seed=self.seed, restarts=self.restarts)


def train_toy_net(p: ToyProblem, cfg: ToyConfig) -> tuple[NeuralNet, dict, SampleSet]:
    data = sample_toy(p, cfg.mesh, split_seed=cfg.seed)
    net, curves = nn_train(data, cfg.train_config())
    return net, curves, data


def run_toy(scenario: str, method: str, cfg: ToyConfig | None = None, persist: bool = True) -> RunReport:
    """One toy route, optionally persisted under the run root."""
    cfg = cfg or ToyConfig(scenario=scenario)
    if cfg.scenario != scenario:
        cfg = ToyConfig(**{**asdict(cfg), "scenario": scenario})
    p = ToyProblem.printed(scenario)
    t0 = time.perf_counter()
    if method == "monolithic":
        report = toy_monolithic(p)
    elif method == "kkt":
        report = toy_hierarchical_kkt(p)
    elif method == "nn-milp":
        net, curves, data = train_toy_net(p, cfg)
        t1 = time.perf_counter()
        report = toy_nn_milp(p, net)
        report.metrics.update({f"test_mse": nn_evaluate(net, data)["mse_mean"]})
        report.timings["train_s"] = t1 - t0
        if persist:
            directory = run_directory("toy", {"method": method, **asdict(cfg)})
            net.save(directory / "net.json")
            data.to_csv(directory / "data.csv")
            (directory / "curves.json").write_text(canonical_json(curves))
    else:
        raise ValueError(f"unknown method {method!r}")
    report.timings["total_s"] = time.perf_counter() - t0
    if persist:
        directory = run_directory("toy", {"method": method, **asdict(cfg)})
        write_report(report, directory)
    return report


# ---------------------------------------------------------------------------
# Case 1: scheduling with a reactor surrogate
# ---------------------------------------------------------------------------

@dataclass
class Case1Config:
    mesh: int = 100
    segments: int = 4
    hidden: tuple = (5, 5)
    epochs: int = 20000
    learning_rate: float = 0.01
    seed: int = 0
    events: int = 5
    horizon: float = 12.0
    product_yield: float = 0.9
    bound_method: str = "exact"
    abs_gap: float = 1e-6
    rel_gap: float = 1e-6
    node_limit: int = 1_000_000
    time_limit: float = 3600.0
    stn: dict | None = None  # StnConfig document; Case 1 defaults when absent

    @classmethod
    def load(cls, path) -> "Case1Config":
        d = json.loads(Path(path).read_text())
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        return cls(**d)

    def stn_config(self, events: int | None = None) -> StnConfig:
        base = dict(self.stn) if self.stn else None
        n = self.events if events is None else events
        if base is None:
            return StnConfig.case1(events=n, horizon=self.horizon)
        base.update(events=n, horizon=self.horizon)
        return StnConfig(**base)

    def solve_options(self) -> SolveOptions:
        return SolveOptions(self.abs_gap, self.rel_gap, self.node_limit, self.time_limit)


def reactor_dataset(cfg: Case1Config, params: ReactorParams | None = None) -> SampleSet:
    """Oracle samples, cached under the run root by their defining inputs."""
    params = params or ReactorParams()
    key = {"mesh": cfg.mesh, "segments": cfg.segments, "seed": cfg.seed, "params": asdict(params)}
    directory = run_directory("reactor-data", key)
    path = directory / "data.csv"
    if path.exists():
        return SampleSet.from_csv(path)
    data = sample_reactor_dataset(cfg.mesh, params, n=cfg.segments, seed=cfg.seed, split_seed=cfg.seed)
    data.to_csv(path)
    return data


def _stage(name: str, fn, timings: dict):
    t0 = time.perf_counter()
    try:
        return fn()
    except PipelineError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage tag
        raise PipelineError(name, f"{type(exc).__name__}: {exc}") from exc
    finally:
        timings[f"{name}_s"] = time.perf_counter() - t0


def train_states_net(cfg: Case1Config, data: SampleSet) -> tuple[NeuralNet, dict]:
    tc = TrainConfig(hidden=tuple(cfg.hidden), epochs=cfg.epochs, learning_rate=cfg.learning_rate,
                     seed=cfg.seed)
    return nn_train(data, tc)


def solve_schedule(cfg: Case1Config, net: NeuralNet, events: int | None = None):
    stn_cfg = cfg.stn_config(events)
    model, handles = build_stn_model(stn_cfg, net, bound_method=cfg.bound_method)
    outcome = milp_solve(model, cfg.solve_options())
    return stn_cfg, model, handles, outcome


def run_case1(cfg: Case1Config | None = None, persist: bool = True) -> RunReport:
    """Sample, train, encode, solve, extract and validate (Case 1)."""
    cfg = cfg or Case1Config()
    timings: dict = {}
    directory = run_directory("case1", asdict(cfg)) if persist else None
    data = _stage("sample", lambda: reactor_dataset(cfg), timings)
    if directory:
        data.to_csv(directory / "data.csv")
    net, curves = _stage("train", lambda: train_states_net(cfg, data), timings)
    metrics = nn_evaluate(net, data)
    if directory:
        net.save(directory / "states_net.json")
        (directory / "curves.json").write_text(canonical_json(curves))
    stn_cfg, model, handles, outcome = _stage("solve", lambda: solve_schedule(cfg, net), timings)
    if directory:
        model.to_json(directory / "model.json")
        outcome.write_node_log(directory / "node_log.csv")
        (directory / "handles.json").write_text(canonical_json(handles.to_dict()))
    schedule = _stage("extract", lambda: extract_schedule(outcome, handles), timings)
    if directory:
        schedule.save(directory / "schedule.json")
    validation = _stage("validate", lambda: validate_schedule(
        schedule, ReactorParams(), product_yield=cfg.product_yield, n=cfg.segments), timings)
    reactor = schedule.batches_of("reaction")
    relu_rows = sorted(set(handles.surrogate_rows.values()))
    report = RunReport(
        method="nn-milp", problem="case1",
        objective=outcome.objective,
        point={"batches": [asdict(b) for b in schedule.batches],
               "purchases": schedule.purchases,
               "sales": {k: v for k, v in schedule.sales.items() if abs(v) > 1e-9}},
        metrics={"test_mse": metrics["mse_mean"], "test_mse_per_output": metrics["mse"],
                 "reactor_batches": len(reactor), "makespan": schedule.makespan,
                 "avg_rel_error": validation.get("avg_rel_error"),
                 "profit_validated": validation.get("profit"),
                 "production_validated": validation.get("production"),
                 "utility": validation.get("utility"),
                 "objective_audit": schedule.audit_objective()},
        details={"status": outcome.status, "bound": outcome.bound, "nodes": outcome.nodes,
                 "events": stn_cfg.events, "horizon": stn_cfg.horizon,
                 "relu_rows_per_event": relu_rows[0] if len(relu_rows) == 1 else relu_rows,
                 "variables": len(model.variables), "constraints": len(model.constraints),
                 "binaries": len(model.binaries), "validation": validation},
        timings=timings,
    )
    if directory:
        write_report(report, directory)
    return report


def run_case1_sweep(cfg: Case1Config | None = None, events=range(3, 8), persist: bool = True) -> RunReport:
    """Optimal profit for each event count with one trained surrogate."""
    cfg = cfg or Case1Config()
    timings: dict = {}
    data = _stage("sample", lambda: reactor_dataset(cfg), timings)
    net, _ = _stage("train", lambda: train_states_net(cfg, data), timings)
    rows = []
    for n in events:
        t0 = time.perf_counter()
        _, _, handles, outcome = solve_schedule(cfg, net, n)
        timings[f"solve_N{n}_s"] = time.perf_counter() - t0
        batches = 0
        if outcome.status in ("optimal", "limit-hit") and outcome.point:
            batches = len(extract_schedule(outcome, handles).batches_of("reaction"))
        rows.append({"events": n, "status": outcome.status, "objective": outcome.objective,
                     "bound": outcome.bound, "nodes": outcome.nodes, "reactor_batches": batches})
    objs = [r["objective"] for r in rows]
    monotone = all(b >= a - 1e-6 for a, b in zip(objs, objs[1:]))
    report = RunReport("nn-milp", "case1-sweep", objs[-1] if objs else math.nan,
                       metrics={"non_decreasing": monotone}, details={"sweep": rows},
                       timings=timings)
    if persist:
        write_report(report, run_directory("case1-sweep", {**asdict(cfg), "events": list(events)}))
    return report


# ---------------------------------------------------------------------------
# Feasibility cut on a synthetic lower level
# ---------------------------------------------------------------------------

@dataclass
class FeasibilityConfig:
    mesh: int = 40
    hidden: tuple = (16, 8)
    epochs: int = 6000
    learning_rate: float = 0.01
    seed: int = 0
    delta: float = 0.5
    objectives: int = 100
    negative_weight: float = 1.0
    refine_rounds: int = 10  # verify-and-retrain rounds before evaluation
    refine_objectives: int = 50  # fixed calibration objectives, re-solved every round


def _directions(rng, count: int) -> np.ndarray:
    c = rng.normal(size=(count, 2))
    return c / np.linalg.norm(c, axis=1, keepdims=True)


def feasibility_cut_model(net: NeuralNet, box, delta: float) -> tuple[LinearModel, list[str]]:
    """Inputs over ``box``, the encoded feasibility net and ``y_f >= delta``."""
    box = [tuple(map(float, b)) for b in box]
    m = LinearModel("feasibility-cut")
    inputs = [m.add_var(f"x{k}", lo, hi) for k, (lo, hi) in enumerate(box)]
    enc = encode_relu_network(m, net, tighten_bounds(net, box), prefix="feas", inputs=inputs)
    add_feasibility_constraint(m, enc.outputs[0], delta)
    return m, inputs


def optimise_directions(model: LinearModel, inputs: list[str], directions) -> list[np.ndarray | None]:
    """Maximise each linear objective over the cut; None where unsolved."""
    points = []
    for c in directions:
        model.set_objective({v: float(ck) for v, ck in zip(inputs, c)}, "max")
        out = milp_solve(model)
        points.append(np.array([out.point[v] for v in inputs]) if out.status == "optimal" else None)
    return points


def run_feasibility(cfg: FeasibilityConfig | None = None, region: SyntheticRegion | None = None,
                    persist: bool = True) -> RunReport:
    """Feasibility cut on a lower level with a known feasible set.

    The net is trained on +/-1 membership labels, then refined: each round
    optimises a fixed set of calibration objectives over ``y_f >= delta``, asks
    the membership oracle about every optimum, and retrains with the
    infeasible ones added as -1 samples, until a round comes back clean.
    Evaluation uses a separate stream of ``cfg.objectives`` objectives.
    """
    cfg = cfg or FeasibilityConfig()
    region = region or SyntheticRegion()
    timings: dict = {}
    data = _stage("sample", lambda: synthetic_feasible_region(region=region, mesh=cfg.mesh,
                                                              split_seed=cfg.seed), timings)
    test = data.subset("test")
    tc = TrainConfig(hidden=tuple(cfg.hidden), epochs=cfg.epochs, learning_rate=cfg.learning_rate,
                     seed=cfg.seed, target="feasibility", negative_weight=cfg.negative_weight)
    calib = _directions(np.random.default_rng([cfg.seed, 1]), cfg.refine_objectives)
    history = []

    def refine():
        nonlocal data
        for rnd in range(cfg.refine_rounds + 1):
            net, curves = nn_train(data, tc)
            model, inputs = feasibility_cut_model(net, region.box, cfg.delta)
            pts = [p for p in optimise_directions(model, inputs, calib) if p is not None]
            bad = [p for p in pts if not region.contains(p)[0]]
            history.append({"round": rnd, "samples": len(data), "infeasible_optima": len(bad)})
            if not bad or rnd == cfg.refine_rounds:
                return net, curves, model, inputs
            extra = np.unique(np.round(np.array(bad), 12), axis=0)
            data = SampleSet(np.vstack([data.X, extra]), np.zeros((len(data) + len(extra), 0)),
                             data.input_names, [], np.concatenate([data.y_f, region.label(extra)]),
                             np.concatenate([data.split, np.full(len(extra), "train", dtype=object)]))

    net, curves, model, inputs = _stage("refine", refine, timings)
    accuracy = nn_evaluate(net, test, split="test")["accuracy"]

    def evaluate():
        dirs = _directions(np.random.default_rng([cfg.seed, 0]), cfg.objectives)
        rows = []
        for c, x in zip(dirs, optimise_directions(model, inputs, dirs)):
            if x is None:
                rows.append({"c": c, "status": "unsolved"})
                continue
            rows.append({"c": c, "status": "optimal", "x": x, "inside": bool(region.contains(x)[0]),
                         "y_f": float(nn_forward(net, x)[0])})
        return rows

    results = _stage("solve", evaluate, timings)
    total = max(len(results), 1)
    solved = [r for r in results if r["status"] == "optimal"]
    inside = sum(r["inside"] for r in solved)
    cut_ok = sum(r["y_f"] >= cfg.delta - 1e-6 for r in solved)
    report = RunReport(
        "nn-milp", "feasibility-cut", inside / total,
        metrics={"test_accuracy": accuracy, "inside_fraction": inside / total,
                 "cut_satisfied_fraction": cut_ok / total, "solved": len(solved),
                 "refine_rounds": len(history) - 1,
                 "refine_converged": history[-1]["infeasible_optima"] == 0},
        details={"delta": cfg.delta, "refinement": history, "results": results}, timings=timings)
    if persist:
        directory = run_directory("feasibility", asdict(cfg))
        net.save(directory / "feas_net.json")
        data.to_csv(directory / "data.csv")
        (directory / "curves.json").write_text(canonical_json(curves))
        write_report(report, directory)
    return report
