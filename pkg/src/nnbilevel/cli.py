"""Command-line entry point: ``nnbilevel <group> <command> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import pipeline


def _print(obj) -> None:
    sys.stdout.write(pipeline.canonical_json(obj))


def _event_range(text: str) -> list[int]:
    if ".." in text:
        a, b = text.split("..", 1)
        lo, hi = int(a), int(b)
        if hi < lo:
            raise argparse.ArgumentTypeError("empty event range")
        return list(range(lo, hi + 1))
    return [int(t) for t in text.split(",") if t]


# -- lp / milp ---------------------------------------------------------------

def cmd_lp_solve(args) -> int:
    from .lp import LinearModel, lp_solve
    out = lp_solve(LinearModel.from_json(args.model))
    _print(out.to_dict())
    return 0


def cmd_milp_solve(args) -> int:
    from .lp import LinearModel
    from .milp import SolveOptions, milp_solve
    opts = SolveOptions(abs_gap=args.gap, rel_gap=args.gap, node_limit=args.nodes, time_limit=args.time_limit)
    out = milp_solve(LinearModel.from_json(args.model), opts)
    if args.node_log:
        out.write_node_log(args.node_log)
    _print(out.to_dict())
    return 0


# -- nn ----------------------------------------------------------------------

def cmd_nn_train(args) -> int:
    from .neural import SampleSet, TrainConfig, nn_evaluate, nn_train, parse_arch
    data = SampleSet.from_csv(args.data)
    if data.split is None:
        data = data.assign_splits(args.seed)
    cfg = TrainConfig(hidden=parse_arch(args.arch), activation=args.act, epochs=args.epochs,
                      learning_rate=args.lr, seed=args.seed, target=args.target, restarts=args.restarts)
    net, curves = nn_train(data, cfg)
    net.save(args.out)
    if args.curves:
        Path(args.curves).write_text(pipeline.canonical_json(curves))
    _print({"net": str(args.out), "test": nn_evaluate(net, data)})
    return 0


def cmd_nn_eval(args) -> int:
    from .neural import NeuralNet, SampleSet, nn_evaluate
    _print(nn_evaluate(NeuralNet.load(args.net), SampleSet.from_csv(args.data), split=args.split))
    return 0


# -- dynopt ------------------------------------------------------------------

def cmd_dynopt_solve(args) -> int:
    from .dynopt import ReactorParams, reactor_optimize
    _print(reactor_optimize(args.v, ReactorParams(), n=args.segments, seed=args.seed).to_dict())
    return 0


def cmd_dynopt_sample(args) -> int:
    from .dynopt import ReactorParams, sample_reactor_dataset
    data = sample_reactor_dataset(args.mesh, ReactorParams(), n=args.segments, seed=args.seed,
                                  split_seed=args.seed)
    data.to_csv(args.out)
    _print({"out": str(args.out), "samples": len(data)})
    return 0


def cmd_dynopt_invert(args) -> int:
    from .dynopt import ReactorInfeasibleError, ReactorParams, invert_reactor
    try:
        v = invert_reactor(args.tf, args.q, ReactorParams(), n=args.segments)
    except ReactorInfeasibleError as exc:
        sys.stderr.write(f"infeasible: {exc}\n")
        return 2
    _print({"t_f": args.tf, "Q": args.q, "V": v})
    return 0


# -- stn ---------------------------------------------------------------------

def cmd_stn_build(args) -> int:
    from .neural import NeuralNet
    from .stn import StnConfig, build_stn_model
    cfg = StnConfig.load(args.config) if args.config else StnConfig.case1()
    if args.events is not None:
        cfg = StnConfig(**{**cfg.to_dict(), "events": args.events})
    net = NeuralNet.load(args.net) if args.net else None
    model, handles = build_stn_model(cfg, net, bound_method=args.bounds)
    model.to_json(args.out)
    handles_path = Path(args.out).with_suffix(".handles.json")
    handles_path.write_text(pipeline.canonical_json(handles.to_dict()))
    _print({"model": str(args.out), "handles": str(handles_path), "variables": len(model.variables),
            "constraints": len(model.constraints), "binaries": len(model.binaries)})
    return 0


# -- pipelines ---------------------------------------------------------------

def cmd_toy_run(args) -> int:
    cfg = pipeline.ToyConfig(scenario=args.scenario, seed=args.seed)
    report = pipeline.run_toy(args.scenario, args.method, cfg)
    sys.stdout.write(report.summary())
    return 0


def _case1_config(args) -> pipeline.Case1Config:
    cfg = pipeline.Case1Config.load(args.config) if args.config else pipeline.Case1Config()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def cmd_case1_run(args) -> int:
    cfg = _case1_config(args)
    try:
        report = pipeline.run_case1(cfg)
    except pipeline.PipelineError as exc:
        sys.stderr.write(f"{exc}\n")
        return 1
    sys.stdout.write(report.summary())
    sys.stdout.write(f"run directory: {pipeline.run_directory('case1', asdict(cfg))}\n")
    return 0


def cmd_case1_sweep(args) -> int:
    cfg = _case1_config(args)
    report = pipeline.run_case1_sweep(cfg, events=args.events)
    for row in report.details["sweep"]:
        sys.stdout.write(f"N={row['events']:<3}{row['status']:<11}{row['objective']:>12.4f}"
                         f"{row['nodes']:>9} nodes{row['reactor_batches']:>3} reactor batches\n")
    sys.stdout.write(f"non-decreasing: {report.metrics['non_decreasing']}\n")
    return 0 if report.metrics["non_decreasing"] else 1


def cmd_feas_run(args) -> int:
    cfg = pipeline.FeasibilityConfig(seed=args.seed, delta=args.delta)
    sys.stdout.write(pipeline.run_feasibility(cfg).summary())
    return 0


def cmd_report_gantt(args) -> int:
    from .gantt import write_gantt
    from .stn import Schedule
    write_gantt(Schedule.load(args.schedule), args.out, title=args.title)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nnbilevel",
                                description="Bilevel scheduling with embedded ReLU surrogates.")
    groups = p.add_subparsers(dest="group", required=True)

    lp = groups.add_parser("lp").add_subparsers(dest="cmd", required=True)
    s = lp.add_parser("solve", help="solve an LP model document")
    s.add_argument("model")
    s.set_defaults(func=cmd_lp_solve)

    milp = groups.add_parser("milp").add_subparsers(dest="cmd", required=True)
    s = milp.add_parser("solve", help="branch and bound on a model document")
    s.add_argument("model")
    s.add_argument("--gap", type=float, default=1e-6)
    s.add_argument("--nodes", type=int, default=1_000_000)
    s.add_argument("--time-limit", type=float, default=3600.0)
    s.add_argument("--node-log", help="CSV of (node, bound, incumbent)")
    s.set_defaults(func=cmd_milp_solve)

    nn = groups.add_parser("nn").add_subparsers(dest="cmd", required=True)
    s = nn.add_parser("train")
    s.add_argument("--data", required=True)
    s.add_argument("--arch", default="2x5")
    s.add_argument("--act", default="relu", choices=["relu", "sigmoid"])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--epochs", type=int, default=5000)
    s.add_argument("--lr", type=float, default=0.01)
    s.add_argument("--restarts", type=int, default=1)
    s.add_argument("--target", default="states", choices=["states", "feasibility"])
    s.add_argument("--curves")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_nn_train)
    s = nn.add_parser("eval")
    s.add_argument("--net", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--split", default="test")
    s.set_defaults(func=cmd_nn_eval)

    dyn = groups.add_parser("dynopt").add_subparsers(dest="cmd", required=True)
    s = dyn.add_parser("solve", help="optimal control for one batch volume")
    s.add_argument("--v", type=float, required=True)
    s.add_argument("--segments", type=int, default=4)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_dynopt_solve)
    s = dyn.add_parser("sample")
    s.add_argument("--mesh", type=int, default=100)
    s.add_argument("--segments", type=int, default=4)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_dynopt_sample)
    s = dyn.add_parser("invert", help="volume processed at a given (t_f, Q)")
    s.add_argument("--tf", type=float, required=True)
    s.add_argument("--q", type=float, required=True)
    s.add_argument("--segments", type=int, default=4)
    s.set_defaults(func=cmd_dynopt_invert)

    stn = groups.add_parser("stn").add_subparsers(dest="cmd", required=True)
    s = stn.add_parser("build")
    s.add_argument("--config")
    s.add_argument("--net")
    s.add_argument("--events", type=int)
    s.add_argument("--bounds", default="exact", choices=["exact", "interval"])
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_stn_build)

    toy = groups.add_parser("toy").add_subparsers(dest="cmd", required=True)
    s = toy.add_parser("run")
    s.add_argument("--scenario", choices=["aligned", "adversarial"], default="aligned")
    s.add_argument("--method", choices=["monolithic", "kkt", "nn-milp"], default="kkt")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_toy_run)

    case1 = groups.add_parser("case1").add_subparsers(dest="cmd", required=True)
    s = case1.add_parser("run")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_case1_run)
    s = case1.add_parser("sweep")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--events", type=_event_range, default=list(range(3, 8)))
    s.set_defaults(func=cmd_case1_sweep)

    feas = groups.add_parser("feas").add_subparsers(dest="cmd", required=True)
    s = feas.add_parser("run", help="feasibility cut on the synthetic region")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--delta", type=float, default=pipeline.FeasibilityConfig.delta)
    s.set_defaults(func=cmd_feas_run)

    rep = groups.add_parser("report").add_subparsers(dest="cmd", required=True)
    s = rep.add_parser("gantt")
    s.add_argument("--schedule", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--title")
    s.set_defaults(func=cmd_report_gantt)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
