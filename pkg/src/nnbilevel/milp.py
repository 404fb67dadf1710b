"""Best-bound branch-and-bound over binary variables."""

from __future__ import annotations

import csv
import heapq
import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .lp import LinearModel, ModelError, StandardForm, factor_basis, solve_standard

INT_TOL = 1e-6


@dataclass
class SolveOptions:
    abs_gap: float = 1e-6
    rel_gap: float = 1e-6
    node_limit: int = 1_000_000
    time_limit: float = 3600.0
    # best-bound node selection and most-fractional branching are fixed

    def __post_init__(self):
        if self.abs_gap < 0 or self.rel_gap < 0:
            raise ValueError("gaps must be nonnegative")
        if self.node_limit <= 0 or self.time_limit <= 0:
            raise ValueError("limits must be positive")


@dataclass
class MILPOutcome:
    status: str  # optimal | infeasible | limit-hit
    objective: float = math.nan
    point: dict[str, float] = field(default_factory=dict)
    bound: float = math.nan
    nodes: int = 0
    node_log: list[tuple[int, float, float]] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        def num(x):
            return None if x is None or math.isnan(x) or math.isinf(x) else x
        return {"status": self.status, "objective": num(self.objective),
                "bound": num(self.bound), "nodes": self.nodes, "point": self.point}

    def write_node_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "bound", "incumbent"])
            w.writerows(self.node_log)


def _gap_tol(options: SolveOptions, incumbent: float) -> float:
    if math.isinf(incumbent):
        return 0.0
    return max(options.abs_gap, options.rel_gap * abs(incumbent))


def milp_solve(model: LinearModel, options: SolveOptions | None = None) -> MILPOutcome:
    """Solve ``model`` with binaries enforced by branch-and-bound.

    Nodes are expanded best-bound first; the branching variable is the most
    fractional binary, ties going to the lowest declaration index. Each node
    LP starts from its parent's optimal basis. Integral relaxations are
    polished by re-solving with every binary fixed, so reported binaries are
    exactly 0 or 1.

    The node log records ``(node id, global bound, incumbent)`` in the
    model's objective sense after every processed node.
    """
    options = options or SolveOptions()
    sf = StandardForm(model)
    sign = sf.sign
    bins = sf.binary_idx
    start = time.perf_counter()
    counter = itertools.count()

    incumbent = math.inf  # internal minimisation
    best_point: dict[str, float] = {}
    log: list[tuple[int, float, float]] = []
    pruned_floor = math.inf  # smallest bound among pruned-by-bound nodes

    def internal(obj: float) -> float:
        return sign * obj

    external = internal  # the sign flip is its own inverse

    root = solve_standard(sf, sf.lo, sf.hi)
    nodes = 1
    if root.status == "infeasible":
        return MILPOutcome("infeasible", nodes=1, node_log=[(0, math.nan, math.nan)])
    if root.status == "unbounded":
        raise ModelError("LP relaxation is unbounded; the MILP solver needs bounded relaxations")

    heap: list = []
    heapq.heappush(heap, (internal(root.objective), next(counter), sf.lo.copy(), sf.hi.copy(), root))

    status = "optimal"
    while heap:
        bound_val, nid, lo, hi, out = heapq.heappop(heap)
        tol = _gap_tol(options, external(incumbent) if math.isfinite(incumbent) else math.inf)
        if bound_val >= incumbent - tol:
            pruned_floor = min(pruned_floor, bound_val)
            # best-bound order: every remaining node is at least as bad
            for item in heap:
                pruned_floor = min(pruned_floor, item[0])
            heap.clear()
            break
        x = out.point
        vals = np.array([x[sf.names[k]] for k in bins]) if bins.size else np.zeros(0)
        frac = np.abs(vals - np.round(vals))
        if bins.size == 0 or frac.max() <= INT_TOL:
            cand = _polish(sf, lo, hi, bins, vals, out)
            if cand is not None:
                val = internal(cand.objective)
                if val < incumbent:
                    incumbent = val
                    best_point = cand.point
        else:
            k = int(np.argmax(frac))  # first maximum = lowest index
            col = bins[k]
            # both children restart from the parent's optimal basis
            tableau = factor_basis(sf.A, sf.b, out.basis[0])
            for fix in (0.0, 1.0):
                clo, chi = lo.copy(), hi.copy()
                clo[col] = chi[col] = fix
                child = solve_standard(sf, clo, chi, out.basis, tableau=tableau)
                nodes += 1
                if child.status != "optimal":
                    continue
                cval = internal(child.objective)
                tol = _gap_tol(options, external(incumbent) if math.isfinite(incumbent) else math.inf)
                if cval >= incumbent - tol:
                    pruned_floor = min(pruned_floor, cval)
                    continue
                heapq.heappush(heap, (max(cval, bound_val), next(counter), clo, chi, child))
        glob = min([h[0] for h in heap] + [incumbent])
        log.append((nid, external(glob), external(incumbent)))
        if nodes >= options.node_limit or time.perf_counter() - start > options.time_limit:
            if heap:
                status = "limit-hit"
            break

    if status == "limit-hit":
        bound = min([h[0] for h in heap] + [incumbent])
    else:
        bound = min(incumbent, pruned_floor)
    if not math.isfinite(incumbent):
        if status == "optimal":
            return MILPOutcome("infeasible", nodes=nodes, node_log=log)
        return MILPOutcome("limit-hit", bound=external(bound), nodes=nodes, node_log=log)
    return MILPOutcome(status, external(incumbent), best_point, external(bound), nodes, log)


def _polish(sf, lo, hi, bins, vals, out):
    """Re-solve with every binary fixed at its rounded value."""
    if bins.size == 0:
        return out
    rounded = np.round(vals)
    if np.array_equal(vals, rounded):
        return out
    plo, phi = lo.copy(), hi.copy()
    plo[bins] = rounded
    phi[bins] = rounded
    res = solve_standard(sf, plo, phi, out.basis)
    return res if res.status == "optimal" else None


def enumerate_binaries(model: LinearModel, max_binaries: int = 20) -> MILPOutcome:
    """Exact optimum by one LP per binary assignment (test oracle)."""
    from .lp import lp_solve

    bins = model.binaries
    if len(bins) > max_binaries:
        raise ValueError(f"{len(bins)} binaries exceed the enumeration limit {max_binaries}")
    if not bins:
        out = lp_solve(model)
        if out.status != "optimal":
            return MILPOutcome(out.status if out.status == "infeasible" else "infeasible")
        return MILPOutcome("optimal", out.objective, out.point, out.objective, 1)
    sign = 1.0 if model.sense == "min" else -1.0
    sf = StandardForm(model)
    idx = sf.binary_idx
    best, best_pt, count = math.inf, {}, 0
    for assign in itertools.product((0.0, 1.0), repeat=len(bins)):
        lo, hi = sf.lo.copy(), sf.hi.copy()
        a = np.array(assign)
        if np.any(a < lo[idx]) or np.any(a > hi[idx]):
            continue
        lo[idx] = a
        hi[idx] = a
        out = solve_standard(sf, lo, hi)
        count += 1
        if out.status == "unbounded":
            raise ModelError("LP relaxation is unbounded for a binary assignment")
        if out.status == "optimal" and sign * out.objective < best:
            best, best_pt = sign * out.objective, out.point
    if not math.isfinite(best):
        return MILPOutcome("infeasible", nodes=count)
    return MILPOutcome("optimal", sign * best, best_pt, sign * best, count)
