"""Linear models and a dense bounded-variable primal simplex.

:class:`LinearModel` is the common currency of the package: neural-network
encodings, linking blocks and the scheduling model all append variables and
rows to one, and both :func:`lp_solve` and the branch-and-bound in
:mod:`nnbilevel.milp` consume it.

The simplex works on ``A x + s = b`` where every row owns a slack ``s`` whose
bounds encode the relation (``<=``: ``s >= 0``, ``>=``: ``s <= 0``, ``=``:
``s = 0``). Phase 1 minimises the sum of bound infeasibilities of the basic
variables, so any basis (in particular a parent node's basis) is a valid
starting point.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
BLAND_AFTER = 1000

RELATIONS = ("<=", "=", ">=")
KINDS = ("continuous", "binary")


class ModelError(ValueError):
    """Raised for malformed linear models."""


class IterationLimitError(RuntimeError):
    """Raised when the simplex exceeds its iteration budget."""


@dataclass
class Variable:
    name: str
    lb: float = 0.0
    ub: float = math.inf
    kind: str = "continuous"


@dataclass
class Constraint:
    coeffs: dict[str, float]
    relation: str
    rhs: float
    name: str = ""
    tag: str = ""

    def activity(self, point: dict[str, float]) -> float:
        return sum(c * point[v] for v, c in self.coeffs.items())

    def violation(self, point: dict[str, float]) -> float:
        lhs = self.activity(point)
        if self.relation == "<=":
            return max(0.0, lhs - self.rhs)
        if self.relation == ">=":
            return max(0.0, self.rhs - lhs)
        return abs(lhs - self.rhs)


class LinearModel:
    """Variables, linear rows and a linear objective.

    Variables are addressed by name; those names are the "handles" passed
    around by the encoders.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: dict[str, Variable] = {}
        self.constraints: list[Constraint] = []
        self.objective: dict[str, float] = {}
        self.sense = "min"
        self.objective_constant = 0.0

    # -- building -----------------------------------------------------------
    def add_var(self, name: str, lb: float = 0.0, ub: float = math.inf,
                kind: str = "continuous") -> str:
        if name in self.variables:
            raise ModelError(f"duplicate variable {name!r}")
        if kind not in KINDS:
            raise ModelError(f"unknown variable kind {kind!r}")
        if kind == "binary":
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if lb > ub:
            raise ModelError(f"variable {name!r} has lb {lb} > ub {ub}")
        self.variables[name] = Variable(name, float(lb), float(ub), kind)
        return name

    def add_constraint(self, coeffs: dict[str, float], relation: str, rhs: float,
                       name: str = "", tag: str = "") -> int:
        if relation not in RELATIONS:
            raise ModelError(f"unknown relation {relation!r}")
        for v in coeffs:
            if v not in self.variables:
                raise ModelError(f"constraint {name!r} references unknown variable {v!r}")
        merged = {v: float(c) for v, c in coeffs.items() if c != 0.0}
        self.constraints.append(Constraint(merged, relation, float(rhs), name, tag))
        return len(self.constraints) - 1

    def set_objective(self, coeffs: dict[str, float], sense: str = "min",
                      constant: float = 0.0) -> None:
        if sense not in ("min", "max"):
            raise ModelError(f"unknown sense {sense!r}")
        for v in coeffs:
            if v not in self.variables:
                raise ModelError(f"objective references unknown variable {v!r}")
        self.objective = {v: float(c) for v, c in coeffs.items() if c != 0.0}
        self.sense = sense
        self.objective_constant = float(constant)

    def fix(self, name: str, value: float) -> None:
        var = self.variables[name]
        var.lb = var.ub = float(value)

    # -- queries ------------------------------------------------------------
    @property
    def var_names(self) -> list[str]:
        return list(self.variables)

    @property
    def binaries(self) -> list[str]:
        return [v.name for v in self.variables.values() if v.kind == "binary"]

    def constraints_tagged(self, prefix: str) -> list[Constraint]:
        return [c for c in self.constraints if c.tag.startswith(prefix)]

    def evaluate_objective(self, point: dict[str, float]) -> float:
        return self.objective_constant + sum(c * point[v] for v, c in self.objective.items())

    def max_violation(self, point: dict[str, float]) -> tuple[float, float]:
        """Largest (row, bound) violation of ``point``."""
        row = max((c.violation(point) for c in self.constraints), default=0.0)
        bnd = 0.0
        for v in self.variables.values():
            x = point[v.name]
            bnd = max(bnd, v.lb - x, x - v.ub)
        return row, bnd

    def validate(self) -> None:
        for v in self.variables.values():
            if v.lb > v.ub:
                raise ModelError(f"variable {v.name!r} has lb > ub")
            if v.kind == "binary" and (v.lb < 0.0 or v.ub > 1.0):
                raise ModelError(f"binary {v.name!r} has bounds outside [0, 1]")
            if math.isnan(v.lb) or math.isnan(v.ub):
                raise ModelError(f"variable {v.name!r} has NaN bound")
        for c in self.constraints:
            if c.relation not in RELATIONS:
                raise ModelError(f"unknown relation {c.relation!r}")
            for name in c.coeffs:
                if name not in self.variables:
                    raise ModelError(f"constraint {c.name!r} references unknown variable {name!r}")
            if not math.isfinite(c.rhs):
                raise ModelError(f"constraint {c.name!r} has non-finite rhs")
        for name in self.objective:
            if name not in self.variables:
                raise ModelError(f"objective references unknown variable {name!r}")

    def copy(self) -> "LinearModel":
        return LinearModel.from_dict(self.to_dict())

    # -- serialisation ------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "variables": [
                {"name": v.name, "lb": _enc(v.lb), "ub": _enc(v.ub), "kind": v.kind}
                for v in self.variables.values()
            ],
            "constraints": [
                {"name": c.name, "tag": c.tag, "coefficients": c.coeffs,
                 "relation": c.relation, "rhs": c.rhs}
                for c in self.constraints
            ],
            "objective": {"sense": self.sense, "coefficients": self.objective,
                          "constant": self.objective_constant},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LinearModel":
        model = cls(data.get("name", "model"))
        try:
            for v in data["variables"]:
                model.add_var(v["name"], _dec(v.get("lb", 0.0)), _dec(v.get("ub", math.inf)),
                              v.get("kind", "continuous"))
            for c in data.get("constraints", []):
                model.add_constraint(c["coefficients"], c["relation"], c["rhs"],
                                     c.get("name", ""), c.get("tag", ""))
            obj = data.get("objective", {})
            model.set_objective(obj.get("coefficients", {}), obj.get("sense", "min"),
                                obj.get("constant", 0.0))
        except KeyError as exc:
            raise ModelError(f"missing field {exc}") from None
        return model

    def to_json(self, path=None, indent: int | None = 1) -> str:
        text = json.dumps(self.to_dict(), indent=indent)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_json(cls, path) -> "LinearModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _enc(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _dec(x) -> float:
    return float(x)


@dataclass
class LPOutcome:
    status: str
    objective: float = math.nan
    point: dict[str, float] = field(default_factory=dict)
    iterations: int = 0
    basis: tuple | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"status": self.status,
                "objective": None if math.isnan(self.objective) else self.objective,
                "point": self.point, "iterations": self.iterations}


# ---------------------------------------------------------------------------
# Dense standard form
# ---------------------------------------------------------------------------

class StandardForm:
    """Dense arrays of a :class:`LinearModel` with one slack per row.

    Columns ``0..n-1`` are the model variables (in declaration order),
    columns ``n..n+m-1`` the row slacks. The objective is always minimised.
    """

    def __init__(self, model: LinearModel):
        model.validate()
        self.names = model.var_names
        index = {name: k for k, name in enumerate(self.names)}
        self.index = index
        n, m = len(self.names), len(model.constraints)
        self.n, self.m = n, m
        A = np.zeros((m, n + m))
        b = np.zeros(m)
        lo = np.empty(n + m)
        hi = np.empty(n + m)
        for k, name in enumerate(self.names):
            var = model.variables[name]
            lo[k], hi[k] = var.lb, var.ub
        for i, con in enumerate(model.constraints):
            for name, coef in con.coeffs.items():
                A[i, index[name]] += coef
            A[i, n + i] = 1.0
            b[i] = con.rhs
            if con.relation == "<=":
                lo[n + i], hi[n + i] = 0.0, math.inf
            elif con.relation == ">=":
                lo[n + i], hi[n + i] = -math.inf, 0.0
            else:
                lo[n + i] = hi[n + i] = 0.0
        self.A, self.b, self.lo, self.hi = A, b, lo, hi
        self.sign = 1.0 if model.sense == "min" else -1.0
        c = np.zeros(n + m)
        for name, coef in model.objective.items():
            c[index[name]] = self.sign * coef
        self.c = c
        self.constant = model.objective_constant
        self.binary_idx = np.array(
            [index[v] for v in model.binaries], dtype=int)


def lp_solve(model: LinearModel, max_iter: int | None = None) -> LPOutcome:
    """Solve the continuous relaxation of ``model`` (binaries in [0, 1]).

    Raises
    ------
    ModelError
        The model violates its structural invariants.
    IterationLimitError
        The iteration budget ran out before a status was proven.
    """
    sf = StandardForm(model)
    return solve_standard(sf, sf.lo, sf.hi, max_iter=max_iter)


def factor_basis(A: np.ndarray, b: np.ndarray, basic) -> np.ndarray | None:
    """Tableau ``B^-1 [A | b]`` for the basis ``basic``; ``None`` if singular.

    Slack columns (the trailing identity block of ``A``) are unit vectors,
    so only the square block pairing structural basics with the rows whose
    slack is nonbasic has to be factorised.
    """
    m, N = A.shape
    n = N - m
    basic = np.asarray(basic, dtype=int)
    struct_pos = np.flatnonzero(basic < n)
    slack_pos = np.flatnonzero(basic >= n)
    covered = np.zeros(m, dtype=bool)
    covered[basic[slack_pos] - n] = True
    free_rows = np.flatnonzero(~covered)
    if free_rows.size != struct_pos.size:
        return None
    M = np.hstack([A, b[:, None]])
    T = np.empty((m, N + 1))
    if struct_pos.size:
        K = basic[struct_pos]
        try:
            yk = np.linalg.solve(A[np.ix_(free_rows, K)], M[free_rows])
        except np.linalg.LinAlgError:
            return None
        T[struct_pos] = yk
        rows = basic[slack_pos] - n
        T[slack_pos] = M[rows] - A[np.ix_(rows, K)] @ yk
    else:
        T[slack_pos] = M[basic[slack_pos] - n]
    if not np.all(np.isfinite(T)):
        return None
    return T


def solve_standard(sf: StandardForm, lo: np.ndarray, hi: np.ndarray,
                   basis: tuple | None = None, max_iter: int | None = None,
                   tableau: np.ndarray | None = None) -> LPOutcome:
    """Solve ``sf`` under the column bounds ``lo``/``hi``.

    ``basis`` is an optional ``(basic_columns, at_upper_mask)`` pair from an
    earlier solve; it only changes the starting point, never the answer class.
    ``tableau`` may carry the matching :func:`factor_basis` result so the
    basis is not refactorised.
    """
    if np.any(lo > hi + FEAS_TOL):
        return LPOutcome("infeasible")
    simplex = _BoundedSimplex(sf.A, sf.b, sf.c, lo, hi, basis, max_iter, tableau)
    status = simplex.run()
    if status != "optimal":
        return LPOutcome(status, iterations=simplex.iterations)
    x = simplex.primal()
    xs = x[: sf.n]
    point = {name: float(xs[k]) for k, name in enumerate(sf.names)}
    obj = sf.constant + sf.sign * float(sf.c[: sf.n] @ xs)
    return LPOutcome("optimal", obj, point, simplex.iterations, simplex.basis_state())


class _BoundedSimplex:
    def __init__(self, A, b, c, lo, hi, basis=None, max_iter=None, tableau=None):
        m, N = A.shape
        self.A, self.b, self.c = A, b, c
        self.lo, self.hi = lo, hi
        self.m, self.N = m, N
        self.iterations = 0
        self.max_iter = max_iter if max_iter is not None else 50 * (m + N) + 1000
        # nonbasic value per column: lower bound if finite, else upper, else 0
        self.at_upper = np.zeros(N, dtype=bool)
        if basis is not None:
            basic, at_upper = basis
            self.basic = np.array(basic, dtype=int)
            self.at_upper = np.array(at_upper, dtype=bool).copy()
            if tableau is not None:
                self.T = tableau.copy()
            elif not self._factor():
                basis = None
        if basis is None:
            self.basic = np.arange(N - m, N)
            self.at_upper = np.zeros(N, dtype=bool)
            self.T = np.hstack([A, b[:, None]]).astype(float)
        self.is_basic = np.zeros(N, dtype=bool)
        self.is_basic[self.basic] = True
        self.at_upper &= np.isfinite(hi)
        self.at_upper |= ~np.isfinite(lo) & np.isfinite(hi)
        self.at_upper[self.is_basic] = False
        self.fixed = lo == hi

    def _factor(self) -> bool:
        T = factor_basis(self.A, self.b, self.basic)
        if T is None:
            return False
        self.T = T
        return True

    def nonbasic_values(self) -> np.ndarray:
        lo, hi = self.lo, self.hi
        val = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
        val = np.where(self.at_upper, hi, val)
        val[self.is_basic] = 0.0
        return val

    def basic_values(self, xn: np.ndarray) -> np.ndarray:
        return self.T[:, -1] - self.T[:, :-1] @ xn

    def primal(self) -> np.ndarray:
        x = self.nonbasic_values()
        x[self.basic] = self.basic_values(x)
        return x

    def basis_state(self):
        return (tuple(int(k) for k in self.basic), self.at_upper.copy())

    def run(self) -> str:
        while True:
            xn = self.nonbasic_values()
            xb = self.basic_values(xn)
            lb, ub = self.lo[self.basic], self.hi[self.basic]
            below = xb < lb - FEAS_TOL
            above = xb > ub + FEAS_TOL
            phase1 = bool(below.any() or above.any())
            if phase1:
                cb = np.where(below, -1.0, np.where(above, 1.0, 0.0))
                cn = np.zeros(self.N)
            else:
                cb = self.c[self.basic]
                cn = self.c
            d = cn - cb @ self.T[:, :-1]
            j, direction = self._entering(d)
            if j < 0:
                if phase1:
                    return "infeasible"
                return "optimal"
            if self.iterations >= self.max_iter:
                raise IterationLimitError(
                    f"simplex exceeded {self.max_iter} iterations")
            self.iterations += 1
            col = self.T[:, j]
            alpha = -direction * col
            theta, r, leave_upper = self._ratio(j, alpha, xb, lb, ub, below, above)
            if math.isinf(theta):
                if phase1:
                    # cannot happen for a descent direction of the infeasibility
                    return "infeasible"
                return "unbounded"
            if r < 0:
                self.at_upper[j] = not self.at_upper[j]
                continue
            self._pivot(r, j, leave_upper)

    def _entering(self, d: np.ndarray) -> tuple[int, int]:
        elig = ~self.is_basic & ~self.fixed
        free = ~np.isfinite(self.lo) & ~np.isfinite(self.hi)
        up = elig & ~self.at_upper & (d < -OPT_TOL)
        down = elig & (self.at_upper | free) & (d > OPT_TOL)
        cand = np.flatnonzero(up | down)
        if cand.size == 0:
            return -1, 0
        if self.iterations >= BLAND_AFTER:
            j = int(cand[0])
        else:
            j = int(cand[np.argmax(np.abs(d[cand]))])
        return j, (1 if up[j] else -1)

    def _ratio(self, j, alpha, xb, lb, ub, below, above):
        """Step length, leaving row (-1 for a bound flip) and its exit side."""
        best = self.hi[j] - self.lo[j]
        if not np.isfinite(best):
            best = math.inf
        big = np.abs(alpha) > PIVOT_TOL
        ok = ~below & ~above
        dec = big & (alpha < 0)
        inc = big & (alpha > 0)
        steps = np.full(self.m, math.inf)
        side = np.zeros(self.m, dtype=bool)
        with np.errstate(divide="ignore", invalid="ignore"):
            for mask, bound, exit_upper in (
                (dec & ok, lb, False),      # feasible, falls to its lower bound
                (inc & ok, ub, True),       # feasible, rises to its upper bound
                (dec & above, ub, True),    # infeasible above, becomes feasible
                (inc & below, lb, False),   # infeasible below, becomes feasible
            ):
                t = np.where(mask, (bound - xb) / alpha, math.inf)
                t = np.where(np.isnan(t), math.inf, np.maximum(t, 0.0))
                better = t < steps
                steps = np.where(better, t, steps)
                side = np.where(better, exit_upper, side)
        tmin = float(steps.min()) if self.m else math.inf
        if math.isinf(tmin) or tmin >= best:
            return best, -1, False
        ties = np.flatnonzero(steps <= tmin + 1e-12)
        if self.iterations >= BLAND_AFTER:
            r = int(ties[np.argmin(self.basic[ties])])
        else:
            r = int(ties[np.argmax(np.abs(alpha[ties]))])
        return tmin, r, bool(side[r])

    def _pivot(self, r: int, j: int, leave_upper: bool) -> None:
        T = self.T
        leaving = self.basic[r]
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        rows = np.flatnonzero(col)
        if rows.size:
            cols = np.flatnonzero(T[r])
            if 2 * cols.size < T.shape[1]:
                T[np.ix_(rows, cols)] -= np.outer(col[rows], T[r, cols])
            else:
                T[rows] -= np.outer(col[rows], T[r])
        self.basic[r] = j
        self.is_basic[j] = True
        self.at_upper[j] = False
        self.is_basic[leaving] = False
        lo, hi = self.lo[leaving], self.hi[leaving]
        self.at_upper[leaving] = bool(np.isfinite(hi) and (leave_upper or not np.isfinite(lo)))


def vertex_enumeration(model: LinearModel) -> tuple[str, float, dict[str, float] | None]:
    """Brute-force LP oracle for tiny bounded models.

    Every choice of ``n`` tight rows among the constraints and finite bounds
    defines a candidate vertex; the best feasible one is optimal for a
    bounded feasible LP. Exponential, for tests only.
    """
    from itertools import combinations

    names = model.var_names
    n = len(names)
    idx = {v: k for k, v in enumerate(names)}
    rows, rhs = [], []
    for c in model.constraints:
        a = np.zeros(n)
        for v, coef in c.coeffs.items():
            a[idx[v]] = coef
        rows.append(a)
        rhs.append(c.rhs)
    for k, v in enumerate(names):
        var = model.variables[v]
        for bound in (var.lb, var.ub):
            if math.isfinite(bound):
                e = np.zeros(n)
                e[k] = 1.0
                rows.append(e)
                rhs.append(bound)
    best, best_pt = None, None
    sign = 1.0 if model.sense == "min" else -1.0
    for combo in combinations(range(len(rows)), n):
        M = np.array([rows[k] for k in combo])
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, np.array([rhs[k] for k in combo]))
        pt = {v: float(x[k]) for k, v in enumerate(names)}
        row, bnd = model.max_violation(pt)
        if row > 1e-7 or bnd > 1e-9:
            continue
        val = model.evaluate_objective(pt)
        if best is None or sign * val < sign * best - 1e-12:
            best, best_pt = val, pt
    if best is None:
        return "infeasible", math.nan, None
    return "optimal", best, best_pt

