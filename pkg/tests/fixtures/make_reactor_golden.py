"""Regenerate reactor_golden.json by brute force.

Deliberately self-contained (numpy only, no package imports): a vectorised
RK4 over a grid of piecewise-constant controls and batch times, followed by
a pattern search on the control levels with the batch time re-located by
bisection on the simulated C concentration.

    python3 tests/fixtures/make_reactor_golden.py
"""

import json
from itertools import product
from pathlib import Path

import numpy as np

CA0, CB_T, CC_T, BETA, ALPHA = 17.0, 13.0, 2.5, 0.065, 0.8
U_LO, U_HI, W_T, W_Q = 1.0, 9.0, 1.2, 0.5
STEPS = 400
VOLUMES = (1.0, 3.75, 7.5)


def rk4_terminal(U, tf):
    """U: (m, n) control levels, tf: (m,) batch times -> (m, 3) terminal states."""
    m, n = U.shape
    per = STEPS // n
    h = (tf / (per * n))[:, None]
    y = np.zeros((m, 3))
    y[:, 0] = CA0
    for s in range(n):
        u = U[:, s:s + 1]
        k = BETA * u ** ALPHA
        M = np.zeros((m, 3, 3))
        M[:, 0, 0] = -u[:, 0]
        M[:, 1, 0] = u[:, 0]
        M[:, 1, 1] = -k[:, 0]
        M[:, 2, 1] = k[:, 0]
        # one RK4 step of the linear system y' = M y is y <- P y
        hM = h[:, :, None] * M
        I = np.broadcast_to(np.eye(3), hM.shape)
        hM2 = hM @ hM
        hM3 = hM2 @ hM
        P = I + hM + hM2 / 2 + hM3 / 6 + hM3 @ hM / 24
        for _ in range(per):
            y = np.einsum("mij,mj->mi", P, y)
    return y


def grid_search(V, levels, n, t_grid):
    """Every (profile, batch time) pair simulated in one vectorised pass."""
    profiles = np.array(list(product(levels, repeat=n)))
    U = np.repeat(profiles, len(t_grid), axis=0)
    tf = np.tile(t_grid, len(profiles))
    y = rk4_terminal(U, tf)
    ok = (np.abs(y[:, 2] - CC_T) <= 0.02) & (y[:, 1] >= CB_T - 1e-9)
    obj = np.where(ok, W_T * tf + W_Q * V * V * tf * U.mean(axis=1), np.inf)
    j = int(np.argmin(obj))
    return obj[j], tf[j], U[j].copy()


def times_for(U):
    """Batch times at which C reaches its target (bisection + secant, per row)."""
    lo = np.full(len(U), 0.05)
    hi = np.full(len(U), 6.0)
    for _ in range(20):
        mid = 0.5 * (lo + hi)
        below = rk4_terminal(U, mid)[:, 2] < CC_T
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    f_lo = rk4_terminal(U, lo)[:, 2] - CC_T
    f_hi = rk4_terminal(U, hi)[:, 2] - CC_T
    t = lo
    for _ in range(4):
        denom = np.where(f_hi != f_lo, f_hi - f_lo, 1.0)
        t = hi - f_hi * (hi - lo) / denom
        f_t = rk4_terminal(U, t)[:, 2] - CC_T
        lo, f_lo, hi, f_hi = hi, f_hi, t, f_t
    return t


def evaluate(V, U):
    tf = times_for(U)
    y = rk4_terminal(U, tf)
    pen = 1e6 * np.maximum(CB_T - y[:, 1], 0.0) ** 2
    return W_T * tf + W_Q * V * V * tf * U.mean(axis=1) + pen, tf, y


def coordinate_descent(V, u):
    """Pattern search: all +-step single-coordinate moves evaluated together."""
    u = u.astype(float).copy()
    f = evaluate(V, u[None, :])[0][0]
    step = 1.0
    while step > 1e-4:
        trials = []
        for k in range(len(u)):
            for d in (step, -step):
                t = u.copy()
                t[k] = np.clip(t[k] + d, U_LO, U_HI)
                trials.append(t)
        trials = np.array(trials)
        ft = evaluate(V, trials)[0]
        j = int(np.argmin(ft))
        if ft[j] < f - 1e-12:
            u, f = trials[j], ft[j]
        else:
            step /= 2.0
    f, tf, y = (a[0] for a in evaluate(V, u[None, :]))
    return {"t_f": float(tf), "Q": float(V * V * tf * u.mean()), "objective": float(f),
            "u": u.tolist(), "terminal": y.tolist()}


def main():
    t_grid = np.arange(0.40, 3.60, 0.01)
    out = {"notes": (
        "Pre-registered reactor optimum per batch size. Brute force: vectorised RK4 "
        f"({STEPS} steps) over control grids (n=1: 161 levels; n=4: levels 1,3,5,7,9) "
        "x batch-time grid step 0.01 h, feasible when C(t_f)=2.5 within 0.02 and "
        "B(t_f)>=13; refined by pattern search (step halving to 1e-4) with t_f located "
        "by bisection on the simulated C. n=8 starts from the n=4 optimum."),
        "golden": {}}
    for V in VOLUMES:
        entry = {}
        g1 = grid_search(V, np.linspace(U_LO, U_HI, 161), 1, t_grid)
        entry["n1"] = coordinate_descent(V, g1[2])
        g4 = grid_search(V, np.array([1.0, 3.0, 5.0, 7.0, 9.0]), 4, t_grid)
        entry["n4"] = coordinate_descent(V, g4[2])
        entry["n8"] = coordinate_descent(V, np.repeat(np.array(entry["n4"]["u"]), 2))
        out["golden"][str(V)] = entry
        print(V, {k: (round(v["t_f"], 4), round(v["Q"], 4), round(v["objective"], 4))
                  for k, v in entry.items()}, flush=True)
    path = Path(__file__).with_name("reactor_golden.json")
    path.write_text(json.dumps(out, indent=1) + "\n")


if __name__ == "__main__":
    main()
