"""Read flexmarket conic JSON dumps into cvxpy problems."""

import json

import cvxpy as cp
import numpy as np
import scipy.sparse as sp


def _bound(v, default):
    return default if v is None else float(v)


def _matrix(rows, n):
    data, ri, ci = [], [], []
    for k, row in enumerate(rows):
        for j, v in row["terms"]:
            ri.append(k)
            ci.append(int(j))
            data.append(float(v))
    return sp.csr_matrix((data, (ri, ci)), shape=(len(rows), n))


def to_cvxpy(dump):
    """Returns (problem, x) for a dump dictionary."""
    variables = dump["variables"]
    n = len(variables)
    x = cp.Variable(n)
    c = np.array([float(v.get("cost", 0.0)) for v in variables])
    lo = np.array([_bound(v.get("lower"), -np.inf) for v in variables])
    hi = np.array([_bound(v.get("upper"), np.inf) for v in variables])
    cons = []
    fl = np.isfinite(lo)
    fh = np.isfinite(hi)
    if fl.any():
        cons.append(x[np.where(fl)[0]] >= lo[fl])
    if fh.any():
        cons.append(x[np.where(fh)[0]] <= hi[fh])
    eq = dump.get("equalities", [])
    if eq:
        cons.append(_matrix(eq, n) @ x == np.array([r["rhs"] for r in eq]))
    ineq = dump.get("inequalities", [])
    if ineq:
        cons.append(_matrix(ineq, n) @ x <= np.array([r["rhs"] for r in ineq]))
    for cone in dump.get("cones", []):
        rows = cone["rows"]
        f = _matrix(rows, n)
        g = np.array([r.get("constant", 0.0) for r in rows])
        u = f @ x + g
        if len(rows) == 1:
            cons.append(u >= 0)
        else:
            cons.append(cp.SOC(u[0], u[1:]))
    obj = c @ x + float(dump.get("cost_constant", 0.0))
    return cp.Problem(cp.Minimize(obj), cons), x


def reference_objective(dump, solver="CLARABEL"):
    prob, _ = to_cvxpy(dump)
    opts = {}
    if solver == "CLARABEL":
        opts = dict(tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10, max_iter=400)
    elif solver == "SCS":
        opts = dict(eps_abs=1e-10, eps_rel=1e-10, max_iters=200000)
    prob.solve(solver=solver, **opts)
    return prob.status, prob.value


def load(path):
    with open(path) as fh:
        return json.load(fh)
