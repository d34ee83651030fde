"""Generate seeded random LPs and SOCPs with reference optima.

Each program is feasible (a strictly feasible point is planted) and bounded
(a strictly feasible dual point is planted), so the reference status is optimal.
Objectives come from Clarabel and are confirmed with a second solver
(GLPK for LPs, SCS for SOCPs).
"""

import argparse
import json
import sys

import numpy as np

from conic_dump import reference_objective


def sparse_row(rng, n, k):
    cols = rng.choice(n, size=min(k, n), replace=False)
    vals = rng.normal(size=len(cols))
    return [[int(j), float(v)] for j, v in zip(cols, vals)]


def dot(terms, x):
    return sum(v * x[j] for j, v in terms)


def make_program(rng, with_cones):
    n = int(rng.integers(5, 201))
    x0 = rng.normal(size=n)
    p = int(rng.integers(0, max(1, n // 4)))
    m = int(rng.integers(1, n // 2 + 2))
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    for j in range(n):
        r = rng.random()
        if r < 0.4:
            lo[j] = x0[j] - rng.uniform(0.1, 2.0)
        if 0.2 < r < 0.7:
            hi[j] = x0[j] + rng.uniform(0.1, 2.0)
    eqs = []
    for _ in range(p):
        t = sparse_row(rng, n, int(rng.integers(2, 9)))
        eqs.append({"tag": {"family": "eq"}, "terms": t, "rhs": dot(t, x0)})
    ineqs = []
    for _ in range(m):
        t = sparse_row(rng, n, int(rng.integers(1, 7)))
        ineqs.append({"tag": {"family": "ineq"}, "terms": t, "rhs": dot(t, x0) + rng.uniform(0.01, 1.0)})
    cones = []
    if with_cones:
        for _ in range(int(rng.integers(1, max(2, n // 8)))):
            q = int(rng.integers(2, 7))
            rows = []
            vals = []
            for i in range(q):
                t = sparse_row(rng, n, int(rng.integers(1, 5)))
                rows.append({"terms": t, "constant": 0.0})
                vals.append(dot(t, x0))
            tail = np.linalg.norm(vals[1:])
            rows[0]["constant"] = tail + rng.uniform(0.1, 1.0) - vals[0]
            cones.append({"tag": {"family": "soc"}, "rows": rows})

    # Dual point: c = A'y - G'z + sum F'w - zl + zu (shadow-price convention).
    c = np.zeros(n)
    for r in eqs:
        yv = rng.normal()
        for j, v in r["terms"]:
            c[j] += yv * v
    for r in ineqs:
        zv = rng.uniform(0.0, 1.0)
        for j, v in r["terms"]:
            c[j] -= zv * v
    for cone in cones:
        w = rng.normal(size=len(cone["rows"]))
        w[0] = np.linalg.norm(w[1:]) + rng.uniform(0.1, 1.0)
        for i, row in enumerate(cone["rows"]):
            for j, v in row["terms"]:
                c[j] += w[i] * v
    for j in range(n):
        if np.isfinite(lo[j]):
            c[j] += rng.uniform(0.0, 1.0)
        if np.isfinite(hi[j]):
            c[j] -= rng.uniform(0.0, 1.0)
    def b(v):
        return None if not np.isfinite(v) else float(v)
    variables = [{"name": f"x{j}", "cost": float(c[j]), "lower": b(lo[j]), "upper": b(hi[j])} for j in range(n)]
    return {"format": "flexmarket-conic-1", "variables": variables, "cost_constant": 0.0,
            "equalities": eqs, "inequalities": ineqs, "cones": cones}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=20240601)
    ap.add_argument("--count", type=int, default=50)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    cases = []
    for kind in ("lp", "socp"):
        made = 0
        while made < args.count:
            prog = make_program(rng, kind == "socp")
            status, obj = reference_objective(prog, "CLARABEL")
            if status != "optimal":
                continue
            check_solver = "GLPK" if kind == "lp" else "SCS"
            try:
                s2, o2 = reference_objective(prog, check_solver)
            except Exception:
                s2, o2 = "error", None
            # Only a confident disagreement discards a case; an inaccurate or
            # failed second solve carries no information.
            if s2 == "optimal" and abs(o2 - obj) > 1e-5 * (1 + abs(obj)):
                print(f"skipping {kind} case: {check_solver} disagrees ({o2} vs {obj})", file=sys.stderr)
                continue
            cases.append({"name": f"{kind}-{made:02d}", "kind": kind, "reference_objective": obj,
                          "check_solver": check_solver, "check_status": s2, "check_objective": o2,
                          "program": prog})
            made += 1
    with open(args.out, "w") as fh:
        json.dump({"seed": args.seed, "cases": cases}, fh, separators=(",", ":"))


if __name__ == "__main__":
    main()
