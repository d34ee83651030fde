#!/usr/bin/env python3
"""Rewrite a MATPOWER v2 distribution case into plain per-unit/MW tables.

Several MATPOWER distribution cases (case69, case141, ...) store branch
impedances in Ohms and loads in kW/kVA, followed by MATLAB statements that
convert them.  The flexmarket parser only reads numeric matrix literals, so
this script evaluates those conversions once and writes a case whose tables
are already in MATPOWER's standard units (r, x in p.u.; Pd, Qd in MW/MVAr).

Usage: convert_matpower_v2.py INPUT.m OUTPUT.m
"""

import math
import re
import sys


def read_table(text, name):
    m = re.search(r"mpc\." + name + r"\s*=\s*\[(.*?)\];", text, re.S)
    if not m:
        return None
    rows = []
    for line in m.group(1).splitlines():
        line = line.split("%")[0].strip().rstrip(";").strip()
        if line:
            rows.append([float(v) for v in line.split()])
    return rows


def fmt(v):
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def main(src, dst):
    text = open(src).read()
    base_mva = float(re.search(r"mpc\.baseMVA\s*=\s*([0-9.eE+-]+)", text).group(1))
    bus = read_table(text, "bus")
    gen = read_table(text, "gen")
    branch = read_table(text, "branch")

    if "r and x specified in ohms" in text:
        vbase = bus[0][9] * 1e3
        zbase = vbase ** 2 / (base_mva * 1e6)
        for br in branch:
            br[2] /= zbase
            br[3] /= zbase
    if re.search(r"converted to MW", text):
        for b in bus:
            b[2] /= 1e3
            b[3] /= 1e3
    pf = re.search(r"pf\s*=\s*([0-9.]+);", text)
    if pf:
        pf = float(pf.group(1))
        for b in bus:
            s = b[2]
            b[3] = s * math.sin(math.acos(pf))
            b[2] = s * pf

    name = re.search(r"function\s+mpc\s*=\s*(\w+)", text).group(1)
    out = [f"function mpc = {name}",
           f"%{name.upper()}  converted from the MATPOWER distribution of {name}.m",
           "%   Tables are in standard MATPOWER units (r, x in p.u.; Pd, Qd in MW/MVAr).",
           "%   Generated by scripts/convert_matpower_v2.py; original data (c) their",
           "%   respective authors, distributed with MATPOWER.",
           "",
           "mpc.version = '2';",
           f"mpc.baseMVA = {fmt(base_mva)};",
           "",
           "%% bus data",
           "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin",
           "mpc.bus = ["]
    out += ["\t" + "\t".join(fmt(v) for v in r) + ";" for r in bus]
    out += ["];", "", "%% generator data", "mpc.gen = ["]
    out += ["\t" + "\t".join(fmt(v) for v in r) + ";" for r in gen]
    out += ["];", "", "%% branch data",
            "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax",
            "mpc.branch = ["]
    out += ["\t" + "\t".join(fmt(v) for v in r) + ";" for r in branch]
    out += ["];", ""]
    open(dst, "w").write("\n".join(out))


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
