#!/usr/bin/env python3
"""Reference power-flow data from PYPOWER, used as test oracles.

Reads the Matpower .m cases directly (independently of the Rust converter),
solves them with PYPOWER's Newton solver at a tight tolerance, and writes

  <out>/ieee9_reference.json, <out>/ieee118_reference.json
      bus id, |V|, angle (degrees), P, Q (per-unit) at the solution
  <out>/ieee118_j0.csv
      the 118-bus Jacobian at the base-case solution, laid out as
      rows [P(non-slack); Q(PQ)] and columns [θ(non-slack); V(PQ)], each in
      ascending bus id, with V columns scaled by |V| (N = V ∂P/∂V).

Usage: scripts/reference_powerflow.py crates/core/fixtures
"""
import json
import re
import sys
from pathlib import Path

import numpy as np
from pypower.api import ppoption, runpf
from pypower.dSbus_dV import dSbus_dV
from pypower.ext2int import ext2int
from pypower.makeYbus import makeYbus


def table(src, name):
    m = re.search(r"mpc\.%s\s*=\s*\[(.*?)\]" % name, src, re.S)
    rows = []
    for line in m.group(1).splitlines():
        line = line.split("%")[0]
        for chunk in line.split(";"):
            vals = [float(t) for t in re.split(r"[\s,]+", chunk.strip()) if t]
            if vals:
                rows.append(vals)
    width = max(len(r) for r in rows)
    return np.array([r + [0.0] * (width - len(r)) for r in rows])


def load(path):
    src = Path(path).read_text()
    base = float(re.search(r"mpc\.baseMVA\s*=\s*([0-9.eE+-]+)", src).group(1))
    return {
        "version": "2",
        "baseMVA": base,
        "bus": table(src, "bus"),
        "gen": table(src, "gen"),
        "branch": table(src, "branch"),
    }


def solve(ppc):
    opt = ppoption(PF_TOL=1e-13, PF_MAX_IT=30, VERBOSE=0, OUT_ALL=0)
    res, ok = runpf(ppc, opt)
    assert ok, "reference power flow did not converge"
    return res


def report(res):
    bus = res["bus"]
    base = res["baseMVA"]
    ids = bus[:, 0].astype(int)
    vm = bus[:, 7]
    va = np.deg2rad(bus[:, 8])
    # Net injections from the complex voltages, not the bus table.
    ppc = ext2int(res)
    ybus, _, _ = makeYbus(ppc["baseMVA"], ppc["bus"], ppc["branch"])
    v = vm * np.exp(1j * va)
    s = v * np.conj(ybus @ v)
    return [
        {"id": int(i), "v": float(m), "theta_deg": float(a), "p": float(x.real), "q": float(x.imag)}
        for i, m, a, x in zip(ids, vm, bus[:, 8], s)
    ], ybus, v, bus


def jacobian(ybus, v, bus):
    ids = bus[:, 0].astype(int)
    kind = bus[:, 1].astype(int)
    order = np.argsort(ids)
    theta_rows = [i for i in order if kind[i] != 3]
    v_rows = [i for i in order if kind[i] == 1]
    ds_dvm, ds_dva = dSbus_dV(ybus, v)
    ds_dvm = ds_dvm.toarray() * np.abs(v)[None, :]
    ds_dva = ds_dva.toarray()
    top = np.hstack([ds_dva.real[np.ix_(theta_rows, theta_rows)], ds_dvm.real[np.ix_(theta_rows, v_rows)]])
    bot = np.hstack([ds_dva.imag[np.ix_(v_rows, theta_rows)], ds_dvm.imag[np.ix_(v_rows, v_rows)]])
    header = ["θ%d" % ids[i] for i in theta_rows] + ["V%d" % ids[i] for i in v_rows]
    return header, np.vstack([top, bot])


def main(out):
    out = Path(out)
    here = out / "matpower"
    for name in ["case9", "case118"]:
        res = solve(load(here / f"{name}.m"))
        buses, ybus, v, bus = report(res)
        tag = name.replace("case", "ieee")
        (out / f"{tag}_reference.json").write_text(json.dumps({"buses": buses}, indent=1) + "\n")
        if name == "case118":
            header, j = jacobian(ybus, v, bus)
            lines = [",".join(header)] + [",".join(repr(float(x)) for x in row) for row in j]
            (out / f"{tag}_j0.csv").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "crates/core/fixtures")
