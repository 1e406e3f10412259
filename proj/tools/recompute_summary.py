#!/usr/bin/env python3
"""Recompute summary.json figures from trajectory.csv and compare.

Usage: recompute_summary.py <run dir> [--rtol 1e-9]
"""

import argparse
import csv
import json
import math
import sys
from pathlib import Path

NOMINAL_HZ = 50.0


def tail_means(rows, columns, t0):
    tail = [r for r in rows if r["t"] >= t0]
    return [sum(r[c] for r in tail) / len(tail) for c in columns]


def close(a, b, rtol, atol=1e-15):
    return abs(a - b) <= atol + rtol * max(abs(a), abs(b))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("run_dir", type=Path)
    ap.add_argument("--rtol", type=float, default=1e-9)
    args = ap.parse_args()

    summary = json.loads((args.run_dir / "summary.json").read_text())
    with open(args.run_dir / "trajectory.csv", newline="") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames
        rows = [{k: float(v) for k, v in r.items()} for r in reader]
    if not rows:
        print("trajectory.csv has no samples")
        return 1

    omega = [c for c in header if c.startswith("omega_")]
    p_gen = [c for c in header if c.startswith("p_g_")]
    price = [c for c in header if c.startswith("lambda_")]
    end = rows[-1]["t"]
    t0 = end - summary["tail_window"] - 1e-9

    w = tail_means(rows, omega, t0)
    p = tail_means(rows, p_gen, t0)
    lam = tail_means(rows, price, t0)
    shares = [pi / wi for pi, wi in zip(p, summary["weights"])]
    max_pu = max(abs(x) for x in w)

    recomputed = {
        "end_time": end,
        "final_max_omega_pu": max_pu,
        "final_max_omega_hz": max_pu * NOMINAL_HZ,
        "sharing_defect": max(shares) - min(shares),
        "price_spread": max(lam) - min(lam),
        "balance_residual": tail_means(rows, ["balance"], t0)[0],
    }
    status = "converged" if max_pu * NOMINAL_HZ < 1e-3 else "steady-offset"

    failures = 0
    for key, value in recomputed.items():
        ok = close(value, summary[key], args.rtol)
        failures += not ok
        print(f"{'ok  ' if ok else 'FAIL'} {key}: summary {summary[key]:.12e} recomputed {value:.12e}")
    for i, (a, b) in enumerate(zip(w, summary["final_omega_pu"])):
        if not close(a, b, args.rtol):
            failures += 1
            print(f"FAIL final_omega_pu[{i}]: summary {b:.12e} recomputed {a:.12e}")
    if summary["status"] != "diverged":
        ok = summary["status"] == status
        failures += not ok
        print(f"{'ok  ' if ok else 'FAIL'} status: summary {summary['status']} recomputed {status}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
