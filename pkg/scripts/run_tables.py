"""Run every reference configuration and write a comparison report.

usage: python3 scripts/run_tables.py [--only NAME ...] [--out results/tables.json]
"""
import argparse
import json
import sys
from pathlib import Path

from mtev.reference_tables import run_all


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--only", nargs="*")
    ap.add_argument("--out", default="results/tables.json")
    args = ap.parse_args()
    rep = run_all(args.only)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(rep, indent=2) + "\n")
    for t in rep["tables"]:
        print(f"{t['name']:18s} {'ok' if t['ok'] else 'MISMATCH'}")
        for c in t["comparisons"]:
            exp = complex(*c["expected"])
            got = "missing" if c["computed"] is None else f"{complex(*c['computed']):.6f}"
            print(f"    {exp:.6f}  {got}  err={c['error']}  tol={c['tol']}")
    for f in rep["fprime"]:
        print(f"|f'| {f['table']:12s} k={complex(*f['k']):.4f}: {f['computed']:.4f} "
              f"(expected {f['expected']} +- {f['tol']})")
    return 0 if rep["ok"] else 2


if __name__ == "__main__":
    sys.exit(main())
