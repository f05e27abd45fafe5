"""Refinement studies for all preset models; writes one CSV per configuration.

usage: python3 scripts/convergence_all.py [outdir]
"""
import sys
import warnings
from pathlib import Path

from mtev.reference_tables import load_expected
from mtev.tev_driver import convergence_study, write_convergence_csv


def main(outdir="results"):
    Path(outdir).mkdir(parents=True, exist_ok=True)
    for e in load_expected()["eigenvalues"]:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            study = convergence_study(e["domain"], e["model"], e["levels"], e["count"], e["n0"])
        path = Path(outdir) / f"convergence_{e['name']}.csv"
        write_convergence_csv(study, path)
        print(f"{e['name']}: {path} ({len(caught)} warnings)")
        for j in study.indices:
            seq = ", ".join(f"{k:.6f}" for k in study.sequence(j))
            print(f"  #{j}: {seq} -> {study.extrapolated(j):.6f}")


if __name__ == "__main__":
    main(*sys.argv[1:])
