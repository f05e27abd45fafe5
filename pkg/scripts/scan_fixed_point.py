"""Sample f_h(tau) along Re k around an eigenvalue and print the table.

usage: python3 scripts/scan_fixed_point.py [domain] [model] [n] [k_center] [samples]
e.g.   python3 scripts/scan_fixed_point.py lshape n16 16 1.1766+0.4461i 21
"""
import sys

from mtev.assembly import assemble_reduced
from mtev.cli import parse_complex
from mtev.fixed_point import scan_assumption_a
from mtev.mesh import build_mesh
from mtev.refraction import estimate_bounds, parse_model


def main(domain="square", model="n16", n="16", kc="1.9296", samples="61"):
    mesh, mdl = build_mesh(domain, int(n)), parse_model(model)
    ms = assemble_reduced(mesh, mdl)
    k = parse_complex(kc)
    rep = scan_assumption_a(ms, k, 0.03, int(samples),
                            estimate_bounds(mdl, mesh) if k.imag else None)
    print(f"{'tau':>24s} {'f':>24s} {'|f_prime|':>10s}")
    for s in rep.samples:
        print(f"{s.tau:24.6f} {s.f:24.3e} {abs(s.fprime_formula):10.4f}")
    print(f"min |f'| = {rep.min_abs_fprime:.4f}, eta = {rep.eta:.3g}, "
          f"sign changes = {rep.sign_changes}, jumps = {rep.branch_jumps}")


if __name__ == "__main__":
    main(*sys.argv[1:])
