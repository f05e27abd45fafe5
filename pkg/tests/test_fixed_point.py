import cmath
import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from scipy.optimize import brentq
from hypothesis import strategies as st

from mtev import bfs
from mtev.assembly import MatrixSet, assemble_reduced, form_A_tau
from mtev.fixed_point import (SCAN_COLUMNS, BranchState, ConditionViolated,
                              DegenerateNormalization, apply_solution_operator, b_normalize,
                              compute_eta, eval_lambda, in_sector, lambda_prime,
                              scan_assumption_a, write_scan_csv)
from mtev.mesh import build_mesh
from mtev.refraction import ModelBounds, estimate_bounds, parse_model
from mtev.tev_driver import solve_tev

N16 = ModelBounds(n_star=16.0, n_upper=16.0, grad_seminorm=0.0)


@pytest.fixture(scope="module")
def square8_roots(ms_cache):
    ms = ms_cache("square", "n16", 8)
    return ms, solve_tev("square", "n16", 8, count=4, scan_samples=0, ms=ms).results


@pytest.fixture(scope="module")
def lshape8_roots(ms_cache):
    ms = ms_cache("lshape", "n16", 8)
    return ms, solve_tev("lshape", "n16", 8, count=4, scan_samples=0, ms=ms).results


# ------------------------------------------------------------ eta and sector

def test_sector_example():
    tau = (1.2 + 0.44j) ** 2
    assert tau == pytest.approx(1.2464 + 1.056j, abs=1e-12)
    assert in_sector(tau)
    assert (math.sqrt(2) - 1) * 1.056 == pytest.approx(0.4374, abs=1e-4)


def test_eta_n16():
    tau = (1.2 + 0.44j) ** 2
    direct = 1.1 * (2 * math.sqrt(2) / 15) * math.hypot(1.2464, 1.056)
    assert compute_eta(tau, N16) == pytest.approx(direct, rel=1e-12)


@given(st.floats(0.1, 20), st.floats(0.05, 20), st.floats(1.5, 20), st.floats(0, 0.5))
def test_eta_formula(t1, t2, nlow, g):
    tau = complex(t1, t2)
    b = ModelBounds(nlow, nlow + 1.0, g)
    if not in_sector(tau):
        with pytest.raises(ConditionViolated):
            compute_eta(tau, b)
        return
    eps = 0.5 * (math.sqrt(2) * t1 * t2 + (t1 * t1 - t2 * t2) / math.sqrt(2)) * \
        b.n_upper / (b.n_upper - 1)
    want = 1.1 * math.sqrt(2) * (2 * abs(tau) / (nlow - 1) + g * g * abs(tau) ** 2 / eps)
    assert compute_eta(tau, b) == pytest.approx(want, rel=1e-12)
    assert compute_eta(tau.conjugate(), b) == pytest.approx(want, rel=1e-12)


def test_eta_real_tau_rejected():
    with pytest.raises(ConditionViolated):
        compute_eta(3.7, N16)


def test_eta_outside_sector():
    with pytest.raises(ConditionViolated):
        compute_eta(0.3 + 1.0j, N16)


def test_branch_state_invariant():
    with pytest.raises(ValueError):
        BranchState(center=1 + 1j, eta=0.0)
    BranchState(center=3.0)


# ------------------------------------------------------------ eval_lambda

def _tiny_set(s, b):
    one = sp.csr_matrix(np.array([[b]]))
    zero = sp.csr_matrix((1, 1))
    return MatrixSet(S=sp.csr_matrix(np.array([[s]])), G=zero, H=one, B=one, M=one,
                     MN=zero, S1=one, reduced=True)


def test_scalar_sanity():
    lam, u = eval_lambda(_tiny_set(2.0, 1.0), 0.5, BranchState(center=2.0))
    assert lam == pytest.approx(2.0, abs=1e-14)
    assert u @ u == pytest.approx(1.0)


def test_root_consistency_real(square8_roots):
    ms, res = square8_roots
    for r in res:
        lam, _ = eval_lambda(ms, r.tau, BranchState(center=r.tau))
        assert abs(lam - r.tau) <= 1e-8 * (1 + abs(r.tau))


def test_root_consistency_complex(lshape8_roots):
    ms, res = lshape8_roots
    mesh = build_mesh("lshape", 8)
    bounds = estimate_bounds(parse_model("n16"), mesh)
    cplx = [r for r in res if abs(r.tau.imag) > 1e-6]
    assert len(cplx) == 2
    for r in cplx:
        st_ = BranchState(center=r.tau, eta=compute_eta(r.tau, bounds))
        lam, _ = eval_lambda(ms, r.tau, st_)
        assert abs(lam - r.tau) <= 1e-8 * (1 + abs(r.tau))


def test_eval_lambda_sector_guard(ms_cache):
    ms = ms_cache("square", "n16", 2)
    with pytest.raises(ConditionViolated):
        eval_lambda(ms, 0.1 + 2j, BranchState(center=0.1 + 2j, eta=1.0))


def test_sign_change_square16(ms_cache):
    ms = ms_cache("square", "n16", 16)
    lo, _ = eval_lambda(ms, 1.90 ** 2, BranchState(center=1.90 ** 2))
    hi, _ = eval_lambda(ms, 1.96 ** 2, BranchState(center=1.96 ** 2))
    mid, _ = eval_lambda(ms, 1.93 ** 2, BranchState(center=1.93 ** 2))
    assert abs(mid.imag) == 0 and abs(lo.imag) == 0
    assert lo.real - 1.90 ** 2 > 0 > hi.real - 1.96 ** 2
    # the root lies between, near the tabulated coarse-mesh value 1.9283
    f = lambda t: eval_lambda(ms, t, BranchState(center=t))[0].real - t  # noqa: E731
    root = brentq(f, 1.90 ** 2, 1.96 ** 2, xtol=1e-7)
    assert math.sqrt(root) == pytest.approx(1.9283, abs=2e-3)


# ------------------------------------------------------------ lambda'

def test_lambda_prime_vs_fd(square8_roots):
    ms, res = square8_roots
    tau = res[0].tau.real * 1.01
    state = BranchState(center=tau)
    lam, u = eval_lambda(ms, tau, state)
    lp = lambda_prime(ms, tau, u)
    d = 1e-4 * tau
    up, _ = eval_lambda(ms, tau + d, BranchState(center=tau + d, last_vector=u))
    um, _ = eval_lambda(ms, tau - d, BranchState(center=tau - d, last_vector=u))
    fd = (up - um) / (2 * d)
    assert abs(lp - fd) <= 1e-4 * abs(lp)


def test_lambda_prime_normalization_invariant(square8_roots):
    ms, res = square8_roots
    r = res[0]
    _, u = eval_lambda(ms, r.tau, BranchState(center=r.tau))
    assert lambda_prime(ms, r.tau, 3.7 * u) == pytest.approx(lambda_prime(ms, r.tau, u),
                                                             rel=1e-12)


def test_lambda_prime_rejects_curl_free(ms_cache):
    ms = ms_cache("square", "n16", 2)
    w, V = np.linalg.eigh(ms.B.toarray())
    g = V[:, 0]
    assert w[0] <= 1e-12 * w.max()
    with pytest.raises(DegenerateNormalization):
        lambda_prime(ms, 3.0, g)
    with pytest.raises(DegenerateNormalization):
        b_normalize(ms, g)


def test_fprime_square16(ms_cache):
    ms = ms_cache("square", "n16", 16)
    r = solve_tev("square", "n16", 16, count=1, scan_samples=0, ms=ms).results[0]
    _, u = eval_lambda(ms, r.tau, BranchState(center=r.tau))
    assert abs(lambda_prime(ms, r.tau, u) - 1) == pytest.approx(0.65, abs=0.03)


# ------------------------------------------------------------ scans

def test_scan_counts(ms_cache):
    ms = ms_cache("square", "n16", 8)
    rep = scan_assumption_a(ms, 1.93, samples=5)
    assert len(rep.samples) == 5
    assert sum(s.fprime_fd is not None for s in rep.samples) == 3
    for s in rep.samples:
        assert s.f == s.lam - s.tau
    assert rep.min_abs_fprime == min(abs(s.fprime_formula) for s in rep.samples[1:-1])
    assert rep.assumption_a_holds == (rep.min_abs_fprime >= rep.c_threshold)
    # tau grid: Re k spans [k_c - r, k_c + r] uniformly
    ks = [cmath.sqrt(s.tau).real for s in rep.samples]
    assert np.allclose(ks, np.linspace(1.90, 1.96, 5), atol=1e-12)


@pytest.mark.parametrize("bad", [dict(samples=4), dict(radius=0.0)])
def test_scan_preconditions(bad, ms_cache):
    ms = ms_cache("square", "n16", 2)
    kw = dict(samples=5, radius=0.03) | bad
    with pytest.raises(ValueError):
        scan_assumption_a(ms, 1.93, **kw)


def test_scan_square16(ms_cache):
    ms = ms_cache("square", "n16", 16)
    rep = scan_assumption_a(ms, 1.9296, samples=7)
    assert rep.min_abs_fprime >= 0.5
    assert rep.sign_changes == 1
    assert rep.branch_jumps == 0
    for s in rep.samples[1:-1]:
        assert abs(s.fprime_formula - s.fprime_fd) <= 1e-4 * (1 + abs(s.fprime_formula))
    for s in rep.samples:
        A = form_A_tau(ms, s.tau)
        assert np.linalg.eigvalsh(A.toarray()).min() > 0 if ms.dim <= 1200 else True


def test_scan_complex_coarse(ms_cache, lshape8_roots):
    ms, res = lshape8_roots
    mesh = build_mesh("lshape", 8)
    bounds = estimate_bounds(parse_model("n16"), mesh)
    kc = next(r.k for r in res if r.k.imag > 1e-6)
    rep = scan_assumption_a(ms, kc, samples=5, bounds=bounds)
    assert rep.eta > 0 and rep.assumption_a_holds and rep.branch_jumps == 0
    assert all(abs(cmath.sqrt(s.tau).imag - kc.imag) <= 1e-12 for s in rep.samples)
    for s in rep.samples[1:-1]:
        assert abs(s.fprime_formula - s.fprime_fd) <= 1e-4 * (1 + abs(s.fprime_formula))


def test_complex_scan_needs_bounds(ms_cache):
    with pytest.raises(ValueError):
        scan_assumption_a(ms_cache("lshape", "n16", 2), 1.2 + 0.44j)


def test_scan_csv(tmp_path, ms_cache):
    rep = scan_assumption_a(ms_cache("square", "n16", 8), 1.93, samples=5)
    path = tmp_path / "scan.csv"
    write_scan_csv(rep, path)
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == SCAN_COLUMNS
    assert len(lines) == 6
    first = dict(zip(SCAN_COLUMNS, lines[1].split(",")))
    assert first["fprime_fd_re"] == "nan" and first["fprime_fd_im"] == "nan"
    for line, s in zip(lines[1:], rep.samples):
        row = dict(zip(SCAN_COLUMNS, map(float, line.split(","))))
        assert complex(row["tau_re"], row["tau_im"]) == s.tau
        assert complex(row["f_re"], row["f_im"]) == s.f


# ------------------------------------------------------------ solution operator

def test_T_on_eigenvector(square8_roots):
    ms, res = square8_roots
    tau = 3.0
    lam, u = eval_lambda(ms, tau, BranchState(center=3.5))
    x = apply_solution_operator(ms, tau, u)
    assert np.linalg.norm(x - u / lam) <= 1e-8 * np.linalg.norm(u / lam)


def test_T_on_eigenvector_complex(lshape8_roots):
    ms, res = lshape8_roots
    tau = (1.15 + 0.45j) ** 2
    bounds = estimate_bounds(parse_model("n16"), build_mesh("lshape", 8))
    eta = compute_eta(tau, bounds)
    lam, u = eval_lambda(ms, tau, BranchState(center=tau, eta=eta))
    x = apply_solution_operator(ms, tau, u, eta)
    want = u / (lam + eta)
    assert np.linalg.norm(x - want) <= 1e-8 * np.linalg.norm(want)


def test_T_kills_curl_free(ms_cache):
    ms = ms_cache("square", "n16", 2)
    w, V = np.linalg.eigh(ms.B.toarray())
    x = apply_solution_operator(ms, 3.0, V[:, 0])
    assert np.linalg.norm(x) <= 1e-10


def _reduced_projection(n):
    """Reduced DOFs of the B-relevant smooth field, by L2 projection."""
    mesh = build_mesh("square", n)
    ms = assemble_reduced(mesh, parse_model("n16"))
    K = ms.constraints.null_basis
    q = bfs.gauss_rule(mesh.cell_size, order=8)
    ref = bfs.reference_basis(q.ref_points[:, 0], q.ref_points[:, 1], mesh.cell_size)
    pts = mesh.nodes[mesh.cells[:, 0]][:, None, :] + q.points[None]
    x, y = pts[..., 0], pts[..., 1]
    f = np.stack([np.sin(np.pi * y) * x * (1 - x), np.sin(np.pi * x) * y * y], axis=-1)
    loc = np.einsum("q,qia,cqa->ci", q.weights, ref.value, f)
    rhs = np.zeros(K.shape[0])
    np.add.at(rhs, bfs.cell_dofs(mesh), loc)
    from scipy.sparse.linalg import spsolve
    return ms, spsolve(ms.M.tocsc(), K.T @ rhs)


def test_T_discrete_stability():
    ratios = []
    for n in (4, 8, 16):
        ms, f = _reduced_projection(n)
        x = apply_solution_operator(ms, 3.0, f)
        norm = np.sqrt(x @ ((ms.M + ms.B + ms.S1) @ x))
        ratios.append(norm / np.sqrt(f @ (ms.B @ f)))
    assert max(ratios) / min(ratios) <= 2.0
