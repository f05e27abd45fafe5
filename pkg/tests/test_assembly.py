import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from mtev import bfs
from mtev.assembly import (AlreadyReduced, DimensionMismatch, MATRIX_NAMES, assemble,
                           build_constraints, form_A_tau, reduce)
from mtev.bfs import Component, Kind
from mtev.mesh import EdgeOrientation, build_mesh
from mtev.refraction import const_scalar, parse_model

MESHES = [("square", 1), ("square", 2), ("square", 4), ("lshape", 1), ("lshape", 2),
          ("lshape", 3)]
MODELS = ["n16", "n8aff", "ndiag", "noffdiag"]


def dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A)


def rel_max(A, ref):
    return abs(A).max() / abs(ref).max()


@pytest.fixture(scope="module")
def full_sets():
    cache = {}

    def get(domain, n, model):
        key = (domain, n, model)
        if key not in cache:
            mesh = build_mesh(domain, n)
            cache[key] = (mesh, assemble(mesh, parse_model(model)), build_constraints(mesh))
        return cache[key]

    return get


def test_const_scalar_factor(full_sets):
    _, ms, _ = full_sets("square", 2, "n16")
    assert rel_max(ms.S - ms.S1 / 15, ms.S) <= 1e-14


@pytest.mark.parametrize("domain,area", [("square", 1.0), ("lshape", 3.0)])
def test_constant_field(domain, area, full_sets):
    mesh, ms, _ = full_sets(domain, 2, "n16")
    u = np.zeros(ms.dim)
    u[bfs.dof_index(np.arange(mesh.num_nodes), Component.X, Kind.VAL)] = 1.0
    assert u @ (ms.M @ u) == pytest.approx(area, rel=1e-12)
    assert abs(u @ (ms.B @ u)) <= 1e-13


@pytest.mark.parametrize("model", MODELS)
def test_symmetry_and_definiteness(model, full_sets):
    _, ms, _ = full_sets("square", 2, model)
    for name in ("S", "B", "M", "MN", "S1"):
        A = getattr(ms, name)
        assert rel_max(A - A.T, A) <= 1e-12, name
    for name in ("S", "B", "M", "MN", "S1"):
        pat = (getattr(ms, name) != 0).astype(int)
        assert (pat != pat.T).nnz == 0, name
    ev = lambda A: np.linalg.eigvalsh(dense(A))  # noqa: E731
    assert ev(ms.M).min() > 0
    for name in ("B", "S"):
        e = ev(getattr(ms, name))
        assert e.min() >= -1e-10 * e.max(), name


def test_coupling_pattern_within_structure(full_sets):
    # G and H lose numerically cancelling entries on compression, so only
    # containment in the (symmetric) cell-overlap structure is asserted
    mesh, ms, _ = full_sets("lshape", 2, "noffdiag")
    dofs = bfs.cell_dofs(mesh)
    r = np.repeat(dofs, 32, axis=1).ravel()
    c = np.tile(dofs, (1, 32)).ravel()
    struct = sp.csr_matrix((np.ones(r.size), (r, c)), shape=ms.S.shape)
    for name in ("G", "H"):
        A = getattr(ms, name)
        outside = (A != 0).astype(int) - (A != 0).astype(int).multiply(struct != 0)
        assert outside.nnz == 0 or abs(outside).max() == 0, name


def test_no_tiny_entries(full_sets):
    _, ms, _ = full_sets("lshape", 2, "noffdiag")
    for _, A in ms.items():
        if A.nnz:
            assert np.abs(A.data).min() > 1e-15 * np.abs(A.data).max()


def test_deterministic():
    mesh = build_mesh("lshape", 2)
    a, b = assemble(mesh, parse_model("ndiag")), assemble(mesh, parse_model("ndiag"))
    for (_, A), (_, B) in zip(a.items(), b.items()):
        assert np.array_equal(A.indptr, B.indptr) and np.array_equal(A.data, B.data)


@pytest.mark.parametrize("model", ["n8aff", "ndiag", "noffdiag"])
def test_quadrature_consistency(model):
    mesh = build_mesh("square", 2)
    a = assemble(mesh, parse_model(model))
    b = assemble(mesh, parse_model(model), quad_order=7)
    for (name, A), (_, B) in zip(a.items(), b.items()):
        assert rel_max(A - B, A) <= 1e-9, name


# ------------------------------------------------------------ constraints

def test_unit_square_corners_pinned():
    mesh = build_mesh("square", 1)
    cs = build_constraints(mesh)
    K = cs.null_basis.toarray()
    for node in range(4):
        for comp in (Component.X, Component.Y):
            row = K[bfs.dof_index(node, comp, Kind.VAL)]
            assert np.abs(row).max() == 0.0


@pytest.mark.parametrize("domain,n", MESHES)
def test_constraint_rank(domain, n):
    mesh = build_mesh(domain, n)
    cs = build_constraints(mesh)
    C = cs.rows.toarray()
    assert np.linalg.matrix_rank(C) + cs.null_basis.shape[1] == C.shape[1]
    assert cs.rank == np.linalg.matrix_rank(C)
    assert abs(cs.rows @ cs.null_basis).max() <= 1e-12
    assert np.all(cs.rows @ np.zeros(C.shape[1]) == 0)


def _cell_of_edge(mesh, a, b):
    for c, nodes in enumerate(mesh.cells):
        if a in nodes and b in nodes:
            return c
    raise AssertionError


@given(st.integers(0, 2**31 - 1), st.sampled_from(MESHES))
def test_boundary_sampling(seed, mesh_key):
    mesh = build_mesh(*mesh_key)
    K = build_constraints(mesh).null_basis
    x = K @ np.random.default_rng(seed).standard_normal(K.shape[1])
    q = bfs.gauss_rule(mesh.cell_size).ref_points * mesh.cell_size
    scale = 0.0
    for c in range(mesh.num_cells):
        f = bfs.eval_field(mesh, x, c, mesh.cell_origin(c) + q)
        scale = max(scale, np.abs(f.value).max(), np.abs(f.curl).max())
    assert scale > 0
    s = np.linspace(0, 1, 5)
    for a, b, o in mesh.boundary_edges:
        pts = mesh.nodes[a] + s[:, None] * (mesh.nodes[b] - mesh.nodes[a])
        f = bfs.eval_field(mesh, x, _cell_of_edge(mesh, a, b), pts)
        t = 0 if o == EdgeOrientation.X_ALIGNED else 1
        assert np.abs(f.value[:, t]).max() <= 1e-10 * scale
        assert np.abs(f.curl).max() <= 1e-10 * scale


# ------------------------------------------------------------ reduction

@pytest.mark.parametrize("domain,n", MESHES[1:])
@pytest.mark.parametrize("model", MODELS)
def test_integration_by_parts_identity(domain, n, model, full_sets):
    _, ms, cs = full_sets(domain, n, model)
    red = reduce(ms, cs)
    D = red.H - red.G.T - red.B
    assert abs(D).max() <= 1e-10 * abs(red.S).max()


@pytest.mark.parametrize("model", MODELS)
def test_identity_single_cell(model, full_sets):
    # on one cell every constrained field is curl free: S, B, H are all roundoff
    _, ms, cs = full_sets("square", 1, model)
    red = reduce(ms, cs)
    assert abs(red.S1).max() <= 1e-12 * abs(red.M).max()
    assert abs(red.H - red.G.T - red.B).max() <= 1e-10 * abs(red.M).max()


def test_reduced_mass_spd(full_sets):
    _, ms, cs = full_sets("square", 2, "n16")
    red = reduce(ms, cs)
    assert red.reduced and red.dim == cs.null_basis.shape[1]
    assert np.linalg.eigvalsh(dense(red.M)).min() > 0


def test_reduce_errors(full_sets):
    _, ms, cs = full_sets("square", 2, "n16")
    red = reduce(ms, cs)
    with pytest.raises(AlreadyReduced):
        reduce(red, cs)
    other = build_constraints(build_mesh("square", 1))
    with pytest.raises(DimensionMismatch):
        reduce(ms, other)


@given(st.integers(0, 2**31 - 1))
def test_hong_inequality(ms_cache, seed):
    ms = ms_cache("square", "n16", 4)
    rng = np.random.default_rng(seed)
    for _ in range(100):
        x = rng.standard_normal(ms.dim) * rng.uniform(0.01, 100)
        lhs = 2 * np.sqrt(x @ (ms.B @ x))
        rhs = np.sqrt(x @ (ms.M @ x)) + np.sqrt(x @ (ms.S1 @ x))
        assert lhs <= rhs + 1e-10


def test_hong_inequality_smooth_directions(ms_cache):
    # the low end of the spectrum is where the inequality is tight
    ms = ms_cache("lshape", "n16", 2)
    w, V = np.linalg.eigh(dense(ms.B + ms.S1 + ms.M))
    for x in V[:, :20].T:
        assert 2 * np.sqrt(x @ (ms.B @ x)) <= np.sqrt(x @ (ms.M @ x)) + \
            np.sqrt(x @ (ms.S1 @ x)) + 1e-10


# ------------------------------------------------------------ A_tau

def test_A_tau_at_zero(ms_cache):
    ms = ms_cache("square", "n16", 2)
    assert abs(form_A_tau(ms, 0.0) - ms.S).max() == 0


@given(st.floats(0.1, 10), st.floats(-3, 3))
def test_A_tau_symmetry(re, im):
    from mtev.assembly import assemble_reduced
    ms = assemble_reduced(build_mesh("square", 1), parse_model("n8aff"))
    A = form_A_tau(ms, complex(re, im))
    assert abs(A - A.T).max() <= 1e-12 * abs(A).max()
    if im == 0:
        assert not np.iscomplexobj(A.data)


@given(st.floats(0.2, 20))
def test_A_tau_on_curl_kernel(ms_cache, tau):
    ms = ms_cache("square", "n16", 2)
    w, V = np.linalg.eigh(dense(ms.B))
    null = V[:, w <= 1e-12 * w.max()]
    assert null.shape[1] > 0
    A = form_A_tau(ms, tau)
    for g in null.T:
        gag = g @ (A @ g)
        gmg = g @ (ms.MN @ g)
        assert gag == pytest.approx(tau * tau * gmg, rel=1e-8)
        assert gag > 0


def test_A_tau_coercive_on_scan_interval(ms_cache):
    ms = ms_cache("square", "n16", 8)
    for k in np.linspace(1.89, 1.95, 7):
        A = dense(form_A_tau(ms, k * k))
        assert np.linalg.eigvalsh(A).min() > 0


def test_matrix_names():
    assert MATRIX_NAMES == ("S", "G", "H", "B", "M", "MN", "S1")


def test_const_model_reduced(ms_cache):
    ms = ms_cache("lshape", "n16", 2)
    assert ms.reduced
    m = const_scalar(16.0)
    assert m.is_constant
