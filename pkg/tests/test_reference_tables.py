import pytest

from mtev.reference_tables import compare, componentwise, load_expected, match_nearest


def test_bundled_values():
    spec = load_expected()
    names = [e["name"] for e in spec["eigenvalues"]]
    assert names == ["square_n16", "square_n8aff", "lshape_n16", "lshape_ndiag",
                     "lshape_noffdiag"]
    sq = spec["eigenvalues"][0]["expected"]
    assert [complex(v) for v, _ in sq] == [1.927871, 1.927871, 2.333763, 2.343034]
    assert [float(t) for _, t in sq] == [1e-3, 1e-3, 2e-3, 2e-3]
    ls = spec["eigenvalues"][2]["expected"]
    assert complex(ls[1][0]) == 1.203290 + 0.441126j
    assert [f["abs_fprime"] for f in spec["fprime"]] == [0.65, 0.67, 0.96]


def test_componentwise():
    assert componentwise(1 + 1j, 1.5 + 0.8j) == pytest.approx(0.5)


def test_match_nearest_one_to_one():
    assert match_nearest([1.0, 1.0, 2.0], [2.01, 0.99, 1.01]) == [2, 1, 0] or \
        match_nearest([1.0, 1.0, 2.0], [2.01, 0.99, 1.01]) == [1, 2, 0]
    assert match_nearest([1.0, 2.0], [1.0]) in ([0, None], [None, 0])


def test_compare():
    res = compare([("1.0", "1e-3"), ("2+1j", "1e-2"), ("5", "1e-3")], [1.0005, 2.005 + 1.001j])
    assert [c.ok for c in res] == [True, True, False]
    assert res[2].computed is None
    d = res[1].to_json()
    assert d["expected"] == [2.0, 1.0] and d["ok"]
