import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sbp_ins.basis import ReferenceElement
from sbp_ins.mesh import build_mesh, cosine_stretched_edges, uniform_edges


class TestEdges:
    def test_uniform(self):
        np.testing.assert_array_equal(uniform_edges(2, 0.0, 1.0), [0.0, 0.5, 1.0])
        np.testing.assert_array_equal(uniform_edges(1, 0.0, 1.0), [0.0, 1.0])

    @pytest.mark.parametrize("args", [(0, 0.0, 1.0), (2, 1.0, 1.0), (2, 1.0, 0.0)])
    def test_uniform_rejects(self, args):
        with pytest.raises(ValueError):
            uniform_edges(*args)

    def test_cosine_small(self):
        np.testing.assert_allclose(cosine_stretched_edges(3), [0.0, 0.5, 1.0], atol=1e-16)
        np.testing.assert_array_equal(cosine_stretched_edges(2), [0.0, 1.0])

    def test_cosine_formula(self):
        n = 26
        i = np.arange(n)
        np.testing.assert_allclose(cosine_stretched_edges(n), (1 - np.cos(np.pi * i / (n - 1))) / 2, atol=1e-15)

    @given(st.integers(min_value=2, max_value=200))
    def test_cosine_symmetric_and_increasing(self, n):
        e = cosine_stretched_edges(n)
        assert e[0] == 0.0 and e[-1] == 1.0
        assert np.all(np.diff(e) > 0)
        assert np.abs(e + e[::-1] - 1.0).max() <= 1e-14

    def test_cosine_rejects(self):
        with pytest.raises(ValueError):
            cosine_stretched_edges(1)


class TestMesh:
    def test_coarse_mms_grid(self):
        m = build_mesh(uniform_edges(12, 0, 1), uniform_edges(12, 0, 1), ReferenceElement.from_degree(1))
        assert m.shape == (13, 13)

    def test_cavity_full_grid(self):
        e = cosine_stretched_edges(26)
        m = build_mesh(e, e, ReferenceElement.from_degree(4))
        assert m.shape == (101, 101)

    def test_channel_full_grid(self):
        m = build_mesh(uniform_edges(100, 0, 30), uniform_edges(14, -0.5, 0.5), ReferenceElement.from_degree(4))
        assert m.shape == (401, 57) and m.n_nodes == 22857

    def test_single_linear_element(self):
        m = build_mesh([0.0, 1.0], [0.0, 1.0], ReferenceElement.from_degree(1))
        x, y = m.coordinates()
        np.testing.assert_array_equal(x, [0, 0, 1, 1])
        np.testing.assert_array_equal(y, [0, 1, 0, 1])

    @given(
        k=st.integers(min_value=1, max_value=5),
        n_el=st.integers(min_value=1, max_value=12),
        stretched=st.booleans(),
    )
    def test_node_structure(self, k, n_el, stretched):
        ref = ReferenceElement.from_degree(k)
        edges = cosine_stretched_edges(n_el + 1, -1.0, 2.0) if stretched else uniform_edges(n_el, -1.0, 2.0)
        m = build_mesh(edges, edges, ref)
        nodes = m.x_nodes
        assert nodes.size == n_el * k + 1
        assert np.all(np.diff(nodes) > 0)
        assert nodes[0] == -1.0 and nodes[-1] == 2.0
        np.testing.assert_array_equal(nodes[::k], edges)
        for e in range(n_el):
            inner = nodes[e * k + 1 : (e + 1) * k]
            assert np.all((inner > edges[e]) & (inner < edges[e + 1]))
            xi = (2 * inner - edges[e] - edges[e + 1]) / (edges[e + 1] - edges[e])
            np.testing.assert_allclose(xi, ref.nodes[1:-1], atol=1e-12)

    def test_bad_edges(self):
        with pytest.raises(ValueError):
            build_mesh([0.0, 0.0, 1.0], [0.0, 1.0], ReferenceElement.from_degree(1))

    def test_summary_and_operators(self):
        m = build_mesh(cosine_stretched_edges(4), uniform_edges(2, 0, 1), ReferenceElement.from_degree(2))
        s = m.summary()
        assert "3x2 elements" in s and "7x5 = 35 nodes" in s
        ops = m.operators()
        assert ops.shape == m.shape
        x, y = ops.grid()
        X, Y = m.coordinates()
        np.testing.assert_array_equal(x, X)
        np.testing.assert_array_equal(y, Y)
