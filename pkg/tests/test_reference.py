"""Tests for the classic oracle and path reconstruction."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockfw.errors import CorruptPathMatrix, InvalidPath
from blockfw.matrix import INF, NONE, DistanceMatrix, IntermediateMatrix, generate_graph
from blockfw.models import ElemKind, GraphSpec
from blockfw.reference import (
    bellman_ford, check_paths, fw_classic, has_negative_cycle, path_cost, reconstruct_path,
)


class TestFwClassic:
    """Classic Floyd-Warshall closure."""

    def test_three_vertex_example(self, three_vertex):
        dstar, p = fw_classic(three_vertex)
        assert dstar[0, 2] == 8.0
        assert p.get(0, 2) == 1
        assert p.get(0, 1) is None
        assert math.isinf(dstar[2, 0])

    def test_input_untouched(self, three_vertex):
        fw_classic(three_vertex)
        assert math.isinf(three_vertex[0, 2])

    def test_single_vertex(self):
        dstar, p = fw_classic(DistanceMatrix([[0.0]]))
        assert dstar[0, 0] == 0.0
        assert p.get(0, 0) is None

    def test_all_unreachable(self):
        d = generate_graph(GraphSpec(n=5, null_fraction=1.0))
        dstar, p = fw_classic(d)
        assert dstar.bitwise_equal(d)
        assert (p.data == NONE).all()

    def test_preserves_element_kind(self):
        d = generate_graph(GraphSpec(n=8), ElemKind.F64)
        assert fw_classic(d)[0].elem_kind is ElemKind.F64

    def test_idempotent(self, graph32):
        dstar = fw_classic(graph32)[0]
        again, p = fw_classic(dstar)
        assert again.bitwise_equal(dstar)
        assert (p.data == NONE).all()

    def test_triangle_closure(self, graph32):
        w = fw_classic(graph32)[0].data
        through = w[:, :, None] + w[None, :, :]  # i, k, j
        assert (w <= through.min(axis=1)).all()

    def test_never_increases(self, graph32):
        assert (fw_classic(graph32)[0].data <= graph32.data).all()

    @given(n=st.integers(1, 24), seed=st.integers(0, 2**32 - 1),
           null_fraction=st.sampled_from([0.0, 0.3, 0.7, 0.95]),
           kind=st.sampled_from(list(ElemKind)))
    @settings(max_examples=40, deadline=None)
    def test_agrees_with_bellman_ford(self, n, seed, null_fraction, kind):
        d = generate_graph(GraphSpec(n=n, seed=seed, null_fraction=null_fraction), kind)
        assert fw_classic(d)[0].bitwise_equal(bellman_ford(d))

    @pytest.mark.parametrize("seed", range(50))
    def test_agrees_with_bellman_ford_at_64(self, seed):
        kind = ElemKind.F32 if seed % 2 else ElemKind.F64
        d = generate_graph(GraphSpec(n=64, seed=seed, null_fraction=(0.0, 0.3, 0.7, 0.95)[seed % 4]), kind)
        assert fw_classic(d)[0].bitwise_equal(bellman_ford(d))

    def test_negative_cycle_detected(self):
        d = DistanceMatrix([[0.0, 1.0], [-3.0, 0.0]])
        assert has_negative_cycle(fw_classic(d)[0])

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_negative_cycle_matches_in_place_loop(self, seed):
        data = generate_graph(GraphSpec(n=6, seed=seed, null_fraction=0.2), ElemKind.F64).copy_data()
        data[2, 4], data[4, 2] = 1.0, -3.0
        expected = data.copy()
        for k in range(6):
            for i in range(6):
                for j in range(6):
                    expected[i, j] = min(expected[i, j], expected[i, k] + expected[k, j])
        dstar = fw_classic(DistanceMatrix(data))[0]
        assert has_negative_cycle(dstar)
        assert np.array_equal(dstar.data, expected)

    def test_negative_edges_without_cycle(self):
        d = DistanceMatrix([[0.0, -1.0, INF], [INF, 0.0, -2.0], [INF, INF, 0.0]])
        dstar = fw_classic(d)[0]
        assert not has_negative_cycle(dstar)
        assert dstar[0, 2] == -3.0


class TestPaths:
    """Path reconstruction from the intermediate matrix."""

    def test_three_vertex_path(self, three_vertex):
        dstar, p = fw_classic(three_vertex)
        path = reconstruct_path(p, dstar, 0, 2)
        assert path == [0, 1, 2]
        assert path_cost(three_vertex, path) == 8.0

    def test_self_and_unreachable(self, three_vertex):
        dstar, p = fw_classic(three_vertex)
        assert reconstruct_path(p, dstar, 1, 1) == [1]
        assert reconstruct_path(p, dstar, 2, 0) == []
        assert math.isinf(path_cost(three_vertex, []))

    def test_out_of_range(self, three_vertex):
        dstar, p = fw_classic(three_vertex)
        with pytest.raises(IndexError):
            reconstruct_path(p, dstar, 0, 3)

    def test_cyclic_intermediates(self):
        p = np.full((3, 3), NONE, dtype=np.int32)
        p[0, 2] = 1
        p[0, 1] = 2
        p[2, 1] = 0
        dstar = DistanceMatrix(np.zeros((3, 3)))
        with pytest.raises(CorruptPathMatrix):
            reconstruct_path(IntermediateMatrix(p), dstar, 0, 2)

    def test_endpoint_as_intermediate(self):
        p = np.full((2, 2), NONE, dtype=np.int32)
        p[0, 1] = 1
        with pytest.raises(CorruptPathMatrix):
            reconstruct_path(IntermediateMatrix(p), DistanceMatrix(np.zeros((2, 2))), 0, 1)

    def test_non_edge_hop(self, three_vertex):
        with pytest.raises(InvalidPath):
            path_cost(three_vertex, [0, 2])

    def test_every_path_matches_its_distance(self, graph64):
        dstar, p = fw_classic(graph64)
        p.check_invariants(dstar)
        assert check_paths(graph64, dstar, p) is None

    def test_detects_wrong_distance(self, three_vertex):
        dstar, p = fw_classic(three_vertex)
        wrong = dstar.copy_data()
        wrong[0, 2] = 7.0
        assert check_paths(three_vertex, DistanceMatrix(wrong), p, [(0, 2)]) == (0, 2, 7.0, 8.0)

    def test_tolerance(self):
        d = generate_graph(GraphSpec(n=16, seed=8, integral=False), ElemKind.F64)
        dstar, p = fw_classic(d)
        assert check_paths(d, dstar, p, rtol=1e-9) is None
