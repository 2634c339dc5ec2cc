from itertools import combinations, permutations

import numpy as np
import pytest
from hypothesis import given

from cliqueqnn.graphs import (
    Graph,
    all_labelled_graphs,
    bitstring_to_str,
    clique_mask,
    complement,
    complement_edges,
    is_clique,
    max_clique_label,
    max_clique_label_bruteforce,
    permute,
    permute_bits,
    popcount,
    str_to_bitstring,
)

from conftest import random_graph
from strategies import graph_and_perm, graphs


def test_graph_rejects_bad_input():
    with pytest.raises(ValueError):
        Graph(0)
    with pytest.raises(ValueError, match="self-loop"):
        Graph.from_edges(3, [(1, 1)])
    with pytest.raises(ValueError, match="out of range"):
        Graph.from_edges(3, [(0, 3)])


def test_edges_are_normalised_and_deduplicated():
    g = Graph.from_edges(3, [(1, 0), (0, 1), (2, 1)])
    assert g.sorted_edges() == [(0, 1), (1, 2)]


class TestComplement:
    def test_complete_has_none(self):
        assert complement_edges(Graph.complete(3)) == set()

    def test_empty_gives_all_pairs(self):
        assert complement_edges(Graph.empty(3)) == {(0, 1), (0, 2), (1, 2)}

    def test_path(self):
        assert complement_edges(Graph.path(3)) == {(0, 2)}

    @given(graphs())
    def test_partition_and_involution(self, g):
        anti = complement_edges(g)
        assert not anti & g.edges
        assert anti | g.edges == set(combinations(range(g.n), 2))
        assert complement(complement(g)) == g


class TestPermute:
    def test_identity(self):
        g = Graph.path(4)
        assert permute(g, range(4)) == g

    def test_swap_ends_of_path(self):
        assert permute(Graph.path(3), [2, 1, 0]).edges == Graph.path(3).edges

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            permute(Graph.path(3), [0, 1])
        with pytest.raises(ValueError, match="not a permutation"):
            permute(Graph.path(3), [0, 0, 1])

    @given(graph_and_perm())
    def test_clique_label_covariant(self, gs):
        g, s = gs
        a, b = max_clique_label(g), max_clique_label(permute(g, s))
        assert a.omega == b.omega
        assert {permute_bits(x, s) for x in a.max_cliques} == set(b.max_cliques)


class TestCliqueOracle:
    def test_triangle(self):
        lab = max_clique_label(Graph.complete(3))
        assert lab.omega == 3 and lab.max_cliques == {0b111}

    def test_path(self):
        lab = max_clique_label(Graph.path(3))
        assert lab.omega == 2
        assert {bitstring_to_str(b, 3) for b in lab.max_cliques} == {"011", "110"}

    def test_empty_graph_has_omega_one(self):
        lab = max_clique_label(Graph.empty(4))
        assert lab.omega == 1 and len(lab.max_cliques) == 4

    def test_budget(self):
        with pytest.raises(ValueError, match="n <= 24"):
            max_clique_label(Graph.empty(25))

    @pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
    def test_agrees_with_bruteforce_exhaustively(self, n):
        for g in all_labelled_graphs(n):
            assert max_clique_label(g) == max_clique_label_bruteforce(g)

    @pytest.mark.parametrize("n", [6, 7, 8])
    def test_agrees_with_bruteforce_sampled(self, n, rng):
        for _ in range(1000 if n == 6 else 400):
            g = random_graph(rng, n, rng.uniform(0.1, 0.9))
            assert max_clique_label(g) == max_clique_label_bruteforce(g)

    def test_g85_instance(self, rng):
        g = random_graph(rng, 8, 0.5)
        ref = max_clique_label_bruteforce(g)
        assert max_clique_label(g) == ref


class TestIsClique:
    def test_examples(self):
        assert is_clique(Graph.complete(3), 0b111)
        assert not is_clique(Graph.path(3), 0b101)
        assert is_clique(Graph.path(5), 0)
        assert is_clique(Graph.empty(5), 0b1000)

    def test_too_many_bits(self):
        with pytest.raises(ValueError):
            is_clique(Graph.path(3), 0b1000)

    @given(graphs(max_n=6))
    def test_matches_pairwise_definition(self, g):
        mask = clique_mask(g)
        for b in range(1 << g.n):
            verts = [v for v in range(g.n) if b >> v & 1]
            ref = all(g.has_edge(u, v) for u, v in combinations(verts, 2))
            assert is_clique(g, b) == ref == bool(mask[b])


def test_bitstring_convention():
    # vertex 0 is the rightmost character
    assert bitstring_to_str(0b001, 3) == "001"
    assert str_to_bitstring("100") == 4
    assert popcount(0b1011) == 3
    with pytest.raises(ValueError):
        str_to_bitstring("10a")


def test_permute_bits_matches_graph_action():
    g = Graph.from_edges(4, [(0, 1)])
    for s in permutations(range(4)):
        h = permute(g, s)
        assert is_clique(h, permute_bits(0b0011, s))
        assert np.array_equal(clique_mask(h)[[permute_bits(b, s) for b in range(16)]],
                              clique_mask(g))
