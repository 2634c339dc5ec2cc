"""Simple undirected graphs, vertex relabelling and exact clique oracles.

Bitstring convention (used everywhere in the package): an n-bit integer ``b``
selects vertex ``i`` when bit ``i`` is set, so vertex 0 is the
least-significant bit. When written as a string, the most-significant vertex
comes first and vertex 0 is the rightmost character.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

MAX_ORACLE_VERTICES = 24

Edge = tuple[int, int]


def _norm(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph on vertices ``0..n-1``."""

    n: int
    edges: frozenset[Edge] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"graph needs at least one vertex, got n={self.n}")
        normed = set()
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop on vertex {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ValueError(f"edge ({u}, {v}) out of range for n={self.n}")
            normed.add(_norm(u, v))
        object.__setattr__(self, "edges", frozenset(normed))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[int]]) -> "Graph":
        return cls(n, frozenset((int(e[0]), int(e[1])) for e in edges))

    @classmethod
    def complete(cls, n: int) -> "Graph":
        return cls(n, frozenset(combinations(range(n), 2)))

    @classmethod
    def empty(cls, n: int) -> "Graph":
        return cls(n)

    @classmethod
    def path(cls, n: int) -> "Graph":
        return cls(n, frozenset((i, i + 1) for i in range(n - 1)))

    # Graph is hashed often (compile caches); keep it cheap.
    def __hash__(self) -> int:
        return hash((self.n, self.edges))

    def sorted_edges(self) -> list[Edge]:
        return sorted(self.edges)

    @cached_property
    def adjacency_masks(self) -> tuple[int, ...]:
        """Neighbour set of each vertex as a bitmask."""
        masks = [0] * self.n
        for u, v in self.edges:
            masks[u] |= 1 << v
            masks[v] |= 1 << u
        return tuple(masks)

    @cached_property
    def adjacency_matrix(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=np.int8)
        for u, v in self.edges:
            a[u, v] = a[v, u] = 1
        a.setflags(write=False)
        return a

    def degrees(self) -> np.ndarray:
        return self.adjacency_matrix.sum(axis=1).astype(np.int64)

    def neighbours(self, v: int) -> list[int]:
        m = self.adjacency_masks[v]
        return [u for u in range(self.n) if m >> u & 1]

    def has_edge(self, u: int, v: int) -> bool:
        return _norm(u, v) in self.edges

    def induced_subgraph(self, vertices: Sequence[int]) -> tuple["Graph", list[int]]:
        """Subgraph on ``vertices`` re-indexed densely in ascending order.

        Returns the new graph and the list mapping new index -> original id.
        """
        verts = sorted(set(int(v) for v in vertices))
        index = {v: i for i, v in enumerate(verts)}
        edges = frozenset(
            (index[u], index[v]) for u, v in self.edges if u in index and v in index
        )
        return Graph(len(verts), edges), verts


def complement_edges(g: Graph) -> set[Edge]:
    """Vertex pairs that are not edges of ``g`` (the anti-edges)."""
    return {e for e in combinations(range(g.n), 2) if e not in g.edges}


def complement(g: Graph) -> Graph:
    return Graph(g.n, frozenset(complement_edges(g)))


def validate_permutation(images: Sequence[int], n: int | None = None) -> tuple[int, ...]:
    perm = tuple(int(i) for i in images)
    if sorted(perm) != list(range(len(perm))):
        raise ValueError(f"not a permutation: {perm}")
    if n is not None and len(perm) != n:
        raise ValueError(f"permutation of length {len(perm)} does not match n={n}")
    return perm


def permute(g: Graph, sigma: Sequence[int]) -> Graph:
    """Relabel vertex ``i`` as ``sigma[i]``."""
    s = validate_permutation(sigma, g.n)
    return Graph(g.n, frozenset(_norm(s[u], s[v]) for u, v in g.edges))


def permute_bits(b: int, sigma: Sequence[int]) -> int:
    """Move the bit of vertex ``i`` to position ``sigma[i]``."""
    out = 0
    for i, si in enumerate(sigma):
        if b >> i & 1:
            out |= 1 << si
    return out


def basis_permutation(sigma: Sequence[int]) -> np.ndarray:
    """Index map ``idx`` with ``idx[b] = permute_bits(b, sigma)`` for all ``b``."""
    n = len(sigma)
    b = np.arange(1 << n, dtype=np.int64)
    out = np.zeros_like(b)
    for i, si in enumerate(sigma):
        out |= ((b >> i) & 1) << si
    return out


def popcount(b: int) -> int:
    return bin(b).count("1")


def bitstring_to_str(b: int, n: int) -> str:
    return format(b, f"0{n}b")


def str_to_bitstring(s: str) -> int:
    if not s or set(s) - {"0", "1"}:
        raise ValueError(f"not a bitstring: {s!r}")
    return int(s, 2)


def is_clique(g: Graph, b: int) -> bool:
    """True when every pair of selected vertices is adjacent."""
    if b < 0 or b >> g.n:
        raise ValueError(f"bitstring {b} has more than {g.n} bits")
    masks = g.adjacency_masks
    rest = b
    while rest:
        v = (rest & -rest).bit_length() - 1
        rest &= rest - 1
        if rest & ~masks[v]:
            return False
    return True


def clique_mask(g: Graph) -> np.ndarray:
    """Boolean array over all ``2**n`` bitstrings marking the cliques."""
    b = np.arange(1 << g.n, dtype=np.int64)
    ok = np.ones(b.shape, dtype=bool)
    for u, v in complement_edges(g):
        ok &= ~((b >> u & 1).astype(bool) & (b >> v & 1).astype(bool))
    return ok


@dataclass(frozen=True)
class CliqueLabel:
    omega: int
    max_cliques: frozenset[int]

    def __post_init__(self) -> None:
        for b in self.max_cliques:
            if popcount(b) != self.omega:
                raise ValueError(
                    f"clique {b:b} has size {popcount(b)}, expected omega={self.omega}"
                )


def _bron_kerbosch(masks: tuple[int, ...], r: int, p: int, x: int, found: list[int]) -> None:
    # Tomita pivoting on bitmasks; reports every maximal clique.
    if not p and not x:
        found.append(r)
        return
    px = p | x
    pivot, best = -1, -1
    while px:
        u = (px & -px).bit_length() - 1
        px &= px - 1
        c = bin(p & masks[u]).count("1")
        if c > best:
            pivot, best = u, c
    cand = p & ~masks[pivot]
    while cand:
        v = (cand & -cand).bit_length() - 1
        cand &= cand - 1
        bit = 1 << v
        _bron_kerbosch(masks, r | bit, p & masks[v], x & masks[v], found)
        p &= ~bit
        x |= bit


def maximal_cliques(g: Graph) -> list[int]:
    found: list[int] = []
    _bron_kerbosch(g.adjacency_masks, 0, (1 << g.n) - 1, 0, found)
    return found


def max_clique_label(g: Graph) -> CliqueLabel:
    """Clique number and every maximum clique of ``g``."""
    if g.n > MAX_ORACLE_VERTICES:
        raise ValueError(
            f"exact clique oracle limited to n <= {MAX_ORACLE_VERTICES}, got n={g.n}"
        )
    cliques = maximal_cliques(g)
    omega = max(popcount(c) for c in cliques)
    return CliqueLabel(omega, frozenset(c for c in cliques if popcount(c) == omega))


def max_clique_label_bruteforce(g: Graph) -> CliqueLabel:
    """Reference oracle: scan all ``2**n`` vertex subsets."""
    ok = clique_mask(g)
    sizes = np.array([popcount(b) for b in range(1 << g.n)])
    omega = int(sizes[ok].max())
    members = np.flatnonzero(ok & (sizes == omega))
    return CliqueLabel(omega, frozenset(int(b) for b in members))


def all_labelled_graphs(n: int) -> Iterable[Graph]:
    """Every labelled graph on ``n`` vertices (``2**(n(n-1)/2)`` of them)."""
    pairs = list(combinations(range(n), 2))
    for code in range(1 << len(pairs)):
        yield Graph(n, frozenset(p for k, p in enumerate(pairs) if code >> k & 1))
