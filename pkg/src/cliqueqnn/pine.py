"""Pine: grow a clique by sampling a vertex, then recursing into its neighbourhood.

A heuristic supplies a distribution over the vertices of the current
subgraph. After each pick the subgraph shrinks to the picked vertex's
neighbours, so the chosen set is always a clique and the loop ends after at
most ``n`` picks.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import statevector as sv
from .ansatz import Checkpoint, apply_ansatz
from .graphs import Graph, max_clique_label

QUANTUM = "quantum"
UNIFORM = "uniform"
DEGREE = "degree"
HEURISTICS = (QUANTUM, UNIFORM, DEGREE)

DEGREE_SMOOTHING = 1e-9

# Memo entries allowed in the exact success-probability evaluator.
EXACT_STATE_BUDGET = 2_000_000


class NodeHeuristic:
    """Vertex distribution for one Pine step; deterministic per (labelled) graph.

    Args:
        kind: ``quantum`` (normalised per-qubit marginals of a trained
            circuit), ``uniform`` or ``degree``.
        checkpoint: required for ``quantum``.
    """

    def __init__(self, kind: str, checkpoint: Checkpoint | None = None):
        if kind not in HEURISTICS:
            raise ValueError(f"unknown heuristic {kind!r}; expected one of {HEURISTICS}")
        if (kind == QUANTUM) != (checkpoint is not None):
            raise ValueError("a checkpoint is required for (and only for) the quantum heuristic")
        self.kind = kind
        self.checkpoint = checkpoint
        self._cache: dict[Graph, np.ndarray] = {}

    def __repr__(self) -> str:
        return f"NodeHeuristic({self.kind!r})"

    def __call__(self, g: Graph) -> np.ndarray:
        d = self._cache.get(g)
        if d is None:
            d = self._compute(g)
            d.setflags(write=False)
            self._cache[g] = d
        return d

    def _compute(self, g: Graph) -> np.ndarray:
        if self.kind == UNIFORM:
            return np.full(g.n, 1.0 / g.n)
        if self.kind == DEGREE:
            w = g.degrees() + DEGREE_SMOOTHING
            return w / w.sum()
        state = apply_ansatz(self.checkpoint.spec, g, self.checkpoint.theta)
        m = sv.marginals(state)
        total = m.sum()
        if not total > 0:
            return np.full(g.n, 1.0 / g.n)
        return m / total


def node_distribution(h: NodeHeuristic, g: Graph) -> np.ndarray:
    if g.n < 1:
        raise ValueError("node distribution needs a non-empty graph")
    return np.array(h(g))


@dataclass
class PineStep:
    size: int
    chosen: int                 # original vertex id
    distribution: np.ndarray    # over the current subgraph, ascending original ids


@dataclass
class PineTrace:
    steps: list[PineStep] = field(default_factory=list)
    bitstring: int = 0

    @property
    def clique(self) -> list[int]:
        return [s.chosen for s in self.steps]

    @property
    def size(self) -> int:
        return len(self.steps)


def _draw(dist: np.ndarray, rng: np.random.Generator) -> int:
    cum = np.cumsum(dist)
    k = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return min(k, dist.size - 1)


def pine_run(g: Graph, h: NodeHeuristic, seed=None, rng: np.random.Generator | None = None
             ) -> PineTrace:
    """One stochastic Pine run from ``seed`` (or a shared generator)."""
    if rng is None:
        rng = np.random.default_rng(seed)
    masks = g.adjacency_masks
    trace = PineTrace()
    alive = list(range(g.n))
    while alive:
        sub, orig = g.induced_subgraph(alive)
        dist = h(sub)
        v = orig[_draw(dist, rng)]
        trace.steps.append(PineStep(len(orig), v, dist))
        trace.bitstring |= 1 << v
        alive = [u for u in orig if masks[v] >> u & 1]
    return trace


def pine_success_prob(g: Graph, h: NodeHeuristic, omega: int | None = None,
                      budget: int = EXACT_STATE_BUDGET) -> float:
    """Exact probability that a Pine run returns a maximum clique.

    Any clique found by Pine of size omega is maximum, so this is the
    probability of picking exactly omega vertices, summed over the
    recursion tree. Sub-problems are memoised on (vertex set, picks still
    needed).
    """
    if g.n > 16:
        raise ValueError(f"exact Pine evaluation is limited to n <= 16, got n={g.n}")
    if omega is None:
        omega = max_clique_label(g).omega
    masks = g.adjacency_masks
    counter = [0]

    @lru_cache(maxsize=None)
    def solve(alive: int, need: int) -> float:
        counter[0] += 1
        if counter[0] > budget:
            raise RuntimeError(f"exact Pine evaluation exceeded {budget} states")
        if alive == 0:
            return 1.0 if need == 0 else 0.0
        if need <= 0 or need > bin(alive).count("1"):
            return 0.0
        verts = [u for u in range(g.n) if alive >> u & 1]
        sub, _ = g.induced_subgraph(verts)
        dist = h(sub)
        total = 0.0
        for p, v in zip(dist, verts):
            if p > 0:
                total += p * solve(alive & masks[v], need - 1)
        return total

    return float(solve((1 << g.n) - 1, omega))


@dataclass
class MonteCarloResult:
    runs: int
    successes: int
    invalid: int
    sizes: np.ndarray

    @property
    def rate(self) -> float:
        return self.successes / self.runs

    @property
    def stderr(self) -> float:
        p = self.rate
        return float(np.sqrt(max(p * (1 - p), 0.0) / self.runs))


def pine_monte_carlo(g: Graph, h: NodeHeuristic, runs: int, seed: int,
                     omega: int | None = None) -> MonteCarloResult:
    """Repeated runs from one seeded generator; counts maximum-clique hits."""
    from .graphs import is_clique

    if runs < 1:
        raise ValueError(f"runs must be >= 1, got {runs}")
    if omega is None:
        omega = max_clique_label(g).omega
    rng = np.random.default_rng(seed)
    sizes = np.zeros(runs, dtype=np.int64)
    invalid = 0
    for r in range(runs):
        tr = pine_run(g, h, rng=rng)
        sizes[r] = tr.size
        invalid += not is_clique(g, tr.bitstring)
    return MonteCarloResult(runs, int((sizes == omega).sum()), invalid, sizes)
